//! SV39 single-stage and SV39x4 two-stage page-table walks.
//!
//! Page tables live in an [`AddressSpace`]: a sparse store of 4 KiB table
//! pages keyed by physical page number. Every PTE read by a walk is reported
//! to a caller-supplied fetch callback that returns the latency of that
//! memory access, so the walker itself carries no timing policy.
//!
//! Two-stage walks translate every guest-physical address they touch (each
//! guest PTE and the final guest-physical address) with a complete host walk.
//! No host translation is cached between the steps of one walk.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use bitflags::bitflags;

use crate::addr::{self, PageSize, GPA_BITS, PAGE_BYTES, PAGE_SHIFT, PTES_PER_TABLE, PTE_BYTES};
use crate::error::MapError;

bitflags! {
    /// RISC-V PTE flag bits (low byte of the PTE).
    #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
    pub struct PteFlags: u8 {
        const V = 1 << 0;
        const R = 1 << 1;
        const W = 1 << 2;
        const X = 1 << 3;
        const U = 1 << 4;
        const G = 1 << 5;
        const A = 1 << 6;
        const D = 1 << 7;
    }
}

impl PteFlags {
    /// Valid, accessed and dirty; A/D updates are not modeled.
    pub const LEAF_RW: PteFlags =
        PteFlags::V.union(PteFlags::R).union(PteFlags::W).union(PteFlags::U).union(PteFlags::A).union(PteFlags::D);
    pub const LEAF_RX: PteFlags =
        PteFlags::V.union(PteFlags::R).union(PteFlags::X).union(PteFlags::U).union(PteFlags::A).union(PteFlags::D);
    pub const LEAF_RWX: PteFlags = PteFlags::LEAF_RW.union(PteFlags::X);
}

const PPN_SHIFT: u32 = 10;
const PPN_MASK: u64 = (1 << 44) - 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct PageTableEntry {
    pub ppn: u64,
    pub flags: PteFlags,
}

impl PageTableEntry {
    pub fn new(ppn: u64, flags: PteFlags) -> Self {
        Self { ppn, flags }
    }

    /// Non-leaf pointer to the next table.
    pub fn table(ppn: u64) -> Self {
        Self { ppn, flags: PteFlags::V }
    }

    pub fn from_raw(raw: u64) -> Self {
        Self { ppn: (raw >> PPN_SHIFT) & PPN_MASK, flags: PteFlags::from_bits_truncate(raw as u8) }
    }

    pub fn to_raw(self) -> u64 {
        (self.ppn & PPN_MASK) << PPN_SHIFT | self.flags.bits() as u64
    }

    #[inline]
    pub fn is_valid(&self) -> bool {
        self.flags.contains(PteFlags::V)
    }

    #[inline]
    pub fn is_leaf(&self) -> bool {
        self.flags.intersects(PteFlags::R | PteFlags::W | PteFlags::X)
    }

    pub fn is_global(&self) -> bool {
        self.flags.contains(PteFlags::G)
    }
}

/// Root-table format of an address space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WalkMode {
    /// Guest-virtual (or host-virtual) SV39 translation.
    Sv39,
    /// G-stage translation of guest-physical addresses: 41-bit input with a
    /// 16 KiB root table.
    Sv39x4,
}

impl WalkMode {
    fn top_bits(self) -> u32 {
        match self {
            WalkMode::Sv39 => 9,
            WalkMode::Sv39x4 => 11,
        }
    }

    fn root_pages(self) -> u64 {
        match self {
            WalkMode::Sv39 => 1,
            WalkMode::Sv39x4 => 4,
        }
    }

    pub fn accepts(self, addr: u64) -> bool {
        match self {
            WalkMode::Sv39 => addr::is_canonical_sv39(addr),
            WalkMode::Sv39x4 => addr >> GPA_BITS == 0,
        }
    }
}

/// Bump allocator for page-table frames.
#[derive(Clone, Debug)]
pub struct FrameAllocator {
    next: u64,
    end: u64,
}

impl FrameAllocator {
    /// Hands out frames in `[base, base + bytes)`.
    pub fn new(base: u64, bytes: u64) -> Self {
        Self { next: base >> PAGE_SHIFT, end: (base + bytes) >> PAGE_SHIFT }
    }

    pub fn alloc(&mut self, pages: u64) -> Result<u64, MapError> {
        let start = self.next.next_multiple_of(pages);
        if start + pages > self.end {
            return Err(MapError::OutOfFrames);
        }
        self.next = start + pages;
        Ok(start)
    }
}

/// A contiguous mapping request for [`AddressSpace::map_region`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Region {
    pub vaddr: u64,
    pub paddr: u64,
    pub size: u64,
    pub flags: PteFlags,
    /// Largest leaf size the builder may use for this region.
    pub max_page: PageSize,
}

/// Simulated page tables rooted at `root_ppn`.
#[derive(Clone, Debug)]
pub struct AddressSpace {
    mode: WalkMode,
    root_ppn: u64,
    tables: BTreeMap<u64, Box<[u64; PTES_PER_TABLE]>>,
}

impl AddressSpace {
    pub fn new(mode: WalkMode, frames: &mut FrameAllocator) -> Result<Self, MapError> {
        let root_ppn = frames.alloc(mode.root_pages())?;
        let mut tables = BTreeMap::new();
        for p in 0..mode.root_pages() {
            tables.insert(root_ppn + p, Box::new([0u64; PTES_PER_TABLE]));
        }
        Ok(Self { mode, root_ppn, tables })
    }

    pub fn mode(&self) -> WalkMode {
        self.mode
    }

    pub fn root_ppn(&self) -> u64 {
        self.root_ppn
    }

    /// Physical page numbers of every table page, ascending.
    pub fn table_frames(&self) -> impl Iterator<Item = u64> + '_ {
        self.tables.keys().copied()
    }

    /// Raw PTE stored at physical address `pa`; absent tables read as zero.
    pub fn read_pte(&self, pa: u64) -> PageTableEntry {
        let raw = self.tables.get(&(pa >> PAGE_SHIFT)).map_or(0, |t| t[((pa & (PAGE_BYTES - 1)) / PTE_BYTES) as usize]);
        PageTableEntry::from_raw(raw)
    }

    fn pte_addr(&self, table_ppn: u64, vaddr: u64, level: usize) -> u64 {
        let index = addr::vpn_index(vaddr, level, if level == 2 { self.mode.top_bits() } else { 9 });
        (table_ppn << PAGE_SHIFT) + index as u64 * PTE_BYTES
    }

    fn write_pte(&mut self, pa: u64, pte: PageTableEntry) {
        let table = self.tables.get_mut(&(pa >> PAGE_SHIFT)).expect("table page exists");
        table[((pa & (PAGE_BYTES - 1)) / PTE_BYTES) as usize] = pte.to_raw();
    }

    /// Installs one leaf of `size` mapping `vaddr` to `paddr`.
    pub fn map(
        &mut self,
        vaddr: u64,
        paddr: u64,
        size: PageSize,
        flags: PteFlags,
        frames: &mut FrameAllocator,
    ) -> Result<(), MapError> {
        if !self.mode.accepts(vaddr) {
            return Err(MapError::BadAddress(vaddr));
        }
        if !addr::is_aligned(vaddr, size.bytes()) || !addr::is_aligned(paddr, size.bytes()) {
            return Err(MapError::Misaligned { vaddr, paddr, size });
        }
        if !flags.contains(PteFlags::V) || !flags.intersects(PteFlags::R | PteFlags::W | PteFlags::X) {
            return Err(MapError::NotLeafFlags);
        }
        let mut table = self.root_ppn;
        for level in (size.level() + 1..3).rev() {
            let pa = self.pte_addr(table, vaddr, level);
            let pte = self.read_pte(pa);
            if pte.is_valid() {
                if pte.is_leaf() {
                    return Err(MapError::Overlap(vaddr));
                }
                table = pte.ppn;
            } else {
                let ppn = frames.alloc(1)?;
                self.tables.insert(ppn, Box::new([0u64; PTES_PER_TABLE]));
                self.write_pte(pa, PageTableEntry::table(ppn));
                table = ppn;
            }
        }
        let pa = self.pte_addr(table, vaddr, size.level());
        if self.read_pte(pa).is_valid() {
            return Err(MapError::Overlap(vaddr));
        }
        self.write_pte(pa, PageTableEntry::new(paddr >> PAGE_SHIFT, flags));
        Ok(())
    }

    /// Maps a region with the fewest leaves allowed by alignment and
    /// `region.max_page`. Returns the number of leaves installed.
    pub fn map_region(&mut self, region: &Region, frames: &mut FrameAllocator) -> Result<usize, MapError> {
        if region.size == 0 || !addr::is_aligned(region.size, PAGE_BYTES) {
            return Err(MapError::BadSize(region.size));
        }
        let mut done = 0u64;
        let mut leaves = 0;
        while done < region.size {
            let va = region.vaddr + done;
            let pa = region.paddr + done;
            let size = PageSize::ALL
                .into_iter()
                .rev()
                .filter(|s| *s <= region.max_page)
                .find(|s| {
                    addr::is_aligned(va, s.bytes())
                        && addr::is_aligned(pa, s.bytes())
                        && region.size - done >= s.bytes()
                })
                .unwrap_or(PageSize::Base);
            self.map(va, pa, size, region.flags, frames)?;
            done += size.bytes();
            leaves += 1;
        }
        Ok(leaves)
    }
}

/// Outcome of a successful walk: the merged leaf for `vaddr`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Translation {
    /// Input address, aligned down to `page_size`.
    pub vaddr_base: u64,
    /// Output address of the walked input address.
    pub paddr: u64,
    pub page_size: PageSize,
    /// Leaf PTE whose `ppn` is the output frame of `vaddr_base`.
    pub pte: PageTableEntry,
}

impl Translation {
    pub fn translate(&self, vaddr: u64) -> u64 {
        (self.pte.ppn << PAGE_SHIFT) | (vaddr & self.page_size.offset_mask())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WalkResult {
    pub translation: Translation,
    /// Physical address of every PTE fetch, in issue order.
    pub accesses: Vec<u64>,
    pub cycles: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stage {
    /// VS-stage (or the only stage of a single-stage walk).
    Guest,
    /// G-stage: guest-page fault.
    Host,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FaultKind {
    NonCanonical,
    Invalid,
    MisalignedSuperpage,
    NoLeaf,
}

/// A failed walk, with the fetches already performed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WalkFault {
    pub stage: Stage,
    pub kind: FaultKind,
    /// The address whose translation faulted at `stage`.
    pub addr: u64,
    pub accesses: Vec<u64>,
    pub cycles: u64,
}

/// Three-level radix walk of `space` for `vaddr`.
pub fn walk_single<F>(space: &AddressSpace, vaddr: u64, fetch: &mut F) -> Result<WalkResult, WalkFault>
where
    F: FnMut(u64) -> u64,
{
    let mut accesses = Vec::with_capacity(3);
    let mut cycles = 0;
    match walk_into(space, vaddr, fetch, &mut accesses, &mut cycles) {
        Ok(translation) => Ok(WalkResult { translation, accesses, cycles }),
        Err(kind) => Err(WalkFault { stage: Stage::Guest, kind, addr: vaddr, accesses, cycles }),
    }
}

fn walk_into<F>(
    space: &AddressSpace,
    vaddr: u64,
    fetch: &mut F,
    accesses: &mut Vec<u64>,
    cycles: &mut u64,
) -> Result<Translation, FaultKind>
where
    F: FnMut(u64) -> u64,
{
    if !space.mode.accepts(vaddr) {
        return Err(FaultKind::NonCanonical);
    }
    let mut table = space.root_ppn;
    for level in (0..3).rev() {
        let pa = space.pte_addr(table, vaddr, level);
        *cycles += fetch(pa);
        accesses.push(pa);
        let pte = space.read_pte(pa);
        if !pte.is_valid() || (pte.flags.contains(PteFlags::W) && !pte.flags.contains(PteFlags::R)) {
            return Err(FaultKind::Invalid);
        }
        if pte.is_leaf() {
            let size = PageSize::from_level(level).expect("level < 3");
            if pte.ppn & (size.base_pages() - 1) != 0 {
                return Err(FaultKind::MisalignedSuperpage);
            }
            let translation = Translation {
                vaddr_base: vaddr & !size.offset_mask(),
                paddr: (pte.ppn << PAGE_SHIFT) | (vaddr & size.offset_mask()),
                page_size: size,
                pte,
            };
            return Ok(translation);
        }
        table = pte.ppn;
    }
    Err(FaultKind::NoLeaf)
}

/// Guest walk of `gvaddr` in which every guest-physical access is itself
/// translated by a full walk of `host`.
///
/// The resulting translation maps the guest-virtual page to the
/// host-physical frame at the smaller of the two stages' page sizes.
pub fn walk_two_stage<F>(
    guest: &AddressSpace,
    host: &AddressSpace,
    gvaddr: u64,
    fetch: &mut F,
) -> Result<WalkResult, WalkFault>
where
    F: FnMut(u64) -> u64,
{
    let mut accesses = Vec::with_capacity(15);
    let mut cycles = 0u64;
    let fault = |stage, kind, addr, accesses, cycles| WalkFault { stage, kind, addr, accesses, cycles };

    if !guest.mode.accepts(gvaddr) {
        return Err(fault(Stage::Guest, FaultKind::NonCanonical, gvaddr, accesses, cycles));
    }
    let mut table = guest.root_ppn;
    for level in (0..3).rev() {
        let pte_gpa = guest.pte_addr(table, gvaddr, level);
        let pte_hpa = match walk_into(host, pte_gpa, fetch, &mut accesses, &mut cycles) {
            Ok(t) => t.paddr,
            Err(kind) => return Err(fault(Stage::Host, kind, pte_gpa, accesses, cycles)),
        };
        cycles += fetch(pte_hpa);
        accesses.push(pte_hpa);
        let pte = guest.read_pte(pte_gpa);
        if !pte.is_valid() || (pte.flags.contains(PteFlags::W) && !pte.flags.contains(PteFlags::R)) {
            return Err(fault(Stage::Guest, FaultKind::Invalid, gvaddr, accesses, cycles));
        }
        if !pte.is_leaf() {
            table = pte.ppn;
            continue;
        }
        let guest_size = PageSize::from_level(level).expect("level < 3");
        if pte.ppn & (guest_size.base_pages() - 1) != 0 {
            return Err(fault(Stage::Guest, FaultKind::MisalignedSuperpage, gvaddr, accesses, cycles));
        }
        let gpa = (pte.ppn << PAGE_SHIFT) | (gvaddr & guest_size.offset_mask());
        let host_leaf = match walk_into(host, gpa, fetch, &mut accesses, &mut cycles) {
            Ok(t) => t,
            Err(kind) => return Err(fault(Stage::Host, kind, gpa, accesses, cycles)),
        };
        let size = guest_size.min(host_leaf.page_size);
        let translation = Translation {
            vaddr_base: gvaddr & !size.offset_mask(),
            paddr: host_leaf.paddr,
            page_size: size,
            pte: PageTableEntry::new((host_leaf.paddr & !size.offset_mask()) >> PAGE_SHIFT, pte.flags),
        };
        return Ok(WalkResult { translation, accesses, cycles });
    }
    Err(fault(Stage::Guest, FaultKind::NoLeaf, gvaddr, accesses, cycles))
}
