//! Fully associative TLB with partitioned replacement and CSR-defined
//! locked entries.
//!
//! Replacement is constrained by `CUR_PART`; lookups are not. Each lock slot
//! mirrors three registers (VPN, leaf PTE, address-space IDs). Once all three
//! carry their valid bit, the slot answers lookups with the register contents
//! and its target leaf becomes unreachable in the replacement tree.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::addr::{self, PageSize, PAGE_SHIFT};
use crate::error::{TlbError, UsageError};
use crate::replacement::{PartitionMask, PlruTree};
use crate::walker::{PageTableEntry, Translation};

/// A cached translation. `vpn` is the full 27-bit VPN aligned to `page_size`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct TlbEntry {
    pub vpn: u64,
    pub page_size: PageSize,
    pub asid: u16,
    pub vmid: u16,
    pub pte: PageTableEntry,
    pub valid: bool,
    pub global: bool,
}

#[inline]
fn vpn_matches(entry_vpn: u64, size: PageSize, query_vpn: u64) -> bool {
    query_vpn & !(size.base_pages() - 1) == entry_vpn
}

impl TlbEntry {
    pub fn from_translation(t: &Translation, asid: u16, vmid: u16) -> Self {
        Self {
            vpn: addr::vpn(t.vaddr_base),
            page_size: t.page_size,
            asid,
            vmid,
            pte: t.pte,
            valid: true,
            global: t.pte.is_global(),
        }
    }

    pub fn matches(&self, vaddr: u64, asid: u16, vmid: u16) -> bool {
        self.valid
            && self.vmid == vmid
            && (self.global || self.asid == asid)
            && vpn_matches(self.vpn, self.page_size, addr::vpn(vaddr))
    }

    pub fn translate(&self, vaddr: u64) -> u64 {
        (self.pte.ppn << PAGE_SHIFT) | (vaddr & self.page_size.offset_mask())
    }
}

/// `CUR_PART` / `LAST_PART` register pair. `RESTORE_LAST_PART` is a
/// write-only trigger and holds no state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PartitionCsrFile {
    cur_part: PartitionMask,
    last_part: PartitionMask,
}

impl PartitionCsrFile {
    /// Reset state: every partition enabled in both registers.
    pub fn new(width: usize) -> Self {
        Self { cur_part: PartitionMask::all(width), last_part: PartitionMask::all(width) }
    }

    pub fn cur_part(&self) -> PartitionMask {
        self.cur_part
    }

    pub fn last_part(&self) -> PartitionMask {
        self.last_part
    }

    fn check(&self, value: &PartitionMask) -> Result<(), UsageError> {
        if value.width() != self.cur_part.width() {
            return Err(UsageError::MaskWidth { expected: self.cur_part.width(), got: value.width() });
        }
        Ok(())
    }

    pub fn write_cur_part(&mut self, value: PartitionMask) -> Result<(), UsageError> {
        self.check(&value)?;
        self.last_part = self.cur_part;
        self.cur_part = value;
        Ok(())
    }

    pub fn write_last_part(&mut self, value: PartitionMask) -> Result<(), UsageError> {
        self.check(&value)?;
        self.last_part = value;
        Ok(())
    }

    /// Copies `LAST_PART` into `CUR_PART` when bit 0 of `value` is set.
    pub fn write_restore_last_part(&mut self, value: u64) {
        if value & 1 == 1 {
            self.cur_part = self.last_part;
        }
    }
}

/// Lock register (i): VPN, page size and flags of the mapping.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct VpnCsr {
    pub vpn: u64,
    pub page_size: PageSize,
    pub global: bool,
    pub valid: bool,
}

/// Lock register (iii): address-space identifiers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct IdCsr {
    pub asid: u16,
    pub vmid: u16,
    pub valid: bool,
}

/// A write to one of the three registers of a lock slot. Register (ii), the
/// leaf PTE, uses the PTE's own V bit as its valid bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LockRegister {
    Vpn(VpnCsr),
    Pte(PageTableEntry),
    Id(IdCsr),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LockSlot {
    pub csr_vpn: VpnCsr,
    pub csr_pte: PageTableEntry,
    pub csr_id: IdCsr,
    pub target_leaf: usize,
}

impl LockSlot {
    fn new(target_leaf: usize) -> Self {
        Self { csr_vpn: VpnCsr::default(), csr_pte: PageTableEntry::default(), csr_id: IdCsr::default(), target_leaf }
    }

    pub fn is_active(&self) -> bool {
        self.csr_vpn.valid && self.csr_pte.is_valid() && self.csr_id.valid
    }

    fn matches(&self, vaddr: u64, asid: u16, vmid: u16) -> bool {
        self.is_active()
            && self.csr_id.vmid == vmid
            && (self.csr_vpn.global || self.csr_id.asid == asid)
            && vpn_matches(self.csr_vpn.vpn, self.csr_vpn.page_size, addr::vpn(vaddr))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TlbConfig {
    pub entries: usize,
    pub partitions: usize,
    pub lock_slots: usize,
    pub hit_cycles: u64,
}

impl Default for TlbConfig {
    fn default() -> Self {
        Self { entries: 16, partitions: 16, lock_slots: 8, hit_cycles: 1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HitSource {
    Entry(usize),
    LockSlot(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TlbHit {
    pub paddr: u64,
    pub pte: PageTableEntry,
    pub page_size: PageSize,
    pub source: HitSource,
    pub cycles: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Lookup {
    Hit(TlbHit),
    Miss,
    /// The queried address is not canonical SV39.
    Fault,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fill {
    Filled(usize),
    /// No replaceable leaf under `CUR_PART`; the translation is not cached.
    Dropped,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flush {
    All,
    /// Non-global entries of one address space inside one VM.
    Asid {
        vmid: u16,
        asid: u16,
    },
    Vmid(u16),
    /// Every entry of `vmid` covering `vaddr`.
    Vaddr {
        vmid: u16,
        vaddr: u64,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TlbStats {
    pub hits: u64,
    pub lock_hits: u64,
    pub misses: u64,
    pub fills: u64,
    pub dropped_fills: u64,
    pub evictions: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tlb {
    entries: Vec<TlbEntry>,
    plru: PlruTree,
    csr: PartitionCsrFile,
    slots: Vec<LockSlot>,
    hit_cycles: u64,
    stats: TlbStats,
}

impl Tlb {
    pub fn new(config: TlbConfig) -> Result<Self, TlbError> {
        let plru = PlruTree::new(config.entries, config.partitions)?;
        if config.lock_slots > config.entries {
            return Err(UsageError::IndexOutOfRange { index: config.lock_slots, len: config.entries }.into());
        }
        Ok(Self {
            entries: alloc::vec![TlbEntry::default(); config.entries],
            plru,
            csr: PartitionCsrFile::new(config.partitions),
            slots: (0..config.lock_slots).map(LockSlot::new).collect(),
            hit_cycles: config.hit_cycles,
            stats: TlbStats::default(),
        })
    }

    pub fn entries(&self) -> &[TlbEntry] {
        &self.entries
    }

    pub fn slots(&self) -> &[LockSlot] {
        &self.slots
    }

    pub fn plru(&self) -> &PlruTree {
        &self.plru
    }

    pub fn csr(&self) -> &PartitionCsrFile {
        &self.csr
    }

    pub fn stats(&self) -> &TlbStats {
        &self.stats
    }

    pub fn reset_stats(&mut self) {
        self.stats = TlbStats::default();
    }

    pub fn partition_count(&self) -> usize {
        self.plru.partition_count()
    }

    pub fn lookup(&mut self, vaddr: u64, asid: u16, vmid: u16) -> Lookup {
        let lookup = self.probe(vaddr, asid, vmid);
        match lookup {
            Lookup::Hit(TlbHit { source: HitSource::Entry(leaf), .. }) => {
                self.plru.touch(leaf).expect("leaf index in range");
                self.stats.hits += 1;
            }
            Lookup::Hit(_) => self.stats.lock_hits += 1,
            Lookup::Miss => self.stats.misses += 1,
            Lookup::Fault => {}
        }
        lookup
    }

    /// Lookup without replacement or statistics side effects.
    pub fn probe(&self, vaddr: u64, asid: u16, vmid: u16) -> Lookup {
        if !addr::is_canonical_sv39(vaddr) {
            return Lookup::Fault;
        }
        if let Some((i, slot)) = self.slots.iter().enumerate().find(|(_, s)| s.matches(vaddr, asid, vmid)) {
            let size = slot.csr_vpn.page_size;
            return Lookup::Hit(TlbHit {
                paddr: (slot.csr_pte.ppn << PAGE_SHIFT) | (vaddr & size.offset_mask()),
                pte: slot.csr_pte,
                page_size: size,
                source: HitSource::LockSlot(i),
                cycles: self.hit_cycles,
            });
        }
        match self.entries.iter().position(|e| e.matches(vaddr, asid, vmid)) {
            Some(leaf) => {
                let e = &self.entries[leaf];
                Lookup::Hit(TlbHit {
                    paddr: e.translate(vaddr),
                    pte: e.pte,
                    page_size: e.page_size,
                    source: HitSource::Entry(leaf),
                    cycles: self.hit_cycles,
                })
            }
            None => Lookup::Miss,
        }
    }

    pub fn fill(&mut self, entry: TlbEntry) -> Fill {
        debug_assert!(entry.valid);
        let victim = self.plru.insert(&self.csr.cur_part).expect("CSR width matches tree");
        match victim {
            Some(leaf) => {
                if self.entries[leaf].valid {
                    self.stats.evictions += 1;
                }
                self.entries[leaf] = entry;
                self.stats.fills += 1;
                Fill::Filled(leaf)
            }
            None => {
                self.stats.dropped_fills += 1;
                Fill::Dropped
            }
        }
    }

    pub fn write_cur_part(&mut self, value: PartitionMask) -> Result<(), TlbError> {
        Ok(self.csr.write_cur_part(value)?)
    }

    pub fn write_last_part(&mut self, value: PartitionMask) -> Result<(), TlbError> {
        Ok(self.csr.write_last_part(value)?)
    }

    pub fn write_restore_last_part(&mut self, value: u64) {
        self.csr.write_restore_last_part(value);
    }

    /// Writes one lock register and re-evaluates the slot's activation.
    pub fn program_lock_slot(&mut self, slot: usize, value: LockRegister) -> Result<(), TlbError> {
        if slot >= self.slots.len() {
            return Err(TlbError::NoSuchSlot(slot));
        }
        if let LockRegister::Vpn(v) = value {
            if v.vpn & (v.page_size.base_pages() - 1) != 0 {
                return Err(TlbError::MisalignedLockVpn { vpn: v.vpn, size: v.page_size });
            }
        }
        let was_active = self.slots[slot].is_active();
        let s = &mut self.slots[slot];
        match value {
            LockRegister::Vpn(v) => s.csr_vpn = v,
            LockRegister::Pte(p) => s.csr_pte = p,
            LockRegister::Id(id) => s.csr_id = id,
        }
        let leaf = s.target_leaf;
        if !was_active && self.slots[slot].is_active() {
            // the leaf's storage now holds the slot's contents
            self.entries[leaf].valid = false;
        }
        self.sync_lock(leaf);
        Ok(())
    }

    /// Redirects a slot to shadow another leaf.
    pub fn set_slot_target(&mut self, slot: usize, leaf: usize) -> Result<(), TlbError> {
        if slot >= self.slots.len() {
            return Err(TlbError::NoSuchSlot(slot));
        }
        if leaf >= self.entries.len() {
            return Err(UsageError::IndexOutOfRange { index: leaf, len: self.entries.len() }.into());
        }
        let old = core::mem::replace(&mut self.slots[slot].target_leaf, leaf);
        if self.slots[slot].is_active() {
            self.entries[leaf].valid = false;
        }
        self.sync_lock(old);
        self.sync_lock(leaf);
        Ok(())
    }

    fn sync_lock(&mut self, leaf: usize) {
        let locked = self.slots.iter().any(|s| s.is_active() && s.target_leaf == leaf);
        self.plru.set_lock(leaf, locked).expect("leaf index in range");
    }

    /// Clears every register of a slot.
    pub fn clear_lock_slot(&mut self, slot: usize) -> Result<(), TlbError> {
        self.program_lock_slot(slot, LockRegister::Vpn(VpnCsr::default()))?;
        self.program_lock_slot(slot, LockRegister::Pte(PageTableEntry::default()))?;
        self.program_lock_slot(slot, LockRegister::Id(IdCsr::default()))
    }

    /// Invalidates matching regular entries. Lock slots are never affected.
    pub fn flush(&mut self, filter: Flush) {
        for e in self.entries.iter_mut().filter(|e| e.valid) {
            let hit = match filter {
                Flush::All => true,
                Flush::Asid { vmid, asid } => e.vmid == vmid && e.asid == asid && !e.global,
                Flush::Vmid(vmid) => e.vmid == vmid,
                Flush::Vaddr { vmid, vaddr } => e.vmid == vmid && vpn_matches(e.vpn, e.page_size, addr::vpn(vaddr)),
            };
            if hit {
                e.valid = false;
            }
        }
    }

    /// Deterministic text rendering of every entry, CSR and lock slot.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "tlb entries={} partitions={} slots={} hit_cycles={}",
            self.entries.len(),
            self.partition_count(),
            self.slots.len(),
            self.hit_cycles
        );
        let _ = writeln!(out, "cur_part={} last_part={}", self.csr.cur_part, self.csr.last_part);
        let _ = writeln!(out, "plru nodes={:#x} locked={:#x}", self.plru.node_bits(), self.plru.locked_bits());
        for (i, e) in self.entries.iter().enumerate() {
            if e.valid {
                let _ = writeln!(
                    out,
                    "entry {i:2}: vpn={:#09x} size={} asid={} vmid={} ppn={:#x} flags={:#04x}{}",
                    e.vpn,
                    e.page_size,
                    e.asid,
                    e.vmid,
                    e.pte.ppn,
                    e.pte.flags.bits(),
                    if e.global { " global" } else { "" }
                );
            } else {
                let _ = writeln!(out, "entry {i:2}: invalid");
            }
        }
        for (i, s) in self.slots.iter().enumerate() {
            let _ = writeln!(
                out,
                "slot {i}: leaf={} vpn={:#09x}/{}/{}{} pte={:#x}/{:#04x} id={}/{}/{} {}",
                s.target_leaf,
                s.csr_vpn.vpn,
                s.csr_vpn.page_size,
                if s.csr_vpn.valid { "v" } else { "-" },
                if s.csr_vpn.global { "g" } else { "" },
                s.csr_pte.ppn,
                s.csr_pte.flags.bits(),
                s.csr_id.asid,
                s.csr_id.vmid,
                if s.csr_id.valid { "v" } else { "-" },
                if s.is_active() { "active" } else { "inactive" }
            );
        }
        out
    }
}
