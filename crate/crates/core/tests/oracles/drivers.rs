//! Randomized and exhaustive checks of the simulator against the reference
//! models. Each returns a count of what it checked and what disagreed, so
//! callers can assert or report.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vmrt_core::cache::{AccessData, CacheEvent, FlatMemory, MemoryBackend};
use vmrt_core::replacement::{PartitionMask, PlruTree};
use vmrt_core::tlb::{Fill, HitSource, Lookup, PartitionCsrFile, Tlb, TlbConfig, TlbEntry};
use vmrt_core::walker::{
    walk_single, walk_two_stage, AddressSpace, FrameAllocator, PageTableEntry, PteFlags, WalkMode,
};
use vmrt_core::{AccessKind, Cache, CacheGeometry, PageSize, WayMode};

use super::{brute_victim, two_stage_fetches, CsrOp, CsrRef, ShadowMemory, TextbookPlru};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Tally {
    pub checked: u64,
    pub violations: u64,
}

impl Tally {
    fn check(&mut self, ok: bool) {
        self.checked += 1;
        self.violations += !ok as u64;
    }
}

/// Every tree state, partition count, enable mask and lock set of a
/// `leaves`-leaf tree against the brute-force victim search.
pub fn exhaustive_victims(leaves: usize) -> Tally {
    let mut t = Tally::default();
    let mut partitions = 1;
    while partitions <= leaves {
        for node_bits in 0..1u64 << (leaves - 1) {
            for enabled in 0..1u64 << partitions {
                let mask = PartitionMask::new(enabled, partitions).unwrap();
                for locked in 0..1u64 << leaves {
                    let mut tree = PlruTree::with_state(leaves, partitions, node_bits).unwrap();
                    for l in 0..leaves {
                        tree.set_lock(l, locked >> l & 1 == 1).unwrap();
                    }
                    let got = tree.select_victim(&mask).unwrap();
                    t.check(got == brute_victim(leaves, partitions, node_bits, enabled, locked));
                }
            }
        }
        partitions *= 2;
    }
    t
}

pub fn tlb_entry(vpn: u64) -> TlbEntry {
    TlbEntry {
        vpn,
        page_size: PageSize::Base,
        asid: 1,
        vmid: 1,
        pte: PageTableEntry::new(vpn, PteFlags::LEAF_RW),
        valid: true,
        global: false,
    }
}

/// `fills` fresh fills into a 16-entry TLB, mixed with hits on resident
/// entries, against the textbook PLRU. Each fill is one check.
pub fn tlb_vanilla_run(seed: u64, fills: u64) -> Tally {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tlb = Tlb::new(TlbConfig::default()).unwrap();
    let mut oracle = TextbookPlru::new(16);
    let mut resident: Vec<u64> = Vec::new();
    let mut next_vpn = 0x1000u64;
    let mut t = Tally::default();
    while t.checked < fills {
        if !resident.is_empty() && rng.random_bool(0.3) {
            let vpn = resident[rng.random_range(0..resident.len())];
            match tlb.lookup(vpn << 12, 1, 1) {
                Lookup::Hit(hit) => match hit.source {
                    HitSource::Entry(leaf) => oracle.access(leaf),
                    HitSource::LockSlot(_) => t.violations += 1,
                },
                _ => t.violations += 1,
            }
        } else {
            let expected = oracle.victim();
            match tlb.fill(tlb_entry(next_vpn)) {
                Fill::Filled(leaf) => {
                    t.check(leaf == expected);
                    oracle.access(leaf);
                }
                Fill::Dropped => t.check(false),
            }
            resident = tlb.entries().iter().filter(|e| e.valid).map(|e| e.vpn).collect();
            next_vpn += 1;
        }
    }
    t
}

/// `streams` random fill streams, each interleaving 2 to 4 owners with
/// pairwise disjoint masks on a fresh TLB. A stream violates isolation if
/// an owner fills a leaf outside its mask or two owners write the same
/// leaf.
pub fn partition_isolation(seed: u64, streams: u64) -> Tally {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tally::default();
    for _ in 0..streams {
        let owners = rng.random_range(2..=4usize);
        let mut masks = vec![0u64; owners];
        for p in 0..16 {
            let o = rng.random_range(0..=owners);
            if o < owners {
                masks[o] |= 1 << p;
            }
        }
        let mut tlb = Tlb::new(TlbConfig::default()).unwrap();
        let mut written = vec![0u64; owners];
        let mut ok = true;
        let mut vpn = 0;
        for _ in 0..rng.random_range(1..48) {
            let owner = rng.random_range(0..owners);
            tlb.write_cur_part(PartitionMask::new(masks[owner], 16).unwrap()).unwrap();
            for _ in 0..rng.random_range(1..6) {
                if rng.random_bool(0.25) {
                    let e = tlb.entries()[rng.random_range(0..16)];
                    if e.valid {
                        tlb.lookup(e.vpn << 12, e.asid, e.vmid);
                    }
                }
                vpn += 1;
                match tlb.fill(tlb_entry(vpn)) {
                    Fill::Filled(leaf) => {
                        written[owner] |= 1 << leaf;
                        ok &= masks[owner] >> leaf & 1 == 1;
                    }
                    Fill::Dropped => ok &= masks[owner] == 0,
                }
            }
        }
        for a in 0..owners {
            for b in a + 1..owners {
                ok &= written[a] & written[b] == 0;
            }
        }
        t.check(ok);
    }
    t
}

/// Random writes of the three partition CSRs against the two-register
/// reference; one check per step.
pub fn csr_protocol(seed: u64, steps: u64) -> Tally {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut csr = PartitionCsrFile::new(16);
    let mut model = CsrRef::reset(16);
    let mut t = Tally::default();
    for _ in 0..steps {
        let op = match rng.random_range(0..3) {
            0 => CsrOp::Cur(rng.random_range(0..1 << 16)),
            1 => CsrOp::Last(rng.random_range(0..1 << 16)),
            _ => CsrOp::Restore(rng.random_range(0..4)),
        };
        match op {
            CsrOp::Cur(v) => csr.write_cur_part(PartitionMask::new(v, 16).unwrap()).unwrap(),
            CsrOp::Last(v) => csr.write_last_part(PartitionMask::new(v, 16).unwrap()).unwrap(),
            CsrOp::Restore(v) => csr.write_restore_last_part(v),
        }
        model.apply(op);
        t.check((csr.cur_part().bits(), csr.last_part().bits()) == (model.cur, model.last));
    }
    t
}

const TABLE_POOL_GPA: u64 = 0x4000_0000;

/// Independent radix walk: every PTE address read, the output address and
/// the leaf level, or `None` on an invalid entry.
pub fn reference_walk(space: &AddressSpace, addr: u64, top_bits: u32) -> Option<(Vec<u64>, u64, usize)> {
    let mut table = space.root_ppn() << 12;
    let mut reads = Vec::new();
    for level in (0..3usize).rev() {
        let width = if level == 2 { top_bits } else { 9 };
        let index = (addr >> (12 + 9 * level)) & ((1 << width) - 1);
        let pa = table + index * 8;
        reads.push(pa);
        let pte = space.read_pte(pa);
        if !pte.flags.contains(PteFlags::V) {
            return None;
        }
        if pte.flags.intersects(PteFlags::R | PteFlags::W | PteFlags::X) {
            let offset = addr & ((1u64 << (12 + 9 * level)) - 1);
            return Some((reads, (pte.ppn << 12) + offset, level));
        }
        table = pte.ppn << 12;
    }
    None
}

/// Host walk of every guest PTE address, the guest PTE read itself, then a
/// host walk of the final guest-physical address.
pub fn reference_two_stage(guest: &AddressSpace, host: &AddressSpace, gva: u64) -> Option<(Vec<u64>, u64)> {
    let mut reads = Vec::new();
    let mut table_gpa = guest.root_ppn() << 12;
    for level in (0..3usize).rev() {
        let index = (gva >> (12 + 9 * level)) & 0x1ff;
        let pte_gpa = table_gpa + index * 8;
        let (host_reads, pte_hpa, _) = reference_walk(host, pte_gpa, 11)?;
        reads.extend(host_reads);
        reads.push(pte_hpa);
        // guest tables are keyed by guest-physical frame
        let pte = guest.read_pte(pte_gpa);
        if !pte.flags.contains(PteFlags::V) {
            return None;
        }
        if pte.flags.intersects(PteFlags::R | PteFlags::W | PteFlags::X) {
            let gpa = (pte.ppn << 12) + (gva & ((1u64 << (12 + 9 * level)) - 1));
            let (host_reads, hpa, _) = reference_walk(host, gpa, 11)?;
            reads.extend(host_reads);
            return Some((reads, hpa));
        }
        table_gpa = pte.ppn << 12;
    }
    None
}

pub struct WalkCase {
    pub guest: AddressSpace,
    pub host: AddressSpace,
    pub gva: u64,
    pub guest_size: PageSize,
    pub table_host_size: PageSize,
    pub data_host_size: PageSize,
    pub expected_hpa: u64,
}

pub fn random_page_size(rng: &mut ChaCha8Rng) -> PageSize {
    PageSize::ALL[rng.random_range(0..3)]
}

/// Random guest mapping of size `g`; the guest table pool is host-mapped
/// with `ht` pages and the data with an `hd` page.
pub fn build_walk_case(rng: &mut ChaCha8Rng, g: PageSize, ht: PageSize, hd: PageSize) -> WalkCase {
    let mut host_frames = FrameAllocator::new(0x8000_0000, 64 << 20);
    let mut guest_frames = FrameAllocator::new(TABLE_POOL_GPA, 2 << 20);
    let mut host = AddressSpace::new(WalkMode::Sv39x4, &mut host_frames).unwrap();
    let mut guest = AddressSpace::new(WalkMode::Sv39, &mut guest_frames).unwrap();

    let gva_base = rng.random_range(0..(1u64 << 38) / g.bytes()) * g.bytes();
    let gva = gva_base + rng.random_range(0..g.bytes() / 8) * 8;
    let gpa_align = g.bytes().max(hd.bytes());
    let gpa_base = (1u64 << 32) + rng.random_range(1..(1u64 << 40) / gpa_align - 8) * gpa_align;
    guest.map(gva_base, gpa_base, g, PteFlags::LEAF_RW, &mut guest_frames).unwrap();

    let pool_hpa = (1u64 << 36) + rng.random_range(0..64u64) * ht.bytes().max(2 << 20);
    let pool_hpa = pool_hpa.next_multiple_of(ht.bytes());
    let mut off = 0;
    while off < 2 << 20 {
        host.map(TABLE_POOL_GPA + off, pool_hpa + off, ht, PteFlags::LEAF_RW, &mut host_frames).unwrap();
        off += ht.bytes();
    }

    let gpa = gpa_base + (gva - gva_base);
    let host_page = gpa & !hd.offset_mask();
    let data_hpa = (1u64 << 37) + rng.random_range(0..1024u64) * hd.bytes();
    host.map(host_page, data_hpa, hd, PteFlags::LEAF_RWX, &mut host_frames).unwrap();
    let expected_hpa = data_hpa + (gpa - host_page);
    WalkCase { guest, host, gva, guest_size: g, table_host_size: ht, data_host_size: hd, expected_hpa }
}

/// Fetch addresses, cycles, translation, merged page size and fetch count
/// of one two-stage walk. Returns the list of mismatches.
pub fn check_walk_case(case: &WalkCase) -> Vec<&'static str> {
    let mut bad = Vec::new();
    let mut seen = Vec::new();
    let Ok(w) = walk_two_stage(&case.guest, &case.host, case.gva, &mut |pa| {
        seen.push(pa);
        40
    }) else {
        return vec!["walk faulted"];
    };
    let Some((reads, hpa)) = reference_two_stage(&case.guest, &case.host, case.gva) else {
        return vec!["reference walk faulted"];
    };
    let mut expect = |ok: bool, what| {
        if !ok {
            bad.push(what);
        }
    };
    expect(w.accesses == reads, "fetch addresses");
    expect(seen == reads, "priced fetches");
    expect(w.cycles == 40 * reads.len() as u64, "walk cycles");
    expect(hpa == case.expected_hpa, "reference translation");
    expect(w.translation.paddr == case.expected_hpa, "translation");
    expect(w.translation.translate(case.gva) == case.expected_hpa, "translate()");
    expect(w.translation.page_size == case.guest_size.min(case.data_host_size), "merged page size");
    let guest_fetches = 3 - case.guest_size.level();
    let expected = two_stage_fetches(case.guest_size.level(), |i| {
        if i < guest_fetches {
            case.table_host_size.level()
        } else {
            case.data_host_size.level()
        }
    });
    expect(w.accesses.len() == expected, "fetch count");
    bad
}

/// Fetch counts of the three fixed two-stage shapes.
pub fn fixed_walk_counts(seed: u64) -> Vec<(PageSize, PageSize, usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    [(PageSize::Base, PageSize::Base, 15), (PageSize::Giga, PageSize::Base, 7), (PageSize::Base, PageSize::Giga, 7)]
        .into_iter()
        .map(|(g, h, want)| {
            let case = build_walk_case(&mut rng, g, h, h);
            let got = walk_two_stage(&case.guest, &case.host, case.gva, &mut |_| 0).map_or(0, |w| w.accesses.len());
            (g, h, want, got)
        })
        .collect()
}

pub fn random_two_stage_walks(seed: u64, n: u64) -> Tally {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tally::default();
    for _ in 0..n {
        let (g, ht, hd) = (random_page_size(&mut rng), random_page_size(&mut rng), random_page_size(&mut rng));
        t.check(check_walk_case(&build_walk_case(&mut rng, g, ht, hd)).is_empty());
    }
    t
}

pub fn random_single_stage_walks(seed: u64, n: u64) -> Tally {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tally::default();
    for _ in 0..n {
        let size = random_page_size(&mut rng);
        let mut frames = FrameAllocator::new(0x8000_0000, 1 << 20);
        let mut space = AddressSpace::new(WalkMode::Sv39, &mut frames).unwrap();
        let va_base = rng.random_range(0..(1u64 << 38) / size.bytes()) * size.bytes();
        let pa_base = rng.random_range(0..(1u64 << 44) / size.bytes()) * size.bytes();
        space.map(va_base, pa_base, size, PteFlags::LEAF_RX, &mut frames).unwrap();
        let va = va_base + rng.random_range(0..size.bytes());
        let ok = match (walk_single(&space, va, &mut |_| 1), reference_walk(&space, va, 9)) {
            (Ok(w), Some((reads, pa, level))) => {
                level == size.level()
                    && w.accesses == reads
                    && w.accesses.len() == super::single_stage_fetches(level)
                    && w.translation.translate(va) == pa
                    && pa == pa_base + (va - va_base)
                    // a page just past the mapping faults
                    && walk_single(&space, va_base + size.bytes(), &mut |_| 1).is_err()
            }
            _ => false,
        };
        t.check(ok);
    }
    t
}

pub const SPM_DRAM: u64 = 0x8000_0000;
pub const SPM_WINDOW: u64 = 0x1000_0000;
pub const SPM_HIT: u64 = 1;
pub const SPM_CYCLES: u64 = 3;
pub const SPM_MEM: u64 = 40;

pub fn spm_setup(ways: usize, sets: usize, line: usize) -> (Cache, FlatMemory) {
    let g = CacheGeometry::new(ways, sets, line).unwrap();
    (Cache::new(g, SPM_WINDOW, SPM_HIT, SPM_CYCLES).unwrap(), FlatMemory::new(SPM_DRAM, 1 << 16, SPM_MEM))
}

/// Value a DRAM word holds from the program's point of view.
fn visible(cache: &Cache, mem: &FlatMemory, addr: u64) -> u64 {
    let g = cache.geometry();
    let (set, tag) = g.split(addr);
    for way in 0..g.ways() {
        let l = cache.line(set, way);
        if l.valid && l.tag == tag {
            return cache.line_data(set, way)[(addr % g.line_bytes() as u64 / 8) as usize];
        }
    }
    mem.read_word(addr)
}

/// SPM violations over `ops` random operations, split by property.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SpmReport {
    pub ops: u64,
    /// Dropped writes and dummy reads on misconfigured SPM addresses,
    /// functional SPM reads and writes.
    pub data: u64,
    /// Dirty-line writeback count, zeroing and tag clearing on conversion;
    /// no valid line in any SPM way after every operation.
    pub conversion: u64,
    /// Every SPM-window access costs exactly the SPM latency.
    pub latency: u64,
    /// Cacheable DRAM traffic stays coherent with a flat reference.
    pub dram: u64,
}

impl SpmReport {
    pub fn total(&self) -> u64 {
        self.data + self.conversion + self.latency + self.dram
    }
}

pub fn spm_random_operations(seed: u64, ops: u64) -> SpmReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut cache, mut mem) = spm_setup(4, 8, 16);
    let g = *cache.geometry();
    let window = g.total_bytes();
    let mut dram = ShadowMemory::default();
    let mut spm = ShadowMemory::default();
    let mut r = SpmReport { ops, ..Default::default() };
    let word = |rng: &mut ChaCha8Rng, base: u64, bytes: u64| base + rng.random_range(0..bytes / 8) * 8;

    for _ in 0..ops {
        match rng.random_range(0..10) {
            0 => {
                let way = rng.random_range(0..g.ways());
                let mode = if rng.random_bool(0.5) { WayMode::Spm } else { WayMode::Cache };
                let was = cache.way_mode(way);
                let wb_before = cache.stats().writebacks;
                let dirty = (0..g.sets()).filter(|&s| cache.line(s, way).valid && cache.line(s, way).dirty).count();
                cache.configure_way(way, mode, &mut mem).unwrap();
                if mode == WayMode::Spm && was == WayMode::Cache {
                    r.conversion += (cache.stats().writebacks - wb_before != dirty as u64) as u64;
                    let base = SPM_WINDOW + way as u64 * g.way_bytes();
                    for off in (0..g.way_bytes()).step_by(8) {
                        spm.write(base + off, 0);
                    }
                    r.conversion += cache.spm_contents(way).iter().any(|&w| w != 0) as u64;
                }
            }
            1..=4 => {
                let addr = word(&mut rng, SPM_WINDOW, window);
                let way = ((addr - SPM_WINDOW) / g.way_bytes()) as usize;
                let write = rng.random_bool(0.5);
                let value = rng.random::<u64>();
                let kind = if write { AccessKind::Write } else { AccessKind::Read };
                let a = cache.access(addr, kind, value, &mut mem).unwrap();
                r.latency += (a.latency != SPM_CYCLES) as u64;
                let ok = match (cache.way_mode(way), write) {
                    (WayMode::Spm, true) => {
                        spm.write(addr, value);
                        a.data == AccessData::Written && a.event == CacheEvent::Spm
                    }
                    (WayMode::Spm, false) => a.data == AccessData::Value(spm.read(addr)),
                    (WayMode::Cache, true) => a.data == AccessData::Dropped && a.event == CacheEvent::SpmMisconfig,
                    (WayMode::Cache, false) => a.data == AccessData::Dummy && a.event == CacheEvent::SpmMisconfig,
                };
                r.data += !ok as u64;
            }
            _ => {
                let addr = word(&mut rng, SPM_DRAM, 4096);
                let write = rng.random_bool(0.4);
                let value = rng.random::<u64>();
                let kind = if write { AccessKind::Write } else { AccessKind::Read };
                let a = cache.access(addr, kind, value, &mut mem).unwrap();
                let ok = match a.event {
                    CacheEvent::Hit => a.latency == SPM_HIT,
                    CacheEvent::Miss => a.latency == SPM_MEM,
                    _ => false,
                };
                r.dram += !ok as u64;
                if write {
                    dram.write(addr, value);
                } else {
                    r.dram += (a.data != AccessData::Value(dram.read(addr))) as u64;
                }
            }
        }
        for way in (0..g.ways()).filter(|&w| cache.way_mode(w) == WayMode::Spm) {
            r.conversion += (0..g.sets()).any(|s| cache.line(s, way).valid) as u64;
        }
    }
    for addr in (SPM_DRAM..SPM_DRAM + 4096).step_by(8) {
        r.dram += (visible(&cache, &mem, addr) != dram.read(addr)) as u64;
    }
    cache.clean_all(&mut mem);
    for addr in (SPM_DRAM..SPM_DRAM + 4096).step_by(8) {
        r.dram += (mem.read_word(addr) != dram.read(addr)) as u64;
    }
    r
}

/// Random SPM and DRAM traffic with a fixed SPM share of the ways; counts
/// SPM accesses whose latency or event differs from the constant.
pub fn spm_latency_under_traffic(seed: u64, ops: u64) -> Tally {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tally::default();
    let (mut cache, mut mem) = spm_setup(4, 8, 16);
    let g = *cache.geometry();
    for _ in 0..ops {
        if rng.random_range(0..64) == 0 {
            let spm_ways = rng.random_range(1..4);
            for w in 0..4 {
                let mode = if w >= 4 - spm_ways { WayMode::Spm } else { WayMode::Cache };
                cache.configure_way(w, mode, &mut mem).unwrap();
            }
        }
        let spm_ways = cache.spm_ways() as u64;
        let write = rng.random_bool(0.5);
        let kind = if write { AccessKind::Write } else { AccessKind::Read };
        if spm_ways > 0 && rng.random_bool(0.5) {
            let base = SPM_WINDOW + (4 - spm_ways) * g.way_bytes();
            let addr = base + rng.random_range(0..spm_ways * g.way_bytes() / 8) * 8;
            let a = cache.access(addr, kind, 1, &mut mem).unwrap();
            t.check(a.latency == SPM_CYCLES && a.event == CacheEvent::Spm);
        } else {
            let addr = SPM_DRAM + rng.random_range(0..4096u64 / 8) * 8;
            cache.access(addr, kind, 1, &mut mem).unwrap();
        }
    }
    t
}
