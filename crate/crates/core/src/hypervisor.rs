//! VMM layer: VM contexts with partition masks, lock regions and SPM
//! placement, the trap-time `CUR_PART` protocol, and the
//! prime / deschedule / interfere / reschedule / measure iteration loop.

use alloc::vec::Vec;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::addr::{self, PageSize, PAGE_BYTES};
use crate::cache::AccessKind;
use crate::error::{MapError, TlbError};
use crate::memsys::{
    AccessFault, ConfigError, MemAccessOutcome, MemSys, MemSysConfig, Side, Stages, TranslationContext,
};
use crate::replacement::PartitionMask;
use crate::tlb::{IdCsr, LockRegister, VpnCsr};
use crate::walker::{self, AddressSpace, FrameAllocator, PteFlags, Region, WalkMode};
use crate::workload::{PhaseCursor, Stream, Workload};

/// Guest-physical base of every VM's page-table pool.
pub const GUEST_TABLE_GPA: u64 = 0x7000_0000;
pub const GUEST_TABLE_BYTES: u64 = 1 << 20;
/// Guest-physical base handed out to data and code regions.
pub const GUEST_RAM_GPA: u64 = 0x8000_0000;
/// DRAM reserved at the bottom for host and hypervisor page tables.
pub const HOST_TABLE_BYTES: u64 = 16 << 20;

/// A guest-virtual region of a VM (or a virtual region of the hypervisor).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MemoryRegion {
    pub gvaddr: u64,
    pub size: u64,
    pub flags: PteFlags,
    /// Largest leaf used in either stage.
    pub max_page: PageSize,
    /// Backed by this side's SPM window when SPM is enabled.
    pub spm: Option<Side>,
}

impl MemoryRegion {
    pub fn new(gvaddr: u64, size: u64, flags: PteFlags) -> Self {
        Self { gvaddr, size, flags, max_page: PageSize::Base, spm: None }
    }

    pub fn max_page(self, max_page: PageSize) -> Self {
        Self { max_page, ..self }
    }

    pub fn spm(self, side: Side) -> Self {
        Self { spm: Some(side), ..self }
    }

    pub fn contains(&self, first: u64, last: u64) -> bool {
        first >= self.gvaddr && last < self.gvaddr + self.size
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LockRegion {
    pub gvaddr: u64,
    pub size: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VmConfig {
    pub vmid: u16,
    pub asid: u16,
    pub partitions: PartitionMask,
    pub regions: Vec<MemoryRegion>,
    pub lock_regions: Vec<LockRegion>,
    pub workload: Workload,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HypervisorConfig {
    pub partitions: PartitionMask,
    pub quantum_cycles: u64,
    /// Hypervisor-virtual regions backing the footprint (single-stage,
    /// VMID 0, ASID 0).
    pub regions: Vec<MemoryRegion>,
    /// Accesses executed on every trap entry.
    pub footprint: Vec<Stream>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Mitigations {
    pub partitioning: bool,
    pub locking: bool,
    pub spm: bool,
}

impl Mitigations {
    pub const NONE: Self = Self { partitioning: false, locking: false, spm: false };
    pub const ALL: Self = Self { partitioning: true, locking: true, spm: true };
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScenarioConfig {
    pub system: MemSysConfig,
    pub hypervisor: HypervisorConfig,
    pub critical: VmConfig,
    pub interference: Option<VmConfig>,
    pub mitigations: Mitigations,
    /// Fraction of each cache's ways turned into SPM, in percent.
    pub spm_percent: u32,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Owner {
    Critical,
    Interference,
    Hypervisor,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SetupError {
    #[error(transparent)]
    System(#[from] ConfigError),
    #[error("{owner:?}: page-table construction failed: {source}")]
    Map { owner: Owner, source: MapError },
    #[error(transparent)]
    Tlb(#[from] TlbError),
    #[error("{owner:?}: partition mask is {got} bits wide, the TLB has {expected} partitions")]
    MaskWidth { owner: Owner, expected: usize, got: usize },
    #[error("VMID {0} is used twice (VMID 0 belongs to the hypervisor)")]
    Vmid(u16),
    #[error("quantum must be positive")]
    Quantum,
    #[error("SPM percentage {0} leaves no cache ways")]
    SpmPercent(u32),
    #[error("{side:?} SPM needs {needed:#x} bytes, {available:#x} available")]
    SpmOverflow { side: Side, needed: u64, available: u64 },
    #[error("lock region {gvaddr:#x}+{size:#x} is not page aligned")]
    MisalignedLock { gvaddr: u64, size: u64 },
    #[error("lock region at {0:#x} is not mapped")]
    UnmappedLock(u64),
    #[error("{side:?} TLB lock slots exhausted: {needed} needed, {available} available")]
    SlotsExhausted { side: Side, needed: usize, available: usize },
    #[error("{owner:?}: stream {first:#x}..={last:#x} is misaligned or outside every region")]
    Stream { owner: Owner, first: u64, last: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{owner:?} access at {vaddr:#x} faulted: {fault}")]
pub struct RunError {
    pub owner: Owner,
    pub vaddr: u64,
    pub fault: AccessFault,
}

/// One programmed lock slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LockAssignment {
    pub side: Side,
    pub slot: usize,
    pub leaf: usize,
    pub gvaddr: u64,
    pub page_size: PageSize,
}

/// Page tables and tags of one VM after setup.
#[derive(Clone, Debug)]
pub struct VmState {
    pub config: VmConfig,
    pub guest: AddressSpace,
    pub host: AddressSpace,
}

impl VmState {
    pub fn context(&self) -> TranslationContext<'_> {
        TranslationContext {
            asid: self.config.asid,
            vmid: self.config.vmid,
            stages: Stages::Two { guest: &self.guest, host: &self.host },
        }
    }
}

/// Everything built once per scenario; iterations start from `boot`.
#[derive(Clone, Debug)]
pub struct ScenarioState {
    pub config: ScenarioConfig,
    pub critical: VmState,
    pub interference: Option<VmState>,
    pub hyp_space: AddressSpace,
    pub hyp_mask: PartitionMask,
    pub locks: Vec<LockAssignment>,
    pub boot: MemSys,
}

/// Per-iteration measurement of the critical VM's timed phase.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct IterationRecord {
    pub iteration: u64,
    pub cycles: u64,
    pub tlb_misses: u64,
    pub cache_misses: u64,
    /// Cycles the interference VM actually ran.
    pub interference_cycles: u64,
}

/// Seed of iteration `index`, independent of execution order.
pub fn iteration_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

struct Layout {
    dram: FrameAllocator,
    tables: FrameAllocator,
    spm_start: [u64; 2],
    spm_next: [u64; 2],
    spm_end: [u64; 2],
}

fn side_index(side: Side) -> usize {
    match side {
        Side::Instruction => 0,
        Side::Data => 1,
    }
}

impl Layout {
    fn alloc_backing(&mut self, region: &MemoryRegion, spm_on: bool) -> Result<u64, SetupError> {
        match region.spm.filter(|_| spm_on) {
            Some(side) => {
                let i = side_index(side);
                let base = self.spm_next[i];
                if base + region.size > self.spm_end[i] {
                    return Err(SetupError::SpmOverflow {
                        side,
                        needed: base + region.size - self.spm_start[i],
                        available: self.spm_end[i] - self.spm_start[i],
                    });
                }
                self.spm_next[i] += region.size.next_multiple_of(PAGE_BYTES);
                Ok(base)
            }
            None => {
                let align = region.max_page.base_pages();
                let pages = region.size.div_ceil(PAGE_BYTES);
                let first =
                    self.dram.alloc(align).map_err(|source| SetupError::Map { owner: Owner::Critical, source })?;
                if pages > align {
                    self.dram
                        .alloc(pages - align)
                        .map_err(|source| SetupError::Map { owner: Owner::Critical, source })?;
                }
                Ok(first << addr::PAGE_SHIFT)
            }
        }
    }
}

fn map_err(owner: Owner) -> impl Fn(MapError) -> SetupError {
    move |source| SetupError::Map { owner, source }
}

fn check_mask(owner: Owner, mask: &PartitionMask, partitions: usize) -> Result<(), SetupError> {
    if mask.width() != partitions {
        return Err(SetupError::MaskWidth { owner, expected: partitions, got: mask.width() });
    }
    Ok(())
}

fn check_streams(owner: Owner, streams: &[Stream], regions: &[MemoryRegion]) -> Result<(), SetupError> {
    for s in streams.iter().filter(|s| s.count > 0) {
        let (first, last) = s.span();
        let aligned = first % 8 == 0 && s.stride % 8 == 0;
        if !aligned || !regions.iter().any(|r| r.contains(first, last)) {
            return Err(SetupError::Stream { owner, first, last });
        }
    }
    Ok(())
}

fn build_vm(owner: Owner, config: &VmConfig, layout: &mut Layout, spm_on: bool) -> Result<VmState, SetupError> {
    let err = map_err(owner);
    let mut host = AddressSpace::new(WalkMode::Sv39x4, &mut layout.tables).map_err(&err)?;
    let mut guest_frames = FrameAllocator::new(GUEST_TABLE_GPA, GUEST_TABLE_BYTES);
    let mut guest = AddressSpace::new(WalkMode::Sv39, &mut guest_frames).map_err(&err)?;

    let table_backing = layout.dram.alloc(GUEST_TABLE_BYTES / PAGE_BYTES).map_err(&err)? << addr::PAGE_SHIFT;
    let table_region = Region {
        vaddr: GUEST_TABLE_GPA,
        paddr: table_backing,
        size: GUEST_TABLE_BYTES,
        flags: PteFlags::LEAF_RW,
        max_page: PageSize::Base,
    };
    host.map_region(&table_region, &mut layout.tables).map_err(&err)?;

    let mut gpa_next = GUEST_RAM_GPA;
    for r in &config.regions {
        let gpa = gpa_next.next_multiple_of(r.max_page.bytes());
        gpa_next = gpa + r.size.next_multiple_of(PAGE_BYTES);
        let hpa = layout.alloc_backing(r, spm_on).map_err(|e| match e {
            SetupError::Map { source, .. } => SetupError::Map { owner, source },
            e => e,
        })?;
        let g = Region { vaddr: r.gvaddr, paddr: gpa, size: r.size, flags: r.flags, max_page: r.max_page };
        guest.map_region(&g, &mut guest_frames).map_err(&err)?;
        let h = Region { vaddr: gpa, paddr: hpa, size: r.size, flags: PteFlags::LEAF_RWX, max_page: r.max_page };
        host.map_region(&h, &mut layout.tables).map_err(&err)?;
    }
    check_streams(owner, &config.workload.prime, &config.regions)?;
    check_streams(owner, &config.workload.body, &config.regions)?;
    Ok(VmState { config: config.clone(), guest, host })
}

/// Splits `region` into lock chunks: each is the largest naturally aligned
/// piece that fits the remaining range and lies within one merged leaf.
fn lock_chunks(vm: &VmState, region: &LockRegion) -> Result<Vec<(u64, PageSize, walker::Translation)>, SetupError> {
    let LockRegion { gvaddr, size } = *region;
    if size == 0 || !addr::is_aligned(gvaddr, PAGE_BYTES) || !addr::is_aligned(size, PAGE_BYTES) {
        return Err(SetupError::MisalignedLock { gvaddr, size });
    }
    let mut out = Vec::new();
    let mut va = gvaddr;
    while va < gvaddr + size {
        let w =
            walker::walk_two_stage(&vm.guest, &vm.host, va, &mut |_| 0).map_err(|_| SetupError::UnmappedLock(va))?;
        let chunk = PageSize::ALL
            .into_iter()
            .rev()
            .filter(|s| *s <= w.translation.page_size)
            .find(|s| addr::is_aligned(va, s.bytes()) && gvaddr + size - va >= s.bytes())
            .unwrap_or(PageSize::Base);
        out.push((va, chunk, w.translation));
        va += chunk.bytes();
    }
    Ok(out)
}

/// Leaves offered to lock slots: descending from the top, avoiding leaves
/// the critical VM or the hypervisor may fill into unless their masks
/// cover everything.
fn lock_leaf_order(sys: &MemSys, masks: &[PartitionMask]) -> Vec<usize> {
    let plru = sys.dtlb.plru();
    let mut avoid = 0u64;
    for m in masks {
        if *m != PartitionMask::all(m.width()) {
            avoid |= plru.reachable_leaves(m);
        }
    }
    let leaves = plru.leaf_count();
    let preferred = (0..leaves).rev().filter(|l| avoid & (1 << l) == 0);
    let rest = (0..leaves).rev().filter(|l| avoid & (1 << l) != 0);
    preferred.chain(rest).collect()
}

fn program_locks(
    sys: &mut MemSys,
    vm: &VmState,
    leaf_order: &[usize],
    used: &mut [usize; 2],
    out: &mut Vec<LockAssignment>,
) -> Result<(), SetupError> {
    for region in &vm.config.lock_regions {
        for (va, size, t) in lock_chunks(vm, region)? {
            let pte = walker::PageTableEntry::new(t.translate(va) >> addr::PAGE_SHIFT, t.pte.flags);
            let mut sides = Vec::new();
            if t.pte.flags.contains(PteFlags::X) {
                sides.push(Side::Instruction);
            }
            if t.pte.flags.intersects(PteFlags::R | PteFlags::W) {
                sides.push(Side::Data);
            }
            for side in sides {
                let i = side_index(side);
                let tlb = sys.tlb_mut(side);
                let available = tlb.slots().len().min(leaf_order.len());
                if used[i] >= available {
                    return Err(SetupError::SlotsExhausted { side, needed: used[i] + 1, available });
                }
                let slot = used[i];
                let leaf = leaf_order[slot];
                tlb.set_slot_target(slot, leaf)?;
                tlb.program_lock_slot(
                    slot,
                    LockRegister::Vpn(VpnCsr { vpn: addr::vpn(va), page_size: size, global: false, valid: true }),
                )?;
                tlb.program_lock_slot(slot, LockRegister::Pte(pte))?;
                tlb.program_lock_slot(
                    slot,
                    LockRegister::Id(IdCsr { asid: vm.config.asid, vmid: vm.config.vmid, valid: true }),
                )?;
                used[i] += 1;
                out.push(LockAssignment { side, slot, leaf, gvaddr: va, page_size: size });
            }
        }
    }
    Ok(())
}

/// Builds page tables, applies the SPM split, programs lock slots and sets
/// `CUR_PART` to the critical VM's mask.
pub fn setup_scenario(config: &ScenarioConfig) -> Result<ScenarioState, SetupError> {
    let m = config.mitigations;
    let mut sys = MemSys::new(&config.system, config.seed)?;
    let partitions = config.system.tlb.partitions;
    if config.hypervisor.quantum_cycles == 0 {
        return Err(SetupError::Quantum);
    }
    check_mask(Owner::Hypervisor, &config.hypervisor.partitions, partitions)?;
    check_mask(Owner::Critical, &config.critical.partitions, partitions)?;
    if let Some(vm) = &config.interference {
        check_mask(Owner::Interference, &vm.partitions, partitions)?;
        if vm.vmid == config.critical.vmid {
            return Err(SetupError::Vmid(vm.vmid));
        }
    }
    for vm in core::iter::once(&config.critical).chain(&config.interference) {
        if vm.vmid == 0 {
            return Err(SetupError::Vmid(0));
        }
    }

    let mut spm_next = [0; 2];
    let mut spm_end = [0; 2];
    if m.spm {
        for side in [Side::Instruction, Side::Data] {
            let ways = sys.cache(side).geometry().ways();
            let spm_ways = ways * config.spm_percent as usize / 100;
            if spm_ways >= ways {
                return Err(SetupError::SpmPercent(config.spm_percent));
            }
            sys.split_cache(side, spm_ways)?;
            let (base, size) = sys.spm_range(side);
            spm_next[side_index(side)] = base;
            spm_end[side_index(side)] = base + size;
        }
    }

    let dram = config.system.dram_base;
    let mut layout = Layout {
        tables: FrameAllocator::new(dram, HOST_TABLE_BYTES),
        dram: FrameAllocator::new(dram + HOST_TABLE_BYTES, config.system.dram_size - HOST_TABLE_BYTES),
        spm_start: spm_next,
        spm_next,
        spm_end,
    };

    let mut hyp_space = AddressSpace::new(WalkMode::Sv39, &mut layout.tables).map_err(map_err(Owner::Hypervisor))?;
    for r in &config.hypervisor.regions {
        let hpa = layout.alloc_backing(&MemoryRegion { spm: None, ..*r }, false)?;
        let region = Region { vaddr: r.gvaddr, paddr: hpa, size: r.size, flags: r.flags, max_page: r.max_page };
        hyp_space.map_region(&region, &mut layout.tables).map_err(map_err(Owner::Hypervisor))?;
    }
    check_streams(Owner::Hypervisor, &config.hypervisor.footprint, &config.hypervisor.regions)?;

    let mask = |mask: &PartitionMask| if m.partitioning { *mask } else { PartitionMask::all(partitions) };
    let mut critical_cfg = config.critical.clone();
    critical_cfg.partitions = mask(&critical_cfg.partitions);
    let critical = build_vm(Owner::Critical, &critical_cfg, &mut layout, m.spm)?;
    let interference = match &config.interference {
        Some(vm) => {
            let mut cfg = vm.clone();
            cfg.partitions = mask(&cfg.partitions);
            // interference memory is never placed in SPM
            for r in &mut cfg.regions {
                r.spm = None;
            }
            Some(build_vm(Owner::Interference, &cfg, &mut layout, false)?)
        }
        None => None,
    };
    let hyp_mask = mask(&config.hypervisor.partitions);

    let mut locks = Vec::new();
    if m.locking {
        let order = lock_leaf_order(&sys, &[critical.config.partitions, hyp_mask]);
        let mut used = [0usize; 2];
        program_locks(&mut sys, &critical, &order, &mut used, &mut locks)?;
        if let Some(vm) = &interference {
            program_locks(&mut sys, vm, &order, &mut used, &mut locks)?;
        }
    }

    sys.write_cur_part(critical.config.partitions)?;
    sys.write_last_part(critical.config.partitions)?;
    sys.reset_stats();

    Ok(ScenarioState { config: config.clone(), critical, interference, hyp_space, hyp_mask, locks, boot: sys })
}

/// Observes every access performed by a [`Machine`].
pub trait AccessObserver {
    fn on_access(&mut self, owner: Owner, vaddr: u64, kind: AccessKind, outcome: &MemAccessOutcome);
}

impl AccessObserver for () {
    fn on_access(&mut self, _: Owner, _: u64, _: AccessKind, _: &MemAccessOutcome) {}
}

impl<F: FnMut(Owner, u64, AccessKind, &MemAccessOutcome)> AccessObserver for F {
    fn on_access(&mut self, owner: Owner, vaddr: u64, kind: AccessKind, outcome: &MemAccessOutcome) {
        self(owner, vaddr, kind, outcome)
    }
}

/// The running system of one iteration.
pub struct Machine<'s, O = ()> {
    pub state: &'s ScenarioState,
    pub sys: MemSys,
    pub current: Owner,
    /// Cycles charged so far, across all owners.
    pub clock: u64,
    rng: ChaCha8Rng,
    observer: O,
}

impl<'s> Machine<'s, ()> {
    pub fn new(state: &'s ScenarioState, iteration: u64) -> Self {
        Machine::with_observer(state, iteration, ())
    }
}

impl<'s, O: AccessObserver> Machine<'s, O> {
    pub fn with_observer(state: &'s ScenarioState, iteration: u64, observer: O) -> Self {
        let mut seeds = ChaCha8Rng::seed_from_u64(iteration_seed(state.config.seed, iteration));
        let mut sys = state.boot.clone();
        sys.memory.reseed(seeds.next_u64());
        let rng = ChaCha8Rng::seed_from_u64(seeds.next_u64());
        Self { state, sys, current: Owner::Critical, clock: 0, rng, observer }
    }

    pub fn into_observer(self) -> O {
        self.observer
    }

    fn vm(&self, owner: Owner) -> Option<&'s VmState> {
        match owner {
            Owner::Critical => Some(&self.state.critical),
            Owner::Interference => self.state.interference.as_ref(),
            Owner::Hypervisor => None,
        }
    }

    pub fn mask_of(&self, owner: Owner) -> PartitionMask {
        self.vm(owner).map_or(self.state.hyp_mask, |vm| vm.config.partitions)
    }

    fn context(&self, owner: Owner) -> TranslationContext<'s> {
        match self.vm(owner) {
            Some(vm) => vm.context(),
            None => TranslationContext { asid: 0, vmid: 0, stages: Stages::Single(&self.state.hyp_space) },
        }
    }

    /// Runs `streams` as `owner` until exhausted or until `budget` cycles
    /// have been spent. Returns the cycles spent.
    pub fn run_phase(&mut self, owner: Owner, streams: &[Stream], budget: Option<u64>) -> Result<u64, RunError> {
        let ctx = self.context(owner);
        let mut cursor = PhaseCursor::new(streams);
        let mut spent = 0u64;
        while budget.is_none_or(|b| spent < b) {
            let Some(step) = cursor.next_step(&mut self.rng) else { break };
            let out = self.sys.virtual_access(step.vaddr, step.kind, step.vaddr, &ctx).map_err(|fault| RunError {
                owner,
                vaddr: step.vaddr,
                fault,
            })?;
            self.observer.on_access(owner, step.vaddr, step.kind, &out);
            spent += out.total_cycles + step.compute_cycles;
        }
        self.clock += spent;
        Ok(spent)
    }

    /// Trap into the hypervisor. Returns the cycles charged.
    pub fn trap_enter(&mut self) -> Result<u64, RunError> {
        self.sys.write_cur_part(self.state.hyp_mask).expect("mask width checked at setup");
        let entry = self.sys.latency().trap_entry_cycles;
        self.clock += entry;
        let footprint = &self.state.config.hypervisor.footprint;
        Ok(entry + self.run_phase(Owner::Hypervisor, footprint, None)?)
    }

    /// Leave the hypervisor towards `next`. Returns the cycles charged.
    pub fn trap_exit(&mut self, next: Owner) -> u64 {
        let lat = *self.sys.latency();
        let mut cycles = lat.trap_exit_cycles;
        if next != self.current {
            self.sys.write_last_part(self.mask_of(next)).expect("mask width checked at setup");
            cycles += lat.vm_switch_cycles;
        }
        self.sys.write_restore_last_part(1);
        self.current = next;
        self.clock += cycles;
        cycles
    }

    fn miss_counters(&self) -> (u64, u64) {
        let s = &self.sys;
        (s.itlb.stats().misses + s.dtlb.stats().misses, s.icache.stats().misses + s.dcache.stats().misses)
    }

    /// Prime, deschedule, interfere, reschedule, measure.
    pub fn run_iteration(&mut self, iteration: u64) -> Result<IterationRecord, RunError> {
        let state = self.state;
        let critical = &state.critical.config.workload;
        self.run_phase(Owner::Critical, &critical.prime, None)?;

        self.trap_enter()?;
        let mut interference_cycles = 0;
        if let Some(vm) = &state.interference {
            self.trap_exit(Owner::Interference);
            let quantum = state.config.hypervisor.quantum_cycles;
            interference_cycles = self.run_phase(Owner::Interference, &vm.config.workload.body, Some(quantum))?;
            self.trap_enter()?;
        }
        self.trap_exit(Owner::Critical);

        let (tlb0, cache0) = self.miss_counters();
        let cycles = self.run_phase(Owner::Critical, &critical.body, None)?;
        let (tlb1, cache1) = self.miss_counters();
        Ok(IterationRecord {
            iteration,
            cycles,
            tlb_misses: tlb1 - tlb0,
            cache_misses: cache1 - cache0,
            interference_cycles,
        })
    }
}

impl ScenarioState {
    pub fn run_iteration(&self, iteration: u64) -> Result<IterationRecord, RunError> {
        Machine::new(self, iteration).run_iteration(iteration)
    }

    /// Runs iterations `0..iterations` in order.
    pub fn run(&self, iterations: u64) -> Result<Vec<IterationRecord>, RunError> {
        (0..iterations).map(|i| self.run_iteration(i)).collect()
    }

    /// Lock slots consumed on `side`.
    pub fn slots_used(&self, side: Side) -> usize {
        self.locks.iter().filter(|l| l.side == side).count()
    }
}
