//! Per-access latency pipeline: TLB lookup, page-table walk on a miss (PTE
//! fetches priced by the data cache), TLB fill under `CUR_PART`, then the
//! physical access through the instruction or data cache / SPM.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::addr::PageSize;
use crate::cache::{AccessData, AccessKind, Cache, CacheEvent, CacheGeometry, FlatMemory, MemoryBackend, WayMode};
use crate::error::{CacheError, TlbError};
use crate::replacement::PartitionMask;
use crate::tlb::{Fill, HitSource, Lookup, Tlb, TlbConfig, TlbEntry};
use crate::walker::{self, AddressSpace, WalkFault};

/// Uniform jitter added to every main-memory transfer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Jitter {
    #[default]
    None,
    /// `memory_cycles` plus a uniform integer in `[-bound, +bound]`.
    Uniform { bound: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LatencyConfig {
    pub tlb_hit_cycles: u64,
    pub cache_hit_cycles: u64,
    pub spm_cycles: u64,
    pub memory_cycles: u64,
    pub trap_entry_cycles: u64,
    pub trap_exit_cycles: u64,
    pub vm_switch_cycles: u64,
    pub jitter: Jitter,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        Self {
            tlb_hit_cycles: 1,
            cache_hit_cycles: 1,
            spm_cycles: 1,
            memory_cycles: 40,
            trap_entry_cycles: 50,
            trap_exit_cycles: 50,
            vm_switch_cycles: 400,
            jitter: Jitter::None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("jitter bound {bound} must be below memory_cycles {memory}")]
    JitterTooLarge { bound: u64, memory: u64 },
    #[error(transparent)]
    Tlb(#[from] TlbError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("SPM ways {spm} must be fewer than the {ways} cache ways")]
    SpmWays { spm: usize, ways: usize },
}

impl LatencyConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Jitter::Uniform { bound } = self.jitter {
            if bound >= self.memory_cycles {
                return Err(ConfigError::JitterTooLarge { bound, memory: self.memory_cycles });
            }
        }
        Ok(())
    }
}

/// DRAM with optional seeded latency jitter.
#[derive(Clone, Debug)]
pub struct MainMemory {
    flat: FlatMemory,
    jitter: Jitter,
    rng: ChaCha8Rng,
}

impl MainMemory {
    pub fn new(base: u64, size: u64, cycles: u64, jitter: Jitter, seed: u64) -> Self {
        Self { flat: FlatMemory::new(base, size, cycles), jitter, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn flat(&self) -> &FlatMemory {
        &self.flat
    }
}

impl MemoryBackend for MainMemory {
    fn contains(&self, paddr: u64) -> bool {
        self.flat.contains(paddr)
    }

    fn read_word(&self, paddr: u64) -> u64 {
        self.flat.read_word(paddr)
    }

    fn write_word(&mut self, paddr: u64, value: u64) {
        self.flat.write_word(paddr, value)
    }

    fn access_cycles(&mut self) -> u64 {
        let base = self.flat.cycles();
        match self.jitter {
            Jitter::None => base,
            Jitter::Uniform { bound } => base - bound + self.rng.random_range(0..=2 * bound),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MemSysConfig {
    pub latency: LatencyConfig,
    pub tlb: TlbConfig,
    pub icache: CacheGeometry,
    pub dcache: CacheGeometry,
    pub ispm_base: u64,
    pub dspm_base: u64,
    pub dram_base: u64,
    pub dram_size: u64,
}

impl Default for MemSysConfig {
    fn default() -> Self {
        Self {
            latency: LatencyConfig::default(),
            tlb: TlbConfig::default(),
            icache: CacheGeometry::with_capacity(16 * 1024, 8, 16).expect("valid geometry"),
            dcache: CacheGeometry::with_capacity(32 * 1024, 8, 16).expect("valid geometry"),
            ispm_base: 0x1000_0000,
            dspm_base: 0x1100_0000,
            dram_base: 0x8000_0000,
            dram_size: 0x4000_0000,
        }
    }
}

/// Which TLB / cache pair serves an access.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Instruction,
    Data,
}

impl Side {
    pub fn of(kind: AccessKind) -> Self {
        match kind {
            AccessKind::Ifetch => Side::Instruction,
            _ => Side::Data,
        }
    }
}

/// Translation stages of the running context.
#[derive(Clone, Copy, Debug)]
pub enum Stages<'a> {
    Single(&'a AddressSpace),
    Two { guest: &'a AddressSpace, host: &'a AddressSpace },
}

/// Address-space tags plus page tables of the running context.
#[derive(Clone, Copy, Debug)]
pub struct TranslationContext<'a> {
    pub asid: u16,
    pub vmid: u16,
    pub stages: Stages<'a>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TlbEvent {
    Hit,
    LockHit,
    Miss,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Breakdown {
    pub translation: u64,
    pub walk: u64,
    pub cache: u64,
}

impl Breakdown {
    pub fn total(&self) -> u64 {
        self.translation + self.walk + self.cache
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MemAccessOutcome {
    pub total_cycles: u64,
    pub breakdown: Breakdown,
    pub tlb: TlbEvent,
    pub walk_fetches: usize,
    /// PTE fetches that missed in the data cache.
    pub walk_cache_misses: usize,
    pub fill: Option<Fill>,
    pub cache_event: CacheEvent,
    pub paddr: u64,
    pub data: AccessData,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum FaultCause {
    #[error("address {0:#x} is not canonical")]
    NonCanonical(u64),
    #[error("{:?}-stage page fault ({:?}) at {:#x}", .0.stage, .0.kind, .0.addr)]
    Walk(WalkFault),
    #[error(transparent)]
    Cache(CacheError),
}

/// A failed access together with the cycles it consumed before failing.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{cause} after {} cycles", breakdown.total())]
pub struct AccessFault {
    pub cause: FaultCause,
    pub breakdown: Breakdown,
}

#[derive(Clone, Debug)]
pub struct MemSys {
    pub itlb: Tlb,
    pub dtlb: Tlb,
    pub icache: Cache,
    pub dcache: Cache,
    pub memory: MainMemory,
    latency: LatencyConfig,
}

impl MemSys {
    pub fn new(config: &MemSysConfig, seed: u64) -> Result<Self, ConfigError> {
        config.latency.validate()?;
        let lat = &config.latency;
        let tlb = TlbConfig { hit_cycles: lat.tlb_hit_cycles, ..config.tlb };
        Ok(Self {
            itlb: Tlb::new(tlb)?,
            dtlb: Tlb::new(tlb)?,
            icache: Cache::new(config.icache, config.ispm_base, lat.cache_hit_cycles, lat.spm_cycles)?,
            dcache: Cache::new(config.dcache, config.dspm_base, lat.cache_hit_cycles, lat.spm_cycles)?,
            memory: MainMemory::new(config.dram_base, config.dram_size, lat.memory_cycles, lat.jitter, seed),
            latency: *lat,
        })
    }

    pub fn latency(&self) -> &LatencyConfig {
        &self.latency
    }

    pub fn tlb(&self, side: Side) -> &Tlb {
        match side {
            Side::Instruction => &self.itlb,
            Side::Data => &self.dtlb,
        }
    }

    pub fn tlb_mut(&mut self, side: Side) -> &mut Tlb {
        match side {
            Side::Instruction => &mut self.itlb,
            Side::Data => &mut self.dtlb,
        }
    }

    pub fn cache(&self, side: Side) -> &Cache {
        match side {
            Side::Instruction => &self.icache,
            Side::Data => &self.dcache,
        }
    }

    /// Puts the top `spm_ways` ways of a cache into SPM mode and the rest
    /// into cache mode.
    pub fn split_cache(&mut self, side: Side, spm_ways: usize) -> Result<(), ConfigError> {
        let cache = match side {
            Side::Instruction => &mut self.icache,
            Side::Data => &mut self.dcache,
        };
        let ways = cache.geometry().ways();
        if spm_ways >= ways {
            return Err(ConfigError::SpmWays { spm: spm_ways, ways });
        }
        for w in 0..ways {
            let mode = if w >= ways - spm_ways { WayMode::Spm } else { WayMode::Cache };
            cache.configure_way(w, mode, &mut self.memory)?;
        }
        Ok(())
    }

    /// First SPM-window address backed by an SPM-mode way under
    /// [`MemSys::split_cache`], and the usable size.
    pub fn spm_range(&self, side: Side) -> (u64, u64) {
        let cache = self.cache(side);
        let g = cache.geometry();
        let spm = cache.spm_ways();
        (cache.window().way_base(g, g.ways() - spm), spm as u64 * g.way_bytes())
    }

    /// `CUR_PART` write, applied to both TLBs.
    pub fn write_cur_part(&mut self, value: PartitionMask) -> Result<(), TlbError> {
        self.itlb.write_cur_part(value)?;
        self.dtlb.write_cur_part(value)
    }

    pub fn write_last_part(&mut self, value: PartitionMask) -> Result<(), TlbError> {
        self.itlb.write_last_part(value)?;
        self.dtlb.write_last_part(value)
    }

    pub fn write_restore_last_part(&mut self, value: u64) {
        self.itlb.write_restore_last_part(value);
        self.dtlb.write_restore_last_part(value);
    }

    pub fn reset_stats(&mut self) {
        self.itlb.reset_stats();
        self.dtlb.reset_stats();
        self.icache.reset_stats();
        self.dcache.reset_stats();
    }

    /// Translates and performs one 8-byte access for `ctx`.
    pub fn virtual_access(
        &mut self,
        vaddr: u64,
        kind: AccessKind,
        value: u64,
        ctx: &TranslationContext<'_>,
    ) -> Result<MemAccessOutcome, AccessFault> {
        let side = Side::of(kind);
        let mut breakdown = Breakdown::default();
        let fault = |cause, breakdown| AccessFault { cause, breakdown };

        let lookup = self.tlb_mut(side).lookup(vaddr, ctx.asid, ctx.vmid);
        let (paddr, tlb_event, walk_fetches, walk_cache_misses, fill) = match lookup {
            Lookup::Fault => return Err(fault(FaultCause::NonCanonical(vaddr), breakdown)),
            Lookup::Hit(hit) => {
                breakdown.translation = hit.cycles;
                let event = match hit.source {
                    HitSource::Entry(_) => TlbEvent::Hit,
                    HitSource::LockSlot(_) => TlbEvent::LockHit,
                };
                (hit.paddr, event, 0, 0, None)
            }
            Lookup::Miss => {
                breakdown.translation = self.latency.tlb_hit_cycles;
                let dcache = &mut self.dcache;
                let memory = &mut self.memory;
                let mut cache_error = None;
                let mut misses = 0usize;
                let mut fetch = |pa: u64| match dcache.access(pa, AccessKind::Read, 0, memory) {
                    Ok(a) => {
                        if a.event == CacheEvent::Miss {
                            misses += 1;
                        }
                        a.latency
                    }
                    Err(e) => {
                        cache_error.get_or_insert(e);
                        0
                    }
                };
                let walked = match ctx.stages {
                    Stages::Single(space) => walker::walk_single(space, vaddr, &mut fetch),
                    Stages::Two { guest, host } => walker::walk_two_stage(guest, host, vaddr, &mut fetch),
                };
                if let Some(e) = cache_error {
                    return Err(fault(FaultCause::Cache(e), breakdown));
                }
                match walked {
                    Ok(w) => {
                        breakdown.walk = w.cycles;
                        let entry = TlbEntry::from_translation(&w.translation, ctx.asid, ctx.vmid);
                        let fill = self.tlb_mut(side).fill(entry);
                        (w.translation.paddr, TlbEvent::Miss, w.accesses.len(), misses, Some(fill))
                    }
                    Err(f) => {
                        breakdown.walk = f.cycles;
                        return Err(fault(FaultCause::Walk(f), breakdown));
                    }
                }
            }
        };

        let cache = match side {
            Side::Instruction => &mut self.icache,
            Side::Data => &mut self.dcache,
        };
        let access =
            cache.access(paddr, kind, value, &mut self.memory).map_err(|e| fault(FaultCause::Cache(e), breakdown))?;
        breakdown.cache = access.latency;
        Ok(MemAccessOutcome {
            total_cycles: breakdown.total(),
            breakdown,
            tlb: tlb_event,
            walk_fetches,
            walk_cache_misses,
            fill,
            cache_event: access.event,
            paddr,
            data: access.data,
        })
    }
}

/// Largest page size that `addr` is aligned to, capped at `max`.
pub fn natural_page_size(addr: u64, max: PageSize) -> PageSize {
    PageSize::ALL
        .into_iter()
        .rev()
        .filter(|s| *s <= max)
        .find(|s| addr.is_multiple_of(s.bytes()))
        .unwrap_or(PageSize::Base)
}
