//! Set-associative L1 cache with ways that can be turned into scratchpad.
//!
//! Write-back, write-allocate, one tree-PLRU per set. A way in SPM mode has
//! no valid tags and is locked in every set's tree, so cached traffic can
//! neither hit in nor evict it. The SPM window spans the whole data array;
//! way `w` occupies `[base + w * way_bytes, base + (w + 1) * way_bytes)` and
//! only ways currently in SPM mode answer. Requests that land on a way still
//! in cache mode complete in `spm_cycles` with writes dropped and reads
//! returning zero.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::CacheError;
use crate::replacement::{PartitionMask, PlruTree};

const WORD_BYTES: u64 = 8;

/// Main memory behind the caches.
pub trait MemoryBackend {
    fn contains(&self, paddr: u64) -> bool;
    fn read_word(&self, paddr: u64) -> u64;
    fn write_word(&mut self, paddr: u64, value: u64);
    /// Latency of one line transfer.
    fn access_cycles(&mut self) -> u64;
}

/// Sparse word-addressed DRAM with a fixed latency. Unwritten words read 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlatMemory {
    base: u64,
    size: u64,
    cycles: u64,
    words: BTreeMap<u64, u64>,
}

impl FlatMemory {
    pub fn new(base: u64, size: u64, cycles: u64) -> Self {
        Self { base, size, cycles, words: BTreeMap::new() }
    }

    pub fn base(&self) -> u64 {
        self.base
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    pub fn cycles(&self) -> u64 {
        self.cycles
    }

    /// Non-zero words, ascending by address.
    pub fn words(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.words.iter().map(|(a, v)| (*a, *v)).filter(|(_, v)| *v != 0)
    }
}

impl MemoryBackend for FlatMemory {
    fn contains(&self, paddr: u64) -> bool {
        paddr >= self.base && paddr - self.base < self.size
    }

    fn read_word(&self, paddr: u64) -> u64 {
        self.words.get(&paddr).copied().unwrap_or(0)
    }

    fn write_word(&mut self, paddr: u64, value: u64) {
        if value == 0 {
            self.words.remove(&paddr);
        } else {
            self.words.insert(paddr, value);
        }
    }

    fn access_cycles(&mut self) -> u64 {
        self.cycles
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CacheGeometry {
    ways: usize,
    sets: usize,
    line_bytes: usize,
}

impl CacheGeometry {
    pub fn new(ways: usize, sets: usize, line_bytes: usize) -> Result<Self, CacheError> {
        if !ways.is_power_of_two() || !(2..=64).contains(&ways) {
            return Err(CacheError::Geometry("ways must be a power of two in 2..=64"));
        }
        if !sets.is_power_of_two() {
            return Err(CacheError::Geometry("sets must be a power of two"));
        }
        if !line_bytes.is_power_of_two() || line_bytes < WORD_BYTES as usize {
            return Err(CacheError::Geometry("line size must be a power of two of at least 8 bytes"));
        }
        Ok(Self { ways, sets, line_bytes })
    }

    /// Geometry from a capacity in bytes.
    pub fn with_capacity(total_bytes: usize, ways: usize, line_bytes: usize) -> Result<Self, CacheError> {
        if ways == 0 || line_bytes == 0 || !total_bytes.is_multiple_of(ways * line_bytes) {
            return Err(CacheError::Geometry("capacity is not ways x sets x line size"));
        }
        Self::new(ways, total_bytes / (ways * line_bytes), line_bytes)
    }

    pub fn ways(&self) -> usize {
        self.ways
    }

    pub fn sets(&self) -> usize {
        self.sets
    }

    pub fn line_bytes(&self) -> usize {
        self.line_bytes
    }

    pub fn way_bytes(&self) -> u64 {
        (self.sets * self.line_bytes) as u64
    }

    pub fn total_bytes(&self) -> u64 {
        self.way_bytes() * self.ways as u64
    }

    fn words_per_line(&self) -> usize {
        self.line_bytes / WORD_BYTES as usize
    }

    /// (set, tag) of a cacheable physical address.
    pub fn split(&self, paddr: u64) -> (usize, u64) {
        let line = paddr / self.line_bytes as u64;
        ((line % self.sets as u64) as usize, line / self.sets as u64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WayMode {
    Cache,
    Spm,
}

/// Physical window through which SPM-mode ways are addressed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SpmWindow {
    base: u64,
    size: u64,
}

/// Location of an address inside the SPM window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SpmSlot {
    pub way: usize,
    pub set: usize,
    pub word: usize,
}

impl SpmWindow {
    pub fn new(base: u64, geometry: &CacheGeometry) -> Result<Self, CacheError> {
        let size = geometry.total_bytes();
        if !base.is_multiple_of(size) {
            return Err(CacheError::WindowAlignment(base));
        }
        Ok(Self { base, size })
    }

    pub fn base(&self) -> u64 {
        self.base
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    pub fn contains(&self, paddr: u64) -> bool {
        paddr >= self.base && paddr - self.base < self.size
    }

    /// Base address of way `way` inside the window.
    pub fn way_base(&self, geometry: &CacheGeometry, way: usize) -> u64 {
        self.base + way as u64 * geometry.way_bytes()
    }

    pub fn decode(&self, geometry: &CacheGeometry, paddr: u64) -> Option<SpmSlot> {
        if !self.contains(paddr) {
            return None;
        }
        let off = paddr - self.base;
        let in_way = off % geometry.way_bytes();
        Some(SpmSlot {
            way: (off / geometry.way_bytes()) as usize,
            set: (in_way / geometry.line_bytes as u64) as usize,
            word: ((in_way % geometry.line_bytes as u64) / WORD_BYTES) as usize,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AccessKind {
    Read,
    Write,
    Ifetch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CacheEvent {
    Hit,
    Miss,
    Spm,
    /// SPM window access to a way still in cache mode.
    SpmMisconfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AccessData {
    Value(u64),
    Written,
    /// Zero returned for a read from a misconfigured SPM way.
    Dummy,
    /// Write to a misconfigured SPM way, discarded.
    Dropped,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CacheAccess {
    pub latency: u64,
    pub data: AccessData,
    pub event: CacheEvent,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
    pub writebacks: u64,
    pub spm_accesses: u64,
    pub spm_misconfig: u64,
    /// Misses with no replaceable way; served from memory uncached.
    pub fill_drops: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct LineState {
    pub tag: u64,
    pub valid: bool,
    pub dirty: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cache {
    geometry: CacheGeometry,
    window: SpmWindow,
    hit_cycles: u64,
    spm_cycles: u64,
    modes: Vec<WayMode>,
    /// Indexed `set * ways + way`.
    lines: Vec<LineState>,
    data: Vec<u64>,
    trees: Vec<PlruTree>,
    stats: CacheStats,
}

impl Cache {
    pub fn new(geometry: CacheGeometry, spm_base: u64, hit_cycles: u64, spm_cycles: u64) -> Result<Self, CacheError> {
        let window = SpmWindow::new(spm_base, &geometry)?;
        let n = geometry.sets * geometry.ways;
        Ok(Self {
            geometry,
            window,
            hit_cycles,
            spm_cycles,
            modes: vec![WayMode::Cache; geometry.ways],
            lines: vec![LineState::default(); n],
            data: vec![0; n * geometry.words_per_line()],
            trees: vec![PlruTree::new(geometry.ways, 1)?; geometry.sets],
            stats: CacheStats::default(),
        })
    }

    pub fn geometry(&self) -> &CacheGeometry {
        &self.geometry
    }

    pub fn window(&self) -> &SpmWindow {
        &self.window
    }

    pub fn stats(&self) -> &CacheStats {
        &self.stats
    }

    pub fn reset_stats(&mut self) {
        self.stats = CacheStats::default();
    }

    pub fn way_mode(&self, way: usize) -> WayMode {
        self.modes[way]
    }

    pub fn spm_ways(&self) -> usize {
        self.modes.iter().filter(|m| **m == WayMode::Spm).count()
    }

    pub fn line(&self, set: usize, way: usize) -> LineState {
        self.lines[set * self.geometry.ways + way]
    }

    pub fn line_data(&self, set: usize, way: usize) -> &[u64] {
        let wpl = self.geometry.words_per_line();
        let i = (set * self.geometry.ways + way) * wpl;
        &self.data[i..i + wpl]
    }

    pub fn tree(&self, set: usize) -> &PlruTree {
        &self.trees[set]
    }

    /// Contents of an SPM-mode way, in window order.
    pub fn spm_contents(&self, way: usize) -> Vec<u64> {
        (0..self.geometry.sets).flat_map(|s| self.line_data(s, way).iter().copied()).collect()
    }

    fn index(&self, set: usize, way: usize) -> usize {
        set * self.geometry.ways + way
    }

    fn line_base(&self, tag: u64, set: usize) -> u64 {
        (tag * self.geometry.sets as u64 + set as u64) * self.geometry.line_bytes as u64
    }

    fn write_back<M: MemoryBackend>(&mut self, set: usize, way: usize, mem: &mut M) {
        let i = self.index(set, way);
        let base = self.line_base(self.lines[i].tag, set);
        let wpl = self.geometry.words_per_line();
        for w in 0..wpl {
            mem.write_word(base + w as u64 * WORD_BYTES, self.data[i * wpl + w]);
        }
        self.stats.writebacks += 1;
    }

    /// Switches `way` between cache and SPM mode.
    pub fn configure_way<M: MemoryBackend>(
        &mut self,
        way: usize,
        mode: WayMode,
        mem: &mut M,
    ) -> Result<(), CacheError> {
        if way >= self.geometry.ways {
            return Err(crate::error::UsageError::IndexOutOfRange { index: way, len: self.geometry.ways }.into());
        }
        if self.modes[way] == mode {
            return Ok(());
        }
        let wpl = self.geometry.words_per_line();
        for set in 0..self.geometry.sets {
            let i = self.index(set, way);
            if mode == WayMode::Spm && self.lines[i].valid && self.lines[i].dirty {
                self.write_back(set, way, mem);
            }
            self.lines[i] = LineState::default();
            self.data[i * wpl..(i + 1) * wpl].fill(0);
            self.trees[set].set_lock(way, mode == WayMode::Spm)?;
        }
        self.modes[way] = mode;
        Ok(())
    }

    /// Writes back every dirty line and leaves it clean.
    pub fn clean_all<M: MemoryBackend>(&mut self, mem: &mut M) {
        for set in 0..self.geometry.sets {
            for way in 0..self.geometry.ways {
                let i = self.index(set, way);
                if self.lines[i].valid && self.lines[i].dirty {
                    self.write_back(set, way, mem);
                    self.lines[i].dirty = false;
                }
            }
        }
    }

    /// One 8-byte access. `value` is ignored for reads and fetches.
    pub fn access<M: MemoryBackend>(
        &mut self,
        paddr: u64,
        kind: AccessKind,
        value: u64,
        mem: &mut M,
    ) -> Result<CacheAccess, CacheError> {
        if !paddr.is_multiple_of(WORD_BYTES) {
            return Err(CacheError::Misaligned(paddr));
        }
        if let Some(slot) = self.window.decode(&self.geometry, paddr) {
            return Ok(self.spm_access(slot, kind, value));
        }
        if !mem.contains(paddr) {
            return Err(CacheError::Unmapped(paddr));
        }
        let (set, tag) = self.geometry.split(paddr);
        let word = ((paddr % self.geometry.line_bytes as u64) / WORD_BYTES) as usize;
        let wpl = self.geometry.words_per_line();
        let ways = self.geometry.ways;
        let hit = (0..ways).find(|&w| {
            let l = self.lines[set * ways + w];
            l.valid && l.tag == tag
        });
        let (way, latency, event) = match hit {
            Some(w) => {
                self.stats.hits += 1;
                (w, self.hit_cycles, CacheEvent::Hit)
            }
            None => {
                self.stats.misses += 1;
                let latency = mem.access_cycles();
                let victim = self.trees[set].select_victim(&PartitionMask::all(1))?;
                let Some(w) = victim else {
                    self.stats.fill_drops += 1;
                    let data = match kind {
                        AccessKind::Write => {
                            mem.write_word(paddr, value);
                            AccessData::Written
                        }
                        _ => AccessData::Value(mem.read_word(paddr)),
                    };
                    return Ok(CacheAccess { latency, data, event: CacheEvent::Miss });
                };
                let i = self.index(set, w);
                if self.lines[i].valid {
                    self.stats.evictions += 1;
                    if self.lines[i].dirty {
                        self.write_back(set, w, mem);
                    }
                }
                let base = self.line_base(tag, set);
                for k in 0..wpl {
                    self.data[i * wpl + k] = mem.read_word(base + k as u64 * WORD_BYTES);
                }
                self.lines[i] = LineState { tag, valid: true, dirty: false };
                (w, latency, CacheEvent::Miss)
            }
        };
        self.trees[set].touch(way)?;
        let i = self.index(set, way);
        let data = match kind {
            AccessKind::Write => {
                self.data[i * wpl + word] = value;
                self.lines[i].dirty = true;
                AccessData::Written
            }
            _ => AccessData::Value(self.data[i * wpl + word]),
        };
        Ok(CacheAccess { latency, data, event })
    }

    fn spm_access(&mut self, slot: SpmSlot, kind: AccessKind, value: u64) -> CacheAccess {
        if self.modes[slot.way] != WayMode::Spm {
            self.stats.spm_misconfig += 1;
            let data = match kind {
                AccessKind::Write => AccessData::Dropped,
                _ => AccessData::Dummy,
            };
            return CacheAccess { latency: self.spm_cycles, data, event: CacheEvent::SpmMisconfig };
        }
        self.stats.spm_accesses += 1;
        let i = self.index(slot.set, slot.way) * self.geometry.words_per_line() + slot.word;
        let data = match kind {
            AccessKind::Write => {
                self.data[i] = value;
                AccessData::Written
            }
            _ => AccessData::Value(self.data[i]),
        };
        CacheAccess { latency: self.spm_cycles, data, event: CacheEvent::Spm }
    }
}
