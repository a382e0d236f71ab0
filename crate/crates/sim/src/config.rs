//! Experiment configuration file.
//!
//! ```toml
//! description = "..."
//! seed = 1
//! iterations = 1000
//!
//! [latency]            # cycles; jitter = uniform +-bound on memory (0 = none)
//! [tlb]                # entries, partitions, lock_slots
//! [cache]              # icache/dcache geometry, SPM window bases, SPM split
//! [hypervisor]         # partitions, quantum, footprint regions and streams
//! [vm.<name>]          # tags, partitions, regions, lock regions, workload
//! [scenario.<name>]    # critical VM, optional interference VM, mitigations
//! ```
//!
//! Unknown keys are rejected. Every error carries the dotted path of the
//! offending key.

use std::collections::BTreeMap;
use std::fmt;

use serde::Deserialize;
use vmrt_core::hypervisor::{HypervisorConfig, LockRegion, MemoryRegion, ScenarioConfig, VmConfig};
use vmrt_core::memsys::{Jitter, Side};
use vmrt_core::{
    AccessKind, CacheGeometry, LatencyConfig, MemSysConfig, Mitigations, Order, PageSize, PartitionMask, PteFlags,
    Stream, TlbConfig, Workload,
};

/// A configuration problem located at `path`.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn at(path: impl fmt::Display, message: impl fmt::Display) -> Self {
        Self { path: path.to_string(), message: message.to_string() }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub description: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_iterations")]
    pub iterations: u64,
    #[serde(default)]
    pub latency: LatencySection,
    #[serde(default)]
    pub tlb: TlbSection,
    #[serde(default)]
    pub cache: CacheSection,
    pub hypervisor: Option<HypervisorSection>,
    #[serde(default)]
    pub vm: BTreeMap<String, VmSection>,
    #[serde(default)]
    pub scenario: BTreeMap<String, ScenarioSection>,
}

fn default_seed() -> u64 {
    1
}

fn default_iterations() -> u64 {
    10_000
}

#[derive(Clone, Debug, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields, default)]
pub struct LatencySection {
    pub tlb_hit_cycles: u64,
    pub cache_hit_cycles: u64,
    pub spm_cycles: u64,
    pub memory_cycles: u64,
    pub trap_entry_cycles: u64,
    pub trap_exit_cycles: u64,
    pub vm_switch_cycles: u64,
    /// Bound of the uniform jitter on memory transfers; 0 disables it.
    pub jitter: u64,
}

impl Default for LatencySection {
    fn default() -> Self {
        let d = LatencyConfig::default();
        Self {
            tlb_hit_cycles: d.tlb_hit_cycles,
            cache_hit_cycles: d.cache_hit_cycles,
            spm_cycles: d.spm_cycles,
            memory_cycles: d.memory_cycles,
            trap_entry_cycles: d.trap_entry_cycles,
            trap_exit_cycles: d.trap_exit_cycles,
            vm_switch_cycles: d.vm_switch_cycles,
            jitter: 0,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields, default)]
pub struct TlbSection {
    pub entries: usize,
    pub partitions: usize,
    pub lock_slots: usize,
}

impl Default for TlbSection {
    fn default() -> Self {
        let d = TlbConfig::default();
        Self { entries: d.entries, partitions: d.partitions, lock_slots: d.lock_slots }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub size_bytes: usize,
    pub ways: usize,
    pub line_bytes: usize,
}

#[derive(Clone, Debug, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields, default)]
pub struct CacheSection {
    pub icache: GeometrySection,
    pub dcache: GeometrySection,
    pub ispm_base: u64,
    pub dspm_base: u64,
    /// Share of each cache's ways given to SPM in scenarios using SPM.
    pub spm_percent: u32,
    pub dram_base: u64,
    pub dram_size: u64,
}

impl Default for CacheSection {
    fn default() -> Self {
        let d = MemSysConfig::default();
        let g = |c: CacheGeometry| GeometrySection {
            size_bytes: c.total_bytes() as usize,
            ways: c.ways(),
            line_bytes: c.line_bytes(),
        };
        Self {
            icache: g(d.icache),
            dcache: g(d.dcache),
            ispm_base: d.ispm_base,
            dspm_base: d.dspm_base,
            spm_percent: 50,
            dram_base: d.dram_base,
            dram_size: d.dram_size,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct HypervisorSection {
    pub partitions: Vec<usize>,
    pub quantum_cycles: u64,
    #[serde(default)]
    pub regions: Vec<RegionSection>,
    #[serde(default)]
    pub footprint: Vec<StreamSection>,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
pub enum PageSizeName {
    #[serde(rename = "4K")]
    K4,
    #[serde(rename = "2M")]
    M2,
    #[serde(rename = "1G")]
    G1,
}

impl From<PageSizeName> for PageSize {
    fn from(p: PageSizeName) -> Self {
        match p {
            PageSizeName::K4 => PageSize::Base,
            PageSizeName::M2 => PageSize::Mega,
            PageSizeName::G1 => PageSize::Giga,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Permissions {
    X,
    R,
    Rw,
    Rx,
    Rwx,
}

impl From<Permissions> for PteFlags {
    fn from(p: Permissions) -> Self {
        let base = PteFlags::V | PteFlags::U | PteFlags::A | PteFlags::D;
        base | match p {
            Permissions::X => PteFlags::X,
            Permissions::R => PteFlags::R,
            Permissions::Rw => PteFlags::R | PteFlags::W,
            Permissions::Rx => PteFlags::R | PteFlags::X,
            Permissions::Rwx => PteFlags::R | PteFlags::W | PteFlags::X,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum SpmSide {
    Instruction,
    Data,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct RegionSection {
    pub gvaddr: u64,
    pub size: u64,
    pub perms: Permissions,
    #[serde(default = "base_page")]
    pub max_page: PageSizeName,
    /// Largest leaf used instead of `max_page` when the scenario locks.
    pub lock_page: Option<PageSizeName>,
    /// SPM window the region is placed in when the scenario uses SPM.
    pub spm: Option<SpmSide>,
}

fn base_page() -> PageSizeName {
    PageSizeName::K4
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct LockRegionSection {
    pub gvaddr: u64,
    pub size: u64,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum OrderName {
    Forward,
    Reverse,
    Random,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum KindName {
    Read,
    Write,
    Ifetch,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct StreamSection {
    pub base: u64,
    pub count: u64,
    pub stride: u64,
    pub kind: KindName,
    #[serde(default = "forward")]
    pub order: OrderName,
    /// 0 = loop forever (interference bodies).
    #[serde(default = "one")]
    pub repeats: u32,
    #[serde(default)]
    pub compute_cycles: u64,
    #[serde(default = "one")]
    pub burst: u32,
}

fn forward() -> OrderName {
    OrderName::Forward
}

fn one() -> u32 {
    1
}

impl From<&StreamSection> for Stream {
    fn from(s: &StreamSection) -> Self {
        let kind = match s.kind {
            KindName::Read => AccessKind::Read,
            KindName::Write => AccessKind::Write,
            KindName::Ifetch => AccessKind::Ifetch,
        };
        let order = match s.order {
            OrderName::Forward => Order::Forward,
            OrderName::Reverse => Order::Reverse,
            OrderName::Random => Order::Random,
        };
        Stream::new(s.base, s.count, s.stride, kind)
            .order(order)
            .repeats(s.repeats)
            .compute(s.compute_cycles)
            .burst(s.burst)
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct VmSection {
    pub vmid: u16,
    pub asid: u16,
    pub partitions: Vec<usize>,
    pub regions: Vec<RegionSection>,
    #[serde(default)]
    pub lock_regions: Vec<LockRegionSection>,
    #[serde(default)]
    pub prime: Vec<StreamSection>,
    pub body: Vec<StreamSection>,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mitigation {
    Partitioning,
    Locking,
    Spm,
}

#[derive(Clone, Debug, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub critical: String,
    pub interference: Option<String>,
    #[serde(default)]
    pub mitigations: Vec<Mitigation>,
    pub iterations: Option<u64>,
    pub seed: Option<u64>,
}

impl ScenarioSection {
    pub fn mitigations(&self) -> Mitigations {
        let has = |m| self.mitigations.contains(&m);
        Mitigations {
            partitioning: has(Mitigation::Partitioning),
            locking: has(Mitigation::Locking),
            spm: has(Mitigation::Spm),
        }
    }
}

/// Parses and validates a configuration file.
pub fn parse(text: &str) -> Result<ConfigFile, ConfigError> {
    let de = toml::Deserializer::parse(text).map_err(|e| syntax_error(text, &e))?;
    let file: ConfigFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().to_string();
        let message = inner.lines().last().unwrap_or_default().trim().to_string();
        ConfigError::at(if path == "." { "<document>".into() } else { path }, message)
    })?;
    file.validate()?;
    Ok(file)
}

fn syntax_error(text: &str, e: &toml::de::Error) -> ConfigError {
    let path = match e.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            format!("line {line}, column {column}")
        }
        None => "<document>".into(),
    };
    ConfigError::at(path, e.message().trim())
}

/// Per-run overrides from the command line.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub iterations: Option<u64>,
}

impl ConfigFile {
    fn mask(&self, path: &str, parts: &[usize]) -> Result<PartitionMask, ConfigError> {
        PartitionMask::from_partitions(self.tlb.partitions, parts).map_err(|e| ConfigError::at(path, e))
    }

    pub fn system(&self) -> Result<MemSysConfig, ConfigError> {
        let l = &self.latency;
        let latency = LatencyConfig {
            tlb_hit_cycles: l.tlb_hit_cycles,
            cache_hit_cycles: l.cache_hit_cycles,
            spm_cycles: l.spm_cycles,
            memory_cycles: l.memory_cycles,
            trap_entry_cycles: l.trap_entry_cycles,
            trap_exit_cycles: l.trap_exit_cycles,
            vm_switch_cycles: l.vm_switch_cycles,
            jitter: if l.jitter == 0 { Jitter::None } else { Jitter::Uniform { bound: l.jitter } },
        };
        latency.validate().map_err(|e| ConfigError::at("latency.jitter", e))?;
        let geometry = |name: &str, g: &GeometrySection| {
            CacheGeometry::with_capacity(g.size_bytes, g.ways, g.line_bytes)
                .map_err(|e| ConfigError::at(format!("cache.{name}"), e))
        };
        let c = &self.cache;
        Ok(MemSysConfig {
            latency,
            tlb: TlbConfig {
                entries: self.tlb.entries,
                partitions: self.tlb.partitions,
                lock_slots: self.tlb.lock_slots,
                hit_cycles: l.tlb_hit_cycles,
            },
            icache: geometry("icache", &c.icache)?,
            dcache: geometry("dcache", &c.dcache)?,
            ispm_base: c.ispm_base,
            dspm_base: c.dspm_base,
            dram_base: c.dram_base,
            dram_size: c.dram_size,
        })
    }

    fn regions(&self, path: &str, regions: &[RegionSection], locking: bool) -> Vec<MemoryRegion> {
        let _ = path;
        regions
            .iter()
            .map(|r| {
                let page = match (locking, r.lock_page) {
                    (true, Some(p)) => p,
                    _ => r.max_page,
                };
                MemoryRegion {
                    gvaddr: r.gvaddr,
                    size: r.size,
                    flags: r.perms.into(),
                    max_page: page.into(),
                    spm: r.spm.map(|s| match s {
                        SpmSide::Instruction => Side::Instruction,
                        SpmSide::Data => Side::Data,
                    }),
                }
            })
            .collect()
    }

    fn vm(&self, name: &str, locking: bool) -> Result<VmConfig, ConfigError> {
        let path = format!("vm.{name}");
        let vm = &self.vm[name];
        Ok(VmConfig {
            vmid: vm.vmid,
            asid: vm.asid,
            partitions: self.mask(&format!("{path}.partitions"), &vm.partitions)?,
            regions: self.regions(&path, &vm.regions, locking),
            lock_regions: vm.lock_regions.iter().map(|l| LockRegion { gvaddr: l.gvaddr, size: l.size }).collect(),
            workload: Workload {
                prime: vm.prime.iter().map(Stream::from).collect(),
                body: vm.body.iter().map(Stream::from).collect(),
            },
        })
    }

    fn hypervisor(&self) -> Result<HypervisorConfig, ConfigError> {
        let default_part = [self.tlb.partitions / 2];
        let (parts, quantum, regions, footprint) = match &self.hypervisor {
            Some(h) => (&h.partitions[..], h.quantum_cycles, &h.regions[..], &h.footprint[..]),
            None => (&default_part[..], 50_000, &[][..], &[][..]),
        };
        Ok(HypervisorConfig {
            partitions: self.mask("hypervisor.partitions", parts)?,
            quantum_cycles: quantum,
            regions: self.regions("hypervisor", regions, false),
            footprint: footprint.iter().map(Stream::from).collect(),
        })
    }

    /// Core configuration of one scenario.
    pub fn scenario(&self, name: &str, overrides: Overrides) -> Result<(ScenarioConfig, u64), ConfigError> {
        let s =
            self.scenario.get(name).ok_or_else(|| ConfigError::at(format!("scenario.{name}"), "no such scenario"))?;
        let m = s.mitigations();
        let config = ScenarioConfig {
            system: self.system()?,
            hypervisor: self.hypervisor()?,
            critical: self.vm(&s.critical, m.locking)?,
            interference: s.interference.as_deref().map(|vm| self.vm(vm, m.locking)).transpose()?,
            mitigations: m,
            spm_percent: self.cache.spm_percent,
            seed: overrides.seed.or(s.seed).unwrap_or(self.seed),
        };
        let iterations = overrides.iterations.or(s.iterations).unwrap_or(self.iterations);
        Ok((config, iterations))
    }

    fn validate(&self) -> Result<(), ConfigError> {
        self.system()?;
        self.hypervisor()?;
        if self.hypervisor.as_ref().is_some_and(|h| h.quantum_cycles == 0) {
            return Err(ConfigError::at("hypervisor.quantum_cycles", "must be positive"));
        }
        if self.cache.spm_percent >= 100 {
            return Err(ConfigError::at("cache.spm_percent", "must leave at least one cache way"));
        }
        for (name, vm) in &self.vm {
            let path = format!("vm.{name}");
            self.mask(&format!("{path}.partitions"), &vm.partitions)?;
            if vm.vmid == 0 {
                return Err(ConfigError::at(format!("{path}.vmid"), "VMID 0 is reserved for the hypervisor"));
            }
            check_regions(&format!("{path}.regions"), &vm.regions)?;
            for (phase, streams) in [("prime", &vm.prime), ("body", &vm.body)] {
                check_streams(&format!("{path}.{phase}"), streams, &vm.regions)?;
            }
        }
        if let Some(h) = &self.hypervisor {
            check_regions("hypervisor.regions", &h.regions)?;
            check_streams("hypervisor.footprint", &h.footprint, &h.regions)?;
        }
        for (name, s) in &self.scenario {
            let path = format!("scenario.{name}");
            let known = |field: &str, vm: &str| {
                self.vm
                    .contains_key(vm)
                    .then_some(())
                    .ok_or_else(|| ConfigError::at(format!("{path}.{field}"), format!("unknown VM `{vm}`")))
            };
            known("critical", &s.critical)?;
            if let Some(i) = &s.interference {
                known("interference", i)?;
                if i == &s.critical {
                    return Err(ConfigError::at(format!("{path}.interference"), "must differ from the critical VM"));
                }
                if self.vm[i].vmid == self.vm[&s.critical].vmid {
                    return Err(ConfigError::at(format!("{path}.interference"), "shares the critical VM's vmid"));
                }
            }
            if s.iterations == Some(0) {
                return Err(ConfigError::at(format!("{path}.iterations"), "must be positive"));
            }
        }
        Ok(())
    }
}

fn check_regions(path: &str, regions: &[RegionSection]) -> Result<(), ConfigError> {
    for (i, r) in regions.iter().enumerate() {
        if r.size == 0 || r.size % 4096 != 0 || r.gvaddr % 4096 != 0 {
            return Err(ConfigError::at(format!("{path}[{i}]"), "gvaddr and size must be non-zero multiples of 4096"));
        }
    }
    Ok(())
}

fn check_streams(path: &str, streams: &[StreamSection], regions: &[RegionSection]) -> Result<(), ConfigError> {
    for (i, s) in streams.iter().enumerate() {
        let p = format!("{path}[{i}]");
        if s.base % 8 != 0 || s.stride % 8 != 0 {
            return Err(ConfigError::at(p, "base and stride must be multiples of 8"));
        }
        if s.count == 0 {
            continue;
        }
        let last = s.base + (s.count - 1) * s.stride + 7;
        if !regions.iter().any(|r| s.base >= r.gvaddr && last < r.gvaddr + r.size) {
            return Err(ConfigError::at(p, format!("accesses {:#x}..={last:#x} fall outside every region", s.base)));
        }
    }
    Ok(())
}
