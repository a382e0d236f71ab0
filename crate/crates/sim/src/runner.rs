//! Runs every scenario of a configuration and writes the results bundle.
//!
//! Bundle layout (one directory):
//!
//! - `<scenario>.csv`: `iteration,cycles,tlb_misses,cache_misses`
//! - `<scenario>.tlb.txt`: ITLB and DTLB state after iteration 0
//! - `summary.json`: statistics, deltas, config hash, simulator version

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vmrt_core::hypervisor::{IterationRecord, RunError, SetupError};
use vmrt_core::memsys::Side;
use vmrt_core::{setup_scenario, Machine, ScenarioState};

use crate::config::{self, ConfigError, ConfigFile, Mitigation, Overrides};
use crate::stats::{Comparison, RunStats};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, thiserror::Error)]
pub enum RunnerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("scenario.{scenario}: setup failed: {error}")]
    Setup { scenario: String, error: SetupError },
    #[error("scenario.{scenario}: iteration {iteration}: {error}")]
    Run { scenario: String, iteration: u64, error: RunError },
    #[error("iteration count must be positive")]
    NoIterations,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub overrides: Overrides,
    pub serial: bool,
}

/// Measured iterations of one scenario.
#[derive(Clone, Debug)]
pub struct ScenarioResult {
    pub name: String,
    pub critical: String,
    pub interference: Option<String>,
    pub mitigations: Vec<Mitigation>,
    pub seed: u64,
    pub records: Vec<IterationRecord>,
    pub stats: RunStats,
    pub lock_slots: LockSlots,
    pub tlb_dump: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LockSlots {
    pub instruction: usize,
    pub data: usize,
}

#[derive(Clone, Debug)]
pub struct Bundle {
    pub config_sha256: String,
    pub description: String,
    pub scenarios: Vec<ScenarioResult>,
}

/// Runs iterations `0..n`, in parallel unless `serial`. Both orders give
/// identical records.
pub fn run_iterations(state: &ScenarioState, n: u64, serial: bool) -> Result<Vec<IterationRecord>, (u64, RunError)> {
    let one = |i| state.run_iteration(i).map_err(|e| (i, e));
    if serial {
        (0..n).map(one).collect()
    } else {
        (0..n).into_par_iter().map(one).collect()
    }
}

fn tlb_dump(state: &ScenarioState) -> Result<String, RunError> {
    let mut m = Machine::new(state, 0);
    m.run_iteration(0)?;
    let mut out = String::new();
    for (label, side) in [("itlb", Side::Instruction), ("dtlb", Side::Data)] {
        let _ = writeln!(out, "[{label}]");
        out.push_str(&m.sys.tlb(side).dump());
    }
    let _ = writeln!(out, "[locks]");
    for l in &state.locks {
        let _ = writeln!(out, "{:?} slot {} leaf {} gva={:#x} size={}", l.side, l.slot, l.leaf, l.gvaddr, l.page_size);
    }
    Ok(out)
}

pub fn run_scenario(file: &ConfigFile, name: &str, options: RunOptions) -> Result<ScenarioResult, RunnerError> {
    let (config, iterations) = file.scenario(name, options.overrides)?;
    if iterations == 0 {
        return Err(RunnerError::NoIterations);
    }
    let state = setup_scenario(&config).map_err(|error| RunnerError::Setup { scenario: name.into(), error })?;
    let records = run_iterations(&state, iterations, options.serial)
        .map_err(|(iteration, error)| RunnerError::Run { scenario: name.into(), iteration, error })?;
    let tlb_dump = tlb_dump(&state).map_err(|error| RunnerError::Run { scenario: name.into(), iteration: 0, error })?;
    let cycles: Vec<u64> = records.iter().map(|r| r.cycles).collect();
    let stats = RunStats::from_samples(
        &cycles,
        records.iter().map(|r| r.tlb_misses).sum(),
        records.iter().map(|r| r.cache_misses).sum(),
    )
    .expect("at least one iteration");
    let section = &file.scenario[name];
    let mut mitigations = section.mitigations.clone();
    mitigations.sort_unstable();
    mitigations.dedup();
    Ok(ScenarioResult {
        name: name.into(),
        critical: section.critical.clone(),
        interference: section.interference.clone(),
        mitigations,
        seed: config.seed,
        records,
        stats,
        lock_slots: LockSlots { instruction: state.slots_used(Side::Instruction), data: state.slots_used(Side::Data) },
        tlb_dump,
    })
}

pub fn config_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Parses `text` and runs all of its scenarios in name order.
pub fn run_config(text: &str, options: RunOptions) -> Result<Bundle, RunnerError> {
    let file = config::parse(text)?;
    let scenarios = file.scenario.keys().map(|name| run_scenario(&file, name, options)).collect::<Result<_, _>>()?;
    Ok(Bundle { config_sha256: config_hash(text), description: file.description.clone(), scenarios })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub critical: String,
    pub interference: Option<String>,
    pub mitigations: Vec<Mitigation>,
    pub seed: u64,
    pub lock_slots: LockSlots,
    pub stats: RunStats,
    pub vs_isolation: Option<Comparison>,
    pub vs_unmitigated: Option<Comparison>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub simulator: String,
    pub version: String,
    pub config_sha256: String,
    pub description: String,
    pub std_formula: String,
    pub quartile_method: String,
    /// Least-mitigated scenario without interference.
    pub isolation: Option<String>,
    /// Least-mitigated scenario with interference.
    pub unmitigated: Option<String>,
    pub scenarios: BTreeMap<String, ScenarioSummary>,
}

impl Summary {
    pub fn stats(&self, scenario: &str) -> Option<&RunStats> {
        self.scenarios.get(scenario).map(|s| &s.stats)
    }
}

impl Bundle {
    /// First scenario (by name) with the fewest mitigations among those
    /// with or without interference.
    fn find(&self, interference: bool) -> Option<&ScenarioResult> {
        self.scenarios.iter().filter(|s| s.interference.is_some() == interference).min_by_key(|s| s.mitigations.len())
    }

    pub fn scenario(&self, name: &str) -> Option<&ScenarioResult> {
        self.scenarios.iter().find(|s| s.name == name)
    }

    pub fn summary(&self) -> Summary {
        let isolation = self.find(false);
        let unmitigated = self.find(true);
        let scenarios = self
            .scenarios
            .iter()
            .map(|s| {
                let summary = ScenarioSummary {
                    critical: s.critical.clone(),
                    interference: s.interference.clone(),
                    mitigations: s.mitigations.clone(),
                    seed: s.seed,
                    lock_slots: s.lock_slots,
                    stats: s.stats.clone(),
                    vs_isolation: isolation.map(|b| Comparison::new(&b.stats, &s.stats)),
                    vs_unmitigated: unmitigated.map(|b| Comparison::new(&b.stats, &s.stats)),
                };
                (s.name.clone(), summary)
            })
            .collect();
        Summary {
            simulator: "vmrt".into(),
            version: VERSION.into(),
            config_sha256: self.config_sha256.clone(),
            description: self.description.clone(),
            std_formula: "population".into(),
            quartile_method: "linear interpolation at p*(n-1)".into(),
            isolation: isolation.map(|s| s.name.clone()),
            unmitigated: unmitigated.map(|s| s.name.clone()),
            scenarios,
        }
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        for s in &self.scenarios {
            let mut w = csv::Writer::from_path(dir.join(format!("{}.csv", s.name)))?;
            w.write_record(["iteration", "cycles", "tlb_misses", "cache_misses"])?;
            for r in &s.records {
                w.serialize((r.iteration, r.cycles, r.tlb_misses, r.cache_misses))?;
            }
            w.flush()?;
            fs::write(dir.join(format!("{}.tlb.txt", s.name)), &s.tlb_dump)?;
        }
        let mut json = serde_json::to_string_pretty(&self.summary()).map_err(std::io::Error::other)?;
        json.push('\n');
        fs::write(dir.join(SUMMARY_FILE), json)
    }
}

/// Reads `summary.json` from a bundle directory or from the file itself.
pub fn read_summary(path: &Path) -> anyhow::Result<Summary> {
    let file = if path.is_dir() { path.join(SUMMARY_FILE) } else { path.to_path_buf() };
    let text = fs::read_to_string(&file).map_err(|e| anyhow::anyhow!("{}: {e}", file.display()))?;
    serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("{}: {e}", file.display()))
}

/// Deltas of `subject` against `baseline` within one bundle.
pub fn compare(summary: &Summary, baseline: &str, subject: &str) -> anyhow::Result<Comparison> {
    let get = |name: &str| summary.stats(name).ok_or_else(|| anyhow::anyhow!("no scenario `{name}` in bundle"));
    Ok(Comparison::new(get(baseline)?, get(subject)?))
}
