//! Descriptive statistics of per-iteration cycle counts.

use serde::{Deserialize, Serialize};

/// Summary of one scenario's measured cycles.
///
/// `std` uses the population formula (divide by n). Quartiles interpolate
/// linearly between order statistics at rank `p * (n - 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub iterations: u64,
    pub mean: f64,
    pub std: f64,
    pub min: u64,
    pub max: u64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub tlb_misses: u64,
    pub cache_misses: u64,
}

impl RunStats {
    /// `None` for an empty sample.
    pub fn from_samples(cycles: &[u64], tlb_misses: u64, cache_misses: u64) -> Option<Self> {
        if cycles.is_empty() {
            return None;
        }
        let n = cycles.len() as f64;
        // exact integer sums keep the mean independent of summation order
        let sum: u128 = cycles.iter().map(|&c| c as u128).sum();
        let mean = sum as f64 / n;
        let var = cycles.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / n;
        let mut sorted = cycles.to_vec();
        sorted.sort_unstable();
        Some(Self {
            iterations: cycles.len() as u64,
            mean,
            std: var.sqrt(),
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            q1: quantile(&sorted, 0.25),
            median: quantile(&sorted, 0.5),
            q3: quantile(&sorted, 0.75),
            tlb_misses,
            cache_misses,
        })
    }
}

/// Linear-interpolation quantile of an ascending, non-empty sample.
pub fn quantile(sorted: &[u64], p: f64) -> f64 {
    let rank = p * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] as f64 + (sorted[hi] as f64 - sorted[lo] as f64) * frac
}

/// Relative change in percent, undefined for a zero baseline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Delta {
    Pct(f64),
    Undefined,
}

impl Delta {
    pub fn between(baseline: f64, subject: f64) -> Self {
        if baseline == 0.0 {
            Delta::Undefined
        } else {
            Delta::Pct((subject - baseline) / baseline * 100.0)
        }
    }

    pub fn pct(self) -> Option<f64> {
        match self {
            Delta::Pct(p) => Some(p),
            Delta::Undefined => None,
        }
    }
}

impl std::fmt::Display for Delta {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Delta::Pct(p) => write!(f, "{p:+.2}%"),
            Delta::Undefined => f.write_str("undefined"),
        }
    }
}

impl Serialize for Delta {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Delta::Pct(p) => s.serialize_f64(*p),
            Delta::Undefined => s.serialize_str("undefined"),
        }
    }
}

impl<'de> Deserialize<'de> for Delta {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(p) => Ok(Delta::Pct(p)),
            Raw::Text(t) if t == "undefined" => Ok(Delta::Undefined),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"undefined\", got {t:?}"))),
        }
    }
}

/// Changes of mean and standard deviation from `baseline` to `subject`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub delta_mean_pct: Delta,
    pub delta_std_pct: Delta,
}

impl Comparison {
    pub fn new(baseline: &RunStats, subject: &RunStats) -> Self {
        Self {
            delta_mean_pct: Delta::between(baseline.mean, subject.mean),
            delta_std_pct: Delta::between(baseline.std, subject.std),
        }
    }
}
