use proptest::prelude::*;
use vmrt::stats::{quantile, Comparison, Delta, RunStats};

fn fixture() -> (Vec<u64>, u64, u64) {
    let mut r =
        csv::Reader::from_path(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/ten_iterations.csv")).unwrap();
    assert_eq!(r.headers().unwrap(), vec!["iteration", "cycles", "tlb_misses", "cache_misses"]);
    let rows: Vec<(u64, u64, u64, u64)> = r.deserialize().map(Result::unwrap).collect();
    (rows.iter().map(|r| r.1).collect(), rows.iter().map(|r| r.2).sum(), rows.iter().map(|r| r.3).sum())
}

#[test]
fn ten_value_fixture() {
    let (cycles, tlb, cache) = fixture();
    let s = RunStats::from_samples(&cycles, tlb, cache).unwrap();
    // sum 160; squared deviations from 16 sum to 264
    assert_eq!(s.mean, 16.0);
    assert_eq!(s.std, 26.4f64.sqrt());
    assert_eq!((s.min, s.max), (10, 29));
    // sorted: 10 12 12 14 15 15 15 18 20 29
    assert_eq!((s.q1, s.median, s.q3), (12.5, 15.0, 17.25));
    assert_eq!((s.iterations, s.tlb_misses, s.cache_misses), (10, 11, 17));
}

#[test]
fn delta_convention() {
    let (cycles, ..) = fixture();
    let base = RunStats::from_samples(&cycles, 0, 0).unwrap();
    let same = Comparison::new(&base, &base);
    assert_eq!((same.delta_mean_pct, same.delta_std_pct), (Delta::Pct(0.0), Delta::Pct(0.0)));

    let doubled: Vec<u64> = cycles.iter().map(|c| 2 * c).collect();
    let d = Comparison::new(&base, &RunStats::from_samples(&doubled, 0, 0).unwrap());
    assert_eq!((d.delta_mean_pct, d.delta_std_pct), (Delta::Pct(100.0), Delta::Pct(100.0)));

    let flat = RunStats::from_samples(&[7, 7, 7], 0, 0).unwrap();
    let c = Comparison::new(&flat, &base);
    assert_eq!(c.delta_std_pct, Delta::Undefined);
    assert_eq!(c.delta_std_pct.to_string(), "undefined");
    assert_eq!(
        serde_json::to_string(&c).unwrap(),
        format!(r#"{{"delta_mean_pct":{},"delta_std_pct":"undefined"}}"#, (16.0 - 7.0) / 7.0 * 100.0)
    );
    let back: Comparison = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
    assert_eq!(back, c);
}

#[test]
fn empty_sample_has_no_stats() {
    assert!(RunStats::from_samples(&[], 0, 0).is_none());
}

proptest! {
    #[test]
    fn stats_are_order_independent_and_bounded(mut v in prop::collection::vec(0u64..1_000_000, 1..200), seed: u64) {
        let a = RunStats::from_samples(&v, 0, 0).unwrap();
        let n = v.len();
        v.rotate_left(seed as usize % n);
        let b = RunStats::from_samples(&v, 0, 0).unwrap();
        prop_assert_eq!(a.mean, b.mean);
        prop_assert_eq!(a.median, b.median);
        prop_assert!(a.min as f64 <= a.q1 && a.q1 <= a.median && a.median <= a.q3 && a.q3 <= a.max as f64);
        prop_assert!(a.std >= 0.0 && a.std <= (a.max - a.min) as f64);
        v.sort_unstable();
        prop_assert_eq!(quantile(&v, 0.0), a.min as f64);
        prop_assert_eq!(quantile(&v, 1.0), a.max as f64);
    }
}
