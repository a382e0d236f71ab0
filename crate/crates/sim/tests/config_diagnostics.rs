use vmrt::config::{parse, Overrides};
use vmrt::presets;
use vmrt_core::PageSize;

const BASE: &str = include_str!("../presets/synthetic-nospm.toml");

fn edit(from: &str, to: &str) -> String {
    assert!(BASE.contains(from), "fixture text {from:?} missing");
    BASE.replacen(from, to, 1)
}

fn error_path(text: &str) -> String {
    parse(text).expect_err("config should be rejected").path
}

#[test]
fn unknown_keys_name_their_path() {
    let cases = [
        ("jitter = 4", "jitter = 4\nturbo = true", "latency.turbo"),
        ("lock_slots = 8", "lock_slots = 8\nways = 2", "tlb.ways"),
        ("spm_percent = 50", "spm_percent = 50\nspm_ways = 2", "cache.spm_ways"),
        ("quantum_cycles = 30000", "quantum_cycles = 30000\nslice = 1", "hypervisor.slice"),
        ("vmid = 2", "vmid = 2\npriority = 1", "vm.interference.priority"),
        (r#"perms = "x" }"#, r#"perms = "x", cached = true }"#, "vm.critical.regions[0].cached"),
        (
            r#"kind = "write", order = "reverse" }"#,
            r#"kind = "write", order = "reverse", stride2 = 8 }"#,
            "vm.critical.body[1].stride2",
        ),
        ("[scenario.d-locking]", "[scenario.d-locking]\nmitigation = []", "scenario.d-locking.mitigation"),
        ("seed = 1", "seed = 1\nthreads = 4", "threads"),
    ];
    for (from, to, path) in cases {
        let err = parse(&edit(from, to)).unwrap_err();
        assert_eq!(err.path, path, "{err}");
        assert!(err.message.contains("unknown field"), "{err}");
    }
}

#[test]
fn bad_values_name_their_path() {
    let cases = [
        (r#"order = "reverse" }"#, r#"order = "sideways" }"#, "vm.critical.body[1].order"),
        (r#"perms = "x" }"#, r#"perms = "w" }"#, "vm.critical.regions[0].perms"),
        (r#"lock_page = "2M""#, r#"lock_page = "3M""#, "vm.critical.regions[1].lock_page"),
        ("quantum_cycles = 30000", "quantum_cycles = -1", "hypervisor.quantum_cycles"),
        ("entries = 16", r#"entries = "many""#, "tlb.entries"),
        (r#"mitigations = ["locking"]"#, r#"mitigations = ["prayer"]"#, "scenario.d-locking.mitigations[0]"),
    ];
    for (from, to, path) in cases {
        assert_eq!(error_path(&edit(from, to)), path);
    }
}

#[test]
fn semantic_errors_name_their_path() {
    let cases = [
        (r#"interference = "interference""#, r#"interference = "ghost""#, "scenario.b-interference.interference"),
        ("partitions = [9, 10", "partitions = [99, 10", "vm.interference.partitions"),
        ("partitions = [8]", "partitions = [16]", "hypervisor.partitions"),
        ("vmid = 2", "vmid = 0", "vm.interference.vmid"),
        ("vmid = 2", "vmid = 1", "scenario.b-interference.interference"),
        ("quantum_cycles = 30000", "quantum_cycles = 0", "hypervisor.quantum_cycles"),
        ("spm_percent = 50", "spm_percent = 100", "cache.spm_percent"),
        ("jitter = 4", "jitter = 40", "latency.jitter"),
        ("dcache = { size_bytes = 0x10000, ways = 8", "dcache = { size_bytes = 0x10000, ways = 3", "cache.dcache"),
        (
            "count = 7, stride = 0x1040, kind = \"write\"",
            "count = 700, stride = 0x1040, kind = \"write\"",
            "vm.critical.body[1]",
        ),
        ("count = 4, stride = 0x1000", "count = 5, stride = 0x1000", "hypervisor.footprint[0]"),
        ("size = 0x4000, perms = \"rw\"", "size = 0x4001, perms = \"rw\"", "hypervisor.regions[0]"),
        ("[scenario.d-locking]", "[scenario.d-locking]\niterations = 0", "scenario.d-locking.iterations"),
    ];
    for (from, to, path) in cases {
        let err = parse(&edit(from, to)).unwrap_err();
        assert_eq!(err.path, path, "{err}");
    }
}

#[test]
fn syntax_errors_report_line_and_column() {
    let err = parse("seed = 1\n[tlb]\nentries = 16\nentries = 8\n").unwrap_err();
    assert_eq!(err.path, "line 4, column 1");
    assert!(err.to_string().contains("duplicate key"), "{err}");
}

#[test]
fn defaults_and_overrides() {
    let file = parse(
        "[vm.v]\nvmid = 1\nasid = 1\npartitions = [0]\nregions = []\nbody = []\n[scenario.s]\ncritical = \"v\"\n",
    )
    .unwrap();
    assert_eq!(file.iterations, 10_000);
    let (cfg, n) = file.scenario("s", Overrides::default()).unwrap();
    assert_eq!((cfg.seed, n), (1, 10_000));
    assert_eq!(cfg.system, vmrt_core::MemSysConfig::default());
    // one entry for the hypervisor, in the upper half of the tree
    assert_eq!(cfg.hypervisor.partitions.bits(), 1 << 8);
    let (cfg, n) = file.scenario("s", Overrides { seed: Some(9), iterations: Some(3) }).unwrap();
    assert_eq!((cfg.seed, n), (9, 3));
    assert!(file.scenario("missing", Overrides::default()).is_err());
}

#[test]
fn lock_page_applies_only_when_locking() {
    let file = parse(BASE).unwrap();
    let page = |scenario| file.scenario(scenario, Overrides::default()).unwrap().0.critical.regions[1].max_page;
    assert_eq!(page("b-interference"), PageSize::Base);
    assert_eq!(page("d-locking"), PageSize::Mega);
}

#[test]
fn empty_config_is_valid() {
    let file = parse("").unwrap();
    assert!(file.scenario.is_empty() && file.vm.is_empty());
}

#[test]
fn every_preset_builds_every_scenario() {
    for p in presets::PRESETS {
        let file = parse(p.text).unwrap();
        for name in file.scenario.keys() {
            let (cfg, _) = file.scenario(name, Overrides::default()).unwrap();
            vmrt_core::setup_scenario(&cfg).unwrap_or_else(|e| panic!("{}/{name}: {e}", p.name));
        }
    }
}
