//! Golden replacement vectors on an 8-entry tree.
//!
//! Entries are labelled 1..=8 in the vector descriptions; leaf `n - 1`
//! holds entry `n`.

use vmrt_core::{PartitionMask, PlruTree};

const LEAVES: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VectorResult {
    pub name: &'static str,
    pub description: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn entry(leaf: Option<usize>) -> String {
    leaf.map_or("none".into(), |l| format!("entry {}", l + 1))
}

/// Fresh tree after one fill, and the state every other vector starts from.
fn after_first_fill() -> (PlruTree, Option<usize>) {
    let mut t = PlruTree::new(LEAVES, 1).unwrap();
    let filled = t.insert(&PartitionMask::all(1)).unwrap();
    (t, filled)
}

fn case_a() -> VectorResult {
    let (t, filled) = after_first_fill();
    let victim = t.select_victim(&PartitionMask::all(1)).unwrap();
    VectorResult {
        name: "A",
        description: "fill replaces entry 1, next victim is entry 5",
        passed: filled == Some(0) && victim == Some(4),
        detail: format!("filled {}, victim {}", entry(filled), entry(victim)),
    }
}

fn case_b1() -> VectorResult {
    // 4 partitions of 2 entries; partition 2 holds entries 5 and 6
    let mask = PartitionMask::from_partitions(4, &[0, 1, 3]).unwrap();
    let mut bad = None;
    for bits in 0..1u64 << (LEAVES - 1) {
        let t = PlruTree::with_state(LEAVES, 4, bits).unwrap();
        let v = t.select_victim(&mask).unwrap();
        if !matches!(v, Some(l) if l != 4 && l != 5) {
            bad.get_or_insert((bits, v));
        }
    }
    let (t, _) = after_first_fill();
    let t = PlruTree::with_state(LEAVES, 4, t.node_bits()).unwrap();
    let start = t.select_victim(&mask).unwrap();
    VectorResult {
        name: "B1",
        description: "disabled subtree (entries 5-6) is never selected; start state falls over to entry 7",
        passed: bad.is_none() && start == Some(6),
        detail: match bad {
            Some((bits, v)) => format!("state {bits:#09b} chose {}", entry(v)),
            None => format!("128 states checked, start state victim {}", entry(start)),
        },
    }
}

fn case_b2() -> VectorResult {
    let mut bad = None;
    let mut checked = 0u64;
    for bits in 0..1u64 << (LEAVES - 1) {
        let t = PlruTree::with_state(LEAVES, LEAVES, bits).unwrap();
        for m in 1..1u64 << LEAVES {
            let mask = PartitionMask::new(m, LEAVES).unwrap();
            let v = t.select_victim(&mask).unwrap();
            checked += 1;
            if !matches!(v, Some(l) if mask.is_enabled(l)) {
                bad.get_or_insert((bits, m, v));
            }
        }
    }
    VectorResult {
        name: "B2",
        description: "one partition per entry: disabled entries are never selected",
        passed: bad.is_none(),
        detail: match bad {
            Some((bits, m, v)) => format!("state {bits:#09b} mask {m:#010b} chose {}", entry(v)),
            None => format!("{checked} state/mask pairs checked"),
        },
    }
}

fn case_c() -> VectorResult {
    let (mut t, _) = after_first_fill();
    t.set_lock(4, true).unwrap();
    let victim = t.select_victim(&PartitionMask::all(1)).unwrap();
    VectorResult {
        name: "C",
        description: "locking entry 5 moves the next victim to entry 6",
        passed: victim == Some(5),
        detail: format!("victim {}", entry(victim)),
    }
}

pub fn run_all() -> Vec<VectorResult> {
    vec![case_a(), case_b1(), case_b2(), case_c()]
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_vectors_pass() {
        for v in super::run_all() {
            assert!(v.passed, "{}: {}", v.name, v.detail);
        }
    }
}
