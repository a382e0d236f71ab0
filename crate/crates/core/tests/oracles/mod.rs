//! Reference models written independently of the simulator, used by the
//! integration tests of both crates.

#![allow(dead_code)]

pub mod drivers;

use std::collections::BTreeMap;

/// Brute-force victim search: enumerate the reachable leaves, then walk the
/// tree recursively over leaf ranges, following the stored branch when its
/// range has a reachable leaf and the other branch otherwise.
pub fn brute_victim(leaves: usize, partitions: usize, node_bits: u64, enabled: u64, locked: u64) -> Option<usize> {
    let per = leaves / partitions;
    let reachable: Vec<bool> = (0..leaves).map(|l| enabled >> (l / per) & 1 == 1 && locked >> l & 1 == 0).collect();
    fn go(node: usize, lo: usize, hi: usize, bits: u64, reachable: &[bool]) -> Option<usize> {
        if !reachable[lo..hi].iter().any(|&r| r) {
            return None;
        }
        if hi - lo == 1 {
            return Some(lo);
        }
        let mid = (lo + hi) / 2;
        let left = || go(2 * node + 1, lo, mid, bits, reachable);
        let right = || go(2 * node + 2, mid, hi, bits, reachable);
        if bits >> node & 1 == 0 {
            left().or_else(right)
        } else {
            right().or_else(left)
        }
    }
    go(0, 0, leaves, node_bits, &reachable)
}

/// Textbook tree-PLRU over a boolean node array: each node remembers which
/// half to replace next, accesses steer every node on the path to the
/// other half.
#[derive(Clone, Debug)]
pub struct TextbookPlru {
    depth: u32,
    nodes: Vec<bool>,
}

impl TextbookPlru {
    pub fn new(ways: usize) -> Self {
        Self { depth: ways.trailing_zeros(), nodes: vec![false; ways - 1] }
    }

    pub fn access(&mut self, way: usize) {
        let mut node = 0;
        for level in (0..self.depth).rev() {
            let right = (way >> level) & 1 == 1;
            self.nodes[node] = !right;
            node = 2 * node + 1 + right as usize;
        }
    }

    pub fn victim(&self) -> usize {
        let (mut node, mut way) = (0, 0);
        for _ in 0..self.depth {
            let right = self.nodes[node];
            way = way << 1 | right as usize;
            node = 2 * node + 1 + right as usize;
        }
        way
    }
}

/// Two-register model of the partition CSRs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CsrRef {
    pub cur: u64,
    pub last: u64,
}

#[derive(Clone, Copy, Debug)]
pub enum CsrOp {
    Cur(u64),
    Last(u64),
    Restore(u64),
}

impl CsrRef {
    pub fn reset(width: usize) -> Self {
        let ones = if width == 64 { u64::MAX } else { (1 << width) - 1 };
        Self { cur: ones, last: ones }
    }

    pub fn apply(&mut self, op: CsrOp) {
        match op {
            CsrOp::Cur(v) => {
                self.last = self.cur;
                self.cur = v;
            }
            CsrOp::Last(v) => self.last = v,
            CsrOp::Restore(v) => {
                if v & 1 == 1 {
                    self.cur = self.last;
                }
            }
        }
    }
}

/// Number of PTE fetches of a radix walk that ends at a leaf of `level`.
pub fn single_stage_fetches(leaf_level: usize) -> usize {
    3 - leaf_level
}

/// Fetch count of a two-stage walk: each guest PTE fetch is preceded by a
/// full host walk of its guest-physical address, and the final
/// guest-physical address is walked once more.
pub fn two_stage_fetches(guest_leaf_level: usize, host_leaf_level_of: impl Fn(usize) -> usize) -> usize {
    let guest_fetches = single_stage_fetches(guest_leaf_level);
    let per_guest: usize = (0..guest_fetches).map(|i| single_stage_fetches(host_leaf_level_of(i)) + 1).sum();
    per_guest + single_stage_fetches(host_leaf_level_of(guest_fetches))
}

/// Flat reference memory for functional cache checks: every address holds
/// the last value written to it, zero otherwise.
#[derive(Clone, Debug, Default)]
pub struct ShadowMemory {
    words: BTreeMap<u64, u64>,
}

impl ShadowMemory {
    pub fn read(&self, addr: u64) -> u64 {
        self.words.get(&addr).copied().unwrap_or(0)
    }

    pub fn write(&mut self, addr: u64, value: u64) {
        self.words.insert(addr, value);
    }
}

/// Population statistics computed the long way.
pub fn mean_and_population_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
