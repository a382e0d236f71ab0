//! Binary-tree pseudo-LRU replacement with partition and lock constraints.
//!
//! The tree has one bit per internal node, stored in level order (node 0 is
//! the root, the children of node `n` are `2n + 1` and `2n + 2`). A clear bit
//! means the chosen branch is the left child, a set bit the right child.
//!
//! Replacement eligibility is decided per leaf: a leaf is *reachable* iff its
//! partition is enabled in the supplied [`PartitionMask`] and the leaf is not
//! locked. Victim selection follows the chosen branch at every node unless
//! that branch leads to a subtree with no reachable leaf, in which case the
//! sibling is taken.

use core::fmt;

use crate::error::UsageError;

/// Largest supported number of leaves. Node and lock state live in `u64`s.
pub const MAX_LEAVES: usize = 64;

/// Bitmap over the partitions of a [`PlruTree`]. Bit `i` set means partition
/// `i` may be selected for replacement.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PartitionMask {
    bits: u64,
    width: u8,
}

impl PartitionMask {
    pub fn new(bits: u64, width: usize) -> Result<Self, UsageError> {
        if width == 0 || width > MAX_LEAVES {
            return Err(UsageError::MaskWidth { expected: MAX_LEAVES, got: width });
        }
        if width < 64 && bits >> width != 0 {
            return Err(UsageError::MaskBitsOutOfRange { bits, width });
        }
        Ok(Self { bits, width: width as u8 })
    }

    /// Every partition enabled.
    pub fn all(width: usize) -> Self {
        assert!(width > 0 && width <= MAX_LEAVES, "mask width {width} out of range");
        Self { bits: low_ones(width), width: width as u8 }
    }

    pub fn none(width: usize) -> Self {
        assert!(width > 0 && width <= MAX_LEAVES, "mask width {width} out of range");
        Self { bits: 0, width: width as u8 }
    }

    /// Mask with exactly the listed partitions enabled.
    pub fn from_partitions(width: usize, parts: &[usize]) -> Result<Self, UsageError> {
        let mut bits = 0u64;
        for &p in parts {
            if p >= width {
                return Err(UsageError::IndexOutOfRange { index: p, len: width });
            }
            bits |= 1 << p;
        }
        Self::new(bits, width)
    }

    #[inline]
    pub fn bits(&self) -> u64 {
        self.bits
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width as usize
    }

    #[inline]
    pub fn is_enabled(&self, partition: usize) -> bool {
        partition < self.width() && self.bits >> partition & 1 == 1
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn is_disjoint(&self, other: &PartitionMask) -> bool {
        self.bits & other.bits == 0
    }
}

impl fmt::Debug for PartitionMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PartitionMask({:#0w$b})", self.bits, w = self.width() + 2)
    }
}

impl fmt::Display for PartitionMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#0w$b}", self.bits, w = self.width() + 2)
    }
}

#[inline]
fn low_ones(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// Tree-PLRU state over `leaf_count` replaceable slots.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PlruTree {
    leaf_count: u8,
    partition_count: u8,
    /// Bit `n` is the chosen branch of internal node `n`.
    nodes: u64,
    locked: u64,
}

impl PlruTree {
    pub fn new(leaf_count: usize, partition_count: usize) -> Result<Self, UsageError> {
        if !(2..=MAX_LEAVES).contains(&leaf_count) || !leaf_count.is_power_of_two() {
            return Err(UsageError::LeafCount(leaf_count));
        }
        if partition_count == 0 || partition_count > leaf_count || !partition_count.is_power_of_two() {
            return Err(UsageError::PartitionCount { partitions: partition_count, leaves: leaf_count });
        }
        Ok(Self { leaf_count: leaf_count as u8, partition_count: partition_count as u8, nodes: 0, locked: 0 })
    }

    /// Builds a tree with explicit node bits (level order, bit `n` = node `n`).
    pub fn with_state(leaf_count: usize, partition_count: usize, node_bits: u64) -> Result<Self, UsageError> {
        let mut t = Self::new(leaf_count, partition_count)?;
        if node_bits >> (leaf_count - 1) != 0 {
            return Err(UsageError::NodeBits { bits: node_bits, nodes: leaf_count - 1 });
        }
        t.nodes = node_bits;
        Ok(t)
    }

    #[inline]
    pub fn leaf_count(&self) -> usize {
        self.leaf_count as usize
    }

    #[inline]
    pub fn partition_count(&self) -> usize {
        self.partition_count as usize
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.leaf_count() - 1
    }

    #[inline]
    pub fn node_bits(&self) -> u64 {
        self.nodes
    }

    #[inline]
    pub fn locked_bits(&self) -> u64 {
        self.locked
    }

    pub fn leaves_per_partition(&self) -> usize {
        self.leaf_count() / self.partition_count()
    }

    pub fn partition_of(&self, leaf: usize) -> usize {
        leaf / self.leaves_per_partition()
    }

    pub fn is_locked(&self, leaf: usize) -> bool {
        leaf < self.leaf_count() && self.locked >> leaf & 1 == 1
    }

    fn check_leaf(&self, leaf: usize) -> Result<(), UsageError> {
        if leaf >= self.leaf_count() {
            return Err(UsageError::IndexOutOfRange { index: leaf, len: self.leaf_count() });
        }
        Ok(())
    }

    fn check_mask(&self, mask: &PartitionMask) -> Result<(), UsageError> {
        if mask.width() != self.partition_count() {
            return Err(UsageError::MaskWidth { expected: self.partition_count(), got: mask.width() });
        }
        Ok(())
    }

    /// Bitmap of leaves that may be chosen as victims under `enabled`.
    pub fn reachable_leaves(&self, enabled: &PartitionMask) -> u64 {
        let per = self.leaves_per_partition();
        let mut leaves = 0u64;
        for p in 0..self.partition_count() {
            if enabled.is_enabled(p) {
                leaves |= low_ones(per) << (p * per);
            }
        }
        leaves & !self.locked
    }

    /// Points every node on the root-to-`leaf` path away from `leaf`.
    pub fn touch(&mut self, leaf: usize) -> Result<(), UsageError> {
        self.check_leaf(leaf)?;
        let levels = self.leaf_count().trailing_zeros();
        let mut node = 0usize;
        for level in (0..levels).rev() {
            let goes_right = leaf >> level & 1 == 1;
            if goes_right {
                self.nodes &= !(1 << node);
                node = 2 * node + 2;
            } else {
                self.nodes |= 1 << node;
                node = 2 * node + 1;
            }
        }
        Ok(())
    }

    /// The leaf the constrained walk reaches, or `None` if nothing is
    /// reachable. Does not modify the tree.
    pub fn select_victim(&self, enabled: &PartitionMask) -> Result<Option<usize>, UsageError> {
        self.check_mask(enabled)?;
        Ok(self.walk(self.reachable_leaves(enabled)))
    }

    fn walk(&self, reachable: u64) -> Option<usize> {
        if reachable == 0 {
            return None;
        }
        let mut node = 0usize;
        let mut lo = 0usize;
        let mut span = self.leaf_count();
        while span > 1 {
            let half = span / 2;
            let left = reachable >> lo & low_ones(half) != 0;
            let right = reachable >> (lo + half) & low_ones(half) != 0;
            let chosen_right = self.nodes >> node & 1 == 1;
            let go_right = match (chosen_right, left, right) {
                (true, _, true) => true,
                (true, _, false) => false,
                (false, true, _) => false,
                (false, false, _) => true,
            };
            if go_right {
                lo += half;
                node = 2 * node + 2;
            } else {
                node = 2 * node + 1;
            }
            span = half;
        }
        Some(lo)
    }

    /// Selects a victim under `enabled` and, if one exists, touches it.
    pub fn insert(&mut self, enabled: &PartitionMask) -> Result<Option<usize>, UsageError> {
        let victim = self.select_victim(enabled)?;
        if let Some(leaf) = victim {
            self.touch(leaf)?;
        }
        Ok(victim)
    }

    pub fn set_lock(&mut self, leaf: usize, locked: bool) -> Result<(), UsageError> {
        self.check_leaf(leaf)?;
        if locked {
            self.locked |= 1 << leaf;
        } else {
            self.locked &= !(1 << leaf);
        }
        Ok(())
    }
}

impl fmt::Debug for PlruTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlruTree")
            .field("leaf_count", &self.leaf_count)
            .field("partition_count", &self.partition_count)
            .field("nodes", &format_args!("{:#b}", self.nodes))
            .field("locked", &format_args!("{:#b}", self.locked))
            .finish()
    }
}
