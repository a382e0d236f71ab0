use thiserror::Error;

use crate::addr::PageSize;

/// Caller violated an operation's precondition.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum UsageError {
    #[error("index {index} out of range for {len} slots")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("leaf count {0} is not a power of two in 2..=64")]
    LeafCount(usize),
    #[error("partition count {partitions} invalid for {leaves} leaves")]
    PartitionCount { partitions: usize, leaves: usize },
    #[error("node bits {bits:#b} do not fit {nodes} nodes")]
    NodeBits { bits: u64, nodes: usize },
    #[error("mask width {got} does not match partition count {expected}")]
    MaskWidth { expected: usize, got: usize },
    #[error("mask bits {bits:#b} exceed width {width}")]
    MaskBitsOutOfRange { bits: u64, width: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum MapError {
    #[error("address {0:#x} outside the translation input range")]
    BadAddress(u64),
    #[error("{size} mapping {vaddr:#x} -> {paddr:#x} is not naturally aligned")]
    Misaligned { vaddr: u64, paddr: u64, size: PageSize },
    #[error("region size {0:#x} is not a non-zero multiple of the base page")]
    BadSize(u64),
    #[error("leaf flags must include V and one of R/W/X")]
    NotLeafFlags,
    #[error("mapping at {0:#x} overlaps an existing leaf")]
    Overlap(u64),
    #[error("page-table frame pool exhausted")]
    OutOfFrames,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum TlbError {
    #[error(transparent)]
    Usage(#[from] UsageError),
    #[error("lock VPN {vpn:#x} is not aligned to its {size} page size")]
    MisalignedLockVpn { vpn: u64, size: PageSize },
    #[error("lock slot {0} does not exist")]
    NoSuchSlot(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum CacheError {
    #[error("physical address {0:#x} is neither backed memory nor the SPM window")]
    Unmapped(u64),
    #[error("access at {0:#x} is not 8-byte aligned")]
    Misaligned(u64),
    #[error(transparent)]
    Usage(#[from] UsageError),
    #[error("invalid cache geometry: {0}")]
    Geometry(&'static str),
    #[error("SPM window base {0:#x} is not aligned to the window size")]
    WindowAlignment(u64),
}
