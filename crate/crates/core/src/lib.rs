//! Simulator core for a virtual-memory subsystem with partitioned, lockable
//! TLBs, two-stage page-table walks and caches whose ways can be turned into
//! scratchpad memory.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the
//! experiment runner and the CLI live in the `vmrt` crate.

#![no_std]

extern crate alloc;

pub mod addr;
pub mod cache;
pub mod error;
pub mod hypervisor;
pub mod memsys;
pub mod replacement;
pub mod tlb;
pub mod walker;
pub mod workload;

pub use addr::PageSize;
pub use cache::{AccessKind, Cache, CacheGeometry, WayMode};
pub use error::{CacheError, MapError, TlbError, UsageError};
pub use hypervisor::{setup_scenario, Machine, Mitigations, Owner, ScenarioConfig, ScenarioState};
pub use memsys::{LatencyConfig, MemSys, MemSysConfig};
pub use replacement::{PartitionMask, PlruTree};
pub use tlb::{PartitionCsrFile, Tlb, TlbConfig, TlbEntry};
pub use walker::{AddressSpace, PageTableEntry, PteFlags};
pub use workload::{Order, Stream, Workload};
