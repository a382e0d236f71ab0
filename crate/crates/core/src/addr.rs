//! SV39 / SV39x4 address arithmetic.

use core::fmt;

pub const PAGE_SHIFT: u32 = 12;
pub const PAGE_BYTES: u64 = 1 << PAGE_SHIFT;
/// PTEs per table page.
pub const PTES_PER_TABLE: usize = 512;
pub const PTE_BYTES: u64 = 8;
pub const VA_BITS: u32 = 39;
/// Guest-physical width under SV39x4.
pub const GPA_BITS: u32 = 41;

/// Leaf mapping granularity. The discriminant is the page-table level the
/// leaf sits at.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PageSize {
    #[default]
    Base = 0,
    Mega = 1,
    Giga = 2,
}

impl PageSize {
    pub const ALL: [PageSize; 3] = [PageSize::Base, PageSize::Mega, PageSize::Giga];

    pub fn from_level(level: usize) -> Option<Self> {
        match level {
            0 => Some(PageSize::Base),
            1 => Some(PageSize::Mega),
            2 => Some(PageSize::Giga),
            _ => None,
        }
    }

    #[inline]
    pub fn level(self) -> usize {
        self as usize
    }

    #[inline]
    pub fn shift(self) -> u32 {
        PAGE_SHIFT + 9 * self as u32
    }

    #[inline]
    pub fn bytes(self) -> u64 {
        1 << self.shift()
    }

    /// Number of base pages covered.
    #[inline]
    pub fn base_pages(self) -> u64 {
        1 << (9 * self as u32)
    }

    #[inline]
    pub fn offset_mask(self) -> u64 {
        self.bytes() - 1
    }

    pub fn from_bytes(bytes: u64) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.bytes() == bytes)
    }
}

impl fmt::Display for PageSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PageSize::Base => "4K",
            PageSize::Mega => "2M",
            PageSize::Giga => "1G",
        })
    }
}

/// SV39 canonical form: bits 63..39 replicate bit 38.
#[inline]
pub fn is_canonical_sv39(vaddr: u64) -> bool {
    let shifted = (vaddr as i64) << (64 - VA_BITS) >> (64 - VA_BITS);
    shifted as u64 == vaddr
}

#[inline]
pub fn vpn(vaddr: u64) -> u64 {
    (vaddr >> PAGE_SHIFT) & ((1 << (VA_BITS - PAGE_SHIFT)) - 1)
}

/// VPN component for `level` (0 = leaf level). The top component is
/// `top_bits` wide so that the same routine serves SV39 and SV39x4.
#[inline]
pub fn vpn_index(addr: u64, level: usize, top_bits: u32) -> usize {
    let shift = PAGE_SHIFT + 9 * level as u32;
    let width = if level == 2 { top_bits } else { 9 };
    ((addr >> shift) & ((1 << width) - 1)) as usize
}

#[inline]
pub fn is_aligned(value: u64, align: u64) -> bool {
    value & (align - 1) == 0
}
