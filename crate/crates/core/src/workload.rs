//! Abstract guest workloads: phases made of strided access streams.

use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::cache::AccessKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Order {
    Forward,
    Reverse,
    /// Uniform draws with replacement from the iteration's random stream.
    Random,
}

/// `count` accesses at `base + i * stride`, visited in `order`, `repeats`
/// times (0 = unbounded). Each turn of the phase's round-robin issues
/// `burst` consecutive accesses from the stream, each followed by
/// `compute_cycles` of non-memory work.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Stream {
    pub base: u64,
    pub count: u64,
    pub stride: u64,
    pub order: Order,
    pub repeats: u32,
    pub kind: AccessKind,
    pub compute_cycles: u64,
    pub burst: u32,
}

impl Stream {
    pub fn new(base: u64, count: u64, stride: u64, kind: AccessKind) -> Self {
        Self { base, count, stride, order: Order::Forward, repeats: 1, kind, compute_cycles: 0, burst: 1 }
    }

    pub fn order(self, order: Order) -> Self {
        Self { order, ..self }
    }

    pub fn repeats(self, repeats: u32) -> Self {
        Self { repeats, ..self }
    }

    pub fn compute(self, compute_cycles: u64) -> Self {
        Self { compute_cycles, ..self }
    }

    pub fn burst(self, burst: u32) -> Self {
        Self { burst, ..self }
    }

    pub fn is_unbounded(&self) -> bool {
        self.repeats == 0
    }

    /// Total accesses, `None` if unbounded.
    pub fn len(&self) -> Option<u64> {
        (!self.is_unbounded()).then(|| self.count * self.repeats as u64)
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0 || self.len() == Some(0)
    }

    /// Address range touched, as `[first, last]` byte addresses.
    pub fn span(&self) -> (u64, u64) {
        (self.base, self.base + self.count.saturating_sub(1) * self.stride + 7)
    }
}

/// A critical workload primes untimed and then runs `body` timed; an
/// interference workload loops over `body` for its scheduling quantum.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Workload {
    pub prime: Vec<Stream>,
    pub body: Vec<Stream>,
}

/// Iteration state of one stream.
#[derive(Clone, Debug)]
pub struct StreamCursor {
    stream: Stream,
    pos: u64,
    rep: u32,
}

impl StreamCursor {
    pub fn new(stream: Stream) -> Self {
        Self { stream, pos: 0, rep: 0 }
    }

    pub fn stream(&self) -> &Stream {
        &self.stream
    }

    pub fn is_done(&self) -> bool {
        self.stream.count == 0 || (!self.stream.is_unbounded() && self.rep >= self.stream.repeats)
    }

    pub fn next_addr(&mut self, rng: &mut ChaCha8Rng) -> Option<u64> {
        if self.is_done() {
            return None;
        }
        let s = &self.stream;
        let index = match s.order {
            Order::Forward => self.pos,
            Order::Reverse => s.count - 1 - self.pos,
            Order::Random => rng.random_range(0..s.count),
        };
        self.pos += 1;
        if self.pos == s.count {
            self.pos = 0;
            self.rep = self.rep.saturating_add(1);
        }
        Some(s.base + index * s.stride)
    }
}

/// Round-robin interleaving of a phase's streams.
#[derive(Clone, Debug)]
pub struct PhaseCursor {
    cursors: Vec<StreamCursor>,
    turn: usize,
    issued_in_turn: u32,
}

/// One access produced by a [`PhaseCursor`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Step {
    pub vaddr: u64,
    pub kind: AccessKind,
    pub compute_cycles: u64,
}

impl PhaseCursor {
    pub fn new(streams: &[Stream]) -> Self {
        Self { cursors: streams.iter().copied().map(StreamCursor::new).collect(), turn: 0, issued_in_turn: 0 }
    }

    pub fn next_step(&mut self, rng: &mut ChaCha8Rng) -> Option<Step> {
        let n = self.cursors.len();
        for _ in 0..=n {
            if n == 0 {
                return None;
            }
            let c = &mut self.cursors[self.turn];
            let burst = c.stream.burst.max(1);
            if self.issued_in_turn < burst {
                if let Some(vaddr) = c.next_addr(rng) {
                    self.issued_in_turn += 1;
                    return Some(Step { vaddr, kind: c.stream.kind, compute_cycles: c.stream.compute_cycles });
                }
            }
            self.turn = (self.turn + 1) % n;
            self.issued_in_turn = 0;
            if self.cursors.iter().all(StreamCursor::is_done) {
                return None;
            }
        }
        None
    }
}
