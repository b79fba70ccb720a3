//! Channel selection per half-slot.
//!
//! Every protocol makes two rendezvous attempts per slot, one in each half.
//! The dual modular clock hops over prime-labelled channels in the first half
//! and non-prime-labelled channels in the second half, falling back to the
//! full list when a side is empty. RCS and MCA use one selection rule for
//! both halves.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::protocol::TerminationPolicy;
use crate::topology::{next_prime, split_primality, ChannelId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Protocol {
    Rcs,
    Mca,
    Emca,
    Mdmca,
    Mrdmca,
}

impl Protocol {
    pub const ALL: [Protocol; 5] = [
        Protocol::Rcs,
        Protocol::Mca,
        Protocol::Emca,
        Protocol::Mdmca,
        Protocol::Mrdmca,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Protocol::Rcs => "rcs",
            Protocol::Mca => "mca",
            Protocol::Emca => "emca",
            Protocol::Mdmca => "mdmca",
            Protocol::Mrdmca => "mrdmca",
        }
    }

    pub fn uses_dual_clock(&self) -> bool {
        matches!(self, Protocol::Mdmca | Protocol::Mrdmca)
    }

    /// The termination rule the protocol was published with.
    pub fn native_termination(&self) -> TerminationPolicy {
        match self {
            Protocol::Mrdmca => TerminationPolicy::Controlled,
            _ => TerminationPolicy::Baseline,
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.as_str() == s.trim())
            .ok_or_else(|| {
                format!("unknown protocol `{s}` (expected one of rcs, mca, emca, mdmca, mrdmca)")
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Half {
    First,
    Second,
}

impl Half {
    pub fn of(half_slot: u64) -> Half {
        if half_slot.is_multiple_of(2) {
            Half::First
        } else {
            Half::Second
        }
    }

    pub fn index(&self) -> u8 {
        match self {
            Half::First => 0,
            Half::Second => 1,
        }
    }
}

fn random_rate<R: Rng + ?Sized>(modulus: usize, rng: &mut R) -> usize {
    if modulus <= 2 {
        1
    } else {
        rng.random_range(1..modulus)
    }
}

/// Dual modular clock state for one node.
#[derive(Debug, Clone, PartialEq)]
pub struct DualClockState {
    pub channels: Vec<ChannelId>,
    pub primes: Vec<ChannelId>,
    pub non_primes: Vec<ChannelId>,
    pub j1: usize,
    pub j2: usize,
    pub r1: usize,
    pub r2: usize,
    /// Slots completed since the rates were last drawn; an epoch runs
    /// `t = 0..=|m_i|`, i.e. `|m_i| + 1` slots.
    pub t: usize,
}

impl DualClockState {
    /// Random starting indices and rates.
    pub fn new<R: Rng + ?Sized>(channels: &[ChannelId], rng: &mut R) -> Self {
        let mut state = Self::with_indices(channels, 0, 0, 1, 1);
        let n = state.channels.len();
        state.j1 = rng.random_range(0..n);
        state.j2 = rng.random_range(0..n);
        state.reseed_rates(rng);
        state
    }

    /// Fixed indices and rates, for replaying hand-computed sequences.
    pub fn with_indices(channels: &[ChannelId], j1: usize, j2: usize, r1: usize, r2: usize) -> Self {
        assert!(!channels.is_empty(), "a node needs at least one channel");
        let (primes, non_primes) = split_primality(channels);
        let mut channels = channels.to_vec();
        channels.sort_unstable();
        channels.dedup();
        Self {
            channels,
            primes,
            non_primes,
            j1,
            j2,
            r1,
            r2,
            t: 0,
        }
    }

    fn len(&self) -> usize {
        self.channels.len()
    }

    /// Advances the first clock and picks a prime channel, or any channel if
    /// the node has no primes.
    pub fn first_half(&mut self) -> ChannelId {
        self.j1 = (self.j1 + self.r1) % self.len();
        if self.primes.is_empty() {
            self.channels[self.j1]
        } else {
            self.primes[self.j1 % self.primes.len()]
        }
    }

    /// Advances the second clock and picks a non-prime channel, or any
    /// channel if there are none. When a fallback makes the pick collide
    /// with `c1`, steps the second clock once more.
    pub fn second_half(&mut self, c1: ChannelId) -> ChannelId {
        let n = self.len();
        self.j2 = (self.j2 + self.r2) % n;
        let c2 = if self.non_primes.is_empty() {
            self.channels[self.j2]
        } else {
            self.non_primes[self.j2 % self.non_primes.len()]
        };
        if c2 == c1 && n > 1 {
            self.j2 = (self.j2 + 1) % n;
            return self.channels[self.j2];
        }
        c2
    }

    /// Fresh rates in `[1, |m_i|)`; a single-channel node uses rate 1.
    pub fn reseed_rates<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.r1 = random_rate(self.len(), rng);
        self.r2 = random_rate(self.len(), rng);
        self.t = 0;
    }

    /// Closes a slot; redraws the rates every `|m_i| + 1` slots. An epoch of
    /// exactly `|m_i|` slots would return every index to the parity it
    /// started with, which can lock two clocks out of each other for good.
    pub fn end_slot<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.t += 1;
        if self.t > self.len() {
            self.reseed_rates(rng);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Rcs,
    /// Smallest-prime modular clock. Also used for EMCA, whose difference
    /// lies in the handshake rather than in channel selection.
    Mca,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineClockState {
    pub kind: BaselineKind,
    pub channels: Vec<ChannelId>,
    /// Clock modulus: smallest prime `>= |m_i|`.
    pub prime: usize,
    pub j: usize,
    pub rate: usize,
    pub since_reseed: usize,
}

impl BaselineClockState {
    pub fn new<R: Rng + ?Sized>(kind: BaselineKind, channels: &[ChannelId], rng: &mut R) -> Self {
        assert!(!channels.is_empty(), "a node needs at least one channel");
        let mut channels = channels.to_vec();
        channels.sort_unstable();
        channels.dedup();
        let prime = next_prime(channels.len() as u32) as usize;
        let (j, rate) = match kind {
            BaselineKind::Rcs => (0, 0),
            BaselineKind::Mca => (rng.random_range(0..prime), random_rate(prime, rng)),
        };
        Self {
            kind,
            channels,
            prime,
            j,
            rate,
            since_reseed: 0,
        }
    }

    /// Half-slots between rate draws, `2 * (prime + 1)`. A multiple of the
    /// modulus would bring `j` back to the same residue at every redraw.
    pub fn epoch(&self) -> usize {
        2 * (self.prime + 1)
    }

    /// One selection per half-slot; both halves follow the same rule.
    pub fn select<R: Rng + ?Sized>(&mut self, rng: &mut R) -> ChannelId {
        match self.kind {
            BaselineKind::Rcs => self.channels[rng.random_range(0..self.channels.len())],
            BaselineKind::Mca => {
                if self.since_reseed >= self.epoch() {
                    self.rate = random_rate(self.prime, rng);
                    self.since_reseed = 0;
                }
                self.since_reseed += 1;
                self.j = (self.j + self.rate) % self.prime;
                if self.j >= self.channels.len() {
                    self.channels[rng.random_range(0..self.channels.len())]
                } else {
                    self.channels[self.j]
                }
            }
        }
    }
}

/// Per-node hopping engine.
#[derive(Debug, Clone, PartialEq)]
pub enum Hopper {
    Dual {
        clock: DualClockState,
        first_pick: Option<ChannelId>,
    },
    Baseline(BaselineClockState),
}

impl Hopper {
    pub fn new<R: Rng + ?Sized>(protocol: Protocol, channels: &[ChannelId], rng: &mut R) -> Self {
        match protocol {
            Protocol::Mdmca | Protocol::Mrdmca => Hopper::Dual {
                clock: DualClockState::new(channels, rng),
                first_pick: None,
            },
            Protocol::Rcs => Hopper::Baseline(BaselineClockState::new(BaselineKind::Rcs, channels, rng)),
            Protocol::Mca | Protocol::Emca => {
                Hopper::Baseline(BaselineClockState::new(BaselineKind::Mca, channels, rng))
            }
        }
    }

    /// Channel for the given half. Halves must alternate starting with
    /// [`Half::First`].
    pub fn select<R: Rng + ?Sized>(&mut self, half: Half, rng: &mut R) -> ChannelId {
        match self {
            Hopper::Dual { clock, first_pick } => match half {
                Half::First => {
                    let c1 = clock.first_half();
                    *first_pick = Some(c1);
                    c1
                }
                Half::Second => {
                    let c1 = first_pick.take().expect("second half follows a first half");
                    let c2 = clock.second_half(c1);
                    clock.end_slot(rng);
                    c2
                }
            },
            Hopper::Baseline(state) => state.select(rng),
        }
    }
}
