//! Primary-radio occupancy as an alternating ON/OFF renewal process per
//! channel, sampled at half-slot boundaries.
//!
//! Sojourns are exponential: OFF periods end at rate `lambda_x` and ON
//! periods end at rate `lambda_y`, so the long-run busy fraction is
//! `E[ON] / (E[ON] + E[OFF]) = lambda_x / (lambda_x + lambda_y)`. Sensing
//! is ideal and occupancy is
//! global per channel.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

use crate::seed::{self, SimRng};
use crate::topology::ChannelId;

/// Mean ON / OFF durations (slots) used for the `high` level.
pub const HIGH_MEAN_ON: f64 = 8.5;
pub const HIGH_MEAN_OFF: f64 = 1.5;

#[derive(Debug, Error, PartialEq)]
pub enum OccupancyError {
    #[error("rates must be finite and strictly positive (lambda_x = {0}, lambda_y = {1})")]
    BadRates(f64, f64),
    #[error("channel {0} is outside the pool of {1} channels")]
    UnknownChannel(ChannelId, usize),
    #[error("channel {channel} queried at half-slot {requested} after half-slot {last}")]
    TimeReversed {
        channel: ChannelId,
        requested: u64,
        last: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrParams {
    /// OFF -> ON rate; mean OFF sojourn is `1 / lambda_x` slots.
    pub lambda_x: f64,
    /// ON -> OFF rate; mean ON sojourn is `1 / lambda_y` slots.
    pub lambda_y: f64,
    pub enabled: bool,
}

impl PrParams {
    pub fn disabled() -> Self {
        Self {
            lambda_x: 1.0,
            lambda_y: 1.0,
            enabled: false,
        }
    }

    pub fn new(lambda_x: f64, lambda_y: f64) -> Result<Self, OccupancyError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(lambda_x) || !ok(lambda_y) {
            return Err(OccupancyError::BadRates(lambda_x, lambda_y));
        }
        Ok(Self {
            lambda_x,
            lambda_y,
            enabled: true,
        })
    }

    /// 85% utilisation with a mean ON/OFF cycle of ten slots.
    pub fn high() -> Self {
        Self::new(1.0 / HIGH_MEAN_OFF, 1.0 / HIGH_MEAN_ON).expect("constant rates are valid")
    }

    /// Stationary busy probability, mean ON over mean cycle; 0 when disabled.
    pub fn utilization(&self) -> f64 {
        if self.enabled {
            self.lambda_x / (self.lambda_x + self.lambda_y)
        } else {
            0.0
        }
    }
}

/// PR level as written in configuration: `off`, `high`, or `LX:LY`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PrLevel {
    Off,
    High,
    Rates { lambda_x: f64, lambda_y: f64 },
}

impl PrLevel {
    pub fn params(&self) -> PrParams {
        match *self {
            PrLevel::Off => PrParams::disabled(),
            PrLevel::High => PrParams::high(),
            PrLevel::Rates { lambda_x, lambda_y } => PrParams {
                lambda_x,
                lambda_y,
                enabled: true,
            },
        }
    }
}

impl fmt::Display for PrLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrLevel::Off => f.write_str("off"),
            PrLevel::High => f.write_str("high"),
            PrLevel::Rates { lambda_x, lambda_y } => write!(f, "{lambda_x}:{lambda_y}"),
        }
    }
}

impl FromStr for PrLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "off" => Ok(PrLevel::Off),
            "high" => Ok(PrLevel::High),
            other => {
                let (x, y) = other
                    .split_once(':')
                    .ok_or_else(|| format!("PR level `{other}` is not off, high or LX:LY"))?;
                let num = |v: &str| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| format!("PR level `{other}`: {e}"))
                };
                let (lambda_x, lambda_y) = (num(x)?, num(y)?);
                PrParams::new(lambda_x, lambda_y).map_err(|e| e.to_string())?;
                Ok(PrLevel::Rates { lambda_x, lambda_y })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelState {
    On,
    Off,
}

/// Completed sojourn totals for one channel.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SojournStats {
    pub on_count: u64,
    pub on_total: f64,
    pub off_count: u64,
    pub off_total: f64,
}

impl SojournStats {
    pub fn mean_on(&self) -> f64 {
        self.on_total / self.on_count as f64
    }

    pub fn mean_off(&self) -> f64 {
        self.off_total / self.off_count as f64
    }
}

#[derive(Debug, Clone)]
struct ChannelProcess {
    state: ChannelState,
    entered: f64,
    next_transition: f64,
    last_query: Option<u64>,
    stats: SojournStats,
}

#[derive(Debug, Clone)]
pub struct ChannelOccupancy {
    params: PrParams,
    channels: Vec<ChannelProcess>,
    on_exp: Option<Exp<f64>>,
    off_exp: Option<Exp<f64>>,
    rng: SimRng,
}

impl ChannelOccupancy {
    /// One process per channel label `1..=n_channels`, each started from the
    /// stationary distribution.
    pub fn new(params: PrParams, n_channels: usize, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let (on_exp, off_exp) = if params.enabled {
            (
                Some(Exp::new(params.lambda_y).expect("positive rate")),
                Some(Exp::new(params.lambda_x).expect("positive rate")),
            )
        } else {
            (None, None)
        };
        let u = params.utilization();
        let channels = (0..n_channels)
            .map(|_| {
                if !params.enabled {
                    return ChannelProcess {
                        state: ChannelState::Off,
                        entered: 0.0,
                        next_transition: f64::INFINITY,
                        last_query: None,
                        stats: SojournStats::default(),
                    };
                }
                let state = if rng.random_bool(u) {
                    ChannelState::On
                } else {
                    ChannelState::Off
                };
                let dist = match state {
                    ChannelState::On => on_exp.as_ref(),
                    ChannelState::Off => off_exp.as_ref(),
                };
                ChannelProcess {
                    state,
                    entered: 0.0,
                    next_transition: dist.expect("enabled").sample(&mut rng),
                    last_query: None,
                    stats: SojournStats::default(),
                }
            })
            .collect();
        Self {
            params,
            channels,
            on_exp,
            off_exp,
            rng,
        }
    }

    pub fn params(&self) -> PrParams {
        self.params
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    /// Overrides a channel's current state and next transition time.
    pub fn force(&mut self, channel: ChannelId, state: ChannelState, next_transition: f64) {
        let p = &mut self.channels[channel.0 as usize - 1];
        p.state = state;
        p.next_transition = next_transition;
    }

    /// Whether `channel` is occupied at the start of half-slot `half_slot`
    /// (time `half_slot / 2` slots). Queries per channel must not go back in
    /// time.
    pub fn is_busy(&mut self, channel: ChannelId, half_slot: u64) -> Result<bool, OccupancyError> {
        let n = self.channels.len();
        let idx = (channel.0 as usize)
            .checked_sub(1)
            .filter(|&i| i < n)
            .ok_or(OccupancyError::UnknownChannel(channel, n))?;
        let p = &mut self.channels[idx];
        if let Some(last) = p.last_query {
            if half_slot < last {
                return Err(OccupancyError::TimeReversed {
                    channel,
                    requested: half_slot,
                    last,
                });
            }
        }
        p.last_query = Some(half_slot);
        let t = half_slot as f64 * 0.5;
        while p.next_transition <= t {
            let at = p.next_transition;
            let length = at - p.entered;
            let (dist, next) = match p.state {
                ChannelState::On => {
                    p.stats.on_count += 1;
                    p.stats.on_total += length;
                    (self.off_exp.as_ref(), ChannelState::Off)
                }
                ChannelState::Off => {
                    p.stats.off_count += 1;
                    p.stats.off_total += length;
                    (self.on_exp.as_ref(), ChannelState::On)
                }
            };
            // Forced transitions on a disabled process fall back to staying put.
            let Some(dist) = dist else {
                p.state = next;
                p.entered = at;
                p.next_transition = f64::INFINITY;
                break;
            };
            p.state = next;
            p.entered = at;
            p.next_transition = at + dist.sample(&mut self.rng);
        }
        Ok(p.state == ChannelState::On)
    }

    pub fn stats(&self, channel: ChannelId) -> SojournStats {
        self.channels[channel.0 as usize - 1].stats
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disabled_process_is_always_idle() {
        let mut occ = ChannelOccupancy::new(PrParams::disabled(), 4, 1);
        for h in 0..1000 {
            for c in 1..=4 {
                assert!(!occ.is_busy(ChannelId(c), h).unwrap());
            }
        }
        assert_eq!(PrParams::disabled().utilization(), 0.0);
    }

    #[test]
    fn equal_rates_give_half_utilization() {
        assert_eq!(PrParams::new(1.0, 1.0).unwrap().utilization(), 0.5);
        assert!((PrParams::high().utilization() - 0.85).abs() < 1e-12);
    }

    #[test]
    fn forced_state_holds_until_transition() {
        let mut occ = ChannelOccupancy::new(PrParams::new(1.0, 1.0).unwrap(), 1, 0);
        occ.force(ChannelId(1), ChannelState::On, 10.0);
        assert!(occ.is_busy(ChannelId(1), 9).unwrap());
        assert!(occ.is_busy(ChannelId(1), 19).unwrap());
        assert!(!occ.is_busy(ChannelId(1), 20).unwrap());
    }

    #[test]
    fn time_going_backwards_is_rejected() {
        let mut occ = ChannelOccupancy::new(PrParams::high(), 2, 0);
        occ.is_busy(ChannelId(1), 10).unwrap();
        occ.is_busy(ChannelId(1), 10).unwrap();
        assert_eq!(
            occ.is_busy(ChannelId(1), 9),
            Err(OccupancyError::TimeReversed {
                channel: ChannelId(1),
                requested: 9,
                last: 10
            })
        );
        // Independent per channel.
        assert!(occ.is_busy(ChannelId(2), 0).is_ok());
    }

    #[test]
    fn unknown_channel_is_rejected() {
        let mut occ = ChannelOccupancy::new(PrParams::high(), 2, 0);
        assert!(occ.is_busy(ChannelId(0), 0).is_err());
        assert!(occ.is_busy(ChannelId(3), 0).is_err());
    }

    #[test]
    fn same_seed_same_states() {
        let mut a = ChannelOccupancy::new(PrParams::high(), 3, 42);
        let mut b = ChannelOccupancy::new(PrParams::high(), 3, 42);
        for h in 0..5000 {
            let c = ChannelId((h % 3) as u32 + 1);
            assert_eq!(a.is_busy(c, h).unwrap(), b.is_busy(c, h).unwrap());
        }
    }

    #[test]
    fn level_parsing() {
        assert_eq!("off".parse::<PrLevel>(), Ok(PrLevel::Off));
        assert_eq!("high".parse::<PrLevel>(), Ok(PrLevel::High));
        assert_eq!(
            "0.5:0.25".parse::<PrLevel>(),
            Ok(PrLevel::Rates {
                lambda_x: 0.5,
                lambda_y: 0.25
            })
        );
        assert!("medium".parse::<PrLevel>().is_err());
        assert!("0:1".parse::<PrLevel>().is_err());
        assert!(PrParams::new(-1.0, 1.0).is_err());
    }
}
