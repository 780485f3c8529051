//! Pulse-by-pulse Monte Carlo generation of S/aS detection streams.
//!
//! Every pulse is independent. With probability `p_pair` it yields a
//! correlated pair (one S and one aS detection); otherwise an unpaired S is
//! detected with probability `p_s` and, independently, an unpaired aS with
//! probability `p_as`. A channel fires at most once per pulse.

mod rng;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use rng::{block_rng, BLOCK_PULSES};

use crate::error::{Error, Result};
use crate::physics::{bose_occupation, delta_k, pair_rate, shift_to_energy, CollectionConfig, LaserConfig, MaterialModel};
use crate::spectrum;
use crate::stream::{Channel, EventStream, Record};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelProbabilities {
    pub p_s: f64,
    pub p_as: f64,
    pub p_pair: f64,
}

impl ChannelProbabilities {
    pub fn new(p_s: f64, p_as: f64, p_pair: f64) -> Result<Self> {
        let p = ChannelProbabilities { p_s, p_as, p_pair };
        p.validate()?;
        Ok(p)
    }

    pub fn zero() -> Self {
        ChannelProbabilities {
            p_s: 0.0,
            p_as: 0.0,
            p_pair: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (label, p) in [("p_s", self.p_s), ("p_as", self.p_as), ("p_pair", self.p_pair)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{label} = {p} outside [0, 1]")));
            }
        }
        if self.p_s + self.p_pair > 1.0 || self.p_as + self.p_pair > 1.0 {
            return Err(Error::invalid("per-channel detection probability exceeds 1"));
        }
        Ok(())
    }

    /// Adds a constant per-pulse dark-count probability to each singles
    /// channel.
    pub fn with_dark_counts(self, dark_s: f64, dark_as: f64) -> Result<Self> {
        ChannelProbabilities::new(
            1.0 - (1.0 - self.p_s) * (1.0 - dark_s),
            1.0 - (1.0 - self.p_as) * (1.0 - dark_as),
            self.p_pair,
        )
    }

    /// Probability that a channel fires in a pulse.
    pub fn marginal(&self, channel: Channel) -> f64 {
        let single = match channel {
            Channel::Stokes => self.p_s,
            Channel::AntiStokes => self.p_as,
        };
        self.p_pair + (1.0 - self.p_pair) * single
    }

    /// Probability that both channels fire in a pulse (pair or accidental).
    pub fn coincidence(&self) -> f64 {
        self.p_pair + (1.0 - self.p_pair) * self.p_s * self.p_as
    }

    pub fn expected(&self, n_pulses: u64) -> ExpectedCounts {
        let n = n_pulses as f64;
        ExpectedCounts {
            stokes: n * self.marginal(Channel::Stokes),
            anti_stokes: n * self.marginal(Channel::AntiStokes),
            same_pulse: n * self.coincidence(),
            accidental: n * (1.0 - self.p_pair) * self.p_s * self.p_as,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedCounts {
    pub stokes: f64,
    pub anti_stokes: f64,
    pub same_pulse: f64,
    pub accidental: f64,
}

/// Per-pulse probabilities for a Stokes monochromator window.
///
/// The pair channel follows the closed-form pair rate for the band that
/// contains the window centre, times both detection efficiencies. The
/// unpaired S channel is the window-mean APD intensity per pulse. The
/// unpaired aS channel is the same intensity scaled by the thermal
/// anti-Stokes/Stokes ratio n̄/(n̄+1) at the window-centre phonon energy.
pub fn derive_probabilities(
    laser: &LaserConfig,
    material: &MaterialModel,
    collection: &CollectionConfig,
    stokes_window: (f64, f64),
) -> Result<ChannelProbabilities> {
    laser.validate()?;
    material.validate()?;
    collection.validate()?;
    let (lo, hi) = stokes_window;
    let center = 0.5 * (lo + hi);
    let eta_s = collection.detection_efficiency_s;
    let eta_as = collection.detection_efficiency_as;
    let rep = laser.rep_rate_hz;

    let p_pair = match material.band_for(center) {
        Some(band) => pair_rate(laser, band.v0_ev, delta_k(collection, band)?) * eta_s * eta_as / rep,
        None => 0.0,
    };

    let intensity = spectrum::window_mean(&material.spectrum, lo, hi)?.max(0.0);
    let p_s = intensity / rep * eta_s;

    let energy = shift_to_energy(center.abs());
    let thermal_ratio = if energy > 0.0 {
        let n = bose_occupation(energy, material.temperature_k);
        n / (n + 1.0)
    } else {
        1.0
    };
    let p_as = intensity / rep * thermal_ratio * eta_as;

    for (label, p) in [("p_s", p_s), ("p_as", p_as), ("p_pair", p_pair)] {
        if p > 1.0 {
            return Err(Error::invalid(format!(
                "{label} = {p:.3e} exceeds 1 per pulse; configuration is unphysical"
            )));
        }
    }
    ChannelProbabilities::new(p_s.clamp(0.0, 1.0), p_as.clamp(0.0, 1.0), p_pair.clamp(0.0, 1.0))
}

/// Generates a stream over `n_pulses` pulses.
///
/// Pulses are split into blocks of [`BLOCK_PULSES`]; each block draws from
/// its own counter-based stream (see [`block_rng`]), so the output is a pure
/// function of `(probabilities, n_pulses, seed)` whatever the thread count.
/// Within a block the sampler jumps straight to the next non-empty pulse
/// with a geometric draw, so runtime scales with the number of events.
pub fn simulate(probabilities: &ChannelProbabilities, n_pulses: u64, rep_rate_hz: f64, seed: u64) -> Result<EventStream> {
    probabilities.validate()?;
    if n_pulses == 0 {
        return Err(Error::invalid("n_pulses must be >= 1"));
    }
    let sampler = PulseSampler::new(probabilities);
    let n_blocks = n_pulses.div_ceil(BLOCK_PULSES);
    let blocks: Vec<Vec<Record>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let start = b * BLOCK_PULSES;
            let end = (start + BLOCK_PULSES).min(n_pulses);
            sampler.run_block(seed, b, start, end)
        })
        .collect();
    let records = blocks.concat();
    Ok(EventStream {
        records,
        n_pulses,
        rep_rate_hz,
        seed,
    })
}

/// Joint per-pulse outcome distribution, conditioned on the pulse being
/// non-empty.
struct PulseSampler {
    /// P(pulse has at least one detection).
    occupied: f64,
    /// ln(1 − occupied), for geometric gaps.
    log_empty: f64,
    /// Cumulative thresholds for pair, S only, aS only (rest: both unpaired).
    cut_pair: f64,
    cut_s: f64,
    cut_as: f64,
}

impl PulseSampler {
    fn new(p: &ChannelProbabilities) -> Self {
        let rest = 1.0 - p.p_pair;
        let s_only = rest * p.p_s * (1.0 - p.p_as);
        let as_only = rest * (1.0 - p.p_s) * p.p_as;
        let both = rest * p.p_s * p.p_as;
        let occupied = (p.p_pair + s_only + as_only + both).min(1.0);
        PulseSampler {
            occupied,
            log_empty: (-occupied).ln_1p(),
            cut_pair: p.p_pair,
            cut_s: p.p_pair + s_only,
            cut_as: p.p_pair + s_only + as_only,
        }
    }

    fn run_block(&self, seed: u64, block: u64, start: u64, end: u64) -> Vec<Record> {
        let mut out = Vec::new();
        if self.occupied <= 0.0 {
            return out;
        }
        let mut rng = block_rng(seed, block);
        let mut pulse = start;
        loop {
            if self.occupied < 1.0 {
                // U in (0, 1]
                let u = 1.0 - rng.random::<f64>();
                let gap = (u.ln() / self.log_empty).floor();
                if gap >= (end - pulse) as f64 {
                    break;
                }
                pulse += gap as u64;
            }
            if pulse >= end {
                break;
            }
            let v = rng.random::<f64>() * self.occupied;
            let (s, a) = if v < self.cut_pair {
                (true, true)
            } else if v < self.cut_s {
                (true, false)
            } else if v < self.cut_as {
                (false, true)
            } else {
                (true, true)
            };
            if s {
                out.push(Record::new(pulse, Channel::Stokes));
            }
            if a {
                out.push(Record::new(pulse, Channel::AntiStokes));
            }
            pulse += 1;
        }
        out
    }
}

/// Sorted union of two streams over the same pulse train, collapsing
/// duplicate (pulse, channel) records. The result keeps `a`'s seed.
pub fn merge_streams(a: &EventStream, b: &EventStream) -> Result<EventStream> {
    if a.n_pulses != b.n_pulses || a.rep_rate_hz != b.rep_rate_hz {
        return Err(Error::invalid(format!(
            "cannot merge streams over different pulse trains ({} @ {} Hz vs {} @ {} Hz)",
            a.n_pulses, a.rep_rate_hz, b.n_pulses, b.rep_rate_hz
        )));
    }
    let mut records = Vec::with_capacity(a.records.len() + b.records.len());
    let (mut i, mut j) = (0, 0);
    while i < a.records.len() && j < b.records.len() {
        let (x, y) = (a.records[i], b.records[j]);
        match x.cmp(&y) {
            std::cmp::Ordering::Less => {
                records.push(x);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                records.push(y);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                records.push(x);
                i += 1;
                j += 1;
            }
        }
    }
    records.extend_from_slice(&a.records[i..]);
    records.extend_from_slice(&b.records[j..]);
    Ok(EventStream {
        records,
        n_pulses: a.n_pulses,
        rep_rate_hz: a.rep_rate_hz,
        seed: a.seed,
    })
}
