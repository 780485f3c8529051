//! Delay histograms between the S and aS detectors, g², and the
//! correlated-rate extraction (zero-delay rate minus the mean rate at all
//! other delays).
//!
//! Delays are in pulses: bin `d` counts pairs (S at pulse i, aS at pulse i+d)
//! for d in [−D, D].

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::{Channel, EventStream, Record};

/// Default half-width of the delay window, in pulses (≈ 650 ns at 76 MHz).
pub const DEFAULT_MAX_DELAY: u64 = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceHistogram {
    pub max_delay: u64,
    /// `2·max_delay + 1` bins, index `d + max_delay`.
    pub counts: Vec<u64>,
    pub n_pulses: u64,
    pub accumulation_time_s: f64,
    pub total_s: u64,
    pub total_as: u64,
}

impl CoincidenceHistogram {
    pub fn count(&self, delay: i64) -> u64 {
        let idx = delay + self.max_delay as i64;
        self.counts[idx as usize]
    }

    pub fn delays(&self) -> impl Iterator<Item = i64> + '_ {
        let d = self.max_delay as i64;
        -d..=d
    }

    pub fn zero_bin(&self) -> u64 {
        self.counts[self.max_delay as usize]
    }

    /// Mean count over the `2D` bins with d ≠ 0.
    pub fn mean_off_zero(&self) -> f64 {
        let off: u64 = self.counts.iter().sum::<u64>() - self.zero_bin();
        off as f64 / (2 * self.max_delay) as f64
    }
}

/// Incremental histogram builder.
///
/// Records must arrive in stream order; they may be fed in chunks of any
/// size. Memory is bounded by the detections inside the last `D` pulses,
/// which are carried across chunk boundaries.
#[derive(Debug, Clone)]
pub struct Histogrammer {
    max_delay: u64,
    counts: Vec<u64>,
    recent_s: VecDeque<u64>,
    recent_as: VecDeque<u64>,
    last: Option<Record>,
    total_s: u64,
    total_as: u64,
}

impl Histogrammer {
    pub fn new(max_delay: u64) -> Result<Self> {
        if max_delay == 0 {
            return Err(Error::invalid("max_delay must be >= 1"));
        }
        Ok(Histogrammer {
            max_delay,
            counts: vec![0; 2 * max_delay as usize + 1],
            recent_s: VecDeque::new(),
            recent_as: VecDeque::new(),
            last: None,
            total_s: 0,
            total_as: 0,
        })
    }

    pub fn push(&mut self, record: Record) -> Result<()> {
        if let Some(prev) = self.last {
            if record <= prev {
                return Err(Error::invalid(format!(
                    "record ({}, {}) out of stream order",
                    record.pulse,
                    record.channel.label()
                )));
            }
        }
        self.last = Some(record);
        let p = record.pulse;
        let horizon = p.saturating_sub(self.max_delay);
        while self.recent_s.front().is_some_and(|&q| q < horizon) {
            self.recent_s.pop_front();
        }
        while self.recent_as.front().is_some_and(|&q| q < horizon) {
            self.recent_as.pop_front();
        }
        let d_max = self.max_delay as usize;
        match record.channel {
            Channel::Stokes => {
                // earlier aS at q: delay q − p < 0
                for &q in &self.recent_as {
                    self.counts[d_max - (p - q) as usize] += 1;
                }
                self.recent_s.push_back(p);
                self.total_s += 1;
            }
            Channel::AntiStokes => {
                // earlier or same-pulse S at q: delay p − q ≥ 0
                for &q in &self.recent_s {
                    self.counts[d_max + (p - q) as usize] += 1;
                }
                self.recent_as.push_back(p);
                self.total_as += 1;
            }
        }
        Ok(())
    }

    pub fn feed(&mut self, records: &[Record]) -> Result<()> {
        records.iter().try_for_each(|&r| self.push(r))
    }

    pub fn finish(self, n_pulses: u64, rep_rate_hz: f64) -> Result<CoincidenceHistogram> {
        if let Some(last) = self.last {
            if last.pulse >= n_pulses {
                return Err(Error::invalid(format!(
                    "record at pulse {} outside stream of {n_pulses} pulses",
                    last.pulse
                )));
            }
        }
        if !(rep_rate_hz > 0.0) {
            return Err(Error::invalid("repetition rate must be > 0"));
        }
        Ok(CoincidenceHistogram {
            max_delay: self.max_delay,
            counts: self.counts,
            n_pulses,
            accumulation_time_s: n_pulses as f64 / rep_rate_hz,
            total_s: self.total_s,
            total_as: self.total_as,
        })
    }
}

/// Delay histogram of a whole stream in one pass.
pub fn histogram(stream: &EventStream, max_delay: u64) -> Result<CoincidenceHistogram> {
    let mut h = Histogrammer::new(max_delay)?;
    h.feed(&stream.records)?;
    h.finish(stream.n_pulses, stream.rep_rate_hz)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelatedRateResult {
    /// Coincidence rate at zero delay (counts/s).
    pub rate_zero: f64,
    /// Mean coincidence rate over non-zero delays (counts/s).
    pub baseline: f64,
    /// `rate_zero − baseline`.
    pub corr_rate: f64,
    /// Sum of the Poisson errors of both terms (counts/s).
    pub uncertainty: f64,
    /// `rate_zero / baseline`, when the baseline is non-zero.
    pub g2_zero: Option<f64>,
}

/// Correlated pair rate from a delay histogram.
///
/// The uncertainty adds `sqrt(N)` of the zero-delay bin and of the mean
/// off-zero bin linearly (not in quadrature), both divided by the
/// accumulation time.
pub fn extract_correlated_rate(h: &CoincidenceHistogram) -> Result<CorrelatedRateResult> {
    let c0 = h.zero_bin() as f64;
    let mean_off = h.mean_off_zero();
    if mean_off == 0.0 && c0 > 0.0 {
        return Err(Error::invalid(
            "all non-zero-delay bins are empty; baseline undefined",
        ));
    }
    let t = h.accumulation_time_s;
    if c0 == 0.0 && mean_off == 0.0 {
        return Ok(CorrelatedRateResult {
            rate_zero: 0.0,
            baseline: 0.0,
            corr_rate: 0.0,
            uncertainty: 0.0,
            g2_zero: None,
        });
    }
    let rate_zero = c0 / t;
    let baseline = mean_off / t;
    Ok(CorrelatedRateResult {
        rate_zero,
        baseline,
        corr_rate: rate_zero - baseline,
        uncertainty: (c0.sqrt() + mean_off.sqrt()) / t,
        g2_zero: Some(c0 / mean_off),
    })
}

/// g²(d) for every delay in the histogram, normalized by the mean
/// off-zero count.
pub fn g2_curve(h: &CoincidenceHistogram) -> Result<Vec<(i64, f64)>> {
    let base = h.mean_off_zero();
    if !(base > 0.0) {
        return Err(Error::invalid("baseline is zero; g² undefined"));
    }
    Ok(h.delays().map(|d| (d, h.count(d) as f64 / base)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn stream(records: Vec<Record>, n: u64) -> EventStream {
        EventStream {
            records,
            n_pulses: n,
            rep_rate_hz: 1.0,
            seed: 0,
        }
    }

    fn hist_from_counts(counts: Vec<u64>, t: f64) -> CoincidenceHistogram {
        CoincidenceHistogram {
            max_delay: (counts.len() as u64 - 1) / 2,
            counts,
            n_pulses: t as u64,
            accumulation_time_s: t,
            total_s: 0,
            total_as: 0,
        }
    }

    #[test]
    fn single_same_pulse_pair() {
        let s = stream(vec![Record::new(7, Channel::Stokes), Record::new(7, Channel::AntiStokes)], 10);
        let h = histogram(&s, 3).unwrap();
        assert_eq!(h.counts, vec![0, 0, 0, 1, 0, 0, 0]);
    }

    #[test]
    fn empty_stream() {
        let h = histogram(&stream(vec![], 10), 5).unwrap();
        assert!(h.counts.iter().all(|&c| c == 0));
        let r = extract_correlated_rate(&h).unwrap();
        assert_eq!(r.corr_rate, 0.0);
        assert_eq!(r.g2_zero, None);
        assert!(histogram(&stream(vec![], 10), 0).is_err());
    }

    #[test]
    fn alternating_stream() {
        let records = (0..100u64)
            .map(|p| Record::new(p, if p % 2 == 0 { Channel::Stokes } else { Channel::AntiStokes }))
            .collect();
        let h = histogram(&stream(records, 100), 2).unwrap();
        // S at even i, aS at i+d: d = +1 works for all 50 S, d = −1 for all but i = 0
        assert_eq!(h.count(0), 0);
        assert_eq!(h.count(1), 50);
        assert_eq!(h.count(-1), 49);
        assert_eq!(h.count(2), 0);
    }

    #[test]
    fn out_of_order_is_rejected() {
        let mut h = Histogrammer::new(2).unwrap();
        h.push(Record::new(5, Channel::AntiStokes)).unwrap();
        assert!(h.push(Record::new(5, Channel::Stokes)).is_err());
        let s = stream(vec![Record::new(12, Channel::Stokes)], 10);
        assert!(histogram(&s, 2).is_err());
    }

    #[test]
    fn extraction_arithmetic() {
        let r = extract_correlated_rate(&hist_from_counts(vec![4, 4, 100, 4, 4], 1.0)).unwrap();
        assert_eq!(r.corr_rate, 96.0);
        assert_eq!(r.baseline, 4.0);
        assert_eq!(r.g2_zero, Some(25.0));
        assert_eq!(r.uncertainty, 12.0);
        assert_eq!(r.corr_rate, r.rate_zero - r.baseline);

        let flat = extract_correlated_rate(&hist_from_counts(vec![9; 7], 2.0)).unwrap();
        assert_eq!(flat.corr_rate, 0.0);
        assert_eq!(flat.g2_zero, Some(1.0));
        assert_relative_eq!(flat.uncertainty, 3.0, max_relative = 1e-15);

        assert!(extract_correlated_rate(&hist_from_counts(vec![0, 0, 5, 0, 0], 1.0)).is_err());
    }

    #[test]
    fn g2_curve_values() {
        let g = g2_curve(&hist_from_counts(vec![3; 5], 1.0)).unwrap();
        assert!(g.iter().all(|&(_, v)| v == 1.0));
        assert_eq!(g.iter().map(|&(d, _)| d).collect::<Vec<_>>(), vec![-2, -1, 0, 1, 2]);
        let g = g2_curve(&hist_from_counts(vec![3, 3, 6, 3, 3], 1.0)).unwrap();
        assert_eq!(g[2], (0, 2.0));
        assert!(g2_curve(&hist_from_counts(vec![0, 0, 6, 0, 0], 1.0)).is_err());
    }
}
