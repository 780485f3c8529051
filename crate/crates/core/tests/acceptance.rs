//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sas_core::coincidence::{extract_correlated_rate, histogram, Histogrammer};
use sas_core::fitting::{fit_power_law, fit_step_constants};
use sas_core::physics::{
    delta_k, interaction_amplitude_from_rate, pair_rate, photons_per_pulse, CollectionConfig, LaserConfig, MaterialModel,
};
use sas_core::report::build_report;
use sas_core::sim::{simulate, ChannelProbabilities};
use sas_core::spatial::{fit_profile, ratio_curve, ApertureChannel, ApertureCurve, SpatialProfile};
use sas_core::stream::{write_records, Channel, EventStream, Record, RecordReader, StreamFormat};
use sas_core::synth::{self, SpectralSynth};

const REP: f64 = 76e6;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within_time(o: Outcome, elapsed: Duration, limit_s: f64) -> Outcome {
    let t = elapsed.as_secs_f64();
    outcome(o.pass && t < limit_s, format!("{}; {t:.2} s (limit {limit_s} s)", o.detail))
}

fn c1_photons_per_pulse() -> Outcome {
    let a2 = photons_per_pulse(&LaserConfig::reference());
    let rel = (a2 / 1.8e9 - 1.0).abs();
    outcome(rel <= 0.10, format!("|alpha|^2 = {a2:.4e}, {:.1}% from 1.8e9 (tol 10%)", rel * 100.0))
}

fn c2_interaction_energy() -> Outcome {
    let laser = LaserConfig::reference();
    let delta = interaction_amplitude_from_rate(20.0, 26.0 / 1332.0, &laser).unwrap();
    let v0 = delta / 1.8e9;
    let delta_ok = (delta / 1.21e-5 - 1.0).abs() < 0.005 && delta >= 1e-5;
    let v0_ok = (v0 / 6.7e-15 - 1.0).abs() < 0.005 && (0.5e-14..=2e-14).contains(&v0);
    outcome(
        delta_ok && v0_ok,
        format!("delta = {delta:.4e} eV (1.21e-5, >= 1e-5), V0 = {v0:.3e} eV (6.7e-15, within x/÷2 of 1e-14)"),
    )
}

fn c3_rate_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let laser = LaserConfig::new(
            rng.random_range(300.0..1100.0),
            rng.random_range(1e-14..1e-11),
            rng.random_range(1e6..1e9),
            rng.random_range(1e-4..1.0),
        )
        .unwrap();
        let dk = rng.random_range(1e-3..1.0);
        let rate = 10f64.powf(rng.random_range(-3.0..6.0));
        let delta = interaction_amplitude_from_rate(rate, dk, &laser).unwrap();
        let v0 = delta / photons_per_pulse(&laser);
        let back = pair_rate(&laser, v0, dk);
        worst = worst.max((back / rate - 1.0).abs());
    }
    outcome(worst <= 1e-12, format!("max relative error {worst:.2e} over 1000 inputs (tol 1e-12)"))
}

fn c4_null() -> Outcome {
    let probs = ChannelProbabilities::new(1e-3, 1e-3, 0.0).unwrap();
    let mut passing = 0;
    for seed in 0..100 {
        let h = histogram(&simulate(&probs, 10_000_000, REP, seed).unwrap(), 50).unwrap();
        let r = extract_correlated_rate(&h).unwrap();
        let g2 = r.g2_zero.unwrap_or(f64::NAN);
        let c0 = h.zero_bin() as f64;
        let sigma_g2 = g2 * (1.0 / c0 + 1.0 / (100.0 * h.mean_off_zero())).sqrt();
        if (g2 - 1.0).abs() < 5.0 * sigma_g2 && r.corr_rate.abs() < 5.0 * r.uncertainty {
            passing += 1;
        }
    }
    outcome(passing >= 99, format!("{passing}/100 seeds with g2(0) = 1 within 5 sigma and |corr| < 5 sigma (need 99)"))
}

fn c5_injection() -> Outcome {
    let mut worst = 0.0f64;
    let mut pass = true;
    for (k, p_pair) in [1e-6, 1e-5, 1e-4].into_iter().enumerate() {
        let probs = ChannelProbabilities::new(1e-3, 1e-3, p_pair).unwrap();
        let h = histogram(&simulate(&probs, 10_000_000, REP, 500 + k as u64).unwrap(), 50).unwrap();
        let r = extract_correlated_rate(&h).unwrap();
        let z = (r.corr_rate - p_pair * REP).abs() / r.uncertainty;
        worst = worst.max(z);
        pass &= z < 5.0;
    }
    outcome(pass, format!("worst deviation {worst:.2} sigma over p_pair in {{1e-6, 1e-5, 1e-4}} (tol 5)"))
}

fn brute_force(records: &[Record], d: i64) -> Vec<u64> {
    let mut counts = vec![0u64; 2 * d as usize + 1];
    for s in records.iter().filter(|r| r.channel == Channel::Stokes) {
        for a in records.iter().filter(|r| r.channel == Channel::AntiStokes) {
            let delay = a.pulse as i64 - s.pulse as i64;
            if delay.abs() <= d {
                counts[(delay + d) as usize] += 1;
            }
        }
    }
    counts
}

fn c6_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mismatches = 0;
    for case in 0..100 {
        let target = if case % 10 == 0 { 10_000 } else { rng.random_range(1..3000) };
        let density: f64 = rng.random_range(0.01..0.6);
        let mut recs = Vec::new();
        let mut p = 0u64;
        while recs.len() < target {
            for ch in [Channel::Stokes, Channel::AntiStokes] {
                if recs.len() < target && rng.random::<f64>() < density {
                    recs.push(Record::new(p, ch));
                }
            }
            p += 1;
        }
        let d = rng.random_range(1..=60u64);
        let stream = EventStream { records: recs, n_pulses: p, rep_rate_hz: REP, seed: 0 };
        if histogram(&stream, d).unwrap().counts != brute_force(&stream.records, d as i64) {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("{mismatches} mismatches over 100 streams of up to 1e4 records"))
}

fn c7_spectral() -> Outcome {
    let m = MaterialModel::diamond();
    let (l, c) = (LaserConfig::reference(), CollectionConfig::default());
    let noisy = fit_step_constants(&synth::spectral_series(&SpectralSynth::diamond(0.05, 1), &m, &l, &c).unwrap(), &m).unwrap();
    let exact = fit_step_constants(&synth::spectral_series(&SpectralSynth::diamond(0.0, 1), &m, &l, &c).unwrap(), &m).unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, truth) in [("C1", m.coupling_c1), ("C2", m.coupling_c2)] {
        let p = noisy.get(name).unwrap();
        let z = (p.value - truth).abs() / p.std_error;
        let rel = (exact.value(name) / truth - 1.0).abs();
        pass &= z <= 2.0 && rel < 5e-7;
        detail.push(format!("{name}: {:.4e} ({z:.2} se, tol 2), noiseless rel err {rel:.1e} (tol 5e-7)", p.value));
    }
    outcome(pass, detail.join("; "))
}

fn c8_power_law() -> Outcome {
    let m = MaterialModel::diamond();
    let band = &m.bands[0];
    let dk = delta_k(&CollectionConfig::default(), band).unwrap();
    let powers: Vec<f64> = (1..=8).map(|i| 0.005 * i as f64).collect();
    let pts = synth::power_series(&LaserConfig::reference(), band.v0_ev, dk, &powers, 600.0, 8).unwrap();
    let fit = fit_power_law(&pts).unwrap();
    let b = fit.get("exponent").unwrap();
    outcome((b.value - 2.0).abs() <= 0.1, format!("exponent {:.4} +/- {:.4} over 5-40 mW (target 2.0 +/- 0.1)", b.value, b.std_error))
}

fn c9_aperture() -> Outcome {
    let mut worst = 0.0f64;
    for &(w, s1, s2) in &[(0.3, 1.0, 4.0), (0.5, 0.5, 2.5), (0.7, 1.5, 6.0), (0.2, 0.8, 3.2)] {
        let truth = SpatialProfile::double(w, s1, s2).unwrap();
        let curve = synth::aperture_curve(&truth, 40, 3.0 * s2, ApertureChannel::AntiStokes).unwrap();
        match fit_profile(&curve, 2) {
            Ok(f) => {
                let c = &f.profile.components;
                for (got, want) in [(c[0].weight, w), (c[0].sigma_mm, s1), (c[1].sigma_mm, s2)] {
                    worst = worst.max((got / want - 1.0).abs());
                }
            }
            Err(_) => worst = f64::INFINITY,
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut monotone = 0;
    for _ in 0..100 {
        let w = rng.random_range(0.05..0.95);
        let narrow = rng.random_range(0.1..3.0);
        let wide = narrow * rng.random_range(1.5..10.0);
        let radii: Vec<f64> = (1..=60).map(|i| 12.0 * wide * i as f64 / 60.0).collect();
        let s = ApertureCurve::from_profile(&SpatialProfile::single(wide).unwrap(), &radii, ApertureChannel::S).unwrap();
        let a = ApertureCurve::from_profile(&SpatialProfile::double(w, narrow, wide).unwrap(), &radii, ApertureChannel::AntiStokes).unwrap();
        let r: Vec<f64> = ratio_curve(&s, &a).unwrap().points.iter().map(|p| p.1).collect();
        if r[0] < 1.0 && r.windows(2).all(|p| p[1] >= p[0] - 1e-12) && (r.last().unwrap() - 1.0).abs() < 1e-6 {
            monotone += 1;
        }
    }
    outcome(
        worst < 0.02 && monotone == 100,
        format!("worst parameter error {:.2e} (tol 2%); ratio monotone to 1 on {monotone}/100 profiles", worst),
    )
}

fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

fn c10_throughput() -> Outcome {
    let n = 100_000_000u64;
    let probs = ChannelProbabilities::new(1e-4, 1e-4, 0.0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.bin");
    let start = Instant::now();
    let stream = simulate(&probs, n, REP, 10).unwrap();
    write_records(&path, &stream.records, StreamFormat::Bin).unwrap();
    let n_records = stream.records.len();
    drop(stream);
    let mut h = Histogrammer::new(50).unwrap();
    for r in RecordReader::open(&path, None).unwrap() {
        h.push(r.unwrap()).unwrap();
    }
    let hist = h.finish(n, REP).unwrap();
    let r = extract_correlated_rate(&hist).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let rss = peak_rss_bytes();
    let rss_ok = rss.is_some_and(|b| b < 1 << 30);
    outcome(
        elapsed < 120.0 && rss_ok && r.g2_zero.is_some(),
        format!(
            "1e8 pulses, {n_records} records, simulate+write+read+correlate in {elapsed:.2} s (limit 120 s), peak RSS {} (limit 1 GiB)",
            rss.map_or("unavailable".to_string(), |b| format!("{:.1} MiB", b as f64 / (1 << 20) as f64))
        ),
    )
}

fn c11_report() -> Outcome {
    let r = build_report(&LaserConfig::reference(), 20.0, 26.0 / 1332.0, true, None).unwrap();
    let ppp = r.pairs_per_incident_photon;
    let tbg = r.tbg_delta_ev.unwrap();
    outcome(
        (1e-16..=1e-15).contains(&ppp) && (1e-4..=1e-3).contains(&tbg),
        format!("pairs per incident photon {ppp:.3e} (in [1e-16, 1e-15]); TBG delta {:.3} meV (in [0.1, 1])", tbg * 1e3),
    )
}

/// Name, check, and wall-time limit in seconds where one applies.
type Criterion = (&'static str, fn() -> Outcome, Option<f64>);

fn main() {
    let criteria: [Criterion; 11] = [
        ("photons per pulse", c1_photons_per_pulse, None),
        ("interaction-energy chain", c2_interaction_energy, None),
        ("pair-rate round trip", c3_rate_round_trip, Some(1.0)),
        ("null coincidence test", c4_null, Some(60.0)),
        ("injection recovery", c5_injection, Some(60.0)),
        ("correlator oracle", c6_oracle, Some(10.0)),
        ("spectral-constant recovery", c7_spectral, Some(5.0)),
        ("power-law exponent", c8_power_law, Some(5.0)),
        ("aperture fits", c9_aperture, Some(10.0)),
        ("throughput", c10_throughput, None),
        ("report numbers", c11_report, None),
    ];
    let mut failures = 0;
    for (i, (name, run, limit)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let mut o = run();
        if let Some(limit) = limit {
            o = within_time(o, start.elapsed(), limit);
        }
        if !o.pass {
            failures += 1;
        }
        println!("{} criterion {:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("{} of 11 criteria passed", 11 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
