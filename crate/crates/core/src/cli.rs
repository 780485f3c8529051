//! The `sas` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 bad input data or configuration,
//! 3 a fit that did not converge (its best point is still written).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::coincidence::{extract_correlated_rate, Histogrammer, DEFAULT_MAX_DELAY};
use crate::config::{load_config, ExperimentConfig};
use crate::datafile::{self, POWER_HEADER, XSECTION_HEADER};
use crate::error::{Error, Result};
use crate::fitting::{
    fit_cross_section_scaling, fit_power_law, fit_step_constants, normalize_to_largest, step_band_gains,
    step_model_rate, FitResult, SpectralRateSeries,
};
use crate::physics::{delta_k, photons_per_pulse, PotentialBand};
use crate::report::build_report;
use crate::sim::{derive_probabilities, simulate};
use crate::spatial::{fit_profile, transmitted_fraction, ApertureChannel, ApertureCurve, ProfileFit, ProfileFitError, SpatialProfile};
use crate::stream::{write_records, Channel, RecordReader, StreamFormat};
use crate::synth;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NOT_CONVERGED: u8 = 3;

const DEFAULT_OUTPUT_DIR: &str = "sas-out";

#[derive(Debug, Parser)]
#[command(name = "sas", version, about = "Simulate and analyse correlated Stokes/anti-Stokes photon pairs")]
pub struct Cli {
    /// RNG seed for `simulate` and `synth` (overrides the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Directory for output files; created if missing.
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,

    /// Event-stream encoding: what `simulate` writes and how `correlate`
    /// reads (auto-detected when omitted). Other outputs are always CSV.
    #[arg(long, global = true, value_enum)]
    pub format: Option<StreamFormat>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a detection stream from a config; writes events.{csv,bin} and summary.json.
    Simulate(SimulateArgs),
    /// Histogram S/aS delays in a stream; writes histogram.csv and correlation.json.
    Correlate(CorrelateArgs),
    /// Fit a dataset; writes fit.json and model.csv.
    Fit(FitArgs),
    /// Derive interaction energies from a correlated rate; writes report.txt and report.csv.
    Report(ReportArgs),
    /// Write a seeded synthetic dataset for `fit`.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Experiment config (TOML). Defaults to the built-in diamond setup.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    /// Event-stream file (CSV or binary).
    pub stream: PathBuf,
    /// Half-width of the delay window, in pulses.
    #[arg(long, default_value_t = DEFAULT_MAX_DELAY)]
    pub max_delay: u64,
    /// Laser repetition rate; converts pulses to seconds.
    #[arg(long, default_value_t = 76e6)]
    pub rep_rate_hz: f64,
    /// Pulses in the stream. Defaults to one past the last record.
    #[arg(long)]
    pub n_pulses: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DataKind {
    Spectral,
    Aperture,
    Power,
    Xsection,
}

impl DataKind {
    fn name(self) -> &'static str {
        match self {
            DataKind::Spectral => "spectral",
            DataKind::Aperture => "aperture",
            DataKind::Power => "power",
            DataKind::Xsection => "xsection",
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    pub kind: DataKind,
    /// Data CSV. Headers: spectral `shift_cm1,corr_rate_cps,uncertainty_cps`;
    /// aperture `radius_mm,intensity`; power `power_w,rate_cps,uncertainty_cps`;
    /// xsection `area_sq,rate_cps,uncertainty_cps`.
    pub data: PathBuf,
    /// Experiment config supplying laser, collection and material (spectral fits).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Gaussian components for aperture fits.
    #[arg(long, default_value_t = 2)]
    pub components: usize,
    /// Photon population of an aperture curve.
    #[arg(long, value_enum, default_value = "aS")]
    pub channel: ApertureChannel,
    /// Express cross-section points relative to the largest-area point.
    #[arg(long)]
    pub normalize: bool,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["rate", "correlation"])))]
pub struct ReportArgs {
    /// Experiment config supplying laser, collection and material.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Correlated pair rate in counts/s.
    #[arg(long)]
    pub rate: Option<f64>,
    /// correlation.json written by `correlate`.
    #[arg(long)]
    pub correlation: Option<PathBuf>,
    /// fit.json of a power fit, to quote the fitted exponent.
    #[arg(long)]
    pub power_fit: Option<PathBuf>,
    /// Add the twisted-bilayer-graphene projection.
    #[arg(long)]
    pub tbg: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    pub kind: DataKind,
    /// Experiment config supplying laser, collection and material.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Relative Gaussian noise on spectral rates.
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    /// Counting time per point for Poisson noise (power, xsection).
    #[arg(long, default_value_t = 600.0)]
    pub accumulation_s: f64,
    /// Narrow-component weight of the aperture profile.
    #[arg(long, default_value_t = 0.3)]
    pub weight: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma1_mm: f64,
    #[arg(long, default_value_t = 4.0)]
    pub sigma2_mm: f64,
    /// Aperture radii, equally spaced up to --max-radius-mm.
    #[arg(long, default_value_t = 40)]
    pub points: usize,
    #[arg(long, default_value_t = 12.0)]
    pub max_radius_mm: f64,
    /// Correlated rate at unit squared area (xsection).
    #[arg(long, default_value_t = 20.0)]
    pub slope_cps: f64,
}

/// Failure of a subcommand, carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NonConvergence(_) => EXIT_NOT_CONVERGED,
            _ => EXIT_DATA,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("sas: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

pub fn execute(cli: &Cli) -> std::result::Result<(), Failure> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(cli, a),
        Command::Correlate(a) => cmd_correlate(cli, a),
        Command::Fit(a) => cmd_fit(cli, a),
        Command::Report(a) => cmd_report(cli, a),
        Command::Synth(a) => cmd_synth(cli, a),
    }
}

fn load(config: &Option<PathBuf>) -> Result<ExperimentConfig> {
    match config {
        Some(p) => load_config(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn output_dir(cli: &Cli, cfg: Option<&ExperimentConfig>) -> Result<PathBuf> {
    let dir = match (&cli.output_dir, cfg) {
        (Some(d), _) => d.clone(),
        (None, Some(c)) => c.output.dir.clone(),
        (None, None) => PathBuf::from(DEFAULT_OUTPUT_DIR),
    };
    fs::create_dir_all(&dir).map_err(|e| Error::Config(format!("cannot create output directory {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::invalid(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn collection_band(cfg: &ExperimentConfig) -> Result<&PotentialBand> {
    let center = cfg.collection.stokes_center_cm1;
    cfg.material
        .band_for(center)
        .ok_or_else(|| Error::Config(format!("stokes_center_cm1 = {center} lies outside every band of `{}`", cfg.material.name)))
}

fn cmd_simulate(cli: &Cli, a: &SimulateArgs) -> std::result::Result<(), Failure> {
    let cfg = load(&a.config)?;
    let dir = output_dir(cli, a.config.as_ref().map(|_| &cfg))?;
    let seed = cli.seed.unwrap_or(cfg.simulation.seed);
    let format = cli.format.unwrap_or(cfg.output.format);
    let sim = &cfg.simulation;

    let base = match cfg.probabilities {
        Some(p) => p,
        None => derive_probabilities(&cfg.laser, &cfg.material, &cfg.collection, cfg.stokes_window)?,
    };
    let probs = base.with_dark_counts(sim.dark_prob_s, sim.dark_prob_as)?;
    let stream = simulate(&probs, sim.n_pulses, cfg.laser.rep_rate_hz, seed)?;

    let events_name = format!("events.{}", format.extension());
    write_records(&dir.join(&events_name), &stream.records, format)?;

    let expected = probs.expected(sim.n_pulses);
    let observed = json!({
        "stokes": stream.count(Channel::Stokes),
        "anti_stokes": stream.count(Channel::AntiStokes),
        "same_pulse": stream.same_pulse_coincidences(),
    });
    let summary = json!({
        "events_file": events_name,
        "seed": seed,
        "n_pulses": sim.n_pulses,
        "rep_rate_hz": cfg.laser.rep_rate_hz,
        "duration_s": stream.duration_s(),
        "material": cfg.material.name,
        "stokes_window_cm1": [cfg.stokes_window.0, cfg.stokes_window.1],
        "photons_per_pulse": photons_per_pulse(&cfg.laser),
        "probabilities": probs,
        "expected": expected,
        "observed": observed,
    });
    write_json(&dir.join("summary.json"), &summary)?;
    println!(
        "{} pulses, {} records -> {}\nphotons per pulse {:.4e}\nS: expected {:.1}, observed {}\naS: expected {:.1}, observed {}\nsame-pulse: expected {:.1}, observed {}",
        sim.n_pulses,
        stream.records.len(),
        dir.join(&events_name).display(),
        photons_per_pulse(&cfg.laser),
        expected.stokes,
        observed["stokes"],
        expected.anti_stokes,
        observed["anti_stokes"],
        expected.same_pulse,
        observed["same_pulse"],
    );
    Ok(())
}

fn cmd_correlate(cli: &Cli, a: &CorrelateArgs) -> std::result::Result<(), Failure> {
    let dir = output_dir(cli, None)?;
    let mut h = Histogrammer::new(a.max_delay)?;
    let mut last_pulse = None;
    for record in RecordReader::open(&a.stream, cli.format)? {
        let record = record?;
        h.push(record)?;
        last_pulse = Some(record.pulse);
    }
    let n_pulses = a.n_pulses.unwrap_or_else(|| last_pulse.map_or(0, |p| p + 1));
    let hist = h.finish(n_pulses, a.rep_rate_hz)?;

    let base = hist.mean_off_zero();
    let mut csv = String::from("delay_pulses,counts,g2\n");
    for d in hist.delays() {
        let c = hist.count(d);
        if base > 0.0 {
            csv.push_str(&format!("{d},{c},{}\n", c as f64 / base));
        } else {
            csv.push_str(&format!("{d},{c},\n"));
        }
    }
    fs::write(dir.join("histogram.csv"), csv).map_err(Error::from)?;
    let result = extract_correlated_rate(&hist)?;

    let report = json!({
        "stream": a.stream.display().to_string(),
        "n_pulses": n_pulses,
        "rep_rate_hz": a.rep_rate_hz,
        "accumulation_time_s": hist.accumulation_time_s,
        "max_delay": a.max_delay,
        "total_s": hist.total_s,
        "total_as": hist.total_as,
        "zero_bin": hist.zero_bin(),
        "mean_off_zero": base,
        "result": result,
    });
    write_json(&dir.join("correlation.json"), &report)?;
    println!(
        "S {} aS {} over {:.3} s\nzero-delay rate {:.6} /s, baseline {:.6} /s\ncorrelated rate {:.6} +/- {:.6} /s, g2(0) {}",
        hist.total_s,
        hist.total_as,
        hist.accumulation_time_s,
        result.rate_zero,
        result.baseline,
        result.corr_rate,
        result.uncertainty,
        result.g2_zero.map_or("undefined".to_string(), |g| format!("{g:.4}")),
    );
    Ok(())
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

fn write_model(path: &Path, header: &str, rows: impl Iterator<Item = (f64, f64)>) -> Result<()> {
    let mut s = format!("{header}\n");
    for (x, y) in rows {
        s.push_str(&format!("{x},{y}\n"));
    }
    fs::write(path, s)?;
    Ok(())
}

fn print_fit(kind: DataKind, fit: &FitResult) {
    println!("{} fit: {} points, converged {}", kind.name(), fit.n_points, fit.converged);
    for p in &fit.parameters {
        if p.identifiable {
            println!("  {:<10} {:.6e} +/- {:.3e}", p.name, p.value, p.std_error);
        } else {
            println!("  {:<10} not identifiable from these data", p.name);
        }
    }
    if let Some(r) = fit.reduced_chi2() {
        println!("  reduced chi2 {r:.4}");
    }
}

fn cmd_fit(cli: &Cli, a: &FitArgs) -> std::result::Result<(), Failure> {
    let dir = output_dir(cli, None)?;
    let fit_path = dir.join("fit.json");
    let model_path = dir.join("model.csv");
    match a.kind {
        DataKind::Spectral => {
            let cfg = load(&a.config)?;
            let series = SpectralRateSeries {
                points: datafile::read_rate_series(&a.data)?,
                laser: cfg.laser,
                collection: cfg.collection,
            };
            let fit = fit_step_constants(&series, &cfg.material)?;
            let gains = step_band_gains(&cfg.laser, &cfg.collection, &cfg.material)?;
            let c: Vec<f64> = fit.parameters.iter().take(gains.len()).map(|p| if p.identifiable { p.value } else { 0.0 }).collect();
            let reach = series.points.iter().map(|p| p.shift_cm1.abs()).fold(3000.0, f64::max);
            write_model(
                &model_path,
                "shift_cm1,model_rate_cps",
                linspace(-reach, reach, 1201).map(|s| (s, step_model_rate(s, &gains, &cfg.material, &c))),
            )?;
            write_json(&fit_path, &json!({ "kind": "spectral", "material": cfg.material.name, "fit": fit }))?;
            print_fit(a.kind, &fit);
        }
        DataKind::Aperture => {
            let curve = ApertureCurve::new(datafile::read_aperture(&a.data)?, a.channel)?;
            let (pf, failure) = match fit_profile(&curve, a.components) {
                Ok(pf) => (pf, None),
                Err(ProfileFitError::Invalid(e)) => return Err(e.into()),
                Err(ProfileFitError::NotConverged { reason, best }) => (*best, Some(reason)),
            };
            let r_max = curve.points.last().map_or(1.0, |p| p.radius_mm);
            write_aperture_fit(&fit_path, &model_path, &pf, a, r_max)?;
            print_fit(a.kind, &pf.fit);
            if let Some(reason) = failure {
                return Err(Error::NonConvergence(reason).into());
            }
        }
        DataKind::Power => {
            let pts = datafile::read_scaling(&a.data, POWER_HEADER)?;
            let fit = fit_power_law(&pts)?;
            let (amp, b) = (fit.value("amplitude"), fit.value("exponent"));
            let lo = pts.iter().map(|p| p.x).filter(|&x| x > 0.0).fold(f64::INFINITY, f64::min);
            let hi = pts.iter().map(|p| p.x).fold(0.0, f64::max);
            write_model(
                &model_path,
                "power_w,model_rate_cps",
                linspace(lo.ln(), hi.ln(), 101).map(|lx| (lx.exp(), amp * lx.exp().powf(b))),
            )?;
            write_json(&fit_path, &json!({ "kind": "power", "fit": fit }))?;
            print_fit(a.kind, &fit);
        }
        DataKind::Xsection => {
            let mut pts = datafile::read_scaling(&a.data, XSECTION_HEADER)?;
            if a.normalize {
                pts = normalize_to_largest(&pts)?;
            }
            let fit = fit_cross_section_scaling(&pts)?;
            let slope = fit.value("slope");
            let hi = pts.iter().map(|p| p.x).fold(0.0, f64::max);
            write_model(&model_path, "area_sq,model_rate_cps", linspace(0.0, hi, 101).map(|x| (x, slope * x)))?;
            write_json(&fit_path, &json!({ "kind": "xsection", "normalized": a.normalize, "fit": fit }))?;
            print_fit(a.kind, &fit);
        }
    }
    Ok(())
}

fn write_aperture_fit(fit_path: &Path, model_path: &Path, pf: &ProfileFit, a: &FitArgs, r_max: f64) -> Result<()> {
    write_model(
        model_path,
        "radius_mm,model_intensity",
        linspace(0.0, r_max, 201).map(|r| (r, transmitted_fraction(&pf.profile, r))),
    )?;
    write_json(
        fit_path,
        &json!({
            "kind": "aperture",
            "channel": a.channel,
            "components": a.components,
            "profile": pf.profile,
            "fit": pf.fit,
        }),
    )
}

fn cmd_report(cli: &Cli, a: &ReportArgs) -> std::result::Result<(), Failure> {
    let cfg = load(&a.config)?;
    let dir = output_dir(cli, None)?;
    let rate = match (a.rate, &a.correlation) {
        (Some(r), _) => r,
        (None, Some(path)) => {
            let v = read_json(path)?;
            v["result"]["corr_rate"]
                .as_f64()
                .ok_or_else(|| Error::invalid(format!("{}: no result.corr_rate", path.display())))?
        }
        (None, None) => unreachable!("clap requires --rate or --correlation"),
    };
    let rate = if rate < 0.0 {
        eprintln!("sas: correlated rate {rate} is negative; reporting 0");
        0.0
    } else {
        rate
    };
    let power_fit: Option<FitResult> = match &a.power_fit {
        Some(path) => Some(
            serde_json::from_value(read_json(path)?["fit"].clone())
                .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?,
        ),
        None => None,
    };
    let dk = delta_k(&cfg.collection, collection_band(&cfg)?)?;
    let report = build_report(&cfg.laser, rate, dk, a.tbg, power_fit.as_ref())?;
    let text = report.to_text();
    fs::write(dir.join("report.txt"), &text).map_err(Error::from)?;
    fs::write(dir.join("report.csv"), report.to_csv()).map_err(Error::from)?;
    print!("{text}");
    Ok(())
}

fn read_json(path: &Path) -> Result<serde_json::Value> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn cmd_synth(cli: &Cli, a: &SynthArgs) -> std::result::Result<(), Failure> {
    let cfg = load(&a.config)?;
    let dir = output_dir(cli, None)?;
    let seed = cli.seed.unwrap_or(0);
    let data_path = dir.join(format!("{}.csv", a.kind.name()));
    let generator = match a.kind {
        DataKind::Spectral => {
            let params = synth::SpectralSynth {
                c1: cfg.material.coupling_c1,
                c2: cfg.material.coupling_c2,
                noise_rel: a.noise,
                ..synth::SpectralSynth::diamond(a.noise, seed)
            };
            let series = synth::spectral_series(&params, &cfg.material, &cfg.laser, &cfg.collection)?;
            datafile::write_rate_series(&data_path, &series.points)?;
            json!({ "kind": "spectral", "material": cfg.material.name, "generator": params })
        }
        DataKind::Power => {
            let band = collection_band(&cfg)?;
            let dk = delta_k(&cfg.collection, band)?;
            let powers: Vec<f64> = (1..=8).map(|i| 0.005 * i as f64).collect();
            let pts = synth::power_series(&cfg.laser, band.v0_ev, dk, &powers, a.accumulation_s, seed)?;
            datafile::write_scaling(&data_path, POWER_HEADER, &pts)?;
            json!({ "kind": "power", "v0_ev": band.v0_ev, "delta_k": dk, "accumulation_s": a.accumulation_s, "seed": seed })
        }
        DataKind::Aperture => {
            let profile = SpatialProfile::double(a.weight, a.sigma1_mm, a.sigma2_mm)?;
            let curve = synth::aperture_curve(&profile, a.points, a.max_radius_mm, ApertureChannel::AntiStokes)?;
            datafile::write_aperture(&data_path, &curve.points)?;
            json!({ "kind": "aperture", "profile": profile })
        }
        DataKind::Xsection => {
            let area_sq = [0.1, 0.25, 0.5, 0.75, 1.0];
            let pts = synth::cross_section_series(a.slope_cps, &area_sq, a.accumulation_s, seed)?;
            datafile::write_scaling(&data_path, XSECTION_HEADER, &pts)?;
            json!({ "kind": "xsection", "slope_cps": a.slope_cps, "accumulation_s": a.accumulation_s, "seed": seed })
        }
    };
    write_json(&dir.join(format!("{}.json", a.kind.name())), &generator)?;
    println!("wrote {}", data_path.display());
    Ok(())
}
