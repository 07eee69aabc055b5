//! Experiment configs, replicate ensembles and the CSV-producing commands.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path as FsPath, PathBuf};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::homogenize::{
    asymptotic_limits, calibration_ensemble, CalibrationReport, CalibrationSettings, SignChoice,
};
use crate::likelihood::{
    linear_estimate, mle_linear, mle_scan, DataMeta, EstimationResult, LikelihoodKind,
    LinearAccumulator, LinearSums, Method,
};
use crate::models::{CatalogEntry, CosineSeries, ModelFamily, DEFAULT_THETA_INTERVAL};
use crate::output::{fmt_f64, write_csv_row};
use crate::simulator::{
    run_replicates_with, simulate_multiscale_with, stationary_initial_state, write_meta,
    PathCsvWriter, ReplicateSpec, SampleSeries, SimSettings, Subsampler, DEFAULT_RESOLUTION,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const SWEEP_HEADER: &str = "alpha,delta,theta_hat_mean,theta_hat_se,n_replicates";
pub const BIAS_HEADER: &str =
    "theta,coarse_limit,e_inf_formula_magnitude,e_inf_simulated,sign_agreement";
pub const LIMITS_HEADER: &str = "theta,coarse_limit,full_limit";
pub const ESTIMATES_HEADER: &str =
    "replicate,seed,alpha,delta,method,theta_hat,degenerate,at_boundary";
pub const ARGMAX_HEADER: &str = "function,argmax,value,at_boundary";

/// Keys written to the manifest but not used as inputs.
const MANIFEST_ONLY_KEYS: [&str; 2] = ["version", "replicate_seeds"];

/// How `limits` signs the multiscale-potential bias term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SignSetting {
    /// Run the calibration ensemble and use the measured sign.
    Measured,
    Formula,
    Fixed(f64),
}

impl SignSetting {
    fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "measured" => Ok(SignSetting::Measured),
            "formula" => Ok(SignSetting::Formula),
            "+1" | "1" => Ok(SignSetting::Fixed(1.0)),
            "-1" => Ok(SignSetting::Fixed(-1.0)),
            other => Err(Error::Config(format!(
                "e_inf_sign must be measured, formula, +1 or -1, got `{other}`"
            ))),
        }
    }

    fn render(self) -> &'static str {
        match self {
            SignSetting::Measured => "measured",
            SignSetting::Formula => "formula",
            SignSetting::Fixed(s) if s > 0.0 => "+1",
            SignSetting::Fixed(_) => "-1",
        }
    }
}

/// Flat `key = value` experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub entry: ModelFamily,
    pub theta0: f64,
    pub epsilon: f64,
    /// Inverse temperature β.
    pub beta_inv: f64,
    pub p_coeffs: Vec<f64>,
    pub t_final: f64,
    pub resolution_factor: u32,
    pub burn_in_fraction: f64,
    pub alphas: Vec<f64>,
    pub replicates: usize,
    pub base_seed: u64,
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub output_dir: PathBuf,
    /// θ values tabulated by `bias` and `limits`.
    pub theta_grid: Vec<f64>,
    /// Step of the coarse-model paths used by `bias`.
    pub coarse_dt: f64,
    pub e_inf_sign: SignSetting,
    /// Keep one row in this many when writing a path.
    pub path_stride: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            entry: ModelFamily::AvgOuModulated,
            theta0: 1.0,
            epsilon: 0.1,
            beta_inv: 1.0,
            p_coeffs: Vec::new(),
            t_final: 100.0,
            resolution_factor: DEFAULT_RESOLUTION,
            burn_in_fraction: 0.1,
            alphas: vec![0.3, 0.5, 0.7],
            replicates: 8,
            base_seed: 1,
            theta_lo: DEFAULT_THETA_INTERVAL.0,
            theta_hi: DEFAULT_THETA_INTERVAL.1,
            output_dir: PathBuf::from("out"),
            theta_grid: vec![0.5, 1.0, 2.0],
            coarse_dt: 1e-3,
            e_inf_sign: SignSetting::Measured,
            path_stride: 1,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: expected a number, got `{v}`")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse_f64(key, s)).collect()
}

fn parse_int<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: expected an integer, got `{v}`")))
}

fn render_list(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Parses `key = value` lines; `#` starts a comment. `entry` is required.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim().to_string();
            if pairs.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Error::Config(format!("duplicate key `{key}`")));
            }
        }
        let mut cfg = ExperimentConfig::default();
        let entry = pairs
            .get("entry")
            .ok_or_else(|| Error::Config("missing key `entry`".into()))?;
        cfg.entry = entry.parse()?;
        for (key, value) in &pairs {
            let v = value.as_str();
            match key.as_str() {
                "entry" => {}
                "theta0" => cfg.theta0 = parse_f64(key, v)?,
                "epsilon" => cfg.epsilon = parse_f64(key, v)?,
                "beta_inv" => cfg.beta_inv = parse_f64(key, v)?,
                "p_coeffs" => cfg.p_coeffs = parse_list(key, v)?,
                "T" => cfg.t_final = parse_f64(key, v)?,
                "resolution_factor" => cfg.resolution_factor = parse_int(key, v)?,
                "burn_in_fraction" => cfg.burn_in_fraction = parse_f64(key, v)?,
                "alphas" => cfg.alphas = parse_list(key, v)?,
                "replicates" => cfg.replicates = parse_int(key, v)?,
                "base_seed" => cfg.base_seed = parse_int(key, v)?,
                "theta_lo" => cfg.theta_lo = parse_f64(key, v)?,
                "theta_hi" => cfg.theta_hi = parse_f64(key, v)?,
                "output_dir" => cfg.output_dir = PathBuf::from(v),
                "theta_grid" => cfg.theta_grid = parse_list(key, v)?,
                "coarse_dt" => cfg.coarse_dt = parse_f64(key, v)?,
                "e_inf_sign" => cfg.e_inf_sign = SignSetting::parse(v)?,
                "path_stride" => cfg.path_stride = parse_int(key, v)?,
                k if MANIFEST_ONLY_KEYS.contains(&k) => {}
                other => return Err(Error::Config(format!("unknown key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(file: &FsPath) -> Result<Self> {
        let text = fs::read_to_string(file)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", file.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return fail(format!("T must be > 0, got {}", self.t_final));
        }
        if self.replicates == 0 {
            return fail("replicates must be at least 1".into());
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
            return fail(format!("alphas must lie in (0, 1], got {a}"));
        }
        if !(0.0..0.5).contains(&self.burn_in_fraction) {
            return fail(format!(
                "burn_in_fraction must lie in [0, 0.5), got {}",
                self.burn_in_fraction
            ));
        }
        if !(self.theta_lo < self.theta_hi) {
            return fail(format!(
                "theta_lo must be below theta_hi, got [{}, {}]",
                self.theta_lo, self.theta_hi
            ));
        }
        if !(self.coarse_dt > 0.0) {
            return fail(format!("coarse_dt must be > 0, got {}", self.coarse_dt));
        }
        if self.path_stride == 0 {
            return fail("path_stride must be at least 1".into());
        }
        Ok(())
    }

    /// Builds the catalog entry, with `Θ = [theta_lo, theta_hi]`.
    pub fn catalog_entry(&self) -> Result<CatalogEntry> {
        let p = match self.entry {
            ModelFamily::MultiscalePotential1D => Some(CosineSeries::new(self.p_coeffs.clone())),
            _ => None,
        };
        CatalogEntry::build(self.entry, self.theta0, self.epsilon, self.beta_inv, p)?
            .with_theta_interval(self.theta_lo, self.theta_hi)
    }

    pub fn replicate_spec(&self) -> ReplicateSpec {
        ReplicateSpec {
            base_seed: self.base_seed,
            n_replicates: self.replicates,
            burn_in_fraction: self.burn_in_fraction,
        }
    }

    pub fn ensemble_settings(&self) -> EnsembleSettings {
        EnsembleSettings {
            t_final: self.t_final,
            resolution_factor: self.resolution_factor,
            alphas: self.alphas.clone(),
            replicates: self.replicate_spec(),
        }
    }

    /// Re-parsable config text.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("entry", self.entry.name().to_string());
        kv("theta0", self.theta0.to_string());
        kv("epsilon", self.epsilon.to_string());
        kv("beta_inv", self.beta_inv.to_string());
        kv("p_coeffs", render_list(&self.p_coeffs));
        kv("T", self.t_final.to_string());
        kv("resolution_factor", self.resolution_factor.to_string());
        kv("burn_in_fraction", self.burn_in_fraction.to_string());
        kv("alphas", render_list(&self.alphas));
        kv("replicates", self.replicates.to_string());
        kv("base_seed", self.base_seed.to_string());
        kv("theta_lo", self.theta_lo.to_string());
        kv("theta_hi", self.theta_hi.to_string());
        kv("output_dir", self.output_dir.display().to_string());
        kv("theta_grid", render_list(&self.theta_grid));
        kv("coarse_dt", self.coarse_dt.to_string());
        kv("e_inf_sign", self.e_inf_sign.render().to_string());
        kv("path_stride", self.path_stride.to_string());
        s
    }

    /// Config echo plus library version and every replicate seed.
    pub fn manifest(&self, command: &str) -> String {
        let seeds: Vec<String> = self
            .replicate_spec()
            .seeds()
            .iter()
            .map(|s| s.to_string())
            .collect();
        format!(
            "# multiscale-mle {command}\n# rerun: multiscale-mle {command} --config <this file>\n{}version = {VERSION}\nreplicate_seeds = {}\n",
            self.render(),
            seeds.join(",")
        )
    }
}

/// Controls of a multiscale replicate ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSettings {
    /// Length of the retained data, after burn-in.
    pub t_final: f64,
    pub resolution_factor: u32,
    /// Subsampling exponents: `δ = ε^α`.
    pub alphas: Vec<f64>,
    pub replicates: ReplicateSpec,
}

/// Everything one replicate contributes to the estimators.
#[derive(Debug, Clone)]
pub struct ReplicateData {
    pub seed: u64,
    pub dt: f64,
    /// Sums at the integrator step.
    pub full: LinearSums,
    /// One series per entry of `alphas`.
    pub samples: Vec<SampleSeries>,
}

/// Simulates one stationary multiscale path (burn-in discarded) and streams
/// it into the full-resolution sums and the subsamplers.
pub fn simulate_replicate(
    entry: &CatalogEntry,
    settings: &EnsembleSettings,
    seed: u64,
) -> Result<ReplicateData> {
    let ms = &entry.multiscale;
    let dt = ms.time_step(settings.resolution_factor);
    let skip = (settings.replicates.burn_in_fraction * settings.t_final / dt).round() as usize;
    let (x0, y0) = stationary_initial_state(ms, &entry.coarse, seed)?;
    let mut full = LinearAccumulator::new(&entry.coarse, dt);
    let mut subs = settings
        .alphas
        .iter()
        .map(|a| Subsampler::new(dt, ms.epsilon.powf(*a)))
        .collect::<Result<Vec<_>>>()?;
    let mut failure = None;
    let sim = SimSettings::new(settings.t_final + skip as f64 * dt, settings.resolution_factor);
    simulate_multiscale_with(ms, sim, x0, y0, seed, |i, x, _| {
        if i < skip {
            return;
        }
        if let Err(e) = full.push(x) {
            failure.get_or_insert(e);
        }
        for s in &mut subs {
            s.push(x);
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let samples = subs
        .into_iter()
        .map(|s| s.finish(ms.epsilon, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplicateData {
        seed,
        dt,
        full: full.finish(),
        samples,
    })
}

pub fn run_ensemble(entry: &CatalogEntry, settings: &EnsembleSettings) -> Result<Vec<ReplicateData>> {
    run_replicates_with(&settings.replicates, |_, seed| {
        simulate_replicate(entry, settings, seed)
    })
}

/// Estimates from one replicate.
#[derive(Debug, Clone)]
pub struct ReplicateEstimates {
    /// Closed form on the unsubsampled path.
    pub full: EstimationResult,
    /// `(α, discrete closed form, modified-likelihood scan)` per exponent.
    pub per_alpha: Vec<(f64, EstimationResult, EstimationResult)>,
}

pub fn estimate_replicate(
    entry: &CatalogEntry,
    alphas: &[f64],
    data: &ReplicateData,
) -> Result<ReplicateEstimates> {
    let meta = DataMeta {
        epsilon: entry.epsilon,
        delta: data.dt,
        n: data.full.increments + 1,
        t: data.full.horizon(),
        seed: data.seed,
    };
    let full = linear_estimate(&data.full, &entry.coarse, Method::ContinuousLinear, meta);
    let per_alpha = alphas
        .iter()
        .zip(&data.samples)
        .map(|(&a, s)| {
            Ok((
                a,
                mle_linear(s, &entry.coarse)?,
                mle_scan(s, &entry.coarse, LikelihoodKind::Modified)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplicateEstimates { full, per_alpha })
}

/// Mean and standard error (`NaN` for a single value).
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub delta: f64,
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

/// Aggregated closed-form rows (with the `α = 0` pseudo-row for the
/// unsubsampled path) and modified-likelihood rows.
pub fn aggregate_sweep(
    estimates: &[ReplicateEstimates],
    samples_delta: &[f64],
) -> (Vec<SweepRow>, Vec<SweepRow>) {
    let n = estimates.len();
    let full: Vec<f64> = estimates.iter().map(|e| e.full.theta_hat).collect();
    let (mean, se) = mean_se(&full);
    let mut linear = vec![SweepRow {
        alpha: 0.0,
        delta: estimates[0].full.data_meta.delta,
        mean,
        se,
        n,
    }];
    let mut modified = Vec::new();
    for (j, &delta) in samples_delta.iter().enumerate() {
        let alpha = estimates[0].per_alpha[j].0;
        let lin: Vec<f64> = estimates.iter().map(|e| e.per_alpha[j].1.theta_hat).collect();
        let md: Vec<f64> = estimates.iter().map(|e| e.per_alpha[j].2.theta_hat).collect();
        let (m, s) = mean_se(&lin);
        linear.push(SweepRow { alpha, delta, mean: m, se: s, n });
        let (m, s) = mean_se(&md);
        modified.push(SweepRow { alpha, delta, mean: m, se: s, n });
    }
    (linear, modified)
}

/// Per-θ row of the `bias` table.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasRow {
    pub theta: f64,
    pub coarse_limit: f64,
    pub report: CalibrationReport,
}

impl BiasRow {
    pub fn agreement(&self) -> &'static str {
        match self.report.agrees_with_formula() {
            None => "inconclusive",
            Some(true) => "agree",
            Some(false) => "disagree",
        }
    }
}

/// What a command produced.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutcome {
    pub files: Vec<PathBuf>,
    pub summary: String,
    /// A calibration could not decide the sign of the bias.
    pub inconclusive: bool,
}

fn create(dir: &FsPath, name: &str) -> Result<(PathBuf, BufWriter<fs::File>)> {
    let file = dir.join(name);
    Ok((file.clone(), BufWriter::new(fs::File::create(&file)?)))
}

fn prepare(cfg: &ExperimentConfig, command: &str) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.output_dir)?;
    let manifest = cfg.output_dir.join(format!("{command}_manifest.txt"));
    fs::write(&manifest, cfg.manifest(command))?;
    Ok(manifest)
}

/// Writes one stationary path (replicate 0's seed) as `path.csv` plus
/// `path.meta`, with `round(T/dt)` rows.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<CommandOutcome> {
    let entry = cfg.catalog_entry()?;
    let manifest = prepare(cfg, "simulate")?;
    let ms = &entry.multiscale;
    let seed = cfg.replicate_spec().seed(0);
    let (x0, y0) = stationary_initial_state(ms, &entry.coarse, seed)?;
    let dt = ms.time_step(cfg.resolution_factor);
    let file = cfg.output_dir.join("path.csv");
    let mut writer = PathCsvWriter::create(&file, true, cfg.path_stride, 0.0, dt)?;
    let mut failure = None;
    let start = Instant::now();
    let mut steps = 0usize;
    simulate_multiscale_with(
        ms,
        SimSettings::new(cfg.t_final, cfg.resolution_factor),
        x0,
        y0,
        seed,
        |i, x, y| {
            steps = i + 1;
            if failure.is_none() {
                if let Err(e) = writer.push(i, x, Some(y)) {
                    failure = Some(e);
                }
            }
        },
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    writer.finish()?;
    write_meta(&file, entry.family.name(), seed, dt, ms.epsilon)?;
    Ok(CommandOutcome {
        files: vec![file.clone(), file.with_extension("meta"), manifest],
        summary: format!(
            "simulated {steps} points (dt = {dt:e}) in {:.2} s",
            start.elapsed().as_secs_f64()
        ),
        inconclusive: false,
    })
}

fn ensemble_estimates(
    cfg: &ExperimentConfig,
    entry: &CatalogEntry,
) -> Result<(Vec<ReplicateData>, Vec<ReplicateEstimates>)> {
    let settings = cfg.ensemble_settings();
    let data = run_ensemble(entry, &settings)?;
    let estimates = data
        .iter()
        .map(|d| estimate_replicate(entry, &cfg.alphas, d))
        .collect::<Result<Vec<_>>>()?;
    Ok((data, estimates))
}

fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

/// Per-replicate estimates: the unsubsampled closed form (`alpha = 0`) and,
/// per `α`, the discrete closed form and the modified-likelihood scan.
pub fn cmd_estimate(cfg: &ExperimentConfig) -> Result<CommandOutcome> {
    let entry = cfg.catalog_entry()?;
    let manifest = prepare(cfg, "estimate")?;
    let start = Instant::now();
    let (data, estimates) = ensemble_estimates(cfg, &entry)?;
    let (file, mut out) = create(&cfg.output_dir, "estimates.csv")?;
    writeln!(out, "{ESTIMATES_HEADER}")?;
    for (i, (d, e)) in data.iter().zip(&estimates).enumerate() {
        let row = |alpha: f64, r: &EstimationResult| {
            vec![
                i.to_string(),
                d.seed.to_string(),
                fmt_f64(alpha),
                fmt_f64(r.data_meta.delta),
                r.method.name().to_string(),
                fmt_f64(r.theta_hat),
                flag(r.degenerate),
                flag(r.at_boundary),
            ]
        };
        write_csv_row(&mut out, &row(0.0, &e.full))?;
        for (a, lin, md) in &e.per_alpha {
            write_csv_row(&mut out, &row(*a, lin))?;
            write_csv_row(&mut out, &row(*a, md))?;
        }
    }
    out.flush()?;
    Ok(CommandOutcome {
        files: vec![file, manifest],
        summary: format!(
            "{} replicates estimated in {:.2} s",
            estimates.len(),
            start.elapsed().as_secs_f64()
        ),
        inconclusive: false,
    })
}

fn write_sweep(file: &FsPath, rows: &[SweepRow]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(file)?);
    writeln!(out, "{SWEEP_HEADER}")?;
    for r in rows {
        write_csv_row(
            &mut out,
            &[
                fmt_f64(r.alpha),
                fmt_f64(r.delta),
                fmt_f64(r.mean),
                fmt_f64(r.se),
                r.n.to_string(),
            ],
        )?;
    }
    out.flush()?;
    Ok(())
}

/// `sweep.csv` (closed form, with the `alpha = 0` unsubsampled row) and
/// `sweep_modified.csv` (modified likelihood).
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<CommandOutcome> {
    let entry = cfg.catalog_entry()?;
    let manifest = prepare(cfg, "sweep")?;
    let start = Instant::now();
    let (data, estimates) = ensemble_estimates(cfg, &entry)?;
    let deltas: Vec<f64> = data[0].samples.iter().map(|s| s.delta).collect();
    let (linear, modified) = aggregate_sweep(&estimates, &deltas);
    let file = cfg.output_dir.join("sweep.csv");
    let file_mod = cfg.output_dir.join("sweep_modified.csv");
    write_sweep(&file, &linear)?;
    write_sweep(&file_mod, &modified)?;
    let mut summary = format!(
        "{} replicates in {:.2} s\n",
        estimates.len(),
        start.elapsed().as_secs_f64()
    );
    for r in &linear {
        let _ = writeln!(summary, "alpha = {:<4} mean θ̂ = {:.4} ± {:.4}", r.alpha, r.mean, r.se);
    }
    Ok(CommandOutcome {
        files: vec![file, file_mod, manifest],
        summary,
        inconclusive: false,
    })
}

fn calibration_settings(cfg: &ExperimentConfig) -> CalibrationSettings {
    CalibrationSettings {
        t_final: cfg.t_final,
        resolution_factor: cfg.resolution_factor,
        coarse_dt: cfg.coarse_dt,
        replicates: cfg.replicate_spec(),
    }
}

/// Bias table over `theta_grid`: closed-form magnitude next to the
/// simulated likelihood difference and its sign comparison.
pub fn bias_rows(cfg: &ExperimentConfig, entry: &CatalogEntry) -> Result<Vec<BiasRow>> {
    let data = calibration_ensemble(entry, &calibration_settings(cfg))?;
    let limits = asymptotic_limits(entry, cfg.theta0, SignChoice::Formula)?;
    cfg.theta_grid
        .iter()
        .map(|&theta| {
            Ok(BiasRow {
                theta,
                coarse_limit: limits.coarse_limit(theta),
                report: data.report(theta)?,
            })
        })
        .collect()
}

pub fn cmd_bias(cfg: &ExperimentConfig) -> Result<CommandOutcome> {
    let entry = cfg.catalog_entry()?;
    let manifest = prepare(cfg, "bias")?;
    let start = Instant::now();
    let rows = bias_rows(cfg, &entry)?;
    let (file, mut out) = create(&cfg.output_dir, "bias.csv")?;
    writeln!(out, "{BIAS_HEADER}")?;
    let mut summary = String::new();
    for r in &rows {
        write_csv_row(
            &mut out,
            &[
                fmt_f64(r.theta),
                fmt_f64(r.coarse_limit),
                fmt_f64(r.report.formula_magnitude),
                fmt_f64(r.report.e_hat),
                r.agreement().to_string(),
            ],
        )?;
        let _ = writeln!(
            summary,
            "θ = {}: Ê = {:.5} ± {:.5}, closed-form magnitude {:.5} ({})",
            r.theta,
            r.report.e_hat,
            r.report.standard_error,
            r.report.formula_magnitude,
            r.agreement()
        );
    }
    out.flush()?;
    let _ = write!(summary, "{:.2} s", start.elapsed().as_secs_f64());
    Ok(CommandOutcome {
        files: vec![file, manifest],
        summary,
        inconclusive: rows.iter().any(|r| !r.report.is_conclusive()),
    })
}

/// Resolves the sign of the bias term for `limits`. Returns the choice and
/// whether a requested measurement was inconclusive.
fn resolve_sign(cfg: &ExperimentConfig, entry: &CatalogEntry) -> Result<(SignChoice, bool)> {
    match cfg.e_inf_sign {
        SignSetting::Formula => Ok((SignChoice::Formula, false)),
        SignSetting::Fixed(s) => Ok((SignChoice::Measured(s), false)),
        SignSetting::Measured => {
            if entry.family != ModelFamily::MultiscalePotential1D
                || entry.fluctuation.is_constant()
            {
                // The sign only matters for a non-trivial multiscale potential.
                return Ok((SignChoice::Formula, false));
            }
            let probe = cfg.theta0;
            let report = calibration_ensemble(entry, &calibration_settings(cfg))?.report(probe)?;
            Ok(match report.sign {
                Some(s) => (SignChoice::Measured(s), false),
                None => (SignChoice::Formula, true),
            })
        }
    }
}

/// `limits.csv` over `theta_grid` and `limits_argmax.csv` with the maximizers
/// of both limit functions over `Θ`.
pub fn cmd_limits(cfg: &ExperimentConfig) -> Result<CommandOutcome> {
    let entry = cfg.catalog_entry()?;
    let manifest = prepare(cfg, "limits")?;
    let (sign, inconclusive) = resolve_sign(cfg, &entry)?;
    let limits = asymptotic_limits(&entry, cfg.theta0, sign)?;
    let (file, mut out) = create(&cfg.output_dir, "limits.csv")?;
    writeln!(out, "{LIMITS_HEADER}")?;
    for &theta in &cfg.theta_grid {
        write_csv_row(
            &mut out,
            &[
                fmt_f64(theta),
                fmt_f64(limits.coarse_limit(theta)),
                fmt_f64(limits.full_limit(theta)?),
            ],
        )?;
    }
    out.flush()?;
    let coarse = limits.coarse_argmax();
    let full = limits.full_argmax()?;
    let (arg_file, mut out) = create(&cfg.output_dir, "limits_argmax.csv")?;
    writeln!(out, "{ARGMAX_HEADER}")?;
    for (name, m) in [("coarse_limit", coarse), ("full_limit", full)] {
        write_csv_row(
            &mut out,
            &[name.to_string(), fmt_f64(m.argmax), fmt_f64(m.value), flag(m.at_boundary)],
        )?;
    }
    out.flush()?;
    let boundary = |b: bool| if b { " (boundary of Θ)" } else { "" };
    let summary = format!(
        "coarse_limit argmax = {:.6}{}\nfull_limit argmax = {:.6}{}",
        coarse.argmax,
        boundary(coarse.at_boundary),
        full.argmax,
        boundary(full.at_boundary)
    );
    Ok(CommandOutcome {
        files: vec![file, arg_file, manifest],
        summary,
        inconclusive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_render() {
        let cfg = ExperimentConfig::parse(
            "entry = MultiscalePotential1D\n# comment\np_coeffs = 1, 0.5\nT = 3\nalphas=0.2,0.9\nbase_seed = 42\n",
        )
        .unwrap();
        assert_eq!(cfg.p_coeffs, vec![1.0, 0.5]);
        assert_eq!(cfg.base_seed, 42);
        let again = ExperimentConfig::parse(&cfg.manifest("sweep")).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn config_errors() {
        assert!(matches!(ExperimentConfig::parse("T = 1"), Err(Error::Config(_))));
        assert!(matches!(
            ExperimentConfig::parse("entry = Nope"),
            Err(Error::UnknownEntry(_))
        ));
        for bad in ["alphas = 0", "alphas = 1.5", "replicates = 0", "T = -1", "bogus = 1", "T = x"] {
            let text = format!("entry = AvgOuModulated\n{bad}");
            assert!(ExperimentConfig::parse(&text).is_err(), "{bad}");
        }
        assert!(ExperimentConfig::parse("entry = AvgOuModulated\nalphas = 1").is_ok());
    }

    #[test]
    fn mean_and_standard_error() {
        let (m, s) = mean_se(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(mean_se(&[1.0]).1.is_nan());
    }
}
