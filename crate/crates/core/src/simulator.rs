//! Euler–Maruyama trajectories, subsampling and seeded replicate ensembles.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path as FsPath;

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::homogenize;
use crate::models::{CoarseModel, MultiscaleModel, Regime};
use crate::output::fmt_f64;
use crate::quadrature::{GibbsDensity, QuadratureGrid, DEFAULT_LINE_NODES};

/// Default integrator resolution: `dt = ε²/100` or `ε/100`.
pub const DEFAULT_RESOLUTION: u32 = 100;
/// Default cap on the number of integrator steps of a single path.
pub const DEFAULT_MAX_STEPS: u64 = 2_000_000_000;

/// Odd multiplier of the replicate seed derivation.
pub const SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;
/// Stream offset for initial-condition draws.
const INIT_STREAM: u64 = 0xD1B5_4A32_D192_ED03;

/// Random generator used for every path.
pub type PathRng = Xoshiro256PlusPlus;

pub fn path_rng(seed: u64) -> PathRng {
    PathRng::seed_from_u64(seed)
}

/// Stored trajectory of the slow (and optionally fast) variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub t0: f64,
    pub dt: f64,
    pub slow: Vec<f64>,
    pub fast: Option<Vec<f64>>,
    /// 0 for coarse-model paths.
    pub epsilon: f64,
    pub seed: u64,
    pub model_name: String,
}

impl Path {
    pub fn len(&self) -> usize {
        self.slow.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slow.is_empty()
    }

    /// Time spanned by the stored increments.
    pub fn horizon(&self) -> f64 {
        self.dt * self.slow.len().saturating_sub(1) as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.slow.len() < 2 {
            return Err(Error::InsufficientData("a path needs at least 2 points".into()));
        }
        if !(self.dt > 0.0) {
            return Err(invalid("dt", "must be > 0"));
        }
        if let Some(fast) = &self.fast {
            if fast.len() != self.slow.len() {
                return Err(invalid("fast", "length differs from slow component"));
            }
        }
        Ok(())
    }

    /// Drops the leading `fraction` of the points.
    pub fn drop_burn_in(mut self, fraction: f64) -> Self {
        let k = ((self.slow.len() as f64) * fraction).floor() as usize;
        let k = k.min(self.slow.len().saturating_sub(2));
        self.slow.drain(..k);
        if let Some(fast) = self.fast.as_mut() {
            fast.drain(..k);
        }
        self.t0 += k as f64 * self.dt;
        self
    }
}

/// Subsampled series `x_n = x(nδ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSeries {
    /// Snapped sampling interval.
    pub delta: f64,
    pub values: Vec<f64>,
    pub epsilon: f64,
    pub origin_dt: f64,
    pub n_count: usize,
    /// Stride in units of `origin_dt`.
    pub stride: usize,
    pub seed: u64,
}

impl SampleSeries {
    /// Time spanned by complete increments, `(N − 1)δ`.
    pub fn horizon(&self) -> f64 {
        self.delta * self.n_count.saturating_sub(1) as f64
    }
}

/// Integer stride nearest to `delta/dt`. Fails when `delta < dt`.
pub fn snap_stride(dt: f64, delta: f64) -> Result<usize> {
    if !(delta.is_finite() && dt > 0.0) {
        return Err(invalid("delta", format!("bad sampling interval {delta}")));
    }
    // Relative slack so that delta == dt survives rounding.
    if delta < dt * (1.0 - 1e-9) {
        return Err(invalid("delta", format!("{delta} is below the path step {dt}")));
    }
    Ok(((delta / dt).round() as usize).max(1))
}

/// Keeps every `m`-th point, `m = round(δ/dt)`; `N = ⌊len/m⌋`.
pub fn subsample(path: &Path, delta: f64) -> Result<SampleSeries> {
    let stride = snap_stride(path.dt, delta)?;
    let n = path.slow.len() / stride;
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "subsampling {} points at stride {stride} leaves {n} samples",
            path.slow.len()
        )));
    }
    let values: Vec<f64> = (0..n).map(|i| path.slow[i * stride]).collect();
    Ok(SampleSeries {
        delta: stride as f64 * path.dt,
        n_count: values.len(),
        values,
        epsilon: path.epsilon,
        origin_dt: path.dt,
        stride,
        seed: path.seed,
    })
}

/// Streaming counterpart of [`subsample`]: feed every integrator point in
/// order.
#[derive(Debug, Clone)]
pub struct Subsampler {
    stride: usize,
    seen: usize,
    values: Vec<f64>,
    dt: f64,
}

impl Subsampler {
    pub fn new(dt: f64, delta: f64) -> Result<Self> {
        Ok(Self {
            stride: snap_stride(dt, delta)?,
            seen: 0,
            values: Vec::new(),
            dt,
        })
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        if self.seen % self.stride == 0 {
            self.values.push(x);
        }
        self.seen += 1;
    }

    pub fn finish(mut self, epsilon: f64, seed: u64) -> Result<SampleSeries> {
        let n = self.seen / self.stride;
        self.values.truncate(n);
        if n < 2 {
            return Err(Error::InsufficientData(format!(
                "stride {} leaves {n} samples",
                self.stride
            )));
        }
        Ok(SampleSeries {
            delta: self.stride as f64 * self.dt,
            n_count: n,
            values: self.values,
            epsilon,
            origin_dt: self.dt,
            stride: self.stride,
            seed,
        })
    }
}

/// Integration controls for [`simulate_multiscale`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSettings {
    pub t_final: f64,
    pub resolution_factor: u32,
    pub max_steps: u64,
}

impl SimSettings {
    pub fn new(t_final: f64, resolution_factor: u32) -> Self {
        Self {
            t_final,
            resolution_factor,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

/// Number of stored points `round(T/dt)`, checked against the step cap.
fn point_count(t_final: f64, dt: f64, max_steps: u64) -> Result<usize> {
    if !(t_final > 0.0) || !t_final.is_finite() {
        return Err(invalid("T", format!("must be > 0, got {t_final}")));
    }
    let n = (t_final / dt).round();
    if n > max_steps as f64 {
        return Err(Error::TooManySteps {
            required: n as u64,
            limit: max_steps,
        });
    }
    Ok(n as usize)
}

/// Runs Euler–Maruyama on a fast/slow system, calling `observe(i, x_i, y_i)`
/// for each of the `round(T/dt)` points (the initial state is point 0).
/// Returns `dt`.
pub fn simulate_multiscale_with(
    model: &MultiscaleModel,
    settings: SimSettings,
    x0: f64,
    y0: f64,
    seed: u64,
    mut observe: impl FnMut(usize, f64, f64),
) -> Result<f64> {
    model.validate()?;
    if settings.resolution_factor < 10 {
        return Err(invalid("resolution_factor", "must be at least 10"));
    }
    let dt = model.time_step(settings.resolution_factor);
    let n = point_count(settings.t_final, dt, settings.max_steps)?;
    if n < 2 {
        return Err(Error::InsufficientData("T shorter than two steps".into()));
    }
    let eps = model.epsilon;
    let theta = model.true_theta;
    // dy = (g0·fast_rate + g1·mid_rate) dt + β·noise_y dV
    let (fast_rate, mid_rate, noise_y) = match model.regime {
        Regime::Homogenization => (1.0 / (eps * eps), 1.0 / eps, 1.0 / eps),
        Regime::Averaging => (1.0 / eps, 0.0, 1.0 / eps.sqrt()),
    };
    let slow_fast_rate = match model.regime {
        Regime::Homogenization => 1.0 / eps,
        Regime::Averaging => 0.0,
    };
    let need_u = !model.alpha0.is_zero();
    let need_v = !model.alpha1.is_zero() || !model.fast_noise.is_zero();
    let sqrt_dt = dt.sqrt();
    let mut rng = path_rng(seed);

    let (mut x, mut y) = (x0, y0);
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::NonFinite { step: 0, time: 0.0 });
    }
    observe(0, x, y);
    for i in 1..n {
        let du = if need_u {
            sqrt_dt * rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };
        let dv = if need_v {
            sqrt_dt * rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };
        let f0 = model.f0.eval(x, y, theta);
        let f1 = model.f1.eval(x, y, theta);
        let g0 = model.g0.eval(x, y, theta);
        let g1 = model.g1.eval(x, y, theta);
        let dx = (slow_fast_rate * f0 + f1) * dt
            + model.alpha0.eval(x, y, theta) * du
            + model.alpha1.eval(x, y, theta) * dv;
        let dy = (fast_rate * g0 + mid_rate * g1) * dt
            + noise_y * model.fast_noise.eval(x, y, theta) * dv;
        x += dx;
        y += dy;
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::NonFinite {
                step: i,
                time: i as f64 * dt,
            });
        }
        observe(i, x, y);
    }
    Ok(dt)
}

/// Full-resolution path of a fast/slow system.
pub fn simulate_multiscale(
    model: &MultiscaleModel,
    settings: SimSettings,
    x0: f64,
    y0: f64,
    seed: u64,
) -> Result<Path> {
    let dt = model.time_step(settings.resolution_factor.max(1));
    let cap = point_count(settings.t_final, dt, settings.max_steps).unwrap_or(0);
    let mut slow = Vec::with_capacity(cap);
    let mut fast = Vec::with_capacity(cap);
    let dt = simulate_multiscale_with(model, settings, x0, y0, seed, |_, x, y| {
        slow.push(x);
        fast.push(y);
    })?;
    Ok(Path {
        t0: 0.0,
        dt,
        slow,
        fast: Some(fast),
        epsilon: model.epsilon,
        seed,
        model_name: model
            .family
            .map(|f| f.name().to_string())
            .unwrap_or_else(|| "custom".to_string()),
    })
}

/// Streaming Euler–Maruyama for `dX = F(X;θ) dt + K(X) dW`.
pub fn simulate_coarse_with(
    model: &CoarseModel,
    theta: f64,
    t_final: f64,
    dt: f64,
    x0: f64,
    seed: u64,
    mut observe: impl FnMut(usize, f64),
) -> Result<()> {
    if !(dt > 0.0) {
        return Err(invalid("dt", "must be > 0"));
    }
    if t_final / dt < 10.0 {
        return Err(invalid("T", "need T/dt ≥ 10"));
    }
    let n = point_count(t_final, dt, DEFAULT_MAX_STEPS)?;
    let sqrt_dt = dt.sqrt();
    let mut rng = path_rng(seed);
    let mut x = x0;
    if !x.is_finite() {
        return Err(Error::NonFinite { step: 0, time: 0.0 });
    }
    observe(0, x);
    for i in 1..n {
        let dw = sqrt_dt * rng.sample::<f64, _>(StandardNormal);
        x += model.drift_at(x, theta) * dt + (model.diffusion)(x) * dw;
        if !x.is_finite() {
            return Err(Error::NonFinite {
                step: i,
                time: i as f64 * dt,
            });
        }
        observe(i, x);
    }
    Ok(())
}

pub fn simulate_coarse(
    model: &CoarseModel,
    theta: f64,
    t_final: f64,
    dt: f64,
    x0: f64,
    seed: u64,
) -> Result<Path> {
    let mut slow = Vec::new();
    simulate_coarse_with(model, theta, t_final, dt, x0, seed, |_, x| slow.push(x))?;
    Ok(Path {
        t0: 0.0,
        dt,
        slow,
        fast: None,
        epsilon: 0.0,
        seed,
        model_name: model.name.clone(),
    })
}

/// Coarse invariant density `π(·; θ)` tabulated on a truncated line.
pub fn coarse_stationary_density(model: &CoarseModel, theta: f64) -> Result<GibbsDensity> {
    let pi = model
        .invariant_density
        .as_ref()
        .ok_or_else(|| Error::NotIntegrable("coarse model has no invariant density".into()))?;
    let energy = |x: f64| -pi(x, theta).ln();
    let grid = QuadratureGrid::for_energy(energy, 0.0, DEFAULT_LINE_NODES)?;
    GibbsDensity::new(energy, 1.0, grid)
}

/// Draws `x0 ~ π(·; θ0)` and `y0 ~ ρ(·; x0)` by inverse CDF, from a stream
/// derived from `seed`. For slaved fast variables `y0 = x0/ε`.
pub fn stationary_initial_state(
    multiscale: &MultiscaleModel,
    coarse: &CoarseModel,
    seed: u64,
) -> Result<(f64, f64)> {
    let mut rng = path_rng(seed ^ INIT_STREAM);
    let pi = coarse_stationary_density(coarse, multiscale.true_theta)?;
    let x0 = pi.inverse_cdf(rng.random::<f64>());
    let y0 = if multiscale.fast_slaved {
        x0 / multiscale.epsilon
    } else {
        let rho = homogenize::fast_invariant_density(multiscale, x0)?;
        rho.inverse_cdf(rng.random::<f64>())
    };
    Ok((x0, y0))
}

/// Stationary `X0 ~ π(·; θ)` for coarse paths.
pub fn stationary_coarse_start(coarse: &CoarseModel, theta: f64, seed: u64) -> Result<f64> {
    let mut rng = path_rng(seed ^ INIT_STREAM);
    Ok(coarse_stationary_density(coarse, theta)?.inverse_cdf(rng.random::<f64>()))
}

/// Seed and size of a replicate ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicateSpec {
    pub base_seed: u64,
    pub n_replicates: usize,
    pub burn_in_fraction: f64,
}

impl ReplicateSpec {
    pub fn new(base_seed: u64, n_replicates: usize) -> Self {
        Self {
            base_seed,
            n_replicates,
            burn_in_fraction: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_replicates == 0 {
            return Err(invalid("replicates", "need at least one replicate"));
        }
        if !(0.0..0.5).contains(&self.burn_in_fraction) {
            return Err(invalid("burn_in_fraction", "must lie in [0, 0.5)"));
        }
        Ok(())
    }

    /// `base_seed XOR (i · SEED_STRIDE)`, a bijection in `i`.
    pub fn seed(&self, index: usize) -> u64 {
        self.base_seed ^ (index as u64).wrapping_mul(SEED_STRIDE)
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_replicates).map(|i| self.seed(i)).collect()
    }
}

/// Runs `job(index, seed)` for every replicate in parallel; results are in
/// index order. The first failing index (in index order) is reported.
pub fn run_replicates_with<T, F>(spec: &ReplicateSpec, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, u64) -> Result<T> + Sync,
{
    spec.validate()?;
    let results: Vec<Result<T>> = (0..spec.n_replicates)
        .into_par_iter()
        .map(|i| job(i, spec.seed(i)))
        .collect();
    results
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            r.map_err(|e| Error::Replicate {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}

pub fn run_replicates<F>(spec: &ReplicateSpec, job: F) -> Result<Vec<f64>>
where
    F: Fn(u64) -> Result<f64> + Sync,
{
    run_replicates_with(spec, |_, seed| job(seed))
}

/// Streams `t,x[,y]` rows to a CSV file, keeping one row in `stride`.
pub struct PathCsvWriter {
    out: BufWriter<File>,
    stride: usize,
    with_fast: bool,
    t0: f64,
    dt: f64,
}

impl PathCsvWriter {
    pub fn create(
        file: &FsPath,
        with_fast: bool,
        stride: usize,
        t0: f64,
        dt: f64,
    ) -> Result<Self> {
        let mut out = BufWriter::new(File::create(file)?);
        writeln!(out, "{}", if with_fast { "t,x,y" } else { "t,x" })?;
        Ok(Self {
            out,
            stride: stride.max(1),
            with_fast,
            t0,
            dt,
        })
    }

    pub fn push(&mut self, index: usize, x: f64, y: Option<f64>) -> Result<()> {
        if index % self.stride != 0 {
            return Ok(());
        }
        let t = fmt_f64(self.t0 + index as f64 * self.dt);
        match (self.with_fast, y) {
            (true, Some(y)) => writeln!(self.out, "{t},{},{}", fmt_f64(x), fmt_f64(y))?,
            _ => writeln!(self.out, "{t},{}", fmt_f64(x))?,
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// Writes a stored path as CSV plus its `.meta` sidecar.
pub fn write_path(path: &Path, file: &FsPath, stride: usize) -> Result<()> {
    let mut w = PathCsvWriter::create(file, path.fast.is_some(), stride, path.t0, path.dt)?;
    for (i, &x) in path.slow.iter().enumerate() {
        w.push(i, x, path.fast.as_ref().map(|f| f[i]))?;
    }
    w.finish()?;
    write_meta(file, &path.model_name, path.seed, path.dt, path.epsilon)
}

/// Sidecar `<basename>.meta` with model, seed, dt and epsilon.
pub fn write_meta(file: &FsPath, model: &str, seed: u64, dt: f64, epsilon: f64) -> Result<()> {
    let meta = file.with_extension("meta");
    let mut out = BufWriter::new(File::create(meta)?);
    writeln!(out, "model = {model}")?;
    writeln!(out, "seed = {seed}")?;
    writeln!(out, "dt = {}", fmt_f64(dt))?;
    writeln!(out, "epsilon = {}", fmt_f64(epsilon))?;
    out.flush()?;
    Ok(())
}
