//! Log-likelihoods of the coarse model and maximum-likelihood drift
//! estimation.
//!
//! Stochastic integrals are always left-point (Itô) sums on the data's own
//! grid:
//!
//! ```text
//! L(θ) = Σ F(x_i;θ)(x_{i+1} − x_i)/K(x_i)² − ½ Σ F(x_i;θ)² Δ/K(x_i)²
//! ```
//!
//! over the `N − 1` complete increments of `N` observations.

use crate::error::{Error, Result};
use crate::models::CoarseModel;
use crate::optimize::{golden_section_max, GOLDEN_TOL};
use crate::simulator::{Path, SampleSeries};

/// `|A|` below this is treated as singular.
pub const INVERTIBILITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataMeta {
    pub epsilon: f64,
    /// Observation spacing (the path step for full-resolution data).
    pub delta: f64,
    pub n: usize,
    /// Horizon covered by complete increments.
    pub t: f64,
    pub seed: u64,
}

/// Equally spaced observations of the slow variable.
pub trait Observations {
    fn values(&self) -> &[f64];
    fn spacing(&self) -> f64;
    fn meta(&self) -> DataMeta;
    fn linear_method(&self) -> Method;
    fn scan_method(&self) -> Method;
}

impl Observations for Path {
    fn values(&self) -> &[f64] {
        &self.slow
    }
    fn spacing(&self) -> f64 {
        self.dt
    }
    fn meta(&self) -> DataMeta {
        DataMeta {
            epsilon: self.epsilon,
            delta: self.dt,
            n: self.slow.len(),
            t: self.horizon(),
            seed: self.seed,
        }
    }
    fn linear_method(&self) -> Method {
        Method::ContinuousLinear
    }
    fn scan_method(&self) -> Method {
        Method::ContinuousScan
    }
}

impl Observations for SampleSeries {
    fn values(&self) -> &[f64] {
        &self.values
    }
    fn spacing(&self) -> f64 {
        self.delta
    }
    fn meta(&self) -> DataMeta {
        DataMeta {
            epsilon: self.epsilon,
            delta: self.delta,
            n: self.n_count,
            t: self.horizon(),
            seed: self.seed,
        }
    }
    fn linear_method(&self) -> Method {
        Method::DiscreteLinear
    }
    fn scan_method(&self) -> Method {
        Method::DiscreteScan
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    ContinuousLinear,
    ContinuousScan,
    DiscreteLinear,
    DiscreteScan,
    ModifiedScan,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::ContinuousLinear => "continuous_linear",
            Method::ContinuousScan => "continuous_scan",
            Method::DiscreteLinear => "discrete_linear",
            Method::DiscreteScan => "discrete_scan",
            Method::ModifiedScan => "modified_scan",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LikelihoodKind {
    Continuous,
    Discrete,
    Modified,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub theta_hat: f64,
    pub method: Method,
    pub loglik_at_max: f64,
    /// `A = T⁻¹ Σ h²/K² Δ` (NaN for nonlinear drifts).
    pub a_sum: f64,
    /// `B = T⁻¹ Σ h Δx/K²` (NaN for nonlinear drifts).
    pub b_sum: f64,
    pub data_meta: DataMeta,
    /// `A` was singular and `θ̂` was set to 0.
    pub degenerate: bool,
    /// The estimate sits on (or, for the closed form, outside) the
    /// parameter interval.
    pub at_boundary: bool,
}

fn check_len(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "likelihood needs at least 2 observations, got {n}"
        )));
    }
    Ok(())
}

fn loglik_sums(values: &[f64], step: f64, model: &CoarseModel, theta: f64) -> Result<f64> {
    check_len(values.len())?;
    let mut stochastic = 0.0;
    let mut quadratic = 0.0;
    for w in values.windows(2) {
        let k = model.diffusion_at(w[0])?;
        let inv_a = 1.0 / (k * k);
        let f = model.drift_at(w[0], theta);
        stochastic += f * (w[1] - w[0]) * inv_a;
        quadratic += f * f * step * inv_a;
    }
    Ok(stochastic - 0.5 * quadratic)
}

/// Continuous-time log-likelihood on the path's native grid.
pub fn loglik_continuous(path: &Path, model: &CoarseModel, theta: f64) -> Result<f64> {
    loglik_sums(&path.slow, path.dt, model, theta)
}

/// Discrete log-likelihood `L^{δ,N}` over the `N − 1` complete increments.
pub fn loglik_discrete(samples: &SampleSeries, model: &CoarseModel, theta: f64) -> Result<f64> {
    loglik_sums(&samples.values, samples.delta, model, theta)
}

/// Martingale-free likelihood `−½ Σ_n (F²/K² + G) δ` with `G = K² ∂²ₓV`.
pub fn loglik_modified(samples: &SampleSeries, model: &CoarseModel, theta: f64) -> Result<f64> {
    check_len(samples.values.len())?;
    let pot = model.potential.as_ref().ok_or(Error::MissingPotential)?;
    let mut total = 0.0;
    for &z in &samples.values {
        let k = model.diffusion_at(z)?;
        let f = model.drift_at(z, theta);
        let g = k * k * pot.second_derivative_at(z, theta);
        total += f * f / (k * k) + g;
    }
    Ok(-0.5 * total * samples.delta)
}

/// Unnormalized sufficient statistics of a linear drift `F = θh`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LinearSums {
    /// `Σ h(x_i)² Δ / K(x_i)²`
    pub a: f64,
    /// `Σ h(x_i)(x_{i+1} − x_i) / K(x_i)²`
    pub b: f64,
    /// `Σ (x_{i+1} − x_i)²`
    pub squared_increments: f64,
    pub increments: usize,
    pub spacing: f64,
}

impl LinearSums {
    pub fn horizon(&self) -> f64 {
        self.increments as f64 * self.spacing
    }

    /// Log-likelihood `θb − ½θ²a`.
    pub fn loglik(&self, theta: f64) -> f64 {
        theta * self.b - 0.5 * theta * theta * self.a
    }

    /// `(1/T) L(θ)`
    pub fn rate(&self, theta: f64) -> f64 {
        self.loglik(theta) / self.horizon()
    }

    /// Mean squared increment per unit time.
    pub fn increment_rate(&self) -> f64 {
        self.squared_increments / self.horizon()
    }

    /// `(θ̂ = B/A, degenerate)`; `θ̂ = 0` when `A` is singular.
    pub fn estimate(&self) -> (f64, bool) {
        let t = self.horizon();
        let a = self.a / t;
        if !(a.abs() >= INVERTIBILITY_FLOOR) {
            (0.0, true)
        } else {
            ((self.b / t) / a, false)
        }
    }
}

/// Streaming accumulator of [`LinearSums`]; feed observations in order.
pub struct LinearAccumulator<'a> {
    model: &'a CoarseModel,
    spacing: f64,
    prev: Option<(f64, f64, f64)>,
    sums: LinearSums,
}

impl<'a> LinearAccumulator<'a> {
    pub fn new(model: &'a CoarseModel, spacing: f64) -> Self {
        Self {
            model,
            spacing,
            prev: None,
            sums: LinearSums {
                spacing,
                ..LinearSums::default()
            },
        }
    }

    #[inline]
    pub fn push(&mut self, x: f64) -> Result<()> {
        if let Some((x_prev, h_prev, w_prev)) = self.prev {
            let dx = x - x_prev;
            self.sums.b += w_prev * dx;
            self.sums.a += h_prev * w_prev * self.spacing;
            self.sums.squared_increments += dx * dx;
            self.sums.increments += 1;
        }
        let k = self.model.diffusion_at(x)?;
        let h = self.model.linear_basis(x);
        self.prev = Some((x, h, h / (k * k)));
        Ok(())
    }

    pub fn finish(self) -> LinearSums {
        self.sums
    }
}

pub fn linear_sums(values: &[f64], spacing: f64, model: &CoarseModel) -> Result<LinearSums> {
    check_len(values.len())?;
    let mut acc = LinearAccumulator::new(model, spacing);
    for &x in values {
        acc.push(x)?;
    }
    Ok(acc.finish())
}

fn require_linear(model: &CoarseModel) -> Result<()> {
    if model.drift_is_linear_in_theta {
        Ok(())
    } else {
        Err(Error::Unsupported(
            "closed-form estimator needs a drift linear in θ".into(),
        ))
    }
}

/// Builds the result of the closed-form estimator from its sums.
pub fn linear_estimate(
    sums: &LinearSums,
    model: &CoarseModel,
    method: Method,
    meta: DataMeta,
) -> EstimationResult {
    let (theta_hat, degenerate) = sums.estimate();
    let (lo, hi) = model.theta_interval;
    let t = sums.horizon();
    EstimationResult {
        theta_hat,
        method,
        loglik_at_max: sums.loglik(theta_hat),
        a_sum: sums.a / t,
        b_sum: sums.b / t,
        data_meta: meta,
        degenerate,
        at_boundary: !degenerate && !(theta_hat > lo && theta_hat < hi),
    }
}

/// Closed-form MLE `θ̂ = B/A` for `F(x; θ) = θh(x)`. The estimate is not
/// projected onto the parameter interval; `at_boundary` flags when it falls
/// outside.
pub fn mle_linear<D: Observations>(data: &D, model: &CoarseModel) -> Result<EstimationResult> {
    require_linear(model)?;
    let sums = linear_sums(data.values(), data.spacing(), model)?;
    Ok(linear_estimate(&sums, model, data.linear_method(), data.meta()))
}

/// Golden-section maximization of the chosen likelihood over `Θ`.
pub fn mle_scan<D: Observations>(
    data: &D,
    model: &CoarseModel,
    kind: LikelihoodKind,
) -> Result<EstimationResult> {
    model.validate()?;
    let values = data.values();
    check_len(values.len())?;
    // Validate K along the data once so the objective can't fail mid-search.
    for &x in values {
        model.diffusion_at(x)?;
    }
    if kind == LikelihoodKind::Modified && model.potential.is_none() {
        return Err(Error::MissingPotential);
    }
    let meta = data.meta();
    let series;
    let samples: &SampleSeries = match kind {
        LikelihoodKind::Modified => {
            series = SampleSeries {
                delta: data.spacing(),
                values: values.to_vec(),
                epsilon: meta.epsilon,
                origin_dt: data.spacing(),
                n_count: values.len(),
                stride: 1,
                seed: meta.seed,
            };
            &series
        }
        _ => {
            series = SampleSeries {
                delta: 0.0,
                values: Vec::new(),
                epsilon: 0.0,
                origin_dt: 0.0,
                n_count: 0,
                stride: 1,
                seed: 0,
            };
            &series
        }
    };
    let step = data.spacing();
    let objective = |theta: f64| -> f64 {
        match kind {
            LikelihoodKind::Continuous | LikelihoodKind::Discrete => {
                loglik_sums(values, step, model, theta).unwrap_or(f64::NEG_INFINITY)
            }
            LikelihoodKind::Modified => {
                loglik_modified(samples, model, theta).unwrap_or(f64::NEG_INFINITY)
            }
        }
    };
    let (lo, hi) = model.theta_interval;
    let best = golden_section_max(objective, lo, hi, GOLDEN_TOL);
    let method = match kind {
        LikelihoodKind::Modified => Method::ModifiedScan,
        _ => data.scan_method(),
    };
    let (a_sum, b_sum) = if model.drift_is_linear_in_theta {
        let sums = linear_sums(values, step, model)?;
        (sums.a / sums.horizon(), sums.b / sums.horizon())
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(EstimationResult {
        theta_hat: best.argmax,
        method,
        loglik_at_max: best.value,
        a_sum,
        b_sum,
        data_meta: meta,
        degenerate: false,
        at_boundary: best.at_boundary,
    })
}

/// Closed-form maximizer of the modified likelihood for drifts `F = θh`
/// whose potential has `∂²ₓV` linear in θ: `θ̂ = −½ΣG₁ / Σ h²/K²`, where
/// `G₁ = G(·; 1)`.
pub fn modified_linear_argmax(samples: &SampleSeries, model: &CoarseModel) -> Result<f64> {
    require_linear(model)?;
    let pot = model.potential.as_ref().ok_or(Error::MissingPotential)?;
    let (mut quad, mut lin) = (0.0, 0.0);
    for &z in &samples.values {
        let k = model.diffusion_at(z)?;
        let h = model.linear_basis(z);
        quad += h * h / (k * k);
        lin += k * k * pot.second_derivative_at(z, 1.0);
    }
    if !(quad.abs() >= INVERTIBILITY_FLOOR) {
        return Err(Error::Degenerate(quad));
    }
    Ok(-0.5 * lin / quad)
}

/// Time averages of an observable over nested horizons `T, T/2, T/4, ...`.
pub fn horizon_averages(
    values: &[f64],
    dt: f64,
    observable: impl Fn(f64) -> f64,
    levels: usize,
) -> Result<Vec<(f64, f64)>> {
    let smallest = values.len() >> (levels.saturating_sub(1));
    if levels == 0 || smallest < 2 {
        return Err(Error::InsufficientData(format!(
            "{} points cannot be split into {levels} dyadic horizons",
            values.len()
        )));
    }
    let mut out = Vec::with_capacity(levels);
    for level in 0..levels {
        let n = values.len() >> level;
        let mean = values[..n].iter().map(|&x| observable(x)).sum::<f64>() / n as f64;
        out.push((n as f64 * dt, mean));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonRow {
    pub horizon: f64,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicDiagnostic {
    /// Replicate mean of the full-horizon time average.
    pub mean: f64,
    pub rows: Vec<HorizonRow>,
    /// Least-squares slope of `ln variance` against `ln T`; `None` when some
    /// variance is zero.
    pub slope: Option<f64>,
}

/// Aggregates per-replicate [`horizon_averages`] into variance-vs-horizon
/// rows.
pub fn summarize_horizons(per_replicate: &[Vec<(f64, f64)>]) -> Result<ErgodicDiagnostic> {
    if per_replicate.len() < 2 {
        return Err(Error::InsufficientData(
            "need at least 2 replicates for a variance".into(),
        ));
    }
    let levels = per_replicate[0].len();
    let r = per_replicate.len() as f64;
    let mut rows = Vec::with_capacity(levels);
    for level in 0..levels {
        let horizon = per_replicate[0][level].0;
        let vals: Vec<f64> = per_replicate.iter().map(|v| v[level].1).collect();
        let mean = vals.iter().sum::<f64>() / r;
        let variance = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0);
        rows.push(HorizonRow {
            horizon,
            mean,
            variance,
        });
    }
    let slope = if rows.iter().all(|row| row.variance > 0.0) {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .map(|row| (row.horizon.ln(), row.variance.ln()))
            .collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx)
    } else {
        None
    };
    Ok(ErgodicDiagnostic {
        mean: rows[0].mean,
        rows,
        slope,
    })
}

/// Time-average diagnostic over replicate paths on four dyadic horizons.
pub fn ergodic_average_diagnostic(
    paths: &[Path],
    observable: impl Fn(f64) -> f64,
) -> Result<ErgodicDiagnostic> {
    let per: Vec<Vec<(f64, f64)>> = paths
        .iter()
        .map(|p| horizon_averages(&p.slow, p.dt, &observable, 4))
        .collect::<Result<_>>()?;
    summarize_horizons(&per)
}
