//! Invariant densities, cell problems, effective coefficients and the
//! large-time limits of the coarse log-likelihood.

use crate::error::{invalid, Error, Result};
use crate::likelihood::{LinearAccumulator, LinearSums};
use crate::models::{
    CatalogEntry, CoarseModel, CoefficientField, CosineSeries, ModelFamily, MultiscaleModel,
    Regime, SlowPotential,
};
use crate::optimize::{golden_section_max, Maximum, GOLDEN_TOL};
use crate::quadrature::{GibbsDensity, QuadratureGrid, DEFAULT_LINE_NODES};
use crate::simulator::{
    coarse_stationary_density, run_replicates_with, simulate_coarse_with,
    simulate_multiscale_with, stationary_coarse_start, stationary_initial_state, ReplicateSpec,
    SimSettings,
};

/// Nodes of the periodic grid used for fast densities on the unit cell.
pub const FAST_CELL_NODES: usize = 1024;

/// Seed offset of the coarse path paired with each multiscale replicate.
const COARSE_STREAM: u64 = 0x5851_F42D_4C95_7F2D;

/// `A∞` below this is treated as singular.
pub const A_INFINITY_FLOOR: f64 = 1e-12;

/// Inverse temperature `2/b²` of a constant fast noise `b`.
fn fast_inverse_temperature(model: &MultiscaleModel) -> Result<f64> {
    match model.fast_noise {
        CoefficientField::Constant(b) if b != 0.0 && b.is_finite() => Ok(2.0 / (b * b)),
        _ => Err(Error::Unsupported(
            "fast dynamics need a constant, non-zero noise coefficient".into(),
        )),
    }
}

/// Invariant density `ρ(y; x)` of the frozen fast process.
///
/// Supported fast dynamics are reversible: a periodic gradient on the unit
/// cell or a linear (Gaussian) drift, each with constant noise.
pub fn fast_invariant_density(model: &MultiscaleModel, x: f64) -> Result<GibbsDensity> {
    let beta = fast_inverse_temperature(model)?;
    let theta = model.true_theta;
    match &model.g0 {
        // g0 = s·p'(y) = −U'(y) with U = −s·p
        CoefficientField::PeriodicGradient { potential, scale } => {
            let grid = QuadratureGrid::periodic_trapezoid(FAST_CELL_NODES)?;
            GibbsDensity::new(|y| -scale * potential.value(y), beta, grid)
        }
        // g0 = a·y + c(x) with a < 0: U = −a y²/2 − c y
        CoefficientField::Affine { fast, .. } if *fast < 0.0 => {
            let a = *fast;
            let c = model.g0.eval(x, 0.0, theta);
            let potential = move |y: f64| -0.5 * a * y * y - c * y;
            let grid =
                QuadratureGrid::for_energy(|y| beta * potential(y), -c / a, DEFAULT_LINE_NODES)?;
            GibbsDensity::new(potential, beta, grid)
        }
        _ => Err(Error::Unsupported(
            "fast drift is not a supported gradient field".into(),
        )),
    }
}

/// Averaged drift `F(x) = ∫f1 ρ` and diffusion `K(x) = (∫α0² + α1² ρ)^½` on
/// `x_grid`.
pub fn averaged_coefficients(
    model: &MultiscaleModel,
    theta: f64,
    x_grid: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if model.regime != Regime::Averaging {
        return Err(Error::RegimeMismatch {
            expected: "averaging",
        });
    }
    let mut drift = Vec::with_capacity(x_grid.len());
    let mut diffusion = Vec::with_capacity(x_grid.len());
    for &x in x_grid {
        let rho = fast_invariant_density(model, x)?;
        drift.push(rho.expectation(|y| model.f1.eval(x, y, theta)));
        let a = rho.expectation(|y| {
            let a0 = model.alpha0.eval(x, y, theta);
            let a1 = model.alpha1.eval(x, y, theta);
            a0 * a0 + a1 * a1
        });
        diffusion.push(a.sqrt());
    }
    Ok((drift, diffusion))
}

/// Closed-form solution of the one-dimensional periodic cell problem.
#[derive(Debug, Clone)]
pub struct CellSolution {
    pub beta: f64,
    pub grid: QuadratureGrid,
    /// `p` at the nodes.
    pub p: Vec<f64>,
    /// `∂_yφ = −1 + e^{βp}/Ẑ_p` at the nodes.
    pub dphi: Vec<f64>,
    /// `∫₀¹ e^{−βp}`
    pub z_p: f64,
    /// `∫₀¹ e^{βp}`
    pub z_hat_p: f64,
    /// `K = 1/(Z_p Ẑ_p)`
    pub k: f64,
    /// `K = Z_p⁻¹ ∫(1 + ∂_yφ)² e^{−βp}`
    pub k_from_corrector: f64,
}

impl CellSolution {
    /// `Z_p Ẑ_p`, which is at least 1.
    pub fn product(&self) -> f64 {
        self.z_p * self.z_hat_p
    }
}

pub fn solve_cell_problem(p: &CosineSeries, beta: f64, n_nodes: usize) -> Result<CellSolution> {
    solve_cell_problem_fn(|y| p.value(y), beta, n_nodes)
}

/// Cell problem for an arbitrary 1-periodic potential given pointwise.
pub fn solve_cell_problem_fn(
    p: impl Fn(f64) -> f64,
    beta: f64,
    n_nodes: usize,
) -> Result<CellSolution> {
    if n_nodes < 64 || !n_nodes.is_power_of_two() {
        return Err(invalid("n_nodes", format!("need a power of two ≥ 64, got {n_nodes}")));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(invalid("beta", format!("must be > 0, got {beta}")));
    }
    let (p0, p1) = (p(0.0), p(1.0));
    if !p0.is_finite() || (p0 - p1).abs() > 1e-10 * (1.0 + p0.abs()) {
        return Err(Error::NotPeriodic { p0, p1 });
    }
    let grid = QuadratureGrid::periodic_trapezoid(n_nodes)?;
    let values: Vec<f64> = grid.nodes.iter().map(|&y| p(y)).collect();
    let boltz: Vec<f64> = values.iter().map(|v| (-beta * v).exp()).collect();
    let anti: Vec<f64> = values.iter().map(|v| (beta * v).exp()).collect();
    let z_p = grid.integrate_values(&boltz);
    let z_hat_p = grid.integrate_values(&anti);
    if !(z_p.is_finite() && z_hat_p.is_finite()) {
        return Err(Error::NotIntegrable("β·p overflows".into()));
    }
    let dphi: Vec<f64> = anti.iter().map(|e| -1.0 + e / z_hat_p).collect();
    let corrector: Vec<f64> = dphi
        .iter()
        .zip(&boltz)
        .map(|(d, b)| (1.0 + d) * (1.0 + d) * b)
        .collect();
    let k_from_corrector = grid.integrate_values(&corrector) / z_p;
    Ok(CellSolution {
        beta,
        grid,
        p: values,
        dphi,
        z_p,
        z_hat_p,
        k: 1.0 / (z_p * z_hat_p),
        k_from_corrector,
    })
}

/// Drift values on a grid together with the coarse diffusion constant.
#[derive(Debug, Clone, PartialEq)]
pub struct HomogenizedCoefficients {
    pub drift: Vec<f64>,
    /// Coarse diffusion `√(2K/β)` (`√(2/β)` for Langevin).
    pub diffusion: f64,
    /// Cell coefficient `K` (1 for Langevin).
    pub homogenized_k: f64,
}

/// Homogenized drift and diffusion of a catalog entry on `x_grid`.
///
/// Langevin uses the corrector `Φ = p`: `F = ∫g1 ρ`, `K² = 2∫f0 Φ ρ`, both by
/// quadrature against the Gaussian fast density. The multiscale potential
/// uses the cell coefficient: `F = K f1`, `K_d² = 2K/β`.
pub fn homogenized_coefficients(
    entry: &CatalogEntry,
    theta: f64,
    x_grid: &[f64],
) -> Result<HomogenizedCoefficients> {
    let ms = &entry.multiscale;
    match entry.family {
        ModelFamily::AvgOuModulated => Err(Error::RegimeMismatch {
            expected: "homogenization",
        }),
        ModelFamily::LangevinHighFriction => {
            let mut drift = Vec::with_capacity(x_grid.len());
            let mut k2 = 0.0;
            for (i, &x) in x_grid.iter().enumerate() {
                let rho = fast_invariant_density(ms, x)?;
                drift.push(rho.expectation(|y| ms.g1.eval(x, y, theta) + ms.f1.eval(x, y, theta)));
                if i == 0 {
                    k2 = 2.0 * rho.expectation(|y| ms.f0.eval(x, y, theta) * y);
                }
            }
            if x_grid.is_empty() {
                let rho = fast_invariant_density(ms, 0.0)?;
                k2 = 2.0 * rho.expectation(|y| ms.f0.eval(0.0, y, theta) * y);
            }
            Ok(HomogenizedCoefficients {
                drift,
                diffusion: k2.sqrt(),
                homogenized_k: 1.0,
            })
        }
        ModelFamily::MultiscalePotential1D => {
            let cell = solve_cell_problem(&entry.fluctuation, entry.beta, crate::models::CATALOG_CELL_NODES)?;
            let drift = x_grid
                .iter()
                .map(|&x| cell.k * ms.f1.eval(x, 0.0, theta))
                .collect();
            Ok(HomogenizedCoefficients {
                drift,
                diffusion: (2.0 * cell.k / entry.beta).sqrt(),
                homogenized_k: cell.k,
            })
        }
    }
}

/// `Z_V⁻¹ (β/2) ∫|∂ₓV(x;θ)|² e^{−βV(x;θ)} dx`, or 0 when `∂ₓV` vanishes.
fn weighted_gradient_energy(potential: &SlowPotential, beta: f64, theta: f64) -> Result<f64> {
    let flat = (0..=64).all(|j| (potential.gradient)(-8.0 + 0.25 * j as f64, theta) == 0.0);
    if flat {
        return Ok(0.0);
    }
    let grid = QuadratureGrid::for_energy(
        |x| beta * (potential.value)(x, theta),
        0.0,
        DEFAULT_LINE_NODES,
    )?;
    let rho = GibbsDensity::new(|x| (potential.value)(x, theta), beta, grid)?;
    Ok(0.5 * beta * rho.expectation(|x| (potential.gradient)(x, theta).powi(2)))
}

/// Langevin bias `E∞(θ) = −Z_V⁻¹(β/2)∫|∂V|² e^{−βV}`; never positive.
pub fn e_infinity_langevin(potential: &SlowPotential, beta: f64, theta: f64) -> Result<f64> {
    Ok(-weighted_gradient_energy(potential, beta, theta)?)
}

/// Multiscale-potential bias term, split into magnitude and the sign of the
/// closed-form prefactor `−1 + (Z_p Ẑ_p)⁻¹`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EInfinity {
    pub magnitude: f64,
    /// −1 (or 0 when the prefactor vanishes).
    pub formula_sign: f64,
}

impl EInfinity {
    pub fn formula_value(&self) -> f64 {
        self.formula_sign * self.magnitude
    }
}

pub fn e_infinity_multiscale(
    potential: &SlowPotential,
    p: &CosineSeries,
    beta: f64,
    theta: f64,
) -> Result<EInfinity> {
    let cell = solve_cell_problem(p, beta, crate::models::CATALOG_CELL_NODES)?;
    e_infinity_multiscale_with_k(potential, cell.k, beta, theta)
}

fn e_infinity_multiscale_with_k(
    potential: &SlowPotential,
    k: f64,
    beta: f64,
    theta: f64,
) -> Result<EInfinity> {
    let prefactor = -1.0 + k;
    let magnitude = prefactor.abs() * weighted_gradient_energy(potential, beta, theta)?;
    Ok(EInfinity {
        magnitude,
        formula_sign: if prefactor == 0.0 { 0.0 } else { prefactor.signum() },
    })
}

/// `A∞ = ∫(F(x;θ0)/K(x))² π(x) dx`.
pub fn a_infinity(coarse: &CoarseModel, theta0: f64) -> Result<f64> {
    let pi = coarse_stationary_density(coarse, theta0)?;
    for &x in &pi.grid.nodes {
        coarse.diffusion_at(x)?;
    }
    let a = pi.expectation(|x| (coarse.drift_at(x, theta0) / (coarse.diffusion)(x)).powi(2));
    if !(a >= A_INFINITY_FLOOR) {
        return Err(Error::Degenerate(a));
    }
    Ok(a)
}

/// Which sign to attach to the multiscale-potential bias magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SignChoice {
    /// The sign of the closed-form prefactor.
    Formula,
    /// A sign measured by [`calibrate_e_infinity_sign`].
    Measured(f64),
}

#[derive(Debug, Clone)]
enum BiasTerm {
    Zero,
    Langevin { potential: SlowPotential, beta: f64 },
    Multiscale { potential: SlowPotential, beta: f64, k: f64, sign: f64 },
}

/// Per-time limits of the coarse log-likelihood as functions of `θ`.
#[derive(Debug, Clone)]
pub struct LimitFunctions {
    pub theta0: f64,
    pub theta_interval: (f64, f64),
    coarse: CoarseModel,
    pi: GibbsDensity,
    bias: BiasTerm,
}

impl LimitFunctions {
    /// `∫[F(θ)F(θ0) − ½F(θ)²]/K² π(·;θ0)`, i.e. half of the `2/T`
    /// normalization.
    pub fn coarse_limit(&self, theta: f64) -> f64 {
        let c = &self.coarse;
        self.pi.expectation(|x| {
            let k = (c.diffusion)(x);
            let f = c.drift_at(x, theta);
            (f * c.drift_at(x, self.theta0) - 0.5 * f * f) / (k * k)
        })
    }

    pub fn e_infinity(&self, theta: f64) -> Result<f64> {
        match &self.bias {
            BiasTerm::Zero => Ok(0.0),
            BiasTerm::Langevin { potential, beta } => e_infinity_langevin(potential, *beta, theta),
            BiasTerm::Multiscale {
                potential,
                beta,
                k,
                sign,
            } => Ok(sign * e_infinity_multiscale_with_k(potential, *k, *beta, theta)?.magnitude),
        }
    }

    /// Unsigned closed-form bias magnitude at `θ`.
    pub fn e_infinity_magnitude(&self, theta: f64) -> Result<f64> {
        match &self.bias {
            BiasTerm::Zero => Ok(0.0),
            BiasTerm::Langevin { potential, beta } => {
                weighted_gradient_energy(potential, *beta, theta)
            }
            BiasTerm::Multiscale { potential, beta, k, .. } => {
                Ok(e_infinity_multiscale_with_k(potential, *k, *beta, theta)?.magnitude)
            }
        }
    }

    pub fn full_limit(&self, theta: f64) -> Result<f64> {
        Ok(self.coarse_limit(theta) + self.e_infinity(theta)?)
    }

    pub fn coarse_argmax(&self) -> Maximum {
        let (lo, hi) = self.theta_interval;
        golden_section_max(|t| self.coarse_limit(t), lo, hi, GOLDEN_TOL)
    }

    pub fn full_argmax(&self) -> Result<Maximum> {
        // Surface a quadrature failure before the search swallows it.
        self.full_limit(self.theta0)?;
        let (lo, hi) = self.theta_interval;
        Ok(golden_section_max(
            |t| self.full_limit(t).unwrap_or(f64::NEG_INFINITY),
            lo,
            hi,
            GOLDEN_TOL,
        ))
    }
}

/// Builds the limit functions of a catalog entry. `π` is the coarse
/// invariant density at `θ0`; the bias term is zero for averaging.
pub fn asymptotic_limits(
    entry: &CatalogEntry,
    theta0: f64,
    sign: SignChoice,
) -> Result<LimitFunctions> {
    let pi = coarse_stationary_density(&entry.coarse, theta0)?;
    let bias = match entry.family {
        ModelFamily::AvgOuModulated => BiasTerm::Zero,
        ModelFamily::LangevinHighFriction => BiasTerm::Langevin {
            potential: entry.slow_potential.clone(),
            beta: entry.beta,
        },
        ModelFamily::MultiscalePotential1D => {
            let k = entry.homogenized_k;
            let sign = match sign {
                SignChoice::Formula => (k - 1.0).signum(),
                SignChoice::Measured(s) => s.signum(),
            };
            BiasTerm::Multiscale {
                potential: entry.slow_potential.clone(),
                beta: entry.beta,
                k,
                sign,
            }
        }
    };
    Ok(LimitFunctions {
        theta0,
        theta_interval: entry.coarse.theta_interval,
        coarse: entry.coarse.clone(),
        pi,
        bias,
    })
}

/// Simulation controls for [`calibrate_e_infinity_sign`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSettings {
    pub t_final: f64,
    pub resolution_factor: u32,
    pub coarse_dt: f64,
    pub replicates: ReplicateSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub theta_probe: f64,
    /// Mean over replicates of `(1/T)L(θ; slow path) − (1/T)L(θ; coarse path)`.
    pub e_hat: f64,
    pub standard_error: f64,
    /// `sign(Ê)`, or `None` when the standard error exceeds `|Ê|`.
    pub sign: Option<f64>,
    pub formula_magnitude: f64,
    /// Sign of the closed form (−1 for both homogenization entries, 0 when
    /// the bias vanishes).
    pub formula_sign: f64,
    /// `|Ê| / formula_magnitude`.
    pub ratio: f64,
    pub per_replicate: Vec<f64>,
}

impl CalibrationReport {
    pub fn is_conclusive(&self) -> bool {
        self.sign.is_some()
    }

    /// Whether the measured sign equals the closed-form sign.
    pub fn agrees_with_formula(&self) -> Option<bool> {
        self.sign.map(|s| s == self.formula_sign)
    }
}

/// Per-replicate likelihood sums on multiscale data and on coarse-model
/// data. The per-time likelihood of a linear drift is `θB − ½θ²A`, so one
/// ensemble serves every probe `θ`.
#[derive(Debug, Clone)]
pub struct CalibrationData {
    pub per_replicate: Vec<(LinearSums, LinearSums)>,
    limits: LimitFunctions,
    family: ModelFamily,
}

impl CalibrationData {
    /// Difference of per-time likelihoods for each replicate at `θ`.
    pub fn differences(&self, theta: f64) -> Vec<f64> {
        self.per_replicate
            .iter()
            .map(|(full, reduced)| full.rate(theta) - reduced.rate(theta))
            .collect()
    }

    pub fn report(&self, theta_probe: f64) -> Result<CalibrationReport> {
        if theta_probe == 0.0 || !theta_probe.is_finite() {
            return Err(invalid("theta_probe", "must be non-zero"));
        }
        let diffs = self.differences(theta_probe);
        let n = diffs.len() as f64;
        let e_hat = diffs.iter().sum::<f64>() / n;
        let var = diffs.iter().map(|d| (d - e_hat).powi(2)).sum::<f64>() / (n - 1.0);
        let standard_error = (var / n).sqrt();
        let formula_magnitude = self.limits.e_infinity_magnitude(theta_probe)?;
        let formula_sign = match self.family {
            ModelFamily::AvgOuModulated => 0.0,
            _ if formula_magnitude == 0.0 => 0.0,
            _ => -1.0,
        };
        let sign = if standard_error < e_hat.abs() {
            Some(e_hat.signum())
        } else {
            None
        };
        Ok(CalibrationReport {
            theta_probe,
            e_hat,
            standard_error,
            sign,
            formula_magnitude,
            formula_sign,
            ratio: e_hat.abs() / formula_magnitude,
            per_replicate: diffs,
        })
    }
}

fn check_calibration(entry: &CatalogEntry, settings: &CalibrationSettings) -> Result<()> {
    if !entry.coarse.drift_is_linear_in_theta {
        return Err(Error::Unsupported("calibration needs a linear drift".into()));
    }
    if settings.replicates.n_replicates < 2 {
        return Err(invalid("replicates", "need at least 2 for a standard error"));
    }
    Ok(())
}

/// Likelihood sums of the coarse-model path paired with replicate `seed`:
/// stationary start at `θ0`, horizon `T`, step `coarse_dt`.
pub fn coarse_partner_sums(
    entry: &CatalogEntry,
    settings: &CalibrationSettings,
    seed: u64,
) -> Result<LinearSums> {
    let coarse = &entry.coarse;
    let coarse_seed = seed ^ COARSE_STREAM;
    let xc = stationary_coarse_start(coarse, entry.theta0, coarse_seed)?;
    let mut sums = LinearAccumulator::new(coarse, settings.coarse_dt);
    let mut failure = None;
    simulate_coarse_with(
        coarse,
        entry.theta0,
        settings.t_final,
        settings.coarse_dt,
        xc,
        coarse_seed,
        |_, x| {
            if failure.is_none() {
                if let Err(e) = sums.push(x) {
                    failure = Some(e);
                }
            }
        },
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(sums.finish()),
    }
}

/// Simulates the replicate pairs behind [`calibrate_e_infinity_sign`].
/// Multiscale paths start stationary and discard a burn-in before `T`.
pub fn calibration_ensemble(
    entry: &CatalogEntry,
    settings: &CalibrationSettings,
) -> Result<CalibrationData> {
    check_calibration(entry, settings)?;
    let spec = settings.replicates;
    let ms = &entry.multiscale;
    let coarse = &entry.coarse;
    let burn = spec.burn_in_fraction * settings.t_final;
    let per_replicate = run_replicates_with(&spec, |_, seed| {
        let (x0, y0) = stationary_initial_state(ms, coarse, seed)?;
        let dt = ms.time_step(settings.resolution_factor);
        let skip = (burn / dt).round() as usize;
        let sim = SimSettings::new(settings.t_final + skip as f64 * dt, settings.resolution_factor);
        let mut full = LinearAccumulator::new(coarse, dt);
        let mut failure = None;
        simulate_multiscale_with(ms, sim, x0, y0, seed, |i, x, _| {
            if i >= skip && failure.is_none() {
                if let Err(e) = full.push(x) {
                    failure = Some(e);
                }
            }
        })?;
        if let Some(e) = failure {
            return Err(e);
        }
        Ok((full.finish(), coarse_partner_sums(entry, settings, seed)?))
    })?;
    Ok(CalibrationData {
        per_replicate,
        limits: asymptotic_limits(entry, entry.theta0, SignChoice::Formula)?,
        family: entry.family,
    })
}

/// Calibration from multiscale sums already accumulated on the replicate
/// paths of `settings` (index-aligned with its seeds); only the coarse
/// partners are simulated.
pub fn calibration_from_multiscale_sums(
    entry: &CatalogEntry,
    settings: &CalibrationSettings,
    full: &[LinearSums],
) -> Result<CalibrationData> {
    check_calibration(entry, settings)?;
    if full.len() != settings.replicates.n_replicates {
        return Err(invalid("replicates", "one multiscale sum per replicate is required"));
    }
    let reduced = run_replicates_with(&settings.replicates, |_, seed| {
        coarse_partner_sums(entry, settings, seed)
    })?;
    Ok(CalibrationData {
        per_replicate: full.iter().copied().zip(reduced).collect(),
        limits: asymptotic_limits(entry, entry.theta0, SignChoice::Formula)?,
        family: entry.family,
    })
}

/// Estimates `E∞(θ_probe)` as the replicate mean of the difference between
/// the per-time likelihood on multiscale data and on coarse-model data.
/// An inconclusive sign is reported, not treated as an error.
pub fn calibrate_e_infinity_sign(
    entry: &CatalogEntry,
    theta_probe: f64,
    settings: &CalibrationSettings,
) -> Result<CalibrationReport> {
    if theta_probe == 0.0 || !theta_probe.is_finite() {
        return Err(invalid("theta_probe", "must be non-zero"));
    }
    calibration_ensemble(entry, settings)?.report(theta_probe)
}
