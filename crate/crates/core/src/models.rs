//! Fast/slow systems, coarse-grained statistical models and the built-in
//! model catalog.
//!
//! All state is one-dimensional: a scalar slow variable `x`, a scalar fast
//! variable `y`, scalar drivers `U`, `V` and a scalar drift parameter `θ`.
//! A [`MultiscaleModel`] in the averaging regime evolves as
//!
//! ```text
//! dx = f1 dt + α0 dU + α1 dV
//! dy = g0/ε dt + β/√ε dV
//! ```
//!
//! and in the homogenization regime as
//!
//! ```text
//! dx = (f0/ε + f1) dt + α0 dU + α1 dV
//! dy = (g0/ε² + g1/ε) dt + β/ε dV
//! ```

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::homogenize;

/// Scalar function of `(x, y, θ)`.
pub type FieldFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;
/// Scalar function of `(x, θ)`.
pub type SlowFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
/// Scalar function of `x`.
pub type StateFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A 1-periodic potential `p(y) = Σ_k a_k cos(2πky)`, `k = 1, 2, ...`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CosineSeries {
    coeffs: Vec<f64>,
}

impl CosineSeries {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    /// `a·cos(2πy)`
    pub fn single(amplitude: f64) -> Self {
        Self::new(vec![amplitude])
    }

    pub fn zero() -> Self {
        Self::new(vec![0.0])
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.iter().all(|&a| a == 0.0)
    }

    pub fn value(&self, y: f64) -> f64 {
        let w = y - y.floor();
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, a)| a * (TAU * (i + 1) as f64 * w).cos())
            .sum()
    }

    pub fn derivative(&self, y: f64) -> f64 {
        let w = y - y.floor();
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let k = TAU * (i + 1) as f64;
                -a * k * (k * w).sin()
            })
            .sum()
    }

    pub fn second_derivative(&self, y: f64) -> f64 {
        let w = y - y.floor();
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let k = TAU * (i + 1) as f64;
                -a * k * k * (k * w).cos()
            })
            .sum()
    }
}

/// Confining potential `V(x; θ)` of the slow variable, with its first two
/// `x`-derivatives.
#[derive(Clone)]
pub struct SlowPotential {
    pub value: SlowFn,
    pub gradient: SlowFn,
    pub hessian: SlowFn,
    quadratic: bool,
}

impl SlowPotential {
    /// `V(x; θ) = θx²/2`
    pub fn quadratic() -> Self {
        Self {
            value: Arc::new(|x, theta| 0.5 * theta * x * x),
            gradient: Arc::new(|x, theta| theta * x),
            hessian: Arc::new(|_, theta| theta),
            quadratic: true,
        }
    }

    pub fn custom(value: SlowFn, gradient: SlowFn, hessian: SlowFn) -> Self {
        Self {
            value,
            gradient,
            hessian,
            quadratic: false,
        }
    }

    pub fn is_quadratic(&self) -> bool {
        self.quadratic
    }
}

impl fmt::Debug for SlowPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.quadratic {
            f.write_str("SlowPotential(θx²/2)")
        } else {
            f.write_str("SlowPotential(custom)")
        }
    }
}

/// One coefficient of a fast/slow system as a function of `(x, y, θ)`.
///
/// Closed forms are evaluated by `match` so the simulator's inner loop does
/// not go through dynamic dispatch for catalog models.
#[derive(Clone)]
pub enum CoefficientField {
    Zero,
    Constant(f64),
    /// `slow·x + fast·y + theta_slow·θ·x + offset`
    Affine {
        slow: f64,
        fast: f64,
        theta_slow: f64,
        offset: f64,
    },
    /// `scale · p'(y)` for a periodic potential `p`; `y` is wrapped to `[0, 1)`.
    PeriodicGradient { potential: CosineSeries, scale: f64 },
    Custom {
        f: FieldFn,
        depends_on_theta: bool,
        smoothness_assumed: bool,
    },
}

impl CoefficientField {
    pub fn affine(slow: f64, fast: f64, theta_slow: f64) -> Self {
        CoefficientField::Affine {
            slow,
            fast,
            theta_slow,
            offset: 0.0,
        }
    }

    #[inline]
    pub fn eval(&self, x: f64, y: f64, theta: f64) -> f64 {
        match self {
            CoefficientField::Zero => 0.0,
            CoefficientField::Constant(c) => *c,
            CoefficientField::Affine {
                slow,
                fast,
                theta_slow,
                offset,
            } => slow * x + fast * y + theta_slow * theta * x + offset,
            CoefficientField::PeriodicGradient { potential, scale } => {
                scale * potential.derivative(y)
            }
            CoefficientField::Custom { f, .. } => f(x, y, theta),
        }
    }

    pub fn depends_on_theta(&self) -> bool {
        match self {
            CoefficientField::Affine { theta_slow, .. } => *theta_slow != 0.0,
            CoefficientField::Custom {
                depends_on_theta, ..
            } => *depends_on_theta,
            _ => false,
        }
    }

    pub fn smoothness_assumed(&self) -> bool {
        match self {
            CoefficientField::Custom {
                smoothness_assumed, ..
            } => *smoothness_assumed,
            _ => true,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            CoefficientField::Zero => true,
            CoefficientField::Constant(c) => *c == 0.0,
            CoefficientField::Affine {
                slow,
                fast,
                theta_slow,
                offset,
            } => *slow == 0.0 && *fast == 0.0 && *theta_slow == 0.0 && *offset == 0.0,
            CoefficientField::PeriodicGradient { potential, scale } => {
                *scale == 0.0 || potential.is_constant()
            }
            CoefficientField::Custom { .. } => false,
        }
    }
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoefficientField::Zero => f.write_str("Zero"),
            CoefficientField::Constant(c) => write!(f, "Constant({c})"),
            CoefficientField::Affine {
                slow,
                fast,
                theta_slow,
                offset,
            } => write!(f, "Affine({slow}·x + {fast}·y + {theta_slow}·θx + {offset})"),
            CoefficientField::PeriodicGradient { potential, scale } => {
                write!(f, "PeriodicGradient({scale}·p', {:?})", potential.coeffs())
            }
            CoefficientField::Custom {
                depends_on_theta, ..
            } => write!(f, "Custom(depends_on_theta = {depends_on_theta})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Averaging,
    Homogenization,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FastDomain {
    PeriodicUnit,
    RealLine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlowDomain {
    RealLine,
}

/// Names of the built-in catalog entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelFamily {
    AvgOuModulated,
    LangevinHighFriction,
    MultiscalePotential1D,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 3] = [
        ModelFamily::AvgOuModulated,
        ModelFamily::LangevinHighFriction,
        ModelFamily::MultiscalePotential1D,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::AvgOuModulated => "AvgOuModulated",
            ModelFamily::LangevinHighFriction => "LangevinHighFriction",
            ModelFamily::MultiscalePotential1D => "MultiscalePotential1D",
        }
    }

    pub fn regime(self) -> Regime {
        match self {
            ModelFamily::AvgOuModulated => Regime::Averaging,
            _ => Regime::Homogenization,
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelFamily::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownEntry(s.to_string()))
    }
}

/// Fast/slow system of SDEs.
#[derive(Debug, Clone)]
pub struct MultiscaleModel {
    pub regime: Regime,
    pub f0: CoefficientField,
    pub f1: CoefficientField,
    pub g0: CoefficientField,
    pub g1: CoefficientField,
    pub alpha0: CoefficientField,
    pub alpha1: CoefficientField,
    /// Fast diffusion coefficient (the `β` of the fast/slow system, not the
    /// inverse temperature).
    pub fast_noise: CoefficientField,
    pub epsilon: f64,
    pub fast_domain: FastDomain,
    pub slow_domain: SlowDomain,
    pub true_theta: f64,
    /// Catalog family, when the model came from [`CatalogEntry::build`].
    pub family: Option<ModelFamily>,
    /// `y ≡ x/ε` along trajectories (multiscale potential).
    pub fast_slaved: bool,
}

impl MultiscaleModel {
    /// Checks the structural invariants: `ε > 0` and `f0 ≡ g1 ≡ 0` when
    /// averaging.
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(invalid("epsilon", format!("must be > 0, got {}", self.epsilon)));
        }
        if self.regime == Regime::Averaging && (!self.f0.is_zero() || !self.g1.is_zero()) {
            return Err(invalid(
                "coefficients",
                "averaging models must have f0 = g1 = 0",
            ));
        }
        Ok(())
    }

    /// Integrator step tied to the fastest time scale.
    pub fn time_step(&self, resolution_factor: u32) -> f64 {
        match self.regime {
            Regime::Homogenization => self.epsilon * self.epsilon / resolution_factor as f64,
            Regime::Averaging => self.epsilon / resolution_factor as f64,
        }
    }
}

/// The `∇V = (KKᵀ)⁻¹F` potential used by the modified likelihood.
#[derive(Clone)]
pub struct DriftPotential {
    pub value: SlowFn,
    /// Analytic `∂²ₓV`; `None` falls back to a central difference.
    pub second_derivative: Option<SlowFn>,
}

impl DriftPotential {
    pub fn second_derivative_at(&self, x: f64, theta: f64) -> f64 {
        match &self.second_derivative {
            Some(d2) => d2(x, theta),
            None => {
                let h = 1e-5 * (1.0 + x.abs());
                ((self.value)(x + h, theta) - 2.0 * (self.value)(x, theta)
                    + (self.value)(x - h, theta))
                    / (h * h)
            }
        }
    }
}

impl fmt::Debug for DriftPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriftPotential")
            .field("analytic_second_derivative", &self.second_derivative.is_some())
            .finish()
    }
}

/// Coarse-grained statistical model `dX = F(X; θ) dt + K(X) dW`.
#[derive(Clone)]
pub struct CoarseModel {
    pub name: String,
    pub drift: SlowFn,
    pub drift_is_linear_in_theta: bool,
    pub diffusion: StateFn,
    pub potential: Option<DriftPotential>,
    pub theta_interval: (f64, f64),
    /// Unnormalized invariant density `π(x; θ)`.
    pub invariant_density: Option<SlowFn>,
}

/// Floor below which `K(x)` is treated as degenerate.
pub const DIFFUSION_FLOOR: f64 = 1e-12;

impl CoarseModel {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.theta_interval;
        if !(lo < hi) {
            return Err(invalid("theta_interval", format!("need lo < hi, got [{lo}, {hi}]")));
        }
        Ok(())
    }

    #[inline]
    pub fn drift_at(&self, x: f64, theta: f64) -> f64 {
        (self.drift)(x, theta)
    }

    /// `K(x)`, checked against [`DIFFUSION_FLOOR`].
    #[inline]
    pub fn diffusion_at(&self, x: f64) -> Result<f64> {
        let k = (self.diffusion)(x);
        if k.abs() < DIFFUSION_FLOOR || !k.is_finite() {
            return Err(Error::DegenerateDiffusion { x, value: k });
        }
        Ok(k)
    }

    /// `h(x)` such that `F(x; θ) = θ h(x)`, for linear models.
    pub fn linear_basis(&self, x: f64) -> f64 {
        (self.drift)(x, 1.0)
    }

    /// Max over the grid of `|K(x)² ∂ₓV(x; θ) − F(x; θ)|`, with `∂ₓV` by
    /// central differences.
    pub fn potential_residual(&self, xs: &[f64], thetas: &[f64]) -> Result<f64> {
        let pot = self.potential.as_ref().ok_or(Error::MissingPotential)?;
        let mut worst = 0.0_f64;
        for &theta in thetas {
            for &x in xs {
                let h = 1e-5 * (1.0 + x.abs());
                let grad = ((pot.value)(x + h, theta) - (pot.value)(x - h, theta)) / (2.0 * h);
                let k = (self.diffusion)(x);
                worst = worst.max((k * k * grad - self.drift_at(x, theta)).abs());
            }
        }
        Ok(worst)
    }
}

impl fmt::Debug for CoarseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoarseModel")
            .field("name", &self.name)
            .field("drift_is_linear_in_theta", &self.drift_is_linear_in_theta)
            .field("potential", &self.potential)
            .field("theta_interval", &self.theta_interval)
            .finish()
    }
}

/// Default compact parameter set.
pub const DEFAULT_THETA_INTERVAL: (f64, f64) = (0.05, 10.0);

/// Nodes used for the cell problem when building catalog models.
pub const CATALOG_CELL_NODES: usize = 1024;

/// A catalog model: the fast/slow system, its coarse model and the closed-form
/// data both were built from.
#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub family: ModelFamily,
    pub theta0: f64,
    pub epsilon: f64,
    /// Inverse temperature.
    pub beta: f64,
    pub fluctuation: CosineSeries,
    /// Physical potential `V(x; θ)` of the slow variable.
    pub slow_potential: SlowPotential,
    /// Inverse temperature of the coarse invariant density `π ∝ e^{-β_c V}`.
    pub coarse_beta: f64,
    /// Homogenized coefficient multiplying the drift and the diffusivity
    /// (1 for the averaging and Langevin entries).
    pub homogenized_k: f64,
    pub multiscale: MultiscaleModel,
    pub coarse: CoarseModel,
}

impl CatalogEntry {
    /// Builds a catalog entry. `fluctuation` is required (non-empty) for the
    /// multiscale potential and ignored otherwise; `beta` is ignored by the
    /// averaging entry, whose coefficients are fixed.
    pub fn build(
        family: ModelFamily,
        theta0: f64,
        epsilon: f64,
        beta: f64,
        fluctuation: Option<CosineSeries>,
    ) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(invalid("epsilon", format!("must lie in (0, 1), got {epsilon}")));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(invalid("beta", format!("must be > 0, got {beta}")));
        }
        if !theta0.is_finite() {
            return Err(invalid("theta0", "must be finite"));
        }
        let slow_potential = SlowPotential::quadratic();
        let entry = match family {
            ModelFamily::AvgOuModulated => {
                let sqrt2 = std::f64::consts::SQRT_2;
                let multiscale = MultiscaleModel {
                    regime: Regime::Averaging,
                    f0: CoefficientField::Zero,
                    f1: CoefficientField::affine(0.0, 1.0, -1.0),
                    g0: CoefficientField::affine(0.0, -1.0, 0.0),
                    g1: CoefficientField::Zero,
                    alpha0: CoefficientField::Constant(sqrt2),
                    alpha1: CoefficientField::Zero,
                    fast_noise: CoefficientField::Constant(sqrt2),
                    epsilon,
                    fast_domain: FastDomain::RealLine,
                    slow_domain: SlowDomain::RealLine,
                    true_theta: theta0,
                    family: Some(family),
                    fast_slaved: false,
                };
                CatalogEntry {
                    family,
                    theta0,
                    epsilon,
                    beta,
                    fluctuation: CosineSeries::zero(),
                    coarse: gradient_coarse_model(family.name(), 1.0, 1.0),
                    slow_potential,
                    coarse_beta: 1.0,
                    homogenized_k: 1.0,
                    multiscale,
                }
            }
            ModelFamily::LangevinHighFriction => {
                let noise = (2.0 / beta).sqrt();
                let multiscale = MultiscaleModel {
                    regime: Regime::Homogenization,
                    f0: CoefficientField::affine(0.0, 1.0, 0.0),
                    f1: CoefficientField::Zero,
                    g0: CoefficientField::affine(0.0, -1.0, 0.0),
                    g1: CoefficientField::affine(0.0, 0.0, -1.0),
                    alpha0: CoefficientField::Zero,
                    alpha1: CoefficientField::Zero,
                    fast_noise: CoefficientField::Constant(noise),
                    epsilon,
                    fast_domain: FastDomain::RealLine,
                    slow_domain: SlowDomain::RealLine,
                    true_theta: theta0,
                    family: Some(family),
                    fast_slaved: false,
                };
                CatalogEntry {
                    family,
                    theta0,
                    epsilon,
                    beta,
                    fluctuation: CosineSeries::zero(),
                    coarse: gradient_coarse_model(family.name(), 1.0, beta),
                    slow_potential,
                    coarse_beta: beta,
                    homogenized_k: 1.0,
                    multiscale,
                }
            }
            ModelFamily::MultiscalePotential1D => {
                let p = match fluctuation {
                    Some(p) if !p.coeffs().is_empty() => p,
                    _ => {
                        return Err(invalid(
                            "p_coeffs",
                            "MultiscalePotential1D needs a fluctuating potential",
                        ))
                    }
                };
                let cell = homogenize::solve_cell_problem(&p, beta, CATALOG_CELL_NODES)?;
                let noise = (2.0 / beta).sqrt();
                let force = CoefficientField::PeriodicGradient {
                    potential: p.clone(),
                    scale: -1.0,
                };
                let multiscale = MultiscaleModel {
                    regime: Regime::Homogenization,
                    f0: force.clone(),
                    f1: CoefficientField::affine(0.0, 0.0, -1.0),
                    g0: force,
                    g1: CoefficientField::affine(0.0, 0.0, -1.0),
                    alpha0: CoefficientField::Zero,
                    alpha1: CoefficientField::Constant(noise),
                    fast_noise: CoefficientField::Constant(noise),
                    epsilon,
                    fast_domain: FastDomain::PeriodicUnit,
                    slow_domain: SlowDomain::RealLine,
                    true_theta: theta0,
                    family: Some(family),
                    fast_slaved: true,
                };
                CatalogEntry {
                    family,
                    theta0,
                    epsilon,
                    beta,
                    fluctuation: p,
                    coarse: gradient_coarse_model(family.name(), cell.k, beta),
                    slow_potential,
                    coarse_beta: beta,
                    homogenized_k: cell.k,
                    multiscale,
                }
            }
        };
        entry.multiscale.validate()?;
        Ok(entry)
    }

    pub fn with_theta_interval(mut self, lo: f64, hi: f64) -> Result<Self> {
        self.coarse.theta_interval = (lo, hi);
        self.coarse.validate()?;
        Ok(self)
    }

    /// Coarse diffusion constant `K`.
    pub fn coarse_diffusion(&self) -> f64 {
        (self.coarse.diffusion)(0.0)
    }
}

/// Coarse model `dX = −k θ X dt + √(2k/β) dW` with drift potential
/// `V_d = −βθx²/4` and invariant density `e^{−βθx²/2}`.
fn gradient_coarse_model(name: &str, k: f64, beta: f64) -> CoarseModel {
    let diffusion = (2.0 * k / beta).sqrt();
    CoarseModel {
        name: name.to_string(),
        drift: Arc::new(move |x, theta| -k * theta * x),
        drift_is_linear_in_theta: true,
        diffusion: Arc::new(move |_| diffusion),
        potential: Some(DriftPotential {
            value: Arc::new(move |x, theta| -0.25 * beta * theta * x * x),
            second_derivative: Some(Arc::new(move |_, theta| -0.5 * beta * theta)),
        }),
        theta_interval: DEFAULT_THETA_INTERVAL,
        invariant_density: Some(Arc::new(move |x, theta| (-0.5 * beta * theta * x * x).exp())),
    }
}

/// Builds a catalog entry and returns its `(multiscale, coarse)` pair.
pub fn build_model(
    family: ModelFamily,
    theta0: f64,
    epsilon: f64,
    beta: f64,
    fluctuation: Option<CosineSeries>,
) -> Result<(MultiscaleModel, CoarseModel)> {
    let entry = CatalogEntry::build(family, theta0, epsilon, beta, fluctuation)?;
    Ok((entry.multiscale, entry.coarse))
}

/// Returns whether `|∫ρ(y;x) f0(x,y) dy| ≤ tol` at every grid point.
pub fn check_centering(model: &MultiscaleModel, x_grid: &[f64], tol: f64) -> Result<bool> {
    if model.regime != Regime::Homogenization {
        return Err(Error::RegimeMismatch {
            expected: "homogenization",
        });
    }
    for &x in x_grid {
        let rho = homogenize::fast_invariant_density(model, x)?;
        let mean = rho.expectation(|y| model.f0.eval(x, y, model.true_theta));
        if !(mean.abs() <= tol) {
            return Ok(false);
        }
    }
    Ok(true)
}
