//! Quadrature grids and Gibbs densities on them.

use crate::error::{Error, Result};

/// Nodes for line integrals (composite Simpson).
pub const DEFAULT_LINE_NODES: usize = 4097;

/// Tail cut-off: the line is truncated where `βU` exceeds its minimum by this.
pub const TAIL_CUTOFF: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    PeriodicUnit,
    TruncatedLine { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    PeriodicTrapezoid,
    CompositeSimpson,
}

#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    pub domain: Domain,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub rule: Rule,
}

impl QuadratureGrid {
    /// `n` equispaced nodes `j/n` on `[0, 1)` with weights `1/n`.
    pub fn periodic_trapezoid(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(crate::error::invalid("n_nodes", "need at least 2 nodes"));
        }
        let h = 1.0 / n as f64;
        Ok(Self {
            domain: Domain::PeriodicUnit,
            nodes: (0..n).map(|j| j as f64 * h).collect(),
            weights: vec![h; n],
            rule: Rule::PeriodicTrapezoid,
        })
    }

    /// Composite Simpson on `[lo, hi]`; `n` is rounded up to the next odd
    /// number.
    pub fn composite_simpson(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(crate::error::invalid("interval", format!("bad interval [{lo}, {hi}]")));
        }
        let n = if n % 2 == 0 { n + 1 } else { n.max(3) };
        let h = (hi - lo) / (n - 1) as f64;
        let nodes = (0..n)
            .map(|j| if j == n - 1 { hi } else { lo + j as f64 * h })
            .collect();
        let weights = (0..n)
            .map(|j| {
                let c = if j == 0 || j == n - 1 {
                    1.0
                } else if j % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                c * h / 3.0
            })
            .collect();
        Ok(Self {
            domain: Domain::TruncatedLine { lo, hi },
            nodes,
            weights,
            rule: Rule::CompositeSimpson,
        })
    }

    /// Simpson grid covering the region where `energy(x) ≤ min + TAIL_CUTOFF`.
    ///
    /// `energy` is the already temperature-scaled potential `βU`. Fails if the
    /// energy does not grow on both sides.
    pub fn for_energy(energy: impl Fn(f64) -> f64, center: f64, n: usize) -> Result<Self> {
        let mut half = 1.0;
        let (lo, hi, min) = loop {
            let probe = 2001;
            let step = 2.0 * half / (probe - 1) as f64;
            let mut min = f64::INFINITY;
            for j in 0..probe {
                let e = energy(center - half + j as f64 * step);
                if e < min {
                    min = e;
                }
            }
            if !min.is_finite() {
                return Err(Error::NotIntegrable("energy is not finite".into()));
            }
            let lo_ok = energy(center - half) >= min + TAIL_CUTOFF;
            let hi_ok = energy(center + half) >= min + TAIL_CUTOFF;
            if lo_ok && hi_ok {
                break (center - half, center + half, min);
            }
            half *= 2.0;
            if half > 1e8 {
                return Err(Error::NotIntegrable(
                    "energy does not grow in the tails".into(),
                ));
            }
        };
        let threshold = min + TAIL_CUTOFF;
        // Tighten each end to the first crossing coming in from outside.
        let probe = 4001;
        let step = (hi - lo) / (probe - 1) as f64;
        let mut first = 0;
        while first + 1 < probe && energy(lo + (first + 1) as f64 * step) >= threshold {
            first += 1;
        }
        let mut last = probe - 1;
        while last > first + 1 && energy(lo + (last - 1) as f64 * step) >= threshold {
            last -= 1;
        }
        Self::composite_simpson(lo + first as f64 * step, lo + last as f64 * step, n)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn length(&self) -> f64 {
        match self.domain {
            Domain::PeriodicUnit => 1.0,
            Domain::TruncatedLine { lo, hi } => hi - lo,
        }
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    pub fn integrate_values(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }
}

/// Normalized density `Z⁻¹ e^{−β U}` tabulated on a grid.
#[derive(Debug, Clone)]
pub struct GibbsDensity {
    pub beta: f64,
    pub grid: QuadratureGrid,
    /// `∫ e^{−βU}` over the grid.
    pub z: f64,
    /// Normalized density at the nodes.
    pub density: Vec<f64>,
    cdf: Vec<f64>,
}

impl GibbsDensity {
    pub fn new(potential: impl Fn(f64) -> f64, beta: f64, grid: QuadratureGrid) -> Result<Self> {
        let energies: Vec<f64> = grid.nodes.iter().map(|&x| beta * potential(x)).collect();
        let shift = energies.iter().cloned().fold(f64::INFINITY, f64::min);
        if !shift.is_finite() {
            return Err(Error::NotIntegrable("potential is not finite on the grid".into()));
        }
        let unnormalized: Vec<f64> = energies.iter().map(|e| (shift - e).exp()).collect();
        let z_shifted = grid.integrate_values(&unnormalized);
        if !(z_shifted > 0.0) || !z_shifted.is_finite() {
            return Err(Error::NotIntegrable(format!("normalization {z_shifted}")));
        }
        let density: Vec<f64> = unnormalized.iter().map(|u| u / z_shifted).collect();
        let z = z_shifted * (-shift).exp();
        let cdf = cumulative(&grid, &density);
        Ok(Self {
            beta,
            grid,
            z,
            density,
            cdf,
        })
    }

    /// `∫ f ρ`
    pub fn expectation(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.grid
            .nodes
            .iter()
            .zip(&self.grid.weights)
            .zip(&self.density)
            .map(|((&x, &w), &d)| w * d * f(x))
            .sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.grid.integrate_values(&self.density)
    }

    /// Inverse-CDF sample for `u ∈ [0, 1)`, linear between nodes.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let nodes = &self.grid.nodes;
        let right_end = match self.grid.domain {
            Domain::PeriodicUnit => 1.0,
            Domain::TruncatedLine { hi, .. } => hi,
        };
        let target = u.clamp(0.0, 1.0) * self.cdf[self.cdf.len() - 1];
        let idx = self.cdf.partition_point(|&c| c < target);
        if idx == 0 {
            return nodes[0];
        }
        let (c0, c1) = (self.cdf[idx - 1], self.cdf[idx]);
        let x0 = nodes[idx - 1];
        let x1 = if idx < nodes.len() { nodes[idx] } else { right_end };
        if c1 > c0 {
            x0 + (x1 - x0) * (target - c0) / (c1 - c0)
        } else {
            x0
        }
    }
}

/// Trapezoid cumulative mass at every node (plus the wrap-around cell on the
/// periodic domain).
fn cumulative(grid: &QuadratureGrid, density: &[f64]) -> Vec<f64> {
    let n = grid.nodes.len();
    let mut cdf = Vec::with_capacity(n + 1);
    cdf.push(0.0);
    for j in 1..n {
        let dx = grid.nodes[j] - grid.nodes[j - 1];
        let last = cdf[j - 1];
        cdf.push(last + 0.5 * dx * (density[j] + density[j - 1]));
    }
    if grid.domain == Domain::PeriodicUnit {
        let dx = 1.0 - grid.nodes[n - 1];
        let last = cdf[n - 1];
        cdf.push(last + 0.5 * dx * (density[n - 1] + density[0]));
    }
    cdf
}
