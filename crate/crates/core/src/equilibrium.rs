//! Closed-form equilibrium predictions used to check sampler output.

use crate::constraints::LinearPhi;
use crate::model::{norm_sq, ConfinementSpec};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquilibriumError {
    #[error("the Coulomb constant needs d >= 2, got d = {0}")]
    Dimension(usize),
    #[error("point has dimension {got}, expected {expected}")]
    PointDimension { got: usize, expected: usize },
}

/// Surface area of the unit sphere in `R^d`, `2π^{d/2} / Γ(d/2)`.
pub fn c_d(d: usize) -> Result<f64, EquilibriumError> {
    if d < 2 {
        return Err(EquilibriumError::Dimension(d));
    }
    Ok(2.0 * PI.powf(0.5 * d as f64) / half_integer_gamma(d))
}

/// `Γ(k/2)` for a positive integer `k`, by the recursion from `Γ(1)` or
/// `Γ(1/2)`.
fn half_integer_gamma(k: usize) -> f64 {
    let (mut value, mut arg) = if k.is_multiple_of(2) { (1.0, 1.0) } else { (PI.sqrt(), 0.5) };
    let target = 0.5 * k as f64;
    while arg < target {
        value *= arg;
        arg += 1.0;
    }
    value
}

/// Density of the equilibrium measure conditioned on a linear statistic,
/// `(ΔV + α Δφ) / (2c_d)`, clamped to zero where the numerator is
/// negative. The true support may be smaller; it is not determined here.
pub fn conditioned_density_linear(
    x: &[f64],
    confinement: ConfinementSpec,
    phi: &LinearPhi,
    alpha: f64,
) -> Result<f64, EquilibriumError> {
    let d = x.len();
    let cd = c_d(d)?;
    let r = norm_sq(x).sqrt();
    let lap = confinement.laplacian(r, d) + alpha * phi.laplacian(x);
    Ok(if lap > 0.0 { lap / (2.0 * cd) } else { 0.0 })
}

/// Unconditioned density `ΔV / (2c_d)` on the support.
pub fn equilibrium_density(x: &[f64], confinement: ConfinementSpec) -> Result<f64, EquilibriumError> {
    let d = x.len();
    Ok(confinement.laplacian(norm_sq(x).sqrt(), d) / (2.0 * c_d(d)?))
}

/// Lagrange multiplier and shift for quadratic confinement under the
/// affine constraint `mean(x·v) = c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineShift {
    pub alpha: f64,
    /// The equilibrium ball is centered at `shift · v`.
    pub shift: f64,
}

impl AffineShift {
    /// A negative multiplier is meaningful for the equality constraint
    /// (it sets the shift direction) but not for the inequality form
    /// `μ(φ) ≤ 0`, which requires `α ≥ 0`.
    pub fn admissible_for_inequality(&self) -> bool {
        self.alpha >= 0.0
    }

    pub fn center(&self, v: &[f64]) -> Vec<f64> {
        v.iter().map(|vi| self.shift * vi).collect()
    }
}

/// `α = 2c`, center `cv`.
pub fn multiplier_quadratic_affine(c: f64) -> AffineShift {
    AffineShift { alpha: 2.0 * c, shift: c }
}

/// Uniform density `1/|B|` on a ball.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedDensity {
    pub center: Vec<f64>,
    pub radius: f64,
    level: f64,
}

impl PredictedDensity {
    pub fn density(&self, x: &[f64]) -> Result<f64, EquilibriumError> {
        if x.len() != self.center.len() {
            return Err(EquilibriumError::PointDimension { got: x.len(), expected: self.center.len() });
        }
        let r2: f64 = x.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(if r2 <= self.radius * self.radius { self.level } else { 0.0 })
    }

    /// `E|X − center|²` under the density, `r² d / (d + 2)` for a uniform
    /// ball.
    pub fn second_moment(&self) -> f64 {
        let d = self.center.len() as f64;
        self.radius * self.radius * d / (d + 2.0)
    }

    /// CDF of `|X − center|`.
    pub fn radial_cdf(&self, r: f64) -> f64 {
        let d = self.center.len() as i32;
        (r / self.radius).clamp(0.0, 1.0).powi(d)
    }
}

/// Conditioned equilibrium for `d = 2`, `V = |x|²`, `mean(x·v) = c`: the
/// unit disk centered at `cv` with density `1/π`.
pub fn disk_reference(c: f64, v: &[f64]) -> PredictedDensity {
    let center = multiplier_quadratic_affine(c).center(v);
    PredictedDensity { center, radius: 1.0, level: 1.0 / PI }
}

/// Semicircle law of radius `R` on the line, the equilibrium measure of
/// the log-gas with `V = x²` when `R = √2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Semicircle {
    pub center: f64,
    pub radius: f64,
}

impl Semicircle {
    pub fn for_quadratic_log_gas() -> Self {
        Self { center: 0.0, radius: std::f64::consts::SQRT_2 }
    }

    pub fn density(&self, x: f64) -> f64 {
        let u = x - self.center;
        let r2 = self.radius * self.radius;
        if u * u >= r2 {
            0.0
        } else {
            2.0 / (PI * r2) * (r2 - u * u).sqrt()
        }
    }

    pub fn second_moment(&self) -> f64 {
        0.25 * self.radius * self.radius
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let t = ((x - self.center) / self.radius).clamp(-1.0, 1.0);
        0.5 + (t * (1.0 - t * t).sqrt() + t.asin()) / PI
    }
}
