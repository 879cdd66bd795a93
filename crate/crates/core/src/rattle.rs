//! RATTLE integration on the constraint manifold.
//!
//! One step from `(x_m, y_m)` with `ξ(x_m) = 0` and `∇ξ(x_m)ᵀ y_m = 0`:
//!
//! 1. `y¼ = y_m − (Δt/2) ∇H(x_m)`
//! 2. `x½ = x_m + Δt y¼`
//! 3. Newton solve for `θ` with `ξ(x½ + ∇ξ(x_m) θ) = 0`
//! 4. `x_{m+1} = x½ + ∇ξ(x_m) θ`, `y½ = y¼ + ∇ξ(x_m) θ / Δt`
//! 5. `y¾ = y½ − (Δt/2) ∇H(x_{m+1})`
//! 6. `y_{m+1} = Π(x_{m+1}) y¾`
//!
//! The projection direction is frozen at the pre-step position, which is
//! what makes the scheme reversible up to momentum reversal.

use crate::constraints::{ConstraintError, ConstraintSet, Jacobian};
use crate::linalg::lu_solve;
use crate::model::{Configuration, GasModel};
use thiserror::Error;

/// Relative threshold on pivots of the Newton matrix.
const NEWTON_SINGULAR_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonParams {
    /// Absolute tolerance on both the residual `|ξ|` and the multiplier
    /// increment.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonParams {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 20 }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NewtonError {
    /// No convergence within `max_iter` updates, a non-finite residual, or
    /// a singular Newton matrix (`singular` set) at iteration `iterations`.
    #[error("Newton projection did not converge (iteration {iterations}{})", if *singular { ", singular Newton matrix" } else { "" })]
    NonConvergence { iterations: usize, singular: bool },
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub theta: Vec<f64>,
    /// Number of multiplier updates contained in `theta`.
    pub iterations: usize,
}

/// Finds `θ` such that `ξ(x_trial + ∇ξ(anchor) θ) ≈ 0`, keeping the
/// direction `∇ξ(anchor)` fixed across iterations.
pub fn newton_project(
    x_trial: &Configuration,
    anchor: &Configuration,
    cs: &ConstraintSet,
    params: &NewtonParams,
) -> Result<NewtonOutcome, NewtonError> {
    let anchor_jac = cs.jacobian(anchor)?;
    newton_project_flat(x_trial.as_slice(), &anchor_jac, cs, params).map(|(out, _)| out)
}

/// Returns the outcome and the projected point `x_trial + J_a θ`.
pub(crate) fn newton_project_flat(
    x_trial: &[f64],
    anchor_jac: &Jacobian,
    cs: &ConstraintSet,
    params: &NewtonParams,
) -> Result<(NewtonOutcome, Vec<f64>), NewtonError> {
    let m = cs.m();
    let mut theta = vec![0.0; m];
    if m == 0 {
        return Ok((NewtonOutcome { theta, iterations: 0 }, x_trial.to_vec()));
    }
    let anchor_norm = anchor_jac.norm();
    let mut x = x_trial.to_vec();

    for k in 0..=params.max_iter {
        let residual = cs.evaluate_flat(&x)?;
        if residual.iter().any(|r| !r.is_finite()) {
            return Err(NewtonError::NonConvergence { iterations: k, singular: false });
        }
        let jac = cs.jacobian_flat(&x)?;
        // d/dθ ξ(x_trial + J_a θ) = J(x)ᵀ J_a
        let newton_matrix = jac.cross(anchor_jac);
        let tol = NEWTON_SINGULAR_TOL * jac.norm() * anchor_norm;
        let step = lu_solve(&newton_matrix, m, &residual, tol).ok_or(NewtonError::NonConvergence { iterations: k, singular: true })?;

        let size = step.iter().chain(&residual).fold(0.0f64, |a, v| a.max(v.abs()));
        if size <= params.tol {
            return Ok((NewtonOutcome { theta, iterations: k }, x));
        }
        if k == params.max_iter {
            break;
        }
        for (t, s) in theta.iter_mut().zip(&step) {
            *t -= s;
        }
        x.copy_from_slice(x_trial);
        anchor_jac.mul_add(&theta, 1.0, &mut x);
    }
    Err(NewtonError::NonConvergence { iterations: params.max_iter, singular: false })
}

/// A point of the constrained phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub x: Configuration,
    pub y: Vec<f64>,
}

impl PhasePoint {
    pub fn new(x: Configuration, y: Vec<f64>) -> Self {
        assert_eq!(x.as_slice().len(), y.len(), "momentum length must match positions");
        Self { x, y }
    }

    /// `max_k |ξ_k(x)|`
    pub fn constraint_residual(&self, cs: &ConstraintSet) -> Result<f64, ConstraintError> {
        Ok(cs.evaluate(&self.x)?.iter().fold(0.0f64, |a, v| a.max(v.abs())))
    }

    /// `max_k |∇ξ_k(x)ᵀ y|`
    pub fn tangency_residual(&self, cs: &ConstraintSet) -> Result<f64, ConstraintError> {
        let j = cs.jacobian(&self.x)?;
        Ok(j.transpose_mul(&self.y).iter().fold(0.0f64, |a, v| a.max(v.abs())))
    }

    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.y.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn flipped(&self) -> Self {
        Self { x: self.x.clone(), y: self.y.iter().map(|v| -v).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureReason {
    /// Newton position projection failed (non-convergence or singular
    /// matrix).
    Newton,
    /// The force was requested at a configuration with coincident
    /// particles.
    GradientSingularity,
    /// The Gram matrix at the new point could not be factored.
    DegenerateGram,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("RATTLE step failed: {reason:?}")]
pub struct StepFailure {
    pub reason: FailureReason,
}

impl From<FailureReason> for StepFailure {
    fn from(reason: FailureReason) -> Self {
        Self { reason }
    }
}

/// Everything computed at the endpoint of a step, so callers can reuse
/// the force and Jacobian.
#[derive(Debug, Clone)]
pub(crate) struct StepEnd {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub grad: Vec<f64>,
    pub jac: Jacobian,
    pub theta: Vec<f64>,
}

/// One RATTLE step given the force and Jacobian at the start point.
#[allow(clippy::too_many_arguments)]
pub(crate) fn rattle_step_cached(
    x: &[f64],
    y: &[f64],
    grad: &[f64],
    jac: &Jacobian,
    dt: f64,
    model: &GasModel,
    cs: &ConstraintSet,
    newton: &NewtonParams,
) -> Result<StepEnd, StepFailure> {
    let half = 0.5 * dt;
    let mut y_q: Vec<f64> = y.iter().zip(grad).map(|(p, g)| p - half * g).collect();
    let x_half: Vec<f64> = x.iter().zip(&y_q).map(|(q, p)| q + dt * p).collect();

    let (outcome, x_new) = newton_project_flat(&x_half, jac, cs, newton).map_err(|e| match e {
        NewtonError::Constraint(ConstraintError::DegenerateGram) => FailureReason::DegenerateGram,
        _ => FailureReason::Newton,
    })?;
    jac.mul_add(&outcome.theta, 1.0 / dt, &mut y_q);

    let mut grad_new = vec![0.0; x_new.len()];
    model
        .hamiltonian_grad_into(&x_new, &mut grad_new)
        .map_err(|_| FailureReason::GradientSingularity)?;
    for (p, g) in y_q.iter_mut().zip(&grad_new) {
        *p -= half * g;
    }

    let jac_new = cs.jacobian_flat(&x_new).map_err(|_| FailureReason::Newton)?;
    jac_new.project_in_place(&mut y_q).map_err(|_| FailureReason::DegenerateGram)?;

    Ok(StepEnd { x: x_new, y: y_q, grad: grad_new, jac: jac_new, theta: outcome.theta })
}

/// One RATTLE step from a valid phase point.
pub fn rattle_step(
    p: &PhasePoint,
    dt: f64,
    model: &GasModel,
    cs: &ConstraintSet,
    newton: &NewtonParams,
) -> Result<PhasePoint, StepFailure> {
    rattle_step_with_multiplier(p, dt, model, cs, newton).map(|(p, _)| p)
}

/// Like [`rattle_step`], also returning the Lagrange multiplier `θ`.
pub fn rattle_step_with_multiplier(
    p: &PhasePoint,
    dt: f64,
    model: &GasModel,
    cs: &ConstraintSet,
    newton: &NewtonParams,
) -> Result<(PhasePoint, Vec<f64>), StepFailure> {
    let grad = model.hamiltonian_grad(&p.x).map_err(|_| FailureReason::GradientSingularity)?;
    let jac = cs.jacobian(&p.x).map_err(|_| FailureReason::Newton)?;
    let end = rattle_step_cached(p.x.as_slice(), &p.y, &grad, &jac, dt, model, cs, newton)?;
    let x = Configuration::new(p.x.dim(), end.x).map_err(|_| FailureReason::Newton)?;
    Ok((PhasePoint { x, y: end.y }, end.theta))
}

/// Result of running RATTLE backwards from a forward proposal.
#[derive(Debug, Clone, PartialEq)]
pub enum Reversibility {
    Reversible,
    /// The backward step itself failed.
    BackwardFailure(FailureReason),
    /// The backward step did not land on the starting point.
    Mismatch { position_error: f64, momentum_error: f64 },
}

/// Compares `|x_rev − x_in|` (and, in strict mode, `|y_rev + y_in|`)
/// against `tol`.
pub(crate) fn check_reversibility(
    x_rev: &[f64],
    y_rev: &[f64],
    x_in: &[f64],
    y_in: &[f64],
    tol: f64,
    strict: bool,
) -> Reversibility {
    let position_error = euclid(x_rev.iter().zip(x_in).map(|(a, b)| a - b));
    let momentum_error = euclid(y_rev.iter().zip(y_in).map(|(a, b)| a + b));
    // NaN compares false, so it falls through to a mismatch.
    let ok = position_error <= tol && (!strict || momentum_error <= tol);
    if ok {
        Reversibility::Reversible
    } else {
        Reversibility::Mismatch { position_error, momentum_error }
    }
}

/// Runs RATTLE from `(x_out, −y_out)` and checks that it returns to
/// `x_in`.
#[allow(clippy::too_many_arguments)]
pub fn rattle_reversibility(
    p_fwd_out: &PhasePoint,
    p_fwd_in: &PhasePoint,
    dt: f64,
    model: &GasModel,
    cs: &ConstraintSet,
    newton: &NewtonParams,
    epsilon_rev: f64,
    strict: bool,
) -> Reversibility {
    let flipped = p_fwd_out.flipped();
    match rattle_step(&flipped, dt, model, cs, newton) {
        Err(f) => Reversibility::BackwardFailure(f.reason),
        Ok(rev) => check_reversibility(
            rev.x.as_slice(),
            &rev.y,
            p_fwd_in.x.as_slice(),
            &p_fwd_in.y,
            epsilon_rev,
            strict,
        ),
    }
}

/// Position-only backward check.
pub fn rattle_backward_check(
    p_fwd_out: &PhasePoint,
    p_fwd_in: &PhasePoint,
    dt: f64,
    model: &GasModel,
    cs: &ConstraintSet,
    newton: &NewtonParams,
    epsilon_rev: f64,
) -> bool {
    rattle_reversibility(p_fwd_out, p_fwd_in, dt, model, cs, newton, epsilon_rev, false)
        == Reversibility::Reversible
}

fn euclid(it: impl Iterator<Item = f64>) -> f64 {
    it.map(|v| v * v).sum::<f64>().sqrt()
}
