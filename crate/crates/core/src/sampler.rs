//! Constrained generalized hybrid Monte Carlo with a reversibility check.
//!
//! Each iteration:
//!
//! 1. partial momentum refresh `ỹ = Π(η y + √((1−η²)/β) G)`, `η = e^{−γΔt}`;
//! 2. a forward RATTLE step from `(x, ỹ)` to `(x̂, ŷ)`;
//! 3. a backward RATTLE step from `(x̂, −ŷ)`, which must land back on `x`;
//! 4. a Metropolis test on `H + U + |y|²/2`, where `U` is the co-area
//!    correction. The dynamics itself only sees `H`.
//!
//! Every rejection leaves the position in place and reverses the
//! momentum, `(x, −ỹ)`.

use crate::constraints::{ConstraintError, ConstraintSet, Jacobian};
use crate::model::{Configuration, GasModel, ModelError};
use crate::observables::{barycenter, second_moment_about};
use crate::rattle::{
    check_reversibility, newton_project_flat, rattle_step_cached, NewtonError, NewtonParams, PhasePoint,
    Reversibility, StepEnd,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// The chain generator: ChaCha with 8 rounds, seeded through
/// `seed_from_u64` and split into independent streams with `set_stream`.
pub type ChainRng = ChaCha8Rng;

pub fn chain_rng(seed: u64, stream: u64) -> ChainRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("invalid sampler parameter: {0}")]
    Params(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error("could not project the initial configuration onto the constraint manifold: {0}")]
    InitialProjection(NewtonError),
    #[error("initial configuration has coincident particles")]
    InitialSingular,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerParams {
    pub dt: f64,
    pub gamma: f64,
    pub n_iter: usize,
    pub newton: NewtonParams,
    pub epsilon_rev: f64,
    pub seed: u64,
    /// Index of the generator stream; independent chains use distinct
    /// streams of the same seed.
    pub stream: u64,
    /// Also require the backward momentum to match.
    pub strict_reversibility: bool,
}

impl SamplerParams {
    pub fn new(dt: f64, gamma: f64, n_iter: usize, seed: u64) -> Self {
        Self {
            dt,
            gamma,
            n_iter,
            newton: NewtonParams::default(),
            epsilon_rev: 1e-12,
            seed,
            stream: 0,
            strict_reversibility: false,
        }
    }

    /// Number of steps covering a time horizon, `⌈T/Δt⌉`.
    pub fn steps_for_horizon(horizon: f64, dt: f64) -> usize {
        (horizon / dt).ceil() as usize
    }

    pub fn eta(&self) -> f64 {
        (-self.gamma * self.dt).exp()
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(SamplerError::Params(format!("{name} must be positive and finite, got {v}")))
            }
        };
        pos("dt", self.dt)?;
        pos("gamma", self.gamma)?;
        pos("newton tolerance", self.newton.tol)?;
        pos("reversibility tolerance", self.epsilon_rev)?;
        if self.n_iter == 0 {
            return Err(SamplerError::Params("n_iter must be at least 1".into()));
        }
        if self.newton.max_iter == 0 {
            return Err(SamplerError::Params("newton max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Why a step ended the way it did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Accepted,
    NewtonForwardFail,
    NewtonBackwardFail,
    ReversibilityFail,
    MetropolisReject,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RejectionStats {
    pub accepted: u64,
    pub newton_forward_fail: u64,
    pub newton_backward_fail: u64,
    pub reversibility_fail: u64,
    pub metropolis_reject: u64,
}

impl RejectionStats {
    pub fn record(&mut self, outcome: StepOutcome) {
        match outcome {
            StepOutcome::Accepted => self.accepted += 1,
            StepOutcome::NewtonForwardFail => self.newton_forward_fail += 1,
            StepOutcome::NewtonBackwardFail => self.newton_backward_fail += 1,
            StepOutcome::ReversibilityFail => self.reversibility_fail += 1,
            StepOutcome::MetropolisReject => self.metropolis_reject += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.accepted
            + self.newton_forward_fail
            + self.newton_backward_fail
            + self.reversibility_fail
            + self.metropolis_reject
    }

    pub fn acceptance_fraction(&self) -> f64 {
        self.accepted as f64 / self.total().max(1) as f64
    }

    pub fn metropolis_reject_fraction(&self) -> f64 {
        self.metropolis_reject as f64 / self.total().max(1) as f64
    }

    pub fn merge(&mut self, other: &RejectionStats) {
        self.accepted += other.accepted;
        self.newton_forward_fail += other.newton_forward_fail;
        self.newton_backward_fail += other.newton_backward_fail;
        self.reversibility_fail += other.reversibility_fail;
        self.metropolis_reject += other.metropolis_reject;
    }
}

/// `ỹ = Π(η y + √((1−η²)/β) G)`
pub fn ou_refresh<R: Rng + ?Sized>(
    y: &[f64],
    x: &Configuration,
    model: &GasModel,
    cs: &ConstraintSet,
    params: &SamplerParams,
    rng: &mut R,
) -> Result<Vec<f64>, ConstraintError> {
    let jac = cs.jacobian(x)?;
    refresh_with(y, &jac, model.beta(), params.eta(), rng)
}

fn refresh_with<R: Rng + ?Sized>(
    y: &[f64],
    jac: &Jacobian,
    beta: f64,
    eta: f64,
    rng: &mut R,
) -> Result<Vec<f64>, ConstraintError> {
    let noise = ((1.0 - eta * eta) / beta).sqrt();
    let mut out: Vec<f64> = y
        .iter()
        .map(|&p| {
            let g: f64 = rng.sample(StandardNormal);
            eta * p + noise * g
        })
        .collect();
    jac.project_in_place(&mut out)?;
    Ok(out)
}

/// `H + U` with `U = −log|det G| / (2β)`; `+∞` at coincident particles.
fn corrected_energy(h: f64, jac: &Jacobian, beta: f64) -> Result<f64, ConstraintError> {
    if jac.m() == 0 || !h.is_finite() {
        return Ok(h);
    }
    Ok(h - 0.5 * jac.gram().log_det()? / beta)
}

fn acceptance_probability(beta: f64, old_energy: f64, new_energy: f64) -> f64 {
    if !new_energy.is_finite() {
        return 0.0;
    }
    let p = (-beta * (new_energy - old_energy)).exp().min(1.0);
    if p.is_nan() {
        0.0
    } else {
        p
    }
}

/// `1 ∧ exp(−β ΔE)` with `E = H + U + |y|²/2`.
pub fn metropolis_ratio(
    p_old: &PhasePoint,
    p_new: &PhasePoint,
    model: &GasModel,
    cs: &ConstraintSet,
) -> Result<f64, ConstraintError> {
    let energy = |p: &PhasePoint| -> Result<f64, ConstraintError> {
        let h = model.hamiltonian(&p.x);
        let jac = cs.jacobian(&p.x)?;
        Ok(corrected_energy(h, &jac, model.beta())? + p.kinetic_energy())
    };
    Ok(acceptance_probability(model.beta(), energy(p_old)?, energy(p_new)?))
}

/// Like [`metropolis_ratio`] but without the co-area correction.
pub fn metropolis_ratio_uncorrected(p_old: &PhasePoint, p_new: &PhasePoint, model: &GasModel) -> f64 {
    let e = |p: &PhasePoint| model.hamiltonian(&p.x) + p.kinetic_energy();
    acceptance_probability(model.beta(), e(p_old), e(p_new))
}

/// Current chain state with the cached force, Jacobian and energies.
struct State {
    x: Vec<f64>,
    y: Vec<f64>,
    grad: Vec<f64>,
    jac: Jacobian,
    hamiltonian: f64,
    corrected: f64,
}

impl State {
    fn new(x: Vec<f64>, y: Vec<f64>, model: &GasModel, cs: &ConstraintSet) -> Result<Self, SamplerError> {
        let hamiltonian = model.hamiltonian_flat(&x);
        if !hamiltonian.is_finite() {
            return Err(SamplerError::InitialSingular);
        }
        let mut grad = vec![0.0; x.len()];
        model.hamiltonian_grad_into(&x, &mut grad)?;
        let jac = cs.jacobian_flat(&x)?;
        let corrected = corrected_energy(hamiltonian, &jac, model.beta())?;
        Ok(Self { x, y, grad, jac, hamiltonian, corrected })
    }

    fn reject(&mut self, refreshed: Vec<f64>) {
        self.y = refreshed;
        self.y.iter_mut().for_each(|v| *v = -*v);
    }
}

type Perturb<'a> = Option<&'a dyn Fn(&mut StepEnd)>;

fn step_state<R: Rng + ?Sized>(
    s: &mut State,
    model: &GasModel,
    cs: &ConstraintSet,
    params: &SamplerParams,
    rng: &mut R,
    perturb: Perturb<'_>,
) -> StepOutcome {
    let beta = model.beta();
    let refreshed = match refresh_with(&s.y, &s.jac, beta, params.eta(), rng) {
        Ok(y) => y,
        Err(_) => {
            let y = std::mem::take(&mut s.y);
            s.reject(y);
            return StepOutcome::NewtonForwardFail;
        }
    };

    let mut fwd =
        match rattle_step_cached(&s.x, &refreshed, &s.grad, &s.jac, params.dt, model, cs, &params.newton) {
            Ok(end) => end,
            Err(_) => {
                s.reject(refreshed);
                return StepOutcome::NewtonForwardFail;
            }
        };
    if let Some(f) = perturb {
        f(&mut fwd);
    }

    let back_y: Vec<f64> = fwd.y.iter().map(|v| -v).collect();
    let rev = match rattle_step_cached(&fwd.x, &back_y, &fwd.grad, &fwd.jac, params.dt, model, cs, &params.newton) {
        Ok(end) => end,
        Err(_) => {
            s.reject(refreshed);
            return StepOutcome::NewtonBackwardFail;
        }
    };
    if check_reversibility(&rev.x, &rev.y, &s.x, &refreshed, params.epsilon_rev, params.strict_reversibility)
        != Reversibility::Reversible
    {
        s.reject(refreshed);
        return StepOutcome::ReversibilityFail;
    }

    let h_new = model.hamiltonian_flat(&fwd.x);
    let corrected_new = corrected_energy(h_new, &fwd.jac, beta).unwrap_or(f64::INFINITY);
    let kinetic = |y: &[f64]| 0.5 * y.iter().map(|v| v * v).sum::<f64>();
    let p = acceptance_probability(beta, s.corrected + kinetic(&refreshed), corrected_new + kinetic(&fwd.y));
    let u: f64 = rng.random();
    if u < p {
        *s = State { x: fwd.x, y: fwd.y, grad: fwd.grad, jac: fwd.jac, hamiltonian: h_new, corrected: corrected_new };
        StepOutcome::Accepted
    } else {
        s.reject(refreshed);
        StepOutcome::MetropolisReject
    }
}

/// One full iteration from `p`. Failures never escape: they become tagged
/// rejections returning `(x, −ỹ)`.
pub fn ghmc_step<R: Rng + ?Sized>(
    p: &PhasePoint,
    model: &GasModel,
    cs: &ConstraintSet,
    params: &SamplerParams,
    rng: &mut R,
) -> (PhasePoint, StepOutcome) {
    ghmc_step_inner(p, model, cs, params, rng, None)
}

fn ghmc_step_inner<R: Rng + ?Sized>(
    p: &PhasePoint,
    model: &GasModel,
    cs: &ConstraintSet,
    params: &SamplerParams,
    rng: &mut R,
    perturb: Perturb<'_>,
) -> (PhasePoint, StepOutcome) {
    let mut state = match State::new(p.x.as_slice().to_vec(), p.y.clone(), model, cs) {
        Ok(s) => s,
        Err(_) => return (p.flipped(), StepOutcome::NewtonForwardFail),
    };
    let outcome = step_state(&mut state, model, cs, params, rng, perturb);
    let x = Configuration::new(p.x.dim(), state.x).expect("finite positions");
    (PhasePoint { x, y: state.y }, outcome)
}

/// When to take snapshots and which summary scalars to record.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverSchedule {
    /// Steps `≤ burn_in` are never recorded.
    pub burn_in: usize,
    /// Record after every step `s > burn_in` with `s % stride == 0`.
    pub stride: usize,
    /// Direction `v` for the `barycenter·v` scalar.
    pub direction: Vec<f64>,
    /// Center for the second-moment scalar.
    pub center: Vec<f64>,
    /// Keep full configurations (not just scalars) at snapshot times.
    pub keep_configurations: bool,
}

impl ObserverSchedule {
    /// 10% burn-in, stride 100, `v = e₁`, center at the origin.
    pub fn default_for(n_iter: usize, dim: usize) -> Self {
        let mut direction = vec![0.0; dim];
        direction[0] = 1.0;
        Self { burn_in: n_iter / 10, stride: 100, direction, center: vec![0.0; dim], keep_configurations: true }
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride.max(1);
        self
    }

    pub fn with_direction(mut self, v: Vec<f64>) -> Self {
        self.direction = v;
        self
    }

    pub fn with_center(mut self, c: Vec<f64>) -> Self {
        self.center = c;
        self
    }

    pub fn scalars_only(mut self) -> Self {
        self.keep_configurations = false;
        self
    }

    fn records(&self, step: usize) -> bool {
        step > self.burn_in && step.is_multiple_of(self.stride)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub config: Configuration,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarRow {
    pub step: usize,
    pub barycenter_dot_v: f64,
    pub second_moment: f64,
    pub constraint_residual_max: f64,
    pub hamiltonian: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainRecord {
    pub snapshots: Vec<Snapshot>,
    pub scalars: Vec<ScalarRow>,
    pub stats: RejectionStats,
    /// Largest `|ξ|` seen at any state of the chain, including rejected
    /// steps.
    pub max_constraint_residual: f64,
    /// Largest `|∇ξᵀ y|` seen at any state.
    pub max_tangency_residual: f64,
    pub final_state: PhasePoint,
}

/// Uniform on `[−1, 1]^d` for `d ≥ 2`; equally spaced on `[−1, 1]` in
/// `d = 1`.
pub fn initial_configuration<R: Rng + ?Sized>(model: &GasModel, rng: &mut R) -> Configuration {
    let (d, n) = (model.dim(), model.n());
    let coords = if d == 1 {
        (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect()
    } else {
        (0..d * n).map(|_| rng.random_range(-1.0..1.0)).collect()
    };
    Configuration::new(d, coords).expect("finite coordinates")
}

/// Moves `x0` onto the constraint manifold. Tries a fixed-direction Newton
/// solve first; if that fails (the start can be far from the manifold),
/// repeats Newton solves re-anchored at the latest iterate.
pub fn project_initial(
    x0: &Configuration,
    cs: &ConstraintSet,
    newton: &NewtonParams,
) -> Result<Configuration, SamplerError> {
    if cs.is_unconstrained() {
        return Ok(x0.clone());
    }
    let direct = cs
        .jacobian(x0)
        .map_err(NewtonError::from)
        .and_then(|j| newton_project_flat(x0.as_slice(), &j, cs, newton));
    let first_err = match direct {
        Ok((_, x)) => return Ok(Configuration::new(x0.dim(), x)?),
        Err(e) => e,
    };

    // Damped, re-anchored continuation.
    let mut x = x0.as_slice().to_vec();
    for _ in 0..500 {
        let jac = cs.jacobian_flat(&x).map_err(SamplerError::Constraint)?;
        if let Ok((_, projected)) = newton_project_flat(&x, &jac, cs, newton) {
            return Ok(Configuration::new(x0.dim(), projected)?);
        }
        let residual = cs.evaluate_flat(&x)?;
        let m = cs.m();
        let gram = jac.gram();
        let step = crate::linalg::lu_solve(gram.entries(), m, &residual, 0.0)
            .ok_or(SamplerError::InitialProjection(first_err.clone()))?;
        // Limit the move so that no particle jumps by more than 0.1.
        let mut delta = jac.mul(&step);
        let biggest = delta.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let scale = if biggest > 0.1 { 0.1 / biggest } else { 1.0 };
        delta.iter_mut().for_each(|v| *v *= scale);
        for (xi, di) in x.iter_mut().zip(&delta) {
            *xi -= di;
        }
    }
    Err(SamplerError::InitialProjection(first_err))
}

/// Runs `params.n_iter` iterations from `x0`.
pub fn run_chain(
    x0: &Configuration,
    model: &GasModel,
    cs: &ConstraintSet,
    params: &SamplerParams,
    schedule: &ObserverSchedule,
) -> Result<ChainRecord, SamplerError> {
    let mut rng = chain_rng(params.seed, params.stream);
    run_chain_with_rng(x0, model, cs, params, schedule, &mut rng)
}

/// Draws the initial configuration from the chain's own generator and
/// runs the chain.
pub fn run_chain_from_default_start(
    model: &GasModel,
    cs: &ConstraintSet,
    params: &SamplerParams,
    schedule: &ObserverSchedule,
) -> Result<ChainRecord, SamplerError> {
    let mut rng = chain_rng(params.seed, params.stream);
    let x0 = initial_configuration(model, &mut rng);
    run_chain_with_rng(&x0, model, cs, params, schedule, &mut rng)
}

fn run_chain_with_rng<R: Rng + ?Sized>(
    x0: &Configuration,
    model: &GasModel,
    cs: &ConstraintSet,
    params: &SamplerParams,
    schedule: &ObserverSchedule,
    rng: &mut R,
) -> Result<ChainRecord, SamplerError> {
    params.validate()?;
    model.check(x0)?;
    let x_start = project_initial(x0, cs, &params.newton)?;

    let jac0 = cs.jacobian(&x_start)?;
    let zero = vec![0.0; model.phase_dim()];
    let y0 = refresh_with(&zero, &jac0, model.beta(), 0.0, rng)?;
    let mut state = State::new(x_start.into_vec(), y0, model, cs)?;

    let mut stats = RejectionStats::default();
    let mut snapshots = Vec::new();
    let mut scalars = Vec::new();
    let mut max_res = max_abs(&cs.evaluate_flat(&state.x)?);
    let mut max_tan = max_abs(&state.jac.transpose_mul(&state.y));
    let d = model.dim();

    for step in 1..=params.n_iter {
        let outcome = step_state(&mut state, model, cs, params, rng, None);
        stats.record(outcome);

        let residual = if outcome == StepOutcome::Accepted {
            let r = max_abs(&cs.evaluate_flat(&state.x)?);
            max_res = max_res.max(r);
            r
        } else {
            f64::NAN
        };
        max_tan = max_tan.max(max_abs(&state.jac.transpose_mul(&state.y)));

        if schedule.records(step) {
            let config = Configuration::new(d, state.x.clone())?;
            let residual = if residual.is_nan() { max_abs(&cs.evaluate_flat(&state.x)?) } else { residual };
            let bary = barycenter(&config);
            scalars.push(ScalarRow {
                step,
                barycenter_dot_v: bary.iter().zip(&schedule.direction).map(|(a, b)| a * b).sum(),
                second_moment: second_moment_about(&config, &schedule.center),
                constraint_residual_max: residual,
                hamiltonian: state.hamiltonian,
            });
            if schedule.keep_configurations {
                snapshots.push(Snapshot { step, config });
            }
        }
    }

    let final_state = PhasePoint { x: Configuration::new(d, state.x)?, y: state.y };
    Ok(ChainRecord {
        snapshots,
        scalars,
        stats,
        max_constraint_residual: max_res,
        max_tangency_residual: max_tan,
        final_state,
    })
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::ConstraintSpec;
    use crate::model::{ConfinementSpec, InteractionSpec};
    use crate::rattle::newton_project;

    fn affine_gas(n: usize) -> (GasModel, ConstraintSet) {
        let model =
            GasModel::with_n_squared_beta(2, n, ConfinementSpec::Quadratic, InteractionSpec::Coulomb).unwrap();
        let cs = ConstraintSet::single(2, ConstraintSpec::affine(vec![1.0, 0.0], 1.0)).unwrap();
        (model, cs)
    }

    fn start(model: &GasModel, cs: &ConstraintSet, seed: u64) -> PhasePoint {
        let mut rng = chain_rng(seed, 0);
        let x = project_initial(&initial_configuration(model, &mut rng), cs, &NewtonParams::default()).unwrap();
        let y = ou_refresh(&vec![0.0; model.phase_dim()], &x, model, cs, &SamplerParams::new(1.0, 1e3, 1, 0), &mut rng)
            .unwrap();
        PhasePoint::new(x, y)
    }

    #[test]
    fn eta_limits() {
        let p = SamplerParams::new(0.5, 1.0, 10, 0);
        assert!((p.eta() - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(SamplerParams::steps_for_horizon(10.0, 0.3), 34);
        assert!(SamplerParams::new(0.0, 1.0, 10, 0).validate().is_err());
        assert!(SamplerParams::new(0.1, 1.0, 0, 0).validate().is_err());
    }

    #[test]
    fn refresh_without_friction_keeps_tangent_momentum() {
        let (model, cs) = affine_gas(5);
        let p = start(&model, &cs, 1);
        let mut params = SamplerParams::new(0.5, 1.0, 1, 0);
        params.gamma = 0.0;
        let mut rng = chain_rng(9, 0);
        let y = ou_refresh(&p.y, &p.x, &model, &cs, &params, &mut rng).unwrap();
        for (a, b) in y.iter().zip(&p.y) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn refresh_with_full_friction_forgets_momentum() {
        let (model, cs) = affine_gas(5);
        let p = start(&model, &cs, 1);
        let params = SamplerParams::new(1.0, 1e6, 1, 0);
        let huge: Vec<f64> = p.y.iter().map(|v| v * 1e9).collect();
        let a = ou_refresh(&huge, &p.x, &model, &cs, &params, &mut chain_rng(3, 0)).unwrap();
        let b = ou_refresh(&p.y, &p.x, &model, &cs, &params, &mut chain_rng(3, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn metropolis_identity_and_singularity() {
        let (model, cs) = affine_gas(4);
        let p = start(&model, &cs, 2);
        assert_eq!(metropolis_ratio(&p, &p, &model, &cs).unwrap(), 1.0);
        let mut coords = p.x.as_slice().to_vec();
        coords[2] = coords[0];
        coords[3] = coords[1];
        let bad = PhasePoint::new(Configuration::new(2, coords).unwrap(), p.y.clone());
        assert_eq!(metropolis_ratio(&p, &bad, &model, &cs).unwrap(), 0.0);
    }

    #[test]
    fn affine_correction_cancels_in_ratio() {
        let (model, cs) = affine_gas(6);
        let params = SamplerParams::new(0.3, 1.0, 1, 0);
        let p = start(&model, &cs, 4);
        let q = crate::rattle::rattle_step(&p, params.dt, &model, &cs, &params.newton).unwrap();
        let with = metropolis_ratio(&p, &q, &model, &cs).unwrap();
        let without = metropolis_ratio_uncorrected(&p, &q, &model);
        assert!((with - without).abs() < 1e-12, "{with} vs {without}");
    }

    #[test]
    fn forced_reversibility_failure_flips_momentum() {
        let (model, cs) = affine_gas(6);
        let mut params = SamplerParams::new(0.2, 1.0, 1, 0);
        params.strict_reversibility = true;
        let p = start(&model, &cs, 5);
        let bump = |end: &mut StepEnd| end.y.iter_mut().for_each(|v| *v *= 1.0 + 1e-6);

        let mut rng_a = chain_rng(11, 0);
        let (out, tag) = ghmc_step_inner(&p, &model, &cs, &params, &mut rng_a, Some(&bump));
        assert_eq!(tag, StepOutcome::ReversibilityFail);

        let mut rng_b = chain_rng(11, 0);
        let refreshed = ou_refresh(&p.y, &p.x, &model, &cs, &params, &mut rng_b).unwrap();
        assert_eq!(out.x, p.x);
        let flipped: Vec<f64> = refreshed.iter().map(|v| -v).collect();
        assert_eq!(out.y, flipped);
    }

    #[test]
    fn position_perturbation_fails_default_check() {
        let (model, cs) = affine_gas(6);
        let params = SamplerParams::new(0.2, 1.0, 1, 0);
        let p = start(&model, &cs, 6);
        let shift = |end: &mut StepEnd| {
            // Tangent shift of size 10·ε_rev keeps the point on the manifold.
            end.x[1] += 1e-11;
        };
        let (out, tag) = ghmc_step_inner(&p, &model, &cs, &params, &mut chain_rng(1, 0), Some(&shift));
        assert_eq!(tag, StepOutcome::ReversibilityFail);
        assert_eq!(out.x, p.x);
    }

    #[test]
    fn initial_projection_lands_on_manifold() {
        let (model, cs) = affine_gas(10);
        let mut rng = chain_rng(0, 0);
        let x0 = initial_configuration(&model, &mut rng);
        let x = project_initial(&x0, &cs, &NewtonParams::default()).unwrap();
        assert!(cs.evaluate(&x).unwrap()[0].abs() <= 1e-12);
        let out = newton_project(&x, &x, &cs, &NewtonParams::default()).unwrap();
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn one_dimensional_start_is_equally_spaced() {
        let model = GasModel::with_n_squared_beta(1, 5, ConfinementSpec::Quadratic, InteractionSpec::Log1D).unwrap();
        let x = initial_configuration(&model, &mut chain_rng(0, 0));
        assert_eq!(x.as_slice(), &[-1.0, -0.5, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn stats_accounting() {
        let (model, cs) = affine_gas(8);
        let params = SamplerParams::new(0.5, 1.0, 300, 17);
        let schedule = ObserverSchedule::default_for(params.n_iter, 2).with_stride(10);
        let rec = run_chain_from_default_start(&model, &cs, &params, &schedule).unwrap();
        assert_eq!(rec.stats.total(), 300);
        assert_eq!(rec.snapshots.len(), 27);
        assert_eq!(rec.scalars.len(), 27);
        assert!(rec.max_constraint_residual <= 1e-12);
        assert!(rec.max_tangency_residual <= 1e-10);
    }
}
