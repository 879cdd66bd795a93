//! Sampling Coulomb and log gases conditioned on rare events.
//!
//! The gas is `n` particles in `R^d` with Gibbs law `∝ exp(−β_n H_n)`. A
//! rare event is encoded as a constraint `ξ(x) = 0` on linear or quadratic
//! statistics of the empirical measure, and the conditioned law is sampled
//! by constrained hybrid Monte Carlo: RATTLE steps on the level set,
//! a backward reversibility check and a Metropolis test that includes the
//! co-area correction `−log|det ∇ξᵀ∇ξ| / (2β_n)`.
//!
//! ```
//! use coulomb_gas::prelude::*;
//!
//! let model = GasModel::with_n_squared_beta(2, 10, ConfinementSpec::Quadratic, InteractionSpec::Coulomb)?;
//! let cs = ConstraintSet::single(2, ConstraintSpec::affine(vec![1.0, 0.0], 1.0))?;
//! let params = SamplerParams::new(0.5, 1.0, 200, 7);
//! let schedule = ObserverSchedule::default_for(params.n_iter, 2).with_stride(20);
//! let record = run_chain_from_default_start(&model, &cs, &params, &schedule)?;
//! assert_eq!(record.stats.total(), 200);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod constraints;
pub mod equilibrium;
mod linalg;
pub mod model;
pub mod observables;
pub mod rattle;
pub mod sampler;

pub mod prelude {
    pub use crate::constraints::{ConstraintSet, ConstraintSpec, LinearPhi, PairPhi};
    pub use crate::model::{ConfinementSpec, Configuration, GasModel, InteractionSpec};
    pub use crate::rattle::{NewtonParams, PhasePoint};
    pub use crate::sampler::{
        run_chain, run_chain_from_default_start, ChainRecord, ObserverSchedule, RejectionStats, SamplerParams,
        StepOutcome,
    };
}
