//! Solvers for bilevel optimization problems whose lower level has a
//! *non-singleton* solution set.
//!
//! The classical difficulty: for
//!
//! ```text
//!     min_{θ ∈ Θ}  F(θ) = max_{x ∈ S(θ)} f(θ, x),      S(θ) = argmin_x g(θ, x),
//! ```
//!
//! the hyper-objective `F` is discontinuous wherever `S(θ)` jumps, and `S(θ)`
//! itself is unavailable in closed form for nonconvex `g`. This crate
//! implements a smoothing route: replace the uniform distribution over `S(θ)`
//! by the Gibbs measure `μ_θ(x) ∝ exp(−g(θ,x)/λ)`, replace the max (or min)
//! over `S(θ)` by a superquantile (CVaR) of `f(θ, X)` with `X ~ μ_θ` at tail
//! level `δ`, and optimize the resulting surrogate with a projected
//! zeroth-order outer loop. Both the pessimistic (`max`) and optimistic
//! (`min`) conventions are supported through upper/lower tails.
//!
//! Module map:
//!
//! * [`domain`] — compact convex upper-level domains (boxes and balls),
//!   Euclidean projection, interiorization, and the projected gradient
//!   mapping used as the stationarity measure.
//! * [`problem`] — the [`BilevelProblem`] container: callbacks for `f`, `g`,
//!   `∂ₓg`, optional analytic derivatives for the penalty baselines, and
//!   optional closed forms used by diagnostics.
//! * [`sampler`] — unadjusted Langevin (Euler–Maruyama) sampling of the
//!   lower-level Gibbs measure with deterministic per-chain RNG streams.
//! * [`superquantile`] — the scalar convex dual objective
//!   `φ(β) = β + (δ M)⁻¹ Σ max(fᵢ − β, 0)`, its projected-subgradient
//!   minimizer, bound calibration, and the plug-in surrogate estimate `ψ̃`.
//! * [`outer`] — the projected zeroth-order outer loop with two-point
//!   gradient estimation on the sphere and best-iterate selection.
//! * [`penalty`] — first-order penalty baselines (value-function and
//!   gradient-norm penalties) run as simultaneous projected descent.
//! * [`instances`] — concrete problems: a sphere-manifold toy family with
//!   closed-form hyper-objectives, a scalar-radius variant, a strongly convex
//!   sanity instance, and a synthetic data-cleaning instance backed by
//!   generated CSV datasets.
//! * [`diagnostics`] — empirical quantiles, 1-D Wasserstein-1 distance, and
//!   the surrogate-vs-closed-form approximation sweep.
//!
//! Everything is deterministic given a master seed: parallelism only changes
//! scheduling, never the stream of random numbers consumed by any chain.

pub mod diagnostics;
pub mod domain;
mod error;
pub mod instances;
pub mod outer;
pub mod penalty;
pub mod problem;
pub mod sampler;
pub mod seedstream;
pub mod superquantile;
pub(crate) mod vecops;

pub use diagnostics::{
    approximation_sweep, empirical_quantile, wasserstein1_1d, LambdaRule, SweepConfig, SweepRow,
    SweepTable,
};
pub use domain::{gradient_mapping, InteriorizedDomain, UpperDomain};
pub use error::{Result, SqgError};
pub use instances::{
    classification_accuracy, make_example26, make_hyperclean, make_quadratic, make_toy,
    ridge_logistic_fit, toy_manifold_points, DatasetFiles, HypercleanDataset, HypercleanInstance,
    HypercleanSpec, SplitData, ToySpec,
};
pub use outer::{
    pszo_minsel, sample_unit_sphere, stationarity_report, two_point_estimator, BestIterate,
    BoundaryMode, OuterAbort, OuterConfig, OuterRecord, OuterTrajectory,
};
pub use penalty::{
    pbgd_run, penalty_joint_gradient, penalty_objective, LowerValueOracle, PenaltyConfig,
    PenaltyVariant,
};
pub use problem::{BilevelProblem, BilevelProblemBuilder, Sense};
pub use sampler::{lmc_step, sample_gibbs, GibbsSampleBatch, LangevinConfig, LmcInit};
pub use superquantile::{
    calibrate_beta_bound, exact_discrete_cvar, phi_subgradient, phi_value, psgd_beta, sq_estimate,
    SqConfig, SqEstimate, StepRule, Tail,
};
