//! Value functions on discrete probability measures.
//!
//! The crate computes the classical value function
//! `u(x, t) = inf { g(γ(0)) + ∫_0^t |γ̇|^p/p - V(γ) ds : γ(t) = x }`
//! and its Wasserstein counterpart `U(μ, t)` over paths of measures, the
//! minimizing trajectories, the Euler-Poisson dynamics they satisfy, and
//! numerical checks of the associated Hamilton-Jacobi equations.
//!
//! Everything is generic over the scalar type through [`Real`]. The aliases
//! at the crate root fix it to `f64` (or `f32` with the `32` suffix).
//!
//! ```
//! use wasserstein_hj::{minimize_generalized, reduce_linear, Measure, ScalarField, Spec};
//!
//! let spec = Spec::new(2.0, ScalarField::Zero, ScalarField::Quadratic { c: 0.5 }).unwrap();
//! let mu = Measure::uniform(vec![vec![-1.0], vec![0.5]]).unwrap();
//! let joint = minimize_generalized(&mu, 0.6, &spec, 200).unwrap();
//! let exact = reduce_linear(&mu, 0.6, &spec, 200).unwrap();
//! assert!((joint.value - exact).abs() < 1e-3);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod field;
pub mod functional;
pub mod lagrangian;
pub mod measure;
pub mod optim;
pub mod path;
pub mod problem;
pub mod scalar;
pub mod transport;
pub mod vecops;

mod action;
pub mod classical;
pub mod ensemble;
pub mod eulerpoisson;
pub mod viscosity;

pub use classical::{
    classical_action, closed_form_u, flow_map, hopf_lax, minimize_classical, minimize_classical_with, solve_a_ode, t_p,
    AOdeSolution, ClosedForm, ValueReport,
};
pub use ensemble::{
    dp_check, dp_check_with, ensemble_action, evaluate_functional, horizon, metric_derivative_estimate,
    minimize_generalized, minimize_generalized_with, modified_hopf_lax, poincare_check, reduce_linear,
    wasserstein_hopf_lax, wasserstein_hopf_lax_with, DpReport, EnsembleReport, HopfLaxResult, Strategy,
};
pub use error::{Error, Result};
pub use eulerpoisson::{
    boundary_momentum_check, euler_lagrange_shoot, euler_poisson_residual, optimality_condition_check,
    solve_characteristic_bvp, Characteristic, EulerPoissonReport, TestFunction,
};
pub use field::ScalarField;
pub use functional::{Functional, FunctionalKind};
pub use lagrangian::Lagrangian;
pub use measure::DiscreteMeasure;
pub use optim::NewtonOptions;
pub use path::{EnsemblePath, ParticlePath};
pub use problem::{PotentialKind, ProblemSpec};
pub use scalar::Real;
pub use transport::{
    brute_force_wasserstein, displacement_interpolate, is_optimal_plan, wasserstein, wasserstein_cost,
    wasserstein_distance, TransportPlan,
};
pub use viscosity::{
    direction_family, hje_residual_wasserstein, legendre, make_tangent_direction, modified_hje_residual,
    subsolution_probe, supersolution_probe, Legendre, TangentDirection, TestCotangent,
};

pub type Measure = DiscreteMeasure<f64>;
pub type Plan = TransportPlan<f64>;
pub type Field = ScalarField<f64>;
pub type Spec = ProblemSpec<f64>;
pub type Path = ParticlePath<f64>;
pub type Ensemble = EnsemblePath<f64>;

pub type Measure32 = DiscreteMeasure<f32>;
pub type Plan32 = TransportPlan<f32>;
pub type Field32 = ScalarField<f32>;
pub type Spec32 = ProblemSpec<f32>;
pub type Path32 = ParticlePath<f32>;
pub type Ensemble32 = EnsemblePath<f32>;
