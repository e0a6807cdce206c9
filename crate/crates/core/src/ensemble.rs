//! The generalized value function `U(μ, t)` on discrete measures.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::{ensemble_action_value, ActionObjective};
use crate::classical::{classical_inner, hopf_lax_with, minimize_each, select_first_best, ClosedForm};
use crate::error::{Error, Result};
use crate::functional::Functional;
use crate::lagrangian::Lagrangian;
use crate::measure::DiscreteMeasure;
use crate::optim::{newton_minimize, DenseObjective, NewtonOptions};
use crate::path::{EnsemblePath, ParticlePath};
use crate::problem::ProblemSpec;
use crate::scalar::Real;
use crate::transport;
use crate::vecops;

pub use crate::functional::evaluate_functional;

/// Largest `T` with `p (2 C_p T)^p α < 1` for `C_p = p^{-1/p}`, that is
/// `1 / (2 α^{1/p})`; `+∞` for `α ≤ 0`.
pub fn horizon<T: Real>(alpha: T, p: T) -> T {
    if alpha <= T::zero() {
        T::infinity()
    } else {
        T::one() / (T::lit(2.0) * alpha.powf(p.recip()))
    }
}

/// `p^{-1/p}`.
pub fn poincare_constant<T: Real>(p: T) -> T {
    p.powf(-p.recip())
}

/// How [`minimize_generalized_with`] solves the problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    /// Decoupled for integral problems, joint otherwise.
    #[default]
    Auto,
    /// One Newton solve over all particles at once.
    Joint,
    /// Independent per-particle solves; integral problems only.
    Decoupled,
}

/// Result of a generalized value-function minimization.
///
/// JSON form: `{"value", "path": [[[...]]], "weights", "t", "grad_norm",
/// "iterations"}`, with one position list per particle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "EnsembleReportRepr<T>",
    into = "EnsembleReportRepr<T>",
    bound = "T: Real"
)]
pub struct EnsembleReport<T: Real> {
    pub value: T,
    pub path: EnsemblePath<T>,
    pub grad_norm: T,
    pub iterations: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct EnsembleReportRepr<T: Real> {
    value: T,
    path: Vec<Vec<Vec<T>>>,
    weights: Vec<T>,
    t: T,
    grad_norm: T,
    iterations: usize,
}

impl<T: Real> TryFrom<EnsembleReportRepr<T>> for EnsembleReport<T> {
    type Error = Error;

    fn try_from(r: EnsembleReportRepr<T>) -> Result<Self> {
        let paths = r
            .path
            .into_iter()
            .map(|pos| ParticlePath::new(T::zero(), r.t, pos))
            .collect::<Result<Vec<_>>>()?;
        Ok(EnsembleReport {
            value: r.value,
            path: EnsemblePath::new(r.weights, paths)?,
            grad_norm: r.grad_norm,
            iterations: r.iterations,
        })
    }
}

impl<T: Real> From<EnsembleReport<T>> for EnsembleReportRepr<T> {
    fn from(r: EnsembleReport<T>) -> Self {
        EnsembleReportRepr {
            value: r.value,
            t: r.path.t_end(),
            weights: r.path.weights().to_vec(),
            path: r.path.paths().iter().map(ParticlePath::positions).collect(),
            grad_norm: r.grad_norm,
            iterations: r.iterations,
        }
    }
}

/// `𝒢(σ(0)) + Σ_i Δs ((1/p) Σ_k w_k |v_k|^p - 𝒱(σ(m_i)))`.
pub fn ensemble_action<T: Real>(sigma: &EnsemblePath<T>, spec: &ProblemSpec<T>) -> Result<T> {
    ensemble_action_value(sigma, spec.p(), spec.initial_functional(), spec.potential_functional())
}

/// `U(μ, t)` by minimizing the ensemble action with the terminal snapshot
/// pinned to `μ`.
pub fn minimize_generalized<T: Real>(
    mu: &DiscreteMeasure<T>,
    t: T,
    spec: &ProblemSpec<T>,
    steps: usize,
) -> Result<EnsembleReport<T>> {
    minimize_generalized_with(mu, t, spec, steps, Strategy::Auto, &NewtonOptions::default())
}

pub fn minimize_generalized_with<T: Real>(
    mu: &DiscreteMeasure<T>,
    t: T,
    spec: &ProblemSpec<T>,
    steps: usize,
    strategy: Strategy,
    opts: &NewtonOptions<T>,
) -> Result<EnsembleReport<T>> {
    if steps < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 time steps, got {steps}")));
    }
    generalized_inner(mu, t, spec, steps, strategy, opts)
}

fn generalized_inner<T: Real>(
    mu: &DiscreteMeasure<T>,
    t: T,
    spec: &ProblemSpec<T>,
    steps: usize,
    strategy: Strategy,
    opts: &NewtonOptions<T>,
) -> Result<EnsembleReport<T>> {
    spec.check_horizon(t)?;
    if t == T::zero() {
        return Ok(EnsembleReport {
            value: spec.initial_functional().value(mu)?,
            path: EnsemblePath::stationary(mu, T::zero(), steps),
            grad_norm: T::zero(),
            iterations: 0,
        });
    }
    let decoupled = match strategy {
        Strategy::Auto => spec.is_integral(),
        Strategy::Joint => false,
        Strategy::Decoupled => {
            if !spec.is_integral() {
                return Err(Error::InvalidInput("decoupled solve needs integral functionals".into()));
            }
            true
        }
    };
    if decoupled {
        let points: Vec<Vec<T>> = mu.points().map(<[T]>::to_vec).collect();
        let reports = minimize_each(&points, t, spec, steps, opts)?;
        let value = reports.iter().zip(mu.weights()).map(|(r, &w)| w * r.value).sum();
        let grad_norm = reports.iter().fold(T::zero(), |m, r| m.max(r.grad_norm));
        let iterations = reports.iter().map(|r| r.iterations).max().unwrap_or(0);
        let paths = reports.into_iter().map(|r| r.path).collect();
        return Ok(EnsembleReport {
            value,
            path: EnsemblePath::from_parts(mu.weights().to_vec(), paths),
            grad_norm,
            iterations,
        });
    }
    let obj = ActionObjective {
        weights: mu.weights(),
        dim: mu.dim(),
        steps,
        t_start: T::zero(),
        t_end: t,
        p: spec.p(),
        terminal: mu.coords(),
        initial: spec.initial_functional(),
        potential: spec.potential_functional(),
    };
    let z0 = ActionObjective::pack(&EnsemblePath::stationary(mu, t, steps));
    let out = newton_minimize(&obj, z0, opts, "minimize_generalized")?;
    Ok(EnsembleReport {
        value: out.value,
        path: obj.unpack(&out.z),
        grad_norm: out.grad_norm,
        iterations: out.iterations,
    })
}

/// `∫ u(x, t) dμ(x)` for integral problems. `u` comes from the explicit
/// solution when there is one, from the Hopf-Lax formula when `V ≡ 0`, and
/// from [`crate::classical::minimize_classical`] otherwise.
pub fn reduce_linear<T: Real>(mu: &DiscreteMeasure<T>, t: T, spec: &ProblemSpec<T>, steps: usize) -> Result<T> {
    if !spec.is_integral() {
        return Err(Error::InvalidInput("reduce_linear needs integral functionals".into()));
    }
    spec.check_horizon(t)?;
    if t == T::zero() {
        return spec.initial_functional().value(mu);
    }
    let opts = NewtonOptions::default();
    let points: Vec<Vec<T>> = mu.points().map(<[T]>::to_vec).collect();
    let values: Vec<T> = match ClosedForm::from_spec(spec, t) {
        Ok(cf) => points.iter().map(|x| cf.u(x, t)).collect::<Result<_>>()?,
        Err(_) if spec.v().is_zero() => points
            .par_iter()
            .map(|x| hopf_lax_with(x, t, spec, &opts).map(|r| r.0))
            .collect::<Result<_>>()?,
        Err(_) => points
            .par_iter()
            .map(|x| classical_inner(x, t, spec, steps.max(1), None, &opts).map(|r| r.value))
            .collect::<Result<_>>()?,
    };
    Ok(values.iter().zip(mu.weights()).map(|(&u, &w)| w * u).sum())
}

/// Minimizer and value of a Hopf-Lax type formula over measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct HopfLaxResult<T: Real> {
    pub value: T,
    pub tau: DiscreteMeasure<T>,
    pub grad_norm: T,
    pub iterations: usize,
}

/// Starting supports for the infimum over `τ`: `μ` itself and copies of `μ`
/// moved against the per-particle gradient of `G`.
fn hopf_lax_starts<T: Real>(mu: &DiscreteMeasure<T>, g: &Functional<T>, t: T, q: T) -> Result<Vec<Vec<T>>> {
    let d = mu.dim();
    let grad = g.gradient(mu)?;
    let mut dir = vec![T::zero(); grad.len()];
    for k in 0..mu.len() {
        let w = mu.weight(k);
        let gk: Vec<T> = grad[k * d..(k + 1) * d].iter().map(|&v| v / w).collect();
        dir[k * d..(k + 1) * d].copy_from_slice(&vecops::duality(&gk, q));
    }
    Ok([T::zero(), T::one(), T::lit(0.5), T::lit(2.0)]
        .iter()
        .map(|&c| mu.coords().iter().zip(&dir).map(|(&x, &s)| x - c * t * s).collect())
        .collect())
}

/// `inf_τ G(τ) + W_p(μ, τ)^p / (p t^{p-1})` over measures `τ` with the
/// weights of `μ` and free support.
pub fn wasserstein_hopf_lax<T: Real>(
    mu: &DiscreteMeasure<T>,
    t: T,
    g: &Functional<T>,
    spec: &ProblemSpec<T>,
) -> Result<HopfLaxResult<T>> {
    wasserstein_hopf_lax_with(mu, t, g, spec, &NewtonOptions::default())
}

pub fn wasserstein_hopf_lax_with<T: Real>(
    mu: &DiscreteMeasure<T>,
    t: T,
    g: &Functional<T>,
    spec: &ProblemSpec<T>,
    opts: &NewtonOptions<T>,
) -> Result<HopfLaxResult<T>> {
    if !spec.potential_functional().is_zero() {
        return Err(Error::InvalidInput("wasserstein_hopf_lax requires 𝒱 ≡ 0".into()));
    }
    modified_hopf_lax_with(mu, t, g, &Lagrangian::kinetic(spec.p()), spec.p(), opts)
}

/// `inf_τ G(τ) + t ℓ(W_p(μ, τ) / t)` over measures `τ` with the weights of
/// `μ` and free support.
pub fn modified_hopf_lax<T: Real>(
    mu: &DiscreteMeasure<T>,
    t: T,
    g: &Functional<T>,
    ell: &Lagrangian<T>,
    p: T,
) -> Result<HopfLaxResult<T>> {
    modified_hopf_lax_with(mu, t, g, ell, p, &NewtonOptions::default())
}

pub fn modified_hopf_lax_with<T: Real>(
    mu: &DiscreteMeasure<T>,
    t: T,
    g: &Functional<T>,
    ell: &Lagrangian<T>,
    p: T,
    opts: &NewtonOptions<T>,
) -> Result<HopfLaxResult<T>> {
    if !(t >= T::zero()) {
        return Err(Error::InvalidInput(format!("negative time {t}")));
    }
    if t == T::zero() || g.is_zero() {
        // τ = μ is optimal when G is constant and ℓ ≥ ℓ(0).
        let base = if t == T::zero() {
            T::zero()
        } else {
            t * ell.value(T::zero())
        };
        return Ok(HopfLaxResult {
            value: g.value(mu)? + base,
            tau: mu.clone(),
            grad_norm: T::zero(),
            iterations: 0,
        });
    }
    let q = vecops::conjugate(p);
    let n = mu.coords().len();
    // For ℓ = c w^p the cost is a Wasserstein power with exact derivatives.
    let power = match ell {
        Lagrangian::Power { p: e, c } if *e == p => Some(*c * t.powf(T::one() - p)),
        _ => None,
    };
    let starts = hopf_lax_starts(mu, g, t, q)?;
    let results: Vec<_> = if let Some(alpha) = power {
        let f = Functional::Sum(vec![
            g.clone(),
            Functional::WassersteinPower {
                alpha,
                beta: T::zero(),
                p,
                reference: mu.clone(),
            },
        ]);
        let obj = DenseObjective {
            n,
            value: |z: &[T]| f.value(&mu.with_coords(z.to_vec())),
            gradient: |z: &[T], out: &mut [T]| {
                let tau = mu.with_coords(z.to_vec());
                out.iter_mut().for_each(|v| *v = T::zero());
                f.add_gradient(&tau, T::one(), out)?;
                f.value(&tau)
            },
            hessian: Some(|z: &[T], out: &mut [T]| f.add_hessian(&mu.with_coords(z.to_vec()), T::one(), out)),
        };
        starts
            .into_par_iter()
            .map(|z0| newton_minimize(&obj, z0, opts, "wasserstein_hopf_lax"))
            .collect()
    } else {
        let cost = |tau: &DiscreteMeasure<T>, grad: Option<&mut [T]>| -> Result<T> {
            let (w, plan) = transport::wasserstein(tau, mu, p)?;
            let mut value = g.value(tau)? + t * ell.value(w / t);
            if let Some(out) = grad {
                out.iter_mut().for_each(|v| *v = T::zero());
                g.add_gradient(tau, T::one(), out)?;
                if w > T::zero() {
                    // ∇ t ℓ(W/t) = ℓ'(W/t) ∇W, ∇W = ∇(W^p) / (p W^{p-1}).
                    let scale = ell.derivative(w / t) / (p * w.powf(p - T::one()));
                    let d = mu.dim();
                    let mut diff = vec![T::zero(); d];
                    let mut m = vec![T::zero(); d];
                    for (i, j, mass) in plan.support() {
                        for k in 0..d {
                            diff[k] = tau.point(i)[k] - mu.point(j)[k];
                        }
                        vecops::duality_into(&diff, p, &mut m);
                        for k in 0..d {
                            out[i * d + k] = out[i * d + k] + scale * mass * p * m[k];
                        }
                    }
                }
            }
            if !value.is_finite() {
                value = T::infinity();
            }
            Ok(value)
        };
        let obj = DenseObjective {
            n,
            value: |z: &[T]| cost(&mu.with_coords(z.to_vec()), None),
            gradient: |z: &[T], out: &mut [T]| cost(&mu.with_coords(z.to_vec()), Some(out)),
            hessian: None::<fn(&[T], &mut [T]) -> Result<()>>,
        };
        starts
            .into_par_iter()
            .map(|z0| newton_minimize(&obj, z0, opts, "modified_hopf_lax"))
            .collect()
    };
    let best = select_first_best(results)?;
    Ok(HopfLaxResult {
        value: best.value,
        tau: mu.with_coords(best.z),
        grad_norm: best.grad_norm,
        iterations: best.iterations,
    })
}

/// Dynamic programming split of `U(μ, t)` at time `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DpReport<T: Real> {
    /// `U(μ, t)`.
    pub lhs: T,
    /// `U(σ(s), s)` plus the action of the optimal path on `[s, t]`.
    pub rhs: T,
    /// `rhs - lhs`.
    pub residual: T,
    /// Grid time actually used for the split.
    pub s: T,
}

/// Compares `U(μ, t)` with `U(σ(s), s) + ∫_s^t (...)` along the optimal
/// ensemble. The split is at the grid node nearest to `s`.
pub fn dp_check<T: Real>(
    mu: &DiscreteMeasure<T>,
    t: T,
    s: T,
    spec: &ProblemSpec<T>,
    steps: usize,
) -> Result<DpReport<T>> {
    dp_check_with(mu, t, s, spec, steps, &NewtonOptions::default())
}

pub fn dp_check_with<T: Real>(
    mu: &DiscreteMeasure<T>,
    t: T,
    s: T,
    spec: &ProblemSpec<T>,
    steps: usize,
    opts: &NewtonOptions<T>,
) -> Result<DpReport<T>> {
    if !(s > T::zero() && s <= t) {
        return Err(Error::InvalidInput(format!("split time {s} outside (0, {t}]")));
    }
    let full = minimize_generalized_with(mu, t, spec, steps, Strategy::Auto, opts)?;
    let is = (s / t * T::from_usize_lossy(steps))
        .round()
        .to_usize()
        .unwrap_or(0)
        .clamp(1, steps);
    let sigma = &full.path;
    let nu = sigma.snapshot(is);
    let s_grid = sigma.time(is);
    let head = generalized_inner(&nu, s_grid, spec, is, Strategy::Auto, opts)?;
    let tail = if is < steps {
        ensemble_action_value(
            &sigma.slice(is, steps)?,
            spec.p(),
            &Functional::Integral(crate::field::ScalarField::Zero),
            spec.potential_functional(),
        )?
    } else {
        T::zero()
    };
    let rhs = head.value + tail;
    Ok(DpReport {
        lhs: full.value,
        rhs,
        residual: rhs - full.value,
        s: s_grid,
    })
}

/// Discrete Poincaré inequality: returns `(lhs, rhs)` with
/// `lhs = (Σ_i Δs W_p(σ(s_i), σ(T))^p)^{1/p}` and
/// `rhs = C_p T (Σ_i Δs m_i^p)^{1/p}`, `m_i` the kinetic speed bound.
pub fn poincare_check<T: Real>(sigma: &EnsemblePath<T>, p: T) -> Result<(T, T)> {
    let steps = sigma.steps();
    let dt = sigma.dt();
    let end = sigma.snapshot(steps);
    let mut lhs = T::zero();
    let mut kin = T::zero();
    for i in 0..steps {
        lhs = lhs + dt * transport::wasserstein_cost(&sigma.snapshot(i), &end, p)?;
        kin = kin + dt * sigma.kinetic_speed(i, p).powf(p);
    }
    let horizon = sigma.t_end() - sigma.t_start();
    Ok((
        lhs.powf(p.recip()),
        poincare_constant(p) * horizon * kin.powf(p.recip()),
    ))
}

/// `W_p(σ(s_i), σ(s_{i+1})) / Δs` on every interval.
pub fn metric_derivative_estimate<T: Real>(sigma: &EnsemblePath<T>, p: T) -> Result<Vec<T>> {
    let dt = sigma.dt();
    (0..sigma.steps())
        .map(|i| Ok(transport::wasserstein_distance(&sigma.snapshot(i), &sigma.snapshot(i + 1), p)? / dt))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ScalarField;

    fn ex33() -> ProblemSpec<f64> {
        ProblemSpec::new(2.0, ScalarField::Zero, ScalarField::Quadratic { c: 0.5 }).unwrap()
    }

    #[test]
    fn horizon_values() {
        assert!(horizon(0.0f64, 2.0).is_infinite());
        assert!(horizon(-1.0f64, 3.0).is_infinite());
        assert_eq!(horizon(1.0, 2.0), 0.5);
        assert_eq!(horizon(1.0 / 16.0, 2.0), 2.0);
        // p (2 C_p T)^p α = 1 at the horizon.
        for (a, p) in [(0.3f64, 1.5), (2.0, 3.0)] {
            let t: f64 = horizon(a, p);
            let lhs = p * (2.0 * poincare_constant(p) * t).powf(p) * a;
            assert!((lhs - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn action_examples() {
        let mu = DiscreteMeasure::uniform(vec![vec![-1.0f64], vec![1.0]]).unwrap();
        let spec = ProblemSpec::new(2.0, ScalarField::Quadratic { c: 1.0 }, ScalarField::Zero).unwrap();
        let still = EnsemblePath::stationary(&mu, 0.5, 10);
        assert!((ensemble_action(&still, &spec).unwrap() - 1.0).abs() < 1e-15);
        let t = 0.5f64;
        let flow = EnsemblePath::from_flow(&mu, t, 200, |x, s| Ok(vec![x[0] * s.cos() / t.cos()])).unwrap();
        let a = ensemble_action(&flow, &ex33()).unwrap();
        assert!((a + t.tan() / 2.0).abs() < 1e-3);
    }

    #[test]
    fn joint_equals_decoupled_for_integral_data() {
        let mu = DiscreteMeasure::new(
            vec![vec![0.5, -0.2], vec![1.0, 0.3], vec![-0.7, 0.9]],
            vec![0.2, 0.5, 0.3],
        )
        .unwrap();
        let spec = ex33();
        let opts = NewtonOptions::default();
        let a = minimize_generalized_with(&mu, 0.6, &spec, 100, Strategy::Joint, &opts).unwrap();
        let b = minimize_generalized_with(&mu, 0.6, &spec, 100, Strategy::Decoupled, &opts).unwrap();
        assert!((a.value - b.value).abs() < 1e-10);
        let exact = reduce_linear(&mu, 0.6, &spec, 100).unwrap();
        assert!((a.value - exact).abs() < 2e-3);
    }

    #[test]
    fn trivial_problem_is_zero() {
        let mu = DiscreteMeasure::uniform(vec![vec![0.5], vec![2.0]]).unwrap();
        let spec = ProblemSpec::new(2.0, ScalarField::Zero, ScalarField::Zero).unwrap();
        let r = minimize_generalized(&mu, 1.0, &spec, 10).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.path, EnsemblePath::stationary(&mu, 1.0, 10));
        let d = dp_check(&mu, 1.0, 0.5, &spec, 10).unwrap();
        assert_eq!(d.residual, 0.0);
    }

    #[test]
    fn interaction_joint_below_frozen() {
        let mu = DiscreteMeasure::uniform(vec![vec![0.0], vec![0.5], vec![1.2]]).unwrap();
        let spec = ProblemSpec::<f64>::builder(2.0)
            .g(ScalarField::Linear { c: vec![0.3] })
            .potential(ScalarField::Quadratic { c: 0.25 })
            .interaction(ScalarField::Quadratic { c: 1.0 }, 0.05, 0.5)
            .build()
            .unwrap();
        let joint = minimize_generalized(&mu, 0.5, &spec, 100).unwrap();
        let frozen = ProblemSpec::new(
            2.0,
            ScalarField::Linear { c: vec![0.3] },
            ScalarField::Quadratic { c: 0.25 },
        )
        .unwrap();
        let dec = minimize_generalized(&mu, 0.5, &frozen, 100).unwrap();
        // The frozen optimum is admissible for the coupled problem.
        let frozen_in_joint = ensemble_action(&dec.path, &spec).unwrap();
        assert!(joint.value <= frozen_in_joint + 1e-10);
    }

    #[test]
    fn linear_hopf_lax() {
        let mu = DiscreteMeasure::new(vec![vec![0.1, 0.4], vec![-0.3, 1.0]], vec![0.4, 0.6]).unwrap();
        let c = vec![0.8, -0.5];
        for p in [1.5, 2.0, 3.0] {
            let spec = ProblemSpec::new(p, ScalarField::Linear { c: c.clone() }, ScalarField::Zero).unwrap();
            let q = spec.q();
            let t = 0.7;
            let exact = mu
                .points()
                .zip(mu.weights())
                .map(|(x, &w)| w * vecops::dot(&c, x))
                .sum::<f64>()
                - t * vecops::norm(&c).powf(q) / q;
            let r = wasserstein_hopf_lax(&mu, t, spec.initial_functional(), &spec).unwrap();
            assert!((r.value - exact).abs() < 1e-9, "p={p}: {} vs {exact}", r.value);
        }
    }

    #[test]
    fn cosh_hopf_lax_matches_scalar_solution() {
        let mu = DiscreteMeasure::dirac(vec![0.3]);
        let c = 1.4f64;
        let g = Functional::Integral(ScalarField::Linear { c: vec![c] });
        let t = 0.6;
        let r = modified_hopf_lax(&mu, t, &g, &Lagrangian::CoshMinusOne, 2.0).unwrap();
        let exact = c * 0.3 - t * Lagrangian::CoshMinusOne.conjugate_exact(c).unwrap();
        assert!((r.value - exact).abs() < 1e-9, "{} vs {exact}", r.value);
    }

    #[test]
    fn poincare_examples() {
        let line = EnsemblePath::new(
            vec![1.0],
            vec![ParticlePath::from_fn(0.0, 1.0, 2000, |s| vec![s]).unwrap()],
        )
        .unwrap();
        let (l, r) = poincare_check(&line, 2.0).unwrap();
        assert!((l - (1.0f64 / 3.0).sqrt()).abs() < 1e-3);
        assert!((r - 0.5f64.sqrt()).abs() < 1e-12);
        let still = EnsemblePath::stationary(&DiscreteMeasure::dirac(vec![1.0]), 1.0, 5);
        assert_eq!(poincare_check(&still, 2.0).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn metric_derivative_examples() {
        let mu = DiscreteMeasure::uniform(vec![vec![0.0], vec![1.0]]).unwrap();
        let shift = EnsemblePath::from_flow(&mu, 1.0, 4, |x, s| Ok(vec![x[0] + 0.7 * s])).unwrap();
        for v in metric_derivative_estimate(&shift, 2.0).unwrap() {
            assert!((v - 0.7f64).abs() < 1e-12);
        }
        // Particles cross during the middle interval; the snapshots there coincide.
        let swap = EnsemblePath::from_flow(&mu, 1.0, 3, |x, s| Ok(vec![x[0] + (1.0 - 2.0 * x[0]) * s])).unwrap();
        let est = metric_derivative_estimate(&swap, 2.0).unwrap();
        for (i, v) in est.iter().enumerate() {
            assert!(*v <= swap.kinetic_speed(i, 2.0) + 1e-12);
        }
        assert!(est[1].abs() < 1e-12);
    }
}
