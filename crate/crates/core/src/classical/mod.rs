//! The classical value function `u(x, t)`: direct minimization of the
//! discrete action, the Hopf-Lax formula and explicit solutions.

pub mod closed_form;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::ActionObjective;
use crate::error::{Error, Result};
use crate::functional::Functional;
use crate::optim::{newton_minimize, DenseObjective, NewtonOptions};
use crate::path::ParticlePath;
use crate::problem::ProblemSpec;
use crate::scalar::Real;
use crate::vecops;

pub use closed_form::{closed_form_u, flow_map, solve_a_ode, t_p, AOdeSolution, ClosedForm};

/// Result of a classical value-function minimization.
///
/// JSON form: `{"value", "path": [[...], ...], "grad_norm", "iterations", "t"}`
/// with the path nodes listed from `s = 0` to `s = t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ReportRepr<T>", into = "ReportRepr<T>", bound = "T: Real")]
pub struct ValueReport<T: Real> {
    pub value: T,
    pub path: ParticlePath<T>,
    pub grad_norm: T,
    pub iterations: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct ReportRepr<T: Real> {
    value: T,
    path: Vec<Vec<T>>,
    grad_norm: T,
    iterations: usize,
    t: T,
}

impl<T: Real> TryFrom<ReportRepr<T>> for ValueReport<T> {
    type Error = Error;

    fn try_from(r: ReportRepr<T>) -> Result<Self> {
        Ok(ValueReport {
            value: r.value,
            path: ParticlePath::new(T::zero(), r.t, r.path)?,
            grad_norm: r.grad_norm,
            iterations: r.iterations,
        })
    }
}

impl<T: Real> From<ValueReport<T>> for ReportRepr<T> {
    fn from(r: ValueReport<T>) -> Self {
        ReportRepr {
            value: r.value,
            t: r.path.t_end(),
            path: r.path.positions(),
            grad_norm: r.grad_norm,
            iterations: r.iterations,
        }
    }
}

/// `g(γ(0)) + Σ_i Δs (|v_i|^p / p - V(m_i))` with forward-difference
/// velocities `v_i` and interval midpoints `m_i`.
pub fn classical_action<T: Real>(path: &ParticlePath<T>, spec: &ProblemSpec<T>) -> T {
    let p = spec.p();
    let dt = path.dt();
    let mut total = T::zero();
    for i in 0..path.steps() {
        let v = path.velocity(i);
        total = total + vecops::pow_abs(vecops::norm(&v), p) / p - spec.v().value(&path.midpoint(i));
    }
    spec.g().value(path.start()) + dt * total
}

/// Minimizes the discrete action over paths on `[0, t]` with `N` intervals
/// ending at `x`; `γ(0)` is free.
pub fn minimize_classical<T: Real>(
    x: &[T],
    t: T,
    spec: &ProblemSpec<T>,
    steps: usize,
    init: Option<&ParticlePath<T>>,
) -> Result<ValueReport<T>> {
    minimize_classical_with(x, t, spec, steps, init, &NewtonOptions::default())
}

/// [`minimize_classical`] with explicit stopping rules.
pub fn minimize_classical_with<T: Real>(
    x: &[T],
    t: T,
    spec: &ProblemSpec<T>,
    steps: usize,
    init: Option<&ParticlePath<T>>,
    opts: &NewtonOptions<T>,
) -> Result<ValueReport<T>> {
    if steps < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 time steps, got {steps}")));
    }
    classical_inner(x, t, spec, steps, init, opts)
}

pub(crate) fn classical_inner<T: Real>(
    x: &[T],
    t: T,
    spec: &ProblemSpec<T>,
    steps: usize,
    init: Option<&ParticlePath<T>>,
    opts: &NewtonOptions<T>,
) -> Result<ValueReport<T>> {
    if x.is_empty() {
        return Err(Error::InvalidInput("empty point".into()));
    }
    spec.check_horizon(t)?;
    if t == T::zero() {
        return Ok(ValueReport {
            value: spec.g().value(x),
            path: ParticlePath::constant(x, T::zero(), T::zero(), steps),
            grad_norm: T::zero(),
            iterations: 0,
        });
    }
    let initial = Functional::Integral(spec.g().clone());
    let potential = Functional::Integral(spec.v().clone());
    let weights = [T::one()];
    let obj = ActionObjective {
        weights: &weights,
        dim: x.len(),
        steps,
        t_start: T::zero(),
        t_end: t,
        p: spec.p(),
        terminal: x,
        initial: &initial,
        potential: &potential,
    };
    let z0 = match init {
        Some(path) => {
            if path.steps() != steps || path.dim() != x.len() {
                return Err(Error::InvalidInput("initial path does not match the grid".into()));
            }
            path.coords()[..steps * x.len()].to_vec()
        }
        None => x.iter().copied().cycle().take(steps * x.len()).collect(),
    };
    let out = newton_minimize(&obj, z0, opts, "minimize_classical")?;
    let path = obj.unpack(&out.z).paths()[0].clone();
    Ok(ValueReport {
        value: out.value,
        path,
        grad_norm: out.grad_norm,
        iterations: out.iterations,
    })
}

/// Per-particle problems for every point, solved in parallel; results are
/// in input order.
pub(crate) fn minimize_each<T: Real>(
    points: &[Vec<T>],
    t: T,
    spec: &ProblemSpec<T>,
    steps: usize,
    opts: &NewtonOptions<T>,
) -> Result<Vec<ValueReport<T>>> {
    points
        .par_iter()
        .map(|x| classical_inner(x, t, spec, steps, None, opts))
        .collect()
}

/// Hopf-Lax formula `min_y g(y) + |x - y|^p / (p t^{p-1})` for `V ≡ 0`.
/// Returns the value and the minimizer.
pub fn hopf_lax<T: Real>(x: &[T], t: T, spec: &ProblemSpec<T>) -> Result<(T, Vec<T>)> {
    hopf_lax_with(x, t, spec, &NewtonOptions::default())
}

pub fn hopf_lax_with<T: Real>(x: &[T], t: T, spec: &ProblemSpec<T>, opts: &NewtonOptions<T>) -> Result<(T, Vec<T>)> {
    if !spec.v().is_zero() {
        return Err(Error::InvalidInput("hopf_lax requires V ≡ 0".into()));
    }
    if !(t >= T::zero()) {
        return Err(Error::InvalidInput(format!("negative time {t}")));
    }
    let g = spec.g();
    if t == T::zero() {
        return Ok((g.value(x), x.to_vec()));
    }
    let p = spec.p();
    let q = spec.q();
    let d = x.len();
    let tp = t.powf(p - T::one());
    let value = |y: &[T]| -> Result<T> {
        let diff: Vec<T> = y.iter().zip(x).map(|(&a, &b)| a - b).collect();
        Ok(g.value(y) + vecops::pow_abs(vecops::norm(&diff), p) / (p * tp))
    };
    let gradient = |y: &[T], out: &mut [T]| -> Result<T> {
        let diff: Vec<T> = y.iter().zip(x).map(|(&a, &b)| a - b).collect();
        g.gradient_into(y, out);
        let m = vecops::duality(&diff, p);
        for k in 0..d {
            out[k] = out[k] + m[k] / tp;
        }
        Ok(g.value(y) + vecops::pow_abs(vecops::norm(&diff), p) / (p * tp))
    };
    let hessian = |y: &[T], out: &mut [T]| -> Result<()> {
        g.hessian_into(y, out);
        let diff: Vec<T> = y.iter().zip(x).map(|(&a, &b)| a - b).collect();
        let r = vecops::norm(&diff);
        let two = T::lit(2.0);
        let s = r.max(T::lit(1e-8)).powf(p - two) / tp;
        for a in 0..d {
            for b in 0..d {
                let rad = if r > T::zero() {
                    diff[a] * diff[b] / (r * r)
                } else {
                    T::zero()
                };
                let id = if a == b { T::one() } else { T::zero() };
                out[a * d + b] = out[a * d + b] + s * (id + (p - two) * rad);
            }
        }
        Ok(())
    };
    let obj = DenseObjective {
        n: d,
        value,
        gradient,
        hessian: Some(hessian),
    };
    // Starts: x itself, then offsets along the straight-line velocity
    // |∇g(x)|^{q-2}∇g(x) for linear data.
    let shift = vecops::duality(&g.gradient(x), q);
    let starts: Vec<Vec<T>> = [T::zero(), T::one(), T::lit(0.5), T::lit(2.0)]
        .iter()
        .map(|&c| x.iter().zip(&shift).map(|(&a, &s)| a - c * t * s).collect())
        .collect();
    let results: Vec<_> = starts
        .into_par_iter()
        .map(|z0| newton_minimize(&obj, z0, opts, "hopf_lax"))
        .collect();
    select_first_best(results).map(|o| (o.value, o.z))
}

/// Lowest value among converged runs; near-ties go to the earliest start.
pub(crate) fn select_first_best<T: Real>(
    results: Vec<Result<crate::optim::NewtonOutcome<T>>>,
) -> Result<crate::optim::NewtonOutcome<T>> {
    let mut best: Option<crate::optim::NewtonOutcome<T>> = None;
    let mut first_err = None;
    for r in results {
        match r {
            Ok(o) => {
                let better = match &best {
                    None => true,
                    Some(b) => o.value < b.value - T::tol(1e-12) * (T::one() + b.value.abs()),
                };
                if better {
                    best = Some(o);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.expect("at least one start"))
}

/// Action of a single-particle path through the ensemble machinery; used to
/// cross-check [`classical_action`].
#[cfg(test)]
fn action_via_ensemble<T: Real>(path: &ParticlePath<T>, spec: &ProblemSpec<T>) -> T {
    let e = crate::path::EnsemblePath::new(vec![T::one()], vec![path.clone()]).unwrap();
    crate::action::ensemble_action_value(
        &e,
        spec.p(),
        &Functional::Integral(spec.g().clone()),
        &Functional::Integral(spec.v().clone()),
    )
    .unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ScalarField;

    fn ex33() -> ProblemSpec<f64> {
        ProblemSpec::new(2.0, ScalarField::Zero, ScalarField::Quadratic { c: 0.5 }).unwrap()
    }

    #[test]
    fn action_examples() {
        let free = ProblemSpec::new(2.0, ScalarField::Zero, ScalarField::Zero).unwrap();
        let c = ParticlePath::constant(&[0.3], 0.0, 1.0, 10);
        assert_eq!(classical_action(&c, &free), 0.0);
        let line = ParticlePath::from_fn(0.0f64, 1.0, 10, |s| vec![s]).unwrap();
        assert!((classical_action(&line, &free) - 0.5).abs() < 1e-14);
        let t = 0.5f64;
        let flow = ParticlePath::from_fn(0.0, t, 200, |s| vec![s.cos() / t.cos()]).unwrap();
        let a = classical_action(&flow, &ex33());
        assert!((a + t.tan() / 2.0).abs() < 1e-3);
        assert!((a - action_via_ensemble(&flow, &ex33())).abs() < 1e-13);
    }

    #[test]
    fn linear_initial_cost() {
        for p in [1.5, 2.0, 3.0] {
            let spec = ProblemSpec::new(p, ScalarField::Linear { c: vec![0.7, -0.4] }, ScalarField::Zero).unwrap();
            let x = [0.3, 1.2];
            let t = 0.8;
            let q = spec.q();
            let c = [0.7f64, -0.4];
            let exact = c[0] * x[0] + c[1] * x[1] - t * vecops::norm(&c).powf(q) / q;
            let r = minimize_classical(&x, t, &spec, 50, None).unwrap();
            assert!((r.value - exact).abs() < 1e-6, "p={p}: {} vs {exact}", r.value);
            assert!(r.grad_norm <= 1e-8);
            let (h, y) = hopf_lax(&x, t, &spec).unwrap();
            assert!((h - exact).abs() < 1e-10);
            if p == 2.0 {
                assert!((y[0] - (x[0] - t * c[0])).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn example_33_minimization() {
        let r = minimize_classical(&[1.0], 0.5, &ex33(), 400, None).unwrap();
        assert!((r.value + 0.5f64.tan() / 2.0).abs() < 1e-4);
        // Constant path is admissible.
        let c = ParticlePath::constant(&[1.0], 0.0, 0.5, 400);
        assert!(r.value <= classical_action(&c, &ex33()));
    }

    #[test]
    fn horizon_is_enforced() {
        assert!(matches!(
            minimize_classical(&[1.0], 1.6, &ex33(), 50, None),
            Err(Error::HorizonExceeded { .. })
        ));
        assert!(minimize_classical(&[1.0], 0.5, &ex33(), 1, None).is_err());
    }

    #[test]
    fn hopf_lax_zero_g() {
        let spec = ProblemSpec::new(3.0, ScalarField::Zero, ScalarField::Zero).unwrap();
        let (v, y) = hopf_lax(&[0.4, 0.1], 0.7, &spec).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(y, vec![0.4, 0.1]);
    }

    #[test]
    fn report_json_shape() {
        let r = minimize_classical(&[1.0], 0.3, &ex33(), 4, None).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        for k in ["value", "path", "grad_norm", "iterations"] {
            assert!(v.get(k).is_some(), "{k}");
        }
        assert_eq!(v["path"].as_array().unwrap().len(), 5);
        let back: ValueReport<f64> = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }
}
