//! Characteristics, Euler-Poisson weak residuals and first-order optimality
//! conditions along minimizing paths.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::minimize_classical;
use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::optim::solve_dense;
use crate::path::{EnsemblePath, ParticlePath};
use crate::problem::ProblemSpec;
use crate::scalar::Real;
use crate::vecops;

/// A solution of the Euler-Lagrange system together with its momenta
/// `|γ̇|^{p-2} γ̇` at every node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Characteristic<T: Real> {
    pub path: ParticlePath<T>,
    pub momenta: Vec<Vec<T>>,
}

impl<T: Real> Characteristic<T> {
    /// Velocity at node `i`, recovered from the momentum.
    pub fn velocity(&self, i: usize, p: T) -> Vec<T> {
        vecops::duality(&self.momenta[i], vecops::conjugate(p))
    }
}

const MAX_HALVINGS: usize = 40;
const NEAR_ZERO_STEPS: f64 = 64.0;

struct Shooter<'a, T: Real> {
    p: T,
    q: T,
    spec: &'a ProblemSpec<T>,
}

impl<T: Real> Shooter<'_, T> {
    /// Right-hand side of `x' = |m|^{q-2} m`, `m' = -∇V(x)`.
    fn rhs(&self, x: &[T], m: &[T]) -> (Vec<T>, Vec<T>) {
        let dx = vecops::duality(m, self.q);
        let mut dm = self.spec.v().gradient(x);
        dm.iter_mut().for_each(|v| *v = -*v);
        (dx, dm)
    }

    fn rk4(&self, x: &[T], m: &[T], h: T) -> (Vec<T>, Vec<T>) {
        let two = T::lit(2.0);
        let six = T::lit(6.0);
        let axpy = |a: &[T], b: &[T], s: T| -> Vec<T> { a.iter().zip(b).map(|(&u, &v)| u + s * v).collect() };
        let (k1x, k1m) = self.rhs(x, m);
        let (k2x, k2m) = self.rhs(&axpy(x, &k1x, h / two), &axpy(m, &k1m, h / two));
        let (k3x, k3m) = self.rhs(&axpy(x, &k2x, h / two), &axpy(m, &k2m, h / two));
        let (k4x, k4m) = self.rhs(&axpy(x, &k3x, h), &axpy(m, &k3m, h));
        let comb = |y: &[T], k1: &[T], k2: &[T], k3: &[T], k4: &[T]| -> Vec<T> {
            (0..y.len())
                .map(|j| y[j] + h / six * (k1[j] + two * k2[j] + two * k3[j] + k4[j]))
                .collect()
        };
        (comb(x, &k1x, &k2x, &k3x, &k4x), comb(m, &k1m, &k2m, &k3m, &k4m))
    }

    /// Whether the momentum is within `NEAR_ZERO_STEPS` steps of size `h`
    /// of zero, where the inverse duality map is not smooth.
    fn near_zero(&self, x: &[T], m: &[T], h: T) -> bool {
        if self.p == T::lit(2.0) {
            return false;
        }
        let dm: Vec<T> = self.spec.v().gradient(x).iter().map(|&g| -h * g).collect();
        let len2 = vecops::dot(&dm, &dm);
        let closest = if len2 == T::zero() {
            vecops::norm(m)
        } else {
            let s = (-vecops::dot(m, &dm) / len2).max(T::zero()).min(T::one());
            let pt: Vec<T> = m.iter().zip(&dm).map(|(&a, &b)| a + s * b).collect();
            vecops::norm(&pt)
        };
        closest <= T::lit(NEAR_ZERO_STEPS) * len2.sqrt()
    }

    /// One step of size `h`; steps that may cross zero momentum are
    /// checked against two half steps and halved until they agree.
    fn advance(&self, x: &[T], m: &[T], s: T, h: T, depth: usize) -> Result<(Vec<T>, Vec<T>)> {
        if !self.near_zero(x, m, h) {
            return Ok(self.rk4(x, m, h));
        }
        let half = h / T::lit(2.0);
        let (fx, fm) = self.rk4(x, m, h);
        let (hx, hm) = self.rk4(x, m, half);
        let (hx, hm) = self.rk4(&hx, &hm, half);
        let scale = T::one() + vecops::norm(&hx) + vecops::norm(&hm);
        let err = vecops::dist(&fx, &hx) + vecops::dist(&fm, &hm);
        if err <= T::tol(1e-13) * scale || h == T::zero() {
            return Ok((hx, hm));
        }
        if depth >= MAX_HALVINGS {
            return Err(Error::DualityDegenerate { time: s.to_f64_lossy() });
        }
        let (mx, mm) = self.advance(x, m, s, half, depth + 1)?;
        self.advance(&mx, &mm, s + half, half, depth + 1)
    }
}

/// Integrates `d/ds(|γ̇|^{p-2} γ̇) = -∇V(γ)` from `γ(0) = x0`, `γ̇(0) = v0`
/// over `[0, t]` with `steps` RK4 steps in position and momentum.
pub fn euler_lagrange_shoot<T: Real>(
    x0: &[T],
    v0: &[T],
    t: T,
    spec: &ProblemSpec<T>,
    steps: usize,
) -> Result<Characteristic<T>> {
    if x0.len() != v0.len() {
        return Err(Error::DimensionMismatch {
            expected: x0.len(),
            found: v0.len(),
        });
    }
    let p = spec.p();
    shoot_momentum(x0, vecops::duality(v0, p), t, spec, steps)
}

fn shoot_momentum<T: Real>(
    x0: &[T],
    m0: Vec<T>,
    t: T,
    spec: &ProblemSpec<T>,
    steps: usize,
) -> Result<Characteristic<T>> {
    if steps == 0 || x0.is_empty() {
        return Err(Error::InvalidInput(
            "shooting needs a point and at least one step".into(),
        ));
    }
    if !(t >= T::zero()) || !t.is_finite() {
        return Err(Error::InvalidInput(format!("bad time horizon {t}")));
    }
    let p = spec.p();
    let sh = Shooter {
        p,
        q: vecops::conjugate(p),
        spec,
    };
    let h = t / T::from_usize_lossy(steps);
    let mut positions = Vec::with_capacity(steps + 1);
    let mut momenta = Vec::with_capacity(steps + 1);
    let mut x = x0.to_vec();
    let mut m = m0;
    positions.push(x.clone());
    momenta.push(m.clone());
    for i in 0..steps {
        let (nx, nm) = sh.advance(&x, &m, h * T::from_usize_lossy(i), h, 0)?;
        if !nx.iter().chain(&nm).all(|v| v.is_finite()) {
            return Err(Error::InvalidInput(
                "characteristic left the representable range".into(),
            ));
        }
        x = nx;
        m = nm;
        positions.push(x.clone());
        momenta.push(m.clone());
    }
    Ok(Characteristic {
        path: ParticlePath::new(T::zero(), t, positions)?,
        momenta,
    })
}

/// Number of RK4 steps used by [`solve_characteristic_bvp`].
pub const DEFAULT_SHOOTING_STEPS: usize = 1000;

/// The characteristic ending at `x` at time `t` with `|γ̇(0)|^{p-2} γ̇(0) =
/// ∇g(γ(0))`, found by shooting on the initial point.
pub fn solve_characteristic_bvp<T: Real>(x: &[T], t: T, spec: &ProblemSpec<T>) -> Result<Characteristic<T>> {
    solve_characteristic_bvp_with(x, t, spec, DEFAULT_SHOOTING_STEPS)
}

pub fn solve_characteristic_bvp_with<T: Real>(
    x: &[T],
    t: T,
    spec: &ProblemSpec<T>,
    steps: usize,
) -> Result<Characteristic<T>> {
    spec.check_horizon(t)?;
    let d = x.len();
    let shoot = |y: &[T]| shoot_momentum(y, spec.g().gradient(y), t, spec, steps);
    let miss = |c: &Characteristic<T>| -> Vec<T> { c.path.end().iter().zip(x).map(|(&a, &b)| a - b).collect() };
    let tol = T::tol(1e-11) * (T::one() + vecops::norm(x));

    let straight: Vec<T> = {
        let back = vecops::duality(&spec.g().gradient(x), vecops::conjugate(spec.p()));
        x.iter().zip(&back).map(|(&a, &b)| a - t * b).collect()
    };
    let mut best_miss = T::infinity();
    let mut total_iter = 0;
    for attempt in 0..2 {
        let y0 = if attempt == 0 {
            straight.clone()
        } else {
            // Start of the optimized discrete path.
            minimize_classical(x, t, spec, 200, None)?.path.start().to_vec()
        };
        let mut y = y0;
        let Ok(mut c) = shoot(&y) else { continue };
        let mut f = miss(&c);
        let mut fnorm = vecops::norm(&f);
        let mut jac: Option<Vec<T>> = None;
        for _ in 0..100 {
            total_iter += 1;
            best_miss = best_miss.min(fnorm);
            if fnorm <= tol {
                return Ok(c);
            }
            let fresh = jac.is_none();
            let j = match jac.take() {
                Some(j) => j,
                None => fd_jacobian(&y, &shoot)?,
            };
            let neg: Vec<T> = f.iter().map(|&v| -v).collect();
            let Some(dy) = solve_dense(&j, d, &neg) else { break };
            let mut lam = T::one();
            let mut accepted = None;
            for _ in 0..30 {
                let yn: Vec<T> = y.iter().zip(&dy).map(|(&a, &b)| a + lam * b).collect();
                if let Ok(cn) = shoot(&yn) {
                    let fnew = miss(&cn);
                    let nn = vecops::norm(&fnew);
                    if nn < fnorm {
                        accepted = Some((yn, cn, fnew, nn));
                        break;
                    }
                }
                lam = lam / T::lit(2.0);
            }
            match accepted {
                Some((yn, cn, fnew, nn)) => {
                    // Broyden rank-one update of the Jacobian.
                    let sy: Vec<T> = yn.iter().zip(&y).map(|(&a, &b)| a - b).collect();
                    let df: Vec<T> = fnew.iter().zip(&f).map(|(&a, &b)| a - b).collect();
                    let ss = vecops::dot(&sy, &sy);
                    let mut jn = j;
                    if ss > T::zero() {
                        for r in 0..d {
                            let js: T = (0..d).map(|k| jn[r * d + k] * sy[k]).sum();
                            let coef = (df[r] - js) / ss;
                            for k in 0..d {
                                jn[r * d + k] = jn[r * d + k] + coef * sy[k];
                            }
                        }
                    }
                    jac = Some(jn);
                    y = yn;
                    c = cn;
                    f = fnew;
                    fnorm = nn;
                }
                // A stale Jacobian gets one refresh before giving up.
                None if !fresh => jac = None,
                None => break,
            }
        }
        best_miss = best_miss.min(fnorm);
    }
    Err(Error::NoConvergence {
        what: "solve_characteristic_bvp",
        iterations: total_iter,
        residual: best_miss.to_f64_lossy(),
    })
}

fn fd_jacobian<T: Real>(y: &[T], shoot: &impl Fn(&[T]) -> Result<Characteristic<T>>) -> Result<Vec<T>> {
    let d = y.len();
    let mut j = vec![T::zero(); d * d];
    for col in 0..d {
        let h = T::lit(1e-6) * (T::one() + y[col].abs());
        let mut yp = y.to_vec();
        let mut ym = y.to_vec();
        yp[col] = yp[col] + h;
        ym[col] = ym[col] - h;
        let ep = shoot(&yp)?;
        let em = shoot(&ym)?;
        for r in 0..d {
            j[r * d + col] = (ep.path.end()[r] - em.path.end()[r]) / (h + h);
        }
    }
    Ok(j)
}

type FieldFn<T> = Arc<dyn Fn(&[T]) -> (T, Vec<T>) + Send + Sync>;

/// Smooth compactly supported scalar test function `ψ`. Used directly for
/// the continuity equation, and as `ψ e_k` for the momentum equation.
#[derive(Clone)]
pub struct TestFunction<T> {
    pub name: String,
    /// Returns `ψ(x)` and `∇ψ(x)`.
    pub eval: FieldFn<T>,
}

impl<T> fmt::Debug for TestFunction<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction").field("name", &self.name).finish()
    }
}

impl<T: Real> TestFunction<T> {
    pub fn new(name: impl Into<String>, eval: impl Fn(&[T]) -> (T, Vec<T>) + Send + Sync + 'static) -> Self {
        TestFunction {
            name: name.into(),
            eval: Arc::new(eval),
        }
    }

    /// `Π_j r_j^{e_j} β(r_j)` with `r_j = (x_j - c_j) / R_j` and the bump
    /// `β(r) = exp(-1 / (1 - r²))` on `|r| < 1`.
    pub fn monomial_bump(exponents: Vec<u32>, center: Vec<T>, radius: Vec<T>) -> Self {
        let name = format!("mono{exponents:?}");
        TestFunction::new(name, move |x: &[T]| {
            let d = x.len();
            let mut f = vec![T::zero(); d];
            let mut df = vec![T::zero(); d];
            for j in 0..d {
                let r = (x[j] - center[j]) / radius[j];
                let e = exponents[j] as i32;
                if r.abs() >= T::one() {
                    return (T::zero(), vec![T::zero(); d]);
                }
                let one_m = T::one() - r * r;
                let b = (-one_m.recip()).exp();
                let db = b * (-(r + r) / (one_m * one_m));
                let pw = r.powi(e);
                let dpw = if e == 0 {
                    T::zero()
                } else {
                    T::from_usize_lossy(e as usize) * r.powi(e - 1)
                };
                f[j] = pw * b;
                df[j] = (dpw * b + pw * db) / radius[j];
            }
            let value = f.iter().fold(T::one(), |a, &v| a * v);
            let grad = (0..d)
                .map(|j| (0..d).fold(df[j], |a, k| if k == j { a } else { a * f[k] }))
                .collect();
            (value, grad)
        })
    }

    /// Monomials of total degree ≤ 3 times a bump supported on twice the
    /// bounding box of the ensemble.
    pub fn default_set(sigma: &EnsemblePath<T>) -> Vec<Self> {
        let d = sigma.dim();
        let mut lo = vec![T::infinity(); d];
        let mut hi = vec![T::neg_infinity(); d];
        for path in sigma.paths() {
            for c in path.coords().chunks(d) {
                for j in 0..d {
                    lo[j] = lo[j].min(c[j]);
                    hi[j] = hi[j].max(c[j]);
                }
            }
        }
        let two = T::lit(2.0);
        let center: Vec<T> = lo.iter().zip(&hi).map(|(&a, &b)| (a + b) / two).collect();
        let radius: Vec<T> = lo
            .iter()
            .zip(&hi)
            .map(|(&a, &b)| two * ((b - a) / two).max(T::lit(0.5)))
            .collect();
        let mut out = Vec::new();
        let mut e = vec![0u32; d];
        loop {
            if e.iter().sum::<u32>() <= 3 {
                out.push(Self::monomial_bump(e.clone(), center.clone(), radius.clone()));
            }
            let mut j = 0;
            while j < d {
                e[j] += 1;
                if e[j] <= 3 {
                    break;
                }
                e[j] = 0;
                j += 1;
            }
            if j == d {
                break;
            }
        }
        out
    }
}

/// Residual of one test function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TestResidual<T: Real> {
    pub name: String,
    pub continuity: T,
    /// One entry per coordinate direction `k` of the test `ψ e_k`.
    pub momentum: Vec<T>,
}

/// Weak-form residuals of the continuity and momentum equations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct EulerPoissonReport<T: Real> {
    pub continuity: T,
    pub momentum: T,
    pub per_test: Vec<TestResidual<T>>,
}

/// Central-difference velocities at interior nodes; fourth order when the
/// grid allows it.
fn node_velocity<T: Real>(path: &ParticlePath<T>, i: usize) -> Vec<T> {
    let n = path.steps();
    let dt = path.dt();
    if i >= 2 && i + 2 <= n {
        let (a, b, c, d) = (path.node(i - 2), path.node(i - 1), path.node(i + 1), path.node(i + 2));
        let eight = T::lit(8.0);
        (0..path.dim())
            .map(|j| (eight * (c[j] - b[j]) - (d[j] - a[j])) / (T::lit(12.0) * dt))
            .collect()
    } else {
        let (b, c) = (path.node(i - 1), path.node(i + 1));
        (0..path.dim()).map(|j| (c[j] - b[j]) / (dt + dt)).collect()
    }
}

/// Per-particle potential force `∇V` at every particle of `mu`.
fn potential_forces<T: Real>(mu: &DiscreteMeasure<T>, spec: &ProblemSpec<T>) -> Result<Vec<T>> {
    let mut g = spec.potential_functional().gradient(mu)?;
    let d = mu.dim();
    for k in 0..mu.len() {
        let w = mu.weight(k);
        for v in &mut g[k * d..(k + 1) * d] {
            *v = if w > T::zero() { *v / w } else { T::zero() };
        }
    }
    Ok(g)
}

/// Time-integrated weak residuals of the Euler-Poisson system along `σ`,
/// with time derivatives taken by central differences at interior nodes.
pub fn euler_poisson_residual<T: Real>(
    sigma: &EnsemblePath<T>,
    spec: &ProblemSpec<T>,
    tests: &[TestFunction<T>],
) -> Result<EulerPoissonReport<T>> {
    let n = sigma.steps();
    let d = sigma.dim();
    let p = spec.p();
    let dt = sigma.dt();
    let nk = sigma.len();
    if n < 2 {
        return Err(Error::InvalidInput("residuals need at least 2 time steps".into()));
    }
    let forces: Vec<Vec<T>> = (0..=n)
        .into_par_iter()
        .map(|i| potential_forces(&sigma.snapshot(i), spec))
        .collect::<Result<_>>()?;
    // Node velocities and momenta; the endpoints only feed the time
    // derivatives through their positions.
    let vel: Vec<Vec<Vec<T>>> = (1..n)
        .map(|i| sigma.paths().iter().map(|path| node_velocity(path, i)).collect())
        .collect();
    let mom_at = |i: usize, k: usize| -> Vec<T> {
        let path = sigma.path(k);
        let v = if i == 0 {
            path.velocity(0)
        } else if i == n {
            path.velocity(n - 1)
        } else {
            vel[i - 1][k].clone()
        };
        vecops::duality(&v, p)
    };
    let mom: Vec<Vec<Vec<T>>> = (0..=n).map(|i| (0..nk).map(|k| mom_at(i, k)).collect()).collect();

    let per_test: Vec<TestResidual<T>> = tests
        .par_iter()
        .map(|tf| {
            let evals: Vec<Vec<(T, Vec<T>)>> = (0..=n)
                .map(|i| (0..nk).map(|k| (tf.eval)(sigma.path(k).node(i))).collect())
                .collect();
            let w = sigma.weights();
            let mass = |i: usize| -> T { (0..nk).map(|k| w[k] * evals[i][k].0).sum() };
            let moment = |i: usize, c: usize| -> T { (0..nk).map(|k| w[k] * evals[i][k].0 * mom[i][k][c]).sum() };
            let mut cont = T::zero();
            let mut momentum = vec![T::zero(); d];
            for i in 1..n {
                let flux: T = (0..nk)
                    .map(|k| w[k] * vecops::dot(&evals[i][k].1, &vel[i - 1][k]))
                    .sum();
                let r = (mass(i + 1) - mass(i - 1)) / (dt + dt) - flux;
                cont = cont + dt * r.abs();
                for (c, acc) in momentum.iter_mut().enumerate() {
                    let transport: T = (0..nk)
                        .map(|k| w[k] * vecops::dot(&evals[i][k].1, &vel[i - 1][k]) * mom[i][k][c])
                        .sum();
                    let force: T = (0..nk).map(|k| w[k] * evals[i][k].0 * forces[i][k * d + c]).sum();
                    let r = (moment(i + 1, c) - moment(i - 1, c)) / (dt + dt) - transport + force;
                    *acc = *acc + dt * r.abs();
                }
            }
            TestResidual {
                name: tf.name.clone(),
                continuity: cont,
                momentum,
            }
        })
        .collect();
    let continuity = per_test.iter().fold(T::zero(), |m, r| m.max(r.continuity));
    let momentum = per_test
        .iter()
        .flat_map(|r| r.momentum.iter())
        .fold(T::zero(), |m, &v| m.max(v));
    Ok(EulerPoissonReport {
        continuity,
        momentum,
        per_test,
    })
}

/// Largest over interior nodes of `Σ_k w_k ||v_k|^{p-2} v_k - ∇u(γ_k(s), s)|`,
/// with `∇u` by central differences of `u` at step `1e-4`.
pub fn optimality_condition_check<T: Real>(
    sigma: &EnsemblePath<T>,
    spec: &ProblemSpec<T>,
    u: impl Fn(&[T], T) -> Result<T> + Sync,
) -> Result<T> {
    let n = sigma.steps();
    if n < 2 {
        return Err(Error::InvalidInput(
            "optimality check needs at least 2 time steps".into(),
        ));
    }
    let p = spec.p();
    let h = T::lit(1e-4);
    let errs: Vec<T> = (1..n)
        .into_par_iter()
        .map(|i| {
            let s = sigma.time(i);
            let mut total = T::zero();
            for (path, &w) in sigma.paths().iter().zip(sigma.weights()) {
                let m = vecops::duality(&node_velocity(path, i), p);
                let x = path.node(i);
                let mut y = x.to_vec();
                let mut err2 = T::zero();
                for j in 0..x.len() {
                    y[j] = x[j] + h;
                    let up = u(&y, s)?;
                    y[j] = x[j] - h;
                    let um = u(&y, s)?;
                    y[j] = x[j];
                    let g = (up - um) / (h + h);
                    err2 = err2 + (m[j] - g) * (m[j] - g);
                }
                total = total + w * err2.sqrt();
            }
            Ok(total)
        })
        .collect::<Result<_>>()?;
    Ok(errs.into_iter().fold(T::zero(), T::max))
}

/// Largest over particles of `||v_k(0)|^{p-2} v_k(0) - ∇_k 𝒢 / w_k|`, with the
/// initial velocity from a second-order one-sided difference.
pub fn boundary_momentum_check<T: Real>(sigma: &EnsemblePath<T>, spec: &ProblemSpec<T>) -> Result<T> {
    let n = sigma.steps();
    if n < 2 {
        return Err(Error::InvalidInput("boundary check needs at least 2 time steps".into()));
    }
    let start = sigma.snapshot(0);
    let mut grad = spec.initial_functional().gradient(&start)?;
    let d = sigma.dim();
    let dt = sigma.dt();
    let mut worst = T::zero();
    for (k, path) in sigma.paths().iter().enumerate() {
        let w = sigma.weights()[k];
        if w <= T::zero() {
            continue;
        }
        let (a, b, c) = (path.node(0), path.node(1), path.node(2));
        let v: Vec<T> = (0..d)
            .map(|j| (T::lit(4.0) * (b[j] - a[j]) - (c[j] - a[j])) / (dt + dt))
            .collect();
        let m = vecops::duality(&v, spec.p());
        let gk = &mut grad[k * d..(k + 1) * d];
        gk.iter_mut().for_each(|g| *g = *g / w);
        worst = worst.max(vecops::dist(&m, gk));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::{classical_action, closed_form_u, flow_map};
    use crate::field::ScalarField;

    fn oscillator() -> ProblemSpec<f64> {
        ProblemSpec::<f64>::new(2.0, ScalarField::Zero, ScalarField::Quadratic { c: 0.5 }).unwrap()
    }

    #[test]
    fn free_motion_is_straight() {
        for p in [1.5, 2.0, 3.0] {
            let spec = ProblemSpec::<f64>::new(p, ScalarField::Zero, ScalarField::Zero).unwrap();
            let c = euler_lagrange_shoot(&[1.0, -1.0], &[0.5, 2.0], 1.0, &spec, 10).unwrap();
            for i in 0..=10 {
                let s = i as f64 / 10.0;
                let x = c.path.node(i);
                assert!((x[0] - (1.0 + 0.5 * s)).abs() < 1e-13);
                assert!((x[1] - (-1.0 + 2.0 * s)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn harmonic_oscillator() {
        let spec = oscillator();
        let c = euler_lagrange_shoot(&[1.0], &[0.0], 1.0, &spec, 10_000).unwrap();
        let e0 = 0.5;
        for i in (0..=10_000).step_by(100) {
            let s = i as f64 / 10_000.0;
            let x = c.path.node(i)[0];
            let v = c.momenta[i][0];
            assert!((x - s.cos()).abs() < 1e-8);
            assert!((0.5 * v * v + 0.5 * x * x - e0).abs() < 1e-8);
        }
    }

    #[test]
    fn momentum_through_zero_for_p3() {
        // Starting at rest at x = 1 under V = |x|^3/3 the momentum starts
        // at zero, where the inverse duality map is not smooth.
        let spec = ProblemSpec::<f64>::new(3.0, ScalarField::Zero, ScalarField::p_power(3.0)).unwrap();
        let c = euler_lagrange_shoot(&[1.0], &[0.0], 0.5, &spec, 500).unwrap();
        let fine = euler_lagrange_shoot(&[1.0], &[0.0], 0.5, &spec, 4000).unwrap();
        let diff = (c.path.end()[0] - fine.path.end()[0]).abs();
        assert!(diff < 1e-9, "{diff}");
        // Conserved energy |m|^q / q + V.
        let h = |i: usize| c.momenta[i][0].abs().powf(1.5) / 1.5 + c.path.node(i)[0].abs().powi(3) / 3.0;
        for i in 0..=500 {
            assert!((h(i) - h(0)).abs() < 1e-8);
        }
    }

    #[test]
    fn bvp_matches_flow_map() {
        let spec = ProblemSpec::<f64>::new(2.0, ScalarField::Zero, ScalarField::Quadratic { c: 0.5 }).unwrap();
        for (x, t) in [(0.5, 0.3), (2.0, 1.0)] {
            let c = solve_characteristic_bvp(&[x], t, &spec).unwrap();
            for i in (0..=DEFAULT_SHOOTING_STEPS).step_by(50) {
                let s = c.path.time(i);
                let want = flow_map(&[x], t, s, &spec).unwrap();
                assert!((c.path.node(i)[0] - want[0]).abs() < 1e-6);
            }
        }
        let trivial = ProblemSpec::<f64>::new(2.0, ScalarField::Zero, ScalarField::Zero).unwrap();
        let c = solve_characteristic_bvp(&[0.7, 0.1], 1.0, &trivial).unwrap();
        assert!(c.path.coords().chunks(2).all(|n| n == [0.7, 0.1]));
    }

    #[test]
    fn bvp_action_matches_optimizer() {
        let spec =
            ProblemSpec::<f64>::new(3.0, ScalarField::Linear { c: vec![0.4] }, ScalarField::p_power(3.0)).unwrap();
        let c = solve_characteristic_bvp(&[0.8], 0.5, &spec).unwrap();
        let opt = minimize_classical(&[0.8], 0.5, &spec, 400, None).unwrap();
        assert!((classical_action(&c.path, &spec) - opt.value).abs() < 1e-4);
    }

    #[test]
    fn bvp_initial_momentum_is_gradient() {
        let spec = ProblemSpec::<f64>::new(1.5, ScalarField::Linear { c: vec![0.3, -0.2] }, ScalarField::Zero).unwrap();
        let c = solve_characteristic_bvp(&[1.0, 1.0], 0.8, &spec).unwrap();
        assert!((c.momenta[0][0] - 0.3).abs() < 1e-12 && (c.momenta[0][1] + 0.2).abs() < 1e-12);
        assert!(vecops::dist(c.path.end(), &[1.0, 1.0]) < 1e-9);
    }

    fn ex33_flow(steps: usize) -> (EnsemblePath<f64>, ProblemSpec<f64>) {
        let spec = oscillator();
        let mu = DiscreteMeasure::uniform((0..10).map(|k| vec![-1.0 + 0.23 * k as f64]).collect()).unwrap();
        let t = 0.6;
        let sigma = EnsemblePath::from_flow(&mu, t, steps, |x, s| flow_map(x, t, s, &spec)).unwrap();
        (sigma, spec)
    }

    #[test]
    fn closed_form_flow_satisfies_euler_poisson() {
        let mut last = None;
        for n in [100, 200, 400] {
            let (sigma, spec) = ex33_flow(n);
            let tests = TestFunction::default_set(&sigma);
            let r = euler_poisson_residual(&sigma, &spec, &tests).unwrap();
            assert_eq!(r.per_test.len(), 4);
            let worst = r.continuity.max(r.momentum);
            if let Some(prev) = last {
                assert!(worst <= 0.6 * prev, "{worst} vs {prev}");
            }
            last = Some(worst);
        }
        assert!(last.unwrap() < 1e-2);
    }

    #[test]
    fn stationary_and_perturbed_residuals() {
        let spec = ProblemSpec::<f64>::new(2.0, ScalarField::Zero, ScalarField::Zero).unwrap();
        let mu = DiscreteMeasure::uniform(vec![vec![0.0, 1.0], vec![2.0, -1.0]]).unwrap();
        let still = EnsemblePath::stationary(&mu, 1.0, 20);
        let r = euler_poisson_residual(&still, &spec, &TestFunction::default_set(&still)).unwrap();
        assert_eq!((r.continuity, r.momentum), (0.0, 0.0));

        let mut worst = Vec::new();
        for n in [100, 400] {
            let (sigma, spec) = ex33_flow(n);
            let bent = EnsemblePath::from_flow(&sigma.snapshot(n), 0.6, n, |x, s| {
                Ok(vec![x[0] * (1.0 + 0.1 * (std::f64::consts::PI * s / 0.6).sin())])
            })
            .unwrap();
            let tests = TestFunction::default_set(&bent);
            let r = euler_poisson_residual(&bent, &spec, &tests).unwrap();
            worst.push(r.momentum);
        }
        assert!(worst[1] > 1e-3 && worst[1] > 0.5 * worst[0]);
    }

    #[test]
    fn optimality_on_closed_form() {
        let (sigma, spec) = ex33_flow(400);
        let err = optimality_condition_check(&sigma, &spec, |x, s| closed_form_u(x, s, &spec)).unwrap();
        assert!(err < 1e-6, "{err}");
        assert!(boundary_momentum_check(&sigma, &spec).unwrap() < 1e-6);
        let zero = ProblemSpec::<f64>::new(2.0, ScalarField::Zero, ScalarField::Zero).unwrap();
        let still = EnsemblePath::stationary(&sigma.snapshot(0), 1.0, 10);
        assert_eq!(optimality_condition_check(&still, &zero, |_, _| Ok(0.0)).unwrap(), 0.0);
        assert_eq!(boundary_momentum_check(&still, &zero).unwrap(), 0.0);
    }

    #[test]
    fn test_function_gradient() {
        let tf = TestFunction::<f64>::monomial_bump(vec![2, 1], vec![0.1, -0.2], vec![1.5, 2.0]);
        let x = [0.4, 0.3];
        let (_, g) = (tf.eval)(&x);
        for j in 0..2 {
            let mut a = x;
            let mut b = x;
            a[j] += 1e-6;
            b[j] -= 1e-6;
            let fd = ((tf.eval)(&a).0 - (tf.eval)(&b).0) / 2e-6;
            assert!((fd - g[j]).abs() < 1e-8);
        }
        assert_eq!((tf.eval)(&[3.0, 0.0]).0, 0.0);
    }
}
