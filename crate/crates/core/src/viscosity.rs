//! Numerical probes of the viscosity inequalities for the Wasserstein HJE,
//! HJE residuals for closed-form data, and Legendre transforms.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::ClosedForm;
use crate::ensemble::{minimize_generalized, modified_hopf_lax};
use crate::error::{Error, Result};
use crate::functional::Functional;
use crate::lagrangian::Lagrangian;
use crate::measure::DiscreteMeasure;
use crate::optim::golden_section;
use crate::problem::ProblemSpec;
use crate::scalar::Real;
use crate::transport::{self, TransportPlan};
use crate::vecops;

/// Candidate `(ξ, a)`: a cotangent vector sampled on the support of `μ_0`
/// and a time slope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TestCotangent<T: Real> {
    pub xi: Vec<Vec<T>>,
    pub a: T,
}

impl<T: Real> TestCotangent<T> {
    pub fn new(mu0: &DiscreteMeasure<T>, xi: Vec<Vec<T>>, a: T) -> Result<Self> {
        if xi.len() != mu0.len() {
            return Err(Error::InvalidInput(format!(
                "cotangent has {} vectors for {} particles",
                xi.len(),
                mu0.len()
            )));
        }
        for v in &xi {
            if v.len() != mu0.dim() {
                return Err(Error::DimensionMismatch {
                    expected: mu0.dim(),
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput("cotangent is not finite".into()));
            }
        }
        if !a.is_finite() {
            return Err(Error::InvalidInput("slope is not finite".into()));
        }
        Ok(TestCotangent { xi, a })
    }

    /// `ξ = f(x)` on every support point.
    pub fn from_fn(mu0: &DiscreteMeasure<T>, f: impl Fn(&[T]) -> Vec<T>, a: T) -> Result<Self> {
        Self::new(mu0, mu0.points().map(f).collect(), a)
    }

    /// `‖ξ‖_{L^q(μ_0)}`.
    pub fn norm(&self, mu0: &DiscreteMeasure<T>, q: T) -> T {
        let s: T = self
            .xi
            .iter()
            .zip(mu0.weights())
            .map(|(v, &w)| w * vecops::pow_abs(vecops::norm(v), q))
            .sum();
        s.powf(q.recip())
    }

    /// `a + (1/q) ‖ξ‖^q_{L^q(μ_0)} + 𝒱(μ_0)`.
    pub fn hamiltonian(&self, mu0: &DiscreteMeasure<T>, spec: &ProblemSpec<T>) -> Result<T> {
        let q = spec.q();
        Ok(self.a + vecops::pow_abs(self.norm(mu0, q), q) / q + spec.potential_functional().value(mu0)?)
    }
}

/// Tangent direction `v = λ (r - id)` on the support of `μ_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TangentDirection<T: Real> {
    /// `r(x_k)` for each support point.
    pub r: Vec<Vec<T>>,
    pub lambda: T,
    /// Whether `(id × r)_# μ_0` is an optimal plan to `r_# μ_0`.
    pub certified_optimal: bool,
    pub label: String,
}

impl<T: Real> TangentDirection<T> {
    /// `v(x_k) = λ (r(x_k) - x_k)`.
    pub fn velocity(&self, mu0: &DiscreteMeasure<T>) -> Vec<Vec<T>> {
        self.r
            .iter()
            .zip(mu0.points())
            .map(|(r, x)| r.iter().zip(x).map(|(&a, &b)| self.lambda * (a - b)).collect())
            .collect()
    }
}

/// Builds `v = λ (r - id)` and certifies `(id × r)_# μ_0` against the exact
/// transport cost to `r_# μ_0` with tolerance `1e-9`. With `strict`, an
/// uncertified plan is an error.
pub fn make_tangent_direction<T: Real>(
    mu0: &DiscreteMeasure<T>,
    r: impl Fn(&[T]) -> Vec<T>,
    lambda: T,
    p: T,
    strict: bool,
) -> Result<TangentDirection<T>> {
    make_labeled_direction(mu0, r, lambda, p, strict, "custom")
}

fn make_labeled_direction<T: Real>(
    mu0: &DiscreteMeasure<T>,
    r: impl Fn(&[T]) -> Vec<T>,
    lambda: T,
    p: T,
    strict: bool,
    label: &str,
) -> Result<TangentDirection<T>> {
    direction_from_images(mu0, mu0.points().map(r).collect(), lambda, p, strict, label)
}

fn direction_from_images<T: Real>(
    mu0: &DiscreteMeasure<T>,
    images: Vec<Vec<T>>,
    lambda: T,
    p: T,
    strict: bool,
    label: &str,
) -> Result<TangentDirection<T>> {
    if !(lambda > T::zero()) {
        return Err(Error::InvalidInput(format!("lambda must be positive, got {lambda}")));
    }
    if images.len() != mu0.len() {
        return Err(Error::InvalidInput("one image per support point required".into()));
    }
    if let Some(bad) = images.iter().find(|y| y.len() != mu0.dim()) {
        return Err(Error::DimensionMismatch {
            expected: mu0.dim(),
            found: bad.len(),
        });
    }
    if images.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("direction image is not finite".into()));
    }
    let target = mu0.with_coords(images.concat());
    let plan = TransportPlan::identity_coupling(mu0.clone(), target.clone(), p)?;
    let certified = transport::is_optimal_plan(&plan, T::tol(1e-9));
    if strict && !certified {
        return Err(Error::NotOptimal);
    }
    Ok(TangentDirection {
        r: target.points().map(<[T]>::to_vec).collect(),
        lambda,
        certified_optimal: certified,
        label: label.to_string(),
    })
}

/// Certified directions built from translations along each axis, dilations
/// `x ↦ (1 ± ε) x`, and the duality direction `v = -|ξ|^{q-2} ξ` at two
/// scales. Uncertified candidates are dropped.
pub fn direction_family<T: Real>(
    mu0: &DiscreteMeasure<T>,
    cand: &TestCotangent<T>,
    p: T,
    lambda: T,
) -> Result<Vec<TangentDirection<T>>> {
    let d = mu0.dim();
    let q = vecops::conjugate(p);
    let eps = T::lit(0.5);
    let mut out = Vec::new();
    let mut push = |dir: TangentDirection<T>| {
        if dir.certified_optimal {
            out.push(dir);
        }
    };
    push(make_labeled_direction(
        mu0,
        <[T]>::to_vec,
        lambda,
        p,
        false,
        "identity",
    )?);
    for j in 0..d {
        for sign in [T::one(), -T::one()] {
            let shift = sign * eps / lambda;
            let label = format!("translate[{j}]{}", if sign > T::zero() { "+" } else { "-" });
            push(make_labeled_direction(
                mu0,
                |x| {
                    let mut y = x.to_vec();
                    y[j] = y[j] + shift;
                    y
                },
                lambda,
                p,
                false,
                &label,
            )?);
        }
    }
    for sign in [T::one(), -T::one()] {
        let f = T::one() + sign * eps / lambda;
        let label = if sign > T::zero() { "dilate+" } else { "dilate-" };
        push(make_labeled_direction(
            mu0,
            |x| x.iter().map(|&v| f * v).collect(),
            lambda,
            p,
            false,
            label,
        )?);
    }
    let sat: Vec<Vec<T>> = cand
        .xi
        .iter()
        .map(|x| vecops::duality(x, q).into_iter().map(|v| -v).collect())
        .collect();
    for scale in [T::one(), T::lit(0.5)] {
        let images = mu0
            .points()
            .zip(&sat)
            .map(|(x, v)| x.iter().zip(v).map(|(&a, &b)| a + scale * b / lambda).collect())
            .collect();
        push(direction_from_images(
            mu0,
            images,
            lambda,
            p,
            false,
            &format!("duality*{scale}"),
        )?);
    }
    Ok(out)
}

/// Subsolution evidence for one direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DirectionProbe<T: Real> {
    pub label: String,
    /// `a - ∫ξ·v - (1/p)∫|v|^p + 𝒱(μ_0)`; must be `≤ 0`.
    pub inequality: T,
    /// Same with `𝒱` averaged along `σ(s) = (id + (t_0 - s) v)_# μ_0` over
    /// `[t_0 - h, t_0]`.
    pub violation: T,
    /// `(U(μ_0, t_0) - U(σ(t_0 - h), t_0 - h)) / h` minus the averaged
    /// Lagrangian; nonpositive up to `o(1)` by dynamic programming.
    pub dp_gap: T,
    /// `(U(σ(t_0 - h), t_0 - h) - U(μ_0, t_0)) / h + a - ∫ξ·v`; nonpositive
    /// up to `o(1)` when `(ξ, a)` is a superdifferential element.
    pub superdifferential_gap: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SubsolutionReport<T: Real> {
    /// `a + (1/q)‖ξ‖^q + 𝒱(μ_0)`; must be `≤ 0`.
    pub hamiltonian: T,
    /// Largest `inequality` over the directions.
    pub sup_inequality: T,
    /// Largest `violation` over the directions.
    pub max_violation: T,
    pub h: T,
    pub directions: Vec<DirectionProbe<T>>,
}

/// Probes the subsolution inequality along each certified direction.
#[allow(clippy::too_many_arguments)]
pub fn subsolution_probe<T: Real>(
    u: impl Fn(&DiscreteMeasure<T>, T) -> Result<T> + Sync,
    mu0: &DiscreteMeasure<T>,
    t0: T,
    cand: &TestCotangent<T>,
    directions: &[TangentDirection<T>],
    h: T,
    spec: &ProblemSpec<T>,
) -> Result<SubsolutionReport<T>> {
    let p = spec.p();
    let pot = spec.potential_functional();
    let v0 = pot.value(mu0)?;
    let u0 = u(mu0, t0)?;
    let probes: Vec<DirectionProbe<T>> = directions
        .par_iter()
        .map(|dir| {
            if !dir.certified_optimal {
                return Err(Error::NotOptimal);
            }
            let window = t0.min(dir.lambda.recip()) / T::lit(2.0);
            if !(h > T::zero() && h < window) {
                return Err(Error::InvalidInput(format!(
                    "h = {h} outside the geodesic window (0, {window})"
                )));
            }
            let v = dir.velocity(mu0);
            let at = |tau: T| -> Result<DiscreteMeasure<T>> {
                let coords = mu0
                    .points()
                    .zip(&v)
                    .flat_map(|(x, vk)| x.iter().zip(vk).map(move |(&a, &b)| a + tau * b).collect::<Vec<_>>())
                    .collect();
                Ok(mu0.with_coords(coords))
            };
            let w = mu0.weights();
            let xi_v: T = (0..mu0.len()).map(|k| w[k] * vecops::dot(&cand.xi[k], &v[k])).sum();
            let kin: T = (0..mu0.len())
                .map(|k| w[k] * vecops::pow_abs(vecops::norm(&v[k]), p))
                .sum::<T>()
                / p;
            // Simpson's rule for the average of 𝒱 over [t_0 - h, t_0].
            let vbar = (pot.value(&at(h)?)? + T::lit(4.0) * pot.value(&at(h / T::lit(2.0))?)? + v0) / T::lit(6.0);
            let u_back = u(&at(h)?, t0 - h)?;
            Ok(DirectionProbe {
                label: dir.label.clone(),
                inequality: cand.a - xi_v - kin + v0,
                violation: cand.a - xi_v - kin + vbar,
                dp_gap: (u0 - u_back) / h - (kin - vbar),
                superdifferential_gap: (u_back - u0) / h + cand.a - xi_v,
            })
        })
        .collect::<Result<_>>()?;
    let sup_inequality = probes.iter().fold(T::neg_infinity(), |m, d| m.max(d.inequality));
    let max_violation = probes.iter().fold(T::neg_infinity(), |m, d| m.max(d.violation));
    Ok(SubsolutionReport {
        hamiltonian: cand.hamiltonian(mu0, spec)?,
        sup_inequality,
        max_violation,
        h,
        directions: probes,
    })
}

/// Supersolution evidence at one `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SupersolutionStep<T: Real> {
    /// Grid-aligned `h` actually used.
    pub h: T,
    /// `W_p(σ(t_0 - h), μ_0) / h`.
    pub ratio: T,
    /// `a - (1/h)[∫ξ·(y - x) dγ + ∫_{t_0-h}^{t_0} ((1/p)‖σ̇‖^p - 𝒱(σ)) ds]`;
    /// nonnegative up to `o(1)` for subdifferential elements.
    pub gap: T,
    /// `(1/h)[∫ξ·(y - x) dγ + ∫ ((1/p)‖σ̇‖^p - 𝒱(σ)) ds] + (1/q)‖ξ‖^q + 𝒱(μ_0)`,
    /// the lower bound the minimizer gives for `a + (1/q)‖ξ‖^q + 𝒱(μ_0)`.
    pub lower_bound: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SupersolutionReport<T: Real> {
    /// `a + (1/q)‖ξ‖^q + 𝒱(μ_0)`; must be `≥ 0`.
    pub hamiltonian: T,
    /// Value of the near-optimal ensemble minus `U(μ_0, t_0)`.
    pub slack: T,
    pub steps: Vec<SupersolutionStep<T>>,
    /// Linear extrapolation to `h → 0` from the two smallest `h`.
    pub extrapolated_gap: T,
    pub extrapolated_lower_bound: T,
    pub max_ratio: T,
}

/// Probes the supersolution inequality with the minimizing ensemble of
/// `U(μ_0, t_0)` on `steps` time steps.
pub fn supersolution_probe<T: Real>(
    u: impl Fn(&DiscreteMeasure<T>, T) -> Result<T>,
    mu0: &DiscreteMeasure<T>,
    t0: T,
    cand: &TestCotangent<T>,
    h_sequence: &[T],
    spec: &ProblemSpec<T>,
    steps: usize,
) -> Result<SupersolutionReport<T>> {
    if h_sequence.is_empty() {
        return Err(Error::InvalidInput("empty h sequence".into()));
    }
    let p = spec.p();
    let q = spec.q();
    let pot = spec.potential_functional();
    let best = minimize_generalized(mu0, t0, spec, steps)?;
    let sigma = &best.path;
    let slack = best.value - u(mu0, t0)?;
    let base = vecops::pow_abs(cand.norm(mu0, q), q) / q + pot.value(mu0)?;
    let n = sigma.steps();
    let dt = sigma.dt();
    let mut out = Vec::with_capacity(h_sequence.len());
    for &h in h_sequence {
        if !(h > T::zero() && h < t0) {
            return Err(Error::InvalidInput(format!("h = {h} outside (0, {t0})")));
        }
        let back = (h / dt).round().to_usize().unwrap_or(0).clamp(1, n);
        let i = n - back;
        let h_eff = dt * T::from_usize_lossy(back);
        let snap = sigma.snapshot(i);
        let (w, plan) = transport::wasserstein(&snap, mu0, p)?;
        // y ∈ σ(t_0 - h) is the source, x ∈ μ_0 the target.
        let pairing: T = plan
            .support()
            .map(|(a, b, m)| {
                let diff: Vec<T> = snap.point(a).iter().zip(mu0.point(b)).map(|(&y, &x)| y - x).collect();
                m * vecops::dot(&cand.xi[b], &diff)
            })
            .sum();
        let mut lagr = T::zero();
        for j in i..n {
            lagr = lagr + dt * (sigma.kinetic_speed(j, p).powf(p) / p - pot.value(&sigma.midpoint_snapshot(j))?);
        }
        let chain = (pairing + lagr) / h_eff;
        out.push(SupersolutionStep {
            h: h_eff,
            ratio: w / h_eff,
            gap: cand.a - chain,
            lower_bound: chain + base,
        });
    }
    let mut sorted = out.clone();
    sorted.sort_by(|a, b| a.h.partial_cmp(&b.h).unwrap_or(std::cmp::Ordering::Equal));
    let extrapolate = |f: &dyn Fn(&SupersolutionStep<T>) -> T| -> T {
        match sorted.as_slice() {
            [a, b, ..] if b.h > a.h => f(a) - a.h * (f(b) - f(a)) / (b.h - a.h),
            [a, ..] => f(a),
            [] => T::nan(),
        }
    };
    Ok(SupersolutionReport {
        hamiltonian: cand.hamiltonian(mu0, spec)?,
        slack,
        extrapolated_gap: extrapolate(&|s| s.gap),
        extrapolated_lower_bound: extrapolate(&|s| s.lower_bound),
        max_ratio: out.iter().fold(T::zero(), |m, s| m.max(s.ratio)),
        steps: out,
    })
}

/// `|∂_t U + (1/q) Σ_k w_k |∇u(x_k, t)|^q + 𝒱(μ)|` for `U(μ, t) = ∫u dμ`
/// with the explicit `u`.
pub fn hje_residual_wasserstein<T: Real>(spec: &ProblemSpec<T>, mu: &DiscreteMeasure<T>, t: T) -> Result<T> {
    let cf = ClosedForm::from_spec(spec, t)?;
    let q = spec.q();
    let mut ut = T::zero();
    let mut grad = T::zero();
    for (x, &w) in mu.points().zip(mu.weights()) {
        ut = ut + w * cf.u_t(x, t)?;
        grad = grad + w * vecops::pow_abs(vecops::norm(&cf.grad_u(x, t)?), q);
    }
    Ok((ut + grad / q + spec.potential_functional().value(mu)?).abs())
}

type ScalarFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// Legendre transform `ℓ*(z) = sup_{w ≥ 0} zw - ℓ(w)` of a function sampled
/// on a grid, refined by golden-section search around the best grid point.
#[derive(Clone)]
pub struct Legendre<T> {
    ell: ScalarFn<T>,
    grid: Vec<T>,
    values: Vec<T>,
}

impl<T> fmt::Debug for Legendre<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Legendre").field("grid_len", &self.grid.len()).finish()
    }
}

/// Legendre transform of `ell` on `grid` (increasing, nonnegative, at
/// least three points).
pub fn legendre<T: Real>(ell: impl Fn(T) -> T + Send + Sync + 'static, grid: Vec<T>) -> Result<Legendre<T>> {
    if grid.len() < 3 {
        return Err(Error::InvalidInput("Legendre grid needs at least 3 points".into()));
    }
    if grid[0] < T::zero() || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput(
            "Legendre grid must be increasing and nonnegative".into(),
        ));
    }
    let values: Vec<T> = grid.iter().map(|&w| ell(w)).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("ℓ is not finite on the grid".into()));
    }
    Ok(Legendre {
        ell: Arc::new(ell),
        grid,
        values,
    })
}

/// `n + 1` equally spaced points on `[0, w_max]`.
pub fn uniform_grid<T: Real>(w_max: T, n: usize) -> Vec<T> {
    (0..=n)
        .map(|i| w_max * T::from_usize_lossy(i) / T::from_usize_lossy(n))
        .collect()
}

impl<T: Real> Legendre<T> {
    pub fn from_lagrangian(ell: &Lagrangian<T>, grid: Vec<T>) -> Result<Self> {
        let ell = ell.clone();
        legendre(move |w| ell.value(w), grid)
    }

    pub fn grid(&self) -> &[T] {
        &self.grid
    }

    /// `ℓ*(z)` with the maximizing `w`.
    pub fn argmax(&self, z: T) -> Result<(T, T)> {
        let (best, _) = self
            .grid
            .iter()
            .zip(&self.values)
            .map(|(&w, &l)| z * w - l)
            .enumerate()
            .fold(
                (0, T::neg_infinity()),
                |(bi, bv), (i, v)| if v > bv { (i, v) } else { (bi, bv) },
            );
        let n = self.grid.len();
        if best == n - 1 {
            return Err(Error::NotSuperlinear { z: z.to_f64_lossy() });
        }
        let grid_val = z * self.grid[best] - self.values[best];
        let lo = self.grid[best.saturating_sub(1)];
        let hi = self.grid[best + 1];
        let f = |w: T| -(z * w - (self.ell)(w));
        let (w, fw) = golden_section(f, lo, hi, T::tol(1e-14) * (T::one() + hi));
        if -fw >= grid_val {
            Ok((-fw, w))
        } else {
            Ok((grid_val, self.grid[best]))
        }
    }

    pub fn eval(&self, z: T) -> Result<T> {
        Ok(self.argmax(z)?.0)
    }

    /// `ℓ**(w) = sup_z zw - ℓ*(z)` over the slopes `z` in `z_grid`, refined
    /// by golden-section search.
    pub fn biconjugate(&self, w: T, z_grid: &[T]) -> Result<T> {
        let vals: Vec<T> = z_grid
            .iter()
            .map(|&z| self.eval(z).map(|s| z * w - s))
            .collect::<Result<_>>()?;
        let best = (0..vals.len()).fold(0, |b, i| if vals[i] > vals[b] { i } else { b });
        let lo = z_grid[best.saturating_sub(1)];
        let hi = z_grid[(best + 1).min(z_grid.len() - 1)];
        let (_, fz) = golden_section(
            |z| -(z * w - self.eval(z).unwrap_or(T::infinity())),
            lo,
            hi,
            T::tol(1e-14) * (T::one() + hi.abs()),
        );
        Ok((-fz).max(vals[best]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ModifiedHjeReport<T: Real> {
    pub value: T,
    pub u_t: T,
    /// `‖∇_μ U‖_{L^q(μ)}`.
    pub grad_norm: T,
    /// `ℓ*(‖∇_μ U‖)`.
    pub hamiltonian: T,
    /// `|U_t + ℓ*(‖∇_μ U‖)|`.
    pub residual: T,
    /// Whether the steepest-ascent perturbation used for the directional
    /// check is an optimal plan.
    pub direction_certified: bool,
    /// Directional derivative along the normalized gradient; matches
    /// `grad_norm` for `p = 2`.
    pub directional: T,
}

/// Residual of `U_t + ℓ*(‖∇_μ U‖_{L^q(μ)}) = 0` for the modified Hopf-Lax
/// value, with derivatives by central finite differences.
pub fn modified_hje_residual<T: Real>(
    mu: &DiscreteMeasure<T>,
    t: T,
    g: &Functional<T>,
    ell: &Lagrangian<T>,
    p: T,
) -> Result<ModifiedHjeReport<T>> {
    if !(t > T::zero()) {
        return Err(Error::InvalidInput(format!("time must be positive, got {t}")));
    }
    let q = vecops::conjugate(p);
    let ht = T::lit(1e-4) * t.max(T::one()).min(t * T::lit(1e4));
    let hx = T::lit(1e-4);
    let uval = |m: &DiscreteMeasure<T>, s: T| modified_hopf_lax(m, s, g, ell, p).map(|r| r.value);
    let value = uval(mu, t)?;
    let (up, um) = rayon::join(|| uval(mu, t + ht), || uval(mu, t - ht));
    let u_t = (up? - um?) / (ht + ht);
    let d = mu.dim();
    let n = mu.coords().len();
    let partials: Vec<T> = (0..n)
        .into_par_iter()
        .map(|c| {
            let mut plus = mu.coords().to_vec();
            let mut minus = plus.clone();
            plus[c] = plus[c] + hx;
            minus[c] = minus[c] - hx;
            let w = mu.weight(c / d);
            Ok((uval(&mu.with_coords(plus), t)? - uval(&mu.with_coords(minus), t)?) / ((hx + hx) * w))
        })
        .collect::<Result<_>>()?;
    let xi: Vec<Vec<T>> = partials.chunks(d).map(<[T]>::to_vec).collect();
    let norm = {
        let s: T = xi
            .iter()
            .zip(mu.weights())
            .map(|(v, &w)| w * vecops::pow_abs(vecops::norm(v), q))
            .sum();
        s.powf(q.recip())
    };
    let hamiltonian = match ell.conjugate_exact(norm) {
        Some(v) => v,
        None => Legendre::from_lagrangian(ell, uniform_grid(T::lit(50.0), 5000))?.eval(norm)?,
    };
    // Directional derivative along v = |ξ|^{q-2} ξ / ‖ξ‖^{q-1}, which has unit
    // L^p(μ) norm and pairs with ξ to ‖ξ‖.
    let (direction_certified, directional) = if norm > T::zero() {
        let scale = norm.powf(q - T::one());
        let v: Vec<Vec<T>> = xi
            .iter()
            .map(|x| vecops::duality(x, q).into_iter().map(|c| c / scale).collect())
            .collect();
        let shifted = |s: T| -> Vec<T> {
            mu.points()
                .zip(&v)
                .flat_map(|(x, vk)| x.iter().zip(vk).map(move |(&a, &b)| a + s * b).collect::<Vec<_>>())
                .collect()
        };
        let target = mu.with_coords(shifted(hx));
        let plan = TransportPlan::identity_coupling(mu.clone(), target.clone(), p)?;
        let certified = transport::is_optimal_plan(&plan, T::tol(1e-9));
        let dd = (uval(&target, t)? - uval(&mu.with_coords(shifted(-hx)), t)?) / (hx + hx);
        (certified, dd)
    } else {
        (true, T::zero())
    };
    Ok(ModifiedHjeReport {
        value,
        u_t,
        grad_norm: norm,
        hamiltonian,
        residual: (u_t + hamiltonian).abs(),
        direction_certified,
        directional,
    })
}
