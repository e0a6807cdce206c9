//! Explicit value functions and flows for `g ≡ 0` with a quadratic potential
//! (`p = 2`) or `V(x) = |x|^p / p`.
//!
//! In both cases `u(x, t) = a(t)|x|^p / p` where `a` solves
//! `ȧ + (p - 1)|a|^q + k = 0`, `a(0) = 0` (`k = 1` for the power potential,
//! `k = 2c` for `c|x|^2`).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::problem::ProblemSpec;
use crate::scalar::Real;
use crate::vecops;

/// Threshold on `|a|` that marks numerical blowup.
pub const BLOWUP_THRESHOLD: f64 = 1e8;

/// `T_p = (π/q) / ((p-1)^{1/q} sin(π/q))`.
pub fn t_p<T: Real>(p: T) -> T {
    let q = vecops::conjugate(p);
    let pq = T::PI() / q;
    pq / ((p - T::one()).powf(q.recip()) * pq.sin())
}

fn a_rhs<T: Real>(p: T, q: T, a: T) -> T {
    -(p - T::one()) * a.abs().powf(q) - T::one()
}

/// Grid solution of `ȧ + (p-1)|a|^q + 1 = 0`, `a(0) = 0`.
#[derive(Debug, Clone, Serialize)]
#[serde(bound = "T: Real")]
pub struct AOdeSolution<T: Real> {
    pub p: T,
    pub step: T,
    /// `a(i · step)`, up to and including the first node past blowup.
    pub values: Vec<T>,
    /// First grid time where `|a|` exceeds [`BLOWUP_THRESHOLD`].
    pub t_p_estimate: Option<T>,
    /// `∫_0^{i·step} |a|^{1/(p-1)}` at every resolved node.
    #[serde(skip)]
    speed_prefix: Vec<T>,
}

/// Classical fourth-order Runge-Kutta on `[0, t_max]` with `steps` steps,
/// stopped at the first node with `|a| > 1e8`.
pub fn solve_a_ode<T: Real>(p: T, t_max: T, steps: usize) -> AOdeSolution<T> {
    let steps = steps.max(1);
    let q = vecops::conjugate(p);
    let h = t_max / T::from_usize_lossy(steps);
    let two = T::lit(2.0);
    let six = T::lit(6.0);
    let threshold = T::lit(BLOWUP_THRESHOLD);
    let mut values = Vec::with_capacity(steps + 1);
    let mut a = T::zero();
    values.push(a);
    let mut t_p_estimate = None;
    for i in 0..steps {
        let k1 = a_rhs(p, q, a);
        let k2 = a_rhs(p, q, a + h / two * k1);
        let k3 = a_rhs(p, q, a + h / two * k2);
        let k4 = a_rhs(p, q, a + h * k3);
        a = a + h / six * (k1 + two * k2 + two * k3 + k4);
        values.push(a);
        if !(a.abs() <= threshold) {
            t_p_estimate = Some(h * T::from_usize_lossy(i + 1));
            break;
        }
    }
    let mut sol = AOdeSolution {
        p,
        step: h,
        values,
        t_p_estimate,
        speed_prefix: Vec::new(),
    };
    let cells = sol.resolved_cells();
    let mut acc = T::zero();
    sol.speed_prefix.reserve(cells + 1);
    sol.speed_prefix.push(acc);
    for i in 0..cells {
        acc = acc + sol.speed_cell(i, T::zero(), T::one());
        sol.speed_prefix.push(acc);
    }
    sol
}

impl<T: Real> AOdeSolution<T> {
    /// Last time at which the solution is resolved (before blowup).
    pub fn valid_until(&self) -> T {
        let last = if self.t_p_estimate.is_some() {
            self.values.len() - 2
        } else {
            self.values.len() - 1
        };
        self.step * T::from_usize_lossy(last)
    }

    fn locate(&self, t: T) -> Result<(usize, T)> {
        let end = self.valid_until();
        if !(t >= T::zero()) || t > end * (T::one() + T::epsilon()) {
            return Err(Error::BeyondBlowup {
                t: t.to_f64_lossy(),
                blowup: self.t_p_estimate.unwrap_or(end).to_f64_lossy(),
            });
        }
        let x = t / self.step;
        let last = ((end / self.step).round().to_usize().unwrap_or(0)).max(1);
        let i = x.floor().to_usize().unwrap_or(0).min(last - 1);
        Ok((i, x - T::from_usize_lossy(i)))
    }

    /// `a(t)` by cubic Hermite interpolation with `ȧ` from the equation.
    pub fn a(&self, t: T) -> Result<T> {
        let (i, s) = self.locate(t)?;
        Ok(self.hermite(i, s))
    }

    /// `ȧ(t) = -(p-1)|a|^q - 1`.
    pub fn a_dot(&self, t: T) -> Result<T> {
        let a = self.a(t)?;
        Ok(a_rhs(self.p, vecops::conjugate(self.p), a))
    }

    fn hermite(&self, i: usize, s: T) -> T {
        let q = vecops::conjugate(self.p);
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (a_rhs(self.p, q, y0) * self.step, a_rhs(self.p, q, y1) * self.step);
        let (two, three) = (T::lit(2.0), T::lit(3.0));
        let s2 = s * s;
        let s3 = s2 * s;
        (two * s3 - three * s2 + T::one()) * y0
            + (s3 - two * s2 + s) * m0
            + (-two * s3 + three * s2) * y1
            + (s3 - s2) * m1
    }

    fn resolved_cells(&self) -> usize {
        if self.t_p_estimate.is_some() {
            self.values.len().saturating_sub(2)
        } else {
            self.values.len() - 1
        }
    }

    /// Three-point Gauss quadrature of `|a|^{1/(p-1)}` over the fraction
    /// `[lo, hi]` of cell `i`.
    fn speed_cell(&self, i: usize, lo: T, hi: T) -> T {
        let e = (self.p - T::one()).recip();
        let f = |u: T| self.hermite(i, u).abs().powf(e);
        let r = T::lit(0.6).sqrt();
        let c = (lo + hi) / T::lit(2.0);
        let w = (hi - lo) / T::lit(2.0);
        let five = T::lit(5.0 / 9.0);
        let eight = T::lit(8.0 / 9.0);
        w * self.step * (five * f(c - r * w) + eight * f(c) + five * f(c + r * w))
    }

    /// `∫_s^t |a(τ)|^{1/(p-1)} dτ` of the interpolant.
    pub fn speed_integral(&self, s: T, t: T) -> Result<T> {
        if s > t {
            return Ok(-self.speed_integral(t, s)?);
        }
        let (i0, f0) = self.locate(s)?;
        let (i1, f1) = self.locate(t)?;
        if i0 == i1 {
            return Ok(self.speed_cell(i0, f0, f1));
        }
        let head = self.speed_cell(i0, f0, T::one());
        let tail = self.speed_cell(i1, T::zero(), f1);
        Ok(head + (self.speed_prefix[i1] - self.speed_prefix[i0 + 1]) + tail)
    }
}

/// An explicitly solvable problem.
#[derive(Debug, Clone)]
pub enum ClosedForm<T: Real> {
    /// `V = c|x|^2`, `p = 2`: `a(t) = -ω tan(ωt)`, `ω = √(2c)`.
    Quadratic { omega: T },
    /// `V = |x|^p / p`, `a` from the ODE.
    PPower { p: T, ode: AOdeSolution<T> },
}

/// Default RK4 step for the `a` equation.
const ODE_STEP: f64 = 1e-5;

impl<T: Real> ClosedForm<T> {
    /// Recognizes a closed-form problem; the ODE is resolved on `[0, t_max]`.
    pub fn from_spec(spec: &ProblemSpec<T>, t_max: T) -> Result<Self> {
        if !spec.is_integral() || !spec.g().is_zero() {
            return Err(Error::NotClosedForm(
                "closed forms need g ≡ 0 and an integral potential".into(),
            ));
        }
        let p = spec.p();
        let two = T::lit(2.0);
        match spec.v() {
            ScalarField::Quadratic { c } if p == two && *c > T::zero() => Ok(ClosedForm::Quadratic {
                omega: (two * *c).sqrt(),
            }),
            ScalarField::PPower { exponent: Some(e) } if *e == p => {
                let blow = t_p(p);
                let t_max = t_max.max(T::lit(1e-3));
                if t_max >= blow {
                    return Err(Error::BeyondBlowup {
                        t: t_max.to_f64_lossy(),
                        blowup: blow.to_f64_lossy(),
                    });
                }
                let steps = (t_max / T::lit(ODE_STEP)).ceil().to_usize().unwrap_or(1).max(16);
                Ok(ClosedForm::PPower {
                    p,
                    ode: solve_a_ode(p, t_max, steps),
                })
            }
            _ => Err(Error::NotClosedForm(
                "potential must be c|x|^2 with p = 2 or |x|^p/p".into(),
            )),
        }
    }

    pub fn p(&self) -> T {
        match self {
            ClosedForm::Quadratic { .. } => T::lit(2.0),
            ClosedForm::PPower { p, .. } => *p,
        }
    }

    pub fn blowup(&self) -> T {
        match self {
            ClosedForm::Quadratic { omega } => T::FRAC_PI_2() / *omega,
            ClosedForm::PPower { p, .. } => t_p(*p),
        }
    }

    fn check(&self, t: T) -> Result<()> {
        let b = self.blowup();
        if !(t >= T::zero()) || t >= b {
            return Err(Error::BeyondBlowup {
                t: t.to_f64_lossy(),
                blowup: b.to_f64_lossy(),
            });
        }
        Ok(())
    }

    /// Coefficient `a(t)`.
    pub fn a(&self, t: T) -> Result<T> {
        self.check(t)?;
        match self {
            ClosedForm::Quadratic { omega } => Ok(-*omega * (*omega * t).tan()),
            ClosedForm::PPower { ode, .. } => ode.a(t),
        }
    }

    /// `ȧ(t)`.
    pub fn a_dot(&self, t: T) -> Result<T> {
        self.check(t)?;
        match self {
            ClosedForm::Quadratic { omega } => {
                let c = (*omega * t).cos();
                Ok(-*omega * *omega / (c * c))
            }
            ClosedForm::PPower { ode, .. } => ode.a_dot(t),
        }
    }

    /// `u(x, t) = a(t)|x|^p / p`.
    pub fn u(&self, x: &[T], t: T) -> Result<T> {
        let p = self.p();
        Ok(self.a(t)? * vecops::pow_abs(vecops::norm(x), p) / p)
    }

    /// `∂_t u(x, t)`.
    pub fn u_t(&self, x: &[T], t: T) -> Result<T> {
        let p = self.p();
        Ok(self.a_dot(t)? * vecops::pow_abs(vecops::norm(x), p) / p)
    }

    /// `∇u(x, t) = a(t)|x|^{p-2} x`.
    pub fn grad_u(&self, x: &[T], t: T) -> Result<Vec<T>> {
        let a = self.a(t)?;
        let mut g = vecops::duality(x, self.p());
        g.iter_mut().for_each(|v| *v = *v * a);
        Ok(g)
    }

    /// `Ψ(x, s)`: position at time `s` of the minimizer ending at `x` at `t`.
    pub fn flow_map(&self, x: &[T], t: T, s: T) -> Result<Vec<T>> {
        self.check(t)?;
        if !(s >= T::zero() && s <= t) {
            return Err(Error::InvalidInput(format!("flow time {s} outside [0, {t}]")));
        }
        let factor = match self {
            ClosedForm::Quadratic { omega } => (*omega * s).cos() / (*omega * t).cos(),
            ClosedForm::PPower { ode, .. } => ode.speed_integral(s, t)?.exp(),
        };
        Ok(x.iter().map(|&v| v * factor).collect())
    }
}

/// `u(x, t)` for a closed-form problem.
pub fn closed_form_u<T: Real>(x: &[T], t: T, spec: &ProblemSpec<T>) -> Result<T> {
    ClosedForm::from_spec(spec, t)?.u(x, t)
}

/// `Ψ(x, s)` for a closed-form problem.
pub fn flow_map<T: Real>(x: &[T], t: T, s: T, spec: &ProblemSpec<T>) -> Result<Vec<T>> {
    ClosedForm::from_spec(spec, t)?.flow_map(x, t, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4};

    fn ex33() -> ProblemSpec<f64> {
        ProblemSpec::new(2.0, ScalarField::Zero, ScalarField::Quadratic { c: 0.5 }).unwrap()
    }

    fn ex34(p: f64) -> ProblemSpec<f64> {
        ProblemSpec::new(p, ScalarField::Zero, ScalarField::PPower { exponent: None }).unwrap()
    }

    #[test]
    fn t_p_values() {
        assert!((t_p(2.0f64) - FRAC_PI_2).abs() < 1e-15);
        for p in [1.2f64, 3.0, 10.0, 50.0] {
            let t = t_p(p);
            assert!(t.is_finite() && t > 0.0);
        }
    }

    #[test]
    fn riccati_solution() {
        let sol = solve_a_ode(2.0, 1.0, 100_000);
        assert_eq!(sol.values[0], 0.0);
        assert!((sol.values.last().unwrap() + 1.0f64.tan()).abs() < 1e-8);
        assert!(sol.values.windows(2).all(|w| w[1] < w[0]));
        let sol = solve_a_ode(2.0, 2.0, 200_000);
        assert!((sol.t_p_estimate.unwrap() - FRAC_PI_2).abs() < 1e-3);
    }

    #[test]
    fn blowup_matches_formula_for_p3() {
        let sol = solve_a_ode(3.0f64, 2.5, 250_000);
        assert!((sol.t_p_estimate.unwrap() - t_p(3.0)).abs() < 1e-3);
    }

    #[test]
    fn hermite_interpolation_is_accurate() {
        let sol = solve_a_ode(2.0f64, 1.2, 1200);
        for t in [0.0f64, 0.1234, 0.5, 0.77777, 1.2] {
            assert!((sol.a(t).unwrap() + t.tan()).abs() < 1e-9, "{t}");
        }
        let i = sol.speed_integral(0.2, 1.1).unwrap();
        assert!((i - (0.2f64.cos().ln() - 1.1f64.cos().ln())).abs() < 1e-9);
    }

    #[test]
    fn example_33_values() {
        let s = ex33();
        assert!((closed_form_u(&[1.0], FRAC_PI_4, &s).unwrap() + 0.5).abs() < 1e-15);
        assert_eq!(closed_form_u(&[0.0], 0.3, &s).unwrap(), 0.0);
        assert!((flow_map(&[1.0], FRAC_PI_3, 0.0, &s).unwrap()[0] - 2.0).abs() < 1e-14);
        assert_eq!(flow_map(&[0.7], 0.5, 0.5, &s).unwrap(), vec![0.7]);
        assert!(matches!(
            closed_form_u(&[1.0], 1.6, &s),
            Err(Error::BeyondBlowup { .. })
        ));
    }

    #[test]
    fn power_case_through_ode_matches_tangent() {
        let s = ex34(2.0);
        let cf = ClosedForm::from_spec(&s, 1.0).unwrap();
        assert!((cf.a(1.0).unwrap() + 1.0f64.tan()).abs() < 1e-8);
        let y = cf.flow_map(&[1.0], 1.0, 0.25).unwrap()[0];
        assert!((y - 0.25f64.cos() / 1.0f64.cos()).abs() < 1e-8);
    }

    #[test]
    fn hje_residual_vanishes() {
        for p in [1.5, 2.0, 3.0] {
            let cf = ClosedForm::from_spec(&ex34(p), 0.5).unwrap();
            let q = vecops::conjugate(p);
            for &t in &[0.1, 0.3, 0.5] {
                for x in [[0.4, -1.0], [1.5, 0.2]] {
                    let g = cf.grad_u(&x, t).unwrap();
                    let v = vecops::pow_abs(vecops::norm(&x), p) / p;
                    let r = cf.u_t(&x, t).unwrap() + vecops::pow_abs(vecops::norm(&g), q) / q + v;
                    assert!(r.abs() < 1e-8, "p={p} t={t}: {r}");
                }
            }
        }
    }

    #[test]
    fn not_closed_form() {
        let s = ProblemSpec::new(2.0, ScalarField::Linear { c: vec![1.0] }, ScalarField::Zero).unwrap();
        assert!(matches!(ClosedForm::from_spec(&s, 0.5), Err(Error::NotClosedForm(_))));
    }
}
