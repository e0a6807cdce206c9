//! Registry of scalar fields on `R^d` used as initial costs `g` and
//! potentials `V`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::scalar::Real;
use crate::vecops;

type ValueFn<T> = dyn Fn(&[T]) -> T + Send + Sync;
type GradFn<T> = dyn Fn(&[T], &mut [T]) + Send + Sync;

/// A user-supplied smooth field with an analytic gradient.
#[derive(Clone)]
pub struct CustomField<T: Real> {
    pub name: String,
    value: Arc<ValueFn<T>>,
    gradient: Arc<GradFn<T>>,
    lipschitz: Option<T>,
    growth: Option<(T, T)>,
}

impl<T: Real> CustomField<T> {
    pub fn new<V, G>(name: impl Into<String>, value: V, gradient: G) -> Self
    where
        V: Fn(&[T]) -> T + Send + Sync + 'static,
        G: Fn(&[T], &mut [T]) + Send + Sync + 'static,
    {
        CustomField {
            name: name.into(),
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            lipschitz: None,
            growth: None,
        }
    }

    /// Declares a global Lipschitz constant.
    pub fn with_lipschitz(mut self, l: T) -> Self {
        self.lipschitz = Some(l);
        self
    }

    /// Declares growth constants `(a, b)` with `|f(x)| ≤ a|x|^p + b`.
    pub fn with_growth(mut self, a: T, b: T) -> Self {
        self.growth = Some((a, b));
        self
    }
}

impl<T: Real> fmt::Debug for CustomField<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomField").field("name", &self.name).finish()
    }
}

/// Scalar field registry.
///
/// JSON form: `{"kind": "zero"}`, `{"kind": "linear", "c": [..]}`,
/// `{"kind": "quadratic", "c": ..}` for `c|x|^2`,
/// `{"kind": "p_power", "exponent": ..}` for `|x|^e / e` (the exponent
/// defaults to the problem's `p`), `{"kind": "log_cosh", "scale": ..}` for
/// `scale · Σ_k log cosh(x_k)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "T: Real")]
pub enum ScalarField<T: Real> {
    Zero,
    Linear {
        c: Vec<T>,
    },
    Quadratic {
        c: T,
    },
    PPower {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        exponent: Option<T>,
    },
    LogCosh {
        scale: T,
    },
    #[serde(skip)]
    Custom(CustomField<T>),
}

fn log_cosh<T: Real>(x: T) -> T {
    let a = x.abs();
    a + (-(a + a)).exp().ln_1p() - T::LN_2()
}

impl<T: Real> ScalarField<T> {
    /// `|x|^p / p`.
    pub fn p_power(p: T) -> Self {
        ScalarField::PPower { exponent: Some(p) }
    }

    /// Fills in a missing `p_power` exponent with the problem exponent.
    pub fn resolve(&mut self, p: T) {
        if let ScalarField::PPower { exponent } = self {
            exponent.get_or_insert(p);
        }
    }

    fn exponent(e: &Option<T>) -> T {
        e.expect("p_power exponent resolved before evaluation")
    }

    pub fn is_zero(&self) -> bool {
        match self {
            ScalarField::Zero => true,
            ScalarField::Linear { c } => c.iter().all(|&v| v == T::zero()),
            ScalarField::Quadratic { c } => *c == T::zero(),
            ScalarField::LogCosh { scale } => *scale == T::zero(),
            _ => false,
        }
    }

    pub fn value(&self, x: &[T]) -> T {
        match self {
            ScalarField::Zero => T::zero(),
            ScalarField::Linear { c } => vecops::dot(c, x),
            ScalarField::Quadratic { c } => *c * vecops::dot(x, x),
            ScalarField::PPower { exponent } => {
                let e = Self::exponent(exponent);
                vecops::pow_abs(vecops::norm(x), e) / e
            }
            ScalarField::LogCosh { scale } => *scale * x.iter().map(|&v| log_cosh(v)).sum::<T>(),
            ScalarField::Custom(f) => (f.value)(x),
        }
    }

    pub fn gradient_into(&self, x: &[T], out: &mut [T]) {
        match self {
            ScalarField::Zero => out.iter_mut().for_each(|o| *o = T::zero()),
            ScalarField::Linear { c } => out.copy_from_slice(c),
            ScalarField::Quadratic { c } => {
                let two_c = *c + *c;
                for (o, &v) in out.iter_mut().zip(x) {
                    *o = two_c * v;
                }
            }
            ScalarField::PPower { exponent } => {
                vecops::duality_into(x, Self::exponent(exponent), out);
            }
            ScalarField::LogCosh { scale } => {
                for (o, &v) in out.iter_mut().zip(x) {
                    *o = *scale * v.tanh();
                }
            }
            ScalarField::Custom(f) => (f.gradient)(x, out),
        }
    }

    pub fn gradient(&self, x: &[T]) -> Vec<T> {
        let mut g = vec![T::zero(); x.len()];
        self.gradient_into(x, &mut g);
        g
    }

    /// Hessian written row-major into `out` (`d × d`). Singular points of
    /// `|x|^e` with `e < 2` are regularized by flooring `|x|`.
    pub fn hessian_into(&self, x: &[T], out: &mut [T]) {
        let d = x.len();
        out.iter_mut().for_each(|o| *o = T::zero());
        match self {
            ScalarField::Zero | ScalarField::Linear { .. } => {}
            ScalarField::Quadratic { c } => {
                for k in 0..d {
                    out[k * d + k] = *c + *c;
                }
            }
            ScalarField::PPower { exponent } => {
                let e = Self::exponent(exponent);
                let r = vecops::norm(x);
                let two = T::lit(2.0);
                if r == T::zero() && e >= two {
                    if e == two {
                        for k in 0..d {
                            out[k * d + k] = T::one();
                        }
                    }
                    return;
                }
                let rf = r.max(T::tol(1e-8));
                let s = rf.powf(e - two);
                for a in 0..d {
                    for b in 0..d {
                        let rad = if r > T::zero() {
                            x[a] * x[b] / (r * r)
                        } else {
                            T::zero()
                        };
                        let id = if a == b { T::one() } else { T::zero() };
                        out[a * d + b] = s * (id + (e - two) * rad);
                    }
                }
            }
            ScalarField::LogCosh { scale } => {
                for k in 0..d {
                    let c = x[k].cosh();
                    out[k * d + k] = *scale / (c * c);
                }
            }
            ScalarField::Custom(f) => {
                // Central differences of the analytic gradient.
                let mut xp = x.to_vec();
                let mut gp = vec![T::zero(); d];
                let mut gm = vec![T::zero(); d];
                for b in 0..d {
                    let h = T::lit(1e-5) * (T::one() + x[b].abs());
                    xp[b] = x[b] + h;
                    (f.gradient)(&xp, &mut gp);
                    xp[b] = x[b] - h;
                    (f.gradient)(&xp, &mut gm);
                    xp[b] = x[b];
                    for a in 0..d {
                        out[a * d + b] = (gp[a] - gm[a]) / (h + h);
                    }
                }
                for a in 0..d {
                    for b in 0..a {
                        let s = (out[a * d + b] + out[b * d + a]) / T::lit(2.0);
                        out[a * d + b] = s;
                        out[b * d + a] = s;
                    }
                }
            }
        }
    }

    /// Global Lipschitz constant in dimension `d`, `None` if unbounded.
    pub fn lipschitz(&self, d: usize) -> Option<T> {
        match self {
            ScalarField::Zero => Some(T::zero()),
            ScalarField::Linear { c } => Some(vecops::norm(c)),
            ScalarField::Quadratic { c } => (*c == T::zero()).then(T::zero),
            ScalarField::PPower { .. } => None,
            ScalarField::LogCosh { scale } => Some(scale.abs() * T::from_usize_lossy(d).sqrt()),
            ScalarField::Custom(f) => f.lipschitz,
        }
    }

    /// Constants `(a, b)` with `|f(x)| ≤ a|x|^p + b`, `None` if the field
    /// grows faster than `|x|^p`.
    pub fn growth(&self, p: T, d: usize) -> Option<(T, T)> {
        let two = T::lit(2.0);
        match self {
            ScalarField::Zero => Some((T::zero(), T::zero())),
            // |c·x| ≤ |c||x| ≤ |c|(|x|^p + 1) for p ≥ 1.
            ScalarField::Linear { c } => {
                let n = vecops::norm(c);
                Some((n, n))
            }
            ScalarField::Quadratic { c } => {
                let c = c.abs();
                if c == T::zero() {
                    Some((T::zero(), T::zero()))
                } else if p == two {
                    Some((c, T::zero()))
                } else if p > two {
                    // c|x|^2 ≤ c(|x|^p + 1)
                    Some((c, c))
                } else {
                    None
                }
            }
            ScalarField::PPower { exponent } => {
                let e = Self::exponent(exponent);
                if e == p {
                    Some((p.recip(), T::zero()))
                } else if e < p {
                    Some((e.recip(), e.recip()))
                } else {
                    None
                }
            }
            ScalarField::LogCosh { scale } => {
                let l = scale.abs() * T::from_usize_lossy(d).sqrt();
                Some((l, l))
            }
            ScalarField::Custom(f) => f.growth,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_gradient(f: &ScalarField<f64>, x: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        (0..x.len())
            .map(|k| {
                let mut a = x.to_vec();
                let mut b = x.to_vec();
                a[k] += h;
                b[k] -= h;
                (f.value(&a) - f.value(&b)) / (2.0 * h)
            })
            .collect()
    }

    fn registry() -> Vec<ScalarField<f64>> {
        vec![
            ScalarField::Zero,
            ScalarField::Linear { c: vec![0.5, -2.0] },
            ScalarField::Quadratic { c: 0.5 },
            ScalarField::p_power(3.0),
            ScalarField::p_power(1.5),
            ScalarField::LogCosh { scale: 0.7 },
        ]
    }

    #[test]
    fn gradients_match_finite_differences() {
        let x = [0.4, -1.3];
        for f in registry() {
            let g = f.gradient(&x);
            for (a, b) in g.iter().zip(fd_gradient(&f, &x)) {
                assert!((a - b).abs() < 1e-7, "{f:?}");
            }
        }
    }

    #[test]
    fn hessians_match_gradient_differences() {
        let x = [0.4, -1.3];
        let h = 1e-6;
        for f in registry() {
            let mut hess = [0.0; 4];
            f.hessian_into(&x, &mut hess);
            for b in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[b] += h;
                xm[b] -= h;
                let gp = f.gradient(&xp);
                let gm = f.gradient(&xm);
                for a in 0..2 {
                    let fd = (gp[a] - gm[a]) / (2.0 * h);
                    assert!((hess[a * 2 + b] - fd).abs() < 1e-6, "{f:?}");
                }
            }
        }
    }

    #[test]
    fn custom_field_uses_difference_hessian() {
        let f = ScalarField::Custom(CustomField::new(
            "cubic",
            |x: &[f64]| x[0].powi(3),
            |x: &[f64], g: &mut [f64]| g[0] = 3.0 * x[0] * x[0],
        ));
        let mut h = [0.0];
        f.hessian_into(&[2.0], &mut h);
        assert!((h[0] - 12.0).abs() < 1e-6);
    }

    #[test]
    fn lipschitz_constants() {
        assert_eq!(ScalarField::Linear { c: vec![3.0f64, 4.0] }.lipschitz(2), Some(5.0));
        assert_eq!(ScalarField::<f64>::Zero.lipschitz(3), Some(0.0));
        assert_eq!(ScalarField::Quadratic { c: 1.0f64 }.lipschitz(1), None);
        assert_eq!(ScalarField::LogCosh { scale: 1.0f64 }.lipschitz(4), Some(2.0));
    }

    #[test]
    fn json_forms() {
        let f: ScalarField<f64> = serde_json::from_str(r#"{"kind":"quadratic","c":0.5}"#).unwrap();
        assert!(matches!(f, ScalarField::Quadratic { c } if c == 0.5));
        let mut f: ScalarField<f64> = serde_json::from_str(r#"{"kind":"p_power"}"#).unwrap();
        f.resolve(3.0);
        assert!((f.value(&[2.0]) - 8.0 / 3.0).abs() < 1e-15);
        assert_eq!(
            serde_json::to_string(&ScalarField::Linear { c: vec![1.0f64] }).unwrap(),
            r#"{"kind":"linear","c":[1.0]}"#
        );
    }

    #[test]
    fn log_cosh_is_stable_for_large_arguments() {
        let f = ScalarField::LogCosh { scale: 1.0f64 };
        assert!((f.value(&[800.0]) - (800.0 - std::f64::consts::LN_2)).abs() < 1e-9);
    }
}
