//! Convex increasing cost functions `ℓ: [0, ∞) → R` of the speed.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

type ScalarFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// User-supplied `ℓ` with an optional derivative.
#[derive(Clone)]
pub struct CustomLagrangian<T> {
    pub name: String,
    pub value: ScalarFn<T>,
    pub derivative: Option<ScalarFn<T>>,
}

impl<T> fmt::Debug for CustomLagrangian<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomLagrangian").field("name", &self.name).finish()
    }
}

/// JSON form: `{"kind": "power", "p": .., "c": ..}` for `c w^p`,
/// `{"kind": "cosh_minus_one"}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "T: Real")]
pub enum Lagrangian<T: Real> {
    Power {
        p: T,
        c: T,
    },
    CoshMinusOne,
    #[serde(skip)]
    Custom(CustomLagrangian<T>),
}

impl<T: Real> Lagrangian<T> {
    /// `w^p / p`.
    pub fn kinetic(p: T) -> Self {
        Lagrangian::Power { p, c: p.recip() }
    }

    pub fn custom(name: impl Into<String>, value: impl Fn(T) -> T + Send + Sync + 'static) -> Self {
        Lagrangian::Custom(CustomLagrangian {
            name: name.into(),
            value: Arc::new(value),
            derivative: None,
        })
    }

    pub fn value(&self, w: T) -> T {
        match self {
            Lagrangian::Power { p, c } => *c * w.abs().powf(*p),
            Lagrangian::CoshMinusOne => w.cosh() - T::one(),
            Lagrangian::Custom(f) => (f.value)(w),
        }
    }

    pub fn derivative(&self, w: T) -> T {
        match self {
            Lagrangian::Power { p, c } => {
                if w == T::zero() {
                    T::zero()
                } else {
                    *c * *p * w.abs().powf(*p - T::one()) * w.signum()
                }
            }
            Lagrangian::CoshMinusOne => w.sinh(),
            Lagrangian::Custom(f) => match &f.derivative {
                Some(d) => d(w),
                None => {
                    let h = T::lit(1e-6) * (T::one() + w.abs());
                    ((f.value)(w + h) - (f.value)(w - h)) / (h + h)
                }
            },
        }
    }

    /// `ℓ*(z)` where known in closed form.
    pub fn conjugate_exact(&self, z: T) -> Option<T> {
        match self {
            Lagrangian::Power { p, c } => {
                // sup_w zw - c w^p on w ≥ 0.
                if z <= T::zero() {
                    return Some(T::zero());
                }
                let w = (z / (*c * *p)).powf((*p - T::one()).recip());
                Some(z * w - *c * w.powf(*p))
            }
            Lagrangian::CoshMinusOne => {
                if z <= T::zero() {
                    return Some(T::zero());
                }
                Some(z * z.asinh() - (T::one() + z * z).sqrt() + T::one())
            }
            Lagrangian::Custom(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conjugates() {
        let l = Lagrangian::<f64>::kinetic(3.0);
        let q = 1.5;
        for z in [0.5, 1.0, 2.0] {
            assert!((l.conjugate_exact(z).unwrap() - z.powf(q) / q).abs() < 1e-14);
        }
        let sq = Lagrangian::Power { p: 2.0f64, c: 1.0 };
        assert!((sq.conjugate_exact(3.0).unwrap() - 2.25).abs() < 1e-14);
        let ch = Lagrangian::<f64>::CoshMinusOne;
        let z = 1.3f64;
        let w = z.asinh();
        assert!((ch.conjugate_exact(z).unwrap() - (z * w - ch.value(w))).abs() < 1e-14);
        assert!((ch.derivative(0.4) - 0.4f64.sinh()).abs() < 1e-15);
        let c = Lagrangian::custom("square", |w: f64| w * w);
        assert!((c.derivative(1.5) - 3.0).abs() < 1e-8);
    }
}
