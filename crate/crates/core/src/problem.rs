//! Problem data: exponent, initial cost, potential and growth constants.

use serde::{Deserialize, Serialize};

use crate::classical::closed_form::t_p;
use crate::ensemble::horizon;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::functional::Functional;
use crate::measure::DiscreteMeasure;
use crate::scalar::Real;
use crate::vecops;

/// Which potential functional the ensemble problems use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    #[default]
    Integral,
    WassersteinPower,
    Interaction,
}

/// A fully validated problem.
///
/// The initial cost is always `𝒢(μ) = ∫ g dμ`. The potential is
/// `𝒱(μ) = ∫ V dμ`, plus `α W_p(μ, ϱ)^p + β` for
/// [`PotentialKind::WassersteinPower`] or `coupling · ∬ W(x - y) dμ dμ` for
/// [`PotentialKind::Interaction`].
#[derive(Debug, Clone)]
pub struct ProblemSpec<T: Real> {
    p: T,
    q: T,
    g: ScalarField<T>,
    v: ScalarField<T>,
    kind: PotentialKind,
    alpha: T,
    beta: T,
    lipschitz: Option<T>,
    growth: Option<(T, T)>,
    rho: Option<DiscreteMeasure<T>>,
    kernel: Option<ScalarField<T>>,
    coupling: T,
    initial: Functional<T>,
    potential: Functional<T>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real", deny_unknown_fields)]
struct ProblemRepr<T: Real> {
    p: T,
    #[serde(default = "zero_field")]
    g: ScalarField<T>,
    #[serde(rename = "V", default = "zero_field")]
    v: ScalarField<T>,
    #[serde(default)]
    functional: PotentialKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rho: Option<DiscreteMeasure<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kernel: Option<ScalarField<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coupling: Option<T>,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    lipschitz: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    a: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b: Option<T>,
}

fn zero_field<T: Real>() -> ScalarField<T> {
    ScalarField::Zero
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

/// Builder for [`ProblemSpec`].
#[derive(Debug, Clone)]
pub struct ProblemBuilder<T: Real> {
    repr: ProblemRepr<T>,
}

impl<T: Real> ProblemBuilder<T> {
    pub fn g(mut self, g: ScalarField<T>) -> Self {
        self.repr.g = g;
        self
    }

    pub fn potential(mut self, v: ScalarField<T>) -> Self {
        self.repr.v = v;
        self
    }

    pub fn alpha(mut self, alpha: T) -> Self {
        self.repr.alpha = Some(alpha);
        self
    }

    pub fn beta(mut self, beta: T) -> Self {
        self.repr.beta = Some(beta);
        self
    }

    /// Declared Lipschitz constant of `g`.
    pub fn lipschitz(mut self, l: T) -> Self {
        self.repr.lipschitz = Some(l);
        self
    }

    /// Declared growth constants `|V(x)| ≤ a|x|^p + b`.
    pub fn growth(mut self, a: T, b: T) -> Self {
        self.repr.a = Some(a);
        self.repr.b = Some(b);
        self
    }

    /// `𝒱 += α W_p(μ, ϱ)^p + β`.
    pub fn wasserstein_power(mut self, alpha: T, beta: T, rho: DiscreteMeasure<T>) -> Self {
        self.repr.functional = PotentialKind::WassersteinPower;
        self.repr.alpha = Some(alpha);
        self.repr.beta = Some(beta);
        self.repr.rho = Some(rho);
        self
    }

    /// `𝒱 += coupling · ∬ W(x - y)`; `alpha` bounds the resulting potential.
    pub fn interaction(mut self, kernel: ScalarField<T>, coupling: T, alpha: T) -> Self {
        self.repr.functional = PotentialKind::Interaction;
        self.repr.kernel = Some(kernel);
        self.repr.coupling = Some(coupling);
        self.repr.alpha = Some(alpha);
        self
    }

    pub fn build(self) -> Result<ProblemSpec<T>> {
        ProblemSpec::try_from(self.repr)
    }
}

impl<T: Real> TryFrom<ProblemRepr<T>> for ProblemSpec<T> {
    type Error = Error;

    fn try_from(r: ProblemRepr<T>) -> Result<Self> {
        let p = r.p;
        if !(p > T::one()) || !p.is_finite() {
            return Err(invalid(format!("p must lie in (1, inf), got {p}")));
        }
        let q = vecops::conjugate(p);
        let mut g = r.g;
        let mut v = r.v;
        g.resolve(p);
        v.resolve(p);
        check_field(&g, "g")?;
        check_field(&v, "V")?;
        let dim = field_dim(&g).or(field_dim(&v)).unwrap_or(1);

        let analytic_l = g.lipschitz(dim);
        let lipschitz = match (r.lipschitz, analytic_l) {
            (Some(l), _) if !(l >= T::zero()) => return Err(invalid("L must be nonnegative")),
            (Some(l), Some(exact)) => {
                if (l - exact).abs() > T::tol(1e-9) * (T::one() + exact) {
                    return Err(invalid(format!(
                        "declared L = {l} but g has Lipschitz constant {exact}"
                    )));
                }
                Some(exact)
            }
            (Some(l), None) => Some(l),
            (None, exact) => exact,
        };

        let growth = match (r.a, r.b) {
            (Some(a), Some(b)) => {
                if !(a >= T::zero() && b >= T::zero()) {
                    return Err(invalid("growth constants a, b must be nonnegative"));
                }
                if let Some((ea, _)) = v.growth(p, dim) {
                    if a < ea - T::tol(1e-12) {
                        return Err(invalid(format!("declared a = {a} below the growth rate {ea} of V")));
                    }
                }
                Some((a, b))
            }
            (None, None) => v.growth(p, dim),
            _ => return Err(invalid("growth constants a and b must be given together")),
        };
        let Some((a, b)) = growth else {
            return Err(invalid("V grows faster than |x|^p; declare growth constants a, b"));
        };

        let mut parts = Vec::new();
        if !v.is_zero() || r.functional == PotentialKind::Integral {
            parts.push(Functional::Integral(v.clone()));
        }
        let (alpha, beta, coupling);
        match r.functional {
            PotentialKind::Integral => {
                if r.rho.is_some() || r.kernel.is_some() || r.coupling.is_some() {
                    return Err(invalid("rho/kernel/coupling given for an integral functional"));
                }
                alpha = r.alpha.unwrap_or(a);
                beta = r.beta.unwrap_or(b);
                if alpha < a - T::tol(1e-12) {
                    return Err(invalid(format!(
                        "alpha = {alpha} is below the growth constant a = {a} of V"
                    )));
                }
                coupling = T::zero();
            }
            PotentialKind::WassersteinPower => {
                let rho = r
                    .rho
                    .clone()
                    .ok_or_else(|| invalid("wasserstein_power needs a reference measure rho"))?;
                alpha = r.alpha.ok_or_else(|| invalid("wasserstein_power needs alpha"))?;
                beta = r.beta.unwrap_or(T::zero());
                parts.push(Functional::WassersteinPower {
                    alpha,
                    beta,
                    p,
                    reference: rho,
                });
                coupling = T::zero();
            }
            PotentialKind::Interaction => {
                let mut kernel = r.kernel.clone().ok_or_else(|| invalid("interaction needs a kernel"))?;
                kernel.resolve(p);
                check_field(&kernel, "kernel")?;
                coupling = r.coupling.unwrap_or(T::one());
                alpha = r.alpha.ok_or_else(|| invalid("interaction needs alpha"))?;
                beta = r.beta.unwrap_or(T::zero());
                parts.push(Functional::Interaction { kernel, coupling });
            }
        }
        if !alpha.is_finite() || !beta.is_finite() || !coupling.is_finite() {
            return Err(invalid("alpha, beta and coupling must be finite"));
        }
        let potential = if parts.len() == 1 {
            parts.pop().expect("one part")
        } else {
            Functional::Sum(parts)
        };
        let mut kernel = r.kernel;
        if let Some(k) = kernel.as_mut() {
            k.resolve(p);
        }
        Ok(ProblemSpec {
            p,
            q,
            initial: Functional::Integral(g.clone()),
            g,
            v,
            kind: r.functional,
            alpha,
            beta,
            lipschitz,
            growth: Some((a, b)),
            rho: r.rho,
            kernel,
            coupling,
            potential,
        })
    }
}

fn field_dim<T: Real>(f: &ScalarField<T>) -> Option<usize> {
    match f {
        ScalarField::Linear { c } => Some(c.len()),
        _ => None,
    }
}

fn check_field<T: Real>(f: &ScalarField<T>, name: &str) -> Result<()> {
    let ok = match f {
        ScalarField::Zero | ScalarField::Custom(_) => true,
        ScalarField::Linear { c } => !c.is_empty() && c.iter().all(|v| v.is_finite()),
        ScalarField::Quadratic { c } => c.is_finite(),
        ScalarField::PPower { exponent } => exponent.is_some_and(|e| e > T::one() && e.is_finite()),
        ScalarField::LogCosh { scale } => scale.is_finite(),
    };
    if ok {
        Ok(())
    } else {
        Err(invalid(format!("invalid parameters for {name}")))
    }
}

impl<T: Real> ProblemSpec<T> {
    /// Starts a problem with exponent `p`, `g ≡ 0`, `V ≡ 0` and an integral
    /// potential.
    pub fn builder(p: T) -> ProblemBuilder<T> {
        ProblemBuilder {
            repr: ProblemRepr {
                p,
                g: ScalarField::Zero,
                v: ScalarField::Zero,
                functional: PotentialKind::Integral,
                alpha: None,
                beta: None,
                rho: None,
                kernel: None,
                coupling: None,
                lipschitz: None,
                a: None,
                b: None,
            },
        }
    }

    /// Integral problem with initial cost `g` and potential `V`.
    pub fn new(p: T, g: ScalarField<T>, v: ScalarField<T>) -> Result<Self> {
        Self::builder(p).g(g).potential(v).build()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let repr: ProblemRepr<T> = serde_json::from_str(s).map_err(|e| invalid(format!("problem spec: {e}")))?;
        Self::try_from(repr)
    }

    pub fn to_json(&self) -> Result<String> {
        if matches!(self.g, ScalarField::Custom(_)) || matches!(self.v, ScalarField::Custom(_)) {
            return Err(Error::InvalidInput("custom fields are not serializable".into()));
        }
        let repr = ProblemRepr {
            p: self.p,
            g: self.g.clone(),
            v: self.v.clone(),
            functional: self.kind,
            alpha: Some(self.alpha),
            beta: Some(self.beta),
            rho: self.rho.clone(),
            kernel: self.kernel.clone(),
            coupling: (self.kind == PotentialKind::Interaction).then_some(self.coupling),
            lipschitz: self.lipschitz,
            a: self.growth.map(|g| g.0),
            b: self.growth.map(|g| g.1),
        };
        serde_json::to_string_pretty(&repr).map_err(|e| Error::InvalidInput(e.to_string()))
    }

    pub fn p(&self) -> T {
        self.p
    }

    pub fn q(&self) -> T {
        self.q
    }

    pub fn g(&self) -> &ScalarField<T> {
        &self.g
    }

    pub fn v(&self) -> &ScalarField<T> {
        &self.v
    }

    pub fn kind(&self) -> PotentialKind {
        self.kind
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    /// Lipschitz constant of `g` (`None` when unbounded).
    pub fn lipschitz(&self) -> Option<T> {
        self.lipschitz
    }

    /// `(a, b)` with `|V(x)| ≤ a|x|^p + b`.
    pub fn growth(&self) -> (T, T) {
        self.growth.expect("validated")
    }

    pub fn rho(&self) -> Option<&DiscreteMeasure<T>> {
        self.rho.as_ref()
    }

    /// `𝒢`.
    pub fn initial_functional(&self) -> &Functional<T> {
        &self.initial
    }

    /// `𝒱`.
    pub fn potential_functional(&self) -> &Functional<T> {
        &self.potential
    }

    /// True when both `𝒢` and `𝒱` are integrals against the measure, so
    /// the ensemble problem splits into independent particles.
    /// Ambient dimension implied by the data (from a linear `g` or `V`),
    /// if any.
    pub fn dim_hint(&self) -> Option<usize> {
        field_dim(&self.g).or(field_dim(&self.v))
    }

    pub fn is_integral(&self) -> bool {
        self.kind == PotentialKind::Integral
    }

    /// Same problem with a different initial cost.
    pub fn with_g(&self, g: ScalarField<T>) -> Result<Self> {
        let mut s = self.clone();
        let mut g = g;
        g.resolve(self.p);
        check_field(&g, "g")?;
        let dim = field_dim(&g).unwrap_or(1);
        s.lipschitz = g.lipschitz(dim);
        s.initial = Functional::Integral(g.clone());
        s.g = g;
        Ok(s)
    }

    /// Finite-time blowup of the classical problem, `+∞` if none.
    pub fn blowup_time(&self) -> T {
        let two = T::lit(2.0);
        match &self.v {
            ScalarField::Zero | ScalarField::Linear { .. } | ScalarField::LogCosh { .. } => T::infinity(),
            ScalarField::Quadratic { c } => {
                if *c <= T::zero() || self.p > two {
                    T::infinity()
                } else if self.p == two {
                    T::FRAC_PI_2() / (two * *c).sqrt()
                } else {
                    T::zero()
                }
            }
            ScalarField::PPower { exponent } => {
                let e = exponent.expect("resolved");
                if e < self.p {
                    T::infinity()
                } else if e == self.p {
                    t_p(self.p)
                } else {
                    T::zero()
                }
            }
            ScalarField::Custom(_) => T::zero(),
        }
    }

    /// Horizon on which the value functions are evaluated: the larger of
    /// `horizon(α, p)` and, for integral problems, the blowup time of the
    /// classical action.
    pub fn effective_horizon(&self) -> T {
        let h = horizon(self.alpha, self.p);
        if self.is_integral() {
            h.max(self.blowup_time())
        } else {
            h
        }
    }

    pub(crate) fn check_horizon(&self, t: T) -> Result<()> {
        if !(t >= T::zero()) || !t.is_finite() {
            return Err(Error::InvalidInput(format!(
                "time must be finite and nonnegative, got {t}"
            )));
        }
        let h = self.effective_horizon();
        if t >= h {
            return Err(Error::HorizonExceeded {
                t: t.to_f64_lossy(),
                horizon: h.to_f64_lossy(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_33_json() {
        let s = ProblemSpec::<f64>::from_json(r#"{"p": 2, "V": {"kind": "quadratic", "c": 0.5}}"#).unwrap();
        assert_eq!(s.q(), 2.0);
        assert_eq!(s.alpha(), 0.5);
        assert!((s.effective_horizon() - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert!(s.is_integral());
        let back = ProblemSpec::<f64>::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(back.alpha(), s.alpha());
        assert_eq!(back.kind(), s.kind());
    }

    #[test]
    fn validation_errors() {
        let bad = [
            r#"{"p": 1.0}"#,
            r#"{"p": 2, "g": {"kind": "linear", "c": [1.0]}, "L": 3.0}"#,
            r#"{"p": 2, "V": {"kind": "quadratic", "c": 1.0}, "alpha": 0.1}"#,
            r#"{"p": 1.5, "V": {"kind": "quadratic", "c": 1.0}}"#,
            r#"{"p": 2, "functional": "wasserstein_power", "alpha": 1.0}"#,
            r#"{"p": 2, "functional": "interaction", "alpha": 1.0}"#,
            r#"{"p": 2, "bogus": 1}"#,
        ];
        for b in bad {
            let e = ProblemSpec::<f64>::from_json(b).unwrap_err();
            assert_eq!(e.kind(), "validation", "{b}");
        }
    }

    #[test]
    fn declared_lipschitz_matches() {
        let s =
            ProblemSpec::<f64>::from_json(r#"{"p": 2, "g": {"kind": "linear", "c": [3.0, 4.0]}, "L": 5.0}"#).unwrap();
        assert_eq!(s.lipschitz(), Some(5.0));
    }

    #[test]
    fn non_integral_kinds() {
        let s = ProblemSpec::<f64>::from_json(
            r#"{"p": 2, "functional": "wasserstein_power", "alpha": 0.25, "beta": 0.1,
                "rho": {"points": [[0.0]], "weights": [1.0]}}"#,
        )
        .unwrap();
        assert_eq!(s.kind(), PotentialKind::WassersteinPower);
        assert_eq!(s.effective_horizon(), 1.0);
        let mu = DiscreteMeasure::dirac(vec![2.0]);
        assert!((s.potential_functional().value(&mu).unwrap() - 1.1).abs() < 1e-14);

        let s = ProblemSpec::<f64>::from_json(
            r#"{"p": 2, "functional": "interaction", "alpha": 0.5,
                "kernel": {"kind": "quadratic", "c": 1.0}, "coupling": 0.1}"#,
        )
        .unwrap();
        assert_eq!(s.kind(), PotentialKind::Interaction);
        assert!(!s.is_integral());
    }

    #[test]
    fn horizons() {
        let s = ProblemSpec::<f64>::new(3.0, ScalarField::Zero, ScalarField::PPower { exponent: None }).unwrap();
        assert!((s.effective_horizon() - t_p(3.0)).abs() < 1e-15);
        let s = ProblemSpec::<f64>::new(2.0, ScalarField::Zero, ScalarField::Zero).unwrap();
        assert!(s.effective_horizon().is_infinite());
        assert!(matches!(
            ProblemSpec::<f64>::new(2.0, ScalarField::Zero, ScalarField::Quadratic { c: 0.5 })
                .unwrap()
                .check_horizon(2.0),
            Err(Error::HorizonExceeded { .. })
        ));
    }
}
