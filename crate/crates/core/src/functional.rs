//! Functionals on discrete measures: the initial cost `𝒢` and the potential
//! `𝒱` of the generalized value function.
//!
//! Derivatives are taken with respect to the support points at fixed
//! weights, so a functional of a measure with `n` particles in `R^d` has an
//! `n·d` gradient and an `(n·d) × (n·d)` Hessian.

use crate::error::Result;
use crate::field::ScalarField;
use crate::measure::DiscreteMeasure;
use crate::scalar::Real;
use crate::transport;
use crate::vecops;

/// Kind tag of a [`Functional`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionalKind {
    Integral,
    WassersteinPower,
    Interaction,
    Sum,
}

/// A functional `F: M_p → R`.
#[derive(Debug, Clone)]
pub enum Functional<T: Real> {
    /// `∫ f dμ`.
    Integral(ScalarField<T>),
    /// `α W_p(μ, ϱ)^p + β`.
    WassersteinPower {
        alpha: T,
        beta: T,
        p: T,
        reference: DiscreteMeasure<T>,
    },
    /// `coupling · ∬ W(x - y) dμ(x) dμ(y)`.
    Interaction { kernel: ScalarField<T>, coupling: T },
    /// Pointwise sum of the parts.
    Sum(Vec<Functional<T>>),
}

fn pow_hessian_into<T: Real>(d: &[T], p: T, scale: T, out: &mut [T], stride: usize, offset: (usize, usize)) {
    // scale · ∇²|d|^p added into the block at `offset`.
    let dim = d.len();
    let r = vecops::norm(d);
    let two = T::lit(2.0);
    if r == T::zero() && p > two {
        return;
    }
    let rf = r.max(T::tol(1e-8));
    let s = scale * p * rf.powf(p - two);
    for a in 0..dim {
        for b in 0..dim {
            let rad = if r > T::zero() {
                d[a] * d[b] / (r * r)
            } else {
                T::zero()
            };
            let id = if a == b { T::one() } else { T::zero() };
            out[(offset.0 + a) * stride + offset.1 + b] =
                out[(offset.0 + a) * stride + offset.1 + b] + s * (id + (p - two) * rad);
        }
    }
}

impl<T: Real> Functional<T> {
    pub fn kind(&self) -> FunctionalKind {
        match self {
            Functional::Integral(_) => FunctionalKind::Integral,
            Functional::WassersteinPower { .. } => FunctionalKind::WassersteinPower,
            Functional::Interaction { .. } => FunctionalKind::Interaction,
            Functional::Sum(_) => FunctionalKind::Sum,
        }
    }

    /// The integrand if the functional is of integral form (possibly a
    /// one-element sum).
    pub fn as_integral(&self) -> Option<&ScalarField<T>> {
        match self {
            Functional::Integral(f) => Some(f),
            Functional::Sum(parts) if parts.len() == 1 => parts[0].as_integral(),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Functional::Integral(f) => f.is_zero(),
            Functional::WassersteinPower { alpha, beta, .. } => *alpha == T::zero() && *beta == T::zero(),
            Functional::Interaction { kernel, coupling } => *coupling == T::zero() || kernel.is_zero(),
            Functional::Sum(parts) => parts.iter().all(Functional::is_zero),
        }
    }

    pub fn value(&self, mu: &DiscreteMeasure<T>) -> Result<T> {
        Ok(match self {
            Functional::Integral(f) => mu.points().zip(mu.weights()).map(|(x, &w)| w * f.value(x)).sum(),
            Functional::WassersteinPower {
                alpha,
                beta,
                p,
                reference,
            } => *alpha * transport::wasserstein_cost(mu, reference, *p)? + *beta,
            Functional::Interaction { kernel, coupling } => {
                let d = mu.dim();
                let mut diff = vec![T::zero(); d];
                let mut total = T::zero();
                for (i, x) in mu.points().enumerate() {
                    for (j, y) in mu.points().enumerate() {
                        for k in 0..d {
                            diff[k] = x[k] - y[k];
                        }
                        total = total + mu.weight(i) * mu.weight(j) * kernel.value(&diff);
                    }
                }
                *coupling * total
            }
            Functional::Sum(parts) => {
                let mut total = T::zero();
                for f in parts {
                    total = total + f.value(mu)?;
                }
                total
            }
        })
    }

    /// Adds the gradient with respect to the flat support coordinates,
    /// scaled by `scale`, into `out`.
    pub fn add_gradient(&self, mu: &DiscreteMeasure<T>, scale: T, out: &mut [T]) -> Result<()> {
        let d = mu.dim();
        match self {
            Functional::Integral(f) => {
                let mut g = vec![T::zero(); d];
                for (i, x) in mu.points().enumerate() {
                    f.gradient_into(x, &mut g);
                    let w = scale * mu.weight(i);
                    for k in 0..d {
                        out[i * d + k] = out[i * d + k] + w * g[k];
                    }
                }
            }
            Functional::WassersteinPower {
                alpha, p, reference, ..
            } => {
                let (_, plan) = transport::wasserstein(mu, reference, *p)?;
                let mut diff = vec![T::zero(); d];
                let mut g = vec![T::zero(); d];
                for (i, j, m) in plan.support() {
                    let x = mu.point(i);
                    let z = reference.point(j);
                    for k in 0..d {
                        diff[k] = x[k] - z[k];
                    }
                    vecops::duality_into(&diff, *p, &mut g);
                    let c = scale * *alpha * m * *p;
                    for k in 0..d {
                        out[i * d + k] = out[i * d + k] + c * g[k];
                    }
                }
            }
            Functional::Interaction { kernel, coupling } => {
                let mut diff = vec![T::zero(); d];
                let mut g1 = vec![T::zero(); d];
                let mut g2 = vec![T::zero(); d];
                for (i, x) in mu.points().enumerate() {
                    for (j, y) in mu.points().enumerate() {
                        if i == j {
                            continue;
                        }
                        for k in 0..d {
                            diff[k] = x[k] - y[k];
                        }
                        kernel.gradient_into(&diff, &mut g1);
                        diff.iter_mut().for_each(|v| *v = -*v);
                        kernel.gradient_into(&diff, &mut g2);
                        let c = scale * *coupling * mu.weight(i) * mu.weight(j);
                        for k in 0..d {
                            out[i * d + k] = out[i * d + k] + c * (g1[k] - g2[k]);
                        }
                    }
                }
            }
            Functional::Sum(parts) => {
                for f in parts {
                    f.add_gradient(mu, scale, out)?;
                }
            }
        }
        Ok(())
    }

    pub fn gradient(&self, mu: &DiscreteMeasure<T>) -> Result<Vec<T>> {
        let mut g = vec![T::zero(); mu.coords().len()];
        self.add_gradient(mu, T::one(), &mut g)?;
        Ok(g)
    }

    /// Adds `scale ·` Hessian into the dense `(n·d) × (n·d)` matrix `out`.
    /// For the Wasserstein term the optimal plan is held fixed.
    pub fn add_hessian(&self, mu: &DiscreteMeasure<T>, scale: T, out: &mut [T]) -> Result<()> {
        let d = mu.dim();
        let nd = mu.coords().len();
        match self {
            Functional::Integral(f) => {
                let mut h = vec![T::zero(); d * d];
                for (i, x) in mu.points().enumerate() {
                    f.hessian_into(x, &mut h);
                    let w = scale * mu.weight(i);
                    for a in 0..d {
                        for b in 0..d {
                            let idx = (i * d + a) * nd + i * d + b;
                            out[idx] = out[idx] + w * h[a * d + b];
                        }
                    }
                }
            }
            Functional::WassersteinPower {
                alpha, p, reference, ..
            } => {
                let (_, plan) = transport::wasserstein(mu, reference, *p)?;
                let mut diff = vec![T::zero(); d];
                for (i, j, m) in plan.support() {
                    let x = mu.point(i);
                    let z = reference.point(j);
                    for k in 0..d {
                        diff[k] = x[k] - z[k];
                    }
                    pow_hessian_into(&diff, *p, scale * *alpha * m, out, nd, (i * d, i * d));
                }
            }
            Functional::Interaction { kernel, coupling } => {
                let mut diff = vec![T::zero(); d];
                let mut h1 = vec![T::zero(); d * d];
                for (i, x) in mu.points().enumerate() {
                    for (j, y) in mu.points().enumerate() {
                        if i == j {
                            continue;
                        }
                        for k in 0..d {
                            diff[k] = x[k] - y[k];
                        }
                        kernel.hessian_into(&diff, &mut h1);
                        let c = scale * *coupling * mu.weight(i) * mu.weight(j);
                        // The (i, j) pair term W(x_i - x_j) touches blocks ii, ij, ji, jj;
                        // the symmetric (j, i) term is visited separately.
                        for a in 0..d {
                            for b in 0..d {
                                let hv = c * h1[a * d + b];
                                let ii = (i * d + a) * nd + i * d + b;
                                let jj = (j * d + a) * nd + j * d + b;
                                let ij = (i * d + a) * nd + j * d + b;
                                let ji = (j * d + a) * nd + i * d + b;
                                out[ii] = out[ii] + hv;
                                out[jj] = out[jj] + hv;
                                out[ij] = out[ij] - hv;
                                out[ji] = out[ji] - hv;
                            }
                        }
                    }
                }
            }
            Functional::Sum(parts) => {
                for f in parts {
                    f.add_hessian(mu, scale, out)?;
                }
            }
        }
        Ok(())
    }

    /// Lipschitz constant with respect to `W_p` where analytically known.
    pub fn lipschitz(&self, d: usize) -> Option<T> {
        match self {
            Functional::Integral(f) => f.lipschitz(d),
            Functional::Sum(parts) => parts.iter().try_fold(T::zero(), |acc, f| Some(acc + f.lipschitz(d)?)),
            Functional::Interaction { kernel, coupling } => {
                kernel.lipschitz(d).map(|l| (*coupling + *coupling).abs() * l)
            }
            Functional::WassersteinPower { alpha, .. } => (*alpha == T::zero()).then(T::zero),
        }
    }
}

/// `F(μ)`.
pub fn evaluate_functional<T: Real>(f: &Functional<T>, mu: &DiscreteMeasure<T>) -> Result<T> {
    f.value(mu)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud() -> DiscreteMeasure<f64> {
        DiscreteMeasure::new(
            vec![vec![0.3, -0.2], vec![1.1, 0.4], vec![-0.7, 0.9]],
            vec![0.2, 0.5, 0.3],
        )
        .unwrap()
    }

    fn fd_gradient(f: &Functional<f64>, mu: &DiscreteMeasure<f64>) -> Vec<f64> {
        let h = 1e-6;
        let c = mu.coords().to_vec();
        (0..c.len())
            .map(|k| {
                let mut a = c.clone();
                let mut b = c.clone();
                a[k] += h;
                b[k] -= h;
                (f.value(&mu.with_coords(a)).unwrap() - f.value(&mu.with_coords(b)).unwrap()) / (2.0 * h)
            })
            .collect()
    }

    fn fd_hessian(f: &Functional<f64>, mu: &DiscreteMeasure<f64>) -> Vec<f64> {
        let h = 1e-5;
        let c = mu.coords().to_vec();
        let nd = c.len();
        let mut out = vec![0.0; nd * nd];
        for b in 0..nd {
            let mut a1 = c.clone();
            let mut a2 = c.clone();
            a1[b] += h;
            a2[b] -= h;
            let g1 = f.gradient(&mu.with_coords(a1)).unwrap();
            let g2 = f.gradient(&mu.with_coords(a2)).unwrap();
            for a in 0..nd {
                out[a * nd + b] = (g1[a] - g2[a]) / (2.0 * h);
            }
        }
        out
    }

    fn samples() -> Vec<Functional<f64>> {
        vec![
            Functional::Integral(ScalarField::Quadratic { c: 0.5 }),
            Functional::Integral(ScalarField::p_power(3.0)),
            Functional::Interaction {
                kernel: ScalarField::Quadratic { c: 1.0 },
                coupling: 0.3,
            },
            Functional::Interaction {
                kernel: ScalarField::LogCosh { scale: 1.0 },
                coupling: -0.2,
            },
            Functional::WassersteinPower {
                alpha: 0.7,
                beta: 0.1,
                p: 2.0,
                reference: DiscreteMeasure::uniform(vec![vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap(),
            },
            Functional::Sum(vec![
                Functional::Integral(ScalarField::Linear { c: vec![1.0, -1.0] }),
                Functional::Interaction {
                    kernel: ScalarField::Quadratic { c: 1.0 },
                    coupling: 0.1,
                },
            ]),
        ]
    }

    #[test]
    fn gradients_and_hessians_match_differences() {
        let mu = cloud();
        for f in samples() {
            let g = f.gradient(&mu).unwrap();
            for (a, b) in g.iter().zip(fd_gradient(&f, &mu)) {
                assert!((a - b).abs() < 1e-6, "{f:?}: {a} vs {b}");
            }
            let nd = mu.coords().len();
            let mut h = vec![0.0; nd * nd];
            f.add_hessian(&mu, 1.0, &mut h).unwrap();
            for (a, b) in h.iter().zip(fd_hessian(&f, &mu)) {
                assert!((a - b).abs() < 1e-5, "{f:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn evaluation_examples() {
        let sym = DiscreteMeasure::uniform(vec![vec![-1.0f64], vec![1.0]]).unwrap();
        assert_eq!(
            evaluate_functional(&Functional::Integral(ScalarField::Zero), &sym).unwrap(),
            0.0
        );
        let sq = Functional::Integral(ScalarField::Quadratic { c: 1.0 });
        assert!((evaluate_functional(&sq, &sym).unwrap() - 1.0).abs() < 1e-15);
        let wp = Functional::WassersteinPower {
            alpha: 1.0,
            beta: 0.0,
            p: 2.0,
            reference: DiscreteMeasure::dirac(vec![0.0]),
        };
        assert!((evaluate_functional(&wp, &DiscreteMeasure::dirac(vec![2.0f64])).unwrap() - 4.0).abs() < 1e-14);
        let inter = Functional::Interaction {
            kernel: ScalarField::Quadratic { c: 1.0 },
            coupling: 1.0,
        };
        // Σ_ij w_i w_j |x_i - x_j|^2 = 2 · 0.25 · 4
        assert!((evaluate_functional(&inter, &sym).unwrap() - 2.0).abs() < 1e-15);
    }
}
