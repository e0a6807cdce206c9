//! The discretized action of an ensemble of particles and its derivatives.
//!
//! Unknowns are the nodes `0..N` of every particle (node `N` is pinned), in
//! time-major order: block `i` holds node `i` of all particles, so the
//! Hessian is block tridiagonal with blocks of size `n·d`.

use crate::error::Result;
use crate::functional::Functional;
use crate::measure::DiscreteMeasure;
use crate::optim::{BlockTridiag, Objective};
use crate::path::{EnsemblePath, ParticlePath};
use crate::scalar::Real;
use crate::vecops;

/// Floor on `|v|` inside the kinetic Hessian.
const SPEED_FLOOR: f64 = 1e-8;

pub(crate) struct ActionObjective<'a, T: Real> {
    pub weights: &'a [T],
    pub dim: usize,
    pub steps: usize,
    pub t_start: T,
    pub t_end: T,
    pub p: T,
    pub terminal: &'a [T],
    pub initial: &'a Functional<T>,
    pub potential: &'a Functional<T>,
}

impl<'a, T: Real> ActionObjective<'a, T> {
    fn n(&self) -> usize {
        self.weights.len()
    }

    fn block(&self) -> usize {
        self.n() * self.dim
    }

    pub fn dt(&self) -> T {
        (self.t_end - self.t_start) / T::from_usize_lossy(self.steps)
    }

    fn node<'z>(&'z self, z: &'z [T], i: usize) -> &'z [T] {
        let b = self.block();
        if i == self.steps {
            self.terminal
        } else {
            &z[i * b..(i + 1) * b]
        }
    }

    fn measure(&self, coords: Vec<T>) -> DiscreteMeasure<T> {
        DiscreteMeasure::from_parts(coords, self.weights.to_vec(), self.dim)
    }

    fn midpoint(&self, z: &[T], i: usize) -> Vec<T> {
        let two = T::lit(2.0);
        self.node(z, i)
            .iter()
            .zip(self.node(z, i + 1))
            .map(|(&a, &b)| (a + b) / two)
            .collect()
    }

    /// Unknowns of an ensemble path (all nodes but the last).
    pub fn pack(sigma: &EnsemblePath<T>) -> Vec<T> {
        let n = sigma.len();
        let d = sigma.dim();
        let steps = sigma.steps();
        let mut z = Vec::with_capacity(steps * n * d);
        for i in 0..steps {
            for k in 0..n {
                z.extend_from_slice(sigma.path(k).node(i));
            }
        }
        z
    }

    pub fn unpack(&self, z: &[T]) -> EnsemblePath<T> {
        let (n, d) = (self.n(), self.dim);
        let paths = (0..n)
            .map(|k| {
                let mut coords = Vec::with_capacity((self.steps + 1) * d);
                for i in 0..=self.steps {
                    coords.extend_from_slice(&self.node(z, i)[k * d..(k + 1) * d]);
                }
                ParticlePath::from_flat(self.t_start, self.t_end, coords, d)
            })
            .collect();
        EnsemblePath::from_parts(self.weights.to_vec(), paths)
    }

    fn kinetic_hessian(&self, v: &[T], scale: T, out: &mut [T], stride: usize, at: usize) {
        let d = v.len();
        let p = self.p;
        let two = T::lit(2.0);
        let r = vecops::norm(v);
        let s = scale * r.max(T::lit(SPEED_FLOOR)).powf(p - two);
        for a in 0..d {
            for b in 0..d {
                let rad = if r > T::zero() {
                    v[a] * v[b] / (r * r)
                } else {
                    T::zero()
                };
                let id = if a == b { T::one() } else { T::zero() };
                let idx = (at + a) * stride + at + b;
                out[idx] = out[idx] + s * (id + (p - two) * rad);
            }
        }
    }
}

/// Discrete action of an ensemble path.
pub(crate) fn ensemble_action_value<T: Real>(
    sigma: &EnsemblePath<T>,
    p: T,
    initial: &Functional<T>,
    potential: &Functional<T>,
) -> Result<T> {
    let dt = sigma.dt();
    let mut total = initial.value(&sigma.snapshot(0))?;
    let mut kinetic = T::zero();
    let mut pot = T::zero();
    for i in 0..sigma.steps() {
        let ke: T = sigma
            .paths()
            .iter()
            .zip(sigma.weights())
            .map(|(path, &w)| w * vecops::pow_abs(vecops::norm(&path.velocity(i)), p))
            .sum();
        kinetic = kinetic + ke;
        pot = pot + potential.value(&sigma.midpoint_snapshot(i))?;
    }
    total = total + dt * (kinetic / p - pot);
    Ok(total)
}

impl<'a, T: Real> Objective<T> for ActionObjective<'a, T> {
    fn shape(&self) -> (usize, usize) {
        (self.steps, self.block())
    }

    fn value(&self, z: &[T]) -> Result<T> {
        let (n, d) = (self.n(), self.dim);
        let dt = self.dt();
        let mut f = self.initial.value(&self.measure(self.node(z, 0).to_vec()))?;
        let mut kinetic = T::zero();
        let mut pot = T::zero();
        let mut v = vec![T::zero(); d];
        for i in 0..self.steps {
            let a = self.node(z, i);
            let b = self.node(z, i + 1);
            for k in 0..n {
                for c in 0..d {
                    v[c] = (b[k * d + c] - a[k * d + c]) / dt;
                }
                kinetic = kinetic + self.weights[k] * vecops::pow_abs(vecops::norm(&v), self.p);
            }
            if !self.potential.is_zero() {
                pot = pot + self.potential.value(&self.measure(self.midpoint(z, i)))?;
            }
        }
        f = f + dt * (kinetic / self.p - pot);
        Ok(f)
    }

    fn value_gradient(&self, z: &[T], grad: &mut [T]) -> Result<T> {
        let (n, d) = (self.n(), self.dim);
        let bsz = self.block();
        let dt = self.dt();
        let half = T::lit(0.5);
        grad.iter_mut().for_each(|g| *g = T::zero());
        let mu0 = self.measure(self.node(z, 0).to_vec());
        let mut f = self.initial.value(&mu0)?;
        self.initial.add_gradient(&mu0, T::one(), &mut grad[..bsz])?;
        let mut kinetic = T::zero();
        let mut pot = T::zero();
        let mut v = vec![T::zero(); d];
        let mut m = vec![T::zero(); d];
        let mut gmid = vec![T::zero(); bsz];
        for i in 0..self.steps {
            let a = self.node(z, i);
            let b = self.node(z, i + 1);
            for k in 0..n {
                for c in 0..d {
                    v[c] = (b[k * d + c] - a[k * d + c]) / dt;
                }
                let w = self.weights[k];
                kinetic = kinetic + w * vecops::pow_abs(vecops::norm(&v), self.p);
                vecops::duality_into(&v, self.p, &mut m);
                for c in 0..d {
                    grad[i * bsz + k * d + c] = grad[i * bsz + k * d + c] - w * m[c];
                    if i + 1 < self.steps {
                        grad[(i + 1) * bsz + k * d + c] = grad[(i + 1) * bsz + k * d + c] + w * m[c];
                    }
                }
            }
            if !self.potential.is_zero() {
                let mid = self.measure(self.midpoint(z, i));
                pot = pot + self.potential.value(&mid)?;
                gmid.iter_mut().for_each(|g| *g = T::zero());
                self.potential.add_gradient(&mid, -dt * half, &mut gmid)?;
                for j in 0..bsz {
                    grad[i * bsz + j] = grad[i * bsz + j] + gmid[j];
                    if i + 1 < self.steps {
                        grad[(i + 1) * bsz + j] = grad[(i + 1) * bsz + j] + gmid[j];
                    }
                }
            }
        }
        f = f + dt * (kinetic / self.p - pot);
        Ok(f)
    }

    fn hessian(&self, z: &[T], h: &mut BlockTridiag<T>) -> Result<()> {
        let (n, d) = (self.n(), self.dim);
        let bsz = self.block();
        let dt = self.dt();
        let mu0 = self.measure(self.node(z, 0).to_vec());
        self.initial.add_hessian(&mu0, T::one(), h.diag_block_mut(0))?;
        let mut v = vec![T::zero(); d];
        let mut kin = vec![T::zero(); bsz * bsz];
        let mut hv = vec![T::zero(); bsz * bsz];
        let quarter = T::lit(0.25);
        for i in 0..self.steps {
            let a = self.node(z, i);
            let b = self.node(z, i + 1);
            kin.iter_mut().for_each(|x| *x = T::zero());
            for k in 0..n {
                for c in 0..d {
                    v[c] = (b[k * d + c] - a[k * d + c]) / dt;
                }
                self.kinetic_hessian(&v, self.weights[k] / dt, &mut kin, bsz, k * d);
            }
            hv.iter_mut().for_each(|x| *x = T::zero());
            if !self.potential.is_zero() {
                let mid = self.measure(self.midpoint(z, i));
                self.potential.add_hessian(&mid, -dt * quarter, &mut hv)?;
            }
            let last = i + 1 == self.steps;
            {
                let di = h.diag_block_mut(i);
                for j in 0..bsz * bsz {
                    di[j] = di[j] + kin[j] + hv[j];
                }
            }
            if !last {
                let dn = h.diag_block_mut(i + 1);
                for j in 0..bsz * bsz {
                    dn[j] = dn[j] + kin[j] + hv[j];
                }
                let e = h.off_block_mut(i);
                for j in 0..bsz * bsz {
                    e[j] = e[j] - kin[j] + hv[j];
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ScalarField;

    fn fd_check(obj: &ActionObjective<f64>, z: &[f64]) {
        let (nb, b) = obj.shape();
        let n = nb * b;
        let mut g = vec![0.0; n];
        let f = obj.value_gradient(z, &mut g).unwrap();
        assert!((f - obj.value(z).unwrap()).abs() < 1e-12);
        let mut h = BlockTridiag::zeros(nb, b);
        obj.hessian(z, &mut h).unwrap();
        let eps = 1e-6;
        for j in 0..n {
            let mut zp = z.to_vec();
            let mut zm = z.to_vec();
            zp[j] += eps;
            zm[j] -= eps;
            let fd = (obj.value(&zp).unwrap() - obj.value(&zm).unwrap()) / (2.0 * eps);
            assert!(
                (fd - g[j]).abs() < 1e-6 * (1.0 + g[j].abs()),
                "grad {j}: {fd} vs {}",
                g[j]
            );
            let mut gp = vec![0.0; n];
            let mut gm = vec![0.0; n];
            obj.value_gradient(&zp, &mut gp).unwrap();
            obj.value_gradient(&zm, &mut gm).unwrap();
            for r in 0..n {
                let fdh = (gp[r] - gm[r]) / (2.0 * eps);
                let (bi, bj) = (r / b, j / b);
                let exact = if bi == bj {
                    h.diag[bi * b * b + (r % b) * b + j % b]
                } else if bj == bi + 1 {
                    h.off[bi * b * b + (r % b) * b + j % b]
                } else if bi == bj + 1 {
                    h.off[bj * b * b + (j % b) * b + r % b]
                } else {
                    0.0
                };
                assert!(
                    (fdh - exact).abs() < 1e-4 * (1.0 + exact.abs()),
                    "hess ({r},{j}): {fdh} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let weights = [0.3, 0.7];
        let terminal = [1.0, 0.5, -0.4, 0.2];
        let g = Functional::Integral(ScalarField::LogCosh { scale: 0.7 });
        let pots = [
            Functional::Integral(ScalarField::Quadratic { c: 0.5 }),
            Functional::Interaction {
                kernel: ScalarField::Quadratic { c: 1.0 },
                coupling: 0.2,
            },
        ];
        for p in [1.5, 2.0, 3.0] {
            for pot in &pots {
                let obj = ActionObjective {
                    weights: &weights,
                    dim: 2,
                    steps: 3,
                    t_start: 0.0,
                    t_end: 0.6,
                    p,
                    terminal: &terminal,
                    initial: &g,
                    potential: pot,
                };
                let z: Vec<f64> = (0..12).map(|k| 0.1 * k as f64 - 0.5 + 0.03 * (k * k) as f64).collect();
                fd_check(&obj, &z);
            }
        }
    }
}
