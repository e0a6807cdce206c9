//! Damped Newton minimization with block-tridiagonal Hessians, plus a few
//! small dense linear-algebra and scalar search helpers.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::vecops;

/// In-place lower Cholesky factor of the dense `n × n` matrix `a`.
/// Returns false if `a` is not numerically positive definite.
pub(crate) fn cholesky<T: Real>(a: &mut [T], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d = d - a[j * n + k] * a[j * n + k];
        }
        if !(d > T::zero()) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s = s - a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
        for k in j + 1..n {
            a[j * n + k] = T::zero();
        }
    }
    true
}

/// Solves `L y = b` in place.
pub(crate) fn solve_lower<T: Real>(l: &[T], n: usize, b: &mut [T]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solves `Lᵀ x = b` in place.
pub(crate) fn solve_lower_t<T: Real>(l: &[T], n: usize, b: &mut [T]) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s = s - l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Dense solve of `A x = b` by Gaussian elimination with partial pivoting.
pub(crate) fn solve_dense<T: Real>(a: &[T], n: usize, b: &[T]) -> Option<Vec<T>> {
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| m[i * n + c].abs().partial_cmp(&m[j * n + c].abs()).unwrap())?;
        if !(m[piv * n + c].abs() > T::zero()) {
            return None;
        }
        if piv != c {
            for k in 0..n {
                m.swap(c * n + k, piv * n + k);
            }
            x.swap(c, piv);
        }
        for r in c + 1..n {
            let f = m[r * n + c] / m[c * n + c];
            for k in c..n {
                m[r * n + k] = m[r * n + k] - f * m[c * n + k];
            }
            x[r] = x[r] - f * x[c];
        }
    }
    for c in (0..n).rev() {
        let mut s = x[c];
        for k in c + 1..n {
            s = s - m[c * n + k] * x[k];
        }
        x[c] = s / m[c * n + c];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Symmetric block-tridiagonal matrix with `nb` diagonal blocks of size
/// `b × b`. `off[i]` is the block in row `i`, column `i + 1`.
#[derive(Debug, Clone)]
pub(crate) struct BlockTridiag<T> {
    pub nb: usize,
    pub b: usize,
    pub diag: Vec<T>,
    pub off: Vec<T>,
}

impl<T: Real> BlockTridiag<T> {
    pub fn zeros(nb: usize, b: usize) -> Self {
        BlockTridiag {
            nb,
            b,
            diag: vec![T::zero(); nb * b * b],
            off: vec![T::zero(); nb.saturating_sub(1) * b * b],
        }
    }

    pub fn clear(&mut self) {
        self.diag.iter_mut().for_each(|v| *v = T::zero());
        self.off.iter_mut().for_each(|v| *v = T::zero());
    }

    pub fn diag_block_mut(&mut self, i: usize) -> &mut [T] {
        let bb = self.b * self.b;
        &mut self.diag[i * bb..(i + 1) * bb]
    }

    pub fn off_block_mut(&mut self, i: usize) -> &mut [T] {
        let bb = self.b * self.b;
        &mut self.off[i * bb..(i + 1) * bb]
    }

    fn max_diag(&self) -> T {
        let b = self.b;
        let mut m = T::zero();
        for i in 0..self.nb {
            for k in 0..b {
                m = m.max(self.diag[i * b * b + k * b + k].abs());
            }
        }
        m
    }

    /// Solves `(H + λ I) x = rhs` by block Cholesky; `None` if the shifted
    /// matrix is not positive definite.
    pub fn solve_shifted(&self, lambda: T, rhs: &[T]) -> Option<Vec<T>> {
        let (nb, b) = (self.nb, self.b);
        let bb = b * b;
        let mut l = vec![T::zero(); nb * bb];
        // k[i] holds K_iᵀ = L_{i-1}^{-1} E_{i-1} for i ≥ 1.
        let mut kt = vec![T::zero(); nb.saturating_sub(1) * bb];
        for i in 0..nb {
            let li = &mut l[i * bb..(i + 1) * bb];
            li.copy_from_slice(&self.diag[i * bb..(i + 1) * bb]);
            for k in 0..b {
                li[k * b + k] = li[k * b + k] + lambda;
            }
            if i > 0 {
                let x = &kt[(i - 1) * bb..i * bb];
                // li -= Xᵀ X
                for r in 0..b {
                    for c in 0..b {
                        let mut s = T::zero();
                        for k in 0..b {
                            s = s + x[k * b + r] * x[k * b + c];
                        }
                        li[r * b + c] = li[r * b + c] - s;
                    }
                }
            }
            if !cholesky(li, b) {
                return None;
            }
            if i + 1 < nb {
                let li = &l[i * bb..(i + 1) * bb];
                let x = &mut kt[i * bb..(i + 1) * bb];
                x.copy_from_slice(&self.off[i * bb..(i + 1) * bb]);
                let mut col = vec![T::zero(); b];
                for c in 0..b {
                    for r in 0..b {
                        col[r] = x[r * b + c];
                    }
                    solve_lower(li, b, &mut col);
                    for r in 0..b {
                        x[r * b + c] = col[r];
                    }
                }
            }
        }
        // Forward: y_i = L_i^{-1}(r_i - K_i y_{i-1}), K_i = (kt_{i-1})ᵀ.
        let mut y = rhs.to_vec();
        for i in 0..nb {
            if i > 0 {
                let x = &kt[(i - 1) * bb..i * bb];
                for r in 0..b {
                    let mut s = T::zero();
                    for k in 0..b {
                        s = s + x[k * b + r] * y[(i - 1) * b + k];
                    }
                    y[i * b + r] = y[i * b + r] - s;
                }
            }
            solve_lower(&l[i * bb..(i + 1) * bb], b, &mut y[i * b..(i + 1) * b]);
        }
        // Backward: x_i = L_i^{-T}(y_i - K_{i+1}ᵀ x_{i+1}).
        for i in (0..nb).rev() {
            if i + 1 < nb {
                let x = &kt[i * bb..(i + 1) * bb];
                for r in 0..b {
                    let mut s = T::zero();
                    for k in 0..b {
                        s = s + x[r * b + k] * y[(i + 1) * b + k];
                    }
                    y[i * b + r] = y[i * b + r] - s;
                }
            }
            solve_lower_t(&l[i * bb..(i + 1) * bb], b, &mut y[i * b..(i + 1) * b]);
        }
        y.iter().all(|v| v.is_finite()).then_some(y)
    }

    #[cfg(test)]
    fn to_dense(&self) -> Vec<T> {
        let (nb, b) = (self.nb, self.b);
        let n = nb * b;
        let mut a = vec![T::zero(); n * n];
        for i in 0..nb {
            for r in 0..b {
                for c in 0..b {
                    a[(i * b + r) * n + i * b + c] = self.diag[i * b * b + r * b + c];
                    if i + 1 < nb {
                        let v = self.off[i * b * b + r * b + c];
                        a[(i * b + r) * n + (i + 1) * b + c] = v;
                        a[((i + 1) * b + c) * n + i * b + r] = v;
                    }
                }
            }
        }
        a
    }
}

/// A twice differentiable objective whose Hessian is block tridiagonal.
pub(crate) trait Objective<T: Real> {
    /// `(number of blocks, block size)`.
    fn shape(&self) -> (usize, usize);
    fn value(&self, z: &[T]) -> Result<T>;
    /// Writes the gradient into `grad` and returns the value.
    fn value_gradient(&self, z: &[T], grad: &mut [T]) -> Result<T>;
    fn hessian(&self, z: &[T], h: &mut BlockTridiag<T>) -> Result<()>;
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions<T> {
    /// Gradient sup-norm at which to stop.
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for NewtonOptions<T> {
    fn default() -> Self {
        NewtonOptions {
            tol: T::tol(1e-8),
            max_iter: 5000,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct NewtonOutcome<T> {
    pub z: Vec<T>,
    pub value: T,
    pub grad_norm: T,
    pub iterations: usize,
}

/// Levenberg-Marquardt damped Newton iteration.
pub(crate) fn newton_minimize<T: Real, O: Objective<T> + ?Sized>(
    obj: &O,
    z0: Vec<T>,
    opts: &NewtonOptions<T>,
    what: &'static str,
) -> Result<NewtonOutcome<T>> {
    let (nb, b) = obj.shape();
    let n = nb * b;
    assert_eq!(z0.len(), n);
    let mut z = z0;
    let mut grad = vec![T::zero(); n];
    let mut f = obj.value_gradient(&z, &mut grad)?;
    if !f.is_finite() {
        return Err(Error::SolverFailure(format!(
            "{what}: non-finite objective at the start"
        )));
    }
    let mut gn = vecops::sup_norm(&grad);
    let mut h = BlockTridiag::zeros(nb, b);
    let mut lambda = T::zero();
    let mut iterations = 0usize;
    let mut z_try = vec![T::zero(); n];
    let mut g_try = vec![T::zero(); n];
    let no_conv = |iterations, residual: T| Error::NoConvergence {
        what,
        iterations,
        residual: residual.to_f64_lossy(),
    };

    while gn > opts.tol {
        if iterations >= opts.max_iter {
            return Err(no_conv(iterations, gn));
        }
        iterations += 1;
        h.clear();
        obj.hessian(&z, &mut h)?;
        let scale = h.max_diag().max(T::tol(1e-300)).max(gn);
        let lambda_floor = T::tol(1e-12) * scale;
        let neg: Vec<T> = grad.iter().map(|&v| -v).collect();
        let mut accepted = false;
        for _ in 0..200 {
            let Some(step) = h.solve_shifted(lambda, &neg) else {
                lambda = (lambda * T::lit(10.0)).max(lambda_floor * T::lit(1e4));
                continue;
            };
            for k in 0..n {
                z_try[k] = z[k] + step[k];
            }
            let f_try = match obj.value(&z_try) {
                Ok(v) if v.is_finite() => v,
                Ok(_) | Err(Error::DualityDegenerate { .. }) => {
                    lambda = (lambda * T::lit(8.0)).max(lambda_floor * T::lit(1e4));
                    continue;
                }
                Err(e) => return Err(e),
            };
            let slope = vecops::dot(&grad, &step);
            let actual = f_try - f;
            let armijo = actual <= T::lit(1e-4) * slope;
            // Near the optimum the decrease drowns in roundoff; accept steps
            // that still reduce the gradient.
            let roundoff = actual.abs() <= T::tol(1e-13) * (T::one() + f.abs());
            let gn_try = if armijo || roundoff {
                obj.value_gradient(&z_try, &mut g_try)?;
                vecops::sup_norm(&g_try)
            } else {
                T::infinity()
            };
            if armijo || (roundoff && gn_try < gn) {
                std::mem::swap(&mut z, &mut z_try);
                std::mem::swap(&mut grad, &mut g_try);
                f = f_try;
                gn = gn_try;
                lambda = lambda / T::lit(4.0);
                if lambda < lambda_floor {
                    lambda = T::zero();
                }
                accepted = true;
                break;
            }
            lambda = (lambda * T::lit(8.0)).max(lambda_floor * T::lit(1e4));
            if lambda > scale * T::lit(1e30) {
                break;
            }
        }
        if !accepted {
            return Err(no_conv(iterations, gn));
        }
    }
    Ok(NewtonOutcome {
        z,
        value: f,
        grad_norm: gn,
        iterations,
    })
}

/// Single dense block objective built from closures, with a finite
/// difference Hessian when none is given.
pub(crate) struct DenseObjective<F, G, H> {
    pub n: usize,
    pub value: F,
    pub gradient: G,
    pub hessian: Option<H>,
}

impl<T, F, G, H> Objective<T> for DenseObjective<F, G, H>
where
    T: Real,
    F: Fn(&[T]) -> Result<T>,
    G: Fn(&[T], &mut [T]) -> Result<T>,
    H: Fn(&[T], &mut [T]) -> Result<()>,
{
    fn shape(&self) -> (usize, usize) {
        (1, self.n)
    }

    fn value(&self, z: &[T]) -> Result<T> {
        (self.value)(z)
    }

    fn value_gradient(&self, z: &[T], grad: &mut [T]) -> Result<T> {
        (self.gradient)(z, grad)
    }

    fn hessian(&self, z: &[T], h: &mut BlockTridiag<T>) -> Result<()> {
        let n = self.n;
        let out = h.diag_block_mut(0);
        if let Some(hf) = &self.hessian {
            return hf(z, out);
        }
        let mut zp = z.to_vec();
        let mut gp = vec![T::zero(); n];
        let mut gm = vec![T::zero(); n];
        for c in 0..n {
            let step = T::lit(1e-6) * (T::one() + z[c].abs());
            zp[c] = z[c] + step;
            (self.gradient)(&zp, &mut gp)?;
            zp[c] = z[c] - step;
            (self.gradient)(&zp, &mut gm)?;
            zp[c] = z[c];
            for r in 0..n {
                out[r * n + c] = (gp[r] - gm[r]) / (step + step);
            }
        }
        for r in 0..n {
            for c in r + 1..n {
                let s = (out[r * n + c] + out[c * n + r]) / T::lit(2.0);
                out[r * n + c] = s;
                out[c * n + r] = s;
            }
        }
        Ok(())
    }
}

/// Golden-section search for a minimum of a unimodal `f` on `[a, b]`.
pub fn golden_section<T: Real>(f: impl Fn(T) -> T, mut a: T, mut b: T, tol: T) -> (T, T) {
    let r = (T::lit(5.0).sqrt() - T::one()) / T::lit(2.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}
