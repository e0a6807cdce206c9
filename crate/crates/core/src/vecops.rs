//! Small dense-vector helpers on slices.

use crate::scalar::Real;

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[inline]
pub fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>().sqrt()
}

#[inline]
pub fn sup_norm<T: Real>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

/// `|x|^p`, with `0^p = 0`.
#[inline]
pub fn pow_abs<T: Real>(x: T, p: T) -> T {
    if x == T::zero() {
        T::zero()
    } else {
        x.abs().powf(p)
    }
}

/// The duality map `v ↦ |v|^{p-2} v`, written into `out`.
pub fn duality_into<T: Real>(v: &[T], p: T, out: &mut [T]) {
    let n = norm(v);
    if n == T::zero() {
        out.iter_mut().for_each(|o| *o = T::zero());
        return;
    }
    let s = n.powf(p - T::lit(2.0));
    for (o, &x) in out.iter_mut().zip(v) {
        *o = s * x;
    }
}

/// The duality map `v ↦ |v|^{p-2} v`.
pub fn duality<T: Real>(v: &[T], p: T) -> Vec<T> {
    let mut out = vec![T::zero(); v.len()];
    duality_into(v, p, &mut out);
    out
}

/// Conjugate exponent `q` with `1/p + 1/q = 1`.
#[inline]
pub fn conjugate<T: Real>(p: T) -> T {
    p / (p - T::one())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn duality_maps_are_mutually_inverse(
            v in proptest::collection::vec(-10.0f64..10.0, 1..4),
            p in 1.1f64..5.0,
        ) {
            let q = conjugate(p);
            let m = duality(&v, p);
            let back = duality(&m, q);
            for (a, b) in v.iter().zip(&back) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn duality_of_zero_is_zero() {
        assert_eq!(duality(&[0.0f64, 0.0], 1.5), vec![0.0, 0.0]);
        assert_eq!(pow_abs(0.0f64, 0.5), 0.0);
    }
}
