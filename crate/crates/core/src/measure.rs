//! Discrete probability measures: weighted particle clouds in `R^d`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::vecops;

/// Maximum deviation of the weight sum from one accepted by
/// [`DiscreteMeasure::from_probability`].
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// A finitely supported probability measure `Σ w_i δ_{x_i}`.
///
/// Points are stored contiguously (`n × d`, row major). Particles keep their
/// identity: coincident points are never merged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureRepr<T>", into = "MeasureRepr<T>", bound = "T: Real")]
pub struct DiscreteMeasure<T: Real> {
    coords: Vec<T>,
    weights: Vec<T>,
    dim: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct MeasureRepr<T: Real> {
    points: Vec<Vec<T>>,
    weights: Vec<T>,
}

impl<T: Real> TryFrom<MeasureRepr<T>> for DiscreteMeasure<T> {
    type Error = Error;

    fn try_from(r: MeasureRepr<T>) -> Result<Self> {
        DiscreteMeasure::from_probability(r.points, r.weights)
    }
}

impl<T: Real> From<DiscreteMeasure<T>> for MeasureRepr<T> {
    fn from(m: DiscreteMeasure<T>) -> Self {
        MeasureRepr {
            points: m.points().map(<[T]>::to_vec).collect(),
            weights: m.weights,
        }
    }
}

impl<T: Real> DiscreteMeasure<T> {
    /// Builds a measure from points and nonnegative weights with positive
    /// sum. Weights are renormalized and zero-weight particles dropped.
    pub fn new(points: Vec<Vec<T>>, weights: Vec<T>) -> Result<Self> {
        Self::build(points, weights, None)
    }

    /// Like [`DiscreteMeasure::new`], but rejects weights whose sum is off
    /// from one by more than [`WEIGHT_SUM_TOL`].
    pub fn from_probability(points: Vec<Vec<T>>, weights: Vec<T>) -> Result<Self> {
        Self::build(points, weights, Some(T::tol(WEIGHT_SUM_TOL)))
    }

    /// Uniform weights on the given points.
    pub fn uniform(points: Vec<Vec<T>>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![T::one(); n])
    }

    /// A Dirac mass at `x`.
    pub fn dirac(x: Vec<T>) -> Self {
        let dim = x.len();
        DiscreteMeasure {
            coords: x,
            weights: vec![T::one()],
            dim,
        }
    }

    fn build(points: Vec<Vec<T>>, weights: Vec<T>, sum_tol: Option<T>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::InvalidInput(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if points.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::InvalidInput("points must have dimension ≥ 1".into()));
        }
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.len(),
                });
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput("non-finite point coordinate".into()));
            }
        }
        if weights.iter().any(|w| !w.is_finite() || *w < T::zero()) {
            return Err(Error::InvalidInput("weights must be finite and nonnegative".into()));
        }
        let total: T = weights.iter().copied().sum();
        if total <= T::zero() {
            return Err(Error::EmptyMeasure);
        }
        if let Some(tol) = sum_tol {
            if (total - T::one()).abs() > tol {
                return Err(Error::InvalidInput(format!("weights sum to {total}, not 1")));
            }
        }
        let mut coords = Vec::with_capacity(points.len() * dim);
        let mut kept = Vec::with_capacity(weights.len());
        for (p, w) in points.into_iter().zip(weights) {
            if w > T::zero() {
                coords.extend(p);
                kept.push(w / total);
            }
        }
        Ok(DiscreteMeasure {
            coords,
            weights: kept,
            dim,
        })
    }

    /// Internal constructor for weights already known to be a valid
    /// probability vector (strictly positive, summing to one).
    pub(crate) fn from_parts(coords: Vec<T>, weights: Vec<T>, dim: usize) -> Self {
        debug_assert_eq!(coords.len(), weights.len() * dim);
        DiscreteMeasure { coords, weights, dim }
    }

    /// Same weights, new support points (flat `n × d`).
    pub fn with_coords(&self, coords: Vec<T>) -> Self {
        assert_eq!(coords.len(), self.coords.len(), "coordinate count");
        DiscreteMeasure {
            coords,
            weights: self.weights.clone(),
            dim: self.dim,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    #[inline]
    pub fn weight(&self, i: usize) -> T {
        self.weights[i]
    }

    /// Flat `n × d` coordinates.
    #[inline]
    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[T] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    /// `Σ w_i |x_i|^p`.
    pub fn pth_moment(&self, p: T) -> T {
        self.points()
            .zip(&self.weights)
            .map(|(x, &w)| w * vecops::pow_abs(vecops::norm(x), p))
            .sum()
    }

    /// Image measure under `map`; weights and particle order are unchanged.
    pub fn pushforward<F>(&self, map: F) -> Result<Self>
    where
        F: Fn(&[T]) -> Vec<T>,
    {
        let mut coords = Vec::with_capacity(self.coords.len());
        let mut dim = None;
        for x in self.points() {
            let y = map(x);
            match dim {
                None => dim = Some(y.len()),
                Some(d) if d != y.len() => {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        found: y.len(),
                    })
                }
                _ => {}
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("pushforward produced non-finite point".into()));
            }
            coords.extend(y);
        }
        let dim = dim.unwrap_or(self.dim);
        if dim == 0 {
            return Err(Error::InvalidInput("pushforward map returned empty points".into()));
        }
        Ok(DiscreteMeasure {
            coords,
            weights: self.weights.clone(),
            dim,
        })
    }

    /// Copy with coincident points (within `tol`) merged and the support
    /// sorted lexicographically. Used only for set-wise comparisons.
    pub fn merged(&self, tol: T) -> Self {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            self.point(a)
                .iter()
                .zip(self.point(b))
                .map(|(x, y)| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut coords: Vec<T> = Vec::new();
        let mut weights: Vec<T> = Vec::new();
        for i in order {
            let x = self.point(i);
            let hit = coords.chunks_exact(self.dim).position(|y| vecops::dist(x, y) <= tol);
            match hit {
                Some(j) => weights[j] = weights[j] + self.weights[i],
                None => {
                    coords.extend_from_slice(x);
                    weights.push(self.weights[i]);
                }
            }
        }
        DiscreteMeasure {
            coords,
            weights,
            dim: self.dim,
        }
    }

    /// Whether both measures are the same weighted point set after merging
    /// coincident points.
    pub fn same_support(&self, other: &Self, tol: T) -> bool {
        if self.dim != other.dim {
            return false;
        }
        let a = self.merged(tol);
        let b = other.merged(tol);
        if a.len() != b.len() {
            return false;
        }
        let mut used = vec![false; b.len()];
        for i in 0..a.len() {
            let found = (0..b.len()).find(|&j| {
                !used[j] && vecops::dist(a.point(i), b.point(j)) <= tol && (a.weights[i] - b.weights[j]).abs() <= tol
            });
            match found {
                Some(j) => used[j] = true,
                None => return false,
            }
        }
        true
    }

    /// Axis-aligned bounding box `(lower, upper)`.
    pub fn bounding_box(&self) -> (Vec<T>, Vec<T>) {
        let mut lo = vec![T::infinity(); self.dim];
        let mut hi = vec![T::neg_infinity(); self.dim];
        for x in self.points() {
            for k in 0..self.dim {
                lo[k] = lo[k].min(x[k]);
                hi[k] = hi[k].max(x[k]);
            }
        }
        (lo, hi)
    }

    /// Weighted barycenter.
    pub fn mean(&self) -> Vec<T> {
        let mut m = vec![T::zero(); self.dim];
        for (x, &w) in self.points().zip(&self.weights) {
            for k in 0..self.dim {
                m[k] = m[k] + w * x[k];
            }
        }
        m
    }
}
