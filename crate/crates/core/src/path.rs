//! Particle trajectories and weighted ensembles of them on a uniform grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::scalar::Real;

/// One trajectory sampled at `s_i = t_start + i (t_end - t_start) / N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PathRepr<T>", into = "PathRepr<T>", bound = "T: Real")]
pub struct ParticlePath<T: Real> {
    t_start: T,
    t_end: T,
    coords: Vec<T>,
    dim: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct PathRepr<T: Real> {
    t_start: T,
    t_end: T,
    positions: Vec<Vec<T>>,
}

impl<T: Real> TryFrom<PathRepr<T>> for ParticlePath<T> {
    type Error = Error;

    fn try_from(r: PathRepr<T>) -> Result<Self> {
        ParticlePath::new(r.t_start, r.t_end, r.positions)
    }
}

impl<T: Real> From<ParticlePath<T>> for PathRepr<T> {
    fn from(p: ParticlePath<T>) -> Self {
        PathRepr {
            t_start: p.t_start,
            t_end: p.t_end,
            positions: p.positions(),
        }
    }
}

impl<T: Real> ParticlePath<T> {
    pub fn new(t_start: T, t_end: T, positions: Vec<Vec<T>>) -> Result<Self> {
        if positions.len() < 2 {
            return Err(Error::InvalidInput("a path needs at least two nodes".into()));
        }
        if !(t_end >= t_start) || !t_start.is_finite() || !t_end.is_finite() {
            return Err(Error::InvalidInput(format!("bad time interval [{t_start}, {t_end}]")));
        }
        let dim = positions[0].len();
        if dim == 0 {
            return Err(Error::InvalidInput("zero-dimensional positions".into()));
        }
        let mut coords = Vec::with_capacity(positions.len() * dim);
        for x in &positions {
            if x.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: x.len(),
                });
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("non-finite path position".into()));
            }
            coords.extend_from_slice(x);
        }
        Ok(ParticlePath {
            t_start,
            t_end,
            coords,
            dim,
        })
    }

    pub(crate) fn from_flat(t_start: T, t_end: T, coords: Vec<T>, dim: usize) -> Self {
        debug_assert!(coords.len() >= 2 * dim && coords.len() % dim == 0);
        ParticlePath {
            t_start,
            t_end,
            coords,
            dim,
        }
    }

    /// The path that stays at `x` for all times.
    pub fn constant(x: &[T], t_start: T, t_end: T, steps: usize) -> Self {
        let steps = steps.max(1);
        let coords = x.iter().copied().cycle().take((steps + 1) * x.len()).collect();
        Self::from_flat(t_start, t_end, coords, x.len())
    }

    /// Samples `s ↦ f(s)` on the grid.
    pub fn from_fn(t_start: T, t_end: T, steps: usize, f: impl Fn(T) -> Vec<T>) -> Result<Self> {
        let steps = steps.max(1);
        let dt = (t_end - t_start) / T::from_usize_lossy(steps);
        let positions = (0..=steps).map(|i| f(t_start + dt * T::from_usize_lossy(i))).collect();
        Self::new(t_start, t_end, positions)
    }

    /// Number of intervals `N`.
    pub fn steps(&self) -> usize {
        self.coords.len() / self.dim - 1
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t_start(&self) -> T {
        self.t_start
    }

    pub fn t_end(&self) -> T {
        self.t_end
    }

    pub fn dt(&self) -> T {
        (self.t_end - self.t_start) / T::from_usize_lossy(self.steps())
    }

    pub fn time(&self, i: usize) -> T {
        self.t_start + self.dt() * T::from_usize_lossy(i)
    }

    pub fn node(&self, i: usize) -> &[T] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn start(&self) -> &[T] {
        self.node(0)
    }

    pub fn end(&self) -> &[T] {
        self.node(self.steps())
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    pub fn positions(&self) -> Vec<Vec<T>> {
        self.coords.chunks(self.dim).map(<[T]>::to_vec).collect()
    }

    /// Forward-difference velocity on interval `i < N`.
    pub fn velocity(&self, i: usize) -> Vec<T> {
        let dt = self.dt();
        let a = self.node(i);
        let b = self.node(i + 1);
        a.iter().zip(b).map(|(&x, &y)| (y - x) / dt).collect()
    }

    /// Midpoint of interval `i < N`.
    pub fn midpoint(&self, i: usize) -> Vec<T> {
        let two = T::lit(2.0);
        let a = self.node(i);
        let b = self.node(i + 1);
        a.iter().zip(b).map(|(&x, &y)| (x + y) / two).collect()
    }

    /// Nodes `i0..=i1` as a path on `[s_{i0}, s_{i1}]`.
    pub fn slice(&self, i0: usize, i1: usize) -> Result<Self> {
        if i0 >= i1 || i1 > self.steps() {
            return Err(Error::InvalidInput(format!("bad node range {i0}..={i1}")));
        }
        Ok(Self::from_flat(
            self.time(i0),
            self.time(i1),
            self.coords[i0 * self.dim..(i1 + 1) * self.dim].to_vec(),
            self.dim,
        ))
    }
}

/// Weighted family of particle paths on one shared time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EnsembleRepr<T>", into = "EnsembleRepr<T>", bound = "T: Real")]
pub struct EnsemblePath<T: Real> {
    weights: Vec<T>,
    paths: Vec<ParticlePath<T>>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct EnsembleRepr<T: Real> {
    weights: Vec<T>,
    paths: Vec<ParticlePath<T>>,
}

impl<T: Real> TryFrom<EnsembleRepr<T>> for EnsemblePath<T> {
    type Error = Error;

    fn try_from(r: EnsembleRepr<T>) -> Result<Self> {
        EnsemblePath::new(r.weights, r.paths)
    }
}

impl<T: Real> From<EnsemblePath<T>> for EnsembleRepr<T> {
    fn from(e: EnsemblePath<T>) -> Self {
        EnsembleRepr {
            weights: e.weights,
            paths: e.paths,
        }
    }
}

impl<T: Real> EnsemblePath<T> {
    pub fn new(weights: Vec<T>, paths: Vec<ParticlePath<T>>) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        if weights.len() != paths.len() {
            return Err(Error::InvalidInput(format!(
                "{} weights for {} paths",
                weights.len(),
                paths.len()
            )));
        }
        let first = &paths[0];
        for p in &paths[1..] {
            if p.dim() != first.dim() {
                return Err(Error::DimensionMismatch {
                    expected: first.dim(),
                    found: p.dim(),
                });
            }
            if p.steps() != first.steps() || p.t_start() != first.t_start() || p.t_end() != first.t_end() {
                return Err(Error::InvalidInput("paths do not share a time grid".into()));
            }
        }
        // Validates the weights.
        DiscreteMeasure::from_probability(vec![first.start().to_vec(); weights.len()], weights.clone())?;
        if weights.iter().any(|&w| !(w > T::zero())) {
            return Err(Error::InvalidInput("ensemble weights must be positive".into()));
        }
        Ok(EnsemblePath { weights, paths })
    }

    /// Every particle of `mu` at rest over `[0, t]`.
    pub fn stationary(mu: &DiscreteMeasure<T>, t: T, steps: usize) -> Self {
        EnsemblePath {
            weights: mu.weights().to_vec(),
            paths: mu
                .points()
                .map(|x| ParticlePath::constant(x, T::zero(), t, steps))
                .collect(),
        }
    }

    /// Particle `k` follows `s ↦ flow(x_k, s)` on `[0, t]`.
    pub fn from_flow(
        mu: &DiscreteMeasure<T>,
        t: T,
        steps: usize,
        flow: impl Fn(&[T], T) -> Result<Vec<T>>,
    ) -> Result<Self> {
        let steps = steps.max(1);
        let dt = t / T::from_usize_lossy(steps);
        let mut paths = Vec::with_capacity(mu.len());
        for x in mu.points() {
            let mut pos = Vec::with_capacity(steps + 1);
            for i in 0..=steps {
                pos.push(flow(x, dt * T::from_usize_lossy(i))?);
            }
            paths.push(ParticlePath::new(T::zero(), t, pos)?);
        }
        Ok(EnsemblePath {
            weights: mu.weights().to_vec(),
            paths,
        })
    }

    pub(crate) fn from_parts(weights: Vec<T>, paths: Vec<ParticlePath<T>>) -> Self {
        EnsemblePath { weights, paths }
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn paths(&self) -> &[ParticlePath<T>] {
        &self.paths
    }

    pub fn path(&self, k: usize) -> &ParticlePath<T> {
        &self.paths[k]
    }

    pub fn dim(&self) -> usize {
        self.paths[0].dim()
    }

    pub fn steps(&self) -> usize {
        self.paths[0].steps()
    }

    pub fn dt(&self) -> T {
        self.paths[0].dt()
    }

    pub fn t_start(&self) -> T {
        self.paths[0].t_start()
    }

    pub fn t_end(&self) -> T {
        self.paths[0].t_end()
    }

    pub fn time(&self, i: usize) -> T {
        self.paths[0].time(i)
    }

    /// `σ(s_i)`.
    pub fn snapshot(&self, i: usize) -> DiscreteMeasure<T> {
        let coords = self.paths.iter().flat_map(|p| p.node(i).iter().copied()).collect();
        DiscreteMeasure::from_parts(coords, self.weights.clone(), self.dim())
    }

    /// Snapshot at the midpoint of interval `i`.
    pub fn midpoint_snapshot(&self, i: usize) -> DiscreteMeasure<T> {
        let coords = self.paths.iter().flat_map(|p| p.midpoint(i)).collect();
        DiscreteMeasure::from_parts(coords, self.weights.clone(), self.dim())
    }

    /// Weighted kinetic bound `(Σ_k w_k |v_k|^p)^{1/p}` on interval `i`.
    pub fn kinetic_speed(&self, i: usize, p: T) -> T {
        let s: T = self
            .paths
            .iter()
            .zip(&self.weights)
            .map(|(path, &w)| w * crate::vecops::pow_abs(crate::vecops::norm(&path.velocity(i)), p))
            .sum();
        s.powf(p.recip())
    }

    /// Nodes `i0..=i1` of every particle.
    pub fn slice(&self, i0: usize, i1: usize) -> Result<Self> {
        Ok(EnsemblePath {
            weights: self.weights.clone(),
            paths: self.paths.iter().map(|p| p.slice(i0, i1)).collect::<Result<_>>()?,
        })
    }
}
