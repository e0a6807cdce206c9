//! Exact `W_p` distances between discrete measures.
//!
//! Distances are computed from an exact transportation simplex, so every
//! plan returned by [`wasserstein`] is an optimal vertex of the transport
//! polytope and can be used as a certificate of membership in the set of
//! optimal couplings.

mod simplex;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::scalar::Real;
use crate::vecops;

/// Marginal tolerance for a valid plan.
pub const MARGINAL_TOL: f64 = 1e-9;

/// Entries at or below this mass are treated as absent when interpolating.
const MASS_FLOOR: f64 = 1e-15;

/// A coupling between two discrete measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlanRepr<T>", into = "PlanRepr<T>", bound = "T: Real")]
pub struct TransportPlan<T: Real> {
    source: DiscreteMeasure<T>,
    target: DiscreteMeasure<T>,
    /// Row-major `n × m`.
    mass: Vec<T>,
    p: T,
    certified: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct PlanRepr<T: Real> {
    mass: Vec<Vec<T>>,
    p: T,
    source: DiscreteMeasure<T>,
    target: DiscreteMeasure<T>,
}

impl<T: Real> TryFrom<PlanRepr<T>> for TransportPlan<T> {
    type Error = Error;
    fn try_from(r: PlanRepr<T>) -> Result<Self> {
        let m = r.target.len();
        if r.mass.iter().any(|row| row.len() != m) {
            return Err(Error::InvalidInput("ragged mass matrix".into()));
        }
        TransportPlan::new(r.source, r.target, r.mass.concat(), r.p)
    }
}

impl<T: Real> From<TransportPlan<T>> for PlanRepr<T> {
    fn from(plan: TransportPlan<T>) -> Self {
        let m = plan.target.len();
        PlanRepr {
            mass: plan.mass.chunks(m).map(<[T]>::to_vec).collect(),
            p: plan.p,
            source: plan.source,
            target: plan.target,
        }
    }
}

impl<T: Real> TransportPlan<T> {
    /// Validates marginals and nonnegativity. The plan starts uncertified.
    pub fn new(source: DiscreteMeasure<T>, target: DiscreteMeasure<T>, mass: Vec<T>, p: T) -> Result<Self> {
        let (n, m) = (source.len(), target.len());
        if source.dim() != target.dim() {
            return Err(Error::DimensionMismatch {
                expected: source.dim(),
                found: target.dim(),
            });
        }
        if mass.len() != n * m {
            return Err(Error::InvalidInput(format!(
                "mass has {} entries, expected {}",
                mass.len(),
                n * m
            )));
        }
        if mass.iter().any(|&x| !(x >= T::zero()) || !x.is_finite()) {
            return Err(Error::InvalidInput("plan entries must be nonnegative".into()));
        }
        if !(p >= T::one()) {
            return Err(Error::InvalidInput("cost exponent must be ≥ 1".into()));
        }
        let tol = T::tol(MARGINAL_TOL);
        for i in 0..n {
            let row: T = mass[i * m..(i + 1) * m].iter().copied().sum();
            if (row - source.weight(i)).abs() > tol {
                return Err(Error::InvalidInput(format!("row {i} marginal mismatch")));
            }
        }
        for j in 0..m {
            let col: T = (0..n).map(|i| mass[i * m + j]).sum();
            if (col - target.weight(j)).abs() > tol {
                return Err(Error::InvalidInput(format!("column {j} marginal mismatch")));
            }
        }
        Ok(TransportPlan {
            source,
            target,
            mass,
            p,
            certified: false,
        })
    }

    /// The plan `(id × r)_# μ` pairing particle `i` of `source` with
    /// particle `i` of `target` (which must have equal weights).
    pub fn identity_coupling(source: DiscreteMeasure<T>, target: DiscreteMeasure<T>, p: T) -> Result<Self> {
        let n = source.len();
        if target.len() != n {
            return Err(Error::InvalidInput(
                "identity coupling needs equal particle counts".into(),
            ));
        }
        let mut mass = vec![T::zero(); n * n];
        for i in 0..n {
            mass[i * n + i] = source.weight(i);
        }
        TransportPlan::new(source, target, mass, p)
    }

    pub fn source(&self) -> &DiscreteMeasure<T> {
        &self.source
    }

    pub fn target(&self) -> &DiscreteMeasure<T> {
        &self.target
    }

    pub fn p(&self) -> T {
        self.p
    }

    pub fn mass(&self, i: usize, j: usize) -> T {
        self.mass[i * self.target.len() + j]
    }

    /// Row-major mass matrix.
    pub fn mass_matrix(&self) -> &[T] {
        &self.mass
    }

    pub fn is_certified(&self) -> bool {
        self.certified
    }

    /// `Σ π_ij |x_i - y_j|^p`.
    pub fn cost(&self) -> T {
        let m = self.target.len();
        let mut total = T::zero();
        for (i, x) in self.source.points().enumerate() {
            for (j, y) in self.target.points().enumerate() {
                let w = self.mass[i * m + j];
                if w > T::zero() {
                    total = total + w * vecops::pow_abs(vecops::dist(x, y), self.p);
                }
            }
        }
        total
    }

    /// Checks optimality against a fresh LP solve and records the result.
    pub fn certify(&mut self, tol: T) -> Result<()> {
        if is_optimal_plan(self, tol) {
            self.certified = true;
            Ok(())
        } else {
            Err(Error::NotOptimal)
        }
    }

    /// Iterator over `(i, j, mass)` for entries above the mass floor.
    pub fn support(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        let m = self.target.len();
        let floor = T::lit(MASS_FLOOR);
        self.mass
            .iter()
            .enumerate()
            .filter(move |(_, &w)| w > floor)
            .map(move |(k, &w)| (k / m, k % m, w))
    }
}

/// `|x_i - y_j|^p` for all pairs, row major.
pub fn cost_matrix<T: Real>(mu: &DiscreteMeasure<T>, nu: &DiscreteMeasure<T>, p: T) -> Vec<T> {
    let mut c = Vec::with_capacity(mu.len() * nu.len());
    for x in mu.points() {
        for y in nu.points() {
            c.push(vecops::pow_abs(vecops::dist(x, y), p));
        }
    }
    c
}

/// Exact `W_p(μ, ν)` and an optimal plan.
pub fn wasserstein<T: Real>(mu: &DiscreteMeasure<T>, nu: &DiscreteMeasure<T>, p: T) -> Result<(T, TransportPlan<T>)> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            found: nu.dim(),
        });
    }
    let cost = cost_matrix(mu, nu, p);
    let sol = simplex::solve(mu.weights(), nu.weights(), &cost)?;
    let total = sol.cost.max(T::zero());
    let plan = TransportPlan {
        source: mu.clone(),
        target: nu.clone(),
        mass: sol.mass,
        p,
        certified: true,
    };
    Ok((total.powf(p.recip()), plan))
}

/// `W_p(μ, ν)^p` without building a plan.
pub fn wasserstein_cost<T: Real>(mu: &DiscreteMeasure<T>, nu: &DiscreteMeasure<T>, p: T) -> Result<T> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            found: nu.dim(),
        });
    }
    let cost = cost_matrix(mu, nu, p);
    Ok(simplex::solve(mu.weights(), nu.weights(), &cost)?.cost.max(T::zero()))
}

/// `W_p(μ, ν)`.
pub fn wasserstein_distance<T: Real>(mu: &DiscreteMeasure<T>, nu: &DiscreteMeasure<T>, p: T) -> Result<T> {
    Ok(wasserstein_cost(mu, nu, p)?.powf(p.recip()))
}

/// Exhaustive minimum over permutation couplings between two uniform
/// measures with the same number of particles (at most 8).
pub fn brute_force_wasserstein<T: Real>(mu: &DiscreteMeasure<T>, nu: &DiscreteMeasure<T>, p: T) -> Result<T> {
    let n = mu.len();
    if n > 8 || nu.len() > 8 {
        return Err(Error::TooLarge(n.max(nu.len())));
    }
    let uniform = |m: &DiscreteMeasure<T>| {
        let w = T::one() / T::from_usize_lossy(m.len());
        m.weights().iter().all(|&x| (x - w).abs() <= T::tol(1e-12))
    };
    if nu.len() != n || !uniform(mu) || !uniform(nu) {
        return Err(Error::NonUniform);
    }
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            found: nu.dim(),
        });
    }
    let cost = cost_matrix(mu, nu, p);
    let best = (0..n)
        .permutations(n)
        .map(|perm| perm.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum::<T>())
        .fold(T::infinity(), T::min);
    Ok((best / T::from_usize_lossy(n)).powf(p.recip()))
}

/// Whether the plan's cost is within `tol` of the optimal transport cost.
pub fn is_optimal_plan<T: Real>(plan: &TransportPlan<T>, tol: T) -> bool {
    match wasserstein_cost(&plan.source, &plan.target, plan.p) {
        Ok(opt) => plan.cost() <= opt + tol,
        Err(_) => false,
    }
}

/// Point `(1-s) x_i + s y_j` with mass `π_ij` for each supported entry.
pub fn displacement_interpolate<T: Real>(plan: &TransportPlan<T>, s: T) -> Result<DiscreteMeasure<T>> {
    if !plan.certified {
        return Err(Error::NotOptimal);
    }
    if !(s >= T::zero() && s <= T::one()) {
        return Err(Error::InvalidInput("interpolation parameter outside [0, 1]".into()));
    }
    let d = plan.source.dim();
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    for (i, j, w) in plan.support() {
        let x = plan.source.point(i);
        let y = plan.target.point(j);
        coords.extend((0..d).map(|k| (T::one() - s) * x[k] + s * y[k]));
        weights.push(w);
    }
    let total: T = weights.iter().copied().sum();
    weights.iter_mut().for_each(|w| *w = *w / total);
    Ok(DiscreteMeasure::from_parts(coords, weights, d))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[f64]) -> DiscreteMeasure<f64> {
        DiscreteMeasure::uniform(points.iter().map(|&x| vec![x]).collect()).unwrap()
    }

    #[test]
    fn diracs() {
        let a = DiscreteMeasure::dirac(vec![0.0f64, 0.0]);
        let b = DiscreteMeasure::dirac(vec![3.0f64, 4.0]);
        for p in [1.0, 1.5, 2.0, 3.0] {
            let (d, plan) = wasserstein(&a, &b, p).unwrap();
            assert!((d - 5.0).abs() < 1e-12);
            assert!(is_optimal_plan(&plan, 1e-12));
        }
    }

    #[test]
    fn identical_measures_have_diagonal_plan() {
        let m = line(&[0.0, 1.0, 2.5]);
        let (d, plan) = wasserstein(&m, &m, 2.0).unwrap();
        assert_eq!(d, 0.0);
        for (i, j, _) in plan.support() {
            assert_eq!(i, j);
        }
    }

    #[test]
    fn brute_force_small_cases() {
        let a = line(&[0.0]);
        let b = line(&[1.0]);
        assert!((brute_force_wasserstein(&a, &b, 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(
            brute_force_wasserstein(&line(&[0.0, 1.0]), &line(&[1.0, 0.0]), 2.0).unwrap(),
            0.0
        );
        let big = line(&[0.0; 9].iter().enumerate().map(|(i, _)| i as f64).collect::<Vec<_>>());
        assert_eq!(brute_force_wasserstein(&big, &big, 2.0), Err(Error::TooLarge(9)));
        let skew = DiscreteMeasure::new(vec![vec![0.0], vec![1.0]], vec![1.0, 2.0]).unwrap();
        assert_eq!(brute_force_wasserstein(&skew, &skew, 2.0), Err(Error::NonUniform));
    }

    #[test]
    fn crossed_coupling_is_not_optimal() {
        let m = line(&[0.0, 1.0]);
        let crossed = TransportPlan::new(m.clone(), m.clone(), vec![0.0, 0.5, 0.5, 0.0], 2.0).unwrap();
        assert!((crossed.cost() - 1.0).abs() < 1e-15);
        assert!(!is_optimal_plan(&crossed, 1e-9));
        let straight = TransportPlan::identity_coupling(m.clone(), m, 2.0).unwrap();
        assert!(is_optimal_plan(&straight, 1e-9));
    }

    #[test]
    fn unique_coupling_between_diracs_is_optimal() {
        let a = DiscreteMeasure::dirac(vec![1.0f64]);
        let b = DiscreteMeasure::dirac(vec![-4.0f64]);
        let plan = TransportPlan::new(a, b, vec![1.0], 3.0).unwrap();
        assert!(is_optimal_plan(&plan, 0.0));
    }

    #[test]
    fn plan_validation() {
        let m = line(&[0.0, 1.0]);
        assert!(TransportPlan::new(m.clone(), m.clone(), vec![0.5, 0.0, 0.0, 0.4], 2.0).is_err());
        assert!(TransportPlan::new(m.clone(), m.clone(), vec![0.6, -0.1, -0.1, 0.6], 2.0).is_err());
    }

    #[test]
    fn interpolation_endpoints_and_midpoint() {
        let a = DiscreteMeasure::dirac(vec![0.0f64]);
        let b = DiscreteMeasure::dirac(vec![2.0f64]);
        let (_, plan) = wasserstein(&a, &b, 2.0).unwrap();
        assert_eq!(displacement_interpolate(&plan, 0.5).unwrap().point(0), &[1.0]);
        let src = line(&[0.0, 3.0]);
        let tgt = line(&[1.0, 2.0, 5.0]);
        let (_, plan) = wasserstein(&src, &tgt, 2.0).unwrap();
        assert!(displacement_interpolate(&plan, 0.0).unwrap().same_support(&src, 1e-12));
        assert!(displacement_interpolate(&plan, 1.0).unwrap().same_support(&tgt, 1e-12));
    }

    #[test]
    fn interpolation_requires_certificate() {
        let m = line(&[0.0, 1.0]);
        let mut plan = TransportPlan::identity_coupling(m.clone(), m.clone(), 2.0).unwrap();
        assert_eq!(displacement_interpolate(&plan, 0.5), Err(Error::NotOptimal));
        plan.certify(1e-9).unwrap();
        assert!(displacement_interpolate(&plan, 0.5).is_ok());
        let mut crossed = TransportPlan::new(m.clone(), m, vec![0.0, 0.5, 0.5, 0.0], 2.0).unwrap();
        assert_eq!(crossed.certify(1e-9), Err(Error::NotOptimal));
    }

    #[test]
    fn plan_json_shape() {
        let a = DiscreteMeasure::dirac(vec![0.0f64]);
        let b = DiscreteMeasure::dirac(vec![1.0f64]);
        let (_, plan) = wasserstein(&a, &b, 2.0).unwrap();
        let s = serde_json::to_string(&plan).unwrap();
        assert_eq!(
            s,
            r#"{"mass":[[1.0]],"p":2.0,"source":{"points":[[0.0]],"weights":[1.0]},"target":{"points":[[1.0]],"weights":[1.0]}}"#
        );
        let back: TransportPlan<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back.cost(), plan.cost());
        assert!(!back.is_certified());
    }

    #[test]
    fn single_precision_distance() {
        let a = DiscreteMeasure::<f32>::uniform(vec![vec![0.0], vec![1.0]]).unwrap();
        let b = DiscreteMeasure::<f32>::uniform(vec![vec![0.5], vec![2.0]]).unwrap();
        let d = wasserstein_distance(&a, &b, 2.0f32).unwrap();
        assert!((d - (0.5f32 * 0.25 + 0.5 * 1.0).sqrt()).abs() < 1e-6);
    }
}
