//! Transportation simplex (MODI / stepping-stone) on a dense cost matrix.
//!
//! The basis is kept as a spanning tree of the bipartite supply/demand graph
//! with exactly `n + m - 1` cells, some of which may carry zero mass.
//! Pricing is Dantzig's rule; after a run of degenerate pivots the solver
//! switches to Bland's smallest-index rule until progress resumes.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::scalar::Real;

const DEGENERATE_STREAK: usize = 32;

pub(crate) struct Solution<T> {
    pub mass: Vec<T>,
    pub cost: T,
}

struct Tableau<'a, T> {
    n: usize,
    m: usize,
    cost: &'a [T],
    flow: Vec<T>,
    basic: Vec<bool>,
    basis: Vec<(usize, usize)>,
}

impl<'a, T: Real> Tableau<'a, T> {
    fn northwest_corner(supply: &[T], demand: &[T], cost: &'a [T]) -> Self {
        let (n, m) = (supply.len(), demand.len());
        let mut flow = vec![T::zero(); n * m];
        let mut basic = vec![false; n * m];
        let mut basis = Vec::with_capacity(n + m - 1);
        let mut ra = supply.to_vec();
        let mut rb = demand.to_vec();
        let (mut i, mut j) = (0usize, 0usize);
        loop {
            let x = ra[i].min(rb[j]).max(T::zero());
            flow[i * m + j] = x;
            basic[i * m + j] = true;
            basis.push((i, j));
            ra[i] = ra[i] - x;
            rb[j] = rb[j] - x;
            if i == n - 1 && j == m - 1 {
                break;
            }
            if j == m - 1 || (i < n - 1 && ra[i] <= rb[j]) {
                i += 1;
            } else {
                j += 1;
            }
        }
        // Round-off left over from marginals that sum to one only up to
        // a few ulps lands on the last cell.
        let last = (n - 1) * m + (m - 1);
        flow[last] = (flow[last] + ra[n - 1].min(rb[m - 1]).max(T::zero())).max(T::zero());
        debug_assert_eq!(basis.len(), n + m - 1);
        Tableau {
            n,
            m,
            cost,
            flow,
            basic,
            basis,
        }
    }

    fn adjacency(&self) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
        let mut rows = vec![Vec::new(); self.n];
        let mut cols = vec![Vec::new(); self.m];
        for &(i, j) in &self.basis {
            rows[i].push(j);
            cols[j].push(i);
        }
        (rows, cols)
    }

    /// Dual potentials with `u_0 = 0` and `u_i + v_j = c_ij` on the basis.
    fn potentials(&self, rows: &[Vec<usize>], cols: &[Vec<usize>]) -> (Vec<T>, Vec<T>) {
        let mut u = vec![T::nan(); self.n];
        let mut v = vec![T::nan(); self.m];
        let mut seen_r = vec![false; self.n];
        let mut seen_c = vec![false; self.m];
        let mut queue = VecDeque::new();
        u[0] = T::zero();
        seen_r[0] = true;
        queue.push_back((true, 0usize));
        while let Some((is_row, k)) = queue.pop_front() {
            if is_row {
                for &j in &rows[k] {
                    if !seen_c[j] {
                        seen_c[j] = true;
                        v[j] = self.cost[k * self.m + j] - u[k];
                        queue.push_back((false, j));
                    }
                }
            } else {
                for &i in &cols[k] {
                    if !seen_r[i] {
                        seen_r[i] = true;
                        u[i] = self.cost[i * self.m + k] - v[k];
                        queue.push_back((true, i));
                    }
                }
            }
        }
        (u, v)
    }

    /// Tree path from row `i` to column `j` as a list of basic cells.
    fn tree_path(&self, rows: &[Vec<usize>], cols: &[Vec<usize>], i: usize, j: usize) -> Vec<(usize, usize)> {
        // Node ids: rows 0..n, columns n..n+m.
        let total = self.n + self.m;
        let mut parent = vec![usize::MAX; total];
        let mut queue = VecDeque::new();
        parent[i] = i;
        queue.push_back(i);
        let target = self.n + j;
        while let Some(node) = queue.pop_front() {
            if node == target {
                break;
            }
            if node < self.n {
                for &c in &rows[node] {
                    let id = self.n + c;
                    if parent[id] == usize::MAX {
                        parent[id] = node;
                        queue.push_back(id);
                    }
                }
            } else {
                for &r in &cols[node - self.n] {
                    if parent[r] == usize::MAX {
                        parent[r] = node;
                        queue.push_back(r);
                    }
                }
            }
        }
        let mut cells = Vec::new();
        let mut node = target;
        while node != i {
            let par = parent[node];
            if node >= self.n {
                cells.push((par, node - self.n));
            } else {
                cells.push((node, par - self.n));
            }
            node = par;
        }
        cells.reverse();
        cells
    }
}

pub(crate) fn solve<T: Real>(supply: &[T], demand: &[T], cost: &[T]) -> Result<Solution<T>> {
    let (n, m) = (supply.len(), demand.len());
    if n == 0 || m == 0 {
        return Err(Error::EmptyMeasure);
    }
    assert_eq!(cost.len(), n * m);
    let mut tab = Tableau::northwest_corner(supply, demand, cost);
    let cmax = cost.iter().fold(T::one(), |a, &c| a.max(c.abs()));
    let eps = T::tol(1e-12) * cmax;
    let max_pivots = 50 * n * m + 1000;
    let mut degenerate = 0usize;
    let mut pivots = 0usize;

    loop {
        let (rows, cols) = tab.adjacency();
        let (u, v) = tab.potentials(&rows, &cols);
        let bland = degenerate >= DEGENERATE_STREAK;
        let mut entering: Option<(usize, usize)> = None;
        let mut best = -eps;
        'scan: for i in 0..n {
            for j in 0..m {
                let k = i * m + j;
                if tab.basic[k] {
                    continue;
                }
                let r = cost[k] - u[i] - v[j];
                if r.is_nan() {
                    return Err(Error::SolverFailure("non-finite reduced cost".into()));
                }
                if r < best {
                    entering = Some((i, j));
                    if bland {
                        break 'scan;
                    }
                    best = r;
                }
            }
        }
        let Some((ie, je)) = entering else { break };
        if pivots >= max_pivots {
            return Err(Error::SolverFailure(format!("pivot limit {max_pivots} reached")));
        }
        pivots += 1;

        let path = tab.tree_path(&rows, &cols, ie, je);
        // Even positions along the path lose mass, odd positions gain.
        let mut theta = T::infinity();
        let mut leave_pos = usize::MAX;
        let mut leave_key = usize::MAX;
        for (pos, &(i, j)) in path.iter().enumerate() {
            if pos % 2 == 0 {
                let x = tab.flow[i * m + j];
                let key = i * m + j;
                if x < theta || (x == theta && key < leave_key) {
                    theta = x;
                    leave_pos = pos;
                    leave_key = key;
                }
            }
        }
        if leave_pos == usize::MAX {
            return Err(Error::SolverFailure("no leaving cell on pivot cycle".into()));
        }
        for (pos, &(i, j)) in path.iter().enumerate() {
            let k = i * m + j;
            tab.flow[k] = if pos % 2 == 0 {
                (tab.flow[k] - theta).max(T::zero())
            } else {
                tab.flow[k] + theta
            };
        }
        let (li, lj) = path[leave_pos];
        tab.flow[li * m + lj] = T::zero();
        tab.flow[ie * m + je] = theta;
        tab.basic[li * m + lj] = false;
        tab.basic[ie * m + je] = true;
        let slot = tab
            .basis
            .iter()
            .position(|&c| c == (li, lj))
            .expect("leaving cell is basic");
        tab.basis[slot] = (ie, je);

        if theta > T::zero() {
            degenerate = 0;
        } else {
            degenerate += 1;
        }
    }

    let total = tab.flow.iter().zip(cost).map(|(&x, &c)| x * c).sum();
    Ok(Solution {
        mass: tab.flow,
        cost: total,
    })
}
