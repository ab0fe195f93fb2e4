//! Exact minimizer of the weighted check-loss `sum_i w_i rho_tau(y_i - x_i'theta)`.
//!
//! The objective is convex and piecewise linear; every vertex of its epigraph
//! is a basic solution that interpolates `k` observations. The solver walks
//! between adjacent basic solutions (simplex-style pivoting): from a basis it
//! evaluates the exact one-sided directional derivative along every edge,
//! follows the steepest descending edge, and stops at the breakpoint of the
//! piecewise-linear line objective where the slope turns non-negative (a
//! weighted median step). Each step strictly lowers the objective, so the walk
//! terminates at a global minimizer. Degenerate vertices (more than `k` zero
//! residuals) get a full edge enumeration before optimality is declared.
//!
//! When the minimizer set is not a single point, zero-slope edges that
//! decrease the parameter vector lexicographically are followed until none
//! remains, so the reported solution is the lexicographically smallest
//! minimizer.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on edges examined at one degenerate vertex.
const MAX_DEGENERATE_EDGES: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    /// No descending edge remains: the basic solution is a global minimizer.
    Optimal,
    /// Degenerate vertex with too many edges to enumerate; optimality along
    /// the basis edges only.
    DegenerateUnverified,
    IterationLimit,
    /// The objective stopped decreasing (numerical trouble).
    Stalled,
}

impl SolverStatus {
    pub fn is_optimal(self) -> bool {
        matches!(self, SolverStatus::Optimal)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    #[serde(rename = "iters")]
    pub iterations: usize,
    pub status: SolverStatus,
    /// Primal objective minus the dual objective of the final basis.
    pub gap: f64,
    /// Largest violation of the dual box constraints at the final basis,
    /// relative to the observation weight. Zero at a nondegenerate optimum.
    #[serde(skip)]
    pub dual_infeasibility: f64,
}

/// Row-major design with strictly positive observation weights.
#[derive(Debug, Clone, Copy)]
pub struct LinearProblem<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub w: &'a [f64],
    pub k: usize,
}

impl LinearProblem<'_> {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.k..(i + 1) * self.k]
    }

    fn dot(&self, i: usize, v: &[f64]) -> f64 {
        self.row(i).iter().zip(v).map(|(a, b)| a * b).sum()
    }

    pub fn objective(&self, theta: &[f64], tau: f64) -> f64 {
        (0..self.n())
            .map(|i| self.w[i] * rho(self.y[i] - self.dot(i, theta), tau))
            .sum()
    }
}

#[inline]
pub(crate) fn rho(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        u * (tau - 1.0)
    } else {
        u * tau
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub theta: Vec<f64>,
    pub objective: f64,
    pub basis: Vec<usize>,
    pub report: SolverReport,
}

struct Edge {
    dir: Vec<f64>,
    slope: f64,
    /// Basis rows that stay interpolated along the edge.
    keep: Vec<usize>,
}

struct State<'a> {
    p: LinearProblem<'a>,
    tau: f64,
    basis: Vec<usize>,
    theta: Vec<f64>,
    resid: Vec<f64>,
    zero: Vec<bool>,
    /// Weighted score of the non-zero residuals: `sum w_i psi(r_i) x_i`.
    score: Vec<f64>,
    binv: DMatrix<f64>,
    /// Scale used for slope tolerances: `sum_i w_i * max_j |x_ij|`.
    slope_scale: f64,
}

/// Minimizes the weighted check loss. `start` seeds the initial basis: the
/// `k` independent rows with the smallest residuals at `start` (least squares
/// when absent).
pub fn solve(p: LinearProblem<'_>, tau: f64, start: Option<&[f64]>) -> Result<Solution> {
    let n = p.n();
    let k = p.k;
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidInput(format!(
            "tau must lie in (0, 1), got {tau}"
        )));
    }
    if p.x.len() != n * k || p.w.len() != n {
        return Err(Error::InvalidInput("design dimensions do not match".into()));
    }
    if k == 0 || n < k {
        return Err(Error::InvalidInput(format!(
            "need at least {k} observations, got {n}"
        )));
    }
    if p.w.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::InvalidInput(
            "observation weights must be positive".into(),
        ));
    }
    if p.x.iter().chain(p.y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "design contains non-finite values".into(),
        ));
    }

    let theta0 = match start {
        Some(s) if s.len() == k => s.to_vec(),
        _ => least_squares(&p)?,
    };
    let basis = initial_basis(&p, &theta0)?;
    let slope_scale = (0..n)
        .map(|i| p.w[i] * p.row(i).iter().fold(0.0f64, |m, v| m.max(v.abs())))
        .sum::<f64>()
        .max(f64::MIN_POSITIVE);
    let mut st = State {
        p,
        tau,
        basis,
        theta: vec![0.0; k],
        resid: vec![0.0; n],
        zero: vec![false; n],
        score: vec![0.0; k],
        binv: DMatrix::zeros(k, k),
        slope_scale,
    };
    st.refresh()?;

    let max_iter = 20 * n + 1000;
    let mut iterations = 0;
    let mut status = SolverStatus::Optimal;
    let mut best = st.objective();
    let mut stalls = 0;

    // descent phase
    loop {
        if iterations >= max_iter {
            status = SolverStatus::IterationLimit;
            break;
        }
        let edge = match st.best_basis_edge() {
            Some(e) if e.slope < -st.tol(&e.dir) => Some(e),
            _ => match st.degenerate_descent()? {
                DegenerateCheck::Descent(e) => Some(e),
                DegenerateCheck::Optimal => None,
                DegenerateCheck::TooMany => {
                    status = SolverStatus::DegenerateUnverified;
                    None
                }
            },
        };
        let Some(edge) = edge else { break };
        st.step(&edge)?;
        iterations += 1;
        let obj = st.objective();
        if obj < best - 1e-15 * best.abs() {
            best = obj;
            stalls = 0;
        } else {
            stalls += 1;
            if stalls > 50 {
                status = SolverStatus::Stalled;
                break;
            }
        }
    }

    // lexicographic tie-break over the optimal face
    if status == SolverStatus::Optimal {
        let mut moves = 0;
        while moves < max_iter {
            let Some(edge) = st.lex_decreasing_flat_edge()? else {
                break;
            };
            st.step(&edge)?;
            moves += 1;
        }
        iterations += moves;
    }

    let objective = st.objective();
    let (gap, dual_infeasibility) = st.dual_certificate(objective);
    Ok(Solution {
        theta: st.theta.clone(),
        objective,
        basis: st.basis.clone(),
        report: SolverReport {
            iterations,
            status,
            gap,
            dual_infeasibility,
        },
    })
}

enum DegenerateCheck {
    Optimal,
    Descent(Edge),
    TooMany,
}

impl State<'_> {
    fn objective(&self) -> f64 {
        (0..self.p.n())
            .filter(|&i| !self.zero[i])
            .map(|i| self.p.w[i] * rho(self.resid[i], self.tau))
            .sum()
    }

    fn tol(&self, dir: &[f64]) -> f64 {
        let norm1: f64 = dir.iter().map(|v| v.abs()).sum();
        1e-11 * self.slope_scale * norm1
    }

    /// Recomputes theta, residuals, zero set, score and basis inverse.
    fn refresh(&mut self) -> Result<()> {
        let k = self.p.k;
        let b = DMatrix::from_fn(k, k, |r, c| self.p.x[self.basis[r] * k + c]);
        let binv = b
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("basis matrix became singular".into()))?;
        let yb = DVector::from_iterator(k, self.basis.iter().map(|&i| self.p.y[i]));
        let mut theta = &binv * &yb;
        // one step of iterative refinement
        let corr = &binv * (&yb - &b * &theta);
        theta += corr;
        self.theta = theta.iter().copied().collect();
        self.binv = binv;

        self.score.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.p.n() {
            let fitted = self.p.dot(i, &self.theta);
            let r = self.p.y[i] - fitted;
            let scale: f64 = self.p.y[i].abs()
                + self
                    .p
                    .row(i)
                    .iter()
                    .zip(&self.theta)
                    .map(|(a, b)| (a * b).abs())
                    .sum::<f64>();
            let z = r.abs() <= 1e-11 * (scale + f64::MIN_POSITIVE);
            self.resid[i] = if z { 0.0 } else { r };
            self.zero[i] = z;
            if !z {
                let psi = if r < 0.0 { self.tau - 1.0 } else { self.tau };
                let wpsi = self.p.w[i] * psi;
                for (s, xv) in self.score.iter_mut().zip(self.p.row(i)) {
                    *s += wpsi * xv;
                }
            }
        }
        for &b in &self.basis {
            self.resid[b] = 0.0;
            if !self.zero[b] {
                // basic rows interpolate by construction; drop their score term
                let r = self.p.y[b] - self.p.dot(b, &self.theta);
                let psi = if r < 0.0 { self.tau - 1.0 } else { self.tau };
                let wpsi = self.p.w[b] * psi;
                for (s, xv) in self.score.iter_mut().zip(self.p.row(b)) {
                    *s -= wpsi * xv;
                }
                self.zero[b] = true;
            }
        }
        Ok(())
    }

    /// Exact right derivative of the objective along `dir`.
    fn slope(&self, dir: &[f64], zero_rows: &[usize]) -> f64 {
        let lin: f64 = -self.score.iter().zip(dir).map(|(a, b)| a * b).sum::<f64>();
        let kinks: f64 = zero_rows
            .iter()
            .map(|&i| self.p.w[i] * rho(-self.p.dot(i, dir), self.tau))
            .sum();
        lin + kinks
    }

    fn zero_rows(&self) -> Vec<usize> {
        (0..self.p.n()).filter(|&i| self.zero[i]).collect()
    }

    fn basis_edges(&self) -> Vec<Edge> {
        let k = self.p.k;
        let zero_rows = self.zero_rows();
        let mut edges = Vec::with_capacity(2 * k);
        for j in 0..k {
            for s in [1.0, -1.0] {
                let dir: Vec<f64> = (0..k).map(|r| s * self.binv[(r, j)]).collect();
                let slope = self.slope(&dir, &zero_rows);
                let keep = self
                    .basis
                    .iter()
                    .enumerate()
                    .filter(|(pos, _)| *pos != j)
                    .map(|(_, b)| *b)
                    .collect();
                edges.push(Edge { dir, slope, keep });
            }
        }
        edges
    }

    fn best_basis_edge(&self) -> Option<Edge> {
        self.basis_edges()
            .into_iter()
            .min_by(|a, b| a.slope.total_cmp(&b.slope))
    }

    /// Distinct zero-residual rows (identical rows collapse to one).
    fn distinct_zero_rows(&self) -> Vec<usize> {
        let mut reps: Vec<usize> = Vec::new();
        let mut zero: Vec<usize> = self.basis.clone();
        zero.extend((0..self.p.n()).filter(|i| self.zero[*i] && !self.basis.contains(i)));
        for i in zero {
            if !reps.iter().any(|&r| self.p.row(r) == self.p.row(i)) {
                reps.push(i);
            }
        }
        reps
    }

    /// Every edge of a degenerate vertex keeps `k - 1` independent zero rows
    /// interpolated; enumerate them all.
    fn degenerate_edges(&self) -> Option<Vec<Edge>> {
        let k = self.p.k;
        let reps = self.distinct_zero_rows();
        if reps.len() <= k {
            return Some(Vec::new());
        }
        if binomial(reps.len(), k - 1) > MAX_DEGENERATE_EDGES {
            return None;
        }
        let zero_rows = self.zero_rows();
        let mut edges = Vec::new();
        for subset in Combinations::new(reps.len(), k - 1) {
            let keep: Vec<usize> = subset.iter().map(|&s| reps[s]).collect();
            let Some(d) = null_direction(&self.p, &keep) else {
                continue;
            };
            for s in [1.0, -1.0] {
                let dir: Vec<f64> = d.iter().map(|v| s * v).collect();
                let slope = self.slope(&dir, &zero_rows);
                edges.push(Edge {
                    dir,
                    slope,
                    keep: keep.clone(),
                });
            }
        }
        Some(edges)
    }

    fn degenerate_descent(&self) -> Result<DegenerateCheck> {
        let Some(edges) = self.degenerate_edges() else {
            return Ok(DegenerateCheck::TooMany);
        };
        let best = edges
            .into_iter()
            .filter(|e| e.slope < -self.tol(&e.dir))
            .min_by(|a, b| a.slope.total_cmp(&b.slope));
        Ok(match best {
            Some(e) => DegenerateCheck::Descent(e),
            None => DegenerateCheck::Optimal,
        })
    }

    fn lex_decreasing_flat_edge(&self) -> Result<Option<Edge>> {
        let mut edges = self.basis_edges();
        if let Some(more) = self.degenerate_edges() {
            edges.extend(more);
        }
        Ok(edges
            .into_iter()
            .filter(|e| e.slope.abs() <= self.tol(&e.dir) && lex_negative(&e.dir))
            .min_by(|a, b| a.slope.total_cmp(&b.slope)))
    }

    /// Moves along `edge` to the breakpoint where the line slope turns
    /// non-negative and pivots the entering row into the basis.
    fn step(&mut self, edge: &Edge) -> Result<()> {
        let n = self.p.n();
        let mut breaks: Vec<(f64, f64, usize)> = Vec::new();
        for i in 0..n {
            if self.zero[i] {
                continue;
            }
            let a = self.p.dot(i, &edge.dir);
            if a == 0.0 {
                continue;
            }
            let t = self.resid[i] / a;
            if t > 0.0 {
                breaks.push((t, self.p.w[i] * a.abs(), i));
            }
        }
        if breaks.is_empty() {
            return Err(Error::Numerical(
                "objective unbounded along an edge (rank deficient design?)".into(),
            ));
        }
        breaks.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
        let mut slope = edge.slope;
        let mut entering = breaks[breaks.len() - 1].2;
        for &(_, jump, i) in &breaks {
            slope += jump;
            if slope >= 0.0 {
                entering = i;
                break;
            }
        }
        let mut basis = edge.keep.clone();
        basis.push(entering);
        self.basis = basis;
        self.refresh()
    }

    /// Dual of the current basis: non-basic rows take their sign weight,
    /// basic rows absorb the score so that `X' lambda = 0`.
    fn dual_certificate(&self, objective: f64) -> (f64, f64) {
        let k = self.p.k;
        let zero_rows = self.zero_rows();
        // non-basic zero rows: weight chosen at the box midpoint
        let mut total = self.score.clone();
        let mid = self.tau - 0.5;
        let mut dual_obj = 0.0;
        for &i in &zero_rows {
            if self.basis.contains(&i) {
                continue;
            }
            let l = self.p.w[i] * mid;
            for (t, xv) in total.iter_mut().zip(self.p.row(i)) {
                *t += l * xv;
            }
            dual_obj += l * self.p.y[i];
        }
        for i in 0..self.p.n() {
            if !self.zero[i] {
                let psi = if self.resid[i] < 0.0 {
                    self.tau - 1.0
                } else {
                    self.tau
                };
                dual_obj += self.p.w[i] * psi * self.p.y[i];
            }
        }
        // lambda_B = -B^{-T} total
        let total = DVector::from_vec(total);
        let lambda_b = -(self.binv.transpose() * total);
        let mut infeas = 0.0f64;
        for (pos, &b) in self.basis.iter().enumerate() {
            let l = lambda_b[pos] / self.p.w[b];
            infeas = infeas.max(self.tau - 1.0 - l).max(l - self.tau);
            dual_obj += lambda_b[pos] * self.p.y[b];
        }
        let _ = k;
        ((objective - dual_obj).abs(), infeas.max(0.0))
    }
}

fn lex_negative(dir: &[f64]) -> bool {
    let scale = dir.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    dir.iter()
        .find(|v| v.abs() > 1e-12 * scale)
        .is_some_and(|v| *v < 0.0)
}

/// Direction orthogonal to the rows in `keep` (which must have rank `k - 1`).
fn null_direction(p: &LinearProblem<'_>, keep: &[usize]) -> Option<Vec<f64>> {
    let k = p.k;
    for l in 0..k {
        let m = DMatrix::from_fn(k, k, |r, c| {
            if r < keep.len() {
                p.x[keep[r] * k + c]
            } else if c == l {
                1.0
            } else {
                0.0
            }
        });
        let lu = m.lu();
        let mut rhs = DVector::zeros(k);
        rhs[k - 1] = 1.0;
        if let Some(d) = lu.solve(&rhs) {
            if d.iter().all(|v| v.is_finite()) && d.norm() < 1e12 {
                return Some(d.iter().copied().collect());
            }
        }
    }
    None
}

fn least_squares(p: &LinearProblem<'_>) -> Result<Vec<f64>> {
    let k = p.k;
    let mut xtx = DMatrix::<f64>::zeros(k, k);
    let mut xty = DVector::<f64>::zeros(k);
    for i in 0..p.n() {
        let row = p.row(i);
        let w = p.w[i];
        for a in 0..k {
            xty[a] += w * row[a] * p.y[i];
            for b in 0..k {
                xtx[(a, b)] += w * row[a] * row[b];
            }
        }
    }
    match xtx.lu().solve(&xty) {
        Some(t) if t.iter().all(|v| v.is_finite()) => Ok(t.iter().copied().collect()),
        _ => Ok(vec![0.0; k]),
    }
}

/// Greedily picks `k` linearly independent rows, smallest residual first.
fn initial_basis(p: &LinearProblem<'_>, theta: &[f64]) -> Result<Vec<usize>> {
    let k = p.k;
    let mut order: Vec<(f64, usize)> = (0..p.n())
        .map(|i| ((p.y[i] - p.dot(i, theta)).abs(), i))
        .collect();
    order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut basis = Vec::with_capacity(k);
    for (_, i) in order {
        let row = p.row(i);
        let norm0 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm0 == 0.0 {
            continue;
        }
        let mut v = row.to_vec();
        for _ in 0..2 {
            for qv in &q {
                let c: f64 = qv.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(qv).for_each(|(x, qx)| *x -= c * qx);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 * norm0 {
            v.iter_mut().for_each(|x| *x /= norm);
            q.push(v);
            basis.push(i);
            if basis.len() == k {
                return Ok(basis);
            }
        }
    }
    Err(Error::Numerical(
        "design has rank below the number of parameters".into(),
    ))
}

fn binomial(n: usize, r: usize) -> usize {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    acc as usize
}

/// Lexicographic `r`-subsets of `0..n`.
pub(crate) struct Combinations {
    idx: Vec<usize>,
    n: usize,
    first: bool,
    done: bool,
}

impl Combinations {
    pub(crate) fn new(n: usize, r: usize) -> Self {
        Self {
            idx: (0..r).collect(),
            n,
            first: true,
            done: r > n,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        if self.first {
            self.first = false;
            return Some(self.idx.clone());
        }
        let r = self.idx.len();
        let mut i = r;
        while i > 0 {
            i -= 1;
            if self.idx[i] < self.n - r + i {
                self.idx[i] += 1;
                for j in i + 1..r {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                return Some(self.idx.clone());
            }
        }
        self.done = true;
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve_simple(x: &[f64], y: &[f64], k: usize, tau: f64) -> Solution {
        let w = vec![1.0; y.len()];
        solve(LinearProblem { x, y, w: &w, k }, tau, None).unwrap()
    }

    #[test]
    fn median_of_five() {
        let y = [1.0, 2.0, 3.0, 4.0, 5.0];
        let s = solve_simple(&[1.0; 5], &y, 1, 0.5);
        assert_eq!(s.theta, vec![3.0]);
        assert_eq!(s.objective, 6.0 * 0.5);
        assert!(s.report.status.is_optimal());
    }

    #[test]
    fn even_sample_takes_lower_median() {
        let y = [4.0, 1.0, 3.0, 2.0];
        let s = solve_simple(&[1.0; 4], &y, 1, 0.5);
        assert_eq!(s.theta, vec![2.0]);
    }

    #[test]
    fn integer_n_tau_takes_lower_endpoint() {
        // n * tau = 2: every point of [2, 3] minimizes
        let y: Vec<f64> = (1..=10).map(f64::from).collect();
        let s = solve_simple(&[1.0; 10], &y, 1, 0.2);
        assert_eq!(s.theta, vec![2.0]);
    }

    #[test]
    fn exact_line_has_zero_loss() {
        let xs = [0.5, 1.0, 2.0, 3.0, 4.5];
        let mut x = Vec::new();
        for v in xs {
            x.extend([1.0, v]);
        }
        let y: Vec<f64> = xs.iter().map(|v| 2.0 * v).collect();
        for tau in [0.05, 0.5, 0.95] {
            let s = solve_simple(&x, &y, 2, tau);
            assert!(s.objective.abs() < 1e-14);
            assert!((s.theta[0]).abs() < 1e-12 && (s.theta[1] - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_match_duplicated_rows() {
        let y = [0.3, -1.2, 2.2, 0.7, 1.1, -0.4];
        let xs = [0.1, 0.9, 1.4, 0.3, 2.0, 1.1];
        let w = [1.0, 3.0, 1.0, 2.0, 1.0, 1.0];
        let mut x = Vec::new();
        let (mut xd, mut yd) = (Vec::new(), Vec::new());
        for i in 0..6 {
            x.extend([1.0, xs[i]]);
            for _ in 0..w[i] as usize {
                xd.extend([1.0, xs[i]]);
                yd.push(y[i]);
            }
        }
        let a = solve(
            LinearProblem {
                x: &x,
                y: &y,
                w: &w,
                k: 2,
            },
            0.3,
            None,
        )
        .unwrap();
        let b = solve_simple(&xd, &yd, 2, 0.3);
        assert!((a.objective - b.objective).abs() < 1e-12);
        assert!(b.report.status.is_optimal());
    }

    #[test]
    fn combinations_enumerate_all() {
        let all: Vec<_> = Combinations::new(5, 3).collect();
        assert_eq!(all.len(), 10);
        assert_eq!(all[0], vec![0, 1, 2]);
        assert_eq!(all[9], vec![2, 3, 4]);
        assert_eq!(binomial(25, 4), 12650);
    }

    #[test]
    fn rank_deficient_design_is_rejected() {
        let x = [1.0, 2.0, 1.0, 2.0, 1.0, 2.0];
        let y = [1.0, 2.0, 3.0];
        let w = [1.0; 3];
        assert!(solve(
            LinearProblem {
                x: &x,
                y: &y,
                w: &w,
                k: 2
            },
            0.5,
            None
        )
        .is_err());
    }
}
