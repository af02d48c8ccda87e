//! Linear programming over the occupancy polytope.
//!
//! A small dense two-phase simplex solver sits behind the [`LpSolver`]
//! trait; the problems in this crate stay below a few hundred rows and
//! columns, where a dense tableau is simple and fast enough. On top of it:
//! expert planning (maximize reward over the flow polytope) and
//! multi-perspective feature matching (minimize weighted l-infinity
//! residuals against observed feature expectations).

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::demo::ObservationStore;
use crate::linalg::{self, Matrix};
use crate::math;
use crate::mdp::{MdpError, Occupancy, TabularMdp};
use crate::perspective::{FeatureMap, PerspectiveSet};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LpError {
    Infeasible,
    Unbounded,
    IterationLimit,
    DimensionMismatch,
    /// Feature matching was asked for with no observed perspective.
    NoObservations,
    /// A perspective carries positive weight but has never been observed.
    UnobservedWeighted,
    /// The solver returned a vector violating occupancy invariants.
    Numerical,
}

impl fmt::Display for LpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LpError::Infeasible => write!(f, "problem is infeasible"),
            LpError::Unbounded => write!(f, "problem is unbounded"),
            LpError::IterationLimit => write!(f, "simplex iteration limit reached"),
            LpError::DimensionMismatch => write!(f, "dimension mismatch"),
            LpError::NoObservations => write!(f, "no perspective has observations"),
            LpError::UnobservedWeighted => {
                write!(f, "weighted perspective has no observations")
            }
            LpError::Numerical => write!(f, "solution violates invariants"),
        }
    }
}

impl core::error::Error for LpError {}

impl From<MdpError> for LpError {
    fn from(_: MdpError) -> Self {
        LpError::Numerical
    }
}

/// `min c.x  s.t.  eq x = eq_rhs,  ub x <= ub_rhs,  x >= lower_bounds`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub eq: Matrix,
    pub eq_rhs: Vec<f64>,
    pub ub: Matrix,
    pub ub_rhs: Vec<f64>,
    pub lower_bounds: Vec<f64>,
}

impl LinearProgram {
    /// A program over `n` nonnegative variables with no constraints yet.
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            objective,
            eq: Matrix::zeros(0, n),
            eq_rhs: Vec::new(),
            ub: Matrix::zeros(0, n),
            ub_rhs: Vec::new(),
            lower_bounds: vec![0.0; n],
        }
    }

    fn validate(&self) -> Result<(), LpError> {
        let n = self.objective.len();
        if self.eq.cols() != n
            || self.ub.cols() != n
            || self.eq.rows() != self.eq_rhs.len()
            || self.ub.rows() != self.ub_rhs.len()
            || self.lower_bounds.len() != n
        {
            return Err(LpError::DimensionMismatch);
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

/// Solver interface so the backend stays swappable.
pub trait LpSolver {
    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution, LpError>;
}

/// Dense two-phase primal simplex with Bland's rule as an anti-cycling
/// fallback and an LU refinement of the final basic solution.
#[derive(Debug, Clone)]
pub struct DenseSimplex {
    pub max_iterations: usize,
}

impl Default for DenseSimplex {
    fn default() -> Self {
        Self { max_iterations: 0 }
    }
}

const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;

struct Tableau {
    m: usize,
    ncols: usize,
    n_real: usize, // structural + slack columns; artificials follow
    rows: Vec<f64>,
    rhs: Vec<f64>,
    cost: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    #[inline]
    fn row(&self, r: usize) -> &[f64] {
        &self.rows[r * self.ncols..(r + 1) * self.ncols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let ncols = self.ncols;
        let inv = 1.0 / self.rows[r * ncols + c];
        for v in &mut self.rows[r * ncols..(r + 1) * ncols] {
            *v *= inv;
        }
        self.rhs[r] *= inv;
        self.rows[r * ncols + c] = 1.0;

        let (rows_before, rows_rest) = self.rows.split_at_mut(r * ncols);
        let (pivot_row, rows_after) = rows_rest.split_at_mut(ncols);
        let pivot_row: &[f64] = pivot_row;
        let (rhs_before, rhs_rest) = self.rhs.split_at_mut(r);
        let (rhs_pivot, rhs_after) = rhs_rest.split_at_mut(1);
        let pivot_rhs = rhs_pivot[0];

        let eliminate = |row: &mut [f64], rhs: &mut f64| {
            let factor = row[c];
            if factor == 0.0 {
                return;
            }
            for (v, p) in row.iter_mut().zip(pivot_row.iter()) {
                *v -= factor * p;
            }
            row[c] = 0.0;
            *rhs -= factor * pivot_rhs;
            if *rhs < 0.0 && *rhs > -1e-11 {
                *rhs = 0.0;
            }
        };
        for (row, rhs) in rows_before.chunks_exact_mut(ncols).zip(rhs_before.iter_mut()) {
            eliminate(row, rhs);
        }
        for (row, rhs) in rows_after.chunks_exact_mut(ncols).zip(rhs_after.iter_mut()) {
            eliminate(row, rhs);
        }
        let factor = self.cost[c];
        if factor != 0.0 {
            for (v, p) in self.cost.iter_mut().zip(pivot_row.iter()) {
                *v -= factor * p;
            }
            self.cost[c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Runs simplex iterations to optimality. Columns at index `>= n_real`
    /// (artificials) never enter the basis.
    fn optimize(&mut self, max_iter: usize) -> Result<(), LpError> {
        let bland_after = 4 * (self.m + self.ncols);
        for iter in 0..max_iter {
            let bland = iter > bland_after;
            let mut entering = None;
            if bland {
                for j in 0..self.n_real {
                    if self.cost[j] < -PIVOT_TOL {
                        entering = Some(j);
                        break;
                    }
                }
            } else {
                let mut best = -PIVOT_TOL;
                for j in 0..self.n_real {
                    if self.cost[j] < best {
                        best = self.cost[j];
                        entering = Some(j);
                    }
                }
            }
            let Some(c) = entering else {
                return Ok(());
            };
            let mut leaving: Option<(usize, f64)> = None;
            for r in 0..self.m {
                let a = self.rows[r * self.ncols + c];
                if a > PIVOT_TOL {
                    let ratio = self.rhs[r].max(0.0) / a;
                    let better = match leaving {
                        None => true,
                        Some((lr, lratio)) => {
                            ratio < lratio - 1e-12
                                || (ratio < lratio + 1e-12 && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leaving = Some((r, ratio));
                    }
                }
            }
            let Some((r, _)) = leaving else {
                return Err(LpError::Unbounded);
            };
            self.pivot(r, c);
        }
        Err(LpError::IterationLimit)
    }
}

impl LpSolver for DenseSimplex {
    fn solve(&self, lp: &LinearProgram) -> Result<LpSolution, LpError> {
        lp.validate()?;
        let n = lp.objective.len();
        let m_eq = lp.eq.rows();
        let m_ub = lp.ub.rows();
        let m = m_eq + m_ub;

        // Shift x = y + lb so every variable is nonnegative.
        let lb = &lp.lower_bounds;
        let mut b: Vec<f64> = Vec::with_capacity(m);
        for r in 0..m_eq {
            b.push(lp.eq_rhs[r] - linalg::dot(lp.eq.row(r), lb));
        }
        for r in 0..m_ub {
            b.push(lp.ub_rhs[r] - linalg::dot(lp.ub.row(r), lb));
        }

        // Structural + slack columns; artificials appended as needed.
        let n_real = n + m_ub;
        let mut body = vec![0.0; m * n_real];
        for r in 0..m_eq {
            body[r * n_real..r * n_real + n].copy_from_slice(lp.eq.row(r));
        }
        for r in 0..m_ub {
            let rr = m_eq + r;
            body[rr * n_real..rr * n_real + n].copy_from_slice(lp.ub.row(r));
            body[rr * n_real + n + r] = 1.0;
        }
        let mut negated = vec![false; m];
        for r in 0..m {
            if b[r] < 0.0 {
                negated[r] = true;
                b[r] = -b[r];
                for v in &mut body[r * n_real..(r + 1) * n_real] {
                    *v = -*v;
                }
            }
        }

        // Slack of a non-negated inequality row can start basic; everything
        // else gets an artificial.
        let mut basis = vec![usize::MAX; m];
        let mut needs_artificial = Vec::new();
        for r in 0..m {
            if r >= m_eq && !negated[r] {
                basis[r] = n + (r - m_eq);
            } else {
                needs_artificial.push(r);
            }
        }
        let n_art = needs_artificial.len();
        let ncols = n_real + n_art;
        let mut rows = vec![0.0; m * ncols];
        for r in 0..m {
            rows[r * ncols..r * ncols + n_real]
                .copy_from_slice(&body[r * n_real..(r + 1) * n_real]);
        }
        for (k, &r) in needs_artificial.iter().enumerate() {
            rows[r * ncols + n_real + k] = 1.0;
            basis[r] = n_real + k;
        }

        let mut tab = Tableau {
            m,
            ncols,
            n_real,
            rows,
            rhs: b,
            cost: vec![0.0; ncols],
            basis,
        };
        let max_iter = if self.max_iterations > 0 {
            self.max_iterations
        } else {
            2000 + 60 * (m + ncols)
        };

        // Phase 1: minimize the sum of artificials.
        if n_art > 0 {
            for j in n_real..ncols {
                tab.cost[j] = 1.0;
            }
            for r in 0..m {
                if tab.basis[r] >= n_real {
                    let row = tab.row(r).to_vec();
                    for (v, p) in tab.cost.iter_mut().zip(row.iter()) {
                        *v -= p;
                    }
                }
            }
            tab.optimize(max_iter)?;
            let infeas: f64 = (0..m)
                .filter(|&r| tab.basis[r] >= n_real)
                .map(|r| tab.rhs[r])
                .sum();
            if infeas > FEAS_TOL {
                return Err(LpError::Infeasible);
            }
            // Drive any leftover artificial out of the basis; a row with no
            // eligible pivot is redundant and keeps its artificial at zero.
            for r in 0..m {
                if tab.basis[r] >= n_real {
                    let pivot_col = (0..n_real)
                        .find(|&j| math::abs(tab.rows[r * ncols + j]) > 1e-8);
                    if let Some(j) = pivot_col {
                        tab.pivot(r, j);
                    }
                }
            }
        }

        // Phase 2: original objective over structural columns.
        for j in 0..ncols {
            tab.cost[j] = if j < n { lp.objective[j] } else { 0.0 };
        }
        for r in 0..m {
            let bj = tab.basis[r];
            if bj < n {
                let cb = lp.objective[bj];
                if cb != 0.0 {
                    let row = tab.row(r).to_vec();
                    for (v, p) in tab.cost.iter_mut().zip(row.iter()) {
                        *v -= cb * p;
                    }
                }
            }
        }
        tab.optimize(max_iter)?;

        // Refine the basic solution against the original data with an LU
        // solve; tableau elimination error would otherwise accumulate over
        // hundreds of pivots.
        let mut x_ext = vec![0.0; ncols];
        let basis_mat = Matrix::from_fn(m, m, |r, c| {
            let col = tab.basis[c];
            if col < n_real {
                body[r * n_real + col]
            } else if needs_artificial[col - n_real] == r {
                1.0
            } else {
                0.0
            }
        });
        let b_now: Vec<f64> = (0..m)
            .map(|r| {
                let orig = if r < m_eq {
                    lp.eq_rhs[r] - linalg::dot(lp.eq.row(r), lb)
                } else {
                    lp.ub_rhs[r - m_eq] - linalg::dot(lp.ub.row(r - m_eq), lb)
                };
                if negated[r] {
                    -orig
                } else {
                    orig
                }
            })
            .collect();
        match linalg::lu_solve(&basis_mat, &b_now) {
            Some(xb) => {
                for (r, &v) in xb.iter().enumerate() {
                    x_ext[tab.basis[r]] = v;
                }
            }
            None => {
                for r in 0..m {
                    x_ext[tab.basis[r]] = tab.rhs[r];
                }
            }
        }

        let mut x: Vec<f64> = (0..n).map(|j| x_ext[j] + lb[j]).collect();
        for (v, &l) in x.iter_mut().zip(lb.iter()) {
            if *v < l && *v > l - 1e-9 {
                *v = l;
            }
        }
        let objective = linalg::dot(&lp.objective, &x);
        Ok(LpSolution { x, objective })
    }
}

/// Solves with the default dense simplex backend.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    DenseSimplex::default().solve(lp)
}

/// Bellman flow equalities over occupancies:
/// `sum_a mu(s,a) - gamma * sum_{s',a} T(s | s', a) mu(s', a) = rho(s)`.
pub(crate) fn flow_constraints(mdp: &TabularMdp) -> (Matrix, Vec<f64>) {
    let n_states = mdp.n_states();
    let n_actions = mdp.n_actions();
    let mut eq = Matrix::zeros(n_states, mdp.n_pairs());
    for s in 0..n_states {
        for a in 0..n_actions {
            let pair = mdp.pair_index(s, a);
            eq[(s, pair)] += 1.0;
            for (next, &p) in mdp.transition_row(s, a).iter().enumerate() {
                if p != 0.0 {
                    eq[(next, pair)] -= mdp.discount() * p;
                }
            }
        }
    }
    (eq, mdp.initial_dist().to_vec())
}

/// Optimal value of a linear objective over the flow polytope.
pub(crate) fn optimize_over_flow(
    mdp: &TabularMdp,
    objective: &[f64],
    maximize: bool,
) -> Result<f64, LpError> {
    if objective.len() != mdp.n_pairs() {
        return Err(LpError::DimensionMismatch);
    }
    let sign = if maximize { -1.0 } else { 1.0 };
    let mut lp = LinearProgram::new(objective.iter().map(|&c| sign * c).collect());
    let (eq, rhs) = flow_constraints(mdp);
    lp.eq = eq;
    lp.eq_rhs = rhs;
    let sol = solve_lp(&lp)?;
    Ok(sign * sol.objective)
}

/// Plans an optimal policy by maximizing `<reward, mu>` over the flow
/// polytope. Returns the optimal occupancy and its value.
pub fn solve_optimal_policy(
    mdp: &TabularMdp,
    reward: &[f64],
) -> Result<(Occupancy, f64), LpError> {
    if reward.len() != mdp.n_pairs() {
        return Err(LpError::DimensionMismatch);
    }
    let mut lp = LinearProgram::new(reward.iter().map(|&r| -r).collect());
    let (eq, rhs) = flow_constraints(mdp);
    lp.eq = eq;
    lp.eq_rhs = rhs;
    let sol = solve_lp(&lp)?;
    let occupancy = Occupancy::new(mdp, sol.x)?;
    let value = linalg::dot(reward, occupancy.mu());
    Ok((occupancy, value))
}

/// Outcome of the feature-matching LP.
#[derive(Debug, Clone)]
pub struct MatchResult {
    pub occupancy: Occupancy,
    /// Per-perspective residual; `None` for perspectives that carried no
    /// observations and were excluded from the program.
    pub residuals: Vec<Option<f64>>,
    pub objective: f64,
}

/// Feature matching over the flow polytope: minimizes
/// `sum_i weights[i] * eps_i` subject to
/// `|A_i F mu - empirical mean_i|_inf <= eps_i` for every perspective with
/// observations. The slack variables keep the program feasible whenever the
/// flow polytope is nonempty.
pub fn match_features(
    mdp: &TabularMdp,
    features: &FeatureMap,
    perspectives: &PerspectiveSet,
    store: &ObservationStore,
    weights: &[f64],
) -> Result<MatchResult, LpError> {
    if features.n_pairs() != mdp.n_pairs()
        || perspectives.feature_dim() != features.feature_dim()
        || weights.len() != perspectives.len()
        || store.len() != perspectives.len()
    {
        return Err(LpError::DimensionMismatch);
    }
    let included: Vec<usize> = (0..perspectives.len())
        .filter(|&i| store.count(i) > 0)
        .collect();
    if included.is_empty() {
        return Err(LpError::NoObservations);
    }
    if (0..perspectives.len()).any(|i| weights[i] > 0.0 && store.count(i) == 0) {
        return Err(LpError::UnobservedWeighted);
    }

    let n_mu = mdp.n_pairs();
    let n = n_mu + included.len();
    let mut objective = vec![0.0; n];
    for (slot, &i) in included.iter().enumerate() {
        objective[n_mu + slot] = weights[i];
    }
    let mut lp = LinearProgram::new(objective);

    let (flow, flow_rhs) = flow_constraints(mdp);
    lp.eq = Matrix::from_fn(flow.rows(), n, |r, c| if c < n_mu { flow[(r, c)] } else { 0.0 });
    lp.eq_rhs = flow_rhs;

    let n_ub: usize = included.iter().map(|&i| 2 * perspectives[i].output_dim()).sum();
    let mut ub = Matrix::zeros(n_ub, n);
    let mut ub_rhs = vec![0.0; n_ub];
    let mut row_idx = 0;
    for (slot, &i) in included.iter().enumerate() {
        let p = &perspectives[i];
        let mean = store.mean(i).expect("included perspective has observations");
        for d in 0..p.output_dim() {
            // (A_i F)_d as a dense row over state-action pairs
            let a_row = p.matrix().row(d);
            let mut af = vec![0.0; n_mu];
            for (j, &a_coef) in a_row.iter().enumerate() {
                if a_coef == 0.0 {
                    continue;
                }
                let f_row = features.matrix().row(j);
                for (v, &fv) in af.iter_mut().zip(f_row.iter()) {
                    *v += a_coef * fv;
                }
            }
            for (c, &v) in af.iter().enumerate() {
                ub[(row_idx, c)] = v;
                ub[(row_idx + 1, c)] = -v;
            }
            ub[(row_idx, n_mu + slot)] = -1.0;
            ub[(row_idx + 1, n_mu + slot)] = -1.0;
            ub_rhs[row_idx] = mean[d];
            ub_rhs[row_idx + 1] = -mean[d];
            row_idx += 2;
        }
    }
    lp.ub = ub;
    lp.ub_rhs = ub_rhs;

    let sol = solve_lp(&lp)?;
    let occupancy = Occupancy::new(mdp, sol.x[..n_mu].to_vec())?;
    let mut residuals = vec![None; perspectives.len()];
    for (slot, &i) in included.iter().enumerate() {
        residuals[i] = Some(sol.x[n_mu + slot].max(0.0));
    }
    Ok(MatchResult {
        occupancy,
        residuals,
        objective: sol.objective,
    })
}
