//! Dense two-phase revised simplex.
//!
//! Problems are stated as
//!
//! ```text
//!     minimize / maximize   c' z
//!     subject to            A_eq z   = b_eq
//!                           A_ineq z >= b_ineq
//!                           z_j >= l_j   (or z_j free)
//! ```
//!
//! and internally brought to `min c'w, A w = b, w >= 0, b >= 0` by shifting
//! bounded variables, splitting free ones and adding surplus columns. The
//! basis inverse is kept explicitly and refactorised periodically. Entering
//! columns are priced by most negative reduced cost; after a run of
//! degenerate pivots the solver switches to Bland's smallest-index rule for
//! both entering and leaving choices, which rules out cycling.

use super::linalg::{invert, Matrix};
use super::NumericsError;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem<T> {
    pub sense: Sense,
    pub c: Vec<T>,
    pub a_eq: Matrix<T>,
    pub b_eq: Vec<T>,
    /// Rows read `a_ineq z >= b_ineq`.
    pub a_ineq: Matrix<T>,
    pub b_ineq: Vec<T>,
    /// `Some(l)` for `z_j >= l`, `None` for a free variable.
    pub lower: Vec<Option<T>>,
}

impl<T: Real> LpProblem<T> {
    /// A problem with objective `c` and every variable bounded below by zero.
    pub fn new(sense: Sense, c: Vec<T>) -> Self {
        let n = c.len();
        Self {
            sense,
            c,
            a_eq: Matrix::zeros(0, n),
            b_eq: Vec::new(),
            a_ineq: Matrix::zeros(0, n),
            b_ineq: Vec::new(),
            lower: vec![Some(T::zero()); n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn add_eq(&mut self, row: &[T], rhs: T) {
        self.a_eq.push_row(row);
        self.b_eq.push(rhs);
    }

    pub fn add_ge(&mut self, row: &[T], rhs: T) {
        self.a_ineq.push_row(row);
        self.b_ineq.push(rhs);
    }

    /// Adds `row z <= rhs`, stored as `-row z >= -rhs`.
    pub fn add_le(&mut self, row: &[T], rhs: T) {
        let neg: Vec<T> = row.iter().map(|&v| -v).collect();
        self.add_ge(&neg, -rhs);
    }

    pub fn set_free(&mut self, j: usize) {
        self.lower[j] = None;
    }

    pub fn set_lower(&mut self, j: usize, l: T) {
        self.lower[j] = Some(l);
    }

    fn check(&self) -> Result<(), NumericsError> {
        let n = self.c.len();
        let dims_ok = self.a_eq.cols() == n
            && self.a_ineq.cols() == n
            && self.a_eq.rows() == self.b_eq.len()
            && self.a_ineq.rows() == self.b_ineq.len()
            && self.lower.len() == n;
        if !dims_ok {
            return Err(NumericsError::Dimension(format!(
                "LP with {n} variables: A_eq {}x{}, b_eq {}, A_ineq {}x{}, b_ineq {}, bounds {}",
                self.a_eq.rows(),
                self.a_eq.cols(),
                self.b_eq.len(),
                self.a_ineq.rows(),
                self.a_ineq.cols(),
                self.b_ineq.len(),
                self.lower.len()
            )));
        }
        let finite = self.c.iter().chain(&self.b_eq).chain(&self.b_ineq).all(|v| v.is_finite())
            && self.a_eq.is_finite()
            && self.a_ineq.is_finite()
            && self.lower.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(NumericsError::Domain("non-finite LP data".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpSettings<T> {
    pub feasibility_tol: T,
    pub optimality_tol: T,
    pub pivot_tol: T,
    pub max_iter: usize,
    pub refactor_every: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
}

impl<T: Real> Default for LpSettings<T> {
    fn default() -> Self {
        Self {
            feasibility_tol: T::lit(1e-9),
            optimality_tol: T::lit(1e-9),
            pivot_tol: T::lit(1e-11),
            max_iter: 200_000,
            refactor_every: 64,
            bland_after: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

/// Result of [`solve_lp`].
///
/// Multipliers are signed so that `c = A_eq' y_eq + A_ineq' y_ineq + r`
/// and, at an optimum, `b_eq' y_eq + b_ineq' y_ineq + sum_j l_j r_j`
/// equals the optimal value. For a minimisation `y_ineq >= 0` and `r >= 0`
/// on bounded variables; both flip sign for a maximisation.
#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution<T> {
    pub status: LpStatus,
    pub x: Vec<T>,
    pub objective: T,
    pub duals_eq: Vec<T>,
    pub duals_ineq: Vec<T>,
    pub reduced_costs: Vec<T>,
    pub iterations: usize,
}

impl<T: Real> LpSolution<T> {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// Dual objective implied by the reported multipliers.
    pub fn dual_objective(&self, p: &LpProblem<T>) -> T {
        let mut v = crate::scalar::dot(&p.b_eq, &self.duals_eq) + crate::scalar::dot(&p.b_ineq, &self.duals_ineq);
        for (l, r) in p.lower.iter().zip(&self.reduced_costs) {
            if let Some(l) = l {
                v += *l * *r;
            }
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Column {
    Var { index: usize, negated: bool },
    Surplus,
    Artificial,
}

struct StandardForm<T> {
    rows: usize,
    cols: Vec<Vec<(usize, T)>>,
    kinds: Vec<Column>,
    cost: Vec<T>,
    b: Vec<T>,
    /// `+1` or `-1`: factor applied to each original row to make `b >= 0`.
    row_sign: Vec<T>,
}

impl<T: Real> StandardForm<T> {
    fn build(p: &LpProblem<T>) -> Self {
        let n = p.num_vars();
        let rows = p.a_eq.rows() + p.a_ineq.rows();
        let row_of = |r: usize| -> &[T] {
            if r < p.a_eq.rows() {
                p.a_eq.row(r)
            } else {
                p.a_ineq.row(r - p.a_eq.rows())
            }
        };
        let shift: Vec<T> = p.lower.iter().map(|l| l.unwrap_or_else(T::zero)).collect();
        let mut b: Vec<T> = p.b_eq.iter().chain(&p.b_ineq).copied().collect();
        for (r, br) in b.iter_mut().enumerate() {
            *br -= crate::scalar::dot(row_of(r), &shift);
        }
        let row_sign: Vec<T> = b
            .iter()
            .map(|&v| if v < T::zero() { -T::one() } else { T::one() })
            .collect();
        for (br, &s) in b.iter_mut().zip(&row_sign) {
            *br *= s;
        }
        let sign = match p.sense {
            Sense::Minimize => T::one(),
            Sense::Maximize => -T::one(),
        };

        let mut cols = Vec::new();
        let mut kinds = Vec::new();
        let mut cost = Vec::new();
        for j in 0..n {
            let col: Vec<(usize, T)> = (0..rows)
                .filter_map(|r| {
                    let v = row_of(r)[j];
                    (v != T::zero()).then(|| (r, v * row_sign[r]))
                })
                .collect();
            if p.lower[j].is_none() {
                cols.push(col.iter().map(|&(r, v)| (r, -v)).collect());
                kinds.push(Column::Var { index: j, negated: true });
                cost.push(-sign * p.c[j]);
            }
            cols.push(col);
            kinds.push(Column::Var { index: j, negated: false });
            cost.push(sign * p.c[j]);
        }
        for r in p.a_eq.rows()..rows {
            cols.push(vec![(r, -row_sign[r])]);
            kinds.push(Column::Surplus);
            cost.push(T::zero());
        }
        for r in 0..rows {
            cols.push(vec![(r, T::one())]);
            kinds.push(Column::Artificial);
            cost.push(T::zero());
        }
        Self {
            rows,
            cols,
            kinds,
            cost,
            b,
            row_sign,
        }
    }
}

struct Revised<'a, T> {
    sf: &'a StandardForm<T>,
    settings: LpSettings<T>,
    binv: Matrix<T>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    enterable: Vec<bool>,
    xb: Vec<T>,
    iterations: usize,
    since_refactor: usize,
}

enum RunEnd {
    Optimal,
    Unbounded,
    IterationLimit,
}

impl<'a, T: Real> Revised<'a, T> {
    fn new(sf: &'a StandardForm<T>, settings: LpSettings<T>) -> Self {
        let m = sf.rows;
        let ncols = sf.cols.len();
        let first_art = ncols - m;
        let basis: Vec<usize> = (first_art..ncols).collect();
        let mut is_basic = vec![false; ncols];
        for &j in &basis {
            is_basic[j] = true;
        }
        Self {
            sf,
            settings,
            binv: Matrix::identity(m),
            basis,
            is_basic,
            enterable: vec![true; ncols],
            xb: sf.b.clone(),
            iterations: 0,
            since_refactor: 0,
        }
    }

    fn duals(&self, cost: &[T]) -> Vec<T> {
        let m = self.sf.rows;
        let mut y = vec![T::zero(); m];
        for (r, &j) in self.basis.iter().enumerate() {
            let cb = cost[j];
            if cb != T::zero() {
                for (yi, &bi) in y.iter_mut().zip(self.binv.row(r)) {
                    *yi += cb * bi;
                }
            }
        }
        y
    }

    fn column_image(&self, j: usize) -> Vec<T> {
        let m = self.sf.rows;
        let mut alpha = vec![T::zero(); m];
        for &(i, a) in &self.sf.cols[j] {
            for (r, al) in alpha.iter_mut().enumerate() {
                *al += self.binv[(r, i)] * a;
            }
        }
        alpha
    }

    fn refactor(&mut self) {
        let m = self.sf.rows;
        let mut b = Matrix::zeros(m, m);
        for (r, &j) in self.basis.iter().enumerate() {
            for &(i, a) in &self.sf.cols[j] {
                b[(i, r)] = a;
            }
        }
        if let Some(inv) = invert(&b) {
            self.binv = inv;
            self.xb = self.binv.mul_vec(&self.sf.b);
            for v in &mut self.xb {
                if *v < T::zero() && *v > -self.settings.feasibility_tol {
                    *v = T::zero();
                }
            }
        }
        self.since_refactor = 0;
    }

    fn pivot(&mut self, r: usize, q: usize, alpha: &[T]) {
        let m = self.sf.rows;
        let piv = alpha[r];
        for v in self.binv.row_mut(r) {
            *v /= piv;
        }
        let theta = self.xb[r] / piv;
        let pivot_row: Vec<T> = self.binv.row(r).to_vec();
        for i in 0..m {
            if i == r || alpha[i] == T::zero() {
                continue;
            }
            let f = alpha[i];
            for (v, &p) in self.binv.row_mut(i).iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            self.xb[i] -= f * theta;
            if self.xb[i] < T::zero() && self.xb[i] > -self.settings.feasibility_tol {
                self.xb[i] = T::zero();
            }
        }
        self.xb[r] = theta;
        self.is_basic[self.basis[r]] = false;
        self.basis[r] = q;
        self.is_basic[q] = true;
        self.iterations += 1;
        self.since_refactor += 1;
        if self.since_refactor >= self.settings.refactor_every {
            self.refactor();
        }
    }

    fn run(&mut self, cost: &[T]) -> RunEnd {
        let tol = self.settings.optimality_tol;
        let mut degenerate_streak = 0usize;
        loop {
            if self.iterations >= self.settings.max_iter {
                return RunEnd::IterationLimit;
            }
            let bland = degenerate_streak >= self.settings.bland_after;
            let y = self.duals(cost);
            let mut entering: Option<(usize, T)> = None;
            for (j, col) in self.sf.cols.iter().enumerate() {
                if self.is_basic[j] || !self.enterable[j] {
                    continue;
                }
                let d = cost[j] - col.iter().fold(T::zero(), |acc, &(i, a)| acc + y[i] * a);
                if d < -tol {
                    match entering {
                        None => entering = Some((j, d)),
                        Some((_, best)) if !bland && d < best => entering = Some((j, d)),
                        _ => {}
                    }
                    if bland {
                        break;
                    }
                }
            }
            let Some((q, _)) = entering else {
                return RunEnd::Optimal;
            };
            let alpha = self.column_image(q);
            let mut leave: Option<(usize, T)> = None;
            for (r, &a) in alpha.iter().enumerate() {
                if a <= self.settings.pivot_tol {
                    continue;
                }
                let ratio = self.xb[r].max(T::zero()) / a;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((br, bratio)) => {
                        let tie_eps = T::lit(1e-12) * (T::one() + bratio.abs());
                        if ratio < bratio - tie_eps {
                            Some((r, ratio))
                        } else if ratio <= bratio + tie_eps {
                            let better = if bland {
                                self.basis[r] < self.basis[br]
                            } else {
                                a > alpha[br]
                            };
                            if better {
                                Some((r, ratio.min(bratio)))
                            } else {
                                Some((br, bratio.min(ratio)))
                            }
                        } else {
                            Some((br, bratio))
                        }
                    }
                };
            }
            let Some((r, ratio)) = leave else {
                return RunEnd::Unbounded;
            };
            if ratio <= self.settings.feasibility_tol {
                degenerate_streak += 1;
            } else {
                degenerate_streak = 0;
            }
            self.pivot(r, q, &alpha);
        }
    }

    fn objective(&self, cost: &[T]) -> T {
        self.basis
            .iter()
            .zip(&self.xb)
            .fold(T::zero(), |acc, (&j, &v)| acc + cost[j] * v)
    }

    /// Pivots basic artificials out wherever a structural column can replace them.
    fn expel_artificials(&mut self) {
        for r in 0..self.sf.rows {
            if self.sf.kinds[self.basis[r]] != Column::Artificial {
                continue;
            }
            let row: Vec<T> = self.binv.row(r).to_vec();
            let mut best: Option<(usize, T)> = None;
            for (j, col) in self.sf.cols.iter().enumerate() {
                if self.is_basic[j] || self.sf.kinds[j] == Column::Artificial {
                    continue;
                }
                let v = col.iter().fold(T::zero(), |acc, &(i, a)| acc + row[i] * a).abs();
                if v > self.settings.pivot_tol * T::lit(100.0) && best.is_none_or(|(_, b)| v > b) {
                    best = Some((j, v));
                }
            }
            if let Some((j, _)) = best {
                let alpha = self.column_image(j);
                self.xb[r] = T::zero();
                self.pivot(r, j, &alpha);
            }
        }
    }
}

/// Solves `p` with the two-phase revised simplex.
pub fn solve_lp<T: Real>(p: &LpProblem<T>) -> Result<LpSolution<T>, NumericsError> {
    solve_lp_with(p, &LpSettings::default())
}

pub fn solve_lp_with<T: Real>(p: &LpProblem<T>, settings: &LpSettings<T>) -> Result<LpSolution<T>, NumericsError> {
    p.check()?;
    let sf = StandardForm::build(p);
    let ncols = sf.cols.len();
    let mut solver = Revised::new(&sf, *settings);

    let phase1_cost: Vec<T> = sf
        .kinds
        .iter()
        .map(|k| if *k == Column::Artificial { T::one() } else { T::zero() })
        .collect();
    let end = solver.run(&phase1_cost);
    let infeasibility = solver.objective(&phase1_cost);
    let b_scale = T::one() + sf.b.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
    let status = match end {
        RunEnd::IterationLimit => Some(LpStatus::IterationLimit),
        _ if infeasibility > settings.feasibility_tol * b_scale => Some(LpStatus::Infeasible),
        _ => None,
    };
    let status = match status {
        Some(s) => s,
        None => {
            solver.expel_artificials();
            for j in 0..ncols {
                if sf.kinds[j] == Column::Artificial {
                    solver.enterable[j] = false;
                }
            }
            solver.refactor();
            match solver.run(&sf.cost) {
                RunEnd::Optimal => LpStatus::Optimal,
                RunEnd::Unbounded => LpStatus::Unbounded,
                RunEnd::IterationLimit => LpStatus::IterationLimit,
            }
        }
    };

    let mut w = vec![T::zero(); ncols];
    for (&j, &v) in solver.basis.iter().zip(&solver.xb) {
        w[j] = v;
    }
    let n = p.num_vars();
    let mut x: Vec<T> = p.lower.iter().map(|l| l.unwrap_or_else(T::zero)).collect();
    for (j, kind) in sf.kinds.iter().enumerate() {
        if let Column::Var { index, negated } = *kind {
            if negated {
                x[index] -= w[j];
            } else {
                x[index] += w[j];
            }
        }
    }

    let sense_sign = match p.sense {
        Sense::Minimize => T::one(),
        Sense::Maximize => -T::one(),
    };
    let y_std = solver.duals(&sf.cost);
    let y: Vec<T> = y_std
        .iter()
        .zip(&sf.row_sign)
        .map(|(&v, &s)| v * s * sense_sign)
        .collect();
    let (duals_eq, duals_ineq) = y.split_at(p.a_eq.rows());
    let mut reduced_costs = p.c.clone();
    let at_eq = p.a_eq.tr_mul_vec(duals_eq);
    let at_in = p.a_ineq.tr_mul_vec(duals_ineq);
    for j in 0..n {
        reduced_costs[j] -= at_eq[j] + at_in[j];
    }
    Ok(LpSolution {
        status,
        objective: crate::scalar::dot(&p.c, &x),
        x,
        duals_eq: duals_eq.to_vec(),
        duals_ineq: duals_ineq.to_vec(),
        reduced_costs,
        iterations: solver.iterations,
    })
}
