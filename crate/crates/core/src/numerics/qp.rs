//! Primal active-set method for small dense convex QPs.
//!
//! ```text
//!     minimize     1/2 z'Qz + c'z
//!     subject to   G z >= h
//! ```
//!
//! `Q` only needs to be positive semidefinite. Each iteration minimises the
//! model on the null space of the working constraints; when the reduced
//! Hessian is singular and the reduced gradient has a component in its
//! kernel, the method follows that zero-curvature descent ray until a
//! constraint blocks it (or reports the problem unbounded).

use super::linalg::{back_substitute, householder_qr, symmetric_eigen, Matrix};
use super::lp::{solve_lp, LpProblem, LpStatus, Sense};
use super::NumericsError;
use crate::scalar::{dot, norm2, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem<T> {
    pub q: Matrix<T>,
    pub c: Vec<T>,
    pub g: Matrix<T>,
    pub h: Vec<T>,
}

impl<T: Real> QpProblem<T> {
    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.h.len()
    }

    pub fn objective(&self, z: &[T]) -> T {
        let qz = self.q.mul_vec(z);
        dot(z, &qz) * T::lit(0.5) + dot(&self.c, z)
    }

    fn check(&self) -> Result<(), NumericsError> {
        let d = self.c.len();
        if self.q.rows() != d || self.q.cols() != d || self.g.cols() != d || self.g.rows() != self.h.len() {
            return Err(NumericsError::Dimension(format!(
                "QP with {d} variables: Q {}x{}, G {}x{}, h {}",
                self.q.rows(),
                self.q.cols(),
                self.g.rows(),
                self.g.cols(),
                self.h.len()
            )));
        }
        if !(self.q.is_finite() && self.g.is_finite() && self.c.iter().chain(&self.h).all(|v| v.is_finite())) {
            return Err(NumericsError::Domain("non-finite QP data".into()));
        }
        let scale = T::one() + (0..d).fold(T::zero(), |acc, i| acc.max(self.q[(i, i)].abs()));
        if self.q.max_asymmetry() > T::lit(1e-12) * scale {
            return Err(NumericsError::Domain("Q is not symmetric".into()));
        }
        Ok(())
    }

    /// Largest constraint violation `max(h - Gz, 0)`.
    pub fn infeasibility(&self, z: &[T]) -> T {
        self.g
            .mul_vec(z)
            .iter()
            .zip(&self.h)
            .fold(T::zero(), |acc, (&gz, &h)| acc.max(h - gz))
    }

    /// KKT residuals of a primal-dual pair.
    pub fn kkt(&self, z: &[T], mu: &[T]) -> Kkt<T> {
        let mut grad = self.q.mul_vec(z);
        for (g, &c) in grad.iter_mut().zip(&self.c) {
            *g += c;
        }
        let gt_mu = self.g.tr_mul_vec(mu);
        let stationarity = grad
            .iter()
            .zip(&gt_mu)
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()));
        let slack: Vec<T> = self.g.mul_vec(z).iter().zip(&self.h).map(|(&a, &b)| a - b).collect();
        let complementarity = slack
            .iter()
            .zip(mu)
            .fold(T::zero(), |acc, (&s, &m)| acc.max((s * m).abs()));
        let dual_infeasibility = mu.iter().fold(T::zero(), |acc, &m| acc.max(-m));
        Kkt {
            stationarity,
            complementarity,
            primal_infeasibility: self.infeasibility(z),
            dual_infeasibility,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kkt<T> {
    pub stationarity: T,
    pub complementarity: T,
    pub primal_infeasibility: T,
    pub dual_infeasibility: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings<T> {
    /// Constraint slack below which a constraint counts as active.
    pub feasibility_tol: T,
    /// Relative threshold for treating an eigenvalue of the reduced Hessian as zero.
    pub curvature_tol: T,
    /// Step norm below which the iterate is a working-set minimiser.
    pub step_tol: T,
    /// Most negative multiplier tolerated at optimality.
    pub multiplier_tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for QpSettings<T> {
    fn default() -> Self {
        Self {
            feasibility_tol: T::lit(1e-10),
            curvature_tol: T::lit(1e-11),
            step_tol: T::lit(1e-13),
            multiplier_tol: T::lit(1e-11),
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution<T> {
    pub status: QpStatus,
    pub z: Vec<T>,
    /// One non-negative multiplier per constraint row.
    pub multipliers: Vec<T>,
    pub iterations: usize,
}

impl<T: Real> QpSolution<T> {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

/// Solves from scratch, finding a feasible start with a phase-one LP.
pub fn solve_qp<T: Real>(p: &QpProblem<T>) -> Result<QpSolution<T>, NumericsError> {
    solve_qp_from(p, None, &QpSettings::default())
}

/// Solves from an initial-point hint; an infeasible hint falls back to phase one.
pub fn solve_qp_from<T: Real>(
    p: &QpProblem<T>,
    start: Option<&[T]>,
    settings: &QpSettings<T>,
) -> Result<QpSolution<T>, NumericsError> {
    p.check()?;
    let d = p.dim();
    let start = match start {
        Some(z) if z.len() == d && p.infeasibility(z) <= settings.feasibility_tol => z.to_vec(),
        Some(z) if z.len() != d => {
            return Err(NumericsError::Dimension(format!(
                "start point has {} entries, QP has {d}",
                z.len()
            )))
        }
        _ => match phase_one(p)? {
            Some(z) => z,
            None => {
                return Ok(QpSolution {
                    status: QpStatus::Infeasible,
                    z: vec![T::zero(); d],
                    multipliers: vec![T::zero(); p.num_constraints()],
                    iterations: 0,
                })
            }
        },
    };
    Ok(ActiveSet::new(p, start, *settings).run())
}

fn phase_one<T: Real>(p: &QpProblem<T>) -> Result<Option<Vec<T>>, NumericsError> {
    let d = p.dim();
    let mut lp = LpProblem::new(Sense::Minimize, vec![T::zero(); d]);
    for j in 0..d {
        lp.set_free(j);
    }
    for r in 0..p.num_constraints() {
        lp.add_ge(p.g.row(r), p.h[r]);
    }
    let sol = solve_lp(&lp)?;
    Ok((sol.status == LpStatus::Optimal).then_some(sol.x))
}

struct ActiveSet<'a, T> {
    p: &'a QpProblem<T>,
    s: QpSettings<T>,
    z: Vec<T>,
    working: Vec<usize>,
    in_working: Vec<bool>,
}

enum Step<T> {
    /// Newton step to the minimiser on the current face.
    Newton(Vec<T>),
    /// Zero-curvature descent direction.
    Ray(Vec<T>),
    Stationary,
}

impl<'a, T: Real> ActiveSet<'a, T> {
    fn new(p: &'a QpProblem<T>, z: Vec<T>, s: QpSettings<T>) -> Self {
        let mut this = Self {
            p,
            s,
            z,
            working: Vec::new(),
            in_working: vec![false; p.num_constraints()],
        };
        let gz = p.g.mul_vec(&this.z);
        for r in 0..p.num_constraints() {
            if gz[r] - p.h[r] <= s.feasibility_tol && this.independent_of_working(r) {
                this.working.push(r);
                this.in_working[r] = true;
            }
        }
        this
    }

    fn independent_of_working(&self, r: usize) -> bool {
        if self.working.len() >= self.p.dim() {
            return false;
        }
        let gw = self.working_rows_t(Some(r));
        let (_, rf) = householder_qr(&gw);
        let k = rf.rows();
        let scale = T::one() + norm2(self.p.g.row(r));
        rf[(k - 1, k - 1)].abs() > T::lit(1e-9) * scale
    }

    /// `G_W^T` as a `d x |W|` matrix, optionally with one extra row of `G` appended.
    fn working_rows_t(&self, extra: Option<usize>) -> Matrix<T> {
        let d = self.p.dim();
        let rows: Vec<usize> = self.working.iter().copied().chain(extra).collect();
        let mut m = Matrix::zeros(d, rows.len());
        for (k, &r) in rows.iter().enumerate() {
            for (j, &v) in self.p.g.row(r).iter().enumerate() {
                m[(j, k)] = v;
            }
        }
        m
    }

    fn gradient(&self) -> Vec<T> {
        let mut g = self.p.q.mul_vec(&self.z);
        for (gi, &c) in g.iter_mut().zip(&self.p.c) {
            *gi += c;
        }
        g
    }

    fn step(&self, grad: &[T], basis: &Matrix<T>) -> Step<T> {
        let d = self.p.dim();
        let w = self.working.len();
        let r = d - w;
        if r == 0 {
            return Step::Stationary;
        }
        // Null-space basis Z = trailing columns of the QR factor.
        let z_col = |i: usize, k: usize| basis[(i, w + k)];
        let mut qz: Matrix<T> = Matrix::zeros(d, r);
        for k in 0..r {
            let col: Vec<T> = (0..d).map(|i| z_col(i, k)).collect();
            let qc = self.p.q.mul_vec(&col);
            for i in 0..d {
                qz[(i, k)] = qc[i];
            }
        }
        let mut hess: Matrix<T> = Matrix::zeros(r, r);
        for a in 0..r {
            for b in 0..r {
                hess[(a, b)] = (0..d).map(|i| z_col(i, a) * qz[(i, b)]).sum();
            }
        }
        let rgrad: Vec<T> = (0..r).map(|k| (0..d).map(|i| z_col(i, k) * grad[i]).sum()).collect();
        let (vals, vecs) = symmetric_eigen(&hess);
        let scale = vals.iter().fold(T::one(), |acc, v| acc.max(v.abs()));
        let mut newton = vec![T::zero(); r];
        let mut ray = vec![T::zero(); r];
        for k in 0..r {
            let coef: T = (0..r).map(|i| vecs[(i, k)] * rgrad[i]).sum();
            let target = if vals[k] > self.s.curvature_tol * scale {
                let f = coef / vals[k];
                (&mut newton, f)
            } else {
                (&mut ray, coef)
            };
            for i in 0..r {
                target.0[i] -= target.1 * vecs[(i, k)];
            }
        }
        let lift = |v: &[T]| -> Vec<T> { (0..d).map(|i| (0..r).map(|k| z_col(i, k) * v[k]).sum()).collect() };
        let gscale = T::one() + norm2(grad);
        if norm2(&ray) > T::lit(1e-9) * gscale {
            return Step::Ray(lift(&ray));
        }
        let p = lift(&newton);
        let zscale = T::one() + norm2(&self.z);
        if norm2(&p) <= self.s.step_tol * zscale {
            Step::Stationary
        } else {
            Step::Newton(p)
        }
    }

    /// Largest feasible step along `dir` (capped at `cap`) and the blocking row.
    fn ratio_test(&self, dir: &[T], cap: Option<T>) -> (Option<T>, Option<usize>) {
        let mut best = cap;
        let mut block = None;
        for r in 0..self.p.num_constraints() {
            if self.in_working[r] {
                continue;
            }
            let gd = dot(self.p.g.row(r), dir);
            let scale = T::one() + norm2(self.p.g.row(r));
            if gd >= -T::lit(1e-14) * scale * (T::one() + norm2(dir)) {
                continue;
            }
            let slack = (dot(self.p.g.row(r), &self.z) - self.p.h[r]).max(T::zero());
            let t = slack / -gd;
            if best.is_none_or(|b| t < b) {
                best = Some(t);
                block = Some(r);
            }
        }
        (best, block)
    }

    fn multipliers(&self, grad: &[T], basis: &Matrix<T>, rfac: &Matrix<T>) -> Vec<T> {
        let w = self.working.len();
        let ytg: Vec<T> = (0..w).map(|k| (0..self.p.dim()).map(|i| basis[(i, k)] * grad[i]).sum()).collect();
        back_substitute(rfac, &ytg).unwrap_or_else(|| vec![T::zero(); w])
    }

    fn finish(&self, status: QpStatus, mu_w: &[T], iterations: usize) -> QpSolution<T> {
        let mut multipliers = vec![T::zero(); self.p.num_constraints()];
        for (&r, &m) in self.working.iter().zip(mu_w) {
            multipliers[r] = m.max(T::zero());
        }
        QpSolution {
            status,
            z: self.z.clone(),
            multipliers,
            iterations,
        }
    }

    fn run(mut self) -> QpSolution<T> {
        for it in 0..self.s.max_iter {
            let grad = self.gradient();
            let gw = self.working_rows_t(None);
            let (basis, rfac) = if self.working.is_empty() {
                (Matrix::identity(self.p.dim()), Matrix::zeros(0, 0))
            } else {
                householder_qr(&gw)
            };
            match self.step(&grad, &basis) {
                Step::Stationary => {
                    let mu = self.multipliers(&grad, &basis, &rfac);
                    let worst = mu
                        .iter()
                        .enumerate()
                        .filter(|(_, &m)| m < -self.s.multiplier_tol)
                        .fold(None::<(usize, T)>, |acc, (k, &m)| match acc {
                            Some((_, b)) if b <= m => acc,
                            _ => Some((k, m)),
                        });
                    match worst {
                        None => return self.finish(QpStatus::Optimal, &mu, it + 1),
                        Some((k, _)) => {
                            let r = self.working.remove(k);
                            self.in_working[r] = false;
                        }
                    }
                }
                Step::Newton(p) => {
                    let (t, block) = self.ratio_test(&p, Some(T::one()));
                    let t = t.unwrap_or_else(T::one);
                    for (zi, &pi) in self.z.iter_mut().zip(&p) {
                        *zi += t * pi;
                    }
                    if let Some(r) = block {
                        self.working.push(r);
                        self.in_working[r] = true;
                    }
                }
                Step::Ray(p) => {
                    let (t, block) = self.ratio_test(&p, None);
                    let (Some(t), Some(r)) = (t, block) else {
                        return self.finish(QpStatus::Unbounded, &[], it + 1);
                    };
                    for (zi, &pi) in self.z.iter_mut().zip(&p) {
                        *zi += t * pi;
                    }
                    self.working.push(r);
                    self.in_working[r] = true;
                }
            }
        }
        self.finish(QpStatus::IterationLimit, &[], self.s.max_iter)
    }
}
