//! Bounded-variable primal simplex (two phase, Bland's rule) with dual
//! extraction from the optimal basis.
//!
//! Problems are `min cᵀx` subject to linear rows (`=`, `<=`, `>=`) and
//! per-variable bounds `lo <= x <= hi`, where at least one bound of every
//! variable is finite. The basis inverse is kept explicitly and refreshed
//! from an LU factorization every few dozen pivots.

use crate::linalg::{DenseMatrix, LuFactors};

const FEAS_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-10;
const REFACTOR_EVERY: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Eq,
    Le,
    Ge,
}

#[derive(Debug, Clone)]
struct Row {
    coeffs: Vec<(usize, f64)>,
    kind: RowKind,
    rhs: f64,
}

#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LpError {
    #[error("problem is infeasible (phase-one residual {residual:e})")]
    Infeasible { residual: f64 },
    #[error("problem is unbounded along variable {column}")]
    Unbounded { column: usize },
    #[error("variable {0} has no finite bound")]
    FreeVariable(usize),
    #[error("basis became singular")]
    SingularBasis,
    #[error("iteration limit {0} reached")]
    IterationLimit(usize),
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    /// Values of the caller's variables.
    pub x: Vec<f64>,
    pub objective: f64,
    /// `y_i = d(objective)/d(rhs_i)` for every row.
    pub row_duals: Vec<f64>,
    /// `c_j - yᵀA_j` for the caller's variables.
    pub reduced_costs: Vec<f64>,
    pub is_basic: Vec<bool>,
    /// `yᵀb + Σ d_j x_j` over nonbasic columns; equals `objective` at optimum.
    pub dual_objective: f64,
    /// A nonbasic, non-fixed variable has zero reduced cost (alternative optima).
    pub alternative_optima: bool,
    /// A basic variable sits on one of its bounds (duals may be non-unique).
    pub primal_degenerate: bool,
    pub iterations: usize,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, cost: f64, lo: f64, hi: f64) -> usize {
        self.cost.push(cost);
        self.lower.push(lo);
        self.upper.push(hi);
        self.cost.len() - 1
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, kind: RowKind, rhs: f64) -> usize {
        self.rows.push(Row { coeffs, kind, rhs });
        self.rows.len() - 1
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        for j in 0..self.num_vars() {
            if !self.lower[j].is_finite() && !self.upper[j].is_finite() {
                return Err(LpError::FreeVariable(j));
            }
        }
        let mut s = Simplex::build(self);
        s.phase_one()?;
        s.phase_two()?;
        Ok(s.extract(self))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Status {
    Basic(usize),
    AtLower,
    AtUpper,
}

struct Simplex {
    m: usize,
    n_user: usize,
    n_art_start: usize,
    cols: Vec<Vec<f64>>,
    b: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    original_cost: Vec<f64>,
    x: Vec<f64>,
    status: Vec<Status>,
    basis: Vec<usize>,
    binv: DenseMatrix,
    pivots_since_refactor: usize,
    iterations: usize,
    max_iterations: usize,
}

impl Simplex {
    fn build(lp: &LinearProgram) -> Self {
        let m = lp.rows.len();
        let n_user = lp.num_vars();
        let mut cols: Vec<Vec<f64>> = vec![vec![0.0; m]; n_user];
        let mut lo = lp.lower.clone();
        let mut hi = lp.upper.clone();
        let mut b = Vec::with_capacity(m);
        for (i, row) in lp.rows.iter().enumerate() {
            for &(j, a) in &row.coeffs {
                cols[j][i] += a;
            }
            b.push(row.rhs);
        }
        // logical (slack) columns for inequality rows
        for (i, row) in lp.rows.iter().enumerate() {
            let sign = match row.kind {
                RowKind::Eq => continue,
                RowKind::Le => 1.0,
                RowKind::Ge => -1.0,
            };
            let mut col = vec![0.0; m];
            col[i] = sign;
            cols.push(col);
            lo.push(0.0);
            hi.push(f64::INFINITY);
        }
        let n_struct = cols.len();
        let mut x: Vec<f64> = (0..n_struct)
            .map(|j| if lo[j].is_finite() { lo[j] } else { hi[j] })
            .collect();
        let mut status: Vec<Status> = (0..n_struct)
            .map(|j| {
                if lo[j].is_finite() {
                    Status::AtLower
                } else {
                    Status::AtUpper
                }
            })
            .collect();

        // Crash: a column that is a ±1 singleton in row i can start basic when
        // the value it must take is within its bounds.
        let mut row_count = vec![0usize; n_struct];
        for (j, col) in cols.iter().enumerate() {
            row_count[j] = col.iter().filter(|v| **v != 0.0).count();
        }
        let residual = |cols: &Vec<Vec<f64>>, x: &Vec<f64>, i: usize, skip: usize| -> f64 {
            let mut r = b[i];
            for (j, col) in cols.iter().enumerate() {
                if j != skip && col[i] != 0.0 {
                    r -= col[i] * x[j];
                }
            }
            r
        };
        let mut basis = vec![usize::MAX; m];
        for (i, slot) in basis.iter_mut().enumerate() {
            let cand = (0..n_struct).find(|&j| {
                row_count[j] == 1
                    && cols[j][i].abs() == 1.0
                    && !matches!(status[j], Status::Basic(_))
            });
            if let Some(j) = cand {
                let v = residual(&cols, &x, i, j) / cols[j][i];
                if v >= lo[j] - FEAS_TOL && v <= hi[j] + FEAS_TOL {
                    x[j] = v.clamp(lo[j], hi[j]);
                    status[j] = Status::Basic(i);
                    *slot = j;
                }
            }
        }
        // artificials for the remaining rows
        let n_art_start = cols.len();
        for i in 0..m {
            if basis[i] != usize::MAX {
                continue;
            }
            let r = residual(&cols, &x, i, usize::MAX);
            let mut col = vec![0.0; m];
            col[i] = if r >= 0.0 { 1.0 } else { -1.0 };
            cols.push(col);
            lo.push(0.0);
            hi.push(f64::INFINITY);
            x.push(r.abs());
            let j = cols.len() - 1;
            status.push(Status::Basic(i));
            basis[i] = j;
        }
        let n_total = cols.len();
        let mut cost = vec![0.0; n_total];
        for c in cost.iter_mut().skip(n_art_start) {
            *c = 1.0;
        }
        let mut s = Simplex {
            m,
            n_user,
            n_art_start,
            cols,
            b,
            lo,
            hi,
            cost,
            original_cost: lp.cost.clone(),
            x,
            status,
            basis,
            binv: DenseMatrix::zeros(m, m),
            pivots_since_refactor: 0,
            iterations: 0,
            max_iterations: 200 * (m + n_total) + 1000,
        };
        s.refactor().expect("initial basis is a signed identity");
        s
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        let mut bmat = DenseMatrix::zeros(m, m);
        for (p, &j) in self.basis.iter().enumerate() {
            for i in 0..m {
                bmat.set(i, p, self.cols[j][i]);
            }
        }
        let lu = LuFactors::factor(&bmat).map_err(|_| LpError::SingularBasis)?;
        let mut e = vec![0.0; m];
        for c in 0..m {
            e[c] = 1.0;
            let col = lu.solve(&e);
            e[c] = 0.0;
            for r in 0..m {
                self.binv.set(r, c, col[r]);
            }
        }
        // recompute basic values from the nonbasic ones
        let mut rhs = self.b.clone();
        for (j, st) in self.status.iter().enumerate() {
            if !matches!(st, Status::Basic(_)) && self.x[j] != 0.0 {
                for (r, a) in rhs.iter_mut().zip(&self.cols[j]) {
                    *r -= a * self.x[j];
                }
            }
        }
        let xb = self.binv.mul_vec(&rhs);
        for (p, &j) in self.basis.iter().enumerate() {
            self.x[j] = xb[p];
        }
        self.pivots_since_refactor = 0;
        Ok(())
    }

    fn duals(&self) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (p, &j) in self.basis.iter().enumerate() {
            let c = self.cost[j];
            if c != 0.0 {
                for (r, yr) in y.iter_mut().enumerate() {
                    *yr += c * self.binv.get(p, r);
                }
            }
        }
        y
    }

    fn reduced_cost(&self, y: &[f64], j: usize) -> f64 {
        self.cost[j] - y.iter().zip(&self.cols[j]).map(|(a, b)| a * b).sum::<f64>()
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        self.binv.mul_vec(&self.cols[j])
    }

    /// Runs simplex iterations on the current cost vector until optimal.
    fn optimize(&mut self, allow_artificial_entry: bool) -> Result<(), LpError> {
        let n_candidates = if allow_artificial_entry {
            self.cols.len()
        } else {
            self.n_art_start
        };
        loop {
            if self.iterations >= self.max_iterations {
                return Err(LpError::IterationLimit(self.max_iterations));
            }
            let y = self.duals();
            let cost_scale = self.cost.iter().fold(1.0_f64, |m, c| m.max(c.abs()));
            let tol = OPT_TOL * cost_scale;
            // Bland: lowest-index improving column
            // dir = +1 increases the entering variable, -1 decreases it
            let mut entering = None;
            for j in 0..n_candidates {
                if self.hi[j] - self.lo[j] <= 0.0 {
                    continue;
                }
                let dir = match self.status[j] {
                    Status::Basic(_) => continue,
                    Status::AtLower => 1.0,
                    Status::AtUpper => -1.0,
                };
                if self.reduced_cost(&y, j) * dir < -tol {
                    entering = Some((j, dir));
                    break;
                }
            }
            let Some((j, dir)) = entering else {
                return Ok(());
            };
            self.iterations += 1;
            let alpha = self.ftran(j);
            // x_B changes by -dir * alpha * t
            let mut t_best = self.hi[j] - self.lo[j];
            let mut leave: Option<(usize, bool)> = None; // (basis position, leaves at upper)
            for p in 0..self.m {
                let delta = -dir * alpha[p];
                if delta.abs() <= PIVOT_TOL {
                    continue;
                }
                let bj = self.basis[p];
                let (limit, at_upper) = if delta < 0.0 {
                    if !self.lo[bj].is_finite() {
                        continue;
                    }
                    (((self.x[bj] - self.lo[bj]) / -delta).max(0.0), false)
                } else {
                    if !self.hi[bj].is_finite() {
                        continue;
                    }
                    (((self.hi[bj] - self.x[bj]) / delta).max(0.0), true)
                };
                let better = match leave {
                    _ if limit < t_best - 1e-12 => true,
                    Some((q, _)) if (limit - t_best).abs() <= 1e-12 => bj < self.basis[q],
                    _ => false,
                };
                if better {
                    t_best = limit;
                    leave = Some((p, at_upper));
                }
            }
            if !t_best.is_finite() {
                return Err(LpError::Unbounded {
                    column: j.min(self.n_user),
                });
            }
            // apply the step
            self.x[j] += dir * t_best;
            for p in 0..self.m {
                let bj = self.basis[p];
                self.x[bj] -= dir * alpha[p] * t_best;
            }
            match leave {
                None => {
                    // bound flip
                    self.status[j] = if dir > 0.0 {
                        self.x[j] = self.hi[j];
                        Status::AtUpper
                    } else {
                        self.x[j] = self.lo[j];
                        Status::AtLower
                    };
                }
                Some((p, at_upper)) => {
                    let out = self.basis[p];
                    if at_upper {
                        self.x[out] = self.hi[out];
                        self.status[out] = Status::AtUpper;
                    } else {
                        self.x[out] = self.lo[out];
                        self.status[out] = Status::AtLower;
                    }
                    self.pivot(p, j, &alpha)?;
                }
            }
        }
    }

    fn pivot(&mut self, p: usize, j: usize, alpha: &[f64]) -> Result<(), LpError> {
        self.basis[p] = j;
        self.status[j] = Status::Basic(p);
        let piv = alpha[p];
        let m = self.m;
        for c in 0..m {
            let v = self.binv.get(p, c) / piv;
            self.binv.set(p, c, v);
        }
        for r in 0..m {
            if r == p || alpha[r] == 0.0 {
                continue;
            }
            let f = alpha[r];
            for c in 0..m {
                let v = self.binv.get(r, c) - f * self.binv.get(p, c);
                self.binv.set(r, c, v);
            }
        }
        self.pivots_since_refactor += 1;
        if self.pivots_since_refactor >= REFACTOR_EVERY {
            self.refactor()?;
        }
        Ok(())
    }

    fn phase_one(&mut self) -> Result<(), LpError> {
        if self.n_art_start < self.cols.len() {
            self.optimize(true)?;
            self.refactor()?;
            let residual: f64 = (self.n_art_start..self.cols.len())
                .map(|j| self.x[j].abs())
                .sum();
            let scale = self.b.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
            if residual > FEAS_TOL * scale * (self.m as f64).max(1.0) {
                return Err(LpError::Infeasible { residual });
            }
        }
        // pin artificials at zero and try to drive basic ones out
        for j in self.n_art_start..self.cols.len() {
            self.hi[j] = 0.0;
            self.lo[j] = 0.0;
            if !matches!(self.status[j], Status::Basic(_)) {
                self.x[j] = 0.0;
                self.status[j] = Status::AtLower;
            }
        }
        for p in 0..self.m {
            let art = self.basis[p];
            if art < self.n_art_start {
                continue;
            }
            let row: Vec<f64> = (0..self.m).map(|c| self.binv.get(p, c)).collect();
            let cand = (0..self.n_art_start).find(|&j| {
                !matches!(self.status[j], Status::Basic(_))
                    && row.iter().zip(&self.cols[j]).map(|(a, b)| a * b).sum::<f64>().abs()
                        > 1e-7
            });
            if let Some(j) = cand {
                let alpha = self.ftran(j);
                self.x[art] = 0.0;
                self.status[art] = Status::AtLower;
                self.pivot(p, j, &alpha)?;
            }
        }
        self.refactor()?;
        Ok(())
    }

    fn phase_two(&mut self) -> Result<(), LpError> {
        self.cost = vec![0.0; self.cols.len()];
        self.cost[..self.n_user].copy_from_slice(&self.original_cost);
        self.optimize(false)?;
        self.refactor()
    }

    fn extract(&self, lp: &LinearProgram) -> LpSolution {
        let y = self.duals();
        let cost_scale = self.cost.iter().fold(1.0_f64, |m, c| m.max(c.abs()));
        let x: Vec<f64> = (0..self.n_user)
            .map(|j| {
                // snap values that drifted past a bound
                let v = self.x[j];
                v.clamp(lp.lower[j], lp.upper[j])
            })
            .collect();
        let objective = x.iter().zip(&lp.cost).map(|(a, b)| a * b).sum();
        let reduced_costs: Vec<f64> = (0..self.n_user).map(|j| self.reduced_cost(&y, j)).collect();
        let is_basic: Vec<bool> = (0..self.n_user)
            .map(|j| matches!(self.status[j], Status::Basic(_)))
            .collect();
        let mut dual_objective: f64 = y.iter().zip(&self.b).map(|(a, b)| a * b).sum();
        for (j, st) in self.status.iter().enumerate() {
            if !matches!(st, Status::Basic(_)) && self.x[j] != 0.0 {
                dual_objective += self.reduced_cost(&y, j) * self.x[j];
            }
        }
        let alternative_optima = (0..self.n_user).any(|j| {
            !is_basic[j]
                && lp.upper[j] > lp.lower[j]
                && reduced_costs[j].abs() <= OPT_TOL * cost_scale
        });
        let primal_degenerate = self.basis.iter().any(|&j| {
            let v = self.x[j];
            (self.lo[j].is_finite() && (v - self.lo[j]).abs() <= FEAS_TOL)
                || (self.hi[j].is_finite() && (self.hi[j] - v).abs() <= FEAS_TOL)
        });
        LpSolution {
            x,
            objective,
            row_duals: y,
            reduced_costs,
            is_basic,
            dual_objective,
            alternative_optima,
            primal_degenerate,
            iterations: self.iterations,
        }
    }
}
