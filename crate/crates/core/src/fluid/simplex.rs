//! Dense two-phase primal simplex.
//!
//! Pricing is Dantzig's most-negative reduced cost until a run of degenerate
//! pivots is seen; from then on the solver stays on Bland's smallest-index
//! rule, which cannot cycle.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

const PIVOT_TOL: f64 = 1e-9;
const DEGENERATE_RUN: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("simplex iteration limit reached")]
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// minimise `objective · x + constant` subject to the constraints and x ≥ 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constant: f64,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
    /// One multiplier per constraint: value = constant + Σ duals_i rhs_i.
    pub duals: Vec<f64>,
    pub iterations: usize,
    /// Phase-2 objective after every pivot (for monotonicity checks).
    pub trace: Vec<f64>,
}

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        LinearProgram {
            objective: vec![0.0; num_vars],
            constant: 0.0,
            constraints: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn push(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.num_vars());
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
    }

    /// Largest violation of any constraint (or of x ≥ 0) at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = x.iter().fold(0.0f64, |w, &v| w.max(-v));
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().zip(x).map(|(a, b)| a * b).sum();
            let v = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(v);
        }
        worst
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.constant + self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        Tableau::build(self).run(self)
    }
}

struct Tableau {
    rows: usize,
    width: usize,
    n_struct: usize,
    art_start: usize,
    // (rows + 1) × (width + 1); last row reduced costs, last column rhs
    t: Vec<f64>,
    basis: Vec<usize>,
    sign: Vec<f64>,
    bland: bool,
    degenerate: usize,
    iterations: usize,
    limit: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let rows = lp.constraints.len();
        let n_struct = lp.num_vars();
        let n_slack = lp
            .constraints
            .iter()
            .filter(|c| c.relation != Relation::Eq)
            .count();
        let art_start = n_struct + n_slack;
        let width = art_start + rows;
        let stride = width + 1;
        let mut t = vec![0.0; (rows + 1) * stride];
        let mut sign = vec![1.0; rows];
        let mut slack = n_struct;
        for (r, c) in lp.constraints.iter().enumerate() {
            let row = &mut t[r * stride..(r + 1) * stride];
            row[..n_struct].copy_from_slice(&c.coeffs);
            match c.relation {
                Relation::Le => {
                    row[slack] = 1.0;
                    slack += 1;
                }
                Relation::Ge => {
                    row[slack] = -1.0;
                    slack += 1;
                }
                Relation::Eq => {}
            }
            row[width] = c.rhs;
            if c.rhs < 0.0 {
                sign[r] = -1.0;
                row[..art_start].iter_mut().for_each(|v| *v = -*v);
                row[width] = -row[width];
            }
            row[art_start + r] = 1.0;
        }
        Tableau {
            rows,
            width,
            n_struct,
            art_start,
            t,
            basis: (art_start..art_start + rows).collect(),
            sign,
            bland: false,
            degenerate: 0,
            iterations: 0,
            limit: 50_000 + 20 * (rows + width),
        }
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * (self.width + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.width)
    }

    /// Rebuilds the reduced-cost row for costs `c` (indexed by column).
    fn price(&mut self, cost: &dyn Fn(usize) -> f64) {
        let stride = self.width + 1;
        let obj = self.rows * stride;
        for col in 0..=self.width {
            let mut d = if col < self.width { cost(col) } else { 0.0 };
            for r in 0..self.rows {
                d -= cost(self.basis[r]) * self.t[r * stride + col];
            }
            self.t[obj + col] = d;
        }
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let stride = self.width + 1;
        let p = self.t[pr * stride + pc];
        for v in &mut self.t[pr * stride..(pr + 1) * stride] {
            *v /= p;
        }
        let (before, rest) = self.t.split_at_mut(pr * stride);
        let (prow, after) = rest.split_at_mut(stride);
        let eliminate = |row: &mut [f64]| {
            let f = row[pc];
            if f != 0.0 {
                for (v, &pv) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * pv;
                }
                row[pc] = 0.0;
            }
        };
        before.chunks_mut(stride).for_each(eliminate);
        after.chunks_mut(stride).for_each(eliminate);
        self.basis[pr] = pc;
        self.iterations += 1;
    }

    fn entering(&self, allow_artificial: bool) -> Option<usize> {
        let limit = if allow_artificial { self.width } else { self.art_start };
        let obj = self.rows * (self.width + 1);
        let reduced = &self.t[obj..obj + limit];
        if self.bland {
            reduced.iter().position(|&d| d < -PIVOT_TOL)
        } else {
            let mut best = None;
            let mut best_d = -PIVOT_TOL;
            for (c, &d) in reduced.iter().enumerate() {
                if d < best_d {
                    best_d = d;
                    best = Some(c);
                }
            }
            best
        }
    }

    fn leaving(&self, col: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for r in 0..self.rows {
            let a = self.at(r, col);
            if a > PIVOT_TOL {
                let ratio = self.rhs(r) / a;
                let better = match best {
                    None => true,
                    Some((b, br)) => {
                        ratio < br - 1e-12 || (ratio <= br + 1e-12 && self.basis[r] < self.basis[b])
                    }
                };
                if better {
                    best = Some((r, ratio));
                }
            }
        }
        best.map(|(r, _)| r)
    }

    fn optimise(&mut self, allow_artificial: bool, trace: &mut Vec<f64>) -> Result<(), LpError> {
        loop {
            let Some(col) = self.entering(allow_artificial) else {
                return Ok(());
            };
            let Some(row) = self.leaving(col) else {
                return Err(LpError::Unbounded);
            };
            if self.iterations >= self.limit {
                return Err(LpError::IterationLimit);
            }
            if self.rhs(row).abs() <= PIVOT_TOL {
                self.degenerate += 1;
                if self.degenerate >= DEGENERATE_RUN {
                    self.bland = true;
                }
            } else {
                self.degenerate = 0;
            }
            self.pivot(row, col);
            // objective row rhs holds −(current objective)
            trace.push(-self.at(self.rows, self.width));
        }
    }

    fn run(mut self, lp: &LinearProgram) -> Result<LpSolution, LpError> {
        let art_start = self.art_start;
        let b_norm = self.t.chunks(self.width + 1).take(self.rows).fold(0.0f64, |m, r| {
            m.max(r[self.width].abs())
        });

        // phase 1: minimise the sum of artificials
        self.price(&|c| if c >= art_start { 1.0 } else { 0.0 });
        let mut phase1 = Vec::new();
        self.optimise(false, &mut phase1)?;
        let infeasibility = -self.at(self.rows, self.width);
        if infeasibility > 1e-7 * (1.0 + b_norm) {
            return Err(LpError::Infeasible);
        }
        // push remaining zero-level artificials out of the basis
        for r in 0..self.rows {
            if self.basis[r] >= art_start {
                if let Some(c) = (0..art_start).find(|&c| self.at(r, c).abs() > PIVOT_TOL) {
                    self.pivot(r, c);
                }
            }
        }

        // phase 2
        self.bland = false;
        self.degenerate = 0;
        let n_struct = self.n_struct;
        let objective = &lp.objective;
        self.price(&|c| if c < n_struct { objective[c] } else { 0.0 });
        let mut trace = Vec::new();
        self.optimise(false, &mut trace)?;

        let mut x = vec![0.0; self.n_struct];
        for r in 0..self.rows {
            let b = self.basis[r];
            if b < self.n_struct {
                x[b] = self.rhs(r).max(0.0);
            }
        }
        // y_r = −(reduced cost of artificial r), sign-corrected for flipped rows
        let duals = (0..self.rows)
            .map(|r| -self.at(self.rows, art_start + r) * self.sign[r])
            .collect();
        Ok(LpSolution {
            value: lp.evaluate(&x),
            x,
            duals,
            iterations: self.iterations,
            trace: trace.into_iter().map(|v| v + lp.constant).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn single_constraint_maximisation() {
        // max x1 + x2 s.t. x1 + x2 <= 1
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![-1.0, -1.0];
        lp.push(vec![1.0, 1.0], Relation::Le, 1.0);
        let sol = lp.solve().unwrap();
        assert!((sol.value + 1.0).abs() < 1e-12);
        assert!((sol.duals[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn negative_bound_is_infeasible() {
        let mut lp = LinearProgram::new(1);
        lp.objective = vec![1.0];
        lp.push(vec![1.0], Relation::Le, -1.0);
        assert_eq!(lp.solve(), Err(LpError::Infeasible));
    }

    #[test]
    fn unbounded_direction_detected() {
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![-1.0, 0.0];
        lp.push(vec![1.0, -1.0], Relation::Le, 1.0);
        assert_eq!(lp.solve(), Err(LpError::Unbounded));
    }

    #[test]
    fn equality_and_ge_rows() {
        // min x + 2y s.t. x + y = 3, x >= 1, y >= 0.5
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 2.0];
        lp.push(vec![1.0, 1.0], Relation::Eq, 3.0);
        lp.push(vec![1.0, 0.0], Relation::Ge, 1.0);
        lp.push(vec![0.0, 1.0], Relation::Ge, 0.5);
        let sol = lp.solve().unwrap();
        assert!((sol.value - 3.5).abs() < 1e-12);
        assert!((sol.x[0] - 2.5).abs() < 1e-12);
        let dual_value: f64 = sol
            .duals
            .iter()
            .zip(&lp.constraints)
            .map(|(y, c)| y * c.rhs)
            .sum();
        assert!((dual_value - sol.value).abs() < 1e-12);
    }

    #[test]
    fn redundant_equalities_are_tolerated() {
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 1.0];
        lp.push(vec![1.0, 1.0], Relation::Eq, 2.0);
        lp.push(vec![2.0, 2.0], Relation::Eq, 4.0);
        let sol = lp.solve().unwrap();
        assert!((sol.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn objective_trace_is_monotone() {
        let mut lp = LinearProgram::new(3);
        lp.objective = vec![-3.0, -2.0, -4.0];
        lp.push(vec![1.0, 1.0, 2.0], Relation::Le, 4.0);
        lp.push(vec![2.0, 0.0, 3.0], Relation::Le, 5.0);
        lp.push(vec![2.0, 1.0, 3.0], Relation::Le, 7.0);
        let sol = lp.solve().unwrap();
        assert!(sol.trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(lp.max_violation(&sol.x) < 1e-9);
    }
}
