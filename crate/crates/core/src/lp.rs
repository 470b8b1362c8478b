//! Dense linear programs over free or boxed variables, solved by `minilp`.

use minilp::{ComparisonOp, OptimizationDirection, Problem};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct LinearProgram {
    objective: Vec<f64>,
    bounds: Vec<(f64, f64)>,
    rows: Vec<(Vec<f64>, Cmp, f64)>,
    maximize: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

impl LinearProgram {
    pub fn maximize(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self { objective, bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); n], rows: Vec::new(), maximize: true }
    }

    pub fn minimize(objective: Vec<f64>) -> Self {
        Self { maximize: false, ..Self::maximize(objective) }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn bound(&mut self, var: usize, lo: f64, hi: f64) -> &mut Self {
        self.bounds[var] = (lo, hi);
        self
    }

    pub fn bound_all(&mut self, lo: f64, hi: f64) -> &mut Self {
        for b in &mut self.bounds {
            *b = (lo, hi);
        }
        self
    }

    pub fn row(&mut self, coeffs: Vec<f64>, cmp: Cmp, rhs: f64) -> &mut Self {
        assert_eq!(coeffs.len(), self.n_vars(), "row length must match variable count");
        self.rows.push((coeffs, cmp, rhs));
        self
    }

    pub fn solve(&self) -> Result<LpOutcome> {
        let dir = if self.maximize { OptimizationDirection::Maximize } else { OptimizationDirection::Minimize };
        let mut problem = Problem::new(dir);
        let vars: Vec<_> = self.objective.iter().zip(&self.bounds).map(|(&c, &b)| problem.add_var(c, b)).collect();
        for (coeffs, cmp, rhs) in &self.rows {
            if !rhs.is_finite() || coeffs.iter().any(|c| !c.is_finite()) {
                return Err(Error::Lp("non-finite coefficient".into()));
            }
            let expr: Vec<_> = vars.iter().zip(coeffs).filter(|(_, c)| **c != 0.0).map(|(v, c)| (*v, *c)).collect();
            if expr.is_empty() {
                let ok = match cmp {
                    Cmp::Le => 0.0 <= *rhs,
                    Cmp::Ge => 0.0 >= *rhs,
                    Cmp::Eq => *rhs == 0.0,
                };
                if !ok {
                    return Ok(LpOutcome::Infeasible);
                }
                continue;
            }
            let op = match cmp {
                Cmp::Le => ComparisonOp::Le,
                Cmp::Ge => ComparisonOp::Ge,
                Cmp::Eq => ComparisonOp::Eq,
            };
            problem.add_constraint(expr.as_slice(), op, *rhs);
        }
        match problem.solve() {
            Ok(sol) => {
                let x: Vec<f64> = vars.iter().map(|v| sol[*v]).collect();
                // free variables can come back infinite instead of an Unbounded error
                if !sol.objective().is_finite() || x.iter().any(|v| !v.is_finite()) {
                    return Ok(LpOutcome::Unbounded);
                }
                Ok(LpOutcome::Optimal { value: sol.objective(), x })
            }
            Err(minilp::Error::Infeasible) => Ok(LpOutcome::Infeasible),
            Err(minilp::Error::Unbounded) => Ok(LpOutcome::Unbounded),
        }
    }
}
