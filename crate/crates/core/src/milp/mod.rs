//! Mixed-integer linear programming: model container, LP relaxation solver
//! and a branch-and-bound driver with lazily generated cuts.

mod branch;
mod lp_format;
mod simplex;

pub use branch::{solve_milp, LazyCutOracle, MilpOptions, NoCuts};
pub use lp_format::write_lp;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

/// `Σ coeffs · x  (sense)  rhs`, sparse over variable indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> Self {
        Constraint { coeffs, sense, rhs }
    }

    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let l = self.lhs(x);
        match self.sense {
            Sense::Le => (l - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - l).max(0.0),
            Sense::Eq => (l - self.rhs).abs(),
        }
    }
}

/// Minimization model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub vars: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub objective: Vec<(usize, f64)>,
    pub objective_offset: f64,
}

impl LinearModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind, lower: f64, upper: f64) -> usize {
        let (lower, upper) = match kind {
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
            VarKind::Continuous => (lower, upper),
        };
        self.vars.push(Variable {
            name: name.into(),
            kind,
            lower,
            upper,
        });
        self.vars.len() - 1
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> usize {
        self.add_var(name, VarKind::Binary, 0.0, 1.0)
    }

    pub fn add_constraint(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> usize {
        self.constraints.push(Constraint::new(coeffs, sense, rhs));
        self.constraints.len() - 1
    }

    pub fn set_cost(&mut self, var: usize, c: f64) {
        self.objective.push((var, c));
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective_offset + self.objective.iter().map(|&(j, c)| c * x[j]).sum::<f64>()
    }

    /// Largest violation of any row, bound or integrality requirement.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.constraints.iter().map(|c| c.violation(x)).fold(0.0, f64::max);
        let bounds = self
            .vars
            .iter()
            .zip(x)
            .map(|(v, &xi)| {
                let b = (v.lower - xi).max(xi - v.upper).max(0.0);
                match v.kind {
                    VarKind::Binary => b.max((xi - xi.round()).abs()),
                    VarKind::Continuous => b,
                }
            })
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vars.len();
        for (j, v) in self.vars.iter().enumerate() {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(Error::Validation(format!("variable {j} ({}) has empty bounds", v.name)));
            }
        }
        let check = |terms: &[(usize, f64)], what: &str| -> Result<()> {
            for &(j, a) in terms {
                if j >= n || !a.is_finite() {
                    return Err(Error::Validation(format!("{what} has a bad term ({j}, {a})")));
                }
            }
            Ok(())
        };
        check(&self.objective, "objective")?;
        for (i, c) in self.constraints.iter().enumerate() {
            check(&c.coeffs, &format!("row {i}"))?;
            if !c.rhs.is_finite() {
                return Err(Error::Validation(format!("row {i} has a non-finite rhs")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Node limit reached; `values` holds the incumbent if one was found.
    NodeLimit,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub nodes: usize,
    pub lp_iterations: usize,
    pub cuts_added: usize,
    pub max_depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub status: SolveStatus,
    pub values: Option<Vec<f64>>,
    pub objective: f64,
    /// Lazy cuts generated during the search, in order.
    pub cuts: Vec<Constraint>,
    pub stats: SolveStats,
}

impl Solution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Solves the continuous relaxation of `model`.
pub fn solve_lp(model: &LinearModel) -> Result<Solution> {
    model.validate()?;
    let mut lp = simplex::Lp::new(model);
    let status = branch::robust_solve(&mut lp)?;
    let (status, values, objective) = match status {
        simplex::LpStatus::Optimal => {
            let v = lp.values();
            let obj = model.objective_value(&v);
            (SolveStatus::Optimal, Some(v), obj)
        }
        simplex::LpStatus::Infeasible => (SolveStatus::Infeasible, None, f64::INFINITY),
        simplex::LpStatus::Unbounded => (SolveStatus::Unbounded, None, f64::NEG_INFINITY),
        simplex::LpStatus::Stalled => unreachable!("robust_solve never returns Stalled"),
    };
    Ok(Solution {
        status,
        values,
        objective,
        cuts: Vec::new(),
        stats: SolveStats {
            nodes: 1,
            lp_iterations: lp.iterations,
            ..Default::default()
        },
    })
}
