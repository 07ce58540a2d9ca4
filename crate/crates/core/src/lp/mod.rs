//! Dense linear programs: representation, a bounded-variable revised primal
//! simplex, exact verification on a decimal grid, and the textual LP format.

mod exact;
mod format;
mod simplex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use exact::{decimal_rational, snap_to_grid, verify_exact, ExactCheck};
pub use format::{export_lp_format, parse_lp_format};
pub use simplex::{solve, solve_from};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LpError {
    #[error("malformed problem: {0}")]
    MalformedProblem(String),
    #[error("name {0:?} is not alphanumeric-with-underscore")]
    UnsupportedName(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    Ge,
    Le,
    Eq,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Ge => ">=",
            Relation::Le => "<=",
            Relation::Eq => "=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    /// Sparse `(variable, coefficient)` pairs, each variable at most once.
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub sense: Sense,
    pub objective: Vec<(usize, f64)>,
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
}

impl Default for LpProblem {
    fn default() -> Self {
        LpProblem::new(Sense::Minimize)
    }
}

impl LpProblem {
    pub fn new(sense: Sense) -> Self {
        LpProblem {
            sense,
            objective: Vec::new(),
            variables: Vec::new(),
            constraints: Vec::new(),
        }
    }

    pub fn add_variable(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> usize {
        self.variables.push(Variable {
            name: name.into(),
            lower,
            upper,
        });
        self.variables.len() - 1
    }

    /// Adds a row named `c<k>` (1-based position).
    pub fn add_constraint(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> usize {
        let name = format!("c{}", self.constraints.len() + 1);
        self.add_named_constraint(name, coeffs, relation, rhs)
    }

    pub fn add_named_constraint(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(usize, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> usize {
        self.constraints.push(Constraint {
            name: name.into(),
            coeffs,
            relation,
            rhs,
        });
        self.constraints.len() - 1
    }

    pub fn set_objective(&mut self, sense: Sense, coeffs: Vec<(usize, f64)>) {
        self.sense = sense;
        self.objective = coeffs;
    }

    pub fn variable_count(&self) -> usize {
        self.variables.len()
    }

    pub fn constraint_count(&self) -> usize {
        self.constraints.len()
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn check(&self) -> Result<(), LpError> {
        let n = self.variables.len();
        let bad = |m: String| Err(LpError::MalformedProblem(m));
        for v in &self.variables {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower == f64::INFINITY || v.upper == f64::NEG_INFINITY {
                return bad(format!("variable {} has bounds [{}, {}]", v.name, v.lower, v.upper));
            }
        }
        let check_terms = |what: &str, terms: &[(usize, f64)]| {
            let mut seen = std::collections::HashSet::new();
            for &(j, a) in terms {
                if j >= n {
                    return bad(format!("{what} references undeclared variable {j}"));
                }
                if !a.is_finite() {
                    return bad(format!("{what} has a non-finite coefficient"));
                }
                if !seen.insert(j) {
                    return bad(format!("{what} repeats variable {}", self.variables[j].name));
                }
            }
            Ok(())
        };
        check_terms("objective", &self.objective)?;
        for c in &self.constraints {
            check_terms(&c.name, &c.coeffs)?;
            if !c.rhs.is_finite() {
                return bad(format!("{} has a non-finite right-hand side", c.name));
            }
        }
        Ok(())
    }

    /// Objective value of an assignment.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|&(j, c)| c * x[j]).sum()
    }

    /// Largest violation of any row or bound (0 when feasible).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, &xv) in self.variables.iter().zip(x) {
            worst = worst.max(v.lower - xv).max(xv - v.upper);
        }
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            let gap = match c.relation {
                Relation::Ge => c.rhs - lhs,
                Relation::Le => lhs - c.rhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(gap);
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PivotRule {
    /// Most negative reduced cost, switching to Bland's rule during long degenerate runs.
    Dantzig,
    Bland,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub tolerance: f64,
    pub pivot: PivotRule,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 100_000,
            tolerance: 1e-9,
            pivot: PivotRule::Dantzig,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpStatus {
    Feasible,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Values of the structural variables (meaningful when feasible).
    pub values: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// For infeasible problems: rows whose combination proves infeasibility.
    pub certificate: Vec<usize>,
}

#[cfg(test)]
mod tests;
