use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::LpError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub name: String,
    pub coefs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Row {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coefs.iter().map(|(j, a)| a * x[*j]).sum()
    }

    /// Amount by which `x` violates the row, zero when satisfied.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.activity(x);
        match self.relation {
            Relation::Le => (lhs - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - lhs).max(0.0),
            Relation::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// A linear program over bounded (possibly infinite) variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub vars: Vec<Variable>,
    pub rows: Vec<Row>,
    /// Dense objective, one entry per variable.
    pub objective: Vec<f64>,
    pub sense: Sense,
}

impl LinearProgram {
    pub fn new(sense: Sense) -> LinearProgram {
        LinearProgram { vars: Vec::new(), rows: Vec::new(), objective: Vec::new(), sense }
    }

    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> usize {
        self.vars.push(Variable { name: name.into(), lower, upper });
        self.objective.push(0.0);
        self.vars.len() - 1
    }

    /// Adds a row; repeated column indices are merged.
    pub fn add_row(&mut self, name: impl Into<String>, coefs: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> usize {
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(coefs.len());
        for (j, a) in coefs {
            match merged.iter_mut().find(|(k, _)| *k == j) {
                Some(e) => e.1 += a,
                None => merged.push((j, a)),
            }
        }
        merged.retain(|(_, a)| *a != 0.0);
        self.rows.push(Row { name: name.into(), coefs: merged, relation, rhs });
        self.rows.len() - 1
    }

    pub fn set_objective(&mut self, var: usize, coef: f64) {
        self.objective[var] = coef;
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest row or bound violation at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.rows.iter().map(|r| r.violation(x));
        let bounds = self.vars.iter().zip(x).map(|(v, xv)| (v.lower - xv).max(xv - v.upper).max(0.0));
        rows.chain(bounds).fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<(), LpError> {
        if self.objective.len() != self.vars.len() {
            return Err(LpError::Malformed(format!(
                "objective has {} entries for {} variables",
                self.objective.len(),
                self.vars.len()
            )));
        }
        for (j, v) in self.vars.iter().enumerate() {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper || v.lower == f64::INFINITY || v.upper == f64::NEG_INFINITY {
                return Err(LpError::Malformed(format!("variable {} ({}) has bounds [{}, {}]", j, v.name, v.lower, v.upper)));
            }
            if !self.objective[j].is_finite() {
                return Err(LpError::Malformed(format!("objective coefficient of {} is not finite", v.name)));
            }
        }
        for (i, r) in self.rows.iter().enumerate() {
            if !r.rhs.is_finite() {
                return Err(LpError::Malformed(format!("row {} ({}) has rhs {}", i, r.name, r.rhs)));
            }
            for (j, a) in &r.coefs {
                if *j >= self.vars.len() || !a.is_finite() {
                    return Err(LpError::Malformed(format!("row {} ({}) has entry ({}, {})", i, r.name, j, a)));
                }
            }
        }
        Ok(())
    }

    /// Human-readable dump: one objective line, one line per row, then bounds.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let term = |out: &mut String, a: f64, j: usize| {
            let _ = write!(out, " {} {} {}", if a < 0.0 { "-" } else { "+" }, a.abs(), self.vars[j].name);
        };
        let _ = write!(out, "{}:", if self.sense == Sense::Max { "maximize" } else { "minimize" });
        for (j, c) in self.objective.iter().enumerate() {
            if *c != 0.0 {
                term(&mut out, *c, j);
            }
        }
        out.push_str("\nsubject to\n");
        for r in &self.rows {
            let _ = write!(out, "  {}:", r.name);
            for (j, a) in &r.coefs {
                term(&mut out, *a, *j);
            }
            let _ = writeln!(out, " {} {}", r.relation.symbol(), r.rhs);
        }
        out.push_str("bounds\n");
        for v in &self.vars {
            let _ = writeln!(out, "  {} <= {} <= {}", v.lower, v.name, v.upper);
        }
        out
    }
}
