//! Semidefinite feasibility programs and their solutions.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

use super::expr::{Expr, VarKind, VariableHandle};

/// Default feasibility tolerance.
pub const DEFAULT_TOL: f64 = 1e-7;
/// Margin realizing strict inequalities.
pub const STRICT_MARGIN: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    /// `expr ⪰ margin I`
    Geq,
    /// `expr ⪯ -margin I`
    Leq,
}

impl Sense {
    pub fn sign(&self) -> f64 {
        match self {
            Sense::Geq => 1.0,
            Sense::Leq => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsdConstraint {
    pub name: String,
    pub expr: Expr,
    pub sense: Sense,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EqualityConstraint {
    pub name: String,
    pub expr: Expr,
}

/// `lo <= value <= hi` on a scalar variable or on the trace of a symmetric one.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxConstraint {
    pub name: String,
    pub var: VariableHandle,
    pub lo: f64,
    pub hi: f64,
    pub trace: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Program {
    pub vars: Vec<VariableHandle>,
    pub var_names: Vec<String>,
    pub psd: Vec<PsdConstraint>,
    pub equalities: Vec<EqualityConstraint>,
    pub boxes: Vec<BoxConstraint>,
}

impl Program {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn declare(&mut self, kind: VarKind) -> VariableHandle {
        self.declare_named(kind, &format!("v{}", self.vars.len()))
    }

    pub fn declare_named(&mut self, kind: VarKind, name: &str) -> VariableHandle {
        let h = VariableHandle { id: self.vars.len(), kind };
        self.vars.push(h);
        self.var_names.push(name.to_string());
        h
    }

    fn check_handles(&self, e: &Expr) -> Result<()> {
        for t in &e.terms {
            if self.vars.get(t.var.id) != Some(&t.var) {
                return Err(Error::Precondition(format!("undeclared variable handle {}", t.var.id)));
            }
        }
        Ok(())
    }

    pub fn add_psd(&mut self, expr: Expr, sense: Sense, margin: f64) -> Result<()> {
        let name = format!("psd{}", self.psd.len());
        self.add_psd_named(&name, expr, sense, margin)
    }

    pub fn add_psd_named(&mut self, name: &str, expr: Expr, sense: Sense, margin: f64) -> Result<()> {
        let (r, c) = expr.shape();
        if r != c {
            return Err(Error::Dimension(format!("PSD constraint '{name}' is {r}x{c}")));
        }
        self.check_handles(&expr)?;
        self.psd.push(PsdConstraint { name: name.to_string(), expr, sense, margin });
        Ok(())
    }

    pub fn add_equality(&mut self, expr: Expr) -> Result<()> {
        let name = format!("eq{}", self.equalities.len());
        self.add_equality_named(&name, expr)
    }

    pub fn add_equality_named(&mut self, name: &str, expr: Expr) -> Result<()> {
        self.check_handles(&expr)?;
        self.equalities.push(EqualityConstraint { name: name.to_string(), expr });
        Ok(())
    }

    /// `lo <= trace(V) <= hi`; infinite bounds are dropped.
    pub fn add_trace_box(&mut self, var: VariableHandle, lo: f64, hi: f64) -> Result<()> {
        if !matches!(var.kind, VarKind::Symmetric(_)) {
            return Err(Error::Precondition("trace box needs a symmetric variable".into()));
        }
        self.add_box(var, lo, hi, true)
    }

    pub fn add_scalar_box(&mut self, var: VariableHandle, lo: f64, hi: f64) -> Result<()> {
        if var.kind != VarKind::Scalar {
            return Err(Error::Precondition("scalar box needs a scalar variable".into()));
        }
        self.add_box(var, lo, hi, false)
    }

    fn add_box(&mut self, var: VariableHandle, lo: f64, hi: f64, trace: bool) -> Result<()> {
        if self.vars.get(var.id) != Some(&var) {
            return Err(Error::Precondition(format!("undeclared variable handle {}", var.id)));
        }
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::Precondition(format!("empty box [{lo}, {hi}]")));
        }
        if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
            return Ok(());
        }
        let name = format!("{}box{}", if trace { "trace" } else { "scalar" }, self.boxes.len());
        self.boxes.push(BoxConstraint { name, var, lo, hi, trace });
        Ok(())
    }

    pub fn num_components(&self) -> usize {
        self.vars.iter().map(|v| v.kind.components()).sum()
    }

    /// Independent re-evaluation of every constraint at `values`.
    pub fn evaluate(&self, values: &[Mat]) -> Residuals {
        let get = |h: &VariableHandle| values[h.id].clone();
        let psd = self
            .psd
            .iter()
            .map(|c| {
                let m = linalg::symmetrize(&c.expr.eval(&get)) * c.sense.sign();
                (c.name.clone(), linalg::min_eig(&m) - c.margin)
            })
            .collect();
        let equalities =
            self.equalities.iter().map(|c| (c.name.clone(), linalg::max_abs(&c.expr.eval(&get)))).collect();
        let boxes = self
            .boxes
            .iter()
            .map(|b| {
                let v = if b.trace { values[b.var.id].trace() } else { values[b.var.id][(0, 0)] };
                (b.name.clone(), (b.lo - v).max(v - b.hi).max(0.0))
            })
            .collect();
        Residuals { psd, equalities, boxes }
    }
}

/// Per-constraint residuals: for PSD constraints the smallest eigenvalue of
/// the sense-adjusted expression minus the margin (negative means violated);
/// for equalities the largest absolute entry; for boxes the violation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Residuals {
    pub psd: Vec<(String, f64)>,
    pub equalities: Vec<(String, f64)>,
    pub boxes: Vec<(String, f64)>,
}

impl Residuals {
    pub fn worst_psd(&self) -> f64 {
        self.psd.iter().map(|x| x.1).fold(f64::INFINITY, f64::min)
    }
    pub fn worst_equality(&self) -> f64 {
        self.equalities.iter().map(|x| x.1).fold(0.0, f64::max)
    }
    pub fn worst_box(&self) -> f64 {
        self.boxes.iter().map(|x| x.1).fold(0.0, f64::max)
    }
    pub fn satisfied(&self, tol: f64) -> bool {
        self.worst_psd() >= -tol && self.worst_equality() <= tol && self.worst_box() <= tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Feasible,
    Infeasible,
    NumericalFailure,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Feasible => "feasible",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::NumericalFailure => "numerical-failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub status: SolveStatus,
    /// Value of each declared variable, indexed by handle id.
    pub values: Vec<Mat>,
    pub residuals: Residuals,
    /// Optimal common slack of the scaled constraints (positive means strictly feasible).
    pub slack: f64,
    pub iterations: usize,
    pub message: String,
}

impl Solution {
    pub fn value(&self, h: VariableHandle) -> &Mat {
        &self.values[h.id]
    }

    pub fn is_feasible(&self) -> bool {
        self.status == SolveStatus::Feasible
    }

    pub fn scalar(&self, h: VariableHandle) -> f64 {
        self.values[h.id][(0, 0)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iterations: usize,
    /// Artificial bound on every reduced decision variable.
    pub variable_bound: f64,
    pub verbose: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_iterations: 120, variable_bound: 1e6, verbose: false }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn declare_gives_fresh_handles() {
        let mut p = Program::new();
        let a = p.declare(VarKind::Symmetric(2));
        let b = p.declare(VarKind::Rectangular(1, 2));
        let c = p.declare(VarKind::Scalar);
        assert_ne!(a.id, b.id);
        assert_ne!(b.id, c.id);
        assert_eq!(p.num_components(), 3 + 2 + 1);
    }

    #[test]
    fn non_square_psd_rejected() {
        let mut p = Program::new();
        assert!(matches!(p.add_psd(Expr::zeros(2, 3), Sense::Geq, 0.0), Err(Error::Dimension(_))));
    }

    #[test]
    fn infinite_trace_box_is_noop() {
        let mut p = Program::new();
        let a = p.declare(VarKind::Symmetric(2));
        p.add_trace_box(a, f64::NEG_INFINITY, f64::INFINITY).unwrap();
        assert!(p.boxes.is_empty());
        assert!(p.add_trace_box(a, 2.0, 1.0).is_err());
    }

    #[test]
    fn foreign_handle_rejected() {
        let mut p = Program::new();
        let mut q = Program::new();
        q.declare(VarKind::Scalar);
        let h = q.declare(VarKind::Symmetric(2));
        assert!(p.add_psd(Expr::var(h), Sense::Geq, 0.0).is_err());
    }
}
