//! Small convex programs over Hermitian PSD matrix variables.
//!
//! The objective to maximize is a sum of linear, square-root-of-linear and logarithm-of-linear
//! terms in the traces `Tr(C X)`; constraints are linear trace inequalities/equalities and
//! convex quadratic constraints `Σ w_j e_j(X)² + r(X) ≤ 0` (rotated second-order cones).
//! Scalar non-negative variables are 1×1 PSD variables.
//!
//! [`solve`] runs a primal log-barrier path-following method with a phase-I feasibility
//! search; Newton systems are solved blockwise with low-rank corrections for constraints that
//! couple many variables.

mod barrier;
mod compiled;
mod newton;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_defect, CMat};
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

/// `Σ Tr(C_j X_j) + constant`, with Hermitian coefficient matrices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearExpr {
    pub terms: Vec<(VarId, CMat)>,
    pub constant: f64,
}

impl LinearExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(value: f64) -> Self {
        LinearExpr { terms: Vec::new(), constant: value }
    }

    pub fn with_term(mut self, var: VarId, coeff: CMat) -> Self {
        self.terms.push((var, coeff));
        self
    }

    /// Adds `value` times the (1×1) scalar variable `var`.
    pub fn with_scalar(self, var: VarId, value: f64) -> Self {
        self.with_term(var, CMat::from_element(1, 1, crate::linalg::c(value, 0.0)))
    }

    pub fn plus(mut self, value: f64) -> Self {
        self.constant += value;
        self
    }

    pub fn add_term(&mut self, var: VarId, coeff: CMat) {
        self.terms.push((var, coeff));
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        for (_, cm) in &mut self.terms {
            *cm *= crate::linalg::c(factor, 0.0);
        }
        self.constant *= factor;
        self
    }

    pub fn eval(&self, vars: &[CMat]) -> f64 {
        self.constant + self.terms.iter().map(|(v, cm)| crate::linalg::trace_re(cm, &vars[v.0])).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveTerm {
    /// `weight · e(X)`
    Linear { weight: f64, expr: LinearExpr },
    /// `weight · √e(X)`, `weight ≥ 0`
    Sqrt { weight: f64, expr: LinearExpr },
    /// `weight · ln e(X)`, `weight ≥ 0`
    Log { weight: f64, expr: LinearExpr },
}

impl ObjectiveTerm {
    pub fn eval(&self, vars: &[CMat]) -> f64 {
        match self {
            ObjectiveTerm::Linear { weight, expr } => weight * expr.eval(vars),
            ObjectiveTerm::Sqrt { weight, expr } => weight * expr.eval(vars).max(0.0).sqrt(),
            ObjectiveTerm::Log { weight, expr } => weight * expr.eval(vars).ln(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl Sense {
    fn symbol(&self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "==",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintKind {
    /// `expr (sense) bound`
    Linear { expr: LinearExpr, sense: Sense, bound: f64 },
    /// `Σ w_j e_j(X)² + rest(X) ≤ 0` with `w_j ≥ 0`.
    Quadratic { squares: Vec<(f64, LinearExpr)>, rest: LinearExpr },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub label: String,
    pub kind: ConstraintKind,
}

impl Constraint {
    /// Signed violation: positive when violated.
    pub fn violation(&self, vars: &[CMat]) -> f64 {
        match &self.kind {
            ConstraintKind::Linear { expr, sense, bound } => {
                let v = expr.eval(vars);
                match sense {
                    Sense::Le => v - bound,
                    Sense::Ge => bound - v,
                    Sense::Eq => (v - bound).abs(),
                }
            }
            ConstraintKind::Quadratic { squares, rest } => {
                squares.iter().map(|(w, e)| w * e.eval(vars).powi(2)).sum::<f64>() + rest.eval(vars)
            }
        }
    }

    /// Magnitude used to turn violations into relative residuals.
    fn scale(&self, vars: &[CMat]) -> f64 {
        match &self.kind {
            ConstraintKind::Linear { expr, bound, .. } => bound.abs().max(expr.eval(vars).abs()).max(1.0),
            ConstraintKind::Quadratic { squares, rest } => squares
                .iter()
                .map(|(w, e)| w * e.eval(vars).powi(2))
                .sum::<f64>()
                .max(rest.eval(vars).abs())
                .max(1.0),
        }
    }
}

/// Maximize a concave objective over PSD variables subject to convex constraints.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProblem {
    pub dims: Vec<usize>,
    pub objective: Vec<ObjectiveTerm>,
    pub constraints: Vec<Constraint>,
}

impl ConicProblem {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an `m × m` Hermitian PSD variable.
    pub fn add_var(&mut self, m: usize) -> VarId {
        self.dims.push(m);
        VarId(self.dims.len() - 1)
    }

    /// Adds a scalar `x ≥ 0` (a 1×1 PSD variable).
    pub fn add_scalar(&mut self) -> VarId {
        self.add_var(1)
    }

    pub fn maximize(&mut self, term: ObjectiveTerm) {
        self.objective.push(term);
    }

    pub fn add_linear(&mut self, label: impl Into<String>, expr: LinearExpr, sense: Sense, bound: f64) {
        self.constraints.push(Constraint { label: label.into(), kind: ConstraintKind::Linear { expr, sense, bound } });
    }

    pub fn add_quadratic(&mut self, label: impl Into<String>, squares: Vec<(f64, LinearExpr)>, rest: LinearExpr) {
        self.constraints.push(Constraint { label: label.into(), kind: ConstraintKind::Quadratic { squares, rest } });
    }

    pub fn objective_value(&self, vars: &[CMat]) -> f64 {
        self.objective.iter().map(|t| t.eval(vars)).sum()
    }

    fn exprs(&self) -> impl Iterator<Item = &LinearExpr> {
        let obj = self.objective.iter().map(|t| match t {
            ObjectiveTerm::Linear { expr, .. } | ObjectiveTerm::Sqrt { expr, .. } | ObjectiveTerm::Log { expr, .. } => expr,
        });
        let cons = self.constraints.iter().flat_map(|c| -> Box<dyn Iterator<Item = &LinearExpr>> {
            match &c.kind {
                ConstraintKind::Linear { expr, .. } => Box::new(std::iter::once(expr)),
                ConstraintKind::Quadratic { squares, rest } => Box::new(squares.iter().map(|(_, e)| e).chain(std::iter::once(rest))),
            }
        });
        obj.chain(cons)
    }

    /// Checks dimensions, Hermitian coefficients and concavity of the objective.
    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&m| m == 0) {
            return Err(Error::Structural("PSD variable of dimension zero".into()));
        }
        for e in self.exprs() {
            for (v, cm) in &e.terms {
                let m = *self
                    .dims
                    .get(v.0)
                    .ok_or_else(|| Error::Structural(format!("expression references unknown variable {}", v.0)))?;
                if cm.nrows() != m || cm.ncols() != m {
                    return Err(Error::Structural(format!("coefficient for variable {} is not {m}x{m}", v.0)));
                }
                if hermitian_defect(cm) > 1e-10 * cm.norm().max(1e-300) {
                    return Err(Error::Structural(format!("coefficient for variable {} is not Hermitian", v.0)));
                }
            }
            if !e.constant.is_finite() {
                return Err(Error::Structural("non-finite constant".into()));
            }
        }
        for t in &self.objective {
            match t {
                ObjectiveTerm::Sqrt { weight, .. } | ObjectiveTerm::Log { weight, .. } if !(*weight >= 0.0) => {
                    return Err(Error::Structural("sqrt/log objective weights must be non-negative".into()));
                }
                ObjectiveTerm::Linear { weight, .. } if !weight.is_finite() => {
                    return Err(Error::Structural("non-finite linear weight".into()));
                }
                _ => {}
            }
        }
        for c in &self.constraints {
            if let ConstraintKind::Quadratic { squares, .. } = &c.kind {
                if squares.iter().any(|(w, _)| !(*w >= 0.0)) {
                    return Err(Error::Structural(format!("quadratic constraint `{}` has a negative weight", c.label)));
                }
            }
        }
        Ok(())
    }

    /// Plain-text listing of the problem (one line per term or constraint).
    pub fn to_text(&self) -> String {
        fn expr_text(e: &LinearExpr) -> String {
            let mut s = format!("{:e}", e.constant);
            for (v, cm) in &e.terms {
                let entries: Vec<String> = cm.iter().map(|z| format!("{:e}{:+e}i", z.re, z.im)).collect();
                let _ = write!(s, " + tr(C*X{}) C=[{}]", v.0, entries.join(","));
            }
            s
        }
        let mut out = String::from("conic-problem v1\n");
        let _ = writeln!(out, "variables {}", self.dims.len());
        for (i, m) in self.dims.iter().enumerate() {
            let _ = writeln!(out, "var X{i} psd {m}");
        }
        for t in &self.objective {
            let (kind, w, e) = match t {
                ObjectiveTerm::Linear { weight, expr } => ("linear", weight, expr),
                ObjectiveTerm::Sqrt { weight, expr } => ("sqrt", weight, expr),
                ObjectiveTerm::Log { weight, expr } => ("log", weight, expr),
            };
            let _ = writeln!(out, "maximize {kind} {w:e} * ( {} )", expr_text(e));
        }
        for c in &self.constraints {
            match &c.kind {
                ConstraintKind::Linear { expr, sense, bound } => {
                    let _ = writeln!(out, "subject-to [{}] linear {} {} {bound:e}", c.label, expr_text(expr), sense.symbol());
                }
                ConstraintKind::Quadratic { squares, rest } => {
                    let sq: Vec<String> = squares.iter().map(|(w, e)| format!("{w:e} * ( {} )^2", expr_text(e))).collect();
                    let _ = writeln!(out, "subject-to [{}] quadratic {} + ( {} ) <= 0", c.label, sq.join(" + "), expr_text(rest));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub vars: Vec<CMat>,
    pub objective: f64,
    /// Largest relative constraint violation (0 for strictly interior points).
    pub max_residual: f64,
    /// Duality-gap bound of the returned point.
    pub gap: f64,
    /// Approximate multiplier per constraint (in problem order).
    pub multipliers: Vec<f64>,
    /// Total Newton steps across both phases.
    pub newton_steps: usize,
    /// Why the problem was declared infeasible or failed, naming the worst constraint.
    pub message: String,
}

impl ConicSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    /// Target duality gap (absolute, in objective units).
    pub tolerance: f64,
    /// Cap on barrier (outer) iterations per phase.
    pub max_iterations: usize,
    /// Cap on Newton steps within one centering.
    pub max_newton_steps: usize,
    /// Barrier parameter growth factor.
    pub mu: f64,
    /// Largest number of real coordinates merged into one dense Newton block.
    pub block_cap: usize,
    /// Diagonal value of the default starting point `X = scale · I`.
    pub initial_scale: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { tolerance: 1e-7, max_iterations: 200, max_newton_steps: 100, mu: 20.0, block_cap: 256, initial_scale: 1.0 }
    }
}

/// Solves with the default starting point.
pub fn solve(problem: &ConicProblem, settings: &SolverSettings) -> Result<ConicSolution> {
    solve_from(problem, settings, None)
}

/// Solves starting the feasibility search from `start` when given (it need not be feasible).
pub fn solve_from(problem: &ConicProblem, settings: &SolverSettings, start: Option<&[CMat]>) -> Result<ConicSolution> {
    problem.validate()?;
    if let Some(s) = start {
        if s.len() != problem.dims.len() || s.iter().zip(&problem.dims).any(|(x, &m)| x.nrows() != m || x.ncols() != m) {
            return Err(Error::Structural("starting point does not match the problem variables".into()));
        }
    }
    barrier::run(problem, settings, start)
}
