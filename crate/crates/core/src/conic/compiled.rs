//! Real-coordinate form of a [`ConicProblem`].

use super::{ConicProblem, ConstraintKind, LinearExpr, ObjectiveTerm, Sense};
use crate::linalg::{herm_dim, trace_coeffs};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Default)]
pub(crate) struct Sparse {
    pub idx: Vec<usize>,
    pub val: Vec<f64>,
}

impl Sparse {
    fn from_map(map: BTreeMap<usize, f64>) -> Self {
        let (idx, val) = map.into_iter().filter(|(_, v)| *v != 0.0).unzip();
        Sparse { idx, val }
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.idx.iter().zip(&self.val).map(|(&i, v)| v * x[i]).sum()
    }

    pub fn axpy(&self, a: f64, y: &mut [f64]) {
        for (&i, v) in self.idx.iter().zip(&self.val) {
            y[i] += a * v;
        }
    }

    pub fn is_empty(&self) -> bool {
        self.idx.is_empty()
    }

    /// `Σ c_k s_k`
    pub fn combine(parts: &[(f64, &Sparse)]) -> Sparse {
        let mut map = BTreeMap::new();
        for (coef, s) in parts {
            if *coef == 0.0 {
                continue;
            }
            for (&i, v) in s.idx.iter().zip(&s.val) {
                *map.entry(i).or_insert(0.0) += coef * v;
            }
        }
        Sparse::from_map(map)
    }
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Affine {
    pub a: Sparse,
    pub b: f64,
}

impl Affine {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.a.dot(x) + self.b
    }

    fn negated(mut self) -> Self {
        self.a.val.iter_mut().for_each(|v| *v = -*v);
        self.b = -self.b;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SmoothKind {
    Linear,
    Sqrt,
    Log,
}

#[derive(Debug, Clone)]
pub(crate) struct Smooth {
    pub kind: SmoothKind,
    pub weight: f64,
    pub arg: Affine,
}

impl Smooth {
    /// Value, first and second derivative of the scalar map applied to the argument.
    pub fn derivs(&self, e: f64) -> Option<(f64, f64, f64)> {
        let w = self.weight;
        match self.kind {
            SmoothKind::Linear => Some((w * e, w, 0.0)),
            SmoothKind::Sqrt => {
                if self.arg.a.is_empty() {
                    return Some((w * e.max(0.0).sqrt(), 0.0, 0.0));
                }
                if e <= 0.0 {
                    return None;
                }
                let r = e.sqrt();
                Some((w * r, 0.5 * w / r, -0.25 * w / (e * r)))
            }
            SmoothKind::Log => {
                if e <= 0.0 {
                    return None;
                }
                Some((w * e.ln(), w / e, -w / (e * e)))
            }
        }
    }
}

/// `g(x) ≤ 0`
#[derive(Debug, Clone)]
pub(crate) enum Ineq {
    Affine(Affine),
    Quad { squares: Vec<(f64, Affine)>, rest: Affine },
}

impl Ineq {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Ineq::Affine(a) => a.eval(x),
            Ineq::Quad { squares, rest } => squares.iter().map(|(w, e)| w * e.eval(x).powi(2)).sum::<f64>() + rest.eval(x),
        }
    }

    /// Gradient, plus the second-order pieces `(2 w_j, a_j)` of quadratic constraints.
    pub fn gradient(&self, x: &[f64]) -> (Sparse, Vec<(f64, &Sparse)>) {
        match self {
            Ineq::Affine(a) => (a.a.clone(), Vec::new()),
            Ineq::Quad { squares, rest } => {
                let mut parts: Vec<(f64, &Sparse)> = squares.iter().map(|(w, e)| (2.0 * w * e.eval(x), &e.a)).collect();
                parts.push((1.0, &rest.a));
                let grad = Sparse::combine(&parts);
                let second = squares.iter().map(|(w, e)| (2.0 * w, &e.a)).collect();
                (grad, second)
            }
        }
    }

    fn coords(&self) -> Vec<usize> {
        match self {
            Ineq::Affine(a) => a.a.idx.clone(),
            Ineq::Quad { squares, rest } => {
                let mut v: Vec<usize> = squares.iter().flat_map(|(_, e)| e.a.idx.iter().copied()).chain(rest.a.idx.iter().copied()).collect();
                v.sort_unstable();
                v.dedup();
                v
            }
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Compiled {
    pub dims: Vec<usize>,
    pub offsets: Vec<usize>,
    pub n: usize,
    pub objective: Vec<Smooth>,
    /// Inequalities with the index of the constraint they came from.
    pub ineqs: Vec<(Ineq, usize)>,
    pub eqs: Vec<(Affine, usize)>,
    /// `-arg ≤ 0` for sqrt/log objective terms, with the objective term index.
    pub domain: Vec<(Affine, usize)>,
    pub var_of: Vec<usize>,
}

impl Compiled {
    pub fn new(p: &ConicProblem) -> Self {
        let mut offsets = Vec::with_capacity(p.dims.len());
        let mut n = 0;
        for &m in &p.dims {
            offsets.push(n);
            n += herm_dim(m);
        }
        let mut var_of = vec![0; n];
        for (v, &m) in p.dims.iter().enumerate() {
            for k in 0..herm_dim(m) {
                var_of[offsets[v] + k] = v;
            }
        }
        let affine = |e: &LinearExpr| -> Affine {
            let mut map = BTreeMap::new();
            for (var, cm) in &e.terms {
                let off = offsets[var.0];
                for (k, a) in trace_coeffs(cm).into_iter().enumerate() {
                    if a != 0.0 {
                        *map.entry(off + k).or_insert(0.0) += a;
                    }
                }
            }
            Affine { a: Sparse::from_map(map), b: e.constant }
        };
        let mut objective = Vec::new();
        let mut domain = Vec::new();
        for (ti, t) in p.objective.iter().enumerate() {
            let (kind, weight, expr) = match t {
                ObjectiveTerm::Linear { weight, expr } => (SmoothKind::Linear, *weight, expr),
                ObjectiveTerm::Sqrt { weight, expr } => (SmoothKind::Sqrt, *weight, expr),
                ObjectiveTerm::Log { weight, expr } => (SmoothKind::Log, *weight, expr),
            };
            let arg = affine(expr);
            if kind != SmoothKind::Linear && !arg.a.is_empty() {
                domain.push((arg.clone().negated(), ti));
            }
            objective.push(Smooth { kind, weight, arg });
        }
        let mut ineqs = Vec::new();
        let mut eqs = Vec::new();
        for (ci, c) in p.constraints.iter().enumerate() {
            match &c.kind {
                ConstraintKind::Linear { expr, sense, bound } => {
                    let mut a = affine(expr);
                    a.b -= bound;
                    match sense {
                        Sense::Le => ineqs.push((Ineq::Affine(a), ci)),
                        Sense::Ge => ineqs.push((Ineq::Affine(a.negated()), ci)),
                        Sense::Eq => eqs.push((a, ci)),
                    }
                }
                ConstraintKind::Quadratic { squares, rest } => {
                    let squares = squares.iter().map(|(w, e)| (*w, affine(e))).collect();
                    ineqs.push((Ineq::Quad { squares, rest: affine(rest) }, ci));
                }
            }
        }
        Compiled { dims: p.dims.clone(), offsets, n, objective, ineqs, eqs, domain, var_of }
    }

    fn vars_of_coords(&self, coords: impl IntoIterator<Item = usize>) -> Vec<usize> {
        let mut v: Vec<usize> = coords.into_iter().map(|i| self.var_of[i]).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn objective_vars(&self, k: usize) -> Vec<usize> {
        self.vars_of_coords(self.objective[k].arg.a.idx.iter().copied())
    }

    pub fn ineq_vars(&self, k: usize) -> Vec<usize> {
        self.vars_of_coords(self.ineqs[k].0.coords())
    }

    pub fn domain_vars(&self, k: usize) -> Vec<usize> {
        self.vars_of_coords(self.domain[k].0.a.idx.iter().copied())
    }
}
