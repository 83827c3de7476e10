//! Phase-I / phase-II barrier iterations.

use super::compiled::Compiled;
use super::newton::{cholesky_with_shift, Factored, Piece, Structure};
use super::{ConicProblem, ConicSolution, SolveStatus, SolverSettings};
use crate::error::Result;
use crate::linalg::{c, herm_dim, herm_to_real, min_eigenvalue, real_to_herm, trace_coeffs, CMat};
use nalgebra::{DMatrix, DVector};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Phase {
    One,
    Two,
}

struct Solver<'a> {
    p: &'a ConicProblem,
    c: Compiled,
    st: Structure,
    basis: Vec<Vec<CMat>>,
    settings: &'a SolverSettings,
    newton_steps: usize,
}

/// One log-det factorization: `(log det X, X⁻¹)`.
fn logdet(x: &CMat) -> Option<(f64, CMat)> {
    crate::linalg::hpd_logdet_inverse(x)
}

struct Eval {
    value: f64,
    grad: Vec<f64>,
    grad_s: f64,
    logdet_hess: Vec<DMatrix<f64>>,
    pieces: Vec<Piece>,
}

impl<'a> Solver<'a> {
    fn n_ineq_sources(&self) -> usize {
        self.c.objective.len()
    }

    fn var_block<'x>(&self, x: &'x [f64], v: usize) -> &'x [f64] {
        let off = self.c.offsets[v];
        &x[off..off + herm_dim(self.c.dims[v])]
    }

    fn logdet_sum(&self, x: &[f64]) -> Option<f64> {
        let mut acc = 0.0;
        for (v, &m) in self.c.dims.iter().enumerate() {
            acc += logdet(&real_to_herm(self.var_block(x, v), m))?.0;
        }
        Some(acc)
    }

    /// Barrier function value, `None` outside its domain.
    fn value(&self, phase: Phase, t: f64, x: &[f64], s: f64) -> Option<f64> {
        let mut f = -self.logdet_sum(x)?;
        match phase {
            Phase::Two => {
                for term in &self.c.objective {
                    f -= t * term.derivs(term.arg.eval(x))?.0;
                }
                for (g, _) in &self.c.ineqs {
                    let slack = -g.eval(x);
                    if !(slack > 0.0) {
                        return None;
                    }
                    f -= slack.ln();
                }
            }
            Phase::One => {
                f += t * s;
                let gs = self.c.ineqs.iter().map(|(g, _)| g.eval(x)).chain(self.c.domain.iter().map(|(d, _)| d.eval(x)));
                for g in gs {
                    let slack = s - g;
                    if !(slack > 0.0) {
                        return None;
                    }
                    f -= slack.ln();
                }
            }
        }
        if f.is_finite() {
            Some(f)
        } else {
            None
        }
    }

    fn evaluate(&self, phase: Phase, t: f64, x: &[f64], s: f64) -> Option<Eval> {
        let value = self.value(phase, t, x, s)?;
        let n = self.c.n;
        let mut grad = vec![0.0; n];
        let mut grad_s = 0.0;
        let mut logdet_hess = Vec::with_capacity(self.c.dims.len());
        for (v, &m) in self.c.dims.iter().enumerate() {
            let (_, xi) = logdet(&real_to_herm(self.var_block(x, v), m))?;
            let off = self.c.offsets[v];
            for (k, g) in trace_coeffs(&xi).into_iter().enumerate() {
                grad[off + k] -= g;
            }
            let d = herm_dim(m);
            let mut h = DMatrix::zeros(d, d);
            for (a, ea) in self.basis[m].iter().enumerate() {
                let ya = &xi * ea * &xi;
                for (b, hab) in trace_coeffs(&ya).into_iter().enumerate() {
                    h[(a, b)] = hab;
                }
            }
            logdet_hess.push((&h + h.transpose()) * 0.5);
        }
        let mut pieces = Vec::new();
        let nt = self.n_ineq_sources();
        let ni = self.c.ineqs.len();
        match phase {
            Phase::Two => {
                for (k, term) in self.c.objective.iter().enumerate() {
                    let (_, d1, d2) = term.derivs(term.arg.eval(x))?;
                    term.arg.a.axpy(-t * d1, &mut grad);
                    if d2 != 0.0 {
                        pieces.push(Piece { source: k, w: -t * d2, v: term.arg.a.clone(), vs: 0.0 });
                    }
                }
                for (i, (g, _)) in self.c.ineqs.iter().enumerate() {
                    let slack = -g.eval(x);
                    let (dg, second) = g.gradient(x);
                    dg.axpy(1.0 / slack, &mut grad);
                    for (w2, a) in second {
                        pieces.push(Piece { source: nt + i, w: w2 / slack, v: a.clone(), vs: 0.0 });
                    }
                    pieces.push(Piece { source: nt + i, w: 1.0 / (slack * slack), v: dg, vs: 0.0 });
                }
            }
            Phase::One => {
                grad_s += t;
                for (i, (g, _)) in self.c.ineqs.iter().enumerate() {
                    let slack = s - g.eval(x);
                    let (dg, second) = g.gradient(x);
                    dg.axpy(1.0 / slack, &mut grad);
                    grad_s -= 1.0 / slack;
                    for (w2, a) in second {
                        pieces.push(Piece { source: nt + i, w: w2 / slack, v: a.clone(), vs: 0.0 });
                    }
                    pieces.push(Piece { source: nt + i, w: 1.0 / (slack * slack), v: dg, vs: -1.0 });
                }
                for (k, (d, _)) in self.c.domain.iter().enumerate() {
                    let slack = s - d.eval(x);
                    d.a.axpy(1.0 / slack, &mut grad);
                    grad_s -= 1.0 / slack;
                    pieces.push(Piece { source: nt + ni + k, w: 1.0 / (slack * slack), v: d.a.clone(), vs: -1.0 });
                }
            }
        }
        Some(Eval { value, grad, grad_s, logdet_hess, pieces })
    }

    fn eq_residual(&self, x: &[f64]) -> Vec<f64> {
        self.c.eqs.iter().map(|(a, _)| a.eval(x)).collect()
    }

    fn eq_ok(&self, x: &[f64]) -> bool {
        self.c.eqs.iter().all(|(a, _)| a.eval(x).abs() <= 1e-10 * (1.0 + a.b.abs()))
    }

    /// Newton direction with equality constraints (infeasible start allowed).
    /// Returns `(dx, ds, equality multipliers)`.
    fn direction(&self, phase: Phase, ev: &Eval, x: &[f64]) -> Option<(Vec<f64>, f64, Vec<f64>)> {
        let fact = Factored::new(&self.st, &self.c, &ev.logdet_hess, &ev.pieces, phase == Phase::One)?;
        let neg: Vec<f64> = ev.grad.iter().map(|g| -g).collect();
        let (mut dx, mut ds) = fact.solve(&neg, -ev.grad_s);
        let mut nu = Vec::new();
        if !self.c.eqs.is_empty() {
            let r = self.eq_residual(x);
            let ne = r.len();
            let mut k_cols = Vec::with_capacity(ne);
            let mut dense = vec![0.0; self.c.n];
            for (e, _) in &self.c.eqs {
                dense.iter_mut().for_each(|v| *v = 0.0);
                e.a.axpy(1.0, &mut dense);
                k_cols.push(fact.solve(&dense, 0.0));
            }
            let mut se = DMatrix::zeros(ne, ne);
            for (i, (ei, _)) in self.c.eqs.iter().enumerate() {
                for (j, kj) in k_cols.iter().enumerate() {
                    se[(i, j)] = ei.a.dot(&kj.0);
                }
            }
            let se = (&se + se.transpose()) * 0.5;
            let rhs = DVector::from_iterator(ne, self.c.eqs.iter().zip(&r).map(|((ei, _), ri)| ei.a.dot(&dx) + ri));
            let ch = cholesky_with_shift(se)?;
            let sol = ch.solve(&rhs);
            for (j, kj) in k_cols.iter().enumerate() {
                for (d, k) in dx.iter_mut().zip(&kj.0) {
                    *d -= sol[j] * k;
                }
                ds -= sol[j] * kj.1;
            }
            nu = sol.iter().copied().collect();
        }
        if dx.iter().any(|v| !v.is_finite()) || !ds.is_finite() {
            return None;
        }
        Some((dx, ds, nu))
    }

    /// Minimizes the barrier function for fixed `t`. Returns false on a stall.
    /// In phase I, stops early once `s < 0` with equalities satisfied.
    fn center(&mut self, phase: Phase, t: f64, x: &mut Vec<f64>, s: &mut f64, nu: &mut Vec<f64>) -> bool {
        for _ in 0..self.settings.max_newton_steps {
            if phase == Phase::One && *s < 0.0 && self.eq_ok(x) {
                return true;
            }
            let Some(ev) = self.evaluate(phase, t, x, *s) else { return false };
            let Some((dx, ds, new_nu)) = self.direction(phase, &ev, x) else { return false };
            self.newton_steps += 1;
            let slope: f64 = ev.grad.iter().zip(&dx).map(|(g, d)| g * d).sum::<f64>() + ev.grad_s * ds;
            let feasible_eq = self.eq_ok(x);
            if feasible_eq && -slope <= 1e-10 {
                *nu = new_nu;
                return true;
            }
            let mut alpha = 1.0;
            let mut accepted = false;
            while alpha > 1e-14 {
                let xn: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + alpha * d).collect();
                let sn = *s + alpha * ds;
                if let Some(vn) = self.value(phase, t, &xn, sn) {
                    if !feasible_eq || vn <= ev.value + 0.01 * alpha * slope {
                        *x = xn;
                        *s = sn;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            *nu = new_nu;
            if !accepted {
                // the quadratic model is exhausted at machine precision
                return feasible_eq && -slope <= 1e-6 * (1.0 + ev.value.abs());
            }
            if x.iter().any(|v| v.abs() > 1e15) {
                return false;
            }
        }
        true
    }

    fn worst_constraint(&self, x: &[f64]) -> String {
        let vars = self.vars(x);
        let mut best: Option<(f64, &str)> = None;
        for (g, ci) in &self.c.ineqs {
            let cons = &self.p.constraints[*ci];
            let rel = g.eval(x) / cons.scale(&vars);
            if best.map_or(true, |(b, _)| rel > b) {
                best = Some((rel, &cons.label));
            }
        }
        for (a, ci) in &self.c.eqs {
            let cons = &self.p.constraints[*ci];
            let rel = a.eval(x).abs() / cons.scale(&vars);
            if best.map_or(true, |(b, _)| rel > b) {
                best = Some((rel, &cons.label));
            }
        }
        match best {
            Some((_, l)) => l.to_string(),
            None => "positive semidefiniteness".to_string(),
        }
    }

    fn vars(&self, x: &[f64]) -> Vec<CMat> {
        self.c.dims.iter().enumerate().map(|(v, &m)| real_to_herm(self.var_block(x, v), m)).collect()
    }

    fn finish(&self, status: SolveStatus, x: &[f64], t: f64, gap: f64, nu: &[f64], message: String) -> ConicSolution {
        let vars = self.vars(x);
        let objective = self.p.objective_value(&vars);
        let max_residual = self
            .p
            .constraints
            .iter()
            .map(|cn| (cn.violation(&vars) / cn.scale(&vars)).max(0.0))
            .fold(0.0, f64::max);
        let mut multipliers = vec![0.0; self.p.constraints.len()];
        if t > 0.0 {
            for (g, ci) in &self.c.ineqs {
                let slack = -g.eval(x);
                if slack > 0.0 {
                    multipliers[*ci] = 1.0 / (t * slack);
                }
            }
            for ((_, ci), v) in self.c.eqs.iter().zip(nu) {
                multipliers[*ci] = v / t;
            }
        }
        ConicSolution { status, vars, objective, max_residual, gap, multipliers, newton_steps: self.newton_steps, message }
    }
}

fn basis(m: usize) -> Vec<CMat> {
    (0..herm_dim(m))
        .map(|k| {
            let mut e = vec![0.0; herm_dim(m)];
            e[k] = 1.0;
            real_to_herm(&e, m)
        })
        .collect()
}

pub(crate) fn run(p: &ConicProblem, settings: &SolverSettings, start: Option<&[CMat]>) -> Result<ConicSolution> {
    let compiled = Compiled::new(p);
    let mut sources: Vec<Vec<usize>> = (0..compiled.objective.len()).map(|k| compiled.objective_vars(k)).collect();
    sources.extend((0..compiled.ineqs.len()).map(|k| compiled.ineq_vars(k)));
    sources.extend((0..compiled.domain.len()).map(|k| compiled.domain_vars(k)));
    let st = Structure::build(&compiled, &sources, settings.block_cap);
    let max_m = compiled.dims.iter().copied().max().unwrap_or(0);
    let basis: Vec<Vec<CMat>> = (0..=max_m).map(basis).collect();
    let mut solver = Solver { p, c: compiled, st, basis, settings, newton_steps: 0 };

    let mut x = vec![0.0; solver.c.n];
    for (v, &m) in solver.c.dims.iter().enumerate() {
        let scale = settings.initial_scale.max(1e-12);
        let mut xv = match start {
            Some(s) => crate::linalg::hermitian_part(&s[v]),
            None => CMat::identity(m, m) * c(scale, 0.0),
        };
        let tr = xv.trace().re.abs();
        // a supplied start keeps its own scale; tiny scalars must not be lifted to the default
        let floor = 1e-6 * if start.is_some() && tr > 0.0 { tr } else { tr.max(scale / m as f64) };
        let lmin = min_eigenvalue(&xv);
        if lmin < floor {
            xv += CMat::identity(m, m) * c(floor - lmin, 0.0);
        }
        let off = solver.c.offsets[v];
        x[off..off + herm_dim(m)].copy_from_slice(&herm_to_real(&xv));
    }
    let mut nu = Vec::new();
    let deg_psd: usize = solver.c.dims.iter().sum();

    // phase I
    let gmax = solver
        .c
        .ineqs
        .iter()
        .map(|(g, _)| g.eval(&x))
        .chain(solver.c.domain.iter().map(|(d, _)| d.eval(&x)))
        .fold(f64::NEG_INFINITY, f64::max);
    if gmax >= 0.0 {
        let m1 = (solver.c.ineqs.len() + solver.c.domain.len() + deg_psd) as f64;
        let mut s = gmax + 1.0 + 0.1 * gmax.abs();
        let mut t = 1.0 / s.abs().max(1e-3);
        let mut found = false;
        for _ in 0..settings.max_iterations {
            let ok = solver.center(Phase::One, t, &mut x, &mut s, &mut nu);
            if s < 0.0 && solver.eq_ok(&x) {
                found = true;
                break;
            }
            let lower = s - m1 / t;
            if lower > 0.0 || (m1 / t) < 1e-12 * (1.0 + s.abs()) || !ok {
                if !ok && lower <= 0.0 && (m1 / t) > 1e-6 {
                    let msg = format!("feasibility search stalled near `{}`", solver.worst_constraint(&x));
                    return Ok(solver.finish(SolveStatus::NumericalFailure, &x, 0.0, f64::INFINITY, &nu, msg));
                }
                let msg = format!("no strictly feasible point; most violated constraint `{}`", solver.worst_constraint(&x));
                return Ok(solver.finish(SolveStatus::Infeasible, &x, 0.0, f64::INFINITY, &nu, msg));
            }
            t *= settings.mu;
        }
        if !found {
            let msg = format!("feasibility search hit the iteration cap near `{}`", solver.worst_constraint(&x));
            return Ok(solver.finish(SolveStatus::NumericalFailure, &x, 0.0, f64::INFINITY, &nu, msg));
        }
    }

    // phase II
    let m2 = (solver.c.ineqs.len() + deg_psd) as f64;
    let f0 = {
        let vars = solver.vars(&x);
        p.objective_value(&vars)
    };
    let mut t = (m2 / (f0.abs() + 1.0)).clamp(1e-3, 1e3);
    let mut s = 0.0;
    let mut last_gap = f64::INFINITY;
    for _ in 0..settings.max_iterations {
        let ok = solver.center(Phase::Two, t, &mut x, &mut s, &mut nu);
        if !ok {
            let fv = p.objective_value(&solver.vars(&x));
            if solver.eq_ok(&x) && last_gap <= settings.tolerance.sqrt() * (1.0 + fv.abs()) {
                return Ok(solver.finish(SolveStatus::Optimal, &x, t, last_gap, &nu, "stopped at the precision limit".into()));
            }
            let msg = format!("Newton iterations stalled (barrier gap {last_gap:e})");
            return Ok(solver.finish(SolveStatus::NumericalFailure, &x, t, last_gap, &nu, msg));
        }
        last_gap = m2 / t;
        if last_gap <= settings.tolerance && solver.eq_ok(&x) {
            return Ok(solver.finish(SolveStatus::Optimal, &x, t, last_gap, &nu, String::new()));
        }
        t *= settings.mu;
    }
    let msg = format!("barrier iteration cap reached (gap {last_gap:e})");
    Ok(solver.finish(SolveStatus::NumericalFailure, &x, t, last_gap, &nu, msg))
}

