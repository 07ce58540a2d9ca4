//! Bounded-variable revised primal simplex with an explicit dense basis
//! inverse. Every row `r` is written as `a_r . x - y_r = 0` with the row
//! bounds carried by the slack `y_r`; phase 1 adds an artificial for each row
//! whose starting slack value is out of bounds.

use super::{LpError, LpProblem, LpSolution, LpStatus, PivotRule, Relation, Sense, SolverConfig};

const REFACTOR_EVERY: usize = 100;
const DEGENERATE_RUN: usize = 50;
const PIVOT_TOL: f64 = 1e-11;
const INFEASIBLE_TOL: f64 = 1e-7;
const PERTURBATION: f64 = 1e-6;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum State {
    Basic,
    Lower,
    Upper,
    Free,
}

enum Outcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

struct Simplex {
    m: usize,
    cols: Vec<Vec<(usize, f64)>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    state: Vec<State>,
    basis: Vec<usize>,
    binv: Vec<f64>,
    tol: f64,
    rule: PivotRule,
    iterations: usize,
    max_iters: usize,
    since_refactor: usize,
    degenerate_run: usize,
    artificial_start: usize,
    /// Unperturbed bounds of the row slacks, which start at column `n`.
    exact_rows: Vec<(f64, f64)>,
    pi: Vec<f64>,
    alpha: Vec<f64>,
}

fn start_state(lower: f64, upper: f64, hint: Option<f64>) -> (State, f64) {
    let (lo, up) = (lower.is_finite(), upper.is_finite());
    match (lo, up) {
        (false, false) => (State::Free, 0.0),
        (true, false) => (State::Lower, lower),
        (false, true) => (State::Upper, upper),
        (true, true) => match hint {
            Some(h) if (upper - h).abs() < (h - lower).abs() => (State::Upper, upper),
            _ => (State::Lower, lower),
        },
    }
}

impl Simplex {
    fn new(problem: &LpProblem, config: &SolverConfig, hint: Option<&[f64]>, perturb: bool) -> Self {
        let n = problem.variables.len();
        let m = problem.constraints.len();
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (r, c) in problem.constraints.iter().enumerate() {
            for &(j, a) in &c.coeffs {
                if a != 0.0 {
                    cols[j].push((r, a));
                }
            }
        }
        let mut lower = Vec::with_capacity(n + 2 * m);
        let mut upper = Vec::with_capacity(n + 2 * m);
        let mut x = Vec::with_capacity(n + 2 * m);
        let mut state = Vec::with_capacity(n + 2 * m);
        for (j, v) in problem.variables.iter().enumerate() {
            let (st, val) = start_state(v.lower, v.upper, hint.map(|h| h[j]));
            lower.push(v.lower);
            upper.push(v.upper);
            x.push(val);
            state.push(st);
        }
        let mut activity = vec![0.0; m];
        for (j, col) in cols.iter().enumerate() {
            if x[j] != 0.0 {
                for &(r, a) in col {
                    activity[r] += a * x[j];
                }
            }
        }
        let mut basis = vec![0; m];
        let mut binv = vec![0.0; m * m];
        let mut artificials = Vec::new();
        let mut exact_rows = Vec::with_capacity(m);
        for (r, c) in problem.constraints.iter().enumerate() {
            let shrink = if perturb { perturbation(r, c.rhs) } else { 0.0 };
            let (lo, up) = match c.relation {
                Relation::Ge => (c.rhs + shrink, f64::INFINITY),
                Relation::Le => (f64::NEG_INFINITY, c.rhs - shrink),
                Relation::Eq => (c.rhs, c.rhs),
            };
            exact_rows.push(match c.relation {
                Relation::Ge => (c.rhs, f64::INFINITY),
                Relation::Le => (f64::NEG_INFINITY, c.rhs),
                Relation::Eq => (c.rhs, c.rhs),
            });
            let slack = cols.len();
            cols.push(vec![(r, -1.0)]);
            lower.push(lo);
            upper.push(up);
            let act = activity[r];
            if act >= lo - config.tolerance && act <= up + config.tolerance {
                x.push(act);
                state.push(State::Basic);
                basis[r] = slack;
                binv[r * m + r] = -1.0;
            } else {
                let (bound, st) = if act < lo {
                    (lo, State::Lower)
                } else {
                    (up, State::Upper)
                };
                x.push(bound);
                state.push(st);
                artificials.push((r, bound - act));
            }
        }
        let artificial_start = cols.len();
        let mut cost = vec![0.0; artificial_start];
        for (r, gap) in artificials {
            let sigma = gap.signum();
            basis[r] = cols.len();
            binv[r * m + r] = sigma;
            cols.push(vec![(r, sigma)]);
            lower.push(0.0);
            upper.push(f64::INFINITY);
            x.push(gap.abs());
            state.push(State::Basic);
            cost.push(1.0);
        }
        Simplex {
            m,
            cols,
            lower,
            upper,
            cost,
            x,
            state,
            basis,
            binv,
            tol: config.tolerance,
            rule: config.pivot,
            iterations: 0,
            max_iters: config.max_iters,
            since_refactor: 0,
            degenerate_run: 0,
            artificial_start,
            exact_rows,
            pi: vec![0.0; m],
            alpha: vec![0.0; m],
        }
    }

    fn has_artificials(&self) -> bool {
        self.cols.len() > self.artificial_start
    }

    fn phase_one_objective(&self) -> f64 {
        self.x[self.artificial_start..].iter().sum()
    }

    fn compute_pi(&mut self) {
        let m = self.m;
        self.pi.iter_mut().for_each(|p| *p = 0.0);
        for i in 0..m {
            let c = self.cost[self.basis[i]];
            if c != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for (p, &b) in self.pi.iter_mut().zip(row) {
                    *p += c * b;
                }
            }
        }
    }

    fn reduced_cost(&self, j: usize) -> f64 {
        self.cost[j] - self.cols[j].iter().map(|&(r, a)| self.pi[r] * a).sum::<f64>()
    }

    fn ftran(&mut self, j: usize) {
        let m = self.m;
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            self.alpha[i] = self.cols[j].iter().map(|&(r, a)| row[r] * a).sum();
        }
    }

    /// Picks the entering column and its direction of movement.
    fn price(&self) -> Option<(usize, f64)> {
        let bland = self.rule == PivotRule::Bland || self.degenerate_run >= DEGENERATE_RUN;
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.cols.len() {
            let st = self.state[j];
            if st == State::Basic || self.lower[j] == self.upper[j] {
                continue;
            }
            let d = self.reduced_cost(j);
            let dir = if d < -self.tol && st != State::Upper {
                1.0
            } else if d > self.tol && st != State::Lower {
                -1.0
            } else {
                continue;
            };
            if bland {
                return Some((j, dir));
            }
            if best.is_none_or(|(_, _, b)| d.abs() > b) {
                best = Some((j, dir, d.abs()));
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    fn iterate(&mut self) -> Outcome {
        loop {
            if self.iterations >= self.max_iters {
                return Outcome::IterationLimit;
            }
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor();
            }
            self.compute_pi();
            let Some((j, dir)) = self.price() else {
                return Outcome::Optimal;
            };
            self.ftran(j);
            let bland = self.rule == PivotRule::Bland || self.degenerate_run >= DEGENERATE_RUN;

            // ratio test: (step, row, |pivot|)
            let mut best: Option<(f64, usize, f64)> = None;
            for i in 0..self.m {
                let delta = dir * self.alpha[i];
                let b = self.basis[i];
                let ratio = if delta > PIVOT_TOL && self.lower[b].is_finite() {
                    (self.x[b] - self.lower[b]) / delta
                } else if delta < -PIVOT_TOL && self.upper[b].is_finite() {
                    (self.upper[b] - self.x[b]) / -delta
                } else {
                    continue;
                };
                let ratio = ratio.max(0.0);
                let better = match best {
                    None => true,
                    Some((r, row, piv)) => {
                        if ratio < r - 1e-12 {
                            true
                        } else if ratio > r + 1e-12 {
                            false
                        } else if bland {
                            b < self.basis[row]
                        } else {
                            delta.abs() > piv || (delta.abs() == piv && b < self.basis[row])
                        }
                    }
                };
                if better {
                    best = Some((ratio, i, delta.abs()));
                }
            }
            let span = self.upper[j] - self.lower[j];
            self.iterations += 1;
            match best {
                None if !span.is_finite() => return Outcome::Unbounded,
                Some((t, _, _)) if t < span => {
                    let (_, row, _) = best.expect("matched");
                    self.pivot(j, dir, t, row);
                }
                _ => {
                    // bound flip without a basis change
                    self.shift(j, dir, span);
                    self.state[j] = if dir > 0.0 { State::Upper } else { State::Lower };
                    self.x[j] = if dir > 0.0 { self.upper[j] } else { self.lower[j] };
                    self.degenerate_run = 0;
                }
            }
        }
    }

    fn shift(&mut self, j: usize, dir: f64, t: f64) {
        if t == 0.0 {
            return;
        }
        self.x[j] += dir * t;
        for i in 0..self.m {
            let b = self.basis[i];
            self.x[b] -= dir * t * self.alpha[i];
        }
    }

    fn pivot(&mut self, j: usize, dir: f64, t: f64, row: usize) {
        self.shift(j, dir, t);
        if t <= self.tol {
            self.degenerate_run += 1;
        } else {
            self.degenerate_run = 0;
        }
        let leaving = self.basis[row];
        let delta = dir * self.alpha[row];
        if delta > 0.0 {
            self.x[leaving] = self.lower[leaving];
            self.state[leaving] = State::Lower;
        } else {
            self.x[leaving] = self.upper[leaving];
            self.state[leaving] = State::Upper;
        }
        self.state[j] = State::Basic;
        self.basis[row] = j;

        let m = self.m;
        let piv = self.alpha[row];
        for k in 0..m {
            self.binv[row * m + k] /= piv;
        }
        let (before, rest) = self.binv.split_at_mut(row * m);
        let (prow, after) = rest.split_at_mut(m);
        for i in 0..m {
            let a = self.alpha[i];
            if i == row || a == 0.0 {
                continue;
            }
            let target = if i < row {
                &mut before[i * m..(i + 1) * m]
            } else {
                let o = (i - row - 1) * m;
                &mut after[o..o + m]
            };
            for (t, &p) in target.iter_mut().zip(prow.iter()) {
                *t -= a * p;
            }
        }
        self.since_refactor += 1;
    }

    /// Puts the exact row bounds back; false if the basis is then no longer
    /// primal feasible.
    fn restore_rows(&mut self, n: usize) -> bool {
        for (r, &(lo, up)) in self.exact_rows.iter().enumerate() {
            let j = n + r;
            self.lower[j] = lo;
            self.upper[j] = up;
            match self.state[j] {
                State::Lower => self.x[j] = lo,
                State::Upper => self.x[j] = up,
                _ => {}
            }
        }
        self.refactor();
        let tol = self.tol;
        self.basis
            .iter()
            .all(|&b| self.x[b] >= self.lower[b] - tol && self.x[b] <= self.upper[b] + tol)
    }

    /// Recomputes the basis inverse and basic values from scratch.
    fn refactor(&mut self) {
        let m = self.m;
        self.since_refactor = 0;
        if m == 0 {
            return;
        }
        let mut a = vec![0.0; m * m];
        for (i, &b) in self.basis.iter().enumerate() {
            for &(r, v) in &self.cols[b] {
                a[r * m + i] = v;
            }
        }
        if let Some(inv) = invert(a, m) {
            self.binv = inv;
        }
        let mut rhs = vec![0.0; m];
        for (j, col) in self.cols.iter().enumerate() {
            if self.state[j] != State::Basic && self.x[j] != 0.0 {
                for &(r, v) in col {
                    rhs[r] -= v * self.x[j];
                }
            }
        }
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            self.x[self.basis[i]] = row.iter().zip(&rhs).map(|(b, r)| b * r).sum();
        }
    }
}

/// A small deterministic tightening of row `r`, distinct per row, that
/// breaks the ties behind degenerate pivots.
fn perturbation(r: usize, rhs: f64) -> f64 {
    let h = (r as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 11;
    let u = 0.5 + 0.5 * (h as f64 / (1u64 << 53) as f64);
    PERTURBATION * (1.0 + rhs.abs()) * u
}

/// Gauss-Jordan inverse with partial pivoting; `None` when singular.
fn invert(mut a: Vec<f64>, m: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; m * m];
    for i in 0..m {
        inv[i * m + i] = 1.0;
    }
    for c in 0..m {
        let p = (c..m).max_by(|&x, &y| a[x * m + c].abs().total_cmp(&a[y * m + c].abs()))?;
        if a[p * m + c].abs() < 1e-13 {
            return None;
        }
        if p != c {
            for k in 0..m {
                a.swap(p * m + k, c * m + k);
                inv.swap(p * m + k, c * m + k);
            }
        }
        let d = a[c * m + c];
        for k in 0..m {
            a[c * m + k] /= d;
            inv[c * m + k] /= d;
        }
        for r in 0..m {
            let f = a[r * m + c];
            if r == c || f == 0.0 {
                continue;
            }
            for k in 0..m {
                a[r * m + k] -= f * a[c * m + k];
                inv[r * m + k] -= f * inv[c * m + k];
            }
        }
    }
    Some(inv)
}

pub fn solve(problem: &LpProblem, config: &SolverConfig) -> Result<LpSolution, LpError> {
    solve_from(problem, config, None)
}

/// Like [`solve`], starting each bounded variable at the bound nearer `hint`.
pub fn solve_from(problem: &LpProblem, config: &SolverConfig, hint: Option<&[f64]>) -> Result<LpSolution, LpError> {
    problem.check()?;
    if let Some(h) = hint {
        if h.len() != problem.variables.len() {
            return Err(LpError::MalformedProblem(format!(
                "hint has {} values for {} variables",
                h.len(),
                problem.variables.len()
            )));
        }
    }
    let n = problem.variables.len();
    if let Some(v) = problem.variables.iter().find(|v| v.lower > v.upper) {
        log::debug!("variable {} has empty bounds", v.name);
        return Ok(LpSolution {
            status: LpStatus::Infeasible,
            values: vec![0.0; n],
            objective: 0.0,
            iterations: 0,
            certificate: Vec::new(),
        });
    }
    // a tightened problem avoids most degenerate stalls; its solutions are
    // feasible for the original, and a failure falls back to the exact rows
    let first = run(problem, config, hint, true);
    if first.status == LpStatus::Feasible || first.status == LpStatus::Unbounded {
        return Ok(first);
    }
    let mut second = run(problem, config, hint, false);
    second.iterations += first.iterations;
    Ok(second)
}

fn run(problem: &LpProblem, config: &SolverConfig, hint: Option<&[f64]>, perturb: bool) -> LpSolution {
    let n = problem.variables.len();
    let mut sx = Simplex::new(problem, config, hint, perturb);
    let finish = |sx: &Simplex, status: LpStatus, certificate: Vec<usize>| {
        let values: Vec<f64> = (0..n)
            .map(|j| sx.x[j].clamp(problem.variables[j].lower, problem.variables[j].upper))
            .collect();
        LpSolution {
            status,
            objective: problem.objective_value(&values),
            values,
            iterations: sx.iterations,
            certificate,
        }
    };

    if sx.has_artificials() {
        match sx.iterate() {
            Outcome::IterationLimit => return finish(&sx, LpStatus::IterationLimit, Vec::new()),
            Outcome::Unbounded => unreachable!("phase one is bounded below"),
            Outcome::Optimal => {}
        }
        sx.refactor();
        if sx.phase_one_objective() > INFEASIBLE_TOL {
            sx.compute_pi();
            let cert = (0..sx.m).filter(|&r| sx.pi[r].abs() > sx.tol).collect();
            return finish(&sx, LpStatus::Infeasible, cert);
        }
        for j in sx.artificial_start..sx.cols.len() {
            sx.upper[j] = 0.0;
            if sx.state[j] != State::Basic {
                sx.x[j] = 0.0;
                sx.state[j] = State::Lower;
            }
        }
        sx.cost.iter_mut().for_each(|c| *c = 0.0);
    }

    if !problem.objective.is_empty() {
        let sign = if problem.sense == Sense::Maximize { -1.0 } else { 1.0 };
        for &(j, c) in &problem.objective {
            sx.cost[j] = sign * c;
        }
        sx.degenerate_run = 0;
        match sx.iterate() {
            Outcome::IterationLimit => return finish(&sx, LpStatus::IterationLimit, Vec::new()),
            Outcome::Unbounded => return finish(&sx, LpStatus::Unbounded, Vec::new()),
            Outcome::Optimal => {}
        }
        if perturb {
            // finish on the exact rows from the perturbed optimum
            sx.refactor();
            let tightened = finish(&sx, LpStatus::Feasible, Vec::new());
            if !sx.restore_rows(n) {
                return tightened;
            }
            sx.degenerate_run = 0;
            match sx.iterate() {
                Outcome::Optimal => {}
                Outcome::Unbounded => return finish(&sx, LpStatus::Unbounded, Vec::new()),
                Outcome::IterationLimit => {
                    return LpSolution {
                        iterations: sx.iterations,
                        ..tightened
                    }
                }
            }
        }
    }
    sx.refactor();
    finish(&sx, LpStatus::Feasible, Vec::new())
}
