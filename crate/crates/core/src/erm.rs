//! Learning a CLT instance with zero training error.
//!
//! Every constraint a trajectory imposes on node `i` involves only the
//! weights into `i` and its thresholds, so learning splits into one small LP
//! per node. Rows are kept as integer data so that grid-valued assignments
//! can be checked exactly.

use std::collections::HashSet;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, DatasetError};
use crate::diffusion::{self, DiffusionError};
use crate::graph::Graph;
use crate::instance::{CltInstance, InstanceError};
use crate::lp::{self, LpError, LpProblem, LpStatus, Relation, Sense, SolverConfig};
use crate::scaled::{pow10, ScaledValue};
use crate::status::BinaryMatrix;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ErmError {
    #[error("dataset has no samples")]
    EmptyDataset,
    #[error("inconsistent sample: {0}")]
    InconsistentSample(#[from] DatasetError),
    #[error("LP of node {node} is infeasible ({count} infeasible nodes in total)")]
    NodeLpInfeasible { node: usize, count: usize },
    #[error("LP of node {0} hit the iteration limit")]
    IterationLimit(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
}

/// Which source nodes may carry weight into a node.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum CandidatePolicy {
    /// Every other node; the graph is unknown.
    #[default]
    AllNodes,
    /// Only the in-neighbors of a known graph.
    KnownGraph(Graph),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ErmObjective {
    /// Any feasible point.
    Feasibility,
    /// Maximize a common slack added to every data row.
    MaxMargin,
    /// Minimize the total weight, favoring few in-neighbors.
    SparseWeights,
    /// Weighted total weight. A source costs more the more often it was
    /// active while the node stayed quiet, counted over all cascades.
    #[default]
    EvidenceWeights,
}

impl ErmObjective {
    pub const ALL: [ErmObjective; 4] = [
        ErmObjective::Feasibility,
        ErmObjective::MaxMargin,
        ErmObjective::SparseWeights,
        ErmObjective::EvidenceWeights,
    ];
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErmConfig {
    /// Slack realizing the strict inequalities; `None` means one grid unit.
    pub margin: Option<ScaledValue>,
    pub candidates: CandidatePolicy,
    pub solver: SolverConfig,
    pub objective: ErmObjective,
    /// Drop phase-1 rows implied by another row of the same node and cascade.
    pub reduce_rows: bool,
    /// Extra decimal digits tried when a solution does not snap to the data grid.
    pub extra_digits: u32,
}

impl Default for ErmConfig {
    fn default() -> Self {
        ErmConfig {
            margin: None,
            candidates: CandidatePolicy::AllNodes,
            solver: SolverConfig::default(),
            objective: ErmObjective::EvidenceWeights,
            reduce_rows: true,
            extra_digits: 4,
        }
    }
}

impl ErmConfig {
    fn margin_units(&self, precision: u32) -> Result<i64, ErmError> {
        match self.margin {
            None => Ok(1),
            Some(m) => {
                let m = m
                    .rescale(precision)
                    .map_err(|_| ErmError::InvalidConfig(format!("margin {m} is not a multiple of 10^-{precision}")))?;
                if m.units() <= 0 {
                    return Err(ErmError::InvalidConfig("margin must be positive".into()));
                }
                Ok(m.units())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowKind {
    /// The node became a candidate: sum minus threshold at least 0.
    Candidate,
    /// The node stayed a non-candidate: sum minus threshold at most minus the margin.
    NonCandidate,
    /// Winner sum minus rival sum at least 0 (or the margin for smaller rivals).
    Winner,
    Normalization,
}

/// One row `sum(coef * x) relation rhs`, with `rhs` in grid units.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ErmRow {
    pub kind: RowKind,
    pub cascade: usize,
    pub terms: Vec<(usize, i64)>,
    pub relation: Relation,
    pub rhs_units: i64,
}

impl ErmRow {
    fn holds(&self, x: &[i64], rhs_scale: i64) -> bool {
        let lhs: i128 = self.terms.iter().map(|&(v, c)| i128::from(c) * i128::from(x[v])).sum();
        let rhs = i128::from(self.rhs_units) * i128::from(rhs_scale);
        match self.relation {
            Relation::Ge => lhs >= rhs,
            Relation::Le => lhs <= rhs,
            Relation::Eq => lhs == rhs,
        }
    }
}

/// The LP of one node: weights `w[s][c]` for each candidate source `c`
/// (cascade-major) followed by one threshold per cascade.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeLp {
    pub node: usize,
    pub cascades: usize,
    pub precision: u32,
    pub margin_units: i64,
    pub candidates: Vec<usize>,
    pub rows: Vec<ErmRow>,
}

impl NodeLp {
    pub fn weight_var(&self, candidate: usize, cascade: usize) -> usize {
        cascade * self.candidates.len() + candidate
    }

    pub fn threshold_var(&self, cascade: usize) -> usize {
        self.cascades * self.candidates.len() + cascade
    }

    pub fn variable_count(&self) -> usize {
        self.cascades * (self.candidates.len() + 1)
    }

    pub fn data_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.kind != RowKind::Normalization).count()
    }

    fn unit(&self) -> f64 {
        1.0 / pow10(self.precision) as f64
    }

    /// The LP in solver form. Under `MaxMargin` a variable `mu` is added to
    /// every data row and maximized.
    pub fn to_problem(&self, objective: ErmObjective) -> LpProblem {
        let max_margin = objective == ErmObjective::MaxMargin;
        let unit = self.unit();
        let mut p = LpProblem::new(Sense::Minimize);
        for s in 0..self.cascades {
            for &c in &self.candidates {
                p.add_variable(format!("w_{}_{}_{}", c + 1, self.node + 1, s + 1), 0.0, 1.0);
            }
        }
        for s in 0..self.cascades {
            p.add_variable(
                format!("theta_{}_{}", self.node + 1, s + 1),
                self.margin_units as f64 * unit,
                1.0,
            );
        }
        let mu = max_margin.then(|| p.add_variable("mu", 0.0, 1.0));
        for (k, row) in self.rows.iter().enumerate() {
            let mut coeffs: Vec<(usize, f64)> = row.terms.iter().map(|&(v, c)| (v, c as f64)).collect();
            if let (Some(mu), true) = (mu, row.kind != RowKind::Normalization) {
                let sign = if row.relation == Relation::Le { 1.0 } else { -1.0 };
                coeffs.push((mu, sign));
            }
            let name = format!("r{}_{}", self.node + 1, k + 1);
            p.add_named_constraint(name, coeffs, row.relation, row.rhs_units as f64 * unit);
        }
        if let Some(mu) = mu {
            p.set_objective(Sense::Maximize, vec![(mu, 1.0)]);
        }
        if objective == ErmObjective::SparseWeights {
            let w = self.cascades * self.candidates.len();
            p.set_objective(Sense::Minimize, (0..w).map(|j| (j, 1.0)).collect());
        }
        if objective == ErmObjective::EvidenceWeights {
            let w = self.cascades * self.candidates.len();
            let (mut pos, mut neg) = (vec![0usize; w], vec![0usize; w]);
            for row in &self.rows {
                let count = match row.kind {
                    RowKind::Candidate => &mut pos,
                    RowKind::NonCandidate => &mut neg,
                    _ => continue,
                };
                for &(v, _) in row.terms.iter().filter(|&&(v, _)| v < w) {
                    count[v] += 1;
                }
            }
            // one graph serves every cascade, so evidence is pooled per source
            let m = self.candidates.len();
            let pooled =
                |count: &[usize], j: usize| -> usize { (0..self.cascades).map(|s| count[s * m + j % m]).sum() };
            let cost = |j: usize| (pooled(&neg, j) + 1) as f64 / (pooled(&pos, j) + 1) as f64;
            p.set_objective(Sense::Minimize, (0..w).map(|j| (j, cost(j))).collect());
        }
        p
    }

    /// Like [`NodeLp::to_problem`] with every row tightened by half a grid
    /// step per term at `precision`, so rounding any solution to the nearest
    /// grid point keeps every row satisfied.
    pub fn to_robust_problem(&self, objective: ErmObjective, precision: u32) -> LpProblem {
        let mut p = self.to_problem(objective);
        let ulp = 10f64.powi(-(precision as i32));
        for (c, row) in p.constraints.iter_mut().zip(&self.rows) {
            let slack = (row.terms.len() as f64 + 1.0) * 0.5 * ulp;
            match c.relation {
                Relation::Ge => c.rhs += slack,
                Relation::Le => c.rhs -= slack,
                Relation::Eq => {}
            }
        }
        p
    }

    /// Rows violated by a grid assignment at `precision` (at least the LP's).
    pub fn violated_rows(&self, units: &[i64], precision: u32) -> Vec<usize> {
        let scale = pow10(precision - self.precision);
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, r)| !r.holds(units, scale))
            .map(|(k, _)| k)
            .collect()
    }

    /// True if every variable lies within its bounds at `precision`.
    pub fn within_bounds(&self, units: &[i64], precision: u32) -> bool {
        let one = pow10(precision);
        let eps = self.margin_units * pow10(precision - self.precision);
        let w = self.cascades * self.candidates.len();
        units[..w].iter().all(|&u| (0..=one).contains(&u)) && units[w..].iter().all(|&u| (eps..=one).contains(&u))
    }

    /// Parameters of `instance` as an assignment of this LP.
    pub fn witness(&self, instance: &CltInstance) -> Vec<i64> {
        let scale = pow10(self.precision.saturating_sub(instance.precision()));
        let mut x = vec![0; self.variable_count()];
        for s in 0..self.cascades {
            for (k, &c) in self.candidates.iter().enumerate() {
                if let Some(e) = instance.graph().edge_id(c, self.node) {
                    x[self.weight_var(k, s)] = instance.weight_units(e, s) * scale;
                }
            }
            x[self.threshold_var(s)] = instance.threshold_units(self.node, s) * scale;
        }
        x
    }
}

/// Active nodes per cascade for every relevant step of every sample.
struct Observations {
    /// `[sample][t - 1][cascade]`: nodes active in that cascade at `t - 1`.
    active: Vec<Vec<Vec<Vec<usize>>>>,
}

/// Steps that can carry information: up to the first fixed point.
fn relevant_steps(sample: &crate::Sample) -> usize {
    (sample.stored_steps().len() + 1).min(sample.horizon())
}

impl Observations {
    fn new(ds: &Dataset) -> Self {
        let active = ds
            .samples()
            .iter()
            .map(|sample| {
                (1..=relevant_steps(sample))
                    .map(|t| {
                        let mut lists = vec![Vec::new(); ds.cascade_count()];
                        for (v, s) in sample.phase2(t - 1).ones() {
                            lists[s].push(v);
                        }
                        lists
                    })
                    .collect()
            })
            .collect();
        Observations { active }
    }
}

fn candidate_sources(ds: &Dataset, node: usize, policy: &CandidatePolicy) -> Vec<usize> {
    match policy {
        CandidatePolicy::AllNodes => (0..ds.node_count()).filter(|&j| j != node).collect(),
        CandidatePolicy::KnownGraph(g) => g.in_edges(node).iter().map(|&(j, _)| j).collect(),
    }
}

struct RowBuilder<'a> {
    lp: NodeLp,
    position: Vec<Option<usize>>,
    reduce: bool,
    seen: HashSet<ErmRow>,
    /// Phase-1 rows awaiting dominance filtering: (row, member bitset, size).
    phase1: Vec<(ErmRow, Vec<u64>, usize)>,
    obs: &'a Observations,
}

impl RowBuilder<'_> {
    fn members(&self, nodes: &[usize]) -> Vec<usize> {
        nodes.iter().filter_map(|&v| self.position[v]).collect()
    }

    fn sum_terms(&self, members: &[usize], cascade: usize, sign: i64) -> Vec<(usize, i64)> {
        members
            .iter()
            .map(|&k| (self.lp.weight_var(k, cascade), sign))
            .collect()
    }

    fn push(&mut self, row: ErmRow) {
        if self.seen.insert(row.clone()) {
            self.lp.rows.push(row);
        }
    }

    fn push_phase1(&mut self, row: ErmRow, members: &[usize]) {
        if !self.reduce {
            self.push(row);
            return;
        }
        let mut bits = vec![0u64; self.lp.candidates.len().div_ceil(64)];
        for &k in members {
            bits[k / 64] |= 1 << (k % 64);
        }
        self.phase1.push((row, bits, members.len()));
    }

    fn sample_rows(&mut self, ds: &Dataset, index: usize) {
        let node = self.lp.node;
        let sample = &ds.samples()[index];
        let eps = self.lp.margin_units;
        let cascades = self.lp.cascades;
        // with reduction, only the last non-candidate row per cascade matters
        let mut last_negative: Vec<Option<(ErmRow, Vec<usize>)>> = vec![None; cascades];
        for t in 1..=relevant_steps(sample) {
            if sample.phase2(t - 1).row_active(node) {
                break;
            }
            let p1 = sample.phase1(t);
            let p2 = sample.phase2(t);
            let lists = &self.obs.active[index][t - 1];
            let members: Vec<Vec<usize>> = lists.iter().map(|l| self.members(l)).collect();
            for s in 0..cascades {
                let mut terms = self.sum_terms(&members[s], s, 1);
                terms.push((self.lp.threshold_var(s), -1));
                let row = if p1.get(node, s) {
                    ErmRow {
                        kind: RowKind::Candidate,
                        cascade: s,
                        terms,
                        relation: Relation::Ge,
                        rhs_units: 0,
                    }
                } else {
                    ErmRow {
                        kind: RowKind::NonCandidate,
                        cascade: s,
                        terms,
                        relation: Relation::Le,
                        rhs_units: -eps,
                    }
                };
                if self.reduce && row.kind == RowKind::NonCandidate {
                    last_negative[s] = Some((row, members[s].clone()));
                } else {
                    self.push_phase1(row, &members[s]);
                }
            }
            let winner = (0..cascades).find(|&s| p2.get(node, s));
            if let Some(w) = winner {
                for r in (0..cascades).filter(|&r| r != w && p1.get(node, r)) {
                    let mut terms = self.sum_terms(&members[w], w, 1);
                    terms.extend(self.sum_terms(&members[r], r, -1));
                    self.push(ErmRow {
                        kind: RowKind::Winner,
                        cascade: w,
                        terms,
                        relation: Relation::Ge,
                        rhs_units: if r < w { eps } else { 0 },
                    });
                }
            }
        }
        for (row, members) in last_negative.into_iter().flatten() {
            self.push_phase1(row, &members);
        }
    }

    /// Keeps maximal non-candidate sets and minimal candidate sets per cascade.
    fn flush_phase1(&mut self) {
        let rows = std::mem::take(&mut self.phase1);
        let mut keep = vec![false; rows.len()];
        for s in 0..self.lp.cascades {
            for kind in [RowKind::NonCandidate, RowKind::Candidate] {
                let mut idx: Vec<usize> = (0..rows.len())
                    .filter(|&k| rows[k].0.cascade == s && rows[k].0.kind == kind)
                    .collect();
                let larger_first = kind == RowKind::NonCandidate;
                idx.sort_by_key(|&k| {
                    (
                        if larger_first {
                            usize::MAX - rows[k].2
                        } else {
                            rows[k].2
                        },
                        k,
                    )
                });
                let mut kept: Vec<usize> = Vec::new();
                for k in idx {
                    let bits = &rows[k].1;
                    let implied = kept.iter().any(|&o| {
                        let other = &rows[o].1;
                        if larger_first {
                            bits.iter().zip(other).all(|(a, b)| a & !b == 0)
                        } else {
                            other.iter().zip(bits).all(|(a, b)| a & !b == 0)
                        }
                    });
                    if !implied {
                        kept.push(k);
                    }
                }
                for k in kept {
                    keep[k] = true;
                }
            }
        }
        for (k, (row, _, _)) in rows.into_iter().enumerate() {
            if keep[k] {
                self.push(row);
            }
        }
    }
}

fn check_dataset(ds: &Dataset) -> Result<(), ErmError> {
    if ds.is_empty() {
        return Err(ErmError::EmptyDataset);
    }
    ds.check()?;
    Ok(())
}

fn build_with(ds: &Dataset, obs: &Observations, node: usize, config: &ErmConfig) -> Result<NodeLp, ErmError> {
    let candidates = candidate_sources(ds, node, &config.candidates);
    let mut position = vec![None; ds.node_count()];
    for (k, &c) in candidates.iter().enumerate() {
        position[c] = Some(k);
    }
    let mut b = RowBuilder {
        lp: NodeLp {
            node,
            cascades: ds.cascade_count(),
            precision: ds.precision(),
            margin_units: config.margin_units(ds.precision())?,
            candidates,
            rows: Vec::new(),
        },
        position,
        reduce: config.reduce_rows,
        seen: HashSet::new(),
        phase1: Vec::new(),
        obs,
    };
    for index in 0..ds.len() {
        b.sample_rows(ds, index);
    }
    b.flush_phase1();
    let one = pow10(ds.precision());
    for s in 0..b.lp.cascades {
        let terms = (0..b.lp.candidates.len()).map(|k| (b.lp.weight_var(k, s), 1)).collect();
        b.lp.rows.push(ErmRow {
            kind: RowKind::Normalization,
            cascade: s,
            terms,
            relation: Relation::Le,
            rhs_units: one,
        });
    }
    Ok(b.lp)
}

fn check_policy(ds: &Dataset, config: &ErmConfig) -> Result<(), ErmError> {
    if let CandidatePolicy::KnownGraph(g) = &config.candidates {
        if g.node_count() != ds.node_count() {
            return Err(ErmError::InvalidConfig(format!(
                "known graph has {} nodes, dataset {}",
                g.node_count(),
                ds.node_count()
            )));
        }
    }
    Ok(())
}

/// The constraint system of one node.
pub fn build_node_lp(ds: &Dataset, node: usize, config: &ErmConfig) -> Result<NodeLp, ErmError> {
    check_dataset(ds)?;
    check_policy(ds, config)?;
    if node >= ds.node_count() {
        return Err(ErmError::InvalidConfig(format!("node {} out of range", node + 1)));
    }
    build_with(ds, &Observations::new(ds), node, config)
}

/// All node LPs, built in parallel.
pub fn build_all_node_lps(ds: &Dataset, config: &ErmConfig) -> Result<Vec<NodeLp>, ErmError> {
    check_dataset(ds)?;
    check_policy(ds, config)?;
    let obs = Observations::new(ds);
    (0..ds.node_count())
        .into_par_iter()
        .map(|v| build_with(ds, &obs, v, config))
        .collect()
}

/// Outcome of substituting an instance's own parameters into every node LP.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WitnessReport {
    pub rows_checked: usize,
    /// (node, row) pairs violated by the substitution, both 0-based.
    pub violations: Vec<(usize, usize)>,
    /// Nodes whose parameters fall outside the variable bounds.
    pub out_of_bounds: Vec<usize>,
}

impl WitnessReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty() && self.out_of_bounds.is_empty()
    }
}

/// Checks, node by node, that `instance` satisfies every row built from
/// `ds`. Only one node LP per worker is alive at a time.
pub fn witness_check(ds: &Dataset, instance: &CltInstance, config: &ErmConfig) -> Result<WitnessReport, ErmError> {
    check_dataset(ds)?;
    check_policy(ds, config)?;
    if instance.node_count() != ds.node_count()
        || instance.cascade_count() != ds.cascade_count()
        || instance.precision() > ds.precision()
    {
        return Err(ErmError::InvalidConfig("instance and dataset shapes differ".into()));
    }
    let obs = Observations::new(ds);
    let per_node = (0..ds.node_count())
        .into_par_iter()
        .map(|v| {
            let lp = build_with(ds, &obs, v, config)?;
            let x = lp.witness(instance);
            let bad = lp.violated_rows(&x, lp.precision);
            Ok((lp.rows.len(), bad, !lp.within_bounds(&x, lp.precision)))
        })
        .collect::<Result<Vec<_>, ErmError>>()?;
    let mut report = WitnessReport::default();
    for (v, (rows, bad, out)) in per_node.into_iter().enumerate() {
        report.rows_checked += rows;
        report.violations.extend(bad.into_iter().map(|r| (v, r)));
        if out {
            report.out_of_bounds.push(v);
        }
    }
    Ok(report)
}

/// The single program over every node's variables.
pub fn build_global_lp(ds: &Dataset, config: &ErmConfig) -> Result<LpProblem, ErmError> {
    let mut global = LpProblem::new(Sense::Minimize);
    for lp in build_all_node_lps(ds, config)? {
        let p = lp.to_problem(ErmObjective::Feasibility);
        let offset = global.variables.len();
        global.variables.extend(p.variables);
        for c in p.constraints {
            let coeffs = c.coeffs.into_iter().map(|(j, a)| (j + offset, a)).collect();
            global.add_named_constraint(c.name, coeffs, c.relation, c.rhs);
        }
    }
    Ok(global)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeDiagnostics {
    /// 1-based node index.
    pub node: usize,
    pub status: LpStatus,
    pub variables: usize,
    pub rows: usize,
    pub iterations: usize,
    /// Precision at which the solution was verified exactly.
    pub precision: u32,
    pub exact: bool,
    /// Objective of the LP whose solution was kept.
    pub objective: ErmObjective,
    pub solve_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnedInstance {
    pub instance: CltInstance,
    pub diagnostics: Vec<NodeDiagnostics>,
}

impl LearnedInstance {
    pub fn all_exact(&self) -> bool {
        self.diagnostics.iter().all(|d| d.exact)
    }
}

/// Rounds an LP solution onto the grid at `precision`, then moves each
/// threshold into the interval its rows allow.
fn snap(lp: &NodeLp, values: &[f64], precision: u32) -> Vec<i64> {
    let one = pow10(precision);
    let scale = pow10(precision - lp.precision);
    let eps = lp.margin_units * scale;
    let w = lp.cascades * lp.candidates.len();
    let mut x = lp::snap_to_grid(&values[..lp.variable_count()], precision);
    for u in &mut x[..w] {
        *u = (*u).clamp(0, one);
    }
    for s in 0..lp.cascades {
        let tv = lp.threshold_var(s);
        let mut lo = eps;
        let mut hi = one;
        let mut activated = false;
        for row in lp.rows.iter().filter(|r| r.cascade == s) {
            let sum: i64 = row
                .terms
                .iter()
                .filter(|&&(v, _)| v != tv)
                .map(|&(v, c)| c * x[v])
                .sum();
            match row.kind {
                RowKind::Candidate => {
                    hi = hi.min(sum);
                    activated = true;
                }
                RowKind::NonCandidate => lo = lo.max(sum - row.rhs_units * scale),
                _ => {}
            }
        }
        // centre the threshold between the quiet and the activating sums;
        // a node never seen activating keeps the highest threshold
        x[tv] = if lo <= hi && activated {
            lo + (hi - lo) / 2
        } else if lo <= hi {
            hi
        } else {
            x[tv].clamp(eps, one)
        };
    }
    x
}

/// Stretches a homogeneous solution as far as the bounds and the
/// normalization rows allow, widening every margin before rounding.
fn stretch(lp: &NodeLp, values: &[f64]) -> Vec<f64> {
    let n = lp.variable_count();
    let w = lp.cascades * lp.candidates.len();
    let mut peak = values[..n].iter().cloned().fold(0.0f64, f64::max);
    for row in lp.rows.iter().filter(|r| r.kind == RowKind::Normalization) {
        let sum: f64 = row.terms.iter().map(|&(v, c)| c as f64 * values[v]).sum();
        peak = peak.max(sum / (row.rhs_units as f64 * lp.unit()));
    }
    let factor = if peak > 0.0 { 0.999 / peak } else { 1.0 };
    if factor <= 1.0 {
        return values[..n].to_vec();
    }
    let mut out: Vec<f64> = values[..n].iter().map(|v| v * factor).collect();
    for v in &mut out[..w] {
        *v = v.min(1.0);
    }
    out
}

struct NodeFit {
    units: Vec<i64>,
    diag: NodeDiagnostics,
}

fn fit_node(lp: &NodeLp, config: &ErmConfig) -> Result<NodeFit, ErmError> {
    let start = Instant::now();
    let q = lp.precision;
    let hint: Vec<f64> = (0..lp.variable_count())
        .map(|v| {
            if v >= lp.cascades * lp.candidates.len() {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let mut diag = NodeDiagnostics {
        node: lp.node + 1,
        status: LpStatus::Feasible,
        variables: lp.variable_count(),
        rows: lp.rows.len(),
        iterations: 0,
        precision: q,
        exact: false,
        objective: config.objective,
        solve_ms: 0.0,
    };
    let exact_at = |x: &[i64], p: u32| lp.within_bounds(x, p) && lp.violated_rows(x, p).is_empty();

    let mut solutions: Vec<(Vec<f64>, ErmObjective)> = Vec::new();
    let order =
        std::iter::once(config.objective).chain(ErmObjective::ALL.into_iter().filter(|&o| o != config.objective));
    for objective in order {
        let problem = lp.to_problem(objective);
        let mut hint = hint.clone();
        hint.resize(problem.variables.len(), 0.0);
        let sol = lp::solve_from(&problem, &config.solver, Some(&hint))?;
        diag.iterations += sol.iterations;
        match sol.status {
            LpStatus::Feasible => {}
            LpStatus::Infeasible => {
                diag.status = LpStatus::Infeasible;
                diag.solve_ms = start.elapsed().as_secs_f64() * 1e3;
                return Ok(NodeFit {
                    units: Vec::new(),
                    diag,
                });
            }
            LpStatus::IterationLimit | LpStatus::Unbounded => return Err(ErmError::IterationLimit(lp.node + 1)),
        }
        let stretched = stretch(lp, &sol.values);
        for values in [&stretched[..], &sol.values[..]] {
            let x = snap(lp, values, q);
            if exact_at(&x, q) {
                diag.exact = true;
                diag.objective = objective;
                diag.solve_ms = start.elapsed().as_secs_f64() * 1e3;
                return Ok(NodeFit { units: x, diag });
            }
        }
        solutions.push((stretched, objective));
    }
    // tightened problems whose rounded solutions are exact by construction
    let mut fallback = None;
    for p in q..=(q + config.extra_digits).min(9) {
        let problem = lp.to_robust_problem(config.objective, p);
        let mut hint = hint.clone();
        hint.resize(problem.variables.len(), 0.0);
        let sol = lp::solve_from(&problem, &config.solver, Some(&hint))?;
        diag.iterations += sol.iterations;
        if sol.status == LpStatus::Feasible {
            let x = snap(lp, &sol.values, p);
            if exact_at(&x, p) {
                diag.exact = true;
                diag.precision = p;
                diag.objective = config.objective;
                diag.solve_ms = start.elapsed().as_secs_f64() * 1e3;
                return Ok(NodeFit { units: x, diag });
            }
        }
        for (values, objective) in solutions.iter().rev() {
            let x = snap(lp, values, p);
            if exact_at(&x, p) {
                diag.exact = true;
                diag.precision = p;
                diag.objective = *objective;
                diag.solve_ms = start.elapsed().as_secs_f64() * 1e3;
                return Ok(NodeFit { units: x, diag });
            }
            fallback = Some((x, p, *objective));
        }
    }
    let (units, p, objective) = fallback.unwrap_or_else(|| (snap(lp, &solutions[0].0, q), q, solutions[0].1));
    log::warn!(
        "node {}: no exact grid solution found; keeping a rounded one",
        lp.node + 1
    );
    diag.precision = p;
    diag.objective = objective;
    diag.solve_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(NodeFit { units, diag })
}

/// Learns an instance from `ds` by solving every node LP.
pub fn fit(ds: &Dataset, config: &ErmConfig) -> Result<LearnedInstance, ErmError> {
    let lps = build_all_node_lps(ds, config)?;
    let fits: Vec<NodeFit> = lps
        .par_iter()
        .map(|lp| fit_node(lp, config))
        .collect::<Result<_, _>>()?;
    let infeasible: Vec<usize> = fits
        .iter()
        .filter(|f| f.diag.status == LpStatus::Infeasible)
        .map(|f| f.diag.node)
        .collect();
    if let Some(&node) = infeasible.first() {
        return Err(ErmError::NodeLpInfeasible {
            node,
            count: infeasible.len(),
        });
    }
    assemble(ds, &lps, fits)
}

fn assemble(ds: &Dataset, lps: &[NodeLp], fits: Vec<NodeFit>) -> Result<LearnedInstance, ErmError> {
    let n = ds.node_count();
    let cascades = ds.cascade_count();
    let precision = fits.iter().map(|f| f.diag.precision).max().unwrap_or(ds.precision());
    let mut edges = Vec::new();
    for (lp, f) in lps.iter().zip(&fits) {
        for (k, &c) in lp.candidates.iter().enumerate() {
            if (0..cascades).any(|s| f.units[lp.weight_var(k, s)] != 0) {
                edges.push((c, lp.node));
            }
        }
    }
    edges.sort_unstable();
    let graph = Graph::new(n, edges).expect("candidate edges are distinct non-loops");
    let mut weights = vec![0; graph.edge_count() * cascades];
    let mut thresholds = vec![0; n * cascades];
    for (lp, f) in lps.iter().zip(&fits) {
        let scale = pow10(precision - f.diag.precision);
        for (k, &c) in lp.candidates.iter().enumerate() {
            if let Some(e) = graph.edge_id(c, lp.node) {
                for s in 0..cascades {
                    weights[e * cascades + s] = f.units[lp.weight_var(k, s)] * scale;
                }
            }
        }
        for s in 0..cascades {
            thresholds[lp.node * cascades + s] = f.units[lp.threshold_var(s)] * scale;
        }
    }
    let instance = CltInstance::from_units(graph, cascades, precision, weights, thresholds)?;
    Ok(LearnedInstance {
        instance,
        diagnostics: fits.into_iter().map(|f| f.diag).collect(),
    })
}

/// Final status predicted by the learned instance.
pub fn predict(learned: &LearnedInstance, initial: &BinaryMatrix) -> Result<BinaryMatrix, ErmError> {
    Ok(diffusion::influence_function(&learned.instance, initial)?)
}
