//! Loss, classification metrics, step matching and the random baseline.
//!
//! Three aggregations are available. `Micro` pools every (node, cascade)
//! cell with "active" as the positive class. `CascadeMacro` averages the
//! per-cascade cell scores. `NodeMacro` treats each node as one prediction
//! over the classes {inactive, cascade 1, ..., cascade S} and averages the
//! one-vs-rest scores of every class that occurs in truth or prediction.

use std::fmt::Write as _;

use num::rational::Ratio;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::diffusion::{self, DiffusionError};
use crate::instance::CltInstance;
use crate::rng::CltRng;
use crate::status::{BinaryMatrix, StatusTensor};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("prediction count {got} does not match {expected} samples")]
    CountMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
}

fn same_shape(a: &BinaryMatrix, b: &BinaryMatrix) -> Result<(), EvalError> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(EvalError::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

/// `#{(i,s) : truth != pred} / (2NS)`, reduced. An empty matrix has loss 0.
pub fn zero_one_loss(truth: &BinaryMatrix, pred: &BinaryMatrix) -> Result<Ratio<u64>, EvalError> {
    same_shape(truth, pred)?;
    let cells = (truth.rows() * truth.cols()) as u64;
    if cells == 0 {
        return Ok(Ratio::from_integer(0));
    }
    let diff = truth.hamming(pred).expect("shapes checked") as u64;
    Ok(Ratio::new(diff, 2 * cells))
}

pub fn ratio_to_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Binary confusion counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

fn div(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl Confusion {
    pub fn record(&mut self, truth: bool, pred: bool) {
        match (truth, pred) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn merge(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn metrics(&self) -> Metrics {
        let precision = div(self.tp, self.tp + self.fp);
        let recall = div(self.tp, self.tp + self.fn_);
        let f1 = if self.tp == 0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Metrics {
            precision,
            recall,
            f1,
            accuracy: div(self.tp + self.tn, self.total()),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Averaging {
    Micro,
    CascadeMacro,
    NodeMacro,
}

impl Averaging {
    pub const ALL: [Averaging; 3] = [Averaging::Micro, Averaging::CascadeMacro, Averaging::NodeMacro];

    pub fn name(self) -> &'static str {
        match self {
            Averaging::Micro => "micro",
            Averaging::CascadeMacro => "cascade_macro",
            Averaging::NodeMacro => "node_macro",
        }
    }
}

/// Counts pooled over any number of (truth, prediction) pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tally {
    cascades: usize,
    per_cascade: Vec<Confusion>,
    /// `(S+1) x (S+1)` node class counts, truth-major; class 0 is inactive.
    classes: Vec<u64>,
}

fn node_class(m: &BinaryMatrix, row: usize) -> usize {
    m.row_ones(row).next().map_or(0, |s| s + 1)
}

impl Tally {
    pub fn new(cascades: usize) -> Self {
        Tally {
            cascades,
            per_cascade: vec![Confusion::default(); cascades],
            classes: vec![0; (cascades + 1) * (cascades + 1)],
        }
    }

    pub fn record(&mut self, truth: &BinaryMatrix, pred: &BinaryMatrix) -> Result<(), EvalError> {
        same_shape(truth, pred)?;
        if truth.cols() != self.cascades {
            return Err(EvalError::ShapeMismatch(format!(
                "{} cascades, tally expects {}",
                truth.cols(),
                self.cascades
            )));
        }
        let k = self.cascades + 1;
        for i in 0..truth.rows() {
            for s in 0..self.cascades {
                self.per_cascade[s].record(truth.get(i, s), pred.get(i, s));
            }
            self.classes[node_class(truth, i) * k + node_class(pred, i)] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &Tally) {
        for (a, b) in self.per_cascade.iter_mut().zip(&other.per_cascade) {
            a.merge(b);
        }
        for (a, b) in self.classes.iter_mut().zip(&other.classes) {
            *a += b;
        }
    }

    pub fn micro(&self) -> Confusion {
        let mut c = Confusion::default();
        self.per_cascade.iter().for_each(|x| c.merge(x));
        c
    }

    /// One-vs-rest confusion of node class `k` (0 = inactive).
    pub fn class_confusion(&self, k: usize) -> Confusion {
        let n = self.cascades + 1;
        let mut c = Confusion::default();
        for t in 0..n {
            for p in 0..n {
                let count = self.classes[t * n + p];
                match (t == k, p == k) {
                    (true, true) => c.tp += count,
                    (false, true) => c.fp += count,
                    (true, false) => c.fn_ += count,
                    (false, false) => c.tn += count,
                }
            }
        }
        c
    }

    pub fn metrics(&self, averaging: Averaging) -> Metrics {
        match averaging {
            Averaging::Micro => self.micro().metrics(),
            Averaging::CascadeMacro => mean_metrics(self.per_cascade.iter().map(Confusion::metrics)),
            Averaging::NodeMacro => {
                let n = self.cascades + 1;
                let present = (0..n)
                    .map(|k| self.class_confusion(k))
                    .filter(|c| c.tp + c.fp + c.fn_ > 0);
                let mut m = mean_metrics(present.map(|c| c.metrics()));
                let nodes: u64 = self.classes.iter().sum();
                let correct: u64 = (0..n).map(|k| self.classes[k * n + k]).sum();
                m.accuracy = div(correct, nodes);
                m
            }
        }
    }
}

fn mean_metrics(items: impl Iterator<Item = Metrics>) -> Metrics {
    let mut sum = Metrics::default();
    let mut count = 0usize;
    for m in items {
        sum.precision += m.precision;
        sum.recall += m.recall;
        sum.f1 += m.f1;
        sum.accuracy += m.accuracy;
        count += 1;
    }
    if count == 0 {
        return sum;
    }
    let c = count as f64;
    Metrics {
        precision: sum.precision / c,
        recall: sum.recall / c,
        f1: sum.f1 / c,
        accuracy: sum.accuracy / c,
    }
}

/// Micro-averaged cell metrics of a single prediction.
pub fn classification_metrics(truth: &BinaryMatrix, pred: &BinaryMatrix) -> Result<Metrics, EvalError> {
    let mut t = Tally::new(truth.cols());
    t.record(truth, pred)?;
    Ok(t.metrics(Averaging::Micro))
}

/// Phase-2 cell agreement for logical steps `1..=len`, where `len` is the
/// longer stored trajectory; later steps repeat the last value.
pub fn step_matching(truth: &StatusTensor, pred: &StatusTensor) -> Result<Vec<f64>, EvalError> {
    same_shape(truth.initial(), pred.initial())?;
    if truth.horizon() != pred.horizon() {
        return Err(EvalError::ShapeMismatch(format!(
            "horizons {} and {}",
            truth.horizon(),
            pred.horizon()
        )));
    }
    let len = truth
        .stored_steps()
        .len()
        .max(pred.stored_steps().len())
        .max(1)
        .min(truth.horizon());
    let cells = truth.node_count() * truth.cascade_count();
    Ok((1..=len)
        .map(|t| {
            let diff = truth.phase2(t).hamming(pred.phase2(t)).expect("shapes checked");
            if cells == 0 {
                1.0
            } else {
                1.0 - diff as f64 / cells as f64
            }
        })
        .collect())
}

/// Every node independently inactive or in one of the `S` cascades, uniformly.
pub fn random_baseline(nodes: usize, cascades: usize, rng: &mut CltRng) -> BinaryMatrix {
    let mut m = BinaryMatrix::zeros(nodes, cascades);
    for i in 0..nodes {
        let k = rng.gen_range(0..=cascades as u64) as usize;
        if k > 0 {
            m.set(i, k - 1, true);
        }
    }
    m
}

/// Mean and sample standard deviation, computed in two passes.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    if values.iter().all(|&v| v == values[0]) {
        return (values[0], 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Per-step match rates averaged over samples, padding shorter series with
/// their last value.
fn average_series(series: &[Vec<f64>]) -> Vec<f64> {
    let len = series.iter().map(Vec::len).max().unwrap_or(0);
    (0..len)
        .map(|t| {
            let sum: f64 = series.iter().map(|s| *s.get(t).or(s.last()).unwrap_or(&1.0)).sum();
            sum / series.len() as f64
        })
        .collect()
}

/// Evaluation of one prediction set against a test set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub samples: usize,
    pub loss: f64,
    pub tally: Tally,
    pub step_match: Option<Vec<f64>>,
}

impl EvalReport {
    pub fn metrics(&self, averaging: Averaging) -> Metrics {
        self.tally.metrics(averaging)
    }

    /// `(name, value)` pairs in a fixed order.
    pub fn rows(&self) -> Vec<(String, f64)> {
        let mut out = vec![("zero_one_loss".to_string(), self.loss)];
        for a in Averaging::ALL {
            let m = self.metrics(a);
            for (name, v) in [
                ("precision", m.precision),
                ("recall", m.recall),
                ("f1", m.f1),
                ("accuracy", m.accuracy),
            ] {
                out.push((format!("{}_{name}", a.name()), v));
            }
        }
        if let Some(steps) = &self.step_match {
            for (t, v) in steps.iter().enumerate() {
                out.push((format!("step_match_{}", t + 1), *v));
            }
        }
        out
    }

    /// CSV with columns `metric,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        out.push_str(&format!("samples,{}\n", self.samples));
        for (name, v) in self.rows() {
            let _ = writeln!(out, "{name},{v}");
        }
        out
    }
}

/// Scores final-status predictions against the final statuses of `test`.
pub fn evaluate_predictions(test: &Dataset, preds: &[BinaryMatrix]) -> Result<EvalReport, EvalError> {
    if preds.len() != test.len() {
        return Err(EvalError::CountMismatch {
            expected: test.len(),
            got: preds.len(),
        });
    }
    let mut tally = Tally::new(test.cascade_count());
    let mut loss = 0.0;
    for (sample, pred) in test.samples().iter().zip(preds) {
        tally.record(sample.final_status(), pred)?;
        loss += ratio_to_f64(zero_one_loss(sample.final_status(), pred)?);
    }
    Ok(EvalReport {
        samples: test.len(),
        loss: if test.is_empty() { 0.0 } else { loss / test.len() as f64 },
        tally,
        step_match: None,
    })
}

/// Runs `model` from every test initial status and scores the result.
pub fn evaluate(model: &CltInstance, test: &Dataset, step_match: bool) -> Result<EvalReport, EvalError> {
    if model.node_count() != test.node_count() || model.cascade_count() != test.cascade_count() {
        return Err(EvalError::ShapeMismatch(format!(
            "model is {}x{}, data is {}x{}",
            model.node_count(),
            model.cascade_count(),
            test.node_count(),
            test.cascade_count()
        )));
    }
    let runs: Vec<StatusTensor> = test
        .samples()
        .par_iter()
        .map(|s| diffusion::run(model, s.initial()))
        .collect::<Result<_, _>>()?;
    let preds: Vec<BinaryMatrix> = runs.iter().map(|r| r.final_status().clone()).collect();
    let mut report = evaluate_predictions(test, &preds)?;
    if step_match {
        let series = test
            .samples()
            .iter()
            .zip(&runs)
            .map(|(t, p)| step_matching(t, p))
            .collect::<Result<Vec<_>, _>>()?;
        report.step_match = Some(average_series(&series));
    }
    Ok(report)
}

/// Metric values collected over repetitions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Aggregate {
    names: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl Aggregate {
    pub fn push(&mut self, name: &str, value: f64) {
        match self.names.iter().position(|n| n == name) {
            Some(k) => self.values[k].push(value),
            None => {
                self.names.push(name.to_string());
                self.values.push(vec![value]);
            }
        }
    }

    pub fn push_report(&mut self, prefix: &str, report: &EvalReport) {
        for (name, v) in report.rows() {
            self.push(&format!("{prefix}{name}"), v);
        }
    }

    /// `(mean, stddev, runs)` of a metric.
    pub fn summary(&self, name: &str) -> Option<(f64, f64, usize)> {
        let k = self.names.iter().position(|n| n == name)?;
        let (m, s) = mean_std(&self.values[k]);
        Some((m, s, self.values[k].len()))
    }

    /// CSV with columns `metric,mean,stddev,runs`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,mean,stddev,runs\n");
        for (name, vals) in self.names.iter().zip(&self.values) {
            let (m, s) = mean_std(vals);
            let _ = writeln!(out, "{name},{m},{s},{}", vals.len());
        }
        out
    }

    /// Aligned text table for terminals.
    pub fn to_table(&self) -> String {
        let width = self.names.iter().map(String::len).max().unwrap_or(6).max(6);
        let mut out = format!("{:<width$}  {:>8}  {:>8}  runs\n", "metric", "mean", "stddev");
        for (name, vals) in self.names.iter().zip(&self.values) {
            let (m, s) = mean_std(vals);
            let _ = writeln!(out, "{name:<width$}  {m:>8.4}  {s:>8.4}  {}", vals.len());
        }
        out
    }
}

#[cfg(test)]
mod tests;
