//! End-to-end runs: one instance, one sample pool, repeated random
//! train/test splits, learned model against the random baseline.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::erm::{self, CandidatePolicy, ErmConfig, ErmError, ErmObjective};
use crate::eval::{self, Aggregate, EvalError, EvalReport};
use crate::forge::{self, ForgeError, GenSpec, GraphRecipe, WeightScheme, DEFAULT_KRONECKER_INITIATOR};
use crate::instance::CltInstance;
use crate::io::{self, IoError};
use crate::lp::{PivotRule, SolverConfig};
use crate::rng::{derive_seed, substream};
use crate::scaled::ScaledValue;
use crate::status::BinaryMatrix;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("generating data: {0}")]
    Forge(#[from] ForgeError),
    #[error("repetition {rep}: training: {source}")]
    Train { rep: usize, source: ErmError },
    #[error("repetition {rep}: evaluation: {source}")]
    Eval { rep: usize, source: EvalError },
    #[error("writing reports: {0}")]
    Io(#[from] IoError),
}

/// Learner options as they appear in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErmSettings {
    /// Margin in grid units.
    pub margin_units: i64,
    pub objective: ErmObjective,
    /// Restrict candidate in-neighbors to the generating graph.
    pub known_graph: bool,
    pub reduce_rows: bool,
    pub extra_digits: u32,
    pub lp_max_iters: usize,
    pub lp_tol: f64,
    pub pivot: PivotRule,
}

impl Default for ErmSettings {
    fn default() -> Self {
        let solver = SolverConfig::default();
        let erm = ErmConfig::default();
        ErmSettings {
            margin_units: 1,
            objective: erm.objective,
            known_graph: false,
            reduce_rows: erm.reduce_rows,
            extra_digits: erm.extra_digits,
            lp_max_iters: solver.max_iters,
            lp_tol: solver.tolerance,
            pivot: solver.pivot,
        }
    }
}

impl ErmSettings {
    pub fn to_config(&self, precision: u32, graph: Option<&crate::graph::Graph>) -> ErmConfig {
        ErmConfig {
            margin: Some(ScaledValue::from_units(self.margin_units, precision)),
            candidates: match (self.known_graph, graph) {
                (true, Some(g)) => CandidatePolicy::KnownGraph(g.clone()),
                _ => CandidatePolicy::AllNodes,
            },
            solver: SolverConfig {
                max_iters: self.lp_max_iters,
                tolerance: self.lp_tol,
                pivot: self.pivot,
            },
            objective: self.objective,
            reduce_rows: self.reduce_rows,
            extra_digits: self.extra_digits,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub generate: GenSpec,
    /// Samples simulated once; every repetition splits this pool.
    pub pool: usize,
    pub train: usize,
    pub test: usize,
    pub repetitions: usize,
    /// Seeds the pool, the splits and the baseline.
    pub seed: u64,
    pub erm: ErmSettings,
    pub step_matching: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            generate: GenSpec {
                graph: GraphRecipe::Kronecker {
                    initiator: DEFAULT_KRONECKER_INITIATOR,
                    power: 10,
                },
                cascades: 3,
                precision: 3,
                scheme: WeightScheme::WeightedCascade,
                seed_fraction: (0.1, 0.5),
                seed: 1,
            },
            pool: 2000,
            train: 100,
            test: 500,
            repetitions: 5,
            seed: 1,
            erm: ErmSettings::default(),
            step_matching: true,
        }
    }
}

impl ExperimentConfig {
    pub fn check(&self) -> Result<(), ExperimentError> {
        self.generate.check()?;
        if self.train == 0 || self.test == 0 || self.repetitions == 0 {
            return Err(ExperimentError::Config(
                "train, test and repetitions must be positive".into(),
            ));
        }
        if self.train + self.test > self.pool {
            return Err(ExperimentError::Config(format!(
                "train + test = {} exceeds the pool of {}",
                self.train + self.test,
                self.pool
            )));
        }
        if self.erm.margin_units <= 0 {
            return Err(ExperimentError::Config("margin_units must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Repetition {
    pub learned: EvalReport,
    pub random: EvalReport,
    pub train_loss: f64,
    pub exact_nodes: usize,
    pub learned_precision: u32,
    pub train_ms: f64,
    pub eval_ms: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub instance: CltInstance,
    pub repetitions: Vec<Repetition>,
    pub summary: Aggregate,
}

/// Pool, split and baseline seeds.
fn stage_seeds(config: &ExperimentConfig) -> (u64, u64, u64) {
    (
        derive_seed(config.seed, 1),
        derive_seed(config.seed, 2),
        derive_seed(config.seed, 3),
    )
}

pub fn instance_for(spec: &GenSpec) -> Result<CltInstance, ForgeError> {
    spec.check()?;
    let graph = forge::build_graph(&spec.graph, derive_seed(spec.seed, 0))?;
    forge::make_instance(
        graph,
        spec.cascades,
        spec.precision,
        spec.scheme,
        derive_seed(spec.seed, 1),
    )
}

/// Deterministic train/test split of a pool for repetition `rep`.
pub fn split(pool: &Dataset, train: usize, test: usize, seed: u64, rep: usize) -> (Dataset, Dataset) {
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut substream(seed, rep as u64));
    (pool.subset(&order[..train]), pool.subset(&order[train..train + test]))
}

fn random_predictions(test: &Dataset, seed: u64, rep: usize) -> Vec<BinaryMatrix> {
    let mut rng = substream(seed, rep as u64);
    test.samples()
        .iter()
        .map(|_| eval::random_baseline(test.node_count(), test.cascade_count(), &mut rng))
        .collect()
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome, ExperimentError> {
    config.check()?;
    let instance = instance_for(&config.generate)?;
    let (pool_seed, split_seed, baseline_seed) = stage_seeds(config);
    let pool = forge::generate_dataset_in(&instance, config.pool, config.generate.seed_fraction, pool_seed)?;
    let erm_config = config.erm.to_config(config.generate.precision, Some(instance.graph()));
    let mut summary = Aggregate::default();
    let mut repetitions = Vec::with_capacity(config.repetitions);
    for rep in 0..config.repetitions {
        let (train, test) = split(&pool, config.train, config.test, split_seed, rep);
        let start = Instant::now();
        let learned = erm::fit(&train, &erm_config).map_err(|source| ExperimentError::Train { rep, source })?;
        let train_ms = start.elapsed().as_secs_f64() * 1e3;
        let start = Instant::now();
        let train_report =
            eval::evaluate(&learned.instance, &train, false).map_err(|source| ExperimentError::Eval { rep, source })?;
        let report = eval::evaluate(&learned.instance, &test, config.step_matching)
            .map_err(|source| ExperimentError::Eval { rep, source })?;
        let random = eval::evaluate_predictions(&test, &random_predictions(&test, baseline_seed, rep))
            .map_err(|source| ExperimentError::Eval { rep, source })?;
        let eval_ms = start.elapsed().as_secs_f64() * 1e3;
        log::info!(
            "repetition {}: test micro F1 {:.4}, train loss {}",
            rep + 1,
            report.metrics(eval::Averaging::Micro).f1,
            train_report.loss
        );
        summary.push("learned_train_loss", train_report.loss);
        summary.push_report("learned_", &report);
        summary.push_report("random_", &random);
        repetitions.push(Repetition {
            learned: report,
            random,
            train_loss: train_report.loss,
            exact_nodes: learned.diagnostics.iter().filter(|d| d.exact).count(),
            learned_precision: learned.instance.precision(),
            train_ms,
            eval_ms,
        });
    }
    Ok(ExperimentOutcome {
        config: config.clone(),
        instance,
        repetitions,
        summary,
    })
}

impl ExperimentOutcome {
    /// CSV with columns `rep,method,metric,value`.
    pub fn runs_csv(&self) -> String {
        let mut out = String::from("rep,method,metric,value\n");
        for (k, r) in self.repetitions.iter().enumerate() {
            let rep = k + 1;
            let _ = writeln!(out, "{rep},learned,train_loss,{}", r.train_loss);
            let _ = writeln!(out, "{rep},learned,exact_nodes,{}", r.exact_nodes);
            let _ = writeln!(out, "{rep},learned,precision,{}", r.learned_precision);
            for (method, report) in [("learned", &r.learned), ("random", &r.random)] {
                for (name, v) in report.rows() {
                    let _ = writeln!(out, "{rep},{method},{name},{v}");
                }
            }
        }
        out
    }

    /// Wall-clock times; kept apart from the deterministic reports.
    pub fn timing_csv(&self) -> String {
        let mut out = String::from("rep,train_ms,eval_ms\n");
        for (k, r) in self.repetitions.iter().enumerate() {
            let _ = writeln!(out, "{},{:.3},{:.3}", k + 1, r.train_ms, r.eval_ms);
        }
        out
    }

    /// Writes `config.json`, `runs.csv`, `summary.csv` and `timing.csv`.
    pub fn write(&self, dir: &Path) -> Result<(), ExperimentError> {
        std::fs::create_dir_all(dir).map_err(|source| IoError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        io::write_json(&dir.join("config.json"), &self.config)?;
        io::write_string(&dir.join("runs.csv"), &self.runs_csv())?;
        io::write_string(&dir.join("summary.csv"), &self.summary.to_csv())?;
        io::write_string(&dir.join("timing.csv"), &self.timing_csv())?;
        Ok(())
    }
}
