//! `clt`: generate, train, predict, evaluate and verify competitive linear
//! threshold models.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use clt_core::erm::{self, CandidatePolicy, ErmConfig, ErmError, ErmObjective};
use clt_core::eval::{self, Aggregate};
use clt_core::experiment::{self, ExperimentConfig};
use clt_core::forge::{self, WeightScheme, DEFAULT_KRONECKER_INITIATOR};
use clt_core::io::{self, DatasetShape};
use clt_core::lp::{self, PivotRule, SolverConfig};
use clt_core::net;
use clt_core::rng::entropy_seed;
use clt_core::{CltInstance, Dataset, ScaledValue};

/// Failures carry their exit code.
enum Failure {
    Verification(anyhow::Error),
    Invalid(anyhow::Error),
    Infeasible(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Verification(_) => 1,
            Failure::Invalid(_) => 2,
            Failure::Infeasible(_) => 3,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Verification(e) | Failure::Invalid(e) | Failure::Infeasible(e) => e,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        let infeasible = e.chain().any(|c| {
            matches!(c.downcast_ref::<ErmError>(), Some(ErmError::NodeLpInfeasible { .. }))
                || matches!(
                    c.downcast_ref::<experiment::ExperimentError>(),
                    Some(experiment::ExperimentError::Train {
                        source: ErmError::NodeLpInfeasible { .. },
                        ..
                    })
                )
        });
        if infeasible {
            Failure::Infeasible(e)
        } else {
            Failure::Invalid(e)
        }
    }
}

#[derive(Parser)]
#[command(
    name = "clt",
    version,
    about = "Competitive linear threshold models: simulate, compile, learn"
)]
struct Cli {
    /// Worker threads; defaults to CLT_JOBS or the number of CPUs.
    #[arg(long, global = true, env = "CLT_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a directed graph.
    GenGraph(GenGraphArgs),
    /// Draw weights and thresholds for a graph.
    GenInstance(GenInstanceArgs),
    /// Simulate cascades from random initial statuses.
    GenData(GenDataArgs),
    /// Learn an instance from observed cascades.
    Train(TrainArgs),
    /// Predict final statuses for the initial statuses of a dataset.
    Predict(PredictArgs),
    /// Score an instance against a dataset.
    Eval(EvalArgs),
    /// Check a compiled network against the simulator.
    Verify(VerifyArgs),
    /// Compiled network utilities.
    #[command(subcommand)]
    Net(NetCommand),
    /// Write per-node learning problems in LP text format.
    ExportLp(ExportLpArgs),
    /// Run a full train/test experiment from a JSON config.
    Experiment(ExperimentArgs),
}

#[derive(Subcommand)]
enum NetCommand {
    /// Write the compiled network of an instance as JSON.
    Dump(NetDumpArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphKind {
    Kronecker,
    PowerLaw,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    WeightedCascade,
    UniformNormalized,
}

impl From<SchemeArg> for WeightScheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::WeightedCascade => WeightScheme::WeightedCascade,
            SchemeArg::UniformNormalized => WeightScheme::UniformNormalized,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Feasibility,
    MaxMargin,
    SparseWeights,
    EvidenceWeights,
}

#[derive(Args)]
struct GenGraphArgs {
    /// Random graph model.
    #[arg(long, value_enum, default_value = "kronecker")]
    kind: GraphKind,
    /// Kronecker power; the graph has 2^power nodes.
    #[arg(long, default_value_t = 10)]
    power: u32,
    /// Kronecker initiator as four comma-separated probabilities.
    #[arg(long, value_delimiter = ',', num_args = 4)]
    initiator: Option<Vec<f64>>,
    /// Power-law node count.
    #[arg(long, default_value_t = 1024)]
    nodes: usize,
    /// Power-law edges added per new node.
    #[arg(long, default_value_t = 2)]
    out_degree: usize,
    /// Import an edge list instead of generating.
    #[arg(long, conflicts_with = "kind")]
    edge_list: Option<PathBuf>,
    /// RNG seed; drawn from the OS and printed when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Output graph JSON.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct GenInstanceArgs {
    /// Input graph JSON.
    #[arg(long)]
    graph: PathBuf,
    /// Number of competing cascades.
    #[arg(long, default_value_t = 3)]
    cascades: usize,
    /// Decimal digits of weights and thresholds.
    #[arg(long, default_value_t = 3)]
    precision: u32,
    /// How edge weights are drawn.
    #[arg(long, value_enum, default_value = "weighted-cascade")]
    scheme: SchemeArg,
    /// RNG seed; drawn from the OS and printed when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Output instance JSON.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct GenDataArgs {
    /// Instance to simulate.
    #[arg(long)]
    instance: PathBuf,
    /// Number of samples.
    #[arg(long, default_value_t = 100)]
    count: usize,
    /// Seed-count range as a fraction of N, `lo,hi`.
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [0.1, 0.5])]
    seed_fraction: Vec<f64>,
    /// RNG seed; drawn from the OS and printed when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Output dataset (JSON lines).
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct LearnArgs {
    /// Margin as a decimal, e.g. 0.001; defaults to one grid unit.
    #[arg(long)]
    eps: Option<String>,
    /// Restrict candidate in-neighbors to the edges of this graph.
    #[arg(long)]
    known_graph: Option<PathBuf>,
    /// LP objective selecting among the feasible weights.
    #[arg(long, value_enum, default_value = "evidence-weights")]
    objective: ObjectiveArg,
    /// Keep every emitted row instead of dropping implied ones.
    #[arg(long)]
    no_reduce: bool,
    /// Simplex iteration cap per node LP.
    #[arg(long, default_value_t = SolverConfig::default().max_iters)]
    lp_max_iters: usize,
    /// Simplex feasibility tolerance.
    #[arg(long, default_value_t = SolverConfig::default().tolerance)]
    lp_tol: f64,
    /// Always use Bland's rule instead of switching to it on stalls.
    #[arg(long)]
    bland: bool,
}

impl LearnArgs {
    fn config(&self, precision: u32) -> Result<ErmConfig> {
        let margin = match &self.eps {
            Some(text) => Some(
                ScaledValue::from_decimal_str(text, precision)
                    .with_context(|| format!("--eps {text} at precision {precision}"))?,
            ),
            None => None,
        };
        let candidates = match &self.known_graph {
            Some(path) => CandidatePolicy::KnownGraph(io::read_graph(path)?),
            None => CandidatePolicy::AllNodes,
        };
        Ok(ErmConfig {
            margin,
            candidates,
            solver: SolverConfig {
                max_iters: self.lp_max_iters,
                tolerance: self.lp_tol,
                pivot: if self.bland {
                    PivotRule::Bland
                } else {
                    PivotRule::Dantzig
                },
            },
            objective: match self.objective {
                ObjectiveArg::Feasibility => ErmObjective::Feasibility,
                ObjectiveArg::MaxMargin => ErmObjective::MaxMargin,
                ObjectiveArg::SparseWeights => ErmObjective::SparseWeights,
                ObjectiveArg::EvidenceWeights => ErmObjective::EvidenceWeights,
            },
            reduce_rows: !self.no_reduce,
            ..ErmConfig::default()
        })
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Training dataset (JSON lines).
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    learn: LearnArgs,
    /// Also write every node LP into this directory.
    #[arg(long)]
    export_lp: Option<PathBuf>,
    /// Per-node solver diagnostics as JSON lines.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
    /// Drop edges whose learned weights are zero in every cascade.
    #[arg(long)]
    prune: bool,
    /// Output learned instance JSON.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Instance used for prediction.
    #[arg(long)]
    instance: PathBuf,
    /// Dataset supplying the initial statuses.
    #[arg(long)]
    data: PathBuf,
    /// Writes full predicted trajectories as a dataset file.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Instance being scored.
    #[arg(long)]
    instance: PathBuf,
    /// Held-out dataset (JSON lines).
    #[arg(long)]
    data: PathBuf,
    /// Add per-step phase-2 match rates.
    #[arg(long)]
    step_matching: bool,
    /// Also write the metrics as CSV.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Instance simulated as the reference.
    #[arg(long)]
    instance: PathBuf,
    /// Check this network dump instead of compiling the instance.
    #[arg(long)]
    net: Option<PathBuf>,
    /// Number of random initial statuses.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// RNG seed; drawn from the OS and printed when omitted.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct NetDumpArgs {
    /// Instance to compile.
    #[arg(long)]
    instance: PathBuf,
    /// Use the general comparison tree even for two cascades.
    #[arg(long)]
    no_shortcut: bool,
    /// Output network JSON.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct ExportLpArgs {
    /// Dataset the constraints are built from.
    #[arg(long)]
    data: PathBuf,
    /// 1-based node; all nodes when omitted.
    #[arg(long)]
    node: Option<usize>,
    #[command(flatten)]
    learn: LearnArgs,
    /// A file for a single node, otherwise a directory.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON config; omitted fields take their defaults.
    #[arg(long)]
    config: PathBuf,
    /// Directory for the config echo and CSV reports.
    #[arg(long, short)]
    out: PathBuf,
}

fn seed_or_entropy(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = entropy_seed();
        eprintln!("seed: {s}");
        s
    })
}

fn read_data(path: &Path) -> Result<Dataset> {
    io::read_dataset(path, DatasetShape::default()).with_context(|| format!("reading {}", path.display()))
}

fn read_instance(path: &Path) -> Result<CltInstance> {
    io::read_instance(path).with_context(|| format!("reading {}", path.display()))
}

fn gen_graph(a: GenGraphArgs) -> Result<()> {
    let graph = match (&a.edge_list, a.kind) {
        (Some(path), _) => forge::import_edge_list(path, None)?,
        (None, GraphKind::Kronecker) => {
            let initiator = match &a.initiator {
                Some(p) => [[p[0], p[1]], [p[2], p[3]]],
                None => DEFAULT_KRONECKER_INITIATOR,
            };
            forge::gen_kronecker(&initiator, a.power, seed_or_entropy(a.seed))?
        }
        (None, GraphKind::PowerLaw) => forge::gen_power_law(a.nodes, a.out_degree, seed_or_entropy(a.seed))?,
    };
    io::write_graph(&a.out, &graph)?;
    println!("{} nodes, {} edges", graph.node_count(), graph.edge_count());
    Ok(())
}

fn gen_instance(a: GenInstanceArgs) -> Result<()> {
    let graph = io::read_graph(&a.graph)?;
    let inst = forge::make_instance(graph, a.cascades, a.precision, a.scheme.into(), seed_or_entropy(a.seed))?;
    io::write_instance(&a.out, &inst)?;
    println!("{}", inst.validate());
    Ok(())
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let inst = read_instance(&a.instance)?;
    let fraction = (a.seed_fraction[0], a.seed_fraction[1]);
    if !(0.0..=1.0).contains(&fraction.0) || !(fraction.0..=1.0).contains(&fraction.1) {
        return Err(anyhow!("bad --seed-fraction {},{}", fraction.0, fraction.1));
    }
    let ds = forge::generate_dataset_in(&inst, a.count, fraction, seed_or_entropy(a.seed))?;
    io::write_dataset(&a.out, &ds)?;
    let steps: usize = ds.samples().iter().map(|s| s.stored_steps().len()).sum();
    println!(
        "{} samples, {:.2} steps on average",
        ds.len(),
        steps as f64 / ds.len().max(1) as f64
    );
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let ds = read_data(&a.data)?;
    let config = a.learn.config(ds.precision())?;
    if let Some(dir) = &a.export_lp {
        write_node_lps(&ds, None, &config, dir)?;
    }
    let learned = erm::fit(&ds, &config)?;
    if let Some(path) = &a.diagnostics {
        let lines: Vec<String> = learned
            .diagnostics
            .iter()
            .map(serde_json::to_string)
            .collect::<Result<_, _>>()?;
        io::write_string(path, &(lines.join("\n") + "\n"))?;
    }
    let inst = if a.prune {
        learned.instance.pruned()
    } else {
        learned.instance.clone()
    };
    io::write_instance(&a.out, &inst)?;
    let inexact = learned.diagnostics.iter().filter(|d| !d.exact).count();
    println!(
        "learned {} nodes at precision {}; {} edges; {} inexact nodes",
        inst.node_count(),
        inst.precision(),
        inst.graph().edge_count(),
        inexact
    );
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    let inst = read_instance(&a.instance)?;
    let ds = read_data(&a.data)?;
    let runs = ds
        .samples()
        .iter()
        .map(|s| clt_core::diffusion::run(&inst, s.initial()))
        .collect::<Result<Vec<_>, _>>()?;
    let out = Dataset::new(inst.node_count(), inst.cascade_count(), inst.precision(), runs)?;
    io::write_dataset(&a.out, &out)?;
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let inst = read_instance(&a.instance)?;
    let ds = read_data(&a.data)?;
    let report = eval::evaluate(&inst, &ds, a.step_matching)?;
    let mut table = Aggregate::default();
    for (name, v) in report.rows() {
        table.push(&name, v);
    }
    print!("{}", table.to_table());
    if let Some(path) = &a.out {
        io::write_string(path, &report.to_csv())?;
    }
    Ok(())
}

fn verify(a: VerifyArgs) -> Result<(), Failure> {
    let inst = read_instance(&a.instance)?;
    let net = match &a.net {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            net::net_from_json(&text).map_err(anyhow::Error::from)?
        }
        None => net::compile(&inst).map_err(anyhow::Error::from)?,
    };
    let report =
        net::verify_equivalence(&inst, &net, a.trials, seed_or_entropy(a.seed)).map_err(anyhow::Error::from)?;
    println!(
        "{} trials, {} steps checked, {} mismatched",
        report.trials, report.steps_checked, report.mismatched_trials
    );
    match &report.first_divergence {
        None => Ok(()),
        Some(d) => {
            println!("{d}");
            Err(Failure::Verification(anyhow!(
                "{} of {} trials diverged",
                report.mismatched_trials,
                report.trials
            )))
        }
    }
}

fn net_dump(a: NetDumpArgs) -> Result<()> {
    let inst = read_instance(&a.instance)?;
    let net = net::compile_with(
        &inst,
        net::CompileOptions {
            two_cascade_shortcut: !a.no_shortcut,
        },
    )?;
    io::write_string(&a.out, &net::net_to_json(&net))?;
    let size = net.audit();
    println!(
        "{} layers, {} adjustable weights, {} units, widest layer {}",
        size.layers, size.adjustable_weights, size.computation_units, size.max_width
    );
    Ok(())
}

fn write_node_lps(ds: &Dataset, node: Option<usize>, config: &ErmConfig, out: &Path) -> Result<()> {
    if let Some(k) = node {
        if k == 0 || k > ds.node_count() {
            return Err(anyhow!("node {k} outside 1..={}", ds.node_count()));
        }
        let lp = erm::build_node_lp(ds, k - 1, config)?;
        let text = lp::export_lp_format(&lp.to_problem(config.objective))?;
        io::write_string(out, &text)?;
        return Ok(());
    }
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for lp in erm::build_all_node_lps(ds, config)? {
        let text = lp::export_lp_format(&lp.to_problem(config.objective))?;
        io::write_string(&out.join(format!("node_{}.lp", lp.node + 1)), &text)?;
    }
    Ok(())
}

fn export_lp(a: ExportLpArgs) -> Result<()> {
    let ds = read_data(&a.data)?;
    let config = a.learn.config(ds.precision())?;
    write_node_lps(&ds, a.node, &config, &a.out)
}

fn run_experiment(a: ExperimentArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let config: ExperimentConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", a.config.display()))?;
    let outcome = experiment::run_experiment(&config)?;
    outcome.write(&a.out)?;
    print!("{}", outcome.summary.to_table());
    Ok(())
}

fn dispatch(command: Command) -> Result<(), Failure> {
    let result = match command {
        Command::GenGraph(a) => gen_graph(a),
        Command::GenInstance(a) => gen_instance(a),
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Verify(a) => return verify(a),
        Command::Net(NetCommand::Dump(a)) => net_dump(a),
        Command::ExportLp(a) => export_lp(a),
        Command::Experiment(a) => run_experiment(a),
    };
    result.map_err(Failure::from)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs.filter(|&j| j > 0) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            log::warn!("could not set {jobs} worker threads: {e}");
        }
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
