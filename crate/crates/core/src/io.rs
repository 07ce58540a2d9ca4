//! JSON file formats. All node and cascade indices in files are 1-based and
//! all model parameters are decimal strings, so files are exact.
//!
//! * graph: `{"n": N, "edges": [[src, dst], ...]}`
//! * instance: `{"q": Q, "s": S, "graph": <graph>, "weights": [[src, dst, cascade, "0.ddd"], ...],
//!   "thresholds": [[node, cascade, "0.ddd"], ...]}`
//! * dataset: JSON lines, one sample per line:
//!   `{"n": N, "s": S, "q": Q, "i0": [[node, cascade], ...], "steps": [{"p1": [...], "p2": [...]}, ...]}`
//!   listing set bits only. `n`, `s` and `q` may be omitted when supplied by the caller.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, DatasetError};
use crate::graph::{Graph, GraphError};
use crate::instance::{CltInstance, InstanceError};
use crate::scaled::{ScaledError, ScaledValue};
use crate::status::{BinaryMatrix, StatusError, StatusTensor, StepOutcome};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Scaled(#[from] ScaledError),
    #[error(transparent)]
    Status(#[from] StatusError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn json_err(source: serde_json::Error) -> IoError {
    IoError::Json { line: 1, source }
}

fn to_zero_based(index: usize, bound: usize, what: &str) -> Result<usize, IoError> {
    if index == 0 || index > bound {
        return Err(IoError::Format(format!("{what} index {index} outside 1..={bound}")));
    }
    Ok(index - 1)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphFile {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
}

impl GraphFile {
    pub fn from_graph(graph: &Graph) -> Self {
        GraphFile {
            n: graph.node_count(),
            edges: graph.edges().iter().map(|&(u, v)| (u + 1, v + 1)).collect(),
        }
    }

    pub fn to_graph(&self) -> Result<Graph, IoError> {
        let edges = self
            .edges
            .iter()
            .map(|&(u, v)| Ok((to_zero_based(u, self.n, "node")?, to_zero_based(v, self.n, "node")?)))
            .collect::<Result<Vec<_>, IoError>>()?;
        Ok(Graph::new(self.n, edges)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    pub q: u32,
    pub s: usize,
    pub graph: GraphFile,
    pub weights: Vec<(usize, usize, usize, String)>,
    pub thresholds: Vec<(usize, usize, String)>,
}

impl InstanceFile {
    pub fn from_instance(inst: &CltInstance) -> Self {
        let s = inst.cascade_count();
        let weights = inst
            .graph()
            .edges()
            .iter()
            .enumerate()
            .flat_map(|(e, &(u, v))| (0..s).map(move |c| (e, u, v, c)))
            .map(|(e, u, v, c)| (u + 1, v + 1, c + 1, inst.weight(e, c).to_string()))
            .collect();
        let thresholds = (0..inst.node_count())
            .flat_map(|v| (0..s).map(move |c| (v, c)))
            .map(|(v, c)| (v + 1, c + 1, inst.threshold(v, c).to_string()))
            .collect();
        InstanceFile {
            q: inst.precision(),
            s,
            graph: GraphFile::from_graph(inst.graph()),
            weights,
            thresholds,
        }
    }

    /// Converts to an instance. Missing weights are zero; every threshold
    /// must be present. Model invariants are not checked here.
    pub fn to_instance(&self) -> Result<CltInstance, IoError> {
        let graph = self.graph.to_graph()?;
        let n = graph.node_count();
        let mut inst = CltInstance::inert(graph, self.s, self.q)?;
        for (u, v, c, text) in &self.weights {
            let (u, v) = (to_zero_based(*u, n, "node")?, to_zero_based(*v, n, "node")?);
            let c = to_zero_based(*c, self.s, "cascade")?;
            let e = inst
                .graph()
                .edge_id(u, v)
                .ok_or_else(|| IoError::Format(format!("weight on missing edge ({}, {})", u + 1, v + 1)))?;
            inst.set_weight(e, c, ScaledValue::parse_nonneg(text, self.q)?)?;
        }
        let mut seen = vec![false; n * self.s];
        for (v, c, text) in &self.thresholds {
            let v = to_zero_based(*v, n, "node")?;
            let c = to_zero_based(*c, self.s, "cascade")?;
            inst.set_threshold(v, c, ScaledValue::parse_nonneg(text, self.q)?)?;
            seen[v * self.s + c] = true;
        }
        if let Some(k) = seen.iter().position(|&b| !b) {
            return Err(IoError::Format(format!(
                "missing threshold for node {} cascade {}",
                k / self.s + 1,
                k % self.s + 1
            )));
        }
        Ok(inst)
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn graph_to_json(graph: &Graph) -> String {
    serde_json::to_string(&GraphFile::from_graph(graph)).expect("graph serializes")
}

pub fn graph_from_json(text: &str) -> Result<Graph, IoError> {
    serde_json::from_str::<GraphFile>(text).map_err(json_err)?.to_graph()
}

pub fn write_graph(path: &Path, graph: &Graph) -> Result<(), IoError> {
    write_text(path, &(graph_to_json(graph) + "\n"))
}

pub fn read_graph(path: &Path) -> Result<Graph, IoError> {
    graph_from_json(&read_text(path)?)
}

pub fn instance_to_json(inst: &CltInstance) -> String {
    serde_json::to_string(&InstanceFile::from_instance(inst)).expect("instance serializes")
}

pub fn instance_from_json(text: &str) -> Result<CltInstance, IoError> {
    serde_json::from_str::<InstanceFile>(text)
        .map_err(json_err)?
        .to_instance()
}

pub fn write_instance(path: &Path, inst: &CltInstance) -> Result<(), IoError> {
    write_text(path, &(instance_to_json(inst) + "\n"))
}

pub fn read_instance(path: &Path) -> Result<CltInstance, IoError> {
    instance_from_json(&read_text(path)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StepLine {
    p1: Vec<(usize, usize)>,
    p2: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SampleLine {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    s: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q: Option<u32>,
    i0: Vec<(usize, usize)>,
    steps: Vec<StepLine>,
}

fn bits_out(m: &BinaryMatrix) -> Vec<(usize, usize)> {
    m.ones().map(|(r, c)| (r + 1, c + 1)).collect()
}

fn bits_in(n: usize, s: usize, pairs: &[(usize, usize)]) -> Result<BinaryMatrix, IoError> {
    let zero_based = pairs
        .iter()
        .map(|&(v, c)| Ok((to_zero_based(v, n, "node")?, to_zero_based(c, s, "cascade")?)))
        .collect::<Result<Vec<_>, IoError>>()?;
    Ok(BinaryMatrix::from_pairs(n, s, zero_based)?)
}

/// One dataset line for `sample`.
pub fn sample_to_json(sample: &StatusTensor, precision: u32) -> String {
    let line = SampleLine {
        n: Some(sample.node_count()),
        s: Some(sample.cascade_count()),
        q: Some(precision),
        i0: bits_out(sample.initial()),
        steps: sample
            .stored_steps()
            .iter()
            .map(|st| StepLine {
                p1: bits_out(&st.phase1),
                p2: bits_out(&st.phase2),
            })
            .collect(),
    };
    serde_json::to_string(&line).expect("sample serializes")
}

pub fn dataset_to_jsonl(ds: &Dataset) -> String {
    let mut out = String::new();
    for s in ds.samples() {
        out.push_str(&sample_to_json(s, ds.precision()));
        out.push('\n');
    }
    out
}

/// Shape information a dataset reader may need when lines omit it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DatasetShape {
    pub nodes: Option<usize>,
    pub cascades: Option<usize>,
    pub precision: Option<u32>,
}

/// Parses JSON-lines dataset text. An empty input needs `hint` to know its shape.
pub fn dataset_from_jsonl(text: &str, hint: DatasetShape) -> Result<Dataset, IoError> {
    let mut shape = hint;
    let mut samples = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let line: SampleLine = serde_json::from_str(raw).map_err(|source| IoError::Json { line: k + 1, source })?;
        let merge = |have: &mut Option<usize>, got: Option<usize>, what: &str| -> Result<usize, IoError> {
            match (*have, got) {
                (Some(a), Some(b)) if a != b => Err(IoError::Format(format!("line {}: {what} {b} != {a}", k + 1))),
                (Some(a), _) => Ok(a),
                (None, Some(b)) => {
                    *have = Some(b);
                    Ok(b)
                }
                (None, None) => Err(IoError::Format(format!("line {}: {what} unknown", k + 1))),
            }
        };
        let n = merge(&mut shape.nodes, line.n, "node count")?;
        let s = merge(&mut shape.cascades, line.s, "cascade count")?;
        let mut q = shape.precision.map(|v| v as usize);
        merge(&mut q, line.q.map(|v| v as usize), "precision")?;
        shape.precision = q.map(|v| v as u32);
        let initial = bits_in(n, s, &line.i0)?;
        let steps = line
            .steps
            .iter()
            .map(|st| {
                Ok(StepOutcome {
                    phase1: bits_in(n, s, &st.p1)?,
                    phase2: bits_in(n, s, &st.p2)?,
                })
            })
            .collect::<Result<Vec<_>, IoError>>()?;
        samples
            .push(StatusTensor::new(initial, steps, n).map_err(|e| IoError::Format(format!("line {}: {e}", k + 1)))?);
    }
    let (Some(n), Some(s)) = (shape.nodes, shape.cascades) else {
        return Err(IoError::Format(
            "dataset shape unknown (empty file without hints)".into(),
        ));
    };
    Ok(Dataset::new(n, s, shape.precision.unwrap_or(3), samples)?)
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(file);
    for s in ds.samples() {
        writeln!(w, "{}", sample_to_json(s, ds.precision())).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_dataset(path: &Path, hint: DatasetShape) -> Result<Dataset, IoError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut text = String::new();
    for line in BufReader::new(file).lines() {
        text.push_str(&line.map_err(io_err(path))?);
        text.push('\n');
    }
    dataset_from_jsonl(&text, hint)
}

/// Writes any serializable value as pretty JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(value).map_err(json_err)?;
    write_text(path, &(text + "\n"))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    serde_json::from_str(&read_text(path)?).map_err(json_err)
}

pub fn write_string(path: &Path, text: &str) -> Result<(), IoError> {
    write_text(path, text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forge;
    use proptest::prelude::*;

    #[test]
    fn graph_file_is_one_based() {
        let g = Graph::new(3, vec![(0, 1), (2, 0)]).unwrap();
        assert_eq!(graph_to_json(&g), r#"{"n":3,"edges":[[1,2],[3,1]]}"#);
        assert_eq!(graph_from_json(r#"{"n":3,"edges":[[1,2],[3,1]]}"#).unwrap(), g);
        assert!(graph_from_json(r#"{"n":3,"edges":[[0,2]]}"#).is_err());
    }

    #[test]
    fn instance_file_uses_decimal_strings() {
        let g = Graph::new(2, vec![(0, 1)]).unwrap();
        let inst = CltInstance::from_units(g, 1, 3, vec![467], vec![1000, 5]).unwrap();
        let text = instance_to_json(&inst);
        assert!(text.contains(r#"[1,2,1,"0.467"]"#), "{text}");
        assert!(text.contains(r#"[2,1,"0.005"]"#), "{text}");
        assert_eq!(instance_from_json(&text).unwrap(), inst);
        let missing = text.replace(r#",[2,1,"0.005"]"#, "");
        assert!(instance_from_json(&missing).is_err());
        let too_fine = text.replace("0.467", "0.4671");
        assert!(matches!(instance_from_json(&too_fine), Err(IoError::Scaled(_))));
    }

    #[test]
    fn empty_dataset_needs_a_shape() {
        assert!(dataset_from_jsonl("", DatasetShape::default()).is_err());
        let hint = DatasetShape {
            nodes: Some(4),
            cascades: Some(2),
            precision: Some(3),
        };
        assert!(dataset_from_jsonl("\n", hint).unwrap().is_empty());
    }

    #[test]
    fn inconsistent_line_is_rejected() {
        // node 1 active in two cascades at step 0
        let line = r#"{"n":2,"s":2,"i0":[[1,1],[1,2]],"steps":[]}"#;
        assert!(dataset_from_jsonl(line, DatasetShape::default()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn files_round_trip(seed in 0u64..1000, n in 2usize..24, s in 1usize..4, uniform in any::<bool>()) {
            let g = forge::gen_power_law(n.max(3), 2, seed).unwrap();
            prop_assert_eq!(graph_from_json(&graph_to_json(&g)).unwrap(), g.clone());
            let scheme = if uniform { forge::WeightScheme::UniformNormalized } else { forge::WeightScheme::WeightedCascade };
            let inst = forge::make_instance(g, s, 3, scheme, seed).unwrap();
            prop_assert_eq!(instance_from_json(&instance_to_json(&inst)).unwrap(), inst.clone());
            let ds = forge::generate_dataset(&inst, 5, seed).unwrap();
            let back = dataset_from_jsonl(&dataset_to_jsonl(&ds), DatasetShape::default()).unwrap();
            prop_assert_eq!(back, ds);
        }
    }
}
