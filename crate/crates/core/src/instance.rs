//! CLT model instances: a graph plus per-cascade edge weights and per-node
//! thresholds, all on the `10^-q` grid.

use std::fmt;

use thiserror::Error;

use crate::graph::{EdgeId, Graph};
use crate::scaled::{pow10, ScaledValue, MAX_PRECISION};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InstanceError {
    #[error("at least one cascade is required")]
    NoCascades,
    #[error("precision {0} is outside 0..={MAX_PRECISION}")]
    UnsupportedPrecision(u32),
    #[error("expected {expected} {what}, got {actual}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("value {0} is not at precision {1}")]
    PrecisionMismatch(String, u32),
    #[error("instance is invalid: {0}")]
    Invalid(ValidationReport),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CltInstance {
    graph: Graph,
    cascades: usize,
    precision: u32,
    // weights[edge * cascades + s], in units of 10^-precision
    weights: Vec<i64>,
    // thresholds[node * cascades + s]
    thresholds: Vec<i64>,
}

impl CltInstance {
    /// Assembles an instance from raw unit arrays. Only shapes are checked;
    /// see [`validate`](Self::validate) for the model invariants.
    pub fn from_units(
        graph: Graph,
        cascades: usize,
        precision: u32,
        weights: Vec<i64>,
        thresholds: Vec<i64>,
    ) -> Result<Self, InstanceError> {
        if cascades == 0 {
            return Err(InstanceError::NoCascades);
        }
        if precision > MAX_PRECISION {
            return Err(InstanceError::UnsupportedPrecision(precision));
        }
        let expected_w = graph.edge_count() * cascades;
        if weights.len() != expected_w {
            return Err(InstanceError::ShapeMismatch {
                what: "weights",
                expected: expected_w,
                actual: weights.len(),
            });
        }
        let expected_t = graph.node_count() * cascades;
        if thresholds.len() != expected_t {
            return Err(InstanceError::ShapeMismatch {
                what: "thresholds",
                expected: expected_t,
                actual: thresholds.len(),
            });
        }
        Ok(CltInstance {
            graph,
            cascades,
            precision,
            weights,
            thresholds,
        })
    }

    /// An instance with all weights zero and all thresholds one.
    pub fn inert(graph: Graph, cascades: usize, precision: u32) -> Result<Self, InstanceError> {
        let w = vec![0; graph.edge_count() * cascades];
        let t = vec![pow10(precision); graph.node_count() * cascades];
        Self::from_units(graph, cascades, precision, w, t)
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn cascade_count(&self) -> usize {
        self.cascades
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    pub fn weight(&self, edge: EdgeId, cascade: usize) -> ScaledValue {
        ScaledValue::from_units(self.weights[edge * self.cascades + cascade], self.precision)
    }

    pub fn weight_units(&self, edge: EdgeId, cascade: usize) -> i64 {
        self.weights[edge * self.cascades + cascade]
    }

    /// Weight of `source -> target` in `cascade`, zero when the edge is absent.
    pub fn weight_between(&self, source: usize, target: usize, cascade: usize) -> ScaledValue {
        match self.graph.edge_id(source, target) {
            Some(e) => self.weight(e, cascade),
            None => ScaledValue::zero(self.precision),
        }
    }

    pub fn threshold(&self, node: usize, cascade: usize) -> ScaledValue {
        ScaledValue::from_units(self.thresholds[node * self.cascades + cascade], self.precision)
    }

    pub fn threshold_units(&self, node: usize, cascade: usize) -> i64 {
        self.thresholds[node * self.cascades + cascade]
    }

    pub fn set_weight(&mut self, edge: EdgeId, cascade: usize, value: ScaledValue) -> Result<(), InstanceError> {
        let v = self.at_precision(value)?;
        self.weights[edge * self.cascades + cascade] = v;
        Ok(())
    }

    pub fn set_threshold(&mut self, node: usize, cascade: usize, value: ScaledValue) -> Result<(), InstanceError> {
        let v = self.at_precision(value)?;
        self.thresholds[node * self.cascades + cascade] = v;
        Ok(())
    }

    fn at_precision(&self, value: ScaledValue) -> Result<i64, InstanceError> {
        value
            .rescale(self.precision)
            .map(|v| v.units())
            .map_err(|_| InstanceError::PrecisionMismatch(value.to_string(), self.precision))
    }

    /// Re-expresses every parameter at a finer precision.
    pub fn with_precision(&self, precision: u32) -> Result<Self, InstanceError> {
        if precision < self.precision || precision > MAX_PRECISION {
            return Err(InstanceError::UnsupportedPrecision(precision));
        }
        let p = pow10(precision - self.precision);
        Self::from_units(
            self.graph.clone(),
            self.cascades,
            precision,
            self.weights.iter().map(|w| w * p).collect(),
            self.thresholds.iter().map(|t| t * p).collect(),
        )
    }

    /// Copy of the instance with edges whose weight is zero in every cascade removed.
    pub fn pruned(&self) -> Self {
        let s = self.cascades;
        let mut edges = Vec::new();
        let mut weights = Vec::new();
        for (id, &e) in self.graph.edges().iter().enumerate() {
            let row = &self.weights[id * s..(id + 1) * s];
            if row.iter().any(|&w| w != 0) {
                edges.push(e);
                weights.extend_from_slice(row);
            }
        }
        let graph = Graph::new(self.node_count(), edges).expect("subgraph of a valid graph");
        Self::from_units(graph, s, self.precision, weights, self.thresholds.clone()).expect("shapes preserved")
    }

    /// Checks every model invariant and reports each violation.
    pub fn validate(&self) -> ValidationReport {
        let one = pow10(self.precision);
        let s_count = self.cascades;
        let mut violations = Vec::new();
        for (id, &(u, v)) in self.graph.edges().iter().enumerate() {
            for s in 0..s_count {
                let w = self.weight_units(id, s);
                if !(0..=one).contains(&w) {
                    violations.push(Violation::WeightRange {
                        source: u,
                        target: v,
                        cascade: s,
                        value: self.weight(id, s),
                    });
                }
            }
        }
        for v in 0..self.node_count() {
            for s in 0..s_count {
                let sum: i64 = self
                    .graph
                    .in_edges(v)
                    .iter()
                    .map(|&(_, e)| self.weight_units(e, s))
                    .sum();
                if sum > one {
                    violations.push(Violation::Normalization {
                        node: v,
                        cascade: s,
                        sum: ScaledValue::from_units(sum, self.precision),
                    });
                }
                let t = self.threshold_units(v, s);
                if !(1..=one).contains(&t) {
                    violations.push(Violation::ThresholdRange {
                        node: v,
                        cascade: s,
                        value: self.threshold(v, s),
                    });
                }
            }
        }
        ValidationReport { violations }
    }

    /// Returns the instance if it is valid.
    pub fn validated(self) -> Result<Self, InstanceError> {
        let report = self.validate();
        if report.is_valid() {
            Ok(self)
        } else {
            Err(InstanceError::Invalid(report))
        }
    }
}

/// One broken invariant; indices are 0-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Normalization {
        node: usize,
        cascade: usize,
        sum: ScaledValue,
    },
    ThresholdRange {
        node: usize,
        cascade: usize,
        value: ScaledValue,
    },
    WeightRange {
        source: usize,
        target: usize,
        cascade: usize,
        value: ScaledValue,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // 1-based, matching the file formats
        match self {
            Violation::Normalization { node, cascade, sum } => write!(
                f,
                "in-weights of node {} in cascade {} sum to {} > 1",
                node + 1,
                cascade + 1,
                sum
            ),
            Violation::ThresholdRange { node, cascade, value } => write!(
                f,
                "threshold of node {} in cascade {} is {}, outside [ulp, 1]",
                node + 1,
                cascade + 1,
                value
            ),
            Violation::WeightRange {
                source,
                target,
                cascade,
                value,
            } => write!(
                f,
                "weight of edge ({}, {}) in cascade {} is {}, outside [0, 1]",
                source + 1,
                target + 1,
                cascade + 1,
                value
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for (k, v) in self.violations.iter().enumerate() {
            if k > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_into_one(w: i64) -> CltInstance {
        let g = Graph::new(3, vec![(0, 2), (1, 2)]).unwrap();
        CltInstance::from_units(g, 1, 3, vec![w, w], vec![500; 3]).unwrap()
    }

    #[test]
    fn zero_weights_are_valid() {
        assert!(two_into_one(0).validate().is_valid());
    }

    #[test]
    fn overweight_column_is_reported_at_its_node() {
        let report = two_into_one(600).validate();
        assert_eq!(
            report.violations,
            vec![Violation::Normalization {
                node: 2,
                cascade: 0,
                sum: ScaledValue::from_units(1200, 3)
            }]
        );
    }

    #[test]
    fn threshold_and_weight_ranges() {
        let g = Graph::new(2, vec![(0, 1)]).unwrap();
        let inst = CltInstance::from_units(g, 2, 3, vec![1001, -1], vec![0, 1, 1000, 1001]).unwrap();
        let report = inst.validate();
        let kinds: Vec<_> = report
            .violations
            .iter()
            .map(|v| match v {
                Violation::Normalization { .. } => "norm",
                Violation::ThresholdRange { .. } => "theta",
                Violation::WeightRange { .. } => "weight",
            })
            .collect();
        assert_eq!(kinds, vec!["weight", "weight", "theta", "norm", "theta"]);
        assert!(report.to_string().contains("node 1 in cascade 1"));
    }

    #[test]
    fn shape_errors() {
        let g = Graph::new(2, vec![(0, 1)]).unwrap();
        assert!(matches!(
            CltInstance::from_units(g.clone(), 2, 3, vec![0], vec![1; 4]),
            Err(InstanceError::ShapeMismatch { what: "weights", .. })
        ));
        assert_eq!(
            CltInstance::from_units(g, 0, 3, vec![], vec![]),
            Err(InstanceError::NoCascades)
        );
    }

    #[test]
    fn pruning_and_rescaling() {
        let g = Graph::new(3, vec![(0, 2), (1, 2)]).unwrap();
        let inst = CltInstance::from_units(g, 2, 3, vec![0, 0, 300, 0], vec![500; 6]).unwrap();
        let p = inst.pruned();
        assert_eq!(p.graph().edges(), &[(1, 2)]);
        assert_eq!(p.weight(0, 0).units(), 300);
        let fine = inst.with_precision(5).unwrap();
        assert_eq!(fine.weight_between(1, 2, 0), inst.weight_between(1, 2, 0));
        assert_eq!(fine.threshold_units(0, 0), 50_000);
    }
}
