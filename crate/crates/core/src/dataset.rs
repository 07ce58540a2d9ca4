//! Observed cascades: each sample is an initial status together with the full
//! two-phase trajectory it produced.

use thiserror::Error;

use crate::status::{StatusError, StatusTensor};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DatasetError {
    #[error("sample {index} has shape {nodes}x{cascades}, dataset expects {expected_nodes}x{expected_cascades}")]
    ShapeMismatch {
        index: usize,
        nodes: usize,
        cascades: usize,
        expected_nodes: usize,
        expected_cascades: usize,
    },
    #[error("sample {index}: {source}")]
    Inconsistent { index: usize, source: StatusError },
}

pub type Sample = StatusTensor;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    node_count: usize,
    cascade_count: usize,
    precision: u32,
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(
        node_count: usize,
        cascade_count: usize,
        precision: u32,
        samples: Vec<Sample>,
    ) -> Result<Self, DatasetError> {
        let ds = Dataset {
            node_count,
            cascade_count,
            precision,
            samples,
        };
        ds.check()?;
        Ok(ds)
    }

    pub fn empty(node_count: usize, cascade_count: usize, precision: u32) -> Self {
        Dataset {
            node_count,
            cascade_count,
            precision,
            samples: Vec::new(),
        }
    }

    /// Re-checks shapes and trajectory invariants of every sample.
    pub fn check(&self) -> Result<(), DatasetError> {
        for (index, s) in self.samples.iter().enumerate() {
            if s.node_count() != self.node_count || s.cascade_count() != self.cascade_count {
                return Err(DatasetError::ShapeMismatch {
                    index,
                    nodes: s.node_count(),
                    cascades: s.cascade_count(),
                    expected_nodes: self.node_count,
                    expected_cascades: self.cascade_count,
                });
            }
            s.check()
                .map_err(|source| DatasetError::Inconsistent { index, source })?;
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn cascade_count(&self) -> usize {
        self.cascade_count
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// A dataset made of the samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            node_count: self.node_count,
            cascade_count: self.cascade_count,
            precision: self.precision,
            samples: indices.iter().map(|&k| self.samples[k].clone()).collect(),
        }
    }
}
