//! Layered piecewise-linear networks that reproduce one diffusion step.
//!
//! [`compile`] turns a [`CltInstance`](crate::CltInstance) into a
//! [`LayeredNet`] whose forward pass maps a phase-2 status (flattened
//! node-major, `node * S + cascade`) to the next phase-2 status. Every unit
//! value is an exact [`ScaledValue`] at the instance precision.

mod compile;
mod dump;
mod verify;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scaled::{pow10, ScaledValue};
use crate::status::BinaryMatrix;

pub use compile::{compile, compile_with, CompileOptions, SELF_LINK_WEIGHT};
pub use dump::{net_from_json, net_to_json};
pub use verify::{verify_equivalence, Divergence, LayerSnapshot, VerifyReport};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetError {
    #[error("intermediate values need more than 64-bit units at precision {precision} (bound {bound})")]
    PrecisionOverflow { precision: u32, bound: String },
    #[error("input width {got}, expected {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("input node {0} is active in more than one cascade")]
    InvalidInput(usize),
    #[error("layer {layer} unit {unit}: product is not on the 10^-{precision} grid")]
    Inexact { layer: usize, unit: usize, precision: u32 },
    #[error("layer {layer} unit {unit}: value overflows")]
    Overflow { layer: usize, unit: usize },
    #[error("output of the last layer is not binary at unit {0}")]
    NonBinaryOutput(usize),
    #[error("malformed network: {0}")]
    Malformed(String),
}

/// Per-unit activation. All are piecewise linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// `x` if `x >= theta`, else 0.
    ThresholdKeep(ScaledValue),
    /// `x + code` if `x > 0`, else 0.
    IdentityAppend(i64),
    Relu,
    Linear,
    /// `x mod m` for an integer modulus `m`.
    Modulo(i64),
    /// 1 if `x >= k`, else 0.
    StepAtLeast(ScaledValue),
}

impl Activation {
    fn apply(self, x: i64, precision: u32) -> i64 {
        let one = pow10(precision);
        match self {
            Activation::ThresholdKeep(t) => {
                if x >= t.units() {
                    x
                } else {
                    0
                }
            }
            Activation::IdentityAppend(code) => {
                if x > 0 {
                    x + code * one
                } else {
                    0
                }
            }
            Activation::Relu => x.max(0),
            Activation::Linear => x,
            Activation::Modulo(m) => x.rem_euclid(m * one),
            Activation::StepAtLeast(k) => {
                if x >= k.units() {
                    one
                } else {
                    0
                }
            }
        }
    }

    /// Number of linear pieces over inputs in `[0, max_input]` (units).
    pub fn pieces(self, max_input: i64, precision: u32) -> u64 {
        match self {
            Activation::Linear => 1,
            Activation::Modulo(m) => (max_input / (m * pow10(precision))) as u64 + 1,
            _ => 2,
        }
    }

    pub fn kind(self) -> &'static str {
        match self {
            Activation::ThresholdKeep(_) => "threshold-keep",
            Activation::IdentityAppend(_) => "identity-append",
            Activation::Relu => "relu",
            Activation::Linear => "linear",
            Activation::Modulo(_) => "modulo",
            Activation::StepAtLeast(_) => "step-at-least",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerRole {
    Phase1,
    Encode,
    Compare,
    Recover,
    Thermometer,
    Onehot,
    /// Single decision layer of the two-cascade network.
    Perceptron,
}

impl fmt::Display for LayerRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LayerRole::Phase1 => "phase1",
            LayerRole::Encode => "encode",
            LayerRole::Compare => "compare",
            LayerRole::Recover => "recover",
            LayerRole::Thermometer => "thermometer",
            LayerRole::Onehot => "onehot",
            LayerRole::Perceptron => "perceptron",
        };
        f.write_str(s)
    }
}

/// One output unit: sparse incoming weights plus an activation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unit {
    pub weights: Vec<(usize, ScaledValue)>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub role: LayerRole,
    pub input_width: usize,
    pub units: Vec<Unit>,
}

impl LayerSpec {
    pub fn width(&self) -> usize {
        self.units.len()
    }
}

/// A compiled one-step network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayeredNet {
    pub(crate) nodes: usize,
    pub(crate) cascades: usize,
    pub(crate) padded_cascades: usize,
    pub(crate) precision: u32,
    pub(crate) digits: u32,
    pub(crate) two_cascade_path: bool,
    pub(crate) layers: Vec<LayerSpec>,
}

/// Size accounting of a compiled network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SizeReport {
    pub layers: usize,
    pub adjustable_weights: usize,
    pub computation_units: usize,
    pub max_pieces: u64,
    pub max_width: usize,
}

impl LayeredNet {
    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn cascade_count(&self) -> usize {
        self.cascades
    }

    /// Cascade count after padding to a power of two.
    pub fn padded_cascade_count(&self) -> usize {
        self.padded_cascades
    }

    /// Number of pairwise-comparison rounds, `log2` of the padded cascade count.
    pub fn compare_rounds(&self) -> u32 {
        self.padded_cascades.trailing_zeros()
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    /// Low decimal digits reserved for the cascade identity.
    pub fn identity_digits(&self) -> u32 {
        self.digits
    }

    /// True when compiled with the two-layer network for exactly two cascades.
    pub fn uses_two_cascade_path(&self) -> bool {
        self.two_cascade_path
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerSpec] {
        &mut self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn io_width(&self) -> usize {
        self.nodes * self.cascades
    }

    /// Upper bound (units) on any value entering the modulo layer.
    fn encoded_bound(&self) -> i64 {
        let q = self.precision;
        ((SELF_LINK_WEIGHT + 1) * pow10(q + self.digits) + self.padded_cascades as i64) * pow10(q)
    }

    pub fn audit(&self) -> SizeReport {
        // edge weights and self-links of the real cascades
        let adjustable_weights = self
            .layers
            .first()
            .map(|l| {
                l.units
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| k % self.padded_cascades < self.cascades)
                    .map(|(_, u)| u.weights.len())
                    .sum()
            })
            .unwrap_or(0);
        let bound = self.encoded_bound();
        let max_pieces = self
            .layers
            .iter()
            .flat_map(|l| &l.units)
            .map(|u| u.activation.pieces(bound, self.precision))
            .max()
            .unwrap_or(0);
        SizeReport {
            layers: self.layers.len(),
            adjustable_weights,
            computation_units: self.layers.iter().map(LayerSpec::width).sum(),
            max_pieces,
            max_width: self.layers.iter().map(LayerSpec::width).max().unwrap_or(0),
        }
    }

    fn input_units(&self, input: &[bool]) -> Result<Vec<i64>, NetError> {
        let width = self.io_width();
        if input.len() != width {
            return Err(NetError::WidthMismatch {
                expected: width,
                got: input.len(),
            });
        }
        for node in 0..self.nodes {
            let row = &input[node * self.cascades..(node + 1) * self.cascades];
            if row.iter().filter(|&&b| b).count() > 1 {
                return Err(NetError::InvalidInput(node));
            }
        }
        let one = pow10(self.precision);
        Ok(input.iter().map(|&b| if b { one } else { 0 }).collect())
    }

    fn eval_layer(&self, index: usize, input: &[i64]) -> Result<Vec<i64>, NetError> {
        let layer = &self.layers[index];
        if input.len() != layer.input_width {
            return Err(NetError::Malformed(format!(
                "layer {index} expects width {}, got {}",
                layer.input_width,
                input.len()
            )));
        }
        let scale = i128::from(pow10(self.precision));
        layer
            .units
            .iter()
            .enumerate()
            .map(|(unit, u)| {
                let mut acc: i128 = 0;
                for &(col, w) in &u.weights {
                    acc += i128::from(w.units()) * i128::from(input[col]);
                }
                if acc % scale != 0 {
                    return Err(NetError::Inexact {
                        layer: index,
                        unit,
                        precision: self.precision,
                    });
                }
                let x = i64::try_from(acc / scale).map_err(|_| NetError::Overflow { layer: index, unit })?;
                Ok(u.activation.apply(x, self.precision))
            })
            .collect()
    }

    /// Values of every layer for one input: entry 0 is the input itself.
    pub fn forward_trace(&self, input: &[bool]) -> Result<Vec<Vec<i64>>, NetError> {
        let mut values = vec![self.input_units(input)?];
        for l in 0..self.layers.len() {
            let next = self.eval_layer(l, values.last().expect("non-empty"))?;
            values.push(next);
        }
        Ok(values)
    }

    /// One diffusion step on a flattened phase-2 status.
    pub fn forward_step(&self, input: &[bool]) -> Result<Vec<bool>, NetError> {
        let mut h = self.input_units(input)?;
        for l in 0..self.layers.len() {
            h = self.eval_layer(l, &h)?;
        }
        let one = pow10(self.precision);
        h.iter()
            .enumerate()
            .map(|(k, &v)| match v {
                0 => Ok(false),
                v if v == one => Ok(true),
                _ => Err(NetError::NonBinaryOutput(k)),
            })
            .collect()
    }

    pub fn forward_status(&self, status: &BinaryMatrix) -> Result<BinaryMatrix, NetError> {
        let out = self.forward_step(&status.to_flat())?;
        Ok(BinaryMatrix::from_flat(self.nodes, self.cascades, &out).expect("width checked"))
    }

    /// Phase-2 status after each of the `N` logical steps from `initial`,
    /// stopping early once a step changes nothing.
    pub fn unroll_trajectory(&self, initial: &BinaryMatrix) -> Result<Vec<BinaryMatrix>, NetError> {
        if initial.rows() != self.nodes || initial.cols() != self.cascades {
            return Err(NetError::WidthMismatch {
                expected: self.io_width(),
                got: initial.rows() * initial.cols(),
            });
        }
        let mut out = Vec::new();
        let mut cur = initial.clone();
        for _ in 0..self.nodes {
            let next = self.forward_status(&cur)?;
            if next == cur {
                break;
            }
            out.push(next.clone());
            cur = next;
        }
        Ok(out)
    }

    /// The `N`-step unrolled network: final phase-2 status from `initial`.
    pub fn unroll_forward(&self, initial: &BinaryMatrix) -> Result<BinaryMatrix, NetError> {
        Ok(self
            .unroll_trajectory(initial)?
            .pop()
            .unwrap_or_else(|| initial.clone()))
    }
}
