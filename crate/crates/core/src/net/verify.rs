//! Cross-checks a compiled network against the reference simulator.

use std::fmt;

use serde::Serialize;

use super::{LayerRole, LayeredNet, NetError};
use crate::diffusion;
use crate::forge::sample_initial;
use crate::instance::CltInstance;
use crate::rng::substream;
use crate::scaled::{pow10, ScaledValue};
use crate::status::BinaryMatrix;

/// Values of one node's slice of a layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerSnapshot {
    pub layer: usize,
    pub role: LayerRole,
    pub values: Vec<String>,
}

/// First disagreement between network and simulator. Node and cascade are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Divergence {
    pub trial: usize,
    pub step: usize,
    pub node: usize,
    pub cascade: usize,
    pub expected: bool,
    pub got: String,
    pub trace: Vec<LayerSnapshot>,
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "trial {} step {}: node {} cascade {} expected {} got {}",
            self.trial,
            self.step,
            self.node,
            self.cascade,
            u8::from(self.expected),
            self.got
        )?;
        for snap in &self.trace {
            writeln!(
                f,
                "  layer {:>2} {:<11} [{}]",
                snap.layer,
                snap.role,
                snap.values.join(", ")
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerifyReport {
    pub trials: usize,
    pub steps_checked: usize,
    pub mismatched_trials: usize,
    pub first_divergence: Option<Divergence>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.mismatched_trials == 0
    }
}

fn snapshots(net: &LayeredNet, trace: &[Vec<i64>], node: usize) -> Vec<LayerSnapshot> {
    let q = net.precision();
    trace
        .iter()
        .skip(1)
        .zip(net.layers())
        .enumerate()
        .map(|(index, (values, layer))| {
            let per_node = values.len() / net.node_count().max(1);
            LayerSnapshot {
                layer: index + 1,
                role: layer.role,
                values: values[node * per_node..(node + 1) * per_node]
                    .iter()
                    .map(|&u| ScaledValue::from_units(u, q).to_string())
                    .collect(),
            }
        })
        .collect()
}

/// Runs `trials` random initial statuses through both the simulator and the
/// step-wise unrolled network, comparing every phase-2 slice.
pub fn verify_equivalence(
    instance: &CltInstance,
    net: &LayeredNet,
    trials: usize,
    seed: u64,
) -> Result<VerifyReport, NetError> {
    let n = instance.node_count();
    let s = instance.cascade_count();
    if net.node_count() != n || net.cascade_count() != s {
        return Err(NetError::WidthMismatch {
            expected: n * s,
            got: net.io_width(),
        });
    }
    let one = pow10(net.precision());
    let mut report = VerifyReport {
        trials,
        steps_checked: 0,
        mismatched_trials: 0,
        first_divergence: None,
    };
    for trial in 0..trials {
        let mut rng = substream(seed, trial as u64);
        let init = sample_initial(n, s, &mut rng);
        let traj = diffusion::run(instance, &init).expect("sampled status is valid");
        let mut prev = init;
        for t in 1..=traj.stored_steps().len() + 1 {
            let trace = net.forward_trace(&prev.to_flat())?;
            let out = trace.last().expect("input layer present");
            let expected = traj.phase2(t);
            report.steps_checked += 1;
            let bad = (0..n * s).find(|&k| out[k] != if expected.get(k / s, k % s) { one } else { 0 });
            if let Some(k) = bad {
                report.mismatched_trials += 1;
                if report.first_divergence.is_none() {
                    report.first_divergence = Some(Divergence {
                        trial: trial + 1,
                        step: t,
                        node: k / s + 1,
                        cascade: k % s + 1,
                        expected: expected.get(k / s, k % s),
                        got: ScaledValue::from_units(out[k], net.precision()).to_string(),
                        trace: snapshots(net, &trace, k / s),
                    });
                }
                break;
            }
            prev = BinaryMatrix::from_flat(n, s, &out.iter().map(|&v| v == one).collect::<Vec<_>>())
                .expect("width checked");
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forge::{gen_power_law, make_instance, WeightScheme};
    use crate::net::compile;

    #[test]
    fn clean_net_passes_and_corruption_is_localized() {
        let g = gen_power_law(30, 2, 4).unwrap();
        let inst = make_instance(g, 3, 3, WeightScheme::WeightedCascade, 4).unwrap();
        let mut net = compile(&inst).unwrap();
        let ok = verify_equivalence(&inst, &net, 20, 1).unwrap();
        assert!(ok.passed());
        assert!(ok.steps_checked >= 20);

        // break every first-layer threshold of node 5 so it can never become a candidate
        for c in 0..4 {
            net.layers_mut()[0].units[5 * 4 + c].activation =
                super::super::Activation::ThresholdKeep(ScaledValue::from_int(9, 3).unwrap());
        }
        let bad = verify_equivalence(&inst, &net, 50, 1).unwrap();
        assert!(!bad.passed());
        let d = bad.first_divergence.unwrap();
        assert_eq!(d.node, 6);
        assert_eq!(d.trace.len(), net.depth());
        assert!(d.to_string().contains("phase1"));
    }
}
