use super::{Activation, LayerRole, LayerSpec, LayeredNet, NetError, Unit};
use crate::instance::CltInstance;
use crate::scaled::{pow10, ScaledValue};

/// Weight of the implicit self-link in the first layer. Anything above 1
/// lets an active node's own cascade strictly beat every rival sum.
pub const SELF_LINK_WEIGHT: i64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompileOptions {
    /// Use the two-layer decision network when there are exactly two cascades.
    pub two_cascade_shortcut: bool,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            two_cascade_shortcut: true,
        }
    }
}

pub fn compile(instance: &CltInstance) -> Result<LayeredNet, NetError> {
    compile_with(instance, CompileOptions::default())
}

fn int(n: i64, q: u32) -> ScaledValue {
    ScaledValue::from_units(n * pow10(q), q)
}

pub fn compile_with(instance: &CltInstance, options: CompileOptions) -> Result<LayeredNet, NetError> {
    let report = instance.validate();
    if !report.is_valid() {
        return Err(NetError::Malformed(format!("invalid instance: {}", report)));
    }
    let n = instance.node_count();
    let s = instance.cascade_count();
    let q = instance.precision();
    let padded = s.next_power_of_two();
    let digits = padded.ilog10() + 1;

    let bound =
        ((SELF_LINK_WEIGHT + 1) as i128 * i128::from(10u64.pow(q + digits)) + padded as i128) * i128::from(pow10(q));
    if bound > i128::from(i64::MAX) {
        return Err(NetError::PrecisionOverflow {
            precision: q,
            bound: bound.to_string(),
        });
    }

    let mut layers = vec![phase1_layer(instance, padded)];
    let two_cascade_path = options.two_cascade_shortcut && s == 2;
    if two_cascade_path {
        layers.push(perceptron_layer(n, q));
    } else {
        encode_and_decode(&mut layers, n, s, padded, q, digits);
    }
    Ok(LayeredNet {
        nodes: n,
        cascades: s,
        padded_cascades: padded,
        precision: q,
        digits,
        two_cascade_path,
        layers,
    })
}

/// Candidate activation: self-link plus in-edge weights, kept when the sum
/// reaches the threshold. Dummy cascades get no weights and threshold 1.
fn phase1_layer(instance: &CltInstance, padded: usize) -> LayerSpec {
    let n = instance.node_count();
    let s = instance.cascade_count();
    let q = instance.precision();
    let mut units = Vec::with_capacity(n * padded);
    for v in 0..n {
        for c in 0..padded {
            if c >= s {
                units.push(Unit {
                    weights: Vec::new(),
                    activation: Activation::ThresholdKeep(ScaledValue::one(q)),
                });
                continue;
            }
            let mut weights = vec![(v * s + c, int(SELF_LINK_WEIGHT, q))];
            for &(u, e) in instance.graph().in_edges(v) {
                weights.push((u * s + c, instance.weight(e, c)));
            }
            weights.sort_by_key(|&(col, _)| col);
            units.push(Unit {
                weights,
                activation: Activation::ThresholdKeep(instance.threshold(v, c)),
            });
        }
    }
    LayerSpec {
        role: LayerRole::Phase1,
        input_width: n * s,
        units,
    }
}

/// Two-cascade decision: cascade 1 wins when its value is at least that of
/// cascade 2 (strictly, it must exceed by `m` times the gap), cascade 2
/// when it is strictly larger.
fn perceptron_layer(n: usize, q: u32) -> LayerSpec {
    // exceeds the largest first-layer value in units
    let m = (SELF_LINK_WEIGHT + 1) * pow10(q);
    let ulp = ScaledValue::ulp(q);
    let mut units = Vec::with_capacity(2 * n);
    for v in 0..n {
        units.push(Unit {
            weights: vec![(2 * v, int(m + 1, q)), (2 * v + 1, int(-m, q))],
            activation: Activation::StepAtLeast(ulp),
        });
        units.push(Unit {
            weights: vec![(2 * v, int(-1, q)), (2 * v + 1, int(1, q))],
            activation: Activation::StepAtLeast(ulp),
        });
    }
    LayerSpec {
        role: LayerRole::Perceptron,
        input_width: 2 * n,
        units,
    }
}

fn encode_and_decode(layers: &mut Vec<LayerSpec>, n: usize, s: usize, padded: usize, q: u32, digits: u32) {
    let one = int(1, q);
    let minus_one = int(-1, q);

    // scale up and stamp the reversed identity into the low digits
    let scale = int(10i64.pow(q + digits), q);
    layers.push(LayerSpec {
        role: LayerRole::Encode,
        input_width: n * padded,
        units: (0..n * padded)
            .map(|k| Unit {
                weights: vec![(k, scale)],
                activation: Activation::IdentityAppend((padded - k % padded) as i64),
            })
            .collect(),
    });

    // max(a, b) = relu(a - b) + b, halving the width each round
    let mut width = padded;
    while width > 1 {
        let half = width / 2;
        let mut diff = Vec::with_capacity(n * width);
        let mut merge = Vec::with_capacity(n * half);
        for v in 0..n {
            for p in 0..half {
                let a = v * width + 2 * p;
                diff.push(Unit {
                    weights: vec![(a, one), (a + 1, minus_one)],
                    activation: Activation::Relu,
                });
                diff.push(Unit {
                    weights: vec![(a + 1, one)],
                    activation: Activation::Linear,
                });
                merge.push(Unit {
                    weights: vec![(a, one), (a + 1, one)],
                    activation: Activation::Linear,
                });
            }
        }
        layers.push(LayerSpec {
            role: LayerRole::Compare,
            input_width: n * width,
            units: diff,
        });
        layers.push(LayerSpec {
            role: LayerRole::Compare,
            input_width: n * width,
            units: merge,
        });
        width = half;
    }

    layers.push(LayerSpec {
        role: LayerRole::Recover,
        input_width: n,
        units: (0..n)
            .map(|v| Unit {
                weights: vec![(v, one)],
                activation: Activation::Modulo(10i64.pow(digits)),
            })
            .collect(),
    });

    // thermo_k = [code >= k]
    let mut thermo = Vec::with_capacity(n * padded);
    for v in 0..n {
        for k in 1..=padded {
            thermo.push(Unit {
                weights: vec![(v, one)],
                activation: Activation::StepAtLeast(int(k as i64, q)),
            });
        }
    }
    layers.push(LayerSpec {
        role: LayerRole::Thermometer,
        input_width: n,
        units: thermo,
    });

    // cascade c carries code padded - c; its bit is thermo_code - thermo_(code+1)
    let mut onehot = Vec::with_capacity(n * s);
    for v in 0..n {
        for c in 0..s {
            let code = padded - c;
            let base = v * padded;
            let mut weights = vec![(base + code - 1, one)];
            if code < padded {
                weights.push((base + code, minus_one));
            }
            onehot.push(Unit {
                weights,
                activation: Activation::StepAtLeast(one),
            });
        }
    }
    layers.push(LayerSpec {
        role: LayerRole::Onehot,
        input_width: n * padded,
        units: onehot,
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion;
    use crate::forge::{make_instance, sample_initial, WeightScheme};
    use crate::graph::Graph;
    use crate::rng::substream;
    use crate::status::BinaryMatrix;

    fn sv(text: &str) -> ScaledValue {
        ScaledValue::from_decimal_str(text, 3).unwrap()
    }

    fn instance(n: usize, s: usize, edges: &[(usize, usize, usize, &str)], theta: &str) -> CltInstance {
        let mut pairs: Vec<(usize, usize)> = edges.iter().map(|e| (e.0, e.1)).collect();
        pairs.sort();
        pairs.dedup();
        let mut inst = CltInstance::inert(Graph::new(n, pairs).unwrap(), s, 3).unwrap();
        for &(u, v, c, w) in edges {
            let e = inst.graph().edge_id(u, v).unwrap();
            inst.set_weight(e, c, sv(w)).unwrap();
        }
        for v in 0..n {
            for c in 0..s {
                inst.set_threshold(v, c, sv(theta)).unwrap();
            }
        }
        inst
    }

    fn general(inst: &CltInstance) -> LayeredNet {
        compile_with(
            inst,
            CompileOptions {
                two_cascade_shortcut: false,
            },
        )
        .unwrap()
    }

    fn random_instance(n: usize, s: usize, seed: u64) -> CltInstance {
        let g = crate::forge::gen_power_law(n, 2, seed).unwrap();
        make_instance(g, s, 3, WeightScheme::UniformNormalized, seed).unwrap()
    }

    #[test]
    fn depth_follows_compare_rounds() {
        for (s, z) in [(1usize, 0usize), (2, 1), (3, 2), (4, 2), (8, 3), (16, 4)] {
            let net = general(&instance(3, s, &[], "0.5"));
            assert_eq!(net.depth(), 2 * z + 5, "S={s}");
            assert_eq!(net.compare_rounds() as usize, z);
            let widths: Vec<usize> = net
                .layers()
                .iter()
                .filter(|l| l.role == LayerRole::Compare)
                .map(LayerSpec::width)
                .collect();
            let padded = s.next_power_of_two();
            for (r, pair) in widths.chunks(2).enumerate() {
                assert_eq!(pair[0], 3 * (padded >> r));
                assert_eq!(pair[1], 3 * (padded >> (r + 1)));
            }
            assert_eq!(net.layers().last().unwrap().width(), 3 * s);
            assert_eq!(net.layers()[0].input_width, 3 * s);
        }
    }

    #[test]
    fn two_cascade_path_has_two_layers() {
        let net = compile(&instance(4, 2, &[], "0.5")).unwrap();
        assert!(net.uses_two_cascade_path());
        assert_eq!(net.depth(), 2);
        assert!(net.layers().iter().all(|l| l.role != LayerRole::Encode));
    }

    #[test]
    fn audit_counts() {
        let inst = instance(4, 2, &[(0, 1, 0, "0.1"), (1, 2, 1, "0.2"), (2, 3, 0, "0.3")], "0.5");
        for net in [compile(&inst).unwrap(), general(&inst)] {
            assert_eq!(net.audit().adjustable_weights, 14);
        }
        // hand count for S=4, N=3: 12 + 12 + (12 + 6) + (6 + 3) + 3 + 12 + 12
        let net = general(&instance(3, 4, &[], "0.5"));
        let a = net.audit();
        assert_eq!(a.computation_units, 78);
        assert_eq!(a.layers, 9);
        assert!(a.computation_units <= 8 * 3 * 4);
        // modulo pieces: ~3 * 10^Q
        assert_eq!(a.max_pieces, 3001);
    }

    #[test]
    fn zero_input_gives_zero_output() {
        for s in [1, 2, 3, 4] {
            let inst = random_instance(12, s, 3);
            for net in [compile(&inst).unwrap(), general(&inst)] {
                let out = net.forward_step(&vec![false; 12 * s]).unwrap();
                assert!(out.iter().all(|b| !b));
            }
        }
    }

    #[test]
    fn three_way_competition() {
        // v3 reached by cascades 1, 2, 3; cascade 2 has the largest sum
        let inst = instance(
            4,
            3,
            &[(0, 3, 0, "0.400"), (1, 3, 1, "0.700"), (2, 3, 2, "0.600")],
            "0.300",
        );
        let init = BinaryMatrix::from_pairs(4, 3, [(0, 0), (1, 1), (2, 2)]).unwrap();
        let net = compile(&inst).unwrap();
        let out = net.forward_status(&init).unwrap();
        assert_eq!(out, diffusion::step(&inst, &init).unwrap().phase2);
        assert_eq!(out.owner(3).unwrap(), Some(1));
    }

    #[test]
    fn ties_go_to_smaller_index() {
        let inst = instance(
            4,
            3,
            &[(0, 3, 0, "0.500"), (1, 3, 1, "0.200"), (2, 3, 2, "0.500")],
            "0.100",
        );
        let init = BinaryMatrix::from_pairs(4, 3, [(0, 0), (1, 1), (2, 2)]).unwrap();
        let out = compile(&inst).unwrap().forward_status(&init).unwrap();
        assert_eq!(out.owner(3).unwrap(), Some(0));
        // and the two-cascade path
        let inst = instance(3, 2, &[(0, 2, 0, "0.500"), (1, 2, 1, "0.500")], "0.100");
        let init = BinaryMatrix::from_pairs(3, 2, [(0, 0), (1, 1)]).unwrap();
        let out = compile(&inst).unwrap().forward_status(&init).unwrap();
        assert_eq!(out.owner(2).unwrap(), Some(0));
    }

    #[test]
    fn step_equivalence_on_random_instances() {
        for s in [1usize, 2, 3, 4, 5, 8] {
            for seed in 0..6u64 {
                let inst = random_instance(20, s, seed);
                let nets = [compile(&inst).unwrap(), general(&inst)];
                let mut rng = substream(seed, s as u64);
                for _ in 0..5 {
                    let init = sample_initial(20, s, &mut rng);
                    let traj = diffusion::run(&inst, &init).unwrap();
                    for net in &nets {
                        let mut prev = init.clone();
                        for t in 1..=traj.stored_steps().len() + 1 {
                            let out = net.forward_status(&prev).unwrap();
                            assert_eq!(&out, traj.phase2(t), "S={s} seed={seed} t={t}");
                            prev = out;
                        }
                        assert_eq!(&net.unroll_forward(&init).unwrap(), traj.final_status());
                    }
                }
            }
        }
    }

    #[test]
    fn encode_layer_stores_sum_and_code() {
        let inst = random_instance(15, 3, 7);
        let net = general(&inst);
        let mut rng = substream(7, 0);
        let init = sample_initial(15, 3, &mut rng);
        let owners = init.owners().unwrap();
        let trace = net.forward_trace(&init.to_flat()).unwrap();
        let encoded = &trace[2];
        let q = inst.precision();
        let d = net.identity_digits();
        for v in 0..15 {
            for c in 0..4 {
                let x = encoded[v * 4 + c];
                if x == 0 {
                    continue;
                }
                let units = x / pow10(q);
                assert_eq!(units % 10i64.pow(d), (4 - c) as i64);
                let high = units / 10i64.pow(d);
                let sum = diffusion::influence_sum(&inst, &init, v, c).unwrap().units();
                let own = if owners[v] == Some(c) {
                    SELF_LINK_WEIGHT * pow10(q)
                } else {
                    0
                };
                assert_eq!(high, sum + own);
            }
        }
    }

    #[test]
    fn compare_layers_take_exact_maxima() {
        let inst = random_instance(15, 8, 2);
        let net = general(&inst);
        let mut rng = substream(2, 0);
        let init = sample_initial(15, 8, &mut rng);
        let trace = net.forward_trace(&init.to_flat()).unwrap();
        // trace[2] is the encode output; merges land at 4, 6, 8
        let mut prev = trace[2].clone();
        for r in 0..3 {
            let merged = &trace[4 + 2 * r];
            for (k, &m) in merged.iter().enumerate() {
                assert_eq!(m, prev[2 * k].max(prev[2 * k + 1]));
            }
            prev = merged.clone();
        }
    }

    #[test]
    fn rejects_invalid_input() {
        let net = compile(&instance(2, 3, &[], "0.5")).unwrap();
        assert_eq!(
            net.forward_step(&[true; 5]),
            Err(NetError::WidthMismatch { expected: 6, got: 5 })
        );
        assert_eq!(
            net.forward_step(&[true, true, false, false, false, false]),
            Err(NetError::InvalidInput(0))
        );
    }

    #[test]
    fn precision_overflow_is_reported() {
        let inst = instance(2, 16, &[], "0.5").with_precision(9).unwrap();
        assert!(matches!(compile(&inst), Err(NetError::PrecisionOverflow { .. })));
    }
}
