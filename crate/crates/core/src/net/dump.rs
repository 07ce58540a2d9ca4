//! JSON description of a compiled network. Unit indices are 0-based
//! positions within the previous layer; numbers are decimal strings.

use serde::{Deserialize, Serialize};

use super::{Activation, LayerRole, LayerSpec, LayeredNet, NetError, Unit};
use crate::scaled::ScaledValue;

#[derive(Serialize, Deserialize)]
struct NetFile {
    nodes: usize,
    cascades: usize,
    padded_cascades: usize,
    precision: u32,
    identity_digits: u32,
    two_cascade_path: bool,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    role: LayerRole,
    input_width: usize,
    units: Vec<UnitFile>,
}

#[derive(Serialize, Deserialize)]
struct UnitFile {
    weights: Vec<(usize, String)>,
    activation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    param: Option<String>,
}

fn activation_param(a: Activation) -> Option<String> {
    match a {
        Activation::ThresholdKeep(v) | Activation::StepAtLeast(v) => Some(v.to_string()),
        Activation::IdentityAppend(c) | Activation::Modulo(c) => Some(c.to_string()),
        Activation::Relu | Activation::Linear => None,
    }
}

fn parse_activation(kind: &str, param: Option<&str>, q: u32) -> Result<Activation, NetError> {
    let need = || param.ok_or_else(|| NetError::Malformed(format!("{kind} needs a parameter")));
    let scaled = |p: &str| {
        ScaledValue::from_decimal_str(p, q).map_err(|e| NetError::Malformed(format!("{kind} parameter: {e}")))
    };
    let integer = |p: &str| {
        p.parse::<i64>()
            .map_err(|e| NetError::Malformed(format!("{kind} parameter: {e}")))
    };
    Ok(match kind {
        "threshold-keep" => Activation::ThresholdKeep(scaled(need()?)?),
        "step-at-least" => Activation::StepAtLeast(scaled(need()?)?),
        "identity-append" => Activation::IdentityAppend(integer(need()?)?),
        "modulo" => {
            let m = integer(need()?)?;
            if m <= 0 {
                return Err(NetError::Malformed("modulus must be positive".into()));
            }
            Activation::Modulo(m)
        }
        "relu" => Activation::Relu,
        "linear" => Activation::Linear,
        other => return Err(NetError::Malformed(format!("unknown activation {other:?}"))),
    })
}

pub fn net_to_json(net: &LayeredNet) -> String {
    let file = NetFile {
        nodes: net.nodes,
        cascades: net.cascades,
        padded_cascades: net.padded_cascades,
        precision: net.precision,
        identity_digits: net.digits,
        two_cascade_path: net.two_cascade_path,
        layers: net
            .layers
            .iter()
            .map(|l| LayerFile {
                role: l.role,
                input_width: l.input_width,
                units: l
                    .units
                    .iter()
                    .map(|u| UnitFile {
                        weights: u.weights.iter().map(|&(c, w)| (c, w.to_string())).collect(),
                        activation: u.activation.kind().to_string(),
                        param: activation_param(u.activation),
                    })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string(&file).expect("serializable")
}

pub fn net_from_json(text: &str) -> Result<LayeredNet, NetError> {
    let file: NetFile = serde_json::from_str(text).map_err(|e| NetError::Malformed(e.to_string()))?;
    let q = file.precision;
    if q > 9 {
        return Err(NetError::Malformed(format!("precision {q} is not supported")));
    }
    if file.cascades == 0 || file.padded_cascades < file.cascades {
        return Err(NetError::Malformed("bad cascade counts".into()));
    }
    let mut layers = Vec::with_capacity(file.layers.len());
    let mut width = file.nodes * file.cascades;
    for (index, l) in file.layers.into_iter().enumerate() {
        if l.input_width != width {
            return Err(NetError::Malformed(format!(
                "layer {index} input width {} does not follow {width}",
                l.input_width
            )));
        }
        let mut units = Vec::with_capacity(l.units.len());
        for u in l.units {
            let mut weights = Vec::with_capacity(u.weights.len());
            for (col, w) in u.weights {
                if col >= width {
                    return Err(NetError::Malformed(format!("layer {index}: column {col} out of range")));
                }
                let w = ScaledValue::from_decimal_str(&w, q)
                    .map_err(|e| NetError::Malformed(format!("layer {index}: weight {e}")))?;
                weights.push((col, w));
            }
            units.push(Unit {
                weights,
                activation: parse_activation(&u.activation, u.param.as_deref(), q)?,
            });
        }
        width = units.len();
        layers.push(LayerSpec {
            role: l.role,
            input_width: l.input_width,
            units,
        });
    }
    if width != file.nodes * file.cascades {
        return Err(NetError::Malformed(format!("output width {width}")));
    }
    Ok(LayeredNet {
        nodes: file.nodes,
        cascades: file.cascades,
        padded_cascades: file.padded_cascades,
        precision: q,
        digits: file.identity_digits,
        two_cascade_path: file.two_cascade_path,
        layers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forge::{gen_power_law, make_instance, WeightScheme};
    use crate::net::{compile, compile_with, CompileOptions};

    #[test]
    fn dump_round_trips() {
        for s in [2, 3] {
            let g = gen_power_law(10, 2, 1).unwrap();
            let inst = make_instance(g, s, 3, WeightScheme::WeightedCascade, 1).unwrap();
            for opts in [true, false] {
                let net = compile_with(
                    &inst,
                    CompileOptions {
                        two_cascade_shortcut: opts,
                    },
                )
                .unwrap();
                let text = net_to_json(&net);
                assert_eq!(net_from_json(&text).unwrap(), net);
            }
        }
    }

    #[test]
    fn rejects_broken_widths() {
        let g = gen_power_law(6, 2, 1).unwrap();
        let inst = make_instance(g, 3, 3, WeightScheme::WeightedCascade, 1).unwrap();
        let text = net_to_json(&compile(&inst).unwrap());
        let broken = text.replacen("\"input_width\":18", "\"input_width\":17", 1);
        assert!(net_from_json(&broken).is_err());
    }
}
