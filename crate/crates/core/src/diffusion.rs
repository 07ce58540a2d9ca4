//! Exact simulation of competitive linear threshold diffusion.
//!
//! Each step has two phases. In phase 1 every inactive node becomes a
//! candidate for each cascade whose influence sum (the total weight from
//! in-neighbors active in that cascade) reaches the node's threshold. In
//! phase 2 a candidate joins the cascade with the largest influence sum, the
//! smallest cascade index winning ties. Active nodes never change cascade.

use thiserror::Error;

use crate::instance::CltInstance;
use crate::scaled::ScaledValue;
use crate::status::{BinaryMatrix, StatusError, StatusTensor, StepOutcome};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DiffusionError {
    #[error("node {node} / cascade {cascade} outside {nodes}x{cascades}")]
    IndexOutOfRange {
        node: usize,
        cascade: usize,
        nodes: usize,
        cascades: usize,
    },
    #[error("status is {0}x{1}, instance is {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error(transparent)]
    InvariantViolation(#[from] StatusError),
}

fn check_shape(instance: &CltInstance, status: &BinaryMatrix) -> Result<(), DiffusionError> {
    let (n, s) = (instance.node_count(), instance.cascade_count());
    if status.rows() != n || status.cols() != s {
        return Err(DiffusionError::ShapeMismatch(status.rows(), status.cols(), n, s));
    }
    Ok(())
}

/// Total weight reaching `node` from in-neighbors active in `cascade`.
pub fn influence_sum(
    instance: &CltInstance,
    prev_phase2: &BinaryMatrix,
    node: usize,
    cascade: usize,
) -> Result<ScaledValue, DiffusionError> {
    check_shape(instance, prev_phase2)?;
    if node >= instance.node_count() || cascade >= instance.cascade_count() {
        return Err(DiffusionError::IndexOutOfRange {
            node,
            cascade,
            nodes: instance.node_count(),
            cascades: instance.cascade_count(),
        });
    }
    let units: i64 = instance
        .graph()
        .in_edges(node)
        .iter()
        .filter(|&&(src, _)| prev_phase2.get(src, cascade))
        .map(|&(_, e)| instance.weight_units(e, cascade))
        .sum();
    Ok(ScaledValue::from_units(units, instance.precision()))
}

/// Owner-vector form of one step; shared by `step` and `run`.
fn step_owners(
    instance: &CltInstance,
    owners: &[Option<usize>],
    sums: &mut Vec<i64>,
) -> (BinaryMatrix, Vec<Option<usize>>) {
    let n = instance.node_count();
    let cascades = instance.cascade_count();
    let graph = instance.graph();
    let mut phase1 = BinaryMatrix::zeros(n, cascades);
    let mut next = Vec::with_capacity(n);
    sums.resize(cascades, 0);
    for v in 0..n {
        if let Some(c) = owners[v] {
            phase1.set(v, c, true);
            next.push(Some(c));
            continue;
        }
        sums.iter_mut().for_each(|x| *x = 0);
        for &(u, e) in graph.in_edges(v) {
            if let Some(c) = owners[u] {
                sums[c] += instance.weight_units(e, c);
            }
        }
        let mut winner: Option<(usize, i64)> = None;
        for (s, &sum) in sums.iter().enumerate() {
            if sum >= instance.threshold_units(v, s) {
                phase1.set(v, s, true);
                // strict comparison keeps the smallest index on ties
                if winner.is_none_or(|(_, best)| sum > best) {
                    winner = Some((s, sum));
                }
            }
        }
        next.push(winner.map(|(s, _)| s));
    }
    (phase1, next)
}

/// Applies one two-phase diffusion step to `prev_phase2`.
pub fn step(instance: &CltInstance, prev_phase2: &BinaryMatrix) -> Result<StepOutcome, DiffusionError> {
    check_shape(instance, prev_phase2)?;
    let owners = prev_phase2.owners()?;
    let (phase1, next) = step_owners(instance, &owners, &mut Vec::new());
    Ok(StepOutcome {
        phase1,
        phase2: BinaryMatrix::from_owners(instance.cascade_count(), &next),
    })
}

/// Runs diffusion from `initial` for `N` logical steps (`N` = node count),
/// stopping the stored trajectory at the first fixed point.
pub fn run(instance: &CltInstance, initial: &BinaryMatrix) -> Result<StatusTensor, DiffusionError> {
    check_shape(instance, initial)?;
    let horizon = instance.node_count();
    let cascades = instance.cascade_count();
    let mut owners = initial.owners()?;
    let mut steps = Vec::new();
    let mut sums = Vec::new();
    for _ in 0..horizon {
        let (phase1, next) = step_owners(instance, &owners, &mut sums);
        if next == owners {
            break;
        }
        steps.push(StepOutcome {
            phase1,
            phase2: BinaryMatrix::from_owners(cascades, &next),
        });
        owners = next;
    }
    Ok(StatusTensor::new_unchecked(initial.clone(), steps, horizon))
}

/// Final phase-2 status reached from `initial`.
pub fn influence_function(instance: &CltInstance, initial: &BinaryMatrix) -> Result<BinaryMatrix, DiffusionError> {
    check_shape(instance, initial)?;
    let cascades = instance.cascade_count();
    let mut owners = initial.owners()?;
    let mut sums = Vec::new();
    for _ in 0..instance.node_count() {
        let (_, next) = step_owners(instance, &owners, &mut sums);
        if next == owners {
            break;
        }
        owners = next;
    }
    Ok(BinaryMatrix::from_owners(cascades, &owners))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::scaled::ScaledValue;

    fn sv(text: &str) -> ScaledValue {
        ScaledValue::from_decimal_str(text, 3).unwrap()
    }

    /// Builds an instance from `(src, dst, cascade, weight)` and a uniform threshold.
    fn instance(n: usize, s: usize, edges: &[(usize, usize, usize, &str)], theta: &str) -> CltInstance {
        let mut pairs: Vec<(usize, usize)> = edges.iter().map(|e| (e.0, e.1)).collect();
        pairs.sort();
        pairs.dedup();
        let g = Graph::new(n, pairs).unwrap();
        let mut inst = CltInstance::inert(g, s, 3).unwrap();
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

    fn status(n: usize, s: usize, pairs: &[(usize, usize)]) -> BinaryMatrix {
        BinaryMatrix::from_pairs(n, s, pairs.iter().copied()).unwrap()
    }

    #[test]
    fn influence_sum_examples() {
        let inst = instance(3, 1, &[(0, 2, 0, "0.300"), (1, 2, 0, "0.400")], "0.500");
        let none = status(3, 1, &[]);
        assert_eq!(influence_sum(&inst, &none, 2, 0).unwrap(), sv("0"));
        let both = status(3, 1, &[(0, 0), (1, 0)]);
        assert_eq!(influence_sum(&inst, &both, 2, 0).unwrap(), sv("0.700"));
        assert!(matches!(
            influence_sum(&inst, &both, 3, 0),
            Err(DiffusionError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn empty_status_stays_empty() {
        let inst = instance(3, 2, &[(0, 1, 0, "1"), (1, 2, 1, "1")], "0.001");
        let out = step(&inst, &status(3, 2, &[])).unwrap();
        assert!(out.phase1.is_empty() && out.phase2.is_empty());
    }

    #[test]
    fn two_cascade_competition_resolves_to_larger_sum() {
        // v1 seeds cascade 2, v2 seeds cascade 1; both reach v3
        let inst = instance(3, 2, &[(1, 2, 0, "0.700"), (0, 2, 1, "0.600")], "0.500");
        let out = step(&inst, &status(3, 2, &[(1, 0), (0, 1)])).unwrap();
        assert!(out.phase1.get(2, 0) && out.phase1.get(2, 1));
        assert_eq!(out.phase2.owner(2).unwrap(), Some(0));
    }

    #[test]
    fn ties_prefer_smaller_cascade() {
        let inst = instance(3, 2, &[(0, 2, 0, "0.500"), (1, 2, 1, "0.500")], "0.400");
        let out = step(&inst, &status(3, 2, &[(0, 0), (1, 1)])).unwrap();
        assert_eq!(out.phase2.owner(2).unwrap(), Some(0));
        // relabel: swapping the seeds' cascades moves the win to the new smallest label
        let inst = instance(3, 2, &[(0, 2, 1, "0.500"), (1, 2, 0, "0.500")], "0.400");
        let out = step(&inst, &status(3, 2, &[(0, 1), (1, 0)])).unwrap();
        assert_eq!(out.phase2.owner(2).unwrap(), Some(0));
    }

    #[test]
    fn active_nodes_keep_their_cascade() {
        let inst = instance(2, 2, &[(0, 1, 0, "1")], "0.100");
        let out = step(&inst, &status(2, 2, &[(0, 0), (1, 1)])).unwrap();
        assert_eq!(out.phase2.owner(1).unwrap(), Some(1));
        assert!(!out.phase1.get(1, 0), "active nodes only carry their own bit");
    }

    #[test]
    fn rejects_double_ownership() {
        let inst = instance(2, 2, &[], "0.5");
        assert!(matches!(
            step(&inst, &status(2, 2, &[(0, 0), (0, 1)])),
            Err(DiffusionError::InvariantViolation(_))
        ));
    }

    #[test]
    fn chain_activates_one_hop_per_step() {
        let inst = instance(3, 1, &[(0, 1, 0, "1"), (1, 2, 0, "1")], "0.500");
        let traj = run(&inst, &status(3, 1, &[(0, 0)])).unwrap();
        assert_eq!(traj.stored_steps().len(), 2);
        assert_eq!(traj.phase2(1), &status(3, 1, &[(0, 0), (1, 0)]));
        assert_eq!(traj.phase2(2), &status(3, 1, &[(0, 0), (1, 0), (2, 0)]));
        assert_eq!(traj.phase2(3), traj.phase2(2));
        assert_eq!(traj.horizon(), 3);
        traj.check().unwrap();
    }

    #[test]
    fn single_isolated_seed() {
        let inst = instance(1, 2, &[], "0.5");
        let init = status(1, 2, &[(0, 1)]);
        let traj = run(&inst, &init).unwrap();
        assert_eq!(traj.final_status(), &init);
        assert_eq!(influence_function(&inst, &init).unwrap(), init);
        assert!(influence_function(&inst, &status(1, 2, &[])).unwrap().is_empty());
    }
}
