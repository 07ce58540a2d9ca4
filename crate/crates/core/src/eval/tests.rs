use proptest::prelude::*;

use super::*;
use crate::forge::{gen_power_law, generate_dataset, make_instance, WeightScheme};
use crate::rng::rng_from_seed;
use crate::status::StepOutcome;

fn matrix(rows: usize, cols: usize, bits: u64) -> BinaryMatrix {
    let flat: Vec<bool> = (0..rows * cols).map(|k| bits >> k & 1 == 1).collect();
    BinaryMatrix::from_flat(rows, cols, &flat).unwrap()
}

/// Independent recount straight from the definitions.
fn brute_force(truth: &BinaryMatrix, pred: &BinaryMatrix) -> Metrics {
    let (mut tp, mut fp, mut fn_, mut same) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..truth.rows() {
        for s in 0..truth.cols() {
            let (t, p) = (truth.get(i, s), pred.get(i, s));
            if t && p {
                tp += 1.0;
            }
            if !t && p {
                fp += 1.0;
            }
            if t && !p {
                fn_ += 1.0;
            }
            if t == p {
                same += 1.0;
            }
        }
    }
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    let f1 = if tp > 0.0 {
        2.0 * tp / (2.0 * tp + fp + fn_)
    } else {
        0.0
    };
    let cells = (truth.rows() * truth.cols()) as f64;
    Metrics {
        precision,
        recall,
        f1,
        accuracy: if cells > 0.0 { same / cells } else { 0.0 },
    }
}

fn close(a: &Metrics, b: &Metrics) -> bool {
    (a.precision - b.precision).abs() < 1e-12
        && (a.recall - b.recall).abs() < 1e-12
        && (a.f1 - b.f1).abs() < 1e-12
        && (a.accuracy - b.accuracy).abs() < 1e-12
}

#[test]
fn loss_examples() {
    let a = matrix(2, 2, 0b0110);
    assert_eq!(zero_one_loss(&a, &a).unwrap(), Ratio::from_integer(0));
    assert_eq!(zero_one_loss(&a, &matrix(2, 2, 0b0111)).unwrap(), Ratio::new(1, 8));
    assert_eq!(zero_one_loss(&a, &matrix(2, 2, 0b1001)).unwrap(), Ratio::new(1, 2));
    assert!(zero_one_loss(&a, &matrix(2, 3, 0)).is_err());
}

#[test]
fn perfect_and_all_inactive_predictions() {
    let truth = matrix(4, 2, 0b1001_0010);
    let m = classification_metrics(&truth, &truth).unwrap();
    assert_eq!((m.precision, m.recall, m.f1, m.accuracy), (1.0, 1.0, 1.0, 1.0));
    let m = classification_metrics(&truth, &matrix(4, 2, 0)).unwrap();
    assert_eq!(m.f1, 0.0);
    assert_eq!(m.accuracy, 5.0 / 8.0);
}

#[test]
fn exhaustive_small_recount() {
    for (rows, cols) in [(1, 1), (1, 2), (2, 1), (2, 2), (1, 3)] {
        let n = rows * cols;
        for a in 0..1u64 << n {
            for b in 0..1u64 << n {
                let (t, p) = (matrix(rows, cols, a), matrix(rows, cols, b));
                assert!(close(&classification_metrics(&t, &p).unwrap(), &brute_force(&t, &p)));
            }
        }
    }
}

#[test]
fn node_macro_counts_classes() {
    // nodes: inactive, cascade 1, cascade 2, cascade 1
    let truth = BinaryMatrix::from_owners(2, &[None, Some(0), Some(1), Some(0)]);
    let pred = BinaryMatrix::from_owners(2, &[None, Some(0), Some(0), Some(0)]);
    let mut t = Tally::new(2);
    t.record(&truth, &pred).unwrap();
    let m = t.metrics(Averaging::NodeMacro);
    assert_eq!(m.accuracy, 0.75);
    // inactive: P=R=1; cascade 1: P=2/3, R=1; cascade 2: P=R=0
    assert!((m.precision - (1.0 + 2.0 / 3.0) / 3.0).abs() < 1e-12);
    assert!((m.recall - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(t.metrics(Averaging::NodeMacro), {
        let mut u = Tally::new(2);
        u.record(&truth, &pred).unwrap();
        u.metrics(Averaging::NodeMacro)
    });
}

#[test]
fn identical_trajectories_match_everywhere() {
    let inst = make_instance(gen_power_law(30, 2, 4).unwrap(), 2, 3, WeightScheme::WeightedCascade, 4).unwrap();
    let ds = generate_dataset(&inst, 5, 9).unwrap();
    let report = evaluate(&inst, &ds, true).unwrap();
    assert!(report.step_match.as_ref().unwrap().iter().all(|&r| r == 1.0));
    assert_eq!(report.loss, 0.0);
    assert_eq!(report.metrics(Averaging::Micro).accuracy, 1.0);
}

#[test]
fn flipped_cell_dips_from_its_step() {
    let m0 = BinaryMatrix::from_owners(2, &[Some(0), None, None]);
    let m1 = BinaryMatrix::from_owners(2, &[Some(0), Some(0), None]);
    let m2 = BinaryMatrix::from_owners(2, &[Some(0), Some(0), Some(1)]);
    let step = |m: &BinaryMatrix| StepOutcome {
        phase1: m.clone(),
        phase2: m.clone(),
    };
    let truth = StatusTensor::new(m0.clone(), vec![step(&m1), step(&m1), step(&m1)], 3).unwrap();
    let pred = StatusTensor::new(m0, vec![step(&m1), step(&m2), step(&m2)], 3).unwrap();
    let rates = step_matching(&truth, &pred).unwrap();
    assert_eq!(rates, vec![1.0, 5.0 / 6.0, 5.0 / 6.0]);
}

#[test]
fn random_baseline_matches_its_expectation() {
    let (n, s) = (20_000, 3);
    let mut rng = rng_from_seed(11);
    let truth = random_baseline(n, s, &mut rng);
    let pred = random_baseline(n, s, &mut rng);
    assert!(pred.check_single_owner().is_ok());
    assert_eq!(
        random_baseline(50, s, &mut rng_from_seed(3)),
        random_baseline(50, s, &mut rng_from_seed(3))
    );

    // a cell is on with probability 1/(S+1), independently in truth and prediction
    let p = 1.0 / (s as f64 + 1.0);
    let cell_agree = p * p + (1.0 - p) * (1.0 - p);
    let m = classification_metrics(&truth, &pred).unwrap();
    // cells of one node are dependent; bound the variance per node instead
    let sigma = (s as f64 * s as f64 * 0.25 / n as f64).sqrt() / s as f64;
    assert!(
        (m.accuracy - cell_agree).abs() < 3.0 * sigma,
        "{} vs {cell_agree}",
        m.accuracy
    );

    let mut t = Tally::new(s);
    t.record(&truth, &pred).unwrap();
    let node_acc = t.metrics(Averaging::NodeMacro).accuracy;
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    assert!((node_acc - p).abs() < 3.0 * sigma, "{node_acc} vs {p}");
}

#[test]
fn two_pass_statistics() {
    assert_eq!(mean_std(&[0.7, 0.7, 0.7]), (0.7, 0.0));
    let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(m, 2.5);
    assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
    assert_eq!(mean_std(&[]), (0.0, 0.0));

    let mut agg = Aggregate::default();
    agg.push("f1", 0.5);
    agg.push("f1", 0.5);
    assert_eq!(agg.summary("f1"), Some((0.5, 0.0, 2)));
    assert_eq!(agg.to_csv(), "metric,mean,stddev,runs\nf1,0.5,0,2\n");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn metrics_match_recount(rows in 1usize..9, cols in 1usize..9, a: u64, b: u64) {
        let (t, p) = (matrix(rows, cols, a), matrix(rows, cols, b));
        let m = classification_metrics(&t, &p).unwrap();
        prop_assert!(close(&m, &brute_force(&t, &p)));
        for v in [m.precision, m.recall, m.f1, m.accuracy] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn loss_is_a_pseudometric(rows in 1usize..6, cols in 1usize..5, a: u64, b: u64, c: u64) {
        let (x, y, z) = (matrix(rows, cols, a), matrix(rows, cols, b), matrix(rows, cols, c));
        let d = |p: &BinaryMatrix, q: &BinaryMatrix| zero_one_loss(p, q).unwrap();
        prop_assert_eq!(d(&x, &y), d(&y, &x));
        prop_assert_eq!(d(&x, &y) == Ratio::from_integer(0), x == y);
        prop_assert!(d(&x, &z) <= d(&x, &y) + d(&y, &z));
        prop_assert!(d(&x, &y) <= Ratio::new(1, 2));
    }
}
