use super::*;
use crate::data::{partition_label_shard, synth_gaussian_mixture, ClientSplit};
use crate::model::{Mclr, Model};
use proptest::prelude::*;

fn pv(v: &[f64]) -> ParamVector {
    ParamVector::new(v.to_vec())
}

#[test]
fn gce_analytic_values() {
    assert!(gce(&[pv(&[1.0, 0.0]), pv(&[0.0, 3.0])]).unwrap().abs() <= 1e-9);
    assert!((gce(&[pv(&[0.3, 0.4]), pv(&[0.3, 0.4])]).unwrap() - 1.0).abs() <= 1e-9);
    let r = 0.5f64.sqrt();
    assert!((gce(&[pv(&[1.0, 0.0]), pv(&[r, r])]).unwrap() - 0.5).abs() <= 1e-9);
}

#[test]
fn gce_rejects_degenerate_input() {
    assert!(gce(&[pv(&[1.0])]).is_err());
    assert!(gce(&[pv(&[1.0, 0.0]), pv(&[0.0, 0.0])]).is_err());
    assert!(gce(&[pv(&[1.0, 0.0]), pv(&[1.0])]).is_err());
}

proptest! {
    #[test]
    fn gce_is_scale_and_permutation_invariant(
        a in prop::collection::vec(-5.0f64..5.0, 4),
        b in prop::collection::vec(-5.0f64..5.0, 4),
        c in prop::collection::vec(-5.0f64..5.0, 4),
        s in 0.01f64..100.0,
    ) {
        let vs = [pv(&a), pv(&b), pv(&c)];
        prop_assume!(vs.iter().all(|v| v.norm() > 1e-3));
        let base = gce(&vs).unwrap();
        prop_assert!((0.0..=1.0).contains(&base));
        let scaled = [vs[0].scale(s), vs[1].clone(), vs[2].clone()];
        prop_assert!((gce(&scaled).unwrap() - base).abs() <= 1e-9);
        let permuted = [vs[2].clone(), vs[0].clone(), vs[1].clone()];
        prop_assert!((gce(&permuted).unwrap() - base).abs() <= 1e-9);
    }

    #[test]
    fn deviations_have_zero_weighted_sum(
        losses in prop::collection::vec(prop::collection::vec(0.0f64..5.0, 3), 1..6),
        raw_weights in prop::collection::vec(prop::collection::vec(0.0f64..10.0, 3), 6),
    ) {
        let weights: Vec<Vec<f64>> = raw_weights[..losses.len()].to_vec();
        let dev = loss_deviation(&losses, &weights).unwrap();
        for c in 0..3 {
            let wsum: f64 = weights.iter().map(|w| w[c]).sum();
            if wsum > 0.0 {
                let s: f64 = dev.iter().zip(&weights).map(|(d, w)| w[c] * d[c]).sum();
                prop_assert!(s.abs() <= 1e-9 * (1.0 + wsum));
            }
        }
    }

    #[test]
    fn savgol_reproduces_low_degree_polynomials(
        coeffs in prop::collection::vec(-3.0f64..3.0, 3),
        half in 1usize..5,
        len in 11usize..40,
    ) {
        let window = 2 * half + 1;
        let series: Vec<f64> = (0..len).map(|i| {
            let t = i as f64 / 10.0;
            coeffs[0] + coeffs[1] * t + coeffs[2] * t * t
        }).collect();
        let out = savitzky_golay(&series, window, 2.min(window - 1)).unwrap();
        if window > 2 {
            for (a, b) in out.iter().zip(&series) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }
    }
}

#[test]
fn deviation_examples() {
    let equal = loss_deviation(&[vec![1.5, 2.0], vec![1.5, 2.0]], &uniform_weights(2, 2)).unwrap();
    assert!(equal.iter().flatten().all(|&d| d == 0.0));
    let two = loss_deviation(&[vec![2.0], vec![4.0]], &uniform_weights(2, 1)).unwrap();
    assert_eq!(two, vec![vec![-1.0], vec![1.0]]);
    let weighted = loss_deviation(&[vec![2.0], vec![6.0]], &[vec![0.75], vec![0.25]]).unwrap();
    assert_eq!(weighted, vec![vec![-1.0], vec![3.0]]);
}

#[test]
fn savgol_examples() {
    let linear: Vec<f64> = (0..12).map(|i| 3.0 - 0.5 * i as f64).collect();
    for (a, b) in savitzky_golay(&linear, 5, 1).unwrap().iter().zip(&linear) {
        assert!((a - b).abs() <= 1e-9);
    }
    let constant = vec![2.5; 9];
    for v in savitzky_golay(&constant, 7, 3).unwrap() {
        assert!((v - 2.5).abs() <= 1e-12);
    }
    let quad: Vec<f64> = (0..10).map(|i| (i * i) as f64 - 4.0 * i as f64).collect();
    for (a, b) in savitzky_golay(&quad, 5, 2).unwrap().iter().zip(&quad) {
        assert!((a - b).abs() <= 1e-9);
    }
    // interior of mirror mode matches interp mode
    let noisy: Vec<f64> = (0..20).map(|i| ((i * 7919) % 13) as f64).collect();
    let a = savitzky_golay_with(&noisy, 5, 2, EdgeMode::Mirror).unwrap();
    let b = savitzky_golay(&noisy, 5, 2).unwrap();
    for i in 2..18 {
        assert!((a[i] - b[i]).abs() < 1e-9);
    }
    assert_eq!(savitzky_golay_with(&constant, 5, 2, EdgeMode::Mirror).unwrap().len(), 9);
}

#[test]
fn savgol_smooths_and_validates() {
    let spiky = vec![0.0, 0.0, 0.0, 10.0, 0.0, 0.0, 0.0];
    let out = savitzky_golay(&spiky, 5, 1).unwrap();
    assert!(out[3] < 10.0);
    assert!(savitzky_golay(&spiky, 4, 1).is_err());
    assert!(savitzky_golay(&spiky, 5, 5).is_err());
    assert!(savitzky_golay(&spiky, 9, 2).is_err());
}

fn toy() -> (Dataset, Mclr) {
    let ds = synth_gaussian_mixture(3, 3, 20, 4.0, 5).unwrap();
    (ds, Mclr::new(3, 3))
}

/// Params that classify by the largest coordinate (means sit on the axes).
fn axis_params(scale: f64) -> ParamVector {
    pv(&[scale, 0.0, 0.0, 0.0, scale, 0.0, 0.0, 0.0, scale, 0.0, 0.0, 0.0])
}

#[test]
fn global_evaluation_examples() {
    let ds = Dataset::new(vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0], 3, vec![0, 1], 3).unwrap();
    let m = Mclr::new(3, 3);
    let (acc, _) = evaluate_global(&m, &axis_params(5.0), &ds, &[0, 1]).unwrap();
    assert_eq!(acc, 1.0);

    let (ds, m) = toy();
    let all: Vec<usize> = (0..ds.len()).collect();
    let (_, per_class) = evaluate_global(&m, &ParamVector::zeros(m.num_params()), &ds, &all).unwrap();
    for l in per_class {
        assert!((l - 3f64.ln()).abs() < 1e-12);
    }
    // ties broken towards the lowest class: a constant predictor
    let (acc, _) = evaluate_global(&m, &ParamVector::zeros(m.num_params()), &ds, &all).unwrap();
    assert!((acc - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn local_weighting_examples() {
    let mk = |acc: f64, count: usize| Evaluation {
        count,
        accuracy: acc,
        mean_loss: 0.0,
        per_class_loss: vec![0.0],
        per_class_count: vec![count],
    };
    let l = combine_local(vec![mk(1.0, 30), mk(0.0, 10)]).unwrap();
    assert_eq!(l.weighted_accuracy, 0.75);
    let same = combine_local(vec![mk(0.4, 3), mk(0.4, 17), mk(0.4, 5)]).unwrap();
    assert!((same.weighted_accuracy - 0.4).abs() < 1e-15);
}

#[test]
fn local_weighted_matches_brute_force_loop() {
    let (ds, m) = toy();
    let p = partition_label_shard(&ds, 4, 2, 0.7, 1).unwrap();
    let params: Vec<ParamVector> = (0..4).map(|i| axis_params(0.5 + i as f64)).collect();
    let local = evaluate_local_weighted(&m, &params, &ds, &p).unwrap();

    let (mut correct, mut total, mut loss) = (0usize, 0usize, 0.0);
    for (client, split) in p.clients.iter().enumerate() {
        for &i in &split.test {
            let probs = crate::model::predict(&m, &params[client], ds.features(i)).unwrap();
            let best = (0..3).max_by(|&a, &b| probs[a].total_cmp(&probs[b])).unwrap();
            correct += usize::from(best == ds.label(i));
            loss -= probs[ds.label(i)].ln();
            total += 1;
        }
    }
    assert!((local.weighted_accuracy - correct as f64 / total as f64).abs() < 1e-12);
    assert!((local.weighted_loss - loss / total as f64).abs() < 1e-9);
}

#[test]
fn single_client_local_equals_global() {
    let (ds, m) = toy();
    let p = partition_label_shard(&ds, 1, 3, 0.5, 2).unwrap();
    let params = axis_params(1.3);
    let local = evaluate_local_weighted(&m, std::slice::from_ref(&params), &ds, &p).unwrap();
    let (acc, per_class) = evaluate_global(&m, &params, &ds, &p.global_test()).unwrap();
    assert_eq!(local.weighted_accuracy, acc);
    for (a, b) in local.per_class_loss_means.iter().zip(&per_class) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn empty_local_test_is_a_configuration_error() {
    let (ds, m) = toy();
    let p = Partition {
        clients: vec![ClientSplit { train: vec![0, 1], test: vec![] }],
        seed: 0,
    };
    let err = evaluate_local_weighted(&m, &[ParamVector::zeros(m.num_params())], &ds, &p).unwrap_err();
    assert!(matches!(err, Error::Config { .. }));
}
