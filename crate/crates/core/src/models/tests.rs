use super::*;
use crate::datagen::{gen_synthetic_with_truth, SyntheticParams};
use crate::numkit::{gaussian_vector, mix, Mean, StreamTag};

fn random_batch(rng: &mut RngStream, rows: usize, d: usize, c: usize) -> (Matrix, Vec<usize>) {
    let x = gaussian_vector(rng, rows * d, Mean::Scalar(0.0), 1.0).unwrap();
    let y = (0..rows).map(|_| rng.below(c)).collect();
    (Matrix::from_vec(rows, d, x.into_vec()).unwrap(), y)
}

fn pv(v: Vec<f64>) -> ParamVector {
    ParamVector::new(v).unwrap()
}

#[test]
fn param_counts() {
    assert_eq!(ModelSpec::logistic(4, 3, 0.1).param_count(), 15);
    assert_eq!(ModelSpec::mlp(4, 3, vec![5, 2]).param_count(), 5 * 5 + 2 * 6 + 3 * 3);
}

#[test]
fn zero_params_loss_is_log_classes() {
    let mut rng = RngStream::new(1, 0);
    for c in [2usize, 3, 10] {
        let (x, y) = random_batch(&mut rng, 7, 4, c);
        let spec = ModelSpec::logistic(4, c, 0.37);
        let l = spec.loss(&ParamVector::zeros(spec.param_count()), &Batch::full(&x, &y).unwrap()).unwrap();
        assert!((l - (c as f64).ln()).abs() < 1e-15, "c={c}: {l}");
    }
}

#[test]
fn confident_single_sample_loss() {
    // logits (0, 10, 0) with label 1: ln(e^10 + 2) - 10 = ln(1 + 2 e^-10)
    let spec = ModelSpec::logistic(2, 3, 0.5);
    let mut p = vec![0.0; spec.param_count()];
    p[6 + 1] = 10.0;
    let x = Matrix::from_rows(&[vec![0.3, -1.2]]).unwrap();
    let y = [1];
    let l = spec.loss(&pv(p), &Batch::full(&x, &y).unwrap()).unwrap();
    let expected = (2.0 * (-10.0f64).exp()).ln_1p() + 0.5 * 0.5 * 100.0;
    assert!((l - expected).abs() < 1e-15, "{l} vs {expected}");
}

#[test]
fn symmetric_balanced_batch_has_zero_gradient() {
    let spec = ModelSpec::logistic(3, 2, 0.2);
    let x = Matrix::from_rows(&[
        vec![1.0, -2.0, 0.5],
        vec![-1.0, 2.0, -0.5],
        vec![1.0, -2.0, 0.5],
        vec![-1.0, 2.0, -0.5],
    ])
    .unwrap();
    let y = [0, 0, 1, 1];
    let g = spec.grad(&ParamVector::zeros(spec.param_count()), &Batch::full(&x, &y).unwrap()).unwrap();
    assert!(g.as_slice().iter().all(|v| *v == 0.0), "{g:?}");
}

#[test]
fn gradient_vanishes_at_minimizer() {
    let params = SyntheticParams {
        gamma: 0.5,
        beta: 0.5,
        n_clients: 1,
        samples_per_client: 80,
        d_feat: 5,
        n_classes: 3,
    };
    let (ds, _) = gen_synthetic_with_truth(&params, 2).unwrap();
    let spec = ModelSpec::logistic(5, 3, 0.1);
    let obj = ShardObjective { spec: &spec, shard: &ds.shards()[0] };
    let r = minimize(&obj, &ParamVector::zeros(spec.param_count()), 1e-9, 200_000).unwrap();
    assert!(r.converged);
    let g = spec.grad(&r.minimizer, &train_batch(&ds.shards()[0])).unwrap();
    assert!(g.norm_sq().sqrt() <= 1e-8);
}

#[test]
fn fd_logistic_random_points() {
    let mut rng = RngStream::derive(3, StreamTag::Test, 0);
    for _ in 0..20 {
        let spec = ModelSpec::logistic(4, 3, 0.05);
        let (x, y) = random_batch(&mut rng, 6, 4, 3);
        let p = gaussian_vector(&mut rng, spec.param_count(), Mean::Scalar(0.0), 0.5).unwrap();
        let err = fd_check(&spec, &p, &Batch::full(&x, &y).unwrap(), 1e-4).unwrap();
        assert!(err <= 1e-5, "{err}");
    }
}

#[test]
fn fd_mlp_away_from_kinks() {
    let mut rng = RngStream::derive(4, StreamTag::Test, 0);
    let spec = ModelSpec::mlp(4, 3, vec![6, 5]);
    let mut checked = 0;
    while checked < 10 {
        let (x, y) = random_batch(&mut rng, 5, 4, 3);
        let p = spec.init_params(&mut rng);
        let batch = Batch::full(&x, &y).unwrap();
        if spec.min_relu_margin(&p, &batch).unwrap() < 1e-2 {
            continue;
        }
        let err = fd_check(&spec, &p, &batch, 1e-4).unwrap();
        assert!(err <= 1e-4, "{err}");
        checked += 1;
    }
}

#[test]
fn fd_rejects_zero_epsilon() {
    let spec = ModelSpec::logistic(1, 2, 0.0);
    let x = Matrix::from_rows(&[vec![1.0]]).unwrap();
    let y = [0];
    let b = Batch::full(&x, &y).unwrap();
    assert!(fd_check(&spec, &ParamVector::zeros(4), &b, 0.0).is_err());
}

#[test]
fn predict_ties_and_argmax() {
    let spec = ModelSpec::logistic(2, 3, 0.0);
    let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5]]).unwrap();
    assert_eq!(spec.predict(&ParamVector::zeros(9), &x).unwrap(), vec![0, 0]);
    let mut p = vec![0.0; 9];
    p[6..].copy_from_slice(&[0.0, 5.0, 1.0]);
    assert_eq!(spec.predict(&pv(p), &x).unwrap(), vec![1, 1]);
}

#[test]
fn generator_model_beats_zero_model() {
    let params = SyntheticParams {
        gamma: 1.0,
        beta: 1.0,
        n_clients: 3,
        samples_per_client: 100,
        d_feat: 6,
        n_classes: 4,
    };
    let (ds, truths) = gen_synthetic_with_truth(&params, 9).unwrap();
    let spec = ModelSpec::logistic(6, 4, 0.0);
    for (s, t) in ds.shards().iter().zip(&truths) {
        let b = Batch::full(s.features(), s.labels()).unwrap();
        let own = spec.accuracy(t, &b).unwrap();
        let zero = spec.accuracy(&ParamVector::zeros(spec.param_count()), &b).unwrap();
        assert!(own >= zero);
        assert_eq!(own, 1.0);
    }
}

#[test]
fn logistic_strong_convexity_inequality() {
    let mut rng = RngStream::derive(5, StreamTag::Test, 0);
    let lambda = 0.3;
    let spec = ModelSpec::logistic(3, 4, lambda);
    let (x, y) = random_batch(&mut rng, 10, 3, 4);
    let batch = Batch::full(&x, &y).unwrap();
    for _ in 0..200 {
        let a = gaussian_vector(&mut rng, spec.param_count(), Mean::Scalar(0.0), 2.0).unwrap();
        let b = gaussian_vector(&mut rng, spec.param_count(), Mean::Scalar(0.0), 2.0).unwrap();
        let theta = rng.uniform_range(0.01, 0.99);
        let m = mix(theta, &a, &b).unwrap();
        let dist = a.dist_sq(&b).unwrap();
        let lhs = spec.loss(&m, &batch).unwrap();
        let rhs = theta * spec.loss(&a, &batch).unwrap() + (1.0 - theta) * spec.loss(&b, &batch).unwrap()
            - 0.5 * lambda * theta * (1.0 - theta) * dist;
        assert!(lhs <= rhs + 1e-12, "{lhs} > {rhs}");
    }
}

#[test]
fn minibatch_gradients_average_to_full() {
    let mut rng = RngStream::derive(6, StreamTag::Test, 0);
    for spec in [ModelSpec::logistic(3, 3, 0.1), ModelSpec::mlp(3, 3, vec![4])] {
        let (x, y) = random_batch(&mut rng, 12, 3, 3);
        let p = gaussian_vector(&mut rng, spec.param_count(), Mean::Scalar(0.0), 0.7).unwrap();
        let full = spec.grad(&p, &Batch::full(&x, &y).unwrap()).unwrap();
        let parts: Vec<ParamVector> = (0..3)
            .map(|k| {
                let rows: Vec<usize> = (4 * k..4 * k + 4).collect();
                spec.grad(&p, &Batch::with_owned_rows(&x, &y, rows)).unwrap()
            })
            .collect();
        let avg = crate::numkit::mean(&parts).unwrap();
        assert!(avg.max_abs_diff(&full).unwrap() < 1e-14);
    }
}

#[test]
fn softmax_shift_invariance() {
    let mut rng = RngStream::derive(7, StreamTag::Test, 0);
    // unregularized: the penalty is not shift invariant
    let spec = ModelSpec::logistic(3, 4, 0.0);
    let (x, y) = random_batch(&mut rng, 9, 3, 4);
    let batch = Batch::full(&x, &y).unwrap();
    let p = gaussian_vector(&mut rng, spec.param_count(), Mean::Scalar(0.0), 1.0).unwrap();
    let mut shifted = p.clone().into_vec();
    shifted[12..].iter_mut().for_each(|b| *b += 3.25);
    let shifted = pv(shifted);
    let (l0, l1) = (spec.loss(&p, &batch).unwrap(), spec.loss(&shifted, &batch).unwrap());
    assert!((l0 - l1).abs() < 1e-12);
    assert_eq!(spec.predict(&p, &x).unwrap(), spec.predict(&shifted, &x).unwrap());
}

#[test]
fn dimension_and_label_errors() {
    let spec = ModelSpec::logistic(2, 2, 0.0);
    let x = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
    let y = [0];
    let b = Batch::full(&x, &y).unwrap();
    assert!(matches!(spec.loss(&ParamVector::zeros(5), &b), Err(Error::DimensionMismatch { .. })));
    let y_bad = [2];
    let b = Batch::full(&x, &y_bad).unwrap();
    assert!(matches!(spec.loss(&ParamVector::zeros(6), &b), Err(Error::LabelOutOfRange { .. })));
    assert!(spec.predict(&ParamVector::zeros(6), &Matrix::zeros(1, 3)).is_err());
}

#[test]
fn mlp_init_is_glorot_uniform() {
    let spec = ModelSpec::mlp(10, 2, vec![20]);
    let p = spec.init_params(&mut RngStream::new(0, 0));
    let limit = (6.0f64 / 30.0).sqrt();
    assert!(p.as_slice()[..200].iter().all(|v| v.abs() <= limit));
    assert!(p.as_slice()[200..220].iter().all(|v| *v == 0.0));
}

#[test]
fn curvature_bounds_hold() {
    let x = Matrix::from_rows(&[vec![3.0, 4.0], vec![1.0, 0.0]]).unwrap();
    assert_eq!(ModelSpec::logistic(2, 3, 0.1).curvature_bounds(&x), Some((0.1, 0.1 + 13.0)));
    assert_eq!(ModelSpec::logistic(2, 3, 0.0).curvature_bounds(&x), None);
    assert_eq!(ModelSpec::mlp(2, 3, vec![2]).curvature_bounds(&x), None);
}
