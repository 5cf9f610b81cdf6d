use super::*;
use crate::data::SparseVector;
use crate::objective::per_round_gradient;
use crate::stats::{DenseClassStats, SparseClassStats};
use rand::Rng;

fn inst(v: &[f64], pos: bool) -> Instance<f64> {
    let label = if pos { Label::Positive } else { Label::Negative };
    Instance::new(SparseVector::from_dense(v), label)
}

fn random_stream(seed: u64, n: usize, d: usize, density: f64) -> Vec<Instance<f64>> {
    let mut rng = rng::seeded(seed);
    (0..n)
        .map(|_| {
            let pos = rng.random_bool(0.4);
            let shift = if pos { 0.3 } else { -0.3 };
            let mut entries: Vec<(usize, f64)> = Vec::new();
            for i in 0..d {
                if rng.random_bool(density) {
                    let bias = if i % 3 == 0 { shift } else { 0.0 };
                    entries.push((i, rng.random_range(-1.0..1.0) + bias));
                }
            }
            let x = SparseVector::new(d, entries).unwrap();
            crate::data::l2_normalize(Instance::new(x, if pos { Label::Positive } else { Label::Negative }))
        })
        .collect()
}

/// Every coordinate, every round: the straightforward reading of the
/// sparse learner without deferred shrinkage.
fn eager_sadaoam(stream: &[Instance<f64>], params: HyperParams<f64>) -> Vec<Vec<f64>> {
    let d = stream[0].features.dim();
    let mut pair = ClassPair {
        pos: DenseClassStats::new(d),
        neg: DenseClassStats::new(d),
    };
    let mut sumsq = vec![0.0; d];
    let mut w = vec![0.0; d];
    let mut out = Vec::new();
    for it in stream {
        pair.of_mut(it.label).update_dense_covariance(&it.features).unwrap();
        let opp = pair.of(it.label.opposite());
        if opp.count() > 0 {
            let g = per_round_gradient(&w, &it.features, it.label, opp, params.lambda).unwrap();
            for i in 0..d {
                sumsq[i] += g[i] * g[i];
                let h = params.delta + sumsq[i].sqrt();
                w[i] = sadaoam_prox_coordinate(w[i], g[i], h, params.eta, params.theta);
            }
        }
        out.push(w.clone());
    }
    out
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn algorithm_names_round_trip() {
    for a in Algorithm::ALL {
        assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(json, format!("\"{}\"", a.name()));
    }
    assert!("svm".parse::<Algorithm>().is_err());
}

#[test]
fn first_instance_only_updates_statistics() {
    for a in Algorithm::ALL {
        if matches!(a, Algorithm::UniLog | Algorithm::UniExp) {
            continue;
        }
        let mut m = ModelState::new(a, HyperParams::new(0.5, 0.1), 3).unwrap();
        m.step(&inst(&[0.6, 0.8, 0.0], true)).unwrap();
        assert_eq!(m.current_weights(), vec![0.0; 3]);
        assert_eq!(m.adagrad().rounds_absorbed(), 0);
        assert_eq!(m.round(), 1);
        assert_eq!(m.steps(), 0);
        assert_eq!(m.class_counts(), (1, 0));
    }
}

#[test]
fn adaoam_second_instance_by_hand() {
    let (eta, lambda) = (0.1, 1e-6);
    let xp = [0.6, 0.8, 0.0];
    let xn = [0.0, 0.6, -0.8];
    let mut m = ModelState::new(Algorithm::Adaoam, HyperParams::new(eta, lambda), 3).unwrap();
    m.step(&inst(&xp, true)).unwrap();
    m.step(&inst(&xn, false)).unwrap();
    // w = 0 and a single positive seen: g = -y (x - c) = (x⁻ - x⁺), S⁺ = 0.
    let delta = crate::objective::DEFAULT_DELTA;
    for i in 0..3 {
        let g = xn[i] - xp[i];
        let expected = -eta * g / (delta + g.abs());
        assert!((m.weights()[i] - expected).abs() < 1e-12);
        // moves along +(x⁺ − x⁻)
        assert!(m.weights()[i] * (xp[i] - xn[i]) >= 0.0);
    }
}

#[test]
fn dense_learners_stay_in_ball() {
    let stream = random_stream(3, 300, 8, 0.8);
    for a in [Algorithm::Adaoam, Algorithm::OgdPairwise, Algorithm::UniLog, Algorithm::UniExp] {
        let lambda = 0.5;
        let mut m = ModelState::new(a, HyperParams::new(4.0, lambda), 8).unwrap();
        for it in &stream {
            m.step(it).unwrap();
            assert!(within_ball(m.weights(), lambda, 1e-9), "{a}");
        }
    }
}

#[test]
fn skip_rule_leaves_weights_and_accumulators_untouched() {
    let stream = random_stream(5, 60, 6, 0.7);
    let mut m = ModelState::new(Algorithm::Adaoam, HyperParams::new(0.3, 0.1), 6).unwrap();
    for it in stream.iter().filter(|i| i.label == Label::Negative) {
        let before = (m.weights().to_vec(), m.adagrad().clone());
        m.step(it).unwrap();
        assert_eq!(before.0, m.weights());
        assert_eq!(&before.1, m.adagrad());
    }
}

#[test]
fn ogd_matches_forced_identity_preconditioner() {
    let stream = random_stream(11, 80, 5, 0.9);
    let (eta, lambda) = (0.2, 0.3);
    let mut m = ModelState::new(Algorithm::OgdPairwise, HyperParams::new(eta, lambda), 5).unwrap();
    let mut pair = ClassPair {
        pos: DenseClassStats::new(5),
        neg: DenseClassStats::new(5),
    };
    let mut w = vec![0.0; 5];
    for it in &stream {
        m.step(it).unwrap();
        pair.of_mut(it.label).update_dense_covariance(&it.features).unwrap();
        let opp = pair.of(it.label.opposite());
        if opp.count() > 0 {
            let g = per_round_gradient(&w, &it.features, it.label, opp, lambda).unwrap();
            // H = I (δ = 1, fresh accumulators each round)
            let fresh = AdaGradState::new(5, 1.0);
            let dir = fresh.preconditioned_direction(&g).unwrap();
            let u: Vec<f64> = w.iter().zip(&dir).map(|(a, b)| a - eta * b).collect();
            w = adagrad::project_euclidean_ball(&u, 1.0 / lambda.sqrt());
        }
        assert!(max_abs_diff(&w, m.weights()) < 1e-12);
    }
}

#[test]
fn sadaoam_lazy_matches_eager_loop() {
    for (seed, theta) in [(1, 0.0), (2, 1e-3), (3, 1e-2), (4, 0.1)] {
        let stream = random_stream(seed, 150, 40, 0.1);
        let params = HyperParams::new(0.25, 0.05).with_theta(theta);
        let eager = eager_sadaoam(&stream, params);
        let mut m = ModelState::new(Algorithm::Sadaoam, params, 40).unwrap();
        for (it, w) in stream.iter().zip(&eager) {
            m.step(it).unwrap();
            assert!(max_abs_diff(&m.current_weights(), w) < 1e-12, "seed {seed}");
        }
    }
}

#[test]
fn sadaoam_without_l1_is_unprojected_adaoam() {
    let stream = random_stream(9, 120, 6, 1.0);
    let params = HyperParams::new(0.1, 0.01);
    let mut m = ModelState::new(Algorithm::Sadaoam, params, 6).unwrap();
    let mut pair = ClassPair {
        pos: DenseClassStats::new(6),
        neg: DenseClassStats::new(6),
    };
    let mut ada = AdaGradState::new(6, params.delta);
    let mut w = vec![0.0; 6];
    for it in &stream {
        m.step(it).unwrap();
        pair.of_mut(it.label).update_dense_covariance(&it.features).unwrap();
        let opp = pair.of(it.label.opposite());
        if opp.count() > 0 {
            let g = per_round_gradient(&w, &it.features, it.label, opp, params.lambda).unwrap();
            ada.accumulate(&g).unwrap();
            let dir = ada.preconditioned_direction(&g).unwrap();
            for i in 0..6 {
                w[i] -= params.eta * dir[i];
            }
        }
        assert!(max_abs_diff(&w, &m.current_weights()) < 1e-10);
    }
}

#[test]
fn sadaoam_huge_theta_keeps_zero_model() {
    let stream = random_stream(4, 100, 20, 0.3);
    let eta = 0.5;
    let params = HyperParams::new(eta, 0.1).with_theta(1e6 / eta);
    let mut m = ModelState::new(Algorithm::Sadaoam, params, 20).unwrap();
    for it in &stream {
        m.step(it).unwrap();
        assert!(m.current_weights().iter().all(|&w| w == 0.0));
    }
}

#[test]
fn sadaoam_untouched_coordinates_stay_zero() {
    // coordinates 15..20 never appear
    let stream: Vec<_> = random_stream(6, 200, 15, 0.3)
        .into_iter()
        .map(|i| Instance::new(i.features.with_dim(20).unwrap(), i.label))
        .collect();
    let mut m = ModelState::new(Algorithm::Sadaoam, HyperParams::new(0.5, 0.01), 20).unwrap();
    for it in &stream {
        m.step(it).unwrap();
    }
    assert!(m.current_weights()[15..].iter().all(|&w| w == 0.0));
    assert!(m.touched_coordinates().iter().all(|&i| i < 15));
}

#[test]
fn sadaoam_ball_clip_is_opt_in() {
    let stream = random_stream(8, 200, 6, 1.0);
    let lambda = 4.0;
    let params = HyperParams::new(5.0, lambda);
    let mut m = ModelState::new(Algorithm::Sadaoam, params, 6)
        .unwrap()
        .with_ball_clip(true)
        .unwrap();
    for it in &stream {
        m.step(it).unwrap();
        assert!(within_ball(&m.current_weights(), lambda, 1e-12));
    }
    let zero_lambda = HyperParams::new(1.0, 0.0);
    assert!(ModelState::new(Algorithm::Sadaoam, zero_lambda, 6).is_ok());
    assert!(ModelState::new(Algorithm::Adaoam, zero_lambda, 6).is_err());
    assert!(
        ModelState::new(Algorithm::Sadaoam, zero_lambda, 6)
            .unwrap()
            .with_ball_clip(true)
            .is_err()
    );
}

#[test]
fn univariate_gradient_at_zero() {
    let x = SparseVector::from_dense(&[0.6, -0.8]);
    let w = [0.0, 0.0];
    for (label, y) in [(Label::Positive, 1.0f64), (Label::Negative, -1.0)] {
        let a = univariate_gradient_coef(Algorithm::UniLog, &w, &x, label, 1.0);
        assert!((a + y / 2.0).abs() < 1e-15);
        let a = univariate_gradient_coef(Algorithm::UniExp, &w, &x, label, 1.0);
        assert!((a + y).abs() < 1e-15);
    }
}

#[test]
fn univariate_gradient_matches_finite_differences() {
    let mut rng = rng::seeded(21);
    for _ in 0..100 {
        let d = 5;
        let dense: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = SparseVector::from_dense(&dense);
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();
        let label = if rng.random_bool(0.5) { Label::Positive } else { Label::Negative };
        let rho = rng.random_range(0.1..3.0);
        let y = label.sign::<f64>();
        for alg in [Algorithm::UniLog, Algorithm::UniExp] {
            let loss = |w: &[f64]| {
                let m = y * x.dot(w);
                match alg {
                    Algorithm::UniLog => rho * (1.0 + (-m).exp()).ln(),
                    _ => rho * (-m).exp(),
                }
            };
            let a = univariate_gradient_coef(alg, &w, &x, label, rho);
            if alg == Algorithm::UniExp && (a.abs() * x.norm() - 10.0).abs() < 1e-12 {
                continue; // clipped
            }
            for i in 0..d {
                let hstep = 1e-6;
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[i] += hstep;
                wm[i] -= hstep;
                let fd = (loss(&wp) - loss(&wm)) / (2.0 * hstep);
                let an = a * dense[i];
                let rel = (fd - an).abs() / an.abs().max(1e-8);
                assert!(rel < 1e-6 || (fd - an).abs() < 1e-9, "{alg} {fd} vs {an}");
            }
        }
    }
}

#[test]
fn uni_exp_gradient_is_clipped() {
    let x = SparseVector::from_dense(&[1.0, 0.0]);
    let a: f64 = univariate_gradient_coef(Algorithm::UniExp, &[-5.0, 0.0], &x, Label::Positive, 1.0);
    assert!((a.abs() - 10.0).abs() < 1e-12);
}

#[test]
fn univariate_class_weight_uses_counts_including_current() {
    let mut m = ModelState::new(Algorithm::UniLog, HyperParams::new(1.0, 1e-4), 2).unwrap();
    // first instance: no opposite seen yet, ρ = 0, no movement
    m.step(&inst(&[1.0, 0.0], true)).unwrap();
    assert_eq!(m.weights(), &[0.0, 0.0]);
    // negative: ρ = 1/1, gradient = +x/2 → w = -x/2
    m.step(&inst(&[0.0, 1.0], false)).unwrap();
    assert!((m.weights()[1] + 0.5).abs() < 1e-15);
}

#[test]
fn train_is_deterministic_and_counts_rounds() {
    let stream = random_stream(12, 90, 7, 0.6);
    let ds = Dataset::new("s", 7, stream).unwrap();
    for a in Algorithm::ALL {
        let p = HyperParams::new(0.3, 0.1).with_theta(1e-3);
        let m1 = train(&ds, a, p, 99).unwrap();
        let m2 = train(&ds, a, p, 99).unwrap();
        assert_eq!(m1.weights(), m2.weights());
        assert_eq!(m1.round(), ds.len());
    }
}

#[test]
fn single_instance_dataset_gives_zero_model() {
    let ds = Dataset::new("one", 2, vec![inst(&[0.6, 0.8], true)]).unwrap();
    let m = train(&ds, Algorithm::Adaoam, HyperParams::new(1.0, 0.1), 0).unwrap();
    assert_eq!(m.weights(), &[0.0, 0.0]);
    let empty = Dataset::<f64>::new("none", 2, vec![]).unwrap();
    assert!(train(&empty, Algorithm::Adaoam, HyperParams::new(1.0, 0.1), 0).is_err());
}

#[test]
fn hooks_fire_at_checkpoints() {
    let ds = Dataset::new("s", 5, random_stream(2, 40, 5, 0.8)).unwrap();
    let mut seen = Vec::new();
    train_single_pass(&ds, Algorithm::Sadaoam, HyperParams::new(0.2, 0.1), 1, &[0, 10, 25, 40], |r, m| {
        seen.push((r, m.round()))
    })
    .unwrap();
    assert_eq!(seen, vec![(0, 0), (10, 10), (25, 25), (40, 40)]);
}

#[test]
fn snapshot_round_trip() {
    let ds = Dataset::new("s", 9, random_stream(14, 80, 9, 0.5)).unwrap();
    let m = train(&ds, Algorithm::Sadaoam, HyperParams::new(0.2, 0.1).with_theta(0.01), 3).unwrap();
    let snap = m.snapshot();
    let back = ModelSnapshot::read_json(snap.to_json().as_bytes()).unwrap();
    assert_eq!(snap, back);
    assert_eq!(back.dense_weights().unwrap(), m.current_weights());
    assert_eq!(back.round, 80);
    for it in ds.instances() {
        assert_eq!(back.score(&it.features), m.score(&it.features));
    }
}

#[test]
fn sparse_statistics_agree_with_dense_for_sadaoam_gradient() {
    let stream = random_stream(31, 50, 12, 0.4);
    let mut dense = DenseClassStats::new(12);
    let mut sparse = SparseClassStats::new(12);
    for it in &stream {
        dense.update_dense_covariance(&it.features).unwrap();
        sparse.update_sparse_stats(&it.features).unwrap();
    }
    let w: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
    let x = &stream[0].features;
    let a = per_round_gradient(&w, x, Label::Positive, &dense, 0.1).unwrap();
    let b = per_round_gradient(&w, x, Label::Positive, &sparse, 0.1).unwrap();
    assert!(max_abs_diff(&a, &b) < 1e-12);
}
