use approx::assert_abs_diff_eq;
use crl_core::estimators::*;
use crl_core::rng;
use ndarray::{Array2, Axis};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn randn(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut r = rng::stream(seed, "test/randn");
    Array2::from_shape_simple_fn((rows, cols), || r.sample(StandardNormal))
}

/// Central finite difference of `f` with respect to every entry of `at`.
fn numeric_grad(at: &Array2<f64>, step: f64, mut f: impl FnMut(&Array2<f64>) -> f64) -> Array2<f64> {
    let mut out = Array2::zeros(at.raw_dim());
    for idx in 0..at.len() {
        let mut plus = at.clone();
        let mut minus = at.clone();
        plus.as_slice_mut().unwrap()[idx] += step;
        minus.as_slice_mut().unwrap()[idx] -= step;
        out.as_slice_mut().unwrap()[idx] = (f(&plus) - f(&minus)) / (2.0 * step);
    }
    out
}

fn assert_grad_close(analytic: &Array2<f64>, numeric: &Array2<f64>, what: &str) {
    for (a, n) in analytic.iter().zip(numeric) {
        let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
        assert!(rel <= 1e-4, "{what}: analytic {a} vs numeric {n} (rel {rel})");
    }
}

#[test]
fn uniform_scores_give_zero_bound() {
    let critic = BilinearCritic::new(Array2::zeros((3, 4)), randn(3, 2, 1), 1.0).unwrap();
    let b = 16;
    let out = infonce_loss(&critic, &randn(b, 4, 2).view(), &randn(b, 2, 3).view()).unwrap();
    assert_abs_diff_eq!(out.loss, (b as f64).ln(), epsilon = 1e-12);
    assert_abs_diff_eq!(out.lower_bound, 0.0, epsilon = 1e-12);
}

#[test]
fn saturated_diagonal_reaches_cap() {
    let b = 8;
    let eye = Array2::<f64>::eye(b);
    let scale = 50f64.sqrt();
    let critic = BilinearCritic::new(&eye * scale, &eye * scale, 1.0).unwrap();
    let s = critic.score_matrix(&eye.view(), &eye.view()).unwrap();
    assert_abs_diff_eq!(s[[0, 0]], 50.0, epsilon = 1e-12);
    assert_eq!(s[[0, 1]], 0.0);
    let out = infonce_loss(&critic, &eye.view(), &eye.view()).unwrap();
    assert!(out.loss < 1e-10);
    assert_abs_diff_eq!(out.lower_bound, (b as f64).ln(), epsilon = 1e-10);
}

#[test]
fn single_row_batches_are_rejected() {
    let critic = BilinearCritic::random(2, 1, 1, 1.0, 0).unwrap();
    let one = Array2::ones((1, 1));
    assert!(infonce_loss(&critic, &one.view(), &one.view()).is_err());
    assert!(infonce_with_grad(&critic, &one.view(), &one.view()).is_err());
}

#[test]
fn infonce_gradients_match_finite_differences() {
    for seed in 0..3 {
        let (p, q, k, b) = (4, 4, 3, 8);
        let critic = BilinearCritic::new(randn(k, p, seed * 10 + 1), randn(k, q, seed * 10 + 2), 0.7).unwrap();
        let reps = randn(b, p, seed * 10 + 3);
        let conds = randn(b, q, seed * 10 + 4);
        let g = infonce_with_grad(&critic, &reps.view(), &conds.view()).unwrap();
        let h = 1e-5;

        let num_wg = numeric_grad(&critic.w_g, h, |w| {
            let c = BilinearCritic::new(w.clone(), critic.w_x.clone(), critic.tau).unwrap();
            infonce_loss(&c, &reps.view(), &conds.view()).unwrap().loss
        });
        assert_grad_close(&g.d_w_g, &num_wg, "W_g");

        let num_wx = numeric_grad(&critic.w_x, h, |w| {
            let c = BilinearCritic::new(critic.w_g.clone(), w.clone(), critic.tau).unwrap();
            infonce_loss(&c, &reps.view(), &conds.view()).unwrap().loss
        });
        assert_grad_close(&g.d_w_x, &num_wx, "W_x");

        let num_r = numeric_grad(&reps, h, |r| {
            infonce_loss(&critic, &r.view(), &conds.view()).unwrap().loss
        });
        assert_grad_close(&g.d_reps, &num_r, "reps");
    }
}

#[test]
fn grad_reverse_examples() {
    assert!(grad_reverse(&[1.0, -2.0], 0.0).iter().all(|v| *v == 0.0));
    assert_eq!(grad_reverse(&[1.0, -2.0], 1.0), vec![-1.0, 2.0]);
    let layer = GradReverse { lambda: 0.3 };
    let acts = randn(2, 2, 5);
    assert_eq!(layer.forward(acts.clone()), acts);
}

#[test]
fn reversed_encoder_gradient_matches_negated_finite_difference() {
    // Two-parameter encoder h = t * theta feeding the InfoNCE loss.
    let b = 8;
    let t = randn(b, 2, 11);
    let x = &t + &(randn(b, 2, 12) * 0.5);
    let critic = BilinearCritic::random(3, 2, 2, 1.0, 13).unwrap();
    let theta = ndarray::arr1(&[0.8, -1.3]);
    let loss_at = |th: &ndarray::Array1<f64>| {
        let h = &t * &th.view().insert_axis(Axis(0));
        infonce_loss(&critic, &h.view(), &x.view()).unwrap().loss
    };
    for lambda in [0.0, 0.5, 2.0] {
        let h = &t * &theta.view().insert_axis(Axis(0));
        let mut d_h = infonce_with_grad(&critic, &h.view(), &x.view()).unwrap().d_reps;
        GradReverse { lambda }.backward(&mut d_h);
        let analytic = (&d_h * &t).sum_axis(Axis(0));
        for j in 0..2 {
            let step = 1e-5;
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            plus[j] += step;
            minus[j] -= step;
            let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * step);
            assert!(
                (analytic[j] - (-lambda * fd)).abs() <= 1e-5,
                "lambda {lambda} coord {j}"
            );
        }
    }
}

#[test]
fn nce_club_of_constant_critic_is_zero() {
    let critic = BilinearCritic::new(Array2::zeros((2, 3)), randn(2, 3, 1), 1.0).unwrap();
    let g = randn(32, 3, 2);
    let x = randn(32, 3, 3);
    let mut r = rng::stream(0, "t");
    assert_eq!(nce_club_shuffled(&critic, &g.view(), &x.view(), &mut r).unwrap(), 0.0);
}

#[test]
fn nce_club_shuffle_breaks_dependence() {
    let critic = BilinearCritic::random(4, 3, 3, 1.0, 21).unwrap();
    let g = randn(256, 3, 22);
    let x = &g + &randn(256, 3, 23);
    let mut r = rng::stream(1, "shuffles");
    let mut total = 0.0;
    let reps = 200;
    for _ in 0..reps {
        // jointly shuffled: the "joint" pairs are themselves unaligned
        let unaligned = shuffled_rows(&x.view(), &mut r);
        total += nce_club_shuffled(&critic, &g.view(), &unaligned.view(), &mut r).unwrap();
    }
    assert!((total / reps as f64).abs() <= 0.05, "mean {}", total / reps as f64);
}

#[test]
fn zero_learning_rate_leaves_critic_unchanged() {
    let critic = BilinearCritic::random(4, 1, 1, 1.0, 3).unwrap();
    let cfg = CriticTrainConfig {
        steps: 20,
        batch_size: 32,
        lr: 0.0,
    };
    let trained = train_critic(critic.clone(), &mut CorrelatedGaussian { corr: 0.8 }, cfg, 9).unwrap();
    assert_eq!(trained, critic);
}

#[test]
fn training_is_deterministic_per_seed() {
    let critic = BilinearCritic::random(4, 1, 1, 1.0, 3).unwrap();
    let cfg = CriticTrainConfig {
        steps: 50,
        batch_size: 32,
        lr: 1e-2,
    };
    let a = train_critic(critic.clone(), &mut CorrelatedGaussian { corr: 0.5 }, cfg, 4).unwrap();
    let b = train_critic(critic.clone(), &mut CorrelatedGaussian { corr: 0.5 }, cfg, 4).unwrap();
    let c = train_critic(critic, &mut CorrelatedGaussian { corr: 0.5 }, cfg, 5).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn independent_data_keeps_bound_near_zero() {
    let mut source = IndependentGaussian {
        rep_dim: 2,
        cond_dim: 2,
    };
    let init = BilinearCritic::random(4, 2, 2, 1.0, 30).unwrap();
    let b = 256;
    for steps in [250, 1000, 2000] {
        let critic = train_critic(
            init.clone(),
            &mut source,
            CriticTrainConfig {
                steps,
                batch_size: b,
                lr: 1e-2,
            },
            31,
        )
        .unwrap();
        let est = mean_estimate(&critic, &mut source, b, 20, 32).unwrap();
        assert!(
            (-0.05..=0.05).contains(&est.lower_bound_nats),
            "after {steps} steps: {}",
            est.lower_bound_nats
        );
    }
}

#[test]
fn tied_data_saturates_the_bound() {
    let b = 128;
    let mut source = TiedSphere { dim: 16 };
    let critic = train_critic(
        BilinearCritic::random(16, 16, 16, 1.0, 40).unwrap(),
        &mut source,
        CriticTrainConfig {
            steps: 5000,
            batch_size: b,
            lr: 1e-2,
        },
        41,
    )
    .unwrap();
    let est = mean_estimate(&critic, &mut source, b, 20, 42).unwrap();
    assert!(
        est.lower_bound_nats >= 0.9 * (b as f64).ln(),
        "{}",
        est.lower_bound_nats
    );
    assert!(est.lower_bound_nats <= (b as f64).ln());
    assert!(est.upper_bound_nats > 0.0);
}

#[test]
fn correlated_pair_upper_estimate_clears_true_mi() {
    let mut source = CorrelatedGaussian { corr: 0.8 };
    let critic = train_critic(
        BilinearCritic::random(4, 1, 1, 1.0, 50).unwrap(),
        &mut source,
        CriticTrainConfig {
            steps: 3000,
            batch_size: 256,
            lr: 1e-2,
        },
        51,
    )
    .unwrap();
    let est = mean_estimate(&critic, &mut source, 256, 50, 52).unwrap();
    let truth = source.true_mi();
    assert_abs_diff_eq!(truth, 0.5108256237659907, epsilon = 1e-12);
    assert!(est.upper_bound_nats >= truth - 0.1, "{est:?}");
    assert!(est.lower_bound_nats <= truth + 0.1, "{est:?}");
    let mut r = rng::stream(53, "t");
    let (g, x) = source.next_batch(&mut r, 256);
    assert!(nce_club_shuffled(&critic, &g.view(), &x.view(), &mut r).unwrap() > 0.0);
}

proptest! {
    #[test]
    fn lower_bound_never_exceeds_log_batch(
        seed in 0u64..1000,
        b in 2usize..40,
        scale in 0.01f64..30.0,
    ) {
        let critic = BilinearCritic::new(randn(3, 2, seed) * scale, randn(3, 2, seed + 1) * scale, 1.0).unwrap();
        let g = randn(b, 2, seed + 2);
        let out = infonce_loss(&critic, &g.view(), &randn(b, 2, seed + 3).view()).unwrap();
        prop_assert!(out.lower_bound <= (b as f64).ln() + 1e-12);
        let tied = infonce_loss(&critic, &g.view(), &g.view()).unwrap();
        prop_assert!(tied.lower_bound <= (b as f64).ln() + 1e-12);
    }
}
