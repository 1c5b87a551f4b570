use approx::assert_abs_diff_eq;
use crl_core::analytic::empirical::gaussian_cmi;
use crl_core::analytic::*;
use crl_core::checks::purification_instance;
use crl_core::rng;
use crl_core::scm::{compress_causal, sample_scalar_scm};
use proptest::prelude::*;

const MC_ROWS: usize = 400_000;

fn columns(p: &GaussianScmParams, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let d = sample_scalar_scm(p, MC_ROWS, seed).unwrap();
    (
        d.x.column(0).to_vec(),
        d.t.column(0).to_vec(),
        d.t.column(1).to_vec(),
        d.y.to_vec(),
    )
}

#[test]
fn closed_forms_match_monte_carlo() {
    let p = GaussianScmParams::new(1.3, -0.7, 0.9, 0.4, 1.5, 0.8, 1.2, 0.6).unwrap();
    let (z, tc, tn, y) = columns(&p, 11);
    assert_abs_diff_eq!(gaussian_cmi(&[&tc], &[&z], &[]), mi_tc_z(&p), epsilon = 0.01);
    assert_abs_diff_eq!(
        gaussian_cmi(&[&tn], &[&z], &[&tc]),
        mi_tnc_z_given_tc(&p),
        epsilon = 0.01
    );
    assert_abs_diff_eq!(
        gaussian_cmi(&[&tc], &[&y], &[&z]),
        utility(&p, 0.0).unwrap(),
        epsilon = 0.01
    );
    assert_abs_diff_eq!(
        gaussian_cmi(&[&tc, &tn], &[&z], &[]),
        representation_penalty(&p, RepresentationSpec::Naive).unwrap(),
        epsilon = 0.01
    );
}

#[test]
fn compressed_representation_matches_monte_carlo() {
    let p = GaussianScmParams::all_ones();
    let d = sample_scalar_scm(&p, MC_ROWS, 12).unwrap();
    let z = d.x.column(0).to_vec();
    let y = d.y.to_vec();
    for var_g in [0.3, 2.0] {
        let g = compress_causal(&d.t.slice(ndarray::s![.., 0..1]).to_owned(), var_g, 13).unwrap();
        let g = g.column(0).to_vec();
        assert_abs_diff_eq!(
            gaussian_cmi(&[&g], &[&y], &[&z]),
            utility(&p, var_g).unwrap(),
            epsilon = 0.01
        );
        assert_abs_diff_eq!(
            gaussian_cmi(&[&g], &[&z], &[]),
            penalty(&p, var_g).unwrap(),
            epsilon = 0.01
        );
    }
}

#[test]
fn naive_utility_equals_causal_utility() {
    // T_nC carries no information about Y beyond (T_C, Z)
    let p = GaussianScmParams::new(0.8, 1.4, 1.1, -0.5, 1.0, 0.7, 0.9, 1.3).unwrap();
    let (z, tc, tn, y) = columns(&p, 14);
    assert_abs_diff_eq!(gaussian_cmi(&[&tn], &[&y], &[&tc, &z]), 0.0, epsilon = 0.005);
    assert_eq!(
        representation_utility(&p, RepresentationSpec::Naive).unwrap(),
        representation_utility(&p, RepresentationSpec::Causal).unwrap()
    );
}

#[test]
fn purification_examples_hold_exactly() {
    let mut r = rng::stream(3, "test/purification");
    for _ in 0..50 {
        let (gyz, map, nbar) = purification_instance(&mut r, 6).unwrap();
        let coarse = gyz.coarsen_a(&map, nbar).unwrap();
        // Y depends on G only through the coarsening, so utility is preserved
        assert_abs_diff_eq!(
            discrete_mi(&gyz, MiQuery::AbGivenC),
            discrete_mi(&coarse, MiQuery::AbGivenC),
            epsilon = 1e-12
        );
        let pen = |j: &DiscreteJoint| discrete_mi(&j.reorder([0, 2, 1]).unwrap(), MiQuery::Ab);
        assert!(pen(&coarse) <= pen(&gyz) + 1e-12);
    }
}

fn params() -> impl Strategy<Value = GaussianScmParams> {
    let coef = prop_oneof![-3.0f64..-0.1, 0.1f64..3.0];
    let var = 0.1f64..3.0;
    (
        coef.clone(),
        coef.clone(),
        coef.clone(),
        coef,
        var.clone(),
        var.clone(),
        var.clone(),
        var,
    )
        .prop_map(|(a, b, r, d, vz, vc, vn, vy)| GaussianScmParams::new(a, b, r, d, vz, vc, vn, vy).unwrap())
}

fn ratio(p: &GaussianScmParams, v: f64) -> f64 {
    (utility(p, 0.0).unwrap() - utility(p, v).unwrap()) / (penalty(p, 0.0).unwrap() - penalty(p, v).unwrap())
}

proptest! {
    #[test]
    fn causal_beats_naive_by_conditional_penalty(p in params(), lambda in 0.01f64..10.0) {
        let gap = j_value(&p, RepresentationSpec::Causal, lambda).unwrap()
            - j_value(&p, RepresentationSpec::Naive, lambda).unwrap();
        prop_assert!((gap - lambda * mi_tnc_z_given_tc(&p)).abs() <= 1e-12);
        prop_assert!(gap > 0.0);
    }

    #[test]
    fn naive_penalty_obeys_chain_rule(p in params()) {
        let naive = representation_penalty(&p, RepresentationSpec::Naive).unwrap();
        prop_assert!((naive - mi_tc_z(&p) - mi_tnc_z_given_tc(&p)).abs() <= 1e-12);
    }

    #[test]
    fn utility_and_penalty_shrink_with_compression(p in params(), v in 0.0f64..100.0, dv in 1e-3f64..100.0) {
        prop_assert!(utility(&p, v + dv).unwrap() < utility(&p, v).unwrap());
        prop_assert!(penalty(&p, v + dv).unwrap() < penalty(&p, v).unwrap());
        prop_assert!(utility(&p, v).unwrap() >= 0.0 && penalty(&p, v).unwrap() >= 0.0);
    }

    #[test]
    fn compression_wins_exactly_above_its_threshold(p in params(), v in 1e-3f64..1e3, lambda in 0.0f64..20.0) {
        // J(v) - J(0) = lambda * dP - dU changes sign at dU/dP
        let threshold = ratio(&p, v);
        prop_assume!((lambda - threshold).abs() > 1e-6 * threshold.max(1.0));
        let wins = j_value(&p, RepresentationSpec::CompressedCausal { var_g: v }, lambda).unwrap()
            > j_value(&p, RepresentationSpec::Causal, lambda).unwrap();
        prop_assert_eq!(wins, lambda > threshold);
    }

    #[test]
    fn lambda_crit_is_the_small_compression_limit(p in params()) {
        let lc = lambda_crit(&p).unwrap();
        prop_assert!((ratio(&p, 1e-6 * p.var_c) - lc).abs() <= 1e-4 * lc);
        prop_assert!(ratio(&p, 10.0 * p.var_c) <= lc * (1.0 + 1e-12));
    }

    #[test]
    fn j_and_l_gamma_rank_alike(
        p in params(),
        lambda in 0.0f64..50.0,
        vs in prop::collection::vec(1e-3f64..1e3, 0..6),
    ) {
        let mut menu = vec![RepresentationSpec::Naive, RepresentationSpec::Causal];
        menu.extend(vs.into_iter().map(|var_g| RepresentationSpec::CompressedCausal { var_g }));
        let gamma = gamma_of_lambda(lambda).unwrap();
        prop_assert_eq!(rank_by_j(&p, &menu, lambda).unwrap(), rank_by_l_gamma(&p, &menu, gamma).unwrap());
        prop_assert!((lambda_of_gamma(gamma).unwrap() - lambda).abs() <= 1e-9 * lambda.max(1.0));
    }

    #[test]
    fn l_gamma_is_scaled_negative_j(p in params(), lambda in 0.0f64..50.0, v in 0.0f64..10.0) {
        let rep = RepresentationSpec::CompressedCausal { var_g: v };
        let gamma = gamma_of_lambda(lambda).unwrap();
        let l = l_gamma(&p, rep, gamma).unwrap();
        let j = j_value(&p, rep, lambda).unwrap();
        prop_assert!((l + gamma * j).abs() <= 1e-12 * (1.0 + j.abs()));
    }

    #[test]
    fn purification_gain_equals_lost_penalty(seed in 0u64..10_000, lambda in 0.0f64..5.0) {
        let mut r = rng::stream(seed, "test/purification-prop");
        let (gyz, map, nbar) = purification_instance(&mut r, 8).unwrap();
        let j = |t: &DiscreteJoint| {
            discrete_mi(t, MiQuery::AbGivenC) - lambda * discrete_mi(&t.reorder([0, 2, 1]).unwrap(), MiQuery::Ab)
        };
        let gain = j(&gyz.coarsen_a(&map, nbar).unwrap()) - j(&gyz);
        // I(G;Z|Gbar) = I(G;Z) - I(Gbar;Z) because Gbar is a function of G
        let i_gz = discrete_mi(&gyz.reorder([0, 2, 1]).unwrap(), MiQuery::Ab);
        let i_bz = discrete_mi(&gyz.coarsen_a(&map, nbar).unwrap().reorder([0, 2, 1]).unwrap(), MiQuery::Ab);
        prop_assert!((gain - lambda * (i_gz - i_bz)).abs() <= 1e-10);
        prop_assert!(gain >= -1e-12);
    }
}
