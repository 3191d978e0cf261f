mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use swat_core::analysis::{
    cost_model, density_check_qk, density_check_scores, evt_predicted_max, evt_sim, fit_linear,
    sink_report, sparsity_demo, DENSITY_THRESHOLDS,
};
use swat_core::attention::{Activation, BandMask, SlopeMode};
use swat_core::model::{build_model, Model, ModelConfig, PosMode};
use swat_core::tensor::{Tape, Tensor};

const EQ_SCORES: [f64; 5] = [1.5, 5.0, 2.4, 0.5, 1.3];

/// Expected maximum of L standard normals, by quadrature at high precision.
const EXACT_MAX: [(usize, f64); 5] = [
    (64, 2.34373346507944),
    (256, 2.8268632789392147),
    (1024, 3.2482396013754187),
    (4096, 3.626082177769182),
    (16384, 3.9713505702810585),
];

#[test]
fn five_score_example_rounds_and_obeys_ratio_law() {
    let d = sparsity_demo(&EQ_SCORES).unwrap();
    let rounded: Vec<f64> = d
        .weights
        .iter()
        .map(|w| (w * 100.0).round() / 100.0)
        .collect();
    assert_eq!(rounded, vec![0.03, 0.88, 0.07, 0.01, 0.02]);
    assert!(d.identity_holds);
    assert!(d.max_identity_error <= 1e-12);
}

#[test]
fn five_score_example_support_by_threshold() {
    let r = density_check_scores(&EQ_SCORES).unwrap();
    let at = |t: f64| DENSITY_THRESHOLDS.iter().position(|&x| x == t).unwrap();
    assert_eq!(r.softmax[0].support[at(0.01)], 4);
    assert_eq!(r.sigmoid[0].support[at(0.01)], 5);
    assert_eq!(r.softmax[0].support[at(0.05)], 2);
    assert_eq!(r.sigmoid[0].support[at(0.05)], 5);
    assert_eq!(r.sigmoid_wider_fraction, 1.0);
}

#[test]
fn sigmoid_rows_are_wider_on_outlier_scores() {
    let mut r = common::rng(4);
    let (n, d) = (24, 8);
    let q = Tensor::new(&[n, d], common::uniform_vec(&mut r, n * d, 1.0)).unwrap();
    let mut kd = common::uniform_vec(&mut r, n * d, 1.0);
    // Key 0 aligned with every query direction gives one outlier score per row.
    for c in 0..d {
        kd[c] = 6.0 * q.data()[(n - 1) * d + c];
    }
    let k = Tensor::new(&[n, d], kd).unwrap();
    let rep = density_check_qk(&q, &k, &BandMask::new(n, n).unwrap()).unwrap();
    for (t, &thr) in DENSITY_THRESHOLDS.iter().enumerate() {
        let (sig, soft) = (rep.mean_support_sigmoid[t], rep.mean_support_softmax[t]);
        // At 0.001 both can cover the whole row; above that sigmoid is strictly wider.
        assert!(
            if thr >= 0.01 { sig > soft } else { sig >= soft },
            "{thr}: {sig} vs {soft}"
        );
    }
}

#[test]
fn equal_scores_give_equal_sigmoid_weights() {
    let t = Tensor::new(&[1, 6], vec![0.4; 6]).unwrap().sigmoid();
    assert!(t.data().iter().all(|&w| w == t.data()[0]));
}

/// ∂σ(E_i)/∂E_j is exactly zero for i ≠ j, unlike softmax.
#[test]
fn sigmoid_weight_ignores_other_scores() {
    let scores = Tensor::new(&[1, 5], EQ_SCORES.to_vec()).unwrap();
    for i in 0..5 {
        for softmax in [false, true] {
            let mut tape = Tape::<f64>::new();
            let s = tape.param(scores.clone());
            let w = if softmax {
                tape.softmax(s, 1).unwrap()
            } else {
                tape.sigmoid(s)
            };
            let mut pick = vec![0.0; 5];
            pick[i] = 1.0;
            let pick = tape.constant(Tensor::new(&[1, 5], pick).unwrap());
            let y = tape.mul(w, pick).unwrap();
            let y = tape.sum(y);
            let g = tape.backward(y).unwrap().get_or_zeros(s, 5);
            for (j, gj) in g.iter().enumerate() {
                if j != i {
                    assert_eq!(*gj == 0.0, !softmax, "i={i} j={j} softmax={softmax}");
                }
            }
        }
    }
}

#[test]
fn quadrature_reproduces_frozen_maxima() {
    for (l, exact) in EXACT_MAX {
        let q = common::expected_max_normal(l);
        assert!((q - exact).abs() < 1e-6, "L={l}: {q} vs {exact}");
    }
}

#[test]
fn monte_carlo_matches_exact_maxima() {
    for (l, exact) in EXACT_MAX.iter().copied().take(3) {
        let trials = 10_000usize.max((1 << 22) / l);
        let s = evt_sim(l, 0.0, 1.0, trials, 1).unwrap();
        assert!(
            (s.empirical_mean_max - exact).abs() < 4.0 * s.std_error,
            "L={l}: {} ± {} vs {exact}",
            s.empirical_mean_max,
            s.std_error
        );
        assert_eq!(s.predicted, evt_predicted_max(l, 0.0, 1.0));
    }
}

#[test]
fn leading_order_formula_overestimates_at_1024() {
    let s = evt_sim(1024, 0.0, 1.0, 10_000, 2).unwrap();
    assert!((0.80..=1.00).contains(&s.ratio), "{}", s.ratio);
    let exact_ratio = EXACT_MAX[2].1 / evt_predicted_max(1024, 0.0, 1.0);
    assert!((exact_ratio - 0.87241).abs() < 1e-5);
}

#[test]
fn single_draw_mean_is_mu() {
    let s = evt_sim(1, 2.0, 0.5, 20_000, 3).unwrap();
    assert!((s.empirical_mean_max - 2.0).abs() < 4.0 * s.std_error);
}

#[test]
fn evt_rejects_bad_inputs() {
    assert!(evt_sim(8, 0.0, 1.0, 999, 0).is_err());
    assert!(evt_sim(8, 0.0, 0.0, 1000, 0).is_err());
    assert!(evt_sim(0, 0.0, 1.0, 1000, 0).is_err());
}

fn sink_model(activation: Activation) -> Model<f64> {
    build_model(&ModelConfig {
        vocab_size: 256,
        d_model: 32,
        n_heads: 4,
        n_layers: 2,
        window: 32,
        activation,
        pos_mode: if activation == Activation::Sigmoid {
            PosMode::Alirope
        } else {
            PosMode::Rope
        },
        slope_mode: if activation == Activation::Sigmoid {
            SlopeMode::Balanced
        } else {
            SlopeMode::None
        },
        seed: 1,
        ..ModelConfig::toy()
    })
    .unwrap()
}

fn random_sequences(seed: u64, count: usize, n: usize) -> Vec<Vec<usize>> {
    let mut r = common::rng(seed);
    (0..count)
        .map(|_| (0..n).map(|_| r.random_range(0..256)).collect())
        .collect()
}

#[test]
fn untrained_softmax_share_is_uniform() {
    let model = sink_model(Activation::Softmax);
    let seqs = random_sequences(5, 16, 32);
    let refs: Vec<&[usize]> = seqs.iter().map(|s| s.as_slice()).collect();
    let rep = sink_report(&model, &refs).unwrap();
    assert!(!rep.renormalized);
    assert_eq!(rep.uniform_share, 1.0 / 32.0);
    for l in &rep.layers {
        assert!(
            (l.first_token_share - rep.uniform_share).abs() <= 3.0 * l.share_std_error.max(1e-4),
            "layer {}: {} ± {}",
            l.layer,
            l.first_token_share,
            l.share_std_error
        );
        assert!(l.token0_variance >= 0.0 && l.other_variance >= 0.0);
    }
}

#[test]
fn sigmoid_share_is_renormalized() {
    // Rotary only: a distance bias would tilt the shares at initialization.
    let model: Model<f64> = build_model(&ModelConfig {
        pos_mode: PosMode::Rope,
        slope_mode: SlopeMode::None,
        ..sink_model(Activation::Sigmoid).config().clone()
    })
    .unwrap();
    let seqs = random_sequences(6, 8, 32);
    let refs: Vec<&[usize]> = seqs.iter().map(|s| s.as_slice()).collect();
    let rep = sink_report(&model, &refs).unwrap();
    assert!(rep.renormalized);
    for l in &rep.layers {
        // Raw sigmoid mass near 1/2 at init; the renormalized share near 1/N.
        assert!((l.first_token_raw_mass - 0.5).abs() < 0.05);
        assert!((l.first_token_share * 32.0 - 1.0).abs() < 0.1);
    }
}

#[test]
fn relabelling_tokens_keeps_shares() {
    let model = sink_model(Activation::Softmax);
    let seqs = random_sequences(7, 16, 32);
    let mut perm: Vec<usize> = (0..256).collect();
    perm.shuffle(&mut common::rng(8));
    let relabelled: Vec<Vec<usize>> = seqs
        .iter()
        .map(|s| s.iter().map(|&t| perm[t]).collect())
        .collect();
    let a_refs: Vec<&[usize]> = seqs.iter().map(|s| s.as_slice()).collect();
    let b_refs: Vec<&[usize]> = relabelled.iter().map(|s| s.as_slice()).collect();
    let a = sink_report(&model, &a_refs).unwrap();
    let b = sink_report(&model, &b_refs).unwrap();
    for (x, y) in a.layers.iter().zip(&b.layers) {
        let se = (x.share_std_error.powi(2) + y.share_std_error.powi(2)).sqrt();
        assert!((x.first_token_share - y.first_token_share).abs() <= 3.0 * se.max(1e-4));
    }
}

#[test]
fn short_sequences_are_a_data_error() {
    let model = sink_model(Activation::Softmax);
    let s = vec![1usize; 7];
    assert!(sink_report(&model, &[&s]).is_err());
}

#[test]
fn cost_examples() {
    let c = cost_model(8192, 512, 0.05).unwrap();
    assert!((c.predicted_cost - 4_404_019.2).abs() < 1e-6);
    assert_eq!(cost_model(1000, 10, 0.0).unwrap().predicted_cost, 10_000.0);
    assert!(cost_model(5, 10, 0.0).is_err());
    assert!(cost_model(10, 5, -0.1).is_err());
}

#[test]
fn exact_line_fits_perfectly() {
    let pts: Vec<(f64, f64)> = (1..=5)
        .map(|i| (i as f64 * 1000.0, 3.0 + 0.5 * i as f64 * 1000.0))
        .collect();
    let f = fit_linear(&pts).unwrap();
    assert!((f.slope - 0.5).abs() < 1e-12);
    assert!((f.intercept - 3.0).abs() < 1e-9);
    assert!((f.r2 - 1.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn ratio_law_on_random_rows(row in prop::collection::vec(-10.0f64..10.0, 1..30)) {
        let d = sparsity_demo(&row).unwrap();
        prop_assert!(d.identity_holds, "error {}", d.max_identity_error);
    }

    #[test]
    fn cost_is_linear_in_length(n in 1usize..100_000, w in 1usize..512, delta in 0.0f64..1.0) {
        prop_assume!(n >= w);
        let a = cost_model(n, w, delta).unwrap();
        let b = cost_model(2 * n, w, delta).unwrap();
        prop_assert!((b.predicted_cost - 2.0 * a.predicted_cost).abs() <= 1e-9 * b.predicted_cost);
    }
}
