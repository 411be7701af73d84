//! Architecture-level checks: initialization invariants, forward-pass
//! identities with closed forms, gradient verification through every model
//! graph, and weight-file round trips.

use rdprobe_core::{
    finite_difference_check, fl, Error, FdSettings, Graph, Real, Rng, Tensor,
};
use rdprobe_models::{
    bind, classify_logits, classify_nodes, conv_classify_nodes, conv_trunk_nodes, decode_logits,
    decode_nodes, encode_nodes, encode_posterior, init_classifier, init_conv_classifier,
    init_decoder, init_encoder, init_marginal, load_params_matching, load_raw,
    marginal_log_density, marginal_log_density_node, save_params, ClassifierSpec,
    ConvClassifierSpec, DecoderSpec, EncoderSpec, MarginalSpec, ParamSet, RunMode, TrunkSpec,
};

fn rand_images<F: Real>(rng: &mut Rng, n: usize, d: usize) -> Tensor<F> {
    let data: Vec<F> = (0..n * d).map(|_| fl(rng.next_f64())).collect();
    Tensor::new(vec![n, d], data).unwrap()
}

fn zeroed<F: Real>(params: &ParamSet<F>) -> ParamSet<F> {
    let entries = params
        .entries()
        .iter()
        .map(|(n, t)| (n.clone(), Tensor::zeros(t.shape().to_vec())))
        .collect();
    ParamSet::new(entries, params.spec_hash(), params.init_seed()).unwrap()
}

// ---- initialization ----------------------------------------------------------

#[test]
fn init_is_deterministic_and_seed_sensitive() {
    let spec = EncoderSpec::default_mlp(784, 16);
    let a: ParamSet<f32> = init_encoder(&spec, 7).unwrap();
    let b: ParamSet<f32> = init_encoder(&spec, 7).unwrap();
    let c: ParamSet<f32> = init_encoder(&spec, 8).unwrap();
    for ((na, ta), (nb, tb)) in a.entries().iter().zip(b.entries()) {
        assert_eq!(na, nb);
        let bits_a: Vec<u32> = ta.data().iter().map(|v| v.to_bits()).collect();
        let bits_b: Vec<u32> = tb.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits_a, bits_b);
    }
    assert_ne!(
        a.get("enc.w0").unwrap().data(),
        c.get("enc.w0").unwrap().data(),
        "different seeds must give different weights"
    );
}

#[test]
fn init_respects_glorot_bounds_and_zero_biases() {
    let spec = EncoderSpec::default_mlp(784, 16);
    let params: ParamSet<f64> = init_encoder(&spec, 3).unwrap();
    let bound0 = (6.0f64 / (784.0 + 512.0)).sqrt();
    let w0 = params.get("enc.w0").unwrap();
    assert!(w0.data().iter().all(|&v| v.abs() <= bound0));
    // Values should actually spread over the interval, not cluster at zero.
    assert!(w0.data().iter().any(|&v| v.abs() > 0.5 * bound0));
    for name in ["enc.b0", "enc.b1", "enc.head.b0"] {
        assert!(params.get(name).unwrap().data().iter().all(|&v| v == 0.0), "{name} must start at zero");
    }
}

#[test]
fn classifier_head_starts_all_zero() {
    let spec = ClassifierSpec::probe(16, 10);
    let params: ParamSet<f32> = init_classifier(&spec, 11).unwrap();
    assert!(params.get("cls.head.w0").unwrap().data().iter().all(|&v| v == 0.0));
    assert!(params.get("cls.head.b0").unwrap().data().iter().all(|&v| v == 0.0));
    // Hidden layers must not be zero, or the probe could never train.
    assert!(params.get("cls.w0").unwrap().data().iter().any(|&v| v != 0.0));
}

#[test]
fn duplicate_parameter_names_are_rejected() {
    let t = Tensor::<f32>::zeros(vec![2]);
    let err = ParamSet::new(
        vec![("a".to_string(), t.clone()), ("a".to_string(), t)],
        0,
        0,
    )
    .unwrap_err();
    assert!(matches!(err, Error::InvalidArg(_)));
}

// ---- encoder forward ---------------------------------------------------------

#[test]
fn zero_encoder_gives_exactly_standard_normal_posterior() {
    let spec = EncoderSpec::default_mlp(784, 16);
    let params = zeroed(&init_encoder::<f64>(&spec, 1).unwrap());
    let mut rng = Rng::new(5);
    let x = rand_images(&mut rng, 4, 784);
    let (mean, log_std) = encode_posterior(&params, &spec, &x).unwrap();
    assert_eq!(mean.shape(), &[4, 16]);
    assert_eq!(log_std.shape(), &[4, 16]);
    assert!(mean.data().iter().all(|&v| v == 0.0), "zero params must give zero mean");
    assert!(log_std.data().iter().all(|&v| v == 0.0), "zero params must give unit std");
}

#[test]
fn log_std_is_clamped_to_seven() {
    let spec = EncoderSpec {
        trunk: TrunkSpec::Mlp { input_dim: 4, hidden: vec![] },
        latent_dim: 2,
    };
    let mut params: ParamSet<f64> = init_encoder(&spec, 1).unwrap();
    // Huge head bias pushes raw log-std far outside the clamp window.
    for (name, t) in params.entries_mut() {
        if name == "enc.head.b0" {
            *t = Tensor::from_f64s(vec![4], &[0.0, 0.0, 50.0, -50.0]).unwrap();
        }
        if name == "enc.head.w0" {
            *t = Tensor::zeros(vec![4, 4]);
        }
    }
    let x = Tensor::<f64>::zeros(vec![1, 4]);
    let (_, log_std) = encode_posterior(&params, &spec, &x).unwrap();
    assert_eq!(log_std.data(), &[7.0, -7.0]);
}

#[test]
fn conv_encoder_shapes_and_determinism() {
    let spec = EncoderSpec {
        trunk: TrunkSpec::Conv {
            side: 8,
            in_channels: 1,
            layers: 2,
            depth: 3,
            pool_after: vec![2],
            dropout_after: vec![],
            dropout_rate: 0.0,
        },
        latent_dim: 5,
    };
    assert_eq!(spec.trunk.output_dim(), 3 * 4 * 4);
    let params: ParamSet<f64> = init_encoder(&spec, 2).unwrap();
    let mut rng = Rng::new(9);
    let x = rand_images(&mut rng, 3, 64);
    let (m1, s1) = encode_posterior(&params, &spec, &x).unwrap();
    let (m2, s2) = encode_posterior(&params, &spec, &x).unwrap();
    assert_eq!(m1.shape(), &[3, 5]);
    assert_eq!(m1.data(), m2.data());
    assert_eq!(s1.data(), s2.data());
}

// ---- decoder and classifier forward -------------------------------------------

#[test]
fn zero_decoder_emits_exactly_zero_logits() {
    let spec = DecoderSpec::default_mlp(16, 784);
    let params = zeroed(&init_decoder::<f64>(&spec, 1).unwrap());
    let mut rng = Rng::new(2);
    let z: Vec<f64> = (0..2 * 16).map(|_| rng.next_gaussian()).collect();
    let z = Tensor::from_f64s(vec![2, 16], &z).unwrap();
    let logits = decode_logits(&params, &spec, &z).unwrap();
    assert_eq!(logits.shape(), &[2, 784]);
    assert!(logits.data().iter().all(|&v| v == 0.0));
}

#[test]
fn fresh_classifier_cross_entropy_is_exactly_ln_k() {
    let spec = ClassifierSpec::probe(16, 10);
    let params: ParamSet<f64> = init_classifier(&spec, 4).unwrap();
    let mut g = Graph::new();
    let bound = bind(&mut g, &params).unwrap();
    let mut rng = Rng::new(3);
    let x = g.constant(rand_images(&mut rng, 6, 16)).unwrap();
    let logits = classify_nodes(&mut g, &bound, &spec, x).unwrap();
    assert!(g.value(logits).data().iter().all(|&v| v == 0.0));
    let ce = g.softmax_ce(logits, &[0, 3, 9, 1, 2, 7]).unwrap();
    // Bit-exact per example: uniform logits make each cross-entropy ln K.
    for &v in g.value(ce).data() {
        assert_eq!(v, 10.0f64.ln());
    }
    let loss = g.mean(ce).unwrap();
    assert!((g.value(loss).item() - 10.0f64.ln()).abs() < 1e-14);
}

// ---- marginal ----------------------------------------------------------------

#[test]
fn fixed_marginal_at_origin_matches_minus_ln_two_pi() {
    let spec = MarginalSpec::FixedStandard;
    let params: ParamSet<f64> = init_marginal(&spec, 2, 0).unwrap();
    let z = Tensor::<f64>::zeros(vec![1, 2]);
    let ld = marginal_log_density(&spec, &params, 2, &z).unwrap();
    assert!((ld[0] - (-1.8378770664093453)).abs() < 1e-15);
}

#[test]
fn one_component_mixture_at_origin_equals_fixed_standard() {
    let fixed = MarginalSpec::FixedStandard;
    let mix = MarginalSpec::LearnedMixture { components: 1 };
    let fixed_params: ParamSet<f64> = init_marginal(&fixed, 3, 0).unwrap();
    let mut mix_params: ParamSet<f64> = init_marginal(&mix, 3, 0).unwrap();
    for (name, t) in mix_params.entries_mut() {
        if name == "marg.means" {
            *t = Tensor::zeros(vec![1, 3]);
        }
    }
    let mut rng = Rng::new(17);
    let z: Vec<f64> = (0..5 * 3).map(|_| rng.next_gaussian()).collect();
    let z = Tensor::from_f64s(vec![5, 3], &z).unwrap();
    let a = marginal_log_density(&fixed, &fixed_params, 3, &z).unwrap();
    let b = marginal_log_density(&mix, &mix_params, 3, &z).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12, "fixed {x} vs mixture {y}");
    }
}

#[test]
fn mixture_density_is_component_permutation_invariant() {
    let spec = MarginalSpec::LearnedMixture { components: 3 };
    let params: ParamSet<f64> = init_marginal(&spec, 2, 21).unwrap();
    let permuted = {
        let mut p = params.clone();
        for (name, t) in p.entries_mut() {
            match name.as_str() {
                "marg.means" | "marg.log_stds" => {
                    let rows: Vec<&[f64]> = (0..3).map(|j| t.row(j)).collect();
                    let data: Vec<f64> =
                        [rows[2], rows[0], rows[1]].concat();
                    *t = Tensor::new(vec![3, 2], data).unwrap();
                }
                "marg.logits" => {
                    let d = t.data();
                    *t = Tensor::from_f64s(vec![3], &[d[2], d[0], d[1]]).unwrap();
                }
                _ => {}
            }
        }
        p
    };
    let mut rng = Rng::new(8);
    let z: Vec<f64> = (0..4 * 2).map(|_| rng.next_gaussian()).collect();
    let z = Tensor::from_f64s(vec![4, 2], &z).unwrap();
    let a = marginal_log_density(&spec, &params, 2, &z).unwrap();
    let b = marginal_log_density(&spec, &permuted, 2, &z).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn graph_marginal_node_matches_value_level_density() {
    for spec in [MarginalSpec::FixedStandard, MarginalSpec::LearnedMixture { components: 4 }] {
        let params: ParamSet<f64> = init_marginal(&spec, 3, 33).unwrap();
        let mut rng = Rng::new(12);
        let z: Vec<f64> = (0..6 * 3).map(|_| rng.next_gaussian()).collect();
        let z = Tensor::from_f64s(vec![6, 3], &z).unwrap();
        let want = marginal_log_density(&spec, &params, 3, &z).unwrap();

        let mut g = Graph::new();
        let bound = bind(&mut g, &params).unwrap();
        let zn = g.constant(z).unwrap();
        let node = marginal_log_density_node(&mut g, Some(&bound), &spec, 3, zn).unwrap();
        let got = g.value(node).data();
        for (w, v) in want.iter().zip(got) {
            assert!((w - v).abs() < 1e-12, "graph {v} vs direct {w}");
        }
    }
}

// ---- dropout ------------------------------------------------------------------

fn small_conv_spec() -> ConvClassifierSpec {
    ConvClassifierSpec {
        conv: TrunkSpec::Conv {
            side: 8,
            in_channels: 1,
            layers: 2,
            depth: 2,
            pool_after: vec![1],
            dropout_after: vec![2],
            dropout_rate: 0.3,
        },
        fc_hidden: vec![10],
        class_count: 4,
    }
}

#[test]
fn dropout_fires_in_training_and_never_in_eval() {
    let spec = small_conv_spec();
    let mut params: ParamSet<f64> = init_conv_classifier(&spec, 5).unwrap();
    // The class head starts at zero, which would hide dropout behind
    // constant-zero logits; give it generic values for this check.
    let mut head_rng = Rng::new(100);
    for (name, t) in params.entries_mut() {
        if name == "cls.head.w0" {
            let d: Vec<f64> = (0..t.len()).map(|_| head_rng.next_gaussian() * 0.2).collect();
            *t = Tensor::new(t.shape().to_vec(), d).unwrap();
        }
    }
    let mut rng = Rng::new(6);
    let x = rand_images::<f64>(&mut rng, 2, 64);

    let eval_logits = |x: &Tensor<f64>| {
        let mut g = Graph::new();
        let bound = bind(&mut g, &params).unwrap();
        let xn = g.constant(x.clone()).unwrap();
        let l = conv_classify_nodes(&mut g, &bound, &spec, xn, &mut RunMode::Eval).unwrap();
        g.value(l).clone()
    };
    let e1 = eval_logits(&x);
    let e2 = eval_logits(&x);
    assert_eq!(e1.data(), e2.data(), "eval passes must be deterministic");

    let mut mask_rng = Rng::new(77);
    let mut g = Graph::new();
    let bound = bind(&mut g, &params).unwrap();
    let xn = g.constant(x.clone()).unwrap();
    let l =
        conv_classify_nodes(&mut g, &bound, &spec, xn, &mut RunMode::Train { rng: &mut mask_rng })
            .unwrap();
    assert_ne!(g.value(l).data(), e1.data(), "training pass must apply dropout masks");
}

#[test]
fn conv_trunk_features_ignore_dropout_config() {
    let spec = small_conv_spec();
    let params: ParamSet<f64> = init_conv_classifier(&spec, 5).unwrap();
    let mut rng = Rng::new(6);
    let x = rand_images::<f64>(&mut rng, 2, 64);
    let feats = |_: ()| {
        let mut g = Graph::new();
        let bound = bind(&mut g, &params).unwrap();
        let xn = g.constant(x.clone()).unwrap();
        let f = conv_trunk_nodes(&mut g, &bound, &spec, xn).unwrap();
        g.value(f).clone()
    };
    let f1 = feats(());
    assert_eq!(f1.shape(), &[2, 2 * 4 * 4]);
    assert_eq!(f1.data(), feats(()).data());
}

// ---- gradient checks through full model graphs ---------------------------------

#[test]
fn fd_mlp_encoder_decoder_loss() {
    let enc_spec = EncoderSpec {
        trunk: TrunkSpec::Mlp { input_dim: 12, hidden: vec![8] },
        latent_dim: 3,
    };
    let dec_spec = DecoderSpec { latent_dim: 3, hidden: vec![8], output_dim: 12 };
    let enc: ParamSet<f64> = init_encoder(&enc_spec, 41).unwrap();
    let dec: ParamSet<f64> = init_decoder(&dec_spec, 42).unwrap();
    let joint = enc.merged(dec).unwrap();

    let mut rng = Rng::new(40);
    let mut g = Graph::new();
    let bound = bind(&mut g, &joint).unwrap();
    let x = g.constant(rand_images::<f64>(&mut rng, 4, 12)).unwrap();
    let post = encode_nodes(&mut g, &bound, &enc_spec, x).unwrap();
    let eps: Vec<f64> = (0..4 * 3).map(|_| rng.next_gaussian()).collect();
    let eps = g.constant(Tensor::from_f64s(vec![4, 3], &eps).unwrap()).unwrap();
    let z = g.reparam_sample(post.mean, post.log_std, eps).unwrap();
    let logits = decode_nodes(&mut g, &bound, &dec_spec, z).unwrap();
    let targets = {
        let t: Vec<f64> = (0..4 * 12).map(|_| if rng.next_f64() < 0.5 { 1.0 } else { 0.0 }).collect();
        g.constant(Tensor::from_f64s(vec![4, 12], &t).unwrap()).unwrap()
    };
    let ce = g.bernoulli_ce(logits, targets).unwrap();
    let loss = g.mean(ce).unwrap();

    let report = finite_difference_check(&mut g, loss, FdSettings::default()).unwrap();
    assert!(report.passed(), "worst rel err {:?}", report.max_rel_err());
}

#[test]
fn fd_conv_classifier_loss_with_dropout_recorded() {
    let spec = small_conv_spec();
    let params: ParamSet<f64> = init_conv_classifier(&spec, 19).unwrap();
    let mut rng = Rng::new(18);
    let mut mask_rng = Rng::new(20);
    let mut g = Graph::new();
    let bound = bind(&mut g, &params).unwrap();
    let x = g.constant(rand_images::<f64>(&mut rng, 3, 64)).unwrap();
    let logits =
        conv_classify_nodes(&mut g, &bound, &spec, x, &mut RunMode::Train { rng: &mut mask_rng })
            .unwrap();
    let ce = g.softmax_ce(logits, &[1, 0, 3]).unwrap();
    let loss = g.mean(ce).unwrap();
    let report = finite_difference_check(&mut g, loss, FdSettings::default()).unwrap();
    assert!(report.passed(), "worst rel err {:?}", report.max_rel_err());
}

#[test]
fn fd_mixture_marginal_rate_term() {
    let spec = MarginalSpec::LearnedMixture { components: 3 };
    let params: ParamSet<f64> = init_marginal(&spec, 2, 55).unwrap();
    let mut rng = Rng::new(54);
    let mut g = Graph::new();
    let bound = bind(&mut g, &params).unwrap();
    let z: Vec<f64> = (0..5 * 2).map(|_| rng.next_gaussian()).collect();
    let z = g.constant(Tensor::from_f64s(vec![5, 2], &z).unwrap()).unwrap();
    let ld = marginal_log_density_node(&mut g, Some(&bound), &spec, 2, z).unwrap();
    let neg = g.scale(ld, -1.0).unwrap();
    let loss = g.mean(neg).unwrap();
    let report = finite_difference_check(&mut g, loss, FdSettings::default()).unwrap();
    assert!(report.passed(), "worst rel err {:?}", report.max_rel_err());
}

// ---- weight files --------------------------------------------------------------

#[test]
fn weight_file_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("weights.ipw");
    let spec = EncoderSpec {
        trunk: TrunkSpec::Mlp { input_dim: 20, hidden: vec![7] },
        latent_dim: 4,
    };
    let params: ParamSet<f32> = init_encoder(&spec, 99).unwrap();
    save_params(&params, &path).unwrap();
    let loaded = load_params_matching(&path, &init_encoder::<f32>(&spec, 0).unwrap()).unwrap();
    assert_eq!(loaded.len(), params.len());
    for ((na, ta), (nb, tb)) in params.entries().iter().zip(loaded.entries()) {
        assert_eq!(na, nb);
        assert_eq!(ta.shape(), tb.shape());
        let bits_a: Vec<u32> = ta.data().iter().map(|v| v.to_bits()).collect();
        let bits_b: Vec<u32> = tb.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits_a, bits_b, "tensor {na} must round-trip bit-exactly");
    }
}

#[test]
fn weight_file_header_layout_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.ipw");
    let params = ParamSet::new(
        vec![("t".to_string(), Tensor::<f32>::from_f64s(vec![2], &[1.0, 2.0]).unwrap())],
        0,
        0,
    )
    .unwrap();
    save_params(&params, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    let mut want = Vec::new();
    want.extend_from_slice(b"IPW1");
    want.extend_from_slice(&1u32.to_le_bytes());
    want.extend_from_slice(&1u32.to_le_bytes());
    want.extend_from_slice(b"t");
    want.extend_from_slice(&1u32.to_le_bytes());
    want.extend_from_slice(&2u32.to_le_bytes());
    want.extend_from_slice(&1f32.to_le_bytes());
    want.extend_from_slice(&2f32.to_le_bytes());
    assert_eq!(bytes, want);
}

#[test]
fn loading_against_wrong_architecture_names_the_tensor() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("weights.ipw");
    let small = EncoderSpec {
        trunk: TrunkSpec::Mlp { input_dim: 10, hidden: vec![4] },
        latent_dim: 2,
    };
    let big = EncoderSpec {
        trunk: TrunkSpec::Mlp { input_dim: 12, hidden: vec![4] },
        latent_dim: 2,
    };
    save_params(&init_encoder::<f32>(&small, 1).unwrap(), &path).unwrap();
    let err = load_params_matching(&path, &init_encoder::<f32>(&big, 1).unwrap()).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("shape mismatch"), "got: {msg}");
    assert!(msg.contains("enc.w0"), "error must name the offending tensor, got: {msg}");
}

#[test]
fn truncated_weight_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("weights.ipw");
    let spec = ClassifierSpec::probe(6, 3);
    save_params(&init_classifier::<f32>(&spec, 2).unwrap(), &path).unwrap();
    let full = std::fs::read(&path).unwrap();
    std::fs::write(&path, &full[..full.len() - 5]).unwrap();
    let err = load_raw(&path).unwrap_err();
    assert!(err.to_string().contains("truncated"), "got: {err}");
}

#[test]
fn bad_magic_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("weights.ipw");
    std::fs::write(&path, b"NOPE\x00\x00\x00\x00").unwrap();
    let err = load_raw(&path).unwrap_err();
    assert!(err.to_string().contains("magic"), "got: {err}");
}

// ---- value-level helpers --------------------------------------------------------

#[test]
fn classify_logits_matches_graph_path() {
    let spec = ClassifierSpec::probe(8, 5);
    let mut params: ParamSet<f64> = init_classifier(&spec, 61).unwrap();
    // Give the head nonzero values so the check is not trivially zero.
    for (name, t) in params.entries_mut() {
        if name == "cls.head.w0" {
            let mut rng = Rng::new(1);
            let d: Vec<f64> = (0..t.len()).map(|_| rng.next_gaussian() * 0.1).collect();
            *t = Tensor::new(t.shape().to_vec(), d).unwrap();
        }
    }
    let mut rng = Rng::new(62);
    let x = rand_images::<f64>(&mut rng, 3, 8);
    let direct = classify_logits(&params, &spec, &x).unwrap();

    let mut g = Graph::new();
    let bound = bind(&mut g, &params).unwrap();
    let xn = g.constant(x).unwrap();
    let node = classify_nodes(&mut g, &bound, &spec, xn).unwrap();
    assert_eq!(direct.data(), g.value(node).data());
}
