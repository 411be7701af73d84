//! Finite-difference verification of every differentiable primitive, plus the
//! closed-form spot values and stability/determinism invariants the engine
//! guarantees. All checks run in 64-bit mode with h = 1e-5 and flag relative
//! errors above 1e-4.

use rdprobe_core::graph::{Graph, NodeId};
use rdprobe_core::{
    fd_compare, finite_difference_check, gradcheck::corrupt_gradient, softplus, FdSettings, Rng,
    Tensor,
};

const REPS: usize = 50;

fn rand_tensor(rng: &mut Rng, shape: Vec<usize>) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.uniform(-2.0, 2.0)).collect();
    Tensor::new(shape, data).unwrap()
}

/// Run one FD pass and assert it stays under tolerance.
fn check(graph: &mut Graph<f64>, loss: NodeId, what: &str) {
    let report = finite_difference_check(graph, loss, FdSettings::default()).unwrap();
    assert!(
        report.passed(),
        "{what}: max rel err {} (entry {:?})",
        report.max_rel_err(),
        report.failures().next()
    );
}

#[test]
fn fd_affine() {
    let mut rng = Rng::new(101);
    for _ in 0..REPS {
        let mut g: Graph<f64> = Graph::new();
        let x = g.param("x", rand_tensor(&mut rng, vec![3, 4])).unwrap();
        let w = g.param("w", rand_tensor(&mut rng, vec![4, 2])).unwrap();
        let b = g.param("b", rand_tensor(&mut rng, vec![2])).unwrap();
        let y = g.affine(x, w, b).unwrap();
        let s = g.sigmoid(y).unwrap();
        let loss = g.sum(s).unwrap();
        check(&mut g, loss, "affine");
    }
}

#[test]
fn fd_matmul() {
    let mut rng = Rng::new(102);
    for _ in 0..REPS {
        let mut g: Graph<f64> = Graph::new();
        let a = g.param("a", rand_tensor(&mut rng, vec![2, 3])).unwrap();
        let b = g.param("b", rand_tensor(&mut rng, vec![3, 4])).unwrap();
        let y = g.matmul(a, b).unwrap();
        let e = g.elu(y).unwrap();
        let loss = g.sum(e).unwrap();
        check(&mut g, loss, "matmul");
    }
}

#[test]
fn fd_conv2d() {
    let mut rng = Rng::new(103);
    for _ in 0..REPS {
        let mut g: Graph<f64> = Graph::new();
        let x = g.param("x", rand_tensor(&mut rng, vec![1, 2, 5, 5])).unwrap();
        let w = g.param("w", rand_tensor(&mut rng, vec![2, 2, 3, 3])).unwrap();
        let b = g.param("b", rand_tensor(&mut rng, vec![2])).unwrap();
        let y = g.conv2d(x, w, b).unwrap();
        let s = g.sigmoid(y).unwrap();
        let loss = g.sum(s).unwrap();
        check(&mut g, loss, "conv2d");
    }
}

#[test]
fn fd_maxpool() {
    // Pooling is piecewise linear; the fixed seed keeps window entries more
    // than 2h apart so central differences never straddle an argmax switch.
    let mut rng = Rng::new(104);
    for _ in 0..REPS {
        let mut g: Graph<f64> = Graph::new();
        let x = g.param("x", rand_tensor(&mut rng, vec![1, 1, 6, 6])).unwrap();
        let p = g.maxpool2x2(x).unwrap();
        let s = g.sigmoid(p).unwrap();
        let loss = g.sum(s).unwrap();
        check(&mut g, loss, "maxpool2x2");
    }
}

#[test]
fn fd_elementwise_unary() {
    // elu, sigmoid, exp, softplus on raw inputs; ln on shifted-positive inputs.
    let mut rng = Rng::new(105);
    for _ in 0..REPS {
        let mut g: Graph<f64> = Graph::new();
        let x = g.param("x", rand_tensor(&mut rng, vec![8])).unwrap();
        let e = g.elu(x).unwrap();
        let s = g.sigmoid(e).unwrap();
        let ex = g.exp(s).unwrap();
        let sp = g.softplus(ex).unwrap();
        let pos = g.add_scalar(sp, 0.5).unwrap();
        let l = g.ln(pos).unwrap();
        let loss = g.sum(l).unwrap();
        check(&mut g, loss, "unary chain");
    }
}

#[test]
fn fd_elementwise_binary_and_scalar() {
    let mut rng = Rng::new(106);
    for _ in 0..REPS {
        let mut g: Graph<f64> = Graph::new();
        let a = g.param("a", rand_tensor(&mut rng, vec![2, 3])).unwrap();
        let b = g.param("b", rand_tensor(&mut rng, vec![2, 3])).unwrap();
        let sum = g.add(a, b).unwrap();
        let diff = g.sub(sum, b).unwrap();
        let prod = g.mul(diff, a).unwrap();
        let sc = g.scale(prod, -1.7).unwrap();
        let sh = g.add_scalar(sc, 0.3).unwrap();
        let sg = g.sigmoid(sh).unwrap();
        let loss = g.mean(sg).unwrap();
        check(&mut g, loss, "binary/scalar chain");
    }
}

#[test]
fn fd_clamp_slice_reshape() {
    let mut rng = Rng::new(107);
    for _ in 0..REPS {
        let mut g: Graph<f64> = Graph::new();
        let x = g.param("x", rand_tensor(&mut rng, vec![3, 4])).unwrap();
        // Bounds beyond most mass; fixed seed keeps entries off the kinks.
        let c = g.clamp(x, -1.5, 1.5).unwrap();
        let left = g.slice_cols(c, 0, 2).unwrap();
        let right = g.slice_cols(c, 2, 4).unwrap();
        let prod = g.mul(left, right).unwrap();
        let flat = g.reshape(prod, &[6]).unwrap();
        let s = g.sigmoid(flat).unwrap();
        let loss = g.sum(s).unwrap();
        check(&mut g, loss, "clamp/slice/reshape");
    }
}

#[test]
fn fd_bernoulli_ce() {
    let mut rng = Rng::new(108);
    for _ in 0..REPS {
        let mut g: Graph<f64> = Graph::new();
        let logits = g.param("logits", rand_tensor(&mut rng, vec![3, 5])).unwrap();
        let tdata: Vec<f64> = (0..15).map(|_| if rng.next_f64() < 0.5 { 0.0 } else { 1.0 }).collect();
        let targets = g.constant(Tensor::new(vec![3, 5], tdata).unwrap()).unwrap();
        let ce = g.bernoulli_ce(logits, targets).unwrap();
        let loss = g.sum(ce).unwrap();
        check(&mut g, loss, "bernoulli_ce");
    }
}

#[test]
fn fd_softmax_ce() {
    let mut rng = Rng::new(109);
    for _ in 0..REPS {
        let mut g: Graph<f64> = Graph::new();
        let logits = g.param("logits", rand_tensor(&mut rng, vec![4, 6])).unwrap();
        let classes: Vec<usize> = (0..4).map(|_| rng.below(6)).collect();
        let ce = g.softmax_ce(logits, &classes).unwrap();
        let loss = g.mean(ce).unwrap();
        check(&mut g, loss, "softmax_ce");
    }
}

#[test]
fn fd_reparam_sample() {
    let mut rng = Rng::new(110);
    for _ in 0..REPS {
        let mut g: Graph<f64> = Graph::new();
        let mean = g.param("mean", rand_tensor(&mut rng, vec![2, 3])).unwrap();
        let log_std = g.param("log_std", rand_tensor(&mut rng, vec![2, 3])).unwrap();
        let eps = g.constant(rng.gaussian_tensor(vec![2, 3])).unwrap();
        let z = g.reparam_sample(mean, log_std, eps).unwrap();
        let s = g.sigmoid(z).unwrap();
        let loss = g.sum(s).unwrap();
        check(&mut g, loss, "reparam_sample");
    }
}

#[test]
fn fd_gmm_log_density() {
    let mut rng = Rng::new(111);
    for _ in 0..REPS {
        let mut g: Graph<f64> = Graph::new();
        let z = g.param("z", rand_tensor(&mut rng, vec![4, 2])).unwrap();
        let means = g.param("means", rand_tensor(&mut rng, vec![3, 2])).unwrap();
        let log_stds = g.param("log_stds", rand_tensor(&mut rng, vec![3, 2])).unwrap();
        let logits = g.param("logits", rand_tensor(&mut rng, vec![3])).unwrap();
        let ld = g.gmm_log_density(z, means, log_stds, logits).unwrap();
        let loss = g.mean(ld).unwrap();
        check(&mut g, loss, "gmm_log_density");
    }
}

fn rand_weight(rng: &mut Rng, shape: Vec<usize>) -> Tensor<f64> {
    // Init-scale weights keep the composite graph in its operating regime;
    // huge weights inflate the loss until FD rounding noise dominates.
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.uniform(-0.3, 0.3)).collect();
    Tensor::new(shape, data).unwrap()
}

#[test]
fn fd_full_mlp_encoder_graph() {
    // The miniature of the real training step: encoder MLP -> posterior split
    // -> clamp -> reparameterized sample -> decoder -> Bernoulli distortion,
    // plus the closed-form KL rate term, combined as D + beta R.
    let mut rng = Rng::new(112);
    for rep in 0..10 {
        let mut g: Graph<f64> = Graph::new();
        let x = g.constant(rand_tensor(&mut rng, vec![4, 12])).unwrap();
        let w1 = g.param("w1", rand_weight(&mut rng, vec![12, 16])).unwrap();
        let b1 = g.param("b1", rand_weight(&mut rng, vec![16])).unwrap();
        let w2 = g.param("w2", rand_weight(&mut rng, vec![16, 8])).unwrap();
        let b2 = g.param("b2", rand_weight(&mut rng, vec![8])).unwrap();
        let wd = g.param("wd", rand_weight(&mut rng, vec![4, 12])).unwrap();
        let bd = g.param("bd", rand_weight(&mut rng, vec![12])).unwrap();

        let h1 = g.affine(x, w1, b1).unwrap();
        let a1 = g.elu(h1).unwrap();
        let h2 = g.affine(a1, w2, b2).unwrap();
        let mean = g.slice_cols(h2, 0, 4).unwrap();
        let log_std_raw = g.slice_cols(h2, 4, 8).unwrap();
        let log_std = g.clamp(log_std_raw, -7.0, 7.0).unwrap();

        // KL(q || N(0, I)) per element: -ls + (e^{2ls} + mu^2 - 1) / 2.
        let two_ls = g.scale(log_std, 2.0).unwrap();
        let var = g.exp(two_ls).unwrap();
        let mu_sq = g.mul(mean, mean).unwrap();
        let t = g.add(var, mu_sq).unwrap();
        let t = g.add_scalar(t, -1.0).unwrap();
        let t = g.scale(t, 0.5).unwrap();
        let kl_elem = g.sub(t, log_std).unwrap();
        let rate = g.sum(kl_elem).unwrap();

        let eps = g.constant(rng.gaussian_tensor(vec![4, 4])).unwrap();
        let zs = g.reparam_sample(mean, log_std, eps).unwrap();
        let logits = g.affine(zs, wd, bd).unwrap();
        let tdata: Vec<f64> = (0..48).map(|_| if rng.next_f64() < 0.5 { 0.0 } else { 1.0 }).collect();
        let targets = g.constant(Tensor::new(vec![4, 12], tdata).unwrap()).unwrap();
        let ce = g.bernoulli_ce(logits, targets).unwrap();
        let distortion = g.sum(ce).unwrap();

        let beta_rate = g.scale(rate, 2.5).unwrap();
        let loss = g.add(distortion, beta_rate).unwrap();
        check(&mut g, loss, &format!("full encoder graph rep {rep}"));
    }
}

#[test]
fn fd_corrupted_rule_is_flagged() {
    let mut rng = Rng::new(113);
    let mut g: Graph<f64> = Graph::new();
    let w = g.param("w", rand_tensor(&mut rng, vec![2, 3])).unwrap();
    let s = g.sigmoid(w).unwrap();
    let loss = g.sum(s).unwrap();
    let good = g.backward(loss).unwrap();
    let bad = corrupt_gradient(&good, "w", 4, 0.1).unwrap();
    let report = fd_compare(&mut g, loss, &bad, FdSettings::default()).unwrap();
    assert!(!report.passed(), "corrupted gradient slipped through");
}

// ---- closed-form spot values ------------------------------------------------

#[test]
fn spot_values_match_closed_forms() {
    let mut g: Graph<f64> = Graph::new();

    // elu(-1) = 1/e - 1
    let x = g.constant(Tensor::scalar(-1.0)).unwrap();
    let e = g.elu(x).unwrap();
    assert!((g.value(e).item() - ((-1.0f64).exp() - 1.0)).abs() < 1e-12);
    assert!((g.value(e).item() + 0.632121).abs() < 1e-6);

    // bernoulli_ce(logit=2, target=1) = softplus(-2)
    let l = g.constant(Tensor::scalar(2.0)).unwrap();
    let t = g.constant(Tensor::scalar(1.0)).unwrap();
    let ce = g.bernoulli_ce(l, t).unwrap();
    assert!((g.value(ce).item() - softplus(-2.0f64)).abs() < 1e-12);
    assert!((g.value(ce).item() - 0.126928).abs() < 1e-6);

    // softmax_ce over 10 zero logits = ln 10 for any target
    let z = g.constant(Tensor::zeros(vec![1, 10])).unwrap();
    let sce = g.softmax_ce(z, &[7]).unwrap();
    assert!((g.value(sce).data()[0] - 2.302585).abs() < 1e-6);

    // reparam with zero mean and zero log-std is the identity on eps
    let mean = g.constant(Tensor::zeros(vec![1, 2])).unwrap();
    let ls = g.constant(Tensor::zeros(vec![1, 2])).unwrap();
    let eps = g.constant(Tensor::new(vec![1, 2], vec![0.5, -0.5]).unwrap()).unwrap();
    let zs = g.reparam_sample(mean, ls, eps).unwrap();
    assert_eq!(g.value(zs).data(), &[0.5, -0.5]);
}

#[test]
fn spot_gradients_match_closed_forms() {
    // loss = sum(w * w) at w = (1, 2) -> grad (2, 4)
    let mut g: Graph<f64> = Graph::new();
    let w = g.param("w", Tensor::new(vec![2], vec![1.0, 2.0]).unwrap()).unwrap();
    let sq = g.mul(w, w).unwrap();
    let loss = g.sum(sq).unwrap();
    let grads = g.backward(loss).unwrap();
    assert_eq!(grads.get("w").unwrap().data(), &[2.0, 4.0]);

    // d bernoulli_ce / dl at l=0, t=1 is sigmoid(0) - 1 = -0.5
    let mut g: Graph<f64> = Graph::new();
    let l = g.param("l", Tensor::scalar(0.0)).unwrap();
    let t = g.constant(Tensor::scalar(1.0)).unwrap();
    let ce = g.bernoulli_ce(l, t).unwrap();
    let loss = g.sum(ce).unwrap();
    let grads = g.backward(loss).unwrap();
    assert_eq!(grads.get("l").unwrap().item(), -0.5);
}

// ---- stability invariants -----------------------------------------------------

#[test]
fn cross_entropies_stable_at_extreme_logits() {
    // Finite at |logit| = 50 and within 1e-6 of the linear asymptotes.
    let mut g: Graph<f64> = Graph::new();
    let l = g.constant(Tensor::new(vec![4], vec![50.0, -50.0, 50.0, -50.0]).unwrap()).unwrap();
    let t = g.constant(Tensor::new(vec![4], vec![1.0, 1.0, 0.0, 0.0]).unwrap()).unwrap();
    let ce = g.bernoulli_ce(l, t).unwrap();
    let v = g.value(ce).data();
    assert!(v.iter().all(|x| x.is_finite()));
    assert!(v[0].abs() < 1e-6); // confident and right
    assert!((v[1] - 50.0).abs() < 1e-6); // confident and wrong
    assert!((v[2] - 50.0).abs() < 1e-6);
    assert!(v[3].abs() < 1e-6);

    let mut logits = vec![0.0f64; 10];
    logits[3] = 50.0;
    let lt = g.constant(Tensor::new(vec![2, 10], [logits.clone(), logits].concat()).unwrap()).unwrap();
    let sce = g.softmax_ce(lt, &[3, 4]).unwrap();
    let v = g.value(sce).data();
    assert!(v.iter().all(|x| x.is_finite()));
    assert!(v[0].abs() < 1e-6);
    assert!((v[1] - 50.0).abs() < 1e-6);

    // Same behavior in 32-bit mode.
    let mut g32: Graph<f32> = Graph::new();
    let l = g32.constant(Tensor::new(vec![2], vec![50.0f32, -50.0]).unwrap()).unwrap();
    let t = g32.constant(Tensor::new(vec![2], vec![1.0f32, 1.0]).unwrap()).unwrap();
    let ce = g32.bernoulli_ce(l, t).unwrap();
    let v = g32.value(ce).data();
    assert!(v.iter().all(|x| x.is_finite()));
    assert!(v[0].abs() < 1e-6);
    assert!((v[1] - 50.0).abs() < 1e-6);
}

#[test]
fn cross_entropy_non_negative() {
    let mut rng = Rng::new(114);
    for _ in 0..200 {
        let mut g: Graph<f64> = Graph::new();
        let ld: Vec<f64> = (0..12).map(|_| rng.uniform(-30.0, 30.0)).collect();
        let logits = g.constant(Tensor::new(vec![3, 4], ld).unwrap()).unwrap();
        let td: Vec<f64> = (0..12).map(|_| if rng.next_f64() < 0.5 { 0.0 } else { 1.0 }).collect();
        let targets = g.constant(Tensor::new(vec![3, 4], td).unwrap()).unwrap();
        let ce = g.bernoulli_ce(logits, targets).unwrap();
        assert!(g.value(ce).data().iter().all(|&v| v >= 0.0));

        let classes: Vec<usize> = (0..3).map(|_| rng.below(4)).collect();
        let sce = g.softmax_ce(logits, &classes).unwrap();
        assert!(g.value(sce).data().iter().all(|&v| v >= 0.0));
    }
}

// ---- determinism ---------------------------------------------------------------

#[test]
fn same_seed_bit_identical_values_and_gradients() {
    fn run(seed: u64) -> (Vec<u64>, Vec<u64>) {
        let mut rng = Rng::new(seed);
        let mut g: Graph<f64> = Graph::new();
        let x = g.constant(rand_tensor(&mut rng, vec![8, 10])).unwrap();
        let w = g.param("w", rand_tensor(&mut rng, vec![10, 6])).unwrap();
        let b = g.param("b", rand_tensor(&mut rng, vec![6])).unwrap();
        let h = g.affine(x, w, b).unwrap();
        let a = g.elu(h).unwrap();
        let eps = g.constant(rng.gaussian_tensor(vec![8, 6])).unwrap();
        let z = g.reparam_sample(a, a, eps).unwrap();
        let s = g.sigmoid(z).unwrap();
        let loss = g.mean(s).unwrap();
        let grads = g.backward(loss).unwrap();
        let vals = g.value(loss).data().iter().map(|v| v.to_bits()).collect();
        let gbits = grads
            .entries()
            .iter()
            .flat_map(|(_, t)| t.data().iter().map(|v| v.to_bits()))
            .collect();
        (vals, gbits)
    }
    let (v1, g1) = run(777);
    let (v2, g2) = run(777);
    assert_eq!(v1, v2);
    assert_eq!(g1, g2);
    let (v3, _) = run(778);
    assert_ne!(v1, v3);
}
