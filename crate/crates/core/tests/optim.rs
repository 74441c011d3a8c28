mod common;

use common::*;
use ndarray::{array, Array2};
use pathgeo::data::gen_blobs;
use pathgeo::init::init_gaussian;
use pathgeo::invariance::{check_function_equal, random_rescaling, rescale_feedforward, sgd_witness};
use pathgeo::netgraph::{build_layered, build_layered_with_bias, forward};
use pathgeo::optim::{
    ddp_norm_forward_backward, ddp_sgd_step, diag_ng_step, fisher_diag, fisher_diag_mc, loss_and_grad, loss_gradient, path_sgd_step,
    sgd_step, Batch, Labels, LossKind, Method, Optimizer, OptimizerConfig,
};
use pathgeo::pathnorm::{ddp_kappa, Stat};
use pathgeo::{Error, NetworkGraph, ParamVector};
use rand::Rng;

fn scores_of(net: &NetworkGraph, theta: &[f64], x: &Array2<f64>) -> Array2<f64> {
    forward(net, theta, x.view()).unwrap().outputs(net)
}

#[test]
fn loss_gradients_match_finite_differences() {
    let mut r = rng(7);
    let kinds = [LossKind::CrossEntropy, LossKind::TruncatedCrossEntropy, LossKind::Squared, LossKind::Margin { gamma: 0.5 }];
    let mut checked = 0;
    let mut attempts = 0;
    while checked < 50 {
        attempts += 1;
        assert!(attempts < 2000);
        let net = random_dag(&mut r, 4, 5, checked % 2 == 0, checked % 5 == 0);
        if net.n_outputs() < 2 {
            continue;
        }
        let mut theta = normal_theta(&net, &mut r).into_inner();
        // Large weights push some score gaps into the truncated tail.
        let boost = if checked % 3 == 0 { 4.0 } else { 1.0 };
        theta.iter_mut().for_each(|t| *t *= boost);
        let x = random_inputs(&mut r, &net, 4);
        let trace = forward(&net, &theta, x.view()).unwrap();
        if net.hidden_nodes().any(|v| trace.z(v).iter().any(|z| z.abs() < 1e-6)) {
            continue;
        }
        let classes: Vec<usize> = (0..4).map(|_| r.random_range(0..net.n_outputs())).collect();
        let values = normal_matrix(&mut r, 4, net.n_outputs());
        let scores = scores_of(&net, &theta, &x);
        if kinds.iter().any(|&k| near_loss_kink(k, &scores, &classes)) {
            continue;
        }
        for kind in kinds {
            let labels = if kind == LossKind::Squared { Labels::Values(values.view()) } else { Labels::Classes(&classes) };
            let batch = Batch { inputs: x.view(), labels };
            let (_, g) = loss_gradient(&net, &theta, batch, kind).unwrap();
            let scale = g.iter().fold(1.0, |m: f64, v| m.max(v.abs()));
            let h = 1e-5;
            for i in 0..theta.len() {
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                tp[i] += h;
                tm[i] -= h;
                let fd = (loss_gradient(&net, &tp, batch, kind).unwrap().0 - loss_gradient(&net, &tm, batch, kind).unwrap().0) / (2.0 * h);
                assert!((fd - g[i]).abs() / scale <= 1e-6, "{kind:?} param {i}: fd {fd} vs {}", g[i]);
            }
        }
        checked += 1;
    }
}

#[test]
fn score_gradients_match_finite_differences() {
    let mut r = rng(8);
    for kind in [LossKind::CrossEntropy, LossKind::TruncatedCrossEntropy] {
        for _ in 0..50 {
            let scores = normal_matrix(&mut r, 3, 4).mapv(|v| 8.0 * v);
            let labels: Vec<usize> = (0..3).map(|_| r.random_range(0..4)).collect();
            if near_loss_kink(kind, &scores, &labels) {
                continue;
            }
            let (_, d) = loss_and_grad(kind, scores.view(), Labels::Classes(&labels)).unwrap();
            let h = 1e-6;
            for idx in 0..12 {
                let (b, j) = (idx / 4, idx % 4);
                let mut sp = scores.clone();
                let mut sm = scores.clone();
                sp[[b, j]] += h;
                sm[[b, j]] -= h;
                let lp = loss_and_grad(kind, sp.view(), Labels::Classes(&labels)).unwrap().0;
                let lm = loss_and_grad(kind, sm.view(), Labels::Classes(&labels)).unwrap().0;
                assert!(((lp - lm) / (2.0 * h) - d[[b, j]]).abs() <= 1e-6 * d[[b, j]].abs().max(1.0));
            }
        }
    }
}

fn chain_batch(x: &Array2<f64>, y: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    (x.clone(), y.clone())
}

#[test]
fn sgd_chain_step_by_hand() {
    let net = build_layered(&[1, 1, 1]).unwrap();
    let (x, y) = chain_batch(&array![[1.5]], &array![[0.5]]);
    let (a, b) = (0.8, 1.2);
    let batch = Batch { inputs: x.view(), labels: Labels::Values(y.view()) };
    let cfg = OptimizerConfig::new(Method::Sgd, 0.1);
    let next = sgd_step(&net, &[a, b], batch, LossKind::Squared, &cfg).unwrap();
    let r = a * b * 1.5 - 0.5;
    assert!((next[0] - (a - 0.1 * r * b * 1.5)).abs() < 1e-15);
    assert!((next[1] - (b - 0.1 * r * a * 1.5)).abs() < 1e-15);
}

#[test]
fn zero_gradient_is_fixed_point() {
    let net = build_layered(&[2, 3, 1]).unwrap();
    let theta = init_gaussian(&net, 1);
    let x = array![[0.3, -0.2], [1.0, 0.5]];
    let y = scores_of(&net, &theta, &x);
    let batch = Batch { inputs: x.view(), labels: Labels::Values(y.view()) };
    let mut cfg = OptimizerConfig::new(Method::Sgd, 0.5);
    assert_eq!(sgd_step(&net, &theta, batch, LossKind::Squared, &cfg).unwrap(), theta);
    cfg.alpha = 0.5;
    assert_eq!(ddp_sgd_step(&net, &theta, batch, LossKind::Squared, &cfg).unwrap(), theta);
}

#[test]
fn path_sgd_chain_step() {
    let net = build_layered(&[1, 1, 1]).unwrap();
    let (x, y) = chain_batch(&array![[1.0]], &array![[3.0]]);
    let batch = Batch { inputs: x.view(), labels: Labels::Values(y.view()) };
    let theta = [2.0, 1.0];
    let (_, g) = loss_gradient(&net, &theta, batch, LossKind::Squared).unwrap();
    let cfg = OptimizerConfig::new(Method::PathSgd, 0.05);
    let next = path_sgd_step(&net, &theta, batch, LossKind::Squared, &cfg).unwrap();
    assert_eq!(next[0], 2.0 - 0.05 * g[0]);
    assert_eq!(next[1], 1.0 - 0.05 * g[1] / 4.0);
}

#[test]
fn ddp_at_alpha_zero_is_path_sgd_bitwise() {
    let mut r = rng(3);
    let net = random_dag(&mut r, 4, 5, true, true);
    let ds_x = random_inputs(&mut r, &net, 6);
    let ds_y = normal_matrix(&mut r, 6, net.n_outputs());
    let batch = Batch { inputs: ds_x.view(), labels: Labels::Values(ds_y.view()) };
    let theta = normal_theta(&net, &mut r);
    let mut cfg = OptimizerConfig::new(Method::PathSgd, 0.01);
    let a = path_sgd_step(&net, &theta, batch, LossKind::Squared, &cfg).unwrap();
    cfg.method = Method::DdpSgd;
    let b = ddp_sgd_step(&net, &theta, batch, LossKind::Squared, &cfg).unwrap();
    assert_eq!(a, b);

    let mut ta = theta.clone();
    let mut tb = theta.clone();
    let mut cp = OptimizerConfig::new(Method::PathSgd, 0.01);
    cp.momentum = 0.5;
    let mut cd = cp.clone();
    cd.method = Method::DdpSgd;
    let mut pa = Optimizer::new(cp, LossKind::Squared, net.n_params()).unwrap();
    let mut pb = Optimizer::new(cd, LossKind::Squared, net.n_params()).unwrap();
    for _ in 0..10 {
        pa.step(&net, &mut ta, batch).unwrap();
        pb.step(&net, &mut tb, batch).unwrap();
        assert_eq!(ta, tb);
    }
}

#[test]
fn ddp_second_moment_is_exact_fisher() {
    let mut r = rng(13);
    for i in 0..10 {
        let net = random_dag(&mut r, 3, 4, i % 2 == 0, false);
        let theta = normal_theta(&net, &mut r);
        let x = random_inputs(&mut r, &net, 7);
        let k = ddp_kappa(&net, &theta, x.view(), 1.0, Stat::SecondMoment).unwrap();
        let f = fisher_diag(&net, &theta, x.view()).unwrap();
        assert!(max_rel_err(&k, &f, 1e-12) <= 1e-12);

        let y = normal_matrix(&mut r, 7, net.n_outputs());
        let batch = Batch { inputs: x.view(), labels: Labels::Values(y.view()) };
        let mut cfg = OptimizerConfig::new(Method::DdpSgd, 0.01);
        cfg.alpha = 1.0;
        cfg.stat = Stat::SecondMoment;
        let a = ddp_sgd_step(&net, &theta, batch, LossKind::Squared, &cfg).unwrap();
        let b = diag_ng_step(&net, &theta, batch, LossKind::Squared, &cfg).unwrap();
        assert!(max_rel_err(a.as_slice(), b.as_slice(), 1.0) <= 1e-12);
    }
}

#[test]
fn ddp_refuses_shared_weights_with_data() {
    let mut r = rng(17);
    let net = loop {
        let n = random_dag(&mut r, 3, 4, false, true);
        if n.has_sharing() {
            break n;
        }
    };
    let theta = normal_theta(&net, &mut r);
    let x = random_inputs(&mut r, &net, 3);
    assert!(matches!(ddp_kappa(&net, &theta, x.view(), 0.5, Stat::Variance), Err(Error::UnsupportedCombination(_))));
}

#[test]
fn diag_ng_linear_unit() {
    let net = build_layered(&[1, 1]).unwrap();
    let x = array![[1.0], [2.0], [-3.0]];
    let y = array![[0.0], [1.0], [2.0]];
    let batch = Batch { inputs: x.view(), labels: Labels::Values(y.view()) };
    let w = 0.7;
    let (_, g) = loss_gradient(&net, &[w], batch, LossKind::Squared).unwrap();
    let ex2 = (1.0 + 4.0 + 9.0) / 3.0;
    assert!((fisher_diag(&net, &[w], x.view()).unwrap()[0] - ex2).abs() < 1e-15);
    let next = diag_ng_step(&net, &[w], batch, LossKind::Squared, &OptimizerConfig::new(Method::DiagNg, 0.3)).unwrap();
    assert!((next[0] - (w - 0.3 * g[0] / ex2)).abs() < 1e-15);
}

#[test]
fn fisher_mc_converges_and_is_seeded() {
    let net = build_layered(&[1, 1]).unwrap();
    let one = array![[1.0]];
    let est = fisher_diag_mc(&net, &[0.4], one.view(), 100_000, 3).unwrap()[0];
    assert!((est - 1.0).abs() < 0.02, "{est}");
    assert_eq!(fisher_diag_mc(&net, &[0.4], one.view(), 500, 9).unwrap(), fisher_diag_mc(&net, &[0.4], one.view(), 500, 9).unwrap());

    let mlp = build_layered_with_bias(&[3, 4, 2]).unwrap();
    let theta = init_gaussian(&mlp, 4);
    let mut r = rng(4);
    let x = normal_matrix(&mut r, 20, 3);
    let exact = fisher_diag(&mlp, &theta, x.view()).unwrap();
    let err_at = |n: usize| {
        let mc = fisher_diag_mc(&mlp, &theta, x.view(), n, 11).unwrap();
        let rms = (exact.iter().zip(&mc).map(|(e, m)| ((m - e) / e.max(1e-12)).powi(2)).sum::<f64>() / exact.len() as f64).sqrt();
        rms
    };
    // 16× the samples should cut the error roughly 4×.
    assert!(err_at(64_000) < err_at(4_000) / 2.0);
}

#[test]
fn ddp_norm_gradient_orthogonal_to_weights() {
    let ds = gen_blobs(4, 3, 64, 5).unwrap();
    let net = build_layered_with_bias(&[4, 6, 5, 3]).unwrap();
    for (alpha, stat) in [(1.0, Stat::Variance), (0.5, Stat::SecondMoment), (0.0, Stat::Variance)] {
        let mut theta = init_gaussian(&net, 2);
        let mut cfg = OptimizerConfig::new(Method::DdpNorm, 0.05);
        cfg.alpha = alpha;
        cfg.stat = stat;
        let mut opt = Optimizer::new(cfg, LossKind::CrossEntropy, net.n_params()).unwrap();
        for _ in 0..20 {
            let pass = ddp_norm_forward_backward(&net, &theta, ds.batch(), LossKind::CrossEntropy, alpha, stat).unwrap();
            assert!(worst_cosine(&net, &theta, &pass.grad) <= 1e-8);
            opt.step(&net, &mut theta, ds.batch()).unwrap();
        }
    }
}

#[test]
fn ddp_norm_invariant_to_incoming_scale() {
    let ds = gen_blobs(3, 2, 16, 1).unwrap();
    let net = build_layered(&[3, 4, 2]).unwrap();
    let theta = init_gaussian(&net, 3);
    let base = ddp_norm_forward_backward(&net, &theta, ds.batch(), LossKind::CrossEntropy, 0.6, Stat::Variance).unwrap();
    let v = net.hidden_nodes().nth(2).unwrap();
    let mut scaled = theta.to_vec();
    for &e in net.in_edges(v) {
        scaled[net.edge(e).param] *= 7.5;
    }
    let other = ddp_norm_forward_backward(&net, &scaled, ds.batch(), LossKind::CrossEntropy, 0.6, Stat::Variance).unwrap();
    let (a, b) = (base.trace.outputs(&net), other.trace.outputs(&net));
    for (x, y) in a.iter().zip(b.iter()) {
        assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
    }
}

#[test]
fn ddp_norm_single_unit_by_hand() {
    let net = build_layered(&[1, 1, 1]).unwrap();
    let x = array![[1.0], [2.0], [3.0]];
    let y = array![[0.0], [0.0], [0.0]];
    let batch = Batch { inputs: x.view(), labels: Labels::Values(y.view()) };
    let (w1, w2) = (0.5, -1.5);
    let pass = ddp_norm_forward_backward(&net, &[w1, w2], batch, LossKind::Squared, 1.0, Stat::Variance).unwrap();
    // Var of w1·x over {1, 2, 3} is w1²·2/3.
    let gamma = (w1 * w1 * 2.0 / 3.0f64).sqrt();
    let out = pass.trace.outputs(&net);
    for (b, xb) in [1.0, 2.0, 3.0].iter().enumerate() {
        assert!((out[[b, 0]] - w2 * (w1 * xb / gamma)).abs() < 1e-14);
    }
    assert!((pass.gamma[1] - gamma).abs() < 1e-15);
}

#[test]
fn ddp_norm_degenerate_normalization() {
    let net = build_layered(&[1, 1, 1]).unwrap();
    let x = array![[2.0], [2.0]];
    let y = array![[0.0], [0.0]];
    let batch = Batch { inputs: x.view(), labels: Labels::Values(y.view()) };
    let r = ddp_norm_forward_backward(&net, &[1.0, 1.0], batch, LossKind::Squared, 1.0, Stat::Variance);
    assert!(matches!(r, Err(Error::DegenerateNormalization { node: 1 })));
}

/// Runs `steps` updates over a fixed batch cycle.
fn run(net: &NetworkGraph, theta: &ParamVector, cfg: &OptimizerConfig, x: &Array2<f64>, y: &[usize], steps: usize) -> ParamVector {
    let mut t = theta.clone();
    let mut opt = Optimizer::new(cfg.clone(), LossKind::CrossEntropy, net.n_params()).unwrap();
    let n = x.nrows();
    for s in 0..steps {
        let lo = (s * 8) % n;
        let rows = x.slice(ndarray::s![lo..lo + 8, ..]);
        opt.step(net, &mut t, Batch { inputs: rows, labels: Labels::Classes(&y[lo..lo + 8]) }).unwrap();
    }
    t
}

#[test]
fn path_sgd_function_invariant_under_rescaling() {
    let ds = gen_blobs(5, 3, 64, 2).unwrap();
    let labels = ds.class_labels().unwrap().to_vec();
    let net = build_layered_with_bias(&[5, 8, 6, 3]).unwrap();
    let theta = init_gaussian(&net, 6);
    let map = random_rescaling(&net, 8, 1.0).unwrap();
    let scaled = map.apply(&net, &theta).unwrap();
    for momentum in [0.0, 0.5] {
        let mut cfg = OptimizerConfig::new(Method::PathSgd, 0.05);
        cfg.momentum = momentum;
        cfg.kappa_floor = Some(0.0);
        let a = run(&net, &theta, &cfg, &ds.inputs, &labels, 50);
        let b = run(&net, &scaled, &cfg, &ds.inputs, &labels, 50);
        let dev = check_function_equal(&net, &a, &b, ds.inputs.view(), 1e-6).unwrap();
        assert!(dev.equal, "max deviation {}", dev.max_deviation);
        // Not trivially equal: the parameters themselves differ.
        assert!(max_rel_err(a.as_slice(), b.as_slice(), 1.0) > 1e-3);
    }
}

#[test]
fn sgd_witness_breaks_invariance() {
    let w = sgd_witness();
    let scaled = rescale_feedforward(&w.net, &w.theta, &w.beta).unwrap();
    let x = array![[w.x]];
    let y = array![[w.y]];
    let batch = Batch { inputs: x.view(), labels: Labels::Values(y.view()) };
    let f = |t: &[f64]| scores_of(&w.net, t, &x)[[0, 0]];
    assert_eq!(f(&w.theta), f(&scaled));

    let sgd = OptimizerConfig::new(Method::Sgd, w.lr);
    let a = sgd_step(&w.net, &w.theta, batch, LossKind::Squared, &sgd).unwrap();
    let b = sgd_step(&w.net, &scaled, batch, LossKind::Squared, &sgd).unwrap();
    assert!((f(&a) - f(&b)).abs() >= 1e-2);
    // From θ = (1, 1): gradient (−1, −1), so one step gives 1.1² = 1.21.
    assert!((f(&a) - 1.21).abs() < 1e-12);

    let path = OptimizerConfig::new(Method::PathSgd, w.lr);
    let a = path_sgd_step(&w.net, &w.theta, batch, LossKind::Squared, &path).unwrap();
    let b = path_sgd_step(&w.net, &scaled, batch, LossKind::Squared, &path).unwrap();
    assert!((f(&a) - f(&b)).abs() <= 1e-12);
}

#[test]
fn step_norm_bound_scales_whole_step() {
    let net = build_layered(&[1, 1, 1]).unwrap();
    let x = array![[1.0]];
    let y = array![[10.0]];
    let batch = Batch { inputs: x.view(), labels: Labels::Values(y.view()) };
    let mut cfg = OptimizerConfig::new(Method::Sgd, 1.0);
    cfg.max_step_norm = Some(0.5);
    let mut opt = Optimizer::new(cfg, LossKind::Squared, 2).unwrap();
    let mut theta = ParamVector::new(vec![1.0, 2.0]).unwrap();
    opt.step(&net, &mut theta, batch).unwrap();
    // Gradient (−16, −8) has norm √320; the step is that direction at length 0.5.
    let n = 320f64.sqrt();
    assert!((theta[0] - (1.0 + 0.5 * 16.0 / n)).abs() < 1e-15);
    assert!((theta[1] - (2.0 + 0.5 * 8.0 / n)).abs() < 1e-15);
}

#[test]
fn config_validation() {
    let mut cfg = OptimizerConfig::new(Method::PathSgd, 0.0);
    assert!(cfg.validate().is_err());
    cfg.lr = 0.1;
    cfg.alpha = 1.5;
    assert!(cfg.validate().is_err());
    cfg.alpha = 0.5;
    cfg.kappa_floor = Some(-1.0);
    assert!(cfg.validate().is_err());
    cfg.kappa_floor = None;
    assert!(cfg.validate().is_ok());
}
