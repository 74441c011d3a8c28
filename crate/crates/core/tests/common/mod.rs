#![allow(dead_code)]

use ndarray::Array2;
use pathgeo::netgraph::{Edge, NodeKind};
use pathgeo::optim::LossKind;
use pathgeo::{NetworkGraph, ParamVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Largest elementwise |a−b| / max(|a|, |b|, floor).
pub fn max_rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn normal_theta(net: &NetworkGraph, rng: &mut ChaCha8Rng) -> ParamVector {
    ParamVector::new(normal_vec(rng, net.n_params())).unwrap()
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_vec((rows, cols), normal_vec(rng, rows * cols)).unwrap()
}

/// Random DAG with node layers of width ≤ `max_width` and longest path ≤ `max_depth`.
/// Each non-input node draws edges from earlier layers (always one from the layer just
/// below); hidden nodes without a consumer get one. With `share`, edges are
/// assigned to fewer parameters at random.
pub fn random_dag(rng: &mut ChaCha8Rng, max_depth: usize, max_width: usize, bias: bool, share: bool) -> NetworkGraph {
    loop {
        let depth = rng.random_range(1..=max_depth);
        let mut kinds = Vec::new();
        let mut layers: Vec<Vec<usize>> = Vec::new();
        for l in 0..=depth {
            let w = rng.random_range(1..=max_width);
            let kind = if l == 0 {
                NodeKind::Input
            } else if l == depth {
                NodeKind::Output
            } else {
                NodeKind::Hidden
            };
            layers.push((kinds.len()..kinds.len() + w).collect());
            kinds.extend(std::iter::repeat_n(kind, w));
        }
        let bias_node = bias.then(|| {
            kinds.push(NodeKind::Bias);
            kinds.len() - 1
        });
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for l in 1..=depth {
            for &v in &layers[l] {
                let below = &layers[l - 1];
                pairs.push((below[rng.random_range(0..below.len())], v));
                for earlier in &layers[..l] {
                    for &u in earlier {
                        if !pairs.contains(&(u, v)) && rng.random_bool(0.35) {
                            pairs.push((u, v));
                        }
                    }
                }
                if let Some(b) = bias_node {
                    if rng.random_bool(0.5) {
                        pairs.push((b, v));
                    }
                }
            }
        }
        for l in 1..depth {
            for &v in &layers[l] {
                if !pairs.iter().any(|&(u, _)| u == v) {
                    let above = &layers[l + 1];
                    pairs.push((v, above[rng.random_range(0..above.len())]));
                }
            }
        }
        let n_params = if share { rng.random_range(1..=pairs.len()) } else { pairs.len() };
        let mut ids: Vec<usize> = (0..pairs.len()).map(|e| if share { e % n_params } else { e }).collect();
        ids.shuffle(rng);
        let edges = pairs.iter().zip(&ids).map(|(&(src, dst), &param)| Edge { src, dst, param }).collect();
        if let Ok(net) = NetworkGraph::new(kinds, edges, n_params) {
            return net;
        }
    }
}

/// Random batch of `n` inputs for `net`.
pub fn random_inputs(rng: &mut ChaCha8Rng, net: &NetworkGraph, n: usize) -> Array2<f64> {
    normal_matrix(rng, n, net.n_inputs())
}

/// True when the loss is non-smooth within `tol` of these scores.
pub fn near_loss_kink(kind: LossKind, scores: &Array2<f64>, labels: &[usize]) -> bool {
    let tol = 1e-4;
    scores.outer_iter().zip(labels).any(|(s, &c)| {
        let others = s.iter().enumerate().filter(|&(j, _)| j != c).map(|(_, v)| *v);
        match kind {
            LossKind::TruncatedCrossEntropy => others.into_iter().any(|v| (v - s[c] + 11.0).abs() < tol || (v - s[c] + 13.0).abs() < tol),
            LossKind::Margin { gamma } => {
                let best = others.fold(f64::NEG_INFINITY, f64::max);
                (s[c] - best - gamma).abs() < tol
            }
            _ => false,
        }
    })
}

/// Cosine between w̃ into each hidden node and the matching gradient block.
pub fn worst_cosine(net: &NetworkGraph, w: &[f64], grad: &[f64]) -> f64 {
    net.hidden_nodes()
        .map(|v| {
            let ps: Vec<usize> = net.in_edges(v).iter().map(|&e| net.edge(e).param).collect();
            let dot: f64 = ps.iter().map(|&p| w[p] * grad[p]).sum();
            let nw: f64 = ps.iter().map(|&p| w[p] * w[p]).sum::<f64>().sqrt();
            let ng: f64 = ps.iter().map(|&p| grad[p] * grad[p]).sum::<f64>().sqrt();
            if ng == 0.0 {
                0.0
            } else {
                (dot / (nw * ng)).abs()
            }
        })
        .fold(0.0, f64::max)
}
