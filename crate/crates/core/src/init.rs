//! Weight initializers.

use crate::netgraph::{NetworkGraph, NodeKind, ParamVector};
use crate::rng::{stream, streams};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Gaussian weights with std 1/sqrt(fan-in) of the receiving node; bias weights start at 0.
pub fn init_gaussian(net: &NetworkGraph, seed: u64) -> ParamVector {
    let mut rng = stream(seed, streams::INIT);
    let mut theta = vec![0.0; net.n_params()];
    for (i, t) in theta.iter_mut().enumerate() {
        let Some(&e) = net.param_edges(i).first() else { continue };
        let edge = net.edge(e);
        if net.kind(edge.src) == NodeKind::Bias {
            continue;
        }
        let fan_in = net
            .in_edges(edge.dst)
            .iter()
            .filter(|&&f| net.kind(net.edge(f).src) != NodeKind::Bias)
            .count();
        let normal = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).unwrap();
        *t = normal.sample(&mut rng);
    }
    ParamVector::new(theta).expect("finite draws")
}

/// Recurrent matrices set to the identity, all other weights uniform in
/// [-scale, scale], biases 0. Panics if the net is not an unrolled RNN.
pub fn init_rnn_identity(net: &NetworkGraph, seed: u64, scale: f64) -> ParamVector {
    let layout = net.rnn().expect("unrolled RNN");
    let mut rng = stream(seed, streams::INIT);
    let mut theta = vec![0.0; net.n_params()];
    for t in theta.iter_mut() {
        *t = rng.random_range(-scale..=scale);
    }
    for (i, &h) in layout.spec.hidden.iter().enumerate() {
        for j in 0..h {
            for k in 0..h {
                theta[layout.w_rec(i, j, k)] = if j == k { 1.0 } else { 0.0 };
            }
            if let Some(b) = layout.bias(i, j) {
                theta[b] = 0.0;
            }
        }
    }
    for o in 0..layout.spec.n_out {
        if let Some(b) = layout.bias_out(o) {
            theta[b] = 0.0;
        }
    }
    ParamVector::new(theta).expect("finite draws")
}
