use crate::error::{Error, Result};
use crate::netgraph::{backprop, forward, ForwardTrace, NetworkGraph};
use crate::rng::{stream, streams};
use ndarray::{Array2, ArrayView2};
use rand_distr::{Distribution, StandardNormal};

/// Adds Σ_b (∂/∂θ_i of Σ_o d_out[b,o] f_o(x_b))² to `acc`, per parameter.
fn accumulate_squared(net: &NetworkGraph, theta: &[f64], trace: &ForwardTrace, d_out: ArrayView2<f64>, acc: &mut [f64]) -> Result<()> {
    let bp = backprop(net, theta, trace, d_out)?;
    let bsz = trace.batch();
    let mut per = vec![0.0; bsz];
    for (i, a) in acc.iter_mut().enumerate() {
        let edges = net.param_edges(i);
        if edges.is_empty() {
            continue;
        }
        per.fill(0.0);
        for &e in edges {
            let edge = net.edge(e);
            for ((p, h), d) in per.iter_mut().zip(trace.h(edge.src)).zip(bp.dz(edge.dst)) {
                *p += h * d;
            }
        }
        *a += per.iter().map(|p| p * p).sum::<f64>();
    }
    Ok(())
}

/// Exact diagonal of the Fisher matrix under a unit-variance Gaussian output
/// model: F_ii = mean_x Σ_o (∂f_o(x)/∂θ_i)².
pub fn fisher_diag(net: &NetworkGraph, theta: &[f64], inputs: ArrayView2<f64>) -> Result<Vec<f64>> {
    let m = inputs.nrows();
    if m == 0 {
        return Err(Error::InsufficientData("empty input set".into()));
    }
    let trace = forward(net, theta, inputs)?;
    let mut acc = vec![0.0; net.n_params()];
    for o in 0..net.n_outputs() {
        let mut d = Array2::zeros((m, net.n_outputs()));
        d.column_mut(o).fill(1.0);
        accumulate_squared(net, theta, &trace, d.view(), &mut acc)?;
    }
    Ok(acc.into_iter().map(|a| a / m as f64).collect())
}

/// Monte-Carlo Fisher diagonal: x cycles through `inputs`, y ~ N(f(x), I), and
/// the score (y − f)ᵀ ∂f/∂θ is squared and averaged.
pub fn fisher_diag_mc(net: &NetworkGraph, theta: &[f64], inputs: ArrayView2<f64>, n_samples: usize, seed: u64) -> Result<Vec<f64>> {
    let m = inputs.nrows();
    if n_samples == 0 || m == 0 {
        return Err(Error::InsufficientData("need at least one sample and one input".into()));
    }
    let mut rng = stream(seed, streams::FISHER);
    let n_out = net.n_outputs();
    let mut acc = vec![0.0; net.n_params()];
    let chunk = 4096.min(n_samples);
    let mut done = 0;
    while done < n_samples {
        let bsz = chunk.min(n_samples - done);
        let mut x = Array2::zeros((bsz, inputs.ncols()));
        for b in 0..bsz {
            x.row_mut(b).assign(&inputs.row((done + b) % m));
        }
        let trace = forward(net, theta, x.view())?;
        let mut eps = Array2::zeros((bsz, n_out));
        for v in eps.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        accumulate_squared(net, theta, &trace, eps.view(), &mut acc)?;
        done += bsz;
    }
    Ok(acc.into_iter().map(|a| a / n_samples as f64).collect())
}
