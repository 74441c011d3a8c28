use crate::error::{Error, Result};
use crate::measures::{layer_matrices, psi_pq};
use crate::netgraph::{build_layered_with_bias, forward, NetworkGraph, ParamVector};
use ndarray::Array2;

pub const MAX_SHATTER_INPUTS: usize = 12;

/// A net whose first layer has one unit per hypercube vertex and whose
/// upper layers can realize any labeling of the vertices with unit margin.
#[derive(Clone, Debug)]
pub struct ShatteringNet {
    pub net: NetworkGraph,
    /// All 2^n_in points of {−1, +1}^n_in; bit k of the row index sets coordinate k to +1.
    pub points: Array2<f64>,
    pub width: usize,
    /// ψ_{p,q} of the constructed weights (bias columns included); labels only flip signs, so it is labeling-independent.
    pub psi: f64,
    /// n_in^{1/p}·m^{1/p+1/q}·H^{−(d−2)[1/p* − 1/q]₊}.
    pub psi_bound: f64,
    template: Vec<f64>,
}

/// Layer 1: unit j has weights s_j (the sign pattern of point j) and bias
/// −(n_in − 2), so it outputs 2 on point j and 0 elsewhere. With depth 2 the
/// output weights are b/2. Deeper nets use H copies of relu(f) and H copies of
/// relu(−f) per hidden layer, averaged with ±1/H at the output.
pub fn build_shattering_net(n_in: usize, p: f64, q: f64, depth: usize, width: usize) -> Result<ShatteringNet> {
    if n_in > MAX_SHATTER_INPUTS {
        return Err(Error::TooManyPoints { points: 1u128 << n_in.min(127) });
    }
    if n_in == 0 || depth < 2 || width == 0 {
        return Err(Error::Invalid("need n_in >= 1, depth >= 2 and width >= 1".into()));
    }
    let m = 1usize << n_in;
    let mut dims = vec![n_in, m];
    dims.extend(std::iter::repeat(2 * width).take(depth - 2));
    dims.push(1);
    let net = build_layered_with_bias(&dims)?;
    let points = Array2::from_shape_fn((m, n_in), |(r, k)| if (r >> k) & 1 == 1 { 1.0 } else { -1.0 });

    let mut theta = vec![0.0; net.n_params()];
    let layers = net.layers().unwrap().to_vec();
    let first = &layers[0];
    for j in 0..m {
        for k in 0..n_in {
            theta[first.weight(j, k)] = points[[j, k]];
        }
        theta[first.bias_offset.unwrap() + j] = -(n_in as f64 - 2.0);
    }
    let h = width as f64;
    for info in &layers[2..] {
        let half = info.cols / 2;
        for j in 0..info.rows {
            for i in 0..info.cols {
                theta[info.weight(j, i)] = if info.rows == 1 {
                    if i < half { 1.0 / h } else { -1.0 / h }
                } else if (j < half) == (i < half) {
                    1.0 / h
                } else {
                    0.0
                };
            }
        }
    }

    let mut s = ShatteringNet { net, points, width, psi: 0.0, psi_bound: 0.0, template: theta };
    let ones = vec![1.0; m];
    let theta = s.theta_for(&ones)?;
    s.psi = psi_pq(&layer_matrices(&s.net, &theta)?, p, q)?;
    let p_star_inv = 1.0 - 1.0 / p;
    let exponent = (depth as f64 - 2.0) * (p_star_inv - 1.0 / q).max(0.0);
    s.psi_bound = (n_in as f64).powf(1.0 / p) * (m as f64).powf(1.0 / p + 1.0 / q) * h.powf(-exponent);
    Ok(s)
}

impl ShatteringNet {
    pub fn n_points(&self) -> usize {
        self.points.nrows()
    }

    /// Weights realizing the labeling `labels` ∈ {−1, +1}^m.
    pub fn theta_for(&self, labels: &[f64]) -> Result<ParamVector> {
        if labels.len() != self.n_points() || labels.iter().any(|&b| b != 1.0 && b != -1.0) {
            return Err(Error::Invalid(format!("expected {} labels in {{-1, +1}}", self.n_points())));
        }
        let mut theta = self.template.clone();
        let second = &self.net.layers().unwrap()[1];
        for (i, &b) in labels.iter().enumerate() {
            if second.rows == 1 {
                theta[second.weight(0, i)] = b / 2.0;
            } else {
                for j in 0..second.rows {
                    let sign = if j < self.width { 1.0 } else { -1.0 };
                    theta[second.weight(j, i)] = sign * b / 2.0;
                }
            }
        }
        ParamVector::new(theta)
    }

    /// f(x)·b(x) on every point.
    pub fn margins(&self, labels: &[f64]) -> Result<Vec<f64>> {
        let theta = self.theta_for(labels)?;
        let out = forward(&self.net, &theta, self.points.view())?.outputs(&self.net);
        Ok(out.column(0).iter().zip(labels).map(|(f, b)| f * b).collect())
    }
}
