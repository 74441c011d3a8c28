use crate::error::{Error, Result};
use crate::netgraph::{NetworkGraph, NodeKind};
use ndarray::{Array2, ArrayView2};

/// Weight matrices of a layered net, one row per receiving unit. With bias
/// nodes the bias weights form an extra last column.
pub fn layer_matrices(net: &NetworkGraph, theta: &[f64]) -> Result<Vec<Array2<f64>>> {
    let layers = net
        .layers()
        .ok_or_else(|| Error::Invalid("layer matrices need a layered net".into()))?;
    Ok(layers
        .iter()
        .map(|l| {
            let extra = l.bias_offset.is_some() as usize;
            let mut w = Array2::zeros((l.rows, l.cols + extra));
            for j in 0..l.rows {
                for i in 0..l.cols {
                    w[[j, i]] = theta[l.weight(j, i)];
                }
                if let Some(b) = l.bias_offset {
                    w[[j, l.cols]] = theta[b + j];
                }
            }
            w
        })
        .collect())
}

/// ℓ_p norm (p ≥ 1, may be infinite).
pub fn lp_norm<'a>(values: impl Iterator<Item = &'a f64>, p: f64) -> f64 {
    if p.is_infinite() {
        values.fold(0.0, |m, v| m.max(v.abs()))
    } else if p == 1.0 {
        values.map(|v| v.abs()).sum()
    } else if p == 2.0 {
        values.map(|v| v * v).sum::<f64>().sqrt()
    } else {
        values.map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// ‖W‖_{p,q}: ℓ_p over each unit's incoming weights (rows), then ℓ_q over units.
pub fn group_norm(w: ArrayView2<f64>, p: f64, q: f64) -> f64 {
    let rows: Vec<f64> = w.outer_iter().map(|r| lp_norm(r.iter(), p)).collect();
    lp_norm(rows.iter(), q)
}

fn check_exponents(p: f64, q: f64) -> Result<()> {
    if !(p >= 1.0) || !(q >= 1.0) {
        return Err(Error::Invalid(format!("norm exponents ({p}, {q}) must be >= 1")));
    }
    Ok(())
}

/// μ_{p,q} = (Σ_layers ‖W_k‖_{p,q}^q)^{1/q}; for q = ∞ the maximum over layers.
pub fn mu_pq(layers: &[Array2<f64>], p: f64, q: f64) -> Result<f64> {
    check_exponents(p, q)?;
    let per: Vec<f64> = layers.iter().map(|w| group_norm(w.view(), p, q)).collect();
    Ok(lp_norm(per.iter(), q))
}

/// ψ_{p,q} = ∏_layers ‖W_k‖_{p,q}.
pub fn psi_pq(layers: &[Array2<f64>], p: f64, q: f64) -> Result<f64> {
    check_exponents(p, q)?;
    Ok(layers.iter().map(|w| group_norm(w.view(), p, q)).product())
}

/// Σ over source-output paths of ∏ edge_value(w_e), by a forward DP.
pub fn path_sum(net: &NetworkGraph, theta: &[f64], edge_value: impl Fn(usize, f64) -> f64) -> f64 {
    let mut acc = vec![0.0; net.n_nodes()];
    let mut total = 0.0;
    for &v in net.order() {
        if net.kind(v).is_source() {
            acc[v] = 1.0;
            continue;
        }
        let mut s = 0.0;
        for &e in net.in_edges(v) {
            let edge = net.edge(e);
            s += acc[edge.src] * edge_value(e, theta[edge.param]);
        }
        acc[v] = s;
        if net.kind(v) == NodeKind::Output {
            total += s;
        }
    }
    total
}

/// φ_p = (Σ_paths ∏ |w_e|^p)^{1/p}.
pub fn phi_p(net: &NetworkGraph, theta: &[f64], p: f64) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::Invalid(format!("path norm exponent {p} must be finite and >= 1")));
    }
    Ok(path_sum(net, theta, |_, w| w.abs().powf(p)).powf(1.0 / p))
}
