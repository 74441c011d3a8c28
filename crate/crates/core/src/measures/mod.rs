//! Complexity and sharpness measures: margins, group/path/spectral norms,
//! max-sharpness, PAC-Bayes expected sharpness, the layer-wise perturbation
//! bound and the C1–C3 condition checkers.

mod bounds;
mod norms;
mod sharpness;
mod spectral;

pub use bounds::{check_conditions, perturbation_bound_check, BoundCheck, ConditionReport, DeltaPoint};
pub use norms::{group_norm, layer_matrices, lp_norm, mu_pq, path_sum, phi_p, psi_pq};
pub use sharpness::{max_sharpness, pac_bayes_curve, pac_bayes_kl, AscentConfig, PacBayesConfig, PacBayesCurve, PacBayesPoint, SharpnessEstimate};
pub use spectral::{spectral, spectral_norm, SpectralEstimate};

use crate::error::{Error, Result};
use crate::netgraph::NetworkGraph;
use crate::optim::Labels;
use ndarray::ArrayView2;
use serde::{Serialize, Serializer};

pub const DEFAULT_MARGIN_EPS: f64 = 0.05;

/// s_y − max_{j≠y} s_j for each row.
pub fn per_point_margins(scores: ArrayView2<f64>, labels: &[usize]) -> Result<Vec<f64>> {
    let k = scores.ncols();
    if labels.len() != scores.nrows() {
        return Err(Error::ContractViolation("label count differs from score rows".into()));
    }
    if k < 2 {
        return Err(Error::Invalid("margins need at least two classes".into()));
    }
    labels
        .iter()
        .enumerate()
        .map(|(b, &y)| {
            if y >= k {
                return Err(Error::InvalidLabel { label: y, classes: k });
            }
            let row = scores.row(b);
            let other = (0..k).filter(|&j| j != y).map(|j| row[j]).fold(f64::NEG_INFINITY, f64::max);
            Ok(row[y] - other)
        })
        .collect()
}

/// Margin at which ⌈εm⌉ points fall strictly below: the (⌈εm⌉+1)-th smallest
/// per-point margin (clamped to the largest).
pub fn margin(scores: ArrayView2<f64>, labels: &[usize], eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidEpsilon(eps));
    }
    let mut m = per_point_margins(scores, labels)?;
    if m.is_empty() {
        return Err(Error::InsufficientData("no points".into()));
    }
    m.sort_by(f64::total_cmp);
    Ok(m[order_index(m.len(), eps)])
}

/// ⌈εm⌉ with a tolerance so that e.g. 0.07·100 counts as 7.
fn order_index(m: usize, eps: f64) -> usize {
    let x = eps * m as f64;
    let k = (x - 1e-9 * x.max(1.0)).ceil().max(0.0) as usize;
    k.min(m - 1)
}

fn ser_exponent<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayerNorms {
    pub frobenius: f64,
    pub spectral: f64,
    pub l1_inf: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupNormEntry {
    #[serde(serialize_with = "ser_exponent")]
    pub p: f64,
    #[serde(serialize_with = "ser_exponent")]
    pub q: f64,
    pub mu: f64,
    pub psi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhiEntry {
    pub p: f64,
    pub phi: f64,
}

/// Margin-normalized capacity measures of a trained layered net.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComplexityReport {
    pub gamma_margin: f64,
    /// (1/γ²) ∏ 4‖W_i‖_F².
    pub l2_measure: f64,
    /// (1/γ²) (Σ_paths ∏ |2w|)².
    pub l1_path_measure: f64,
    /// (1/γ²) Σ_paths ∏ 4 h_i w².
    pub l2_path_measure: f64,
    /// (1/γ²) ∏ h_i ‖W_i‖₂².
    pub spectral_measure: f64,
    pub layers: Vec<LayerNorms>,
    pub group_norms: Vec<GroupNormEntry>,
    pub path_norms: Vec<PhiEntry>,
}

/// Norm measures for a layered net, where h_i is the number of units in layer i.
pub fn norm_measures(
    net: &NetworkGraph,
    theta: &[f64],
    gamma_margin: f64,
    pq_grid: &[(f64, f64)],
    phi_grid: &[f64],
) -> Result<ComplexityReport> {
    if !(gamma_margin > 0.0) {
        return Err(Error::MarginDegenerate(gamma_margin));
    }
    let mats = layer_matrices(net, theta)?;
    let info = net.layers().unwrap();
    let mut width_of = vec![0.0; net.n_nodes()];
    for l in info {
        for j in 0..l.rows {
            width_of[l.first_unit + j] = l.rows as f64;
        }
    }
    let g2 = gamma_margin * gamma_margin;
    let layers: Vec<LayerNorms> = mats
        .iter()
        .map(|w| LayerNorms {
            frobenius: group_norm(w.view(), 2.0, 2.0),
            spectral: spectral(w.view()),
            l1_inf: group_norm(w.view(), 1.0, f64::INFINITY),
        })
        .collect();
    let l2 = layers.iter().map(|l| 4.0 * l.frobenius * l.frobenius).product::<f64>() / g2;
    let l1_path = path_sum(net, theta, |_, w| 2.0 * w.abs()).powi(2) / g2;
    let l2_path = path_sum(net, theta, |e, w| 4.0 * width_of[net.edge(e).dst] * w * w) / g2;
    let spectral_m = layers
        .iter()
        .zip(info)
        .map(|(l, i)| i.rows as f64 * l.spectral * l.spectral)
        .product::<f64>()
        / g2;
    let group_norms = pq_grid
        .iter()
        .map(|&(p, q)| Ok(GroupNormEntry { p, q, mu: mu_pq(&mats, p, q)?, psi: psi_pq(&mats, p, q)? }))
        .collect::<Result<_>>()?;
    let path_norms = phi_grid
        .iter()
        .map(|&p| Ok(PhiEntry { p, phi: phi_p(net, theta, p)? }))
        .collect::<Result<_>>()?;
    Ok(ComplexityReport {
        gamma_margin,
        l2_measure: l2,
        l1_path_measure: l1_path,
        l2_path_measure: l2_path,
        spectral_measure: spectral_m,
        layers,
        group_norms,
        path_norms,
    })
}

/// Margin of a net's predictions on a labelled set.
pub fn margin_of(net: &NetworkGraph, theta: &[f64], inputs: ArrayView2<f64>, labels: Labels, eps: f64) -> Result<f64> {
    let Labels::Classes(c) = labels else {
        return Err(Error::Invalid("margins need class labels".into()));
    };
    let scores = crate::netgraph::forward(net, theta, inputs)?.outputs(net);
    margin(scores.view(), c, eps)
}
