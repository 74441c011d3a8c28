use super::{loss_and_grad, Batch, LossKind};
use crate::error::{Error, Result};
use crate::netgraph::eval::{backprop_with, check_trace, forward_with};
use crate::netgraph::{ForwardTrace, NetworkGraph, NodeKind, ParamVector};
use crate::pathnorm::Stat;
use ndarray::ArrayView2;

/// Result of a normalized forward/backward pass.
#[derive(Clone, Debug)]
pub struct DdpNormPass {
    /// Trace of the effective network (hidden pre-activations are normalized).
    pub trace: ForwardTrace,
    /// γ̃_v for hidden nodes, 1 elsewhere.
    pub gamma: Vec<f64>,
    pub loss: f64,
    /// dL/dw̃.
    pub grad: Vec<f64>,
}

fn validate(net: &NetworkGraph, w: &[f64], inputs: ArrayView2<f64>, alpha: f64, stat: Stat) -> Result<()> {
    if net.has_sharing() {
        return Err(Error::UnsupportedCombination("normalized reparameterization with shared weights".into()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Invalid(format!("alpha {alpha} outside [0, 1]")));
    }
    net.check_theta(w)?;
    if inputs.ncols() != net.n_inputs() {
        return Err(Error::ContractViolation("input width mismatch".into()));
    }
    if inputs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericInput("inputs".into()));
    }
    let need = if stat == Stat::Variance && alpha > 0.0 { 2 } else { 1 };
    if inputs.nrows() < need {
        return Err(Error::InsufficientData(format!("normalization needs a batch of at least {need}")));
    }
    Ok(())
}

/// Normalized forward pass: z̃_v = ⟨w̃_→v, h⟩, γ̃²_v = α·S(z̃_v) + (1−α)‖w̃_→v‖²,
/// z_v = z̃_v/γ̃_v at hidden nodes; outputs stay unnormalized.
fn normalized_forward(net: &NetworkGraph, w: &[f64], inputs: ArrayView2<f64>, alpha: f64, stat: Stat) -> Result<(ForwardTrace, Vec<f64>, Vec<f64>)> {
    let bsz = inputs.nrows();
    let mut gamma = vec![1.0; net.n_nodes()];
    let mut z_tilde = vec![0.0; net.n_nodes() * bsz];
    let mut degenerate = None;
    let trace = forward_with(
        net,
        inputs,
        |e| w[net.edge(e).param],
        |v, acc| {
            if net.kind(v) != NodeKind::Hidden {
                return;
            }
            z_tilde[v * bsz..(v + 1) * bsz].copy_from_slice(acc);
            let norm2: f64 = net.in_edges(v).iter().map(|&e| w[net.edge(e).param].powi(2)).sum();
            let stat_part = if alpha > 0.0 { alpha * stat.apply(acc) } else { 0.0 };
            let g2 = stat_part + (1.0 - alpha) * norm2;
            if !(g2 > 0.0) {
                degenerate.get_or_insert(v);
                return;
            }
            let g = g2.sqrt();
            gamma[v] = g;
            for a in acc.iter_mut() {
                *a /= g;
            }
        },
    );
    if let Some(node) = degenerate {
        return Err(Error::DegenerateNormalization { node });
    }
    Ok((trace, gamma, z_tilde))
}

/// Loss and gradient with respect to the unnormalized weights w̃.
///
/// With g = dL/dz at a hidden node: dL/dγ̃² = −Σ g z̃ /(2γ̃³),
/// dL/dz̃ = g/γ̃ + dL/dγ̃²·α·∂S/∂z̃ and dL/dw̃ gains dL/dγ̃²·2(1−α)w̃.
/// The resulting gradient is orthogonal to w̃_→v at every hidden node.
pub fn ddp_norm_forward_backward(net: &NetworkGraph, w: &[f64], batch: Batch, loss: LossKind, alpha: f64, stat: Stat) -> Result<DdpNormPass> {
    validate(net, w, batch.inputs, alpha, stat)?;
    let (trace, gamma, z_tilde) = normalized_forward(net, w, batch.inputs, alpha, stat)?;
    let scores = trace.outputs(net);
    let (l, d_out) = loss_and_grad(loss, scores.view(), batch.labels)?;
    check_trace(net, &trace, d_out.view())?;
    let bsz = trace.batch();
    let n = bsz as f64;
    let mut d_gamma2 = vec![0.0; net.n_nodes()];
    let mut bp = backprop_with(
        net,
        &trace,
        d_out.view(),
        |e| w[net.edge(e).param],
        |v, local| {
            if net.kind(v) != NodeKind::Hidden {
                return;
            }
            let zt = &z_tilde[v * bsz..(v + 1) * bsz];
            let g = gamma[v];
            let dot: f64 = local.iter().zip(zt).map(|(a, b)| a * b).sum();
            let dg2 = -dot / (2.0 * g * g * g);
            d_gamma2[v] = dg2;
            let mean = if stat == Stat::Variance { zt.iter().sum::<f64>() / n } else { 0.0 };
            for (l, z) in local.iter_mut().zip(zt) {
                *l = *l / g + dg2 * alpha * 2.0 * (z - mean) / n;
            }
        },
    );
    for v in net.hidden_nodes() {
        for &e in net.in_edges(v) {
            let p = net.edge(e).param;
            bp.grad[p] += d_gamma2[v] * 2.0 * (1.0 - alpha) * w[p];
        }
    }
    Ok(DdpNormPass { trace, gamma, loss: l, grad: bp.grad })
}

/// Plain weights w = w̃/γ̃_dst (statistics from `reference`) that reproduce the
/// normalized network on that reference set.
pub fn ddp_norm_effective_weights(net: &NetworkGraph, w: &[f64], reference: ArrayView2<f64>, alpha: f64, stat: Stat) -> Result<ParamVector> {
    validate(net, w, reference, alpha, stat)?;
    let (_, gamma, _) = normalized_forward(net, w, reference, alpha, stat)?;
    let mut out = w.to_vec();
    for edge in net.edges() {
        out[edge.param] = w[edge.param] / gamma[edge.dst];
    }
    ParamVector::new(out)
}
