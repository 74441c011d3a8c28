use super::{NetworkGraph, NodeKind};
use crate::error::{Error, Result};
use ndarray::{Array2, ArrayView2};

/// Pre-activations z and outputs h for every node and example, stored node-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    batch: usize,
    n_nodes: usize,
    z: Vec<f64>,
    h: Vec<f64>,
}

impl ForwardTrace {
    pub fn batch(&self) -> usize {
        self.batch
    }
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }
    pub fn z(&self, v: usize) -> &[f64] {
        &self.z[v * self.batch..(v + 1) * self.batch]
    }
    pub fn h(&self, v: usize) -> &[f64] {
        &self.h[v * self.batch..(v + 1) * self.batch]
    }
    /// Network outputs, one row per example.
    pub fn outputs(&self, net: &NetworkGraph) -> Array2<f64> {
        let mut out = Array2::zeros((self.batch, net.n_outputs()));
        for (o, &v) in net.outputs().iter().enumerate() {
            for (b, x) in self.h(v).iter().enumerate() {
                out[[b, o]] = *x;
            }
        }
        out
    }
}

/// Evaluates the net on a batch (rows are examples).
pub fn forward(net: &NetworkGraph, theta: &[f64], x: ArrayView2<f64>) -> Result<ForwardTrace> {
    net.check_theta(theta)?;
    if x.ncols() != net.n_inputs() {
        return Err(Error::ContractViolation(format!(
            "input width {} but net has {} inputs",
            x.ncols(),
            net.n_inputs()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericInput("inputs".into()));
    }
    Ok(forward_with(net, x, |e| theta[net.edges[e].param], |_, _| {}))
}

/// Forward pass with edge weights supplied by `weight` and an optional hook that
/// may rewrite a node's pre-activations before the nonlinearity.
pub(crate) fn forward_with(
    net: &NetworkGraph,
    x: ArrayView2<f64>,
    weight: impl Fn(usize) -> f64,
    mut hook: impl FnMut(usize, &mut [f64]),
) -> ForwardTrace {
    let batch = x.nrows();
    let n = net.n_nodes();
    let mut z = vec![0.0; n * batch];
    let mut h = vec![0.0; n * batch];
    let mut input_col = vec![usize::MAX; n];
    for (c, &v) in net.inputs().iter().enumerate() {
        input_col[v] = c;
    }
    let mut acc = vec![0.0; batch];
    for &v in net.order() {
        match net.kinds[v] {
            NodeKind::Input => {
                let col = x.column(input_col[v]);
                for (b, val) in col.iter().enumerate() {
                    z[v * batch + b] = *val;
                    h[v * batch + b] = *val;
                }
            }
            NodeKind::Bias => {
                z[v * batch..(v + 1) * batch].fill(1.0);
                h[v * batch..(v + 1) * batch].fill(1.0);
            }
            kind => {
                acc.fill(0.0);
                for &e in net.in_edges(v) {
                    let w = weight(e);
                    let u = net.edges[e].src;
                    let hu = &h[u * batch..(u + 1) * batch];
                    for (a, hv) in acc.iter_mut().zip(hu) {
                        *a += w * hv;
                    }
                }
                hook(v, &mut acc);
                z[v * batch..(v + 1) * batch].copy_from_slice(&acc);
                let hv = &mut h[v * batch..(v + 1) * batch];
                if kind == NodeKind::Hidden {
                    for (o, a) in hv.iter_mut().zip(&acc) {
                        *o = if *a > 0.0 { *a } else { 0.0 };
                    }
                } else {
                    hv.copy_from_slice(&acc);
                }
            }
        }
    }
    ForwardTrace { batch, n_nodes: n, z, h }
}

/// Gradient and per-node pre-activation deltas from one reverse sweep.
#[derive(Clone, Debug)]
pub struct Backprop {
    /// dL/dθ, summed over the batch.
    pub grad: Vec<f64>,
    /// dL/dz_v per node and example (node-major); zero at sources.
    pub dz: Vec<f64>,
    batch: usize,
}

impl Backprop {
    pub fn dz(&self, v: usize) -> &[f64] {
        &self.dz[v * self.batch..(v + 1) * self.batch]
    }
}

/// dL/dθ given dL/d(outputs) (rows are examples). The ReLU subgradient at 0 is 0.
pub fn backward(net: &NetworkGraph, theta: &[f64], trace: &ForwardTrace, d_out: ArrayView2<f64>) -> Result<Vec<f64>> {
    Ok(backprop(net, theta, trace, d_out)?.grad)
}

pub fn backprop(net: &NetworkGraph, theta: &[f64], trace: &ForwardTrace, d_out: ArrayView2<f64>) -> Result<Backprop> {
    if theta.len() != net.n_params() {
        return Err(Error::ContractViolation("parameter count mismatch".into()));
    }
    check_trace(net, trace, d_out)?;
    Ok(backprop_with(net, trace, d_out, |e| theta[net.edges[e].param], |_, _| {}))
}

pub(crate) fn check_trace(net: &NetworkGraph, trace: &ForwardTrace, d_out: ArrayView2<f64>) -> Result<()> {
    if trace.n_nodes != net.n_nodes() {
        return Err(Error::ContractViolation("trace was produced by a different net".into()));
    }
    if d_out.nrows() != trace.batch || d_out.ncols() != net.n_outputs() {
        return Err(Error::ContractViolation(format!(
            "output gradient is {}x{}, expected {}x{}",
            d_out.nrows(),
            d_out.ncols(),
            trace.batch,
            net.n_outputs()
        )));
    }
    Ok(())
}

/// Reverse sweep. `hook(v, dz)` may rewrite dL/dz_v in place before it is pushed
/// to the incoming edges (used by normalization layers).
pub(crate) fn backprop_with(
    net: &NetworkGraph,
    trace: &ForwardTrace,
    d_out: ArrayView2<f64>,
    weight: impl Fn(usize) -> f64,
    mut hook: impl FnMut(usize, &mut [f64]),
) -> Backprop {
    let batch = trace.batch;
    let n = net.n_nodes();
    let mut dh = vec![0.0; n * batch];
    let mut dz = vec![0.0; n * batch];
    let mut grad = vec![0.0; net.n_params()];
    for (o, &v) in net.outputs().iter().enumerate() {
        for b in 0..batch {
            dh[v * batch + b] = d_out[[b, o]];
        }
    }
    let mut local = vec![0.0; batch];
    for &v in net.order().iter().rev() {
        let kind = net.kinds[v];
        if kind.is_source() {
            continue;
        }
        let zv = trace.z(v);
        let dhv = &dh[v * batch..(v + 1) * batch];
        if kind == NodeKind::Hidden {
            for ((l, d), z) in local.iter_mut().zip(dhv).zip(zv) {
                *l = if *z > 0.0 { *d } else { 0.0 };
            }
        } else {
            local.copy_from_slice(dhv);
        }
        hook(v, &mut local);
        dz[v * batch..(v + 1) * batch].copy_from_slice(&local);
        for &e in net.in_edges(v) {
            let edge = net.edges[e];
            let hu = trace.h(edge.src);
            let mut g = 0.0;
            for (l, x) in local.iter().zip(hu) {
                g += l * x;
            }
            grad[edge.param] += g;
            if !net.kinds[edge.src].is_source() {
                let w = weight(e);
                for (d, l) in dh[edge.src * batch..(edge.src + 1) * batch].iter_mut().zip(&local) {
                    *d += w * l;
                }
            }
        }
    }
    Backprop { grad, dz, batch }
}
