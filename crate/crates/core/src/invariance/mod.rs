//! Node-wise rescalings, weight balancing, path Jacobians and the shattering construction.

mod rank;
mod shatter;

pub use rank::{degrees_of_freedom, path_jacobian, PathJacobian, DEFAULT_SV_THRESHOLD};
pub use shatter::{build_shattering_net, ShatteringNet};

use crate::error::{Error, Result};
use crate::measures::{group_norm, layer_matrices, lp_norm};
use crate::netgraph::{forward, NetworkGraph, NodeKind, ParamVector, Structure};
use crate::rng::{stream, streams};
use ndarray::ArrayView2;
use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::Serialize;

/// Positive node scale factors. `Nodes` holds β_v for every node of a
/// feedforward graph (1 at sources and outputs); `RnnUnits` holds α^i_j
/// per hidden layer i and unit j, shared across time.
#[derive(Clone, Debug, PartialEq)]
pub enum RescalingMap {
    Nodes(Vec<f64>),
    RnnUnits(Vec<Vec<f64>>),
}

impl RescalingMap {
    pub fn identity(net: &NetworkGraph) -> Self {
        match net.rnn() {
            Some(l) => RescalingMap::RnnUnits(l.spec.hidden.iter().map(|&h| vec![1.0; h]).collect()),
            None => RescalingMap::Nodes(vec![1.0; net.n_nodes()]),
        }
    }

    /// T_{other} ∘ T_{self}: elementwise product of the factors.
    pub fn compose(&self, other: &RescalingMap) -> Result<RescalingMap> {
        let mismatch = || Error::Invalid("rescaling maps have different shapes".into());
        match (self, other) {
            (RescalingMap::Nodes(a), RescalingMap::Nodes(b)) if a.len() == b.len() => {
                Ok(RescalingMap::Nodes(a.iter().zip(b).map(|(x, y)| x * y).collect()))
            }
            (RescalingMap::RnnUnits(a), RescalingMap::RnnUnits(b)) if a.len() == b.len() => {
                let mut out = Vec::with_capacity(a.len());
                for (la, lb) in a.iter().zip(b) {
                    if la.len() != lb.len() {
                        return Err(mismatch());
                    }
                    out.push(la.iter().zip(lb).map(|(x, y)| x * y).collect());
                }
                Ok(RescalingMap::RnnUnits(out))
            }
            _ => Err(mismatch()),
        }
    }

    /// Applies the map with whichever rule matches its variant.
    pub fn apply(&self, net: &NetworkGraph, theta: &[f64]) -> Result<ParamVector> {
        match self {
            RescalingMap::Nodes(beta) => rescale_feedforward(net, theta, beta),
            RescalingMap::RnnUnits(alpha) => rescale_rnn(net, theta, alpha),
        }
    }
}

fn check_positive(values: impl Iterator<Item = f64>) -> Result<()> {
    for v in values {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Invalid(format!("scale factor {v} must be positive and finite")));
        }
    }
    Ok(())
}

/// w'_{u→v} = (β_v/β_u)·w_{u→v}. On shared nets every edge of a parameter
/// must land on the bit-identical value, otherwise the map is infeasible.
pub fn rescale_feedforward(net: &NetworkGraph, theta: &[f64], beta: &[f64]) -> Result<ParamVector> {
    net.check_theta(theta)?;
    if beta.len() != net.n_nodes() {
        return Err(Error::Invalid(format!("expected {} node scales, got {}", net.n_nodes(), beta.len())));
    }
    check_positive(beta.iter().copied())?;
    for v in 0..net.n_nodes() {
        if net.kind(v) != NodeKind::Hidden && beta[v] != 1.0 {
            return Err(Error::Invalid(format!("node {v} is not internal and must keep scale 1")));
        }
    }
    let mut out = theta.to_vec();
    for (i, o) in out.iter_mut().enumerate() {
        let edges = net.param_edges(i);
        let Some((&first, rest)) = edges.split_first() else { continue };
        let scaled = |e: usize| {
            let edge = net.edge(e);
            beta[edge.dst] / beta[edge.src] * theta[i]
        };
        let value = scaled(first);
        if let Some(&bad) = rest.iter().find(|&&e| scaled(e) != value) {
            return Err(Error::InfeasibleRescaling(format!(
                "parameter {i} maps to {value} on edge {first} but {} on edge {bad}",
                scaled(bad)
            )));
        }
        *o = value;
    }
    ParamVector::new(out)
}

/// W_in^i[j,k] ← (α^i_j/α^{i−1}_k)·W_in^i[j,k] with α^{−1} ≡ 1, W_rec^i[j,k] ← (α^i_j/α^i_k)·W_rec^i[j,k],
/// b^i_j ← α^i_j·b^i_j and W_out[o,k] ← W_out[o,k]/α^{last}_k.
pub fn rescale_rnn(net: &NetworkGraph, theta: &[f64], alpha: &[Vec<f64>]) -> Result<ParamVector> {
    net.check_theta(theta)?;
    let layout = net
        .rnn()
        .ok_or_else(|| Error::InvalidArchitecture("RNN rescaling needs an unrolled RNN".into()))?;
    let hidden = &layout.spec.hidden;
    if alpha.len() != hidden.len() || alpha.iter().zip(hidden).any(|(a, &h)| a.len() != h) {
        return Err(Error::Invalid("one scale per hidden unit and layer is required".into()));
    }
    check_positive(alpha.iter().flatten().copied())?;
    let mut out = theta.to_vec();
    for (i, &h) in hidden.iter().enumerate() {
        let below = if i == 0 { layout.spec.n_in } else { hidden[i - 1] };
        for j in 0..h {
            let a = alpha[i][j];
            for k in 0..below {
                let prev = if i == 0 { 1.0 } else { alpha[i - 1][k] };
                let id = layout.w_in(i, j, k);
                out[id] = a / prev * theta[id];
            }
            for k in 0..h {
                let id = layout.w_rec(i, j, k);
                out[id] = a / alpha[i][k] * theta[id];
            }
            if let Some(id) = layout.bias(i, j) {
                out[id] = a * theta[id];
            }
        }
    }
    let last = alpha.last().unwrap();
    for o in 0..layout.spec.n_out {
        for (k, a) in last.iter().enumerate() {
            let id = layout.w_out(o, k);
            out[id] = theta[id] / a;
        }
    }
    ParamVector::new(out)
}

/// A random function-preserving rescaling: one event per internal unit, each
/// picking a unit uniformly and scaling its incoming weights by 10c and its
/// outgoing weights by 1/(10c) with c log-normal(0, σ_log).
pub fn random_rescaling(net: &NetworkGraph, seed: u64, sigma_log: f64) -> Result<RescalingMap> {
    if !(sigma_log > 0.0 && sigma_log.is_finite()) {
        return Err(Error::Invalid(format!("log-normal width {sigma_log} must be positive")));
    }
    let dist = LogNormal::new(0.0, sigma_log).map_err(|e| Error::Invalid(e.to_string()))?;
    let mut rng = stream(seed, streams::RESCALE);
    let mut map = RescalingMap::identity(net);
    match &mut map {
        RescalingMap::Nodes(beta) => {
            let hidden: Vec<usize> = net.hidden_nodes().collect();
            for _ in 0..hidden.len() {
                let v = hidden[rng.random_range(0..hidden.len())];
                beta[v] *= 10.0 * dist.sample(&mut rng);
            }
        }
        RescalingMap::RnnUnits(alpha) => {
            let units: Vec<(usize, usize)> =
                alpha.iter().enumerate().flat_map(|(i, l)| (0..l.len()).map(move |j| (i, j))).collect();
            for _ in 0..units.len() {
                let (i, j) = units[rng.random_range(0..units.len())];
                alpha[i][j] *= 10.0 * dist.sample(&mut rng);
            }
        }
    }
    Ok(map)
}

/// Applies [`random_rescaling`] to θ.
pub fn random_unbalance(net: &NetworkGraph, theta: &[f64], seed: u64, sigma_log: f64) -> Result<ParamVector> {
    if net.has_sharing() && net.rnn().is_none() {
        return Err(Error::InfeasibleRescaling("random rescaling of a shared non-RNN net".into()));
    }
    random_rescaling(net, seed, sigma_log)?.apply(net, theta)
}

fn bias_free_layers(net: &NetworkGraph) -> Result<()> {
    match net.structure() {
        Structure::Layered { bias: false, .. } => Ok(()),
        Structure::Layered { .. } => {
            Err(Error::UnsupportedCombination("layer balancing of a net with bias nodes".into()))
        }
        _ => Err(Error::InvalidArchitecture("layer balancing needs a layered net".into())),
    }
}

/// Scales layer k by c_k = ψ^{1/d}/‖W_k‖_{p,q}, so every layer ends with group
/// norm ψ^{1/d} and μ_{p,q} = d^{1/q}·ψ^{1/d}. Since ∏c_k = 1 the function is unchanged.
pub fn balance_weights(net: &NetworkGraph, theta: &[f64], p: f64, q: f64) -> Result<ParamVector> {
    net.check_theta(theta)?;
    bias_free_layers(net)?;
    let mats = layer_matrices(net, theta)?;
    let norms: Vec<f64> = mats.iter().map(|w| group_norm(w.view(), p, q)).collect();
    if let Some(k) = norms.iter().position(|&n| n == 0.0) {
        return Err(Error::Degenerate(format!("layer {k} has zero group norm")));
    }
    let d = norms.len() as f64;
    // Geometric mean in log space, so deep nets don't overflow.
    let log_root = norms.iter().map(|n| n.ln()).sum::<f64>() / d;
    let mut out = theta.to_vec();
    for (info, n) in net.layers().unwrap().iter().zip(&norms) {
        let c = (log_root - n.ln()).exp();
        for v in &mut out[info.weight_offset..info.weight_offset + info.rows * info.cols] {
            *v *= c;
        }
    }
    ParamVector::new(out)
}

pub const BALANCE_TOL: f64 = 1e-12;
pub const BALANCE_MAX_SWEEPS: usize = 100;

/// Per-unit balancing: in topological order each internal unit divides its
/// incoming weights by their ℓ_p norm and multiplies its outgoing weights by
/// it. Dead units (zero incoming norm) are left alone. Sweeps repeat until
/// every live unit's norm is within 1e−12 of 1.
pub fn balance_per_unit(net: &NetworkGraph, theta: &[f64], p: f64) -> Result<ParamVector> {
    net.check_theta(theta)?;
    if !(p >= 1.0) {
        return Err(Error::Invalid(format!("norm exponent {p} must be >= 1")));
    }
    if net.has_sharing() {
        return Err(Error::UnsupportedCombination("per-unit balancing of a shared net".into()));
    }
    let mut w = theta.to_vec();
    let incoming = |w: &[f64], v: usize| {
        let vals: Vec<f64> = net.in_edges(v).iter().map(|&e| w[net.edge(e).param]).collect();
        lp_norm(vals.iter(), p)
    };
    for _ in 0..BALANCE_MAX_SWEEPS {
        for &v in net.order() {
            if net.kind(v) != NodeKind::Hidden {
                continue;
            }
            let n = incoming(&w, v);
            if n == 0.0 {
                continue;
            }
            for &e in net.in_edges(v) {
                w[net.edge(e).param] /= n;
            }
            for &e in net.out_edges(v) {
                w[net.edge(e).param] *= n;
            }
        }
        let worst = net
            .hidden_nodes()
            .map(|v| incoming(&w, v))
            .filter(|&n| n > 0.0)
            .fold(0.0f64, |m, n| m.max((n - 1.0).abs()));
        if worst <= BALANCE_TOL {
            break;
        }
    }
    ParamVector::new(w)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FunctionCheck {
    pub equal: bool,
    /// max |f₁ − f₂| / max(1, |f₁|, |f₂|) over probes and outputs.
    pub max_deviation: f64,
}

/// Compares the outputs of two parameter vectors on the probe rows.
pub fn check_function_equal(
    net: &NetworkGraph,
    theta1: &[f64],
    theta2: &[f64],
    probes: ArrayView2<f64>,
    tol: f64,
) -> Result<FunctionCheck> {
    let a = forward(net, theta1, probes)?.outputs(net);
    let b = forward(net, theta2, probes)?.outputs(net);
    let max_deviation = a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
        .fold(0.0f64, f64::max);
    Ok(FunctionCheck { equal: max_deviation <= tol, max_deviation })
}

/// A chain where one SGD step from θ and from its rescaling T_β(θ) lands on
/// different functions: squared loss on the single example (x, y).
#[derive(Clone, Debug)]
pub struct SgdWitness {
    pub net: NetworkGraph,
    pub theta: ParamVector,
    /// Node scales; only the hidden unit differs from 1.
    pub beta: Vec<f64>,
    pub x: f64,
    pub y: f64,
    pub lr: f64,
}

/// Chain [1, 1, 1] at θ = (1, 1), hidden scale 100, example (1, 2), step 0.1.
pub fn sgd_witness() -> SgdWitness {
    let net = crate::netgraph::build_layered(&[1, 1, 1]).expect("chain");
    SgdWitness {
        net,
        theta: ParamVector::new(vec![1.0, 1.0]).expect("finite"),
        beta: vec![1.0, 100.0, 1.0],
        x: 1.0,
        y: 2.0,
        lr: 0.1,
    }
}
