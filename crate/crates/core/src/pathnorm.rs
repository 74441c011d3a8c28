//! Path regularizer γ²_net, its diagonal curvature κ, and the data-dependent
//! (DDP) variants, with enumeration-based oracles.

use crate::error::{Error, Result};
use crate::netgraph::{enumerate_paths, forward, NetworkGraph, NodeKind};
use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

/// Per-node γ²_v and γ²_net = Σ over outputs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GammaState {
    pub gamma2: Vec<f64>,
    pub net: f64,
}

/// κ = κ⁽¹⁾ + κ⁽²⁾ per parameter.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KappaVector {
    pub kappa: Vec<f64>,
    pub kappa1: Vec<f64>,
    pub kappa2: Vec<f64>,
}

impl KappaVector {
    fn from_parts(kappa1: Vec<f64>, kappa2: Vec<f64>) -> Self {
        let kappa = kappa1.iter().zip(&kappa2).map(|(a, b)| a + b).collect();
        KappaVector { kappa, kappa1, kappa2 }
    }
}

/// Batch statistic used by the data-dependent recursion (biased 1/n estimators).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Stat {
    #[default]
    Variance,
    SecondMoment,
}

impl Stat {
    pub fn apply(self, z: &[f64]) -> f64 {
        let n = z.len() as f64;
        match self {
            Stat::SecondMoment => z.iter().map(|x| x * x).sum::<f64>() / n,
            Stat::Variance => {
                let mean = z.iter().sum::<f64>() / n;
                z.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
            }
        }
    }
}

fn total_over_outputs(net: &NetworkGraph, gamma2: &[f64]) -> f64 {
    net.outputs().iter().map(|&v| gamma2[v]).sum()
}

/// γ²_v = Σ_u γ²_u w²_{u→v}, sources seeded with 1.
pub fn path_reg_dp(net: &NetworkGraph, theta: &[f64]) -> GammaState {
    let mut g = vec![0.0; net.n_nodes()];
    for &v in net.order() {
        if net.kind(v).is_source() {
            g[v] = 1.0;
            continue;
        }
        let mut s = 0.0;
        for &e in net.in_edges(v) {
            let edge = net.edge(e);
            let w = theta[edge.param];
            s += g[edge.src] * w * w;
        }
        g[v] = s;
    }
    let total = total_over_outputs(net, &g);
    GammaState { gamma2: g, net: total }
}

/// Σ over enumerated paths of ∏ w².
pub fn path_reg_bruteforce(net: &NetworkGraph, theta: &[f64], cap: usize) -> Result<f64> {
    let paths = enumerate_paths(net, cap)?;
    Ok(paths
        .paths
        .iter()
        .map(|p| p.edges.iter().map(|&e| theta[net.edge(e).param].powi(2)).product::<f64>())
        .sum())
}

/// c_v = ∂γ²_net/∂γ²_v for the recursion γ²_v = … + scale·Σ γ²_u w²; outputs get 1.
fn reverse_coefficients(net: &NetworkGraph, theta: &[f64], scale: f64) -> Vec<f64> {
    let mut c = vec![0.0; net.n_nodes()];
    for &v in net.order().iter().rev() {
        if net.kind(v) == NodeKind::Output {
            c[v] = 1.0;
            continue;
        }
        let mut s = 0.0;
        for &e in net.out_edges(v) {
            let edge = net.edge(e);
            let w = theta[edge.param];
            s += c[edge.dst] * w * w;
        }
        c[v] = scale * s;
    }
    c
}

/// κ⁽¹⁾_i = Σ_{e∈E_i} γ²_src(e)·c_dst(e): gradient of the squared-weight
/// linear network's summed output with respect to the squared parameters.
pub fn kappa1(net: &NetworkGraph, theta: &[f64]) -> Vec<f64> {
    let gamma = path_reg_dp(net, theta);
    let c = reverse_coefficients(net, theta, 1.0);
    let mut k = vec![0.0; net.n_params()];
    for edge in net.edges() {
        k[edge.param] += gamma.gamma2[edge.src] * c[edge.dst];
    }
    k
}

/// κ⁽²⁾ of an unrolled RNN: recurrent entries collect every pair of time copies
/// on a common path, using powers of the elementwise-squared recurrent matrix.
/// Zero for input, output and bias parameters.
pub fn kappa2_rnn(net: &NetworkGraph, theta: &[f64]) -> Result<Vec<f64>> {
    let layout = net
        .rnn()
        .ok_or_else(|| Error::ContractViolation("kappa2_rnn needs an unrolled RNN".into()))?;
    let gamma = path_reg_dp(net, theta);
    let c = reverse_coefficients(net, theta, 1.0);
    let steps = layout.spec.steps;
    let mut k2 = vec![0.0; net.n_params()];
    for (i, &h) in layout.spec.hidden.iter().enumerate() {
        if steps < 3 {
            break;
        }
        let sq: Vec<f64> = (0..h * h)
            .map(|idx| theta[layout.w_rec(i, idx / h, idx % h)].powi(2))
            .collect();
        // powers[n][a * h + b] = (W'^n)[a, b]
        let mut powers = vec![identity(h)];
        for _ in 1..steps - 2 {
            let next = matmul(&sq, powers.last().unwrap(), h);
            powers.push(next);
        }
        let mut acc = vec![0.0; h * h];
        // Recurrent copies live at times t = 1..steps-1 (edge h_{t-1} -> h_t).
        for s2 in 2..steps {
            for s1 in 1..s2 {
                let p = &powers[s2 - 1 - s1];
                for j in 0..h {
                    let cj = c[layout.hidden_node(i, s2, j)];
                    if cj == 0.0 {
                        continue;
                    }
                    for k in 0..h {
                        acc[j * h + k] += gamma.gamma2[layout.hidden_node(i, s1 - 1, k)] * p[k * h + j] * cj;
                    }
                }
            }
        }
        for j in 0..h {
            for k in 0..h {
                let id = layout.w_rec(i, j, k);
                k2[id] = 4.0 * theta[id].powi(2) * acc[j * h + k];
            }
        }
    }
    Ok(k2)
}

fn identity(h: usize) -> Vec<f64> {
    let mut m = vec![0.0; h * h];
    for a in 0..h {
        m[a * h + a] = 1.0;
    }
    m
}

fn matmul(a: &[f64], b: &[f64], h: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * h];
    for r in 0..h {
        for m in 0..h {
            let x = a[r * h + m];
            if x == 0.0 {
                continue;
            }
            for col in 0..h {
                out[r * h + col] += x * b[m * h + col];
            }
        }
    }
    out
}

/// κ by dynamic programming: κ⁽¹⁾ always, κ⁽²⁾ for unrolled RNNs when requested.
pub fn kappa(net: &NetworkGraph, theta: &[f64], use_kappa2: bool) -> KappaVector {
    let k1 = kappa1(net, theta);
    let k2 = if use_kappa2 && net.rnn().is_some() {
        kappa2_rnn(net, theta).expect("rnn layout present")
    } else {
        vec![0.0; net.n_params()]
    };
    KappaVector::from_parts(k1, k2)
}

/// κ from enumerated paths, so that κ_i = ½ ∂²γ²_net/∂θ_i².
///
/// A path in which θ_i appears k times contributes θ_i^{2k}·R; its second
/// derivative splits into the single-edge part (κ⁽¹⁾, one term per copy) and
/// 4·θ_i²·(product of the other edges) for every unordered pair of copies (κ⁽²⁾).
pub fn kappa_bruteforce(net: &NetworkGraph, theta: &[f64], cap: usize) -> Result<KappaVector> {
    let paths = enumerate_paths(net, cap)?;
    let mut k1 = vec![0.0; net.n_params()];
    let mut k2 = vec![0.0; net.n_params()];
    for p in &paths.paths {
        let sq: Vec<f64> = p.edges.iter().map(|&e| theta[net.edge(e).param].powi(2)).collect();
        let params: Vec<usize> = p.edges.iter().map(|&e| net.edge(e).param).collect();
        for a in 0..sq.len() {
            let rest: f64 = (0..sq.len()).filter(|&x| x != a).map(|x| sq[x]).product();
            k1[params[a]] += rest;
            for b in a + 1..sq.len() {
                if params[b] != params[a] {
                    continue;
                }
                let rest: f64 = (0..sq.len()).filter(|&x| x != a && x != b).map(|x| sq[x]).product();
                k2[params[a]] += 4.0 * theta[params[a]].powi(2) * rest;
            }
        }
    }
    Ok(KappaVector::from_parts(k1, k2))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Invalid(format!("alpha {alpha} outside [0, 1]")));
    }
    Ok(())
}

/// γ²_v = α·S(z_v) + (1−α)·Σ_u γ²_u w²_{u→v}, sources seeded with 1.
pub fn ddp_gamma(net: &NetworkGraph, theta: &[f64], batch: ArrayView2<f64>, alpha: f64, stat: Stat) -> Result<GammaState> {
    check_alpha(alpha)?;
    if alpha == 0.0 {
        return Ok(path_reg_dp(net, theta));
    }
    if batch.nrows() == 0 {
        return Err(Error::InsufficientData("empty batch".into()));
    }
    let trace = forward(net, theta, batch)?;
    Ok(ddp_gamma_from(net, theta, &trace, alpha, stat))
}

fn ddp_gamma_from(net: &NetworkGraph, theta: &[f64], trace: &crate::netgraph::ForwardTrace, alpha: f64, stat: Stat) -> GammaState {
    let mut g = vec![0.0; net.n_nodes()];
    for &v in net.order() {
        if net.kind(v).is_source() {
            g[v] = 1.0;
            continue;
        }
        let mut s = 0.0;
        for &e in net.in_edges(v) {
            let edge = net.edge(e);
            let w = theta[edge.param];
            s += g[edge.src] * w * w;
        }
        g[v] = alpha * stat.apply(trace.z(v)) + (1.0 - alpha) * s;
    }
    let total = total_over_outputs(net, &g);
    GammaState { gamma2: g, net: total }
}

/// κ_e = ½ ∂²γ²_net/∂w_e² for the data-dependent regularizer.
///
/// With c_v = ∂γ²_net/∂γ²_v, the data-independent part gives (1−α)c_v γ²_u and
/// each statistic S(z_x) downstream of e adds α·c_x·S'(h_u ∂z_x/∂z_v), where S'
/// is the mean square (second moment) or variance of that per-example quantity.
/// Shared parameters are only supported at α = 0.
pub fn ddp_kappa(net: &NetworkGraph, theta: &[f64], batch: ArrayView2<f64>, alpha: f64, stat: Stat) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    if alpha == 0.0 {
        return Ok(kappa1(net, theta));
    }
    if net.has_sharing() {
        return Err(Error::UnsupportedCombination("data-dependent kappa with shared weights".into()));
    }
    if batch.nrows() == 0 {
        return Err(Error::InsufficientData("empty batch".into()));
    }
    let trace = forward(net, theta, batch)?;
    let gamma = ddp_gamma_from(net, theta, &trace, alpha, stat);
    let c = reverse_coefficients(net, theta, 1.0 - alpha);
    let mut k = vec![0.0; net.n_params()];
    for edge in net.edges() {
        k[edge.param] += (1.0 - alpha) * c[edge.dst] * gamma.gamma2[edge.src];
    }
    let bsz = trace.batch();
    let n = bsz as f64;
    let mut jac = vec![0.0; net.n_nodes() * bsz];
    let mut seen = vec![false; net.n_nodes()];
    let mut q = vec![0.0; bsz];
    for &x in net.order() {
        if net.kind(x).is_source() || c[x] == 0.0 {
            continue;
        }
        jac.fill(0.0);
        seen.fill(false);
        jac[x * bsz..(x + 1) * bsz].fill(1.0);
        seen[x] = true;
        for &v in net.order().iter().rev() {
            if !seen[v] || net.kind(v).is_source() {
                continue;
            }
            if v != x && net.kind(v) == NodeKind::Hidden {
                for (j, z) in jac[v * bsz..(v + 1) * bsz].iter_mut().zip(trace.z(v)) {
                    if *z <= 0.0 {
                        *j = 0.0;
                    }
                }
            }
            for &e in net.in_edges(v) {
                let edge = net.edge(e);
                let hu = trace.h(edge.src);
                for b in 0..bsz {
                    q[b] = hu[b] * jac[v * bsz + b];
                }
                let s = match stat {
                    Stat::SecondMoment => q.iter().map(|a| a * a).sum::<f64>() / n,
                    Stat::Variance => Stat::Variance.apply(&q),
                };
                k[edge.param] += alpha * c[x] * s;
                if !net.kind(edge.src).is_source() {
                    let w = theta[edge.param];
                    let (lo, hi) = jac.split_at_mut(v * bsz);
                    let src = &mut lo[edge.src * bsz..(edge.src + 1) * bsz];
                    for (d, j) in src.iter_mut().zip(&hi[..bsz]) {
                        *d += w * j;
                    }
                    seen[edge.src] = true;
                }
            }
        }
    }
    Ok(k)
}
