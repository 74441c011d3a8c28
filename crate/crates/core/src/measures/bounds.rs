use super::norms::group_norm;
use super::spectral::spectral;
use crate::error::{Error, Result};
use crate::rng::{stream, streams};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use serde::Serialize;

fn relu_forward(layers: &[Array2<f64>], x: ArrayView1<f64>) -> (Vec<Array1<f64>>, Array1<f64>) {
    let mut pre = Vec::with_capacity(layers.len());
    let mut h = x.to_owned();
    for (i, w) in layers.iter().enumerate() {
        let z = w.dot(&h);
        h = if i + 1 == layers.len() { z.clone() } else { z.mapv(|v| v.max(0.0)) };
        pre.push(z);
    }
    (pre, h)
}

fn check_chain(layers: &[Array2<f64>], n_in: usize) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::Invalid("need at least one layer".into()));
    }
    let mut width = n_in;
    for (i, w) in layers.iter().enumerate() {
        if w.ncols() != width {
            return Err(Error::ContractViolation(format!("layer {i} expects {} inputs, got {width}", w.ncols())));
        }
        width = w.nrows();
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
}

impl BoundCheck {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }
}

/// lhs = ‖f_{W+U}(x) − f_W(x)‖₂ and rhs = e·B·∏‖W_i‖₂·Σ‖U_i‖₂/‖W_i‖₂ with B = ‖x‖₂,
/// for a bias-free ReLU chain. Requires ‖U_i‖₂ ≤ ‖W_i‖₂/d.
pub fn perturbation_bound_check(layers: &[Array2<f64>], x: ArrayView1<f64>, us: &[Array2<f64>]) -> Result<BoundCheck> {
    check_chain(layers, x.len())?;
    if us.len() != layers.len() || us.iter().zip(layers).any(|(u, w)| u.dim() != w.dim()) {
        return Err(Error::InvalidPerturbation("perturbation shapes differ from the layers".into()));
    }
    let d = layers.len() as f64;
    let wn: Vec<f64> = layers.iter().map(|w| spectral(w.view())).collect();
    let un: Vec<f64> = us.iter().map(|u| spectral(u.view())).collect();
    for (i, (w, u)) in wn.iter().zip(&un).enumerate() {
        if *u > w / d {
            return Err(Error::InvalidPerturbation(format!("layer {i}: ‖U‖₂ = {u} exceeds ‖W‖₂/d = {}", w / d)));
        }
    }
    let shifted: Vec<Array2<f64>> = layers.iter().zip(us).map(|(w, u)| w + u).collect();
    let (_, f0) = relu_forward(layers, x);
    let (_, f1) = relu_forward(&shifted, x);
    let lhs = (&f1 - &f0).mapv(|v| v * v).sum().sqrt();
    let b = x.dot(&x).sqrt();
    let prod: f64 = wn.iter().product();
    let ratio: f64 = wn.iter().zip(&un).map(|(w, u)| if *u == 0.0 { 0.0 } else { u / w }).sum();
    Ok(BoundCheck { lhs, rhs: std::f64::consts::E * b * prod * ratio })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeltaPoint {
    pub delta: f64,
    /// Largest fraction (over inputs and hidden layers) of units with |z| ≤ δ.
    pub fraction: f64,
    /// fraction / δ, the smallest C₂ consistent with the data.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionReport {
    /// Smallest ‖Π_{a..b}‖_F·√h_c / (‖Π_{c+1..b}‖_F ‖Π_{a..c}‖_F) over triples and inputs.
    pub mu_c1: f64,
    pub triples_checked: usize,
    pub c2: Vec<DeltaPoint>,
    /// Per layer, max over inputs of ‖W_i‖²_{2,∞} h_i / ‖D_i W_i‖²_F.
    pub c3_squared: Vec<f64>,
    pub c3: Vec<f64>,
}

const MAX_EXHAUSTIVE_DEPTH: usize = 10;
const SAMPLED_TRIPLES: usize = 10_000;

/// Evaluates C1–C3 on a bias-free ReLU chain for every input row.
/// Triples are exhaustive up to depth 10 and a seeded sample beyond.
pub fn check_conditions(layers: &[Array2<f64>], inputs: ArrayView2<f64>, delta_grid: &[f64], seed: u64) -> Result<ConditionReport> {
    if inputs.nrows() == 0 {
        return Err(Error::InsufficientData("empty batch".into()));
    }
    check_chain(layers, inputs.ncols())?;
    let d = layers.len();
    let triples: Vec<(usize, usize, usize)> = if d <= MAX_EXHAUSTIVE_DEPTH {
        let mut t = Vec::new();
        for a in 0..=d {
            for c in a + 1..=d {
                for b in c + 1..=d {
                    t.push((a, c, b));
                }
            }
        }
        t
    } else {
        let mut rng = stream(seed, streams::CONDITIONS);
        (0..SAMPLED_TRIPLES)
            .map(|_| {
                let mut v = [0, 0, 0];
                while !(v[0] < v[1] && v[1] < v[2]) {
                    v = [rng.random_range(0..=d), rng.random_range(0..=d), rng.random_range(0..=d)];
                    v.sort_unstable();
                }
                (v[0], v[1], v[2])
            })
            .collect()
    };
    let row_max: Vec<f64> = layers.iter().map(|w| group_norm(w.view(), 2.0, f64::INFINITY)).collect();
    let mut mu = f64::INFINITY;
    let mut c2 = vec![0.0f64; delta_grid.len()];
    let mut c3 = vec![0.0f64; d];
    for x in inputs.outer_iter() {
        let (pre, _) = relu_forward(layers, x);
        // M_0 = x (a column), M_i = D_i W_i, with D_d = I.
        let mut mats: Vec<Array2<f64>> = Vec::with_capacity(d + 1);
        mats.push(x.to_owned().insert_axis(ndarray::Axis(1)));
        for (i, w) in layers.iter().enumerate() {
            let mut m = w.clone();
            if i + 1 < d {
                for (r, z) in pre[i].iter().enumerate() {
                    if *z <= 0.0 {
                        m.row_mut(r).fill(0.0);
                    }
                }
            }
            mats.push(m);
        }
        // norms[a][b] = ‖M_b ⋯ M_a‖_F
        let mut norms = vec![vec![0.0; d + 1]; d + 1];
        for a in 0..=d {
            let mut p = mats[a].clone();
            norms[a][a] = frob(&p);
            for b in a + 1..=d {
                p = mats[b].dot(&p);
                norms[a][b] = frob(&p);
            }
        }
        for &(a, c, b) in &triples {
            let den = norms[c + 1][b] * norms[a][c];
            if den > 0.0 {
                let h = layers[c - 1].nrows() as f64;
                mu = mu.min(norms[a][b] * h.sqrt() / den);
            }
        }
        for z in pre.iter().take(d.saturating_sub(1)) {
            let n = z.len() as f64;
            for (g, &delta) in delta_grid.iter().enumerate() {
                let frac = z.iter().filter(|v| v.abs() <= delta).count() as f64 / n;
                c2[g] = c2[g].max(frac);
            }
        }
        for i in 0..d {
            let f2 = frob(&mats[i + 1]).powi(2);
            if f2 > 0.0 {
                c3[i] = c3[i].max(row_max[i].powi(2) * layers[i].nrows() as f64 / f2);
            }
        }
    }
    Ok(ConditionReport {
        mu_c1: mu,
        triples_checked: triples.len(),
        c2: delta_grid
            .iter()
            .zip(c2)
            .map(|(&delta, fraction)| DeltaPoint { delta, fraction, ratio: if delta > 0.0 { fraction / delta } else { f64::INFINITY } })
            .collect(),
        c3: c3.iter().map(|v| v.sqrt()).collect(),
        c3_squared: c3,
    })
}

fn frob(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}
