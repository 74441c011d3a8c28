use crate::error::{Error, Result};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LossKind {
    CrossEntropy,
    /// Soft-max cross-entropy with the exponential replaced by a quadratic tail
    /// below −11, so confident correct predictions reach exactly zero loss.
    TruncatedCrossEntropy,
    /// ½‖f − y‖².
    Squared,
    /// 1[s_y ≤ γ + max_{j≠y} s_j]; γ = 0 is the 0/1 error.
    Margin { gamma: f64 },
}

/// Targets for a batch: class ids or real-valued rows.
#[derive(Clone, Copy, Debug)]
pub enum Labels<'a> {
    Classes(&'a [usize]),
    Values(ArrayView2<'a, f64>),
}

impl Labels<'_> {
    pub fn len(&self) -> usize {
        match self {
            Labels::Classes(c) => c.len(),
            Labels::Values(v) => v.nrows(),
        }
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

const KNOT: f64 = -11.0;

fn trunc_f(x: f64) -> f64 {
    if x >= KNOT {
        x.exp()
    } else {
        let t = (x + 13.0).max(0.0);
        KNOT.exp() * t * t / 4.0
    }
}

fn trunc_df(x: f64) -> f64 {
    if x >= KNOT {
        x.exp()
    } else {
        KNOT.exp() * (x + 13.0).max(0.0) / 2.0
    }
}

fn classes<'a>(labels: Labels<'a>, k: usize) -> Result<&'a [usize]> {
    match labels {
        Labels::Classes(c) => {
            if let Some(&bad) = c.iter().find(|&&c| c >= k) {
                return Err(Error::InvalidLabel { label: bad, classes: k });
            }
            Ok(c)
        }
        Labels::Values(_) => Err(Error::Invalid("classification loss needs class labels".into())),
    }
}

/// Mean loss over the batch and its gradient with respect to the scores
/// (the 1/m factor is included).
pub fn loss_and_grad(kind: LossKind, scores: ArrayView2<f64>, labels: Labels) -> Result<(f64, Array2<f64>)> {
    let (m, k) = scores.dim();
    if labels.len() != m {
        return Err(Error::ContractViolation(format!("{} labels for {m} score rows", labels.len())));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NumericInput("scores".into()));
    }
    let mut grad = Array2::zeros((m, k));
    if m == 0 {
        return Ok((0.0, grad));
    }
    let inv = 1.0 / m as f64;
    let mut total = 0.0;
    match kind {
        LossKind::Squared => {
            let Labels::Values(y) = labels else {
                return Err(Error::Invalid("squared loss needs real targets".into()));
            };
            if y.ncols() != k {
                return Err(Error::ContractViolation("target width differs from output width".into()));
            }
            for b in 0..m {
                for o in 0..k {
                    let d = scores[[b, o]] - y[[b, o]];
                    total += 0.5 * d * d;
                    grad[[b, o]] = d * inv;
                }
            }
        }
        LossKind::CrossEntropy => {
            let c = classes(labels, k)?;
            for b in 0..m {
                let row = scores.row(b);
                let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = row.iter().map(|s| (s - mx).exp()).sum();
                total += mx + z.ln() - row[c[b]];
                for o in 0..k {
                    grad[[b, o]] = (row[o] - mx).exp() / z * inv;
                }
                grad[[b, c[b]]] -= inv;
            }
        }
        LossKind::TruncatedCrossEntropy => {
            let c = classes(labels, k)?;
            for b in 0..m {
                let row = scores.row(b);
                let sc = row[c[b]];
                // Scale by e^{-top} so large wrong scores cannot overflow.
                let top = row.iter().map(|s| s - sc).fold(0.0, f64::max);
                let scale = (-top).exp();
                let mut f = 0.0;
                for o in 0..k {
                    f += if o == c[b] { scale } else { scaled_f(row[o] - sc, top) };
                }
                total += top + f.ln();
                let mut sum = 0.0;
                for o in 0..k {
                    if o == c[b] {
                        continue;
                    }
                    let g = scaled_df(row[o] - sc, top) / f * inv;
                    grad[[b, o]] = g;
                    sum += g;
                }
                grad[[b, c[b]]] = -sum;
            }
        }
        LossKind::Margin { gamma } => {
            if gamma < 0.0 {
                return Err(Error::Invalid(format!("margin {gamma} is negative")));
            }
            let c = classes(labels, k)?;
            for b in 0..m {
                let row = scores.row(b);
                let other = (0..k).filter(|&o| o != c[b]).map(|o| row[o]).fold(f64::NEG_INFINITY, f64::max);
                if row[c[b]] <= gamma + other {
                    total += 1.0;
                }
            }
        }
    }
    Ok((total * inv, grad))
}

fn scaled_f(x: f64, top: f64) -> f64 {
    if x >= KNOT {
        (x - top).exp()
    } else {
        trunc_f(x) * (-top).exp()
    }
}

fn scaled_df(x: f64, top: f64) -> f64 {
    if x >= KNOT {
        (x - top).exp()
    } else {
        trunc_df(x) * (-top).exp()
    }
}

/// Fraction of rows whose arg-max (first on ties) differs from the label.
pub fn classification_error(scores: ArrayView2<f64>, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let wrong = labels
        .iter()
        .enumerate()
        .filter(|&(b, &c)| argmax(scores.row(b).iter().copied()) != c)
        .count();
    wrong as f64 / labels.len() as f64
}

pub fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}
