use ndarray::{Array1, ArrayView2};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpectralEstimate {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Largest singular value by power iteration on WᵀW. Stops once the relative
/// change of the estimate drops below `tol`; otherwise returns the last
/// estimate with `converged = false`.
pub fn spectral_norm(w: ArrayView2<f64>, tol: f64, max_iter: usize) -> SpectralEstimate {
    let n = w.ncols();
    if n == 0 || w.nrows() == 0 || w.iter().all(|&x| x == 0.0) {
        return SpectralEstimate { value: 0.0, converged: true, iterations: 0 };
    }
    // Deterministic start that is not orthogonal to any coordinate axis.
    let mut v = Array1::from_iter((0..n).map(|i| 1.0 + 0.37 * ((i as f64 + 1.0) * 1.618).sin()));
    v /= v.dot(&v).sqrt();
    let mut sigma2 = 0.0;
    for it in 1..=max_iter {
        let u = w.dot(&v);
        let mut next = w.t().dot(&u);
        let norm = next.dot(&next).sqrt();
        if norm == 0.0 {
            return SpectralEstimate { value: 0.0, converged: true, iterations: it };
        }
        next /= norm;
        let wu = w.dot(&next);
        let est = wu.dot(&wu);
        let change = (est - sigma2).abs() / est;
        sigma2 = est;
        v = next;
        if change <= tol {
            return SpectralEstimate { value: sigma2.sqrt(), converged: true, iterations: it };
        }
    }
    SpectralEstimate { value: sigma2.sqrt(), converged: false, iterations: max_iter }
}

/// Spectral norm with tight defaults.
pub fn spectral(w: ArrayView2<f64>) -> f64 {
    spectral_norm(w, 1e-15, 100_000).value
}
