use crate::error::{Error, Result};
use crate::netgraph::{enumerate_paths, NetworkGraph, PathSet};
use nalgebra::DMatrix;
use ndarray::Array2;

pub const DEFAULT_SV_THRESHOLD: f64 = 1e-10;

/// J[p, e] = ∂π_p/∂w_e over edges, with the 0/1 path-edge incidence matrix.
#[derive(Clone, Debug)]
pub struct PathJacobian {
    pub paths: PathSet,
    pub j: Array2<f64>,
    pub incidence: Array2<f64>,
}

/// Builds J from per-path products of the other edges, so zero weights need no special case.
pub fn path_jacobian(net: &NetworkGraph, theta: &[f64], cap: usize) -> Result<PathJacobian> {
    net.check_theta(theta)?;
    let paths = enumerate_paths(net, cap)?;
    let mut j = Array2::zeros((paths.len(), net.n_edges()));
    let mut incidence = Array2::zeros((paths.len(), net.n_edges()));
    for (r, path) in paths.paths.iter().enumerate() {
        for (pos, &e) in path.edges.iter().enumerate() {
            let others: f64 = path
                .edges
                .iter()
                .enumerate()
                .filter(|&(q, _)| q != pos)
                .map(|(_, &f)| theta[net.edge(f).param])
                .product();
            j[[r, e]] = others;
            incidence[[r, e]] = 1.0;
        }
    }
    Ok(PathJacobian { paths, j, incidence })
}

/// Numerical rank of the path Jacobian: singular values above `sv_threshold·σ_max`.
pub fn degrees_of_freedom(net: &NetworkGraph, theta: &[f64], sv_threshold: f64, cap: usize) -> Result<usize> {
    if !(sv_threshold > 0.0) {
        return Err(Error::Invalid(format!("singular value threshold {sv_threshold} must be positive")));
    }
    let pj = path_jacobian(net, theta, cap)?;
    let (rows, cols) = pj.j.dim();
    if rows == 0 || cols == 0 {
        return Ok(0);
    }
    let m = DMatrix::from_row_slice(rows, cols, pj.j.as_slice().expect("standard layout"));
    let sv = m.svd(false, false).singular_values;
    let max = sv.max();
    if max == 0.0 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|&&s| s > sv_threshold * max).count())
}
