use super::{ForwardTrace, NetworkGraph, NodeKind};
use crate::error::{Error, Result};

pub const DEFAULT_PATH_CAP: usize = 1_000_000;

/// A directed source-to-output path, stored as edge ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Path {
    pub edges: Vec<usize>,
}

impl Path {
    /// Source node the path starts from.
    pub fn head(&self, net: &NetworkGraph) -> usize {
        net.edge(self.edges[0]).src
    }
    pub fn tail(&self, net: &NetworkGraph) -> usize {
        net.edge(*self.edges.last().unwrap()).dst
    }
    /// π_p(w): product of edge weights along the path.
    pub fn weight_product(&self, net: &NetworkGraph, theta: &[f64]) -> f64 {
        self.edges.iter().map(|&e| theta[net.edge(e).param]).product()
    }
    /// g_p(x): 1 when every hidden node on the path is active for example `b`.
    pub fn activity(&self, net: &NetworkGraph, trace: &ForwardTrace, b: usize) -> f64 {
        let active = self.edges.iter().all(|&e| {
            let v = net.edge(e).dst;
            net.kind(v) != NodeKind::Hidden || trace.z(v)[b] > 0.0
        });
        if active {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug)]
pub struct PathSet {
    pub paths: Vec<Path>,
}

impl PathSet {
    pub fn len(&self) -> usize {
        self.paths.len()
    }
    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
    /// Paths ending at output node `v`.
    pub fn ending_at<'a>(&'a self, net: &'a NetworkGraph, v: usize) -> impl Iterator<Item = &'a Path> + 'a {
        self.paths.iter().filter(move |p| p.tail(net) == v)
    }
}

/// Number of source-to-output paths, by dynamic programming (saturating).
pub fn count_paths(net: &NetworkGraph) -> u128 {
    let mut count = vec![0u128; net.n_nodes()];
    let mut total = 0u128;
    for &v in net.order() {
        if net.kind(v).is_source() {
            count[v] = 1;
        }
        for &e in net.in_edges(v) {
            count[v] = count[v].saturating_add(count[net.edge(e).src]);
        }
        if net.kind(v) == NodeKind::Output {
            total = total.saturating_add(count[v]);
        }
    }
    total
}

/// Exhaustive path list: sources by id, then edges by id (depth first).
pub fn enumerate_paths(net: &NetworkGraph, cap: usize) -> Result<PathSet> {
    let found = count_paths(net);
    if found > cap as u128 {
        return Err(Error::TooManyPaths { found, cap });
    }
    let mut paths = Vec::with_capacity(found as usize);
    let mut stack = Vec::new();
    for v in 0..net.n_nodes() {
        if net.kind(v).is_source() {
            walk(net, v, &mut stack, &mut paths);
        }
    }
    Ok(PathSet { paths })
}

fn walk(net: &NetworkGraph, v: usize, stack: &mut Vec<usize>, out: &mut Vec<Path>) {
    if net.kind(v) == NodeKind::Output {
        out.push(Path { edges: stack.clone() });
        return;
    }
    for &e in net.out_edges(v) {
        stack.push(e);
        walk(net, net.edge(e).dst, stack, out);
        stack.pop();
    }
}
