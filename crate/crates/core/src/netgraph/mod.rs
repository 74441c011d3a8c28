//! Feedforward networks with shared weights, represented as explicit DAGs.
//!
//! Nodes are sources (inputs and constant-1 bias nodes), hidden ReLU units
//! or linear outputs. Every edge carries a parameter id; edges with equal ids
//! share one weight.

mod build;
pub(crate) mod eval;
mod io;
mod params;
mod paths;

pub use build::{build_layered, build_layered_with_bias, build_rnn_unrolled, LayerInfo, Readout, RnnLayout, RnnSpec};
pub use eval::{backprop, backward, forward, Backprop, ForwardTrace};
pub use io::NetJson;
pub use params::ParamVector;
pub use paths::{count_paths, enumerate_paths, Path, PathSet, DEFAULT_PATH_CAP};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BinaryHeap;
use std::cmp::Reverse;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Input,
    /// Source node whose output is the constant 1.
    Bias,
    /// ReLU unit.
    Hidden,
    /// Linear output unit.
    Output,
}

impl NodeKind {
    pub fn is_source(self) -> bool {
        matches!(self, NodeKind::Input | NodeKind::Bias)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub param: usize,
}

/// Extra structure remembered by the builders.
#[derive(Clone, Debug, PartialEq)]
pub enum Structure {
    General,
    Layered { dims: Vec<usize>, bias: bool, layers: Vec<LayerInfo> },
    Rnn(RnnLayout),
}

#[derive(Clone, Debug)]
pub struct NetworkGraph {
    kinds: Vec<NodeKind>,
    edges: Vec<Edge>,
    n_params: usize,
    order: Vec<usize>,
    in_ptr: Vec<usize>,
    in_idx: Vec<usize>,
    out_ptr: Vec<usize>,
    out_idx: Vec<usize>,
    param_ptr: Vec<usize>,
    param_idx: Vec<usize>,
    inputs: Vec<usize>,
    outputs: Vec<usize>,
    structure: Structure,
}

fn csr(n: usize, keys: impl Iterator<Item = usize> + Clone) -> (Vec<usize>, Vec<usize>) {
    let mut ptr = vec![0usize; n + 1];
    for k in keys.clone() {
        ptr[k + 1] += 1;
    }
    for i in 0..n {
        ptr[i + 1] += ptr[i];
    }
    let mut fill = ptr.clone();
    let mut idx = vec![0usize; ptr[n]];
    for (e, k) in keys.enumerate() {
        idx[fill[k]] = e;
        fill[k] += 1;
    }
    (ptr, idx)
}

impl NetworkGraph {
    /// Validates and indexes a graph. Parameters that no edge uses are allowed
    /// (an unrolled RNN with one step has an idle recurrent matrix).
    pub fn new(kinds: Vec<NodeKind>, edges: Vec<Edge>, n_params: usize) -> Result<Self> {
        Self::with_structure(kinds, edges, n_params, Structure::General)
    }

    pub(crate) fn with_structure(
        kinds: Vec<NodeKind>,
        edges: Vec<Edge>,
        n_params: usize,
        structure: Structure,
    ) -> Result<Self> {
        let n = kinds.len();
        let bad = |m: String| Err(Error::InvalidArchitecture(m));
        for (i, e) in edges.iter().enumerate() {
            if e.src >= n || e.dst >= n {
                return bad(format!("edge {i} references a missing node"));
            }
            if e.src == e.dst {
                return bad(format!("edge {i} is a self-loop"));
            }
            if e.param >= n_params {
                return bad(format!("edge {i} uses param {} >= {n_params}", e.param));
            }
            if kinds[e.dst].is_source() {
                return bad(format!("edge {i} enters source node {}", e.dst));
            }
            if kinds[e.src] == NodeKind::Output {
                return bad(format!("edge {i} leaves output node {}", e.src));
            }
        }
        let inputs: Vec<usize> = (0..n).filter(|&v| kinds[v] == NodeKind::Input).collect();
        let outputs: Vec<usize> = (0..n).filter(|&v| kinds[v] == NodeKind::Output).collect();
        if inputs.is_empty() || outputs.is_empty() {
            return bad("need at least one input and one output".into());
        }
        let (in_ptr, in_idx) = csr(n, edges.iter().map(|e| e.dst));
        let (out_ptr, out_idx) = csr(n, edges.iter().map(|e| e.src));
        let (param_ptr, param_idx) = csr(n_params, edges.iter().map(|e| e.param));

        // Kahn's algorithm, smallest id first so the order is canonical.
        let mut indeg: Vec<usize> = (0..n).map(|v| in_ptr[v + 1] - in_ptr[v]).collect();
        let mut heap: BinaryHeap<Reverse<usize>> =
            (0..n).filter(|&v| indeg[v] == 0).map(Reverse).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(Reverse(v)) = heap.pop() {
            order.push(v);
            for &e in &out_idx[out_ptr[v]..out_ptr[v + 1]] {
                let w = edges[e].dst;
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    heap.push(Reverse(w));
                }
            }
        }
        if order.len() != n {
            return bad("graph has a cycle".into());
        }

        let mut from_source = vec![false; n];
        for &v in &order {
            if kinds[v].is_source() {
                from_source[v] = true;
            }
            if from_source[v] {
                for &e in &out_idx[out_ptr[v]..out_ptr[v + 1]] {
                    from_source[edges[e].dst] = true;
                }
            }
        }
        let mut to_output = vec![false; n];
        for &v in order.iter().rev() {
            if kinds[v] == NodeKind::Output {
                to_output[v] = true;
            }
            if to_output[v] {
                for &e in &in_idx[in_ptr[v]..in_ptr[v + 1]] {
                    to_output[edges[e].src] = true;
                }
            }
        }
        for v in 0..n {
            if kinds[v] == NodeKind::Hidden && !(from_source[v] && to_output[v]) {
                return bad(format!("hidden node {v} is not on an input-output path"));
            }
        }
        Ok(NetworkGraph {
            kinds,
            edges,
            n_params,
            order,
            in_ptr,
            in_idx,
            out_ptr,
            out_idx,
            param_ptr,
            param_idx,
            inputs,
            outputs,
            structure,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.kinds.len()
    }
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }
    pub fn n_params(&self) -> usize {
        self.n_params
    }
    pub fn kind(&self, v: usize) -> NodeKind {
        self.kinds[v]
    }
    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }
    pub fn edge(&self, e: usize) -> Edge {
        self.edges[e]
    }
    /// Nodes in topological order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }
    /// Incoming edge ids of `v`, ascending.
    pub fn in_edges(&self, v: usize) -> &[usize] {
        &self.in_idx[self.in_ptr[v]..self.in_ptr[v + 1]]
    }
    /// Outgoing edge ids of `v`, ascending.
    pub fn out_edges(&self, v: usize) -> &[usize] {
        &self.out_idx[self.out_ptr[v]..self.out_ptr[v + 1]]
    }
    /// Edge set E_i of parameter `i`.
    pub fn param_edges(&self, i: usize) -> &[usize] {
        &self.param_idx[self.param_ptr[i]..self.param_ptr[i + 1]]
    }
    pub fn inputs(&self) -> &[usize] {
        &self.inputs
    }
    pub fn outputs(&self) -> &[usize] {
        &self.outputs
    }
    pub fn n_inputs(&self) -> usize {
        self.inputs.len()
    }
    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }
    pub fn hidden_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_nodes()).filter(|&v| self.kinds[v] == NodeKind::Hidden)
    }
    pub fn n_hidden(&self) -> usize {
        self.hidden_nodes().count()
    }
    pub fn structure(&self) -> &Structure {
        &self.structure
    }
    /// True when some parameter is used by more than one edge.
    pub fn has_sharing(&self) -> bool {
        (0..self.n_params).any(|i| self.param_edges(i).len() > 1)
    }
    /// Parameters that no edge uses.
    pub fn unused_params(&self) -> Vec<usize> {
        (0..self.n_params).filter(|&i| self.param_edges(i).is_empty()).collect()
    }
    /// Length (in edges) of the longest input-output path.
    pub fn depth(&self) -> usize {
        let mut len = vec![0usize; self.n_nodes()];
        let mut best = 0;
        for &v in &self.order {
            for &e in self.in_edges(v) {
                len[v] = len[v].max(len[self.edges[e].src] + 1);
            }
            if self.kinds[v] == NodeKind::Output {
                best = best.max(len[v]);
            }
        }
        best
    }
    /// Layer table of a net made by [`build_layered`].
    pub fn layers(&self) -> Option<&[LayerInfo]> {
        match &self.structure {
            Structure::Layered { layers, .. } => Some(layers),
            _ => None,
        }
    }
    pub fn dims(&self) -> Option<&[usize]> {
        match &self.structure {
            Structure::Layered { dims, .. } => Some(dims),
            _ => None,
        }
    }
    pub fn rnn(&self) -> Option<&RnnLayout> {
        match &self.structure {
            Structure::Rnn(l) => Some(l),
            _ => None,
        }
    }

    /// Edge weights w_e = θ_{π(e)}.
    pub fn edge_weights(&self, theta: &[f64]) -> Vec<f64> {
        self.edges.iter().map(|e| theta[e.param]).collect()
    }

    pub(crate) fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.n_params {
            return Err(Error::ContractViolation(format!(
                "expected {} params, got {}",
                self.n_params,
                theta.len()
            )));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::NumericInput("parameters".into()));
        }
        Ok(())
    }
}
