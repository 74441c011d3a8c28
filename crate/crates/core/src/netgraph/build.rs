use super::{Edge, NetworkGraph, NodeKind, Structure};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// One weight layer of a layered net. `W[j, i]` is θ[weight_offset + j * cols + i].
#[derive(Clone, Debug, PartialEq)]
pub struct LayerInfo {
    pub rows: usize,
    pub cols: usize,
    pub weight_offset: usize,
    pub bias_offset: Option<usize>,
    /// Node id of unit 0 of this layer.
    pub first_unit: usize,
    /// Node id of unit 0 of the layer below.
    pub first_input: usize,
    pub bias_node: Option<usize>,
}

impl LayerInfo {
    pub fn weight(&self, j: usize, i: usize) -> usize {
        self.weight_offset + j * self.cols + i
    }
}

/// Fully connected layered net; one parameter per edge.
pub fn build_layered(dims: &[usize]) -> Result<NetworkGraph> {
    layered(dims, false)
}

/// Layered net with a constant-1 bias node feeding every non-input layer.
pub fn build_layered_with_bias(dims: &[usize]) -> Result<NetworkGraph> {
    layered(dims, true)
}

fn layered(dims: &[usize], bias: bool) -> Result<NetworkGraph> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::InvalidArchitecture(format!("layer sizes {dims:?}")));
    }
    let mut kinds = vec![NodeKind::Input; dims[0]];
    let mut edges = Vec::new();
    let mut layers = Vec::new();
    let mut n_params = 0;
    let mut first_input = 0;
    let last = dims.len() - 1;
    for k in 1..dims.len() {
        let (rows, cols) = (dims[k], dims[k - 1]);
        let bias_node = bias.then(|| {
            kinds.push(NodeKind::Bias);
            kinds.len() - 1
        });
        let first_unit = kinds.len();
        let kind = if k == last { NodeKind::Output } else { NodeKind::Hidden };
        kinds.extend(std::iter::repeat_n(kind, rows));
        let weight_offset = n_params;
        n_params += rows * cols;
        let bias_offset = bias.then(|| {
            n_params += rows;
            n_params - rows
        });
        for j in 0..rows {
            for i in 0..cols {
                edges.push(Edge { src: first_input + i, dst: first_unit + j, param: weight_offset + j * cols + i });
            }
            if let (Some(b), Some(off)) = (bias_node, bias_offset) {
                edges.push(Edge { src: b, dst: first_unit + j, param: off + j });
            }
        }
        layers.push(LayerInfo { rows, cols, weight_offset, bias_offset, first_unit, first_input, bias_node });
        first_input = first_unit;
    }
    NetworkGraph::with_structure(
        kinds,
        edges,
        n_params,
        Structure::Layered { dims: dims.to_vec(), bias, layers },
    )
}

/// Which time steps carry output nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    #[default]
    EveryStep,
    LastStep,
}

/// Recurrent net h_t^i = relu(W_in^i h_t^{i-1} + W_rec^i h_{t-1}^i [+ b^i]), y_t = W_out h_t^{L} [+ b_out],
/// with h_0 = 0. Depth is `hidden.len() + 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RnnSpec {
    pub n_in: usize,
    pub hidden: Vec<usize>,
    pub n_out: usize,
    pub steps: usize,
    #[serde(default)]
    pub bias: bool,
    #[serde(default)]
    pub readout: Readout,
}

impl RnnSpec {
    pub fn depth(&self) -> usize {
        self.hidden.len() + 1
    }
}

/// Parameter and node addressing for an unrolled RNN. Time indices are 0-based.
#[derive(Clone, Debug, PartialEq)]
pub struct RnnLayout {
    pub spec: RnnSpec,
    w_in: Vec<usize>,
    w_rec: Vec<usize>,
    b: Vec<Option<usize>>,
    w_out: usize,
    b_out: Option<usize>,
    bias_node: Option<usize>,
    hidden_base: Vec<Vec<usize>>,
    output_base: Vec<Option<usize>>,
}

impl RnnLayout {
    fn width_below(&self, i: usize) -> usize {
        if i == 0 {
            self.spec.n_in
        } else {
            self.spec.hidden[i - 1]
        }
    }
    /// Param id of W_in^i[j, k] (layer i is 0-based).
    pub fn w_in(&self, i: usize, j: usize, k: usize) -> usize {
        self.w_in[i] + j * self.width_below(i) + k
    }
    pub fn w_rec(&self, i: usize, j: usize, k: usize) -> usize {
        self.w_rec[i] + j * self.spec.hidden[i] + k
    }
    pub fn bias(&self, i: usize, j: usize) -> Option<usize> {
        self.b[i].map(|o| o + j)
    }
    pub fn w_out(&self, o: usize, k: usize) -> usize {
        self.w_out + o * self.spec.hidden[self.spec.hidden.len() - 1] + k
    }
    pub fn bias_out(&self, o: usize) -> Option<usize> {
        self.b_out.map(|b| b + o)
    }
    pub fn input_node(&self, t: usize, k: usize) -> usize {
        t * self.spec.n_in + k
    }
    pub fn hidden_node(&self, i: usize, t: usize, j: usize) -> usize {
        self.hidden_base[t][i] + j
    }
    pub fn output_node(&self, t: usize, o: usize) -> Option<usize> {
        self.output_base[t].map(|b| b + o)
    }
    pub fn bias_node(&self) -> Option<usize> {
        self.bias_node
    }
    /// Param id range of W_rec^i.
    pub fn w_rec_range(&self, i: usize) -> std::ops::Range<usize> {
        let h = self.spec.hidden[i];
        self.w_rec[i]..self.w_rec[i] + h * h
    }
}

/// Unrolls an RNN over `spec.steps` steps; all time copies of an edge share one parameter.
pub fn build_rnn_unrolled(spec: &RnnSpec) -> Result<NetworkGraph> {
    if spec.steps == 0 {
        return Err(Error::InvalidArchitecture("sequence length must be at least 1".into()));
    }
    if spec.hidden.is_empty() || spec.n_in == 0 || spec.n_out == 0 || spec.hidden.contains(&0) {
        return Err(Error::InvalidArchitecture(format!("rnn spec {spec:?}")));
    }
    let depth = spec.hidden.len();
    let mut n_params = 0;
    let mut take = |n: usize| {
        n_params += n;
        n_params - n
    };
    let mut w_in = Vec::new();
    let mut w_rec = Vec::new();
    let mut b = Vec::new();
    for i in 0..depth {
        let below = if i == 0 { spec.n_in } else { spec.hidden[i - 1] };
        w_in.push(take(spec.hidden[i] * below));
        w_rec.push(take(spec.hidden[i] * spec.hidden[i]));
        b.push(spec.bias.then(|| take(spec.hidden[i])));
    }
    let w_out = take(spec.n_out * spec.hidden[depth - 1]);
    let b_out = spec.bias.then(|| take(spec.n_out));

    let t_len = spec.steps;
    let mut kinds = vec![NodeKind::Input; t_len * spec.n_in];
    let bias_node = spec.bias.then(|| {
        kinds.push(NodeKind::Bias);
        kinds.len() - 1
    });
    let mut hidden_base = Vec::with_capacity(t_len);
    let mut output_base = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let mut bases = Vec::with_capacity(depth);
        for &h in &spec.hidden {
            bases.push(kinds.len());
            kinds.extend(std::iter::repeat_n(NodeKind::Hidden, h));
        }
        hidden_base.push(bases);
        let has_out = spec.readout == Readout::EveryStep || t + 1 == t_len;
        output_base.push(has_out.then(|| {
            kinds.extend(std::iter::repeat_n(NodeKind::Output, spec.n_out));
            kinds.len() - spec.n_out
        }));
    }
    let layout = RnnLayout {
        spec: spec.clone(),
        w_in,
        w_rec,
        b,
        w_out,
        b_out,
        bias_node,
        hidden_base,
        output_base,
    };

    let mut edges = Vec::new();
    for t in 0..t_len {
        for i in 0..depth {
            let below = layout.width_below(i);
            for j in 0..spec.hidden[i] {
                let dst = layout.hidden_node(i, t, j);
                for k in 0..below {
                    let src = if i == 0 { layout.input_node(t, k) } else { layout.hidden_node(i - 1, t, k) };
                    edges.push(Edge { src, dst, param: layout.w_in(i, j, k) });
                }
                if t > 0 {
                    for k in 0..spec.hidden[i] {
                        edges.push(Edge { src: layout.hidden_node(i, t - 1, k), dst, param: layout.w_rec(i, j, k) });
                    }
                }
                if let (Some(bn), Some(p)) = (bias_node, layout.bias(i, j)) {
                    edges.push(Edge { src: bn, dst, param: p });
                }
            }
        }
        if layout.output_base[t].is_some() {
            let top = depth - 1;
            for o in 0..spec.n_out {
                let dst = layout.output_node(t, o).unwrap();
                for k in 0..spec.hidden[top] {
                    edges.push(Edge { src: layout.hidden_node(top, t, k), dst, param: layout.w_out(o, k) });
                }
                if let (Some(bn), Some(p)) = (bias_node, layout.bias_out(o)) {
                    edges.push(Edge { src: bn, dst, param: p });
                }
            }
        }
    }
    NetworkGraph::with_structure(kinds, edges, n_params, Structure::Rnn(layout))
}
