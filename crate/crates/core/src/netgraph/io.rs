use super::{build_layered, build_layered_with_bias, build_rnn_unrolled, Edge, NetworkGraph, NodeKind, RnnSpec, Structure};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// JSON form of a net: `{nodes, edges: [[u, v, param]], n_params, dims?, bias?, rnn_spec?}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetJson {
    #[serde(default)]
    pub nodes: Vec<NodeKind>,
    #[serde(default)]
    pub edges: Vec<[usize; 3]>,
    #[serde(default)]
    pub n_params: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub bias: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rnn_spec: Option<RnnSpec>,
}

impl NetJson {
    pub fn from_net(net: &NetworkGraph) -> Self {
        let (dims, bias, rnn_spec) = match net.structure() {
            Structure::General => (None, false, None),
            Structure::Layered { dims, bias, .. } => (Some(dims.clone()), *bias, None),
            Structure::Rnn(l) => (None, l.spec.bias, Some(l.spec.clone())),
        };
        NetJson {
            nodes: net.kinds().to_vec(),
            edges: net.edges().iter().map(|e| [e.src, e.dst, e.param]).collect(),
            n_params: net.n_params(),
            dims,
            bias,
            rnn_spec,
        }
    }

    /// Rebuilds the net. Layered and RNN descriptions are regenerated by their
    /// builders and must agree with any explicit node/edge lists.
    pub fn to_net(&self) -> Result<NetworkGraph> {
        let structured = if let Some(spec) = &self.rnn_spec {
            Some(build_rnn_unrolled(spec)?)
        } else if let Some(dims) = &self.dims {
            Some(if self.bias { build_layered_with_bias(dims)? } else { build_layered(dims)? })
        } else {
            None
        };
        match structured {
            Some(net) => {
                let same = (self.nodes.is_empty() || self.nodes == net.kinds())
                    && (self.edges.is_empty() || NetJson::from_net(&net).edges == self.edges);
                if !same {
                    return Err(Error::Format("node/edge lists disagree with the declared structure".into()));
                }
                Ok(net)
            }
            None => NetworkGraph::new(
                self.nodes.clone(),
                self.edges.iter().map(|&[src, dst, param]| Edge { src, dst, param }).collect(),
                self.n_params,
            ),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<NetworkGraph> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str::<NetJson>(&text)?.to_net()
    }

    pub fn save(net: &NetworkGraph, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&NetJson::from_net(net))?)?;
        Ok(())
    }
}
