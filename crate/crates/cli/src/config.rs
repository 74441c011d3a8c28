use anyhow::{anyhow, bail, Context, Result};
use pathgeo::data::{Dataset, Provenance};
use pathgeo::init::{init_gaussian, init_rnn_identity};
use pathgeo::invariance::random_unbalance;
use pathgeo::measures::{AscentConfig, DEFAULT_MARGIN_EPS};
use pathgeo::netgraph::{build_layered, build_layered_with_bias, build_rnn_unrolled, NetJson, RnnSpec};
use pathgeo::train::TrainConfig;
use pathgeo::{NetworkGraph, ParamVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NetConfig {
    Layered {
        dims: Vec<usize>,
        #[serde(default)]
        bias: bool,
    },
    Rnn {
        spec: RnnSpec,
    },
    File {
        path: PathBuf,
    },
}

impl NetConfig {
    pub fn build(&self) -> Result<NetworkGraph> {
        Ok(match self {
            NetConfig::Layered { dims, bias: false } => build_layered(dims)?,
            NetConfig::Layered { dims, bias: true } => build_layered_with_bias(dims)?,
            NetConfig::Rnn { spec } => build_rnn_unrolled(spec)?,
            NetConfig::File { path } => NetJson::load(path).with_context(|| format!("loading net {}", path.display()))?,
        })
    }

    /// Same net with every hidden layer resized to `h`.
    pub fn with_hidden(&self, h: usize) -> Result<NetConfig> {
        match self {
            NetConfig::Layered { dims, bias } => {
                let mut dims = dims.clone();
                let n = dims.len();
                if n < 3 {
                    bail!("a hidden-unit sweep needs at least one hidden layer");
                }
                dims[1..n - 1].iter_mut().for_each(|d| *d = h);
                Ok(NetConfig::Layered { dims, bias: *bias })
            }
            NetConfig::Rnn { spec } => {
                let mut spec = spec.clone();
                spec.hidden.iter_mut().for_each(|d| *d = h);
                Ok(NetConfig::Rnn { spec })
            }
            NetConfig::File { .. } => bail!("cannot resize a net loaded from a file"),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitConfig {
    /// Std 1/√fan-in, bias weights 0.
    #[default]
    Gaussian,
    /// Gaussian followed by random node rescalings with log-normal(0, σ) factors.
    Unbalanced { sigma_log: f64 },
    RnnIdentity { scale: f64 },
    File { path: PathBuf },
}

impl InitConfig {
    pub fn init(&self, net: &NetworkGraph, seed: u64) -> Result<ParamVector> {
        Ok(match self {
            InitConfig::Gaussian => init_gaussian(net, seed),
            InitConfig::Unbalanced { sigma_log } => random_unbalance(net, &init_gaussian(net, seed), seed, *sigma_log)?,
            InitConfig::RnnIdentity { scale } => {
                if net.rnn().is_none() {
                    bail!("identity initialization needs an RNN");
                }
                init_rnn_identity(net, seed, *scale)
            }
            InitConfig::File { path } => ParamVector::load(path).with_context(|| format!("loading weights {}", path.display()))?,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub dataset: Provenance,
    /// Separate test set; without it the dataset is split.
    #[serde(default)]
    pub test: Option<Provenance>,
    #[serde(default)]
    pub n_train: Option<usize>,
    #[serde(default)]
    pub n_test: usize,
}

impl DataConfig {
    pub fn load(&self, seed: u64) -> Result<(Dataset, Option<Dataset>)> {
        let full = self.dataset.reconstruct().context("building dataset")?;
        if let Some(test) = &self.test {
            let train = match self.n_train {
                Some(n) if n < full.len() => full.select(&(0..n).collect::<Vec<_>>())?,
                _ => full,
            };
            return Ok((train, Some(test.reconstruct().context("building test set")?)));
        }
        let n_train = self.n_train.unwrap_or(full.len().saturating_sub(self.n_test));
        let (train, test) = full.split(n_train, self.n_test, seed)?;
        Ok((train, if self.n_test > 0 { Some(test) } else { None }))
    }
}

fn default_eps() -> f64 {
    DEFAULT_MARGIN_EPS
}
fn default_pq() -> Vec<(f64, f64)> {
    vec![(1.0, f64::INFINITY), (2.0, 2.0), (2.0, f64::INFINITY)]
}
fn default_phi() -> Vec<f64> {
    vec![1.0, 2.0]
}
fn default_alpha_grid() -> Vec<f64> {
    vec![0.01, 0.02, 0.05, 0.1]
}
fn default_perturb() -> usize {
    1000
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureConfig {
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// (p, q) pairs; write ∞ as "inf".
    #[serde(default = "default_pq", with = "exponent_pairs")]
    pub pq_grid: Vec<(f64, f64)>,
    #[serde(default = "default_phi")]
    pub phi_grid: Vec<f64>,
    #[serde(default = "default_alpha_grid")]
    pub alpha_grid: Vec<f64>,
    #[serde(default = "default_perturb")]
    pub n_perturb: usize,
    /// Box radius for max-sharpness; skipped when absent.
    #[serde(default)]
    pub sharpness_alpha: Option<f64>,
    #[serde(default)]
    pub ascent: AscentConfig,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        serde_json::from_value(Value::Object(Default::default())).expect("defaults")
    }
}

/// Norm exponents in JSON: numbers, or "inf".
mod exponent_pairs {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};
    use serde_json::Value;

    fn to_json(x: f64) -> Value {
        if x.is_infinite() {
            Value::String("inf".into())
        } else {
            x.into()
        }
    }

    fn from_json(v: &Value) -> Option<f64> {
        match v {
            Value::Number(n) => n.as_f64(),
            Value::String(s) if s == "inf" => Some(f64::INFINITY),
            _ => None,
        }
    }

    pub fn serialize<S: Serializer>(pairs: &[(f64, f64)], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(pairs.iter().map(|(p, q)| [to_json(*p), to_json(*q)]))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<(f64, f64)>, D::Error> {
        let raw: Vec<[Value; 2]> = Vec::deserialize(d)?;
        raw.iter()
            .map(|[p, q]| match (from_json(p), from_json(q)) {
                (Some(p), Some(q)) => Ok((p, q)),
                _ => Err(D::Error::custom("exponent must be a number or \"inf\"")),
            })
            .collect()
    }
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed: data split, initialization, minibatch order and measurement draws.
    #[serde(default)]
    pub seed: u64,
    pub net: NetConfig,
    #[serde(default)]
    pub init: InitConfig,
    pub data: DataConfig,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub measure: MeasureConfig,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
}

/// Loaded config plus the hash of its resolved form.
pub struct Resolved {
    pub cfg: ExperimentConfig,
    pub hash: String,
}

impl Resolved {
    pub fn train_config(&self) -> Result<TrainConfig> {
        let mut t = self.cfg.train.clone().ok_or_else(|| anyhow!("config has no `train` section"))?;
        t.optimizer.seed = self.cfg.seed;
        Ok(t)
    }
}

/// Sets `path` (dot separated) in a JSON object, creating objects as needed.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, key) in parts.iter().enumerate() {
        let obj = cur.as_object_mut().ok_or_else(|| anyhow!("`{path}`: `{key}` is not inside an object"))?;
        if i + 1 == parts.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!()
}

/// Parses `value` as JSON, falling back to a plain string.
pub fn parse_value(value: &str) -> Value {
    serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()))
}

pub fn hash_value(v: &Value) -> String {
    let digest = Sha256::digest(serde_json::to_string(v).expect("json").as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Reads a config file, applies `overrides` (dotted path, value) and validates it.
pub fn load(path: &Path, overrides: &[(String, Value)]) -> Result<Resolved> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut raw: Value = serde_json::from_str(&text)
        .map_err(|e| anyhow!("{}:{}:{}: {}", path.display(), e.line(), e.column(), e))?;
    for (k, v) in overrides {
        set_path(&mut raw, k, v.clone())?;
    }
    let cfg: ExperimentConfig = serde_json::from_value(raw).map_err(|e| {
        // Locate the error in the original text when no override touched it.
        match serde_json::from_str::<ExperimentConfig>(&text) {
            Err(orig) if overrides.is_empty() => anyhow!("{}:{}:{}: {}", path.display(), orig.line(), orig.column(), orig),
            _ => anyhow!("{}: {}", path.display(), e),
        }
    })?;
    if let Some(t) = &cfg.train {
        t.validate().context("train section")?;
    }
    // The output location does not affect results, so it stays out of the hash.
    let mut resolved = serde_json::to_value(&cfg)?;
    if let Some(obj) = resolved.as_object_mut() {
        obj.remove("out_dir");
    }
    Ok(Resolved { hash: hash_value(&resolved), cfg })
}
