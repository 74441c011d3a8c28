//! Datasets: synthetic generators, MNIST IDX ingestion and label manipulations.
//! Every dataset carries a provenance record that rebuilds it exactly.

pub mod idx;

use crate::error::{Error, Result};
use crate::netgraph::{forward, NetJson, NetworkGraph};
use crate::optim::{argmax, Batch, Labels};
use crate::rng::{indexed_stream, stream, streams};
use idx::{IdxArray, IMAGES_MAGIC, LABELS_MAGIC};
use ndarray::{Array2, Axis};
use rand::seq::{index::sample, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    Classes { labels: Vec<usize>, n_classes: usize },
    Values(Array2<f64>),
}

/// Where the raw samples come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Source {
    Addition { steps: usize, m: usize, seed: u64 },
    MnistIdx { images: PathBuf, labels: PathBuf },
    Blobs { n_in: usize, n_classes: usize, m: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Transform {
    Subset { indices: Vec<usize> },
    Downsample { side: usize },
    RandomizeLabels { fraction: f64, seed: u64, indices: Vec<usize> },
    Censor { net: NetJson, theta: Vec<f64> },
    /// `base` is the number of rows before the union.
    ConfusionUnion { pool: Box<Provenance>, size: usize, seed: u64, base: usize, pool_indices: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: Source,
    #[serde(default)]
    pub transforms: Vec<Transform>,
}

impl Provenance {
    /// Rebuilds the dataset from scratch.
    pub fn reconstruct(&self) -> Result<Dataset> {
        let mut ds = match &self.source {
            Source::Addition { steps, m, seed } => gen_addition(*steps, *m, *seed)?,
            Source::MnistIdx { images, labels } => load_mnist_idx(images, labels)?,
            Source::Blobs { n_in, n_classes, m, seed } => gen_blobs(*n_in, *n_classes, *m, *seed)?,
        };
        for t in &self.transforms {
            ds = match t {
                Transform::Subset { indices } => ds.select(indices)?,
                Transform::Downsample { side } => downsample(&ds, *side)?,
                Transform::RandomizeLabels { fraction, seed, .. } => randomize_labels(&ds, *fraction, *seed)?,
                Transform::Censor { net, theta } => censor_labels(&ds, &net.to_net()?, theta)?,
                Transform::ConfusionUnion { pool, size, seed, .. } => confusion_union(&ds, &pool.reconstruct()?, *size, *seed)?,
            };
        }
        Ok(ds)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// One row per example; sequences are flattened time-major.
    pub inputs: Array2<f64>,
    pub targets: Targets,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn n_features(&self) -> usize {
        self.inputs.ncols()
    }
    pub fn n_classes(&self) -> Option<usize> {
        match &self.targets {
            Targets::Classes { n_classes, .. } => Some(*n_classes),
            Targets::Values(_) => None,
        }
    }
    pub fn class_labels(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Classes { labels, .. } => Some(labels),
            Targets::Values(_) => None,
        }
    }
    pub fn labels(&self) -> Labels<'_> {
        match &self.targets {
            Targets::Classes { labels, .. } => Labels::Classes(labels),
            Targets::Values(v) => Labels::Values(v.view()),
        }
    }
    pub fn batch(&self) -> Batch<'_> {
        Batch { inputs: self.inputs.view(), labels: self.labels() }
    }

    /// Rows `indices` in the given order, recorded as a subset transform.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Invalid(format!("index {bad} out of range for {} samples", self.len())));
        }
        let inputs = self.inputs.select(Axis(0), indices);
        let targets = match &self.targets {
            Targets::Classes { labels, n_classes } => Targets::Classes {
                labels: indices.iter().map(|&i| labels[i]).collect(),
                n_classes: *n_classes,
            },
            Targets::Values(v) => Targets::Values(v.select(Axis(0), indices)),
        };
        Ok(Dataset { inputs, targets, provenance: self.provenance.with(Transform::Subset { indices: indices.to_vec() }) })
    }

    /// Seeded disjoint train/test split of sizes `n_train` and `n_test`.
    pub fn split(&self, n_train: usize, n_test: usize, seed: u64) -> Result<(Dataset, Dataset)> {
        if n_train + n_test > self.len() {
            return Err(Error::InsufficientData(format!("{} samples cannot be split into {n_train}+{n_test}", self.len())));
        }
        let mut perm: Vec<usize> = (0..self.len()).collect();
        perm.shuffle(&mut stream(seed, streams::DATA));
        Ok((self.select(&perm[..n_train])?, self.select(&perm[n_train..n_train + n_test])?))
    }

    /// Minibatch view over `indices` (owned copy).
    pub fn gather(&self, indices: &[usize]) -> OwnedBatch {
        let inputs = self.inputs.select(Axis(0), indices);
        let targets = match &self.targets {
            Targets::Classes { labels, n_classes } => Targets::Classes {
                labels: indices.iter().map(|&i| labels[i]).collect(),
                n_classes: *n_classes,
            },
            Targets::Values(v) => Targets::Values(v.select(Axis(0), indices)),
        };
        OwnedBatch { inputs, targets }
    }

    /// Flags marking samples added by a confusion-set union (false elsewhere).
    pub fn confusion_flags(&self) -> Vec<bool> {
        let mut flags = Vec::new();
        for t in &self.provenance.transforms {
            match t {
                Transform::ConfusionUnion { size, base, .. } => {
                    flags.resize(*base, false);
                    flags.extend(std::iter::repeat_n(true, *size));
                }
                Transform::Subset { indices } => {
                    flags = indices.iter().map(|&i| flags.get(i).copied().unwrap_or(false)).collect();
                }
                _ => {}
            }
        }
        flags.resize(self.len(), false);
        flags
    }
}

impl Provenance {
    fn with(&self, t: Transform) -> Provenance {
        let mut p = self.clone();
        p.transforms.push(t);
        p
    }
}

#[derive(Clone, Debug)]
pub struct OwnedBatch {
    pub inputs: Array2<f64>,
    pub targets: Targets,
}

impl OwnedBatch {
    pub fn view(&self) -> Batch<'_> {
        let labels = match &self.targets {
            Targets::Classes { labels, .. } => Labels::Classes(labels),
            Targets::Values(v) => Labels::Values(v.view()),
        };
        Batch { inputs: self.inputs.view(), labels }
    }
}

/// Addition task: each step carries (value ~ U[0,1), mask bit); exactly two
/// mask bits are set and the target is the sum of the two marked values.
/// Inputs are laid out as [v_0, m_0, v_1, m_1, …].
pub fn gen_addition(steps: usize, m: usize, seed: u64) -> Result<Dataset> {
    if steps < 2 {
        return Err(Error::Invalid("addition task needs at least 2 steps".into()));
    }
    let mut rng = stream(seed, streams::DATA);
    let mut inputs = Array2::zeros((m, 2 * steps));
    let mut y = Array2::zeros((m, 1));
    for b in 0..m {
        for t in 0..steps {
            inputs[[b, 2 * t]] = rng.random::<f64>();
        }
        let marks = sample(&mut rng, steps, 2);
        let mut sum = 0.0;
        for t in marks.iter() {
            inputs[[b, 2 * t + 1]] = 1.0;
            sum += inputs[[b, 2 * t]];
        }
        y[[b, 0]] = sum;
    }
    Ok(Dataset {
        inputs,
        targets: Targets::Values(y),
        provenance: Provenance { source: Source::Addition { steps, m, seed }, transforms: vec![] },
    })
}

/// Gaussian class clusters with unit-norm random centers scaled by 3.
pub fn gen_blobs(n_in: usize, n_classes: usize, m: usize, seed: u64) -> Result<Dataset> {
    if n_in == 0 || n_classes < 2 {
        return Err(Error::Invalid("blobs need n_in >= 1 and at least 2 classes".into()));
    }
    let mut rng = stream(seed, streams::DATA);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let centers: Vec<Vec<f64>> = (0..n_classes)
        .map(|_| {
            let c: Vec<f64> = (0..n_in).map(|_| normal.sample(&mut rng)).collect();
            let n = c.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            c.into_iter().map(|x| 3.0 * x / n).collect()
        })
        .collect();
    let mut inputs = Array2::zeros((m, n_in));
    let mut labels = Vec::with_capacity(m);
    for b in 0..m {
        let c = b % n_classes;
        for k in 0..n_in {
            inputs[[b, k]] = centers[c][k] + normal.sample(&mut rng);
        }
        labels.push(c);
    }
    Ok(Dataset {
        inputs,
        targets: Targets::Classes { labels, n_classes },
        provenance: Provenance { source: Source::Blobs { n_in, n_classes, m, seed }, transforms: vec![] },
    })
}

/// MNIST-style IDX pair (plain or gzipped); pixels scaled to [0, 1].
pub fn load_mnist_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset> {
    let img = IdxArray::read(images.as_ref())?;
    let lab = IdxArray::read(labels.as_ref())?;
    if img.magic() != IMAGES_MAGIC {
        return Err(Error::Format(format!("image file magic {:#010x}", img.magic())));
    }
    if lab.magic() != LABELS_MAGIC {
        return Err(Error::Format(format!("label file magic {:#010x}", lab.magic())));
    }
    let (n, rows, cols) = (img.dims[0], img.dims[1], img.dims[2]);
    if lab.dims[0] != n {
        return Err(Error::Format(format!("{n} images but {} labels", lab.dims[0])));
    }
    let inputs = Array2::from_shape_vec((n, rows * cols), img.data.iter().map(|&p| p as f64 / 255.0).collect())
        .expect("shape checked by IDX parser");
    let classes: Vec<usize> = lab.data.iter().map(|&l| l as usize).collect();
    if let Some(&bad) = classes.iter().find(|&&l| l > 9) {
        return Err(Error::Format(format!("label {bad} outside 0-9")));
    }
    Ok(Dataset {
        inputs,
        targets: Targets::Classes { labels: classes, n_classes: 10 },
        provenance: Provenance {
            source: Source::MnistIdx { images: images.as_ref().to_path_buf(), labels: labels.as_ref().to_path_buf() },
            transforms: vec![],
        },
    })
}

/// Area-weighted resampling of square images to `side`×`side`.
pub fn downsample(ds: &Dataset, side: usize) -> Result<Dataset> {
    let n_in = ds.n_features();
    let src = (n_in as f64).sqrt().round() as usize;
    if src * src != n_in || side == 0 || side > src {
        return Err(Error::Invalid(format!("cannot downsample {n_in} features to {side}x{side}")));
    }
    let weights = bin_weights(src, side);
    let mut out = Array2::zeros((ds.len(), side * side));
    for (b, row) in ds.inputs.outer_iter().enumerate() {
        for (i, wi) in weights.iter().enumerate() {
            for (j, wj) in weights.iter().enumerate() {
                let mut acc = 0.0;
                for &(r, a) in wi {
                    for &(c, bw) in wj {
                        acc += a * bw * row[r * src + c];
                    }
                }
                out[[b, i * side + j]] = acc;
            }
        }
    }
    Ok(Dataset { inputs: out, targets: ds.targets.clone(), provenance: ds.provenance.with(Transform::Downsample { side }) })
}

/// For each output bin, the source indices and their normalized overlap weights.
fn bin_weights(src: usize, side: usize) -> Vec<Vec<(usize, f64)>> {
    let width = src as f64 / side as f64;
    (0..side)
        .map(|i| {
            let (lo, hi) = (i as f64 * width, (i + 1) as f64 * width);
            (lo.floor() as usize..(hi.ceil() as usize).min(src))
                .filter_map(|r| {
                    let overlap = (hi.min(r as f64 + 1.0) - lo.max(r as f64)).max(0.0);
                    (overlap > 0.0).then_some((r, overlap / width))
                })
                .collect()
        })
        .collect()
}

/// Resamples exactly ⌊fraction·m⌋ labels (chosen without replacement) uniformly over the classes.
pub fn randomize_labels(ds: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Invalid(format!("fraction {fraction} outside [0, 1]")));
    }
    let Targets::Classes { labels, n_classes } = &ds.targets else {
        return Err(Error::Invalid("label randomization needs class labels".into()));
    };
    let m = ds.len();
    let count = (fraction * m as f64).floor() as usize;
    let mut rng = stream(seed, streams::LABELS);
    let mut chosen: Vec<usize> = sample(&mut rng, m, count).into_vec();
    chosen.sort_unstable();
    let mut new = labels.clone();
    for &i in &chosen {
        new[i] = rng.random_range(0..*n_classes);
    }
    Ok(Dataset {
        inputs: ds.inputs.clone(),
        targets: Targets::Classes { labels: new, n_classes: *n_classes },
        provenance: ds.provenance.with(Transform::RandomizeLabels { fraction, seed, indices: chosen }),
    })
}

/// Replaces every label with the arg-max prediction of `net`.
pub fn censor_labels(ds: &Dataset, net: &NetworkGraph, theta: &[f64]) -> Result<Dataset> {
    let Some(k) = ds.n_classes() else {
        return Err(Error::Invalid("censoring needs class labels".into()));
    };
    if net.n_outputs() != k {
        return Err(Error::ContractViolation(format!("net has {} outputs for {k} classes", net.n_outputs())));
    }
    let scores = forward(net, theta, ds.inputs.view())?.outputs(net);
    let labels = scores.outer_iter().map(|r| argmax(r.iter().copied())).collect();
    Ok(Dataset {
        inputs: ds.inputs.clone(),
        targets: Targets::Classes { labels, n_classes: k },
        provenance: ds.provenance.with(Transform::Censor { net: NetJson::from_net(net), theta: theta.to_vec() }),
    })
}

/// Appends `size` samples drawn from `pool` with uniformly random labels.
pub fn confusion_union(train: &Dataset, pool: &Dataset, size: usize, seed: u64) -> Result<Dataset> {
    let Some(k) = train.n_classes() else {
        return Err(Error::Invalid("confusion sets need class labels".into()));
    };
    if size > pool.len() {
        return Err(Error::InsufficientData(format!("confusion size {size} exceeds pool of {}", pool.len())));
    }
    if pool.n_features() != train.n_features() {
        return Err(Error::ContractViolation("pool and train feature counts differ".into()));
    }
    let mut rng = stream(seed, streams::LABELS);
    let picked: Vec<usize> = sample(&mut rng, pool.len(), size).into_vec();
    let extra = pool.inputs.select(Axis(0), &picked);
    let inputs = ndarray::concatenate(Axis(0), &[train.inputs.view(), extra.view()]).expect("same width");
    let mut labels = train.class_labels().unwrap().to_vec();
    labels.extend((0..size).map(|_| rng.random_range(0..k)));
    Ok(Dataset {
        inputs,
        targets: Targets::Classes { labels, n_classes: k },
        provenance: train.provenance.with(Transform::ConfusionUnion {
            pool: Box::new(pool.provenance.clone()),
            size,
            seed,
            base: train.len(),
            pool_indices: picked,
        }),
    })
}

/// Index batches for one epoch: a permutation fixed by (seed, epoch); the last batch may be short.
pub fn minibatches(m: usize, batch_size: usize, seed: u64, epoch: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Invalid("batch size must be at least 1".into()));
    }
    let mut perm: Vec<usize> = (0..m).collect();
    perm.shuffle(&mut indexed_stream(seed, streams::SHUFFLE, epoch));
    Ok(perm.chunks(batch_size).map(|c| c.to_vec()).collect())
}
