//! graph2vec: PV-DBOW with negative sampling over WL label bags.
//!
//! Every graph is a document and its WL labels are the words. A document
//! vector is trained to predict the labels occurring in its graph against
//! negatives drawn from the unigram^0.75 label distribution. Training is
//! single-threaded and fully determined by the seed.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::worldgraph::{Label, LabelBag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub dim: usize,
    pub epochs: usize,
    /// Initial learning rate, decayed linearly to `min_learning_rate`.
    pub learning_rate: f64,
    pub min_learning_rate: f64,
    pub negatives: usize,
    pub seed: u64,
    /// word2vec-style down-sampling threshold for frequent labels.
    pub subsample: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 16,
            epochs: 200,
            learning_rate: 0.025,
            min_learning_rate: 0.0001,
            negatives: 5,
            seed: 0,
            subsample: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("dim must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || self.min_learning_rate < 0.0 {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.negatives == 0 {
            return Err(Error::Config("at least one negative sample is required".into()));
        }
        if let Some(t) = self.subsample {
            if !(t > 0.0) {
                return Err(Error::Config("subsample threshold must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Trained environment vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSpace {
    pub dim: usize,
    pub seed: u64,
    pub vectors: BTreeMap<usize, Vec<f64>>,
    pub label_vectors: BTreeMap<Label, Vec<f64>>,
    /// Mean loss per training example, one entry per epoch.
    pub epoch_losses: Vec<f64>,
    pub trained_loss: f64,
}

impl EmbeddingSpace {
    /// A space from precomputed vectors (no training artifacts).
    pub fn from_vectors(vectors: BTreeMap<usize, Vec<f64>>) -> Result<Self> {
        let dim = vectors.values().next().map_or(0, Vec::len);
        for v in vectors.values() {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Corpus("non-finite embedding component".into()));
            }
        }
        Ok(Self {
            dim,
            seed: 0,
            vectors,
            label_vectors: BTreeMap::new(),
            epoch_losses: Vec::new(),
            trained_loss: f64::NAN,
        })
    }

    pub fn vector(&self, env_id: usize) -> Result<&[f64]> {
        self.vectors
            .get(&env_id)
            .map(Vec::as_slice)
            .ok_or(Error::UnknownEnvironment(env_id))
    }

    pub fn ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.vectors.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Applies `f` to every stored vector (used for invariance checks).
    pub fn map_vectors(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Self {
        let mut out = self.clone();
        for v in out.vectors.values_mut() {
            *v = f(v);
        }
        out
    }

    pub fn to_file(&self) -> SpaceFile {
        SpaceFile {
            dim: self.dim,
            seed: self.seed,
            vectors: self.vectors.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
            final_loss: self.trained_loss.is_finite().then_some(self.trained_loss),
        }
    }

    pub fn from_file(file: &SpaceFile) -> Result<Self> {
        let vectors = file
            .vectors
            .iter()
            .map(|(k, v)| {
                k.parse::<usize>()
                    .map(|id| (id, v.clone()))
                    .map_err(|e| Error::Parse(format!("env id {k:?}: {e}")))
            })
            .collect::<Result<BTreeMap<_, _>>>()?;
        let mut space = Self::from_vectors(vectors)?;
        if space.dim != file.dim && !space.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: file.dim,
                got: space.dim,
            });
        }
        space.dim = file.dim;
        space.seed = file.seed;
        space.trained_loss = file.final_loss.unwrap_or(f64::NAN);
        Ok(space)
    }
}

/// JSON layout: `{dim, seed, vectors: {env_id: [f64; dim]}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceFile {
    pub dim: usize,
    pub seed: u64,
    pub vectors: BTreeMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_loss: Option<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Trains document vectors for every bag of `corpus`.
pub fn train(corpus: &[LabelBag], cfg: &TrainConfig) -> Result<EmbeddingSpace> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::Corpus("corpus is empty".into()));
    }
    if let Some(b) = corpus.iter().find(|b| b.is_empty()) {
        return Err(Error::Corpus(format!("label bag of environment {} is empty", b.env_id)));
    }
    let mut ids: Vec<usize> = corpus.iter().map(|b| b.env_id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Corpus("duplicate environment id in corpus".into()));
    }

    // Vocabulary in label order.
    let mut freq: BTreeMap<Label, u64> = BTreeMap::new();
    for b in corpus {
        for (&l, &c) in &b.counts {
            *freq.entry(l).or_insert(0) += c as u64;
        }
    }
    let vocab: Vec<Label> = freq.keys().copied().collect();
    let word_index: BTreeMap<Label, usize> = vocab.iter().enumerate().map(|(i, l)| (*l, i)).collect();
    let counts: Vec<u64> = vocab.iter().map(|l| freq[l]).collect();
    let total: u64 = counts.iter().sum();
    let noise = WeightedIndex::new(counts.iter().map(|&c| (c as f64).powf(0.75)))
        .map_err(|e| Error::Corpus(e.to_string()))?;
    let keep_prob: Vec<f64> = counts
        .iter()
        .map(|&c| match cfg.subsample {
            Some(t) => {
                let f = c as f64 / total as f64;
                ((t / f).sqrt() + t / f).min(1.0)
            }
            None => 1.0,
        })
        .collect();

    // One training example per label occurrence.
    let mut examples: Vec<(u32, u32)> = Vec::with_capacity(total as usize);
    for (d, b) in corpus.iter().enumerate() {
        for (&l, &c) in &b.counts {
            let w = word_index[&l] as u32;
            examples.extend(std::iter::repeat_n((d as u32, w), c as usize));
        }
    }

    let dim = cfg.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut docs: Vec<f64> = (0..corpus.len() * dim)
        .map(|_| (rng.gen::<f64>() - 0.5) / dim as f64)
        .collect();
    let mut words: Vec<f64> = vec![0.0; vocab.len() * dim];

    let total_steps = (cfg.epochs * examples.len()) as f64;
    let mut step = 0usize;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut grad = vec![0.0; dim];
    for _ in 0..cfg.epochs {
        examples.shuffle(&mut rng);
        let mut loss = 0.0;
        let mut seen = 0usize;
        for &(d, w) in &examples {
            let progress = step as f64 / total_steps;
            step += 1;
            let (d, w) = (d as usize, w as usize);
            if keep_prob[w] < 1.0 && rng.gen::<f64>() > keep_prob[w] {
                continue;
            }
            let lr = (cfg.learning_rate * (1.0 - progress)).max(cfg.min_learning_rate);
            let doc = &mut docs[d * dim..(d + 1) * dim];
            grad.iter_mut().for_each(|g| *g = 0.0);
            for k in 0..=cfg.negatives {
                let (target, label) = if k == 0 {
                    (w, 1.0)
                } else {
                    let t = noise.sample(&mut rng);
                    if t == w {
                        continue;
                    }
                    (t, 0.0)
                };
                let out = &mut words[target * dim..(target + 1) * dim];
                let p = sigmoid(dot(doc, out));
                loss -= if label == 1.0 { p.max(1e-12).ln() } else { (1.0 - p).max(1e-12).ln() };
                let g = lr * (label - p);
                for i in 0..dim {
                    grad[i] += g * out[i];
                    out[i] += g * doc[i];
                }
            }
            for i in 0..dim {
                doc[i] += grad[i];
            }
            seen += 1;
        }
        epoch_losses.push(if seen > 0 { loss / seen as f64 } else { f64::NAN });
    }

    let vectors = corpus
        .iter()
        .enumerate()
        .map(|(d, b)| (b.env_id, docs[d * dim..(d + 1) * dim].to_vec()))
        .collect();
    let label_vectors = vocab
        .iter()
        .enumerate()
        .map(|(i, l)| (*l, words[i * dim..(i + 1) * dim].to_vec()))
        .collect();
    let trained_loss = epoch_losses.last().copied().unwrap_or(f64::NAN);
    Ok(EmbeddingSpace {
        dim,
        seed: cfg.seed,
        vectors,
        label_vectors,
        epoch_losses,
        trained_loss,
    })
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

/// Euclidean distance.
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Top-two principal-component scores of the mean-centred vectors. Each
/// axis is signed so that its largest-magnitude loading is positive; an
/// axis without variance projects to zero.
pub fn project_2d(space: &EmbeddingSpace) -> Result<BTreeMap<usize, (f64, f64)>> {
    let n = space.len();
    if n < 2 {
        return Err(Error::Corpus("projection needs at least two environments".into()));
    }
    let dim = space.dim;
    let mut mean = vec![0.0; dim];
    for v in space.vectors.values() {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x / n as f64;
        }
    }
    let centered: Vec<Vec<f64>> = space.vectors.values().map(|v| sub(v, &mean)).collect();
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for c in &centered {
        for i in 0..dim {
            for j in 0..dim {
                cov[(i, j)] += c[i] * c[j] / (n - 1) as f64;
            }
        }
    }
    let scale = cov.diagonal().iter().copied().fold(0.0, f64::max);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let axes: Vec<Option<Vec<f64>>> = order
        .iter()
        .take(2)
        .map(|&k| {
            if eig.eigenvalues[k] <= tol {
                return None;
            }
            let mut axis: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            let lead = axis
                .iter()
                .copied()
                .fold(0.0_f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
            if lead < 0.0 {
                axis.iter_mut().for_each(|x| *x = -*x);
            }
            Some(axis)
        })
        .collect();
    let project = |c: &[f64], axis: Option<&Option<Vec<f64>>>| match axis {
        Some(Some(a)) => dot(c, a),
        _ => 0.0,
    };
    Ok(space
        .vectors
        .keys()
        .zip(&centered)
        .map(|(&id, c)| (id, (project(c, axes.first()), project(c, axes.get(1)))))
        .collect())
}
