//! Shadow classifier: logistic regression over hashed character n-gram counts,
//! trained to reproduce a WAF's accept/reject decisions.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::mockwaf::RuleSet;
use crate::optim::Adam;
use crate::{rng, Error, Label, Payload, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
/// Majority-to-minority ratio above which the minority class is oversampled.
pub const BALANCE_RATIO: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureSpec {
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub hash_buckets: usize,
    pub hash_seed: u64,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec {
            ngram_min: 1,
            ngram_max: 4,
            hash_buckets: 1 << 18,
            hash_seed: 0x5eed,
        }
    }
}

impl FeatureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.ngram_min == 0 || self.ngram_min > self.ngram_max {
            return Err(Error::InvalidArgument("need 1 <= ngram_min <= ngram_max".into()));
        }
        if !self.hash_buckets.is_power_of_two() {
            return Err(Error::InvalidArgument("hash_buckets must be a power of two".into()));
        }
        Ok(())
    }

    /// FNV-1a over the seed bytes followed by the n-gram's UTF-8 bytes.
    fn bucket(&self, gram: &str) -> u32 {
        let mut h = FNV_OFFSET;
        for b in self.hash_seed.to_le_bytes().iter().chain(gram.as_bytes()) {
            h ^= u64::from(*b);
            h = h.wrapping_mul(FNV_PRIME);
        }
        (h & (self.hash_buckets as u64 - 1)) as u32
    }
}

/// Sparse feature vector: sorted, merged `(bucket, count)` pairs.
pub type SparseVec = Vec<(u32, f64)>;

/// Counts every character n-gram of the raw payload, hashed into buckets.
pub fn featurize(spec: &FeatureSpec, payload: &Payload) -> SparseVec {
    let raw = payload.raw();
    let bounds: Vec<usize> = raw.char_indices().map(|(i, _)| i).chain([raw.len()]).collect();
    let n_chars = bounds.len() - 1;
    let mut idx = Vec::new();
    for n in spec.ngram_min..=spec.ngram_max {
        for start in 0..(n_chars + 1).saturating_sub(n) {
            idx.push(spec.bucket(&raw[bounds[start]..bounds[start + n]]));
        }
    }
    idx.sort_unstable();
    let mut out: SparseVec = Vec::new();
    for i in idx {
        match out.last_mut() {
            Some((last, c)) if *last == i => *c += 1.0,
            _ => out.push((i, 1.0)),
        }
    }
    out
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn dot(weights: &[f64], x: &SparseVec) -> f64 {
    x.iter().map(|&(i, c)| weights[i as usize] * c).sum()
}

/// Numerically stable binary cross-entropy of one example given its logit.
fn bce(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Mean binary cross-entropy plus `l2/2 * |w|^2`.
pub fn mean_loss(weights: &[f64], bias: f64, xs: &[SparseVec], ys: &[f64], l2: f64) -> f64 {
    let data: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| bce(dot(weights, x) + bias, y))
        .sum::<f64>()
        / xs.len() as f64;
    data + 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>()
}

/// Analytic gradient of [`mean_loss`] with respect to `(weights, bias)`.
pub fn loss_gradient(weights: &[f64], bias: f64, xs: &[SparseVec], ys: &[f64], l2: f64) -> (Vec<f64>, f64) {
    let mut gw: Vec<f64> = weights.iter().map(|w| l2 * w).collect();
    let mut gb = 0.0;
    let scale = 1.0 / xs.len() as f64;
    for (x, &y) in xs.iter().zip(ys) {
        let err = (sigmoid(dot(weights, x) + bias) - y) * scale;
        gb += err;
        for &(i, c) in x {
            gw[i as usize] += err * c;
        }
    }
    (gw, gb)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub l2: f64,
    /// Set by the caller; not read from configuration files.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            learning_rate: 0.05,
            batch_size: 64,
            l2: 0.0,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShadowModel {
    pub spec: FeatureSpec,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub threshold: f64,
    /// Full-data mean loss after each epoch.
    pub loss_history: Vec<f64>,
}

impl ShadowModel {
    pub fn zero(spec: FeatureSpec) -> Self {
        ShadowModel {
            weights: vec![0.0; spec.hash_buckets],
            spec,
            bias: 0.0,
            threshold: 0.5,
            loss_history: Vec::new(),
        }
    }

    pub fn score(&self, payload: &Payload) -> f64 {
        sigmoid(dot(&self.weights, &featurize(&self.spec, payload)) + self.bias)
    }

    pub fn predict(&self, payload: &Payload) -> (f64, Label) {
        let s = self.score(payload);
        (s, Label::from_rejected(s >= self.threshold))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            spec: self.spec,
            bias: self.bias,
            threshold: self.threshold,
            loss_history: self.loss_history.clone(),
            weights: self
                .weights
                .iter()
                .enumerate()
                .filter(|(_, w)| **w != 0.0)
                .map(|(i, w)| (i as u32, *w))
                .collect(),
        };
        fs::write(path, serde_json::to_string_pretty(&file)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile = serde_json::from_str(&text)?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported shadow model format version {}",
                file.format_version
            )));
        }
        file.spec.validate()?;
        let mut weights = vec![0.0; file.spec.hash_buckets];
        for (i, w) in file.weights {
            *weights
                .get_mut(i as usize)
                .ok_or_else(|| Error::Dimension(format!("weight index {i} out of range")))? = w;
        }
        Ok(ShadowModel {
            spec: file.spec,
            weights,
            bias: file.bias,
            threshold: file.threshold,
            loss_history: file.loss_history,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    spec: FeatureSpec,
    bias: f64,
    threshold: f64,
    loss_history: Vec<f64>,
    weights: Vec<(u32, f64)>,
}

/// Training order: every example once, plus minority-class repeats when the
/// label ratio exceeds [`BALANCE_RATIO`].
fn balanced_indices(labels: &[Label]) -> Vec<usize> {
    let rej: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].is_rejected()).collect();
    let acc: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i].is_rejected()).collect();
    let (major, minor) = if rej.len() >= acc.len() {
        (&rej, &acc)
    } else {
        (&acc, &rej)
    };
    let mut out: Vec<usize> = (0..labels.len()).collect();
    if major.len() > BALANCE_RATIO * minor.len() {
        out.extend(minor.iter().cycle().take(major.len() - minor.len()));
    }
    out
}

/// Fits weights by minibatch Adam on mean binary cross-entropy. `Rejected`
/// is the positive class.
pub fn train_shadow(examples: &[(Payload, Label)], spec: FeatureSpec, cfg: &TrainConfig) -> Result<ShadowModel> {
    spec.validate()?;
    if cfg.epochs == 0 || cfg.learning_rate <= 0.0 || cfg.batch_size == 0 {
        return Err(Error::InvalidArgument(
            "epochs, learning_rate and batch_size must be positive".into(),
        ));
    }
    let labels: Vec<Label> = examples.iter().map(|(_, l)| *l).collect();
    if !labels.iter().any(|l| l.is_rejected()) || labels.iter().all(|l| l.is_rejected()) {
        return Err(Error::DegenerateLabels);
    }
    let xs: Vec<SparseVec> = examples.iter().map(|(p, _)| featurize(&spec, p)).collect();
    let ys: Vec<f64> = labels.iter().map(|l| if l.is_rejected() { 1.0 } else { 0.0 }).collect();

    let mut model = ShadowModel::zero(spec);
    let n_params = spec.hash_buckets + 1;
    let mut params = vec![0.0; n_params];
    let mut grads = vec![0.0; n_params];
    let mut opt = Adam::new(n_params);
    let mut rng = rng::seeded(cfg.seed);
    let mut order = balanced_indices(&labels);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let (weights, bias) = params.split_at(spec.hash_buckets);
            let bias = bias[0];
            grads.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let err = (sigmoid(dot(weights, &xs[i]) + bias) - ys[i]) * scale;
                for &(j, c) in &xs[i] {
                    grads[j as usize] += err * c;
                }
                grads[spec.hash_buckets] += err;
            }
            if cfg.l2 > 0.0 {
                for (g, w) in grads.iter_mut().zip(weights) {
                    *g += cfg.l2 * w;
                }
            }
            opt.step(&mut params, &grads, cfg.learning_rate);
        }
        let (weights, bias) = params.split_at(spec.hash_buckets);
        model.loss_history.push(mean_loss(weights, bias[0], &xs, &ys, cfg.l2));
    }
    model.bias = params[spec.hash_buckets];
    params.truncate(spec.hash_buckets);
    model.weights = params;
    Ok(model)
}

/// Fraction of payloads on which the model and the rule set agree.
pub fn fidelity<'a>(
    model: &ShadowModel,
    rules: &RuleSet,
    corpus: impl IntoIterator<Item = &'a Payload>,
) -> Result<f64> {
    let (mut agree, mut total) = (0usize, 0usize);
    for p in corpus {
        total += 1;
        agree += usize::from(model.predict(p).1 == rules.classify(p));
    }
    if total == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok(agree as f64 / total as f64)
}
