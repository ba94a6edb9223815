use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{check_seed, finish, SampleConfig, Vocab, BOS, EOS, GREEDY_TEMPERATURE, UNK};
use crate::optim::Adam;
use crate::rng::{self, Rng};
use crate::{Error, Payload, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenTrainConfig {
    pub lr0: f64,
    /// The learning rate halves after this many epochs.
    pub halve_every: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: usize,
    pub embedding: usize,
    /// Probability of keeping an embedding unit during training.
    pub keep_prob: f64,
    /// Truncation window for backpropagation through time.
    pub bptt: usize,
    pub clip_norm: f64,
    /// Set by the caller; not read from configuration files.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for GenTrainConfig {
    fn default() -> Self {
        GenTrainConfig {
            lr0: 0.001,
            halve_every: 10,
            epochs: 50,
            batch_size: 32,
            hidden: 64,
            embedding: 32,
            keep_prob: 0.7,
            bptt: 32,
            clip_norm: 5.0,
            seed: 1,
        }
    }
}

impl GenTrainConfig {
    /// Full-size preset: 256 hidden units, batches of 512.
    pub fn paper() -> Self {
        GenTrainConfig {
            hidden: 256,
            batch_size: 512,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0) {
            return Err(Error::InvalidArgument("lr0 must be positive".into()));
        }
        if self.hidden == 0 || self.embedding == 0 || self.batch_size == 0 || self.bptt == 0 || self.halve_every == 0 {
            return Err(Error::InvalidArgument(
                "hidden, embedding, batch_size, bptt and halve_every must be at least 1".into(),
            ));
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return Err(Error::InvalidArgument("keep_prob must be in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.lr0 * 0.5f64.powi((epoch / self.halve_every) as i32)
    }
}

/// Offsets of each parameter block inside the flat parameter vector.
#[derive(Debug, Clone, Copy)]
struct Layout {
    v: usize,
    d: usize,
    h: usize,
    e: usize,
    wz: usize,
    wr: usize,
    wh: usize,
    uz: usize,
    ur: usize,
    uh: usize,
    bz: usize,
    br: usize,
    bh: usize,
    wout: usize,
    bout: usize,
    len: usize,
}

impl Layout {
    fn new(v: usize, d: usize, h: usize) -> Layout {
        let mut at = 0;
        let mut take = |n: usize| {
            let o = at;
            at += n;
            o
        };
        let e = take(v * d);
        let wz = take(h * d);
        let wr = take(h * d);
        let wh = take(h * d);
        let uz = take(h * h);
        let ur = take(h * h);
        let uh = take(h * h);
        let bz = take(h);
        let br = take(h);
        let bh = take(h);
        let wout = take(v * h);
        let bout = take(v);
        Layout {
            v,
            d,
            h,
            e,
            wz,
            wr,
            wh,
            uz,
            ur,
            uh,
            bz,
            br,
            bh,
            wout,
            bout,
            len: at,
        }
    }
}

/// `out += M x` for a row-major `rows x cols` matrix.
fn gemv(out: &mut [f64], m: &[f64], x: &[f64]) {
    let cols = x.len();
    for (o, row) in out.iter_mut().zip(m.chunks_exact(cols)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += M^T y`.
fn gemv_t(out: &mut [f64], m: &[f64], y: &[f64]) {
    let cols = out.len();
    for (row, &yi) in m.chunks_exact(cols).zip(y) {
        if yi != 0.0 {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * yi;
            }
        }
    }
}

/// `g += y x^T`.
fn outer(g: &mut [f64], y: &[f64], x: &[f64]) {
    let cols = x.len();
    for (row, &yi) in g.chunks_exact_mut(cols).zip(y) {
        if yi != 0.0 {
            for (o, b) in row.iter_mut().zip(x) {
                *o += yi * b;
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(super) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    out
}

struct StepCache {
    x: usize,
    e: Vec<f64>,
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    c: Vec<f64>,
    h: Vec<f64>,
    p: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruModel {
    pub vocab: Vocab,
    pub hidden: usize,
    pub embedding: usize,
    params: Vec<f64>,
}

impl GruModel {
    /// Small uniform initialization; biases start at zero.
    pub fn init(vocab: Vocab, hidden: usize, embedding: usize, rng: &mut Rng) -> GruModel {
        let l = Layout::new(vocab.len(), embedding, hidden);
        let mut params = vec![0.0; l.len];
        let s = 1.0 / (hidden as f64).sqrt();
        for (i, w) in params.iter_mut().enumerate() {
            let scale = if i < l.wz {
                0.1
            } else if (l.bz..l.wout).contains(&i) || i >= l.bout {
                0.0
            } else {
                s
            };
            if scale > 0.0 {
                *w = rng.gen_range(-scale..scale);
            }
        }
        GruModel {
            vocab,
            hidden,
            embedding,
            params,
        }
    }

    pub fn zeros(vocab: Vocab, hidden: usize, embedding: usize) -> GruModel {
        let len = Layout::new(vocab.len(), embedding, hidden).len;
        GruModel {
            vocab,
            hidden,
            embedding,
            params: vec![0.0; len],
        }
    }

    fn layout(&self) -> Layout {
        Layout::new(self.vocab.len(), self.embedding, self.hidden)
    }

    pub(super) fn check(&self) -> Result<()> {
        if self.hidden == 0 || self.embedding == 0 {
            return Err(Error::Dimension("hidden and embedding sizes must be positive".into()));
        }
        if self.params.len() != self.layout().len {
            return Err(Error::Dimension(format!(
                "expected {} parameters, found {}",
                self.layout().len,
                self.params.len()
            )));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Dimension("non-finite parameter".into()));
        }
        Ok(())
    }

    /// Flat parameter vector: embedding, input weights (z, r, h), recurrent
    /// weights (z, r, h), biases (z, r, h), output weights, output bias.
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Output bias, one entry per vocabulary id.
    pub fn output_bias_mut(&mut self) -> &mut [f64] {
        let l = self.layout();
        &mut self.params[l.bout..l.len]
    }

    fn forward(&self, l: &Layout, x: usize, h_prev: &[f64], mask: Option<&[f64]>) -> StepCache {
        let mut c = self.forward_state(l, x, h_prev, mask);
        let mut logits = self.params[l.bout..l.bout + l.v].to_vec();
        gemv(&mut logits, &self.params[l.wout..l.wout + l.v * l.h], &c.h);
        c.p = logits;
        c
    }

    /// Recurrent part of a step; `p` is left empty.
    fn forward_state(&self, l: &Layout, x: usize, h_prev: &[f64], mask: Option<&[f64]>) -> StepCache {
        let p = &self.params;
        let mut e = p[l.e + x * l.d..l.e + (x + 1) * l.d].to_vec();
        if let Some(mask) = mask {
            e.iter_mut().zip(mask).for_each(|(a, m)| *a *= m);
        }
        let (h, d) = (l.h, l.d);
        let mut z = p[l.bz..l.bz + h].to_vec();
        gemv(&mut z, &p[l.wz..l.wz + h * d], &e);
        gemv(&mut z, &p[l.uz..l.uz + h * h], h_prev);
        z.iter_mut().for_each(|a| *a = sigmoid(*a));
        let mut r = p[l.br..l.br + h].to_vec();
        gemv(&mut r, &p[l.wr..l.wr + h * d], &e);
        gemv(&mut r, &p[l.ur..l.ur + h * h], h_prev);
        r.iter_mut().for_each(|a| *a = sigmoid(*a));
        let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
        let mut c = p[l.bh..l.bh + h].to_vec();
        gemv(&mut c, &p[l.wh..l.wh + h * d], &e);
        gemv(&mut c, &p[l.uh..l.uh + h * h], &rh);
        c.iter_mut().for_each(|a| *a = a.tanh());
        let h_next: Vec<f64> = (0..h).map(|i| (1.0 - z[i]) * h_prev[i] + z[i] * c[i]).collect();
        StepCache {
            x,
            e,
            h_prev: h_prev.to_vec(),
            z,
            r,
            c,
            h: h_next,
            p: Vec::new(),
        }
    }

    /// Backward through the recurrent part of one step. `dh` holds the full
    /// gradient reaching this step's output state and is replaced by the
    /// gradient for `h_prev`.
    fn backward_state(&self, l: &Layout, s: &StepCache, mask: Option<&[f64]>, dh: &mut Vec<f64>, g: &mut [f64]) {
        let p = &self.params;
        let (h, d) = (l.h, l.d);

        let mut dh_prev: Vec<f64> = (0..h).map(|i| dh[i] * (1.0 - s.z[i])).collect();
        let daz: Vec<f64> = (0..h)
            .map(|i| dh[i] * (s.c[i] - s.h_prev[i]) * s.z[i] * (1.0 - s.z[i]))
            .collect();
        let dah: Vec<f64> = (0..h).map(|i| dh[i] * s.z[i] * (1.0 - s.c[i] * s.c[i])).collect();
        let rh: Vec<f64> = s.r.iter().zip(&s.h_prev).map(|(a, b)| a * b).collect();

        outer(&mut g[l.wh..l.wh + h * d], &dah, &s.e);
        outer(&mut g[l.uh..l.uh + h * h], &dah, &rh);
        g[l.bh..l.bh + h].iter_mut().zip(&dah).for_each(|(a, b)| *a += b);
        let mut de = vec![0.0; d];
        gemv_t(&mut de, &p[l.wh..l.wh + h * d], &dah);
        let mut drh = vec![0.0; h];
        gemv_t(&mut drh, &p[l.uh..l.uh + h * h], &dah);

        let dar: Vec<f64> = (0..h).map(|i| drh[i] * s.h_prev[i] * s.r[i] * (1.0 - s.r[i])).collect();
        for i in 0..h {
            dh_prev[i] += drh[i] * s.r[i];
        }
        outer(&mut g[l.wr..l.wr + h * d], &dar, &s.e);
        outer(&mut g[l.ur..l.ur + h * h], &dar, &s.h_prev);
        g[l.br..l.br + h].iter_mut().zip(&dar).for_each(|(a, b)| *a += b);
        outer(&mut g[l.wz..l.wz + h * d], &daz, &s.e);
        outer(&mut g[l.uz..l.uz + h * h], &daz, &s.h_prev);
        g[l.bz..l.bz + h].iter_mut().zip(&daz).for_each(|(a, b)| *a += b);
        gemv_t(&mut de, &p[l.wr..l.wr + h * d], &dar);
        gemv_t(&mut de, &p[l.wz..l.wz + h * d], &daz);
        gemv_t(&mut dh_prev, &p[l.ur..l.ur + h * h], &dar);
        gemv_t(&mut dh_prev, &p[l.uz..l.uz + h * h], &daz);

        if let Some(mask) = mask {
            de.iter_mut().zip(mask).for_each(|(a, m)| *a *= m);
        }
        g[l.e + s.x * d..l.e + (s.x + 1) * d]
            .iter_mut()
            .zip(&de)
            .for_each(|(a, b)| *a += b);
        *dh = dh_prev;
    }

    /// Summed next-token cross-entropy of a batch of encoded sequences,
    /// accumulating gradients into `g`. The output projection runs as one
    /// matrix product over every step of the batch; backpropagation through
    /// the recurrence is cut every `bptt` steps.
    fn batch_grad(&self, seqs: &[&[usize]], bptt: usize, mut keep: Option<(f64, &mut Rng)>, g: &mut [f64]) -> f64 {
        let l = self.layout();
        let (h, v) = (l.h, l.v);
        let mut caches: Vec<StepCache> = Vec::new();
        let mut masks: Vec<Option<Vec<f64>>> = Vec::new();
        let mut targets: Vec<usize> = Vec::new();
        for ids in seqs {
            let mut state = vec![0.0; h];
            for w in ids.windows(2) {
                let mask = keep.as_mut().map(|(k, rng)| {
                    (0..l.d)
                        .map(|_| if rng.gen::<f64>() < *k { 1.0 / *k } else { 0.0 })
                        .collect::<Vec<f64>>()
                });
                let c = self.forward_state(&l, w[0], &state, mask.as_deref());
                state.clone_from(&c.h);
                caches.push(c);
                masks.push(mask);
                targets.push(w[1]);
            }
        }
        let n = caches.len();
        if n == 0 {
            return 0.0;
        }
        let mut hs = Vec::with_capacity(n * h);
        for c in &caches {
            hs.extend_from_slice(&c.h);
        }
        let wout = &self.params[l.wout..l.wout + v * h];
        let bout = &self.params[l.bout..l.bout + v];
        let mut logits: Vec<f64> = Vec::with_capacity(n * v);
        for _ in 0..n {
            logits.extend_from_slice(bout);
        }
        // logits (n x v) += hs (n x h) * wout^T
        unsafe {
            matrixmultiply::dgemm(
                n,
                h,
                v,
                1.0,
                hs.as_ptr(),
                h as isize,
                1,
                wout.as_ptr(),
                1,
                h as isize,
                1.0,
                logits.as_mut_ptr(),
                v as isize,
                1,
            );
        }
        let mut loss = 0.0;
        for (row, &t) in logits.chunks_exact_mut(v).zip(&targets) {
            let probs = softmax(row);
            loss -= probs[t].max(f64::MIN_POSITIVE).ln();
            row.copy_from_slice(&probs);
            row[t] -= 1.0;
        }
        let dlogits = logits;
        for row in dlogits.chunks_exact(v) {
            g[l.bout..l.bout + v].iter_mut().zip(row).for_each(|(a, b)| *a += b);
        }
        let mut dhs = vec![0.0; n * h];
        unsafe {
            // gwout (v x h) += dlogits^T * hs
            matrixmultiply::dgemm(
                v,
                n,
                h,
                1.0,
                dlogits.as_ptr(),
                1,
                v as isize,
                hs.as_ptr(),
                h as isize,
                1,
                1.0,
                g[l.wout..].as_mut_ptr(),
                h as isize,
                1,
            );
            // dhs (n x h) = dlogits * wout
            matrixmultiply::dgemm(
                n,
                v,
                h,
                1.0,
                dlogits.as_ptr(),
                v as isize,
                1,
                wout.as_ptr(),
                h as isize,
                1,
                0.0,
                dhs.as_mut_ptr(),
                h as isize,
                1,
            );
        }
        let mut row = n;
        for ids in seqs.iter().rev() {
            let steps = ids.len() - 1;
            let mut dh = vec![0.0; h];
            for t in (0..steps).rev() {
                row -= 1;
                if (t + 1) % bptt == 0 {
                    dh.iter_mut().for_each(|x| *x = 0.0);
                }
                dh.iter_mut()
                    .zip(&dhs[row * h..(row + 1) * h])
                    .for_each(|(a, b)| *a += b);
                self.backward_state(&l, &caches[row], masks[row].as_deref(), &mut dh, g);
            }
        }
        loss
    }

    /// Mean per-token cross-entropy over encoded sequences and its exact
    /// gradient, without dropout or truncation.
    pub fn loss_and_gradient(&self, seqs: &[Vec<usize>]) -> (f64, Vec<f64>) {
        let mut g = vec![0.0; self.params.len()];
        let refs: Vec<&[usize]> = seqs.iter().map(Vec::as_slice).collect();
        let loss = self.batch_grad(&refs, usize::MAX, None, &mut g);
        let n = seqs.iter().map(|s| s.len() - 1).sum::<usize>().max(1) as f64;
        g.iter_mut().for_each(|x| *x /= n);
        (loss / n, g)
    }

    /// Mean per-token cross-entropy of the payloads under the model.
    pub fn mean_loss<'a>(&self, corpus: impl IntoIterator<Item = &'a Payload>) -> f64 {
        let l = self.layout();
        let (mut loss, mut n) = (0.0, 0usize);
        for p in corpus {
            let ids = self.vocab.encode(p);
            let mut h = vec![0.0; l.h];
            for w in ids.windows(2) {
                let c = self.forward(&l, w[0], &h, None);
                loss -= softmax(&c.p)[w[1]].max(f64::MIN_POSITIVE).ln();
                h = c.h;
                n += 1;
            }
        }
        loss / n.max(1) as f64
    }

    pub fn perplexity<'a>(&self, corpus: impl IntoIterator<Item = &'a Payload>) -> f64 {
        self.mean_loss(corpus).exp()
    }

    /// Autoregressive sampling after `BOS seed_token`. Never emits BOS or
    /// UNK; stops at EOS or once the payload holds `max_len` tokens.
    pub fn sample(&self, seed_token: &str, cfg: &SampleConfig, rng: &mut Rng) -> Result<Payload> {
        cfg.validate()?;
        let l = self.layout();
        let seed = check_seed(&self.vocab, seed_token);
        let h0 = vec![0.0; l.h];
        let first = self.forward(&l, BOS, &h0, None);
        let mut step = self.forward(&l, seed, &first.h, None);
        let mut out = Vec::new();
        while out.len() + 1 < cfg.max_len {
            let mut logits = std::mem::take(&mut step.p);
            logits[BOS] = f64::NEG_INFINITY;
            logits[UNK] = f64::NEG_INFINITY;
            let next = if cfg.temperature < GREEDY_TEMPERATURE {
                argmax(&logits)
            } else {
                logits.iter_mut().for_each(|x| *x /= cfg.temperature);
                let probs = softmax(&logits);
                WeightedIndex::new(&probs)
                    .map_err(|e| Error::InvalidArgument(format!("degenerate distribution: {e}")))?
                    .sample(rng)
            };
            if next == EOS {
                break;
            }
            out.push(next);
            step = self.forward(&l, next, &step.h, None);
        }
        Ok(finish(seed_token, &self.vocab, &out))
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// One recurrent step: returns the next hidden state and the unnormalized
/// next-token logits.
pub fn gru_step(m: &GruModel, token_id: usize, h_prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if token_id >= m.vocab.len() {
        return Err(Error::Dimension(format!(
            "token id {token_id} >= vocab size {}",
            m.vocab.len()
        )));
    }
    if h_prev.len() != m.hidden {
        return Err(Error::Dimension(format!(
            "hidden state has length {}, expected {}",
            h_prev.len(),
            m.hidden
        )));
    }
    let c = m.forward(&m.layout(), token_id, h_prev, None);
    Ok((c.h, c.p))
}

/// Minibatch Adam on next-token cross-entropy with inverted dropout on the
/// embedding and a halving learning-rate schedule. Returns the model and the
/// mean training loss of every epoch.
pub fn train_generator<'a>(
    corpus: impl IntoIterator<Item = &'a Payload>,
    cfg: &GenTrainConfig,
) -> Result<(GruModel, Vec<f64>)> {
    cfg.validate()?;
    let corpus: Vec<&Payload> = corpus.into_iter().filter(|p| !p.is_empty()).collect();
    let vocab = Vocab::build(corpus.iter().copied())?;
    if vocab.words().len() < 2 {
        return Err(Error::EmptyDictionary("generator vocabulary (need at least 2 tokens)"));
    }
    let mut init_rng = rng::stream(cfg.seed, 0);
    let mut drop_rng = rng::stream(cfg.seed, 1);
    let mut order_rng = rng::stream(cfg.seed, 2);
    let mut model = GruModel::init(vocab, cfg.hidden, cfg.embedding, &mut init_rng);
    let seqs: Vec<Vec<usize>> = corpus.iter().map(|p| model.vocab.encode(p)).collect();
    let mut opt = Adam::new(model.params.len());
    let mut g = vec![0.0; model.params.len()];
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let keep = (cfg.keep_prob < 1.0).then_some(cfg.keep_prob);

    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate(epoch);
        order.shuffle(&mut order_rng);
        let (mut epoch_loss, mut epoch_tokens) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            g.iter_mut().for_each(|x| *x = 0.0);
            let refs: Vec<&[usize]> = batch.iter().map(|&i| seqs[i].as_slice()).collect();
            let tokens: usize = refs.iter().map(|s| s.len() - 1).sum();
            let k = keep.map(|k| (k, &mut drop_rng));
            epoch_loss += model.batch_grad(&refs, cfg.bptt, k, &mut g);
            epoch_tokens += tokens;
            let scale = 1.0 / tokens as f64;
            g.iter_mut().for_each(|x| *x *= scale);
            let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > cfg.clip_norm {
                let s = cfg.clip_norm / norm;
                g.iter_mut().for_each(|x| *x *= s);
            }
            opt.step(&mut model.params, &g, lr);
        }
        let mean = epoch_loss / epoch_tokens as f64;
        log::debug!("generator epoch {epoch}: loss {mean:.4} lr {lr}");
        history.push(mean);
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Origin;
    use proptest::prelude::*;

    fn p(s: &str) -> Payload {
        Payload::new(s, Origin::Malicious)
    }

    fn toy_vocab() -> Vocab {
        Vocab::build(&[p("a b c")]).unwrap()
    }

    #[test]
    fn zero_model_closed_form() {
        let mut m = GruModel::zeros(toy_vocab(), 4, 3);
        m.output_bias_mut().copy_from_slice(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        let (h, logits) = gru_step(&m, 4, &[0.0; 4]).unwrap();
        assert_eq!(h, vec![0.0; 4]);
        assert_eq!(logits, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        assert!(gru_step(&m, 6, &[0.0; 4]).is_err());
        assert!(gru_step(&m, 0, &[0.0; 3]).is_err());
    }

    #[test]
    fn gradient_check() {
        let mut rng = rng::seeded(3);
        let mut m = GruModel::init(toy_vocab(), 4, 3, &mut rng);
        for w in m.params_mut() {
            *w = rng.gen_range(-0.8..0.8);
        }
        let seqs = vec![m.vocab.encode(&p("a b c a")), m.vocab.encode(&p("c c b"))];
        let (_, g) = m.loss_and_gradient(&seqs);
        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        for k in 0..m.params().len() {
            let orig = m.params()[k];
            m.params_mut()[k] = orig + eps;
            let up = m.loss_and_gradient(&seqs).0;
            m.params_mut()[k] = orig - eps;
            let down = m.loss_and_gradient(&seqs).0;
            m.params_mut()[k] = orig;
            let num = (up - down) / (2.0 * eps);
            let denom = num.abs().max(g[k].abs());
            if denom > 1e-8 {
                worst = worst.max((num - g[k]).abs() / denom);
            }
        }
        assert!(worst <= 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn softmax_is_distribution() {
        let probs = softmax(&[1000.0, -1000.0, 3.0, 3.0]);
        assert!(probs.iter().all(|&p| p >= 0.0));
        assert!((probs.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    fn memorize() -> (GruModel, Payload) {
        let payload = p("select name from users where id = 1");
        let corpus = vec![payload.clone(); 640];
        (train_generator(&corpus, &GenTrainConfig::default()).unwrap().0, payload)
    }

    #[test]
    fn memorizes_single_payload() {
        let (m, payload) = memorize();
        let ppl = m.perplexity([&payload]);
        assert!(ppl <= 1.2, "perplexity {ppl}");
        let greedy = SampleConfig {
            max_len: 40,
            temperature: 1e-9,
        };
        let out = m.sample("select", &greedy, &mut rng::seeded(0)).unwrap();
        assert_eq!(out.raw(), payload.raw());
    }

    #[test]
    fn training_is_deterministic_and_loss_drops() {
        let corpus = [
            p("select a from t"),
            p("select b from t where a = 1"),
            p("drop table t"),
        ];
        let cfg = GenTrainConfig {
            hidden: 8,
            embedding: 4,
            epochs: 5,
            batch_size: 2,
            ..GenTrainConfig::default()
        };
        let (a, la) = train_generator(&corpus, &cfg).unwrap();
        let (b, lb) = train_generator(&corpus, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        assert!(la.last().unwrap() <= la.first().unwrap());
    }

    #[test]
    fn training_errors() {
        assert!(matches!(
            train_generator(&[] as &[Payload], &GenTrainConfig::default()),
            Err(Error::EmptyCorpus)
        ));
        assert!(train_generator(&[p("a a a")], &GenTrainConfig::default()).is_err());
        let bad = GenTrainConfig {
            lr0: 0.0,
            ..GenTrainConfig::default()
        };
        assert!(train_generator(&[p("a b")], &bad).is_err());
    }

    #[test]
    fn sampling_contract() {
        let corpus: Vec<Payload> = ["select a from t", "select b from u", "union select a"].map(p).to_vec();
        let cfg = GenTrainConfig {
            hidden: 8,
            embedding: 4,
            epochs: 2,
            ..GenTrainConfig::default()
        };
        let (m, _) = train_generator(&corpus, &cfg).unwrap();
        let sc = SampleConfig {
            max_len: 6,
            temperature: 1.5,
        };
        for seed in 0..50 {
            let a = m.sample("select", &sc, &mut rng::seeded(seed)).unwrap();
            let b = m.sample("select", &sc, &mut rng::seeded(seed)).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.token_texts().next(), Some("select"));
            assert!(a.len() <= 6);
            assert!(!a.raw().contains("<bos>") && !a.raw().contains("<unk>") && !a.raw().contains("<eos>"));
        }
        let unknown = m.sample("nosuchtoken", &sc, &mut rng::seeded(1)).unwrap();
        assert_eq!(unknown.token_texts().next(), Some("nosuchtoken"));
        let one = SampleConfig {
            max_len: 1,
            temperature: 1.0,
        };
        assert_eq!(m.sample("select", &one, &mut rng::seeded(1)).unwrap().raw(), "select");
    }

    #[test]
    fn prefers_structured_sequences() {
        use crate::ingest::{synth_sql, SqlGrammar};
        use rand::seq::SliceRandom;
        let data = synth_sql(&SqlGrammar::default(), 500, &mut rng::seeded(4)).unwrap();
        let all: Vec<Payload> = data.iter().cloned().collect();
        let (train, held) = all.split_at(400);
        let cfg = GenTrainConfig {
            hidden: 32,
            embedding: 16,
            epochs: 10,
            ..GenTrainConfig::default()
        };
        let (m, _) = train_generator(train, &cfg).unwrap();
        let mut shuffle_rng = rng::seeded(5);
        let shuffled: Vec<Payload> = held
            .iter()
            .map(|p| {
                let mut toks: Vec<&str> = p.token_texts().collect();
                toks.shuffle(&mut shuffle_rng);
                Payload::from_tokens(&toks, Origin::Malicious)
            })
            .collect();
        let structured = m.mean_loss(held);
        let scrambled = m.mean_loss(&shuffled);
        assert!(scrambled > structured, "{scrambled} <= {structured}");
    }

    proptest! {
        #[test]
        fn hidden_state_stays_in_unit_interval(seed in any::<u64>(), tok in 0usize..6, h in prop::collection::vec(-0.999f64..0.999, 5)) {
            let mut rng = rng::seeded(seed);
            let mut m = GruModel::init(toy_vocab(), 5, 3, &mut rng);
            for w in m.params_mut() {
                *w = rng.gen_range(-1.0..1.0);
            }
            let (next, _) = gru_step(&m, tok, &h).unwrap();
            prop_assert!(next.iter().all(|x| x.abs() < 1.0));
        }
    }
}
