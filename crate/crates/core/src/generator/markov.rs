use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use serde::{Deserialize, Serialize};

use super::{check_seed, finish, Vocab, BOS, EOS};
use crate::rng::Rng;
use crate::{Error, Payload, Result};

/// Order-k token model with additive smoothing. The support of every
/// context is the non-reserved tokens plus EOS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovModel {
    pub vocab: Vocab,
    pub order: usize,
    pub alpha: f64,
    #[serde(with = "context_table")]
    counts: BTreeMap<Vec<usize>, BTreeMap<usize, u64>>,
}

type Counts = BTreeMap<Vec<usize>, BTreeMap<usize, u64>>;

/// JSON objects need string keys, so contexts are stored as a list of
/// `[context, [[next, count], ...]]` entries.
mod context_table {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::Counts;

    type Row = (usize, u64);

    pub fn serialize<S: Serializer>(counts: &Counts, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<(&Vec<usize>, Vec<Row>)> = counts
            .iter()
            .map(|(k, v)| (k, v.iter().map(|(a, b)| (*a, *b)).collect()))
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Counts, D::Error> {
        let rows: Vec<(Vec<usize>, Vec<Row>)> = Vec::deserialize(d)?;
        Ok(rows.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect())
    }
}

fn context_key(history: &[usize], k: usize) -> Vec<usize> {
    let mut key = vec![BOS; k.saturating_sub(history.len())];
    key.extend_from_slice(&history[history.len().saturating_sub(k)..]);
    key
}

pub fn train_markov<'a>(corpus: impl IntoIterator<Item = &'a Payload>, k: usize, alpha: f64) -> Result<MarkovModel> {
    if k == 0 {
        return Err(Error::InvalidArgument("markov order must be at least 1".into()));
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument("smoothing constant must be positive".into()));
    }
    let corpus: Vec<&Payload> = corpus.into_iter().collect();
    let vocab = Vocab::build(corpus.iter().copied())?;
    if vocab.words().is_empty() {
        return Err(Error::EmptyDictionary("markov vocabulary"));
    }
    let mut counts: Counts = BTreeMap::new();
    for p in corpus {
        let ids = vocab.encode(p);
        for t in 1..ids.len() {
            *counts
                .entry(context_key(&ids[..t], k))
                .or_default()
                .entry(ids[t])
                .or_default() += 1;
        }
    }
    Ok(MarkovModel {
        vocab,
        order: k,
        alpha,
        counts,
    })
}

impl MarkovModel {
    /// Ids that can follow any context: EOS and every non-reserved token.
    pub fn support(&self) -> Vec<usize> {
        std::iter::once(EOS).chain(3..self.vocab.len()).collect()
    }

    /// `(count(c, w) + α) / (count(c) + α |V|)` where `history` starts with BOS.
    pub fn prob(&self, history: &[usize], next: usize) -> f64 {
        let support = self.support();
        if !support.contains(&next) {
            return 0.0;
        }
        let row = self.counts.get(&context_key(history, self.order));
        let total: u64 = row.map_or(0, |r| r.values().sum());
        let count = row.and_then(|r| r.get(&next)).copied().unwrap_or(0);
        (count as f64 + self.alpha) / (total as f64 + self.alpha * support.len() as f64)
    }

    pub fn distribution(&self, history: &[usize]) -> Vec<(usize, f64)> {
        self.support().into_iter().map(|w| (w, self.prob(history, w))).collect()
    }
}

pub fn sample_markov(m: &MarkovModel, seed_token: &str, max_len: usize, rng: &mut Rng) -> Result<Payload> {
    if max_len == 0 {
        return Err(Error::InvalidArgument("max_len must be at least 1".into()));
    }
    let mut history = vec![BOS, check_seed(&m.vocab, seed_token)];
    let mut out = Vec::new();
    while out.len() + 1 < max_len {
        let dist = m.distribution(&history);
        let idx = WeightedIndex::new(dist.iter().map(|(_, p)| *p))
            .map_err(|e| Error::InvalidArgument(format!("degenerate distribution: {e}")))?
            .sample(rng);
        let next = dist[idx].0;
        if next == EOS {
            break;
        }
        out.push(next);
        history.push(next);
    }
    Ok(finish(seed_token, &m.vocab, &out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{rng, Origin};

    fn p(s: &str) -> Payload {
        Payload::new(s, Origin::Malicious)
    }

    #[test]
    fn hand_count() {
        let m = train_markov(&[p("a b a b")], 1, 1.0).unwrap();
        let (a, b) = (m.vocab.id("a"), m.vocab.id("b"));
        // after "a": b twice; support {a, b, EOS}
        assert!((m.prob(&[BOS, a], b) - 3.0 / 5.0).abs() < 1e-12);
        assert!((m.prob(&[BOS, a], a) - 1.0 / 5.0).abs() < 1e-12);
        // after "b": a once, EOS once
        assert!((m.prob(&[BOS, a, b], EOS) - 2.0 / 5.0).abs() < 1e-12);
        assert_eq!(m.prob(&[BOS], BOS), 0.0);
    }

    #[test]
    fn distributions_normalize() {
        let m = train_markov(&[p("select a from t"), p("select b")], 2, 0.5).unwrap();
        for hist in [vec![BOS], vec![BOS, 4], vec![BOS, 4, 3, 5]] {
            let s: f64 = m.distribution(&hist).iter().map(|(_, p)| p).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn huge_alpha_is_nearly_uniform() {
        let m = train_markov(&[p("a b c d a a a b")], 1, 1e6).unwrap();
        let support = m.support();
        assert_eq!(support.len(), 5);
        for ctx in [vec![BOS], vec![BOS, m.vocab.id("a")], vec![BOS, m.vocab.id("d")]] {
            let tv: f64 = m.distribution(&ctx).iter().map(|(_, p)| (p - 0.2).abs()).sum::<f64>() / 2.0;
            assert!(tv <= 0.01, "tv {tv}");
        }
    }

    #[test]
    fn sampling_replays_and_starts_with_seed() {
        let m = train_markov(&[p("select a from t"), p("select b from t")], 1, 0.1).unwrap();
        for s in 0..20 {
            let a = sample_markov(&m, "select", 10, &mut rng::seeded(s)).unwrap();
            assert_eq!(a, sample_markov(&m, "select", 10, &mut rng::seeded(s)).unwrap());
            assert!(a.raw().starts_with("select"));
            assert!(a.len() <= 10);
        }
        assert!(sample_markov(&m, "select", 0, &mut rng::seeded(0)).is_err());
        assert!(train_markov(&[p("a")], 0, 1.0).is_err());
    }
}
