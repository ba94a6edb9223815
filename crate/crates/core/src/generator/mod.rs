//! Token-level sequence models over malicious payloads, sampled from a seed
//! token to produce mutated candidates.

mod gru;
mod markov;

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Payload, Result};

pub use gru::{gru_step, train_generator, GenTrainConfig, GruModel};
pub use markov::{sample_markov, train_markov, MarkovModel};

pub const UNK: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
const RESERVED: [&str; 3] = ["<unk>", "<bos>", "<eos>"];

/// Case-folded token vocabulary. Ids 0..3 are reserved, the rest follow the
/// sorted token order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn build<'a>(corpus: impl IntoIterator<Item = &'a Payload>) -> Result<Vocab> {
        let mut seen = false;
        let mut set = BTreeSet::new();
        for p in corpus {
            seen = true;
            set.extend(p.token_texts().map(fold));
        }
        if !seen {
            return Err(Error::EmptyCorpus);
        }
        Ok(Self::from_tokens(set))
    }

    fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Vocab {
        let tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).chain(tokens).collect();
        let index = tokens
            .iter()
            .enumerate()
            .skip(RESERVED.len())
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab { tokens, index }
    }

    /// Total ids, reserved included.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() == RESERVED.len()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(&fold(token)).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(&fold(token))
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Non-reserved tokens in id order.
    pub fn words(&self) -> &[String] {
        &self.tokens[RESERVED.len()..]
    }

    /// `[BOS, ids..., EOS]`.
    pub fn encode(&self, payload: &Payload) -> Vec<usize> {
        std::iter::once(BOS)
            .chain(payload.token_texts().map(|t| self.id(t)))
            .chain(std::iter::once(EOS))
            .collect()
    }
}

impl Serialize for Vocab {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.words().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocab {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let words = Vec::<String>::deserialize(d)?;
        let set: BTreeSet<&String> = words.iter().collect();
        if set.len() != words.len() || words.windows(2).any(|w| w[0] >= w[1]) {
            return Err(serde::de::Error::custom("vocabulary must be sorted and unique"));
        }
        Ok(Vocab::from_tokens(words))
    }
}

fn fold(token: &str) -> String {
    token.to_lowercase()
}

fn check_seed(vocab: &Vocab, seed_token: &str) -> usize {
    let id = vocab.id(seed_token);
    if id == UNK {
        log::warn!("seed token {seed_token:?} is not in the vocabulary; sampling from <unk>");
    }
    id
}

fn finish(seed_token: &str, vocab: &Vocab, ids: &[usize]) -> Payload {
    let mut words = vec![seed_token.to_string()];
    words.extend(ids.iter().map(|&i| vocab.tokens[i].clone()));
    Payload::new(words.join(" "), crate::Origin::Generated)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleConfig {
    pub max_len: usize,
    /// Softmax temperature; values below [`GREEDY_TEMPERATURE`] decode by argmax.
    pub temperature: f64,
}

pub const GREEDY_TEMPERATURE: f64 = 1e-6;

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            max_len: 40,
            temperature: 1.0,
        }
    }
}

impl SampleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_len == 0 {
            return Err(Error::InvalidArgument("max_len must be at least 1".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidArgument("temperature must be positive".into()));
        }
        Ok(())
    }
}

/// A trained generator of either kind, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GeneratorModel {
    Gru(GruModel),
    Markov(MarkovModel),
}

impl GeneratorModel {
    pub fn vocab(&self) -> &Vocab {
        match self {
            GeneratorModel::Gru(m) => &m.vocab,
            GeneratorModel::Markov(m) => &m.vocab,
        }
    }

    pub fn sample(&self, seed_token: &str, cfg: &SampleConfig, rng: &mut crate::rng::Rng) -> Result<Payload> {
        match self {
            GeneratorModel::Gru(m) => m.sample(seed_token, cfg, rng),
            GeneratorModel::Markov(m) => sample_markov(m, seed_token, cfg.max_len, rng),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: GeneratorModel = serde_json::from_str(&text)?;
        if let GeneratorModel::Gru(m) = &model {
            m.check()?;
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Origin;

    fn p(s: &str) -> Payload {
        Payload::new(s, Origin::Malicious)
    }

    #[test]
    fn vocab_contract() {
        let corpus = [p("select from SELECT")];
        let v = Vocab::build(&corpus).unwrap();
        assert_eq!(v.words(), ["from", "select"]);
        assert_eq!(v.len(), 5);
        assert_eq!(v, Vocab::build(&corpus).unwrap());
        assert_eq!(v.id("drop"), UNK);
        assert_eq!(v.id("Select"), 4);
        assert_eq!(v.encode(&p("from x")), [BOS, 3, UNK, EOS]);
        assert!(Vocab::build(&[] as &[Payload]).is_err());
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<Vocab>(&json).unwrap(), v);
        assert!(serde_json::from_str::<Vocab>(r#"["b","a"]"#).is_err());
    }

    #[test]
    fn sample_config_validation() {
        assert!(SampleConfig::default().validate().is_ok());
        let zero_len = SampleConfig {
            max_len: 0,
            ..SampleConfig::default()
        };
        assert!(zero_len.validate().is_err());
        for t in [0.0, -1.0, f64::NAN] {
            let c = SampleConfig {
                temperature: t,
                ..SampleConfig::default()
            };
            assert!(c.validate().is_err());
        }
    }

    #[test]
    fn models_round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = [p("select a from t"), p("select b from t where x")];
        let cfg = GenTrainConfig {
            epochs: 2,
            hidden: 4,
            embedding: 3,
            ..GenTrainConfig::default()
        };
        let models = [
            GeneratorModel::Markov(train_markov(&corpus, 2, 0.5).unwrap()),
            GeneratorModel::Gru(train_generator(&corpus, &cfg).unwrap().0),
        ];
        for (i, m) in models.iter().enumerate() {
            let path = dir.path().join(format!("g{i}.json"));
            m.save(&path).unwrap();
            let back = GeneratorModel::load(&path).unwrap();
            let sc = SampleConfig::default();
            assert_eq!(
                back.sample("select", &sc, &mut crate::rng::seeded(4)).unwrap(),
                m.sample("select", &sc, &mut crate::rng::seeded(4)).unwrap()
            );
        }
    }
}
