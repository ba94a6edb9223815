//! Corpus loading, percent-decoding, tokenization and dataset splits.

mod grammar;

use std::fs;
use std::path::Path;

use percent_encoding::percent_decode_str;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::{AttackType, Error, Label, Origin, Payload, Result, Token};

pub use grammar::{synth_sql, SqlGrammar};

/// Labeled payloads of a single attack type. The label is ground truth:
/// `Rejected` for malicious, `Accepted` for benign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub attack_type: AttackType,
    pub payloads: Vec<(Payload, Label)>,
}

impl Dataset {
    pub fn new(attack_type: AttackType) -> Self {
        Dataset {
            attack_type,
            payloads: Vec::new(),
        }
    }

    pub fn from_payloads(attack_type: AttackType, payloads: Vec<Payload>, label: Label) -> Self {
        Dataset {
            attack_type,
            payloads: payloads.into_iter().map(|p| (p, label)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.payloads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.payloads.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Payload> + '_ {
        self.payloads.iter().map(|(p, _)| p)
    }

    pub fn with_label(&self, label: Label) -> impl Iterator<Item = &Payload> + '_ {
        self.payloads.iter().filter(move |(_, l)| *l == label).map(|(p, _)| p)
    }

    pub fn extend(&mut self, other: Dataset) {
        self.payloads.extend(other.payloads);
    }
}

/// Decodes `%XX` triplets until the string stops changing, so double-encoded
/// input comes out fully decoded. Malformed triplets are left as they are and
/// byte sequences that are not UTF-8 become U+FFFD.
pub fn percent_decode(s: &str) -> String {
    let mut current = s.to_owned();
    loop {
        let next = percent_decode_once(&current);
        if next == current {
            return current;
        }
        current = next;
    }
}

pub fn percent_decode_once(s: &str) -> String {
    percent_decode_str(s).decode_utf8_lossy().into_owned()
}

pub fn tokenize(raw: &str) -> Vec<Token> {
    raw.split_whitespace()
        .enumerate()
        .map(|(index, text)| Token {
            text: text.to_owned(),
            index,
        })
        .collect()
}

/// Reads one payload per line. Malicious corpora are decoded to a fixed point;
/// benign corpora get a single decoding pass and are otherwise kept verbatim.
pub fn load_corpus(path: impl AsRef<Path>, label: Label, attack_type: AttackType) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(bytes).map_err(|_| Error::NotUtf8 { path: path.to_owned() })?;
    Ok(parse_corpus(&text, label, attack_type))
}

pub fn parse_corpus(text: &str, label: Label, attack_type: AttackType) -> Dataset {
    let origin = match label {
        Label::Rejected => Origin::Malicious,
        Label::Accepted => Origin::Benign,
    };
    let payloads = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let decoded = match label {
                Label::Rejected => percent_decode(line),
                Label::Accepted => percent_decode_once(line),
            };
            (Payload::new(decoded, origin), label)
        })
        .collect();
    Dataset { attack_type, payloads }
}

pub fn save_corpus(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_lines(path, dataset.iter().map(Payload::raw))
}

pub(crate) fn write_lines<'a>(path: impl AsRef<Path>, lines: impl Iterator<Item = &'a str>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for line in lines {
        out.push_str(line);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// The benign fixture shipped with the crate: 2000 form-field values in the
/// style of an e-commerce request log.
pub fn benign_fixture() -> Dataset {
    parse_corpus(include_str!("../../data/benign.txt"), Label::Accepted, AttackType::Sqli)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

/// Stratified 70/15/15 split: each label is shuffled and cut separately.
pub fn split(dataset: &Dataset, rng: &mut Rng) -> Split {
    let mut out = Split {
        train: Dataset::new(dataset.attack_type),
        validation: Dataset::new(dataset.attack_type),
        test: Dataset::new(dataset.attack_type),
    };
    for label in [Label::Rejected, Label::Accepted] {
        let mut class: Vec<_> = dataset.payloads.iter().filter(|(_, l)| *l == label).cloned().collect();
        class.shuffle(rng);
        let n = class.len();
        let n_train = n * 70 / 100;
        let n_val = n * 15 / 100;
        let mut rest = class.split_off(n_train);
        let test = rest.split_off(n_val.min(rest.len()));
        out.train.payloads.extend(class);
        out.validation.payloads.extend(rest);
        out.test.payloads.extend(test);
    }
    out
}
