//! End-to-end hardening run: label, shadow, generate, correct, filter, mine,
//! validate, update, measure. Every intermediate artifact lands in the run
//! directory under a fixed name.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corrector::{correct, extract_keywords, Correction, CorrectorConfig, DEFAULT_KEYWORDS};
use crate::generator::{train_generator, GenTrainConfig, GeneratorModel, SampleConfig};
use crate::ingest::{self, benign_fixture, load_corpus, save_corpus, synth_sql, Dataset, SqlGrammar};
use crate::mockwaf::{seed_rules, RuleSet};
use crate::report::{report_render, Funnel, ReportFormat, RunReport};
use crate::shadow::{fidelity, train_shadow, FeatureSpec, TrainConfig};
use crate::signature::{mine, split_rejected, validate_signatures, MiningParams};
use crate::{compute_metrics, rng, AttackType, Error, Label, Metrics, Payload, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// One payload per line; synthesized from the SQL grammar when absent.
    pub malicious: Option<PathBuf>,
    /// One payload per line; the bundled fixture when absent.
    pub benign: Option<PathBuf>,
    /// Rule file; the built-in seed rules when absent.
    pub rules: Option<PathBuf>,
    /// Dictionary file for the SQL grammar.
    pub grammar: Option<PathBuf>,
    pub n_synth: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            malicious: None,
            benign: None,
            rules: None,
            grammar: None,
            n_synth: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShadowConfig {
    pub features: FeatureSpec,
    pub train: TrainConfig,
    /// Validation fidelity below which the shadow is retrained once on
    /// train plus validation.
    pub retrain_below: f64,
}

impl Default for ShadowConfig {
    fn default() -> Self {
        ShadowConfig {
            features: FeatureSpec::default(),
            train: TrainConfig::default(),
            retrain_below: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub train: GenTrainConfig,
    pub sample: SampleConfig,
    /// Samples drawn per keyword seed.
    pub samples_per_seed: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            train: GenTrainConfig::default(),
            sample: SampleConfig::default(),
            samples_per_seed: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub attack_type: AttackType,
    /// Mandatory; every stage draws from a stream derived from it.
    pub seed: u64,
    pub run_dir: PathBuf,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub shadow: ShadowConfig,
    #[serde(default)]
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub corrector: CorrectorConfig,
    #[serde(default)]
    pub signature: MiningParams,
    /// Training of the attack-vs-benign model that decides token scores.
    #[serde(default = "default_discriminator")]
    pub discriminator: TrainConfig,
}

fn default_discriminator() -> TrainConfig {
    TrainConfig {
        l2: 1e-3,
        ..TrainConfig::default()
    }
}

impl PipelineConfig {
    pub fn new(seed: u64, run_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            attack_type: AttackType::Sqli,
            seed,
            run_dir: run_dir.into(),
            data: DataConfig::default(),
            shadow: ShadowConfig::default(),
            generator: GeneratorConfig::default(),
            corrector: CorrectorConfig::default(),
            signature: MiningParams::default(),
            discriminator: default_discriminator(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        for path in [&d.malicious, &d.benign, &d.rules, &d.grammar].into_iter().flatten() {
            if !path.is_file() {
                return Err(Error::Config(format!("{} does not exist", path.display())));
            }
        }
        if d.malicious.is_none() && self.attack_type != AttackType::Sqli {
            return Err(Error::Config(format!(
                "no malicious corpus given and only sqli can be synthesized, not {}",
                self.attack_type
            )));
        }
        if d.malicious.is_none() && d.n_synth == 0 {
            return Err(Error::Config("n_synth must be positive".into()));
        }
        if self.generator.samples_per_seed == 0 {
            return Err(Error::Config("samples_per_seed must be positive".into()));
        }
        self.shadow.features.validate().map_err(config)?;
        self.generator.train.validate().map_err(config)?;
        self.generator.sample.validate().map_err(config)?;
        self.corrector.validate().map_err(config)?;
        Ok(())
    }
}

fn config(e: Error) -> Error {
    Error::Config(e.to_string())
}

fn stage<T>(name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| Error::Stage {
        stage: name,
        source: Box::new(e),
    });
    log::info!("stage {name} finished in {:.1?}", start.elapsed());
    out
}

/// Fixed artifact names inside the run directory.
pub mod artifacts {
    pub const MALICIOUS: &str = "corpus.malicious.txt";
    pub const BENIGN: &str = "corpus.benign.txt";
    pub const RULES_BEFORE: &str = "rules.before.txt";
    pub const RULES_AFTER: &str = "rules.after.txt";
    pub const SHADOW: &str = "shadow.json";
    pub const DISCRIMINATOR: &str = "discriminator.json";
    pub const GENERATOR: &str = "generator.json";
    pub const KEYWORDS: &str = "keywords.txt";
    pub const CANDIDATES: &str = "candidates.txt";
    pub const CORRECTED: &str = "corrected.txt";
    pub const DISCARDED: &str = "discarded.tsv";
    pub const SHADOW_BYPASS: &str = "shadow_bypass.txt";
    pub const BYPASS: &str = "bypass.txt";
    pub const MINING: &str = "mining.json";
    pub const SIGNATURES: &str = "signatures.txt";
    pub const VALIDATION: &str = "validation.json";
    pub const ACCEPTED: &str = "signatures.accepted.txt";
    pub const REPORT_JSON: &str = "report.json";
    pub const REPORT_TEXT: &str = "report.txt";

    /// `split.<part>.<malicious|benign>.txt`
    pub fn split(part: &str, class: &str) -> String {
        format!("split.{part}.{class}.txt")
    }
}

const STREAM_SYNTH: u64 = 1;
const STREAM_SPLIT: u64 = 2;
const STREAM_SHADOW: u64 = 3;
const STREAM_GENERATOR: u64 = 4;
const STREAM_SAMPLE: u64 = 5;
const STREAM_DISCRIMINATOR: u64 = 6;

fn stream_seed(seed: u64, stream: u64) -> u64 {
    use rand::RngCore;
    rng::stream(seed, stream).next_u64()
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_payloads<'a>(path: &Path, payloads: impl IntoIterator<Item = &'a Payload>) -> Result<()> {
    let mut out = String::new();
    for p in payloads {
        out.push_str(p.raw());
        out.push('\n');
    }
    write(path, out)
}

fn labels(waf: &RuleSet, payloads: &[&Payload]) -> Vec<Label> {
    payloads.iter().map(|p| waf.classify(p)).collect()
}

fn metrics(waf: &RuleSet, malicious: &[&Payload], benign: &[&Payload]) -> Result<Metrics> {
    compute_metrics(&labels(waf, malicious), &labels(waf, benign))
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunReport> {
    cfg.validate()?;
    let dir = cfg.run_dir.as_path();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let at = |name: &str| dir.join(name);

    // Corpora and rules.
    let (corpus, waf) = stage("ingest", || -> Result<_> {
        let malicious = match &cfg.data.malicious {
            Some(path) => load_corpus(path, Label::Rejected, cfg.attack_type)?,
            None => {
                let grammar = match &cfg.data.grammar {
                    Some(path) => SqlGrammar::load(path)?,
                    None => SqlGrammar::default(),
                };
                synth_sql(&grammar, cfg.data.n_synth, &mut rng::stream(cfg.seed, STREAM_SYNTH))?
            }
        };
        let benign = match &cfg.data.benign {
            Some(path) => load_corpus(path, Label::Accepted, cfg.attack_type)?,
            None => benign_fixture(),
        };
        if malicious.is_empty() || benign.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let waf = match &cfg.data.rules {
            Some(path) => RuleSet::load(path)?,
            None => seed_rules(cfg.attack_type),
        };
        save_corpus(&malicious, at(artifacts::MALICIOUS))?;
        save_corpus(&benign, at(artifacts::BENIGN))?;
        waf.save(at(artifacts::RULES_BEFORE))?;
        let mut corpus = Dataset::new(cfg.attack_type);
        corpus.extend(malicious);
        corpus.extend(benign);
        Ok((corpus, waf))
    })?;

    let parts = stage("split", || -> Result<_> {
        let parts = ingest::split(&corpus, &mut rng::stream(cfg.seed, STREAM_SPLIT));
        for (name, part) in [
            ("train", &parts.train),
            ("validation", &parts.validation),
            ("test", &parts.test),
        ] {
            write_payloads(
                &at(&artifacts::split(name, "malicious")),
                part.with_label(Label::Rejected),
            )?;
            write_payloads(&at(&artifacts::split(name, "benign")), part.with_label(Label::Accepted))?;
        }
        Ok(parts)
    })?;
    let train_mal: Vec<&Payload> = parts.train.with_label(Label::Rejected).collect();
    let train_ben: Vec<&Payload> = parts.train.with_label(Label::Accepted).collect();
    let val_ben: Vec<&Payload> = parts.validation.with_label(Label::Accepted).collect();
    let test_mal: Vec<&Payload> = parts.test.with_label(Label::Rejected).collect();
    let test_ben: Vec<&Payload> = parts.test.with_label(Label::Accepted).collect();

    // Shadow model of the WAF, trained on the WAF's own labels.
    let (shadow, shadow_fidelity, shadow_retrained, shadow_fidelity_test) = stage("shadow", || -> Result<_> {
        let waf_labeled =
            |d: &Dataset| -> Vec<(Payload, Label)> { d.iter().map(|p| (p.clone(), waf.classify(p))).collect() };
        let mut tcfg = cfg.shadow.train.clone();
        tcfg.seed = stream_seed(cfg.seed, STREAM_SHADOW);
        let mut examples = waf_labeled(&parts.train);
        let mut model = train_shadow(&examples, cfg.shadow.features, &tcfg)?;
        let fid = fidelity(&model, &waf, parts.validation.iter())?;
        log::info!("shadow fidelity on validation: {fid:.4}");
        let retrain = fid < cfg.shadow.retrain_below;
        if retrain {
            examples.extend(waf_labeled(&parts.validation));
            model = train_shadow(&examples, cfg.shadow.features, &tcfg)?;
        }
        let fid_test = fidelity(&model, &waf, parts.test.iter())?;
        model.save(at(artifacts::SHADOW))?;
        Ok((model, fid, retrain, fid_test))
    })?;

    // Generator over the malicious payloads the WAF detects.
    let (generator, generator_final_loss) = stage("generator", || -> Result<_> {
        let detected: Vec<&Payload> = train_mal
            .iter()
            .copied()
            .filter(|p| waf.classify(p).is_rejected())
            .collect();
        let mut gcfg = cfg.generator.train.clone();
        gcfg.seed = stream_seed(cfg.seed, STREAM_GENERATOR);
        let (model, history) = train_generator(detected, &gcfg)?;
        let model = GeneratorModel::Gru(model);
        model.save(at(artifacts::GENERATOR))?;
        Ok((model, history.last().copied().unwrap_or(f64::NAN)))
    })?;

    let keywords = stage("keywords", || -> Result<_> {
        let kw = extract_keywords(train_mal.iter().copied(), DEFAULT_KEYWORDS)?;
        write(&at(artifacts::KEYWORDS), kw.to_text())?;
        Ok(kw)
    })?;

    // Sample from every keyword seed, then correct.
    let mut funnel = Funnel {
        generated: 0,
        discarded: 0,
        corrected: 0,
        rewritten: 0,
        shadow_bypassing: 0,
        waf_bypassing: 0,
        unique_bypassing: 0,
        signatures_emitted: 0,
        signatures_validated: 0,
    };
    let valid = stage("generate", || -> Result<_> {
        let mut sample_rng = rng::stream(cfg.seed, STREAM_SAMPLE);
        let mut candidates = Vec::new();
        for kw in keywords.keywords() {
            for _ in 0..cfg.generator.samples_per_seed {
                candidates.push(generator.sample(kw, &cfg.generator.sample, &mut sample_rng)?);
            }
        }
        write_payloads(&at(artifacts::CANDIDATES), &candidates)?;
        let mut valid = Vec::new();
        let mut discarded = String::new();
        for c in &candidates {
            match correct(c, &keywords, &cfg.corrector) {
                Correction::Kept(p) => valid.push(p),
                Correction::Corrected(p) => {
                    funnel.rewritten += 1;
                    valid.push(p);
                }
                Correction::Discarded(reason) => {
                    funnel.discarded += 1;
                    discarded.push_str(&format!("{}\t{}\n", c.raw(), reason));
                }
            }
        }
        funnel.generated = candidates.len();
        funnel.corrected = valid.len();
        write_payloads(&at(artifacts::CORRECTED), &valid)?;
        write(&at(artifacts::DISCARDED), discarded)?;
        Ok(valid)
    })?;

    // Keep what slips past the shadow, then past the WAF itself.
    let bypass = stage("filter", || -> Result<_> {
        let past_shadow: Vec<&Payload> = valid.iter().filter(|p| !shadow.predict(p).1.is_rejected()).collect();
        write_payloads(&at(artifacts::SHADOW_BYPASS), past_shadow.iter().copied())?;
        let past_waf: Vec<&Payload> = past_shadow
            .iter()
            .copied()
            .filter(|p| !waf.classify(p).is_rejected())
            .collect();
        let mut seen = HashSet::new();
        let bypass: Vec<Payload> = past_waf
            .iter()
            .filter(|p| seen.insert(p.raw().to_string()))
            .map(|p| (*p).clone())
            .collect();
        funnel.shadow_bypassing = past_shadow.len();
        funnel.waf_bypassing = past_waf.len();
        funnel.unique_bypassing = bypass.len();
        write_payloads(&at(artifacts::BYPASS), &bypass)?;
        Ok(bypass)
    })?;
    let bypass_refs: Vec<&Payload> = bypass.iter().collect();

    // Signatures: tokens are scored against a model that separates attacks,
    // bypassing ones included, from benign traffic.
    let (accepted, signatures) = stage("signature", || -> Result<_> {
        let mut examples: Vec<(Payload, Label)> = train_mal
            .iter()
            .chain(&bypass_refs)
            .map(|p| ((*p).clone(), Label::Rejected))
            .collect();
        examples.extend(train_ben.iter().map(|p| ((*p).clone(), Label::Accepted)));
        let mut tcfg = cfg.discriminator.clone();
        tcfg.seed = stream_seed(cfg.seed, STREAM_DISCRIMINATOR);
        let discriminator = train_shadow(&examples, cfg.shadow.features, &tcfg)?;
        discriminator.save(at(artifacts::DISCRIMINATOR))?;
        let mined = mine(&discriminator, bypass_refs.iter().copied(), &cfg.signature)?;
        write(&at(artifacts::MINING), serde_json::to_string_pretty(&mined)?)?;
        write(
            &at(artifacts::SIGNATURES),
            mined.signatures.iter().map(|s| s.render() + "\n").collect::<String>(),
        )?;
        let validate = |sigs: &[crate::signature::Signature]| {
            validate_signatures(sigs, train_ben.iter().copied(), bypass_refs.iter().copied())
        };
        let mut report = validate(&mined.signatures)?;
        let split = split_rejected(&mined, &report);
        if !split.is_empty() {
            report.verdicts.extend(validate(&split)?.verdicts);
        }
        write(&at(artifacts::VALIDATION), serde_json::to_string_pretty(&report)?)?;
        let accepted = report.accepted();
        write(
            &at(artifacts::ACCEPTED),
            accepted.iter().map(|s| s.render() + "\n").collect::<String>(),
        )?;
        Ok((accepted, report.verdicts.len()))
    })?;
    funnel.signatures_emitted = signatures;
    funnel.signatures_validated = accepted.len();

    let report = stage("update", || -> Result<_> {
        let (hardened, summary) = waf.add_signatures(&accepted);
        log::info!(
            "added {} signatures ({} duplicates)",
            summary.added.len(),
            summary.duplicates.len()
        );
        hardened.save(at(artifacts::RULES_AFTER))?;
        let report = RunReport {
            attack_type: cfg.attack_type,
            seed: cfg.seed,
            shadow_fidelity,
            shadow_retrained,
            shadow_fidelity_test,
            generator_final_loss,
            keywords: keywords.keywords().map(str::to_string).collect(),
            funnel: funnel.clone(),
            pre: metrics(&waf, &bypass_refs, &val_ben)?,
            post: metrics(&hardened, &bypass_refs, &val_ben)?,
            test_pre: metrics(&waf, &test_mal, &test_ben)?,
            test_post: metrics(&hardened, &test_mal, &test_ben)?,
            rules_before: waf.len(),
            rules_after: hardened.len(),
            signatures: accepted.iter().map(|s| s.render()).collect(),
        };
        write(&at(artifacts::REPORT_JSON), report_render(&report, ReportFormat::Json)?)?;
        write(&at(artifacts::REPORT_TEXT), report_render(&report, ReportFormat::Text)?)?;
        Ok(report)
    })?;
    debug_assert!(report.funnel.is_monotone());
    Ok(report)
}
