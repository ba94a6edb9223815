//! `wafboost`: command-line front end for the hardening toolkit.
//!
//! Every subcommand reads its defaults from the optional `--config` TOML file
//! (the same document `pipeline run` consumes) and lets flags override them.
//! Exit status is 0 on success, 1 when a stage fails and 2 for configuration
//! or usage errors.

mod settings;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Args, Parser, Subcommand, ValueEnum};
use wafboost::corrector::{correct, extract_keywords, Correction, CorrectorConfig, KeywordSet};
use wafboost::generator::{train_generator, train_markov, GenTrainConfig, GeneratorModel, SampleConfig};
use wafboost::ingest::{load_corpus, synth_sql, SqlGrammar};
use wafboost::mockwaf::{seed_rules, RuleSet};
use wafboost::pipeline::{run_pipeline, ShadowConfig};
use wafboost::report::{report_render, ReportFormat, RunReport};
use wafboost::shadow::{fidelity, train_shadow, ShadowModel};
use wafboost::signature::{
    align_group, cluster, emit_signature, mine, score_tokens, select_important, validate_signatures, Decider,
    MiningParams, ScoreVector, Signature,
};
use wafboost::{rng, AttackType, Error, Label, Payload};

use settings::Settings;

#[derive(Parser)]
#[command(name = "wafboost", version, about = "Harden a black-box WAF with mined signatures")]
struct Cli {
    /// TOML configuration file; flags take precedence over its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// More log output (-v info, -vv debug). RUST_LOG wins when set.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corpus utilities.
    #[command(subcommand)]
    Data(DataCmd),
    /// Run or update the rule-engine WAF.
    #[command(subcommand)]
    Waf(WafCmd),
    /// Train and query the shadow classifier.
    #[command(subcommand)]
    Shadow(ShadowCmd),
    /// Train and sample payload generators.
    #[command(subcommand)]
    Gen(GenCmd),
    /// Repair generated payloads against the keyword set.
    Correct(CorrectArgs),
    /// Signature mining steps.
    #[command(subcommand)]
    Sig(SigCmd),
    /// End-to-end hardening run.
    #[command(subcommand)]
    Pipeline(PipelineCmd),
    /// Render a saved run report.
    Report(ReportArgs),
}

#[derive(Subcommand)]
enum DataCmd {
    /// Synthesize SQL injection payloads from the grammar.
    Synth {
        #[arg(short)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Terminal dictionary file (`tables = a, b` lines).
        #[arg(long)]
        grammar: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Percent-decode a corpus, one payload per line.
    Decode {
        #[arg(long = "in")]
        input: PathBuf,
        /// Decode a single pass, as done for benign traffic.
        #[arg(long)]
        benign: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RulesArg {
    /// Rule file (`id<TAB>pattern`); the built-in seed rules when absent.
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    attack_type: Option<AttackType>,
}

#[derive(Subcommand)]
enum WafCmd {
    /// Print `label<TAB>rule<TAB>payload` for every input line.
    Classify {
        #[command(flatten)]
        rules: RulesArg,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Append signatures to a rule set.
    Update {
        #[command(flatten)]
        rules: RulesArg,
        #[arg(long)]
        signatures: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum ShadowCmd {
    /// Train on payloads labeled by the WAF.
    Train {
        #[arg(long)]
        malicious: PathBuf,
        #[arg(long)]
        benign: PathBuf,
        #[command(flatten)]
        rules: RulesArg,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        l2: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print `score<TAB>label<TAB>payload` for every input line.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Agreement between the model and the WAF over the given corpora.
    Fidelity {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        rules: RulesArg,
        #[arg(long = "in", required = true)]
        input: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Gru,
    Markov,
}

#[derive(Subcommand)]
enum GenCmd {
    Train {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "gru")]
        kind: GenKind,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Markov context length.
        #[arg(long, default_value_t = 2)]
        order: usize,
        /// Markov additive smoothing.
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Write the per-epoch loss, one value per line.
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    Sample {
        #[arg(long)]
        model: PathBuf,
        /// Repeat for several seeds.
        #[arg(long = "seed-token", required = true)]
        seed_token: Vec<String>,
        /// Samples per seed token.
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long)]
        max_len: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct CorrectArgs {
    /// Keyword file (`keyword<TAB>count` lines).
    #[arg(long, conflicts_with = "keywords_from")]
    keywords: Option<PathBuf>,
    /// Extract the keywords from this malicious corpus instead.
    #[arg(long)]
    keywords_from: Option<PathBuf>,
    #[arg(long, default_value_t = wafboost::corrector::DEFAULT_KEYWORDS)]
    top_k: usize,
    #[arg(long)]
    lt: Option<usize>,
    #[arg(long)]
    ut: Option<usize>,
    #[arg(long)]
    min_tokens: Option<usize>,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// `payload<TAB>reason` for every discarded line.
    #[arg(long)]
    discarded: Option<PathBuf>,
}

#[derive(Args)]
struct DeciderArg {
    /// Score against a shadow model instead of the WAF.
    #[arg(long, conflicts_with = "rules")]
    model: Option<PathBuf>,
    #[command(flatten)]
    rules: RulesArg,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    min_total: Option<u32>,
    #[arg(long)]
    min_freq: Option<usize>,
    #[arg(long)]
    top_m: Option<usize>,
}

#[derive(Subcommand)]
enum SigCmd {
    /// Per-token perturbation scores, one JSON array per payload.
    Score {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        decider: DeciderArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank important tokens from `sig score` output.
    Select {
        #[arg(long)]
        scores: PathBuf,
        #[command(flatten)]
        select: SelectArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Group tokens (first column of each line) by edit distance.
    Cluster {
        #[arg(long)]
        tokens: PathBuf,
        #[arg(long)]
        radius: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Common subsequence of every group line, as JSON.
    Align {
        #[arg(long)]
        groups: PathBuf,
        #[arg(long)]
        gap_penalty: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One signature per group line.
    Emit {
        #[arg(long)]
        groups: PathBuf,
        #[arg(long)]
        gap_penalty: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score, select, cluster, align and emit in one go.
    Mine {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        decider: DeciderArg,
        #[command(flatten)]
        select: SelectArgs,
        #[arg(long)]
        radius: Option<usize>,
        /// Intermediate scores, groups and alignments as JSON.
        #[arg(long)]
        details: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Keep the signatures that match no benign payload.
    Validate {
        #[arg(long)]
        signatures: PathBuf,
        #[arg(long)]
        benign: PathBuf,
        #[arg(long)]
        bypass: PathBuf,
        /// Per-signature verdicts as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum PipelineCmd {
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    run_dir: Option<PathBuf>,
    #[arg(long)]
    attack_type: Option<AttackType>,
    #[arg(long)]
    malicious: Option<PathBuf>,
    #[arg(long)]
    benign: Option<PathBuf>,
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    grammar: Option<PathBuf>,
    #[arg(long)]
    n_synth: Option<usize>,
    #[arg(long)]
    samples_per_seed: Option<usize>,
    #[arg(long)]
    gen_epochs: Option<usize>,
    /// Set any configuration key, e.g. `--set corrector.upper_threshold=6`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, default_value = "text")]
    format: String,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "text")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::Config(_) | Error::InvalidArgument(_) | Error::UnknownFormat(_)) => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let settings = Settings::load(cli.config.as_deref())?;
    match cli.command {
        Command::Data(cmd) => data(&settings, cmd),
        Command::Waf(cmd) => waf(&settings, cmd),
        Command::Shadow(cmd) => shadow(&settings, cmd),
        Command::Gen(cmd) => gen(&settings, cmd),
        Command::Correct(args) => correct_cmd(&settings, args),
        Command::Sig(cmd) => sig(&settings, cmd),
        Command::Pipeline(PipelineCmd::Run(args)) => pipeline(settings, args),
        Command::Report(args) => {
            let text = read(&args.input)?;
            let report = RunReport::from_json(&text)?;
            emit(args.out.as_deref(), &report_render(&report, args.format.parse()?)?)
        }
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Writes to `out`, or to stdout when no file is given.
fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(stdout.flush()?)
        }
    }
}

fn lines<I, S>(items: I) -> String
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    items.into_iter().fold(String::new(), |mut acc, s| {
        acc.push_str(s.as_ref());
        acc.push('\n');
        acc
    })
}

fn malicious(path: &Path, at: AttackType) -> anyhow::Result<Vec<Payload>> {
    Ok(load_corpus(path, Label::Rejected, at)?.iter().cloned().collect())
}

fn benign(path: &Path, at: AttackType) -> anyhow::Result<Vec<Payload>> {
    Ok(load_corpus(path, Label::Accepted, at)?.iter().cloned().collect())
}

fn rule_set(settings: &Settings, arg: &RulesArg) -> anyhow::Result<RuleSet> {
    let path = arg.rules.clone().or(settings.path("data.rules"));
    Ok(match path {
        Some(path) => RuleSet::load(path)?,
        None => seed_rules(settings.attack_type(arg.attack_type)?),
    })
}

fn decider(settings: &Settings, arg: &DeciderArg) -> anyhow::Result<Box<dyn Decider>> {
    Ok(match &arg.model {
        Some(path) => Box::new(ShadowModel::load(path)?),
        None => Box::new(rule_set(settings, &arg.rules)?),
    })
}

fn signatures(path: &Path) -> anyhow::Result<Vec<Signature>> {
    read(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| Ok(Signature::parse(l)?))
        .collect()
}

fn groups(path: &Path) -> anyhow::Result<Vec<Vec<String>>> {
    Ok(read(path)?
        .lines()
        .map(|l| l.split_whitespace().map(str::to_owned).collect::<Vec<_>>())
        .filter(|g| !g.is_empty())
        .collect())
}

fn data(settings: &Settings, cmd: DataCmd) -> anyhow::Result<()> {
    match cmd {
        DataCmd::Synth { n, seed, grammar, out } => {
            let grammar = match grammar.or(settings.path("data.grammar")) {
                Some(path) => SqlGrammar::load(path)?,
                None => SqlGrammar::default(),
            };
            let n = n.unwrap_or(settings.data()?.n_synth);
            let ds = synth_sql(&grammar, n, &mut rng::seeded(settings.seed(seed)?))?;
            emit(out.as_deref(), &lines(ds.iter().map(Payload::raw)))
        }
        DataCmd::Decode { input, benign, out } => {
            let label = if benign { Label::Accepted } else { Label::Rejected };
            let ds = load_corpus(&input, label, settings.attack_type(None)?)?;
            emit(out.as_deref(), &lines(ds.iter().map(Payload::raw)))
        }
    }
}

fn waf(settings: &Settings, cmd: WafCmd) -> anyhow::Result<()> {
    match cmd {
        WafCmd::Classify { rules, input, out } => {
            let waf = rule_set(settings, &rules)?;
            let payloads = malicious(&input, settings.attack_type(rules.attack_type)?)?;
            let text = lines(payloads.iter().map(|p| {
                let rule = waf.matching_rule(p).map_or("-", |r| r.id.as_str());
                format!("{:?}\t{rule}\t{}", waf.classify(p), p.raw())
            }));
            emit(out.as_deref(), &text)
        }
        WafCmd::Update {
            rules,
            signatures: sigs,
            out,
        } => {
            let waf = rule_set(settings, &rules)?;
            let (updated, summary) = waf.add_signatures(&signatures(&sigs)?);
            updated.save(&out)?;
            eprintln!(
                "added {} rule(s), {} duplicate(s), version {}",
                summary.added.len(),
                summary.duplicates.len(),
                updated.version()
            );
            Ok(())
        }
    }
}

fn shadow(settings: &Settings, cmd: ShadowCmd) -> anyhow::Result<()> {
    match cmd {
        ShadowCmd::Train {
            malicious: mal,
            benign: ben,
            rules,
            seed,
            epochs,
            lr,
            l2,
            out,
        } => {
            let at = settings.attack_type(rules.attack_type)?;
            let waf = rule_set(settings, &rules)?;
            let sc: ShadowConfig = settings.section("shadow")?;
            let mut tcfg = sc.train;
            tcfg.seed = settings.seed(seed)?;
            tcfg.epochs = epochs.unwrap_or(tcfg.epochs);
            tcfg.learning_rate = lr.unwrap_or(tcfg.learning_rate);
            tcfg.l2 = l2.unwrap_or(tcfg.l2);
            let examples: Vec<(Payload, Label)> = malicious(&mal, at)?
                .into_iter()
                .chain(benign(&ben, at)?)
                .map(|p| {
                    let label = waf.classify(&p);
                    (p, label)
                })
                .collect();
            let model = train_shadow(&examples, sc.features, &tcfg)?;
            let fid = fidelity(&model, &waf, examples.iter().map(|(p, _)| p))?;
            model.save(&out)?;
            eprintln!("training fidelity {fid:.4}");
            Ok(())
        }
        ShadowCmd::Predict { model, input, out } => {
            let model = ShadowModel::load(model)?;
            let payloads = malicious(&input, settings.attack_type(None)?)?;
            let text = lines(payloads.iter().map(|p| {
                let (score, label) = model.predict(p);
                format!("{score:.6}\t{label:?}\t{}", p.raw())
            }));
            emit(out.as_deref(), &text)
        }
        ShadowCmd::Fidelity { model, rules, input } => {
            let model = ShadowModel::load(model)?;
            let waf = rule_set(settings, &rules)?;
            let at = settings.attack_type(rules.attack_type)?;
            let mut corpus = Vec::new();
            for path in &input {
                corpus.extend(malicious(path, at)?);
            }
            emit(None, &format!("{:.6}\n", fidelity(&model, &waf, &corpus)?))
        }
    }
}

fn gen(settings: &Settings, cmd: GenCmd) -> anyhow::Result<()> {
    let at = settings.attack_type(None)?;
    match cmd {
        GenCmd::Train {
            input,
            kind,
            seed,
            epochs,
            hidden,
            batch_size,
            order,
            alpha,
            history,
            out,
        } => {
            let corpus = malicious(&input, at)?;
            let model = match kind {
                GenKind::Markov => GeneratorModel::Markov(train_markov(&corpus, order, alpha)?),
                GenKind::Gru => {
                    let mut cfg: GenTrainConfig = settings.section("generator.train")?;
                    cfg.seed = settings.seed(seed)?;
                    cfg.epochs = epochs.unwrap_or(cfg.epochs);
                    cfg.hidden = hidden.unwrap_or(cfg.hidden);
                    cfg.batch_size = batch_size.unwrap_or(cfg.batch_size);
                    let (model, losses) = train_generator(&corpus, &cfg)?;
                    if let Some(path) = history {
                        emit(Some(&path), &lines(losses.iter().map(|l| format!("{l:.6}"))))?;
                    }
                    GeneratorModel::Gru(model)
                }
            };
            Ok(model.save(&out)?)
        }
        GenCmd::Sample {
            model,
            seed_token,
            count,
            seed,
            temperature,
            max_len,
            out,
        } => {
            let model = GeneratorModel::load(model)?;
            let mut cfg: SampleConfig = settings.section("generator.sample")?;
            cfg.temperature = temperature.unwrap_or(cfg.temperature);
            cfg.max_len = max_len.unwrap_or(cfg.max_len);
            let count = match count {
                Some(c) => c,
                None => settings.data_or("generator.samples_per_seed", 100)?,
            };
            let mut rng = rng::seeded(settings.seed(seed)?);
            let mut samples = Vec::new();
            for token in &seed_token {
                for _ in 0..count {
                    samples.push(model.sample(token, &cfg, &mut rng)?);
                }
            }
            emit(out.as_deref(), &lines(samples.iter().map(Payload::raw)))
        }
    }
}

fn correct_cmd(settings: &Settings, args: CorrectArgs) -> anyhow::Result<()> {
    let at = settings.attack_type(None)?;
    let keywords = match (&args.keywords, &args.keywords_from) {
        (Some(path), _) => KeywordSet::load(path)?,
        (None, Some(path)) => extract_keywords(&malicious(path, at)?, args.top_k)?,
        (None, None) => return Err(Error::Config("either --keywords or --keywords-from is required".into()).into()),
    };
    let mut cfg: CorrectorConfig = settings.section("corrector")?;
    cfg.lower_threshold = args.lt.unwrap_or(cfg.lower_threshold);
    cfg.upper_threshold = args.ut.unwrap_or(cfg.upper_threshold);
    cfg.min_tokens = args.min_tokens.unwrap_or(cfg.min_tokens);
    cfg.validate()?;
    let mut kept = String::new();
    let mut discarded = String::new();
    let (mut n_kept, mut n_rewritten, mut n_discarded) = (0, 0, 0);
    for p in malicious(&args.input, at)? {
        match correct(&p, &keywords, &cfg) {
            Correction::Kept(q) => {
                n_kept += 1;
                kept.push_str(q.raw());
                kept.push('\n');
            }
            Correction::Corrected(q) => {
                n_rewritten += 1;
                kept.push_str(q.raw());
                kept.push('\n');
            }
            Correction::Discarded(reason) => {
                n_discarded += 1;
                discarded.push_str(&format!("{}\t{reason}\n", p.raw()));
            }
        }
    }
    if let Some(path) = &args.discarded {
        emit(Some(path), &discarded)?;
    }
    eprintln!("kept {n_kept}, rewritten {n_rewritten}, discarded {n_discarded}");
    emit(args.out.as_deref(), &kept)
}

fn mining_params(settings: &Settings, select: &SelectArgs, radius: Option<usize>) -> anyhow::Result<MiningParams> {
    let mut p: MiningParams = settings.section("signature")?;
    p.select.min_total = select.min_total.unwrap_or(p.select.min_total);
    p.select.min_freq = select.min_freq.unwrap_or(p.select.min_freq);
    p.select.top_m = select.top_m.unwrap_or(p.select.top_m);
    p.radius = radius.unwrap_or(p.radius);
    Ok(p)
}

fn gap_penalty(settings: &Settings, flag: Option<f64>) -> anyhow::Result<f64> {
    Ok(flag.unwrap_or(settings.section::<MiningParams>("signature")?.gap_penalty))
}

fn sig(settings: &Settings, cmd: SigCmd) -> anyhow::Result<()> {
    let at = settings.attack_type(None)?;
    match cmd {
        SigCmd::Score { input, decider: d, out } => {
            let d = decider(settings, &d)?;
            let mut text = String::new();
            for p in malicious(&input, at)?.iter().filter(|p| !p.is_empty()) {
                text.push_str(&serde_json::to_string(&score_tokens(d.as_ref(), p)?)?);
                text.push('\n');
            }
            emit(out.as_deref(), &text)
        }
        SigCmd::Select { scores, select, out } => {
            let params = mining_params(settings, &select, None)?.select;
            let scored = read(&scores)?
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| serde_json::from_str::<Vec<ScoreVector>>(l).map_err(anyhow::Error::from))
                .collect::<anyhow::Result<Vec<_>>>()?;
            let ranked = select_important(&scored, &params);
            let text = lines(
                ranked
                    .iter()
                    .map(|t| format!("{}\t{}\t{}", t.token, t.aggregate, t.payloads)),
            );
            emit(out.as_deref(), &text)
        }
        SigCmd::Cluster { tokens, radius, out } => {
            let radius = radius.unwrap_or(settings.section::<MiningParams>("signature")?.radius);
            let text = read(&tokens)?;
            let tokens: Vec<&str> = text.lines().filter_map(|l| l.split_whitespace().next()).collect();
            if tokens.is_empty() {
                return emit(out.as_deref(), "");
            }
            emit(
                out.as_deref(),
                &lines(cluster(&tokens, radius).iter().map(|g| g.join(" "))),
            )
        }
        SigCmd::Align {
            groups: path,
            gap_penalty: gp,
            out,
        } => {
            let gp = gap_penalty(settings, gp)?;
            let mut text = String::new();
            for g in groups(&path)? {
                text.push_str(&serde_json::to_string(&align_group(&g, gp)?)?);
                text.push('\n');
            }
            emit(out.as_deref(), &text)
        }
        SigCmd::Emit {
            groups: path,
            gap_penalty: gp,
            out,
        } => {
            let gp = gap_penalty(settings, gp)?;
            let mut sigs: Vec<Signature> = Vec::new();
            for g in groups(&path)? {
                match emit_signature(&align_group(&g, gp)?) {
                    Ok(s) if !sigs.contains(&s) => sigs.push(s),
                    Ok(_) => {}
                    Err(e) => log::warn!("group `{}`: {e}", g.join(" ")),
                }
            }
            emit(out.as_deref(), &lines(sigs.iter().map(Signature::render)))
        }
        SigCmd::Mine {
            input,
            decider: d,
            select,
            radius,
            details,
            out,
        } => {
            let d = decider(settings, &d)?;
            let params = mining_params(settings, &select, radius)?;
            let payloads = malicious(&input, at)?;
            let mined = mine(d.as_ref(), &payloads, &params)?;
            if let Some(path) = details {
                emit(Some(&path), &serde_json::to_string_pretty(&mined)?)?;
            }
            emit(out.as_deref(), &lines(mined.signatures.iter().map(Signature::render)))
        }
        SigCmd::Validate {
            signatures: sigs,
            benign: ben,
            bypass,
            report,
            out,
        } => {
            let sigs = signatures(&sigs)?;
            let verdicts = validate_signatures(&sigs, &benign(&ben, at)?, &malicious(&bypass, at)?)?;
            if let Some(path) = report {
                emit(Some(&path), &serde_json::to_string_pretty(&verdicts)?)?;
            }
            emit(
                out.as_deref(),
                &lines(verdicts.accepted().iter().map(Signature::render)),
            )
        }
    }
}

fn pipeline(mut settings: Settings, args: RunArgs) -> anyhow::Result<()> {
    let format: ReportFormat = args.format.parse()?;
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    let overrides = [
        ("seed", args.seed.map(|s| toml::Value::Integer(s as i64))),
        ("run_dir", path(&args.run_dir).map(toml::Value::String)),
        (
            "attack_type",
            args.attack_type.map(|a| toml::Value::String(a.to_string())),
        ),
        ("data.malicious", path(&args.malicious).map(toml::Value::String)),
        ("data.benign", path(&args.benign).map(toml::Value::String)),
        ("data.rules", path(&args.rules).map(toml::Value::String)),
        ("data.grammar", path(&args.grammar).map(toml::Value::String)),
        ("data.n_synth", args.n_synth.map(|n| toml::Value::Integer(n as i64))),
        (
            "generator.samples_per_seed",
            args.samples_per_seed.map(|n| toml::Value::Integer(n as i64)),
        ),
        (
            "generator.train.epochs",
            args.gen_epochs.map(|n| toml::Value::Integer(n as i64)),
        ),
    ];
    for (key, value) in overrides {
        if let Some(value) = value {
            settings.set(key, value)?;
        }
    }
    for assignment in &args.set {
        settings.assign(assignment)?;
    }
    let cfg = settings.pipeline()?;
    let report = run_pipeline(&cfg)?;
    emit(None, &report_render(&report, format)?)
}
