//! Acceptance criteria, one PASS/FAIL line each. Runs as a plain binary so the
//! lines show up without `--nocapture`.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng as _;
use wafboost::corrector::levenshtein;
use wafboost::generator::{GruModel, Vocab};
use wafboost::ingest::{self, benign_fixture, synth_sql, tokenize, SqlGrammar};
use wafboost::mockwaf::seed_rules;
use wafboost::pipeline::{artifacts, run_pipeline, PipelineConfig};
use wafboost::report::RunReport;
use wafboost::shadow::{fidelity, train_shadow, FeatureSpec, TrainConfig};
use wafboost::signature::{align_pair, emit_signature, match_signature, placement_score, Signature, GAP_PENALTY};
use wafboost::{rng, AttackType, Label, Origin, Payload};

type Outcome = Result<String, String>;

fn check(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn worked_examples() -> Outcome {
    check(levenshtein("salect", "select") == 1, "levenshtein(salect, select) != 1")?;
    let toks = tokenize("salect * from users where username = \"abc\"");
    let texts: Vec<&str> = toks.iter().map(|t| t.text.as_str()).collect();
    check(
        texts == ["salect", "*", "from", "users", "where", "username", "=", "\"abc\""],
        format!("tokens {texts:?}"),
    )?;

    let r = align_pair("aaselectaaafromaaa", "selectbbbbfrombbb", GAP_PENALTY);
    let sig = emit_signature(&r).map_err(|e| e.to_string())?.render();
    check(sig == r"\S*select\S*from\S*", format!("first example emitted {sig}"))?;

    let (a, b) = ("saealaeacatafroma", "bfrombsbeblbebcbt");
    let sel = placement_score(a, b, "select", GAP_PENALTY).ok_or("select does not fit")?;
    check((sel.score - 2.0).abs() < 1e-12, format!("select score {}", sel.score))?;
    let r = align_pair(a, b, GAP_PENALTY);
    check(
        r.score == 4.0 && r.subsequence == "from",
        format!("picked {:?} at {}", r.subsequence, r.score),
    )?;
    let sig = emit_signature(&r).map_err(|e| e.to_string())?.render();
    check(sig == r"\S*from\S*", format!("second example emitted {sig}"))?;
    Ok("all exact".into())
}

/// Best score over every common subsequence and every way of placing it.
/// A new segment starts whenever consecutive matches are not adjacent in
/// both strings.
fn exhaustive_score(a: &[char], b: &[char], gp: f64) -> f64 {
    fn go(
        a: &[char],
        b: &[char],
        i: usize,
        j: usize,
        prev: Option<(usize, usize)>,
        m: usize,
        g: usize,
        gp: f64,
        best: &mut f64,
    ) {
        *best = best.max(m as f64 - gp * g as f64);
        for x in i..a.len() {
            for y in j..b.len() {
                if a[x] == b[y] {
                    let g2 = match prev {
                        Some((px, py)) if px + 1 == x && py + 1 == y => g,
                        Some(_) => g + 1,
                        None => g,
                    };
                    go(a, b, x + 1, y + 1, Some((x, y)), m + 1, g2, gp, best);
                }
            }
        }
    }
    let mut best = 0.0;
    go(a, b, 0, 0, None, 0, 0, gp, &mut best);
    best
}

fn random_string(r: &mut rng::Rng, alphabet: &[char], max_len: usize) -> String {
    let n = r.gen_range(0..=max_len);
    (0..n).map(|_| alphabet[r.gen_range(0..alphabet.len())]).collect()
}

fn alignment_oracle() -> Outcome {
    let mut r = rng::seeded(500);
    for case in 0..500 {
        let a = random_string(&mut r, &['a', 'b', 'c'], 10);
        let b = random_string(&mut r, &['a', 'b', 'c'], 10);
        let got = align_pair(&a, &b, GAP_PENALTY).score;
        let want = exhaustive_score(
            &a.chars().collect::<Vec<_>>(),
            &b.chars().collect::<Vec<_>>(),
            GAP_PENALTY,
        );
        check(
            (got - want).abs() < 1e-9,
            format!("case {case}: {a:?} vs {b:?}: {got} != {want}"),
        )?;
    }
    Ok("500/500 pairs equal".into())
}

/// Tries every occurrence of every segment, in order, on the whitespace-free
/// lower-cased text.
fn backtracking_match(segments: &[String], text: &str) -> bool {
    fn go(segs: &[String], hay: &str) -> bool {
        match segs.split_first() {
            None => true,
            Some((s, rest)) => hay
                .match_indices(s.as_str())
                .any(|(i, _)| go(rest, &hay[i + s.len()..])),
        }
    }
    let hay: String = text
        .chars()
        .filter(|c| !c.is_whitespace())
        .collect::<String>()
        .to_lowercase();
    go(segments, &hay)
}

fn matcher_oracle() -> Outcome {
    let mut r = rng::seeded(1000);
    let mut positives = 0;
    for case in 0..1000 {
        let n = r.gen_range(1..=3);
        let segments: Vec<String> = (0..n)
            .map(|_| {
                let len = r.gen_range(1..=3);
                (0..len).map(|_| ['a', 'b', 'c'][r.gen_range(0..3)]).collect()
            })
            .collect();
        let sig = Signature::new(&segments).map_err(|e| e.to_string())?;
        let text = random_string(&mut r, &['a', 'b', 'c', 'A', ' '], 14);
        let want = backtracking_match(&segments, &text);
        let got = match_signature(&sig, &Payload::new(text.clone(), Origin::Benign));
        positives += usize::from(want);
        check(
            got == want,
            format!("case {case}: {} on {text:?}: {got} != {want}", sig.render()),
        )?;
    }
    Ok(format!("1000/1000 equal ({positives} matches)"))
}

fn gradient_check() -> Outcome {
    let corpus = [Payload::new("a b c", Origin::Malicious)];
    let vocab = Vocab::build(&corpus).map_err(|e| e.to_string())?;
    check(vocab.words().len() == 3, "vocab is not 3 tokens")?;
    let mut r = rng::seeded(11);
    let mut m = GruModel::init(vocab, 4, 3, &mut r);
    for w in m.params_mut() {
        *w = r.gen_range(-0.8..0.8);
    }
    let seqs: Vec<Vec<usize>> = ["a b c a", "c c b", "b a"]
        .iter()
        .map(|s| m.vocab.encode(&Payload::new(*s, Origin::Malicious)))
        .collect();
    let (_, grad) = m.loss_and_gradient(&seqs);
    let eps = 1e-5;
    let mut worst = 0.0f64;
    for k in 0..grad.len() {
        let orig = m.params()[k];
        m.params_mut()[k] = orig + eps;
        let up = m.loss_and_gradient(&seqs).0;
        m.params_mut()[k] = orig - eps;
        let down = m.loss_and_gradient(&seqs).0;
        m.params_mut()[k] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let scale = numeric.abs().max(grad[k].abs());
        if scale > 1e-8 {
            worst = worst.max((numeric - grad[k]).abs() / scale);
        }
    }
    check(worst <= 1e-4, format!("worst relative error {worst:.3e}"))?;
    Ok(format!("{} parameters, worst relative error {worst:.3e}", grad.len()))
}

fn shadow_fidelity() -> Outcome {
    let mut corpus = synth_sql(&SqlGrammar::default(), 2000, &mut rng::seeded(21)).map_err(|e| e.to_string())?;
    corpus.extend(benign_fixture());
    let waf = seed_rules(AttackType::Sqli);
    let parts = ingest::split(&corpus, &mut rng::seeded(22));
    let examples: Vec<(Payload, Label)> = parts.train.iter().map(|p| (p.clone(), waf.classify(p))).collect();
    let cfg = TrainConfig {
        seed: 23,
        ..TrainConfig::default()
    };
    let model = train_shadow(&examples, FeatureSpec::default(), &cfg).map_err(|e| e.to_string())?;
    let held_out: Vec<&Payload> = parts.test.iter().collect();
    let agree = held_out
        .iter()
        .filter(|p| model.predict(p).1 == waf.classify(p))
        .count();
    let ours = agree as f64 / held_out.len() as f64;
    let reported = fidelity(&model, &waf, held_out.iter().copied()).map_err(|e| e.to_string())?;
    check(
        (ours - reported).abs() < 1e-12,
        format!("fidelity {reported} disagrees with count {ours}"),
    )?;
    check(ours >= 0.90, format!("held-out agreement {ours:.4}"))?;
    Ok(format!("held-out agreement {ours:.4} on {} payloads", held_out.len()))
}

fn end_to_end(report: &RunReport, elapsed: Duration) -> Outcome {
    let n = report.funnel.unique_bypassing;
    let (pre, post, frr) = (report.pre.trr, report.post.trr, report.post.frr);
    check(n >= 100, format!("only {n} unique bypassing payloads"))?;
    check(pre == Some(0.0), format!("pre-hardening TRR {pre:?}"))?;
    check(post.is_some_and(|t| t >= 0.90), format!("post-hardening TRR {post:?}"))?;
    check(frr == Some(0.0), format!("post-hardening FRR {frr:?}"))?;
    check(elapsed < Duration::from_secs(600), format!("took {elapsed:?}"))?;
    Ok(format!(
        "{n} bypassing, TRR {:.4} -> {:.4}, FRR {:.4}, {:.1}s",
        pre.unwrap_or(f64::NAN),
        post.unwrap_or(f64::NAN),
        frr.unwrap_or(f64::NAN),
        elapsed.as_secs_f64()
    ))
}

fn lines(path: &Path) -> Result<Vec<String>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(text.lines().map(str::to_owned).collect())
}

fn corrector_funnel(dir: &Path, report: &RunReport, lt: usize, ut: usize, min_tokens: usize) -> Outcome {
    let keywords: Vec<String> = lines(&dir.join(artifacts::KEYWORDS))?
        .iter()
        .map(|l| l.split('\t').next().unwrap_or_default().to_owned())
        .collect();
    let nearest = |tok: &str| {
        let t = tok.to_lowercase();
        keywords.iter().map(|k| levenshtein(&t, k)).min().unwrap_or(usize::MAX)
    };
    let candidates = lines(&dir.join(artifacts::CANDIDATES))?;
    let corrected = lines(&dir.join(artifacts::CORRECTED))?;
    let discarded = lines(&dir.join(artifacts::DISCARDED))?;
    for p in &corrected {
        if let Some(t) = p.split_whitespace().find(|t| (lt + 1..=ut).contains(&nearest(t))) {
            return Err(format!("token {t:?} still near a keyword in {p:?}"));
        }
    }
    for line in &discarded {
        let (payload, reason) = line.rsplit_once('\t').ok_or(format!("no reason on {line:?}"))?;
        let n = payload.split_whitespace().count();
        let ok = match reason.strip_prefix("too-short:") {
            Some(rest) => rest == format!("{n}<{min_tokens}") && n < min_tokens,
            None => reason == "no-keyword-like-token" && payload.split_whitespace().all(|t| nearest(t) > ut),
        };
        check(ok, format!("reason {reason:?} does not hold for {payload:?}"))?;
    }
    let f = &report.funnel;
    check(
        f.generated == candidates.len(),
        "generated count differs from candidates file",
    )?;
    check(
        f.corrected == corrected.len() && f.discarded == discarded.len(),
        "corrector counts differ from files",
    )?;
    check(
        f.corrected + f.discarded == f.generated,
        "corrected + discarded != generated",
    )?;
    let chain = [
        f.generated,
        f.corrected,
        f.shadow_bypassing,
        f.waf_bypassing,
        f.unique_bypassing,
    ];
    check(
        chain.windows(2).all(|w| w[0] >= w[1]),
        format!("funnel not monotone: {chain:?}"),
    )?;
    check(
        f.signatures_emitted >= f.signatures_validated,
        "more signatures validated than emitted",
    )?;
    Ok(format!(
        "{} kept/corrected, {} discarded, funnel {chain:?}",
        corrected.len(),
        discarded.len()
    ))
}

fn determinism(a: &Path, b: &Path) -> Outcome {
    let first = fs::read(a.join(artifacts::REPORT_JSON)).map_err(|e| e.to_string())?;
    let second = fs::read(b.join(artifacts::REPORT_JSON)).map_err(|e| e.to_string())?;
    check(first == second, "report.json differs between runs")?;
    Ok(format!("{} identical bytes", first.len()))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |name: &str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let outcome = f();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name:<28} {secs:>7.2}s  {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<28} {secs:>7.2}s  {why}");
            }
        }
    };

    report("worked examples", &mut worked_examples);
    report("alignment oracle", &mut alignment_oracle);
    report("matcher oracle", &mut matcher_oracle);
    report("gru gradient check", &mut gradient_check);
    report("shadow fidelity", &mut shadow_fidelity);

    let tmp = tempfile::tempdir().expect("temporary directory");
    let (dir_a, dir_b) = (tmp.path().join("a"), tmp.path().join("b"));
    let cfg = PipelineConfig::new(1, &dir_a);
    let t = Instant::now();
    let run = run_pipeline(&cfg);
    let elapsed = t.elapsed();
    match run {
        Err(e) => {
            for name in ["end-to-end hardening", "corrector funnel", "determinism"] {
                report(name, &mut || Err(format!("pipeline failed: {e}")));
            }
        }
        Ok(r) => {
            report("end-to-end hardening", &mut || end_to_end(&r, elapsed));
            let c = cfg.corrector;
            report("corrector funnel", &mut || {
                corrector_funnel(&dir_a, &r, c.lower_threshold, c.upper_threshold, c.min_tokens)
            });
            report("determinism", &mut || {
                run_pipeline(&PipelineConfig::new(1, &dir_b)).map_err(|e| e.to_string())?;
                determinism(&dir_a, &dir_b)
            });
        }
    }

    if failed == 0 {
        println!("all acceptance criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
