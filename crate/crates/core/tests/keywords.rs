//! Keywords of the synthesized SQL corpus. Counts are checked against a
//! direct token count.

use std::collections::HashMap;

use wafboost::corrector::{extract_keywords, DEFAULT_KEYWORDS};
use wafboost::ingest::{synth_sql, SqlGrammar};
use wafboost::rng;

fn counts(lines: &[String]) -> HashMap<String, usize> {
    let mut m = HashMap::new();
    for l in lines {
        for t in l.split_whitespace() {
            *m.entry(t.to_lowercase()).or_insert(0) += 1;
        }
    }
    m
}

#[test]
fn top_keywords_match_direct_count() {
    for seed in 1..=4 {
        let ds = synth_sql(&SqlGrammar::default(), 2000, &mut rng::seeded(seed)).unwrap();
        let lines: Vec<String> = ds.iter().map(|p| p.raw().to_owned()).collect();
        let direct = counts(&lines);
        let kw = extract_keywords(ds.iter(), DEFAULT_KEYWORDS).unwrap();
        let mut ranked: Vec<(&String, &usize)> = direct.iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
        let want: Vec<(String, usize)> = ranked[..DEFAULT_KEYWORDS]
            .iter()
            .map(|(k, n)| ((*k).clone(), **n))
            .collect();
        assert_eq!(kw.ranked(), want.as_slice());
    }
}

#[test]
fn from_is_a_keyword_but_select_is_not() {
    // SELECT opens only one statement kind in four, while WHERE, LIKE and the
    // boolean connectives recur inside every kind. With uniform productions
    // "select" never reaches the top five.
    for seed in 1..=4 {
        let ds = synth_sql(&SqlGrammar::default(), 2000, &mut rng::seeded(seed)).unwrap();
        let kw: Vec<String> = extract_keywords(ds.iter(), DEFAULT_KEYWORDS)
            .unwrap()
            .keywords()
            .map(str::to_owned)
            .collect();
        assert!(kw.iter().any(|k| k == "from"), "seed {seed}: {kw:?}");
        assert!(!kw.iter().any(|k| k == "select"), "seed {seed}: {kw:?}");
        let statements_with_select = ds.iter().filter(|p| p.raw().starts_with("SELECT")).count();
        assert!(
            (400..=600).contains(&statements_with_select),
            "seed {seed}: {statements_with_select}"
        );
    }
}
