//! Random SQL query synthesis from a small attribute grammar:
//!
//! ```text
//! Q ::= S | U | D | I
//! S ::= SELECT (f̄ | *) FROM t WHERE e [LIMIT v̄]
//! U ::= UPDATE t SET f=v WHERE e [LIMIT v̄]
//! D ::= DELETE FROM t WHERE e [LIMIT v̄]
//! I ::= INSERT INTO t(f̄) VALUES (v̄)
//! e ::= f ≷ v | f LIKE s | e AND e' | e OR e'
//! ```
//!
//! Productions are chosen uniformly, `LIMIT` appears with probability 1/2 and
//! boolean expressions nest at most three levels deep.

use std::fs;
use std::path::Path;

use rand::seq::{IteratorRandom, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::rng::Rng;
use crate::{AttackType, Error, Label, Origin, Payload, Result};

pub const MAX_EXPR_DEPTH: usize = 3;
pub const COMPARATORS: [&str; 6] = ["=", "<", ">", "<=", ">=", "<>"];
const MAX_VECTOR: usize = 3;

/// Terminal dictionaries for tables, fields, values and LIKE strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SqlGrammar {
    pub tables: Vec<String>,
    pub fields: Vec<String>,
    pub values: Vec<String>,
    pub strings: Vec<String>,
}

fn owned(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| (*s).to_owned()).collect()
}

impl Default for SqlGrammar {
    fn default() -> Self {
        SqlGrammar {
            tables: owned(&[
                "users",
                "accounts",
                "orders",
                "products",
                "customers",
                "sessions",
                "payments",
                "admin",
                "members",
                "invoices",
            ]),
            fields: owned(&[
                "id",
                "name",
                "username",
                "password",
                "email",
                "user_id",
                "price",
                "quantity",
                "status",
                "role",
                "token",
                "created_at",
                "balance",
                "address",
            ]),
            values: owned(&["0", "1", "2", "10", "42", "100", "999", "1337", "-1", "0x1"]),
            strings: owned(&["'%admin%'", "'a%'", "'%'", "'root'", "'%@%'", "'test%'", "'_'"]),
        }
    }
}

impl SqlGrammar {
    /// Parses `key = a, b, c` lines. Keys are `tables`, `fields`, `values`
    /// and `strings`; `#` starts a comment line.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut g = SqlGrammar {
            tables: Vec::new(),
            fields: Vec::new(),
            values: Vec::new(),
            strings: Vec::new(),
        };
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                reason,
            };
            let (key, values) = line
                .split_once('=')
                .ok_or_else(|| err("expected `key = v1, v2, ...`".into()))?;
            let slot = match key.trim() {
                "tables" => &mut g.tables,
                "fields" => &mut g.fields,
                "values" => &mut g.values,
                "strings" => &mut g.strings,
                other => return Err(err(format!("unknown terminal class `{other}`"))),
            };
            slot.extend(
                values
                    .split(',')
                    .map(str::trim)
                    .filter(|v| !v.is_empty())
                    .map(str::to_owned),
            );
        }
        Ok(g)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, dict) in [
            ("tables", &self.tables),
            ("fields", &self.fields),
            ("values", &self.values),
            ("strings", &self.strings),
        ] {
            if dict.is_empty() {
                return Err(Error::EmptyDictionary(name));
            }
            if let Some(bad) = dict.iter().find(|v| v.chars().any(char::is_whitespace)) {
                return Err(Error::InvalidArgument(format!(
                    "{name} entry `{bad}` contains whitespace"
                )));
            }
        }
        Ok(())
    }
}

struct Synth<'a> {
    g: &'a SqlGrammar,
    rng: &'a mut Rng,
}

impl Synth<'_> {
    fn pick<'s>(&mut self, dict: &'s [String]) -> &'s str {
        dict.choose(self.rng).expect("validated non-empty")
    }

    fn vector(&mut self, dict: &[String], len: usize) -> String {
        dict.iter()
            .choose_multiple(self.rng, len)
            .into_iter()
            .map(String::as_str)
            .collect::<Vec<_>>()
            .join(",")
    }

    fn field_list(&mut self) -> (String, usize) {
        let len = self.rng.gen_range(1..=MAX_VECTOR.min(self.g.fields.len()));
        (self.vector(&self.g.fields, len), len)
    }

    fn limit(&mut self, out: &mut String) {
        if self.rng.gen_bool(0.5) {
            let len = self.rng.gen_range(1..=2usize);
            let vals: Vec<_> = (0..len).map(|_| self.pick(&self.g.values).to_owned()).collect();
            out.push_str(" LIMIT ");
            out.push_str(&vals.join(","));
        }
    }

    fn expr(&mut self, depth: usize, out: &mut String) {
        let choice = if depth >= MAX_EXPR_DEPTH {
            self.rng.gen_range(0..2)
        } else {
            self.rng.gen_range(0..4)
        };
        match choice {
            0 => {
                let f = self.pick(&self.g.fields);
                let op = *COMPARATORS.choose(self.rng).unwrap();
                let v = self.pick(&self.g.values);
                out.push_str(&format!("{f} {op} {v}"));
            }
            1 => {
                let f = self.pick(&self.g.fields);
                let s = self.pick(&self.g.strings);
                out.push_str(&format!("{f} LIKE {s}"));
            }
            n => {
                self.expr(depth + 1, out);
                out.push_str(if n == 2 { " AND " } else { " OR " });
                self.expr(depth + 1, out);
            }
        }
    }

    fn query(&mut self) -> String {
        let mut q = String::new();
        match self.rng.gen_range(0..4) {
            0 => {
                q.push_str("SELECT ");
                if self.rng.gen_bool(0.5) {
                    q.push('*');
                } else {
                    q.push_str(&self.field_list().0);
                }
                q.push_str(" FROM ");
                q.push_str(self.pick(&self.g.tables));
                q.push_str(" WHERE ");
                self.expr(1, &mut q);
                self.limit(&mut q);
            }
            1 => {
                let t = self.pick(&self.g.tables);
                let f = self.pick(&self.g.fields);
                let v = self.pick(&self.g.values);
                q.push_str(&format!("UPDATE {t} SET {f}={v} WHERE "));
                self.expr(1, &mut q);
                self.limit(&mut q);
            }
            2 => {
                q.push_str("DELETE FROM ");
                q.push_str(self.pick(&self.g.tables));
                q.push_str(" WHERE ");
                self.expr(1, &mut q);
                self.limit(&mut q);
            }
            _ => {
                let t = self.pick(&self.g.tables);
                let (fields, len) = self.field_list();
                let vals: Vec<_> = (0..len).map(|_| self.pick(&self.g.values).to_owned()).collect();
                q.push_str(&format!("INSERT INTO {t}({fields}) VALUES ({})", vals.join(",")));
            }
        }
        q
    }
}

/// Draws `n` malicious SQL payloads from the grammar.
pub fn synth_sql(grammar: &SqlGrammar, n: usize, rng: &mut Rng) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("synth_sql needs n >= 1".into()));
    }
    grammar.validate()?;
    let mut synth = Synth { g: grammar, rng };
    let payloads = (0..n)
        .map(|_| (Payload::new(synth.query(), Origin::Malicious), Label::Rejected))
        .collect();
    Ok(Dataset {
        attack_type: AttackType::Sqli,
        payloads,
    })
}
