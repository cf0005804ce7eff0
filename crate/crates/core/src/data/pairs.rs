use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ParsedSentence;
use crate::error::{Error, Result};

/// Ordered class names; a label's index is its position.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    pub names: Vec<String>,
}

impl LabelSet {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.len() < 2 {
            return Err(Error::Config("a label set needs at least two classes".into()));
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::Config(format!("duplicate label {n:?}")));
            }
        }
        Ok(LabelSet { names })
    }

    /// Natural language inference classes.
    pub fn snli3() -> Self {
        LabelSet {
            names: vec!["entailment".into(), "neutral".into(), "contradiction".into()],
        }
    }

    /// Paraphrase identification: `0` not a paraphrase, `1` paraphrase.
    pub fn binary() -> Self {
        LabelSet {
            names: vec!["0".into(), "1".into()],
        }
    }

    /// One label per non-empty line.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        LabelSet::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index(&self, label: &str) -> Option<usize> {
        self.names.iter().position(|n| n == label)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub pair_id: String,
    pub premise: ParsedSentence,
    pub hypothesis: ParsedSentence,
    pub label: usize,
}

#[derive(Serialize, Deserialize)]
struct SentenceRecord {
    tokens: Vec<String>,
    heads: Vec<i64>,
    deprels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct PairRecord {
    pair_id: String,
    label: serde_json::Value,
    premise: SentenceRecord,
    hypothesis: SentenceRecord,
}

impl SentenceRecord {
    fn into_sentence(self, name: &str) -> Result<ParsedSentence> {
        let n = self.tokens.len() as i64;
        let heads = self
            .heads
            .iter()
            .map(|&h| match h {
                -1 => Ok(None),
                h if (0..n).contains(&h) => Ok(Some(h as usize)),
                h => Err(Error::Structural {
                    sentence: name.to_string(),
                    message: format!("head {h} outside 0..{n} and not -1"),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        ParsedSentence::new(self.tokens, heads, self.deprels, name)
    }

    fn from_sentence(s: &ParsedSentence) -> Self {
        SentenceRecord {
            tokens: s.tokens.clone(),
            heads: s.heads.iter().map(|h| h.map_or(-1, |h| h as i64)).collect(),
            deprels: s.deprels.clone(),
        }
    }
}

/// Parses JSONL pair records, one per non-blank line.
pub fn parse_pairs(text: &str, labels: &LabelSet) -> Result<Vec<LabeledPair>> {
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: PairRecord = serde_json::from_str(line).map_err(|e| Error::Format {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        let label_str = match &rec.label {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        let label = labels.index(&label_str).ok_or_else(|| Error::UnknownLabel {
            pair_id: rec.pair_id.clone(),
            label: label_str.clone(),
        })?;
        let premise = rec.premise.into_sentence(&format!("{}/premise", rec.pair_id))?;
        let hypothesis = rec
            .hypothesis
            .into_sentence(&format!("{}/hypothesis", rec.pair_id))?;
        for (side, s) in [("premise", &premise), ("hypothesis", &hypothesis)] {
            let punct = s.punctuation_tokens();
            if !punct.is_empty() {
                log::warn!(
                    "pair {} {side}: punctuation-only tokens at {punct:?}",
                    rec.pair_id
                );
            }
        }
        pairs.push(LabeledPair {
            pair_id: rec.pair_id,
            premise,
            hypothesis,
            label,
        });
    }
    Ok(pairs)
}

pub fn load_pairs(path: &Path, labels: &LabelSet) -> Result<Vec<LabeledPair>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pairs(&text, labels)
}

pub fn pairs_to_jsonl(pairs: &[LabeledPair], labels: &LabelSet) -> String {
    let mut out = String::new();
    for p in pairs {
        let rec = PairRecord {
            pair_id: p.pair_id.clone(),
            label: serde_json::Value::String(labels.names[p.label].clone()),
            premise: SentenceRecord::from_sentence(&p.premise),
            hypothesis: SentenceRecord::from_sentence(&p.hypothesis),
        };
        out.push_str(&serde_json::to_string(&rec).expect("pair record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_pairs(path: &Path, pairs: &[LabeledPair], labels: &LabelSet) -> Result<()> {
    std::fs::write(path, pairs_to_jsonl(pairs, labels)).map_err(|e| Error::io(path, e))
}
