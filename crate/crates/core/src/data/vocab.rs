use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{LabeledPair, ParsedSentence};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";

/// Word vocabulary over lowercased tokens. `PAD` is id 0 and `UNK` id 1.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
    pub min_count: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    words: Vec<String>,
    min_count: usize,
}

impl From<VocabRepr> for Vocab {
    fn from(r: VocabRepr) -> Self {
        Vocab::from_words(r.words, r.min_count)
    }
}

impl From<Vocab> for VocabRepr {
    fn from(v: Vocab) -> Self {
        VocabRepr {
            words: v.words,
            min_count: v.min_count,
        }
    }
}

impl Vocab {
    pub const PAD_ID: usize = 0;
    pub const UNK_ID: usize = 1;

    /// Rebuilds a vocabulary from its id-ordered word list; the specials
    /// are inserted if missing.
    pub fn from_words(words: Vec<String>, min_count: usize) -> Self {
        let mut all = vec![PAD.to_string(), UNK.to_string()];
        all.extend(words.into_iter().filter(|w| w != PAD && w != UNK));
        let index = all.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Vocab {
            words: all,
            index,
            min_count,
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(&word.to_lowercase())
    }

    /// Id of the lowercased word, `UNK_ID` when out of vocabulary.
    pub fn id(&self, word: &str) -> usize {
        self.index
            .get(&word.to_lowercase())
            .copied()
            .unwrap_or(Self::UNK_ID)
    }

    pub fn encode(&self, sentence: &ParsedSentence) -> Vec<usize> {
        sentence.tokens.iter().map(|t| self.id(t)).collect()
    }
}

/// Keeps lowercased words seen at least `min_count` times. Ids after the
/// two specials are ordered by descending frequency, then alphabetically,
/// so the result only depends on the corpus multiset.
pub fn build_vocab(pairs: &[LabeledPair], min_count: usize) -> Vocab {
    let min_count = min_count.max(1);
    let mut freq: HashMap<String, usize> = HashMap::new();
    for p in pairs {
        for s in [&p.premise, &p.hypothesis] {
            for t in &s.tokens {
                *freq.entry(t.to_lowercase()).or_default() += 1;
            }
        }
    }
    let mut kept: Vec<(String, usize)> = freq
        .into_iter()
        .filter(|(w, c)| *c >= min_count && w != PAD && w != UNK)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Vocab::from_words(kept.into_iter().map(|(w, _)| w).collect(), min_count)
}

/// Edge relation labels. `SEQ`, `INTER` and `SELF` come first; each
/// dependency label `r` is followed by its inverse `r^-1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct RelationVocab {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for RelationVocab {
    fn from(labels: Vec<String>) -> Self {
        let index = labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        RelationVocab { labels, index }
    }
}

impl From<RelationVocab> for Vec<String> {
    fn from(r: RelationVocab) -> Self {
        r.labels
    }
}

pub const INVERSE_SUFFIX: &str = "^-1";

impl RelationVocab {
    pub const SEQ: usize = 0;
    pub const INTER: usize = 1;
    pub const SELF: usize = 2;

    pub fn new<'a>(deprels: impl IntoIterator<Item = &'a str>) -> Self {
        let distinct: BTreeSet<&str> = deprels.into_iter().collect();
        let mut labels = vec!["SEQ".to_string(), "INTER".to_string(), "SELF".to_string()];
        for r in distinct {
            labels.push(r.to_string());
            labels.push(format!("{r}{INVERSE_SUFFIX}"));
        }
        labels.into()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, id: usize) -> &str {
        &self.labels[id]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn id(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    /// Forward id of a dependency label.
    pub fn dep(&self, deprel: &str) -> Option<usize> {
        self.id(deprel).filter(|&i| i > Self::SELF)
    }

    /// Inverse-direction id of a dependency label.
    pub fn inverse(&self, deprel: &str) -> Option<usize> {
        self.id(&format!("{deprel}{INVERSE_SUFFIX}"))
    }

    /// The inverse of a relation id; `SEQ`, `INTER` and `SELF` are their own.
    pub fn inverse_of(&self, id: usize) -> usize {
        if id <= Self::SELF {
            id
        } else if (id - 3) % 2 == 0 {
            id + 1
        } else {
            id - 1
        }
    }
}

/// Every dependency label of the non-root tokens in `pairs`. Root tokens
/// emit no arc, so their label never names an edge.
pub fn build_relation_vocab(pairs: &[LabeledPair]) -> RelationVocab {
    RelationVocab::new(pairs.iter().flat_map(|p| {
        p.premise
            .arcs()
            .chain(p.hypothesis.arcs())
            .map(|(_, _, r)| r)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sentence(tokens: &[&str]) -> ParsedSentence {
        let n = tokens.len();
        let heads = (0..n).map(|i| if i + 1 == n { None } else { Some(n - 1) }).collect();
        ParsedSentence::new(
            tokens.iter().map(|t| t.to_string()).collect(),
            heads,
            (0..n).map(|i| if i + 1 == n { "root".into() } else { "dep".into() }).collect(),
            "t",
        )
        .unwrap()
    }

    fn pair(p: &[&str], q: &[&str]) -> LabeledPair {
        LabeledPair {
            pair_id: "x".into(),
            premise: sentence(p),
            hypothesis: sentence(q),
            label: 0,
        }
    }

    #[test]
    fn frequency_cutoff_of_ten() {
        let mut pairs = Vec::new();
        for i in 0..10 {
            let lynx = if i < 9 { "lynx" } else { "dog" };
            pairs.push(pair(&["cat"], &[lynx]));
        }
        let v = build_vocab(&pairs, 10);
        assert!(v.contains("cat"));
        assert!(!v.contains("lynx"));
        assert_eq!(v.id("lynx"), Vocab::UNK_ID);
        assert_eq!(v.id("CAT"), v.id("cat"));
        assert_eq!(v.len(), 3);
    }

    #[test]
    fn min_count_one_keeps_everything() {
        let v = build_vocab(&[pair(&["a", "b"], &["c"])], 1);
        assert_eq!(v.len(), 5);
        assert_eq!(v.word(Vocab::PAD_ID), PAD);
        assert_eq!(v.word(Vocab::UNK_ID), UNK);
    }

    #[test]
    fn vocab_serde_round_trip() {
        let v = build_vocab(&[pair(&["a", "b"], &["c", "a"])], 1);
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocab = serde_json::from_str(&json).unwrap();
        assert_eq!(v, back);
    }

    #[test]
    fn relation_counts() {
        let r = RelationVocab::new(["nsubj", "dobj", "nsubj"]);
        assert_eq!(r.len(), 7);
        let n = r.dep("nsubj").unwrap();
        assert_eq!(r.inverse_of(n), r.inverse("nsubj").unwrap());
        assert_eq!(r.inverse_of(r.inverse_of(n)), n);
        assert_eq!(r.inverse_of(RelationVocab::SEQ), RelationVocab::SEQ);
        assert_eq!(RelationVocab::new([]).len(), 3);
        assert_eq!(r.dep("SEQ"), None);
    }
}
