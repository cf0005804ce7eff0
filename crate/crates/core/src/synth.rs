//! Seeded synthetic sentence pairs for tests, smoke runs and sweeps.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{LabeledPair, ParsedSentence};

pub const DEPRELS: &[&str] = &["amod", "det", "nsubj", "obj", "obl"];

/// A random dependency tree over `tokens`.
pub fn random_tree<R: Rng>(rng: &mut R, tokens: Vec<String>, deprels: &[&str]) -> ParsedSentence {
    let n = tokens.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut heads = vec![None; n];
    let mut rels = vec!["root".to_string(); n];
    for k in 1..n {
        let parent = order[rng.gen_range(0..k)];
        heads[order[k]] = Some(parent);
        rels[order[k]] = deprels[rng.gen_range(0..deprels.len())].to_string();
    }
    ParsedSentence::new(tokens, heads, rels, "synthetic").expect("random tree is valid")
}

/// A left-to-right chain: token `i` depends on token `i + 1`.
pub fn chain(tokens: &[&str], deprel: &str) -> ParsedSentence {
    let n = tokens.len();
    let heads = (0..n).map(|i| (i + 1 < n).then_some(i + 1)).collect();
    let rels = (0..n)
        .map(|i| if i + 1 < n { deprel } else { "root" }.to_string())
        .collect();
    ParsedSentence::new(tokens.iter().map(|t| t.to_string()).collect(), heads, rels, "chain")
        .expect("chain is valid")
}

fn words<R: Rng>(rng: &mut R, len: usize, lexicon: usize) -> Vec<String> {
    (0..len).map(|_| format!("w{}", rng.gen_range(0..lexicon))).collect()
}

/// Pairs of random trees with random labels; sentence lengths drawn from
/// `1..=max_len`.
pub fn random_pairs(count: usize, max_len: usize, num_labels: usize, seed: u64) -> Vec<LabeledPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let m = rng.gen_range(1..=max_len);
            let n = rng.gen_range(1..=max_len);
            let pw = words(&mut rng, m, 30);
            let qw = words(&mut rng, n, 30);
            LabeledPair {
                pair_id: format!("rand-{i}"),
                premise: random_tree(&mut rng, pw, DEPRELS),
                hypothesis: random_tree(&mut rng, qw, DEPRELS),
                label: rng.gen_range(0..num_labels),
            }
        })
        .collect()
}

const NOUNS: &[&str] = &[
    "dog", "cat", "man", "woman", "child", "bird", "horse", "boy", "girl", "chef", "pilot", "farmer",
];
const VERBS: &[&str] = &["runs", "sleeps", "eats", "sings", "jumps", "waits", "reads", "swims"];
const ADJS: &[&str] = &["old", "young", "tall", "small", "happy", "tired"];

/// Template pairs "the ADJ NOUN VERB" / "a NOUN VERB", two classes:
/// 1 when the hypothesis repeats the premise noun and verb, 0 when the
/// noun is swapped. Classes alternate so the set is balanced.
pub fn template_pairs(count: usize, seed: u64) -> Vec<LabeledPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let noun = *NOUNS.choose(&mut rng).unwrap();
            let verb = *VERBS.choose(&mut rng).unwrap();
            let adj = *ADJS.choose(&mut rng).unwrap();
            let label = i % 2;
            let h_noun = if label == 1 {
                noun
            } else {
                *NOUNS.iter().filter(|&&n| n != noun).collect::<Vec<_>>().choose(&mut rng).unwrap()
            };
            let premise = ParsedSentence::new(
                vec!["the".into(), adj.into(), noun.into(), verb.into()],
                vec![Some(2), Some(2), Some(3), None],
                vec!["det".into(), "amod".into(), "nsubj".into(), "root".into()],
                "template",
            )
            .expect("template premise");
            let hypothesis = ParsedSentence::new(
                vec!["a".into(), h_noun.into(), verb.into()],
                vec![Some(1), Some(2), None],
                vec!["det".into(), "nsubj".into(), "root".into()],
                "template",
            )
            .expect("template hypothesis");
            LabeledPair {
                pair_id: format!("tmpl-{i}"),
                premise,
                hypothesis,
                label,
            }
        })
        .collect()
}

/// Membership task: the premise is a random tree over `premise_len`
/// words, the hypothesis a random tree over `hypothesis_len` words.
/// Label 1 when the hypothesis's first word also occurs in the premise.
/// Positives and negatives alternate.
pub fn alignment_pairs(
    count: usize,
    premise_len: usize,
    hypothesis_len: usize,
    lexicon: usize,
    seed: u64,
) -> Vec<LabeledPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let label = i % 2;
            let pw = words(&mut rng, premise_len, lexicon);
            let mut qw = words(&mut rng, hypothesis_len, lexicon);
            qw[0] = if label == 1 {
                pw[rng.gen_range(0..premise_len)].clone()
            } else {
                loop {
                    let w = format!("w{}", rng.gen_range(0..lexicon));
                    if !pw.contains(&w) {
                        break w;
                    }
                }
            };
            LabeledPair {
                pair_id: format!("align-{i}"),
                premise: random_tree(&mut rng, pw, DEPRELS),
                hypothesis: random_tree(&mut rng, qw, DEPRELS),
                label,
            }
        })
        .collect()
}
