use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Edge, EdgeKind, SentencePairGraph, Strategy, StrategyConfig};
use crate::data::{LabeledPair, ParsedSentence, RelationVocab};
use crate::error::{Error, Result};

/// Epoch counter used for evaluation-time graphs.
pub const EVAL_EPOCH: u64 = u64::MAX;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable per-(run seed, pair, epoch) seed for interactive-edge sampling.
pub fn derive_seed(seed: u64, pair_id: &str, epoch: u64) -> u64 {
    // FNV-1a over the pair id.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in pair_id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(splitmix64(seed ^ splitmix64(h)) ^ epoch)
}

fn both_ways(out: &mut Vec<Edge>, a: usize, b: usize, fwd: usize, back: usize, kind: EdgeKind) {
    out.push(Edge {
        src: a,
        dst: b,
        relation: fwd,
        kind,
    });
    out.push(Edge {
        src: b,
        dst: a,
        relation: back,
        kind,
    });
}

/// Dependency arcs (head→dependent with the relation, dependent→head with
/// its inverse) followed by sequential links between adjacent tokens.
pub fn build_local_edges(
    s: &ParsedSentence,
    offset: usize,
    relations: &RelationVocab,
) -> Result<Vec<Edge>> {
    let mut out = Vec::with_capacity(4 * s.len());
    for (head, dep, rel) in s.arcs() {
        let (Some(fwd), Some(back)) = (relations.dep(rel), relations.inverse(rel)) else {
            return Err(Error::Config(format!(
                "dependency relation {rel:?} is not in the relation vocabulary"
            )));
        };
        both_ways(&mut out, offset + head, offset + dep, fwd, back, EdgeKind::LocalDep);
    }
    for i in 1..s.len() {
        both_ways(
            &mut out,
            offset + i - 1,
            offset + i,
            RelationVocab::SEQ,
            RelationVocab::SEQ,
            EdgeKind::LocalSeq,
        );
    }
    Ok(out)
}

fn interactive(pairs: impl IntoIterator<Item = (usize, usize)>, premise_len: usize) -> Vec<Edge> {
    let mut out = Vec::new();
    for (i, j) in pairs {
        both_ways(
            &mut out,
            i,
            premise_len + j,
            RelationVocab::INTER,
            RelationVocab::INTER,
            EdgeKind::Interactive,
        );
    }
    out
}

/// One connection between the two dependency roots.
pub fn interactive_root(p: &ParsedSentence, q: &ParsedSentence) -> Vec<Edge> {
    interactive([(p.root_index, q.root_index)], p.len())
}

/// One connection per pair of equal (lowercased) non-stopword tokens.
pub fn interactive_cooccurrence(
    p: &ParsedSentence,
    q: &ParsedSentence,
    stopwords: &BTreeSet<String>,
) -> Vec<Edge> {
    let pn: Vec<String> = (0..p.len()).map(|i| p.normalized(i)).collect();
    let qn: Vec<String> = (0..q.len()).map(|j| q.normalized(j)).collect();
    let matches = (0..p.len()).flat_map(|i| {
        let (pn, qn) = (&pn, &qn);
        (0..q.len())
            .filter(move |&j| pn[i] == qn[j] && !stopwords.contains(&pn[i]))
            .map(move |j| (i, j))
    });
    interactive(matches, p.len())
}

/// Each of the `M·N` candidate connections is kept independently when a
/// uniform draw `ε` satisfies `ε ≤ alpha`. Candidates are visited in
/// premise-major order, one draw each.
pub fn interactive_denoise(
    premise_len: usize,
    hypothesis_len: usize,
    alpha: f64,
    rng: &mut impl Rng,
) -> Vec<Edge> {
    let mut kept = Vec::new();
    for i in 0..premise_len {
        for j in 0..hypothesis_len {
            let eps: f64 = rng.gen();
            if eps <= alpha {
                kept.push((i, j));
            }
        }
    }
    interactive(kept, premise_len)
}

/// Every premise token connected to every hypothesis token.
pub fn interactive_full(premise_len: usize, hypothesis_len: usize) -> Vec<Edge> {
    interactive(
        (0..premise_len).flat_map(|i| (0..hypothesis_len).map(move |j| (i, j))),
        premise_len,
    )
}

/// Builds the unified graph for one pair.
///
/// Edge order: premise local, hypothesis local, interactive, self loops.
/// If the strategy yields no interactive edge the two roots are linked.
/// Sampling depends only on `(seed, pair_id, epoch)`.
pub fn build_pair_graph(
    pair: &LabeledPair,
    cfg: &StrategyConfig,
    relations: &RelationVocab,
    seed: u64,
    epoch: u64,
) -> Result<SentencePairGraph> {
    let (p, q) = (&pair.premise, &pair.hypothesis);
    let (m, n) = (p.len(), q.len());
    let mut edges = build_local_edges(p, 0, relations)?;
    edges.extend(build_local_edges(q, m, relations)?);

    let mut inter = match cfg.strategy {
        Strategy::Root => interactive_root(p, q),
        Strategy::Cooccurrence => interactive_cooccurrence(p, q, &cfg.stopwords),
        Strategy::Full => interactive_full(m, n),
        Strategy::Denoise => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &pair.pair_id, epoch));
            interactive_denoise(m, n, cfg.alpha, &mut rng)
        }
    };
    if inter.is_empty() {
        inter = interactive_root(p, q);
    }
    edges.extend(inter);

    for v in 0..m + n {
        edges.push(Edge {
            src: v,
            dst: v,
            relation: RelationVocab::SELF,
            kind: EdgeKind::SelfLoop,
        });
    }

    let tokens = p.tokens.iter().chain(&q.tokens).cloned().collect();
    Ok(SentencePairGraph {
        tokens,
        edges,
        premise_len: m,
        hypothesis_len: n,
        strategy: cfg.strategy,
        seed,
    })
}
