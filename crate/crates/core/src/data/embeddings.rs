use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Vocab;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const EMBED_INIT_RANGE: f64 = 0.05;

/// Uniform(-0.05, 0.05) rows with a zero `PAD` row.
pub fn init_embeddings(vocab: &Vocab, dim: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data: Vec<f64> = (0..vocab.len() * dim)
        .map(|_| rng.gen_range(-EMBED_INIT_RANGE..EMBED_INIT_RANGE))
        .collect();
    data[Vocab::PAD_ID * dim..(Vocab::PAD_ID + 1) * dim].fill(0.0);
    Tensor::new(vec![vocab.len(), dim], data)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmbeddingCoverage {
    /// Vocabulary words (specials excluded) that received a pretrained row.
    pub hits: usize,
    pub lines: usize,
}

/// Parses whitespace-separated `word v1 .. v_dim` lines. A leading
/// `count dim` header line is tolerated. Words are lowercased; the first
/// occurrence of a word wins.
pub fn parse_embeddings(
    text: &str,
    vocab: &Vocab,
    dim: usize,
    seed: u64,
) -> Result<(Tensor, EmbeddingCoverage)> {
    let mut table = init_embeddings(vocab, dim, seed);
    let mut filled = vec![false; vocab.len()];
    let mut coverage = EmbeddingCoverage { hits: 0, lines: 0 };

    for (lineno, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if lineno == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            continue;
        }
        if fields.len() != dim + 1 {
            return Err(Error::Format {
                line: lineno + 1,
                message: format!("expected {dim} components, found {}", fields.len() - 1),
            });
        }
        coverage.lines += 1;
        let word = fields[0].to_lowercase();
        let id = vocab.id(&word);
        if id == Vocab::UNK_ID || id == Vocab::PAD_ID || filled[id] || vocab.word(id) != word {
            continue;
        }
        let row = &mut table.data[id * dim..(id + 1) * dim];
        for (slot, f) in row.iter_mut().zip(&fields[1..]) {
            *slot = f.parse().map_err(|_| Error::Format {
                line: lineno + 1,
                message: format!("bad number {f:?}"),
            })?;
        }
        filled[id] = true;
        coverage.hits += 1;
    }
    Ok((table, coverage))
}

pub fn load_embeddings(
    path: &Path,
    vocab: &Vocab,
    dim: usize,
    seed: u64,
) -> Result<(Tensor, EmbeddingCoverage)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(&text, vocab, dim, seed)
}
