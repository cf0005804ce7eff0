//! Dataset ingestion: parsed sentence pairs, vocabularies and embeddings.

mod conllu;
mod embeddings;
mod pairs;
mod sentence;
mod vocab;

pub use conllu::{parse_conllu, parse_conllu_blocks, to_conllu, ConlluBlock};
pub use embeddings::{
    init_embeddings, load_embeddings, parse_embeddings, EmbeddingCoverage, EMBED_INIT_RANGE,
};
pub use pairs::{load_pairs, pairs_to_jsonl, parse_pairs, write_pairs, LabelSet, LabeledPair};
pub use sentence::ParsedSentence;
pub use vocab::{build_relation_vocab, build_vocab, RelationVocab, Vocab, INVERSE_SUFFIX, PAD, UNK};
