use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One dependency-parsed sentence.
///
/// `heads[i]` is the 0-based index of token `i`'s head, or `None` for the
/// root. Exactly one token is the root and the heads form a tree.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedSentence {
    pub tokens: Vec<String>,
    pub heads: Vec<Option<usize>>,
    pub deprels: Vec<String>,
    pub root_index: usize,
}

impl ParsedSentence {
    /// Validates the tree and locates the root. `name` identifies the
    /// sentence in structural errors.
    pub fn new(
        tokens: Vec<String>,
        heads: Vec<Option<usize>>,
        deprels: Vec<String>,
        name: &str,
    ) -> Result<Self> {
        let structural = |message: String| Error::Structural {
            sentence: name.to_string(),
            message,
        };
        let n = tokens.len();
        if n == 0 {
            return Err(structural("empty sentence".into()));
        }
        if heads.len() != n || deprels.len() != n {
            return Err(structural(format!(
                "{n} tokens but {} heads and {} relations",
                heads.len(),
                deprels.len()
            )));
        }
        let roots: Vec<usize> = (0..n).filter(|&i| heads[i].is_none()).collect();
        let root_index = match roots.as_slice() {
            [r] => *r,
            [] => return Err(structural("no root token".into())),
            many => return Err(structural(format!("{} root tokens {many:?}", many.len()))),
        };
        for (i, h) in heads.iter().enumerate() {
            if let Some(h) = *h {
                if h >= n {
                    return Err(structural(format!("token {i} has head {h} outside sentence")));
                }
                if h == i {
                    return Err(structural(format!("token {i} is its own head")));
                }
            }
        }
        // Every token must reach the root within n steps.
        for start in 0..n {
            let mut cur = start;
            let mut steps = 0;
            while let Some(h) = heads[cur] {
                cur = h;
                steps += 1;
                if steps > n {
                    return Err(structural(format!("cycle through token {start}")));
                }
            }
        }
        Ok(ParsedSentence {
            tokens,
            heads,
            deprels,
            root_index,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Lowercased token used for vocabulary and embedding lookup.
    pub fn normalized(&self, i: usize) -> String {
        self.tokens[i].to_lowercase()
    }

    /// Indices of tokens made only of punctuation characters.
    pub fn punctuation_tokens(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.tokens[i].chars().all(|c| c.is_ascii_punctuation()))
            .collect()
    }

    /// `(head, dependent, relation)` for every non-root token.
    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize, &str)> + '_ {
        (0..self.len()).filter_map(move |t| self.heads[t].map(|h| (h, t, self.deprels[t].as_str())))
    }
}
