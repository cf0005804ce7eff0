use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};

const ENGLISH: &[&str] = &[
    "a", "an", "the", "and", "or", "but", "if", "of", "at", "by", "for", "with", "about", "to",
    "from", "in", "on", "into", "over", "under", "is", "are", "was", "were", "be", "been",
    "being", "am", "do", "does", "did", "has", "have", "had", "this", "that", "these", "those",
    "it", "its", "he", "she", "they", "them", "his", "her", "their", "i", "you", "we", "as",
    "there", "so", "than", "then",
];

pub fn default_stopwords() -> BTreeSet<String> {
    ENGLISH.iter().map(|w| w.to_string()).collect()
}

/// One word per line, lowercased; blank lines and `#` comments ignored.
pub fn load_stopwords(path: &Path) -> Result<BTreeSet<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect())
}
