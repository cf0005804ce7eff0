//! Reader and writer for the subset of CoNLL-U the graph builder needs.
//!
//! Columns used: ID (1), FORM (2), HEAD (7), DEPREL (8). Multiword-token
//! ranges (`3-4`) and empty nodes (`5.1`) are skipped. A compact
//! four-column form `ID FORM HEAD DEPREL` (any whitespace) is also read.

use super::ParsedSentence;
use crate::error::{Error, Result};

/// A sentence block together with its `#` comment lines (without the `#`).
#[derive(Clone, Debug, PartialEq)]
pub struct ConlluBlock {
    pub comments: Vec<String>,
    pub sentence: ParsedSentence,
}

impl ConlluBlock {
    /// Value of a `# key = value` comment.
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.comments.iter().find_map(|c| {
            let (k, v) = c.split_once('=')?;
            (k.trim() == key).then(|| v.trim())
        })
    }
}

pub fn parse_conllu(text: &str) -> Result<Vec<ParsedSentence>> {
    Ok(parse_conllu_blocks(text)?
        .into_iter()
        .map(|b| b.sentence)
        .collect())
}

struct Pending {
    comments: Vec<String>,
    tokens: Vec<String>,
    heads: Vec<Option<usize>>,
    deprels: Vec<String>,
    first_line: usize,
}

impl Pending {
    fn new() -> Self {
        Pending {
            comments: Vec::new(),
            tokens: Vec::new(),
            heads: Vec::new(),
            deprels: Vec::new(),
            first_line: 0,
        }
    }
}

pub fn parse_conllu_blocks(text: &str) -> Result<Vec<ConlluBlock>> {
    let mut blocks = Vec::new();
    let mut cur = Pending::new();

    let finish = |cur: &mut Pending, blocks: &mut Vec<ConlluBlock>| -> Result<()> {
        let done = std::mem::replace(cur, Pending::new());
        if done.tokens.is_empty() {
            return Ok(());
        }
        let name = format!("#{} (line {})", blocks.len(), done.first_line);
        let sentence = ParsedSentence::new(done.tokens, done.heads, done.deprels, &name)?;
        blocks.push(ConlluBlock {
            comments: done.comments,
            sentence,
        });
        Ok(())
    };

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            finish(&mut cur, &mut blocks)?;
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            cur.comments.push(comment.trim().to_string());
            continue;
        }

        let tab_fields: Vec<&str> = line.split('\t').collect();
        let (id, form, head, deprel) = if tab_fields.len() >= 8 {
            (tab_fields[0], tab_fields[1], tab_fields[6], tab_fields[7])
        } else {
            let ws: Vec<&str> = line.split_whitespace().collect();
            if ws.len() != 4 {
                return Err(Error::Format {
                    line: line_no,
                    message: format!(
                        "expected 8+ tab-separated columns or ID FORM HEAD DEPREL, found {} fields",
                        tab_fields.len().max(ws.len())
                    ),
                });
            }
            (ws[0], ws[1], ws[2], ws[3])
        };
        if id.contains('-') || id.contains('.') {
            continue;
        }
        let id: usize = id.trim().parse().map_err(|_| Error::Format {
            line: line_no,
            message: format!("bad token id {id:?}"),
        })?;
        if id != cur.tokens.len() + 1 {
            return Err(Error::Format {
                line: line_no,
                message: format!("token id {id} out of sequence"),
            });
        }
        let head: usize = head.trim().parse().map_err(|_| Error::Format {
            line: line_no,
            message: format!("bad head {head:?}"),
        })?;
        if cur.tokens.is_empty() {
            cur.first_line = line_no;
        }
        cur.tokens.push(form.to_string());
        cur.heads.push(head.checked_sub(1));
        cur.deprels.push(deprel.to_string());
    }
    finish(&mut cur, &mut blocks)?;
    Ok(blocks)
}

/// Ten-column CoNLL-U rendering; unused columns are `_`.
pub fn to_conllu(sentence: &ParsedSentence) -> String {
    let mut out = String::new();
    for i in 0..sentence.len() {
        let head = sentence.heads[i].map_or(0, |h| h + 1);
        out.push_str(&format!(
            "{}\t{}\t_\t_\t_\t_\t{}\t{}\t_\t_\n",
            i + 1,
            sentence.tokens[i],
            head,
            sentence.deprels[i]
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_token_block() {
        let s = parse_conllu("1 cats 2 nsubj\n2 sleep 0 root\n").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].tokens, vec!["cats", "sleep"]);
        assert_eq!(s[0].root_index, 1);
        assert_eq!(s[0].heads, vec![Some(1), None]);
        assert_eq!(s[0].deprels, vec!["nsubj", "root"]);
    }

    #[test]
    fn single_token() {
        let s = parse_conllu("1\thi\t_\t_\t_\t_\t0\troot\t_\t_\n").unwrap();
        assert_eq!(s[0].root_index, 0);
    }

    #[test]
    fn cyclic_heads_are_structural_errors() {
        let err = parse_conllu("1 a 2 dep\n2 b 1 dep\n").unwrap_err();
        assert!(matches!(err, Error::Structural { .. }), "{err}");
    }

    #[test]
    fn missing_columns_report_line() {
        let err = parse_conllu("# c\n1\tcats\t_\n").unwrap_err();
        match err {
            Error::Format { line, .. } => assert_eq!(line, 2),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn comments_ranges_and_multiple_blocks() {
        let text = "# pair_id = p1\n# label = neutral\n1-2\tdon't\t_\t_\t_\t_\t_\t_\t_\t_\n\
                    1\tdo\t_\t_\t_\t_\t0\troot\t_\t_\n2\tn't\t_\t_\t_\t_\t1\tneg\t_\t_\n\n\n\
                    1 b 0 root\n";
        let blocks = parse_conllu_blocks(text).unwrap();
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[0].meta("label"), Some("neutral"));
        assert_eq!(blocks[0].meta("pair_id"), Some("p1"));
        assert_eq!(blocks[0].sentence.tokens, vec!["do", "n't"]);
        assert_eq!(blocks[1].meta("label"), None);
    }

    #[test]
    fn writer_round_trips() {
        let s = parse_conllu("1 the 2 det\n2 cat 3 nsubj\n3 sat 0 root\n").unwrap();
        let again = parse_conllu(&to_conllu(&s[0])).unwrap();
        assert_eq!(s, again);
    }
}
