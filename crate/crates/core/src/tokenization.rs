//! Wordpiece text conversion and re-tokenization between vocabularies.
//!
//! Pieces that start a word carry the boundary marker (`▁` by default) as a
//! prefix. Tokenization is greedy longest-match, left to right, over the text
//! with every whitespace-separated word prefixed by the marker.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{TokenId, Vocabulary};

pub const DEFAULT_BOUNDARY_MARKER: &str = "\u{2581}";
pub const DEFAULT_UNK: &str = "<unk>";
/// Text rendering of the unknown piece.
pub const REPLACEMENT_CHAR: char = '\u{FFFD}';

/// Vocab file: `{"pieces": [...], "unk": str, "boundary_marker": str}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabFile {
    pub pieces: Vec<String>,
    pub unk: String,
    pub boundary_marker: String,
}

#[derive(Debug, Clone)]
pub struct Tokenizer {
    pieces: Vec<String>,
    index: HashMap<String, TokenId>,
    unk: TokenId,
    blank: Option<TokenId>,
    marker: String,
    max_piece_chars: usize,
}

impl Tokenizer {
    /// Builds a tokenizer over `pieces`, appending the unknown piece when missing.
    pub fn new(pieces: Vec<String>, unk: &str, marker: &str) -> Result<Self> {
        Self::build(pieces, None, unk, marker)
    }

    /// Tokenizer sharing the id space of a lattice vocabulary. The blank keeps
    /// its id but is never produced by [`tokenize`](Self::tokenize) and is
    /// rejected by [`detokenize`](Self::detokenize).
    pub fn from_vocabulary(vocab: &Vocabulary, unk: &str, marker: &str) -> Result<Self> {
        Self::build(vocab.tokens().to_vec(), Some(vocab.blank_id()), unk, marker)
    }

    pub fn from_vocab_file(file: &VocabFile) -> Result<Self> {
        Self::new(file.pieces.clone(), &file.unk, &file.boundary_marker)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file: VocabFile = serde_json::from_reader(std::io::BufReader::new(
            std::fs::File::open(path)?,
        ))?;
        Self::from_vocab_file(&file)
    }

    fn build(
        mut pieces: Vec<String>,
        blank: Option<TokenId>,
        unk: &str,
        marker: &str,
    ) -> Result<Self> {
        if marker.chars().count() != 1 {
            return Err(Error::Vocabulary(format!(
                "boundary marker must be a single character, got {marker:?}"
            )));
        }
        if unk.is_empty() {
            return Err(Error::Vocabulary("unknown piece must be non-empty".into()));
        }
        let mut index = HashMap::with_capacity(pieces.len() + 2);
        for (i, piece) in pieces.iter().enumerate() {
            let is_blank = blank == Some(i as TokenId);
            if !is_blank && piece != unk {
                validate_piece(piece, marker)?;
            }
            if index.insert(piece.clone(), i as TokenId).is_some() {
                return Err(Error::Vocabulary(format!("duplicate piece {piece:?}")));
            }
        }
        if !index.contains_key(unk) {
            index.insert(unk.to_string(), pieces.len() as TokenId);
            pieces.push(unk.to_string());
        }
        let unk_id = index[unk];
        if blank == Some(unk_id) {
            return Err(Error::Vocabulary("unknown piece cannot be the blank".into()));
        }
        let max_piece_chars = pieces
            .iter()
            .enumerate()
            .filter(|(i, _)| blank != Some(*i as TokenId))
            .map(|(_, p)| p.chars().count())
            .max()
            .unwrap_or(1);
        Ok(Self {
            pieces,
            index,
            unk: unk_id,
            blank,
            marker: marker.to_string(),
            max_piece_chars,
        })
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    pub fn piece(&self, id: TokenId) -> Option<&str> {
        self.pieces.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, piece: &str) -> Option<TokenId> {
        self.index.get(piece).copied()
    }

    pub fn unk_id(&self) -> TokenId {
        self.unk
    }

    pub fn blank_id(&self) -> Option<TokenId> {
        self.blank
    }

    fn marker_chars(&self) -> [char; 1] {
        [self.marker.chars().next().unwrap_or(' ')]
    }

    pub fn boundary_marker(&self) -> &str {
        &self.marker
    }

    pub fn to_vocab_file(&self) -> VocabFile {
        VocabFile {
            pieces: self
                .pieces
                .iter()
                .enumerate()
                .filter(|(i, _)| self.blank != Some(*i as TokenId))
                .map(|(_, p)| p.clone())
                .collect(),
            unk: self.pieces[self.unk as usize].clone(),
            boundary_marker: self.marker.clone(),
        }
    }

    /// Text-producing pieces (everything but the blank), as a set.
    pub fn text_pieces(&self) -> BTreeSet<&str> {
        self.pieces
            .iter()
            .enumerate()
            .filter(|(i, _)| self.blank != Some(*i as TokenId))
            .map(|(_, p)| p.as_str())
            .collect()
    }

    /// Concatenates pieces, turning boundary markers into single spaces.
    pub fn detokenize(&self, tokens: &[TokenId]) -> Result<String> {
        let mut raw = String::new();
        for &id in tokens {
            if self.blank == Some(id) {
                return Err(Error::InvalidLabel {
                    label: id,
                    vocab_size: self.pieces.len(),
                });
            }
            if id == self.unk {
                raw.push(REPLACEMENT_CHAR);
                continue;
            }
            let piece = self.piece(id).ok_or(Error::InvalidLabel {
                label: id,
                vocab_size: self.pieces.len(),
            })?;
            raw.push_str(piece);
        }
        let spaced = raw.replace(self.marker.as_str(), " ");
        Ok(spaced.split_whitespace().collect::<Vec<_>>().join(" "))
    }

    /// Greedy longest-match over the marker-prefixed words of `text`.
    ///
    /// Where nothing matches, one character becomes the unknown piece; at a
    /// word start the marker and the first character are consumed together.
    pub fn tokenize(&self, text: &str) -> Vec<TokenId> {
        let mut chars: Vec<char> = Vec::with_capacity(text.len() + 8);
        for word in text.split_whitespace() {
            chars.extend(self.marker.chars());
            chars.extend(word.chars());
        }
        let mut out = Vec::new();
        let mut pos = 0;
        let mut buf = String::new();
        while pos < chars.len() {
            let longest = self.max_piece_chars.min(chars.len() - pos);
            let mut matched = None;
            for len in (1..=longest).rev() {
                buf.clear();
                buf.extend(&chars[pos..pos + len]);
                if let Some(&id) = self.index.get(buf.as_str()) {
                    if id != self.unk && self.blank != Some(id) {
                        matched = Some((id, len));
                        break;
                    }
                }
            }
            match matched {
                Some((id, len)) => {
                    out.push(id);
                    pos += len;
                }
                None => {
                    out.push(self.unk);
                    let marker = self.marker_chars();
                    let at_word_start = chars[pos..].starts_with(&marker);
                    pos = if at_word_start {
                        (pos + marker.len() + 1).min(chars.len())
                    } else {
                        pos + 1
                    };
                }
            }
        }
        out
    }
}

fn validate_piece(piece: &str, marker: &str) -> Result<()> {
    if piece.is_empty() {
        return Err(Error::Vocabulary("empty piece".into()));
    }
    if piece.chars().any(char::is_whitespace) || piece.contains(REPLACEMENT_CHAR) {
        return Err(Error::Vocabulary(format!(
            "piece {piece:?} contains whitespace or the replacement character"
        )));
    }
    if piece.chars().skip(1).collect::<String>().contains(marker) {
        return Err(Error::Vocabulary(format!(
            "piece {piece:?} has the boundary marker past its first character"
        )));
    }
    Ok(())
}

/// `to.tokenize(from.detokenize(tokens))`.
pub fn retokenize(tokens: &[TokenId], from: &Tokenizer, to: &Tokenizer) -> Result<Vec<TokenId>> {
    Ok(to.tokenize(&from.detokenize(tokens)?))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn tok(pieces: &[&str]) -> Tokenizer {
        Tokenizer::new(
            pieces.iter().map(|s| s.to_string()).collect(),
            DEFAULT_UNK,
            DEFAULT_BOUNDARY_MARKER,
        )
        .unwrap()
    }

    fn ids(t: &Tokenizer, pieces: &[&str]) -> Vec<TokenId> {
        pieces.iter().map(|p| t.id(p).unwrap()).collect()
    }

    fn names(t: &Tokenizer, ids: &[TokenId]) -> Vec<String> {
        ids.iter().map(|&i| t.piece(i).unwrap().to_string()).collect()
    }

    #[test]
    fn detokenize_examples() {
        let t = tok(&["▁the", "▁cat", "▁un", "der"]);
        assert_eq!(t.detokenize(&ids(&t, &["▁the", "▁cat"])).unwrap(), "the cat");
        assert_eq!(t.detokenize(&[]).unwrap(), "");
        assert_eq!(t.detokenize(&ids(&t, &["▁un", "der"])).unwrap(), "under");
        assert!(t.detokenize(&[99]).is_err());
        assert_eq!(t.detokenize(&[t.unk_id()]).unwrap(), "\u{FFFD}");
    }

    #[test]
    fn tokenize_examples() {
        let t = tok(&["▁the", "▁cat"]);
        assert_eq!(names(&t, &t.tokenize("the cat")), vec!["▁the", "▁cat"]);
        assert!(t.tokenize("").is_empty());
        assert!(t.tokenize("   ").is_empty());

        let t = tok(&["▁the", "▁cat", "▁t", "h", "e", "c", "a", "t"]);
        assert_eq!(names(&t, &t.tokenize("thecat")), vec!["▁the", "c", "a", "t"]);
    }

    #[test]
    fn unknown_characters() {
        let t = tok(&["▁a", "b"]);
        let got = t.tokenize("ab x");
        assert_eq!(names(&t, &got), vec!["▁a", "b", "<unk>"]);
        assert_eq!(t.detokenize(&got).unwrap(), "ab\u{FFFD}");
        assert_eq!(t.tokenize(&t.detokenize(&got).unwrap()), got);

        let with_marker = tok(&["▁a", "b", "▁"]);
        let got = with_marker.tokenize("ab x");
        assert_eq!(names(&with_marker, &got), vec!["▁a", "b", "▁", "<unk>"]);
        assert_eq!(with_marker.detokenize(&got).unwrap(), "ab \u{FFFD}");

        // The literal unknown string is text like any other.
        assert_eq!(t.tokenize("<unk>").len(), 5);
    }

    #[test]
    fn rejects_bad_pieces() {
        let bad = |p: &[&str]| {
            Tokenizer::new(p.iter().map(|s| s.to_string()).collect(), "<unk>", "▁").is_err()
        };
        assert!(bad(&["a b"]));
        assert!(bad(&["a▁b"]));
        assert!(bad(&["a", "a"]));
        assert!(bad(&[""]));
        assert!(Tokenizer::new(vec![], "<unk>", "__").is_err());
    }

    #[test]
    fn shares_lattice_ids() {
        let v = Vocabulary::new(vec!["<b>".into(), "▁hi".into(), "▁yo".into()], 0).unwrap();
        let t = Tokenizer::from_vocabulary(&v, DEFAULT_UNK, DEFAULT_BOUNDARY_MARKER).unwrap();
        assert_eq!(t.detokenize(&[1, 2]).unwrap(), "hi yo");
        assert_eq!(t.tokenize("hi yo"), vec![1, 2]);
        assert!(t.detokenize(&[0]).is_err());
        assert!(!t.text_pieces().contains("<b>"));
        assert_eq!(t.unk_id(), 3);
    }

    #[test]
    fn retokenize_examples() {
        let asr = tok(&["▁the", "▁cat", "▁sat", "▁on", "▁ma", "t"]);
        let same = asr.clone();
        let input = asr.tokenize("the cat sat on the mat");
        assert_eq!(retokenize(&input, &asr, &same).unwrap(), input);

        let chars = tok(&["▁", "t", "c", "s", "o", "m", "h", "e", "a", "n"]);
        let out = retokenize(&input, &asr, &chars).unwrap();
        assert_eq!(
            chars.detokenize(&out).unwrap(),
            asr.detokenize(&input).unwrap()
        );
    }

    #[test]
    fn vocab_file_round_trip() {
        let t = tok(&["▁a", "b"]);
        let file = t.to_vocab_file();
        assert_eq!(file.pieces, vec!["▁a", "b", "<unk>"]);
        let json = serde_json::to_string(&file).unwrap();
        assert!(json.contains("\"boundary_marker\""));
        let back = Tokenizer::from_vocab_file(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back.pieces(), t.pieces());
    }

    fn random_tokenizer() -> impl Strategy<Value = Tokenizer> {
        proptest::collection::btree_set("[a-e]{1,3}", 1..12).prop_flat_map(|set| {
            let pieces: Vec<String> = set.into_iter().collect();
            let n = pieces.len();
            proptest::collection::vec(any::<bool>(), n).prop_map(move |starts| {
                let pieces: Vec<String> = pieces
                    .iter()
                    .zip(&starts)
                    .map(|(p, &s)| if s { format!("▁{p}") } else { p.clone() })
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect();
                Tokenizer::new(pieces, DEFAULT_UNK, DEFAULT_BOUNDARY_MARKER).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn tokenize_round_trips_its_output(t in random_tokenizer(), text in "[a-f ]{0,30}") {
            let ids = t.tokenize(&text);
            let back = t.detokenize(&ids).unwrap();
            prop_assert_eq!(t.tokenize(&back), ids);
        }

        #[test]
        fn retokenize_preserves_text(
            from in random_tokenizer(),
            to in random_tokenizer(),
            text in "[a-e ]{0,30}",
        ) {
            let tokens = from.tokenize(&text);
            let moved = retokenize(&tokens, &from, &to).unwrap();
            let covered = !to.detokenize(&moved).unwrap().contains(REPLACEMENT_CHAR);
            let original = from.detokenize(&tokens).unwrap();
            if covered && !original.contains(REPLACEMENT_CHAR) {
                prop_assert_eq!(to.detokenize(&moved).unwrap(), original);
            }
        }
    }
}
