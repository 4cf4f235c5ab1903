//! Frequency-driven subword segmentation (pair merging), shared between code
//! tokens and identifier names.
//!
//! Placeholders (`VAR<k>`), reserved decompiler names and the decoder's
//! control tokens are specials: each maps to exactly one id and is never
//! split or produced by a merge.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ast::{placeholder, placeholder_index, TokenKind, DEFAULT_RESERVED};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
/// Ends one predicted name.
pub const END_NAME: &str = "</i>";
/// Predicts "keep the decompiler's name".
pub const KEEP: &str = "</identity>";

pub const DEFAULT_VOCAB_SIZE: usize = 4096;
pub const DEFAULT_MAX_PLACEHOLDERS: usize = 64;

pub type TokenId = usize;

#[derive(Debug, thiserror::Error)]
pub enum SubtokError {
    #[error("cannot train a segmenter on an empty corpus")]
    EmptyCorpus,
    #[error("vocab size {requested} is smaller than the {chars} base characters")]
    VocabTooSmall { requested: usize, chars: usize },
    #[error("unknown token id {0}")]
    UnknownId(TokenId),
    #[error("invalid vocabulary document: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Which specials a vocabulary reserves.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpecialSet {
    pub max_placeholders: usize,
    pub reserved: Vec<String>,
}

impl Default for SpecialSet {
    fn default() -> Self {
        SpecialSet {
            max_placeholders: DEFAULT_MAX_PLACEHOLDERS,
            reserved: DEFAULT_RESERVED.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl SpecialSet {
    fn texts(&self) -> Vec<String> {
        let mut out: Vec<String> = [PAD, UNK, BOS, END_NAME, KEEP].iter().map(|s| s.to_string()).collect();
        out.extend((1..=self.max_placeholders).map(placeholder));
        out.extend(self.reserved.iter().cloned());
        out
    }
}

/// Persisted form: `{"specials": [...], "merges": [[l, r], ...], "tokens": [...]}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabDocument {
    pub specials: Vec<String>,
    pub merges: Vec<(String, String)>,
    pub tokens: Vec<String>,
}

/// A trained vocabulary together with its merge table.
#[derive(Clone, Debug)]
pub struct Vocabulary {
    specials: Vec<String>,
    merges: Vec<(String, String)>,
    /// Non-special entries in id order: base characters, then merge results.
    tokens: Vec<String>,
    id_of: HashMap<String, TokenId>,
    /// Ids of non-special entries only, so a merged piece that happens to
    /// spell a special (say `result`) stays reachable as ordinary text.
    piece_id: HashMap<String, TokenId>,
    ranks: HashMap<(String, String), usize>,
    reserved: BTreeSet<String>,
    max_placeholder: usize,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.specials == other.specials && self.merges == other.merges && self.tokens == other.tokens
    }
}

fn chars_of(word: &str) -> Vec<String> {
    word.chars().map(|c| c.to_string()).collect()
}

/// Learns merges greedily: the most frequent adjacent pair is merged first,
/// ties going to the lexicographically smallest `(left, right)`. Training
/// stops once `vocab_size` non-special entries exist or nothing is left to
/// merge. Whitespace separates words; specials in the text are skipped.
pub fn train_segmenter<S: AsRef<str>>(
    corpus: &[S],
    vocab_size: usize,
    specials: &SpecialSet,
) -> Result<Vocabulary, SubtokError> {
    let special_texts: BTreeSet<String> = specials.texts().into_iter().collect();
    let mut word_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for text in corpus {
        for word in text.as_ref().split_whitespace() {
            if !special_texts.contains(word) {
                *word_counts.entry(word).or_default() += 1;
            }
        }
    }
    if word_counts.is_empty() {
        return Err(SubtokError::EmptyCorpus);
    }
    let alphabet: BTreeSet<String> = word_counts.keys().flat_map(|w| chars_of(w)).collect();
    if vocab_size < alphabet.len() {
        return Err(SubtokError::VocabTooSmall {
            requested: vocab_size,
            chars: alphabet.len(),
        });
    }
    let mut tokens: Vec<String> = alphabet.iter().cloned().collect();
    let mut known: BTreeSet<String> = alphabet;
    let mut words: Vec<(Vec<String>, usize)> = word_counts
        .iter()
        .map(|(w, &c)| (chars_of(w), c))
        .collect();
    let mut merges = Vec::new();

    while tokens.len() < vocab_size {
        let mut pair_counts: BTreeMap<(&str, &str), usize> = BTreeMap::new();
        for (symbols, count) in &words {
            for pair in symbols.windows(2) {
                *pair_counts.entry((&pair[0], &pair[1])).or_default() += count;
            }
        }
        // BTreeMap iterates in (left, right) order, so the first maximum wins ties.
        let Some(((l, r), _)) = pair_counts
            .iter()
            .fold(None, |best: Option<(&(&str, &str), usize)>, (pair, &c)| match best {
                Some((_, bc)) if bc >= c => best,
                _ => Some((pair, c)),
            })
        else {
            break;
        };
        let (left, right) = (l.to_string(), r.to_string());
        let merged = format!("{left}{right}");
        for (symbols, _) in &mut words {
            *symbols = apply_merge(symbols, &left, &right, &merged);
        }
        if known.insert(merged.clone()) {
            tokens.push(merged);
        }
        merges.push((left, right));
    }
    Ok(Vocabulary::assemble(specials.texts(), merges, tokens, specials))
}

fn apply_merge(symbols: &[String], left: &str, right: &str, merged: &str) -> Vec<String> {
    let mut out = Vec::with_capacity(symbols.len());
    let mut i = 0;
    while i < symbols.len() {
        if i + 1 < symbols.len() && symbols[i] == left && symbols[i + 1] == right {
            out.push(merged.to_string());
            i += 2;
        } else {
            out.push(symbols[i].clone());
            i += 1;
        }
    }
    out
}

impl Vocabulary {
    fn assemble(
        specials: Vec<String>,
        merges: Vec<(String, String)>,
        tokens: Vec<String>,
        set: &SpecialSet,
    ) -> Self {
        let mut id_of = HashMap::new();
        for (i, s) in specials.iter().chain(tokens.iter()).enumerate() {
            id_of.entry(s.clone()).or_insert(i);
        }
        let piece_id = tokens
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), specials.len() + i))
            .collect();
        let ranks = merges
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        Vocabulary {
            specials,
            merges,
            tokens,
            id_of,
            piece_id,
            ranks,
            reserved: set.reserved.iter().cloned().collect(),
            max_placeholder: set.max_placeholders,
        }
    }

    pub fn len(&self) -> usize {
        self.specials.len() + self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn specials(&self) -> &[String] {
        &self.specials
    }

    /// Number of non-special entries.
    pub fn subtoken_count(&self) -> usize {
        self.tokens.len()
    }

    pub fn id(&self, text: &str) -> Option<TokenId> {
        self.id_of.get(text).copied()
    }

    fn special(&self, text: &str) -> TokenId {
        self.id_of[text]
    }

    pub fn pad(&self) -> TokenId {
        self.special(PAD)
    }

    pub fn unk(&self) -> TokenId {
        self.special(UNK)
    }

    pub fn bos(&self) -> TokenId {
        self.special(BOS)
    }

    pub fn end_name(&self) -> TokenId {
        self.special(END_NAME)
    }

    pub fn keep(&self) -> TokenId {
        self.special(KEEP)
    }

    pub fn is_special(&self, id: TokenId) -> bool {
        id < self.specials.len()
    }

    pub fn text(&self, id: TokenId) -> Option<&str> {
        match id.checked_sub(self.specials.len()) {
            None => Some(&self.specials[id]),
            Some(i) => self.tokens.get(i).map(String::as_str),
        }
    }

    /// Splits one token. Placeholders and reserved names become a single
    /// special id; other text is segmented by replaying merges, with
    /// characters outside the training alphabet mapped to `<unk>`.
    pub fn encode(&self, token: &str, kind: TokenKind) -> Vec<TokenId> {
        match kind {
            TokenKind::Placeholder => {
                let id = placeholder_index(token)
                    .filter(|&k| k <= self.max_placeholder)
                    .and_then(|_| self.id(token))
                    .unwrap_or_else(|| self.unk());
                vec![id]
            }
            TokenKind::Reserved if self.reserved.contains(token) => vec![self.special(token)],
            _ => self
                .segment(token)
                .iter()
                .map(|piece| self.piece_id.get(piece).copied().unwrap_or_else(|| self.unk()))
                .collect(),
        }
    }

    /// Plain text segmentation used for names, types and literals.
    pub fn encode_text(&self, text: &str) -> Vec<TokenId> {
        self.encode(text, TokenKind::Code)
    }

    /// Subtoken strings of `word` after replaying the merge table.
    pub fn segment(&self, word: &str) -> Vec<String> {
        let mut symbols = chars_of(word);
        loop {
            let best = symbols
                .windows(2)
                .enumerate()
                .filter_map(|(i, p)| {
                    self.ranks
                        .get(&(p[0].clone(), p[1].clone()))
                        .map(|&rank| (rank, i))
                })
                .min();
            let Some((rank, _)) = best else { break };
            let (left, right) = &self.merges[rank];
            let merged = format!("{left}{right}");
            symbols = apply_merge(&symbols, left, right, &merged);
        }
        symbols
    }

    pub fn decode(&self, ids: &[TokenId]) -> Result<String, SubtokError> {
        let mut out = String::new();
        for &id in ids {
            out.push_str(self.text(id).ok_or(SubtokError::UnknownId(id))?);
        }
        Ok(out)
    }

    pub fn to_document(&self) -> VocabDocument {
        VocabDocument {
            specials: self.specials.clone(),
            merges: self.merges.clone(),
            tokens: self.tokens.clone(),
        }
    }

    pub fn from_document(doc: VocabDocument) -> Result<Self, SubtokError> {
        for required in [PAD, UNK, BOS, END_NAME, KEEP] {
            if !doc.specials.iter().any(|s| s == required) {
                return Err(SubtokError::Invalid(format!("missing special {required}")));
            }
        }
        let max_placeholders = doc
            .specials
            .iter()
            .filter_map(|s| placeholder_index(s))
            .max()
            .unwrap_or(0);
        let reserved = doc
            .specials
            .iter()
            .filter(|s| {
                placeholder_index(s).is_none() && ![PAD, UNK, BOS, END_NAME, KEEP].contains(&s.as_str())
            })
            .cloned()
            .collect();
        let set = SpecialSet {
            max_placeholders,
            reserved,
        };
        Ok(Vocabulary::assemble(doc.specials, doc.merges, doc.tokens, &set))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_document()).expect("vocabulary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SubtokError> {
        Self::from_document(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), SubtokError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SubtokError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Hex SHA-256 of the persisted form; checkpoints record it so a model is
    /// never paired with a different vocabulary.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
