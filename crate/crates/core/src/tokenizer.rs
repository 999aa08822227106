//! Byte-level BPE with reserved special tokens.
//!
//! Ids: reserved tokens first (in [`SpecialToken::all`] order), then the 256
//! byte tokens, then one id per learned merge.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::FieldTag;
use crate::serializer::{find_special_tokens, SpecialToken};

pub const VOCAB_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_VOCAB_SIZE: usize = 8192;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("vocab_size {requested} leaves no room past the {minimum} reserved and byte tokens")]
    VocabTooSmall { requested: usize, minimum: usize },
    #[error("training text ran out of mergeable pairs after {reached} tokens (asked for {requested})")]
    Exhausted { reached: usize, requested: usize },
    #[error("token id {0} is outside the vocabulary")]
    UnknownId(u32),
    #[error("vocab file: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Token ids with per-token field membership and category flags.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub field_mask: Vec<Option<FieldTag>>,
    pub category_mask: Vec<bool>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn push(&mut self, id: u32, field: Option<FieldTag>, category: bool) {
        self.ids.push(id);
        self.field_mask.push(field);
        self.category_mask.push(category);
    }
}

#[derive(Debug, Clone)]
pub struct Vocab {
    /// Byte strings of the non-reserved tokens (bytes first, then merges).
    tokens: Vec<Vec<u8>>,
    merges: Vec<(u32, u32)>,
    merge_rank: HashMap<(u32, u32), u32>,
    token_index: HashMap<Vec<u8>, u32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct VocabFile {
    version: u32,
    special: Vec<String>,
    merges: Vec<String>,
    tokens: Vec<String>,
}

impl Vocab {
    pub fn n_special() -> usize {
        SpecialToken::all().len()
    }

    fn byte_offset() -> u32 {
        Self::n_special() as u32
    }

    /// Vocabulary with no merges.
    pub fn bytes_only() -> Self {
        Self::from_merges(Vec::new()).expect("byte vocabulary is always valid")
    }

    fn from_merges(merges: Vec<(u32, u32)>) -> Result<Self, TokenizerError> {
        let off = Self::byte_offset();
        let mut tokens: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
        let mut merge_rank = HashMap::with_capacity(merges.len());
        for (rank, &(a, b)) in merges.iter().enumerate() {
            let next = off + tokens.len() as u32;
            let get = |id: u32| -> Result<&Vec<u8>, TokenizerError> {
                id.checked_sub(off)
                    .and_then(|i| tokens.get(i as usize))
                    .ok_or_else(|| TokenizerError::Format(format!("merge {rank} refers to unknown id {id}")))
            };
            let mut joined = get(a)?.clone();
            joined.extend_from_slice(get(b)?);
            if merge_rank.insert((a, b), rank as u32).is_some() {
                return Err(TokenizerError::Format(format!("merge {rank} is a duplicate")));
            }
            debug_assert_eq!(next, off + tokens.len() as u32);
            tokens.push(joined);
        }
        let mut token_index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            token_index.entry(t.clone()).or_insert(off + i as u32);
        }
        Ok(Vocab { tokens, merges, merge_rank, token_index })
    }

    pub fn len(&self) -> usize {
        Self::n_special() + self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    pub fn special_id(tok: SpecialToken) -> u32 {
        SpecialToken::all().iter().position(|t| *t == tok).expect("every special token is registered") as u32
    }

    pub fn special_token(id: u32) -> Option<SpecialToken> {
        SpecialToken::all().get(id as usize).copied()
    }

    pub fn is_special(id: u32) -> bool {
        (id as usize) < Self::n_special()
    }

    pub fn is_category(id: u32) -> bool {
        matches!(Self::special_token(id), Some(SpecialToken::Category(_)))
    }

    pub fn is_boundary(id: u32) -> bool {
        Self::special_token(id).map(|t| t.is_boundary()).unwrap_or(false)
    }

    /// The lone-space byte token.
    pub fn space_id() -> u32 {
        Self::byte_offset() + b' ' as u32
    }

    pub fn token_bytes(&self, id: u32) -> Result<Vec<u8>, TokenizerError> {
        if let Some(t) = Self::special_token(id) {
            return Ok(t.literal().into_bytes());
        }
        self.tokens
            .get((id - Self::byte_offset()) as usize)
            .cloned()
            .ok_or(TokenizerError::UnknownId(id))
    }

    pub fn id_of_bytes(&self, bytes: &[u8]) -> Option<u32> {
        self.token_index.get(bytes).copied()
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("vocab serializes")
    }

    fn to_file(&self) -> VocabFile {
        let enc = |id: u32| bytes_to_unicode_string(&self.tokens[(id - Self::byte_offset()) as usize]);
        VocabFile {
            version: VOCAB_FORMAT_VERSION,
            special: SpecialToken::all().iter().map(|t| t.literal()).collect(),
            merges: self.merges.iter().map(|&(a, b)| format!("{} {}", enc(a), enc(b))).collect(),
            tokens: self.tokens.iter().map(|t| bytes_to_unicode_string(t)).collect(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self, TokenizerError> {
        let f: VocabFile = serde_json::from_str(s).map_err(|e| TokenizerError::Format(e.to_string()))?;
        if f.version != VOCAB_FORMAT_VERSION {
            return Err(TokenizerError::Format(format!("unsupported version {}", f.version)));
        }
        let expected: Vec<String> = SpecialToken::all().iter().map(|t| t.literal()).collect();
        if f.special != expected {
            return Err(TokenizerError::Format("reserved token list does not match this build".into()));
        }
        let mut index: HashMap<Vec<u8>, u32> = HashMap::new();
        let off = Self::byte_offset();
        for b in 0..=255u8 {
            index.insert(vec![b], off + b as u32);
        }
        let mut merges = Vec::with_capacity(f.merges.len());
        for (i, m) in f.merges.iter().enumerate() {
            let (a, b) = m.split_once(' ').ok_or_else(|| TokenizerError::Format(format!("merge `{m}`")))?;
            let (a, b) = (unicode_string_to_bytes(a)?, unicode_string_to_bytes(b)?);
            let ia = *index.get(&a).ok_or_else(|| TokenizerError::Format(format!("merge `{m}` left side unknown")))?;
            let ib = *index.get(&b).ok_or_else(|| TokenizerError::Format(format!("merge `{m}` right side unknown")))?;
            let mut joined = a;
            joined.extend(b);
            index.entry(joined).or_insert(off + 256 + i as u32);
            merges.push((ia, ib));
        }
        let v = Self::from_merges(merges)?;
        let listed: Result<Vec<Vec<u8>>, _> = f.tokens.iter().map(|t| unicode_string_to_bytes(t)).collect();
        if listed? != v.tokens {
            return Err(TokenizerError::Format("token table is inconsistent with the merges".into()));
        }
        Ok(v)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TokenizerError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TokenizerError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    fn encode_word(&self, word: &[u8], out: &mut Vec<u32>) {
        let off = Self::byte_offset();
        let mut syms: Vec<u32> = word.iter().map(|&b| off + b as u32).collect();
        while syms.len() > 1 {
            let best = syms
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| self.merge_rank.get(&(w[0], w[1])).map(|r| (*r, i)))
                .min();
            let Some((rank, _)) = best else { break };
            let pair = self.merges[rank as usize];
            let new_id = off + 256 + rank;
            let mut merged = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && (syms[i], syms[i + 1]) == pair {
                    merged.push(new_id);
                    i += 2;
                } else {
                    merged.push(syms[i]);
                    i += 1;
                }
            }
            syms = merged;
        }
        out.extend(syms);
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum CharClass {
    Letter,
    Digit,
    Space,
    Other,
}

fn class_of(c: char) -> CharClass {
    if c.is_whitespace() {
        CharClass::Space
    } else if c.is_alphabetic() {
        CharClass::Letter
    } else if c.is_numeric() {
        CharClass::Digit
    } else {
        CharClass::Other
    }
}

/// Splits text into pre-tokens: an optional leading space joined to a run of
/// letters, digits or punctuation; whitespace runs give up their final space to
/// the following word.
pub fn pretokenize(s: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = s.char_indices().collect();
    let n = chars.len();
    let end_of = |k: usize| if k < n { chars[k].0 } else { s.len() };
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let c = chars[i].1;
        let mut j = i;
        if c == ' ' && i + 1 < n && class_of(chars[i + 1].1) != CharClass::Space {
            j = i + 1;
        }
        let class = class_of(chars[j].1);
        let mut k = j + 1;
        while k < n && class_of(chars[k].1) == class {
            k += 1;
        }
        if class == CharClass::Space && k < n && k - i > 1 && chars[k - 1].1 == ' ' {
            k -= 1;
        }
        out.push(&s[chars[i].0..end_of(k)]);
        i = k;
    }
    out
}

/// Text between reserved literals.
fn plain_segments(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut cursor = 0;
    for (s, e, _) in find_special_tokens(text) {
        if s > cursor {
            out.push(&text[cursor..s]);
        }
        cursor = e;
    }
    if cursor < text.len() {
        out.push(&text[cursor..]);
    }
    out
}

fn cmp_pair(vocab_tokens: &[Vec<u8>], off: u32, a: (u32, u32), b: (u32, u32)) -> Ordering {
    let t = |id: u32| &vocab_tokens[(id - off) as usize];
    t(a.0).cmp(t(b.0)).then_with(|| t(a.1).cmp(t(b.1)))
}

/// Learns merges until the vocabulary has exactly `vocab_size` entries.
/// The most frequent adjacent pair wins; ties go to the lexicographically
/// smallest pair of byte strings.
pub fn train_bpe<S: AsRef<str>>(texts: &[S], vocab_size: usize) -> Result<Vocab, TokenizerError> {
    let minimum = Vocab::n_special() + 256;
    if vocab_size < minimum {
        return Err(TokenizerError::VocabTooSmall { requested: vocab_size, minimum });
    }
    let off = Vocab::byte_offset();
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for t in texts {
        for seg in plain_segments(t.as_ref()) {
            for w in pretokenize(seg) {
                *counts.entry(w).or_default() += 1;
            }
        }
    }
    let mut word_list: Vec<(&str, u64)> = counts.into_iter().collect();
    word_list.sort();
    let mut words: Vec<Vec<u32>> = word_list.iter().map(|(w, _)| w.bytes().map(|b| off + b as u32).collect()).collect();
    let freqs: Vec<i64> = word_list.iter().map(|(_, c)| *c as i64).collect();

    let mut pair_counts: HashMap<(u32, u32), i64> = HashMap::new();
    let mut where_: HashMap<(u32, u32), HashSet<usize>> = HashMap::new();
    for (wi, w) in words.iter().enumerate() {
        for p in w.windows(2) {
            *pair_counts.entry((p[0], p[1])).or_default() += freqs[wi];
            where_.entry((p[0], p[1])).or_default().insert(wi);
        }
    }

    let mut tokens: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
    let mut merges = Vec::new();
    while 256 + merges.len() + Vocab::n_special() < vocab_size {
        let mut best: Option<((u32, u32), i64)> = None;
        for (&pair, &c) in &pair_counts {
            if c <= 0 {
                continue;
            }
            best = match best {
                None => Some((pair, c)),
                Some((bp, bc)) => {
                    if c > bc || (c == bc && cmp_pair(&tokens, off, pair, bp) == Ordering::Less) {
                        Some((pair, c))
                    } else {
                        Some((bp, bc))
                    }
                }
            };
        }
        let Some((pair, _)) = best else {
            return Err(TokenizerError::Exhausted { reached: Vocab::n_special() + tokens.len(), requested: vocab_size });
        };
        let new_id = off + tokens.len() as u32;
        let mut joined = tokens[(pair.0 - off) as usize].clone();
        joined.extend_from_slice(&tokens[(pair.1 - off) as usize]);
        tokens.push(joined);
        merges.push(pair);

        let affected: Vec<usize> = {
            let mut v: Vec<usize> = where_.remove(&pair).unwrap_or_default().into_iter().collect();
            v.sort_unstable();
            v
        };
        for wi in affected {
            let f = freqs[wi];
            let old = &words[wi];
            for p in old.windows(2) {
                let k = (p[0], p[1]);
                if let Some(c) = pair_counts.get_mut(&k) {
                    *c -= f;
                }
            }
            let mut merged = Vec::with_capacity(old.len());
            let mut i = 0;
            while i < old.len() {
                if i + 1 < old.len() && (old[i], old[i + 1]) == pair {
                    merged.push(new_id);
                    i += 2;
                } else {
                    merged.push(old[i]);
                    i += 1;
                }
            }
            for p in old.windows(2) {
                let k = (p[0], p[1]);
                if k != pair {
                    if let Some(set) = where_.get_mut(&k) {
                        set.remove(&wi);
                    }
                }
            }
            for p in merged.windows(2) {
                let k = (p[0], p[1]);
                *pair_counts.entry(k).or_default() += f;
                where_.entry(k).or_default().insert(wi);
            }
            words[wi] = merged;
        }
        pair_counts.remove(&pair);
        pair_counts.retain(|_, c| *c > 0);
    }
    Vocab::from_merges(merges)
}

/// Encodes serialized text; reserved literals become single ids.
pub fn encode(text: &str, vocab: &Vocab) -> TokenSequence {
    let mut seq = TokenSequence::default();
    let mut field: Option<FieldTag> = None;
    let mut cursor = 0;
    let mut buf = Vec::new();
    let mut emit_plain = |seq: &mut TokenSequence, seg: &str, field: Option<FieldTag>| {
        for w in pretokenize(seg) {
            buf.clear();
            vocab.encode_word(w.as_bytes(), &mut buf);
            for &id in &buf {
                seq.push(id, field, false);
            }
        }
    };
    for (s, e, tok) in find_special_tokens(text) {
        if s > cursor {
            emit_plain(&mut seq, &text[cursor..s], field);
        }
        let id = Vocab::special_id(tok);
        match tok {
            SpecialToken::FieldStart(t) => {
                field = Some(t);
                seq.push(id, field, false);
            }
            SpecialToken::FieldEnd(t) => {
                seq.push(id, Some(t), false);
                field = None;
            }
            SpecialToken::Category(_) => seq.push(id, field, true),
            _ => seq.push(id, field, false),
        }
        cursor = e;
    }
    if cursor < text.len() {
        emit_plain(&mut seq, &text[cursor..], field);
    }
    seq
}

/// Raw bytes of a token id sequence.
pub fn decode_bytes(ids: &[u32], vocab: &Vocab) -> Result<Vec<u8>, TokenizerError> {
    let mut out = Vec::new();
    for &id in ids {
        if id as usize >= vocab.len() {
            return Err(TokenizerError::UnknownId(id));
        }
        out.extend(vocab.token_bytes(id)?);
    }
    Ok(out)
}

/// Inverse of [`encode`]. Byte sequences that are not valid UTF-8 (possible for
/// arbitrary id lists) are replaced with U+FFFD.
pub fn decode(ids: &[u32], vocab: &Vocab) -> Result<String, TokenizerError> {
    let bytes = decode_bytes(ids, vocab)?;
    Ok(match String::from_utf8(bytes) {
        Ok(s) => s,
        Err(e) => String::from_utf8_lossy(e.as_bytes()).into_owned(),
    })
}

fn byte_unicode_tables() -> &'static ([char; 256], HashMap<char, u8>) {
    static T: OnceLock<([char; 256], HashMap<char, u8>)> = OnceLock::new();
    T.get_or_init(|| {
        let mut table = ['\0'; 256];
        let mut n = 0u32;
        for b in 0..=255u8 {
            let printable = (b'!'..=b'~').contains(&b) || (0xA1..=0xAC).contains(&b) || (0xAE..=0xFF).contains(&b);
            table[b as usize] = if printable {
                char::from(b)
            } else {
                n += 1;
                char::from_u32(255 + n).unwrap()
            };
        }
        let rev = table.iter().enumerate().map(|(b, c)| (*c, b as u8)).collect();
        (table, rev)
    })
}

/// Printable stand-ins for raw bytes (space becomes `Ġ`), as in GPT-2 vocab files.
pub fn bytes_to_unicode_string(bytes: &[u8]) -> String {
    let (t, _) = byte_unicode_tables();
    bytes.iter().map(|b| t[*b as usize]).collect()
}

pub fn unicode_string_to_bytes(s: &str) -> Result<Vec<u8>, TokenizerError> {
    let (_, rev) = byte_unicode_tables();
    s.chars()
        .map(|c| rev.get(&c).copied().ok_or_else(|| TokenizerError::Format(format!("character {c:?} is not a byte symbol"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reserved_plus_bytes() -> usize {
        Vocab::n_special() + 256
    }

    #[test]
    fn pretokenizer_shapes() {
        assert_eq!(pretokenize(" Hi. "), vec![" Hi", ".", " "]);
        assert_eq!(pretokenize("Hello  world 42!"), vec!["Hello", " ", " world", " 42", "!"]);
        assert_eq!(pretokenize(""), Vec::<&str>::new());
        assert_eq!(pretokenize("a\n\nb"), vec!["a", "\n\n", "b"]);
    }

    #[test]
    fn minimum_size_learns_nothing() {
        let v = train_bpe(&["aaaa bbbb"], reserved_plus_bytes()).unwrap();
        assert!(v.merges().is_empty());
        assert_eq!(v.len(), reserved_plus_bytes());
        assert!(matches!(train_bpe(&["x"], reserved_plus_bytes() - 1), Err(TokenizerError::VocabTooSmall { .. })));
    }

    #[test]
    fn most_frequent_pair_first() {
        let v = train_bpe(&["aaaaaaaa"], reserved_plus_bytes() + 1).unwrap();
        let a = Vocab::byte_offset() + b'a' as u32;
        assert_eq!(v.merges(), &[(a, a)]);
        assert_eq!(v.len(), reserved_plus_bytes() + 1);
    }

    #[test]
    fn ties_break_lexicographically() {
        // "ab" and "cd" both occur once: (a,b) sorts first.
        let v = train_bpe(&["cd", "ab"], reserved_plus_bytes() + 1).unwrap();
        let off = Vocab::byte_offset();
        assert_eq!(v.merges()[0], (off + b'a' as u32, off + b'b' as u32));
    }

    #[test]
    fn training_is_deterministic() {
        let texts = ["the cat sat on the mat", "the dog sat on the log", "<start-body> the end <end-body>"];
        let a = train_bpe(&texts, reserved_plus_bytes() + 12).unwrap();
        let b = train_bpe(&texts, reserved_plus_bytes() + 12).unwrap();
        assert_eq!(a.merges(), b.merges());
        assert_eq!(a.hash(), b.hash());
    }

    #[test]
    fn exhaustion_is_reported() {
        assert!(matches!(train_bpe(&["ab"], reserved_plus_bytes() + 5), Err(TokenizerError::Exhausted { .. })));
    }

    #[test]
    fn merges_never_touch_special_literals() {
        let texts = ["<start-body> xyz<end-body><start-body>abc <end-body>"; 4];
        let v = train_bpe(&texts, reserved_plus_bytes() + 3).unwrap();
        for id in 0..v.len() as u32 {
            if !Vocab::is_special(id) {
                let b = v.token_bytes(id).unwrap();
                assert!(!b.contains(&b'<') || b.len() == 1, "{:?}", String::from_utf8_lossy(&b));
            }
        }
    }

    #[test]
    fn framing_and_masks() {
        let v = Vocab::bytes_only();
        let s = encode("<start-body> Hi. <end-body>", &v);
        assert_eq!(s.ids[0], Vocab::special_id(SpecialToken::FieldStart(FieldTag::Body)));
        assert_eq!(*s.ids.last().unwrap(), Vocab::special_id(SpecialToken::FieldEnd(FieldTag::Body)));
        assert_eq!(decode(&s.ids[1..s.len() - 1], &v).unwrap(), " Hi. ");
        assert!(s.field_mask.iter().all(|f| *f == Some(FieldTag::Body)));
        assert!(s.category_mask.iter().all(|c| !c));

        let s = encode("<start-body> Ann <|PERSON|> ran <end-body>", &v);
        let cat = Vocab::special_id(SpecialToken::Category(crate::ner::EntityCategory::Person));
        let pos = s.ids.iter().position(|&i| i == cat).unwrap();
        assert!(s.category_mask[pos]);
        assert_eq!(s.field_mask[pos], Some(FieldTag::Body));
        assert_eq!(s.category_mask.iter().filter(|c| **c).count(), 1);
    }

    #[test]
    fn masks_change_only_at_boundaries() {
        let v = Vocab::bytes_only();
        let s = encode("<start-title> T <end-title> <start-body> B <end-body>", &v);
        for i in 1..s.len() {
            if s.field_mask[i] != s.field_mask[i - 1] {
                assert!(Vocab::is_boundary(s.ids[i]) || Vocab::is_boundary(s.ids[i - 1]));
            }
        }
        assert!(s.field_mask.contains(&None));
    }

    #[test]
    fn decode_errors_and_empty() {
        let v = Vocab::bytes_only();
        assert_eq!(decode(&[], &v).unwrap(), "");
        assert!(matches!(decode(&[v.len() as u32], &v), Err(TokenizerError::UnknownId(_))));
    }

    #[test]
    fn json_round_trip() {
        let v = train_bpe(&["hello hello world wide web"], reserved_plus_bytes() + 6).unwrap();
        let w = Vocab::from_json(&v.to_json()).unwrap();
        assert_eq!(v.merges(), w.merges());
        assert_eq!(v.hash(), w.hash());
        let json: serde_json::Value = serde_json::from_str(&v.to_json()).unwrap();
        assert_eq!(json["version"], 1);
        assert_eq!(json["special"].as_array().unwrap().len(), Vocab::n_special());
        assert!(Vocab::from_json("{\"version\":2,\"special\":[],\"merges\":[],\"tokens\":[]}").is_err());
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(s in "\\PC{0,60}", lits in proptest::collection::vec(0usize..37, 0..3)) {
            let v = train_bpe(&["some training text for the merges", "more more more text"], reserved_plus_bytes() + 20).unwrap();
            let mut text = s.clone();
            for l in lits {
                text.push_str(&SpecialToken::all()[l].literal());
                text.push_str(&s);
            }
            let seq = encode(&text, &v);
            prop_assert_eq!(decode(&seq.ids, &v).unwrap(), text);
            prop_assert_eq!(seq.field_mask.len(), seq.ids.len());
        }

        #[test]
        fn encode_inverts_decode_on_encoder_image(s in "[a-z ]{0,40}") {
            let v = train_bpe(&["abc abd abe zzz zz z"], reserved_plus_bytes() + 8).unwrap();
            let ids = encode(&s, &v).ids;
            let round = encode(&decode(&ids, &v).unwrap(), &v).ids;
            prop_assert_eq!(round, ids);
        }
    }
}
