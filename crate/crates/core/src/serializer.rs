//! Field serialization and the entity-aware annotation.
//!
//! Grammar of reserved literals: `<start-NAME>` / `<end-NAME>` around every
//! populated field (the entity list is spelled `entity`), `<|CAT|>` after each
//! entity mention, plus `<|pad|>`, `<|unk|>` and `<|eod|>`. In serialized text
//! every reserved literal is surrounded by single spaces.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Article, CanonicalOrder, FieldTag};
use crate::ner::{EntityCategory, EntityList, EntitySpan};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SerializerError {
    #[error("contract error: {0}")]
    Contract(String),
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SpecialToken {
    Pad,
    Unk,
    Eod,
    FieldStart(FieldTag),
    FieldEnd(FieldTag),
    Category(EntityCategory),
}

impl SpecialToken {
    /// Every reserved token in id order.
    pub fn all() -> &'static [SpecialToken] {
        static ALL: OnceLock<Vec<SpecialToken>> = OnceLock::new();
        ALL.get_or_init(|| {
            let mut v = vec![SpecialToken::Pad, SpecialToken::Unk, SpecialToken::Eod];
            for f in FieldTag::ALL {
                v.push(SpecialToken::FieldStart(f));
                v.push(SpecialToken::FieldEnd(f));
            }
            v.extend(EntityCategory::ALL.into_iter().map(SpecialToken::Category));
            v
        })
    }

    pub fn literal(&self) -> String {
        match self {
            SpecialToken::Pad => "<|pad|>".into(),
            SpecialToken::Unk => "<|unk|>".into(),
            SpecialToken::Eod => "<|eod|>".into(),
            SpecialToken::FieldStart(t) => format!("<start-{}>", t.token_name()),
            SpecialToken::FieldEnd(t) => format!("<end-{}>", t.token_name()),
            SpecialToken::Category(c) => format!("<|{}|>", c.as_str()),
        }
    }

    pub fn from_literal(s: &str) -> Option<SpecialToken> {
        literal_table().get(s).copied()
    }

    pub fn is_boundary(&self) -> bool {
        matches!(self, SpecialToken::FieldStart(_) | SpecialToken::FieldEnd(_))
    }
}

impl fmt::Display for SpecialToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.literal())
    }
}

fn literal_table() -> &'static HashMap<String, SpecialToken> {
    static TABLE: OnceLock<HashMap<String, SpecialToken>> = OnceLock::new();
    TABLE.get_or_init(|| SpecialToken::all().iter().map(|t| (t.literal(), *t)).collect())
}

const MAX_LITERAL_LEN: usize = 24;

/// Reserved literals in `text`, left to right, as `(start, end, token)`.
pub fn find_special_tokens(text: &str) -> Vec<(usize, usize, SpecialToken)> {
    let table = literal_table();
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'<' {
            let limit = (i + MAX_LITERAL_LEN).min(bytes.len());
            if let Some(rel) = bytes[i + 1..limit].iter().position(|&b| b == b'>' || b == b'<') {
                let j = i + 1 + rel;
                if bytes[j] == b'>' {
                    if let Some(tok) = text.get(i..=j).and_then(|s| table.get(s)) {
                        out.push((i, j + 1, *tok));
                        i = j + 1;
                        continue;
                    }
                }
            }
        }
        i += 1;
    }
    out
}

pub fn contains_special_literal(text: &str) -> bool {
    text.contains('<') && !find_special_tokens(text).is_empty()
}

/// Which text fields receive category tokens. Metadata is never annotated.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationScope(BTreeSet<FieldTag>);

impl AnnotationScope {
    pub fn none() -> Self {
        AnnotationScope(BTreeSet::new())
    }

    pub fn body() -> Self {
        AnnotationScope([FieldTag::Body].into_iter().collect())
    }

    /// Title, caption, summary and body.
    pub fn narrative() -> Self {
        AnnotationScope([FieldTag::Title, FieldTag::Caption, FieldTag::Summary, FieldTag::Body].into_iter().collect())
    }

    pub fn with(fields: impl IntoIterator<Item = FieldTag>) -> Self {
        AnnotationScope(fields.into_iter().filter(|f| !f.is_metadata() && *f != FieldTag::NamedEntity).collect())
    }

    pub fn includes(&self, f: FieldTag) -> bool {
        !f.is_metadata() && self.0.contains(&f)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn fields(&self) -> impl Iterator<Item = FieldTag> + '_ {
        self.0.iter().copied()
    }
}

/// Inserts ` <|CAT|>` right after each mention.
pub fn annotate(text: &str, spans: &[EntitySpan]) -> Result<String, SerializerError> {
    let mut sorted: Vec<&EntitySpan> = spans.iter().collect();
    sorted.sort_by_key(|s| (s.start, s.end));
    let mut last_end = 0;
    for s in &sorted {
        if s.start >= s.end || s.end > text.len() {
            return Err(SerializerError::Contract(format!("span [{}, {}) out of range", s.start, s.end)));
        }
        if !text.is_char_boundary(s.start) || !text.is_char_boundary(s.end) {
            return Err(SerializerError::Contract(format!("span [{}, {}) splits a character", s.start, s.end)));
        }
        if s.start < last_end {
            return Err(SerializerError::Contract(format!("span [{}, {}) overlaps its predecessor", s.start, s.end)));
        }
        last_end = s.end;
    }
    let mut out = text.to_string();
    for s in sorted.iter().rev() {
        out.insert_str(s.end, &format!(" {}", SpecialToken::Category(s.category).literal()));
    }
    Ok(out)
}

/// Removes every ` <|CAT|>` annotation.
pub fn strip_annotations(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    for (start, end, tok) in find_special_tokens(text) {
        if let SpecialToken::Category(_) = tok {
            if start > cursor && text.as_bytes()[start - 1] == b' ' {
                out.push_str(&text[cursor..start - 1]);
                cursor = end;
            }
        }
    }
    out.push_str(&text[cursor..]);
    out
}

/// `surface <|CAT|>` entries joined by `; `.
pub fn render_entity_list(entities: &EntityList) -> String {
    entities
        .entries()
        .iter()
        .map(|e| format!("{} {}", e.surface, SpecialToken::Category(e.category).literal()))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Inverse of [`render_entity_list`].
pub fn parse_entity_list(text: &str) -> EntityList {
    let mut out = Vec::new();
    for part in text.split("; ") {
        let toks = find_special_tokens(part);
        if let Some(&(start, _, SpecialToken::Category(c))) = toks.last() {
            let surface = part[..start].trim_end();
            if !surface.is_empty() {
                out.push((surface.to_string(), c));
            }
        }
    }
    EntityList::from_pairs(out)
}

/// A serialized article plus what went into it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedDocument {
    pub id: String,
    /// Field contents in serialization order (annotated where applicable).
    pub fields: Vec<(FieldTag, String)>,
    pub serialized: String,
    pub order: CanonicalOrder,
    pub entities: EntityList,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

/// Serializes `article` in `order`. Spans of fields inside `scope` are annotated.
pub fn serialize(
    article: &Article,
    order: &CanonicalOrder,
    entities: &EntityList,
    spans: &[EntitySpan],
    scope: &AnnotationScope,
) -> Result<AnnotatedDocument, SerializerError> {
    if order.fields().last() != Some(&FieldTag::Body) {
        return Err(SerializerError::Contract("order must end with body".into()));
    }
    let mut fields = Vec::new();
    for &tag in order.fields() {
        let content = if tag == FieldTag::NamedEntity {
            if entities.is_empty() {
                continue;
            }
            render_entity_list(entities)
        } else {
            let Some(text) = article.field(tag) else { continue };
            if scope.includes(tag) {
                let field_spans: Vec<EntitySpan> = spans.iter().filter(|s| s.field == tag).cloned().collect();
                annotate(text, &field_spans)?
            } else {
                text.to_string()
            }
        };
        fields.push((tag, content));
    }
    let serialized = fields
        .iter()
        .map(|(tag, c)| {
            format!("{} {} {}", SpecialToken::FieldStart(*tag).literal(), c, SpecialToken::FieldEnd(*tag).literal())
        })
        .collect::<Vec<_>>()
        .join(" ");
    Ok(AnnotatedDocument {
        id: article.id.clone(),
        fields,
        serialized,
        order: order.clone(),
        entities: entities.clone(),
        k: None,
    })
}

/// Serialized prefix used to condition generation: every field before body,
/// followed by `<start-body>`.
pub fn generation_context(doc: &AnnotatedDocument) -> String {
    let mut s: String = doc
        .fields
        .iter()
        .filter(|(t, _)| *t != FieldTag::Body)
        .map(|(tag, c)| {
            format!("{} {} {} ", SpecialToken::FieldStart(*tag).literal(), c, SpecialToken::FieldEnd(*tag).literal())
        })
        .collect();
    s.push_str(&SpecialToken::FieldStart(FieldTag::Body).literal());
    s
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParsedDocument {
    pub fields: BTreeMap<FieldTag, String>,
    /// Set when the stream ended inside this field.
    pub truncated: Option<FieldTag>,
}

/// Recovers field contents from a (possibly truncated) stream.
pub fn parse_generated(stream: &str) -> Result<ParsedDocument, SerializerError> {
    fn trim_pad(s: &str) -> &str {
        let s = s.strip_prefix(' ').unwrap_or(s);
        s.strip_suffix(' ').unwrap_or(s)
    }
    let mut out = ParsedDocument::default();
    let mut open: Option<(FieldTag, usize)> = None;
    for (start, end, tok) in find_special_tokens(stream) {
        match tok {
            SpecialToken::FieldStart(t) => {
                if let Some((o, _)) = open {
                    return Err(SerializerError::Parse {
                        offset: start,
                        message: format!("<start-{}> while <start-{}> is still open", t.token_name(), o.token_name()),
                    });
                }
                open = Some((t, end));
            }
            SpecialToken::FieldEnd(t) => match open {
                Some((o, from)) if o == t => {
                    out.fields.entry(t).or_insert_with(|| trim_pad(&stream[from..start]).to_string());
                    open = None;
                }
                _ => {
                    return Err(SerializerError::Parse {
                        offset: start,
                        message: format!("<end-{}> without a matching start", t.token_name()),
                    })
                }
            },
            SpecialToken::Eod => {
                if let Some((o, from)) = open.take() {
                    out.fields.entry(o).or_insert_with(|| trim_pad(&stream[from..start]).to_string());
                    out.truncated = Some(o);
                }
                return Ok(out);
            }
            _ => {}
        }
    }
    if let Some((o, from)) = open {
        let rest = &stream[from..];
        out.fields.entry(o).or_insert_with(|| rest.strip_prefix(' ').unwrap_or(rest).to_string());
        out.truncated = Some(o);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::canonical_order;
    use proptest::prelude::*;

    fn span(field: FieldTag, text: &str, surface: &str, category: EntityCategory) -> EntitySpan {
        let start = text.find(surface).unwrap();
        EntitySpan { field, start, end: start + surface.len(), surface: surface.into(), category }
    }

    #[test]
    fn literals_are_distinct_and_roundtrip() {
        let all = SpecialToken::all();
        assert_eq!(all.len(), 3 + 16 + 18);
        let lits: BTreeSet<String> = all.iter().map(|t| t.literal()).collect();
        assert_eq!(lits.len(), all.len());
        for t in all {
            assert_eq!(SpecialToken::from_literal(&t.literal()), Some(*t));
        }
        assert_eq!(SpecialToken::FieldStart(FieldTag::NamedEntity).literal(), "<start-entity>");
        assert_eq!(SpecialToken::Category(EntityCategory::WorkOfArt).literal(), "<|WORK_OF_ART|>");
    }

    #[test]
    fn annotate_inserts_after_mention() {
        let t = "Stephen Curry scored.";
        let s = span(FieldTag::Body, t, "Stephen Curry", EntityCategory::Person);
        assert_eq!(annotate(t, &[s]).unwrap(), "Stephen Curry <|PERSON|> scored.");
        assert_eq!(annotate(t, &[]).unwrap(), t);
    }

    #[test]
    fn annotate_two_spans_keeps_order() {
        let t = "Alki hired Bram today.";
        let a = span(FieldTag::Body, t, "Alki", EntityCategory::Org);
        let b = span(FieldTag::Body, t, "Bram", EntityCategory::Person);
        assert_eq!(annotate(t, &[b, a]).unwrap(), "Alki <|ORG|> hired Bram <|PERSON|> today.");
    }

    #[test]
    fn annotate_rejects_bad_spans() {
        let t = "abcdef";
        let mk = |s, e| EntitySpan { field: FieldTag::Body, start: s, end: e, surface: String::new(), category: EntityCategory::Org };
        assert!(annotate(t, &[mk(0, 9)]).is_err());
        assert!(annotate(t, &[mk(0, 3), mk(2, 4)]).is_err());
        assert!(annotate(t, &[mk(3, 3)]).is_err());
        assert!(annotate("é", &[mk(0, 1)]).is_err());
    }

    #[test]
    fn strip_removes_category_tokens() {
        assert_eq!(strip_annotations("Alki <|ORG|> chair"), "Alki chair");
        assert_eq!(strip_annotations("plain text"), "plain text");
        assert_eq!(strip_annotations("x <start-body> y"), "x <start-body> y");
        assert_eq!(strip_annotations("A <|PERSON|>; B <|ORG|>"), "A; B");
    }

    #[test]
    fn serialize_concatenates_fields() {
        let a = Article::new("a", "Hi.").with_field(FieldTag::Domain, "nytimes.com");
        let o = CanonicalOrder::new(vec![FieldTag::Domain, FieldTag::Body]).unwrap();
        let d = serialize(&a, &o, &EntityList::new(), &[], &AnnotationScope::none()).unwrap();
        assert_eq!(d.serialized, "<start-domain> nytimes.com <end-domain> <start-body> Hi. <end-body>");
    }

    #[test]
    fn entity_field_rendering() {
        let a = Article::new("a", "Alki chair.");
        let o = canonical_order("goodnews").unwrap();
        let e = EntityList::from_pairs([("Alki", EntityCategory::Org)]);
        let d = serialize(&a, &o, &e, &[], &AnnotationScope::none()).unwrap();
        assert_eq!(d.fields[0], (FieldTag::NamedEntity, "Alki <|ORG|>".to_string()));
        assert_eq!(parse_entity_list("Alki <|ORG|>; New York <|GPE|>").len(), 2);
    }

    #[test]
    fn metadata_never_annotated() {
        let a = Article::new("a", "Alki chair.").with_field(FieldTag::Domain, "Alki");
        let spans = vec![
            EntitySpan { field: FieldTag::Domain, start: 0, end: 4, surface: "Alki".into(), category: EntityCategory::Org },
            EntitySpan { field: FieldTag::Body, start: 0, end: 4, surface: "Alki".into(), category: EntityCategory::Org },
        ];
        let scope = AnnotationScope::with(FieldTag::ALL);
        let o = CanonicalOrder::new(vec![FieldTag::Domain, FieldTag::Body]).unwrap();
        let d = serialize(&a, &o, &EntityList::new(), &spans, &scope).unwrap();
        assert_eq!(d.serialized, "<start-domain> Alki <end-domain> <start-body> Alki <|ORG|> chair. <end-body>");
    }

    #[test]
    fn different_orders_permute_blocks() {
        let a = Article::new("a", "B.").with_field(FieldTag::Title, "T").with_field(FieldTag::Date, "2020");
        let o1 = CanonicalOrder::new(vec![FieldTag::Date, FieldTag::Title, FieldTag::Body]).unwrap();
        let o2 = CanonicalOrder::new(vec![FieldTag::Title, FieldTag::Date, FieldTag::Body]).unwrap();
        let d1 = serialize(&a, &o1, &EntityList::new(), &[], &AnnotationScope::none()).unwrap();
        let d2 = serialize(&a, &o2, &EntityList::new(), &[], &AnnotationScope::none()).unwrap();
        assert_ne!(d1.serialized, d2.serialized);
        let mut b1 = d1.fields.clone();
        let mut b2 = d2.fields.clone();
        b1.sort();
        b2.sort();
        assert_eq!(b1, b2);
    }

    #[test]
    fn parse_round_trip_and_errors() {
        let a = Article::new("a", " odd  spacing ").with_field(FieldTag::Title, "T");
        let o = canonical_order("goodnews").unwrap();
        let e = EntityList::from_pairs([("X", EntityCategory::Person)]);
        let d = serialize(&a, &o, &e, &[], &AnnotationScope::none()).unwrap();
        let p = parse_generated(&d.serialized).unwrap();
        assert_eq!(p.truncated, None);
        assert_eq!(p.fields.get(&FieldTag::Body).unwrap(), " odd  spacing ");
        assert_eq!(p.fields.get(&FieldTag::NamedEntity).unwrap(), "X <|PERSON|>");

        let p = parse_generated("<start-title> T <end-title> <start-body> half a sent").unwrap();
        assert_eq!(p.truncated, Some(FieldTag::Body));
        assert_eq!(p.fields[&FieldTag::Body], "half a sent");

        match parse_generated("<end-body> x <start-body>") {
            Err(SerializerError::Parse { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("{other:?}"),
        }
        assert!(parse_generated("<start-title> a <start-body> b").is_err());
        assert!(parse_generated("<start-title> a <end-body>").is_err());
    }

    #[test]
    fn generation_context_ends_at_body_start() {
        let a = Article::new("a", "B.").with_field(FieldTag::Title, "T");
        let o = canonical_order("goodnews").unwrap();
        let d = serialize(&a, &o, &EntityList::new(), &[], &AnnotationScope::none()).unwrap();
        let ctx = generation_context(&d);
        assert_eq!(ctx, "<start-title> T <end-title> <start-body>");
        assert!(d.serialized.starts_with(&ctx));
    }

    fn arb_text() -> impl Strategy<Value = String> {
        proptest::collection::vec(prop_oneof!["[a-zA-Z]{1,8}", "[ .,;<>|é-]{1,2}"], 1..12).prop_map(|v| v.concat())
    }

    proptest! {
        #[test]
        fn strip_inverts_annotate(words in proptest::collection::vec("[A-Za-z]{1,6}", 1..20), picks in proptest::collection::vec(any::<bool>(), 20), cats in proptest::collection::vec(0usize..18, 20)) {
            let text = words.join(" ");
            let mut spans = Vec::new();
            let mut off = 0;
            for (i, w) in words.iter().enumerate() {
                if picks[i] {
                    spans.push(EntitySpan { field: FieldTag::Body, start: off, end: off + w.len(), surface: w.clone(), category: EntityCategory::ALL[cats[i]] });
                }
                off += w.len() + 1;
            }
            let ann = annotate(&text, &spans).unwrap();
            prop_assert_eq!(find_special_tokens(&ann).len(), spans.len());
            prop_assert_eq!(strip_annotations(&ann), text);
        }

        #[test]
        fn parse_inverts_serialize(body in arb_text(), title in proptest::option::of(arb_text()), date in proptest::option::of(arb_text())) {
            prop_assume!(!contains_special_literal(&body));
            let mut a = Article::new("p", body.clone());
            if let Some(t) = &title { prop_assume!(!contains_special_literal(t)); a.set_field(FieldTag::Title, t.clone()); }
            if let Some(d) = &date { prop_assume!(!contains_special_literal(d)); a.set_field(FieldTag::Date, d.clone()); }
            let o = canonical_order("visualnews").unwrap();
            let d = serialize(&a, &o, &EntityList::new(), &[], &AnnotationScope::none()).unwrap();
            let p = parse_generated(&d.serialized).unwrap();
            prop_assert_eq!(p.fields, a.fields.clone());
        }
    }
}
