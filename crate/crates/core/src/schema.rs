//! Attribute taxonomy, the IOB2 tag alphabet, and conversion between tag
//! sequences and typed entity spans.

use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The shipped attribute set, in declaration order.
pub const CANONICAL_KINDS: [&str; 17] = [
    "Brand",
    "Color",
    "Size",
    "Material",
    "Price Range",
    "Gender",
    "Age Group",
    "Condition",
    "Location",
    "Ingredients",
    "Dietary Preferences",
    "Cuisine Type",
    "Flavor",
    "Nutritional Information",
    "Deal",
    "Product Type",
    "Package",
];

const PRODUCT_TYPE_SUFFIX: &str = "(product_type)";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchemaError {
    #[error("duplicate attribute kind {0:?}")]
    DuplicateKind(String),
    #[error("more than one product-type kind ({0:?} and {1:?})")]
    MultipleProductTypes(String, String),
    #[error("empty attribute name on line {0}")]
    EmptyName(usize),
    #[error("attribute name {0:?} contains '_'")]
    ReservedCharacter(String),
    #[error("tags and tokens differ in length ({tags} vs {tokens})")]
    LengthMismatch { tokens: usize, tags: usize },
    #[error("invalid IOB2 transition at position {0}: I- tag without a preceding B-/I- of the same kind")]
    InvalidTransition(usize),
    #[error("spans overlap at token {0}")]
    OverlappingSpans(usize),
    #[error("span {start}..{end} out of bounds for {len} tokens")]
    SpanOutOfBounds { start: usize, end: usize, len: usize },
    #[error("unknown tag {0:?}")]
    UnknownTag(String),
    #[error("io error reading schema: {0}")]
    Io(String),
}

/// Index of an attribute kind within its [`Schema`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct KindId(pub u16);

impl KindId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeKind {
    pub name: String,
    pub is_product_type: bool,
}

/// An ordered, immutable set of attribute kinds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    kinds: Vec<AttributeKind>,
}

impl Schema {
    /// Builds a schema from `(name, is_product_type)` entries.
    ///
    /// Names must be unique and at most one kind may be the product type.
    pub fn new<I, S>(kinds: I) -> Result<Self, SchemaError>
    where
        I: IntoIterator<Item = (S, bool)>,
        S: Into<String>,
    {
        let mut out: Vec<AttributeKind> = Vec::new();
        for (name, is_product_type) in kinds {
            let name = name.into();
            if name.contains('_') {
                return Err(SchemaError::ReservedCharacter(name));
            }
            if out.iter().any(|k| k.name == name) {
                return Err(SchemaError::DuplicateKind(name));
            }
            if is_product_type {
                if let Some(prev) = out.iter().find(|k| k.is_product_type) {
                    return Err(SchemaError::MultipleProductTypes(prev.name.clone(), name));
                }
            }
            out.push(AttributeKind { name, is_product_type });
        }
        Ok(Schema { kinds: out })
    }

    /// The 17-kind e-commerce schema with `Product Type` as the product-type kind.
    pub fn canonical() -> Self {
        Schema::new(CANONICAL_KINDS.iter().map(|&name| (name, name == "Product Type")))
            .expect("canonical schema is valid")
    }

    pub fn empty() -> Self {
        Schema { kinds: Vec::new() }
    }

    /// Parses the schema file format: one attribute name per line, with an
    /// optional `(product_type)` suffix. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, SchemaError> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, pt) = match line.strip_suffix(PRODUCT_TYPE_SUFFIX) {
                Some(rest) => (rest.trim(), true),
                None => (line, false),
            };
            if name.is_empty() {
                return Err(SchemaError::EmptyName(lineno + 1));
            }
            entries.push((name.to_string(), pt));
        }
        Schema::new(entries)
    }

    pub fn read<R: BufRead>(mut reader: R) -> Result<Self, SchemaError> {
        let mut text = String::new();
        reader
            .read_to_string(&mut text)
            .map_err(|e| SchemaError::Io(e.to_string()))?;
        Schema::parse(&text)
    }

    /// Renders the schema file format; `parse(render(s)) == s`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for k in &self.kinds {
            out.push_str(&k.name);
            if k.is_product_type {
                out.push(' ');
                out.push_str(PRODUCT_TYPE_SUFFIX);
            }
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn kinds(&self) -> &[AttributeKind] {
        &self.kinds
    }

    pub fn kind(&self, id: KindId) -> &AttributeKind {
        &self.kinds[id.index()]
    }

    pub fn name(&self, id: KindId) -> &str {
        &self.kinds[id.index()].name
    }

    pub fn ids(&self) -> impl Iterator<Item = KindId> + '_ {
        (0..self.kinds.len()).map(|i| KindId(i as u16))
    }

    /// Exact (case-sensitive) lookup.
    pub fn lookup(&self, name: &str) -> Option<KindId> {
        self.kinds.iter().position(|k| k.name == name).map(|i| KindId(i as u16))
    }

    /// Case-insensitive lookup, used when matching free text from annotators.
    pub fn lookup_ci(&self, name: &str) -> Option<KindId> {
        self.kinds
            .iter()
            .position(|k| k.name.eq_ignore_ascii_case(name))
            .map(|i| KindId(i as u16))
    }

    pub fn product_type(&self) -> Option<KindId> {
        self.kinds
            .iter()
            .position(|k| k.is_product_type)
            .map(|i| KindId(i as u16))
    }

    pub fn is_product_type(&self, id: KindId) -> bool {
        self.kinds[id.index()].is_product_type
    }

    /// Appends a kind if absent and returns its id.
    pub(crate) fn intern(&mut self, name: &str) -> KindId {
        if let Some(id) = self.lookup(name) {
            return id;
        }
        self.kinds.push(AttributeKind {
            name: name.to_string(),
            is_product_type: false,
        });
        KindId((self.kinds.len() - 1) as u16)
    }

    /// Number of tags in the IOB2 alphabet: `2 * kinds + 1`.
    pub fn tag_count(&self) -> usize {
        2 * self.kinds.len() + 1
    }

    /// `O` first, then `B-k`, `I-k` pairs in declaration order.
    pub fn tag_alphabet(&self) -> Vec<TagLabel> {
        (0..self.tag_count()).map(TagLabel::from_index).collect()
    }

    /// Serialized tag name, with spaces in kind names replaced by `_`.
    pub fn tag_name(&self, tag: TagLabel) -> String {
        match tag {
            TagLabel::O => "O".to_string(),
            TagLabel::B(k) => format!("B-{}", self.name(k).replace(' ', "_")),
            TagLabel::I(k) => format!("I-{}", self.name(k).replace(' ', "_")),
        }
    }

    pub fn parse_tag(&self, text: &str) -> Result<TagLabel, SchemaError> {
        let (prefix, kind) = split_tag(text)?;
        if let TagPrefix::O = prefix {
            return Ok(TagLabel::O);
        }
        let id = self
            .lookup(&kind)
            .ok_or_else(|| SchemaError::UnknownTag(text.to_string()))?;
        Ok(prefix.with_kind(id))
    }

    /// Like [`Schema::parse_tag`] but adds unseen kinds to the schema.
    pub(crate) fn parse_tag_open(&mut self, text: &str) -> Result<TagLabel, SchemaError> {
        let (prefix, kind) = split_tag(text)?;
        if let TagPrefix::O = prefix {
            return Ok(TagLabel::O);
        }
        let id = self.intern(&kind);
        Ok(prefix.with_kind(id))
    }
}

enum TagPrefix {
    O,
    B,
    I,
}

impl TagPrefix {
    fn with_kind(self, k: KindId) -> TagLabel {
        match self {
            TagPrefix::O => TagLabel::O,
            TagPrefix::B => TagLabel::B(k),
            TagPrefix::I => TagLabel::I(k),
        }
    }
}

fn split_tag(text: &str) -> Result<(TagPrefix, String), SchemaError> {
    if text == "O" {
        return Ok((TagPrefix::O, String::new()));
    }
    let prefix = match text.get(..2) {
        Some("B-") => TagPrefix::B,
        Some("I-") => TagPrefix::I,
        _ => return Err(SchemaError::UnknownTag(text.to_string())),
    };
    let kind = &text[2..];
    if kind.is_empty() {
        return Err(SchemaError::UnknownTag(text.to_string()));
    }
    Ok((prefix, kind.replace('_', " ")))
}

/// One IOB2 tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TagLabel {
    O,
    B(KindId),
    I(KindId),
}

impl TagLabel {
    /// Position in the schema's tag alphabet.
    pub fn index(self) -> usize {
        match self {
            TagLabel::O => 0,
            TagLabel::B(k) => 1 + 2 * k.index(),
            TagLabel::I(k) => 2 + 2 * k.index(),
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            TagLabel::O
        } else {
            let k = KindId(((i - 1) / 2) as u16);
            if i % 2 == 1 {
                TagLabel::B(k)
            } else {
                TagLabel::I(k)
            }
        }
    }

    pub fn kind(self) -> Option<KindId> {
        match self {
            TagLabel::O => None,
            TagLabel::B(k) | TagLabel::I(k) => Some(k),
        }
    }
}

/// A typed, inclusive token range.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EntitySpan {
    pub kind: KindId,
    pub start: usize,
    pub end: usize,
    pub value: String,
}

impl EntitySpan {
    pub fn new(kind: KindId, start: usize, end: usize, tokens: &[String]) -> Self {
        EntitySpan {
            kind,
            start,
            end,
            value: tokens[start..=end].join(" "),
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Token gap between two non-overlapping spans; 0 when they overlap.
    pub fn distance(&self, other: &EntitySpan) -> usize {
        if self.end < other.start {
            other.start - self.end
        } else {
            self.start.saturating_sub(other.end)
        }
    }
}

impl fmt::Display for EntitySpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}:{:?}@{}..{}", self.kind.0, self.value, self.start, self.end)
    }
}

/// Whitespace tokenization; original casing is kept.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

/// Returns the first position where `tags` is not IOB2-valid.
pub fn first_invalid(tags: &[TagLabel]) -> Option<usize> {
    let mut prev = TagLabel::O;
    for (i, &t) in tags.iter().enumerate() {
        if let TagLabel::I(k) = t {
            if prev.kind() != Some(k) {
                return Some(i);
            }
        }
        prev = t;
    }
    None
}

/// Rewrites every orphan `I-k` (one not continuing a `k` entity) to `B-k`.
pub fn repair_iob2(tags: &mut [TagLabel]) {
    let mut prev = TagLabel::O;
    for t in tags.iter_mut() {
        if let TagLabel::I(k) = *t {
            if prev.kind() != Some(k) {
                *t = TagLabel::B(k);
            }
        }
        prev = *t;
    }
}

/// Collapses maximal `B I*` runs into spans, sorted by start.
pub fn spans_from_tags(tokens: &[String], tags: &[TagLabel]) -> Result<Vec<EntitySpan>, SchemaError> {
    if tokens.len() != tags.len() {
        return Err(SchemaError::LengthMismatch {
            tokens: tokens.len(),
            tags: tags.len(),
        });
    }
    if let Some(i) = first_invalid(tags) {
        return Err(SchemaError::InvalidTransition(i));
    }
    let mut spans = Vec::new();
    let mut open: Option<(KindId, usize)> = None;
    for (i, &t) in tags.iter().enumerate() {
        match t {
            TagLabel::I(_) => continue,
            TagLabel::B(k) => {
                if let Some((ok, s)) = open.take() {
                    spans.push(EntitySpan::new(ok, s, i - 1, tokens));
                }
                open = Some((k, i));
            }
            TagLabel::O => {
                if let Some((ok, s)) = open.take() {
                    spans.push(EntitySpan::new(ok, s, i - 1, tokens));
                }
            }
        }
    }
    if let Some((k, s)) = open {
        spans.push(EntitySpan::new(k, s, tags.len() - 1, tokens));
    }
    Ok(spans)
}

/// Inverse of [`spans_from_tags`]; positions not covered by a span are `O`.
pub fn tags_from_spans(tokens: &[String], spans: &[EntitySpan]) -> Result<Vec<TagLabel>, SchemaError> {
    let mut tags = vec![TagLabel::O; tokens.len()];
    let mut covered = vec![false; tokens.len()];
    for span in spans {
        if span.start > span.end || span.end >= tokens.len() {
            return Err(SchemaError::SpanOutOfBounds {
                start: span.start,
                end: span.end,
                len: tokens.len(),
            });
        }
        for i in span.start..=span.end {
            if covered[i] {
                return Err(SchemaError::OverlappingSpans(i));
            }
            covered[i] = true;
            tags[i] = if i == span.start {
                TagLabel::B(span.kind)
            } else {
                TagLabel::I(span.kind)
            };
        }
    }
    Ok(tags)
}

/// Token auxiliary columns carried through from CoNLL input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenAux {
    pub pos: String,
    pub chunk: String,
}

/// A tokenized query with an IOB2-valid tag sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedQuery {
    tokens: Vec<String>,
    tags: Vec<TagLabel>,
    aux: Option<Vec<TokenAux>>,
}

impl TaggedQuery {
    pub fn new(tokens: Vec<String>, tags: Vec<TagLabel>) -> Result<Self, SchemaError> {
        if tokens.len() != tags.len() {
            return Err(SchemaError::LengthMismatch {
                tokens: tokens.len(),
                tags: tags.len(),
            });
        }
        if let Some(i) = first_invalid(&tags) {
            return Err(SchemaError::InvalidTransition(i));
        }
        Ok(TaggedQuery {
            tokens,
            tags,
            aux: None,
        })
    }

    pub fn from_spans(tokens: Vec<String>, spans: &[EntitySpan]) -> Result<Self, SchemaError> {
        let tags = tags_from_spans(&tokens, spans)?;
        TaggedQuery::new(tokens, tags)
    }

    pub fn with_aux(mut self, aux: Vec<TokenAux>) -> Result<Self, SchemaError> {
        if aux.len() != self.tokens.len() {
            return Err(SchemaError::LengthMismatch {
                tokens: self.tokens.len(),
                tags: aux.len(),
            });
        }
        self.aux = Some(aux);
        Ok(self)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn tags(&self) -> &[TagLabel] {
        &self.tags
    }

    pub fn aux(&self) -> Option<&[TokenAux]> {
        self.aux.as_deref()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn spans(&self) -> Vec<EntitySpan> {
        spans_from_tags(&self.tokens, &self.tags).expect("TaggedQuery tags are IOB2-valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn canonical_alphabet_has_35_labels() {
        let s = Schema::canonical();
        assert_eq!(s.len(), 17);
        assert_eq!(s.tag_alphabet().len(), 35);
        assert_eq!(s.kinds().iter().filter(|k| k.is_product_type).count(), 1);
        assert_eq!(s.name(s.product_type().unwrap()), "Product Type");
    }

    #[test]
    fn single_and_empty_schema_alphabets() {
        let s = Schema::new([("Color", false)]).unwrap();
        let names: Vec<_> = s.tag_alphabet().into_iter().map(|t| s.tag_name(t)).collect();
        assert_eq!(names, ["O", "B-Color", "I-Color"]);
        assert_eq!(Schema::empty().tag_alphabet(), vec![TagLabel::O]);
    }

    #[test]
    fn tag_index_round_trip() {
        for i in 0..35 {
            assert_eq!(TagLabel::from_index(i).index(), i);
        }
    }

    #[test]
    fn underscore_serialization() {
        let s = Schema::canonical();
        let pr = s.lookup("Price Range").unwrap();
        assert_eq!(s.tag_name(TagLabel::B(pr)), "B-Price_Range");
        assert_eq!(s.parse_tag("I-Price_Range").unwrap(), TagLabel::I(pr));
        assert!(matches!(s.parse_tag("B-Aroma"), Err(SchemaError::UnknownTag(_))));
        assert!(matches!(s.parse_tag("X-Color"), Err(SchemaError::UnknownTag(_))));
    }

    #[test]
    fn schema_file_round_trip() {
        let s = Schema::canonical();
        assert_eq!(Schema::parse(&s.render()).unwrap(), s);
        let custom = Schema::parse("# kinds\nColor\n\nCategory (product_type)\n").unwrap();
        assert_eq!(custom.len(), 2);
        assert_eq!(custom.product_type(), Some(KindId(1)));
        assert!(matches!(
            Schema::parse("A (product_type)\nB (product_type)\n"),
            Err(SchemaError::MultipleProductTypes(..))
        ));
        assert!(matches!(Schema::parse("A\nA\n"), Err(SchemaError::DuplicateKind(_))));
    }

    #[test]
    fn spans_from_tshirt_query() {
        let s = Schema::canonical();
        let tokens = toks("a large red woman t-shirt");
        let tags: Vec<_> = ["O", "B-Size", "B-Color", "B-Gender", "B-Product_Type"]
            .iter()
            .map(|t| s.parse_tag(t).unwrap())
            .collect();
        let spans = spans_from_tags(&tokens, &tags).unwrap();
        let got: Vec<_> = spans
            .iter()
            .map(|sp| (s.name(sp.kind), sp.value.as_str(), sp.start, sp.end))
            .collect();
        assert_eq!(
            got,
            [
                ("Size", "large", 1, 1),
                ("Color", "red", 2, 2),
                ("Gender", "woman", 3, 3),
                ("Product Type", "t-shirt", 4, 4)
            ]
        );
    }

    #[test]
    fn multi_token_flavor_span() {
        let s = Schema::canonical();
        let fl = s.lookup("Flavor").unwrap();
        let tokens = toks("blackened chicken alfredo");
        let tags = vec![TagLabel::B(fl), TagLabel::I(fl), TagLabel::I(fl)];
        let spans = spans_from_tags(&tokens, &tags).unwrap();
        assert_eq!(spans, vec![EntitySpan::new(fl, 0, 2, &tokens)]);
        assert_eq!(spans[0].value, "blackened chicken alfredo");
        assert_eq!(tags_from_spans(&tokens, &spans).unwrap(), tags);
    }

    #[test]
    fn all_o_and_errors() {
        let tokens = toks("x y z");
        assert!(spans_from_tags(&tokens, &[TagLabel::O; 3]).unwrap().is_empty());
        assert_eq!(tags_from_spans(&tokens, &[]).unwrap(), vec![TagLabel::O; 3]);
        assert!(matches!(
            spans_from_tags(&tokens, &[TagLabel::O; 2]),
            Err(SchemaError::LengthMismatch { .. })
        ));
        let k = KindId(0);
        assert_eq!(
            spans_from_tags(&tokens, &[TagLabel::O, TagLabel::I(k), TagLabel::O]),
            Err(SchemaError::InvalidTransition(1))
        );
        assert_eq!(
            spans_from_tags(&tokens, &[TagLabel::B(KindId(1)), TagLabel::I(k), TagLabel::O]),
            Err(SchemaError::InvalidTransition(1))
        );
        let a = EntitySpan::new(k, 0, 1, &tokens);
        let b = EntitySpan::new(k, 1, 2, &tokens);
        assert_eq!(tags_from_spans(&tokens, &[a, b]), Err(SchemaError::OverlappingSpans(1)));
        let oob = EntitySpan {
            kind: k,
            start: 2,
            end: 3,
            value: String::new(),
        };
        assert!(matches!(
            tags_from_spans(&tokens, &[oob]),
            Err(SchemaError::SpanOutOfBounds { .. })
        ));
    }

    #[test]
    fn adjacent_same_kind_spans_stay_separate() {
        let tokens = toks("red blue");
        let k = KindId(1);
        let spans = vec![EntitySpan::new(k, 0, 0, &tokens), EntitySpan::new(k, 1, 1, &tokens)];
        let tags = tags_from_spans(&tokens, &spans).unwrap();
        assert_eq!(tags, vec![TagLabel::B(k), TagLabel::B(k)]);
        assert_eq!(spans_from_tags(&tokens, &tags).unwrap(), spans);
    }

    #[test]
    fn repair_turns_orphans_into_begins() {
        let k = KindId(2);
        let j = KindId(3);
        let mut tags = vec![
            TagLabel::I(k),
            TagLabel::I(k),
            TagLabel::I(j),
            TagLabel::O,
            TagLabel::I(k),
        ];
        repair_iob2(&mut tags);
        assert_eq!(
            tags,
            vec![
                TagLabel::B(k),
                TagLabel::I(k),
                TagLabel::B(j),
                TagLabel::O,
                TagLabel::B(k)
            ]
        );
        assert_eq!(first_invalid(&tags), None);
    }

    /// Random non-overlapping span sets over `n` tokens.
    pub(crate) fn arb_spans(kinds: u16) -> impl Strategy<Value = (Vec<String>, Vec<EntitySpan>)> {
        (1usize..12).prop_flat_map(move |n| {
            let cells = proptest::collection::vec((0u8..3, 0..kinds), n);
            cells.prop_map(move |cells| {
                let tokens: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
                let mut spans = Vec::new();
                let mut i = 0;
                while i < n {
                    let (len_code, kind) = cells[i];
                    if len_code == 0 {
                        i += 1;
                        continue;
                    }
                    let end = (i + len_code as usize - 1).min(n - 1);
                    spans.push(EntitySpan::new(KindId(kind), i, end, &tokens));
                    i = end + 1;
                }
                (tokens, spans)
            })
        })
    }

    proptest! {
        #[test]
        fn spans_tags_round_trip((tokens, spans) in arb_spans(17)) {
            let tags = tags_from_spans(&tokens, &spans).unwrap();
            let back = spans_from_tags(&tokens, &tags).unwrap();
            prop_assert_eq!(&back, &spans);
            for w in back.windows(2) {
                prop_assert!(w[0].end < w[1].start);
            }
        }

        #[test]
        fn alphabet_size_law(n in 0usize..40) {
            let s = Schema::new((0..n).map(|i| (format!("K{i}"), false))).unwrap();
            prop_assert_eq!(s.tag_alphabet().len(), 2 * n + 1);
        }
    }
}
