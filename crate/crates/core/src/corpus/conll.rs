use std::io::BufRead;

use super::CorpusError;
use crate::schema::{first_invalid, Schema, SchemaError, TagLabel, TaggedQuery, TokenAux};

const MISSING: &str = "-X-";

struct RawSentence {
    tokens: Vec<String>,
    tags: Vec<TagLabel>,
    aux: Vec<TokenAux>,
    first_line: usize,
}

fn read_rows<R, F>(input: R, mut parse_tag: F) -> Result<Vec<TaggedQuery>, CorpusError>
where
    R: BufRead,
    F: FnMut(&str) -> Result<TagLabel, SchemaError>,
{
    let mut out = Vec::new();
    let mut cur: Option<RawSentence> = None;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            if let Some(s) = cur.take() {
                out.push(finish(s)?);
            }
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.first() == Some(&"-DOCSTART-") {
            continue;
        }
        if fields.len() != 4 {
            return Err(CorpusError::MalformedRow {
                line: lineno,
                found: fields.len(),
            });
        }
        let tag = parse_tag(fields[3]).map_err(|source| CorpusError::InvalidTag { line: lineno, source })?;
        let s = cur.get_or_insert_with(|| RawSentence {
            tokens: Vec::new(),
            tags: Vec::new(),
            aux: Vec::new(),
            first_line: lineno,
        });
        s.tokens.push(fields[0].to_string());
        s.aux.push(TokenAux {
            pos: fields[1].to_string(),
            chunk: fields[2].to_string(),
        });
        s.tags.push(tag);
    }
    if let Some(s) = cur.take() {
        out.push(finish(s)?);
    }
    Ok(out)
}

fn finish(s: RawSentence) -> Result<TaggedQuery, CorpusError> {
    if let Some(pos) = first_invalid(&s.tags) {
        return Err(CorpusError::InvalidTag {
            line: s.first_line + pos,
            source: SchemaError::InvalidTransition(pos),
        });
    }
    let q = TaggedQuery::new(s.tokens, s.tags)?;
    if s.aux.iter().all(|a| a.pos == MISSING && a.chunk == MISSING) {
        Ok(q)
    } else {
        Ok(q.with_aux(s.aux)?)
    }
}

/// Reads 4-column CoNLL (`word pos chunk ne`) with empty-line sentence
/// breaks. NE tags must name kinds of `schema`. `-DOCSTART-` rows are skipped.
pub fn read_conll<R: BufRead>(input: R, schema: &Schema) -> Result<Vec<TaggedQuery>, CorpusError> {
    read_rows(input, |t| schema.parse_tag(t))
}

/// Like [`read_conll`], but builds the schema from the kinds encountered, in
/// order of first appearance.
pub fn read_conll_open<R: BufRead>(input: R) -> Result<(Schema, Vec<TaggedQuery>), CorpusError> {
    let mut schema = Schema::empty();
    let queries = read_rows(input, |t| schema.parse_tag_open(t))?;
    Ok((schema, queries))
}

/// Writes queries in 4-column CoNLL; missing POS/chunk columns become `-X- -X-`.
pub fn write_conll(queries: &[TaggedQuery], schema: &Schema) -> String {
    let mut out = String::new();
    for q in queries {
        for (i, (tok, &tag)) in q.tokens().iter().zip(q.tags()).enumerate() {
            let (pos, chunk) = match q.aux() {
                Some(aux) => (aux[i].pos.as_str(), aux[i].chunk.as_str()),
                None => (MISSING, MISSING),
            };
            out.push_str(tok);
            out.push(' ');
            out.push_str(pos);
            out.push(' ');
            out.push_str(chunk);
            out.push(' ');
            out.push_str(&schema.tag_name(tag));
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{tokenize, EntitySpan};

    #[test]
    fn conll2003_shaped_fixture() {
        let (schema, qs) = read_conll_open("EU NNP B-NP B-ORG\n\n".as_bytes()).unwrap();
        assert_eq!(qs.len(), 1);
        let spans = qs[0].spans();
        assert_eq!(spans.len(), 1);
        assert_eq!(schema.name(spans[0].kind), "ORG");
        assert_eq!((spans[0].start, spans[0].end), (0, 0));
        assert_eq!(qs[0].aux().unwrap()[0].pos, "NNP");
    }

    #[test]
    fn docstart_and_trailing_sentence() {
        let text = "-DOCSTART- -X- -X- O\n\nEU NNP B-NP B-ORG\nrejects VBZ B-VP O\nGerman JJ B-NP B-MISC";
        let (_, qs) = read_conll_open(text.as_bytes()).unwrap();
        assert_eq!(qs.len(), 1);
        assert_eq!(qs[0].len(), 3);
    }

    #[test]
    fn empty_input_and_errors() {
        assert!(read_conll("".as_bytes(), &Schema::canonical()).unwrap().is_empty());
        assert!(matches!(
            read_conll("word NN\n".as_bytes(), &Schema::canonical()),
            Err(CorpusError::MalformedRow { line: 1, found: 2 })
        ));
        assert!(matches!(
            read_conll("word NN B-NP B-Aroma\n".as_bytes(), &Schema::canonical()),
            Err(CorpusError::InvalidTag { line: 1, .. })
        ));
        assert!(matches!(
            read_conll("a - - O\nb - - I-Color\n".as_bytes(), &Schema::canonical()),
            Err(CorpusError::InvalidTag { line: 2, .. })
        ));
    }

    #[test]
    fn price_range_serializes_with_underscore() {
        let s = Schema::canonical();
        let tokens = tokenize("shoes under 50");
        let pr = s.lookup("Price Range").unwrap();
        let q = TaggedQuery::from_spans(tokens.clone(), &[EntitySpan::new(pr, 1, 2, &tokens)]).unwrap();
        let text = write_conll(std::slice::from_ref(&q), &s);
        assert_eq!(
            text,
            "shoes -X- -X- O\nunder -X- -X- B-Price_Range\n50 -X- -X- I-Price_Range\n\n"
        );
        assert_eq!(read_conll(text.as_bytes(), &s).unwrap(), vec![q]);
        assert_eq!(write_conll(&[], &s), "");
    }
}
