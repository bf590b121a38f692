use regex::Regex;

use super::{Chunk, GrammarDoc, GrammarError};

pub const DEFAULT_CHUNK_SIZE: usize = 400;
pub const DEFAULT_CHUNK_OVERLAP: usize = 50;

/// Byte offset of every character boundary, including the end of the text.
fn char_boundaries(text: &str) -> Vec<usize> {
    text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len())).collect()
}

fn make_chunk(doc: &GrammarDoc, bounds: &[usize], index: usize, start: usize, end: usize) -> Chunk {
    Chunk { doc_id: doc.id.clone(), index, start, end, text: doc.text[bounds[start]..bounds[end]].to_string() }
}

/// Fixed-size sliding window over characters.
///
/// Chunk `i` spans `[i * stride, min(i * stride + size, len))` with
/// `stride = size - overlap`; the window stops once it reaches the end of
/// the text, so adjacent chunks always share exactly `overlap` characters.
pub fn chunk_fixed(doc: &GrammarDoc, size: usize, overlap: usize) -> Result<Vec<Chunk>, GrammarError> {
    if size == 0 || overlap >= size {
        return Err(GrammarError::InvalidChunking { size, overlap });
    }
    if doc.text.is_empty() {
        return Err(GrammarError::EmptyDocument(doc.id.clone()));
    }
    let bounds = char_boundaries(&doc.text);
    let len = bounds.len() - 1;
    let stride = size - overlap;
    let mut chunks = Vec::with_capacity(len / stride + 1);
    let mut start = 0;
    loop {
        let end = (start + size).min(len);
        chunks.push(make_chunk(doc, &bounds, chunks.len(), start, end));
        if end == len {
            break;
        }
        start += stride;
    }
    Ok(chunks)
}

/// One chunk per heading-delimited section; text before the first heading
/// joins the first section. Without any heading the whole document is one
/// chunk and a warning is returned.
pub fn chunk_by_headings(doc: &GrammarDoc, heading: &Regex) -> Result<(Vec<Chunk>, Option<String>), GrammarError> {
    if doc.text.is_empty() {
        return Err(GrammarError::EmptyDocument(doc.id.clone()));
    }
    let bounds = char_boundaries(&doc.text);
    let len = bounds.len() - 1;
    let mut starts = Vec::new();
    let mut char_pos = 0;
    for line in doc.text.split_inclusive('\n') {
        if heading.is_match(line.trim_end_matches(['\n', '\r'])) {
            starts.push(char_pos);
        }
        char_pos += line.chars().count();
    }
    let warning = if starts.is_empty() {
        Some(format!("no headings matched {:?} in {}; using the whole document", heading.as_str(), doc.id))
    } else {
        None
    };
    if starts.first() != Some(&0) {
        if starts.is_empty() {
            starts.push(0);
        } else {
            starts[0] = 0;
        }
    }
    let chunks = starts
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let e = starts.get(i + 1).copied().unwrap_or(len);
            make_chunk(doc, &bounds, i, s, e)
        })
        .collect();
    Ok((chunks, warning))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(text: &str) -> GrammarDoc {
        GrammarDoc::new("d", "t", "usp", text).unwrap()
    }

    fn spans(chunks: &[Chunk]) -> Vec<(usize, usize)> {
        chunks.iter().map(|c| (c.start, c.end)).collect()
    }

    #[test]
    fn thousand_chars() {
        let c = chunk_fixed(&doc(&"a".repeat(1000)), 400, 50).unwrap();
        assert_eq!(spans(&c), [(0, 400), (350, 750), (700, 1000)]);
    }

    #[test]
    fn exactly_one_window() {
        let c = chunk_fixed(&doc(&"a".repeat(400)), 400, 50).unwrap();
        assert_eq!(spans(&c), [(0, 400)]);
        let c = chunk_fixed(&doc("abc"), 400, 50).unwrap();
        assert_eq!(spans(&c), [(0, 3)]);
    }

    #[test]
    fn invalid_arguments() {
        assert!(GrammarDoc::new("d", "t", "usp", "").is_err());
        assert!(matches!(chunk_fixed(&doc("abc"), 50, 50), Err(GrammarError::InvalidChunking { .. })));
        assert!(matches!(chunk_fixed(&doc("abc"), 0, 0), Err(GrammarError::InvalidChunking { .. })));
    }

    #[test]
    fn multibyte_text_is_split_on_characters() {
        let text = "∅é".repeat(300);
        let d = doc(&text);
        let c = chunk_fixed(&d, 400, 50).unwrap();
        assert_eq!(spans(&c), [(0, 400), (350, 600)]);
        assert_eq!(c[0].text.chars().count(), 400);
        let all: Vec<char> = text.chars().collect();
        assert_eq!(c[1].text, all[350..600].iter().collect::<String>());
    }

    #[test]
    fn heading_sections() {
        let re = Regex::new(r"^#+ ").unwrap();
        let (c, w) = chunk_by_headings(&doc("# A\nx\n# B\ny\n## C\nz\n"), &re).unwrap();
        assert_eq!(c.len(), 3);
        assert!(w.is_none());
        assert_eq!(c[1].text, "# B\ny\n");

        let (c, w) = chunk_by_headings(&doc("just text\nmore\n"), &re).unwrap();
        assert_eq!(c.len(), 1);
        assert!(w.is_some());

        let text = "# Only\nbody\nmore body\n";
        let (c, w) = chunk_by_headings(&doc(text), &re).unwrap();
        assert_eq!(spans(&c), [(0, text.chars().count())]);
        assert!(w.is_none());

        // preamble joins the first section
        let (c, _) = chunk_by_headings(&doc("pre\n# A\nx\n# B\n"), &re).unwrap();
        assert_eq!(c.len(), 2);
        assert!(c[0].text.starts_with("pre"));
    }

    proptest! {
        #[test]
        fn fixed_chunking_invariants(text in "[a-zé∅ ]{1,3000}", size in 2usize..600, overlap_frac in 0.0f64..1.0) {
            let overlap = ((size - 1) as f64 * overlap_frac) as usize;
            let d = doc(&text);
            let chunks = chunk_fixed(&d, size, overlap).unwrap();
            let chars: Vec<char> = text.chars().collect();
            prop_assert_eq!(chunks[0].start, 0);
            prop_assert_eq!(chunks.last().unwrap().end, chars.len());
            for c in &chunks {
                prop_assert!(c.end > c.start && c.end - c.start <= size);
                prop_assert_eq!(&c.text, &chars[c.start..c.end].iter().collect::<String>());
            }
            for pair in chunks.windows(2) {
                prop_assert_eq!(pair[0].end - pair[1].start, overlap);
            }
        }
    }
}
