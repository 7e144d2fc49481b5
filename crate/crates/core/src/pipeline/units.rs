use crate::corpus::Document;
use crate::unit::TextUnit;

/// Splits after `.`, `?` or `!` when followed by whitespace and then an
/// uppercase letter. Abbreviations like "e.g. the" stay intact; "Dr. Smith"
/// does not. Pieces are trimmed and empty ones dropped.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0;
    for (i, &(pos, c)) in chars.iter().enumerate() {
        if !matches!(c, '.' | '?' | '!') {
            continue;
        }
        let mut j = i + 1;
        while j < chars.len() && chars[j].1.is_whitespace() {
            j += 1;
        }
        if j > i + 1 && j < chars.len() && chars[j].1.is_uppercase() {
            let end = pos + c.len_utf8();
            push_trimmed(&mut out, &text[start..end]);
            start = end;
        }
    }
    push_trimmed(&mut out, &text[start..]);
    out
}

fn push_trimmed(out: &mut Vec<String>, piece: &str) {
    let piece = piece.trim();
    if !piece.is_empty() {
        out.push(piece.to_string());
    }
}

pub fn sentence_units(doc: &Document) -> Vec<TextUnit> {
    split_sentences(&doc.text)
        .into_iter()
        .map(|text| TextUnit {
            text,
            source_doc_id: doc.doc_id.clone(),
        })
        .collect()
}

/// `{title}: {text}` cut to at most `char_budget` characters.
pub fn document_unit(doc: &Document, char_budget: usize) -> TextUnit {
    let full = format!("{}: {}", doc.title, doc.text);
    let text = match full.char_indices().nth(char_budget) {
        Some((cut, _)) => full[..cut].trim_end().to_string(),
        None => full,
    };
    TextUnit {
        text,
        source_doc_id: doc.doc_id.clone(),
    }
}
