use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::triple::KnowledgeTriple;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionMeta {
    #[serde(default)]
    pub model: String,
    #[serde(default)]
    pub prompt_hash: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KgEntry {
    pub triples: Vec<KnowledgeTriple>,
    pub meta: ExtractionMeta,
}

/// Triples per document, keyed by doc_id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KgCorpus {
    entries: BTreeMap<String, KgEntry>,
}

#[derive(Serialize, Deserialize)]
struct TripleRecord {
    head: String,
    relation: String,
    tail: String,
}

#[derive(Serialize, Deserialize)]
struct KgLine {
    doc_id: String,
    triples: Vec<TripleRecord>,
    #[serde(default)]
    meta: ExtractionMeta,
}

impl KgCorpus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces the entry for `doc_id`. Triples are re-attributed
    /// to `doc_id`.
    pub fn insert(&mut self, doc_id: &str, triples: Vec<KnowledgeTriple>, meta: ExtractionMeta) {
        let triples = triples
            .into_iter()
            .map(|t| t.with_source(doc_id))
            .collect();
        self.entries
            .insert(doc_id.to_string(), KgEntry { triples, meta });
    }

    pub fn get(&self, doc_id: &str) -> Option<&[KnowledgeTriple]> {
        self.entries.get(doc_id).map(|e| e.triples.as_slice())
    }

    pub fn entry(&self, doc_id: &str) -> Option<&KgEntry> {
        self.entries.get(doc_id)
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.entries.contains_key(doc_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &KgEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn triple_count(&self) -> usize {
        self.entries.values().map(|e| e.triples.len()).sum()
    }

    pub fn write_to<W: Write>(&self, mut writer: W) -> Result<()> {
        for (doc_id, entry) in &self.entries {
            write_entry(&mut writer, doc_id, entry)?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        Self::read_from(reader, &path.display().to_string())
    }

    /// Parses line-delimited KG entries. A later line for the same doc_id
    /// replaces the earlier one.
    pub fn read_from<R: BufRead>(reader: R, origin: &str) -> Result<Self> {
        let mut kg = Self::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (doc_id, entry) = parse_line(&line).map_err(|message| Error::Load {
                path: origin.to_string(),
                line: idx + 1,
                message,
            })?;
            kg.entries.insert(doc_id, entry);
        }
        Ok(kg)
    }
}

pub(crate) fn write_entry<W: Write>(writer: &mut W, doc_id: &str, entry: &KgEntry) -> Result<()> {
    let line = KgLine {
        doc_id: doc_id.to_string(),
        triples: entry
            .triples
            .iter()
            .map(|t| TripleRecord {
                head: t.head.clone(),
                relation: t.relation.clone(),
                tail: t.tail.clone(),
            })
            .collect(),
        meta: entry.meta.clone(),
    };
    serde_json::to_writer(&mut *writer, &line)?;
    writer.write_all(b"\n")?;
    Ok(())
}

pub(crate) fn parse_line(line: &str) -> std::result::Result<(String, KgEntry), String> {
    let parsed: KgLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if parsed.doc_id.is_empty() {
        return Err("empty doc_id".into());
    }
    let triples = parsed
        .triples
        .into_iter()
        .map(|t| KnowledgeTriple::new(t.head, t.relation, t.tail, parsed.doc_id.clone()))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    Ok((
        parsed.doc_id,
        KgEntry {
            triples,
            meta: parsed.meta,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn word(rng: &mut ChaCha8Rng) -> String {
        let len = rng.random_range(1..8);
        (0..len)
            .map(|_| char::from(b'a' + rng.random_range(0..26u8)))
            .collect()
    }

    #[test]
    fn round_trip_random_corpus() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut kg = KgCorpus::new();
        for d in 0..20 {
            let doc_id = format!("doc{d}");
            let triples = (0..5)
                .map(|_| {
                    KnowledgeTriple::new(word(&mut rng), word(&mut rng), word(&mut rng), "")
                        .unwrap()
                })
                .collect();
            kg.insert(
                &doc_id,
                triples,
                ExtractionMeta {
                    model: "m".into(),
                    prompt_hash: format!("h{d}"),
                },
            );
        }
        assert_eq!(kg.triple_count(), 100);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kg.jsonl");
        kg.save(&path).unwrap();
        let loaded = KgCorpus::load(&path).unwrap();
        assert_eq!(loaded, kg);
        for (doc_id, entry) in loaded.iter() {
            assert!(entry.triples.iter().all(|t| t.source_doc_id == doc_id));
        }
    }

    #[test]
    fn truncated_line_reports_line_number() {
        let src = "{\"doc_id\":\"a\",\"triples\":[],\"meta\":{}}\n{\"doc_id\":\"b\",\"trip";
        match KgCorpus::read_from(src.as_bytes(), "kg").unwrap_err() {
            Error::Load { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn empty_round_trip() {
        let mut buf = Vec::new();
        KgCorpus::new().write_to(&mut buf).unwrap();
        assert!(buf.is_empty());
        assert!(KgCorpus::read_from(&buf[..], "kg").unwrap().is_empty());
    }

    #[test]
    fn empty_triple_list_is_a_total_lookup() {
        let mut kg = KgCorpus::new();
        kg.insert("d", vec![], ExtractionMeta::default());
        assert_eq!(kg.get("d"), Some(&[][..]));
        assert_eq!(kg.get("missing"), None);
    }
}
