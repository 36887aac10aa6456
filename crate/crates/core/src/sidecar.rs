//! Per-entity sidecar files produced offline by the text exporter.
//!
//! Embeddings: header `ecn-emb v1 <dim>`, then rows
//! `doc_id \t entity_id \t f1 \t … \t f<dim>`.
//! Token counts: header `ecn-tokcount v1`, then rows
//! `doc_id \t entity_id \t count`.
//! `entity_id` is the identifier written in the dataset file.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: &str = "ecn-emb v1";
pub const TOKEN_COUNT_MAGIC: &str = "ecn-tokcount v1";

type Key = (String, i64);

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingTable {
    dim: usize,
    rows: HashMap<Key, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            rows: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, doc_id: &str, entity: i64) -> Option<&[f64]> {
        self.rows
            .get(&(doc_id.to_owned(), entity))
            .map(Vec::as_slice)
    }

    pub fn insert(&mut self, doc_id: &str, entity: i64, vector: Vec<f64>) -> Result<()> {
        let origin = "table";
        if vector.len() != self.dim {
            return Err(Error::sidecar(
                origin,
                format!(
                    "dimension mismatch for ({doc_id}, {entity}): header says {}, row has {}",
                    self.dim,
                    vector.len()
                ),
            ));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::sidecar(
                origin,
                format!("non-finite value for ({doc_id}, {entity})"),
            ));
        }
        if self
            .rows
            .insert((doc_id.to_owned(), entity), vector)
            .is_some()
        {
            return Err(Error::sidecar(
                origin,
                format!("duplicate key ({doc_id}, {entity})"),
            ));
        }
        Ok(())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let header = lines.next().map(|(_, l)| l.trim()).unwrap_or_default();
        let dim = header
            .strip_prefix(EMBEDDING_MAGIC)
            .and_then(|rest| rest.trim().parse::<usize>().ok())
            .ok_or_else(|| {
                Error::sidecar(origin, format!("expected header `{EMBEDDING_MAGIC} <dim>`"))
            })?;
        let mut table = EmbeddingTable::new(dim);
        for (n, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let at = |msg: String| Error::sidecar(origin, format!("line {}: {msg}", n + 1));
            let mut cols = line.split('\t');
            let doc_id = cols.next().unwrap_or_default();
            let entity = cols
                .next()
                .and_then(|c| c.trim().parse::<i64>().ok())
                .ok_or_else(|| at("bad entity id".into()))?;
            let vector = cols
                .map(|c| c.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| at(format!("bad float: {e}")))?;
            table.insert(doc_id, entity, vector).map_err(|e| match e {
                Error::Sidecar { message, .. } => at(message),
                other => other,
            })?;
        }
        Ok(table)
    }

    /// Rows sorted by key, so output is deterministic.
    pub fn to_text(&self) -> String {
        let mut keys: Vec<&Key> = self.rows.keys().collect();
        keys.sort();
        let mut out = format!("{EMBEDDING_MAGIC} {}\n", self.dim);
        for key in keys {
            let _ = write!(out, "{}\t{}", key.0, key.1);
            for v in &self.rows[key] {
                let _ = write!(out, "\t{v}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn load_embedding_sidecar(path: &Path) -> Result<EmbeddingTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    EmbeddingTable::parse(&text, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenCounts {
    counts: HashMap<Key, u32>,
}

impl TokenCounts {
    pub fn get(&self, doc_id: &str, entity: i64) -> Option<u32> {
        self.counts.get(&(doc_id.to_owned(), entity)).copied()
    }

    pub fn insert(&mut self, doc_id: &str, entity: i64, count: u32) -> Result<()> {
        if self
            .counts
            .insert((doc_id.to_owned(), entity), count)
            .is_some()
        {
            return Err(Error::sidecar(
                "token counts",
                format!("duplicate key ({doc_id}, {entity})"),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == TOKEN_COUNT_MAGIC => {}
            _ => {
                return Err(Error::sidecar(
                    origin,
                    format!("expected header `{TOKEN_COUNT_MAGIC}`"),
                ))
            }
        }
        let mut table = TokenCounts::default();
        for (n, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let row = match cols.as_slice() {
                [doc, entity, count] => entity
                    .trim()
                    .parse::<i64>()
                    .ok()
                    .zip(count.trim().parse::<u32>().ok())
                    .map(|(e, c)| (*doc, e, c)),
                _ => None,
            };
            let (doc, entity, count) = row.ok_or_else(|| {
                Error::sidecar(
                    origin,
                    format!("line {}: expected `doc_id\\tentity_id\\tcount`", n + 1),
                )
            })?;
            table.insert(doc, entity, count).map_err(|_| {
                Error::sidecar(
                    origin,
                    format!("line {}: duplicate key ({doc}, {entity})", n + 1),
                )
            })?;
        }
        Ok(table)
    }

    pub fn to_text(&self) -> String {
        let mut rows: Vec<(&Key, &u32)> = self.counts.iter().collect();
        rows.sort();
        let mut out = format!("{TOKEN_COUNT_MAGIC}\n");
        for ((doc, entity), count) in rows {
            let _ = writeln!(out, "{doc}\t{entity}\t{count}");
        }
        out
    }
}

pub fn load_token_counts(path: &Path) -> Result<TokenCounts> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    TokenCounts::parse(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_embedding_file() {
        let t = EmbeddingTable::parse("ecn-emb v1 4\nd0\t3\t0.1\t-2\t3e-2\t0\n", "t").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.dim(), 4);
        assert_eq!(t.get("d0", 3).unwrap(), &[0.1, -2.0, 0.03, 0.0]);
    }

    #[test]
    fn short_row_is_dimension_mismatch() {
        let err = EmbeddingTable::parse("ecn-emb v1 4\nd0\t3\t0.1\t0.2\t0.3\n", "t").unwrap_err();
        assert!(err.to_string().contains("dimension mismatch"), "{err}");
    }

    #[test]
    fn duplicate_key_rejected() {
        let err = EmbeddingTable::parse("ecn-emb v1 1\nd0\t3\t0.1\nd0\t3\t0.2\n", "t").unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn non_finite_rejected() {
        assert!(EmbeddingTable::parse("ecn-emb v1 1\nd0\t3\tNaN\n", "t").is_err());
        assert!(EmbeddingTable::parse("ecn-emb v1 1\nd0\t3\tinf\n", "t").is_err());
    }

    #[test]
    fn bad_header_rejected() {
        assert!(EmbeddingTable::parse("ecn-emb v2 4\n", "t").is_err());
        assert!(TokenCounts::parse("tokcount\n", "t").is_err());
    }

    #[test]
    fn row_order_does_not_matter() {
        let a = EmbeddingTable::parse("ecn-emb v1 1\na\t0\t1\nb\t1\t2\n", "t").unwrap();
        let b = EmbeddingTable::parse("ecn-emb v1 1\nb\t1\t2\na\t0\t1\n", "t").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn token_counts_round_trip() {
        let t = TokenCounts::parse("ecn-tokcount v1\nd\t0\t5\nd\t1\t0\n", "t").unwrap();
        assert_eq!(t.get("d", 0), Some(5));
        assert_eq!(TokenCounts::parse(&t.to_text(), "t").unwrap(), t);
        assert!(TokenCounts::parse("ecn-tokcount v1\nd\t0\t5\nd\t0\t5\n", "t").is_err());
    }
}
