//! Simulation of encoder-window document splitting.
//!
//! Entities are packed greedily in reading order into chunks of at most
//! [`MAX_SEQUENCE_TOKENS`] tokens; a relation survives only when both of its
//! endpoints land in the same chunk.

use std::collections::BTreeSet;

use super::{Document, EntityId, Relation};
use crate::error::{Error, Result};
use crate::sidecar::TokenCounts;

pub const MAX_SEQUENCE_TOKENS: u32 = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct SplitOutcome {
    /// Chunks re-indexed densely; `doc_id` is suffixed with `#k` when the
    /// document was split.
    pub sub_documents: Vec<Document>,
    pub lost_relations: usize,
    /// Entities whose own token count exceeds the window. Each sits alone
    /// in its chunk.
    pub oversized: Vec<EntityId>,
}

impl SplitOutcome {
    pub fn added_documents(&self) -> usize {
        self.sub_documents.len().saturating_sub(1)
    }

    pub fn kept_relations(&self) -> usize {
        self.sub_documents.iter().map(|d| d.relations.len()).sum()
    }
}

pub fn simulate_512_split(doc: &Document, token_counts: &TokenCounts) -> Result<SplitOutcome> {
    simulate_split(doc, token_counts, MAX_SEQUENCE_TOKENS)
}

pub(crate) fn simulate_split(
    doc: &Document,
    token_counts: &TokenCounts,
    window: u32,
) -> Result<SplitOutcome> {
    let counts = doc
        .entities
        .iter()
        .map(|e| {
            token_counts
                .get(&doc.doc_id, e.source_id)
                .ok_or_else(|| Error::MissingEntityData {
                    what: "token count",
                    doc_id: doc.doc_id.clone(),
                    entity: e.source_id.to_string(),
                })
        })
        .collect::<Result<Vec<u32>>>()?;

    let mut chunk_of = Vec::with_capacity(counts.len());
    let mut oversized = Vec::new();
    let (mut chunk, mut used) = (0usize, 0u64);
    for (i, &count) in counts.iter().enumerate() {
        let count = count as u64;
        let fits = used + count <= window as u64;
        if !fits && used > 0 {
            chunk += 1;
            used = 0;
        }
        chunk_of.push(chunk);
        used += count;
        if count > window as u64 {
            oversized.push(EntityId(i));
            // Nothing may join an oversized entity.
            if i + 1 < counts.len() {
                chunk += 1;
                used = 0;
            }
        }
    }
    let chunks = if counts.is_empty() { 1 } else { chunk + 1 };

    let mut sub_documents = Vec::with_capacity(chunks);
    for k in 0..chunks {
        let members: Vec<usize> = (0..counts.len()).filter(|&i| chunk_of[i] == k).collect();
        let mut local = vec![usize::MAX; counts.len()];
        for (pos, &i) in members.iter().enumerate() {
            local[i] = pos;
        }
        let entities = members
            .iter()
            .enumerate()
            .map(|(pos, &i)| {
                let mut e = doc.entities[i].clone();
                e.id = EntityId(pos);
                e
            })
            .collect();
        let relations: BTreeSet<Relation> = doc
            .relations
            .iter()
            .filter(|r| chunk_of[r.head.0] == k && chunk_of[r.tail.0] == k)
            .map(|r| Relation::new(local[r.head.0], local[r.tail.0]))
            .collect();
        sub_documents.push(Document {
            doc_id: if chunks == 1 {
                doc.doc_id.clone()
            } else {
                format!("{}#{k}", doc.doc_id)
            },
            page_width: doc.page_width,
            page_height: doc.page_height,
            entities,
            relations,
        });
    }

    let kept: usize = sub_documents.iter().map(|d| d.relations.len()).sum();
    Ok(SplitOutcome {
        sub_documents,
        lost_relations: doc.relations.len() - kept,
        oversized,
    })
}
