use serde::{Deserialize, Serialize};

use super::{Corpus, Document, EntityId, Label, Language};
use crate::error::Result;
use crate::geometry::{normalize_bbox, DocumentGraph, NormalizedBBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityScope {
    /// Header, question and answer entities; `Other` is removed.
    Hqa,
    /// All four classes.
    Ohqa,
}

impl EntityScope {
    /// Classes present in model inputs, in label-embedding row order.
    pub fn classes(&self) -> &'static [Label] {
        match self {
            EntityScope::Hqa => &[Label::Header, Label::Question, Label::Answer],
            EntityScope::Ohqa => &Label::ALL,
        }
    }

    pub fn admits(&self, label: Label) -> bool {
        self.classes().contains(&label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainingScope {
    Monolingual(Language),
    Multilingual,
}

impl TrainingScope {
    pub fn includes(&self, language: Language) -> bool {
        match self {
            TrainingScope::Monolingual(l) => *l == language,
            TrainingScope::Multilingual => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskSetting {
    pub use_labels: bool,
    pub entity_scope: EntityScope,
    pub training_scope: TrainingScope,
}

impl TaskSetting {
    /// Gold labels visible, HQA entities only.
    pub fn official(language: Language) -> Self {
        TaskSetting {
            use_labels: true,
            entity_scope: EntityScope::Hqa,
            training_scope: TrainingScope::Monolingual(language),
        }
    }
}

/// One document as seen by the model under a [`TaskSetting`]. Node `k`
/// corresponds to `entity_ids[k]` of the source document.
#[derive(Debug, Clone)]
pub struct TaskInstance {
    pub doc_id: String,
    pub language: Language,
    pub entity_ids: Vec<EntityId>,
    pub source_ids: Vec<i64>,
    pub boxes: Vec<NormalizedBBox>,
    /// Model-visible classes; `None` in the without-label setting.
    pub labels: Option<Vec<Label>>,
    /// Gold question→answer pairs as node indices.
    pub gold: Vec<(usize, usize)>,
    pub graph: DocumentGraph,
    reference_labels: Vec<Label>,
}

impl TaskInstance {
    pub fn from_document(
        doc: &Document,
        language: Language,
        setting: &TaskSetting,
    ) -> Result<Self> {
        let kept: Vec<usize> = doc
            .entities
            .iter()
            .enumerate()
            .filter(|(_, e)| setting.entity_scope.admits(e.label))
            .map(|(i, _)| i)
            .collect();
        let mut node_of = vec![usize::MAX; doc.entities.len()];
        for (node, &idx) in kept.iter().enumerate() {
            node_of[idx] = node;
        }
        let boxes = kept
            .iter()
            .map(|&i| normalize_bbox(&doc.entities[i].bbox, doc.page_width, doc.page_height))
            .collect::<Result<Vec<_>>>()?;
        let reference_labels: Vec<Label> = kept.iter().map(|&i| doc.entities[i].label).collect();
        let gold = doc
            .relations
            .iter()
            .filter_map(|r| {
                let (h, t) = (node_of[r.head.0], node_of[r.tail.0]);
                (h != usize::MAX && t != usize::MAX).then_some((h, t))
            })
            .collect();
        let graph = DocumentGraph::build(&boxes);
        Ok(TaskInstance {
            doc_id: doc.doc_id.clone(),
            language,
            entity_ids: kept.iter().map(|&i| EntityId(i)).collect(),
            source_ids: kept.iter().map(|&i| doc.entities[i].source_id).collect(),
            labels: setting.use_labels.then(|| reference_labels.clone()),
            boxes,
            gold,
            graph,
            reference_labels,
        })
    }

    pub fn len(&self) -> usize {
        self.entity_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entity_ids.is_empty()
    }

    /// Gold classes, kept for evaluation bookkeeping even when hidden from
    /// the model.
    pub fn reference_labels(&self) -> &[Label] {
        &self.reference_labels
    }

    /// Number of ordered candidate pairs.
    pub fn pair_count(&self) -> usize {
        let n = self.len();
        n * n.saturating_sub(1)
    }
}

/// Materialize the instances of a gold-filtered corpus under `setting`. A
/// monolingual setting for another language yields no instances.
pub fn apply_setting(corpus: &Corpus, setting: &TaskSetting) -> Result<Vec<TaskInstance>> {
    if !setting.training_scope.includes(corpus.language) {
        return Ok(Vec::new());
    }
    corpus
        .documents
        .iter()
        .map(|doc| TaskInstance::from_document(doc, corpus.language, setting))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{filter_gold_relations, BBox, Entity, Relation, Split};

    fn corpus() -> Corpus {
        use Label::*;
        let labels = [Header, Question, Answer, Other, Other];
        let doc = Document {
            doc_id: "d0".into(),
            page_width: 100,
            page_height: 100,
            entities: labels
                .iter()
                .enumerate()
                .map(|(i, &label)| Entity {
                    id: EntityId(i),
                    source_id: 10 + i as i64,
                    text: String::new(),
                    bbox: BBox::new(0, 10 * i as u32, 50, 10 * i as u32 + 8),
                    label,
                    word_count: None,
                })
                .collect(),
            relations: [Relation::new(1, 2), Relation::new(0, 1)].into(),
        };
        Corpus {
            language: Language::Fr,
            split: Split::Train,
            documents: vec![filter_gold_relations(doc)],
        }
    }

    fn setting(use_labels: bool, entity_scope: EntityScope) -> TaskSetting {
        TaskSetting {
            use_labels,
            entity_scope,
            training_scope: TrainingScope::Monolingual(Language::Fr),
        }
    }

    #[test]
    fn hqa_drops_other() {
        let inst = apply_setting(&corpus(), &setting(true, EntityScope::Hqa)).unwrap();
        assert_eq!(inst[0].len(), 3);
        assert_eq!(inst[0].gold, vec![(1, 2)]);
    }

    #[test]
    fn ohqa_keeps_everything() {
        let inst = apply_setting(&corpus(), &setting(true, EntityScope::Ohqa)).unwrap();
        assert_eq!(inst[0].len(), 5);
        assert_eq!(inst[0].gold, vec![(1, 2)]);
    }

    #[test]
    fn without_labels_hides_classes() {
        let inst = apply_setting(&corpus(), &setting(false, EntityScope::Ohqa)).unwrap();
        assert!(inst[0].labels.is_none());
        assert_eq!(inst[0].reference_labels()[3], Label::Other);
    }

    #[test]
    fn other_language_yields_nothing() {
        let mut s = setting(true, EntityScope::Hqa);
        s.training_scope = TrainingScope::Monolingual(Language::De);
        assert!(apply_setting(&corpus(), &s).unwrap().is_empty());
        s.training_scope = TrainingScope::Multilingual;
        assert_eq!(apply_setting(&corpus(), &s).unwrap().len(), 1);
    }
}
