//! Document model for form-understanding datasets.
//!
//! A page is an ordered list of labelled, boxed text entities plus a set of
//! directed links between them. Entity order follows the source file, which
//! is the ground-truth reading order.

mod parse;
mod setting;
mod split;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub use parse::{
    document_to_record, funsd_to_record, load_dataset, parse_document, parse_xfund_file,
    ParseOptions, SourceFormat,
};
pub use setting::{apply_setting, EntityScope, TaskInstance, TaskSetting, TrainingScope};
pub use split::{simulate_512_split, SplitOutcome, MAX_SEQUENCE_TOKENS};

/// Pixel-space box, `x0 <= x1` and `y0 <= y1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl BBox {
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        debug_assert!(x0 <= x1 && y0 <= y1);
        BBox { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Header,
    Question,
    Answer,
    Other,
}

impl Label {
    pub const ALL: [Label; 4] = [Label::Header, Label::Question, Label::Answer, Label::Other];

    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Header => "header",
            Label::Question => "question",
            Label::Answer => "answer",
            Label::Other => "other",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "header" => Ok(Label::Header),
            "question" => Ok(Label::Question),
            "answer" => Ok(Label::Answer),
            "other" => Ok(Label::Other),
            _ => Err(format!("unknown label {s:?}")),
        }
    }
}

/// Dense, document-local entity index. Equal to the entity's position in
/// [`Document::entities`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityId(pub usize);

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: EntityId,
    /// Identifier as written in the source file. Sidecar files key on this.
    pub source_id: i64,
    pub text: String,
    pub bbox: BBox,
    pub label: Label,
    pub word_count: Option<usize>,
}

/// Directed link, head (question side) to tail (answer side).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Relation {
    pub head: EntityId,
    pub tail: EntityId,
}

impl Relation {
    pub fn new(head: usize, tail: usize) -> Self {
        Relation {
            head: EntityId(head),
            tail: EntityId(tail),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub doc_id: String,
    pub page_width: u32,
    pub page_height: u32,
    pub entities: Vec<Entity>,
    pub relations: BTreeSet<Relation>,
}

impl Document {
    pub fn entity(&self, id: EntityId) -> Option<&Entity> {
        self.entities.get(id.0)
    }

    pub fn label_of(&self, id: EntityId) -> Option<Label> {
        self.entity(id).map(|e| e.label)
    }
}

/// Keep only question→answer links. Links written answer→question are
/// re-oriented; every other pairing is dropped. Idempotent.
pub fn filter_gold_relations(mut doc: Document) -> Document {
    let relations = std::mem::take(&mut doc.relations);
    doc.relations = relations
        .into_iter()
        .filter_map(
            |rel| match (doc.label_of(rel.head), doc.label_of(rel.tail)) {
                (Some(Label::Question), Some(Label::Answer)) => Some(rel),
                (Some(Label::Answer), Some(Label::Question)) => Some(Relation {
                    head: rel.tail,
                    tail: rel.head,
                }),
                _ => None,
            },
        )
        .collect();
    doc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    En,
    Zh,
    Ja,
    Es,
    Fr,
    It,
    De,
    Pt,
}

impl Language {
    pub const ALL: [Language; 8] = [
        Language::En,
        Language::Zh,
        Language::Ja,
        Language::Es,
        Language::Fr,
        Language::It,
        Language::De,
        Language::Pt,
    ];

    /// Report column order; English sits apart from the XFUND languages.
    pub const NON_ENGLISH: [Language; 7] = [
        Language::Zh,
        Language::Ja,
        Language::Es,
        Language::Fr,
        Language::It,
        Language::De,
        Language::Pt,
    ];

    pub fn code(&self) -> &'static str {
        match self {
            Language::En => "en",
            Language::Zh => "zh",
            Language::Ja => "ja",
            Language::Es => "es",
            Language::Fr => "fr",
            Language::It => "it",
            Language::De => "de",
            Language::Pt => "pt",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code().to_ascii_uppercase())
    }
}

impl FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Language::ALL
            .into_iter()
            .find(|l| l.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown language {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" | "training" => Ok(Split::Train),
            "test" | "testing" | "val" => Ok(Split::Test),
            _ => Err(Error::InvalidArgument(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub language: Language,
    pub split: Split,
    pub documents: Vec<Document>,
}

impl Corpus {
    pub fn entity_count(&self) -> usize {
        self.documents.iter().map(|d| d.entities.len()).sum()
    }

    pub fn relation_count(&self) -> usize {
        self.documents.iter().map(|d| d.relations.len()).sum()
    }

    /// Gold-filter every document.
    pub fn into_gold(self) -> Corpus {
        Corpus {
            documents: self
                .documents
                .into_iter()
                .map(filter_gold_relations)
                .collect(),
            ..self
        }
    }
}
