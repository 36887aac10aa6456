#![allow(dead_code)]

pub mod cases;
pub mod oracles;

use std::collections::BTreeSet;

use ecn_core::corpus::{
    apply_setting, BBox, Corpus, Document, Entity, EntityId, EntityScope, Label, Language,
    Relation, Split, TaskInstance, TaskSetting, TrainingScope,
};
use ecn_core::features::{build_graph_instance, FeatureLayout, GraphInstance};
use ecn_core::geometry::NormalizedBBox;
use ecn_core::model::EcnConfig;
use ecn_core::sidecar::EmbeddingTable;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random boxes with positive area in the unit square.
pub fn random_boxes(rng: &mut impl Rng, n: usize) -> Vec<NormalizedBBox> {
    (0..n)
        .map(|_| {
            let w = rng.gen_range(0.01..0.3);
            let h = rng.gen_range(0.01..0.2);
            let x0 = rng.gen_range(0.0..1.0 - w);
            let y0 = rng.gen_range(0.0..1.0 - h);
            NormalizedBBox::new(x0, y0, x0 + w, y0 + h)
        })
        .collect()
}

/// Boxes on a coarse lattice, so shared edges, touching corners and exact
/// alignments are common.
pub fn lattice_boxes(rng: &mut impl Rng, n: usize, cells: u32) -> Vec<NormalizedBBox> {
    let c = cells as f64;
    (0..n)
        .map(|_| {
            let x0 = rng.gen_range(0..cells - 1);
            let y0 = rng.gen_range(0..cells - 1);
            let x1 = rng.gen_range(x0 + 1..=cells.min(x0 + 6));
            let y1 = rng.gen_range(y0 + 1..=cells.min(y0 + 4));
            NormalizedBBox::new(x0 as f64 / c, y0 as f64 / c, x1 as f64 / c, y1 as f64 / c)
        })
        .collect()
}

fn entity(id: usize, label: Label, bbox: BBox) -> Entity {
    Entity {
        id: EntityId(id),
        source_id: 10 * id as i64 + 1,
        text: format!("{} {id}", label.as_str()),
        bbox,
        label,
        word_count: Some(1 + id % 3),
    }
}

/// A form page: a header, `rows` question/answer rows in two columns and a
/// few `other` entities. Gold links go question→answer; some answers are
/// missing so not every question is linked.
pub fn synthetic_form(seed: u64, rows: usize) -> Document {
    let mut rng = rng(seed);
    let (w, h) = (1000u32, 1400u32);
    let mut entities = Vec::new();
    let mut relations = BTreeSet::new();
    entities.push(entity(0, Label::Header, BBox::new(300, 20, 700, 60)));
    let column_split = rng.gen_range(380..460);
    let row_h = (1200 / rows.max(1) as u32).clamp(20, 60);
    for r in 0..rows {
        let y = 100 + r as u32 * row_h;
        let jitter = rng.gen_range(0..6);
        let q = entities.len();
        let qx1 = rng.gen_range(200..column_split - 20);
        entities.push(entity(
            q,
            Label::Question,
            BBox::new(40 + jitter, y, qx1, y + row_h - 8),
        ));
        if rng.gen_bool(0.85) {
            let a = entities.len();
            let ax1 = rng.gen_range(column_split + 150..960);
            entities.push(entity(
                a,
                Label::Answer,
                BBox::new(column_split, y + jitter, ax1, y + row_h - 6),
            ));
            relations.insert(Relation::new(q, a));
        }
        if rng.gen_bool(0.15) {
            let o = entities.len();
            entities.push(entity(o, Label::Other, BBox::new(965, y, 995, y + 12)));
        }
    }
    Document {
        doc_id: format!("synthetic-{seed}"),
        page_width: w,
        page_height: h,
        entities,
        relations,
    }
}

pub fn corpus_of(language: Language, split: Split, documents: Vec<Document>) -> Corpus {
    Corpus {
        language,
        split,
        documents,
    }
}

pub fn setting(use_labels: bool, scope: EntityScope) -> TaskSetting {
    TaskSetting {
        use_labels,
        entity_scope: scope,
        training_scope: TrainingScope::Monolingual(Language::Fr),
    }
}

/// Deterministic fake text embeddings for every entity of `docs`.
pub fn embedding_table(docs: &[Document], dim: usize, seed: u64) -> EmbeddingTable {
    let mut rng = rng(seed);
    let mut table = EmbeddingTable::new(dim);
    for doc in docs {
        for e in &doc.entities {
            let v = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            table.insert(&doc.doc_id, e.source_id, v).unwrap();
        }
    }
    table
}

pub fn instances(
    docs: Vec<Document>,
    setting: &TaskSetting,
    layout: &FeatureLayout,
    table: Option<&EmbeddingTable>,
) -> Vec<GraphInstance> {
    let corpus = corpus_of(Language::Fr, Split::Train, docs).into_gold();
    apply_setting(&corpus, setting)
        .unwrap()
        .iter()
        .map(|i: &TaskInstance| build_graph_instance(i, layout, table).unwrap())
        .collect()
}

pub fn tiny_config() -> EcnConfig {
    EcnConfig {
        node_dim: 4,
        edge_dim: 4,
        layers: 2,
        stacked_convolutions: 2,
        decoder_hidden: 4,
        label_dim: 4,
        ..EcnConfig::default()
    }
}
