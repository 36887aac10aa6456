//! Shared fixtures for the model suites and the acceptance run.

use std::collections::BTreeSet;

use ecn_core::corpus::{BBox, Document, Entity, EntityId, EntityScope, Label, Relation};
use ecn_core::features::{FeatureLayout, GraphInstance};
use ecn_core::model::{init_params, EcnConfig, EcnParams};
use rand::Rng;

use super::{embedding_table, instances, rng, setting, tiny_config};

/// 2..=6 entities with random classes, boxes and question→answer links.
pub fn random_document(seed: u64) -> Document {
    let mut r = rng(seed);
    let n = r.gen_range(2..=6);
    let mut entities: Vec<Entity> = (0..n)
        .map(|i| {
            let x0 = r.gen_range(0..800);
            let y0 = r.gen_range(0..900);
            Entity {
                id: EntityId(i),
                source_id: i as i64,
                text: String::new(),
                bbox: BBox::new(x0, y0, x0 + r.gen_range(20..200), y0 + r.gen_range(10..80)),
                label: Label::ALL[r.gen_range(0..4)],
                word_count: None,
            }
        })
        .collect();
    // Guarantee at least one question→answer pair.
    entities[0].label = Label::Question;
    entities[1].label = Label::Answer;
    let mut relations = BTreeSet::from([Relation::new(0, 1)]);
    for i in 0..n {
        for j in 0..n {
            if entities[i].label == Label::Question
                && entities[j].label == Label::Answer
                && r.gen_bool(0.3)
            {
                relations.insert(Relation::new(i, j));
            }
        }
    }
    Document {
        doc_id: format!("rand-{seed}"),
        page_width: 1000,
        page_height: 1000,
        entities,
        relations,
    }
}

/// Perturb every parameter, biases included, so no term is trivially zero.
pub fn jitter(params: &mut EcnParams, seed: u64, scale: f64) {
    let mut r = rng(seed);
    for t in params.tensors_mut() {
        for v in t.data.iter_mut() {
            *v += r.gen_range(-scale..scale);
        }
    }
}

pub struct Case {
    pub input: GraphInstance,
    pub config: EcnConfig,
    pub params: EcnParams,
    pub label: String,
}

pub fn gradient_cases(count: u64) -> Vec<Case> {
    let config = tiny_config();
    let mut cases = Vec::new();
    for seed in 0..count {
        let text = seed % 2 == 0;
        let scope = if seed % 4 < 2 {
            EntityScope::Hqa
        } else {
            EntityScope::Ohqa
        };
        let use_labels = seed % 8 < 6;
        let doc = random_document(1000 + seed);
        let table = text.then(|| embedding_table(std::slice::from_ref(&doc), 3, seed));
        let s = setting(use_labels, scope);
        let layout =
            FeatureLayout::for_setting(&s, table.as_ref().map(|t| t.dim()), config.label_dim);
        let Some(input) = instances(vec![doc], &s, &layout, table.as_ref()).pop() else {
            continue;
        };
        if input.node_count() < 2 {
            continue;
        }
        let mut params = init_params(&config, &layout, seed);
        jitter(&mut params, seed + 77, 0.3);
        cases.push(Case {
            input,
            config: config.clone(),
            params,
            label: format!("seed {seed}: text {text}, labels {use_labels}, {scope:?}"),
        });
    }
    cases
}

/// Trainable parameters of a selected configuration, with and without a
/// 768-wide text embedding.
pub fn parameter_counts(config: &EcnConfig) -> (usize, usize) {
    let s = setting(true, EntityScope::Hqa);
    let with_text = FeatureLayout::for_setting(&s, Some(768), config.label_dim);
    let no_text = FeatureLayout::for_setting(&s, None, config.label_dim);
    (
        init_params(config, &with_text, 0).parameter_count(),
        init_params(config, &no_text, 0).parameter_count(),
    )
}
