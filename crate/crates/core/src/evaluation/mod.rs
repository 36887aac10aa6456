//! Relation-level precision / recall / F1.
//!
//! A predicted pair counts as correct only when it equals a gold pair as an
//! ordered (head, tail) pair. Corpus scores pool counts over documents.

mod report;

use std::collections::BTreeSet;
use std::ops::{Add, AddAssign};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Relation;
use crate::error::{Error, Result};
use crate::features::GraphInstance;
use crate::model::{forward, predict, Checkpoint, EcnConfig, EcnParams};

pub use report::{
    multi_run, render_report, CellSummary, EvalReport, MeanStd, ReportFormat, ReportRow, SeedRecord,
};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        Metrics {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1: harmonic(precision, recall),
        }
    }

    pub fn gold_count(&self) -> usize {
        self.tp + self.fn_
    }
}

impl Add for Metrics {
    type Output = Metrics;

    /// Pools counts; scores are recomputed from the summed counts.
    fn add(self, rhs: Metrics) -> Metrics {
        Metrics::from_counts(self.tp + rhs.tp, self.fp + rhs.fp, self.fn_ + rhs.fn_)
    }
}

impl AddAssign for Metrics {
    fn add_assign(&mut self, rhs: Metrics) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for Metrics {
    fn sum<I: Iterator<Item = Metrics>>(iter: I) -> Metrics {
        iter.fold(Metrics::default(), Add::add)
    }
}

pub fn relation_prf<'a>(
    pred: impl IntoIterator<Item = &'a Relation>,
    gold: impl IntoIterator<Item = &'a Relation>,
) -> Metrics {
    let pred: BTreeSet<&Relation> = pred.into_iter().collect();
    let gold: BTreeSet<&Relation> = gold.into_iter().collect();
    let tp = pred.intersection(&gold).count();
    Metrics::from_counts(tp, pred.len() - tp, gold.len() - tp)
}

/// Recompute recall against the unsplit gold count; precision is kept.
pub fn corrected_recall(metrics: &Metrics, full_gold_count: usize) -> Result<Metrics> {
    if full_gold_count < metrics.gold_count() {
        return Err(Error::InvalidArgument(format!(
            "full gold count {full_gold_count} is below the evaluated gold count {}",
            metrics.gold_count()
        )));
    }
    let recall = ratio(metrics.tp, full_gold_count);
    Ok(Metrics {
        fn_: full_gold_count - metrics.tp,
        recall,
        f1: harmonic(metrics.precision, recall),
        ..*metrics
    })
}

fn gold_relations(gold: &[(usize, usize)]) -> Vec<Relation> {
    gold.iter().map(|&(h, t)| Relation::new(h, t)).collect()
}

/// Forward, threshold and score one document.
pub fn evaluate_instance(
    params: &EcnParams,
    config: &EcnConfig,
    instance: &GraphInstance,
    threshold: f64,
) -> Result<Metrics> {
    let (_, scores) = forward(instance, params, config)?;
    let pred = predict(&scores, threshold);
    Ok(relation_prf(&pred, &gold_relations(&instance.gold)))
}

/// Micro-averaged metrics over `instances`. Documents are scored in
/// parallel on the current rayon pool.
pub fn evaluate(
    params: &EcnParams,
    config: &EcnConfig,
    instances: &[GraphInstance],
    threshold: f64,
) -> Result<Metrics> {
    let per_doc = instances
        .par_iter()
        .map(|inst| evaluate_instance(params, config, inst, threshold))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_doc.into_iter().sum())
}

/// [`evaluate`] after checking that every instance matches the
/// checkpoint's feature layout.
pub fn evaluate_checkpoint(
    checkpoint: &Checkpoint,
    instances: &[GraphInstance],
    threshold: f64,
) -> Result<Metrics> {
    for inst in instances {
        checkpoint.ensure_layout(&inst.layout)?;
    }
    evaluate(&checkpoint.params, &checkpoint.config, instances, threshold)
}
