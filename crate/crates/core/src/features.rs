//! Node input features.
//!
//! Each node vector is `[text (d_t, optional) | label embedding (d_lab,
//! optional) | geometry (6)]`. The label block is learned, so it is left
//! empty here and filled from the model's embedding table at forward time.

use std::fmt;
use std::ops::Range;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::corpus::{EntityScope, Label, TaskInstance, TaskSetting};
use crate::error::{Error, Result};
use crate::geometry::{EDGE_FEATURE_DIM, GEOMETRY_DIM};
use crate::sidecar::EmbeddingTable;

/// Default width of the learned label embedding.
pub const DEFAULT_LABEL_DIM: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub text_dim: Option<usize>,
    /// Classes with a label-embedding row, `None` in the without-label
    /// setting.
    pub label_classes: Option<Vec<Label>>,
    pub label_dim: usize,
    pub entity_scope: EntityScope,
}

impl FeatureLayout {
    pub fn for_setting(setting: &TaskSetting, text_dim: Option<usize>, label_dim: usize) -> Self {
        FeatureLayout {
            text_dim,
            label_classes: setting
                .use_labels
                .then(|| setting.entity_scope.classes().to_vec()),
            label_dim,
            entity_scope: setting.entity_scope,
        }
    }

    pub fn text_range(&self) -> Range<usize> {
        0..self.text_dim.unwrap_or(0)
    }

    pub fn label_range(&self) -> Range<usize> {
        let start = self.text_range().end;
        let width = if self.label_classes.is_some() {
            self.label_dim
        } else {
            0
        };
        start..start + width
    }

    pub fn geometry_range(&self) -> Range<usize> {
        let start = self.label_range().end;
        start..start + GEOMETRY_DIM
    }

    pub fn input_dim(&self) -> usize {
        self.geometry_range().end
    }

    pub fn label_row(&self, label: Label) -> Option<usize> {
        self.label_classes
            .as_ref()
            .and_then(|c| c.iter().position(|&l| l == label))
    }

    pub fn ensure_matches(&self, requested: &FeatureLayout) -> Result<()> {
        if self == requested {
            Ok(())
        } else {
            Err(Error::LayoutMismatch {
                checkpoint: self.to_string(),
                requested: requested.to_string(),
            })
        }
    }
}

impl fmt::Display for FeatureLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let scope = match self.entity_scope {
            EntityScope::Hqa => "HQA",
            EntityScope::Ohqa => "OHQA",
        };
        match self.text_dim {
            Some(d) => write!(f, "text {d}")?,
            None => write!(f, "no text")?,
        }
        match &self.label_classes {
            Some(c) => write!(f, ", labels {}x{}", c.len(), self.label_dim)?,
            None => write!(f, ", no labels")?,
        }
        write!(f, ", {scope}")
    }
}

/// Everything the network consumes for one document, plus its gold pairs.
#[derive(Debug, Clone)]
pub struct GraphInstance {
    pub doc_id: String,
    /// `n × input_dim`; the label block is zero.
    pub static_features: Array2<f64>,
    /// Label-embedding row per node in the with-label setting.
    pub label_rows: Option<Vec<usize>>,
    /// Directed edge rows `(receiver, sender)`.
    pub edges: Vec<(usize, usize)>,
    /// `edges.len() × 14`.
    pub edge_features: Array2<f64>,
    pub gold: Vec<(usize, usize)>,
    pub layout: FeatureLayout,
}

impl GraphInstance {
    pub fn node_count(&self) -> usize {
        self.static_features.nrows()
    }

    /// Full node matrix with the label block filled from `label_table`.
    pub fn node_matrix(&self, label_table: Option<&Array2<f64>>) -> Result<Array2<f64>> {
        let mut x = self.static_features.clone();
        if let Some(rows) = &self.label_rows {
            let table = label_table
                .ok_or_else(|| Error::shape("label embedding", "a label table", "none"))?;
            let range = self.layout.label_range();
            if table.ncols() != range.len() {
                return Err(Error::shape(
                    "label embedding width",
                    range.len(),
                    table.ncols(),
                ));
            }
            for (node, &row) in rows.iter().enumerate() {
                if row >= table.nrows() {
                    return Err(Error::shape(
                        "label embedding rows",
                        format!("> {row}"),
                        table.nrows(),
                    ));
                }
                x.slice_mut(s![node, range.clone()]).assign(&table.row(row));
            }
        }
        Ok(x)
    }
}

/// Assemble the model input of one instance. Text mode requires every
/// entity to be present in `table`.
pub fn build_graph_instance(
    instance: &TaskInstance,
    layout: &FeatureLayout,
    table: Option<&EmbeddingTable>,
) -> Result<GraphInstance> {
    let n = instance.len();
    let mut x = Array2::<f64>::zeros((n, layout.input_dim()));

    if let Some(dim) = layout.text_dim {
        let table = table.ok_or_else(|| {
            Error::InvalidArgument("text features requested without an embedding table".into())
        })?;
        if table.dim() != dim {
            return Err(Error::shape("text embedding width", dim, table.dim()));
        }
        for (node, &source) in instance.source_ids.iter().enumerate() {
            let v =
                table
                    .get(&instance.doc_id, source)
                    .ok_or_else(|| Error::MissingEntityData {
                        what: "text embedding",
                        doc_id: instance.doc_id.clone(),
                        entity: source.to_string(),
                    })?;
            for (dst, &src) in x.slice_mut(s![node, layout.text_range()]).iter_mut().zip(v) {
                *dst = src;
            }
        }
    }

    let geometry = layout.geometry_range();
    for (node, b) in instance.boxes.iter().enumerate() {
        for (dst, src) in x
            .slice_mut(s![node, geometry.clone()])
            .iter_mut()
            .zip(b.embedding())
        {
            *dst = src;
        }
    }

    let label_rows = match (&layout.label_classes, &instance.labels) {
        (Some(_), Some(labels)) => Some(
            labels
                .iter()
                .map(|&l| {
                    layout.label_row(l).ok_or_else(|| {
                        Error::InvalidArgument(format!("label {l} outside the layout's classes"))
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        ),
        (None, _) => None,
        (Some(_), None) => {
            return Err(Error::InvalidArgument(
                "layout expects labels but the instance hides them".into(),
            ))
        }
    };

    let edges = instance.graph.directed.clone();
    let mut edge_features = Array2::<f64>::zeros((edges.len(), EDGE_FEATURE_DIM));
    for (mut row, f) in edge_features
        .rows_mut()
        .into_iter()
        .zip(&instance.graph.features)
    {
        for (dst, &src) in row.iter_mut().zip(f.0.iter()) {
            *dst = src;
        }
    }

    Ok(GraphInstance {
        doc_id: instance.doc_id.clone(),
        static_features: x,
        label_rows,
        edges,
        edge_features,
        gold: instance.gold.clone(),
        layout: layout.clone(),
    })
}

/// Per-node feature vectors with the learned label block filled in.
pub fn build_node_features(
    instance: &TaskInstance,
    layout: &FeatureLayout,
    table: Option<&EmbeddingTable>,
    label_embedding: Option<&Array2<f64>>,
) -> Result<Array2<f64>> {
    build_graph_instance(instance, layout, table)?.node_matrix(label_embedding)
}
