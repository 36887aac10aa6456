//! C ABI over `ecn-core`.
//!
//! Handles are opaque and owned by the caller once returned; free them with
//! the matching `*_free`. Every fallible call returns an [`EcnStatus`] and
//! leaves a message for [`ecn_last_error`] on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ecn_core::corpus::{
    filter_gold_relations, parse_xfund_file, Document, Language, ParseOptions, Relation,
    TaskInstance, TaskSetting, TrainingScope,
};
use ecn_core::evaluation::{relation_prf, Metrics};
use ecn_core::features::{build_graph_instance, GraphInstance};
use ecn_core::geometry::{edge_features, line_of_sight_graph, NormalizedBBox, EDGE_FEATURE_DIM};
use ecn_core::model::{forward, predict, Checkpoint};
use ecn_core::sidecar::{load_embedding_sidecar, EmbeddingTable};
use ecn_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EcnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    LayoutMismatch = 5,
    Numeric = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Loaded checkpoint plus an optional text-embedding table.
pub struct EcnModel {
    checkpoint: Checkpoint,
    embeddings: Option<EmbeddingTable>,
}

/// Gold-filtered documents of one language.
pub struct EcnCorpus {
    language: Language,
    documents: Vec<Document>,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EcnMetrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl From<Metrics> for EcnMetrics {
    fn from(m: Metrics) -> Self {
        EcnMetrics {
            tp: m.tp,
            fp: m.fp,
            fn_: m.fn_,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: impl Into<String>) {
    let message = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(message).ok());
}

fn status_of(err: &Error) -> EcnStatus {
    match err {
        Error::Io { .. } => EcnStatus::Io,
        Error::Parse { .. }
        | Error::Sidecar { .. }
        | Error::Checkpoint { .. }
        | Error::MissingEntityData { .. } => EcnStatus::Parse,
        Error::LayoutMismatch { .. } => EcnStatus::LayoutMismatch,
        Error::Shape { .. } | Error::NonFinite(_) | Error::Diverged { .. } => EcnStatus::Numeric,
        _ => EcnStatus::InvalidArgument,
    }
}

/// Run `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (EcnStatus, String)>) -> EcnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            EcnStatus::Ok
        }
        Ok(Err((status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            EcnStatus::Panic
        }
    }
}

fn core_err(e: Error) -> (EcnStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (EcnStatus, String) {
    (EcnStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg<'a>(p: *const c_char, what: &str) -> Result<&'a Path, (EcnStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (EcnStatus::InvalidArgument, format!("{what} is not UTF-8")))?;
    Ok(Path::new(s))
}

unsafe fn read_boxes(
    boxes: *const f64,
    count: usize,
) -> Result<Vec<NormalizedBBox>, (EcnStatus, String)> {
    if count == 0 {
        return Ok(Vec::new());
    }
    if boxes.is_null() {
        return Err(null("boxes"));
    }
    let raw = std::slice::from_raw_parts(boxes, 4 * count);
    raw.chunks_exact(4)
        .map(|c| {
            if c.iter().all(|v| v.is_finite()) && c[0] <= c[2] && c[1] <= c[3] {
                Ok(NormalizedBBox::new(c[0], c[1], c[2], c[3]))
            } else {
                Err((EcnStatus::InvalidArgument, format!("bad box {c:?}")))
            }
        })
        .collect()
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ecn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next fallible call on the same thread.
#[no_mangle]
pub extern "C" fn ecn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ecn_model_load(path: *const c_char, out: *mut *mut EcnModel) -> EcnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = path_arg(path, "path")?;
        let checkpoint = Checkpoint::load(path).map_err(core_err)?;
        *out = Box::into_raw(Box::new(EcnModel {
            checkpoint,
            embeddings: None,
        }));
        Ok(())
    })
}

/// Attach an `ecn-emb v1` sidecar; required for checkpoints trained with text.
///
/// # Safety
/// `model` must come from [`ecn_model_load`]; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ecn_model_load_embeddings(
    model: *mut EcnModel,
    path: *const c_char,
) -> EcnStatus {
    guard(|| {
        let model = model.as_mut().ok_or_else(|| null("model"))?;
        let table = load_embedding_sidecar(path_arg(path, "path")?).map_err(core_err)?;
        model.embeddings = Some(table);
        Ok(())
    })
}

/// # Safety
/// `model` must be null or come from [`ecn_model_load`], and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ecn_model_free(model: *mut EcnModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ecn_model_parameter_count(model: *const EcnModel) -> usize {
    model
        .as_ref()
        .map_or(0, |m| m.checkpoint.params.parameter_count())
}

/// Load one XFUND-format JSON file; links are gold-filtered to
/// question→answer pairs.
///
/// # Safety
/// `path` and `language` must be NUL-terminated strings, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ecn_corpus_load_xfund(
    path: *const c_char,
    language: *const c_char,
    out: *mut *mut EcnCorpus,
) -> EcnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = path_arg(path, "path")?;
        if language.is_null() {
            return Err(null("language"));
        }
        let language: Language = CStr::from_ptr(language)
            .to_str()
            .map_err(|_| {
                (
                    EcnStatus::InvalidArgument,
                    "language is not UTF-8".to_owned(),
                )
            })?
            .parse()
            .map_err(core_err)?;
        let documents = parse_xfund_file(path, ParseOptions::default())
            .map_err(core_err)?
            .into_iter()
            .map(filter_gold_relations)
            .collect();
        *out = Box::into_raw(Box::new(EcnCorpus {
            language,
            documents,
        }));
        Ok(())
    })
}

/// # Safety
/// `corpus` must be null or come from [`ecn_corpus_load_xfund`], and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ecn_corpus_free(corpus: *mut EcnCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Number of documents; 0 for a null handle.
///
/// # Safety
/// `corpus` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ecn_corpus_len(corpus: *const EcnCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.documents.len())
}

fn instance_for(
    model: &EcnModel,
    corpus: &EcnCorpus,
    doc: &Document,
) -> Result<(TaskInstance, GraphInstance), (EcnStatus, String)> {
    let layout = &model.checkpoint.layout;
    let setting = TaskSetting {
        use_labels: layout.label_classes.is_some(),
        entity_scope: layout.entity_scope,
        training_scope: TrainingScope::Monolingual(corpus.language),
    };
    let inst = TaskInstance::from_document(doc, corpus.language, &setting).map_err(core_err)?;
    let graph = build_graph_instance(&inst, layout, model.embeddings.as_ref()).map_err(core_err)?;
    Ok((inst, graph))
}

fn threshold_of(model: &EcnModel, threshold: f64) -> f64 {
    if threshold.is_nan() || threshold < 0.0 {
        model.checkpoint.config.threshold
    } else {
        threshold
    }
}

/// Predicted question→answer pairs of document `index`, written as
/// `(head, tail)` entity ids from the source file into `out_pairs`
/// (`2 * capacity` slots). `*out_len` receives the pair count; when it
/// exceeds `capacity` nothing is written and `BufferTooSmall` is returned.
/// A negative `threshold` uses the checkpoint's.
///
/// # Safety
/// Handles must be live; `out_pairs` must hold `2 * capacity` values.
#[no_mangle]
pub unsafe extern "C" fn ecn_predict(
    model: *const EcnModel,
    corpus: *const EcnCorpus,
    index: usize,
    threshold: f64,
    out_pairs: *mut i64,
    capacity: usize,
    out_len: *mut usize,
) -> EcnStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let corpus = corpus.as_ref().ok_or_else(|| null("corpus"))?;
        let out_len = out_len.as_mut().ok_or_else(|| null("out_len"))?;
        let doc = corpus.documents.get(index).ok_or_else(|| {
            (
                EcnStatus::InvalidArgument,
                format!("document {index} out of range"),
            )
        })?;
        let (inst, graph) = instance_for(model, corpus, doc)?;
        let (_, scores) = forward(&graph, &model.checkpoint.params, &model.checkpoint.config)
            .map_err(core_err)?;
        let pairs = predict(&scores, threshold_of(model, threshold));
        *out_len = pairs.len();
        if pairs.len() > capacity {
            return Err((
                EcnStatus::BufferTooSmall,
                format!("{} pairs, capacity {capacity}", pairs.len()),
            ));
        }
        if !pairs.is_empty() && out_pairs.is_null() {
            return Err(null("out_pairs"));
        }
        for (k, r) in pairs.iter().enumerate() {
            *out_pairs.add(2 * k) = inst.source_ids[r.head.0];
            *out_pairs.add(2 * k + 1) = inst.source_ids[r.tail.0];
        }
        Ok(())
    })
}

/// Micro-averaged relation metrics over every document of `corpus`.
///
/// # Safety
/// Handles must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ecn_evaluate(
    model: *const EcnModel,
    corpus: *const EcnCorpus,
    threshold: f64,
    out: *mut EcnMetrics,
) -> EcnStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let corpus = corpus.as_ref().ok_or_else(|| null("corpus"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let theta = threshold_of(model, threshold);
        let mut total = Metrics::default();
        for doc in &corpus.documents {
            let (_, graph) = instance_for(model, corpus, doc)?;
            let (_, scores) = forward(&graph, &model.checkpoint.params, &model.checkpoint.config)
                .map_err(core_err)?;
            let gold: Vec<_> = graph
                .gold
                .iter()
                .map(|&(h, t)| Relation::new(h, t))
                .collect();
            total += relation_prf(&predict(&scores, theta), &gold);
        }
        *out = total.into();
        Ok(())
    })
}

/// The 14 edge features of the directed pair `(a, b)`. Boxes are
/// `[x0, y0, x1, y1]` in page-normalized coordinates.
///
/// # Safety
/// `a` and `b` must point to 4 values, `out` to 14.
#[no_mangle]
pub unsafe extern "C" fn ecn_edge_features(
    a: *const f64,
    b: *const f64,
    out: *mut f64,
) -> EcnStatus {
    guard(|| {
        if a.is_null() || b.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        let a = read_boxes(a, 1)?[0];
        let b = read_boxes(b, 1)?[0];
        let f = edge_features(&a, &b);
        std::slice::from_raw_parts_mut(out, EDGE_FEATURE_DIM).copy_from_slice(&f.0);
        Ok(())
    })
}

/// Line-of-sight edges of `count` boxes (`4 * count` values). Edges are
/// written as `(i, j)` with `i < j` into `out_edges` (`2 * capacity`
/// slots), with the same `BufferTooSmall` protocol as [`ecn_predict`].
///
/// # Safety
/// `boxes` must hold `4 * count` values and `out_edges` `2 * capacity`.
#[no_mangle]
pub unsafe extern "C" fn ecn_line_of_sight(
    boxes: *const f64,
    count: usize,
    out_edges: *mut usize,
    capacity: usize,
    out_len: *mut usize,
) -> EcnStatus {
    guard(|| {
        let out_len = out_len.as_mut().ok_or_else(|| null("out_len"))?;
        let boxes = read_boxes(boxes, count)?;
        let graph = line_of_sight_graph(&boxes);
        *out_len = graph.edges.len();
        if graph.edges.len() > capacity {
            return Err((
                EcnStatus::BufferTooSmall,
                format!("{} edges, capacity {capacity}", graph.edges.len()),
            ));
        }
        if !graph.edges.is_empty() && out_edges.is_null() {
            return Err(null("out_edges"));
        }
        for (k, &(i, j)) in graph.edges.iter().enumerate() {
            *out_edges.add(2 * k) = i;
            *out_edges.add(2 * k + 1) = j;
        }
        Ok(())
    })
}
