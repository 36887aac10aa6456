//! XFUND / FUNSD readers.
//!
//! XFUND ships one JSON file per `<lang>.<split>`; each document carries an
//! `img` descriptor and a `document` array of entities. FUNSD ships one file
//! per page with a `form` array and no page size, so FUNSD pages are first
//! rewritten into an XFUND record (page size from the paired image or a
//! `pages.tsv` manifest) and then go through the same parser.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use serde::de::IgnoredAny;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{BBox, Corpus, Document, Entity, EntityId, Label, Language, Relation, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ParseOptions {
    /// Reject degenerate or out-of-page boxes and dangling links instead of
    /// repairing them with a warning.
    pub strict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceFormat {
    Xfund,
    Funsd,
}

#[derive(Deserialize)]
struct RawDocument {
    id: String,
    #[serde(alias = "image")]
    img: RawImage,
    #[serde(alias = "form")]
    document: Vec<RawEntity>,
}

#[derive(Deserialize)]
struct RawImage {
    width: u32,
    height: u32,
}

#[derive(Deserialize)]
struct RawEntity {
    id: i64,
    #[serde(default)]
    text: String,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    label: String,
    #[serde(default)]
    linking: Vec<[i64; 2]>,
    #[serde(default)]
    words: Option<Vec<IgnoredAny>>,
}

/// Parse one record. XFUND records are taken as-is; FUNSD records must
/// already carry `id` and `img` (see [`funsd_to_record`]).
pub fn parse_document(
    raw: &Value,
    format: SourceFormat,
    options: ParseOptions,
    origin: &str,
) -> Result<Document> {
    if format == SourceFormat::Funsd && raw.get("form").is_none() {
        return Err(Error::parse(origin, "form", "missing FUNSD `form` array"));
    }
    let record: RawDocument = serde_path_to_error::deserialize(raw).map_err(|e| {
        let field = e.path().to_string();
        Error::parse(origin, field, e.into_inner().to_string())
    })?;
    build_document(record, options, origin)
}

fn build_document(record: RawDocument, options: ParseOptions, origin: &str) -> Result<Document> {
    let origin = format!("{origin} [{}]", record.id);
    let (width, height) = (record.img.width, record.img.height);
    if width == 0 || height == 0 {
        return Err(Error::parse(
            &origin,
            "img",
            "page dimensions must be positive",
        ));
    }

    let mut by_source: HashMap<i64, EntityId> = HashMap::with_capacity(record.document.len());
    let mut entities = Vec::with_capacity(record.document.len());
    for (pos, raw) in record.document.iter().enumerate() {
        let id = EntityId(pos);
        if by_source.insert(raw.id, id).is_some() {
            return Err(Error::parse(
                &origin,
                format!("document[{pos}].id"),
                format!("duplicate entity id {}", raw.id),
            ));
        }
        let label: Label = raw
            .label
            .parse()
            .map_err(|m| Error::parse(&origin, format!("document[{pos}].label"), m))?;
        let bbox = checked_box(raw.bbox, width, height, options, &origin, pos)?;
        entities.push(Entity {
            id,
            source_id: raw.id,
            text: raw.text.clone(),
            bbox,
            label,
            word_count: raw.words.as_ref().map(Vec::len),
        });
    }

    let mut relations = BTreeSet::new();
    for (pos, raw) in record.document.iter().enumerate() {
        for &[head, tail] in &raw.linking {
            match (by_source.get(&head), by_source.get(&tail)) {
                (Some(&h), Some(&t)) if h != t => {
                    relations.insert(Relation { head: h, tail: t });
                }
                (Some(_), Some(_)) => warn!("{origin}: dropping self link on entity {head}"),
                _ if options.strict => {
                    return Err(Error::parse(
                        &origin,
                        format!("document[{pos}].linking"),
                        format!("link [{head}, {tail}] references an unknown entity"),
                    ))
                }
                _ => warn!("{origin}: dropping dangling link [{head}, {tail}]"),
            }
        }
    }

    Ok(Document {
        doc_id: record.id,
        page_width: width,
        page_height: height,
        entities,
        relations,
    })
}

fn checked_box(
    raw: [f64; 4],
    width: u32,
    height: u32,
    options: ParseOptions,
    origin: &str,
    pos: usize,
) -> Result<BBox> {
    let field = || format!("document[{pos}].box");
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::parse(origin, field(), "non-finite coordinate"));
    }
    let [x0, y0, x1, y1] = raw.map(|v| v.round());
    let reversed = x0 > x1 || y0 > y1;
    let outside = x0.min(x1) < 0.0
        || y0.min(y1) < 0.0
        || x0.max(x1) > width as f64
        || y0.max(y1) > height as f64;
    if reversed || outside {
        if options.strict {
            return Err(Error::parse(
                origin,
                field(),
                format!("degenerate box {raw:?} on {width}x{height} page"),
            ));
        }
        warn!("{origin}: repairing box {raw:?} of entity at position {pos}");
    }
    let clamp = |v: f64, hi: u32| v.clamp(0.0, hi as f64) as u32;
    let (x0, x1) = (clamp(x0.min(x1), width), clamp(x0.max(x1), width));
    let (y0, y1) = (clamp(y0.min(y1), height), clamp(y0.max(y1), height));
    Ok(BBox::new(x0, y0, x1, y1))
}

/// Serialize back to an XFUND record. Links are written on the head entity.
pub fn document_to_record(doc: &Document) -> Value {
    let entities: Vec<Value> = doc
        .entities
        .iter()
        .map(|e| {
            let linking: Vec<[i64; 2]> = doc
                .relations
                .iter()
                .filter(|r| r.head == e.id)
                .map(|r| [e.source_id, doc.entities[r.tail.0].source_id])
                .collect();
            let mut v = json!({
                "id": e.source_id,
                "text": e.text,
                "box": [e.bbox.x0, e.bbox.y0, e.bbox.x1, e.bbox.y1],
                "label": e.label.as_str(),
                "linking": linking,
            });
            if let Some(n) = e.word_count {
                v["words"] = Value::Array(vec![json!({}); n]);
            }
            v
        })
        .collect();
    json!({
        "id": doc.doc_id,
        "img": { "width": doc.page_width, "height": doc.page_height },
        "document": entities,
    })
}

/// Rewrite a FUNSD page (`{"form": [...]}`) as an XFUND document record.
/// FUNSD entity fields already match XFUND's; only the document id and the
/// page descriptor are added.
pub fn funsd_to_record(doc_id: &str, form_file: &Value, width: u32, height: u32) -> Value {
    json!({
        "id": doc_id,
        "img": { "width": width, "height": height },
        "form": form_file.get("form").cloned().unwrap_or(Value::Null),
    })
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        Error::parse(
            path.display().to_string(),
            format!("line {} column {}", e.line(), e.column()),
            e.to_string(),
        )
    })
}

/// Parse an XFUND `<lang>.<split>.json` file. The top level is either a list
/// of documents or an object holding them under `documents`.
pub fn parse_xfund_file(path: &Path, options: ParseOptions) -> Result<Vec<Document>> {
    let origin = path.display().to_string();
    let value = read_json(path)?;
    let docs = match &value {
        Value::Array(items) => items,
        Value::Object(map) => match map.get("documents") {
            Some(Value::Array(items)) => items,
            _ => {
                return Err(Error::parse(
                    &origin,
                    "documents",
                    "expected a document list",
                ))
            }
        },
        _ => return Err(Error::parse(&origin, "$", "expected a list or object")),
    };
    docs.iter()
        .enumerate()
        .map(|(i, raw)| {
            parse_document(raw, SourceFormat::Xfund, options, &format!("{origin} #{i}"))
        })
        .collect()
}

fn xfund_name(path: &Path) -> Option<(Language, Split)> {
    let name = path.file_name()?.to_str()?;
    let stem = name.strip_suffix(".json")?;
    let (lang, split) = stem.split_once('.')?;
    Some((lang.parse().ok()?, split.parse().ok()?))
}

fn read_page_manifest(path: &Path) -> Result<HashMap<String, (u32, u32)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let origin = path.display().to_string();
    let mut sizes = HashMap::new();
    for (n, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let cols: Vec<&str> = line.split('\t').collect();
        let parsed = match cols.as_slice() {
            [id, w, h] => w
                .trim()
                .parse()
                .ok()
                .zip(h.trim().parse().ok())
                .map(|s| (id.to_string(), s)),
            _ => None,
        };
        let (id, size) = parsed.ok_or_else(|| {
            Error::parse(
                &origin,
                format!("line {}", n + 1),
                "expected `doc_id\\twidth\\theight`",
            )
        })?;
        sizes.insert(id, size);
    }
    Ok(sizes)
}

fn load_funsd_split(dir: &Path, options: ParseOptions) -> Result<Vec<Document>> {
    let annotations = dir.join("annotations");
    let manifest = dir.join("pages.tsv");
    let sizes = if manifest.exists() {
        read_page_manifest(&manifest)?
    } else {
        HashMap::new()
    };
    let mut files = sorted_entries(&annotations)?;
    files.retain(|p| p.extension().is_some_and(|e| e == "json"));
    files
        .iter()
        .map(|path| {
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default();
            let (width, height) = match sizes.get(stem) {
                Some(&size) => size,
                None => {
                    let image = dir.join("images").join(format!("{stem}.png"));
                    let dims = imagesize::size(&image).map_err(|e| {
                        Error::parse(
                            path.display().to_string(),
                            "page size",
                            format!(
                                "no pages.tsv entry and cannot read {}: {e}",
                                image.display()
                            ),
                        )
                    })?;
                    (dims.width as u32, dims.height as u32)
                }
            };
            let form = read_json(path)?;
            let record = funsd_to_record(stem, &form, width, height);
            parse_document(
                &record,
                SourceFormat::Funsd,
                options,
                &path.display().to_string(),
            )
        })
        .collect()
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    Ok(entries)
}

/// Load every corpus found under `root`: XFUND files named
/// `<lang>.<split>.json`, and FUNSD releases laid out as
/// `training_data/annotations` / `testing_data/annotations` (loaded as EN).
/// Corpora are returned with raw (unfiltered) links, sorted by language and
/// split. A directory with no recognizable data yields an empty list.
pub fn load_dataset(root: &Path, options: ParseOptions) -> Result<Vec<Corpus>> {
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        ));
    }
    let mut corpora = Vec::new();
    let mut visit = |dir: &Path| -> Result<()> {
        for path in sorted_entries(dir)? {
            if path.is_file() {
                if let Some((language, split)) = xfund_name(&path) {
                    let documents = parse_xfund_file(&path, options)?;
                    corpora.push(Corpus {
                        language,
                        split,
                        documents,
                    });
                }
            } else if path.join("annotations").is_dir() {
                let name = path
                    .file_name()
                    .and_then(|n| n.to_str())
                    .unwrap_or_default();
                let split = match name {
                    n if n.starts_with("train") => Split::Train,
                    n if n.starts_with("test") => Split::Test,
                    _ => continue,
                };
                let documents = load_funsd_split(&path, options)?;
                corpora.push(Corpus {
                    language: Language::En,
                    split,
                    documents,
                });
            }
        }
        Ok(())
    };
    visit(root)?;
    // FUNSD archives unpack into a `dataset/` folder.
    let nested = root.join("dataset");
    if nested.is_dir() {
        visit(&nested)?;
    }
    corpora.sort_by_key(|c| (c.language, c.split));
    let mut merged: Vec<Corpus> = Vec::new();
    for corpus in corpora {
        match merged.last_mut() {
            Some(last) if last.language == corpus.language && last.split == corpus.split => {
                last.documents.extend(corpus.documents)
            }
            _ => merged.push(corpus),
        }
    }
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entity(id: i64, label: &str, bbox: [i64; 4], linking: &[[i64; 2]]) -> Value {
        json!({ "id": id, "text": format!("t{id}"), "box": bbox, "label": label, "linking": linking })
    }

    fn record(entities: Vec<Value>) -> Value {
        json!({ "id": "doc", "img": { "width": 1000, "height": 1000 }, "document": entities })
    }

    #[test]
    fn empty_record() {
        let doc = parse_document(
            &record(vec![]),
            SourceFormat::Xfund,
            Default::default(),
            "t",
        )
        .unwrap();
        assert!(doc.entities.is_empty());
        assert!(doc.relations.is_empty());
    }

    #[test]
    fn minimal_question_answer() {
        let raw = record(vec![
            entity(7, "question", [0, 0, 10, 10], &[[7, 9]]),
            entity(9, "answer", [20, 0, 30, 10], &[[7, 9]]),
        ]);
        let doc = parse_document(&raw, SourceFormat::Xfund, Default::default(), "t").unwrap();
        assert_eq!(doc.entities.len(), 2);
        assert_eq!(doc.entities[1].id, EntityId(1));
        assert_eq!(doc.entities[1].source_id, 9);
        assert_eq!(doc.relations, [Relation::new(0, 1)].into());
    }

    #[test]
    fn raw_links_are_not_filtered_at_parse() {
        let raw = record(vec![
            entity(0, "header", [0, 0, 10, 10], &[[0, 1]]),
            entity(1, "question", [0, 20, 10, 30], &[]),
        ]);
        let doc = parse_document(&raw, SourceFormat::Xfund, Default::default(), "t").unwrap();
        assert_eq!(doc.relations.len(), 1);
    }

    #[test]
    fn bad_label_names_the_field() {
        let raw = record(vec![entity(0, "key", [0, 0, 1, 1], &[])]);
        let err = parse_document(&raw, SourceFormat::Xfund, Default::default(), "t").unwrap_err();
        assert!(err.to_string().contains("document[0].label"), "{err}");
    }

    #[test]
    fn missing_field_names_the_path() {
        let raw = json!({ "id": "d", "img": { "width": 10, "height": 10 },
                          "document": [ { "id": 0, "label": "other", "text": "" } ] });
        let err = parse_document(&raw, SourceFormat::Xfund, Default::default(), "t").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("document[0]") && msg.contains("box"), "{msg}");
    }

    #[test]
    fn reversed_box_repaired_or_rejected() {
        let raw = record(vec![entity(0, "other", [50, 10, 20, 30], &[])]);
        let doc = parse_document(&raw, SourceFormat::Xfund, Default::default(), "t").unwrap();
        assert_eq!(doc.entities[0].bbox, BBox::new(20, 10, 50, 30));
        let strict = ParseOptions { strict: true };
        let err = parse_document(&raw, SourceFormat::Xfund, strict, "t").unwrap_err();
        assert!(err.to_string().contains("document[0].box"));
    }

    #[test]
    fn out_of_page_box_clamped() {
        let raw = record(vec![entity(0, "other", [-3, 10, 1200, 30], &[])]);
        let doc = parse_document(&raw, SourceFormat::Xfund, Default::default(), "t").unwrap();
        assert_eq!(doc.entities[0].bbox, BBox::new(0, 10, 1000, 30));
    }

    #[test]
    fn dangling_links() {
        let raw = record(vec![entity(0, "question", [0, 0, 1, 1], &[[0, 5]])]);
        let doc = parse_document(&raw, SourceFormat::Xfund, Default::default(), "t").unwrap();
        assert!(doc.relations.is_empty());
        let strict = ParseOptions { strict: true };
        assert!(parse_document(&raw, SourceFormat::Xfund, strict, "t").is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let raw = record(vec![
            entity(3, "question", [0, 0, 1, 1], &[]),
            entity(3, "answer", [0, 0, 1, 1], &[]),
        ]);
        assert!(parse_document(&raw, SourceFormat::Xfund, Default::default(), "t").is_err());
    }

    #[test]
    fn funsd_conversion() {
        let form = json!({ "form": [
            { "id": 0, "text": "Date:", "box": [10, 10, 60, 30], "label": "question",
              "words": [{ "text": "Date:", "box": [10, 10, 60, 30] }], "linking": [[0, 1]] },
            { "id": 1, "text": "1/2/93", "box": [70, 10, 140, 30], "label": "answer",
              "words": [], "linking": [[0, 1]] }
        ]});
        let rec = funsd_to_record("0001", &form, 762, 1000);
        let doc = parse_document(&rec, SourceFormat::Funsd, Default::default(), "t").unwrap();
        assert_eq!(doc.doc_id, "0001");
        assert_eq!(doc.page_width, 762);
        assert_eq!(doc.entities[0].word_count, Some(1));
        assert_eq!(doc.relations, [Relation::new(0, 1)].into());
    }
}
