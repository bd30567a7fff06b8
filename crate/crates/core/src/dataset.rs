//! Generated dataset container and its line-delimited on-disk format.
//!
//! A dataset file starts with one header record followed by one record per
//! dialog. Per-turn candidate sets, when present, go to a sidecar file next
//! to the dataset (`<file>.candidates.jsonl`) keyed by dialog id.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dialog::{validate_dialog, Dialog, Utterance};
use crate::error::{Error, Result};
use crate::rerank::TurnCandidates;

pub const FORMAT_NAME: &str = "convqa-dataset";
pub const FORMAT_VERSION: u32 = 1;

/// Provenance recorded for each generated dialog.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DialogMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_text: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub keywords: Vec<Vec<String>>,
    /// Per question slot; kept in the sidecar file, not the main record.
    #[serde(skip)]
    pub candidates: Vec<TurnCandidates>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvQaDataset {
    pub name: String,
    pub dialogs: Vec<Dialog>,
    pub meta: BTreeMap<String, DialogMeta>,
}

impl ConvQaDataset {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Default::default()
        }
    }

    /// Builds a dataset with empty metadata for every dialog.
    pub fn from_dialogs(name: impl Into<String>, dialogs: Vec<Dialog>) -> Self {
        let meta = dialogs
            .iter()
            .map(|d| (d.id.clone(), DialogMeta::default()))
            .collect();
        Self {
            name: name.into(),
            dialogs,
            meta,
        }
    }

    pub fn push(&mut self, dialog: Dialog, meta: DialogMeta) {
        self.meta.insert(dialog.id.clone(), meta);
        self.dialogs.push(dialog);
    }

    pub fn len(&self) -> usize {
        self.dialogs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dialogs.is_empty()
    }

    pub fn meta_for(&self, id: &str) -> Option<&DialogMeta> {
        self.meta.get(id)
    }

    /// Checks dialog invariants, id uniqueness and meta/dialog correspondence.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for d in &self.dialogs {
            if !seen.insert(d.id.as_str()) {
                return Err(Error::DuplicateId(d.id.clone()));
            }
            if let Some(v) = validate_dialog(d).first() {
                return Err(Error::InvalidDialog {
                    id: d.id.clone(),
                    reason: v.to_string(),
                });
            }
            if !self.meta.contains_key(&d.id) {
                return Err(Error::InvalidDialog {
                    id: d.id.clone(),
                    reason: "no metadata entry".into(),
                });
            }
        }
        if let Some(orphan) = self.meta.keys().find(|k| !seen.contains(k.as_str())) {
            return Err(Error::InvalidDialog {
                id: orphan.clone(),
                reason: "metadata entry without a dialog".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    name: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source_passage_id: Option<String>,
    utterances: Vec<Utterance>,
    #[serde(default)]
    meta: DialogMeta,
}

#[derive(Debug, Serialize, Deserialize)]
struct CandidateRecord {
    id: String,
    turns: Vec<TurnCandidates>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".candidates.jsonl");
    path.with_file_name(name)
}

/// Writes the dataset, plus the candidate sidecar when any dialog carries candidates.
///
/// A stale sidecar from an earlier run is removed when no candidates are present.
pub fn write_dataset(ds: &ConvQaDataset, path: &Path) -> Result<()> {
    ds.validate()?;
    let mut out = BufWriter::new(fs::File::create(path)?);
    let header = Header {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        name: ds.name.clone(),
    };
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    let empty = DialogMeta::default();
    for d in &ds.dialogs {
        let meta = ds.meta.get(&d.id).unwrap_or(&empty);
        let rec = Record {
            id: d.id.clone(),
            title: d.title.clone(),
            source_passage_id: d.source_passage_id.clone(),
            utterances: d.utterances.clone(),
            meta: DialogMeta {
                candidates: Vec::new(),
                ..meta.clone()
            },
        };
        writeln!(out, "{}", serde_json::to_string(&rec)?)?;
    }
    out.flush()?;

    let sidecar = sidecar_path(path);
    let with_candidates: Vec<_> = ds
        .dialogs
        .iter()
        .filter_map(|d| {
            ds.meta
                .get(&d.id)
                .filter(|m| !m.candidates.is_empty())
                .map(|m| (d, m))
        })
        .collect();
    if with_candidates.is_empty() {
        if sidecar.exists() {
            fs::remove_file(&sidecar)?;
        }
        return Ok(());
    }
    let mut out = BufWriter::new(fs::File::create(&sidecar)?);
    for (d, m) in with_candidates {
        let rec = CandidateRecord {
            id: d.id.clone(),
            turns: m.candidates.clone(),
        };
        writeln!(out, "{}", serde_json::to_string(&rec)?)?;
    }
    out.flush()?;
    Ok(())
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn read_dataset(path: &Path) -> Result<ConvQaDataset> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let header: Header = match lines.next() {
        None => return Err(parse_err(path, 1, "missing header record")),
        Some((_, line)) => serde_json::from_str(&line?)
            .map_err(|e| parse_err(path, 1, format!("bad header: {e}")))?,
    };
    if header.format != FORMAT_NAME || header.version != FORMAT_VERSION {
        return Err(parse_err(
            path,
            1,
            format!("unsupported format {} v{}", header.format, header.version),
        ));
    }
    let mut ds = ConvQaDataset::new(header.name);
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record =
            serde_json::from_str(&line).map_err(|e| parse_err(path, i + 1, e.to_string()))?;
        if ds.meta.contains_key(&rec.id) {
            return Err(Error::DuplicateId(rec.id));
        }
        let dialog = Dialog {
            id: rec.id,
            title: rec.title,
            source_passage_id: rec.source_passage_id,
            utterances: rec.utterances,
        };
        ds.push(dialog, rec.meta);
    }

    let sidecar = sidecar_path(path);
    if sidecar.exists() {
        let reader = BufReader::new(fs::File::open(&sidecar)?);
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: CandidateRecord = serde_json::from_str(&line)
                .map_err(|e| parse_err(&sidecar, i + 1, e.to_string()))?;
            match ds.meta.get_mut(&rec.id) {
                Some(m) => m.candidates = rec.turns,
                None => {
                    return Err(parse_err(
                        &sidecar,
                        i + 1,
                        format!("candidates for unknown dialog `{}`", rec.id),
                    ))
                }
            }
        }
    }
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialog::{Origin, Role};
    use crate::rerank::{Candidate, CandidateSet};

    fn two_dialogs() -> ConvQaDataset {
        let mut ds = ConvQaDataset::new("fixture");
        let d1 = Dialog::alternating("a", Role::User, &["Where?", "Here."]);
        let mut d2 = Dialog::new(
            "b",
            vec![
                Utterance::new(Role::User, "What grows?", Origin::Generated),
                Utterance::new(Role::Agent, "The shrub grows.", Origin::SourceSentence),
            ],
        );
        d2.title = Some("Shrub".into());
        d2.source_passage_id = Some("p-b".into());
        ds.push(d1, DialogMeta::default());
        ds.push(
            d2,
            DialogMeta {
                prompt_text: Some("Hello, I want to learn about Shrub.".into()),
                keywords: vec![vec!["shrub".into(), "grows".into()]],
                candidates: vec![TurnCandidates {
                    selected: 1,
                    candidates: CandidateSet::new(vec![
                        Candidate::new("What?", -0.25),
                        Candidate {
                            text: "What grows?".into(),
                            model_score: -0.5,
                            relevance_score: Some(0.75),
                        },
                    ])
                    .unwrap(),
                }],
            },
        );
        ds
    }

    #[test]
    fn empty_dataset_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.jsonl");
        let ds = ConvQaDataset::new("empty");
        write_dataset(&ds, &p).unwrap();
        let raw = fs::read_to_string(&p).unwrap();
        assert_eq!(raw.lines().count(), 1);
        assert_eq!(read_dataset(&p).unwrap(), ds);
    }

    #[test]
    fn roundtrip_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ds.jsonl");
        let ds = two_dialogs();
        write_dataset(&ds, &p).unwrap();
        assert!(sidecar_path(&p).exists());
        let back = read_dataset(&p).unwrap();
        assert_eq!(back, ds);
        let first = fs::read(&p).unwrap();
        write_dataset(&back, &p).unwrap();
        assert_eq!(fs::read(&p).unwrap(), first);
        assert!(!String::from_utf8(first).unwrap().lines().any(|l| l.ends_with(' ')));
    }

    #[test]
    fn duplicate_id_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("dup.jsonl");
        let rec = r#"{"id":"x1","utterances":[{"role":"user","text":"q","origin":"corpus"},{"role":"agent","text":"a","origin":"corpus"}]}"#;
        fs::write(
            &p,
            format!("{{\"format\":\"convqa-dataset\",\"version\":1,\"name\":\"n\"}}\n{rec}\n{rec}\n"),
        )
        .unwrap();
        match read_dataset(&p) {
            Err(Error::DuplicateId(id)) => assert_eq!(id, "x1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_error_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.jsonl");
        fs::write(&p, "{\"format\":\"convqa-dataset\",\"version\":1,\"name\":\"n\"}\n{not json\n").unwrap();
        match read_dataset(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_dialog_is_named_on_read_and_write() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("inv.jsonl");
        let mut ds = two_dialogs();
        ds.dialogs[0].utterances[1].role = Role::User;
        assert!(matches!(write_dataset(&ds, &p), Err(Error::InvalidDialog { ref id, .. }) if id == "a"));
        let rec = r#"{"id":"bad","utterances":[{"role":"user","text":"q","origin":"corpus"},{"role":"user","text":"a","origin":"corpus"}]}"#;
        fs::write(&p, format!("{{\"format\":\"convqa-dataset\",\"version\":1,\"name\":\"n\"}}\n{rec}\n")).unwrap();
        assert!(matches!(read_dataset(&p), Err(Error::InvalidDialog { ref id, .. }) if id == "bad"));
    }

    #[test]
    fn stale_sidecar_removed() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ds.jsonl");
        write_dataset(&two_dialogs(), &p).unwrap();
        let mut ds = two_dialogs();
        ds.meta.get_mut("b").unwrap().candidates.clear();
        write_dataset(&ds, &p).unwrap();
        assert!(!sidecar_path(&p).exists());
        assert_eq!(read_dataset(&p).unwrap(), ds);
    }
}
