//! Corpus registry, native-format adapters and loaders.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataset::read_dataset;
use crate::dialog::{validate_dialog, Dialog, Passage, Role, Utterance};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::segment::{segment_passage, SentenceSegmenter};
use crate::text::normalize_ws;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusKind {
    OpenDomainDialog,
    ConvqaDialog,
    TextPassages,
}

impl CorpusKind {
    pub fn is_dialog(self) -> bool {
        !matches!(self, CorpusKind::TextPassages)
    }
}

/// Native format readers, one per supported corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adapter {
    /// `dialogues_text.txt`: one dialog per line, turns separated by `__eou__`.
    DailyDialog,
    /// JSON array of `{conversation_id, utterances: [{speaker, text}]}`.
    Taskmaster,
    /// JSON lines of `{qid: "<dialog>_q#<n>", question|rewrite, answer: {text}}`.
    OrQuac,
    /// JSON array of `{Conversation_no, Turn_no, Question, Answer}`.
    Qrecc,
    /// This toolkit's own dataset format.
    Native,
    /// JSON lines of `{id, title, text}`.
    Wikipedia,
    /// JSON lines of `{pmid, title, abstract}`.
    Pubmed,
    /// JSON lines of `{url, title, text}`.
    CcNews,
    /// JSON lines of `{docId, metadata: {title}, abstract}`.
    Elsevier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusDescriptor {
    pub name: String,
    pub kind: CorpusKind,
    pub path: PathBuf,
    pub adapter: Adapter,
    /// Truncate dialogs to this many utterances; unlimited when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_turns: Option<usize>,
}

#[derive(Debug, Deserialize)]
struct RegistryEntry {
    kind: CorpusKind,
    path: PathBuf,
    adapter: Adapter,
    #[serde(default)]
    max_turns: Option<usize>,
}

#[derive(Debug, Deserialize)]
struct RegistryFile {
    #[serde(default)]
    corpus: BTreeMap<String, RegistryEntry>,
}

/// Named corpora loaded from a TOML registry file:
///
/// ```toml
/// [corpus.qrecc]
/// kind = "convqa_dialog"
/// path = "data/qrecc_train.json"
/// adapter = "qrecc"
/// ```
///
/// Relative paths resolve against the registry file's directory.
#[derive(Debug, Clone, Default)]
pub struct CorpusRegistry {
    entries: BTreeMap<String, CorpusDescriptor>,
}

impl CorpusRegistry {
    pub fn from_toml(src: &str, base: &Path) -> Result<Self> {
        let file: RegistryFile =
            toml::from_str(src).map_err(|e| Error::Config(format!("corpus registry: {e}")))?;
        let entries = file
            .corpus
            .into_iter()
            .map(|(name, e)| {
                let path = if e.path.is_relative() {
                    base.join(&e.path)
                } else {
                    e.path
                };
                let desc = CorpusDescriptor {
                    name: name.clone(),
                    kind: e.kind,
                    path,
                    adapter: e.adapter,
                    max_turns: e.max_turns,
                };
                (name, desc)
            })
            .collect();
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = fs::read_to_string(path)?;
        Self::from_toml(&src, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn get(&self, name: &str) -> Result<&CorpusDescriptor> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::Config(format!("corpus `{name}` is not in the registry")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn insert(&mut self, desc: CorpusDescriptor) {
        self.entries.insert(desc.name.clone(), desc);
    }
}

/// Files of a corpus: the path itself, or every regular file in the directory sorted by name.
fn corpus_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        Ok(files)
    } else {
        Ok(vec![path.to_path_buf()])
    }
}

/// Outcome of reading one native record.
enum Parsed<T> {
    Ok(T),
    Skipped,
}

struct FileLoad<T> {
    items: Vec<T>,
    skipped: usize,
}

#[derive(Debug, Clone)]
pub struct LoadedDialogs {
    pub dialogs: Vec<Dialog>,
    pub skipped: usize,
    /// USER turns in ConvQA corpora that do not end with `?`.
    pub non_question_user_turns: usize,
}

impl LoadedDialogs {
    pub fn mean_turns(&self) -> f64 {
        if self.dialogs.is_empty() {
            return 0.0;
        }
        self.dialogs.iter().map(Dialog::len).sum::<usize>() as f64 / self.dialogs.len() as f64
    }
}

fn check_skip_rate(skipped: usize, loaded: usize) -> Result<()> {
    let total = skipped + loaded;
    if total > 0 && skipped * 100 > total {
        return Err(Error::TooManyFailures {
            failed: skipped,
            total,
        });
    }
    Ok(())
}

/// Merges consecutive same-speaker turns so roles alternate.
fn alternating_from_turns(id: String, turns: Vec<(Role, String)>) -> Dialog {
    let mut merged: Vec<(Role, String)> = Vec::new();
    for (role, text) in turns {
        let text = normalize_ws(&text);
        if text.is_empty() {
            continue;
        }
        match merged.last_mut() {
            Some((r, t)) if *r == role => {
                t.push(' ');
                t.push_str(&text);
            }
            _ => merged.push((role, text)),
        }
    }
    let utterances = merged
        .into_iter()
        .map(|(r, t)| Utterance::new(r, &t, crate::dialog::Origin::Corpus))
        .collect();
    Dialog::new(id, utterances)
}

fn finish(d: Dialog, max_turns: Option<usize>) -> Parsed<Dialog> {
    let mut d = d;
    if let Some(m) = max_turns {
        d.utterances.truncate(m.max(2));
    }
    if validate_dialog(&d).is_empty() {
        Parsed::Ok(d)
    } else {
        Parsed::Skipped
    }
}

fn read_json_array(path: &Path) -> Result<Vec<Value>> {
    let src = fs::read_to_string(path)?;
    let v: Value = serde_json::from_str(&src).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    match v {
        Value::Array(items) => Ok(items),
        _ => Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "expected a JSON array".into(),
        }),
    }
}

/// JSON lines; unparseable lines become `None`.
fn read_json_lines(path: &Path) -> Result<Vec<Option<Value>>> {
    let src = fs::read_to_string(path)?;
    Ok(src
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).ok())
        .collect())
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn load_dialog_file(path: &Path, desc: &CorpusDescriptor) -> Result<FileLoad<Dialog>> {
    let stem = file_stem(path);
    let parsed: Vec<Parsed<Dialog>> = match desc.adapter {
        Adapter::DailyDialog => fs::read_to_string(path)?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, line)| {
                let texts: Vec<&str> = line
                    .split("__eou__")
                    .map(str::trim)
                    .filter(|t| !t.is_empty())
                    .collect();
                let turns = texts.iter().map(|t| t.to_string());
                let mut role = Role::User;
                let turns = turns
                    .map(|t| {
                        let r = role;
                        role = role.other();
                        (r, t)
                    })
                    .collect();
                finish(alternating_from_turns(format!("{stem}-{i}"), turns), desc.max_turns)
            })
            .collect(),
        Adapter::Taskmaster => read_json_array(path)?
            .into_iter()
            .enumerate()
            .map(|(i, conv)| {
                let id = conv["conversation_id"]
                    .as_str()
                    .map_or_else(|| format!("{stem}-{i}"), str::to_string);
                let Some(utts) = conv["utterances"].as_array() else {
                    return Parsed::Skipped;
                };
                let turns = utts
                    .iter()
                    .filter_map(|u| {
                        let role = match u["speaker"].as_str()? {
                            "USER" => Role::User,
                            _ => Role::Agent,
                        };
                        Some((role, u["text"].as_str()?.to_string()))
                    })
                    .collect();
                finish(alternating_from_turns(id, turns), desc.max_turns)
            })
            .collect(),
        Adapter::Qrecc => {
            let mut convs: BTreeMap<i64, Vec<(i64, String, String)>> = BTreeMap::new();
            let mut bad = 0;
            for item in read_json_array(path)? {
                match (
                    item["Conversation_no"].as_i64(),
                    item["Turn_no"].as_i64(),
                    item["Question"].as_str(),
                    item["Answer"].as_str(),
                ) {
                    (Some(c), Some(t), Some(q), Some(a)) => {
                        convs.entry(c).or_default().push((t, q.into(), a.into()))
                    }
                    _ => bad += 1,
                }
            }
            let mut out: Vec<Parsed<Dialog>> = (0..bad).map(|_| Parsed::Skipped).collect();
            out.extend(convs.into_iter().map(|(c, mut turns)| {
                turns.sort_by_key(|t| t.0);
                let turns = turns
                    .into_iter()
                    .flat_map(|(_, q, a)| [(Role::User, q), (Role::Agent, a)])
                    .collect();
                finish(alternating_from_turns(format!("qrecc-{c}"), turns), desc.max_turns)
            }));
            out
        }
        Adapter::OrQuac => {
            let mut convs: BTreeMap<String, Vec<(u64, String, String)>> = BTreeMap::new();
            let mut bad = 0;
            for item in read_json_lines(path)? {
                let parsed = item.and_then(|v| {
                    let qid = v["qid"].as_str()?;
                    let (conv, turn) = qid.rsplit_once("_q#")?;
                    let q = v["rewrite"].as_str().or_else(|| v["question"].as_str())?;
                    let a = v["answer"]["text"].as_str()?;
                    Some((conv.to_string(), turn.parse().ok()?, q.to_string(), a.to_string()))
                });
                match parsed {
                    Some((c, t, q, a)) => convs.entry(c).or_default().push((t, q, a)),
                    None => bad += 1,
                }
            }
            let mut out: Vec<Parsed<Dialog>> = (0..bad).map(|_| Parsed::Skipped).collect();
            out.extend(convs.into_iter().map(|(c, mut turns)| {
                turns.sort_by_key(|t| t.0);
                let turns = turns
                    .into_iter()
                    .flat_map(|(_, q, a)| [(Role::User, q), (Role::Agent, a)])
                    .collect();
                finish(alternating_from_turns(c, turns), desc.max_turns)
            }));
            out
        }
        Adapter::Native => read_dataset(path)?
            .dialogs
            .into_iter()
            .map(|d| finish(d, desc.max_turns))
            .collect(),
        other => {
            return Err(Error::Config(format!(
                "adapter {other:?} reads passages, not dialogs"
            )))
        }
    };
    let mut items = Vec::new();
    let mut skipped = 0;
    for p in parsed {
        match p {
            Parsed::Ok(d) => items.push(d),
            Parsed::Skipped => skipped += 1,
        }
    }
    Ok(FileLoad { items, skipped })
}

/// Loads every dialog of a dialog corpus.
///
/// Files are read in parallel and merged in sorted file-name order.
/// Unparseable or invalid records are skipped; more than 1% skipped is an error.
pub fn load_dialog_corpus(desc: &CorpusDescriptor, exec: Execution) -> Result<LoadedDialogs> {
    if !desc.kind.is_dialog() {
        return Err(Error::Config(format!(
            "corpus `{}` is not a dialog corpus",
            desc.name
        )));
    }
    let files = corpus_files(&desc.path)?;
    let loads = exec.map(&files, |f| load_dialog_file(f, desc));
    let mut dialogs = Vec::new();
    let mut skipped = 0;
    for l in loads {
        let l = l?;
        dialogs.extend(l.items);
        skipped += l.skipped;
    }
    check_skip_rate(skipped, dialogs.len())?;
    let mut non_question_user_turns = 0;
    if desc.kind == CorpusKind::ConvqaDialog {
        for d in &dialogs {
            for u in d.utterances.iter().filter(|u| u.role == Role::User) {
                if !u.text.ends_with('?') {
                    non_question_user_turns += 1;
                }
            }
        }
        if non_question_user_turns > 0 {
            log::warn!(
                "{}: {non_question_user_turns} user turns do not end with '?'",
                desc.name
            );
        }
    }
    log::info!(
        "{}: loaded {} dialogs ({} skipped)",
        desc.name,
        dialogs.len(),
        skipped
    );
    Ok(LoadedDialogs {
        dialogs,
        skipped,
        non_question_user_turns,
    })
}

/// A passage before segmentation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPassage {
    pub id: String,
    pub title: String,
    pub text: String,
}

fn raw_passage(adapter: Adapter, v: &Value, fallback_id: String) -> Option<RawPassage> {
    let s = |k: &str| v[k].as_str().map(str::to_string);
    let id_of = |k: &str| {
        v[k].as_str()
            .map(str::to_string)
            .or_else(|| v[k].as_i64().map(|n| n.to_string()))
    };
    let (id, title, text) = match adapter {
        Adapter::Wikipedia => (id_of("id"), s("title"), s("text")),
        Adapter::Pubmed => (id_of("pmid"), s("title"), s("abstract")),
        Adapter::CcNews => (s("url"), s("title"), s("text")),
        Adapter::Elsevier => (
            id_of("docId"),
            v["metadata"]["title"].as_str().map(str::to_string),
            s("abstract"),
        ),
        _ => return None,
    };
    Some(RawPassage {
        id: id.unwrap_or(fallback_id),
        title: title?,
        text: text?,
    })
}

#[derive(Debug, Clone)]
pub struct LoadedPassages {
    pub passages: Vec<Passage>,
    pub skipped: usize,
}

/// Loads and segments a text-passage corpus.
pub fn load_passages(
    desc: &CorpusDescriptor,
    segmenter: &dyn SentenceSegmenter,
    exec: Execution,
) -> Result<LoadedPassages> {
    if desc.kind != CorpusKind::TextPassages {
        return Err(Error::Config(format!(
            "corpus `{}` is not a passage corpus",
            desc.name
        )));
    }
    let files = corpus_files(&desc.path)?;
    let loads = exec.map(&files, |f| -> Result<FileLoad<Passage>> {
        let stem = file_stem(f);
        let mut items = Vec::new();
        let mut skipped = 0;
        for (i, v) in read_json_lines(f)?.into_iter().enumerate() {
            let p = v
                .and_then(|v| raw_passage(desc.adapter, &v, format!("{stem}-{i}")))
                .and_then(|r| segment_passage(&r.id, &r.text, &r.title, segmenter).ok())
                .filter(|p| !p.title.is_empty());
            match p {
                Some(p) => items.push(p),
                None => skipped += 1,
            }
        }
        Ok(FileLoad { items, skipped })
    });
    let mut passages = Vec::new();
    let mut skipped = 0;
    for l in loads {
        let l = l?;
        passages.extend(l.items);
        skipped += l.skipped;
    }
    check_skip_rate(skipped, passages.len())?;
    Ok(LoadedPassages { passages, skipped })
}

pub const TITLE_PROMPT_TEMPLATE: &str = "Hello, I want to learn about {title}.";

/// Instantiates a title prompt template containing `{title}`.
pub fn build_title_prompt_with(template: &str, title: &str) -> Result<String> {
    let title = normalize_ws(title);
    if title.is_empty() {
        return Err(Error::invalid("title prompt needs a non-empty title"));
    }
    if !template.contains("{title}") {
        return Err(Error::Config("title prompt template lacks `{title}`".into()));
    }
    Ok(template.replace("{title}", &title))
}

pub fn build_title_prompt(title: &str) -> Result<String> {
    build_title_prompt_with(TITLE_PROMPT_TEMPLATE, title)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desc(dir: &Path, file: &str, kind: CorpusKind, adapter: Adapter) -> CorpusDescriptor {
        CorpusDescriptor {
            name: file.into(),
            kind,
            path: dir.join(file),
            adapter,
            max_turns: None,
        }
    }

    #[test]
    fn title_prompt_golden() {
        assert_eq!(
            build_title_prompt("Grevillea rudis").unwrap(),
            "Hello, I want to learn about Grevillea rudis."
        );
        assert_eq!(
            build_title_prompt("Grevillea rudis  \n").unwrap(),
            build_title_prompt("Grevillea rudis").unwrap()
        );
        assert!(build_title_prompt(" ").is_err());
        assert_eq!(build_title_prompt_with("About {title}", "X").unwrap(), "About X");
    }

    #[test]
    fn daily_dialog_mini_corpus() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("dd.txt"),
            "Hi there . __eou__ Hello ! __eou__ How are you ? __eou__\nA __eou__ B __eou__\nX __eou__ Y __eou__ Z __eou__ W __eou__\n",
        )
        .unwrap();
        let d = desc(dir.path(), "dd.txt", CorpusKind::OpenDomainDialog, Adapter::DailyDialog);
        let l = load_dialog_corpus(&d, Execution::Sequential).unwrap();
        assert_eq!(l.dialogs.len(), 3);
        assert!((l.mean_turns() - 3.0).abs() < 1e-12);
        let again = load_dialog_corpus(&d, Execution::Parallel).unwrap();
        assert_eq!(again.dialogs, l.dialogs);
    }

    #[test]
    fn qrecc_groups_and_orders_turns() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("q.json"),
            r#"[{"Conversation_no":2,"Turn_no":2,"Question":"And then?","Answer":"B."},
                {"Conversation_no":2,"Turn_no":1,"Question":"What first?","Answer":"A."},
                {"Conversation_no":1,"Turn_no":1,"Question":"Why","Answer":"C."}]"#,
        )
        .unwrap();
        let d = desc(dir.path(), "q.json", CorpusKind::ConvqaDialog, Adapter::Qrecc);
        let l = load_dialog_corpus(&d, Execution::Sequential).unwrap();
        assert_eq!(l.dialogs.len(), 2);
        assert_eq!(l.dialogs[1].utterances[0].text, "What first?");
        assert_eq!(l.non_question_user_turns, 1);
    }

    #[test]
    fn taskmaster_merges_consecutive_speakers() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("tm.json"),
            r#"[{"conversation_id":"c1","utterances":[
                {"speaker":"USER","text":"Book a table."},
                {"speaker":"USER","text":"For two."},
                {"speaker":"ASSISTANT","text":"Done."}]}]"#,
        )
        .unwrap();
        let d = desc(dir.path(), "tm.json", CorpusKind::OpenDomainDialog, Adapter::Taskmaster);
        let l = load_dialog_corpus(&d, Execution::Sequential).unwrap();
        assert_eq!(l.dialogs[0].utterances[0].text, "Book a table. For two.");
        assert_eq!(l.dialogs[0].len(), 2);
    }

    #[test]
    fn orquac_lines() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("o.jsonl"),
            "{\"qid\":\"C_1_q#1\",\"rewrite\":\"Second?\",\"answer\":{\"text\":\"Two.\"}}\n{\"qid\":\"C_1_q#0\",\"question\":\"First?\",\"answer\":{\"text\":\"One.\"}}\n",
        )
        .unwrap();
        let d = desc(dir.path(), "o.jsonl", CorpusKind::ConvqaDialog, Adapter::OrQuac);
        let l = load_dialog_corpus(&d, Execution::Sequential).unwrap();
        assert_eq!(l.dialogs.len(), 1);
        assert_eq!(l.dialogs[0].utterances[0].text, "First?");
        assert_eq!(l.dialogs[0].len(), 4);
    }

    #[test]
    fn too_many_skips_fail() {
        let dir = tempfile::tempdir().unwrap();
        // second line yields a single-utterance dialog, which is invalid
        fs::write(dir.path().join("dd.txt"), "A __eou__ B __eou__\nC __eou__\n").unwrap();
        let d = desc(dir.path(), "dd.txt", CorpusKind::OpenDomainDialog, Adapter::DailyDialog);
        assert!(matches!(
            load_dialog_corpus(&d, Execution::Sequential),
            Err(Error::TooManyFailures { failed: 1, total: 2 })
        ));
    }

    #[test]
    fn max_turns_truncates() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("dd.txt"), "A __eou__ B __eou__ C __eou__ D __eou__ E __eou__\n").unwrap();
        let mut d = desc(dir.path(), "dd.txt", CorpusKind::OpenDomainDialog, Adapter::DailyDialog);
        d.max_turns = Some(3);
        assert_eq!(load_dialog_corpus(&d, Execution::Sequential).unwrap().dialogs[0].len(), 3);
    }

    #[test]
    fn directory_files_merge_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let sub = dir.path().join("corp");
        fs::create_dir(&sub).unwrap();
        fs::write(sub.join("b.txt"), "B1 __eou__ B2 __eou__\n").unwrap();
        fs::write(sub.join("a.txt"), "A1 __eou__ A2 __eou__\n").unwrap();
        let d = desc(dir.path(), "corp", CorpusKind::OpenDomainDialog, Adapter::DailyDialog);
        let l = load_dialog_corpus(&d, Execution::Parallel).unwrap();
        assert_eq!(l.dialogs[0].id, "a-0");
        assert_eq!(l.dialogs[1].id, "b-0");
    }

    #[test]
    fn passages_and_registry() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("wiki.jsonl"),
            "{\"id\":\"w1\",\"title\":\"Grevillea rudis\",\"text\":\"It is a shrub. It will regenerate from seed only.\"}\n",
        )
        .unwrap();
        let reg = CorpusRegistry::from_toml(
            "[corpus.wiki]\nkind = \"text_passages\"\npath = \"wiki.jsonl\"\nadapter = \"wikipedia\"\n",
            dir.path(),
        )
        .unwrap();
        let d = reg.get("wiki").unwrap();
        let l = load_passages(d, &crate::segment::RuleSegmenter::default(), Execution::Sequential).unwrap();
        assert_eq!(l.passages[0].sentences.len(), 2);
        assert!(load_dialog_corpus(d, Execution::Sequential).is_err());
        assert!(reg.get("nope").is_err());
    }
}
