use std::path::Path;

use anyhow::{bail, Context, Result};

use convqa_core::backend::{GeneratorBackend, StubBackend};
use convqa_core::bow::BagOfWordsBackend;
use convqa_core::corpus::{load_dialog_corpus, load_passages, Adapter, CorpusDescriptor, CorpusKind, CorpusRegistry};
use convqa_core::dialog::Passage;
use convqa_core::fixtures::fixture_passages;
use convqa_core::manifest::{fingerprint_bytes, fingerprint_path};
use convqa_core::segment::RuleSegmenter;
use convqa_core::trainer::{load_checkpoint, read_checkpoint_manifest, TrainingCorpus};
use convqa_core::Execution;

use crate::{usage, BackendKind, PassageSource};

pub fn new_backend(kind: BackendKind) -> Box<dyn GeneratorBackend> {
    match kind {
        BackendKind::Bow => Box::new(BagOfWordsBackend::default()),
        BackendKind::Stub => Box::new(StubBackend::default()),
    }
}

pub fn backend_from_checkpoint(dir: &Path) -> Result<Box<dyn GeneratorBackend>> {
    let m = read_checkpoint_manifest(dir)
        .map_err(|e| usage(format!("cannot read checkpoint {}: {e}", dir.display())))?;
    let mut backend = match m.backend_kind.as_str() {
        BagOfWordsBackend::KIND => new_backend(BackendKind::Bow),
        StubBackend::KIND => new_backend(BackendKind::Stub),
        other => bail!("checkpoint backend `{other}` is not built into this binary"),
    };
    load_checkpoint(dir, backend.as_mut())?;
    Ok(backend)
}

pub fn load_registry(path: &Path) -> Result<CorpusRegistry> {
    if !path.is_file() {
        return Err(usage(format!("registry {} does not exist", path.display())));
    }
    CorpusRegistry::load(path).with_context(|| format!("reading registry {}", path.display()))
}

/// Passages plus a fingerprint of their source.
pub fn load_source(src: &PassageSource, exec: Execution) -> Result<(String, Vec<Passage>, String)> {
    let seg = RuleSegmenter::default();
    let desc = match (&src.registry, &src.corpus, &src.passages) {
        (Some(reg), Some(name), _) => load_registry(reg)?.get(name)?.clone(),
        (_, _, Some(path)) => {
            if !path.exists() {
                return Err(usage(format!("passage file {} does not exist", path.display())));
            }
            CorpusDescriptor {
                name: path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
                kind: CorpusKind::TextPassages,
                path: path.clone(),
                adapter: Adapter::Wikipedia,
                max_turns: None,
            }
        }
        _ if src.fixture_passages => {
            let ps = fixture_passages();
            let fp = serde_json::to_vec(&ps)?;
            return Ok(("fixture".into(), ps, fingerprint_bytes(&fp)));
        }
        _ => return Err(usage("give --registry/--corpus, --passages or --fixture-passages")),
    };
    let loaded = load_passages(&desc, &seg, exec)?;
    if loaded.skipped > 0 {
        log::warn!("{}: skipped {} malformed passages", desc.name, loaded.skipped);
    }
    Ok((desc.name.clone(), loaded.passages, fingerprint_path(&desc.path)?))
}

pub fn load_training_corpus(desc: &CorpusDescriptor, exec: Execution) -> Result<(TrainingCorpus, String)> {
    if !desc.kind.is_dialog() {
        return Err(usage(format!("corpus `{}` is not a dialog corpus", desc.name)));
    }
    let loaded = load_dialog_corpus(desc, exec).with_context(|| format!("loading corpus `{}`", desc.name))?;
    log::info!(
        "{}: {} dialogs, mean {:.2} turns, {} skipped",
        desc.name,
        loaded.dialogs.len(),
        loaded.mean_turns(),
        loaded.skipped
    );
    Ok((
        TrainingCorpus::new(desc.name.clone(), desc.kind, loaded.dialogs),
        fingerprint_path(&desc.path)?,
    ))
}
