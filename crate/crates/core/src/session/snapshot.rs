use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{ExplanationRecord, PatchSpec, Phase, QueryTicket, RoundMetrics, Session, SessionConfig};
use crate::error::{Error, Result};
use crate::feature_store::Dataset;
use crate::heads::{decode_model, encode_model};
use crate::morph::ArchState;
use crate::pair::ClassPair;

pub const SESSION_FORMAT: &str = "alice-session/1";

/// Everything needed to resume a session, apart from the dataset itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub format: String,
    pub config: SessionConfig,
    pub phase: Phase,
    pub round: u32,
    pub arch: ArchState,
    pub trained_arch: ArchState,
    /// Base64 of the binary model file.
    pub model: String,
    pub tickets: Vec<QueryTicket>,
    pub next_ticket_id: u64,
    pub queried: Vec<ClassPair>,
    pub explanations: Vec<ExplanationRecord>,
    pub patches: Vec<PatchSpec>,
    pub metrics: Vec<RoundMetrics>,
    pub stopped_early: bool,
}

impl Session {
    /// Binary model file of the trained heads.
    pub fn model_bytes(&self) -> Vec<u8> {
        encode_model(&self.model, &self.config.train_config(), &self.trained_arch.fingerprint())
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            format: SESSION_FORMAT.to_string(),
            config: self.config.clone(),
            phase: self.phase,
            round: self.round,
            arch: self.arch.clone(),
            trained_arch: self.trained_arch.clone(),
            model: STANDARD.encode(self.model_bytes()),
            tickets: self.tickets.clone(),
            next_ticket_id: self.next_ticket_id,
            queried: self.queried.clone(),
            explanations: self.explanations.clone(),
            patches: self.patches.clone(),
            metrics: self.metrics.clone(),
            stopped_early: self.stopped_early,
        }
    }

    pub fn restore(snap: SessionSnapshot, dataset: Arc<Dataset>) -> Result<Self> {
        if snap.format != SESSION_FORMAT {
            return Err(Error::MalformedSnapshot(format!("unknown session format {:?}", snap.format)));
        }
        if snap.phase == Phase::Training {
            return Err(Error::MalformedSnapshot("snapshot taken mid-training".into()));
        }
        if snap.arch.num_classes() != dataset.num_classes() {
            return Err(Error::MalformedSnapshot("class count differs from the dataset".into()));
        }
        let bytes = STANDARD
            .decode(snap.model.as_bytes())
            .map_err(|e| Error::MalformedSnapshot(format!("model encoding: {e}")))?;
        let (header, model) = decode_model(&bytes)?;
        if header.arch_hash != snap.trained_arch.fingerprint() {
            return Err(Error::MalformedSnapshot("model was trained for a different architecture".into()));
        }
        let mut session = Session::blank(snap.config, dataset)?;
        session.phase = snap.phase;
        session.round = snap.round;
        session.arch = snap.arch;
        session.trained_arch = snap.trained_arch;
        session.model = model;
        session.tickets = snap.tickets;
        session.next_ticket_id = snap.next_ticket_id;
        session.queried = snap.queried;
        session.explanations = snap.explanations;
        session.patches = snap.patches;
        session.metrics = snap.metrics;
        session.stopped_early = snap.stopped_early;
        Ok(session)
    }

    /// Loads a snapshot file, opening the dataset it names or `dataset` when
    /// given.
    pub fn load(path: &Path, dataset: Option<&Path>) -> Result<Self> {
        let mut snap: SessionSnapshot = serde_json::from_slice(&fs::read(path)?)
            .map_err(|e| Error::MalformedSnapshot(format!("{}: {e}", path.display())))?;
        if let Some(d) = dataset {
            snap.config.dataset = d.to_path_buf();
        }
        let ds = Arc::new(Dataset::open(&snap.config.dataset)?);
        Self::restore(snap, ds)
    }

    /// Writes the snapshot atomically: a sibling temp file, fsync, rename.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_vec_pretty(&self.snapshot())?;
        text.push(b'\n');
        write_atomic(path, &text)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("snapshot");
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
