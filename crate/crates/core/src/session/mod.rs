//! The k-round query loop: train, ask the expert about the most confusable
//! pairs, ground and merge their answers, retrain.

mod config;
mod report;
mod script;
mod snapshot;

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_store::{ActivationMap, Dataset, Split};
use crate::grounding::{crop_resize, ground_explanation, randomize_segments, GroundingReport};
use crate::heads::{
    argmax, global_forward, init_params, local_forward, saliency, train_global, train_local, LocalExample, Model,
    ModelShape,
};
use crate::morph::{coarse_label_of, ArchState, Route};
use crate::pair::ClassPair;
use crate::parser::{default_lexicon, ParsedExplanation, Parser, RuleSet};
use crate::profiler::{fit_profile, pool_features, rank_pairs, select_pairs, ClassProfile, CovarianceMode, PairDistance, DEFAULT_EPSILON};

pub use config::{Mode, SessionConfig};
pub use report::{metrics_csv, summary};
pub use script::{ExplanationScript, ScriptRecord};
pub use snapshot::{write_atomic, SessionSnapshot, SESSION_FORMAT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Training,
    AwaitingExplanations,
    ReadyToTrain,
    Done,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Training => "training",
            Phase::AwaitingExplanations => "awaiting_explanations",
            Phase::ReadyToTrain => "ready_to_train",
            Phase::Done => "done",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TicketStatus {
    Pending,
    Answered,
    Skipped,
}

pub fn query_prompt(p: &str, q: &str) -> String {
    format!("How would you differentiate class {p} and class {q}?")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryTicket {
    pub ticket_id: u64,
    /// The round whose training this answer feeds.
    pub round: u32,
    pub pair: (usize, usize),
    pub class_names: (String, String),
    pub prompt: String,
    pub jsd: f64,
    pub status: TicketStatus,
}

/// A patch kept as its recipe so it can be re-cropped after a restore.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub source_sample_id: u32,
    pub segment_id: u32,
    pub fine_label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationRecord {
    pub round: u32,
    pub ticket_id: u64,
    pub text: String,
    /// Segments actually cropped; differs from the parsed ones only under
    /// random grounding.
    pub grounded_segments: Vec<u32>,
    pub report: GroundingReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TicketOutcome {
    pub ticket_id: u64,
    pub status: OutcomeStatus,
    /// Parsed segment names, in order of first mention.
    pub segments: Vec<String>,
    pub patches_created: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: u32,
    pub fine_accuracy: f64,
    pub coarse_accuracy: f64,
    /// Fraction correct per fine class; 0 for classes absent from the split.
    pub per_class_accuracy: Vec<f64>,
    pub global_losses: Vec<f64>,
    pub local_losses: Vec<f64>,
    pub arity: usize,
    pub groups: usize,
    pub patches_used: usize,
    pub extra_samples: usize,
}

const STREAM_INIT: u64 = 1;
const STREAM_GLOBAL: u64 = 2;
const STREAM_LOCAL: u64 = 3;
const STREAM_PAIRS: u64 = 4;
const STREAM_GROUNDING: u64 = 5;
const STREAM_EXTRA: u64 = 6;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent seed for `(seed, index, stream)`.
pub fn derive_seed(seed: u64, index: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ index) ^ stream.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

fn rng_for(seed: u64, index: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, index, stream))
}

/// Diagonal Gaussian profile of every class from pooled train features.
pub fn fit_class_profiles(dataset: &Dataset) -> Result<Vec<ClassProfile>> {
    let mut by_class: Vec<Vec<Vec<f64>>> = vec![Vec::new(); dataset.num_classes()];
    for i in dataset.split_indices(Split::Train) {
        let (rec, map) = dataset.sample(i);
        by_class[rec.fine_label].push(pool_features(map));
    }
    by_class
        .iter()
        .enumerate()
        .map(|(c, feats)| fit_profile(feats, c, CovarianceMode::Diagonal, DEFAULT_EPSILON))
        .collect()
}

/// Global argmax over the merged label space, then the group's local head
/// for super-class nodes.
pub fn predict_fine(model: &Model, arch: &ArchState, map: &ActivationMap) -> Result<usize> {
    let z = global_forward(&model.global, &pool_features(map))?;
    match arch.route(argmax(z.as_slice().expect("contiguous")))? {
        Route::Final(c) => Ok(c),
        Route::Delegate(gid) => {
            let group = arch.group(gid).expect("routed groups exist");
            match model.local(gid) {
                Some(head) => {
                    let z = local_forward(&model.attention, head, map)?;
                    Ok(group.members[argmax(z.as_slice().expect("contiguous"))])
                }
                None => Ok(group.members[0]),
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Session {
    config: SessionConfig,
    dataset: Arc<Dataset>,
    parser: Parser,
    profiles: Vec<ClassProfile>,
    phase: Phase,
    round: u32,
    /// Current structure, including merges made since the last training.
    arch: ArchState,
    /// Label space of `model`.
    trained_arch: ArchState,
    model: Model,
    tickets: Vec<QueryTicket>,
    next_ticket_id: u64,
    queried: Vec<ClassPair>,
    explanations: Vec<ExplanationRecord>,
    patches: Vec<PatchSpec>,
    metrics: Vec<RoundMetrics>,
    stopped_early: bool,
}

impl Session {
    /// Loads the dataset, fits class profiles, trains the flat round-0 model
    /// and proposes the first queries.
    pub fn start(config: SessionConfig) -> Result<Self> {
        config.validate()?;
        let dataset = Arc::new(Dataset::open(&config.dataset)?);
        Self::start_with(config, dataset)
    }

    pub fn start_with(config: SessionConfig, dataset: Arc<Dataset>) -> Result<Self> {
        let mut session = Self::blank(config, dataset)?;
        session.fit_round()?;
        session.after_training()?;
        Ok(session)
    }

    fn blank(config: SessionConfig, dataset: Arc<Dataset>) -> Result<Self> {
        config.validate()?;
        if matches!(config.mode, Mode::ExtraData(_)) && dataset.split_indices(Split::Pool).is_empty() {
            return Err(Error::InvalidConfig("extra-data mode needs a non-empty pool split".into()));
        }
        let parser = Parser::new(&default_lexicon(&dataset.manifest().segment_catalog)?, &RuleSet::default())?;
        let profiles = fit_class_profiles(&dataset)?;
        let arch = ArchState::initial(dataset.num_classes())?;
        let model = Model::zeros(&ModelShape::for_arch(&arch, dataset.grid().d, config.queries, false));
        Ok(Self {
            config,
            dataset,
            parser,
            profiles,
            phase: Phase::Training,
            round: 0,
            trained_arch: arch.clone(),
            arch,
            model,
            tickets: Vec::new(),
            next_ticket_id: 1,
            queried: Vec::new(),
            explanations: Vec::new(),
            patches: Vec::new(),
            metrics: Vec::new(),
            stopped_early: false,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.dataset
    }

    pub fn parser(&self) -> &Parser {
        &self.parser
    }

    pub fn profiles(&self) -> &[ClassProfile] {
        &self.profiles
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Number of completed query rounds.
    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn arch(&self) -> &ArchState {
        &self.arch
    }

    pub fn trained_arch(&self) -> &ArchState {
        &self.trained_arch
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    /// Tickets of the current round, resolved or not.
    pub fn tickets(&self) -> &[QueryTicket] {
        &self.tickets
    }

    pub fn pending_tickets(&self) -> Vec<&QueryTicket> {
        self.tickets.iter().filter(|t| t.status == TicketStatus::Pending).collect()
    }

    pub fn queried_pairs(&self) -> &[ClassPair] {
        &self.queried
    }

    pub fn explanations(&self) -> &[ExplanationRecord] {
        &self.explanations
    }

    pub fn patches(&self) -> &[PatchSpec] {
        &self.patches
    }

    pub fn metrics(&self) -> &[RoundMetrics] {
        &self.metrics
    }

    /// True when the loop ended before `k` rounds because no pair was left.
    pub fn stopped_early(&self) -> bool {
        self.stopped_early
    }

    fn require(&self, phase: Phase, op: &'static str) -> Result<()> {
        if self.phase != phase {
            return Err(Error::WrongPhase { op, phase: self.phase.to_string() });
        }
        Ok(())
    }

    fn excluded_pairs(&self) -> BTreeSet<ClassPair> {
        let mut out: BTreeSet<ClassPair> = self.queried.iter().copied().collect();
        out.extend(self.arch.co_grouped_pairs());
        out
    }

    /// Candidate pairs for the next round: the `b` lowest-divergence pairs, or
    /// a seeded uniform draw in random-pairs mode. Previously queried and
    /// co-grouped pairs are excluded.
    pub fn propose_queries(&self) -> Result<Vec<PairDistance>> {
        let excluded = self.excluded_pairs();
        if self.config.mode != Mode::RandomPairs {
            return select_pairs(&self.profiles, self.config.b, &excluded);
        }
        let mut all = rank_pairs(&self.profiles, &excluded)?;
        if all.is_empty() {
            return Err(Error::NoPairsAvailable);
        }
        all.sort_by_key(|d| d.pair);
        all.shuffle(&mut rng_for(self.config.seed, u64::from(self.round) + 1, STREAM_PAIRS));
        all.truncate(self.config.b);
        Ok(all)
    }

    fn open_round(&mut self) -> Result<()> {
        let pairs = match self.propose_queries() {
            Ok(p) => p,
            Err(Error::NoPairsAvailable) => {
                self.stopped_early = true;
                self.phase = Phase::Done;
                self.tickets.clear();
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        let manifest = self.dataset.manifest();
        self.tickets = pairs
            .into_iter()
            .map(|d| {
                let (p, q) = (d.pair.lo(), d.pair.hi());
                let names = (
                    manifest.class_name(p).unwrap_or_default().to_string(),
                    manifest.class_name(q).unwrap_or_default().to_string(),
                );
                let ticket = QueryTicket {
                    ticket_id: self.next_ticket_id,
                    round: self.round + 1,
                    pair: (p, q),
                    prompt: query_prompt(&names.0, &names.1),
                    class_names: names,
                    jsd: d.jsd,
                    status: TicketStatus::Pending,
                };
                self.next_ticket_id += 1;
                self.queried.push(d.pair);
                ticket
            })
            .collect();
        self.phase = Phase::AwaitingExplanations;
        Ok(())
    }

    fn after_training(&mut self) -> Result<()> {
        self.tickets.clear();
        if self.round >= self.config.k {
            self.phase = Phase::Done;
            return Ok(());
        }
        match self.config.mode {
            Mode::ExtraData(_) if self.round == 0 => self.phase = Phase::ReadyToTrain,
            Mode::ExtraData(_) => self.phase = Phase::Done,
            _ => self.open_round()?,
        }
        Ok(())
    }

    fn ticket_index(&self, id: u64) -> Result<usize> {
        self.tickets
            .iter()
            .position(|t| t.ticket_id == id && t.status == TicketStatus::Pending)
            .ok_or(Error::UnknownTicket(id))
    }

    fn check_ticket_ids(&self, ids: impl Iterator<Item = u64>) -> Result<()> {
        let mut seen = BTreeSet::new();
        for id in ids {
            self.ticket_index(id)?;
            if !seen.insert(id) {
                return Err(Error::UnknownTicket(id));
            }
        }
        Ok(())
    }

    fn settle_if_resolved(&mut self) {
        if self.tickets.iter().all(|t| t.status != TicketStatus::Pending) {
            self.phase = Phase::ReadyToTrain;
        }
    }

    /// Parses, grounds and merges each answer. Unparseable answers are
    /// reported per ticket and leave that ticket pending.
    pub fn submit_explanations(&mut self, answers: &[(u64, String)]) -> Result<Vec<TicketOutcome>> {
        self.require(Phase::AwaitingExplanations, "submit_explanations")?;
        self.check_ticket_ids(answers.iter().map(|(id, _)| *id))?;
        let mut outcomes = Vec::with_capacity(answers.len());
        for (id, text) in answers {
            outcomes.push(self.apply_answer(*id, text)?);
        }
        self.settle_if_resolved();
        Ok(outcomes)
    }

    fn segment_names(&self, ids: &[u32]) -> Vec<String> {
        ids.iter()
            .map(|&s| self.parser.lexicon().segment_name(s).unwrap_or("?").to_string())
            .collect()
    }

    fn apply_answer(&mut self, id: u64, text: &str) -> Result<TicketOutcome> {
        let idx = self.ticket_index(id)?;
        let (p, q) = self.tickets[idx].pair;
        let parsed = match self.parser.parse(text, (p, q)) {
            Ok(parsed) => parsed,
            Err(e @ Error::NoSegmentsFound) => {
                return Ok(TicketOutcome {
                    ticket_id: id,
                    status: OutcomeStatus::Error,
                    segments: Vec::new(),
                    patches_created: 0,
                    error: Some("NoSegmentsFound".into()),
                    message: Some(e.to_string()),
                })
            }
            Err(e) => return Err(e),
        };

        let mode = self.config.mode;
        let grounded_segments = if mode == Mode::RandomGrounding {
            let catalog: Vec<u32> = self.dataset.manifest().segment_catalog.iter().map(|s| s.segment_id).collect();
            randomize_segments(&parsed.segments, &catalog, &mut rng_for(self.config.seed, id, STREAM_GROUNDING))
        } else {
            parsed.segments.clone()
        };
        let report = if mode.grounds() {
            let target = ParsedExplanation { segments: grounded_segments.clone(), ..parsed.clone() };
            let (patches, mut report) = ground_explanation(&target, &self.dataset, Split::Train)?;
            self.patches.extend(patches.into_iter().map(|p| PatchSpec {
                source_sample_id: p.source_sample_id,
                segment_id: p.segment_id,
                fine_label: p.fine_label,
            }));
            report.segments = parsed.segments.clone();
            report
        } else {
            GroundingReport { pair: (p, q), segments: parsed.segments.clone(), patches_created: 0, samples_skipped: vec![] }
        };
        if mode.merges() {
            self.arch = self.arch.merge_pair(p, q)?;
        }
        self.tickets[idx].status = TicketStatus::Answered;
        let outcome = TicketOutcome {
            ticket_id: id,
            status: OutcomeStatus::Ok,
            segments: self.segment_names(&parsed.segments),
            patches_created: report.patches_created,
            error: None,
            message: None,
        };
        self.explanations.push(ExplanationRecord {
            round: self.round + 1,
            ticket_id: id,
            text: text.to_string(),
            grounded_segments,
            report,
        });
        Ok(outcome)
    }

    /// Resolves tickets without an answer. Their pairs stay excluded.
    pub fn skip_tickets(&mut self, ids: &[u64]) -> Result<()> {
        self.require(Phase::AwaitingExplanations, "skip_tickets")?;
        self.check_ticket_ids(ids.iter().copied())?;
        for &id in ids {
            let idx = self.ticket_index(id)?;
            self.tickets[idx].status = TicketStatus::Skipped;
        }
        self.settle_if_resolved();
        Ok(())
    }

    /// Retrains every head from a fresh round-derived initialization and
    /// evaluates on the test split.
    pub fn train_round(&mut self) -> Result<RoundMetrics> {
        match self.phase {
            Phase::ReadyToTrain => {}
            Phase::AwaitingExplanations => {
                return Err(Error::PendingTickets(self.pending_tickets().iter().map(|t| t.ticket_id).collect()))
            }
            _ => self.require(Phase::ReadyToTrain, "train_round")?,
        }
        self.round += 1;
        let metrics = self.fit_round()?;
        self.after_training()?;
        Ok(metrics)
    }

    fn materialize_patches(&self) -> Result<Vec<(ActivationMap, usize)>> {
        self.patches
            .iter()
            .map(|spec| {
                let (rec, map) = self
                    .dataset
                    .by_sample_id(spec.source_sample_id)
                    .ok_or(Error::UnknownSample(spec.source_sample_id))?;
                let bbox = rec.segment_boxes.get(&spec.segment_id).ok_or(Error::UnknownSegment(spec.segment_id))?;
                Ok((crop_resize(map, bbox), spec.fine_label))
            })
            .collect()
    }

    fn extra_pool_indices(&self) -> Vec<usize> {
        let Mode::ExtraData(frac) = self.config.mode else { return Vec::new() };
        if self.round == 0 {
            return Vec::new();
        }
        let n_train = self.dataset.split_indices(Split::Train).len();
        let mut pool = self.dataset.split_indices(Split::Pool);
        let n = ((frac * n_train as f64).round() as usize).min(pool.len());
        pool.shuffle(&mut rng_for(self.config.seed, u64::from(self.round), STREAM_EXTRA));
        pool.truncate(n);
        pool
    }

    fn fit_round(&mut self) -> Result<RoundMetrics> {
        self.phase = Phase::Training;
        let round = u64::from(self.round);
        let seed = self.config.seed;
        let cfg = self.config.train_config();
        let arch = self.arch.clone().with_round(self.round);
        let dataset = Arc::clone(&self.dataset);
        let shape = ModelShape::for_arch(&arch, dataset.grid().d, self.config.queries, self.config.mode.merges());
        let mut model = init_params(&shape, derive_seed(seed, round, STREAM_INIT));

        let train = dataset.split_indices(Split::Train);
        let patch_maps = self.materialize_patches()?;
        let extra = self.extra_pool_indices();

        let mut global: Vec<(Vec<f64>, usize)> = Vec::with_capacity(train.len() + extra.len());
        for &i in train.iter().chain(&extra) {
            let (rec, map) = dataset.sample(i);
            global.push((pool_features(map), arch.node_of(rec.fine_label)?));
        }
        if !self.config.mode.merges() {
            for (map, label) in &patch_maps {
                global.push((pool_features(map), arch.node_of(*label)?));
            }
        }
        let global_losses = train_global(&mut model.global, &global, &cfg, &mut rng_for(seed, round, STREAM_GLOBAL))?;

        let mut local_losses = Vec::new();
        if !model.locals.is_empty() {
            let mut examples = Vec::new();
            for (head, group) in arch.groups().iter().enumerate() {
                for &i in &train {
                    let (rec, map) = dataset.sample(i);
                    if let Some(label) = group.local_index(rec.fine_label) {
                        examples.push(LocalExample { map, head, label });
                    }
                }
                for (map, fine) in &patch_maps {
                    if let Some(label) = group.local_index(*fine) {
                        examples.push(LocalExample { map, head, label });
                    }
                }
            }
            local_losses = train_local(
                &mut model.attention,
                &mut model.locals,
                &examples,
                &cfg,
                &mut rng_for(seed, round, STREAM_LOCAL),
            )?;
        }

        self.model = model;
        self.trained_arch = arch.clone();
        self.arch = arch;
        let mut metrics = self.evaluate(Split::Test)?;
        metrics.global_losses = global_losses;
        metrics.local_losses = local_losses;
        metrics.patches_used = if self.config.mode.grounds() { patch_maps.len() } else { 0 };
        metrics.extra_samples = extra.len();
        self.metrics.push(metrics.clone());
        Ok(metrics)
    }

    /// Predicted fine class for a full activation map.
    pub fn predict(&self, map: &ActivationMap) -> Result<usize> {
        predict_fine(&self.model, &self.trained_arch, map)
    }

    /// Fine and coarse accuracy of the current model on `split`.
    pub fn evaluate(&self, split: Split) -> Result<RoundMetrics> {
        let indices = self.dataset.split_indices(split);
        if indices.is_empty() {
            return Err(Error::EmptySplit(split.to_string()));
        }
        let manifest = self.dataset.manifest();
        let c = manifest.num_classes();
        let (mut fine, mut coarse) = (0usize, 0usize);
        let mut per_class = vec![(0usize, 0usize); c];
        for &i in &indices {
            let (rec, map) = self.dataset.sample(i);
            let pred = self.predict(map)?;
            let hit = pred == rec.fine_label;
            fine += usize::from(hit);
            coarse += usize::from(coarse_label_of(manifest, pred)? == coarse_label_of(manifest, rec.fine_label)?);
            per_class[rec.fine_label].0 += usize::from(hit);
            per_class[rec.fine_label].1 += 1;
        }
        let n = indices.len() as f64;
        Ok(RoundMetrics {
            round: self.round,
            fine_accuracy: fine as f64 / n,
            coarse_accuracy: coarse as f64 / n,
            per_class_accuracy: per_class
                .into_iter()
                .map(|(hit, total)| if total == 0 { 0.0 } else { hit as f64 / total as f64 })
                .collect(),
            global_losses: Vec::new(),
            local_losses: Vec::new(),
            arity: self.trained_arch.arity(),
            groups: self.trained_arch.groups().len(),
            patches_used: 0,
            extra_samples: 0,
        })
    }

    pub fn saliency(&self, sample_id: u32, class: usize) -> Result<Vec<f64>> {
        let (_, map) = self.dataset.by_sample_id(sample_id).ok_or(Error::UnknownSample(sample_id))?;
        saliency(&self.model, &self.trained_arch, map, class)
    }

    /// Answers every pending ticket from `script`; pairs without an answer
    /// and answers that do not parse are skipped. Returns the outcomes of the
    /// submitted answers.
    pub fn answer_from_script(&mut self, script: &ExplanationScript) -> Result<Vec<TicketOutcome>> {
        self.require(Phase::AwaitingExplanations, "answer_from_script")?;
        let mut answers = Vec::new();
        let mut skip = Vec::new();
        for t in self.pending_tickets() {
            match script.answer_for(t.pair.0, t.pair.1) {
                Some(text) => answers.push((t.ticket_id, text.to_string())),
                None => skip.push(t.ticket_id),
            }
        }
        let outcomes = if answers.is_empty() { Vec::new() } else { self.submit_explanations(&answers)? };
        skip.extend(outcomes.iter().filter(|o| o.status == OutcomeStatus::Error).map(|o| o.ticket_id));
        if !skip.is_empty() {
            self.skip_tickets(&skip)?;
        }
        Ok(outcomes)
    }

    /// Drives the loop to completion with scripted answers.
    pub fn run_to_completion(&mut self, script: &ExplanationScript) -> Result<()> {
        loop {
            match self.phase {
                Phase::AwaitingExplanations => {
                    self.answer_from_script(script)?;
                }
                Phase::ReadyToTrain => {
                    self.train_round()?;
                }
                Phase::Done | Phase::Training => return Ok(()),
            }
        }
    }
}
