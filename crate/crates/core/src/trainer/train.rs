//! Single-stage and curriculum training loops.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::encoder::{dot, TrainableEncoder};
use super::losses::{joint_grad, replug_grad, single_grad, summarg_grad, LossError};
use super::optim::{AdamW, AdamWConfig, LrSchedule};
use crate::corpus::{write_jsonl, Collection, CorpusError, QuerySet};
use crate::pool::{InstanceSampler, LabelView, PosStrategy, SamplingConfig, TrainingInstance};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossKind {
    SingleLH,
    Rand1LH,
    JointLH,
    SumMargLH,
    #[serde(rename = "REPLUG-KL")]
    ReplugKL,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [Self::SingleLH, Self::Rand1LH, Self::JointLH, Self::SumMargLH, Self::ReplugKL];

    pub fn name(self) -> &'static str {
        match self {
            Self::SingleLH => "SingleLH",
            Self::Rand1LH => "Rand1LH",
            Self::JointLH => "JointLH",
            Self::SumMargLH => "SumMargLH",
            Self::ReplugKL => "REPLUG-KL",
        }
    }

    /// Sampling strategy the loss depends on, if any.
    pub fn required_strategy(self) -> Option<PosStrategy> {
        match self {
            Self::Rand1LH => Some(PosStrategy::PosOne),
            _ => None,
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let key: String = s.to_ascii_lowercase().chars().filter(|c| c.is_ascii_alphanumeric()).collect();
        Ok(match key.as_str() {
            "single" | "singlelh" => Self::SingleLH,
            "rand1" | "rand1lh" => Self::Rand1LH,
            "joint" | "jointlh" => Self::JointLH,
            "summarg" | "summarglh" => Self::SumMargLH,
            "replug" | "replugkl" => Self::ReplugKL,
            _ => return Err(format!("unknown loss {s:?}")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Append the other rows' documents to each row's candidates. Ignored by
    /// REPLUG-KL, whose targets exist only for the row's own candidates.
    pub in_batch_negatives: bool,
    pub replug_temperature: f64,
}

impl LossConfig {
    pub fn new(kind: LossKind) -> Self {
        Self {
            kind,
            in_batch_negatives: true,
            replug_temperature: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub schedule: LrSchedule,
    pub adam: AdamWConfig,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            epochs: 2,
            batch_size: 16,
            learning_rate: 3e-5,
            seed: 0,
            schedule: LrSchedule::default(),
            adam: AdamWConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    pub stage: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<LogRecord>,
    /// Queries that yielded no instance in some epoch.
    pub skipped_queries: BTreeSet<String>,
}

impl TrainingLog {
    pub fn write(&self, path: &Path) -> Result<(), CorpusError> {
        write_jsonl(path, &self.records)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("{context}: {source}")]
    Loss {
        /// `step N` during training, `evaluation` otherwise.
        context: String,
        #[source]
        source: LossError,
    },
    #[error("non-finite loss at step {step} (stage {stage}, epoch {epoch})")]
    NonFinite { step: usize, epoch: usize, stage: u32 },
    #[error("query {0} has no features")]
    MissingQuery(String),
    #[error("document {0} has no features")]
    MissingDocument(String),
    #[error("no utility for query {query_id}, document {doc_id}")]
    MissingUtility { query_id: String, doc_id: String },
    #[error("{0}")]
    Contract(String),
}

/// Utility scores per query and document, for REPLUG-KL.
pub type UtilityTable = BTreeMap<String, BTreeMap<String, f64>>;

/// Produces the training instances of one epoch.
pub trait InstanceSource: Sync {
    fn instances(&self, epoch: usize) -> (Vec<TrainingInstance>, Vec<String>);
}

impl InstanceSource for InstanceSampler {
    fn instances(&self, epoch: usize) -> (Vec<TrainingInstance>, Vec<String>) {
        let (inst, skips) = self.epoch(epoch);
        let mut skipped = skips.no_positives;
        skipped.extend(skips.undersized);
        (inst, skipped)
    }
}

impl InstanceSource for Vec<TrainingInstance> {
    fn instances(&self, _epoch: usize) -> (Vec<TrainingInstance>, Vec<String>) {
        (self.clone(), Vec::new())
    }
}

/// Encoder features for every query and document, computed once.
pub struct FeatureStore<F> {
    queries: HashMap<String, F>,
    docs: HashMap<String, F>,
}

impl<F: Send + Sync> FeatureStore<F> {
    pub fn build<E: TrainableEncoder<Features = F>>(encoder: &E, queries: &QuerySet, collection: &Collection) -> Self {
        let queries = queries
            .queries()
            .par_iter()
            .map(|q| (q.query_id.clone(), encoder.query_features(&q.text)))
            .collect();
        let docs = collection
            .documents()
            .par_iter()
            .map(|d| (d.doc_id.clone(), encoder.doc_features(&d.text)))
            .collect();
        Self { queries, docs }
    }

    fn query(&self, id: &str) -> Result<&F, TrainError> {
        self.queries.get(id).ok_or_else(|| TrainError::MissingQuery(id.to_string()))
    }

    fn doc(&self, id: &str) -> Result<&F, TrainError> {
        self.docs.get(id).ok_or_else(|| TrainError::MissingDocument(id.to_string()))
    }
}

/// Mean batch loss and its gradient with respect to the encoder parameters.
pub fn batch_loss_grad<E: TrainableEncoder>(
    encoder: &E,
    features: &FeatureStore<E::Features>,
    batch: &[TrainingInstance],
    loss: &LossConfig,
    utilities: Option<&UtilityTable>,
) -> Result<(f64, Vec<f64>), TrainError> {
    batch_step(encoder, features, batch, loss, utilities).map_err(|e| e.with_context("evaluation"))
}

enum BatchError {
    Loss(LossError),
    Train(TrainError),
}

impl From<TrainError> for BatchError {
    fn from(e: TrainError) -> Self {
        Self::Train(e)
    }
}

impl BatchError {
    fn with_context(self, context: &str) -> TrainError {
        match self {
            Self::Loss(source) => TrainError::Loss {
                context: context.to_string(),
                source,
            },
            Self::Train(e) => e,
        }
    }
}

fn batch_step<E: TrainableEncoder>(
    encoder: &E,
    features: &FeatureStore<E::Features>,
    batch: &[TrainingInstance],
    loss: &LossConfig,
    utilities: Option<&UtilityTable>,
) -> Result<(f64, Vec<f64>), BatchError> {
    let mut doc_index: HashMap<&str, usize> = HashMap::new();
    let mut docs: Vec<&str> = Vec::new();
    for inst in batch {
        for d in inst.doc_ids() {
            doc_index.entry(d.as_str()).or_insert_with(|| {
                docs.push(d.as_str());
                docs.len() - 1
            });
        }
    }
    let doc_feats = docs.iter().map(|d| features.doc(d)).collect::<Result<Vec<_>, _>>()?;
    let query_feats = batch
        .iter()
        .map(|i| features.query(&i.query_id))
        .collect::<Result<Vec<_>, _>>()?;
    let doc_vecs: Vec<Vec<f64>> = doc_feats.par_iter().map(|f| encoder.forward(f)).collect();
    let query_vecs: Vec<Vec<f64>> = query_feats.par_iter().map(|f| encoder.forward(f)).collect();

    let dim = encoder.dim();
    let scale = 1.0 / batch.len() as f64;
    let mut d_query = vec![vec![0.0; dim]; batch.len()];
    let mut d_doc = vec![vec![0.0; dim]; docs.len()];
    let mut total = 0.0;
    let use_in_batch = loss.in_batch_negatives && loss.kind != LossKind::ReplugKL;

    for (row, inst) in batch.iter().enumerate() {
        let own: Vec<usize> = inst.doc_ids().map(|d| doc_index[d.as_str()]).collect();
        let mut cands = own.clone();
        if use_in_batch {
            let mine: HashSet<usize> = own.iter().copied().collect();
            cands.extend((0..docs.len()).filter(|i| !mine.contains(i)));
        }
        let qv = &query_vecs[row];
        let scores: Vec<f64> = cands.iter().map(|&c| dot(qv, &doc_vecs[c])).collect();
        let n_pos = inst.positive_ids.len();
        let positives: Vec<usize> = (0..n_pos).collect();
        let (l, g) = match loss.kind {
            LossKind::SingleLH | LossKind::Rand1LH => {
                if n_pos != 1 {
                    return Err(TrainError::Contract(format!(
                        "{} needs exactly one positive per row; query {} has {n_pos}",
                        loss.kind, inst.query_id
                    ))
                    .into());
                }
                single_grad(&scores, 0)
            }
            LossKind::JointLH => joint_grad(&scores, &positives),
            LossKind::SumMargLH => summarg_grad(&scores, &positives),
            LossKind::ReplugKL => {
                let table = utilities
                    .and_then(|t| t.get(&inst.query_id))
                    .ok_or_else(|| TrainError::MissingUtility {
                        query_id: inst.query_id.clone(),
                        doc_id: String::new(),
                    })?;
                let u = inst
                    .doc_ids()
                    .map(|d| {
                        table.get(d).copied().ok_or_else(|| TrainError::MissingUtility {
                            query_id: inst.query_id.clone(),
                            doc_id: d.clone(),
                        })
                    })
                    .collect::<Result<Vec<f64>, _>>()?;
                replug_grad(&scores, &u, loss.replug_temperature)
            }
        }
        .map_err(BatchError::Loss)?;
        total += l * scale;
        for (k, &c) in cands.iter().enumerate() {
            let gk = g[k] * scale;
            if gk == 0.0 {
                continue;
            }
            let dv = &doc_vecs[c];
            for r in 0..dim {
                d_query[row][r] += gk * dv[r];
                d_doc[c][r] += gk * qv[r];
            }
        }
    }

    let mut grad = vec![0.0; encoder.params().len()];
    for (f, dq) in query_feats.iter().zip(&d_query) {
        encoder.backward(f, dq, &mut grad);
    }
    for (f, dd) in doc_feats.iter().zip(&d_doc) {
        encoder.backward(f, dd, &mut grad);
    }
    Ok((total, grad))
}

/// Mean loss over `instances` in batches, without updating the encoder.
pub fn evaluate_loss<E: TrainableEncoder>(
    encoder: &E,
    features: &FeatureStore<E::Features>,
    instances: &[TrainingInstance],
    loss: &LossConfig,
    batch_size: usize,
    utilities: Option<&UtilityTable>,
) -> Result<f64, TrainError> {
    if instances.is_empty() {
        return Err(TrainError::Contract("no instances to evaluate".into()));
    }
    let mut sum = 0.0;
    for chunk in instances.chunks(batch_size.max(1)) {
        let (l, _) = batch_loss_grad(encoder, features, chunk, loss, utilities)?;
        sum += l * chunk.len() as f64;
    }
    Ok(sum / instances.len() as f64)
}

struct StageRun<'a, E: TrainableEncoder> {
    encoder: &'a mut E,
    optimizer: &'a mut AdamW,
    features: &'a FeatureStore<E::Features>,
    loss: LossConfig,
    utilities: Option<&'a UtilityTable>,
    log: &'a mut TrainingLog,
    step: usize,
}

impl<E: TrainableEncoder> StageRun<'_, E> {
    /// Runs `epochs` epochs; `lr_at(i, total)` gives the rate for the i-th
    /// step of this stage. Returns the last rate used.
    fn run(
        &mut self,
        source: &dyn InstanceSource,
        epochs: usize,
        batch_size: usize,
        seed: u64,
        stage: u32,
        lr_at: &dyn Fn(usize, usize) -> f64,
    ) -> Result<Option<f64>, TrainError> {
        if batch_size == 0 {
            return Err(TrainError::Contract("batch_size must be at least 1".into()));
        }
        let mut per_epoch = Vec::with_capacity(epochs);
        for epoch in 0..epochs {
            let (mut inst, skipped) = source.instances(epoch);
            self.log.skipped_queries.extend(skipped);
            inst.shuffle(&mut rng::stream(seed, &["batch-order", &stage.to_string(), &epoch.to_string()]));
            per_epoch.push(inst);
        }
        let total: usize = per_epoch.iter().map(|e| e.len().div_ceil(batch_size)).sum();
        let mut i = 0;
        let mut last_lr = None;
        for (epoch, inst) in per_epoch.iter().enumerate() {
            for batch in inst.chunks(batch_size) {
                let (l, grad) = batch_step(self.encoder, self.features, batch, &self.loss, self.utilities)
                    .map_err(|e| e.with_context(&format!("step {}", self.step)))?;
                if !l.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(TrainError::NonFinite {
                        step: self.step,
                        epoch,
                        stage,
                    });
                }
                let lr = lr_at(i, total);
                self.optimizer.step(self.encoder.params_mut(), &grad, lr);
                self.log.records.push(LogRecord {
                    step: self.step,
                    epoch,
                    loss: l,
                    lr,
                    stage,
                });
                last_lr = Some(lr);
                self.step += 1;
                i += 1;
            }
        }
        Ok(last_lr)
    }
}

fn check_loss_vs_source(loss: &LossConfig, utilities: Option<&UtilityTable>) -> Result<(), TrainError> {
    if loss.kind == LossKind::ReplugKL && utilities.is_none() {
        return Err(TrainError::Contract("REPLUG-KL needs a utility table".into()));
    }
    Ok(())
}

pub fn train<E: TrainableEncoder>(
    encoder: &mut E,
    source: &dyn InstanceSource,
    features: &FeatureStore<E::Features>,
    loss: &LossConfig,
    hyper: &TrainHyper,
    utilities: Option<&UtilityTable>,
) -> Result<TrainingLog, TrainError> {
    check_loss_vs_source(loss, utilities)?;
    let mut optimizer = AdamW::new(hyper.adam, encoder.params().len());
    let mut log = TrainingLog::default();
    let mut run = StageRun {
        encoder,
        optimizer: &mut optimizer,
        features,
        loss: *loss,
        utilities,
        log: &mut log,
        step: 0,
    };
    let schedule = hyper.schedule;
    let base = hyper.learning_rate;
    run.run(source, hyper.epochs, hyper.batch_size, hyper.seed, 1, &|i, total| {
        schedule.lr(base, i, total)
    })?;
    Ok(log)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumSchedule {
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    pub stage2_fraction: f64,
    /// Restart the learning-rate schedule at its base rate for stage 2.
    pub stage2_lr_reinit: bool,
    /// Clear the optimizer moments before stage 2.
    pub reset_optimizer: bool,
    pub stage2_pos_strategy: PosStrategy,
    /// Loss for stage 2; defaults to stage 1's, or SumMargLH after REPLUG-KL.
    pub stage2_loss: Option<LossKind>,
}

impl Default for CurriculumSchedule {
    fn default() -> Self {
        Self {
            stage1_epochs: 2,
            stage2_epochs: 1,
            stage2_fraction: 0.2,
            stage2_lr_reinit: true,
            reset_optimizer: true,
            stage2_pos_strategy: PosStrategy::PosOne,
            stage2_loss: None,
        }
    }
}

impl CurriculumSchedule {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(0.0..=1.0).contains(&self.stage2_fraction) {
            return Err(TrainError::Contract(format!(
                "stage2_fraction must be in [0, 1], got {}",
                self.stage2_fraction
            )));
        }
        if self.stage2_fraction == 0.0 && self.stage2_epochs > 0 {
            return Err(TrainError::Contract(
                "stage2_fraction is 0 but stage2_epochs > 0; set stage2_epochs = 0 for LLM-only training".into(),
            ));
        }
        Ok(())
    }
}

/// The human-labelled queries stage 2 trains on: a uniform sample of
/// `round(fraction * n)` views, kept in input order.
pub fn stage2_subset(views: &[LabelView], fraction: f64, seed: u64) -> Vec<LabelView> {
    let labelled: Vec<&LabelView> = views.iter().filter(|v| !v.positives.is_empty()).collect();
    let take = (fraction * labelled.len() as f64).round() as usize;
    let mut idx: Vec<usize> = (0..labelled.len()).collect();
    idx.partial_shuffle(&mut rng::stream(seed, &["curriculum-subset"]), take);
    let mut chosen: Vec<usize> = idx[..take.min(idx.len())].to_vec();
    chosen.sort_unstable();
    chosen.into_iter().map(|i| labelled[i].clone()).collect()
}

/// Trains on LLM labels, then refines on a fraction of human labels.
#[allow(clippy::too_many_arguments)]
pub fn curriculum_train<E: TrainableEncoder>(
    encoder: &mut E,
    stage1: &dyn InstanceSource,
    human_views: &[LabelView],
    sampling: &SamplingConfig,
    schedule: &CurriculumSchedule,
    features: &FeatureStore<E::Features>,
    loss: &LossConfig,
    hyper: &TrainHyper,
    utilities: Option<&UtilityTable>,
) -> Result<TrainingLog, TrainError> {
    schedule.validate()?;
    check_loss_vs_source(loss, utilities)?;
    let mut optimizer = AdamW::new(hyper.adam, encoder.params().len());
    let mut log = TrainingLog::default();
    let base = hyper.learning_rate;
    let sched = hyper.schedule;
    let mut run = StageRun {
        encoder,
        optimizer: &mut optimizer,
        features,
        loss: *loss,
        utilities,
        log: &mut log,
        step: 0,
    };
    let last_lr = run.run(stage1, schedule.stage1_epochs, hyper.batch_size, hyper.seed, 1, &|i, total| {
        sched.lr(base, i, total)
    })?;

    if schedule.stage2_epochs > 0 {
        let subset = stage2_subset(human_views, schedule.stage2_fraction, hyper.seed);
        if subset.is_empty() {
            return Err(TrainError::Contract(format!(
                "stage 2 sample of {} human-labelled queries at fraction {} is empty",
                human_views.len(),
                schedule.stage2_fraction
            )));
        }
        log::info!("stage 2 trains on {} human-labelled queries", subset.len());
        let sampler = InstanceSampler::new(
            subset,
            SamplingConfig {
                pos_strategy: schedule.stage2_pos_strategy,
                ..sampling.clone()
            },
        );
        let kind = schedule.stage2_loss.unwrap_or(match loss.kind {
            LossKind::ReplugKL => LossKind::SumMargLH,
            k => k,
        });
        run.loss = LossConfig { kind, ..*loss };
        if schedule.reset_optimizer {
            run.optimizer.reset();
        }
        let carried = last_lr.unwrap_or(base);
        let lr_at = |i: usize, total: usize| {
            if schedule.stage2_lr_reinit {
                sched.lr(base, i, total)
            } else {
                carried
            }
        };
        run.run(&sampler, schedule.stage2_epochs, hyper.batch_size, hyper.seed, 2, &lr_at)?;
    }
    Ok(log)
}
