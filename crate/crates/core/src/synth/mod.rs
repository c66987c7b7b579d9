//! The bundled synthetic end-to-end experiment: planted-relevance corpus,
//! lexical pools, mock annotation, training with several objectives and
//! test MRR@10 comparisons.

mod generate;
mod lexical;

pub use generate::{generate, CorpusShape, SynthData};
pub use lexical::{bm25_run, tf_run, BM25_B, BM25_K1};

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotator::{annotation_quality, Annotator, AnnotatorConfig, MockBackend, MockPolicy, PromptSet};
use crate::corpus::{write_annotations, write_atomic, write_run, AnnotationMethod, CorpusError, Query, Run};
use crate::eval::{mrr_at_k, retrieve_full, EvalError};
use crate::pool::{
    apply_inclusion_mode, build_pool, human_label_view, CandidatePool, InclusionMode, InstanceSampler, LabelView,
    PoolError, PosStrategy, SamplingConfig,
};
use crate::rng::sha256_hex;
use crate::trainer::{
    curriculum_train, save_checkpoint, train, AdamWConfig, CheckpointError, CurriculumSchedule, EncoderConfig,
    FeatureStore, LinearEncoder, LossConfig, LossKind, LrSchedule, TrainError, TrainHyper,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub corpus: CorpusShape,
    /// Independent repetitions; repetition `i` uses seed `base + i`.
    pub seeds: usize,
    /// Chance that the mock marks a non-useful candidate as useful,
    /// drawn independently per candidate.
    pub false_positive_rate: f64,
    pub pool_n: usize,
    pub run_depth: usize,
    pub m: usize,
    pub dim: usize,
    pub buckets: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// The linear reference encoder needs a far larger step than a
    /// pretrained transformer.
    pub learning_rate: f64,
    pub stage2_fraction: f64,
    pub stage2_epochs: usize,
    pub mrr_k: usize,
    pub min_gain_over_untrained: f64,
    pub min_wins: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            corpus: CorpusShape::default(),
            seeds: 5,
            false_positive_rate: 0.2,
            pool_n: 30,
            run_depth: 100,
            m: 15,
            dim: 64,
            buckets: 4096,
            epochs: 2,
            batch_size: 16,
            learning_rate: 1e-2,
            stage2_fraction: 0.2,
            stage2_epochs: 1,
            mrr_k: 10,
            min_gain_over_untrained: 2.0,
            min_wins: 4,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        self.corpus.validate().map_err(SynthError::Config)?;
        let bad = |m: &str| Err(SynthError::Config(m.to_string()));
        if self.seeds == 0 {
            return bad("seeds must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.false_positive_rate) {
            return bad("false_positive_rate must be in [0, 1]");
        }
        if self.pool_n == 0 || self.run_depth < self.pool_n {
            return bad("pool_n must be positive and no larger than run_depth");
        }
        if self.m == 0 || self.m > self.pool_n {
            return bad("m must be in 1..=pool_n");
        }
        if self.dim == 0 || self.buckets == 0 || self.batch_size == 0 || self.mrr_k == 0 {
            return bad("dim, buckets, batch_size and mrr_k must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(0.0 < self.stage2_fraction && self.stage2_fraction <= 1.0) {
            return bad("stage2_fraction must be in (0, 1]");
        }
        Ok(())
    }

    pub fn sha256(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synthetic experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error("annotation failed: {0}")]
    Annotation(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub annotation_precision: Option<f64>,
    pub annotation_recall: Option<f64>,
    pub annotation_avg_positives: f64,
    /// Test MRR per model: untrained, SumMargLH, JointLH, curriculum.
    pub mrr: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthReport {
    pub base_seed: u64,
    pub config_sha256: String,
    pub config: SynthConfig,
    pub seeds: Vec<SeedResult>,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

impl SynthReport {
    /// One `PASS`/`FAIL` line per check.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for s in &self.seeds {
            let cols: Vec<String> = s.mrr.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
            out.push_str(&format!("seed {}: {}\n", s.seed, cols.join(" ")));
        }
        for c in &self.checks {
            let verdict = if c.passed { "PASS" } else { "FAIL" };
            out.push_str(&format!("{verdict} {}: {}\n", c.name, c.detail));
        }
        out
    }
}

pub const UNTRAINED: &str = "untrained";
pub const SUMMARG: &str = "summarg";
pub const JOINT: &str = "joint";
pub const CURRICULUM: &str = "curriculum";

struct Trial {
    result: SeedResult,
    runs: Vec<(&'static str, Run)>,
    checkpoint: LinearEncoder,
    annotations: Vec<crate::corpus::AnnotationRecord>,
}

fn pools_for(data: &SynthData, cfg: &SynthConfig) -> Result<Vec<CandidatePool>, SynthError> {
    let queries: Vec<&Query> = data.train_queries.iter().collect();
    let bm25 = bm25_run(&data.collection, &queries, cfg.run_depth);
    let tf = tf_run(&data.collection, &queries, cfg.run_depth);
    queries
        .iter()
        .map(|q| build_pool(&q.query_id, &[&bm25, &tf], &data.train_qrels, cfg.pool_n, cfg.run_depth))
        .collect::<Result<_, _>>()
        .map_err(SynthError::from)
}

fn test_mrr(encoder: &LinearEncoder, data: &SynthData, cfg: &SynthConfig, tag: &str) -> Result<(f64, Run), SynthError> {
    let queries: Vec<&Query> = data.test_queries.iter().collect();
    let run = retrieve_full(encoder, &queries, &data.collection, cfg.run_depth, tag)?;
    Ok((mrr_at_k(&run, &data.test_qrels, cfg.mrr_k).mean, run))
}

fn run_trial(cfg: &SynthConfig, seed: u64) -> Result<Trial, SynthError> {
    let data = generate(&cfg.corpus, seed).map_err(SynthError::Config)?;
    let pools = pools_for(&data, cfg)?;

    let backend = Arc::new(MockBackend::new(
        MockPolicy::Overlap {
            false_positive_rate: cfg.false_positive_rate,
        },
        seed,
    ));
    let annotator = Annotator::new(
        backend,
        PromptSet::default(),
        AnnotatorConfig {
            method: AnnotationMethod::UtilSel,
            seed,
            ..Default::default()
        },
    )
    .map_err(|e| SynthError::Annotation(e.to_string()))?;
    let work: Vec<(&Query, &CandidatePool)> = pools
        .iter()
        .map(|p| (data.train_queries.get(&p.query_id).expect("pool query exists"), p))
        .collect();
    let outcome = annotator.annotate_all(&work, &data.collection);
    if let Some(e) = outcome.failures.first() {
        return Err(SynthError::Annotation(e.to_string()));
    }
    let quality = annotation_quality(&outcome.records, &data.train_qrels)
        .map_err(|e| SynthError::Annotation(e.to_string()))?;

    let llm_views: Vec<LabelView> = pools
        .iter()
        .zip(&outcome.records)
        .map(|(p, r)| apply_inclusion_mode(p, r, InclusionMode::Random, cfg.m))
        .collect::<Result<_, _>>()?;
    let human_views: Vec<LabelView> = pools.iter().map(human_label_view).collect();
    let sampling = SamplingConfig {
        m: cfg.m,
        pos_strategy: PosStrategy::PosAll,
        inclusion_mode: InclusionMode::Random,
        seed,
    };
    let sampler = InstanceSampler::new(llm_views, sampling);

    let untrained = LinearEncoder::new(EncoderConfig {
        dim: cfg.dim,
        buckets: cfg.buckets,
        hash_seed: seed,
        init_seed: seed,
    });
    let features = FeatureStore::build(&untrained, &data.train_queries, &data.collection);
    let hyper = TrainHyper {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        seed,
        schedule: LrSchedule::default(),
        adam: AdamWConfig::default(),
    };

    let mut summarg = untrained.clone();
    train(&mut summarg, &sampler, &features, &LossConfig::new(LossKind::SumMargLH), &hyper, None)?;
    let mut joint = untrained.clone();
    train(&mut joint, &sampler, &features, &LossConfig::new(LossKind::JointLH), &hyper, None)?;
    let mut curriculum = untrained.clone();
    let schedule = CurriculumSchedule {
        stage1_epochs: cfg.epochs,
        stage2_epochs: cfg.stage2_epochs,
        stage2_fraction: cfg.stage2_fraction,
        ..Default::default()
    };
    curriculum_train(
        &mut curriculum,
        &sampler,
        &human_views,
        &sampling,
        &schedule,
        &features,
        &LossConfig::new(LossKind::SumMargLH),
        &hyper,
        None,
    )?;

    let mut mrr = BTreeMap::new();
    let mut runs = Vec::new();
    for (name, enc) in [(UNTRAINED, &untrained), (SUMMARG, &summarg), (JOINT, &joint), (CURRICULUM, &curriculum)] {
        let (v, run) = test_mrr(enc, &data, cfg, name)?;
        log::info!("seed {seed}: {name} test MRR@{} = {v:.4}", cfg.mrr_k);
        mrr.insert(name.to_string(), v);
        runs.push((name, run));
    }
    Ok(Trial {
        result: SeedResult {
            seed,
            annotation_precision: quality.precision,
            annotation_recall: quality.recall,
            annotation_avg_positives: quality.avg_positives,
            mrr,
        },
        runs,
        checkpoint: summarg,
        annotations: outcome.records,
    })
}

fn checks(cfg: &SynthConfig, seeds: &[SeedResult]) -> Vec<CheckResult> {
    let m = |s: &SeedResult, k: &str| s.mrr[k];
    let gains: Vec<f64> = seeds.iter().map(|s| m(s, SUMMARG) / m(s, UNTRAINED)).collect();
    let worst = gains.iter().copied().fold(f64::INFINITY, f64::min);
    let trained_ok = seeds
        .iter()
        .all(|s| m(s, SUMMARG) >= cfg.min_gain_over_untrained * m(s, UNTRAINED));
    let needed = cfg.min_wins.min(seeds.len());
    let wins = |a: &str, b: &str| seeds.iter().filter(|s| m(s, a) >= m(s, b)).count();
    let sm_wins = wins(SUMMARG, JOINT);
    let cl_wins = wins(CURRICULUM, SUMMARG);
    vec![
        CheckResult {
            name: "trained-vs-untrained".into(),
            passed: trained_ok,
            detail: format!(
                "SumMargLH / untrained MRR@{} worst ratio {worst:.3} over {} seeds (need >= {})",
                cfg.mrr_k,
                seeds.len(),
                cfg.min_gain_over_untrained
            ),
        },
        CheckResult {
            name: "summarg-vs-joint".into(),
            passed: sm_wins >= needed,
            detail: format!("SumMargLH >= JointLH in {sm_wins} of {} seeds (need {needed})", seeds.len()),
        },
        CheckResult {
            name: "curriculum-vs-llm-only".into(),
            passed: cl_wins >= needed,
            detail: format!(
                "curriculum ({}% human) >= LLM-only in {cl_wins} of {} seeds (need {needed})",
                cfg.stage2_fraction * 100.0,
                seeds.len()
            ),
        },
    ]
}

/// Runs every repetition and, when `out_dir` is given, writes `report.json`,
/// `report.txt` and per-seed test runs, annotations and the SumMargLH
/// checkpoint. Everything written is a pure function of `cfg` and `seed`.
pub fn run_synth_experiment(cfg: &SynthConfig, seed: u64, out_dir: Option<&Path>) -> Result<SynthReport, SynthError> {
    cfg.validate()?;
    let trials: Vec<Trial> = (0..cfg.seeds as u64)
        .into_par_iter()
        .map(|i| run_trial(cfg, seed.wrapping_add(i)))
        .collect::<Result<_, _>>()?;
    let seeds: Vec<SeedResult> = trials.iter().map(|t| t.result.clone()).collect();
    let checks = checks(cfg, &seeds);
    let report = SynthReport {
        base_seed: seed,
        config_sha256: cfg.sha256(),
        config: cfg.clone(),
        passed: checks.iter().all(|c| c.passed),
        seeds,
        checks,
    };
    if let Some(dir) = out_dir {
        for t in &trials {
            let sub = dir.join(format!("seed-{}", t.result.seed));
            for (name, run) in &t.runs {
                write_run(run, &sub.join(format!("{name}.run")))?;
            }
            write_annotations(&t.annotations, &sub.join("annotations.jsonl"))?;
            let meta = serde_json::json!({
                "loss": LossKind::SumMargLH.name(),
                "seed": t.result.seed,
                "config_sha256": report.config_sha256,
            });
            save_checkpoint(&t.checkpoint, &sub.join("summarg.ckpt"), meta)?;
        }
        let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
        json.push('\n');
        write_atomic(&dir.join("report.json"), json.as_bytes())?;
        write_atomic(&dir.join("report.txt"), report.summary().as_bytes())?;
    }
    Ok(report)
}
