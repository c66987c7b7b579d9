use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::Serialize;
use serde_json::json;
use utilret::annotator::{
    annotation_quality, backend_from_name, AnnotationQuality, Annotator, AnnotatorConfig, BackendError,
    BackendSettings, LlmBackend, PromptSet, RateLimited, DEFAULT_WINDOW,
};
use utilret::corpus::{
    load_collection, load_qrels, load_queries, read_annotations, read_jsonl, read_run, write_annotations, write_jsonl,
    write_run, AnnotationMethod, AnnotationRecord, Collection, Query, QuerySet, RelevanceJudgments, Run,
};
use utilret::eval::{answer_metrics, evaluate_run, generate_all, retrieve_full, GenerationConfig, GenerationRecord};
use utilret::pool::{
    apply_inclusion_mode, build_pool, human_label_view, read_pools, write_pools, CandidatePool, InstanceSampler,
    LabelView, PoolError, SamplingConfig,
};
use utilret::synth::{run_synth_experiment, SynthError};
use utilret::trainer::{
    build_utility_table, curriculum_train, load_checkpoint, read_checkpoint_meta, save_checkpoint, sidecar_path,
    train, AdamWConfig, CurriculumSchedule, EncoderConfig, FeatureStore, LinearEncoder, LossConfig, LossKind,
    LrSchedule, TrainError, TrainHyper, TrainingLog, UtilityError, UtilityTable,
};

use crate::config::Loaded;
use crate::error::{Classify, Failure, Kind, Outcome};
use crate::output::{write_meta, Outputs};

pub const API_URL_ENV: &str = "ANNOTATOR_API_URL";
pub const API_KEY_ENV: &str = "ANNOTATOR_API_KEY";

fn collection(l: &Loaded) -> Outcome<Collection> {
    let p = l.path(None, &l.config.paths.collection, "collection")?;
    load_collection(&p).or_data()
}

fn queries(l: &Loaded) -> Outcome<QuerySet> {
    let p = l.path(None, &l.config.paths.queries, "queries")?;
    let answers = l.optional_path(&l.config.paths.answers);
    load_queries(&p, answers.as_deref()).or_data()
}

fn qrels(l: &Loaded, flag: Option<&PathBuf>) -> Outcome<RelevanceJudgments> {
    let p = l.path(flag, &l.config.paths.qrels, "qrels")?;
    load_qrels(&p).or_data()
}

fn pools(l: &Loaded, flag: Option<&PathBuf>) -> Outcome<Vec<CandidatePool>> {
    let p = l.path(flag, &l.config.paths.pools, "pools")?;
    read_pools(&p).or_data()
}

fn prompts(l: &Loaded) -> Outcome<PromptSet> {
    match l.optional_path(&l.config.paths.prompts) {
        Some(dir) => PromptSet::load_dir(&dir).or_config(),
        None => Ok(PromptSet::default()),
    }
}

/// Builds the configured backend. Endpoint and key come from the
/// environment only.
fn backend(l: &Loaded, name: Option<&str>) -> Outcome<Arc<dyn LlmBackend>> {
    let a = &l.config.annotation;
    let settings = BackendSettings {
        api_url: std::env::var(API_URL_ENV).ok().filter(|s| !s.is_empty()),
        api_key: std::env::var(API_KEY_ENV).ok().filter(|s| !s.is_empty()),
        temperature: a.temperature,
        timeout: Some(Duration::from_secs(a.timeout_secs)),
    };
    let b = backend_from_name(name.unwrap_or(&a.backend), &settings).or_config()?;
    Ok(if a.rate_limit > 0.0 {
        Arc::new(RateLimited::new(b, a.rate_limit))
    } else {
        b
    })
}

fn backend_kind(e: &BackendError) -> Kind {
    match e {
        BackendError::Transport(_) => Kind::Backend,
        BackendError::Capability { .. } | BackendError::Config(_) => Kind::Config,
    }
}

fn default_out(l: &Loaded, flag: Option<&PathBuf>, dir: &Option<PathBuf>, key: &str, file: &str) -> Outcome<PathBuf> {
    if let Some(f) = flag {
        return Ok(f.clone());
    }
    Ok(l.path(None, dir, key)?.join(file))
}

// ---- pool ----

#[derive(Debug, clap::Args)]
pub struct PoolArgs {
    /// Output pools file; defaults to paths.pools.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn pool(l: &Loaded, args: &PoolArgs) -> Outcome<()> {
    let cfg = &l.config;
    let qs = queries(l)?;
    let judged = qrels(l, None)?;
    if cfg.paths.runs.is_empty() {
        return Err(Failure::config("paths.runs must list at least one run"));
    }
    let runs: Vec<Run> = cfg
        .paths
        .runs
        .iter()
        .map(|p| read_run(&l.resolve(p)).or_data())
        .collect::<Outcome<_>>()?;
    let run_refs: Vec<&Run> = runs.iter().collect();
    let out = l.path(args.out.as_ref(), &cfg.paths.pools, "pools")?;

    let mut built = Vec::new();
    let mut skipped = BTreeMap::new();
    for q in qs.iter() {
        match build_pool(&q.query_id, &run_refs, &judged, cfg.pool.n, cfg.pool.depth) {
            Ok(p) => built.push(p),
            Err(e @ (PoolError::Underfull { .. } | PoolError::QueryNotInRuns(_))) => {
                log::warn!("skipping {}: {e}", q.query_id);
                skipped.insert(q.query_id.clone(), e.to_string());
            }
            Err(e) => return Err(Failure::new(Kind::Data, e)),
        }
    }
    if built.is_empty() {
        return Err(Failure::data("no query produced a pool"));
    }
    let mut outputs = Outputs::new();
    outputs.track(&out);
    write_pools(&built, &out).or_data()?;
    write_meta(
        &mut outputs,
        &out,
        "pool",
        &l.sha256,
        json!({"pools": built.len(), "skipped": skipped}),
    )?;
    outputs.commit();
    eprintln!("wrote {} pools to {} ({} skipped)", built.len(), out.display(), skipped.len());
    Ok(())
}

// ---- annotate ----

#[derive(Debug, clap::Args)]
pub struct AnnotateArgs {
    /// relsel, utilsel or utilrank; defaults to annotation.method.
    #[arg(long)]
    pub method: Option<AnnotationMethod>,
    /// Backend name; defaults to annotation.backend.
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub pools: Option<PathBuf>,
    /// Output annotations file; defaults to paths.annotations.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn annotate(l: &Loaded, args: &AnnotateArgs) -> Outcome<()> {
    let a = &l.config.annotation;
    let coll = collection(l)?;
    let qs = queries(l)?;
    let pools = pools(l, args.pools.as_ref())?;
    let out = l.path(args.out.as_ref(), &l.config.paths.annotations, "annotations")?;
    let backend = backend(l, args.backend.as_deref())?;
    let annotator = Annotator::new(
        backend,
        prompts(l)?,
        AnnotatorConfig {
            method: args.method.unwrap_or(a.method),
            k_percent: a.k_percent,
            retries: a.retries,
            window: DEFAULT_WINDOW,
            max_output_tokens: a.max_output_tokens,
            shuffle: a.shuffle,
            seed: a.seed,
            parallelism: a.parallelism,
        },
    )
    .or_config()?;
    let work: Vec<(&Query, &CandidatePool)> = pools
        .iter()
        .map(|p| {
            qs.get(&p.query_id)
                .map(|q| (q, p))
                .ok_or_else(|| Failure::data(format!("pool query {} is not in the queries file", p.query_id)))
        })
        .collect::<Outcome<_>>()?;
    let outcome = annotator.annotate_all(&work, &coll);
    for f in &outcome.failures {
        log::warn!("{f}");
    }
    if outcome.records.is_empty() {
        let kind = if outcome.failures.iter().any(|f| f.is_backend_failure()) {
            Kind::Backend
        } else {
            Kind::Data
        };
        let first = outcome.failures.first().map(|f| f.to_string()).unwrap_or_default();
        return Err(Failure::new(kind, anyhow::anyhow!("no query was annotated; first failure: {first}")));
    }
    let mut outputs = Outputs::new();
    outputs.track(&out);
    write_annotations(&outcome.records, &out).or_data()?;
    let failures: Vec<String> = outcome.failures.iter().map(|f| f.to_string()).collect();
    write_meta(
        &mut outputs,
        &out,
        "annotate",
        &l.sha256,
        json!({
            "method": annotator.config().method,
            "backend": annotator.backend().name(),
            "annotated": outcome.records.len(),
            "failures": failures,
        }),
    )?;
    outputs.commit();
    eprintln!(
        "annotated {} of {} queries into {}",
        outcome.records.len(),
        work.len(),
        out.display()
    );
    Ok(())
}

// ---- train / curriculum ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Labels {
    /// LLM annotations under pool.inclusion_mode.
    Llm,
    /// Human positives from the pools.
    Human,
}

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    #[arg(long, value_enum, default_value = "llm")]
    pub labels: Labels,
    /// Defaults to training.loss.
    #[arg(long)]
    pub loss: Option<LossKind>,
    #[arg(long)]
    pub pools: Option<PathBuf>,
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Checkpoint path; defaults to paths.checkpoints/<loss>.ckpt.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct CurriculumArgs {
    #[arg(long)]
    pub loss: Option<LossKind>,
    #[arg(long)]
    pub pools: Option<PathBuf>,
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Checkpoint path; defaults to paths.checkpoints/curriculum.ckpt.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

struct TrainInputs {
    collection: Collection,
    queries: QuerySet,
    pools: Vec<CandidatePool>,
}

fn train_inputs(l: &Loaded, pools_flag: Option<&PathBuf>) -> Outcome<TrainInputs> {
    Ok(TrainInputs {
        collection: collection(l)?,
        queries: queries(l)?,
        pools: pools(l, pools_flag)?,
    })
}

fn llm_views(l: &Loaded, pools: &[CandidatePool], flag: Option<&PathBuf>) -> Outcome<Vec<LabelView>> {
    let p = l.path(flag, &l.config.paths.annotations, "annotations")?;
    let records = read_annotations(&p).or_data()?;
    let mut by_query: HashMap<&str, &AnnotationRecord> = HashMap::new();
    for r in &records {
        if by_query.insert(&r.query_id, r).is_some() {
            return Err(Failure::data(format!("{}: query {} annotated twice", p.display(), r.query_id)));
        }
    }
    let mut views = Vec::new();
    for pool in pools {
        match by_query.get(pool.query_id.as_str()) {
            Some(r) => views.push(
                apply_inclusion_mode(pool, r, l.config.pool.inclusion_mode, l.config.sampling.m).or_data()?,
            ),
            None => log::warn!("query {} has a pool but no annotation; skipped", pool.query_id),
        }
    }
    if views.is_empty() {
        return Err(Failure::data("no pool has a matching annotation"));
    }
    Ok(views)
}

fn sampling(l: &Loaded) -> SamplingConfig {
    SamplingConfig {
        m: l.config.sampling.m,
        pos_strategy: l.config.sampling.pos_strategy,
        inclusion_mode: l.config.pool.inclusion_mode,
        seed: l.config.sampling.seed,
    }
}

fn hyper(l: &Loaded) -> TrainHyper {
    let t = &l.config.training;
    TrainHyper {
        epochs: t.epochs,
        batch_size: t.batch_size,
        learning_rate: t.learning_rate,
        seed: t.seed,
        schedule: LrSchedule::Linear {
            warmup_steps: t.warmup_steps,
        },
        adam: AdamWConfig {
            weight_decay: t.weight_decay,
            ..Default::default()
        },
    }
}

fn loss_config(l: &Loaded, kind: LossKind) -> Outcome<LossConfig> {
    if let Some(needed) = kind.required_strategy() {
        if l.config.sampling.pos_strategy != needed {
            return Err(Failure::config(format!(
                "loss {kind} needs sampling.pos_strategy = \"{needed}\""
            )));
        }
    }
    let t = &l.config.training;
    Ok(LossConfig {
        kind,
        in_batch_negatives: t.in_batch_negatives,
        replug_temperature: t.replug_temperature,
    })
}

fn new_encoder(l: &Loaded) -> LinearEncoder {
    let t = &l.config.training;
    LinearEncoder::new(EncoderConfig {
        dim: t.dim,
        buckets: t.buckets,
        hash_seed: t.encoder_seed,
        init_seed: t.encoder_seed,
    })
}

fn utilities(l: &Loaded, kind: LossKind, inputs: &TrainInputs) -> Outcome<Option<UtilityTable>> {
    if kind != LossKind::ReplugKL {
        return Ok(None);
    }
    let backend = backend(l, None)?;
    let map: BTreeMap<String, CandidatePool> = inputs.pools.iter().map(|p| (p.query_id.clone(), p.clone())).collect();
    let qs: Vec<&Query> = inputs.pools.iter().filter_map(|p| inputs.queries.get(&p.query_id)).collect();
    let table = build_utility_table(&qs, &map, &inputs.collection, backend.as_ref()).map_err(|e| {
        let kind = match &e {
            UtilityError::Backend(b) => backend_kind(b),
            _ => Kind::Data,
        };
        Failure::new(kind, e)
    })?;
    if table.is_empty() {
        return Err(Failure::data("REPLUG-KL needs gold answers (paths.answers) for the pooled queries"));
    }
    Ok(Some(table))
}

fn train_failure(e: TrainError) -> Failure {
    let kind = match e {
        TrainError::Contract(_) => Kind::Config,
        _ => Kind::Data,
    };
    Failure::new(kind, e)
}

fn save_trained(
    l: &Loaded,
    command: &str,
    enc: &LinearEncoder,
    log: &TrainingLog,
    out: &Path,
    details: serde_json::Value,
) -> Outcome<()> {
    let mut outputs = Outputs::new();
    let log_path = PathBuf::from(format!("{}.log.jsonl", out.display()));
    outputs.track(out);
    outputs.track(&sidecar_path(out));
    outputs.track(&log_path);
    let metadata = json!({
        "command": command,
        "config_sha256": l.sha256,
        "final_loss": log.final_loss(),
        "steps": log.records.len(),
        "skipped_queries": log.skipped_queries.len(),
        "details": details,
    });
    save_checkpoint(enc, out, metadata).or_data()?;
    log.write(&log_path).or_data()?;
    outputs.commit();
    eprintln!(
        "trained {} steps, final loss {:.4}; checkpoint {}",
        log.records.len(),
        log.final_loss().unwrap_or(f64::NAN),
        out.display()
    );
    Ok(())
}

pub fn train_cmd(l: &Loaded, args: &TrainArgs) -> Outcome<()> {
    let kind = args.loss.unwrap_or(l.config.training.loss);
    let loss = loss_config(l, kind)?;
    let out = default_out(
        l,
        args.out.as_ref(),
        &l.config.paths.checkpoints,
        "checkpoints",
        &format!("{}.ckpt", kind.name().to_ascii_lowercase()),
    )?;
    let inputs = train_inputs(l, args.pools.as_ref())?;
    let views = match args.labels {
        Labels::Llm => llm_views(l, &inputs.pools, args.annotations.as_ref())?,
        Labels::Human => inputs.pools.iter().map(human_label_view).collect(),
    };
    let utilities = utilities(l, kind, &inputs)?;
    let sampler = InstanceSampler::new(views, sampling(l));
    let mut enc = new_encoder(l);
    let features = FeatureStore::build(&enc, &inputs.queries, &inputs.collection);
    let log = train(&mut enc, &sampler, &features, &loss, &hyper(l), utilities.as_ref()).map_err(train_failure)?;
    save_trained(l, "train", &enc, &log, &out, json!({"loss": kind, "labels": args.labels}))
}

pub fn curriculum_cmd(l: &Loaded, args: &CurriculumArgs) -> Outcome<()> {
    let kind = args.loss.unwrap_or(l.config.training.loss);
    let loss = loss_config(l, kind)?;
    let out = default_out(l, args.out.as_ref(), &l.config.paths.checkpoints, "checkpoints", "curriculum.ckpt")?;
    let inputs = train_inputs(l, args.pools.as_ref())?;
    let views = llm_views(l, &inputs.pools, args.annotations.as_ref())?;
    let human: Vec<LabelView> = inputs.pools.iter().map(human_label_view).collect();
    let utilities = utilities(l, kind, &inputs)?;
    let sampling = sampling(l);
    let sampler = InstanceSampler::new(views, sampling);
    let c = &l.config.curriculum;
    let schedule = CurriculumSchedule {
        stage1_epochs: l.config.training.epochs,
        stage2_epochs: c.stage2_epochs,
        stage2_fraction: c.stage2_fraction,
        stage2_lr_reinit: c.lr_reinit,
        reset_optimizer: c.reset_optimizer,
        stage2_pos_strategy: c.stage2_pos_strategy,
        stage2_loss: None,
    };
    let mut enc = new_encoder(l);
    let features = FeatureStore::build(&enc, &inputs.queries, &inputs.collection);
    let log = curriculum_train(
        &mut enc,
        &sampler,
        &human,
        &sampling,
        &schedule,
        &features,
        &loss,
        &hyper(l),
        utilities.as_ref(),
    )
    .map_err(train_failure)?;
    save_trained(l, "curriculum", &enc, &log, &out, json!({"loss": kind, "schedule": schedule}))
}

// ---- retrieve ----

#[derive(Debug, clap::Args)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output run file (TREC format).
    #[arg(long)]
    pub out: PathBuf,
    /// Run tag; defaults to the checkpoint's file stem.
    #[arg(long)]
    pub tag: Option<String>,
    /// Documents per query; defaults to eval.depth.
    #[arg(long)]
    pub depth: Option<usize>,
}

pub fn retrieve(l: &Loaded, args: &RetrieveArgs) -> Outcome<()> {
    let coll = collection(l)?;
    let qs = queries(l)?;
    let enc = load_checkpoint(&args.checkpoint).or_data()?;
    let meta = read_checkpoint_meta(&args.checkpoint).or_data()?;
    let tag = args.tag.clone().unwrap_or_else(|| {
        args.checkpoint
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dense".into())
    });
    let depth = args.depth.unwrap_or(l.config.eval.depth);
    let refs: Vec<&Query> = qs.iter().collect();
    let run = retrieve_full(&enc, &refs, &coll, depth, &tag).or_data()?;
    let mut outputs = Outputs::new();
    outputs.track(&args.out);
    write_run(&run, &args.out).or_data()?;
    write_meta(
        &mut outputs,
        &args.out,
        "retrieve",
        &l.sha256,
        json!({"checkpoint_params_sha256": meta.params_sha256, "depth": depth, "queries": run.num_queries()}),
    )?;
    outputs.commit();
    eprintln!("retrieved {} queries into {}", run.num_queries(), args.out.display());
    Ok(())
}

// ---- generate ----

#[derive(Debug, clap::Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// Output generations file (JSON Lines).
    #[arg(long)]
    pub out: PathBuf,
    /// Generator backend; defaults to annotation.backend.
    #[arg(long)]
    pub backend: Option<String>,
    /// Passages per prompt; defaults to eval.top_k_rag.
    #[arg(long)]
    pub top_k: Option<usize>,
}

pub fn generate(l: &Loaded, args: &GenerateArgs) -> Outcome<()> {
    let coll = collection(l)?;
    let qs = queries(l)?;
    let run = read_run(&args.run).or_data()?;
    let backend = backend(l, args.backend.as_deref())?;
    let e = &l.config.eval;
    let config = GenerationConfig {
        top_k: args.top_k.unwrap_or(e.top_k_rag),
        retries: e.generation_retries,
        max_output_tokens: e.max_output_tokens,
    };
    let refs: Vec<&Query> = qs.iter().filter(|q| run.contains_query(&q.query_id)).collect();
    if refs.is_empty() {
        return Err(Failure::data(format!("{} covers none of the queries", args.run.display())));
    }
    if refs.len() < qs.len() {
        log::warn!("{} queries are absent from the run and were skipped", qs.len() - refs.len());
    }
    let records = generate_all(&refs, &run, &coll, backend.as_ref(), &prompts(l)?, &config).or_data()?;
    let failed = records.iter().filter(|r| r.failed).count();
    if failed == records.len() {
        let first = records.first().and_then(|r| r.error.clone()).unwrap_or_default();
        return Err(Failure::backend(format!("every generation failed; first error: {first}")));
    }
    let mut outputs = Outputs::new();
    outputs.track(&args.out);
    write_jsonl(&args.out, &records).or_data()?;
    write_meta(
        &mut outputs,
        &args.out,
        "generate",
        &l.sha256,
        json!({"backend": backend.name(), "top_k": config.top_k, "generated": records.len(), "failed": failed}),
    )?;
    outputs.commit();
    eprintln!("generated {} answers ({failed} failed) into {}", records.len(), args.out.display());
    Ok(())
}

// ---- evaluate ----

#[derive(Debug, clap::Args)]
pub struct EvaluateArgs {
    /// Run to score against qrels.
    #[arg(long, conflicts_with = "generations", required_unless_present = "generations")]
    pub run: Option<PathBuf>,
    /// Generations to score with EM, F1 and ROUGE-L.
    #[arg(long)]
    pub generations: Option<PathBuf>,
    /// Comma-separated `name@k` list; defaults to eval.metrics.
    #[arg(long)]
    pub metrics: Option<String>,
    /// Defaults to paths.qrels.
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn emit<T: Serialize>(l: &Loaded, command: &str, value: &T, out: Option<&PathBuf>) -> Outcome<()> {
    match out {
        Some(p) => {
            let mut outputs = Outputs::new();
            outputs.write_json(p, value)?;
            write_meta(&mut outputs, p, command, &l.sha256, json!({}))?;
            outputs.commit();
        }
        None => println!("{}", serde_json::to_string_pretty(value).or_data()?),
    }
    Ok(())
}

pub fn evaluate(l: &Loaded, args: &EvaluateArgs) -> Outcome<()> {
    if let Some(g) = &args.generations {
        let records: Vec<GenerationRecord> = read_jsonl(g).or_data()?;
        let tag = g.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let report = answer_metrics(&records, l.config.eval.rouge_beta, &tag);
        return emit(l, "evaluate", &report, args.out.as_ref());
    }
    let run_path = args.run.as_ref().expect("clap requires --run or --generations");
    let specs = match &args.metrics {
        Some(m) => utilret::eval::parse_metric_list(m).map_err(|e| Failure::config(format!("--metrics: {e}")))?,
        None => l.config.metric_specs().map_err(Failure::config)?,
    };
    if specs.is_empty() {
        return Err(Failure::config("--metrics names no metric"));
    }
    let judged = qrels(l, args.qrels.as_ref())?;
    let run = read_run(run_path).or_data()?;
    let report = evaluate_run(&run, &judged, &specs);
    emit(l, "evaluate", &report, args.out.as_ref())
}

// ---- stats ----

#[derive(Debug, clap::Args)]
pub struct StatsArgs {
    /// Annotation files; defaults to paths.annotations.
    #[arg(long = "annotations", num_args = 1..)]
    pub annotations: Vec<PathBuf>,
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    /// Also write the rows as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct StatsRow {
    file: String,
    methods: Vec<AnnotationMethod>,
    annotators: Vec<String>,
    #[serde(flatten)]
    quality: AnnotationQuality,
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{:.1}", 100.0 * x))
}

pub fn stats(l: &Loaded, args: &StatsArgs) -> Outcome<()> {
    let files = if args.annotations.is_empty() {
        vec![l.path(None, &l.config.paths.annotations, "annotations")?]
    } else {
        args.annotations.clone()
    };
    let judged = qrels(l, args.qrels.as_ref())?;
    let mut rows = Vec::new();
    for f in &files {
        let records = read_annotations(f).or_data()?;
        let quality = annotation_quality(&records, &judged).map_err(|e| Failure::data(format!("{}: {e}", f.display())))?;
        let mut methods: Vec<AnnotationMethod> = records.iter().map(|r| r.method).collect();
        methods.sort_by_key(|m| m.to_string());
        methods.dedup();
        let mut annotators: Vec<String> = records.iter().map(|r| r.annotator_tag.clone()).collect();
        annotators.sort();
        annotators.dedup();
        rows.push(StatsRow {
            file: f.display().to_string(),
            methods,
            annotators,
            quality,
        });
    }
    println!("{:<40} {:>8} {:>10} {:>8} {:>8}", "annotations", "queries", "precision", "recall", "avg");
    for r in &rows {
        println!(
            "{:<40} {:>8} {:>10} {:>8} {:>8.2}",
            r.file,
            r.quality.queries,
            pct(r.quality.precision),
            pct(r.quality.recall),
            r.quality.avg_positives
        );
    }
    if let Some(out) = &args.out {
        let mut outputs = Outputs::new();
        outputs.write_json(out, &rows)?;
        write_meta(&mut outputs, out, "stats", &l.sha256, json!({"files": files}))?;
        outputs.commit();
    }
    Ok(())
}

// ---- synth-experiment ----

#[derive(Debug, clap::Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Number of seeds; defaults to synth.seeds.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Output directory for runs, checkpoints and the report.
    #[arg(long, default_value = "synth-output")]
    pub out: PathBuf,
    /// Exit with status 2 when a check fails.
    #[arg(long)]
    pub strict: bool,
}

pub fn synth(l: &Loaded, args: &SynthArgs) -> Outcome<()> {
    let mut cfg = l.config.synth.clone();
    if let Some(n) = args.seeds {
        cfg.seeds = n;
    }
    let mut outputs = Outputs::new();
    outputs.track_new_dir(&args.out);
    let report = run_synth_experiment(&cfg, args.seed, Some(&args.out)).map_err(|e| {
        let kind = match e {
            SynthError::Config(_) => Kind::Config,
            _ => Kind::Data,
        };
        Failure::new(kind, e)
    })?;
    outputs.commit();
    print!("{}", report.summary());
    if args.strict && !report.passed {
        return Err(Failure::data("synthetic experiment checks failed"));
    }
    Ok(())
}
