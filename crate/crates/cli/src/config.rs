//! The pipeline config file: TOML sections with defaults for every key.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};
use utilret::corpus::AnnotationMethod;
use utilret::eval::{parse_metric_list, MetricSpec, ROUGE_BETA};
use utilret::pool::{InclusionMode, PosStrategy};
use utilret::rng::sha256_hex;
use utilret::synth::SynthConfig;
use utilret::trainer::LossKind;

use crate::error::{Failure, Outcome};

fn parsed<'de, D, T>(d: D) -> Result<T, D::Error>
where
    D: Deserializer<'de>,
    T: FromStr,
    T::Err: Display,
{
    let s = String::deserialize(d)?;
    s.parse().map_err(serde::de::Error::custom)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub annotation: Annotation,
    pub pool: Pool,
    pub sampling: Sampling,
    pub training: Training,
    pub curriculum: Curriculum,
    pub eval: Eval,
    pub synth: SynthConfig,
}

/// Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub collection: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    /// Gold answers, JSON Lines.
    pub answers: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    /// First-stage runs the pools are merged from.
    pub runs: Vec<PathBuf>,
    pub pools: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    /// Directory for checkpoints written without an explicit `--out`.
    pub checkpoints: Option<PathBuf>,
    /// Directory of prompt template overrides; bundled templates otherwise.
    pub prompts: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Annotation {
    #[serde(deserialize_with = "parsed")]
    pub method: AnnotationMethod,
    pub k_percent: f64,
    /// `mock:<policy>:<seed>` or `http:<model>`.
    pub backend: String,
    pub parallelism: usize,
    pub retries: usize,
    pub shuffle: bool,
    pub seed: u64,
    pub max_output_tokens: usize,
    pub temperature: f64,
    pub timeout_secs: u64,
    /// Calls per second; 0 means unlimited.
    pub rate_limit: f64,
}

impl Default for Annotation {
    fn default() -> Self {
        Self {
            method: AnnotationMethod::UtilSel,
            k_percent: 10.0,
            backend: "mock:overlap:0".into(),
            parallelism: 4,
            retries: 2,
            shuffle: true,
            seed: 0,
            max_output_tokens: 256,
            temperature: 0.0,
            timeout_secs: 120,
            rate_limit: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Pool {
    pub n: usize,
    pub depth: usize,
    #[serde(deserialize_with = "parsed")]
    pub inclusion_mode: InclusionMode,
}

impl Default for Pool {
    fn default() -> Self {
        Self {
            n: 30,
            depth: 100,
            inclusion_mode: InclusionMode::Random,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sampling {
    pub m: usize,
    #[serde(deserialize_with = "parsed")]
    pub pos_strategy: PosStrategy,
    pub seed: u64,
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            m: 15,
            pos_strategy: PosStrategy::PosAll,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Training {
    #[serde(deserialize_with = "parsed")]
    pub loss: LossKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub in_batch_negatives: bool,
    pub replug_temperature: f64,
    pub warmup_steps: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub dim: usize,
    pub buckets: usize,
    pub encoder_seed: u64,
}

impl Default for Training {
    fn default() -> Self {
        Self {
            loss: LossKind::SumMargLH,
            epochs: 2,
            batch_size: 16,
            learning_rate: 3e-5,
            in_batch_negatives: true,
            replug_temperature: 1.0,
            warmup_steps: 0,
            weight_decay: 0.01,
            seed: 0,
            dim: 64,
            buckets: 4096,
            encoder_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Curriculum {
    pub stage2_fraction: f64,
    pub stage2_epochs: usize,
    pub lr_reinit: bool,
    pub reset_optimizer: bool,
    #[serde(deserialize_with = "parsed")]
    pub stage2_pos_strategy: PosStrategy,
}

impl Default for Curriculum {
    fn default() -> Self {
        Self {
            stage2_fraction: 0.2,
            stage2_epochs: 1,
            lr_reinit: true,
            reset_optimizer: true,
            stage2_pos_strategy: PosStrategy::PosOne,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Eval {
    /// `name@k` entries: mrr, recall, ndcg.
    pub metrics: Vec<String>,
    /// Documents kept per query by `retrieve`.
    pub depth: usize,
    pub top_k_rag: usize,
    pub rouge_beta: f64,
    pub generation_retries: usize,
    pub max_output_tokens: usize,
}

impl Default for Eval {
    fn default() -> Self {
        Self {
            metrics: vec!["mrr@10".into(), "recall@1000".into(), "ndcg@10".into()],
            depth: 1000,
            top_k_rag: 1,
            rouge_beta: ROUGE_BETA,
            generation_retries: 2,
            max_output_tokens: 64,
        }
    }
}

/// A loaded config plus where it came from.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: PipelineConfig,
    /// SHA-256 of the config's canonical JSON form, after overrides.
    pub sha256: String,
    base_dir: PathBuf,
    source: String,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), String> {
        let a = &self.annotation;
        if !(a.k_percent > 0.0 && a.k_percent <= 100.0) {
            return Err(format!("annotation.k_percent must be in (0, 100], got {}", a.k_percent));
        }
        if a.parallelism == 0 {
            return Err("annotation.parallelism must be at least 1".into());
        }
        if a.rate_limit < 0.0 {
            return Err("annotation.rate_limit must be >= 0".into());
        }
        if self.pool.n == 0 || self.pool.depth < self.pool.n {
            return Err(format!(
                "pool.n must be at least 1 and pool.depth ({}) at least pool.n ({})",
                self.pool.depth, self.pool.n
            ));
        }
        if self.sampling.m == 0 {
            return Err("sampling.m must be at least 1".into());
        }
        let t = &self.training;
        if t.batch_size == 0 {
            return Err("training.batch_size must be at least 1".into());
        }
        if !(t.learning_rate >= 0.0 && t.learning_rate.is_finite()) {
            return Err(format!("training.learning_rate must be finite and >= 0, got {}", t.learning_rate));
        }
        if t.dim == 0 || t.buckets == 0 {
            return Err("training.dim and training.buckets must be at least 1".into());
        }
        if let Some(needed) = t.loss.required_strategy() {
            if self.sampling.pos_strategy != needed {
                return Err(format!(
                    "training.loss {} needs sampling.pos_strategy = \"{needed}\", got \"{}\"",
                    t.loss, self.sampling.pos_strategy
                ));
            }
        }
        let c = &self.curriculum;
        if !(0.0..=1.0).contains(&c.stage2_fraction) {
            return Err(format!("curriculum.stage2_fraction must be in [0, 1], got {}", c.stage2_fraction));
        }
        if c.stage2_fraction == 0.0 && c.stage2_epochs > 0 {
            return Err("curriculum.stage2_fraction is 0 but curriculum.stage2_epochs > 0".into());
        }
        self.metric_specs()?;
        if self.eval.depth == 0 || self.eval.top_k_rag == 0 {
            return Err("eval.depth and eval.top_k_rag must be at least 1".into());
        }
        self.synth.validate().map_err(|e| format!("synth: {e}"))?;
        Ok(())
    }

    pub fn metric_specs(&self) -> Result<Vec<MetricSpec>, String> {
        let specs = parse_metric_list(&self.eval.metrics.join(",")).map_err(|e| format!("eval.metrics: {e}"))?;
        if specs.is_empty() {
            return Err("eval.metrics must name at least one metric".into());
        }
        Ok(specs)
    }

    pub fn sha256(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        sha256_hex(json.as_bytes())
    }
}

/// Sets a dotted key in a TOML table. The value is read as TOML when it
/// parses as such and as a bare string otherwise.
fn set_key(table: &mut toml::Table, key: &str, raw: &str) -> Result<(), String> {
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key v present"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(format!("override key {key:?} is malformed"));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| format!("override {key}: {p} is not a section"))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Reads `path` (defaults when absent), applies `key=value` overrides and
/// validates. Every error names the file or the offending key.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Outcome<Loaded> {
    let (text, source, base_dir) = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::config(format!("{}: {e}", p.display())))?;
            let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
            (text, p.display().to_string(), base)
        }
        None => (String::new(), "<defaults>".to_string(), PathBuf::new()),
    };
    let fail = |msg: String| Failure::config(format!("{source}: {msg}"));
    let config: PipelineConfig = if overrides.is_empty() {
        toml::from_str(&text).map_err(|e| fail(e.to_string()))?
    } else {
        let mut table: toml::Table = toml::from_str(&text).map_err(|e| fail(e.to_string()))?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| fail(format!("override {o:?} must look like section.key=value")))?;
            set_key(&mut table, k.trim(), v.trim()).map_err(&fail)?;
        }
        PipelineConfig::deserialize(toml::Value::Table(table)).map_err(|e| fail(format!("after overrides: {e}")))?
    };
    config.validate().map_err(fail)?;
    Ok(Loaded {
        sha256: config.sha256(),
        config,
        base_dir,
        source,
    })
}

impl Loaded {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// A required path: the flag when given, else the config entry.
    pub fn path(&self, flag: Option<&PathBuf>, entry: &Option<PathBuf>, key: &str) -> Outcome<PathBuf> {
        if let Some(f) = flag {
            return Ok(f.clone());
        }
        entry
            .as_deref()
            .map(|p| self.resolve(p))
            .ok_or_else(|| Failure::config(format!("{}: paths.{key} is not set", self.source)))
    }

    pub fn optional_path(&self, entry: &Option<PathBuf>) -> Option<PathBuf> {
        entry.as_deref().map(|p| self.resolve(p))
    }
}
