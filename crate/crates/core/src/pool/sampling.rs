use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CandidatePool, PoolError};
use crate::corpus::AnnotationRecord;
use crate::rng;

/// How many labelled positives enter one training instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PosStrategy {
    /// One positive drawn uniformly; the other slots come from the remaining
    /// positives and the negatives alike.
    #[serde(rename = "Pos-one")]
    PosOne,
    /// The label set's rounded mean positive count, the rest negatives.
    #[serde(rename = "Pos-avg")]
    PosAvg,
    /// Every positive, capped so that one negative always remains.
    #[serde(rename = "Pos-all")]
    PosAll,
}

impl fmt::Display for PosStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::PosOne => "Pos-one",
            Self::PosAvg => "Pos-avg",
            Self::PosAll => "Pos-all",
        })
    }
}

impl FromStr for PosStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "posone" => Ok(Self::PosOne),
            "posavg" => Ok(Self::PosAvg),
            "posall" => Ok(Self::PosAll),
            other => Err(format!("unknown positive sampling strategy {other:?}")),
        }
    }
}

/// Treatment of human-labelled positives when training on LLM labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InclusionMode {
    Exclusion,
    Random,
    Inclusion,
}

impl FromStr for InclusionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "exclusion" => Ok(Self::Exclusion),
            "random" => Ok(Self::Random),
            "inclusion" => Ok(Self::Inclusion),
            other => Err(format!("unknown inclusion mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingConfig {
    /// Instances hold `m + 1` documents.
    pub m: usize,
    pub pos_strategy: PosStrategy,
    pub inclusion_mode: InclusionMode,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            m: 15,
            pos_strategy: PosStrategy::PosAll,
            inclusion_mode: InclusionMode::Random,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingInstance {
    pub query_id: String,
    pub positive_ids: Vec<String>,
    pub negative_ids: Vec<String>,
}

impl TrainingInstance {
    pub fn len(&self) -> usize {
        self.positive_ids.len() + self.negative_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Positives first, then negatives.
    pub fn doc_ids(&self) -> impl Iterator<Item = &String> {
        self.positive_ids.iter().chain(&self.negative_ids)
    }
}

/// The labels a sampler draws from for one query. `forced` lists positives
/// that must appear in every instance; it is a prefix of `positives`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelView {
    pub query_id: String,
    pub positives: Vec<String>,
    pub negatives: Vec<String>,
    pub forced: Vec<String>,
}

/// Human labels over a pool: its human positives against its hard negatives.
pub fn human_label_view(pool: &CandidatePool) -> LabelView {
    LabelView {
        query_id: pool.query_id.clone(),
        positives: pool.human_positive_ids.clone(),
        negatives: pool.hard_negative_ids.clone(),
        forced: Vec::new(),
    }
}

fn minus(ids: &[String], remove: &HashSet<&str>) -> Vec<String> {
    ids.iter().filter(|d| !remove.contains(d.as_str())).cloned().collect()
}

/// Derives the label view of an LLM annotation under an inclusion mode.
pub fn apply_inclusion_mode(
    pool: &CandidatePool,
    llm_record: &AnnotationRecord,
    mode: InclusionMode,
    m: usize,
) -> Result<LabelView, PoolError> {
    if llm_record.query_id != pool.query_id {
        return Err(PoolError::QueryMismatch {
            pool: pool.query_id.clone(),
            record: llm_record.query_id.clone(),
        });
    }
    let candidates = if llm_record.candidate_ids.is_empty() {
        pool.candidate_ids()
    } else {
        llm_record.candidate_ids.clone()
    };
    let llm_pos: HashSet<&str> = llm_record.positive_ids.iter().map(String::as_str).collect();
    let negatives = minus(&candidates, &llm_pos);
    let human: HashSet<&str> = pool.human_positive_ids.iter().map(String::as_str).collect();
    let view = match mode {
        InclusionMode::Random => LabelView {
            query_id: pool.query_id.clone(),
            positives: llm_record.positive_ids.clone(),
            negatives,
            forced: Vec::new(),
        },
        InclusionMode::Exclusion => LabelView {
            query_id: pool.query_id.clone(),
            positives: minus(&llm_record.positive_ids, &human),
            negatives: minus(&negatives, &human),
            forced: Vec::new(),
        },
        InclusionMode::Inclusion => {
            if pool.human_positive_ids.len() > m {
                return Err(PoolError::InclusionOverflow {
                    query_id: pool.query_id.clone(),
                    count: pool.human_positive_ids.len(),
                    m,
                });
            }
            let forced = pool.human_positive_ids.clone();
            let mut positives = forced.clone();
            positives.extend(minus(&llm_record.positive_ids, &human));
            LabelView {
                query_id: pool.query_id.clone(),
                positives,
                negatives: minus(&negatives, &human),
                forced,
            }
        }
    };
    Ok(view)
}

/// Mean positives per query over a label set, rounded half up.
pub fn average_positive_count(views: &[LabelView]) -> usize {
    if views.is_empty() {
        return 0;
    }
    let total: usize = views.iter().map(|v| v.positives.len()).sum();
    let n = views.len();
    (2 * total + n) / (2 * n)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SampleError {
    #[error("query {0} has no labelled positives")]
    NoPositives(String),
    #[error("query {query_id}: only {available} documents for {needed} remaining slots")]
    Undersized {
        query_id: String,
        available: usize,
        needed: usize,
    },
}

/// Splits a uniformly random `k`-subset off `items`: `(chosen, rest)`.
fn draw<R: Rng>(items: &[String], k: usize, rng: &mut R) -> (Vec<String>, Vec<String>) {
    let mut pool = items.to_vec();
    let k = k.min(pool.len());
    pool.partial_shuffle(rng, k);
    let rest = pool.split_off(k);
    (pool, rest)
}

/// Draws one instance of `m + 1` documents from a label view.
///
/// `avg_positives` is the label set's rounded mean, used by `Pos-avg`.
pub fn sample_instance<R: Rng>(
    view: &LabelView,
    config: &SamplingConfig,
    avg_positives: usize,
    rng: &mut R,
) -> Result<TrainingInstance, SampleError> {
    if view.positives.is_empty() {
        return Err(SampleError::NoPositives(view.query_id.clone()));
    }
    let m = config.m;
    let forced: HashSet<&str> = view.forced.iter().map(String::as_str).collect();
    let others: Vec<String> = view
        .positives
        .iter()
        .filter(|p| !forced.contains(p.as_str()))
        .cloned()
        .collect();

    let (target, cap) = match config.pos_strategy {
        PosStrategy::PosOne => (1, m + 1),
        PosStrategy::PosAvg => (avg_positives.max(1), m),
        PosStrategy::PosAll => (view.positives.len(), m),
    };
    let mut positive_ids = view.forced.clone();
    let extra = target.min(cap).saturating_sub(positive_ids.len());
    let (picked, unpicked) = draw(&others, extra, rng);
    positive_ids.extend(picked);

    let mut fill: Vec<String> = Vec::new();
    if config.pos_strategy == PosStrategy::PosOne {
        fill.extend(unpicked);
    }
    fill.extend(view.negatives.iter().cloned());
    let needed = (m + 1).saturating_sub(positive_ids.len());
    if fill.len() < needed {
        return Err(SampleError::Undersized {
            query_id: view.query_id.clone(),
            available: fill.len(),
            needed,
        });
    }
    let (negative_ids, _) = draw(&fill, needed, rng);
    Ok(TrainingInstance {
        query_id: view.query_id.clone(),
        positive_ids,
        negative_ids,
    })
}

/// Queries that produced no instance in an epoch.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SkipReport {
    pub no_positives: Vec<String>,
    pub undersized: Vec<String>,
}

impl SkipReport {
    pub fn total(&self) -> usize {
        self.no_positives.len() + self.undersized.len()
    }
}

/// Fresh instances per epoch from a fixed label set. Each query draws from
/// its own stream keyed by `(seed, query_id, epoch)`.
#[derive(Debug, Clone)]
pub struct InstanceSampler {
    views: Vec<LabelView>,
    config: SamplingConfig,
    avg_positives: usize,
}

impl InstanceSampler {
    pub fn new(views: Vec<LabelView>, config: SamplingConfig) -> Self {
        let avg_positives = average_positive_count(&views);
        Self {
            views,
            config,
            avg_positives,
        }
    }

    pub fn config(&self) -> &SamplingConfig {
        &self.config
    }

    pub fn views(&self) -> &[LabelView] {
        &self.views
    }

    pub fn avg_positives(&self) -> usize {
        self.avg_positives
    }

    pub fn epoch(&self, epoch: usize) -> (Vec<TrainingInstance>, SkipReport) {
        let epoch_key = epoch.to_string();
        let results: Vec<Result<TrainingInstance, SampleError>> = self
            .views
            .par_iter()
            .map(|v| {
                let mut r = rng::stream(self.config.seed, &["sample", &v.query_id, &epoch_key]);
                sample_instance(v, &self.config, self.avg_positives, &mut r)
            })
            .collect();
        let mut instances = Vec::with_capacity(results.len());
        let mut skips = SkipReport::default();
        for r in results {
            match r {
                Ok(inst) => instances.push(inst),
                Err(SampleError::NoPositives(q)) => skips.no_positives.push(q),
                Err(SampleError::Undersized { query_id, .. }) => skips.undersized.push(query_id),
            }
        }
        if skips.total() > 0 {
            log::info!(
                "epoch {epoch}: skipped {} queries without positives, {} undersized",
                skips.no_positives.len(),
                skips.undersized.len()
            );
        }
        (instances, skips)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::AnnotationMethod;
    use proptest::prelude::*;

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    fn view(pos: &[&str], negatives: usize) -> LabelView {
        LabelView {
            query_id: "q".into(),
            positives: pos.iter().map(|s| s.to_string()).collect(),
            negatives: ids("n", negatives),
            forced: Vec::new(),
        }
    }

    fn cfg(strategy: PosStrategy) -> SamplingConfig {
        SamplingConfig {
            m: 15,
            pos_strategy: strategy,
            inclusion_mode: InclusionMode::Random,
            seed: 1,
        }
    }

    #[test]
    fn pos_all_takes_every_positive() {
        let v = view(&["a", "b", "c"], 30);
        let inst = sample_instance(&v, &cfg(PosStrategy::PosAll), 0, &mut rng::stream(0, &[])).unwrap();
        let mut p = inst.positive_ids.clone();
        p.sort();
        assert_eq!(p, vec!["a", "b", "c"]);
        assert_eq!(inst.negative_ids.len(), 13);
    }

    #[test]
    fn pos_one_fills_from_other_positives_and_negatives() {
        let v = view(&["a", "b", "c"], 30);
        let inst = sample_instance(&v, &cfg(PosStrategy::PosOne), 0, &mut rng::stream(0, &[])).unwrap();
        assert_eq!(inst.positive_ids.len(), 1);
        assert_eq!(inst.negative_ids.len(), 15);
        let allowed: HashSet<String> = v.positives.iter().chain(&v.negatives).cloned().collect();
        assert!(inst.negative_ids.iter().all(|d| allowed.contains(d)));
        assert!(!inst.negative_ids.contains(&inst.positive_ids[0]));
    }

    #[test]
    fn pos_one_can_draw_other_positives_as_fill() {
        let v = view(&["a", "b", "c"], 30);
        let hit = (0..200).any(|e| {
            let inst = sample_instance(&v, &cfg(PosStrategy::PosOne), 0, &mut rng::stream(e, &[])).unwrap();
            inst.negative_ids.iter().any(|d| ["a", "b", "c"].contains(&d.as_str()))
        });
        assert!(hit);
    }

    #[test]
    fn pos_all_caps_at_m() {
        let pos = ids("p", 16);
        let refs: Vec<&str> = pos.iter().map(String::as_str).collect();
        let v = view(&refs, 30);
        let inst = sample_instance(&v, &cfg(PosStrategy::PosAll), 0, &mut rng::stream(0, &[])).unwrap();
        assert_eq!(inst.positive_ids.len(), 15);
        assert_eq!(inst.negative_ids.len(), 1);
    }

    #[test]
    fn pos_avg_uses_rounded_mean() {
        let views = vec![view(&["a", "b", "c"], 30), view(&["a", "b"], 30)];
        // mean 2.5 rounds half up to 3
        assert_eq!(average_positive_count(&views), 3);
        let inst = sample_instance(&views[1], &cfg(PosStrategy::PosAvg), 3, &mut rng::stream(0, &[])).unwrap();
        assert_eq!(inst.positive_ids.len(), 2);
        assert_eq!(inst.negative_ids.len(), 14);
        assert!(inst.negative_ids.iter().all(|d| d.starts_with('n')));
    }

    #[test]
    fn no_positives_is_skipped() {
        let v = view(&[], 30);
        assert_eq!(
            sample_instance(&v, &cfg(PosStrategy::PosAll), 0, &mut rng::stream(0, &[])),
            Err(SampleError::NoPositives("q".into()))
        );
        let sampler = InstanceSampler::new(vec![v, view(&["a"], 30)], cfg(PosStrategy::PosAll));
        let (inst, skips) = sampler.epoch(0);
        assert_eq!(inst.len(), 1);
        assert_eq!(skips.no_positives, vec!["q"]);
    }

    #[test]
    fn undersized_pool_is_reported() {
        let v = view(&["a"], 3);
        assert!(matches!(
            sample_instance(&v, &cfg(PosStrategy::PosAll), 0, &mut rng::stream(0, &[])),
            Err(SampleError::Undersized { available: 3, needed: 15, .. })
        ));
    }

    fn pool_and_record() -> (CandidatePool, AnnotationRecord) {
        let mut negatives = vec!["x".to_string()];
        negatives.extend(ids("n", 29));
        let pool = CandidatePool {
            query_id: "q".into(),
            human_positive_ids: vec!["h".into()],
            hard_negative_ids: negatives,
            source_tags: Default::default(),
        };
        let record = AnnotationRecord {
            query_id: "q".into(),
            method: AnnotationMethod::UtilSel,
            positive_ids: vec!["h".into(), "x".into()],
            candidate_ids: pool.candidate_ids(),
            pseudo_answer: Some("ans".into()),
            raw_responses: vec![],
            annotator_tag: "mock".into(),
            selected_ids: None,
            k_percent: None,
        };
        (pool, record)
    }

    #[test]
    fn exclusion_drops_human_positive() {
        let (pool, record) = pool_and_record();
        let v = apply_inclusion_mode(&pool, &record, InclusionMode::Exclusion, 15).unwrap();
        assert_eq!(v.positives, vec!["x"]);
        assert!(!v.negatives.contains(&"h".to_string()));
    }

    #[test]
    fn random_keeps_labels() {
        let (pool, record) = pool_and_record();
        let v = apply_inclusion_mode(&pool, &record, InclusionMode::Random, 15).unwrap();
        assert_eq!(v.positives, vec!["h", "x"]);
        assert!(v.forced.is_empty());
    }

    #[test]
    fn inclusion_forces_human_positive_into_every_instance() {
        let (pool, mut record) = pool_and_record();
        // even when the LLM did not pick it
        record.positive_ids = vec!["x".into()];
        let v = apply_inclusion_mode(&pool, &record, InclusionMode::Inclusion, 15).unwrap();
        assert!(!v.negatives.contains(&"h".to_string()));
        for strategy in [PosStrategy::PosOne, PosStrategy::PosAvg, PosStrategy::PosAll] {
            for e in 0..20 {
                let inst = sample_instance(&v, &cfg(strategy), 1, &mut rng::stream(e, &[])).unwrap();
                assert!(inst.positive_ids.contains(&"h".to_string()));
                assert_eq!(inst.len(), 16);
            }
        }
    }

    #[test]
    fn inclusion_overflow_is_an_error() {
        let (mut pool, record) = pool_and_record();
        pool.human_positive_ids = ids("h", 16);
        assert!(matches!(
            apply_inclusion_mode(&pool, &record, InclusionMode::Inclusion, 15),
            Err(PoolError::InclusionOverflow { .. })
        ));
    }

    #[test]
    fn record_for_other_query_rejected() {
        let (pool, mut record) = pool_and_record();
        record.query_id = "other".into();
        assert!(apply_inclusion_mode(&pool, &record, InclusionMode::Random, 15).is_err());
    }

    #[test]
    fn sampler_is_deterministic_and_fresh_per_epoch() {
        let views: Vec<LabelView> = (0..10)
            .map(|i| LabelView {
                query_id: format!("q{i}"),
                ..view(&["a", "b", "c"], 30)
            })
            .collect();
        let s = InstanceSampler::new(views, cfg(PosStrategy::PosOne));
        assert_eq!(s.epoch(0), s.epoch(0));
        assert_ne!(s.epoch(0).0, s.epoch(1).0);
    }

    fn arb_view() -> impl Strategy<Value = (usize, usize, usize, usize)> {
        // (positives, negatives, m, strategy index)
        (1usize..20, 0usize..40, 1usize..20, 0usize..3)
    }

    proptest! {
        #[test]
        fn size_law_and_disjointness((np, nn, m, si) in arb_view(), seed in 0u64..1000) {
            let strategy = [PosStrategy::PosOne, PosStrategy::PosAvg, PosStrategy::PosAll][si];
            let v = LabelView {
                query_id: "q".into(),
                positives: ids("p", np),
                negatives: ids("n", nn),
                forced: Vec::new(),
            };
            let config = SamplingConfig { m, pos_strategy: strategy, inclusion_mode: InclusionMode::Random, seed };
            let avg = 1 + (seed as usize % 4);
            match sample_instance(&v, &config, avg, &mut rng::stream(seed, &[])) {
                Ok(inst) => {
                    prop_assert_eq!(inst.len(), m + 1);
                    prop_assert!(!inst.positive_ids.is_empty());
                    let all: HashSet<&String> = inst.doc_ids().collect();
                    prop_assert_eq!(all.len(), m + 1);
                    if strategy == PosStrategy::PosAll {
                        prop_assert!(!inst.negative_ids.is_empty());
                    }
                    if strategy == PosStrategy::PosOne {
                        prop_assert_eq!(inst.positive_ids.len(), 1);
                    }
                }
                Err(SampleError::Undersized { .. }) => {}
                Err(e) => prop_assert!(false, "unexpected {e}"),
            }
        }

        #[test]
        fn exclusion_never_emits_human_positives(seed in 0u64..500, llm_has_h in any::<bool>()) {
            let (pool, mut record) = pool_and_record();
            if !llm_has_h {
                record.positive_ids = vec!["x".into(), "n3".into()];
            }
            let v = apply_inclusion_mode(&pool, &record, InclusionMode::Exclusion, 15).unwrap();
            for strategy in [PosStrategy::PosOne, PosStrategy::PosAvg, PosStrategy::PosAll] {
                let inst = sample_instance(&v, &cfg(strategy), 2, &mut rng::stream(seed, &[])).unwrap();
                prop_assert!(inst.doc_ids().all(|d| d != "h"));
            }
        }
    }
}
