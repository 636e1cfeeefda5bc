//! The select, deduplicate, annotate, retrain loop.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{
    assign_clusters, pick_with_rule, spectral_cluster, train_integrated_head, triplets_from_pairs,
    ClusterAssignment, IntegratedHead, IntegratedHyper, RepresentativeRule,
};
use crate::corpus::{generate_pair_dataset, split_initial, Corpus, SimilarityPair, TaggedSentence};
use crate::error::{invalid, Error, Result};
use crate::metrics::token_f1;
use crate::seed;
use crate::similarity::{
    build_similarity_matrix, train_siamese_head, CosineScorer, EncodingSource, FrozenCosineScorer,
    FrozenSentenceEncoder, PairScorer, SiameseHead, SiameseHyper, SiameseScorer,
};
use crate::strategies::{score_sentence, select_candidates, ScoredCandidate, StrategyConfig, StrategyKind};
use crate::tagger::{train_tagger, TaggerHyper, TaggerModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DedupMode {
    /// Siamese head on tagger encodings, spectral clustering.
    MaSiamese,
    /// Integrated softmax clustering head on tagger encodings.
    IntModel,
    /// Cosine over tagger encodings, spectral clustering.
    Cosine,
    /// Cosine over a frozen bag of embeddings, spectral clustering.
    InfersentLike,
    /// Siamese head on raw embeddings, spectral clustering.
    IsoSiamese,
    /// Keep every selected candidate.
    None,
    /// Uniform sample of the pool, no scoring.
    Random,
}

impl DedupMode {
    pub const ALL: [DedupMode; 7] = [
        DedupMode::MaSiamese,
        DedupMode::IntModel,
        DedupMode::Cosine,
        DedupMode::InfersentLike,
        DedupMode::IsoSiamese,
        DedupMode::None,
        DedupMode::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DedupMode::MaSiamese => "ma_siamese",
            DedupMode::IntModel => "int_model",
            DedupMode::Cosine => "cosine",
            DedupMode::InfersentLike => "infersent_like",
            DedupMode::IsoSiamese => "iso_siamese",
            DedupMode::None => "none",
            DedupMode::Random => "random",
        }
    }

    /// Whether this mode clusters the selection.
    pub fn clusters(self) -> bool {
        !matches!(self, DedupMode::None | DedupMode::Random)
    }

    fn siamese_source(self) -> Option<EncodingSource> {
        match self {
            DedupMode::MaSiamese => Some(EncodingSource::ModelEncoder),
            DedupMode::IsoSiamese => Some(EncodingSource::RawEmbedding),
            _ => None,
        }
    }

    fn has_trained_head(self) -> bool {
        matches!(self, DedupMode::MaSiamese | DedupMode::IsoSiamese | DedupMode::IntModel)
    }
}

impl fmt::Display for DedupMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DedupMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| invalid(format!("unknown dedup mode {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub strategy: StrategyConfig,
    pub dedup: DedupMode,
    pub initial_fraction: f64,
    /// Candidates selected per iteration, as a fraction of the pool size.
    pub per_iter_fraction: f64,
    pub iterations: usize,
    pub k: usize,
    pub per_cluster: usize,
    pub retrain_period: usize,
    pub representative: RepresentativeRule,
    /// Auxiliary pairs drawn from the pool text to train similarity heads.
    pub aux_pairs: usize,
    /// Label excluded from the positive set when computing F1.
    pub outside_label: Option<String>,
    pub seed: u64,
    /// When false, `wall_ms` is logged as zero so logs are byte-stable.
    pub record_timing: bool,
    pub tagger: TaggerHyper,
    pub siamese: SiameseHyper,
    pub integrated: IntegratedHyper,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            strategy: StrategyConfig::top_fraction(StrategyKind::Margin, 1.0),
            dedup: DedupMode::MaSiamese,
            initial_fraction: 0.02,
            per_iter_fraction: 0.02,
            iterations: 10,
            k: 20,
            per_cluster: 2,
            retrain_period: 10,
            representative: RepresentativeRule::Uncertainty,
            aux_pairs: 400,
            outside_label: None,
            seed: 0,
            record_timing: true,
            tagger: TaggerHyper::default(),
            siamese: SiameseHyper::default(),
            integrated: IntegratedHyper::default(),
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("initial_fraction", self.initial_fraction),
            ("per_iter_fraction", self.per_iter_fraction),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Validation(format!("{name} = {f} is not in (0, 1)")));
            }
        }
        if self.iterations < 1 {
            return Err(Error::Validation("iterations must be at least 1".into()));
        }
        if self.k < 2 {
            return Err(Error::Validation("k must be at least 2".into()));
        }
        if self.per_cluster < 1 {
            return Err(Error::Validation("per_cluster must be at least 1".into()));
        }
        if self.retrain_period < 1 {
            return Err(Error::Validation("retrain_period must be at least 1".into()));
        }
        if self.strategy.kind.needs_attention() {
            return Err(Error::Validation(format!(
                "strategy {} needs attention records and cannot drive the tagging loop",
                self.strategy.kind
            )));
        }
        if self.dedup.has_trained_head() && self.aux_pairs < 2 {
            return Err(Error::Validation("aux_pairs must be at least 2".into()));
        }
        self.strategy.validate()?;
        self.tagger.validate()?;
        self.siamese.validate()?;
        IntegratedHyper { k: self.k, ..self.integrated }.validate()
    }

    /// Candidates per iteration for a pool of `n` sentences.
    pub fn selection_budget(&self, n: usize) -> usize {
        ((self.per_iter_fraction * n as f64).ceil() as usize).max(1)
    }

    fn tagger_hyper(&self) -> TaggerHyper {
        TaggerHyper {
            seed: seed::derive(self.seed, 1),
            ..self.tagger
        }
    }
}

/// Reveals gold labels and counts annotation cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Oracle {
    labeled: Vec<bool>,
    pub cost_tokens: usize,
    pub cost_sentences: usize,
}

impl Oracle {
    pub fn new(pool_size: usize) -> Self {
        Self {
            labeled: vec![false; pool_size],
            cost_tokens: 0,
            cost_sentences: 0,
        }
    }

    pub fn is_labeled(&self, index: usize) -> bool {
        self.labeled[index]
    }

    pub fn labeled_indices(&self) -> Vec<usize> {
        (0..self.labeled.len()).filter(|&i| self.labeled[i]).collect()
    }

    pub fn unlabeled_indices(&self) -> Vec<usize> {
        (0..self.labeled.len()).filter(|&i| !self.labeled[i]).collect()
    }

    /// Marks `indices` labeled and returns the tokens revealed. Nothing is
    /// changed when any index is already labeled or repeated.
    pub fn annotate(&mut self, corpus: &Corpus, indices: &[usize]) -> Result<usize> {
        let mut seen = std::collections::HashSet::new();
        for &i in indices {
            if i >= self.labeled.len() {
                return Err(invalid(format!("index {i} outside the pool")));
            }
            if self.labeled[i] || !seen.insert(i) {
                return Err(Error::AlreadyLabeled(i));
            }
        }
        let tokens: usize = indices.iter().map(|&i| corpus.sentences[i].len()).sum();
        for &i in indices {
            self.labeled[i] = true;
        }
        self.cost_tokens += tokens;
        self.cost_sentences += indices.len();
        Ok(tokens)
    }
}

/// Trained similarity or clustering state used for deduplication.
#[derive(Debug, Clone)]
pub enum Deduplicator {
    Keep,
    Siamese(SiameseHead),
    Integrated(IntegratedHead),
    Cosine,
    Frozen(FrozenSentenceEncoder),
}

impl Deduplicator {
    /// Builds the state for `mode`; heads are trained on `pairs` encoded by `model`.
    pub fn train(
        mode: DedupMode,
        model: &TaggerModel,
        pairs: &[SimilarityPair],
        cfg: &LoopConfig,
        seed: u64,
    ) -> Result<Self> {
        Ok(match mode {
            DedupMode::None | DedupMode::Random => Deduplicator::Keep,
            DedupMode::Cosine => Deduplicator::Cosine,
            DedupMode::InfersentLike => Deduplicator::Frozen(FrozenSentenceEncoder::new(model.dim())),
            DedupMode::MaSiamese | DedupMode::IsoSiamese => {
                let source = mode.siamese_source().expect("siamese mode");
                Deduplicator::Siamese(train_siamese_head(model, pairs, source, &cfg.siamese, seed)?)
            }
            DedupMode::IntModel => {
                let hyper = IntegratedHyper { k: cfg.k, ..cfg.integrated };
                let triplets = triplets_from_pairs(pairs, pairs.len(), seed);
                Deduplicator::Integrated(train_integrated_head(
                    model,
                    &triplets,
                    EncodingSource::ModelEncoder,
                    &hyper,
                    seed,
                )?)
            }
        })
    }

    /// Groups the candidates. `None` when no grouping applies.
    pub fn cluster(
        &self,
        model: &TaggerModel,
        candidates: &[&[String]],
        k: usize,
        seed: u64,
    ) -> Result<Option<ClusterAssignment>> {
        if candidates.len() < 2 {
            return Ok(None);
        }
        let k = k.min(candidates.len());
        let spectral = |scorer: &dyn PairScorer| -> Result<Option<ClusterAssignment>> {
            let s = build_similarity_matrix(scorer, candidates)?;
            spectral_cluster(&s, k, seed).map(Some)
        };
        match self {
            Deduplicator::Keep => Ok(None),
            Deduplicator::Siamese(head) => spectral(&SiameseScorer { head, model }),
            Deduplicator::Cosine => spectral(&CosineScorer { model }),
            Deduplicator::Frozen(encoder) => spectral(&FrozenCosineScorer { encoder: *encoder }),
            Deduplicator::Integrated(head) => Ok(Some(assign_clusters(head, model, candidates))),
        }
    }
}

/// Result of deduplicating one selection.
#[derive(Debug, Clone, PartialEq)]
pub struct DedupOutcome {
    /// Positions into the candidate list, grouped by cluster.
    pub kept: Vec<usize>,
    pub assignment: Option<ClusterAssignment>,
}

/// Clusters the candidates and keeps up to `per_cluster` from each group.
pub fn deduplicate(
    dedup: &Deduplicator,
    model: &TaggerModel,
    candidates: &[&[String]],
    uncertainty: &[f64],
    cfg: &LoopConfig,
    seed: u64,
) -> Result<DedupOutcome> {
    match dedup.cluster(model, candidates, cfg.k, seed)? {
        None => Ok(DedupOutcome {
            kept: (0..candidates.len()).collect(),
            assignment: None,
        }),
        Some(assign) => Ok(DedupOutcome {
            kept: pick_with_rule(&assign, uncertainty, cfg.per_cluster, cfg.representative, seed),
            assignment: Some(assign),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub labeled_fraction: f64,
    pub n_labeled: usize,
    pub selected_indices: Vec<usize>,
    pub kept_indices: Vec<usize>,
    pub cluster_sizes: Vec<usize>,
    pub test_f1: f64,
    pub cost_tokens: usize,
    pub cost_sentences: usize,
    pub head_retrained: bool,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub strategy: StrategyKind,
    pub dedup: DedupMode,
    pub seed: u64,
    pub pool_size: usize,
    pub records: Vec<IterationRecord>,
    /// Iteration at which the pool ran dry, if it did.
    pub budget_exhausted_at: Option<usize>,
    #[serde(skip)]
    pub final_model: Option<TaggerModel>,
}

impl RunLog {
    /// One JSON object per iteration.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Vec<IterationRecord>> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(Error::from))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        records_csv(&self.records)
    }

    /// `(cost_tokens, test_f1)` points.
    pub fn cost_curve(&self) -> Vec<(f64, f64)> {
        self.records
            .iter()
            .map(|r| (r.cost_tokens as f64, r.test_f1))
            .collect()
    }

    /// `(labeled_fraction, test_f1)` points.
    pub fn fraction_curve(&self) -> Vec<(f64, f64)> {
        self.records
            .iter()
            .map(|r| (r.labeled_fraction, r.test_f1))
            .collect()
    }
}

pub fn records_csv(records: &[IterationRecord]) -> String {
    let mut out = String::from("iter,labeled_fraction,n_selected,n_kept,test_f1,cost_tokens,wall_ms\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{:.6},{},{},{:.6},{},{}",
            r.iter,
            r.labeled_fraction,
            r.selected_indices.len(),
            r.kept_indices.len(),
            r.test_f1,
            r.cost_tokens,
            r.wall_ms
        );
    }
    out
}

/// Token F1 of `model` on `test`, with labels compared by index.
pub fn evaluate(model: &TaggerModel, test: &Corpus, outside: Option<usize>) -> Result<f64> {
    let (pred, gold): (Vec<Vec<usize>>, Vec<Vec<usize>>) = test
        .sentences
        .par_iter()
        .map(|s| (model.decode(&s.tokens), s.labels.clone()))
        .unzip();
    token_f1(&pred.concat(), &gold.concat(), outside)
}

fn outside_id(cfg: &LoopConfig, corpus: &Corpus) -> Result<Option<usize>> {
    cfg.outside_label
        .as_deref()
        .map(|name| {
            corpus
                .label_id(name)
                .ok_or_else(|| Error::Validation(format!("outside_label {name:?} not in corpus labels")))
        })
        .transpose()
}

fn check_corpora(pool: &Corpus, test: &Corpus) -> Result<()> {
    if pool.is_empty() || test.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if pool.label_names != test.label_names {
        return Err(invalid("pool and test corpora use different label sets"));
    }
    Ok(())
}

fn train_on(pool: &Corpus, indices: &[usize], hyper: &TaggerHyper) -> Result<TaggerModel> {
    let sentences: Vec<&TaggedSentence> = indices.iter().map(|&i| &pool.sentences[i]).collect();
    train_tagger(&sentences, pool.label_count(), hyper)
}

/// Test F1 of a tagger trained on the whole pool.
pub fn full_data_f1(pool: &Corpus, test: &Corpus, cfg: &LoopConfig) -> Result<f64> {
    check_corpora(pool, test)?;
    let all: Vec<usize> = (0..pool.len()).collect();
    let model = train_on(pool, &all, &cfg.tagger_hyper())?;
    evaluate(&model, test, outside_id(cfg, pool)?)
}

/// Runs the active learning loop on `pool`, evaluating on `test` after the
/// initial split and after every iteration.
pub fn run_active_learning(cfg: &LoopConfig, pool: &Corpus, test: &Corpus) -> Result<RunLog> {
    cfg.validate()?;
    check_corpora(pool, test)?;
    let outside = outside_id(cfg, pool)?;
    let n = pool.len();
    let hyper = cfg.tagger_hyper();
    let budget = cfg.selection_budget(n);

    let (initial, _) = split_initial(n, cfg.initial_fraction, seed::derive(cfg.seed, 0))?;
    let mut oracle = Oracle::new(n);
    oracle.annotate(pool, &initial)?;

    let start = Instant::now();
    let mut model = train_on(pool, &oracle.labeled_indices(), &hyper)?;
    let aux_pairs = if cfg.dedup.has_trained_head() {
        generate_pair_dataset(pool, cfg.aux_pairs, seed::derive(cfg.seed, 2))?
    } else {
        Vec::new()
    };
    let head_seed = |iter: usize| seed::derive(seed::derive(cfg.seed, 3), iter as u64);
    let mut dedup = Deduplicator::train(cfg.dedup, &model, &aux_pairs, cfg, head_seed(0))?;
    let elapsed = |t: Instant| {
        if cfg.record_timing {
            t.elapsed().as_millis() as u64
        } else {
            0
        }
    };

    let mut records = vec![IterationRecord {
        iter: 0,
        labeled_fraction: initial.len() as f64 / n as f64,
        n_labeled: initial.len(),
        selected_indices: Vec::new(),
        kept_indices: Vec::new(),
        cluster_sizes: Vec::new(),
        test_f1: evaluate(&model, test, outside)?,
        cost_tokens: oracle.cost_tokens,
        cost_sentences: oracle.cost_sentences,
        head_retrained: true,
        wall_ms: elapsed(start),
    }];
    let mut budget_exhausted_at = None;

    for iter in 1..=cfg.iterations {
        let unlabeled = oracle.unlabeled_indices();
        if unlabeled.is_empty() {
            budget_exhausted_at = Some(iter);
            break;
        }
        let t = Instant::now();
        let iter_seed = seed::derive(seed::derive(cfg.seed, 4), iter as u64);

        let (selected, kept, cluster_sizes) = if cfg.dedup == DedupMode::Random {
            let take = budget.min(unlabeled.len());
            let mut rng = seed::rng(iter_seed);
            let mut picks: Vec<usize> = sample(&mut rng, unlabeled.len(), take)
                .into_iter()
                .map(|p| unlabeled[p])
                .collect();
            picks.sort_unstable();
            (picks.clone(), picks, Vec::new())
        } else {
            let scored = unlabeled
                .par_iter()
                .map(|&i| {
                    let s = score_sentence(&model, &pool.sentences[i].tokens, &cfg.strategy, seed::derive(iter_seed, i as u64))?;
                    Ok(ScoredCandidate::new(i, s, cfg.strategy.kind))
                })
                .collect::<Result<Vec<_>>>()?;
            let uncertainty_of: std::collections::HashMap<usize, f64> =
                scored.iter().map(|c| (c.index, c.uncertainty())).collect();
            let mut selected = select_candidates(&scored, &cfg.strategy);
            selected.truncate(budget);
            let tokens: Vec<&[String]> = selected.iter().map(|&i| pool.sentences[i].tokens.as_slice()).collect();
            let uncertainty: Vec<f64> = selected.iter().map(|i| uncertainty_of[i]).collect();
            let outcome = deduplicate(&dedup, &model, &tokens, &uncertainty, cfg, iter_seed)?;
            let kept: Vec<usize> = outcome.kept.iter().map(|&p| selected[p]).collect();
            let sizes = outcome.assignment.map(|a| a.sizes()).unwrap_or_default();
            (selected, kept, sizes)
        };

        oracle.annotate(pool, &kept)?;
        model = train_on(pool, &oracle.labeled_indices(), &hyper)?;
        let head_retrained = iter % cfg.retrain_period == 0;
        if head_retrained {
            dedup = Deduplicator::train(cfg.dedup, &model, &aux_pairs, cfg, head_seed(iter))?;
        }
        let n_labeled = oracle.labeled_indices().len();
        records.push(IterationRecord {
            iter,
            labeled_fraction: n_labeled as f64 / n as f64,
            n_labeled,
            selected_indices: selected,
            kept_indices: kept,
            cluster_sizes,
            test_f1: evaluate(&model, test, outside)?,
            cost_tokens: oracle.cost_tokens,
            cost_sentences: oracle.cost_sentences,
            head_retrained,
            wall_ms: elapsed(t),
        });
    }

    Ok(RunLog {
        strategy: cfg.strategy.kind,
        dedup: cfg.dedup,
        seed: cfg.seed,
        pool_size: n,
        records,
        budget_exhausted_at,
        final_model: Some(model),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic_corpus, hold_out_copies, SyntheticConfig};

    fn corpora() -> (Corpus, Corpus) {
        let cfg = SyntheticConfig {
            n_templates: 12,
            copies_per_template: 5,
            ..SyntheticConfig::default()
        };
        let all = generate_synthetic_corpus(&cfg, 4).unwrap();
        hold_out_copies(&all, 1)
    }

    fn quick(dedup: DedupMode) -> LoopConfig {
        LoopConfig {
            dedup,
            initial_fraction: 0.1,
            per_iter_fraction: 0.2,
            iterations: 3,
            k: 4,
            retrain_period: 2,
            aux_pairs: 60,
            record_timing: false,
            tagger: TaggerHyper { epochs: 20, dim: 16, ..TaggerHyper::default() },
            siamese: SiameseHyper { epochs: 5, ..SiameseHyper::default() },
            integrated: IntegratedHyper { epochs: 5, ..IntegratedHyper::default() },
            ..LoopConfig::default()
        }
    }

    #[test]
    fn oracle_counts_tokens() {
        let pool = Corpus {
            sentences: vec![
                TaggedSentence::new(vec!["a".into(); 3], vec![0; 3]),
                TaggedSentence::new(vec!["b".into(); 5], vec![0; 5]),
            ],
            label_names: vec!["O".into()],
        };
        let mut oracle = Oracle::new(2);
        assert_eq!(oracle.annotate(&pool, &[]).unwrap(), 0);
        assert_eq!(oracle.annotate(&pool, &[0, 1]).unwrap(), 8);
        assert_eq!(oracle.cost_tokens, 8);
        assert!(matches!(oracle.annotate(&pool, &[1]), Err(Error::AlreadyLabeled(1))));
        assert_eq!(oracle.cost_sentences, 2);
        let mut fresh = Oracle::new(2);
        assert!(matches!(fresh.annotate(&pool, &[0, 0]), Err(Error::AlreadyLabeled(0))));
        assert_eq!(fresh.cost_tokens, 0);
    }

    #[test]
    fn none_keeps_whole_selection() {
        let (pool, test) = corpora();
        let log = run_active_learning(&quick(DedupMode::None), &pool, &test).unwrap();
        let budget = quick(DedupMode::None).selection_budget(pool.len());
        for r in &log.records[1..] {
            assert_eq!(r.kept_indices, r.selected_indices);
            assert_eq!(r.selected_indices.len(), budget);
        }
    }

    #[test]
    fn random_matches_budget() {
        let (pool, test) = corpora();
        let cfg = quick(DedupMode::Random);
        let log = run_active_learning(&cfg, &pool, &test).unwrap();
        for r in &log.records[1..] {
            assert_eq!(r.selected_indices.len(), cfg.selection_budget(pool.len()));
        }
    }

    #[test]
    fn every_mode_keeps_subset_and_grows_monotonically() {
        let (pool, test) = corpora();
        for mode in DedupMode::ALL {
            let cfg = quick(mode);
            let log = run_active_learning(&cfg, &pool, &test).unwrap();
            let mut seen = std::collections::HashSet::new();
            for w in log.records.windows(2) {
                let r = &w[1];
                assert!(r.kept_indices.iter().all(|i| r.selected_indices.contains(i)), "{mode}");
                assert_eq!(r.n_labeled, w[0].n_labeled + r.kept_indices.len());
                assert!(r.labeled_fraction >= w[0].labeled_fraction);
                assert!(r.kept_indices.iter().all(|&i| seen.insert(i)));
                assert_eq!(r.head_retrained, r.iter % cfg.retrain_period == 0);
                if mode.clusters() {
                    assert!(r.kept_indices.len() <= cfg.k * cfg.per_cluster);
                }
            }
        }
    }

    #[test]
    fn byte_identical_reruns() {
        let (pool, test) = corpora();
        let cfg = quick(DedupMode::MaSiamese);
        let a = run_active_learning(&cfg, &pool, &test).unwrap();
        let b = run_active_learning(&cfg, &pool, &test).unwrap();
        assert_eq!(a.to_jsonl().unwrap(), b.to_jsonl().unwrap());
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(RunLog::from_jsonl(&a.to_jsonl().unwrap()).unwrap(), a.records);
    }

    #[test]
    fn pool_exhaustion_ends_early() {
        let (pool, test) = corpora();
        let cfg = LoopConfig {
            per_iter_fraction: 0.5,
            iterations: 10,
            ..quick(DedupMode::None)
        };
        let log = run_active_learning(&cfg, &pool, &test).unwrap();
        assert_eq!(log.budget_exhausted_at, Some(3));
        assert_eq!(log.records.last().unwrap().n_labeled, pool.len());
    }

    #[test]
    fn rejects_bad_config() {
        let bad = [
            LoopConfig { initial_fraction: 0.0, ..LoopConfig::default() },
            LoopConfig { per_iter_fraction: 1.0, ..LoopConfig::default() },
            LoopConfig { iterations: 0, ..LoopConfig::default() },
            LoopConfig {
                strategy: StrategyConfig::top_fraction(StrategyKind::Cs, 1.0),
                ..LoopConfig::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn records_csv_header() {
        assert_eq!(
            records_csv(&[]),
            "iter,labeled_fraction,n_selected,n_kept,test_f1,cost_tokens,wall_ms\n"
        );
    }
}
