//! Experiment specs, multi-seed runs and report files.
//!
//! Specs are TOML. Every table is optional; a minimal tagging spec is
//!
//! ```toml
//! task = "tagging"
//! [corpus]
//! synthetic = { n_templates = 50, copies_per_template = 5, vocab_size = 200, n_labels = 5, max_len = 10 }
//! ```
//!
//! Output directory layout:
//!
//! - `runs/<method>_seed<s>.jsonl` and `.csv`: one record per iteration
//! - `reference.json`: full-data F1 and the target ratio
//! - `curve.csv`: mean and standard deviation per method and iteration
//! - `summary.csv`: per-method fraction and tokens needed to reach the target

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{ClusterAssignment, IntegratedHyper, RepresentativeRule};
use crate::corpus::{
    generate_pair_dataset, generate_synthetic_corpus, hold_out_copies, parse_conll, split_initial, Corpus,
    SyntheticConfig, TaggedSentence,
};
use crate::error::{Error, Result};
use crate::learning_loop::{
    deduplicate, full_data_f1, run_active_learning, DedupMode, Deduplicator, IterationRecord, LoopConfig, RunLog,
};
use crate::metrics::{data_fraction_to_target, mean_std};
use crate::seed;
use crate::similarity::SiameseHyper;
use crate::strategies::{
    parse_attention_records, score_record, score_sentence, select_candidates, synthesize_attention_records, ScoredCandidate,
    SelectionMode, StrategyConfig, StrategyKind, DEFAULT_BALD_DROPOUT, DEFAULT_BALD_PASSES,
};
use crate::tagger::{train_tagger, PredictionRecord, TaggerHyper, TaggerModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Tagging,
    TranslationScoring,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSpec {
    pub synthetic: Option<SyntheticConfig>,
    /// Seed of the synthetic generator.
    pub seed: u64,
    /// Copies per template moved to the test side of a synthetic corpus.
    pub holdout_copies: usize,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub token_col: usize,
    pub label_col: usize,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            synthetic: None,
            seed: 0,
            holdout_copies: 1,
            train: None,
            test: None,
            token_col: 0,
            label_col: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    pub top_fraction: Option<f64>,
    pub threshold: Option<f64>,
    pub bald_passes: usize,
    pub bald_dropout: f64,
}

impl Default for StrategySpec {
    fn default() -> Self {
        Self {
            kind: StrategyKind::Margin,
            top_fraction: None,
            threshold: None,
            bald_passes: DEFAULT_BALD_PASSES,
            bald_dropout: DEFAULT_BALD_DROPOUT,
        }
    }
}

impl StrategySpec {
    /// Without an explicit mode, tagging keeps everything up to the loop's
    /// per-iteration budget and translation scoring keeps the top half.
    pub fn to_config(&self, task: Task) -> Result<StrategyConfig> {
        let mode = match (self.top_fraction, self.threshold) {
            (Some(_), Some(_)) => {
                return Err(Error::Validation(
                    "strategy: set at most one of top_fraction and threshold".into(),
                ))
            }
            (Some(phi), None) => SelectionMode::TopFraction(phi),
            (None, Some(tau)) => SelectionMode::Threshold(tau),
            (None, None) => SelectionMode::TopFraction(match task {
                Task::Tagging => 1.0,
                Task::TranslationScoring => 0.5,
            }),
        };
        let cfg = StrategyConfig {
            kind: self.kind,
            mode,
            bald_passes: self.bald_passes,
            bald_dropout: self.bald_dropout,
        };
        cfg.validate()
            .map_err(|e| Error::Validation(format!("strategy: {e}")))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopSpec {
    pub dedup: DedupMode,
    pub baselines: Vec<DedupMode>,
    pub initial_fraction: f64,
    pub per_iter_fraction: f64,
    pub iterations: usize,
    pub k: usize,
    pub per_cluster: usize,
    /// Defaults to 10 for tagging and 3 for translation scoring.
    pub retrain_period: Option<usize>,
    pub representative: RepresentativeRule,
    pub aux_pairs: usize,
    pub outside_label: Option<String>,
    pub record_timing: bool,
}

impl Default for LoopSpec {
    fn default() -> Self {
        let d = LoopConfig::default();
        Self {
            dedup: d.dedup,
            baselines: vec![DedupMode::None, DedupMode::Random],
            initial_fraction: d.initial_fraction,
            per_iter_fraction: d.per_iter_fraction,
            iterations: d.iterations,
            k: d.k,
            per_cluster: d.per_cluster,
            retrain_period: None,
            representative: d.representative,
            aux_pairs: d.aux_pairs,
            outside_label: None,
            record_timing: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TranslationSpec {
    /// JSON-lines attention records; synthesized when absent.
    pub records: Option<PathBuf>,
    pub synthetic_records: usize,
}

impl Default for TranslationSpec {
    fn default() -> Self {
        Self {
            records: None,
            synthetic_records: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub task: Task,
    #[serde(default = "default_n_seeds")]
    pub n_seeds: usize,
    /// Explicit run seeds; when absent they are derived from `seed`.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "default_target_ratio")]
    pub target_ratio: f64,
    #[serde(default)]
    pub corpus: CorpusSpec,
    #[serde(default)]
    pub strategy: StrategySpec,
    #[serde(default, rename = "loop")]
    pub learning: LoopSpec,
    #[serde(default)]
    pub tagger: TaggerHyper,
    #[serde(default)]
    pub siamese: SiameseHyper,
    #[serde(default)]
    pub integrated: IntegratedHyper,
    #[serde(default)]
    pub translation: TranslationSpec,
}

fn default_n_seeds() -> usize {
    5
}

fn default_target_ratio() -> f64 {
    0.99
}

impl ExperimentSpec {
    /// Parses and validates a spec. Unknown keys are validation errors that
    /// name the key.
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            if msg.contains("unknown field") {
                Error::Validation(msg)
            } else {
                Error::Parse(e.to_string())
            }
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Validation(format!("cannot read spec {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn run_seeds(&self) -> Vec<u64> {
        match &self.seeds {
            Some(s) => s.clone(),
            None => (0..self.n_seeds as u64).map(|i| seed::derive(self.seed, i)).collect(),
        }
    }

    /// A²L method first, then the baselines, without repeats.
    pub fn methods(&self) -> Vec<DedupMode> {
        let mut out = vec![self.learning.dedup];
        for &b in &self.learning.baselines {
            if !out.contains(&b) {
                out.push(b);
            }
        }
        out
    }

    pub fn loop_config(&self, dedup: DedupMode, seed: u64) -> Result<LoopConfig> {
        let l = &self.learning;
        let retrain_period = l.retrain_period.unwrap_or(match self.task {
            Task::Tagging => 10,
            Task::TranslationScoring => 3,
        });
        Ok(LoopConfig {
            strategy: self.strategy.to_config(self.task)?,
            dedup,
            initial_fraction: l.initial_fraction,
            per_iter_fraction: l.per_iter_fraction,
            iterations: l.iterations,
            k: l.k,
            per_cluster: l.per_cluster,
            retrain_period,
            representative: l.representative,
            aux_pairs: l.aux_pairs,
            outside_label: l.outside_label.clone(),
            seed,
            record_timing: l.record_timing,
            tagger: self.tagger,
            siamese: self.siamese,
            integrated: self.integrated,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_seeds < 1 {
            return Err(Error::Validation("n_seeds must be at least 1".into()));
        }
        if let Some(s) = &self.seeds {
            if s.len() != self.n_seeds {
                return Err(Error::Validation(format!(
                    "seeds lists {} entries but n_seeds is {}",
                    s.len(),
                    self.n_seeds
                )));
            }
        }
        if !(self.target_ratio > 0.0 && self.target_ratio <= 1.0) {
            return Err(Error::Validation("target_ratio must lie in (0, 1]".into()));
        }
        match self.task {
            Task::Tagging => {
                let c = &self.corpus;
                match (&c.synthetic, &c.train) {
                    (Some(_), Some(_)) => {
                        return Err(Error::Validation("corpus: give either synthetic or train, not both".into()))
                    }
                    (None, None) => {
                        return Err(Error::Validation("corpus: synthetic or train is required".into()))
                    }
                    (None, Some(_)) if c.test.is_none() => {
                        return Err(Error::Validation("corpus.test is required with corpus.train".into()))
                    }
                    _ => {}
                }
                for m in self.methods() {
                    self.loop_config(m, 0)?
                        .validate()
                        .map_err(|e| match e {
                            Error::InvalidConfig(msg) => Error::Validation(msg),
                            other => other,
                        })?;
                }
            }
            Task::TranslationScoring => {
                if !self.strategy.kind.needs_attention() && self.strategy.kind != StrategyKind::Lc {
                    return Err(Error::Validation(format!(
                        "strategy.kind = {} does not score attention records",
                        self.strategy.kind
                    )));
                }
                self.strategy.to_config(self.task)?;
            }
        }
        Ok(())
    }

    /// Checks that referenced files exist.
    pub fn check_paths(&self) -> Result<()> {
        let paths = [&self.corpus.train, &self.corpus.test, &self.translation.records];
        for p in paths.into_iter().flatten() {
            if !p.exists() {
                return Err(Error::Validation(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// `(pool, test)` for a tagging spec.
    pub fn load_corpora(&self) -> Result<(Corpus, Corpus)> {
        let c = &self.corpus;
        if let Some(cfg) = &c.synthetic {
            let all = generate_synthetic_corpus(cfg, c.seed)?;
            return Ok(hold_out_copies(&all, c.holdout_copies));
        }
        let read = |p: &Option<PathBuf>| -> Result<Corpus> {
            let path = p.as_ref().expect("validated");
            parse_conll(&fs::read_to_string(path)?, c.token_col, c.label_col)
        };
        let mut pool = read(&c.train)?;
        let mut test = read(&c.test)?;
        crate::corpus::align_labels(&mut pool, &mut test);
        Ok((pool, test))
    }

    pub fn attention_records(&self) -> Result<Vec<PredictionRecord>> {
        match &self.translation.records {
            Some(p) => parse_attention_records(&fs::read_to_string(p)?),
            None => synthesize_attention_records(self.translation.synthetic_records, self.seed)
                .into_iter()
                .map(|r| r.into_prediction())
                .collect(),
        }
    }
}

/// Per-method aggregates at the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: DedupMode,
    pub final_f1_mean: f64,
    pub final_f1_std: f64,
    pub fraction_to_target: Option<f64>,
    pub tokens_to_target: Option<f64>,
    /// `fraction(None) − fraction(method)`.
    pub reduction_vs_none: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub full_data_f1: f64,
    pub target: f64,
    pub runs: BTreeMap<String, Vec<RunLog>>,
    pub summary: Vec<SummaryRow>,
    pub curve_csv: String,
    pub summary_csv: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub full_data_f1: f64,
    pub target_ratio: f64,
}

/// Mean curve points `(iter, fraction, tokens, f1 mean, f1 std)` over the
/// iterations every run completed.
fn mean_curve(runs: &[Vec<IterationRecord>]) -> Vec<(usize, f64, f64, f64, f64)> {
    let len = runs.iter().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .map(|i| {
            let col = |f: &dyn Fn(&IterationRecord) -> f64| -> Vec<f64> { runs.iter().map(|r| f(&r[i])).collect() };
            let (frac, _) = mean_std(&col(&|r| r.labeled_fraction));
            let (tokens, _) = mean_std(&col(&|r| r.cost_tokens as f64));
            let (f1, sd) = mean_std(&col(&|r| r.test_f1));
            (runs[0][i].iter, frac, tokens, f1, sd)
        })
        .collect()
}

/// Curve and summary CSVs from per-method records. Timing is left out so the
/// files are reproducible.
pub fn build_report(
    methods: &[(DedupMode, Vec<Vec<IterationRecord>>)],
    reference: Reference,
) -> (Vec<SummaryRow>, String, String) {
    let target = reference.target_ratio * reference.full_data_f1;
    let mut curve_csv = String::from("method,iter,labeled_fraction,cost_tokens,test_f1_mean,test_f1_std\n");
    let mut rows = Vec::new();
    for (method, runs) in methods {
        let curve = mean_curve(runs);
        for &(iter, frac, tokens, f1, sd) in &curve {
            let _ = writeln!(curve_csv, "{method},{iter},{frac:.6},{tokens:.1},{f1:.6},{sd:.6}");
        }
        let finals: Vec<f64> = runs.iter().filter_map(|r| r.last()).map(|r| r.test_f1).collect();
        let (final_f1_mean, final_f1_std) = mean_std(&finals);
        let frac_curve: Vec<(f64, f64)> = curve.iter().map(|c| (c.1, c.3)).collect();
        let tok_curve: Vec<(f64, f64)> = curve.iter().map(|c| (c.2, c.3)).collect();
        rows.push(SummaryRow {
            method: *method,
            final_f1_mean,
            final_f1_std,
            fraction_to_target: data_fraction_to_target(&frac_curve, target),
            tokens_to_target: data_fraction_to_target(&tok_curve, target),
            reduction_vs_none: None,
        });
    }
    let none = rows
        .iter()
        .find(|r| r.method == DedupMode::None)
        .and_then(|r| r.fraction_to_target);
    for r in &mut rows {
        r.reduction_vs_none = none.zip(r.fraction_to_target).map(|(n, f)| n - f);
    }
    let opt = |v: Option<f64>, prec: usize| v.map_or(String::new(), |x| format!("{x:.prec$}"));
    let mut summary_csv = String::from(
        "method,final_f1_mean,final_f1_std,fraction_to_target,tokens_to_target,reduction_vs_none,full_data_f1,target_f1\n",
    );
    for r in &rows {
        let _ = writeln!(
            summary_csv,
            "{},{:.6},{:.6},{},{},{},{:.6},{:.6}",
            r.method,
            r.final_f1_mean,
            r.final_f1_std,
            opt(r.fraction_to_target, 6),
            opt(r.tokens_to_target, 1),
            opt(r.reduction_vs_none, 6),
            reference.full_data_f1,
            target
        );
    }
    (rows, curve_csv, summary_csv)
}

fn run_file_stem(method: DedupMode, seed: u64) -> String {
    format!("{method}_seed{seed}")
}

/// Runs every method for every seed and, when `out` is given, writes the
/// run logs and reports there.
pub fn run_experiment(spec: &ExperimentSpec, out: Option<&Path>) -> Result<ExperimentOutcome> {
    spec.validate()?;
    spec.check_paths()?;
    if spec.task == Task::TranslationScoring {
        return Err(Error::Validation(
            "translation_scoring specs are scored with the `score` command".into(),
        ));
    }
    let (pool, test) = spec.load_corpora()?;
    let full = full_data_f1(&pool, &test, &spec.loop_config(spec.learning.dedup, spec.seed)?)?;
    let reference = Reference {
        full_data_f1: full,
        target_ratio: spec.target_ratio,
    };
    let seeds = spec.run_seeds();
    let jobs: Vec<(DedupMode, u64)> = spec
        .methods()
        .into_iter()
        .flat_map(|m| seeds.iter().map(move |&s| (m, s)))
        .collect();
    let logs = jobs
        .par_iter()
        .map(|&(m, s)| run_active_learning(&spec.loop_config(m, s)?, &pool, &test))
        .collect::<Result<Vec<RunLog>>>()?;

    let mut runs: BTreeMap<String, Vec<RunLog>> = BTreeMap::new();
    for log in logs {
        runs.entry(log.dedup.to_string()).or_default().push(log);
    }
    let grouped: Vec<(DedupMode, Vec<Vec<IterationRecord>>)> = spec
        .methods()
        .into_iter()
        .map(|m| (m, runs[m.name()].iter().map(|l| l.records.clone()).collect()))
        .collect();
    let (summary, curve_csv, summary_csv) = build_report(&grouped, reference);

    if let Some(dir) = out {
        fs::create_dir_all(dir.join("runs"))?;
        for log in runs.values().flatten() {
            let stem = run_file_stem(log.dedup, log.seed);
            fs::write(dir.join("runs").join(format!("{stem}.jsonl")), log.to_jsonl()?)?;
            fs::write(dir.join("runs").join(format!("{stem}.csv")), log.to_csv())?;
        }
        fs::write(dir.join("reference.json"), serde_json::to_string_pretty(&reference)?)?;
        fs::write(dir.join("curve.csv"), &curve_csv)?;
        fs::write(dir.join("summary.csv"), &summary_csv)?;
    }
    Ok(ExperimentOutcome {
        full_data_f1: full,
        target: reference.target_ratio * full,
        runs,
        summary,
        curve_csv,
        summary_csv,
    })
}

/// Rebuilds `curve.csv` and `summary.csv` from the run logs in `dir`.
pub fn report_from_dir(dir: &Path) -> Result<(String, String)> {
    let reference: Reference = serde_json::from_str(&fs::read_to_string(dir.join("reference.json"))?)?;
    let mut by_method: BTreeMap<String, Vec<(u64, Vec<IterationRecord>)>> = BTreeMap::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(dir.join("runs"))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    entries.sort();
    for path in entries {
        if path.extension().and_then(|e| e.to_str()) != Some("jsonl") {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let (method, seed) = stem
            .rsplit_once("_seed")
            .ok_or_else(|| Error::Parse(format!("unexpected run file name {stem}")))?;
        let seed: u64 = seed
            .parse()
            .map_err(|_| Error::Parse(format!("unexpected run file name {stem}")))?;
        let records = RunLog::from_jsonl(&fs::read_to_string(&path)?)?;
        by_method.entry(method.to_string()).or_default().push((seed, records));
    }
    if by_method.is_empty() {
        return Err(Error::Validation(format!("no run logs under {}", dir.join("runs").display())));
    }
    // keep the A²L-first order used by `run`: clustering modes, then none, then random
    let mut grouped: Vec<(DedupMode, Vec<Vec<IterationRecord>>)> = by_method
        .into_iter()
        .map(|(m, runs)| Ok((m.parse::<DedupMode>()?, runs.into_iter().map(|r| r.1).collect())))
        .collect::<Result<_>>()?;
    grouped.sort_by_key(|(m, _)| DedupMode::ALL.iter().position(|x| x == m));
    let (_, curve, summary) = build_report(&grouped, reference);
    fs::write(dir.join("curve.csv"), &curve)?;
    fs::write(dir.join("summary.csv"), &summary)?;
    Ok((curve, summary))
}

/// Tagger trained on the initial split of the pool, as the loop's first
/// iteration would train it.
pub fn initial_model(spec: &ExperimentSpec, pool: &Corpus) -> Result<(TaggerModel, Vec<usize>, Vec<usize>)> {
    let cfg = spec.loop_config(spec.learning.dedup, spec.seed)?;
    let (labeled, unlabeled) = split_initial(pool.len(), cfg.initial_fraction, seed::derive(spec.seed, 0))?;
    let sentences: Vec<&TaggedSentence> = labeled.iter().map(|&i| &pool.sentences[i]).collect();
    let hyper = TaggerHyper {
        seed: seed::derive(spec.seed, 1),
        ..spec.tagger
    };
    let model = train_tagger(&sentences, pool.label_count(), &hyper)?;
    Ok((model, labeled, unlabeled))
}

/// One-shot scoring. Tagging specs score the unlabeled part of the pool with
/// the initial model; translation specs score attention records. The
/// selection is capped at the per-iteration budget.
pub fn score_once(spec: &ExperimentSpec) -> Result<String> {
    spec.validate()?;
    spec.check_paths()?;
    let cfg = spec.loop_config(spec.learning.dedup, spec.seed)?;
    let scored = match spec.task {
        Task::TranslationScoring => spec
            .attention_records()?
            .iter()
            .enumerate()
            .map(|(i, r)| Ok(ScoredCandidate::new(i, score_record(cfg.strategy.kind, r)?, cfg.strategy.kind)))
            .collect::<Result<Vec<_>>>()?,
        Task::Tagging => {
            let (pool, _) = spec.load_corpora()?;
            let (model, _, unlabeled) = initial_model(spec, &pool)?;
            unlabeled
                .par_iter()
                .map(|&i| {
                    let s = score_sentence(&model, &pool.sentences[i].tokens, &cfg.strategy, seed::derive(spec.seed, i as u64))?;
                    Ok(ScoredCandidate::new(i, s, cfg.strategy.kind))
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    let mut selected = select_candidates(&scored, &cfg.strategy);
    if spec.task == Task::Tagging {
        selected.truncate(cfg.selection_budget(scored.len()));
    }
    Ok(scores_csv(&scored, &selected))
}

/// One-shot deduplication of the selected rows of a scores file, using the
/// spec's dedup mode on top of the initial model.
pub fn cluster_once(spec: &ExperimentSpec, scores: &str) -> Result<String> {
    spec.validate()?;
    spec.check_paths()?;
    if spec.task != Task::Tagging {
        return Err(Error::Validation("cluster needs a tagging spec".into()));
    }
    let (pool, _) = spec.load_corpora()?;
    let rows: Vec<(usize, f64)> = parse_scores_csv(scores)?
        .into_iter()
        .filter(|r| r.2)
        .map(|r| (r.0, r.1))
        .collect();
    if let Some(&(bad, _)) = rows.iter().find(|r| r.0 >= pool.len()) {
        return Err(Error::Validation(format!("candidate {bad} is outside the pool")));
    }
    let cfg = spec.loop_config(spec.learning.dedup, spec.seed)?;
    let (model, _, _) = initial_model(spec, &pool)?;
    let pairs = if cfg.dedup.clusters() {
        generate_pair_dataset(&pool, cfg.aux_pairs, seed::derive(spec.seed, 2))?
    } else {
        Vec::new()
    };
    let dedup = Deduplicator::train(cfg.dedup, &model, &pairs, &cfg, seed::derive(spec.seed, 3))?;
    let tokens: Vec<&[String]> = rows.iter().map(|r| pool.sentences[r.0].tokens.as_slice()).collect();
    let uncertainty: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let outcome = deduplicate(&dedup, &model, &tokens, &uncertainty, &cfg, spec.seed)?;
    let assignment = outcome
        .assignment
        .unwrap_or_else(|| ClusterAssignment { k: 1, assignment: vec![0; rows.len()] });
    let mut out = String::from("pool_index,candidate_index,cluster_id,picked_flag\n");
    for (pos, &(index, _)) in rows.iter().enumerate() {
        let _ = writeln!(
            out,
            "{index},{pos},{},{}",
            assignment.assignment[pos],
            u8::from(outcome.kept.contains(&pos))
        );
    }
    Ok(out)
}

/// Scores attention records and marks the selection. CSV columns:
/// `index,score,uncertainty,selected`.
pub fn score_attention_records(records: &[PredictionRecord], cfg: &StrategyConfig) -> Result<String> {
    let scored = records
        .iter()
        .enumerate()
        .map(|(i, r)| Ok(ScoredCandidate::new(i, score_record(cfg.kind, r)?, cfg.kind)))
        .collect::<Result<Vec<_>>>()?;
    Ok(scores_csv(&scored, &select_candidates(&scored, cfg)))
}

pub fn scores_csv(scored: &[ScoredCandidate], selected: &[usize]) -> String {
    let chosen: std::collections::HashSet<usize> = selected.iter().copied().collect();
    let mut out = String::from("index,score,uncertainty,selected\n");
    for c in scored {
        let _ = writeln!(
            out,
            "{},{:.9},{:.9},{}",
            c.index,
            c.score,
            c.uncertainty(),
            u8::from(chosen.contains(&c.index))
        );
    }
    out
}

/// Reads `index,score,uncertainty,selected` rows back.
pub fn parse_scores_csv(text: &str) -> Result<Vec<(usize, f64, bool)>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for row in reader.deserialize::<(usize, f64, f64, u8)>() {
        let (index, _, uncertainty, selected) = row?;
        out.push((index, uncertainty, selected == 1));
    }
    Ok(out)
}
