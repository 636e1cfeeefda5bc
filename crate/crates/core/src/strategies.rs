//! Uncertainty scorers and candidate selection.
//!
//! Tagging scorers (margin, entropy, BALD) read tagger predictions; the
//! translation scorers (least confidence, coverage, attention distraction)
//! read prediction records carrying an attention matrix. All logarithms are
//! natural.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::softmax;
use crate::seed;
use crate::tagger::{PredictionRecord, TaggerModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Margin,
    Entropy,
    Bald,
    Lc,
    Cs,
    Ads,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::Margin,
        StrategyKind::Entropy,
        StrategyKind::Bald,
        StrategyKind::Lc,
        StrategyKind::Cs,
        StrategyKind::Ads,
    ];

    /// Whether a larger score marks a more uncertain example.
    pub fn higher_is_uncertain(self) -> bool {
        matches!(self, StrategyKind::Entropy | StrategyKind::Bald | StrategyKind::Ads)
    }

    /// Scorers that need an attention matrix.
    pub fn needs_attention(self) -> bool {
        matches!(self, StrategyKind::Cs | StrategyKind::Ads)
    }

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Margin => "margin",
            StrategyKind::Entropy => "entropy",
            StrategyKind::Bald => "bald",
            StrategyKind::Lc => "lc",
            StrategyKind::Cs => "cs",
            StrategyKind::Ads => "ads",
        }
    }

    /// Threshold from the reference hyperparameter table, where one exists.
    pub fn default_threshold(self) -> Option<f64> {
        match self {
            StrategyKind::Margin => Some(15.0),
            StrategyKind::Entropy => Some(40.0),
            StrategyKind::Bald => Some(0.2),
            _ => None,
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid(format!("unknown strategy {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Keep examples on the uncertain side of `τ`.
    Threshold(f64),
    /// Keep the `ceil(φ · n)` most uncertain examples.
    TopFraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub mode: SelectionMode,
    pub bald_passes: usize,
    pub bald_dropout: f64,
}

pub const DEFAULT_BALD_PASSES: usize = 51;
pub const DEFAULT_BALD_DROPOUT: f64 = 0.5;

impl StrategyConfig {
    pub fn top_fraction(kind: StrategyKind, fraction: f64) -> Self {
        Self {
            kind,
            mode: SelectionMode::TopFraction(fraction),
            bald_passes: DEFAULT_BALD_PASSES,
            bald_dropout: DEFAULT_BALD_DROPOUT,
        }
    }

    pub fn threshold(kind: StrategyKind, tau: f64) -> Self {
        Self {
            mode: SelectionMode::Threshold(tau),
            ..Self::top_fraction(kind, 1.0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            SelectionMode::TopFraction(phi) if !(phi > 0.0 && phi <= 1.0) => {
                return Err(invalid(format!("top fraction {phi} not in (0, 1]")));
            }
            SelectionMode::Threshold(tau) if !tau.is_finite() => {
                return Err(invalid("threshold must be finite"));
            }
            _ => {}
        }
        if self.kind == StrategyKind::Bald && self.bald_passes < 2 {
            return Err(invalid("BALD needs at least 2 forward passes"));
        }
        if !(0.0..1.0).contains(&self.bald_dropout) {
            return Err(invalid("BALD dropout must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub index: usize,
    pub score: f64,
    pub higher_is_uncertain: bool,
}

impl ScoredCandidate {
    pub fn new(index: usize, score: f64, kind: StrategyKind) -> Self {
        Self {
            index,
            score,
            higher_is_uncertain: kind.higher_is_uncertain(),
        }
    }

    /// Score oriented so that larger always means more uncertain.
    pub fn uncertainty(&self) -> f64 {
        if self.higher_is_uncertain {
            self.score
        } else {
            -self.score
        }
    }
}

/// Difference of the two best log path scores. Small margins are uncertain.
pub fn margin_score(rec: &PredictionRecord) -> Result<f64> {
    match rec.kbest.as_slice() {
        [best, second, ..] => Ok(best.score - second.score),
        other => Err(Error::KBestTooShort(other.len())),
    }
}

/// `−(1/n) Σ_j s̄_j ln s̄_j` with `s̄_j` the top class probability of token `j`.
pub fn entropy_score(rec: &PredictionRecord) -> f64 {
    let n = rec.token_dists.len();
    if n == 0 {
        return 0.0;
    }
    let sum: f64 = rec
        .token_dists
        .iter()
        .map(|d| {
            let s = d.iter().copied().fold(0.0, f64::max);
            if s > 0.0 {
                s * s.ln()
            } else {
                0.0
            }
        })
        .sum();
    -sum / n as f64
}

/// `1 − count(mode) / N` over the best sequences of N stochastic passes.
/// The mode is the most frequent sequence, first occurrence winning ties.
pub fn bald_from_outputs(outputs: &[Vec<usize>]) -> f64 {
    if outputs.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&[usize], usize> = HashMap::new();
    let mut mode_count = 0;
    for o in outputs {
        let c = counts.entry(o.as_slice()).or_default();
        *c += 1;
        mode_count = mode_count.max(*c);
    }
    1.0 - mode_count as f64 / outputs.len() as f64
}

/// Runs `cfg.bald_passes` dropout passes with seeds derived from `seed`.
pub fn bald_score(model: &TaggerModel, tokens: &[String], cfg: &StrategyConfig, seed: u64) -> f64 {
    let outputs: Vec<Vec<usize>> = (0..cfg.bald_passes)
        .map(|t| {
            let pass_seed = seed::derive(seed, t as u64);
            let mut rec = model.predict_with_dropout(tokens, 2, Some((cfg.bald_dropout, pass_seed)));
            rec.kbest.swap_remove(0).labels
        })
        .collect();
    bald_from_outputs(&outputs)
}

/// `(1/n(ŷ)) · log P(ŷ|x)`. Low values are uncertain.
pub fn lc_score(rec: &PredictionRecord) -> f64 {
    rec.seq_logprob / rec.pred_len.max(1) as f64
}

/// Floor applied to log arguments in the coverage score.
pub const COVERAGE_FLOOR: f64 = 1e-12;

/// `(1/n(x)) Σ_j ln min(Σ_i α_ij, 1)`. Low values are uncertain.
pub fn coverage_score(rec: &PredictionRecord) -> Result<f64> {
    let att = rec.attention.as_ref().ok_or(Error::MissingAttention)?;
    let src_len = att.first().map_or(0, Vec::len);
    if src_len == 0 {
        return Err(Error::MissingAttention);
    }
    let total: f64 = (0..src_len)
        .map(|j| {
            let col: f64 = att.iter().map(|row| row[j]).sum();
            col.min(1.0).max(COVERAGE_FLOOR).ln()
        })
        .sum();
    Ok(total / src_len as f64)
}

/// Kurtosis of one attention row as
/// `[(1/n) Σ (α_j − 1/n)⁴] / [((1/n)(Σ α_j − 1/n))²]`.
pub fn attention_kurtosis(row: &[f64], row_index: usize) -> Result<f64> {
    let n = row.len() as f64;
    let mean = 1.0 / n;
    let num = row.iter().map(|a| (a - mean).powi(4)).sum::<f64>() / n;
    let den = ((row.iter().sum::<f64>() - mean) / n).powi(2);
    if row.len() < 2 || den == 0.0 {
        return Err(Error::DegenerateRow { row: row_index });
    }
    Ok(num / den)
}

/// Mean negative kurtosis over target rows. High values are uncertain.
pub fn ads_score(rec: &PredictionRecord) -> Result<f64> {
    let att = rec.attention.as_ref().ok_or(Error::MissingAttention)?;
    if att.is_empty() {
        return Err(Error::MissingAttention);
    }
    let mut total = 0.0;
    for (i, row) in att.iter().enumerate() {
        total -= attention_kurtosis(row, i)?;
    }
    Ok(total / att.len() as f64)
}

/// Scores a record with any scorer that does not need the model.
pub fn score_record(kind: StrategyKind, rec: &PredictionRecord) -> Result<f64> {
    match kind {
        StrategyKind::Margin => margin_score(rec),
        StrategyKind::Entropy => Ok(entropy_score(rec)),
        StrategyKind::Lc => Ok(lc_score(rec)),
        StrategyKind::Cs => coverage_score(rec),
        StrategyKind::Ads => ads_score(rec),
        StrategyKind::Bald => Err(invalid("BALD needs the model for stochastic passes")),
    }
}

/// Scores an unlabeled sentence with the tagger.
pub fn score_sentence(
    model: &TaggerModel,
    tokens: &[String],
    cfg: &StrategyConfig,
    seed: u64,
) -> Result<f64> {
    match cfg.kind {
        StrategyKind::Bald => Ok(bald_score(model, tokens, cfg, seed)),
        kind if kind.needs_attention() => Err(Error::MissingAttention),
        kind => score_record(kind, &model.predict(tokens, 2, None)),
    }
}

/// Applies the selection rule. Output is ordered most-uncertain first, ties
/// broken by lower index.
pub fn select_candidates(scored: &[ScoredCandidate], cfg: &StrategyConfig) -> Vec<usize> {
    let mut order: Vec<&ScoredCandidate> = scored.iter().collect();
    order.sort_by(|a, b| {
        b.uncertainty()
            .total_cmp(&a.uncertainty())
            .then(a.index.cmp(&b.index))
    });
    match cfg.mode {
        SelectionMode::Threshold(tau) => order
            .into_iter()
            .filter(|c| {
                if c.higher_is_uncertain {
                    c.score >= tau
                } else {
                    c.score <= tau
                }
            })
            .map(|c| c.index)
            .collect(),
        SelectionMode::TopFraction(phi) => {
            let keep = ((phi * scored.len() as f64).ceil() as usize).min(scored.len());
            order.into_iter().take(keep).map(|c| c.index).collect()
        }
    }
}

/// One line of an attention-record file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionRecord {
    pub src_len: usize,
    pub tgt_len: usize,
    /// Row-major `tgt_len × src_len` attention probabilities.
    pub attention: Vec<f64>,
    pub seq_logprob: f64,
}

impl AttentionRecord {
    pub fn into_prediction(self) -> Result<PredictionRecord> {
        if self.src_len == 0 || self.tgt_len == 0 {
            return Err(invalid("attention record has an empty side"));
        }
        if self.attention.len() != self.src_len * self.tgt_len {
            return Err(invalid(format!(
                "attention has {} entries, expected {}×{}",
                self.attention.len(),
                self.tgt_len,
                self.src_len
            )));
        }
        let rows: Vec<Vec<f64>> = self
            .attention
            .chunks(self.src_len)
            .map(<[f64]>::to_vec)
            .collect();
        for (i, r) in rows.iter().enumerate() {
            let s: f64 = r.iter().sum();
            if (s - 1.0).abs() > 1e-6 || r.iter().any(|a| !(*a >= 0.0)) {
                return Err(invalid(format!("attention row {i} is not a distribution")));
            }
        }
        Ok(PredictionRecord::from_attention(rows, self.seq_logprob))
    }
}

/// Reads one JSON object per non-blank line.
pub fn parse_attention_records(text: &str) -> Result<Vec<PredictionRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let rec: AttentionRecord = serde_json::from_str(l)
                .map_err(|e| Error::Parse(format!("record line {}: {e}", i + 1)))?;
            rec.into_prediction()
        })
        .collect()
}

/// Random attention records, from sharply aligned to fully dispersed.
pub fn synthesize_attention_records(n: usize, seed: u64) -> Vec<AttentionRecord> {
    let mut rng = seed::child_rng(seed, 0x6174_746e);
    (0..n)
        .map(|_| {
            let src_len = rng.gen_range(3..=12);
            let tgt_len = (src_len as i64 + rng.gen_range(-2..=2)).max(2) as usize;
            let sharpness = rng.gen_range(0.0..6.0);
            let mut attention = Vec::with_capacity(src_len * tgt_len);
            let mut seq_logprob = 0.0;
            for i in 0..tgt_len {
                let aligned = (i * src_len) / tgt_len;
                let logits: Vec<f64> = (0..src_len)
                    .map(|j| {
                        let bump = if j == aligned { sharpness } else { 0.0 };
                        bump + rng.gen::<f64>()
                    })
                    .collect();
                attention.extend(softmax(&logits));
                let p: f64 = rng.gen_range(0.05..1.0f64).max(1.0 - 1.0 / (1.0 + sharpness));
                seq_logprob += p.ln();
            }
            AttentionRecord {
                src_len,
                tgt_len,
                attention,
                seq_logprob,
            }
        })
        .collect()
}
