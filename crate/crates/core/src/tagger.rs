//! Linear-chain sequence tagger.
//!
//! Tokens are looked up in a frozen hashed embedding table. A softmax emission
//! layer is trained by gradient descent; label transitions are add-one
//! smoothed bigram counts. Decoding is k-best Viterbi over log-emissions plus
//! log-transitions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::TaggedSentence;
use crate::error::{invalid, Error, Result};
use crate::linalg::{argmax, axpy, dot, softmax, Matrix};
use crate::optim::Adam;
use crate::seed;

/// Number of hash buckets in the embedding table.
pub const TABLE_SIZE: usize = 1 << 15;

/// Frozen token embeddings. Entries are uniform(−0.5, 0.5)/dim, generated on
/// demand from `(seed, bucket)` so the table never has to be materialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashedEmbedding {
    pub seed: u64,
    pub dim: usize,
}

impl HashedEmbedding {
    pub fn new(seed: u64, dim: usize) -> Self {
        assert!(dim >= 1, "embedding dimension must be positive");
        Self { seed, dim }
    }

    pub fn bucket(token: &str) -> usize {
        (seed::fnv1a(token) as usize) & (TABLE_SIZE - 1)
    }

    pub fn lookup(&self, token: &str) -> Vec<f64> {
        let mut rng = seed::child_rng(self.seed, Self::bucket(token) as u64);
        let scale = 1.0 / self.dim as f64;
        (0..self.dim)
            .map(|_| (rng.gen::<f64>() - 0.5) * scale)
            .collect()
    }

    /// Mean embedding of a token sequence.
    pub fn mean(&self, tokens: &[String]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for t in tokens {
            axpy(1.0, &self.lookup(t), &mut out);
        }
        let n = tokens.len().max(1) as f64;
        out.iter_mut().for_each(|v| *v /= n);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaggerHyper {
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
    pub dim: usize,
    pub dropout_rate: f64,
}

impl Default for TaggerHyper {
    fn default() -> Self {
        Self {
            lr: 0.05,
            epochs: 200,
            l2: 1e-4,
            seed: 0,
            dim: 128,
            dropout_rate: 0.5,
        }
    }
}

impl TaggerHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(invalid(format!("tagger lr must be positive, got {}", self.lr)));
        }
        if self.epochs < 1 {
            return Err(invalid("tagger epochs must be at least 1"));
        }
        if !(self.l2 >= 0.0) {
            return Err(invalid("tagger l2 must be non-negative"));
        }
        if self.dim < 1 {
            return Err(invalid("embedding dimension must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(invalid("dropout rate must lie in [0, 1)"));
        }
        Ok(())
    }
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggerModel {
    pub version: u32,
    pub embed: HashedEmbedding,
    /// `label_count × dim` emission weights.
    pub weights: Matrix,
    pub bias: Vec<f64>,
    /// `label_count × label_count`; row `i` holds log P(next = j | prev = i).
    pub log_transitions: Matrix,
    pub dropout_rate: f64,
    pub label_count: usize,
}

/// One k-best entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSequence {
    pub labels: Vec<usize>,
    pub score: f64,
}

/// Everything the uncertainty scorers consume for one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    /// `n(x) × |O|` per-token label distributions.
    pub token_dists: Vec<Vec<f64>>,
    /// Best-first label sequences with log path scores.
    pub kbest: Vec<ScoredSequence>,
    pub token_encodings: Vec<Vec<f64>>,
    pub sentence_encoding: Vec<f64>,
    /// `n(ŷ) × n(x)` attention probabilities, when available.
    pub attention: Option<Vec<Vec<f64>>>,
    pub pred_len: usize,
    pub seq_logprob: f64,
}

impl PredictionRecord {
    pub fn best(&self) -> Option<&[usize]> {
        self.kbest.first().map(|s| s.labels.as_slice())
    }

    /// A record carrying only translation-side quantities.
    pub fn from_attention(attention: Vec<Vec<f64>>, seq_logprob: f64) -> Self {
        Self {
            token_dists: Vec::new(),
            kbest: Vec::new(),
            token_encodings: Vec::new(),
            sentence_encoding: Vec::new(),
            pred_len: attention.len(),
            attention: Some(attention),
            seq_logprob,
        }
    }
}

/// Per-token training inputs, embedded once per training call.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl TrainData {
    pub fn new(embed: &HashedEmbedding, sentences: &[&TaggedSentence]) -> Self {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for s in sentences {
            for (tok, &lab) in s.tokens.iter().zip(&s.labels) {
                features.push(emission_features(embed, tok));
                labels.push(lab);
            }
        }
        Self { features, labels }
    }
}

/// Emission input for one token: the embedding read through a fixed ×dim
/// scale so its entries are uniform(−0.5, 0.5).
pub fn emission_features(embed: &HashedEmbedding, token: &str) -> Vec<f64> {
    let scale = embed.dim as f64;
    embed.lookup(token).into_iter().map(|v| v * scale).collect()
}

/// Mean cross-entropy of the emission layer plus `l2/2 · ‖W‖²`.
pub struct EmissionGrad {
    pub loss: f64,
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl TaggerModel {
    /// Untrained model with small seeded weights and uniform transitions.
    pub fn init(label_count: usize, hyper: &TaggerHyper) -> Self {
        let embed = HashedEmbedding::new(seed::derive(hyper.seed, 0x656d_6264), hyper.dim);
        let mut rng = seed::child_rng(hyper.seed, 0x7765_6967);
        let weights = Matrix::from_fn(label_count, hyper.dim, |_, _| {
            (rng.gen::<f64>() - 0.5) * 0.02
        });
        let uniform = -(label_count as f64).ln();
        Self {
            version: CHECKPOINT_VERSION,
            embed,
            weights,
            bias: vec![0.0; label_count],
            log_transitions: Matrix::from_fn(label_count, label_count, |_, _| uniform),
            dropout_rate: hyper.dropout_rate,
            label_count,
        }
    }

    pub fn dim(&self) -> usize {
        self.embed.dim
    }

    pub fn emission_loss_grad(&self, data: &TrainData, l2: f64) -> EmissionGrad {
        let n = data.labels.len().max(1) as f64;
        let mut gw = Matrix::zeros(self.label_count, self.dim());
        let mut gb = vec![0.0; self.label_count];
        let mut loss = 0.0;
        for (x, &y) in data.features.iter().zip(&data.labels) {
            let p = softmax(&self.logits(x));
            loss -= p[y].max(1e-300).ln();
            for (o, &po) in p.iter().enumerate() {
                let d = (po - if o == y { 1.0 } else { 0.0 }) / n;
                axpy(d, x, gw.row_mut(o));
                gb[o] += d;
            }
        }
        loss /= n;
        loss += 0.5 * l2 * self.weights.data.iter().map(|w| w * w).sum::<f64>();
        axpy(l2, &self.weights.data, &mut gw.data);
        EmissionGrad {
            loss,
            weights: gw,
            bias: gb,
        }
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        (0..self.label_count)
            .map(|o| dot(self.weights.row(o), x) + self.bias[o])
            .collect()
    }

    /// Per-feature relevance: the L2 norm of each emission-weight column.
    pub fn feature_relevance(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|k| {
                (0..self.label_count)
                    .map(|o| self.weights.get(o, k).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    /// Encoder output for each token: emission features reweighted by the
    /// current feature relevance.
    pub fn encode_tokens(&self, tokens: &[String]) -> Vec<Vec<f64>> {
        let g = self.feature_relevance();
        tokens
            .iter()
            .map(|t| {
                emission_features(&self.embed, t)
                    .iter()
                    .zip(&g)
                    .map(|(x, w)| x * w)
                    .collect()
            })
            .collect()
    }

    /// Mean of the per-token encodings.
    pub fn encode_sentence(&self, tokens: &[String]) -> Vec<f64> {
        mean_rows(&self.encode_tokens(tokens), self.dim())
    }

    /// Predicts one sentence; a `dropout_seed` turns on a stochastic pass.
    pub fn predict(&self, tokens: &[String], k: usize, dropout_seed: Option<u64>) -> PredictionRecord {
        self.predict_with_dropout(tokens, k, dropout_seed.map(|s| (self.dropout_rate, s)))
    }

    /// Like [`predict`](Self::predict) with an explicit `(rate, seed)` mask.
    pub fn predict_with_dropout(
        &self,
        tokens: &[String],
        k: usize,
        dropout: Option<(f64, u64)>,
    ) -> PredictionRecord {
        assert!(k >= 2, "k-best decoding needs k >= 2");
        assert!(!tokens.is_empty(), "cannot predict an empty sentence");
        let mut mask_rng = dropout.map(|(_, s)| seed::rng(s));
        let keep_scale = dropout.map_or(1.0, |(p, _)| 1.0 / (1.0 - p));

        let mut token_dists = Vec::with_capacity(tokens.len());
        for t in tokens {
            let mut x = emission_features(&self.embed, t);
            if let (Some(rng), Some((p, _))) = (mask_rng.as_mut(), dropout) {
                for v in &mut x {
                    *v = if rng.gen::<f64>() < p { 0.0 } else { *v * keep_scale };
                }
            }
            token_dists.push(softmax(&self.logits(&x)));
        }
        let log_emit: Vec<Vec<f64>> = token_dists
            .iter()
            .map(|row| row.iter().map(|p| p.max(1e-300).ln()).collect())
            .collect();
        let kbest = kbest_viterbi(&log_emit, &self.log_transitions, k);
        let seq_logprob = kbest[0]
            .labels
            .iter()
            .enumerate()
            .map(|(j, &l)| log_emit[j][l])
            .sum();
        let token_encodings = self.encode_tokens(tokens);
        let sentence_encoding = mean_rows(&token_encodings, self.dim());
        PredictionRecord {
            token_dists,
            kbest,
            token_encodings,
            sentence_encoding,
            attention: None,
            pred_len: tokens.len(),
            seq_logprob,
        }
    }

    /// Best label sequence.
    pub fn decode(&self, tokens: &[String]) -> Vec<usize> {
        self.predict(tokens, 2, None).kbest.swap_remove(0).labels
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        if m.version != CHECKPOINT_VERSION {
            return Err(Error::Parse(format!("unsupported checkpoint version {}", m.version)));
        }
        Ok(m)
    }
}

fn mean_rows(rows: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for r in rows {
        axpy(1.0, r, &mut out);
    }
    let n = rows.len().max(1) as f64;
    out.iter_mut().for_each(|v| *v /= n);
    out
}

/// Add-one smoothed label-bigram log-probabilities.
pub fn transition_log_probs(sentences: &[&TaggedSentence], label_count: usize) -> Matrix {
    let mut counts = Matrix::from_fn(label_count, label_count, |_, _| 1.0);
    for s in sentences {
        for w in s.labels.windows(2) {
            let c = counts.get(w[0], w[1]);
            counts.set(w[0], w[1], c + 1.0);
        }
    }
    for i in 0..label_count {
        let row = counts.row_mut(i);
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v = (*v / total).ln());
    }
    counts
}

/// Trains emissions with Adam on full-batch cross-entropy and sets
/// transitions from bigram counts. Deterministic in `hyper.seed`.
pub fn train_tagger(
    sentences: &[&TaggedSentence],
    label_count: usize,
    hyper: &TaggerHyper,
) -> Result<TaggerModel> {
    hyper.validate()?;
    if sentences.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if label_count == 0 {
        return Err(invalid("label set is empty"));
    }
    let mut model = TaggerModel::init(label_count, hyper);
    let data = TrainData::new(&model.embed, sentences);
    let mut opt = Adam::new(hyper.lr, &[model.weights.data.len(), label_count]);
    for _ in 0..hyper.epochs {
        let g = model.emission_loss_grad(&data, hyper.l2);
        opt.step(
            &mut [&mut model.weights.data, &mut model.bias],
            &[&g.weights.data, &g.bias],
        );
    }
    model.log_transitions = transition_log_probs(sentences, label_count);
    Ok(model)
}

#[derive(Clone, Copy)]
struct Entry {
    score: f64,
    prev_label: usize,
    prev_rank: usize,
}

/// k-best Viterbi. `log_emit` is `n × |O|`; path score is the sum of
/// emission log-probabilities plus transition log-probabilities between
/// consecutive labels. Returns at most `k` sequences, best first.
pub fn kbest_viterbi(log_emit: &[Vec<f64>], log_trans: &Matrix, k: usize) -> Vec<ScoredSequence> {
    let n = log_emit.len();
    let labels = log_emit.first().map_or(0, Vec::len);
    if n == 0 || labels == 0 || k == 0 {
        return Vec::new();
    }
    let by_score = |a: &Entry, b: &Entry| {
        b.score
            .total_cmp(&a.score)
            .then(a.prev_label.cmp(&b.prev_label))
            .then(a.prev_rank.cmp(&b.prev_rank))
    };

    // lattice[t][label] = top-k partial paths ending in `label` at t
    let mut lattice: Vec<Vec<Vec<Entry>>> = Vec::with_capacity(n);
    lattice.push(
        (0..labels)
            .map(|j| {
                vec![Entry {
                    score: log_emit[0][j],
                    prev_label: usize::MAX,
                    prev_rank: usize::MAX,
                }]
            })
            .collect(),
    );
    for t in 1..n {
        let prev = &lattice[t - 1];
        let mut column = Vec::with_capacity(labels);
        for j in 0..labels {
            let mut cands: Vec<Entry> = Vec::new();
            for (i, entries) in prev.iter().enumerate() {
                let step = log_trans.get(i, j) + log_emit[t][j];
                cands.extend(entries.iter().enumerate().map(|(r, e)| Entry {
                    score: e.score + step,
                    prev_label: i,
                    prev_rank: r,
                }));
            }
            cands.sort_by(by_score);
            cands.truncate(k);
            column.push(cands);
        }
        lattice.push(column);
    }

    let mut finals: Vec<(usize, usize, f64)> = lattice[n - 1]
        .iter()
        .enumerate()
        .flat_map(|(j, es)| es.iter().enumerate().map(move |(r, e)| (j, r, e.score)))
        .collect();
    finals.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    finals.truncate(k);

    finals
        .into_iter()
        .map(|(mut label, mut rank, score)| {
            let mut seq = vec![0; n];
            for t in (0..n).rev() {
                seq[t] = label;
                let e = lattice[t][label][rank];
                label = e.prev_label;
                rank = e.prev_rank;
            }
            ScoredSequence { labels: seq, score }
        })
        .collect()
}

/// Greedy per-token argmax labels.
pub fn argmax_labels(rec: &PredictionRecord) -> Vec<usize> {
    rec.token_dists.iter().map(|d| argmax(d)).collect()
}
