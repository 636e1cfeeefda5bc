//! Model-aware similarity.
//!
//! A Siamese head maps tagger encodings through one tanh layer and compares
//! two sentences by `exp(−‖o_a − o_b‖₂)`. Baselines: cosine over tagger
//! encodings, cosine over a frozen model-independent bag of embeddings, and
//! the Siamese head fed raw embeddings instead of encoder output.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::SimilarityPair;
use crate::error::{invalid, Error, Result};
use crate::linalg::{axpy, dot, euclidean, norm, Matrix};
use crate::optim::Adam;
use crate::seed;
use crate::tagger::{HashedEmbedding, TaggerModel};

/// Where a head reads its input vectors from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingSource {
    /// Pooled output of the tagger's encoder.
    ModelEncoder,
    /// Mean of the frozen token embeddings, ignoring the trained tagger.
    RawEmbedding,
}

impl EncodingSource {
    pub fn encode(self, model: &TaggerModel, tokens: &[String]) -> Vec<f64> {
        match self {
            EncodingSource::ModelEncoder => model.encode_sentence(tokens),
            EncodingSource::RawEmbedding => model.embed.mean(tokens),
        }
    }
}

/// Per-feature affine standardization fixed at training time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            shift: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a Vec<f64>>, dim: usize) -> Self {
        let rows: Vec<&Vec<f64>> = rows.into_iter().collect();
        if rows.is_empty() {
            return Self::identity(dim);
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in &rows {
            axpy(1.0 / n, r, &mut mean);
        }
        let mut var = vec![0.0; dim];
        for r in &rows {
            for k in 0..dim {
                var[k] += (r[k] - mean[k]).powi(2) / n;
            }
        }
        let scale = var
            .iter()
            .map(|v| if v.sqrt() > 1e-12 { 1.0 / v.sqrt() } else { 1.0 })
            .collect();
        Self { shift: mean, scale }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.shift)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) * s)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SiameseHyper {
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for SiameseHyper {
    fn default() -> Self {
        Self {
            hidden: 32,
            lr: 1e-3,
            epochs: 41,
            batch_size: 48,
        }
    }
}

impl SiameseHyper {
    pub fn validate(&self) -> Result<()> {
        if self.hidden < 1 {
            return Err(invalid("siamese hidden width must be at least 1"));
        }
        if !(self.lr > 0.0) {
            return Err(invalid("siamese lr must be positive"));
        }
        if self.epochs < 1 || self.batch_size < 1 {
            return Err(invalid("siamese epochs and batch size must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiameseHead {
    pub source: EncodingSource,
    pub input: Standardizer,
    /// `hidden × dim`
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub train_loss_history: Vec<f64>,
}

/// One training example: two raw encodings and a target.
pub type EncodedPair = (Vec<f64>, Vec<f64>, f64);

pub struct HeadGrad {
    pub loss: f64,
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl SiameseHead {
    pub fn init(source: EncodingSource, input: Standardizer, hidden: usize, seed: u64) -> Self {
        let dim = input.shift.len();
        let limit = (6.0 / (dim + hidden) as f64).sqrt();
        let mut rng = seed::child_rng(seed, 0x7369_616d);
        Self {
            source,
            input,
            weights: Matrix::from_fn(hidden, dim, |_, _| rng.gen_range(-limit..limit)),
            bias: vec![0.0; hidden],
            train_loss_history: Vec::new(),
        }
    }

    /// Head output for a raw encoding.
    pub fn forward(&self, encoding: &[f64]) -> Vec<f64> {
        let z = self.input.apply(encoding);
        self.weights
            .mul_vec(&z)
            .iter()
            .zip(&self.bias)
            .map(|(u, b)| (u + b).tanh())
            .collect()
    }

    pub fn embed(&self, model: &TaggerModel, tokens: &[String]) -> Vec<f64> {
        self.forward(&self.source.encode(model, tokens))
    }

    /// Mean squared error of `exp(−‖o_a − o_b‖)` against the targets, with
    /// its gradient.
    pub fn loss_grad(&self, pairs: &[&EncodedPair]) -> HeadGrad {
        let mut gw = Matrix::zeros(self.weights.rows, self.weights.cols);
        let mut gb = vec![0.0; self.bias.len()];
        let n = pairs.len().max(1) as f64;
        let mut loss = 0.0;
        for (a, b, target) in pairs {
            let za = self.input.apply(a);
            let zb = self.input.apply(b);
            let oa = self.forward(a);
            let ob = self.forward(b);
            let dist = euclidean(&oa, &ob);
            let sim = (-dist).exp();
            let err = sim - target;
            loss += err * err / n;
            if dist == 0.0 {
                continue;
            }
            // dL/do_a = 2 err · (−sim) · (o_a − o_b)/dist, and dL/do_b = −dL/do_a
            let coef = -2.0 * err * sim / (n * dist);
            for h in 0..oa.len() {
                let g_oa = coef * (oa[h] - ob[h]);
                let ga = g_oa * (1.0 - oa[h] * oa[h]);
                let gbb = -g_oa * (1.0 - ob[h] * ob[h]);
                axpy(ga, &za, gw.row_mut(h));
                axpy(gbb, &zb, gw.row_mut(h));
                gb[h] += ga + gbb;
            }
        }
        HeadGrad {
            loss,
            weights: gw,
            bias: gb,
        }
    }
}

/// `exp(−‖o_a − o_b‖₂)`
pub fn eq_similarity(oa: &[f64], ob: &[f64]) -> f64 {
    (-euclidean(oa, ob)).exp()
}

/// Encodes every distinct sentence of `pairs` once.
pub fn encode_pairs(
    source: EncodingSource,
    model: &TaggerModel,
    pairs: &[SimilarityPair],
) -> Vec<EncodedPair> {
    let mut cache: HashMap<&[String], Vec<f64>> = HashMap::new();
    for p in pairs {
        for s in [&p.sent_a, &p.sent_b] {
            cache
                .entry(s.as_slice())
                .or_insert_with(|| source.encode(model, s));
        }
    }
    pairs
        .iter()
        .map(|p| {
            (
                cache[p.sent_a.as_slice()].clone(),
                cache[p.sent_b.as_slice()].clone(),
                p.target,
            )
        })
        .collect()
}

/// Trains a head on pairs encoded by the frozen tagger. Adam over shuffled
/// minibatches; one loss entry per epoch. Deterministic in `seed`.
pub fn train_siamese_head(
    model: &TaggerModel,
    pairs: &[SimilarityPair],
    source: EncodingSource,
    hyper: &SiameseHyper,
    seed: u64,
) -> Result<SiameseHead> {
    hyper.validate()?;
    if pairs.is_empty() {
        return Err(invalid("similarity training needs at least one pair"));
    }
    let encoded = encode_pairs(source, model, pairs);
    train_siamese_on_encoded(&encoded, source, hyper, seed)
}

pub fn train_siamese_on_encoded(
    encoded: &[EncodedPair],
    source: EncodingSource,
    hyper: &SiameseHyper,
    seed: u64,
) -> Result<SiameseHead> {
    let dim = encoded.first().map_or(0, |p| p.0.len());
    if dim == 0 {
        return Err(invalid("empty encodings"));
    }
    let input = Standardizer::fit(encoded.iter().flat_map(|(a, b, _)| [a, b]), dim);
    let mut head = SiameseHead::init(source, input, hyper.hidden, seed);
    let mut opt = Adam::new(hyper.lr, &[head.weights.data.len(), head.bias.len()]);
    let mut rng = seed::child_rng(seed, 0x6261_7463);
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    for _ in 0..hyper.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(hyper.batch_size) {
            let items: Vec<&EncodedPair> = batch.iter().map(|&i| &encoded[i]).collect();
            let g = head.loss_grad(&items);
            opt.step(
                &mut [&mut head.weights.data, &mut head.bias],
                &[&g.weights.data, &g.bias],
            );
        }
        let all: Vec<&EncodedPair> = encoded.iter().collect();
        head.train_loss_history.push(head.loss_grad(&all).loss);
    }
    Ok(head)
}

/// Similarity `exp(-‖o_a − o_b‖)` of two sentences under a trained head.
pub fn similarity_score(head: &SiameseHead, model: &TaggerModel, a: &[String], b: &[String]) -> f64 {
    eq_similarity(&head.embed(model, a), &head.embed(model, b))
}

/// Cosine mapped from `[−1, 1]` to `[0, 1]`.
pub fn unit_cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    let c = (dot(a, b) / (na * nb)).clamp(-1.0, 1.0);
    Ok((c + 1.0) / 2.0)
}

/// Cosine over tagger encodings.
pub fn cosine_score(model: &TaggerModel, a: &[String], b: &[String]) -> Result<f64> {
    unit_cosine(&model.encode_sentence(a), &model.encode_sentence(b))
}

/// Seed of the frozen sentence encoder; fixed so it never depends on the run.
pub const FROZEN_ENCODER_SEED: u64 = 0x1f5e_25e7;

/// Frozen bag-of-embeddings sentence encoder, independent of any tagger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrozenSentenceEncoder {
    pub embed: HashedEmbedding,
}

impl FrozenSentenceEncoder {
    pub fn new(dim: usize) -> Self {
        Self {
            embed: HashedEmbedding::new(FROZEN_ENCODER_SEED, dim),
        }
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<f64> {
        self.embed.mean(tokens)
    }
}

/// A similarity function split into a per-sentence embedding and a cheap
/// comparison, so a matrix needs N embeddings and N² comparisons.
pub trait PairScorer: Sync {
    fn embed(&self, tokens: &[String]) -> Result<Vec<f64>>;
    fn compare(&self, a: &[f64], b: &[f64]) -> Result<f64>;

    fn score(&self, a: &[String], b: &[String]) -> Result<f64> {
        self.compare(&self.embed(a)?, &self.embed(b)?)
    }
}

pub struct SiameseScorer<'a> {
    pub head: &'a SiameseHead,
    pub model: &'a TaggerModel,
}

impl PairScorer for SiameseScorer<'_> {
    fn embed(&self, tokens: &[String]) -> Result<Vec<f64>> {
        Ok(self.head.embed(self.model, tokens))
    }

    fn compare(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        Ok(eq_similarity(a, b))
    }
}

pub struct CosineScorer<'a> {
    pub model: &'a TaggerModel,
}

impl PairScorer for CosineScorer<'_> {
    fn embed(&self, tokens: &[String]) -> Result<Vec<f64>> {
        Ok(self.model.encode_sentence(tokens))
    }

    fn compare(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        unit_cosine(a, b)
    }
}

pub struct FrozenCosineScorer {
    pub encoder: FrozenSentenceEncoder,
}

impl PairScorer for FrozenCosineScorer {
    fn embed(&self, tokens: &[String]) -> Result<Vec<f64>> {
        Ok(self.encoder.encode(tokens))
    }

    fn compare(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        unit_cosine(a, b)
    }
}

/// Smallest off-diagonal entry kept in a similarity matrix.
pub const MIN_SIMILARITY: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub n: usize,
    pub values: Matrix,
}

impl SimilarityMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values.get(i, j)
    }

    /// Wraps a precomputed matrix after checking symmetry, unit diagonal and
    /// the `(0, 1]` range.
    pub fn from_matrix(values: Matrix) -> Result<Self> {
        let n = values.rows;
        if values.cols != n {
            return Err(invalid("similarity matrix must be square"));
        }
        for i in 0..n {
            if (values.get(i, i) - 1.0).abs() > 1e-9 {
                return Err(invalid(format!("diagonal entry {i} is not 1")));
            }
            for j in 0..n {
                let v = values.get(i, j);
                if !(v > 0.0 && v <= 1.0 + 1e-9) || (v - values.get(j, i)).abs() > 1e-9 {
                    return Err(invalid(format!("entry ({i}, {j}) breaks the matrix invariants")));
                }
            }
        }
        Ok(Self { n, values })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n {
            let row: Vec<String> = self.values.row(i).iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }
}

/// Embeds each candidate once, then fills the upper triangle and mirrors it.
pub fn build_similarity_matrix<S: PairScorer + ?Sized>(
    scorer: &S,
    candidates: &[&[String]],
) -> Result<SimilarityMatrix> {
    let n = candidates.len();
    if n < 2 {
        return Err(invalid("a similarity matrix needs at least two candidates"));
    }
    let embedded: Vec<Vec<f64>> = candidates
        .par_iter()
        .map(|c| scorer.embed(c))
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| {
                    scorer
                        .compare(&embedded[i], &embedded[j])
                        .map(|v| v.clamp(MIN_SIMILARITY, 1.0))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mut values = Matrix::identity(n);
    for (i, row) in rows.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let j = i + 1 + off;
            values.set(i, j, v);
            values.set(j, i, v);
        }
    }
    Ok(SimilarityMatrix { n, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TaggedSentence;
    use crate::tagger::{train_tagger, TaggerHyper};
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn small_model() -> TaggerModel {
        let a = TaggedSentence::new(toks("the cat sat down"), vec![0, 1, 2, 0]);
        let b = TaggedSentence::new(toks("a dog ran off"), vec![0, 1, 2, 0]);
        train_tagger(&[&a, &b], 3, &TaggerHyper::default()).unwrap()
    }

    #[test]
    fn identical_sentences_score_one() {
        let m = small_model();
        let pairs = vec![SimilarityPair {
            sent_a: toks("the cat"),
            sent_b: toks("a dog ran"),
            target: 0.2,
        }];
        let head = train_siamese_head(&m, &pairs, EncodingSource::ModelEncoder, &SiameseHyper::default(), 1).unwrap();
        let s = toks("the cat sat");
        assert_eq!(similarity_score(&head, &m, &s, &s), 1.0);
        assert_eq!(cosine_score(&m, &s, &s).unwrap(), 1.0);
    }

    #[test]
    fn unit_distance_gives_inverse_e() {
        assert!((eq_similarity(&[0.0, 0.0], &[0.6, 0.8]) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((eq_similarity(&[0.0, 0.0], &[0.6, 0.8]) - 0.36788).abs() < 1e-5);
    }

    #[test]
    fn cosine_mapping() {
        assert_eq!(unit_cosine(&[1.0, 0.0], &[0.0, 2.0]).unwrap(), 0.5);
        assert!(unit_cosine(&[1.0, 1.0], &[-1.0, -1.0]).unwrap() < 1e-15);
        assert!(matches!(unit_cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroVector)));
    }

    #[test]
    fn degenerate_pairs_train_to_zero_loss() {
        let m = small_model();
        let pairs: Vec<SimilarityPair> = ["the cat", "a dog ran", "sat down off"]
            .iter()
            .map(|s| SimilarityPair {
                sent_a: toks(s),
                sent_b: toks(s),
                target: 1.0,
            })
            .collect();
        let head = train_siamese_head(&m, &pairs, EncodingSource::ModelEncoder, &SiameseHyper::default(), 3).unwrap();
        assert!(*head.train_loss_history.last().unwrap() < 1e-3);
    }

    #[test]
    fn training_is_deterministic() {
        let m = small_model();
        let pairs = vec![
            SimilarityPair { sent_a: toks("the cat"), sent_b: toks("a dog"), target: 0.0 },
            SimilarityPair { sent_a: toks("the cat"), sent_b: toks("the cat sat"), target: 0.66 },
        ];
        let h = SiameseHyper::default();
        let a = train_siamese_head(&m, &pairs, EncodingSource::ModelEncoder, &h, 5).unwrap();
        let b = train_siamese_head(&m, &pairs, EncodingSource::ModelEncoder, &h, 5).unwrap();
        assert_eq!(a, b);
        assert!(train_siamese_head(&m, &[], EncodingSource::ModelEncoder, &h, 5).is_err());
        let bad = SiameseHyper { lr: -1.0, ..h };
        assert!(matches!(
            train_siamese_head(&m, &pairs, EncodingSource::ModelEncoder, &bad, 5),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = seed::rng(4);
        let dim = 5;
        let pairs: Vec<EncodedPair> = (0..6)
            .map(|_| {
                let a: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let b: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                (a, b, rng.gen::<f64>())
            })
            .collect();
        let refs: Vec<&EncodedPair> = pairs.iter().collect();
        let head = SiameseHead::init(EncodingSource::ModelEncoder, Standardizer::identity(dim), 4, 8);
        let g = head.loss_grad(&refs);
        let h = 1e-6;
        for idx in 0..head.weights.data.len() {
            let mut p = head.clone();
            p.weights.data[idx] += h;
            let mut m = head.clone();
            m.weights.data[idx] -= h;
            let fd = (p.loss_grad(&refs).loss - m.loss_grad(&refs).loss) / (2.0 * h);
            let an = g.weights.data[idx];
            assert!((fd - an).abs() <= 1e-4 * an.abs().max(1e-4), "{fd} vs {an}");
        }
    }

    struct Counting<'a> {
        inner: CosineScorer<'a>,
        embeds: AtomicUsize,
    }

    impl PairScorer for Counting<'_> {
        fn embed(&self, tokens: &[String]) -> Result<Vec<f64>> {
            self.embeds.fetch_add(1, Ordering::SeqCst);
            self.inner.embed(tokens)
        }
        fn compare(&self, a: &[f64], b: &[f64]) -> Result<f64> {
            self.inner.compare(a, b)
        }
    }

    #[test]
    fn matrix_embeds_each_candidate_once() {
        let m = small_model();
        let scorer = Counting {
            inner: CosineScorer { model: &m },
            embeds: AtomicUsize::new(0),
        };
        let sents = [toks("the cat"), toks("a dog"), toks("sat down")];
        let cands: Vec<&[String]> = sents.iter().map(Vec::as_slice).collect();
        let s = build_similarity_matrix(&scorer, &cands).unwrap();
        assert_eq!(s.values.data.len(), 9);
        assert_eq!(scorer.embeds.load(Ordering::SeqCst), 3);
        for i in 0..3 {
            for j in 0..3 {
                let naive = if i == j {
                    1.0
                } else {
                    cosine_score(&m, &sents[i], &sents[j]).unwrap().max(MIN_SIMILARITY)
                };
                assert_eq!(s.get(i, j), naive);
            }
        }
    }

    #[test]
    fn identical_candidates_give_all_ones() {
        let m = small_model();
        let pairs = vec![SimilarityPair { sent_a: toks("the cat"), sent_b: toks("a dog"), target: 0.0 }];
        let head = train_siamese_head(&m, &pairs, EncodingSource::ModelEncoder, &SiameseHyper::default(), 1).unwrap();
        let s = toks("the cat sat");
        let scorer = SiameseScorer { head: &head, model: &m };
        let mat = build_similarity_matrix(&scorer, &[&s, &s]).unwrap();
        assert_eq!(mat.values.data, vec![1.0; 4]);
        assert!(build_similarity_matrix(&scorer, &[&s]).is_err());
        SimilarityMatrix::from_matrix(mat.values.clone()).unwrap();
        assert_eq!(mat.to_csv(), "1,1\n1,1\n");
    }

    #[test]
    fn head_checkpoint_round_trip() {
        let m = small_model();
        let pairs = vec![SimilarityPair { sent_a: toks("the cat"), sent_b: toks("a dog"), target: 0.0 }];
        let head = train_siamese_head(&m, &pairs, EncodingSource::RawEmbedding, &SiameseHyper::default(), 1).unwrap();
        let back: SiameseHead = serde_json::from_str(&serde_json::to_string(&head).unwrap()).unwrap();
        assert_eq!(back, head);
    }
}
