//! Redundancy elimination by clustering the selected candidates.
//!
//! Two routes: spectral clustering of a similarity matrix (normalized
//! symmetric Laplacian, row-normalized eigenvectors, k-means), and an
//! integrated softmax head trained with a triplet loss that assigns each
//! candidate directly without building a matrix.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{multiset_jaccard, SimilarityPair};
use crate::error::{invalid, Error, Result};
use crate::kmeans::{kmeans, KMeansParams};
use crate::linalg::{argmax, axpy, jacobi_eigen, norm, softmax, Matrix};
use crate::optim::Adam;
use crate::seed;
use crate::similarity::{EncodingSource, SimilarityMatrix, Standardizer};
use crate::tagger::TaggerModel;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub k: usize,
    /// Cluster id of each candidate, in candidate order.
    pub assignment: Vec<usize>,
}

impl ClusterAssignment {
    pub fn new(k: usize, assignment: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = assignment.iter().find(|&&c| c >= k) {
            return Err(invalid(format!("cluster id {bad} out of range for K = {k}")));
        }
        Ok(Self { k, assignment })
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }

    /// Members of each cluster in candidate order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &c) in self.assignment.iter().enumerate() {
            out[c].push(i);
        }
        out
    }

    /// CSV with `candidate_index,cluster_id,picked_flag`.
    pub fn to_csv(&self, picked: &[usize]) -> String {
        let mut out = String::from("candidate_index,cluster_id,picked_flag\n");
        for (i, &c) in self.assignment.iter().enumerate() {
            let _ = writeln!(out, "{i},{c},{}", u8::from(picked.contains(&i)));
        }
        out
    }
}

/// Renumbers cluster ids in order of first appearance.
fn canonical_ids(raw: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    raw.iter()
        .map(|&c| {
            let next = map.len();
            *map.entry(c).or_insert(next)
        })
        .collect()
}

/// Spectral embedding: rows of the eigenvectors belonging to the `k`
/// smallest eigenvalues of `I − D^{-1/2} S D^{-1/2}`, each scaled to unit norm.
pub fn spectral_embedding(s: &SimilarityMatrix, k: usize) -> Result<Vec<Vec<f64>>> {
    let n = s.n;
    let degree: Vec<f64> = (0..n).map(|i| s.values.row(i).iter().sum()).collect();
    if let Some(i) = degree.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::DegenerateDegree(i));
    }
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    let laplacian = Matrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - inv_sqrt[i] * s.get(i, j) * inv_sqrt[j]
    });
    let eig = jacobi_eigen(&laplacian);
    Ok((0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..k).map(|j| eig.vectors.get(i, j)).collect();
            let len = norm(&row);
            if len > 0.0 {
                row.iter_mut().for_each(|v| *v /= len);
            }
            row
        })
        .collect())
}

/// Normalized spectral clustering into `k` groups. Deterministic in `seed`.
pub fn spectral_cluster(s: &SimilarityMatrix, k: usize, seed: u64) -> Result<ClusterAssignment> {
    if k < 2 || k > s.n {
        return Err(invalid(format!("need 2 <= K <= n, got K = {k}, n = {}", s.n)));
    }
    let rows = spectral_embedding(s, k)?;
    let km = kmeans(&rows, KMeansParams::new(k), seed);
    ClusterAssignment::new(k, canonical_ids(&km.assignment))
}

/// Clamp applied to probabilities inside the triplet-loss logarithms.
pub const LOSS_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub pull: f64,
    pub push: f64,
    pub spread: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            pull: 1.0,
            push: 1.0,
            spread: 0.1,
        }
    }
}

fn clamp_p(p: f64) -> f64 {
    p.clamp(LOSS_EPS, 1.0 - LOSS_EPS)
}

/// Triplet loss for anchor `a`, similar `b` and dissimilar `c`:
/// `−λ₁ ln p_b[i_a] − λ₂ ln(1 − p_c[i_a]) + λ₃ Σ_k p_b[k] ln p_b[k]` with
/// `i_a = argmax p_a`.
pub fn integrated_loss(w: &LossWeights, pa: &[f64], pb: &[f64], pc: &[f64]) -> f64 {
    let ia = argmax(pa);
    let spread: f64 = pb.iter().map(|&p| p * clamp_p(p).ln()).sum();
    -w.pull * clamp_p(pb[ia]).ln() - w.push * (1.0 - clamp_p(pc[ia])).ln() + w.spread * spread
}

/// Gradients of [`integrated_loss`] with respect to `p_b` and `p_c`; `i_a`
/// is piecewise constant so `p_a` gets none.
fn integrated_loss_dp(w: &LossWeights, pa: &[f64], pb: &[f64], pc: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let ia = argmax(pa);
    let k = pb.len();
    let mut gb = vec![0.0; k];
    let mut gc = vec![0.0; k];
    for j in 0..k {
        let inside = pb[j] > LOSS_EPS && pb[j] < 1.0 - LOSS_EPS;
        gb[j] = w.spread * (clamp_p(pb[j]).ln() + if inside { 1.0 } else { 0.0 });
    }
    if pb[ia] > LOSS_EPS && pb[ia] < 1.0 - LOSS_EPS {
        gb[ia] -= w.pull / pb[ia];
    }
    if pc[ia] > LOSS_EPS && pc[ia] < 1.0 - LOSS_EPS {
        gc[ia] = w.push / (1.0 - pc[ia]);
    }
    (gb, gc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratedHyper {
    pub k: usize,
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weights: LossWeights,
}

impl Default for IntegratedHyper {
    fn default() -> Self {
        Self {
            k: 20,
            hidden: 32,
            lr: 1e-2,
            epochs: 41,
            batch_size: 48,
            weights: LossWeights::default(),
        }
    }
}

impl IntegratedHyper {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(invalid("integrated head needs K >= 2"));
        }
        if self.hidden < 1 || self.epochs < 1 || self.batch_size < 1 {
            return Err(invalid("integrated head sizes must be at least 1"));
        }
        if !(self.lr > 0.0) {
            return Err(invalid("integrated head lr must be positive"));
        }
        Ok(())
    }
}

/// Softmax clustering network: `dim → hidden (tanh) → K (softmax)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratedHead {
    pub source: EncodingSource,
    pub input: Standardizer,
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
    pub weights: LossWeights,
    pub train_loss_history: Vec<f64>,
}

struct Forward {
    z: Vec<f64>,
    hidden: Vec<f64>,
    probs: Vec<f64>,
}

pub struct IntegratedGrad {
    pub loss: f64,
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl IntegratedHead {
    pub fn init(
        source: EncodingSource,
        input: Standardizer,
        hidden: usize,
        k: usize,
        weights: LossWeights,
        seed: u64,
    ) -> Self {
        let dim = input.shift.len();
        let mut rng = seed::child_rng(seed, 0x696e_7467);
        let l1 = (6.0 / (dim + hidden) as f64).sqrt();
        let l2 = (6.0 / (hidden + k) as f64).sqrt();
        Self {
            source,
            input,
            w1: Matrix::from_fn(hidden, dim, |_, _| rng.gen_range(-l1..l1)),
            b1: vec![0.0; hidden],
            w2: Matrix::from_fn(k, hidden, |_, _| rng.gen_range(-l2..l2)),
            b2: vec![0.0; k],
            weights,
            train_loss_history: Vec::new(),
        }
    }

    pub fn k(&self) -> usize {
        self.b2.len()
    }

    fn forward_full(&self, encoding: &[f64]) -> Forward {
        let z = self.input.apply(encoding);
        let hidden: Vec<f64> = self
            .w1
            .mul_vec(&z)
            .iter()
            .zip(&self.b1)
            .map(|(u, b)| (u + b).tanh())
            .collect();
        let logits: Vec<f64> = self
            .w2
            .mul_vec(&hidden)
            .iter()
            .zip(&self.b2)
            .map(|(u, b)| u + b)
            .collect();
        Forward {
            z,
            hidden,
            probs: softmax(&logits),
        }
    }

    /// Cluster membership probabilities for a raw encoding.
    pub fn probabilities(&self, encoding: &[f64]) -> Vec<f64> {
        self.forward_full(encoding).probs
    }

    fn backprop(&self, f: &Forward, dp: &[f64], g: &mut IntegratedGrad) {
        let dot_pg: f64 = f.probs.iter().zip(dp).map(|(p, d)| p * d).sum();
        let dlogits: Vec<f64> = f.probs.iter().zip(dp).map(|(p, d)| p * (d - dot_pg)).collect();
        let mut dhidden = vec![0.0; f.hidden.len()];
        for (k, &dl) in dlogits.iter().enumerate() {
            axpy(dl, &f.hidden, g.w2.row_mut(k));
            g.b2[k] += dl;
            axpy(dl, self.w2.row(k), &mut dhidden);
        }
        for (h, dh) in dhidden.iter().enumerate() {
            let du = dh * (1.0 - f.hidden[h] * f.hidden[h]);
            axpy(du, &f.z, g.w1.row_mut(h));
            g.b1[h] += du;
        }
    }

    /// Mean triplet loss over encoded `(a, b, c)` triplets and its gradient.
    pub fn loss_grad(&self, triplets: &[&EncodedTriplet]) -> IntegratedGrad {
        let mut g = IntegratedGrad {
            loss: 0.0,
            w1: Matrix::zeros(self.w1.rows, self.w1.cols),
            b1: vec![0.0; self.b1.len()],
            w2: Matrix::zeros(self.w2.rows, self.w2.cols),
            b2: vec![0.0; self.b2.len()],
        };
        let n = triplets.len().max(1) as f64;
        for (a, b, c) in triplets {
            let fa = self.forward_full(a);
            let fb = self.forward_full(b);
            let fc = self.forward_full(c);
            g.loss += integrated_loss(&self.weights, &fa.probs, &fb.probs, &fc.probs) / n;
            let (db, dc) = integrated_loss_dp(&self.weights, &fa.probs, &fb.probs, &fc.probs);
            let db: Vec<f64> = db.iter().map(|v| v / n).collect();
            let dc: Vec<f64> = dc.iter().map(|v| v / n).collect();
            self.backprop(&fb, &db, &mut g);
            self.backprop(&fc, &dc, &mut g);
        }
        g
    }
}

pub type EncodedTriplet = (Vec<f64>, Vec<f64>, Vec<f64>);

/// Sentence triplet: anchor, similar sentence, dissimilar sentence.
pub type Triplet = (Vec<String>, Vec<String>, Vec<String>);

/// Builds up to `n` triplets from overlap-scored pairs: pairs with target at
/// least `0.5` give `(a, b)` and the negative is a random pair sentence whose
/// overlap with `a` is below `0.2`.
pub fn triplets_from_pairs(pairs: &[SimilarityPair], n: usize, seed: u64) -> Vec<Triplet> {
    let positives: Vec<&SimilarityPair> = pairs.iter().filter(|p| p.target >= 0.5).collect();
    let pool: Vec<&Vec<String>> = pairs.iter().flat_map(|p| [&p.sent_a, &p.sent_b]).collect();
    if positives.is_empty() || pool.is_empty() {
        return Vec::new();
    }
    let mut rng = seed::child_rng(seed, 0x7472_6970);
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let p = positives[t % positives.len()];
        let neg = (0..64)
            .map(|_| pool[rng.gen_range(0..pool.len())])
            .find(|c| multiset_jaccard(&p.sent_a, c) < 0.2);
        if let Some(c) = neg {
            out.push((p.sent_a.clone(), p.sent_b.clone(), c.clone()));
        }
    }
    out
}

/// Trains the clustering head on triplets encoded by the frozen tagger.
pub fn train_integrated_head(
    model: &TaggerModel,
    triplets: &[Triplet],
    source: EncodingSource,
    hyper: &IntegratedHyper,
    seed: u64,
) -> Result<IntegratedHead> {
    hyper.validate()?;
    if triplets.is_empty() {
        return Err(invalid("integrated head training needs at least one triplet"));
    }
    let encoded: Vec<EncodedTriplet> = triplets
        .iter()
        .map(|(a, b, c)| {
            (
                source.encode(model, a),
                source.encode(model, b),
                source.encode(model, c),
            )
        })
        .collect();
    train_integrated_on_encoded(&encoded, source, hyper, seed)
}

pub fn train_integrated_on_encoded(
    encoded: &[EncodedTriplet],
    source: EncodingSource,
    hyper: &IntegratedHyper,
    seed: u64,
) -> Result<IntegratedHead> {
    let dim = encoded.first().map_or(0, |t| t.0.len());
    if dim == 0 {
        return Err(invalid("empty encodings"));
    }
    let input = Standardizer::fit(encoded.iter().flat_map(|(a, b, c)| [a, b, c]), dim);
    let mut head = IntegratedHead::init(source, input, hyper.hidden, hyper.k, hyper.weights, seed);
    let sizes = [
        head.w1.data.len(),
        head.b1.len(),
        head.w2.data.len(),
        head.b2.len(),
    ];
    let mut opt = Adam::new(hyper.lr, &sizes);
    let mut rng = seed::child_rng(seed, 0x6261_7463);
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    for _ in 0..hyper.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(hyper.batch_size) {
            let items: Vec<&EncodedTriplet> = batch.iter().map(|&i| &encoded[i]).collect();
            let g = head.loss_grad(&items);
            opt.step(
                &mut [
                    &mut head.w1.data,
                    &mut head.b1,
                    &mut head.w2.data,
                    &mut head.b2,
                ],
                &[&g.w1.data, &g.b1, &g.w2.data, &g.b2],
            );
        }
        let all: Vec<&EncodedTriplet> = encoded.iter().collect();
        head.train_loss_history.push(head.loss_grad(&all).loss);
    }
    Ok(head)
}

/// Assigns each candidate to its highest-probability unit (lowest on ties).
pub fn assign_clusters(
    head: &IntegratedHead,
    model: &TaggerModel,
    candidates: &[&[String]],
) -> ClusterAssignment {
    let encodings: Vec<Vec<f64>> = candidates
        .par_iter()
        .map(|c| head.source.encode(model, c))
        .collect();
    assign_encodings(head, &encodings)
}

pub fn assign_encodings(head: &IntegratedHead, encodings: &[Vec<f64>]) -> ClusterAssignment {
    let assignment = encodings
        .par_iter()
        .map(|e| argmax(&head.probabilities(e)))
        .collect();
    ClusterAssignment {
        k: head.k(),
        assignment,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RepresentativeRule {
    /// Most uncertain members first.
    #[default]
    Uncertainty,
    /// Seeded uniform choice within each cluster.
    Random,
}

/// Takes up to `per_cluster` members from each non-empty cluster, most
/// uncertain first (ties to the lower candidate index). Output is grouped by
/// cluster id.
pub fn pick_representatives(
    assign: &ClusterAssignment,
    uncertainty: &[f64],
    per_cluster: usize,
) -> Vec<usize> {
    let mut out = Vec::new();
    for mut members in assign.members() {
        members.sort_by(|&a, &b| uncertainty[b].total_cmp(&uncertainty[a]).then(a.cmp(&b)));
        out.extend(members.into_iter().take(per_cluster));
    }
    out
}

pub fn pick_with_rule(
    assign: &ClusterAssignment,
    uncertainty: &[f64],
    per_cluster: usize,
    rule: RepresentativeRule,
    seed: u64,
) -> Vec<usize> {
    match rule {
        RepresentativeRule::Uncertainty => pick_representatives(assign, uncertainty, per_cluster),
        RepresentativeRule::Random => {
            let mut rng = seed::child_rng(seed, 0x7265_7072);
            let mut out = Vec::new();
            for mut members in assign.members() {
                members.shuffle(&mut rng);
                out.extend(members.into_iter().take(per_cluster));
            }
            out
        }
    }
}
