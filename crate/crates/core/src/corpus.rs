//! Corpus ingestion and generation.
//!
//! Reads CoNLL-style column files, generates synthetic tagging corpora with
//! planted near-duplicate groups, samples token-overlap similarity pairs and
//! performs the deterministic initial labeled/unlabeled split.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::seed;

/// A tokenized sentence with one gold label id per token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedSentence {
    pub tokens: Vec<String>,
    pub labels: Vec<usize>,
    /// Template the sentence was generated from; `None` for ingested data.
    pub template_id: Option<usize>,
}

impl TaggedSentence {
    pub fn new(tokens: Vec<String>, labels: Vec<usize>) -> Self {
        Self {
            tokens,
            labels,
            template_id: None,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub sentences: Vec<TaggedSentence>,
    pub label_names: Vec<String>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn label_count(&self) -> usize {
        self.label_names.len()
    }

    pub fn label_id(&self, name: &str) -> Option<usize> {
        self.label_names.iter().position(|l| l == name)
    }

    /// Copies out the sentences at `indices` under the same label set.
    pub fn subset(&self, indices: &[usize]) -> Corpus {
        Corpus {
            sentences: indices.iter().map(|&i| self.sentences[i].clone()).collect(),
            label_names: self.label_names.clone(),
        }
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(TaggedSentence::len).sum()
    }

    /// Writes the corpus as two-column `token label` text.
    pub fn to_conll(&self) -> String {
        let mut out = String::new();
        for s in &self.sentences {
            for (tok, &lab) in s.tokens.iter().zip(&s.labels) {
                let _ = writeln!(out, "{} {}", tok, self.label_names[lab]);
            }
            out.push('\n');
        }
        out
    }

    /// Checks the structural invariants of every sentence.
    pub fn validate(&self) -> Result<()> {
        if self.sentences.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut seen = std::collections::HashSet::new();
        for name in &self.label_names {
            if !seen.insert(name) {
                return Err(invalid(format!("duplicate label name {name:?}")));
            }
        }
        for (i, s) in self.sentences.iter().enumerate() {
            if s.tokens.is_empty() || s.tokens.len() != s.labels.len() {
                return Err(invalid(format!("sentence {i} has mismatched or empty tokens")));
            }
            if let Some(&bad) = s.labels.iter().find(|&&l| l >= self.label_names.len()) {
                return Err(invalid(format!("sentence {i} uses unknown label id {bad}")));
            }
        }
        Ok(())
    }
}

/// Parses whitespace-separated column text. Blank lines end a sentence and
/// `-DOCSTART-` lines are dropped.
pub fn parse_conll(text: &str, token_col: usize, label_col: usize) -> Result<Corpus> {
    let needed = token_col.max(label_col) + 1;
    let mut label_names: Vec<String> = Vec::new();
    let mut label_ids: HashMap<String, usize> = HashMap::new();
    let mut sentences = Vec::new();
    let mut tokens = Vec::new();
    let mut labels = Vec::new();

    let mut flush = |tokens: &mut Vec<String>, labels: &mut Vec<usize>| {
        if !tokens.is_empty() {
            sentences.push(TaggedSentence::new(
                std::mem::take(tokens),
                std::mem::take(labels),
            ));
        }
    };

    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            flush(&mut tokens, &mut labels);
            continue;
        }
        if trimmed.starts_with("-DOCSTART-") {
            continue;
        }
        let cols: Vec<&str> = trimmed.split_whitespace().collect();
        if cols.len() < needed {
            return Err(Error::MalformedLine {
                line: lineno + 1,
                needed,
                found: cols.len(),
            });
        }
        let label = cols[label_col];
        let id = match label_ids.get(label) {
            Some(&id) => id,
            None => {
                let id = label_names.len();
                label_names.push(label.to_string());
                label_ids.insert(label.to_string(), id);
                id
            }
        };
        tokens.push(cols[token_col].to_string());
        labels.push(id);
    }
    flush(&mut tokens, &mut labels);

    if sentences.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(Corpus {
        sentences,
        label_names,
    })
}

/// Maps an ingested corpus onto an existing label inventory, appending labels
/// it has not seen before. Used to align a test file with its training file.
pub fn align_labels(reference: &mut Corpus, other: &mut Corpus) {
    let remap: Vec<usize> = other
        .label_names
        .iter()
        .map(|name| match reference.label_id(name) {
            Some(id) => id,
            None => {
                reference.label_names.push(name.clone());
                reference.label_names.len() - 1
            }
        })
        .collect();
    for s in &mut other.sentences {
        for l in &mut s.labels {
            *l = remap[*l];
        }
    }
    other.label_names = reference.label_names.clone();
}

/// Parameters of the planted-duplicate generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub n_templates: usize,
    pub copies_per_template: usize,
    pub vocab_size: usize,
    pub n_labels: usize,
    pub max_len: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_templates: 50,
            copies_per_template: 5,
            vocab_size: 200,
            n_labels: 5,
            max_len: 10,
        }
    }
}

/// Most synonym slots a template can have.
pub const MAX_SLOTS: usize = 2;

/// Generates `n_templates × copies_per_template` sentences.
///
/// Every vocabulary word carries a fixed label. A template is a random word
/// sequence with one or two synonym slots; each copy re-fills the slots with
/// other words of the same label, so copies share length and labels and
/// differ in at most [`MAX_SLOTS`] tokens. Copies of a template are contiguous.
pub fn generate_synthetic_corpus(cfg: &SyntheticConfig, seed: u64) -> Result<Corpus> {
    if cfg.n_templates == 0 || cfg.copies_per_template == 0 || cfg.vocab_size == 0 || cfg.n_labels == 0
    {
        return Err(invalid("synthetic corpus counts must be at least 1"));
    }
    if cfg.max_len < 2 {
        return Err(invalid("max_len must be at least 2"));
    }
    let mut rng = seed::child_rng(seed, 0x636f_7270);

    let mut word_label: Vec<usize> = (0..cfg.vocab_size).map(|i| i % cfg.n_labels).collect();
    word_label.shuffle(&mut rng);
    let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); cfg.n_labels];
    for (w, &l) in word_label.iter().enumerate() {
        by_label[l].push(w);
    }
    let word = |w: usize| format!("w{w}");

    let min_len = ((cfg.max_len + 1) / 2).max(2);
    let mut sentences = Vec::with_capacity(cfg.n_templates * cfg.copies_per_template);
    for t in 0..cfg.n_templates {
        let len = rng.gen_range(min_len..=cfg.max_len);
        let base: Vec<usize> = (0..len).map(|_| rng.gen_range(0..cfg.vocab_size)).collect();
        let n_slots = (len / 4).clamp(1, MAX_SLOTS);
        let mut positions: Vec<usize> = (0..len).collect();
        positions.shuffle(&mut rng);
        let slots = &positions[..n_slots];
        let labels: Vec<usize> = base.iter().map(|&w| word_label[w]).collect();
        for _ in 0..cfg.copies_per_template {
            let mut words = base.clone();
            for &p in slots {
                let pool = &by_label[labels[p]];
                words[p] = pool[rng.gen_range(0..pool.len())];
            }
            sentences.push(TaggedSentence {
                tokens: words.into_iter().map(word).collect(),
                labels: labels.clone(),
                template_id: Some(t),
            });
        }
    }
    Ok(Corpus {
        sentences,
        label_names: (0..cfg.n_labels).map(|l| format!("T{l}")).collect(),
    })
}

/// Splits a template-structured corpus into (pool, held-out), moving the last
/// `per_template` copies of every template into the held-out part.
pub fn hold_out_copies(corpus: &Corpus, per_template: usize) -> (Corpus, Corpus) {
    let mut remaining: HashMap<Option<usize>, usize> = HashMap::new();
    for s in &corpus.sentences {
        *remaining.entry(s.template_id).or_default() += 1;
    }
    let mut seen: HashMap<Option<usize>, usize> = HashMap::new();
    let mut pool = Vec::new();
    let mut held = Vec::new();
    for s in &corpus.sentences {
        let total = remaining[&s.template_id];
        let k = seen.entry(s.template_id).or_default();
        *k += 1;
        // templates with too few copies stay entirely in the pool
        if total > per_template && *k + per_template > total {
            held.push(s.clone());
        } else {
            pool.push(s.clone());
        }
    }
    (
        Corpus {
            sentences: pool,
            label_names: corpus.label_names.clone(),
        },
        Corpus {
            sentences: held,
            label_names: corpus.label_names.clone(),
        },
    )
}

/// Two token sequences with a similarity target in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityPair {
    pub sent_a: Vec<String>,
    pub sent_b: Vec<String>,
    pub target: f64,
}

/// Jaccard overlap of two token multisets: Σ min(count) / Σ max(count).
pub fn multiset_jaccard(a: &[String], b: &[String]) -> f64 {
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    for t in a {
        counts.entry(t.as_str()).or_default().0 += 1;
    }
    for t in b {
        counts.entry(t.as_str()).or_default().1 += 1;
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for &(x, y) in counts.values() {
        inter += x.min(y);
        union += x.max(y);
    }
    if union == 0 {
        return 1.0;
    }
    inter as f64 / union as f64
}

const NEAR_CANDIDATES: usize = 32;

/// Samples `n_pairs` sentence pairs with token-overlap targets.
///
/// Half of the pairs are drawn as "near" pairs: another copy of the same
/// template when provenance is known, otherwise the highest-overlap sentence
/// among a random handful. The rest are uniform random pairs.
pub fn generate_pair_dataset(
    corpus: &Corpus,
    n_pairs: usize,
    seed: u64,
) -> Result<Vec<SimilarityPair>> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if n_pairs == 0 {
        return Err(invalid("n_pairs must be at least 1"));
    }
    let n = corpus.len();
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, s) in corpus.sentences.iter().enumerate() {
        if let Some(t) = s.template_id {
            groups.entry(t).or_default().push(i);
        }
    }
    let mut rng = seed::child_rng(seed, 0x7061_6972);
    let mut pairs = Vec::with_capacity(n_pairs);
    for p in 0..n_pairs {
        let a = rng.gen_range(0..n);
        let sa = &corpus.sentences[a];
        let b = if p % 2 == 0 && n > 1 {
            match sa.template_id.and_then(|t| groups.get(&t)) {
                Some(members) if members.len() > 1 => loop {
                    let b = members[rng.gen_range(0..members.len())];
                    if b != a {
                        break b;
                    }
                },
                _ => {
                    let mut best = (f64::NEG_INFINITY, a);
                    for _ in 0..NEAR_CANDIDATES.min(n - 1) {
                        let c = rng.gen_range(0..n);
                        if c == a {
                            continue;
                        }
                        let j = multiset_jaccard(&sa.tokens, &corpus.sentences[c].tokens);
                        if j > best.0 {
                            best = (j, c);
                        }
                    }
                    best.1
                }
            }
        } else {
            rng.gen_range(0..n)
        };
        let sb = &corpus.sentences[b];
        pairs.push(SimilarityPair {
            sent_a: sa.tokens.clone(),
            sent_b: sb.tokens.clone(),
            target: multiset_jaccard(&sa.tokens, &sb.tokens),
        });
    }
    Ok(pairs)
}

/// Scale of the third column of a pair file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairScale {
    /// Targets already in `[0, 1]`.
    Unit,
    /// Relatedness scores in `[1, 5]`, rescaled by `(s − 1) / 4`.
    OneToFive,
}

/// Reads `sent_a TAB sent_b TAB target` lines; sentences are space-tokenized.
pub fn parse_pair_tsv(text: &str, scale: PairScale) -> Result<Vec<SimilarityPair>> {
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 3 {
            return Err(Error::MalformedLine {
                line: lineno + 1,
                needed: 3,
                found: cols.len(),
            });
        }
        let raw: f64 = cols[2]
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
        let target = match scale {
            PairScale::Unit => raw,
            PairScale::OneToFive => (raw - 1.0) / 4.0,
        };
        if !(0.0..=1.0).contains(&target) {
            return Err(Error::Parse(format!(
                "line {}: target {raw} outside the declared scale",
                lineno + 1
            )));
        }
        let toks = |s: &str| s.split_whitespace().map(str::to_string).collect::<Vec<_>>();
        let (sent_a, sent_b) = (toks(cols[0]), toks(cols[1]));
        if sent_a.is_empty() || sent_b.is_empty() {
            return Err(Error::Parse(format!("line {}: empty sentence", lineno + 1)));
        }
        pairs.push(SimilarityPair {
            sent_a,
            sent_b,
            target,
        });
    }
    Ok(pairs)
}

pub fn write_pair_tsv(pairs: &[SimilarityPair]) -> String {
    let mut out = String::new();
    for p in pairs {
        let _ = writeln!(
            out,
            "{}\t{}\t{}",
            p.sent_a.join(" "),
            p.sent_b.join(" "),
            p.target
        );
    }
    out
}

/// Random initial split. Returns sorted `(labeled, unlabeled)` index lists with
/// `|labeled| = max(1, round(fraction · n))`.
pub fn split_initial(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(invalid(format!("initial fraction {fraction} not in (0, 1)")));
    }
    if n == 0 {
        return Err(Error::EmptyCorpus);
    }
    let size = ((fraction * n as f64).round() as usize).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::child_rng(seed, 0x7370_6c74));
    let mut labeled = order[..size].to_vec();
    let mut unlabeled = order[size..].to_vec();
    labeled.sort_unstable();
    unlabeled.sort_unstable();
    Ok((labeled, unlabeled))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn parses_single_sentence() {
        let c = parse_conll("Fischler B-PER\nproposed O\n\n", 0, 1).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.sentences[0].tokens, toks("Fischler proposed"));
        assert_eq!(c.label_names, vec!["B-PER", "O"]);
        assert_eq!(c.sentences[0].labels, vec![0, 1]);
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(parse_conll("", 0, 1), Err(Error::EmptyCorpus)));
        assert!(matches!(
            parse_conll("-DOCSTART- -X- O\n\n", 0, 1),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn blank_line_separates_sentences() {
        let text = "-DOCSTART- -X- -X- O\n\nEU NNP B-ORG\nrejects VBZ O\n\nPeter NNP B-PER\n";
        let c = parse_conll(text, 0, 2).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.label_names, vec!["B-ORG", "O", "B-PER"]);
        assert_eq!(c.sentences[1].labels, vec![2]);
    }

    #[test]
    fn short_line_is_malformed() {
        let err = parse_conll("a B\nb\n", 0, 1).unwrap_err();
        assert!(matches!(err, Error::MalformedLine { line: 2, needed: 2, found: 1 }));
    }

    #[test]
    fn synthetic_counts_and_determinism() {
        let cfg = SyntheticConfig {
            n_templates: 5,
            copies_per_template: 4,
            vocab_size: 30,
            n_labels: 3,
            max_len: 8,
        };
        let a = generate_synthetic_corpus(&cfg, 7).unwrap();
        let b = generate_synthetic_corpus(&cfg, 7).unwrap();
        assert_eq!(a.len(), 20);
        let ids: std::collections::BTreeSet<_> =
            a.sentences.iter().map(|s| s.template_id.unwrap()).collect();
        assert_eq!(ids.len(), 5);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        a.validate().unwrap();
    }

    #[test]
    fn synthetic_copies_differ_only_in_slots() {
        let cfg = SyntheticConfig::default();
        let c = generate_synthetic_corpus(&cfg, 3).unwrap();
        for group in c.sentences.chunks(cfg.copies_per_template) {
            let first = &group[0];
            for other in &group[1..] {
                assert_eq!(other.labels, first.labels);
                assert_eq!(other.template_id, first.template_id);
                let diff = first
                    .tokens
                    .iter()
                    .zip(&other.tokens)
                    .filter(|(a, b)| a != b)
                    .count();
                assert!(diff <= 2 * MAX_SLOTS);
            }
        }
    }

    #[test]
    fn single_copy_templates_are_distinct() {
        let cfg = SyntheticConfig {
            copies_per_template: 1,
            ..SyntheticConfig::default()
        };
        let c = generate_synthetic_corpus(&cfg, 11).unwrap();
        let ids: std::collections::HashSet<_> =
            c.sentences.iter().map(|s| s.template_id).collect();
        assert_eq!(ids.len(), c.len());
    }

    #[test]
    fn synthetic_rejects_zero_counts() {
        let cfg = SyntheticConfig {
            n_templates: 0,
            ..SyntheticConfig::default()
        };
        assert!(matches!(generate_synthetic_corpus(&cfg, 1), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn jaccard_hand_values() {
        assert_eq!(multiset_jaccard(&toks("a b c"), &toks("a b c")), 1.0);
        assert_eq!(multiset_jaccard(&toks("a b"), &toks("c d")), 0.0);
        assert_eq!(multiset_jaccard(&toks("a b c"), &toks("a b d")), 0.5);
        // multiset: {a,a,b} vs {a,b}: min 2, max 3
        assert!((multiset_jaccard(&toks("a a b"), &toks("a b")) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn pair_dataset_targets_are_overlaps() {
        let c = generate_synthetic_corpus(&SyntheticConfig::default(), 5).unwrap();
        let pairs = generate_pair_dataset(&c, 200, 9).unwrap();
        assert_eq!(pairs.len(), 200);
        for p in &pairs {
            assert!((0.0..=1.0).contains(&p.target));
            assert_eq!(p.target, multiset_jaccard(&p.sent_a, &p.sent_b));
        }
        assert!(pairs.iter().filter(|p| p.target > 0.3).count() >= 80);
        assert_eq!(pairs, generate_pair_dataset(&c, 200, 9).unwrap());
        assert!(generate_pair_dataset(&c, 0, 9).is_err());
    }

    #[test]
    fn pair_tsv_rescales_one_to_five() {
        let text = "Two dogs are fighting\tTwo dogs are wrestling\t4\n";
        let pairs = parse_pair_tsv(text, PairScale::OneToFive).unwrap();
        assert_eq!(pairs[0].target, 0.75);
        assert!(parse_pair_tsv("a\tb\t6\n", PairScale::OneToFive).is_err());
        let back = parse_pair_tsv(&write_pair_tsv(&pairs), PairScale::Unit).unwrap();
        assert_eq!(back, pairs);
    }

    #[test]
    fn split_sizes() {
        let (l, u) = split_initial(100, 0.02, 1).unwrap();
        assert_eq!(l.len(), 2);
        assert_eq!(u.len(), 98);
        let (l, u) = split_initial(10, 0.5, 1).unwrap();
        assert_eq!((l.len(), u.len()), (5, 5));
        let (l2, _) = split_initial(100, 0.02, 2).unwrap();
        assert_eq!(l2.len(), 2);
        assert!(split_initial(10, 0.0, 1).is_err());
        assert!(split_initial(10, 1.0, 1).is_err());
        assert_eq!(split_initial(3, 0.01, 1).unwrap().0.len(), 1);
    }

    #[test]
    fn hold_out_takes_last_copies() {
        let cfg = SyntheticConfig {
            n_templates: 4,
            copies_per_template: 3,
            ..SyntheticConfig::default()
        };
        let c = generate_synthetic_corpus(&cfg, 1).unwrap();
        let (pool, test) = hold_out_copies(&c, 1);
        assert_eq!(pool.len(), 8);
        assert_eq!(test.len(), 4);
        assert_eq!(test.sentences[0], c.sentences[2]);
    }

    fn corpus_strategy() -> impl Strategy<Value = Corpus> {
        let sentence = prop::collection::vec(("[a-zA-Z0-9.,]{1,6}", 0usize..4), 1..6);
        prop::collection::vec(sentence, 1..6).prop_map(|raw| {
            let mut c = Corpus {
                sentences: Vec::new(),
                label_names: Vec::new(),
            };
            for s in raw {
                let mut tokens = Vec::new();
                let mut labels = Vec::new();
                for (tok, lab) in s {
                    let name = format!("L{lab}");
                    let id = c.label_id(&name).unwrap_or_else(|| {
                        c.label_names.push(name);
                        c.label_names.len() - 1
                    });
                    tokens.push(tok);
                    labels.push(id);
                }
                c.sentences.push(TaggedSentence::new(tokens, labels));
            }
            c
        })
    }

    proptest! {
        #[test]
        fn conll_round_trip(c in corpus_strategy()) {
            let back = parse_conll(&c.to_conll(), 0, 1).unwrap();
            prop_assert_eq!(back, c);
        }

        #[test]
        fn split_is_partition(n in 1usize..300, frac in 0.01f64..0.99, seed in any::<u64>()) {
            let (l, u) = split_initial(n, frac, seed).unwrap();
            let mut all: Vec<usize> = l.iter().chain(&u).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            prop_assert_eq!(l.len(), ((frac * n as f64).round() as usize).clamp(1, n));
        }
    }
}
