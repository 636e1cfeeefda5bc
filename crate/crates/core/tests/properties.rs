use a2l::clustering::{pick_representatives, spectral_cluster, ClusterAssignment};
use a2l::corpus::TaggedSentence;
use a2l::linalg::{softmax, Matrix};
use a2l::metrics::adjusted_rand_index;
use a2l::similarity::{eq_similarity, SimilarityMatrix};
use a2l::strategies::{
    ads_score, bald_score, coverage_score, entropy_score, lc_score, margin_score, StrategyConfig, StrategyKind,
};
use a2l::tagger::{train_tagger, PredictionRecord, TaggerHyper, TaggerModel};
use proptest::prelude::*;

fn distribution(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-4.0..4.0f64, len).prop_map(|v| softmax(&v))
}

fn attention(src: usize, tgt: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(distribution(src), tgt)
}

fn tiny_model() -> TaggerModel {
    let toks = |s: &str| s.split(' ').map(String::from).collect::<Vec<_>>();
    let data = [
        TaggedSentence::new(toks("red fox runs"), vec![0, 1, 2]),
        TaggedSentence::new(toks("blue owl sleeps"), vec![0, 1, 2]),
        TaggedSentence::new(toks("the fox"), vec![1, 1]),
    ];
    let refs: Vec<&TaggedSentence> = data.iter().collect();
    let hyper = TaggerHyper { epochs: 20, dim: 16, ..TaggerHyper::default() };
    train_tagger(&refs, 3, &hyper).unwrap()
}

fn words() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["red", "fox", "owl", "zebra", "the", "runs", "q"]), 1..7)
        .prop_map(|v| v.into_iter().map(String::from).collect())
}

fn with_dists(token_dists: Vec<Vec<f64>>) -> PredictionRecord {
    let n = token_dists.len();
    PredictionRecord {
        token_dists,
        kbest: Vec::new(),
        token_encodings: Vec::new(),
        sentence_encoding: Vec::new(),
        attention: None,
        pred_len: n,
        seq_logprob: 0.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scorer_ranges(tokens in words(), seed in any::<u64>()) {
        let model = tiny_model();
        let cfg = StrategyConfig { bald_passes: 9, ..StrategyConfig::top_fraction(StrategyKind::Bald, 0.5) };
        let b = bald_score(&model, &tokens, &cfg, seed);
        prop_assert!((0.0..=1.0 - 1.0 / 9.0 + 1e-12).contains(&b));
        let rec = model.predict(&tokens, 2, None);
        prop_assert!(entropy_score(&rec) >= 0.0);
        if rec.kbest.len() >= 2 {
            prop_assert!(margin_score(&rec).unwrap() >= 0.0);
        }
    }

    #[test]
    fn bald_without_dropout_is_zero(tokens in words(), seed in any::<u64>()) {
        let model = tiny_model();
        let cfg = StrategyConfig { bald_dropout: 0.0, bald_passes: 7, ..StrategyConfig::top_fraction(StrategyKind::Bald, 0.5) };
        prop_assert_eq!(bald_score(&model, &tokens, &cfg, seed), 0.0);
    }

    #[test]
    fn scorers_are_deterministic(tokens in words(), seed in any::<u64>()) {
        let model = tiny_model();
        let cfg = StrategyConfig { bald_passes: 5, ..StrategyConfig::top_fraction(StrategyKind::Bald, 0.5) };
        prop_assert_eq!(bald_score(&model, &tokens, &cfg, seed), bald_score(&model, &tokens, &cfg, seed));
        prop_assert_eq!(model.predict(&tokens, 3, None), model.predict(&tokens, 3, None));
    }

    #[test]
    fn length_normalized_scores_ignore_repetition(
        dists in prop::collection::vec(distribution(3), 1..6),
        logprob in -20.0..0.0f64,
    ) {
        let once = with_dists(dists.clone());
        let twice = with_dists([dists.clone(), dists].concat());
        prop_assert!((entropy_score(&once) - entropy_score(&twice)).abs() < 1e-12);
        let short = PredictionRecord { seq_logprob: logprob, ..once };
        let long = PredictionRecord { seq_logprob: 2.0 * logprob, ..twice };
        prop_assert!((lc_score(&short) - lc_score(&long)).abs() < 1e-12);
    }

    #[test]
    fn attention_scores_ignore_source_order(
        att in (2usize..7, 1usize..6).prop_flat_map(|(s, t)| attention(s, t)),
        shift in 0usize..7,
    ) {
        let rotated: Vec<Vec<f64>> = att
            .iter()
            .map(|r| {
                let mut r = r.clone();
                let k = shift % r.len();
                r.rotate_left(k);
                r
            })
            .collect();
        let a = PredictionRecord::from_attention(att, -1.0);
        let b = PredictionRecord::from_attention(rotated, -1.0);
        prop_assert!((ads_score(&a).unwrap() - ads_score(&b).unwrap()).abs() < 1e-9);
        let (ca, cb) = (coverage_score(&a).unwrap(), coverage_score(&b).unwrap());
        prop_assert!(ca <= 0.0);
        prop_assert!((ca - cb).abs() < 1e-9);
    }

    #[test]
    fn similarity_is_a_unit_interval_kernel(
        a in prop::collection::vec(-5.0..5.0f64, 4),
        b in prop::collection::vec(-5.0..5.0f64, 4),
    ) {
        let s = eq_similarity(&a, &b);
        prop_assert!(s > 0.0 && s <= 1.0);
        prop_assert_eq!(eq_similarity(&a, &a), 1.0);
        prop_assert_eq!(s, eq_similarity(&b, &a));
    }

    #[test]
    fn representatives_respect_quota(
        assignment in prop::collection::vec(0usize..5, 1..40),
        quota in 1usize..4,
        seed in any::<u64>(),
    ) {
        let n = assignment.len();
        let unc: Vec<f64> = (0..n).map(|i| ((seed.wrapping_add(i as u64 * 7919)) % 97) as f64).collect();
        let assign = ClusterAssignment::new(5, assignment).unwrap();
        let picks = pick_representatives(&assign, &unc, quota);
        let sizes = assign.sizes();
        let expected: usize = sizes.iter().map(|&s| s.min(quota)).sum();
        prop_assert_eq!(picks.len(), expected);
        let mut sorted = picks.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), picks.len());
        prop_assert!(picks.windows(2).all(|w| assign.assignment[w[0]] <= assign.assignment[w[1]]));
    }

    #[test]
    fn ari_ignores_label_names(labels in prop::collection::vec(0usize..4, 2..30), offset in 1usize..10) {
        let renamed: Vec<usize> = labels.iter().map(|l| (l + offset) * 3).collect();
        prop_assert!((adjusted_rand_index(&labels, &renamed) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_ids_in_range(n in 3usize..12, seed in any::<u64>()) {
        let m = Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { eq_similarity(&[i as f64], &[j as f64]) });
        let s = SimilarityMatrix::from_matrix(m).unwrap();
        let k = 2 + (seed as usize % (n - 1)).min(n - 2);
        let got = spectral_cluster(&s, k, seed).unwrap();
        prop_assert!(got.assignment.iter().all(|&c| c < k));
        prop_assert_eq!(got.clone(), spectral_cluster(&s, k, seed).unwrap());
    }
}
