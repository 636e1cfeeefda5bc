//! Evaluation metrics.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Micro-averaged token F1. Tokens whose gold and predicted label both equal
/// `exclude` count as neither hits nor misses, which gives the usual
/// "ignore the outside tag" variant.
pub fn token_f1(pred: &[usize], gold: &[usize], exclude: Option<usize>) -> Result<f64> {
    if pred.len() != gold.len() {
        return Err(Error::LengthMismatch(pred.len(), gold.len()));
    }
    let Some(ex) = exclude else {
        if gold.is_empty() {
            return Ok(0.0);
        }
        let hits = pred.iter().zip(gold).filter(|(p, g)| p == g).count();
        return Ok(hits as f64 / gold.len() as f64);
    };
    let (mut tp, mut n_pred, mut n_gold) = (0usize, 0usize, 0usize);
    for (&p, &g) in pred.iter().zip(gold) {
        if p != ex {
            n_pred += 1;
        }
        if g != ex {
            n_gold += 1;
        }
        if p == g && g != ex {
            tp += 1;
        }
    }
    if tp == 0 {
        return Ok(0.0);
    }
    let precision = tp as f64 / n_pred as f64;
    let recall = tp as f64 / n_gold as f64;
    Ok(2.0 * precision * recall / (precision + recall))
}

fn choose2(n: usize) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let n = a.len();
    let mut joint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut rows: HashMap<usize, usize> = HashMap::new();
    let mut cols: HashMap<usize, usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = joint.values().map(|&c| choose2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| choose2(c)).sum();
    let total = choose2(n);
    if total == 0.0 {
        return 1.0;
    }
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if (max - expected).abs() < 1e-15 {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Smallest logged x on a learning curve whose y reaches `target`.
pub fn data_fraction_to_target(curve: &[(f64, f64)], target: f64) -> Option<f64> {
    curve.iter().find(|(_, y)| *y >= target).map(|(x, _)| *x)
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f1_hand_values() {
        // O = 0; gold has 3 entity tokens, prediction finds 2 of them plus one false hit
        let gold = [0, 1, 1, 0, 2];
        let pred = [1, 1, 0, 0, 2];
        let f1 = token_f1(&pred, &gold, Some(0)).unwrap();
        let (p, r) = (2.0 / 3.0, 2.0 / 3.0);
        assert!((f1 - 2.0 * p * r / (p + r)).abs() < 1e-12);
        assert_eq!(token_f1(&gold, &gold, Some(0)).unwrap(), 1.0);
        assert!((token_f1(&pred, &gold, None).unwrap() - 0.6).abs() < 1e-12);
        assert!(matches!(token_f1(&[0], &[0, 1], None), Err(Error::LengthMismatch(1, 2))));
        assert_eq!(token_f1(&[2, 2], &[1, 1], Some(0)).unwrap(), 0.0);
        // TP = 1, FP = 1, FN = 1
        assert_eq!(token_f1(&[1, 1, 0], &[1, 0, 1], Some(0)).unwrap(), 0.5);
    }

    #[test]
    fn ari_values() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
        // classic example: contingency [[1,1],[0,2]] on n = 4
        let ari = adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 1, 1]);
        let (index, sa, sb, t) = (1.0, 2.0, 3.0, 6.0);
        let expected = (index - sa * sb / t) / (0.5 * (sa + sb) - sa * sb / t);
        assert!((ari - expected).abs() < 1e-12);
    }

    #[test]
    fn fraction_to_target() {
        let curve = [(0.1, 0.8), (0.2, 0.9)];
        assert_eq!(data_fraction_to_target(&curve, 0.9), Some(0.2));
        assert_eq!(data_fraction_to_target(&curve, 0.95), None);
        assert_eq!(data_fraction_to_target(&curve, 0.0), Some(0.1));
    }

    #[test]
    fn mean_std_population() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }
}
