//! Training objectives.

/// Probabilities below this are clamped before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

/// `-ln p[gold]`, with `p[gold]` clamped to [`PROB_FLOOR`]. NaN stays NaN.
pub fn ce_loss(probs: &[f64], gold: usize) -> f64 {
    let p = probs[gold];
    if p.is_nan() {
        return p;
    }
    -p.max(PROB_FLOOR).ln()
}

/// Cross-entropy on logits and its gradient with respect to them.
pub fn ce_with_grad(logits: &[f64], gold: usize) -> (f64, Vec<f64>) {
    let p = softmax(logits);
    let loss = ce_loss(&p, gold);
    let grad = p.iter().enumerate().map(|(i, &pi)| if i == gold { pi - 1.0 } else { pi }).collect();
    (loss, grad)
}

/// `ln(1 + sum(exp(x)))` evaluated with a shifted log-sum-exp.
fn log1p_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(0.0_f64, f64::max);
    let inner = (-max).exp() + xs.iter().map(|x| (x - max).exp()).sum::<f64>();
    max + inner.ln()
}

/// Zero-bounded log-sum-exp pairwise loss:
/// `ln(1 + sum_{i in P} e^{-s_i}) + ln(1 + sum_{j not in P} e^{s_j})`.
pub fn zlpr_loss(scores: &[f64], positives: &[usize]) -> f64 {
    let (pos, neg) = split(scores, positives);
    log1p_sum_exp(&pos) + log1p_sum_exp(&neg)
}

/// [`zlpr_loss`] and its gradient with respect to the scores.
pub fn zlpr_with_grad(scores: &[f64], positives: &[usize]) -> (f64, Vec<f64>) {
    let loss = zlpr_loss(scores, positives);
    let (pos, neg) = split(scores, positives);
    let lp = log1p_sum_exp(&pos);
    let ln = log1p_sum_exp(&neg);
    let grad = scores
        .iter()
        .enumerate()
        .map(|(i, &s)| if positives.contains(&i) { -(-s - lp).exp() } else { (s - ln).exp() })
        .collect();
    (loss, grad)
}

/// (negated positive scores, negative scores).
fn split(scores: &[f64], positives: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (i, &s) in scores.iter().enumerate() {
        if positives.contains(&i) {
            pos.push(-s);
        } else {
            neg.push(s);
        }
    }
    (pos, neg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ce_examples() {
        assert_eq!(ce_loss(&[0.0, 1.0], 1), 0.0);
        assert!((ce_loss(&[0.5, 0.5], 0) - 2f64.ln()).abs() < 1e-15);
        assert!((ce_loss(&[0.9, 0.1], 1) - 10f64.ln()).abs() < 1e-12);
        assert!((ce_loss(&[1.0, 0.0], 1) - (1e12f64).ln()).abs() < 1e-9);
    }

    #[test]
    fn zlpr_examples() {
        assert!((zlpr_loss(&[0.0, 0.0], &[0]) - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!(zlpr_loss(&[800.0, -800.0], &[0]) < 1e-300);
        assert!(zlpr_loss(&[-800.0, 800.0], &[0]).is_finite());
    }

    #[test]
    fn zlpr_gradient_matches_differences() {
        let s = [0.3, -1.2, 2.0, 0.0];
        let p = [0, 3];
        let (_, g) = zlpr_with_grad(&s, &p);
        for i in 0..s.len() {
            let mut a = s;
            let mut b = s;
            a[i] += 1e-6;
            b[i] -= 1e-6;
            let fd = (zlpr_loss(&a, &p) - zlpr_loss(&b, &p)) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-8, "{i}: {fd} vs {}", g[i]);
        }
    }

    proptest! {
        #[test]
        fn losses_non_negative(s in proptest::collection::vec(-50.0f64..50.0, 1..8), mask in any::<u8>()) {
            let pos: Vec<usize> = (0..s.len()).filter(|i| mask & (1 << i) != 0).collect();
            prop_assert!(zlpr_loss(&s, &pos) >= 0.0);
            let p = softmax(&s);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(ce_loss(&p, 0) >= 0.0);
        }

        #[test]
        fn raising_a_positive_lowers_zlpr(s in proptest::collection::vec(-5.0f64..5.0, 2..6), k in 0usize..6) {
            let k = k % s.len();
            let mut t = s.clone();
            t[k] += 0.5;
            prop_assert!(zlpr_loss(&t, &[k]) < zlpr_loss(&s, &[k]));
        }
    }
}
