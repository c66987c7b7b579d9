//! Candidate distribution, the likelihood losses and the KL distillation
//! objective, each with its analytic gradient with respect to the scores.
//!
//! The `loss_*` functions take a probability vector as written in the
//! formulas; the `*_grad` functions work from raw scores in log space and are
//! what training uses.

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LossError {
    #[error("score {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
    #[error("empty score vector")]
    Empty,
    #[error("probability of positive {index} is zero")]
    ZeroProbability { index: usize },
    #[error("positive set is empty")]
    NoPositives,
    #[error("positive index {index} out of range for {len} candidates")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("positive index {0} listed twice")]
    DuplicatePositive(usize),
    #[error("length mismatch: {scores} scores, {utilities} utilities")]
    LengthMismatch { scores: usize, utilities: usize },
    #[error("need at least 2 candidates, got {0}")]
    TooFewCandidates(usize),
    #[error("temperature must be positive and finite, got {0}")]
    BadTemperature(f64),
}

fn check_finite(scores: &[f64]) -> Result<(), LossError> {
    if scores.is_empty() {
        return Err(LossError::Empty);
    }
    match scores.iter().position(|s| !s.is_finite()) {
        Some(index) => Err(LossError::NonFinite {
            index,
            value: scores[index],
        }),
        None => Ok(()),
    }
}

fn check_positives(positives: &[usize], len: usize) -> Result<(), LossError> {
    if positives.is_empty() {
        return Err(LossError::NoPositives);
    }
    let mut seen = vec![false; len];
    for &i in positives {
        if i >= len {
            return Err(LossError::IndexOutOfRange { index: i, len });
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(LossError::DuplicatePositive(i));
        }
    }
    Ok(())
}

/// `log Σ exp(s_i)` with max subtraction.
pub fn log_sum_exp(scores: &[f64]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
}

pub fn log_softmax(scores: &[f64]) -> Result<Vec<f64>, LossError> {
    check_finite(scores)?;
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    Ok(scores.iter().map(|s| (s - max) - log_z).collect())
}

/// `p_i = exp(s_i) / Σ_j exp(s_j)`.
pub fn candidate_distribution(scores: &[f64]) -> Result<Vec<f64>, LossError> {
    Ok(log_softmax(scores)?.into_iter().map(f64::exp).collect())
}

fn neg_log(p: &[f64], i: usize) -> Result<f64, LossError> {
    if p[i] <= 0.0 {
        return Err(LossError::ZeroProbability { index: i });
    }
    Ok(-p[i].ln())
}

pub fn loss_single(p: &[f64], pos: usize) -> Result<f64, LossError> {
    check_positives(&[pos], p.len())?;
    neg_log(p, pos)
}

/// `−Σ_{i∈P} log p_i`.
pub fn loss_joint(p: &[f64], positives: &[usize]) -> Result<f64, LossError> {
    check_positives(positives, p.len())?;
    positives.iter().map(|&i| neg_log(p, i)).sum()
}

/// `−log Σ_{i∈P} p_i`.
pub fn loss_summarg(p: &[f64], positives: &[usize]) -> Result<f64, LossError> {
    check_positives(positives, p.len())?;
    let mass: f64 = positives.iter().map(|&i| p[i]).sum();
    if mass <= 0.0 {
        return Err(LossError::ZeroProbability { index: positives[0] });
    }
    Ok(-mass.ln())
}

/// `KL(U ‖ R)` with `R = softmax(scores)`, `U = softmax(utilities)`.
pub fn loss_replug(scores: &[f64], utilities: &[f64]) -> Result<f64, LossError> {
    replug_grad(scores, utilities, 1.0).map(|(l, _)| l)
}

/// Single-positive loss and gradient `p − onehot(pos)`.
pub fn single_grad(scores: &[f64], pos: usize) -> Result<(f64, Vec<f64>), LossError> {
    summarg_grad(scores, &[pos])
}

/// Joint loss `|P|·lse(s) − Σ_{i∈P} s_i` and gradient `|P|·p − 1[P]`.
pub fn joint_grad(scores: &[f64], positives: &[usize]) -> Result<(f64, Vec<f64>), LossError> {
    let logp = log_softmax(scores)?;
    check_positives(positives, scores.len())?;
    let k = positives.len() as f64;
    let loss = -positives.iter().map(|&i| logp[i]).sum::<f64>();
    let mut grad: Vec<f64> = logp.iter().map(|l| k * l.exp()).collect();
    for &i in positives {
        grad[i] -= 1.0;
    }
    Ok((loss, grad))
}

/// Summed-marginal loss `lse(s) − lse(s_P)` and gradient `p − q`, where `q`
/// is the softmax restricted to the positives.
pub fn summarg_grad(scores: &[f64], positives: &[usize]) -> Result<(f64, Vec<f64>), LossError> {
    let logp = log_softmax(scores)?;
    check_positives(positives, scores.len())?;
    let pos_scores: Vec<f64> = positives.iter().map(|&i| scores[i]).collect();
    let lse_all = log_sum_exp(scores);
    let lse_pos = log_sum_exp(&pos_scores);
    let loss = (lse_all - lse_pos).max(0.0);
    let mut grad: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
    for &i in positives {
        grad[i] -= (scores[i] - lse_pos).exp();
    }
    Ok((loss, grad))
}

/// `KL(U ‖ R)` at temperature `tau` and its gradient `(R − U) / tau`.
pub fn replug_grad(scores: &[f64], utilities: &[f64], tau: f64) -> Result<(f64, Vec<f64>), LossError> {
    if scores.len() != utilities.len() {
        return Err(LossError::LengthMismatch {
            scores: scores.len(),
            utilities: utilities.len(),
        });
    }
    if scores.len() < 2 {
        return Err(LossError::TooFewCandidates(scores.len()));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(LossError::BadTemperature(tau));
    }
    check_finite(utilities)?;
    let scaled: Vec<f64> = scores.iter().map(|s| s / tau).collect();
    let log_r = log_softmax(&scaled)?;
    let u_scaled: Vec<f64> = utilities.iter().map(|u| u / tau).collect();
    let log_u = log_softmax(&u_scaled)?;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(scores.len());
    for i in 0..scores.len() {
        let u = log_u[i].exp();
        if u > 0.0 {
            loss += u * (log_u[i] - log_r[i]);
        }
        grad.push((log_r[i].exp() - u) / tau);
    }
    Ok((loss.max(0.0), grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LN2: f64 = std::f64::consts::LN_2;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn distribution_examples() {
        let p = candidate_distribution(&[0.0, 0.0, 0.0]).unwrap();
        assert!(p.iter().all(|x| close(*x, 1.0 / 3.0, 1e-15)));
        let p = candidate_distribution(&[LN2, 0.0]).unwrap();
        assert!(close(p[0], 2.0 / 3.0, 1e-15) && close(p[1], 1.0 / 3.0, 1e-15));
        let p = candidate_distribution(&[1000.0, 1000.0]).unwrap();
        assert!(close(p[0], 0.5, 1e-15) && close(p[1], 0.5, 1e-15));
        assert!(matches!(candidate_distribution(&[0.0, f64::NAN]), Err(LossError::NonFinite { index: 1, .. })));
        assert!(matches!(candidate_distribution(&[0.0, f64::INFINITY]), Err(LossError::NonFinite { index: 1, .. })));
    }

    #[test]
    fn single_examples() {
        let third = [1.0 / 3.0; 3];
        assert!(close(loss_single(&third, 0).unwrap(), 3f64.ln(), 1e-15));
        assert_eq!(loss_single(&[1.0, 0.0], 0).unwrap(), 0.0);
        assert!(close(loss_single(&[2.0 / 3.0, 1.0 / 3.0], 0).unwrap(), 1.5f64.ln(), 1e-15));
        assert!(matches!(loss_single(&[1.0, 0.0], 1), Err(LossError::ZeroProbability { index: 1 })));
    }

    #[test]
    fn joint_examples() {
        let third = [1.0 / 3.0; 3];
        assert!(close(loss_joint(&third, &[0, 1]).unwrap(), 2.0 * 3f64.ln(), 1e-15));
        assert!(close(loss_joint(&[0.5, 0.25, 0.25], &[0, 1]).unwrap(), 2.0794415416798357, 1e-12));
        assert_eq!(loss_joint(&third, &[]), Err(LossError::NoPositives));
    }

    #[test]
    fn summarg_examples() {
        let third = [1.0 / 3.0; 3];
        assert!(close(loss_summarg(&third, &[0, 1]).unwrap(), 1.5f64.ln(), 1e-15));
        assert_eq!(loss_summarg(&third, &[0]).unwrap(), loss_single(&third, 0).unwrap());
        assert!(close(loss_summarg(&third, &[0, 1, 2]).unwrap(), 0.0, 1e-15));
        assert_eq!(loss_summarg(&third, &[]), Err(LossError::NoPositives));
    }

    #[test]
    fn replug_examples() {
        assert_eq!(loss_replug(&[0.3, -1.2, 2.0], &[0.3, -1.2, 2.0]).unwrap(), 0.0);
        let l = loss_replug(&[0.0, 0.0], &[0.0, -1000.0]).unwrap();
        assert!(close(l, LN2, 1e-12));
        assert!(matches!(loss_replug(&[0.0], &[0.0]), Err(LossError::TooFewCandidates(1))));
        assert!(matches!(loss_replug(&[0.0, 1.0], &[0.0]), Err(LossError::LengthMismatch { .. })));
    }

    #[test]
    fn score_space_matches_probability_space() {
        let s = [0.4, -1.0, 2.5, 0.0];
        let p = candidate_distribution(&s).unwrap();
        assert!(close(single_grad(&s, 2).unwrap().0, loss_single(&p, 2).unwrap(), 1e-12));
        assert!(close(joint_grad(&s, &[0, 2]).unwrap().0, loss_joint(&p, &[0, 2]).unwrap(), 1e-12));
        assert!(close(summarg_grad(&s, &[0, 2]).unwrap().0, loss_summarg(&p, &[0, 2]).unwrap(), 1e-12));
    }

    fn scores_and_positives() -> impl Strategy<Value = (Vec<f64>, Vec<usize>)> {
        prop::collection::vec(-8.0f64..8.0, 2..16).prop_flat_map(|s| {
            let n = s.len();
            (Just(s), prop::sample::subsequence((0..n).collect::<Vec<_>>(), 1..=n))
        })
    }

    proptest! {
        #[test]
        fn summarg_bounded_by_joint_and_each_positive((s, pos) in scores_and_positives()) {
            let p = candidate_distribution(&s).unwrap();
            let sm = loss_summarg(&p, &pos).unwrap();
            prop_assert!(sm <= loss_joint(&p, &pos).unwrap() + 1e-12);
            for &i in &pos {
                prop_assert!(sm <= -p[i].ln() + 1e-12);
            }
        }

        #[test]
        fn raising_a_positive_lowers_summarg((s, pos) in scores_and_positives(), bump in 0.01f64..2.0) {
            prop_assume!(pos.len() < s.len());
            let before = summarg_grad(&s, &pos).unwrap().0;
            let mut t = s.clone();
            t[pos[0]] += bump;
            prop_assert!(summarg_grad(&t, &pos).unwrap().0 < before);
        }

        #[test]
        fn gradients_sum_to_zero_for_normalized_losses((s, pos) in scores_and_positives()) {
            let g: f64 = summarg_grad(&s, &pos).unwrap().1.iter().sum();
            prop_assert!(g.abs() < 1e-12);
        }
    }
}
