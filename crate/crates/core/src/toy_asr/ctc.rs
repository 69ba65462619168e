//! Log-space CTC forward-backward and greedy best-path decoding.

use crate::error::{Error, Result};
use crate::matrix::{log_softmax, Matrix};

/// Frames needed to emit `target`: one per label plus one blank between
/// each pair of equal neighbours.
pub fn min_frames(target: &[usize]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

fn extended(target: &[usize], blank: usize) -> Vec<usize> {
    let mut ext = Vec::with_capacity(2 * target.len() + 1);
    ext.push(blank);
    for &l in target {
        ext.push(l);
        ext.push(blank);
    }
    ext
}

fn lse2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Negative log-likelihood of `target` under per-frame logits.
pub fn ctc_loss(logits: &Matrix, target: &[usize], blank: usize) -> Result<f64> {
    Ok(ctc_loss_and_grad(logits, target, blank)?.0)
}

/// Gradient of [`ctc_loss`] with respect to the logits.
pub fn ctc_backward(logits: &Matrix, target: &[usize], blank: usize) -> Result<Matrix> {
    Ok(ctc_loss_and_grad(logits, target, blank)?.1)
}

pub fn ctc_loss_and_grad(logits: &Matrix, target: &[usize], blank: usize) -> Result<(f64, Matrix)> {
    let frames = logits.rows;
    let need = min_frames(target);
    if frames < need.max(1) {
        return Err(Error::TargetTooLong { need, have: frames });
    }
    let log_probs: Vec<Vec<f64>> = (0..frames).map(|t| log_softmax(logits.row(t))).collect();
    let ext = extended(target, blank);
    let states = ext.len();
    let can_skip = |s: usize| s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];

    let neg = f64::NEG_INFINITY;
    let mut alpha = vec![vec![neg; states]; frames];
    alpha[0][0] = log_probs[0][ext[0]];
    if states > 1 {
        alpha[0][1] = log_probs[0][ext[1]];
    }
    for t in 1..frames {
        for s in 0..states {
            let mut acc = alpha[t - 1][s];
            if s >= 1 {
                acc = lse2(acc, alpha[t - 1][s - 1]);
            }
            if can_skip(s) {
                acc = lse2(acc, alpha[t - 1][s - 2]);
            }
            alpha[t][s] = acc + log_probs[t][ext[s]];
        }
    }
    let mut log_p = alpha[frames - 1][states - 1];
    if states > 1 {
        log_p = lse2(log_p, alpha[frames - 1][states - 2]);
    }

    // beta excludes the emission at its own frame
    let mut beta = vec![vec![neg; states]; frames];
    beta[frames - 1][states - 1] = 0.0;
    if states > 1 {
        beta[frames - 1][states - 2] = 0.0;
    }
    for t in (0..frames - 1).rev() {
        for s in 0..states {
            let mut acc = beta[t + 1][s] + log_probs[t + 1][ext[s]];
            if s + 1 < states {
                acc = lse2(acc, beta[t + 1][s + 1] + log_probs[t + 1][ext[s + 1]]);
            }
            if s + 2 < states && can_skip(s + 2) {
                acc = lse2(acc, beta[t + 1][s + 2] + log_probs[t + 1][ext[s + 2]]);
            }
            beta[t][s] = acc;
        }
    }

    let mut grad = Matrix::zeros(frames, logits.cols);
    let mut occupancy = vec![neg; logits.cols];
    for t in 0..frames {
        occupancy.iter_mut().for_each(|o| *o = neg);
        for s in 0..states {
            occupancy[ext[s]] = lse2(occupancy[ext[s]], alpha[t][s] + beta[t][s]);
        }
        let row = grad.row_mut(t);
        for k in 0..row.len() {
            row[k] = log_probs[t][k].exp() - (occupancy[k] - log_p).exp();
        }
    }
    Ok((-log_p, grad))
}

/// Per-frame argmax (lowest index wins ties), repeats collapsed, blanks dropped.
pub fn best_path(logits: &Matrix, blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for t in 0..logits.rows {
        let row = logits.row(t);
        let mut best = 0;
        for k in 1..row.len() {
            if row[k] > row[best] {
                best = k;
            }
        }
        if Some(best) != prev && best != blank {
            out.push(best);
        }
        prev = Some(best);
    }
    out
}

/// Log-probability of every frame, for callers that want the posteriors.
pub fn frame_log_probs(logits: &Matrix) -> Matrix {
    let rows: Vec<Vec<f64>> = (0..logits.rows).map(|t| log_softmax(logits.row(t))).collect();
    Matrix::from_rows(&rows)
}
