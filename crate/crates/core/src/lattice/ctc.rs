use super::network::ConfusionNetwork;
use super::vocab::{TokenId, Vocabulary};
use crate::error::{Error, Result};
use crate::logmath::{clamp_log, is_floor, log_add, LOG_FLOOR};

/// CTC collapse: merge adjacent repeats, then drop blanks.
pub fn collapse_ctc_path(labels: &[TokenId], vocab: &Vocabulary) -> Result<Vec<TokenId>> {
    for &l in labels {
        vocab.check(l)?;
    }
    Ok(collapse_unchecked(labels, vocab.blank_id()))
}

pub(crate) fn collapse_unchecked(labels: &[TokenId], blank: TokenId) -> Vec<TokenId> {
    let mut out = Vec::with_capacity(labels.len());
    let mut prev = None;
    for &l in labels {
        if Some(l) != prev && l != blank {
            out.push(l);
        }
        prev = Some(l);
    }
    out
}

/// Sum of the chosen label's log-probability over frames, accumulated in frame order.
pub fn path_log_prob(net: &ConfusionNetwork, labels: &[TokenId]) -> Result<f64> {
    if labels.len() != net.num_frames() {
        return Err(Error::Dimension {
            expected: net.num_frames(),
            found: labels.len(),
        });
    }
    let mut total = 0.0;
    for (t, &l) in labels.iter().enumerate() {
        net.vocab().check(l)?;
        total += net.log_prob(t, l);
    }
    Ok(total)
}

#[inline]
fn log_mul(a: f64, b: f64) -> f64 {
    if is_floor(a) || is_floor(b) {
        LOG_FLOOR
    } else {
        clamp_log(a + b)
    }
}

/// Total log-probability of every frame path that collapses to `tokens`.
///
/// Standard CTC forward recursion over the blank-interleaved label sequence.
/// Sequences that cannot fit in the available frames score [`LOG_FLOOR`].
pub fn ctc_forward_score(net: &ConfusionNetwork, tokens: &[TokenId]) -> Result<f64> {
    let blank = net.vocab().blank_id();
    for &tok in tokens {
        net.vocab().check(tok)?;
        if tok == blank {
            return Err(Error::Config(
                "token sequence passed to ctc_forward_score contains the blank".into(),
            ));
        }
    }
    let frames = net.num_frames();
    if frames == 0 {
        return Ok(if tokens.is_empty() { 0.0 } else { LOG_FLOOR });
    }

    let mut ext = Vec::with_capacity(2 * tokens.len() + 1);
    ext.push(blank);
    for &tok in tokens {
        ext.push(tok);
        ext.push(blank);
    }
    let len = ext.len();

    let mut alpha = vec![LOG_FLOOR; len];
    alpha[0] = net.log_prob(0, ext[0]);
    if len > 1 {
        alpha[1] = net.log_prob(0, ext[1]);
    }
    let mut next = vec![LOG_FLOOR; len];
    for t in 1..frames {
        let row = net.frame(t);
        for s in 0..len {
            let mut acc = alpha[s];
            if s >= 1 {
                acc = log_add(acc, alpha[s - 1]);
            }
            if s >= 2 && ext[s] != blank && ext[s] != ext[s - 2] {
                acc = log_add(acc, alpha[s - 2]);
            }
            next[s] = log_mul(acc, row[ext[s] as usize]);
        }
        std::mem::swap(&mut alpha, &mut next);
    }

    let last = alpha[len - 1];
    Ok(if len >= 2 {
        log_add(last, alpha[len - 2])
    } else {
        last
    })
}
