//! Log-domain helpers shared by the lattice, LM and fusion code.
//!
//! Zero probabilities are represented by [`LOG_FLOOR`] instead of `-inf` so
//! that sums and differences never produce NaN.

/// Log-probability used for impossible events.
pub const LOG_FLOOR: f64 = -1.0e9;

/// Maps `-inf`, NaN and anything below the floor onto [`LOG_FLOOR`].
#[inline]
pub fn clamp_log(x: f64) -> f64 {
    if x.is_nan() || x < LOG_FLOOR {
        LOG_FLOOR
    } else {
        x
    }
}

/// Natural log of a probability, floored.
#[inline]
pub fn ln_floor(p: f64) -> f64 {
    if p <= 0.0 {
        LOG_FLOOR
    } else {
        clamp_log(p.ln())
    }
}

#[inline]
pub fn is_floor(x: f64) -> bool {
    x <= LOG_FLOOR
}

/// `log(exp(a) + exp(b))`. Two floor operands stay at the floor.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if is_floor(a) {
        return if is_floor(b) { LOG_FLOOR } else { b };
    }
    if is_floor(b) {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Log-sum-exp over a sequence, max-shifted.
pub fn log_sum_exp<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() || is_floor(max) {
        return LOG_FLOOR;
    }
    let sum: f64 = values
        .iter()
        .filter(|v| !is_floor(**v))
        .map(|v| (v - max).exp())
        .sum();
    clamp_log(max + sum.ln())
}
