//! Triangle-method threshold over a 256-bin histogram.

use crate::error::{Error, Result};

pub const BINS: usize = 256;

/// Threshold at the bin farthest from the line joining the histogram peak to the
/// farthest nonempty bin on the longer tail. Returns that bin's center value.
pub fn triangle_threshold(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("triangle threshold input".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("triangle threshold input".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / BINS as f64;
    if !(width > 0.0) {
        return Err(Error::Degenerate("triangle threshold of constant values".into()));
    }
    let mut hist = [0usize; BINS];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(BINS - 1);
        hist[b] += 1;
    }
    let peak = (0..BINS).max_by_key(|&b| (hist[b], std::cmp::Reverse(b))).unwrap_or(0);
    let first = hist.iter().position(|&h| h > 0).unwrap_or(0);
    let last = hist.iter().rposition(|&h| h > 0).unwrap_or(BINS - 1);
    let tail = if last - peak >= peak - first { last } else { first };
    let (x0, y0) = (peak as f64, hist[peak] as f64);
    let (x1, y1) = (tail as f64, hist[tail] as f64);
    let (dx, dy) = (x1 - x0, y1 - y0);
    let norm = (dx * dx + dy * dy).sqrt();
    let (a, b) = if tail >= peak { (peak, tail) } else { (tail, peak) };
    let mut best = peak;
    let mut best_d = -1.0;
    for i in a..=b {
        let d = if norm > 0.0 {
            (dy * (i as f64 - x0) - dx * (hist[i] as f64 - y0)).abs() / norm
        } else {
            0.0
        };
        if d > best_d {
            best_d = d;
            best = i;
        }
    }
    Ok(lo + (best as f64 + 0.5) * width)
}
