use serde::{Deserialize, Serialize};

use super::{Heatmap, Keypoint};
use crate::error::{Error, Result};

/// Threshold and neighborhood used by [`extract_peaks`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakConfig {
    /// Only pixels strictly above this value are candidates.
    pub threshold: f64,
    /// Side of the square local-maximum window; odd and at least 3.
    pub window: usize,
}

impl Default for PeakConfig {
    fn default() -> Self {
        Self {
            threshold: 0.1,
            window: 3,
        }
    }
}

impl PeakConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!(
                "peak threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "peak window must be odd and >= 3, got {}",
                self.window
            )));
        }
        Ok(())
    }
}

/// Extract keypoints as thresholded local maxima of a heatmap.
///
/// A pixel is a peak when its value exceeds the threshold and no other
/// in-bounds pixel of the centered window is larger. Among equal values in
/// the window, only the pixel that comes first in `(row, col)` order is
/// kept. Output is sorted by `(row, col)`.
pub fn extract_peaks(heatmap: &Heatmap, cfg: &PeakConfig) -> Result<Vec<Keypoint>> {
    cfg.validate()?;
    let (h, w) = heatmap.dims();
    let k = cfg.window / 2;
    let window_max = max_filter(heatmap, k);

    let mut peaks = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let v = heatmap.get(r, c);
            if v <= cfg.threshold || v < window_max[r * w + c] {
                continue;
            }
            if !has_earlier_tie(heatmap, r, c, k, v) {
                peaks.push(Keypoint::with_score(r, c, v));
            }
        }
    }
    Ok(peaks)
}

/// Separable square max filter with radius `k`, ignoring out-of-bounds cells.
fn max_filter(heatmap: &Heatmap, k: usize) -> Vec<f64> {
    let (h, w) = heatmap.dims();
    let mut rows = vec![0.0; h * w];
    for r in 0..h {
        let src = heatmap.grid().row(r);
        for c in 0..w {
            let lo = c.saturating_sub(k);
            let hi = (c + k).min(w - 1);
            rows[r * w + c] = src[lo..=hi].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
    }
    let mut out = vec![0.0; h * w];
    for c in 0..w {
        for r in 0..h {
            let lo = r.saturating_sub(k);
            let hi = (r + k).min(h - 1);
            out[r * w + c] = (lo..=hi).map(|rr| rows[rr * w + c]).fold(f64::NEG_INFINITY, f64::max);
        }
    }
    out
}

/// Whether a window cell before `(r, c)` in row-major order holds value `v`.
fn has_earlier_tie(heatmap: &Heatmap, r: usize, c: usize, k: usize, v: f64) -> bool {
    let (_, w) = heatmap.dims();
    let c0 = c.saturating_sub(k);
    let c1 = (c + k).min(w - 1);
    for rr in r.saturating_sub(k)..r {
        if heatmap.grid().row(rr)[c0..=c1].contains(&v) {
            return true;
        }
    }
    heatmap.grid().row(r)[c0..c].contains(&v)
}
