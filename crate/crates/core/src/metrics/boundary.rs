//! Tolerance-based boundary matching backed by an exact squared Euclidean
//! distance transform (Meijster, Roerdink and Hesselink's two-pass
//! algorithm in integer arithmetic).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BoundaryMap, Mask};

/// Maximum distance, in pixels, at which two boundary pixels match.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryMatchConfig {
    pub tolerance: f64,
}

impl Default for BoundaryMatchConfig {
    fn default() -> Self {
        Self { tolerance: 2.0 }
    }
}

impl BoundaryMatchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance.is_finite() && self.tolerance >= 0.0) {
            return Err(Error::Config(format!(
                "boundary tolerance must be >= 0, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

/// Squared distance from every pixel to the nearest set pixel of `features`.
///
/// Returns `None` when `features` is empty.
pub fn squared_distance_transform(features: &Mask) -> Option<Vec<u64>> {
    if features.is_empty() {
        return None;
    }
    let (h, w) = features.dims();
    // larger than any in-grid distance
    let inf = (h + w) as i64;

    // column pass: vertical distance to nearest feature in the same column
    let mut g = vec![0i64; h * w];
    for c in 0..w {
        g[c] = if features.get(0, c) { 0 } else { inf };
        for r in 1..h {
            g[r * w + c] = if features.get(r, c) { 0 } else { (g[(r - 1) * w + c] + 1).min(inf) };
        }
        for r in (0..h.saturating_sub(1)).rev() {
            let below = g[(r + 1) * w + c];
            if below < g[r * w + c] {
                g[r * w + c] = below + 1;
            }
        }
    }

    // row pass: lower envelope of parabolas
    let mut out = vec![0u64; h * w];
    let mut s = vec![0usize; w];
    let mut t = vec![0usize; w];
    for r in 0..h {
        let gr = &g[r * w..(r + 1) * w];
        let f = |x: usize, i: usize| {
            let d = x as i64 - i as i64;
            d * d + gr[i] * gr[i]
        };
        let sep = |i: usize, u: usize| {
            let (ii, uu) = (i as i64, u as i64);
            (uu * uu - ii * ii + gr[u] * gr[u] - gr[i] * gr[i]).div_euclid(2 * (uu - ii))
        };

        let mut q: isize = 0;
        s[0] = 0;
        t[0] = 0;
        for u in 1..w {
            while q >= 0 && f(t[q as usize], s[q as usize]) > f(t[q as usize], u) {
                q -= 1;
            }
            if q < 0 {
                q = 0;
                s[0] = u;
            } else {
                let wpos = 1 + sep(s[q as usize], u);
                if wpos < w as i64 {
                    q += 1;
                    s[q as usize] = u;
                    t[q as usize] = wpos as usize;
                }
            }
        }
        for u in (0..w).rev() {
            out[r * w + u] = f(u, s[q as usize]) as u64;
            if u == t[q as usize] {
                q -= 1;
            }
        }
    }
    Some(out)
}

/// Number of pixels in `from` lying within `tolerance` of some pixel in `to`.
fn matched_count(from: &Mask, to: &Mask, tolerance: f64) -> usize {
    let tol2 = tolerance * tolerance;
    match squared_distance_transform(to) {
        None => 0,
        Some(dt) => from
            .values()
            .iter()
            .zip(&dt)
            .filter(|(&on, &d2)| on != 0 && (d2 as f64) <= tol2)
            .count(),
    }
}

/// Precision/recall counts behind a boundary F-measure.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryMatch {
    pub pred_total: usize,
    pub pred_matched: usize,
    pub truth_total: usize,
    pub truth_matched: usize,
}

impl BoundaryMatch {
    /// Harmonic mean of precision and recall. Two empty boundaries score
    /// 1.0; exactly one empty boundary scores 0.0.
    pub fn f_measure(&self) -> f64 {
        match (self.pred_total, self.truth_total) {
            (0, 0) => 1.0,
            (0, _) | (_, 0) => 0.0,
            (np, nt) => {
                let p = self.pred_matched as f64 / np as f64;
                let r = self.truth_matched as f64 / nt as f64;
                if p + r == 0.0 {
                    0.0
                } else {
                    2.0 * p * r / (p + r)
                }
            }
        }
    }
}

pub fn boundary_match(
    pred: &BoundaryMap,
    truth: &BoundaryMap,
    cfg: &BoundaryMatchConfig,
) -> Result<BoundaryMatch> {
    cfg.validate()?;
    let (p, t) = (pred.as_mask(), truth.as_mask());
    t.grid().ensure_same_dims(p.grid())?;
    Ok(BoundaryMatch {
        pred_total: p.count(),
        pred_matched: matched_count(p, t, cfg.tolerance),
        truth_total: t.count(),
        truth_matched: matched_count(t, p, cfg.tolerance),
    })
}

/// Boundary F-measure under a Euclidean matching tolerance.
pub fn boundary_fmeasure(pred: &BoundaryMap, truth: &BoundaryMap, cfg: &BoundaryMatchConfig) -> Result<f64> {
    Ok(boundary_match(pred, truth, cfg)?.f_measure())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_dt(m: &Mask) -> Vec<u64> {
        let (h, w) = m.dims();
        let mut out = vec![u64::MAX; h * w];
        for r in 0..h {
            for c in 0..w {
                for fr in 0..h {
                    for fc in 0..w {
                        if m.get(fr, fc) {
                            let d = (r.abs_diff(fr).pow(2) + c.abs_diff(fc).pow(2)) as u64;
                            out[r * w + c] = out[r * w + c].min(d);
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn dt_matches_brute_force_on_patterns() {
        let patterns: Vec<Mask> = vec![
            Mask::from_fn(7, 9, |r, c| r == 3 && c == 4).unwrap(),
            Mask::from_fn(5, 11, |r, c| (r * 3 + c * 5) % 7 == 0).unwrap(),
            Mask::from_fn(1, 8, |_, c| c == 7).unwrap(),
            Mask::from_fn(8, 1, |r, _| r == 0).unwrap(),
            Mask::from_fn(6, 6, |r, c| r == 0 || c == 5).unwrap(),
        ];
        for m in &patterns {
            assert_eq!(squared_distance_transform(m).unwrap(), brute_dt(m));
        }
        assert!(squared_distance_transform(&Mask::empty(3, 3).unwrap()).is_none());
    }

    #[test]
    fn shifted_boundary_within_tolerance() {
        let a = BoundaryMap::from_mask(Mask::from_fn(10, 10, |r, c| r == 4 && (2..8).contains(&c)).unwrap());
        let b = BoundaryMap::from_mask(Mask::from_fn(10, 10, |r, c| r == 5 && (2..8).contains(&c)).unwrap());
        let cfg = BoundaryMatchConfig { tolerance: 2.0 };
        assert_eq!(boundary_fmeasure(&a, &b, &cfg).unwrap(), 1.0);
        let strict = BoundaryMatchConfig { tolerance: 0.0 };
        assert_eq!(boundary_fmeasure(&a, &b, &strict).unwrap(), 0.0);
    }

    #[test]
    fn empty_conventions() {
        let empty = BoundaryMap::from_mask(Mask::empty(4, 4).unwrap());
        let some = BoundaryMap::from_mask(Mask::from_fn(4, 4, |r, c| r == c).unwrap());
        let cfg = BoundaryMatchConfig::default();
        assert_eq!(boundary_fmeasure(&empty, &empty, &cfg).unwrap(), 1.0);
        assert_eq!(boundary_fmeasure(&empty, &some, &cfg).unwrap(), 0.0);
        assert_eq!(boundary_fmeasure(&some, &empty, &cfg).unwrap(), 0.0);
        assert_eq!(boundary_fmeasure(&some, &some, &cfg).unwrap(), 1.0);
    }

    #[test]
    fn negative_tolerance_rejected() {
        let m = BoundaryMap::from_mask(Mask::empty(2, 2).unwrap());
        assert!(boundary_fmeasure(&m, &m, &BoundaryMatchConfig { tolerance: -1.0 }).is_err());
    }
}
