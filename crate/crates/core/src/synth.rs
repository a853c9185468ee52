//! Deterministic synthetic buildings for end-to-end checks.
//!
//! Each sample is drawn from a ChaCha8 stream keyed by the 256-bit value
//! `seed.to_le_bytes() ++ index.to_le_bytes() ++ [0; 16]`. Shape parameters
//! are drawn first, then (if `noise_amplitude > 0`) one uniform noise value
//! per pixel in row-major order.
//!
//! * `Convex`: `n` vertices on an ellipse, sorted by angle. Angular gaps are
//!   the uniform gap scaled by independent factors in `[0.8, 1.2]`, the
//!   axis ratio is at most 1.3, and the radii are large enough that every
//!   pair of rounded vertices is at least `4 * sigma` apart.
//! * `Rectilinear`: an axis-aligned rectangle (4 vertices), L shape (6) or
//!   T shape (8) with integer corners and every edge at least
//!   `ceil(4 * sigma)` long, in one of four rotations.
//!
//! All vertices keep a margin of `ceil(3 * sigma)` pixels from the border.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heatmap::{render_gaussian_target, GaussianSpec, Heatmap, Keypoint};
use crate::polygonize::{Point, Polygon};
use crate::raster::{rasterize, Mask};

const MAX_ATTEMPTS: usize = 64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    #[default]
    Convex,
    Rectilinear,
}

impl std::str::FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "convex" => Ok(ShapeKind::Convex),
            "rectilinear" => Ok(ShapeKind::Rectilinear),
            other => Err(Error::Config(format!("unknown shape kind '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    /// `(height, width)` of every sample.
    pub dims: (usize, usize),
    /// Inclusive vertex count range.
    pub n_vertices: (usize, usize),
    pub shape_kind: ShapeKind,
    /// Half-width of the uniform noise added to the target heatmap.
    pub noise_amplitude: f64,
    pub gaussian: GaussianSpec,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dims: (128, 128),
            n_vertices: (5, 12),
            shape_kind: ShapeKind::Convex,
            noise_amplitude: 0.0,
            gaussian: GaussianSpec::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        self.gaussian.validate()?;
        let (lo, hi) = self.n_vertices;
        if lo < 3 || lo > hi {
            return Err(Error::Config(format!(
                "vertex range must satisfy 3 <= min <= max, got [{lo}, {hi}]"
            )));
        }
        if !(self.noise_amplitude >= 0.0 && self.noise_amplitude < 0.5) {
            return Err(Error::Config(format!(
                "noise amplitude must lie in [0, 0.5), got {}",
                self.noise_amplitude
            )));
        }
        let need = 2 * self.margin() + self.min_separation().ceil() as usize + 1;
        if self.dims.0 < need || self.dims.1 < need {
            return Err(Error::Config(format!(
                "grid {}x{} cannot hold a shape with a {}-pixel margin",
                self.dims.0,
                self.dims.1,
                self.margin()
            )));
        }
        Ok(())
    }

    /// Border margin in pixels: `ceil(3 * sigma)`.
    pub fn margin(&self) -> usize {
        (3.0 * self.gaussian.sigma).ceil() as usize
    }

    /// Minimum distance between keypoints: `4 * sigma`.
    pub fn min_separation(&self) -> f64 {
        4.0 * self.gaussian.sigma
    }
}

/// One generated building with all derived ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSample {
    pub index: u64,
    pub polygon: Polygon,
    pub keypoints: Vec<Keypoint>,
    pub truth_mask: Mask,
    pub target_heatmap: Heatmap,
    pub noisy_heatmap: Heatmap,
}

fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&index.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Generate sample `index` of the corpus described by `cfg`.
pub fn generate(cfg: &SynthConfig, index: u64) -> Result<SynthSample> {
    cfg.validate()?;
    let mut rng = sample_rng(cfg.seed, index);

    let mut found = None;
    for _ in 0..MAX_ATTEMPTS {
        let vertices = match cfg.shape_kind {
            ShapeKind::Convex => convex_vertices(cfg, &mut rng)?,
            ShapeKind::Rectilinear => rectilinear_vertices(cfg, &mut rng)?,
        };
        let keypoints = round_vertices(&vertices);
        if keypoints.len() == vertices.len()
            && well_separated(&keypoints, cfg.min_separation())
            && within_margin(&keypoints, cfg)
        {
            found = Some((vertices, keypoints));
            break;
        }
    }
    let (vertices, keypoints) = found.ok_or_else(|| {
        Error::Generation(format!(
            "no shape with {}-pixel keypoint separation after {MAX_ATTEMPTS} attempts",
            cfg.min_separation()
        ))
    })?;

    let polygon = Polygon::new(vertices)?;
    let truth_mask = rasterize(&polygon, cfg.dims)?.mask;
    let target_heatmap = render_gaussian_target(&keypoints, cfg.dims, &cfg.gaussian)?;
    let noisy_heatmap = if cfg.noise_amplitude > 0.0 {
        let a = cfg.noise_amplitude;
        let noisy = target_heatmap
            .grid()
            .map(|&v| (v + rng.random_range(-a..=a)).clamp(0.0, 1.0));
        Heatmap::from_grid(noisy)?
    } else {
        target_heatmap.clone()
    };

    Ok(SynthSample {
        index,
        polygon,
        keypoints,
        truth_mask,
        target_heatmap,
        noisy_heatmap,
    })
}

fn round_vertices(vertices: &[Point]) -> Vec<Keypoint> {
    let mut out: Vec<Keypoint> = Vec::with_capacity(vertices.len());
    for p in vertices {
        let k = Keypoint::new(p.y.round().max(0.0) as usize, p.x.round().max(0.0) as usize);
        if !out.iter().any(|q| q.location() == k.location()) {
            out.push(k);
        }
    }
    out
}

fn well_separated(keypoints: &[Keypoint], min_sep: f64) -> bool {
    let min2 = min_sep * min_sep;
    keypoints.iter().enumerate().all(|(i, a)| {
        keypoints[i + 1..].iter().all(|b| {
            let dr = a.row.abs_diff(b.row) as f64;
            let dc = a.col.abs_diff(b.col) as f64;
            dr * dr + dc * dc >= min2
        })
    })
}

fn within_margin(keypoints: &[Keypoint], cfg: &SynthConfig) -> bool {
    let m = cfg.margin();
    let (h, w) = cfg.dims;
    keypoints
        .iter()
        .all(|k| k.row >= m && k.col >= m && k.row + m < h && k.col + m < w)
}

fn convex_vertices(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Point>> {
    let (h, w) = cfg.dims;
    let m = cfg.margin() as f64;
    let n = rng.random_range(cfg.n_vertices.0..=cfg.n_vertices.1);

    let factors: Vec<f64> = (0..n).map(|_| rng.random_range(0.8..=1.2)).collect();
    let scale = std::f64::consts::TAU / factors.iter().sum::<f64>();
    let gaps: Vec<f64> = factors.iter().map(|f| f * scale).collect();
    let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);

    // one pixel of slack per endpoint for rounding
    let needed = (cfg.min_separation() + std::f64::consts::SQRT_2) / (2.0 * (min_gap / 2.0).sin());
    let rx_max = (w as f64 - 1.0) / 2.0 - m;
    let ry_max = (h as f64 - 1.0) / 2.0 - m;
    if needed > rx_max.min(ry_max) {
        return Err(Error::Generation(format!(
            "{n} vertices need radius {needed:.1} but only {:.1} fits",
            rx_max.min(ry_max)
        )));
    }
    let lo = needed.max(0.45 * rx_max.min(ry_max));
    let rx = rng.random_range(lo..=rx_max);
    let ry_lo = lo.max(rx / 1.3).min(ry_max);
    let ry = rng.random_range(ry_lo..=ry_max.min(rx * 1.3).max(ry_lo));

    let cx = rng.random_range(m + rx..=w as f64 - 1.0 - m - rx);
    let cy = rng.random_range(m + ry..=h as f64 - 1.0 - m - ry);
    let mut theta = rng.random_range(0.0..std::f64::consts::TAU);

    let mut out = Vec::with_capacity(n);
    for gap in gaps {
        out.push(Point::new(cx + rx * theta.cos(), cy + ry * theta.sin()));
        theta += gap;
    }
    Ok(out)
}

fn rectilinear_vertices(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Point>> {
    let (h, w) = cfg.dims;
    let m = cfg.margin() as i64;
    let s = cfg.min_separation().ceil() as i64;
    let (lo, hi) = cfg.n_vertices;
    let kinds: Vec<usize> = [4usize, 6, 8].into_iter().filter(|k| (lo..=hi).contains(k)).collect();
    if kinds.is_empty() {
        return Err(Error::Generation(format!(
            "rectilinear shapes have 4, 6 or 8 vertices; range [{lo}, {hi}] allows none"
        )));
    }
    let nv = kinds[rng.random_range(0..kinds.len())];

    let avail_w = w as i64 - 1 - 2 * m;
    let avail_h = h as i64 - 1 - 2 * m;
    let min_side = match nv {
        4 => s,
        6 => 2 * s,
        _ => 3 * s,
    };
    if avail_w.min(avail_h) < min_side {
        return Err(Error::Generation(format!(
            "grid too small for a {nv}-vertex rectilinear shape"
        )));
    }
    let side_lo = min_side.max(avail_w.min(avail_h) / 3);
    let bw = rng.random_range(side_lo..=avail_w);
    let bh = rng.random_range(side_lo..=avail_h);

    // local coordinates inside [0, bw] x [0, bh]
    let local: Vec<(i64, i64)> = match nv {
        4 => vec![(0, 0), (bw, 0), (bw, bh), (0, bh)],
        6 => {
            let nw = rng.random_range(s..=bw - s);
            let nh = rng.random_range(s..=bh - s);
            // notch cut from the top-right corner
            vec![(0, 0), (bw - nw, 0), (bw - nw, nh), (bw, nh), (bw, bh), (0, bh)]
        }
        _ => {
            // bar along the top, stem hanging down
            let bar = rng.random_range(s..=bh - s);
            let stem_w = rng.random_range(s..=bw - 2 * s);
            let left = rng.random_range(s..=bw - s - stem_w);
            vec![
                (0, 0),
                (bw, 0),
                (bw, bar),
                (left + stem_w, bar),
                (left + stem_w, bh),
                (left, bh),
                (left, bar),
                (0, bar),
            ]
        }
    };

    let rotation = rng.random_range(0..4u8);
    let (ew, eh) = if rotation % 2 == 0 { (bw, bh) } else { (bh, bw) };
    if ew > avail_w || eh > avail_h {
        // rotated shape would not fit: fall back to the unrotated one
        return place(&local, 0, bw, bh, m, avail_w, avail_h, rng);
    }
    place(&local, rotation, bw, bh, m, avail_w, avail_h, rng)
}

#[allow(clippy::too_many_arguments)]
fn place(
    local: &[(i64, i64)],
    rotation: u8,
    bw: i64,
    bh: i64,
    m: i64,
    avail_w: i64,
    avail_h: i64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Point>> {
    let rotate = |(x, y): (i64, i64)| match rotation {
        0 => (x, y),
        1 => (bh - y, x),
        2 => (bw - x, bh - y),
        _ => (y, bw - x),
    };
    let (ew, eh) = if rotation.is_multiple_of(2) { (bw, bh) } else { (bh, bw) };
    let ox = m + rng.random_range(0..=avail_w - ew);
    let oy = m + rng.random_range(0..=avail_h - eh);
    Ok(local
        .iter()
        .map(|&p| {
            let (x, y) = rotate(p);
            Point::new((ox + x) as f64, (oy + y) as f64)
        })
        .collect())
}
