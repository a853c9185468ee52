use serde::{Deserialize, Serialize};

use super::{Heatmap, Keypoint};
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Gaussian kernel used to render keypoint targets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    /// Standard deviation in pixels.
    pub sigma: f64,
    /// Contributions farther than this (Euclidean, pixels) are zero.
    pub truncation_radius: f64,
}

impl GaussianSpec {
    /// Kernel with the given sigma, truncated at `ceil(3 * sigma)`.
    pub fn new(sigma: f64) -> Self {
        Self {
            sigma,
            truncation_radius: (3.0 * sigma).ceil().max(1.0),
        }
    }

    pub fn with_truncation_radius(mut self, radius: f64) -> Self {
        self.truncation_radius = radius;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Config(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.truncation_radius.is_finite() && self.truncation_radius >= 1.0) {
            return Err(Error::Config(format!(
                "truncation radius must be >= 1, got {}",
                self.truncation_radius
            )));
        }
        Ok(())
    }
}

impl Default for GaussianSpec {
    fn default() -> Self {
        Self::new(2.0)
    }
}

/// Render a Gaussian target heatmap with a unit-height kernel centered on each
/// keypoint. Overlapping kernels combine by element-wise maximum, so the
/// value at every keypoint is exactly 1.0.
pub fn render_gaussian_target(
    keypoints: &[Keypoint],
    dims: (usize, usize),
    spec: &GaussianSpec,
) -> Result<Heatmap> {
    spec.validate()?;
    let mut grid = Grid::filled(dims.0, dims.1, 0.0f64)?;
    for k in keypoints {
        k.check_bounds(dims)?;
    }

    let two_var = 2.0 * spec.sigma * spec.sigma;
    let r2_max = spec.truncation_radius * spec.truncation_radius;
    let reach = spec.truncation_radius.floor() as usize;

    for k in keypoints {
        let r0 = k.row.saturating_sub(reach);
        let r1 = (k.row + reach).min(dims.0 - 1);
        let c0 = k.col.saturating_sub(reach);
        let c1 = (k.col + reach).min(dims.1 - 1);
        for r in r0..=r1 {
            let dr = r.abs_diff(k.row) as f64;
            for c in c0..=c1 {
                let dc = c.abs_diff(k.col) as f64;
                let d2 = dr * dr + dc * dc;
                if d2 > r2_max {
                    continue;
                }
                let v = (-d2 / two_var).exp();
                let cell = grid.get_mut(r, c);
                if v > *cell {
                    *cell = v;
                }
            }
        }
    }
    Heatmap::from_grid(grid)
}
