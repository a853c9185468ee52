//! Keypoint heatmaps: Gaussian target rendering, the penalty-reduced focal
//! loss with its analytic gradient, and thresholded local-maximum peak
//! extraction.

mod focal;
mod peaks;
mod target;

pub use focal::{focal_loss, focal_loss_gradient, FocalLossConfig};
pub use peaks::{extract_peaks, PeakConfig};
pub use target::{render_gaussian_target, GaussianSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Dense per-pixel score grid with every value in `[0, 1]`.
///
/// Used both for network predictions and for rendered Gaussian targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap(Grid<f64>);

impl Heatmap {
    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Ok(Self(Grid::filled(height, width, 0.0)?))
    }

    pub fn from_vec(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        Self::from_grid(Grid::from_vec(height, width, values)?)
    }

    pub fn from_grid(grid: Grid<f64>) -> Result<Self> {
        if let Some((i, v)) = grid
            .values()
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::Value(format!(
                "heatmap value {v} at (row={}, col={}) is outside [0, 1]",
                i / grid.width(),
                i % grid.width()
            )));
        }
        Ok(Self(grid))
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.0.height()
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.0.width()
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        *self.0.get(row, col)
    }

    pub fn values(&self) -> &[f64] {
        self.0.values()
    }

    pub fn grid(&self) -> &Grid<f64> {
        &self.0
    }

    pub fn into_grid(self) -> Grid<f64> {
        self.0
    }
}

/// An integer pixel location with a confidence score.
///
/// Ground-truth keypoints carry score 1.0; extracted peaks carry the
/// heatmap value at the peak.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub row: usize,
    pub col: usize,
    #[serde(default = "unit_score")]
    pub score: f64,
}

fn unit_score() -> f64 {
    1.0
}

impl Keypoint {
    pub fn new(row: usize, col: usize) -> Self {
        Self {
            row,
            col,
            score: 1.0,
        }
    }

    pub fn with_score(row: usize, col: usize, score: f64) -> Self {
        Self { row, col, score }
    }

    #[inline]
    pub fn location(&self) -> (usize, usize) {
        (self.row, self.col)
    }

    pub(crate) fn check_bounds(&self, dims: (usize, usize)) -> Result<()> {
        if self.row >= dims.0 || self.col >= dims.1 {
            return Err(Error::OutOfBounds {
                row: self.row,
                col: self.col,
                height: dims.0,
                width: dims.1,
            });
        }
        Ok(())
    }
}
