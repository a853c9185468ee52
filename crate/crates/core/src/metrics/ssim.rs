use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Parameters of the windowed structural similarity index.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsimConfig {
    /// Side of the square Gaussian window (odd).
    pub window: usize,
    /// Standard deviation of the Gaussian window weights.
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range of the inputs.
    pub dynamic_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window.is_multiple_of(2) {
            return Err(Error::Config(format!("SSIM window must be odd, got {}", self.window)));
        }
        if !(self.sigma > 0.0 && self.dynamic_range > 0.0 && self.k1 > 0.0 && self.k2 > 0.0) {
            return Err(Error::Config("SSIM sigma, constants and range must be positive".into()));
        }
        Ok(())
    }

    fn weights(&self) -> Vec<f64> {
        let half = (self.window / 2) as f64;
        let raw: Vec<f64> = (0..self.window)
            .map(|i| {
                let d = i as f64 - half;
                (-d * d / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / total).collect()
    }
}

/// Separable weighted filter evaluated only where the window fits ("valid").
fn filter_valid(src: &[f64], h: usize, w: usize, kernel: &[f64]) -> Vec<f64> {
    let n = kernel.len();
    let (oh, ow) = (h + 1 - n, w + 1 - n);
    let mut horiz = vec![0.0; h * ow];
    for r in 0..h {
        let row = &src[r * w..(r + 1) * w];
        for c in 0..ow {
            horiz[r * ow + c] = kernel.iter().zip(&row[c..c + n]).map(|(k, v)| k * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| k * horiz[(r + i) * ow + c])
                .sum();
        }
    }
    out
}

/// Mean SSIM over every position where the window fits inside both grids.
pub fn ssim(a: &Grid<f64>, b: &Grid<f64>, cfg: &SsimConfig) -> Result<f64> {
    cfg.validate()?;
    a.ensure_same_dims(b)?;
    let (h, w) = a.dims();
    if h < cfg.window || w < cfg.window {
        return Err(Error::Config(format!(
            "grid {h}x{w} is smaller than the {0}x{0} SSIM window",
            cfg.window
        )));
    }

    let kernel = cfg.weights();
    let x = a.values();
    let y = b.values();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();

    let mu_x = filter_valid(x, h, w, &kernel);
    let mu_y = filter_valid(y, h, w, &kernel);
    let e_xx = filter_valid(&xx, h, w, &kernel);
    let e_yy = filter_valid(&yy, h, w, &kernel);
    let e_xy = filter_valid(&xy, h, w, &kernel);

    let c1 = (cfg.k1 * cfg.dynamic_range).powi(2);
    let c2 = (cfg.k2 * cfg.dynamic_range).powi(2);
    let n = mu_x.len();
    let mut total = 0.0;
    for i in 0..n {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let var_x = e_xx[i] - mx * mx;
        let var_y = e_yy[i] - my * my;
        let cov = e_xy[i] - mx * my;
        let num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
        let den = (mx * mx + my * my + c1) * (var_x + var_y + c2);
        total += num / den;
    }
    Ok(total / n as f64)
}
