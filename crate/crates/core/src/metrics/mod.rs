//! Mask-level (F1, IoU) and boundary-level (SSIM, F-measure) accuracy.

mod boundary;
mod ssim;

pub use boundary::{
    boundary_fmeasure, boundary_match, squared_distance_transform, BoundaryMatch, BoundaryMatchConfig,
};
pub use ssim::{ssim, SsimConfig};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::raster::{extract_boundary, BoundaryMap, Mask};

/// Pixel confusion counts between a predicted and a reference mask.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn of(pred: &Mask, truth: &Mask) -> Result<Self> {
        truth.grid().ensure_same_dims(pred.grid())?;
        let mut out = Confusion::default();
        for (&p, &t) in pred.values().iter().zip(truth.values()) {
            match (p != 0, t != 0) {
                (true, true) => out.tp += 1,
                (true, false) => out.fp += 1,
                (false, true) => out.fn_ += 1,
                (false, false) => {}
            }
        }
        Ok(out)
    }

    pub fn f1(&self) -> f64 {
        let den = 2 * self.tp + self.fp + self.fn_;
        if den == 0 {
            1.0
        } else {
            (2 * self.tp) as f64 / den as f64
        }
    }

    pub fn iou(&self) -> f64 {
        let union = self.tp + self.fp + self.fn_;
        if union == 0 {
            1.0
        } else {
            self.tp as f64 / union as f64
        }
    }
}

/// Pixel F1-score; 1.0 when both masks are empty.
pub fn mask_f1(pred: &Mask, truth: &Mask) -> Result<f64> {
    Ok(Confusion::of(pred, truth)?.f1())
}

/// Intersection over union; 1.0 when both masks are empty.
pub fn mask_iou(pred: &Mask, truth: &Mask) -> Result<f64> {
    Ok(Confusion::of(pred, truth)?.iou())
}

/// Mean SSIM between two boundary maps with the standard 11x11, sigma 1.5
/// Gaussian window.
pub fn boundary_ssim(pred: &BoundaryMap, truth: &BoundaryMap) -> Result<f64> {
    ssim(&pred.as_mask().to_f64(), &truth.as_mask().to_f64(), &SsimConfig::default())
}

/// Which grids SSIM is computed on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SsimOperand {
    #[default]
    Boundary,
    Mask,
}

/// Options for [`evaluate_patch_with`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EvalOptions {
    pub boundary_match: BoundaryMatchConfig,
    pub ssim: SsimConfig,
    pub ssim_operand: SsimOperand,
}

/// Per-patch or aggregated accuracy record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub f1: f64,
    pub iou: f64,
    pub ssim: f64,
    pub boundary_f: f64,
    pub n_patches: usize,
}

impl EvalReport {
    /// Patch-weighted mean of several reports. Returns `None` for an empty slice.
    pub fn mean(reports: &[EvalReport]) -> Option<EvalReport> {
        let n: usize = reports.iter().map(|r| r.n_patches).sum();
        if n == 0 {
            return None;
        }
        let avg = |f: fn(&EvalReport) -> f64| {
            reports.iter().map(|r| f(r) * r.n_patches as f64).sum::<f64>() / n as f64
        };
        Some(EvalReport {
            f1: avg(|r| r.f1),
            iou: avg(|r| r.iou),
            ssim: avg(|r| r.ssim),
            boundary_f: avg(|r| r.boundary_f),
            n_patches: n,
        })
    }
}

/// All four measures for one patch, with SSIM on boundary maps.
pub fn evaluate_patch(pred: &Mask, truth: &Mask, cfg: &BoundaryMatchConfig) -> Result<EvalReport> {
    evaluate_patch_with(
        pred,
        truth,
        &EvalOptions {
            boundary_match: *cfg,
            ..Default::default()
        },
    )
}

pub fn evaluate_patch_with(pred: &Mask, truth: &Mask, opts: &EvalOptions) -> Result<EvalReport> {
    let confusion = Confusion::of(pred, truth)?;
    let pb = extract_boundary(pred);
    let tb = extract_boundary(truth);
    let ssim_value = match opts.ssim_operand {
        SsimOperand::Boundary => ssim(&pb.as_mask().to_f64(), &tb.as_mask().to_f64(), &opts.ssim)?,
        SsimOperand::Mask => ssim(&pred.to_f64(), &truth.to_f64(), &opts.ssim)?,
    };
    Ok(EvalReport {
        f1: confusion.f1(),
        iou: confusion.iou(),
        ssim: ssim_value,
        boundary_f: boundary_fmeasure(&pb, &tb, &opts.boundary_match)?,
        n_patches: 1,
    })
}
