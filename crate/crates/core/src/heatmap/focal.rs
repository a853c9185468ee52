use serde::{Deserialize, Serialize};

use super::Heatmap;
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Parameters of the penalty-reduced pixelwise focal loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FocalLossConfig {
    /// Focusing exponent applied to the prediction error.
    pub alpha: f64,
    /// Exponent of the penalty reduction `(1 - target)` around keypoints.
    pub beta: f64,
    /// Normalizer: number of objects in the patch.
    pub n_objects: usize,
    /// Logarithm arguments are clamped to `[epsilon, 1 - epsilon]`.
    pub epsilon: f64,
}

impl Default for FocalLossConfig {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            beta: 4.0,
            n_objects: 1,
            epsilon: 1e-7,
        }
    }
}

impl FocalLossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::Config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::Config(format!("beta must be >= 0, got {}", self.beta)));
        }
        if self.n_objects == 0 {
            return Err(Error::Config("n_objects must be >= 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::Config(format!(
                "epsilon must lie in (0, 0.5), got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    #[inline]
    fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.epsilon, 1.0 - self.epsilon)
    }

    #[inline]
    fn is_clamped(&self, p: f64) -> bool {
        p < self.epsilon || p > 1.0 - self.epsilon
    }
}

/// Pixelwise focal loss of `prediction` against a Gaussian `target`.
///
/// Pixels where the target is exactly 1.0 are positives and contribute
/// `(1-p)^alpha * ln(p)`; every other pixel contributes
/// `(1-g)^beta * p^alpha * ln(1-p)`. The negated sum is divided by
/// `n_objects`. Only the logarithm arguments are clamped, so a prediction
/// equal to a hard 0/1 target scores exactly zero.
pub fn focal_loss(prediction: &Heatmap, target: &Heatmap, cfg: &FocalLossConfig) -> Result<f64> {
    cfg.validate()?;
    target.grid().ensure_same_dims(prediction.grid())?;

    let mut sum = 0.0;
    for (&p, &g) in prediction.values().iter().zip(target.values()) {
        sum += pixel_term(p, g, cfg);
    }
    // + 0.0 normalizes -0.0
    Ok(-sum / cfg.n_objects as f64 + 0.0)
}

#[inline]
fn pixel_term(p: f64, g: f64, cfg: &FocalLossConfig) -> f64 {
    if g == 1.0 {
        (1.0 - p).powf(cfg.alpha) * cfg.clamp(p).ln()
    } else {
        (1.0 - g).powf(cfg.beta) * p.powf(cfg.alpha) * (1.0 - cfg.clamp(p)).ln()
    }
}

/// Analytic derivative of [`focal_loss`] with respect to each prediction
/// pixel. Pixels whose prediction falls outside `[epsilon, 1 - epsilon]`
/// get a zero gradient.
pub fn focal_loss_gradient(
    prediction: &Heatmap,
    target: &Heatmap,
    cfg: &FocalLossConfig,
) -> Result<Grid<f64>> {
    cfg.validate()?;
    target.grid().ensure_same_dims(prediction.grid())?;

    let (h, w) = prediction.dims();
    let inv_n = 1.0 / cfg.n_objects as f64;
    let a = cfg.alpha;
    let values = prediction
        .values()
        .iter()
        .zip(target.values())
        .map(|(&p, &g)| {
            if cfg.is_clamped(p) {
                return 0.0;
            }
            let d = if g == 1.0 {
                // d/dp (1-p)^a ln p
                let q = 1.0 - p;
                let lead = if a == 0.0 { 0.0 } else { -a * q.powf(a - 1.0) * p.ln() };
                lead + q.powf(a) / p
            } else {
                // d/dp (1-g)^b p^a ln(1-p)
                let q = 1.0 - p;
                let lead = if a == 0.0 { 0.0 } else { a * p.powf(a - 1.0) * q.ln() };
                (1.0 - g).powf(cfg.beta) * (lead - p.powf(a) / q)
            };
            -d * inv_n + 0.0
        })
        .collect();
    Grid::from_vec(h, w, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hm(h: usize, w: usize, v: Vec<f64>) -> Heatmap {
        Heatmap::from_vec(h, w, v).unwrap()
    }

    fn central_difference(p: f64, g: f64, cfg: &FocalLossConfig, step: f64) -> f64 {
        let plus = focal_loss(&hm(1, 1, vec![p + step]), &hm(1, 1, vec![g]), cfg).unwrap();
        let minus = focal_loss(&hm(1, 1, vec![p - step]), &hm(1, 1, vec![g]), cfg).unwrap();
        (plus - minus) / (2.0 * step)
    }

    #[test]
    fn single_positive_half() {
        let loss = focal_loss(&hm(1, 1, vec![0.5]), &hm(1, 1, vec![1.0]), &FocalLossConfig::default()).unwrap();
        // 0.25 * ln 2
        assert!((loss - 0.173_286_795_139_986_3).abs() < 1e-12);
    }

    #[test]
    fn single_negative_half() {
        let loss = focal_loss(&hm(1, 1, vec![0.5]), &hm(1, 1, vec![0.5]), &FocalLossConfig::default()).unwrap();
        // 0.5^4 * 0.5^2 * ln 2
        assert!((loss - 0.010_830_424_696_249_14).abs() < 1e-12);
    }

    #[test]
    fn perfect_hard_prediction_is_zero() {
        let mut v = vec![0.0; 9];
        v[4] = 1.0;
        let g = hm(3, 3, v);
        let cfg = FocalLossConfig::default();
        assert_eq!(focal_loss(&g, &g, &cfg).unwrap(), 0.0);
        let grad = focal_loss_gradient(&g, &g, &cfg).unwrap();
        assert!(grad.values().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn extreme_predictions_stay_finite() {
        let cfg = FocalLossConfig::default();
        let p = hm(1, 2, vec![0.0, 1.0]);
        let g = hm(1, 2, vec![1.0, 0.0]);
        let loss = focal_loss(&p, &g, &cfg).unwrap();
        assert!(loss.is_finite() && loss > 0.0);
    }

    #[test]
    fn positive_gradient_matches_closed_form() {
        let cfg = FocalLossConfig::default();
        let grad = focal_loss_gradient(&hm(1, 1, vec![0.5]), &hm(1, 1, vec![1.0]), &cfg).unwrap();
        let fd = central_difference(0.5, 1.0, &cfg, 1e-5);
        let d = *grad.get(0, 0);
        assert!(((d - fd) / fd).abs() < 1e-6, "{d} vs {fd}");
        // -(-2 * 0.5 * ln 0.5 + 0.25 / 0.5)
        assert!((d - (-(std::f64::consts::LN_2) - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn gradient_zero_where_clamped() {
        let cfg = FocalLossConfig::default();
        let p = hm(1, 3, vec![1e-9, 1.0 - 1e-9, 0.3]);
        let g = hm(1, 3, vec![1.0, 0.2, 0.2]);
        let grad = focal_loss_gradient(&p, &g, &cfg).unwrap();
        assert_eq!(grad.values()[0], 0.0);
        assert_eq!(grad.values()[1], 0.0);
        assert!(grad.values()[2] != 0.0);
    }

    #[test]
    fn seeded_8x8_matches_central_differences() {
        use crate::heatmap::{render_gaussian_target, GaussianSpec, Keypoint};
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let kps = [Keypoint::new(1, 2), Keypoint::new(5, 6), Keypoint::new(6, 1)];
        let g = render_gaussian_target(&kps, (8, 8), &GaussianSpec::new(1.5)).unwrap();
        let p = hm(8, 8, (0..64).map(|_| rng.random_range(0.01..0.99)).collect());
        let cfg = FocalLossConfig::default();
        let grad = focal_loss_gradient(&p, &g, &cfg).unwrap();
        let mut worst = 0.0f64;
        for i in 0..64 {
            // other pixels' terms cancel in the quotient
            let fd = central_difference(p.values()[i], g.values()[i], &cfg, 1e-5);
            worst = worst.max(((grad.values()[i] - fd) / fd).abs());
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn normalizer_divides() {
        let one = FocalLossConfig::default();
        let four = FocalLossConfig { n_objects: 4, ..one };
        let p = hm(1, 1, vec![0.3]);
        let g = hm(1, 1, vec![1.0]);
        let a = focal_loss(&p, &g, &one).unwrap();
        let b = focal_loss(&p, &g, &four).unwrap();
        assert!((a / 4.0 - b).abs() < 1e-15);
    }

    #[test]
    fn alpha_zero_gradient() {
        let cfg = FocalLossConfig { alpha: 0.0, beta: 0.0, ..Default::default() };
        for (p, g) in [(0.3, 1.0), (0.3, 0.1)] {
            let d = *focal_loss_gradient(&hm(1, 1, vec![p]), &hm(1, 1, vec![g]), &cfg)
                .unwrap()
                .get(0, 0);
            let fd = central_difference(p, g, &cfg, 1e-5);
            assert!(((d - fd) / fd).abs() < 1e-6);
        }
    }

    #[test]
    fn shape_mismatch() {
        let cfg = FocalLossConfig::default();
        let a = Heatmap::zeros(2, 2).unwrap();
        let b = Heatmap::zeros(2, 3).unwrap();
        assert!(matches!(focal_loss(&a, &b, &cfg), Err(Error::Shape { .. })));
        assert!(matches!(focal_loss_gradient(&a, &b, &cfg), Err(Error::Shape { .. })));
    }

    #[test]
    fn invalid_config() {
        let bad = FocalLossConfig { epsilon: 0.5, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = FocalLossConfig { n_objects: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
