//! Pipeline configuration: defaults, overridden by a `key = value` file,
//! overridden in turn by command-line flags.

use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::heatmap::{FocalLossConfig, GaussianSpec, PeakConfig};
use crate::io::ReportFormat;
use crate::metrics::{BoundaryMatchConfig, EvalOptions, SsimConfig, SsimOperand};

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub peak: PeakConfig,
    pub gaussian: GaussianSpec,
    pub focal: FocalLossConfig,
    pub boundary_match: BoundaryMatchConfig,
    pub ssim_operand: SsimOperand,
    pub output_dir: PathBuf,
    pub report_format: ReportFormat,
    /// Report metrics as percentages instead of fractions.
    pub percent: bool,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            peak: PeakConfig::default(),
            gaussian: GaussianSpec::default(),
            focal: FocalLossConfig::default(),
            boundary_match: BoundaryMatchConfig::default(),
            ssim_operand: SsimOperand::default(),
            output_dir: PathBuf::from("out"),
            report_format: ReportFormat::default(),
            percent: false,
            seed: 0,
        }
    }
}

/// A partial configuration; `None` fields leave the base value untouched.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigOverrides {
    pub tau: Option<f64>,
    pub window: Option<usize>,
    pub sigma: Option<f64>,
    pub truncation_radius: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub n_objects: Option<usize>,
    pub epsilon: Option<f64>,
    pub boundary_tolerance: Option<f64>,
    pub ssim_operand: Option<SsimOperand>,
    pub output_dir: Option<PathBuf>,
    pub report_format: Option<ReportFormat>,
    pub percent: Option<bool>,
    pub seed: Option<u64>,
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::parse("config", line, format!("bad value '{value}' for '{key}'")))
}

impl ConfigOverrides {
    /// Parse `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = ConfigOverrides::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::parse("config", line, "expected 'key = value'"))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "tau" => out.tau = Some(parse_value(key, value, line)?),
                "window" => out.window = Some(parse_value(key, value, line)?),
                "sigma" => out.sigma = Some(parse_value(key, value, line)?),
                "truncation_radius" => out.truncation_radius = Some(parse_value(key, value, line)?),
                "alpha" => out.alpha = Some(parse_value(key, value, line)?),
                "beta" => out.beta = Some(parse_value(key, value, line)?),
                "n_objects" => out.n_objects = Some(parse_value(key, value, line)?),
                "epsilon" => out.epsilon = Some(parse_value(key, value, line)?),
                "boundary_tolerance" => out.boundary_tolerance = Some(parse_value(key, value, line)?),
                "ssim_operand" => {
                    out.ssim_operand = Some(match value {
                        "boundary" => SsimOperand::Boundary,
                        "mask" => SsimOperand::Mask,
                        _ => return Err(Error::parse("config", line, format!("bad ssim_operand '{value}'"))),
                    })
                }
                "output_dir" => out.output_dir = Some(PathBuf::from(value)),
                "report_format" => out.report_format = Some(parse_value(key, value, line)?),
                "percent" => out.percent = Some(parse_value(key, value, line)?),
                "seed" => out.seed = Some(parse_value(key, value, line)?),
                _ => return Err(Error::parse("config", line, format!("unknown key '{key}'"))),
            }
        }
        Ok(out)
    }

    /// Field-wise merge where `other` wins.
    pub fn merged(&self, other: &ConfigOverrides) -> ConfigOverrides {
        ConfigOverrides {
            tau: other.tau.or(self.tau),
            window: other.window.or(self.window),
            sigma: other.sigma.or(self.sigma),
            truncation_radius: other.truncation_radius.or(self.truncation_radius),
            alpha: other.alpha.or(self.alpha),
            beta: other.beta.or(self.beta),
            n_objects: other.n_objects.or(self.n_objects),
            epsilon: other.epsilon.or(self.epsilon),
            boundary_tolerance: other.boundary_tolerance.or(self.boundary_tolerance),
            ssim_operand: other.ssim_operand.or(self.ssim_operand),
            output_dir: other.output_dir.clone().or_else(|| self.output_dir.clone()),
            report_format: other.report_format.or(self.report_format),
            percent: other.percent.or(self.percent),
            seed: other.seed.or(self.seed),
        }
    }

    pub fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(v) = self.tau {
            cfg.peak.threshold = v;
        }
        if let Some(v) = self.window {
            cfg.peak.window = v;
        }
        if let Some(v) = self.sigma {
            let radius = self.truncation_radius;
            cfg.gaussian = GaussianSpec::new(v);
            if let Some(r) = radius {
                cfg.gaussian.truncation_radius = r;
            }
        } else if let Some(r) = self.truncation_radius {
            cfg.gaussian.truncation_radius = r;
        }
        if let Some(v) = self.alpha {
            cfg.focal.alpha = v;
        }
        if let Some(v) = self.beta {
            cfg.focal.beta = v;
        }
        if let Some(v) = self.n_objects {
            cfg.focal.n_objects = v;
        }
        if let Some(v) = self.epsilon {
            cfg.focal.epsilon = v;
        }
        if let Some(v) = self.boundary_tolerance {
            cfg.boundary_match.tolerance = v;
        }
        if let Some(v) = self.ssim_operand {
            cfg.ssim_operand = v;
        }
        if let Some(v) = &self.output_dir {
            cfg.output_dir = v.clone();
        }
        if let Some(v) = self.report_format {
            cfg.report_format = v;
        }
        if let Some(v) = self.percent {
            cfg.percent = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
    }
}

impl PipelineConfig {
    /// Defaults, then the config file (if any), then the flags.
    pub fn resolve(file: Option<&ConfigOverrides>, flags: &ConfigOverrides) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        file.cloned().unwrap_or_default().merged(flags).apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.peak.validate()?;
        self.gaussian.validate()?;
        self.focal.validate()?;
        self.boundary_match.validate()
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            boundary_match: self.boundary_match,
            ssim: SsimConfig::default(),
            ssim_operand: self.ssim_operand,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_reference_values() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.peak.threshold, 0.1);
        assert_eq!(cfg.peak.window, 3);
        assert_eq!(cfg.focal.alpha, 2.0);
        assert_eq!(cfg.focal.beta, 4.0);
        assert_eq!(cfg.gaussian.sigma, 2.0);
        assert_eq!(cfg.gaussian.truncation_radius, 6.0);
    }

    #[test]
    fn file_then_flags_precedence() {
        let file = ConfigOverrides::parse(
            "# comment\n tau = 0.2\nsigma=1.5 # inline\n\nboundary_tolerance = 0\nreport_format = json\n",
        )
        .unwrap();
        let flags = ConfigOverrides {
            tau: Some(0.3),
            ..Default::default()
        };
        let cfg = PipelineConfig::resolve(Some(&file), &flags).unwrap();
        assert_eq!(cfg.peak.threshold, 0.3);
        assert_eq!(cfg.gaussian.sigma, 1.5);
        assert_eq!(cfg.gaussian.truncation_radius, 5.0);
        assert_eq!(cfg.boundary_match.tolerance, 0.0);
        assert_eq!(cfg.report_format, ReportFormat::Json);
    }

    #[test]
    fn flag_sigma_keeps_file_radius() {
        let file = ConfigOverrides::parse("truncation_radius = 2").unwrap();
        let flags = ConfigOverrides {
            sigma: Some(3.0),
            ..Default::default()
        };
        let cfg = PipelineConfig::resolve(Some(&file), &flags).unwrap();
        assert_eq!(cfg.gaussian.sigma, 3.0);
        assert_eq!(cfg.gaussian.truncation_radius, 2.0);
        let cfg = PipelineConfig::resolve(None, &flags).unwrap();
        assert_eq!(cfg.gaussian.truncation_radius, 9.0);
    }

    #[test]
    fn bad_config_lines() {
        assert!(ConfigOverrides::parse("tau 0.2").is_err());
        assert!(ConfigOverrides::parse("colour = red").is_err());
        let err = ConfigOverrides::parse("\nwindow = three").unwrap_err();
        assert!(err.to_string().contains("line 2"));
        let bad = ConfigOverrides {
            window: Some(4),
            ..Default::default()
        };
        assert!(PipelineConfig::resolve(None, &bad).is_err());
    }
}
