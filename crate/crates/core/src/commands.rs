//! File-level commands behind the `keypoly` binary.
//!
//! The detector network that would normally produce heatmaps is replaced
//! by heatmap files or the synthetic generator; [`run_pipeline`] is the
//! seam where model output would plug in.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::heatmap::{extract_peaks, focal_loss, focal_loss_gradient, render_gaussian_target, GaussianSpec, Heatmap, Keypoint, PeakConfig};
use crate::io::{self, ReportFormat, ReportRow, ReportTable};
use crate::metrics::{evaluate_patch_with, EvalOptions, EvalReport};
use crate::polygonize::{group_keypoints, GroupingTrace, Polygon};
use crate::raster::{extract_boundary, rasterize, Mask, Rasterized};
use crate::synth::{generate, SynthConfig, SynthSample};

/// Map `f` over `items` on up to `jobs` scoped threads, preserving order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if jobs <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    let f = &f;
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(f).collect::<Vec<R>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker thread panicked"))
            .collect()
    })
}

fn with_file<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_file(path))
}

pub fn cmd_render_target(keypoints: &Path, dims: (usize, usize), spec: &GaussianSpec, out: &Path) -> Result<Heatmap> {
    let kps = with_file(keypoints, io::read_to_string(keypoints).and_then(|t| io::parse_keypoints(&t)))?;
    let heatmap = render_gaussian_target(&kps, dims, spec)?;
    io::write_atomic(out, io::heatmap_to_hmap(&heatmap).as_bytes())?;
    Ok(heatmap)
}

pub fn cmd_detect_peaks(heatmap: &Path, cfg: &PeakConfig, out: &Path) -> Result<Vec<Keypoint>> {
    let h = with_file(heatmap, io::read_heatmap(heatmap))?;
    let peaks = extract_peaks(&h, cfg)?;
    io::write_atomic(out, io::keypoints_to_json(&peaks).as_bytes())?;
    Ok(peaks)
}

pub fn cmd_polygonize(keypoints: &Path, out: &Path) -> Result<(Polygon, GroupingTrace)> {
    let kps = with_file(keypoints, io::read_to_string(keypoints).and_then(|t| io::parse_keypoints(&t)))?;
    let (polygon, trace) = with_file(keypoints, group_keypoints(&kps))?;
    io::write_atomic(out, io::polygon_to_json(&polygon).as_bytes())?;
    Ok((polygon, trace))
}

/// Rasterize a polygon file. Degenerate polygons still write an empty mask;
/// the caller decides how to surface the flag.
pub fn cmd_rasterize(
    polygon: &Path,
    dims: (usize, usize),
    mask_out: &Path,
    boundary_out: Option<&Path>,
) -> Result<Rasterized> {
    let poly = with_file(polygon, io::read_to_string(polygon).and_then(|t| io::parse_polygon(&t)))?;
    let raster = rasterize(&poly, dims)?;
    write_mask(mask_out, &raster.mask)?;
    if let Some(path) = boundary_out {
        write_mask(path, extract_boundary(&raster.mask).as_mask())?;
    }
    Ok(raster)
}

/// Write a mask as PGM, or as HMAP when the extension is not `.pgm`.
pub fn write_mask(path: &Path, mask: &Mask) -> Result<()> {
    let text = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
        io::mask_to_pgm(mask)
    } else {
        io::mask_to_hmap(mask)
    };
    io::write_atomic(path, text.as_bytes())
}

/// Loss of `prediction` against `target`, optionally writing the gradient.
pub fn cmd_focal_loss(
    prediction: &Path,
    target: &Path,
    cfg: &PipelineConfig,
    gradient_out: Option<&Path>,
) -> Result<f64> {
    let p = with_file(prediction, io::read_heatmap(prediction))?;
    let g = with_file(target, io::read_heatmap(target))?;
    let loss = focal_loss(&p, &g, &cfg.focal)?;
    if let Some(path) = gradient_out {
        let grad = focal_loss_gradient(&p, &g, &cfg.focal)?;
        io::write_atomic(path, io::grid_to_hmap(&grad).as_bytes())?;
    }
    Ok(loss)
}

/// Everything produced from one heatmap.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineResult {
    pub peaks: Vec<Keypoint>,
    pub polygon: Polygon,
    pub trace: GroupingTrace,
    pub mask: Mask,
}

/// Peaks, then nearest-neighbor grouping, then rasterization.
pub fn run_pipeline(heatmap: &Heatmap, cfg: &PipelineConfig) -> Result<PipelineResult> {
    let peaks = extract_peaks(heatmap, &cfg.peak)?;
    let (polygon, trace) = group_keypoints(&peaks)?;
    let raster = rasterize(&polygon, heatmap.dims())?;
    if raster.degenerate {
        return Err(Error::Degenerate(format!(
            "{} keypoints are collinear; mask would be empty",
            peaks.len()
        )));
    }
    Ok(PipelineResult {
        peaks,
        polygon,
        trace,
        mask: raster.mask,
    })
}

/// Where pipeline heatmaps come from.
#[derive(Clone, Debug)]
pub enum PipelineInput {
    File(PathBuf),
    /// Every `*.hmap` file in the directory, by name.
    Dir(PathBuf),
    /// Noisy heatmaps of synthetic samples `start..start + count`.
    Synthetic { cfg: SynthConfig, start: u64, count: u64 },
}

#[derive(Clone, Debug)]
pub struct PipelineRequest {
    pub input: PipelineInput,
    /// Truth mask file (single input) or directory (batch input).
    pub truth: Option<PathBuf>,
    /// Report file to append rows to; defaults to `<output_dir>/report.<ext>`.
    pub report: Option<PathBuf>,
    pub jobs: usize,
}

#[derive(Debug, Default)]
pub struct PipelineSummary {
    pub processed: Vec<String>,
    pub failures: Vec<(String, Error)>,
    pub rows: Vec<ReportRow>,
    pub report_path: Option<PathBuf>,
}

impl PipelineSummary {
    pub fn exit_code(&self) -> i32 {
        self.failures.iter().map(|(_, e)| e.exit_code()).max().unwrap_or(0)
    }
}

struct PatchJob {
    stem: String,
    heatmap: Option<PathBuf>,
    sample: Option<SynthConfig>,
    index: u64,
    truth: Option<PathBuf>,
}

fn list_files(dir: &Path, exts: &[&str]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in with_file(dir, std::fs::read_dir(dir).map_err(Error::from))? {
        let path = entry?.path();
        if path.is_file()
            && path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| exts.iter().any(|x| e.eq_ignore_ascii_case(x)))
        {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn stem_of(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn find_truth(dir: &Path, stem: &str) -> Option<PathBuf> {
    ["pgm", "hmap"]
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.is_file())
}

pub fn sample_stem(index: u64) -> String {
    format!("sample_{index:05}")
}

fn report_path(cfg: &PipelineConfig, explicit: Option<&Path>) -> PathBuf {
    explicit.map(Path::to_path_buf).unwrap_or_else(|| {
        let ext = match cfg.report_format {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        };
        cfg.output_dir.join(format!("report.{ext}"))
    })
}

/// Append rows to a CSV or JSON report, creating it if needed.
pub fn append_report(path: &Path, rows: &[ReportRow], format: ReportFormat, percent: bool) -> Result<()> {
    let existing = if path.exists() {
        Some(io::read_to_string(path)?)
    } else {
        None
    };
    let text = match format {
        ReportFormat::Csv => {
            let mut text = existing.filter(|t| !t.trim().is_empty()).unwrap_or_else(|| {
                let mut header = io::CSV_HEADER.to_string();
                header.push('\n');
                header
            });
            for row in rows {
                text.push_str(&io::csv_row(row, percent));
                text.push('\n');
            }
            text
        }
        ReportFormat::Json => {
            let mut table: ReportTable = match existing {
                Some(t) => with_file(path, serde_json::from_str(&t).map_err(Error::from))?,
                None => ReportTable::default(),
            };
            // existing rows are already scaled and rounded; scale only the new ones
            let fresh = ReportTable {
                rows: rows.to_vec(),
                ..Default::default()
            };
            let fresh: ReportTable = serde_json::from_str(&fresh.to_json(percent))?;
            table.rows.extend(fresh.rows);
            table.to_json(false)
        }
    };
    io::write_atomic(path, text.as_bytes())
}

fn write_pipeline_outputs(out_dir: &Path, stem: &str, result: &PipelineResult) -> Result<()> {
    io::write_atomic(
        &out_dir.join("keypoints").join(format!("{stem}.json")),
        io::keypoints_to_json(&result.peaks).as_bytes(),
    )?;
    io::write_atomic(
        &out_dir.join("polygons").join(format!("{stem}.json")),
        io::polygon_to_json(&result.polygon).as_bytes(),
    )?;
    write_mask(&out_dir.join("masks").join(format!("{stem}.pgm")), &result.mask)
}

/// Run the heatmap-to-mask pipeline over one file, a directory, or a
/// synthetic range. Writes `keypoints/`, `polygons/` and `masks/` under the
/// output directory and, when truth masks are available, appends one
/// report row per patch.
///
/// A single-file run fails with the patch's error; batch runs record
/// failures in the summary and keep going.
pub fn cmd_pipeline(req: &PipelineRequest, cfg: &PipelineConfig) -> Result<PipelineSummary> {
    let single = matches!(req.input, PipelineInput::File(_));
    let jobs: Vec<PatchJob> = match &req.input {
        PipelineInput::File(path) => vec![PatchJob {
            stem: stem_of(path),
            heatmap: Some(path.clone()),
            sample: None,
            index: 0,
            truth: req.truth.clone(),
        }],
        PipelineInput::Dir(dir) => {
            let files = list_files(dir, &["hmap"])?;
            if files.is_empty() {
                return Err(Error::EmptyInput("no heatmaps found").in_file(dir));
            }
            files
                .into_iter()
                .map(|p| {
                    let stem = stem_of(&p);
                    let truth = req.truth.as_deref().and_then(|d| find_truth(d, &stem));
                    PatchJob {
                        stem,
                        heatmap: Some(p),
                        sample: None,
                        index: 0,
                        truth,
                    }
                })
                .collect()
        }
        PipelineInput::Synthetic { cfg: scfg, start, count } => {
            scfg.validate()?;
            (*start..start + count)
                .map(|i| PatchJob {
                    stem: sample_stem(i),
                    heatmap: None,
                    sample: Some(*scfg),
                    index: i,
                    truth: None,
                })
                .collect()
        }
    };

    let opts = cfg.eval_options();
    let outcomes = parallel_map(&jobs, req.jobs, |job| -> Result<Option<EvalReport>> {
        let (heatmap, truth) = match (&job.heatmap, &job.sample) {
            (Some(path), _) => {
                let h = with_file(path, io::read_heatmap(path))?;
                let t = match &job.truth {
                    Some(tp) => Some(with_file(tp, io::read_mask(tp))?),
                    None => None,
                };
                (h, t)
            }
            (None, Some(scfg)) => {
                let SynthSample {
                    noisy_heatmap,
                    truth_mask,
                    ..
                } = generate(scfg, job.index)?;
                (noisy_heatmap, Some(truth_mask))
            }
            (None, None) => unreachable!("job has neither file nor sample"),
        };
        let result = run_pipeline(&heatmap, cfg)?;
        write_pipeline_outputs(&cfg.output_dir, &job.stem, &result)?;
        truth
            .map(|t| evaluate_patch_with(&result.mask, &t, &opts))
            .transpose()
    });

    let mut summary = PipelineSummary::default();
    for (job, outcome) in jobs.iter().zip(outcomes) {
        match outcome {
            Ok(report) => {
                summary.processed.push(job.stem.clone());
                if let Some(report) = report {
                    summary.rows.push(ReportRow {
                        method: job.stem.clone(),
                        report,
                    });
                }
            }
            Err(e) if single => return Err(e),
            Err(e) => summary.failures.push((job.stem.clone(), e)),
        }
    }

    if !summary.rows.is_empty() {
        let path = report_path(cfg, req.report.as_deref());
        append_report(&path, &summary.rows, cfg.report_format, cfg.percent)?;
        summary.report_path = Some(path);
    }
    Ok(summary)
}

#[derive(Clone, Debug)]
pub struct EvaluateRequest {
    pub pred_dir: PathBuf,
    pub truth_dir: PathBuf,
    /// Label for the aggregate row.
    pub method: String,
    pub jobs: usize,
    /// Add a `generated_at` timestamp (breaks byte-identical reruns).
    pub timestamp: bool,
}

/// Compare every mask in `pred_dir` with the same-named mask in
/// `truth_dir`. Rows are ordered by filename; unmatched names become
/// warnings and are left out of the aggregate.
pub fn cmd_evaluate(req: &EvaluateRequest, cfg: &PipelineConfig) -> Result<ReportTable> {
    let name = |p: &PathBuf| p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let pred: BTreeSet<String> = list_files(&req.pred_dir, &["pgm", "hmap"])?.iter().map(name).collect();
    let truth: BTreeSet<String> = list_files(&req.truth_dir, &["pgm", "hmap"])?.iter().map(name).collect();

    let mut warnings = Vec::new();
    for n in pred.difference(&truth) {
        warnings.push(format!("no truth mask for prediction '{n}'"));
    }
    for n in truth.difference(&pred) {
        warnings.push(format!("no prediction for truth mask '{n}'"));
    }
    let matched: Vec<String> = pred.intersection(&truth).cloned().collect();
    if matched.is_empty() {
        return Err(Error::EmptyInput("no patches found"));
    }

    let opts: EvalOptions = cfg.eval_options();
    let results = parallel_map(&matched, req.jobs, |n| -> Result<EvalReport> {
        let pp = req.pred_dir.join(n);
        let tp = req.truth_dir.join(n);
        let p = with_file(&pp, io::read_mask(&pp))?;
        let t = with_file(&tp, io::read_mask(&tp))?;
        with_file(&pp, evaluate_patch_with(&p, &t, &opts))
    });

    let mut rows = Vec::with_capacity(matched.len());
    for (n, r) in matched.iter().zip(results) {
        rows.push(ReportRow {
            method: n.clone(),
            report: r?,
        });
    }
    let reports: Vec<EvalReport> = rows.iter().map(|r| r.report).collect();
    let aggregate = EvalReport::mean(&reports).map(|report| ReportRow {
        method: req.method.clone(),
        report,
    });
    let generated_at = req.timestamp.then(|| {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    });
    Ok(ReportTable {
        rows,
        aggregate,
        warnings,
        generated_at,
    })
}

/// Corpus index written by [`cmd_synth`]; paths are relative to its directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config: SynthConfig,
    pub samples: Vec<ManifestEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: u64,
    pub heatmap: String,
    pub target: String,
    pub truth_mask: String,
    pub keypoints: String,
    pub polygon: String,
}

/// Generate `count` samples and write them under `out_dir`:
/// `heatmaps/` (noisy), `targets/`, `truth/`, `keypoints/`, `polygons/`
/// and `manifest.json`.
pub fn cmd_synth(cfg: &SynthConfig, start: u64, count: u64, out_dir: &Path, jobs: usize) -> Result<Manifest> {
    cfg.validate()?;
    let indices: Vec<u64> = (start..start + count).collect();
    let entries = parallel_map(&indices, jobs, |&i| -> Result<ManifestEntry> {
        let s = generate(cfg, i)?;
        let stem = sample_stem(i);
        let entry = ManifestEntry {
            index: i,
            heatmap: format!("heatmaps/{stem}.hmap"),
            target: format!("targets/{stem}.hmap"),
            truth_mask: format!("truth/{stem}.pgm"),
            keypoints: format!("keypoints/{stem}.json"),
            polygon: format!("polygons/{stem}.json"),
        };
        io::write_atomic(&out_dir.join(&entry.heatmap), io::heatmap_to_hmap(&s.noisy_heatmap).as_bytes())?;
        io::write_atomic(&out_dir.join(&entry.target), io::heatmap_to_hmap(&s.target_heatmap).as_bytes())?;
        io::write_atomic(&out_dir.join(&entry.truth_mask), io::mask_to_pgm(&s.truth_mask).as_bytes())?;
        io::write_atomic(&out_dir.join(&entry.keypoints), io::keypoints_to_json(&s.keypoints).as_bytes())?;
        io::write_atomic(&out_dir.join(&entry.polygon), io::polygon_to_json(&s.polygon).as_bytes())?;
        Ok(entry)
    });
    let manifest = Manifest {
        seed: cfg.seed,
        config: *cfg,
        samples: entries.into_iter().collect::<Result<Vec<_>>>()?,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    io::write_atomic(&out_dir.join("manifest.json"), text.as_bytes())?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_map_keeps_order() {
        let items: Vec<u32> = (0..37).collect();
        let seq = parallel_map(&items, 1, |x| x * 3);
        let par = parallel_map(&items, 4, |x| x * 3);
        assert_eq!(seq, par);
        assert_eq!(par[36], 108);
    }

    #[test]
    fn pipeline_on_synthetic_rectangle() {
        let scfg = SynthConfig {
            shape_kind: crate::synth::ShapeKind::Rectilinear,
            n_vertices: (4, 4),
            ..Default::default()
        };
        let s = generate(&scfg, 0).unwrap();
        let result = run_pipeline(&s.noisy_heatmap, &PipelineConfig::default()).unwrap();
        assert_eq!(result.polygon.len(), 4);
        let iou = crate::metrics::mask_iou(&result.mask, &s.truth_mask).unwrap();
        assert!(iou >= 0.95, "{iou}");
    }

    #[test]
    fn pipeline_rejects_flat_heatmap() {
        let h = Heatmap::zeros(16, 16).unwrap();
        let err = run_pipeline(&h, &PipelineConfig::default()).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn pipeline_flags_collinear_peaks() {
        let kps = [Keypoint::new(8, 2), Keypoint::new(8, 9), Keypoint::new(8, 16)];
        let h = render_gaussian_target(&kps, (16, 20), &GaussianSpec::new(1.0)).unwrap();
        let err = run_pipeline(&h, &PipelineConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
        assert_eq!(err.exit_code(), 3);
    }
}
