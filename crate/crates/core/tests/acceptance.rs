//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use keypoly::commands::run_pipeline;
use keypoly::heatmap::{
    extract_peaks, focal_loss, focal_loss_gradient, render_gaussian_target, FocalLossConfig, GaussianSpec, PeakConfig,
};
use keypoly::metrics::{
    boundary_fmeasure, boundary_match, boundary_ssim, mask_f1, mask_iou, squared_distance_transform,
    BoundaryMatchConfig,
};
use keypoly::polygonize::group_keypoints;
use keypoly::raster::extract_boundary;
use keypoly::synth::{generate, SynthConfig};
use keypoly::{Heatmap, Keypoint, Mask, PipelineConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

const CORPUS: u64 = 200;

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("gradient matches central differences", gradient_vs_finite_differences),
        ("loss fixed points", loss_fixed_points),
        ("peak extraction equals brute force", peaks_vs_brute_force),
        ("noise-free round trip", noise_free_round_trip),
        ("noise robustness", noise_robustness),
        ("metric oracle equivalence", metric_oracles),
        ("determinism", determinism),
        ("end-to-end harness", end_to_end_harness),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let status = if result.pass { "PASS" } else { "FAIL" };
        if !result.pass {
            failed += 1;
        }
        println!(
            "{status} [{}] {name}: {} ({:.2}s)",
            i + 1,
            result.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn random_keypoints(rng: &mut ChaCha8Rng, h: usize, w: usize, max: usize) -> Vec<Keypoint> {
    let n = rng.random_range(1..=max);
    (0..n)
        .map(|_| Keypoint::new(rng.random_range(0..h), rng.random_range(0..w)))
        .collect()
}

fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

// 1 --------------------------------------------------------------------------

fn gradient_vs_finite_differences() -> Outcome {
    let start = Instant::now();
    let cfg = FocalLossConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0x6772_6164);
    let step = 1e-5;
    let (lo, hi) = (1e-4, 1.0 - 1e-4);

    let mut checked = 0usize;
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    let mut over = 0usize;
    let mut worst_five_point = 0.0f64;
    let mut clamped_nonzero = 0usize;
    for _ in 0..50 {
        let kps = random_keypoints(&mut rng, 16, 16, 6);
        let target = render_gaussian_target(&kps, (16, 16), &GaussianSpec::default()).unwrap();
        let values: Vec<f64> = (0..256).map(|_| rng.random::<f64>()).collect();
        let prediction = Heatmap::from_vec(16, 16, values).unwrap();
        let grad = focal_loss_gradient(&prediction, &target, &cfg).unwrap();

        for (i, (&p, &g)) in prediction.values().iter().zip(target.values()).enumerate() {
            let analytic = grad.values()[i];
            if p < cfg.epsilon || p > 1.0 - cfg.epsilon {
                if analytic != 0.0 {
                    clamped_nonzero += 1;
                }
                continue;
            }
            if !(lo..=hi).contains(&p) {
                continue;
            }
            // The loss is a sum of independent per-pixel terms, so the
            // difference quotient for one pixel only involves that pixel's
            // term; evaluating it alone avoids cancellation against the rest.
            let target_px = Heatmap::from_vec(1, 1, vec![g]).unwrap();
            let term = |x: f64| focal_loss(&Heatmap::from_vec(1, 1, vec![x]).unwrap(), &target_px, &cfg).unwrap();
            let central = (term(p + step) - term(p - step)) / (2.0 * step);
            let five_point =
                (term(p - 2.0 * step) - 8.0 * term(p - step) + 8.0 * term(p + step) - term(p + 2.0 * step))
                    / (12.0 * step);
            let err = relative_error(analytic, central);
            checked += 1;
            if err >= 1e-4 {
                over += 1;
            }
            if err > worst.0 {
                worst = (err, p, g);
            }
            worst_five_point = worst_five_point.max(relative_error(analytic, five_point));
        }
    }
    let elapsed = start.elapsed();
    let edge = worst.1.min(1.0 - worst.1);
    let pass = worst.0 < 1e-4 && clamped_nonzero == 0 && elapsed < Duration::from_secs(5);
    outcome(
        pass,
        format!(
            "max rel err {:.3e} over {checked} pixels ({over} at or above 1e-4; worst at p={:.4e}, g={:.4}, \
             where the step's own truncation error is about {:.1e}); five-point stencil max rel err {:.1e}; \
             {clamped_nonzero} nonzero gradients at clamped pixels; {:.2}s",
            worst.0,
            worst.1,
            worst.2,
            step * step / (3.0 * edge * edge),
            worst_five_point,
            elapsed.as_secs_f64()
        ),
    )
}

// 2 --------------------------------------------------------------------------

fn loss_fixed_points() -> Outcome {
    let cfg = FocalLossConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut perfect_max = 0.0f64;
    for _ in 0..50 {
        let kps = random_keypoints(&mut rng, 32, 32, 8);
        let g = render_gaussian_target(&kps, (32, 32), &GaussianSpec::default()).unwrap();
        let p = Heatmap::from_grid(g.grid().map(|&v| if v == 1.0 { 1.0 } else { 0.0 })).unwrap();
        perfect_max = perfect_max.max(focal_loss(&p, &g, &cfg).unwrap().abs());
    }
    let one = |v: f64| Heatmap::from_vec(1, 1, vec![v]).unwrap();
    let positive = focal_loss(&one(0.5), &one(1.0), &cfg).unwrap();
    let negative = focal_loss(&one(0.5), &one(0.5), &cfg).unwrap();
    // direct scalar evaluation
    let positive_expected = 0.25 * std::f64::consts::LN_2;
    let negative_expected = 0.0625 * 0.25 * std::f64::consts::LN_2;
    let pass = perfect_max == 0.0
        && (positive - 0.173287).abs() <= 1e-6
        && (negative - 0.010831).abs() <= 1e-6
        && (positive - positive_expected).abs() <= 1e-15
        && (negative - negative_expected).abs() <= 1e-15;
    outcome(
        pass,
        format!("perfect-prediction loss {perfect_max} on 50 targets; 1x1 values {positive:.9} and {negative:.9}"),
    )
}

// 3 --------------------------------------------------------------------------

fn brute_peaks(h: &Heatmap, cfg: &PeakConfig) -> Vec<(usize, usize)> {
    let (hh, ww) = h.dims();
    let k = (cfg.window / 2) as i64;
    let mut out = Vec::new();
    for r in 0..hh {
        for c in 0..ww {
            let v = h.get(r, c);
            if v <= cfg.threshold {
                continue;
            }
            let mut keep = true;
            for rr in r as i64 - k..=r as i64 + k {
                for cc in c as i64 - k..=c as i64 + k {
                    if rr < 0 || cc < 0 || rr >= hh as i64 || cc >= ww as i64 || (rr, cc) == (r as i64, c as i64) {
                        continue;
                    }
                    let q = h.get(rr as usize, cc as usize);
                    if q > v || (q == v && (rr, cc) < (r as i64, c as i64)) {
                        keep = false;
                    }
                }
            }
            if keep {
                out.push((r, c));
            }
        }
    }
    out
}

fn peaks_vs_brute_force() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    let mut plateau_maps = 0;
    let mut total_peaks = 0;
    for i in 0..200 {
        let h = rng.random_range(1..=64);
        let w = rng.random_range(1..=64);
        let heatmap = match i % 3 {
            // coarse quantization: many equal-valued neighbors
            0 => {
                let levels = rng.random_range(1..=6) as f64;
                let v = (0..h * w).map(|_| (rng.random_range(0.0..=levels)).floor() / levels).collect();
                Heatmap::from_vec(h, w, v).unwrap()
            }
            1 => Heatmap::from_vec(h, w, (0..h * w).map(|_| rng.random::<f64>()).collect()).unwrap(),
            // rendered targets with flat tops from adjacent keypoints
            _ => {
                let mut kps = random_keypoints(&mut rng, h, w, 12);
                let extra: Vec<Keypoint> = kps
                    .iter()
                    .filter(|k| k.col + 1 < w)
                    .map(|k| Keypoint::new(k.row, k.col + 1))
                    .collect();
                kps.extend(extra);
                let sigma = rng.random_range(0.5..3.0);
                render_gaussian_target(&kps, (h, w), &GaussianSpec::new(sigma)).unwrap()
            }
        };
        let has_plateau = (0..h).any(|r| (1..w).any(|c| heatmap.get(r, c) == heatmap.get(r, c - 1) && heatmap.get(r, c) > 0.0));
        plateau_maps += usize::from(has_plateau);
        let cfg = PeakConfig {
            threshold: rng.random_range(0.01..0.9),
            window: [3, 3, 5, 7][rng.random_range(0..4)],
        };
        let got: Vec<_> = extract_peaks(&heatmap, &cfg).unwrap().iter().map(Keypoint::location).collect();
        total_peaks += got.len();
        if got != brute_peaks(&heatmap, &cfg) {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("{mismatches} mismatches on 200 maps ({plateau_maps} with plateaus, {total_peaks} peaks)"),
    )
}

// 4 and 5 --------------------------------------------------------------------

struct RoundTrip {
    ious: Vec<f64>,
    exact_sets: usize,
    recalled: usize,
    total_keypoints: usize,
    failures: Vec<String>,
    max_noise: f64,
}

fn round_trip(noise: f64) -> RoundTrip {
    let synth = SynthConfig {
        noise_amplitude: noise,
        ..SynthConfig::default()
    };
    let cfg = PipelineConfig::default();
    let mut out = RoundTrip {
        ious: Vec::new(),
        exact_sets: 0,
        recalled: 0,
        total_keypoints: 0,
        failures: Vec::new(),
        max_noise: 0.0,
    };
    for i in 0..CORPUS {
        let s = generate(&synth, i).unwrap();
        out.total_keypoints += s.keypoints.len();
        for (a, b) in s.noisy_heatmap.values().iter().zip(s.target_heatmap.values()) {
            out.max_noise = out.max_noise.max((a - b).abs());
        }
        let result = match run_pipeline(&s.noisy_heatmap, &cfg) {
            Ok(r) => r,
            Err(e) => {
                out.failures.push(format!("sample {i}: {e}"));
                out.ious.push(0.0);
                continue;
            }
        };
        out.ious.push(mask_iou(&result.mask, &s.truth_mask).unwrap());
        let mut got: Vec<_> = result.peaks.iter().map(Keypoint::location).collect();
        let mut want: Vec<_> = s.keypoints.iter().map(Keypoint::location).collect();
        got.sort_unstable();
        want.sort_unstable();
        out.exact_sets += usize::from(got == want);
        out.recalled += s
            .keypoints
            .iter()
            .filter(|k| {
                result.peaks.iter().any(|p| {
                    let (dr, dc) = (p.row.abs_diff(k.row), p.col.abs_diff(k.col));
                    dr * dr + dc * dc <= 1
                })
            })
            .count();
    }
    out
}

fn stats(v: &[f64]) -> (f64, f64) {
    (v.iter().sum::<f64>() / v.len() as f64, v.iter().copied().fold(f64::INFINITY, f64::min))
}

fn noise_free_round_trip() -> Outcome {
    let r = round_trip(0.0);
    let (mean, min) = stats(&r.ious);
    let pass = mean >= 0.95 && min >= 0.90 && r.exact_sets == CORPUS as usize && r.failures.is_empty();
    outcome(
        pass,
        format!(
            "mean IoU {mean:.6}, min IoU {min:.6}, exact keypoint sets {}/{CORPUS}{}",
            r.exact_sets,
            failure_note(&r.failures)
        ),
    )
}

fn noise_robustness() -> Outcome {
    let r = round_trip(0.04);
    let (mean, min) = stats(&r.ious);
    let recall = r.recalled as f64 / r.total_keypoints as f64;
    let pass = recall == 1.0 && mean >= 0.93 && r.failures.is_empty();
    outcome(
        pass,
        format!(
            "max |noise| {:.4}, recall within 1 px {}/{} = {recall:.6}, mean IoU {mean:.6}, min IoU {min:.6}{}",
            r.max_noise,
            r.recalled,
            r.total_keypoints,
            failure_note(&r.failures)
        ),
    )
}

fn failure_note(failures: &[String]) -> String {
    match failures.first() {
        Some(f) => format!("; {} pipeline failures, first: {f}", failures.len()),
        None => String::new(),
    }
}

// 6 --------------------------------------------------------------------------

fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Mask {
    let density = rng.random_range(0.0..1.0);
    if rng.random_bool(0.5) {
        Mask::from_fn(h, w, |_, _| rng.random_bool(density)).unwrap()
    } else {
        // a solid rectangle, the typical footprint shape
        let (r0, c0) = (rng.random_range(0..h), rng.random_range(0..w));
        let (r1, c1) = (rng.random_range(r0..h), rng.random_range(c0..w));
        Mask::from_fn(h, w, |r, c| (r0..=r1).contains(&r) && (c0..=c1).contains(&c)).unwrap()
    }
}

fn all_pairs_matched(a: &Mask, b: &Mask, tol: f64) -> usize {
    let (h, w) = a.dims();
    let cells = |m: &Mask| -> Vec<(i64, i64)> {
        (0..h)
            .flat_map(|r| (0..w).map(move |c| (r, c)))
            .filter(|&(r, c)| m.get(r, c))
            .map(|(r, c)| (r as i64, c as i64))
            .collect()
    };
    let bs = cells(b);
    cells(a)
        .into_iter()
        .filter(|&(r, c)| {
            bs.iter()
                .any(|&(br, bc)| (((br - r).pow(2) + (bc - c).pow(2)) as f64).sqrt() <= tol)
        })
        .count()
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut problems = Vec::new();
    let mut worst_identity = 0.0f64;
    let mut worst_ssim = 0.0f64;
    for i in 0..100 {
        let h = if i < 10 { 64 } else { rng.random_range(11..=64) };
        let w = if i < 10 { 64 } else { rng.random_range(11..=64) };
        let (a, b) = (random_mask(&mut rng, h, w), random_mask(&mut rng, h, w));

        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for (x, y) in a.values().iter().zip(b.values()) {
            tp += usize::from(*x == 1 && *y == 1);
            fp += usize::from(*x == 1 && *y == 0);
            fn_ += usize::from(*x == 0 && *y == 1);
        }
        let f1 = mask_f1(&a, &b).unwrap();
        let iou = mask_iou(&a, &b).unwrap();
        let union = tp + fp + fn_;
        let (f1_oracle, iou_oracle) = if union == 0 {
            (1.0, 1.0)
        } else {
            (2.0 * tp as f64 / (2 * tp + fp + fn_) as f64, tp as f64 / union as f64)
        };
        if f1 != f1_oracle || iou != iou_oracle {
            problems.push(format!("pair {i}: F1/IoU differ from pixel counts"));
        }
        worst_identity = worst_identity.max((f1 - 2.0 * iou / (1.0 + iou)).abs());

        let (pa, pb) = (extract_boundary(&a), extract_boundary(&b));
        let tol = [0.0, 1.0, 2.0, 2.5, 3.0][i % 5];
        let cfg = BoundaryMatchConfig { tolerance: tol };
        let m = boundary_match(&pa, &pb, &cfg).unwrap();
        let pm = all_pairs_matched(pa.as_mask(), pb.as_mask(), tol);
        let tm = all_pairs_matched(pb.as_mask(), pa.as_mask(), tol);
        if (m.pred_matched, m.truth_matched) != (pm, tm) {
            problems.push(format!("pair {i}: boundary matches differ from all-pairs oracle"));
        }
        let (pt, tt) = (pa.as_mask().count(), pb.as_mask().count());
        let f_oracle = match (pt, tt) {
            (0, 0) => 1.0,
            (0, _) | (_, 0) => 0.0,
            _ => {
                let (p, r) = (pm as f64 / pt as f64, tm as f64 / tt as f64);
                if p + r == 0.0 {
                    0.0
                } else {
                    2.0 * p * r / (p + r)
                }
            }
        };
        if boundary_fmeasure(&pa, &pb, &cfg).unwrap() != f_oracle {
            problems.push(format!("pair {i}: boundary F differs from all-pairs oracle"));
        }

        if let Some(fast) = squared_distance_transform(pa.as_mask()) {
            let feats: Vec<(i64, i64)> = (0..h)
                .flat_map(|r| (0..w).map(move |c| (r as i64, c as i64)))
                .filter(|&(r, c)| pa.get(r as usize, c as usize))
                .collect();
            let exact = (0..h).flat_map(|r| (0..w).map(move |c| (r as i64, c as i64))).all(|(r, c)| {
                let d = feats.iter().map(|&(fr, fc)| ((fr - r).pow(2) + (fc - c).pow(2)) as u64).min().unwrap();
                fast[r as usize * w + c as usize] == d
            });
            if !exact {
                problems.push(format!("pair {i}: distance transform differs from all-pairs oracle"));
            }
        }

        worst_ssim = worst_ssim.max((boundary_ssim(&pa, &pa).unwrap() - 1.0).abs());
    }
    let pass = problems.is_empty() && worst_identity <= 1e-12 && worst_ssim <= 1e-12;
    outcome(
        pass,
        format!(
            "100 pairs up to 64x64: {} oracle mismatches, max |F1 - 2IoU/(1+IoU)| {worst_identity:.1e}, \
             max |SSIM(x,x) - 1| {worst_ssim:.1e}{}",
            problems.len(),
            problems.first().map(|p| format!("; {p}")).unwrap_or_default()
        ),
    )
}

// 7 and 8 --------------------------------------------------------------------

fn keypoly(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_keypoly"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim()))
    }
}

/// synth, pipeline and evaluate over the corpus, single-threaded.
fn run_harness(dir: &Path) -> Result<(), String> {
    let n = CORPUS.to_string();
    keypoly(dir, &["synth", "--output-dir", "corpus", "--count", &n, "--seed", "0", "--jobs", "1"])?;
    keypoly(
        dir,
        &["pipeline", "--heatmap", "corpus/heatmaps", "--truth", "corpus/truth", "--output-dir", "out", "--jobs", "1"],
    )?;
    keypoly(
        dir,
        &["evaluate", "--pred-dir", "out/masks", "--truth-dir", "corpus/truth", "-o", "report.csv", "--jobs", "1"],
    )
}

fn files_under(root: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let mut problems = Vec::new();

    let synth = SynthConfig {
        noise_amplitude: 0.04,
        ..SynthConfig::default()
    };
    let identical = (0..CORPUS).all(|i| generate(&synth, i).unwrap() == generate(&synth, i).unwrap());
    if !identical {
        problems.push("generator output differs between runs".to_string());
    }

    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut compared = 0;
    match (run_harness(a.path()), run_harness(b.path())) {
        (Ok(()), Ok(())) => {
            let (fa, fb) = (files_under(a.path()), files_under(b.path()));
            if fa != fb {
                problems.push("CLI runs wrote different file sets".to_string());
            }
            for rel in &fa {
                compared += 1;
                if std::fs::read(a.path().join(rel)).ok() != std::fs::read(b.path().join(rel)).ok() {
                    problems.push(format!("{} differs", rel.display()));
                }
            }
        }
        (Err(e), _) | (_, Err(e)) => problems.push(e),
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut permuted = 0;
    for i in 0..CORPUS {
        let s = generate(&SynthConfig::default(), i).unwrap();
        let (base, _) = group_keypoints(&s.keypoints).unwrap();
        for _ in 0..5 {
            let mut kps = s.keypoints.clone();
            kps.shuffle(&mut rng);
            permuted += 1;
            if group_keypoints(&kps).unwrap().0 != base {
                problems.push(format!("sample {i}: polygon depends on keypoint order"));
                break;
            }
        }
    }

    outcome(
        problems.is_empty(),
        format!(
            "{CORPUS} samples regenerated, {compared} CLI output files compared byte for byte, {permuted} shuffled \
             groupings; {} problems{}",
            problems.len(),
            problems.first().map(|p| format!(", first: {p}")).unwrap_or_default()
        ),
    )
}

fn end_to_end_harness() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let start = Instant::now();
    if let Err(e) = run_harness(tmp.path()) {
        return outcome(false, e);
    }
    let elapsed = start.elapsed();
    let csv = std::fs::read_to_string(tmp.path().join("report.csv")).unwrap();
    let header_ok = csv.lines().next() == Some(keypoly::io::CSV_HEADER)
        && keypoly::io::CSV_HEADER.starts_with("method,f1,iou,ssim,boundary_f");
    let rows = keypoly::io::parse_report_csv(&csv).unwrap_or_default();
    let aggregate = rows.last().cloned();
    let pass = header_ok
        && rows.len() == CORPUS as usize + 1
        && aggregate.as_ref().is_some_and(|a| a.report.n_patches == CORPUS as usize)
        && elapsed < Duration::from_secs(60);
    let agg = aggregate
        .map(|a| {
            format!(
                "{},{:.6},{:.6},{:.6},{:.6}",
                a.method, a.report.f1, a.report.iou, a.report.ssim, a.report.boundary_f
            )
        })
        .unwrap_or_default();
    outcome(
        pass,
        format!("{} report rows in {:.2}s; aggregate {agg}", rows.len(), elapsed.as_secs_f64()),
    )
}
