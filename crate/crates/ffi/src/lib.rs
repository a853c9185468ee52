//! C interface to `keypoly`.
//!
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `kp_*_free`. Every fallible call returns a
//! [`KpStatus`]; on failure [`kp_last_error_message`] describes the error
//! for the calling thread. Grids are row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use keypoly::heatmap::{
    extract_peaks, focal_loss, focal_loss_gradient, render_gaussian_target, FocalLossConfig, GaussianSpec, PeakConfig,
};
use keypoly::metrics::{evaluate_patch, BoundaryMatchConfig};
use keypoly::polygonize::group_keypoints;
use keypoly::raster::{extract_boundary, rasterize};
use keypoly::{Error, Heatmap, Keypoint, Mask, Point, Polygon};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KpStatus {
    Ok = 0,
    NullPointer = 1,
    Shape = 2,
    OutOfBounds = 3,
    Config = 4,
    Value = 5,
    EmptyInput = 6,
    InsufficientPoints = 7,
    DuplicatePoint = 8,
    Degenerate = 9,
    Generation = 10,
    Parse = 11,
    Io = 12,
    Panic = 13,
}

impl From<&Error> for KpStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Shape { .. } => KpStatus::Shape,
            Error::OutOfBounds { .. } => KpStatus::OutOfBounds,
            Error::Config(_) => KpStatus::Config,
            Error::Value(_) => KpStatus::Value,
            Error::EmptyInput(_) => KpStatus::EmptyInput,
            Error::InsufficientPoints { .. } => KpStatus::InsufficientPoints,
            Error::DuplicatePoint { .. } => KpStatus::DuplicatePoint,
            Error::Degenerate(_) => KpStatus::Degenerate,
            Error::Generation(_) => KpStatus::Generation,
            Error::Parse { .. } | Error::Json(_) => KpStatus::Parse,
            Error::Io(_) => KpStatus::Io,
            Error::InFile { source, .. } => KpStatus::from(source.as_ref()),
        }
    }
}

/// A keypoint at pixel (`row`, `col`).
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KpKeypoint {
    pub row: usize,
    pub col: usize,
    pub score: f64,
}

/// Mask and boundary accuracy of one patch.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KpEvalReport {
    pub f1: f64,
    pub iou: f64,
    pub ssim: f64,
    pub boundary_f: f64,
    pub n_patches: usize,
}

/// Heatmap with values in [0, 1].
pub struct KpHeatmap(Heatmap);
/// Binary mask.
pub struct KpMask(Mask);
/// Closed polygon in (x = column, y = row) coordinates.
pub struct KpPolygon(Polygon);
/// Ordered list of keypoints.
pub struct KpKeypoints(Vec<Keypoint>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), KpFail>) -> KpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KpStatus::Ok,
        Ok(Err(KpFail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            KpStatus::NullPointer
        }
        Ok(Err(KpFail::Core(e))) => {
            set_error(e.to_string());
            KpStatus::from(&e)
        }
        Err(_) => {
            set_error("internal panic".to_string());
            KpStatus::Panic
        }
    }
}

enum KpFail {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for KpFail {
    fn from(e: Error) -> Self {
        KpFail::Core(e)
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, KpFail> {
    p.as_ref().ok_or(KpFail::Null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], KpFail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(KpFail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], KpFail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(KpFail::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T, what: &'static str) -> Result<(), KpFail> {
    if out.is_null() {
        return Err(KpFail::Null(what));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn copy_into<T: Copy>(src: &[T], dst: &mut [T]) -> Result<(), KpFail> {
    if dst.len() != src.len() {
        return Err(Error::Value(format!("output buffer holds {} values, need {}", dst.len(), src.len())).into());
    }
    dst.copy_from_slice(src);
    Ok(())
}

fn focal_config(alpha: f64, beta: f64, n_objects: usize) -> FocalLossConfig {
    FocalLossConfig {
        alpha,
        beta,
        n_objects,
        ..FocalLossConfig::default()
    }
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn kp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

// ---- heatmaps ----

/// Copy `height * width` values into a new heatmap.
///
/// # Safety
/// `values` must point to `height * width` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn kp_heatmap_new(
    height: usize,
    width: usize,
    values: *const f64,
    out: *mut *mut KpHeatmap,
) -> KpStatus {
    guard(|| {
        let n = height.saturating_mul(width);
        let v = slice(values, n, "values")?.to_vec();
        put(out, KpHeatmap(Heatmap::from_vec(height, width, v)?), "out")
    })
}

/// # Safety
/// `heatmap` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kp_heatmap_free(heatmap: *mut KpHeatmap) {
    if !heatmap.is_null() {
        drop(Box::from_raw(heatmap));
    }
}

/// # Safety
/// `heatmap` must be a live handle; `height` and `width` writable.
#[no_mangle]
pub unsafe extern "C" fn kp_heatmap_dims(heatmap: *const KpHeatmap, height: *mut usize, width: *mut usize) -> KpStatus {
    guard(|| {
        let h = deref(heatmap, "heatmap")?;
        if height.is_null() || width.is_null() {
            return Err(KpFail::Null("height/width"));
        }
        (*height, *width) = h.0.dims();
        Ok(())
    })
}

/// Copy the heatmap values into `out`, which must hold exactly `len` doubles.
///
/// # Safety
/// `heatmap` must be a live handle; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn kp_heatmap_copy_values(heatmap: *const KpHeatmap, out: *mut f64, len: usize) -> KpStatus {
    guard(|| copy_into(deref(heatmap, "heatmap")?.0.values(), slice_mut(out, len, "out")?))
}

/// Render the Gaussian target for `n` keypoints. A `truncation_radius` of 0
/// selects the default `ceil(3 * sigma)`.
///
/// # Safety
/// `keypoints` must point to `n` readable keypoints (or be NULL when `n` is 0).
#[no_mangle]
pub unsafe extern "C" fn kp_render_gaussian_target(
    keypoints: *const KpKeypoint,
    n: usize,
    height: usize,
    width: usize,
    sigma: f64,
    truncation_radius: f64,
    out: *mut *mut KpHeatmap,
) -> KpStatus {
    guard(|| {
        let kps: Vec<Keypoint> = slice(keypoints, n, "keypoints")?
            .iter()
            .map(|k| Keypoint::with_score(k.row, k.col, k.score))
            .collect();
        let mut spec = GaussianSpec::new(sigma);
        if truncation_radius != 0.0 {
            spec = spec.with_truncation_radius(truncation_radius);
        }
        put(out, KpHeatmap(render_gaussian_target(&kps, (height, width), &spec)?), "out")
    })
}

/// Focal loss of `prediction` against `target`.
///
/// # Safety
/// Handles must be live; `loss` writable.
#[no_mangle]
pub unsafe extern "C" fn kp_focal_loss(
    prediction: *const KpHeatmap,
    target: *const KpHeatmap,
    alpha: f64,
    beta: f64,
    n_objects: usize,
    loss: *mut f64,
) -> KpStatus {
    guard(|| {
        let p = deref(prediction, "prediction")?;
        let g = deref(target, "target")?;
        if loss.is_null() {
            return Err(KpFail::Null("loss"));
        }
        *loss = focal_loss(&p.0, &g.0, &focal_config(alpha, beta, n_objects))?;
        Ok(())
    })
}

/// Gradient of the focal loss with respect to each prediction value.
///
/// # Safety
/// Handles must be live; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn kp_focal_loss_gradient(
    prediction: *const KpHeatmap,
    target: *const KpHeatmap,
    alpha: f64,
    beta: f64,
    n_objects: usize,
    out: *mut f64,
    len: usize,
) -> KpStatus {
    guard(|| {
        let p = deref(prediction, "prediction")?;
        let g = deref(target, "target")?;
        let grad = focal_loss_gradient(&p.0, &g.0, &focal_config(alpha, beta, n_objects))?;
        copy_into(grad.values(), slice_mut(out, len, "out")?)
    })
}

// ---- keypoints ----

/// # Safety
/// `keypoints` must point to `n` readable keypoints (or be NULL when `n` is 0).
#[no_mangle]
pub unsafe extern "C" fn kp_keypoints_new(keypoints: *const KpKeypoint, n: usize, out: *mut *mut KpKeypoints) -> KpStatus {
    guard(|| {
        let v = slice(keypoints, n, "keypoints")?
            .iter()
            .map(|k| Keypoint::with_score(k.row, k.col, k.score))
            .collect();
        put(out, KpKeypoints(v), "out")
    })
}

/// # Safety
/// `keypoints` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kp_keypoints_free(keypoints: *mut KpKeypoints) {
    if !keypoints.is_null() {
        drop(Box::from_raw(keypoints));
    }
}

/// Number of keypoints; 0 for NULL.
///
/// # Safety
/// `keypoints` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kp_keypoints_len(keypoints: *const KpKeypoints) -> usize {
    keypoints.as_ref().map_or(0, |k| k.0.len())
}

/// # Safety
/// `keypoints` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kp_keypoints_get(keypoints: *const KpKeypoints, index: usize, out: *mut KpKeypoint) -> KpStatus {
    guard(|| {
        let k = deref(keypoints, "keypoints")?;
        if out.is_null() {
            return Err(KpFail::Null("out"));
        }
        let kp = k
            .0
            .get(index)
            .ok_or_else(|| Error::Value(format!("index {index} out of range for {} keypoints", k.0.len())))?;
        *out = KpKeypoint {
            row: kp.row,
            col: kp.col,
            score: kp.score,
        };
        Ok(())
    })
}

/// Local maxima above `threshold` within a `window` x `window` neighborhood.
///
/// # Safety
/// `heatmap` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn kp_extract_peaks(
    heatmap: *const KpHeatmap,
    threshold: f64,
    window: usize,
    out: *mut *mut KpKeypoints,
) -> KpStatus {
    guard(|| {
        let h = deref(heatmap, "heatmap")?;
        let peaks = extract_peaks(&h.0, &PeakConfig { threshold, window })?;
        put(out, KpKeypoints(peaks), "out")
    })
}

// ---- polygons ----

/// Build a polygon from `n` interleaved (x, y) pairs.
///
/// # Safety
/// `xy` must point to `2 * n` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn kp_polygon_new(xy: *const f64, n: usize, out: *mut *mut KpPolygon) -> KpStatus {
    guard(|| {
        let v = slice(xy, n.saturating_mul(2), "xy")?;
        let pts = v.chunks_exact(2).map(|p| Point::new(p[0], p[1])).collect();
        put(out, KpPolygon(Polygon::new(pts)?), "out")
    })
}

/// # Safety
/// `polygon` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kp_polygon_free(polygon: *mut KpPolygon) {
    if !polygon.is_null() {
        drop(Box::from_raw(polygon));
    }
}

/// Number of vertices; 0 for NULL.
///
/// # Safety
/// `polygon` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kp_polygon_len(polygon: *const KpPolygon) -> usize {
    polygon.as_ref().map_or(0, |p| p.0.len())
}

/// # Safety
/// `polygon` must be a live handle; `x` and `y` writable.
#[no_mangle]
pub unsafe extern "C" fn kp_polygon_vertex(polygon: *const KpPolygon, index: usize, x: *mut f64, y: *mut f64) -> KpStatus {
    guard(|| {
        let p = deref(polygon, "polygon")?;
        if x.is_null() || y.is_null() {
            return Err(KpFail::Null("x/y"));
        }
        let v = p
            .0
            .vertices()
            .get(index)
            .ok_or_else(|| Error::Value(format!("index {index} out of range for {} vertices", p.0.len())))?;
        (*x, *y) = (v.x, v.y);
        Ok(())
    })
}

/// Whether any two non-adjacent edges intersect; false for NULL.
///
/// # Safety
/// `polygon` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kp_polygon_is_self_intersecting(polygon: *const KpPolygon) -> bool {
    polygon.as_ref().is_some_and(|p| p.0.is_self_intersecting())
}

/// Chain keypoints by nearest-neighbor grouping. `tie_events` may be NULL.
///
/// # Safety
/// `keypoints` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn kp_group_keypoints(
    keypoints: *const KpKeypoints,
    out: *mut *mut KpPolygon,
    tie_events: *mut usize,
) -> KpStatus {
    guard(|| {
        let k = deref(keypoints, "keypoints")?;
        let (polygon, trace) = group_keypoints(&k.0)?;
        if !tie_events.is_null() {
            *tie_events = trace.tie_events;
        }
        put(out, KpPolygon(polygon), "out")
    })
}

// ---- masks ----

/// Copy `height * width` bytes into a new mask; nonzero bytes are set.
///
/// # Safety
/// `values` must point to `height * width` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn kp_mask_new(height: usize, width: usize, values: *const u8, out: *mut *mut KpMask) -> KpStatus {
    guard(|| {
        let v = slice(values, height.saturating_mul(width), "values")?.to_vec();
        put(out, KpMask(Mask::from_vec(height, width, v)?), "out")
    })
}

/// # Safety
/// `mask` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kp_mask_free(mask: *mut KpMask) {
    if !mask.is_null() {
        drop(Box::from_raw(mask));
    }
}

/// # Safety
/// `mask` must be a live handle; `height` and `width` writable.
#[no_mangle]
pub unsafe extern "C" fn kp_mask_dims(mask: *const KpMask, height: *mut usize, width: *mut usize) -> KpStatus {
    guard(|| {
        let m = deref(mask, "mask")?;
        if height.is_null() || width.is_null() {
            return Err(KpFail::Null("height/width"));
        }
        (*height, *width) = m.0.dims();
        Ok(())
    })
}

/// Number of set pixels; 0 for NULL.
///
/// # Safety
/// `mask` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kp_mask_count(mask: *const KpMask) -> usize {
    mask.as_ref().map_or(0, |m| m.0.count())
}

/// Copy the 0/1 mask values into `out`, which must hold exactly `len` bytes.
///
/// # Safety
/// `mask` must be a live handle; `out` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn kp_mask_copy_values(mask: *const KpMask, out: *mut u8, len: usize) -> KpStatus {
    guard(|| copy_into(deref(mask, "mask")?.0.values(), slice_mut(out, len, "out")?))
}

/// Even-odd fill sampled at pixel centers. `degenerate` may be NULL; it is
/// set when all vertices are collinear and the mask is empty.
///
/// # Safety
/// `polygon` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn kp_rasterize(
    polygon: *const KpPolygon,
    height: usize,
    width: usize,
    out: *mut *mut KpMask,
    degenerate: *mut bool,
) -> KpStatus {
    guard(|| {
        let p = deref(polygon, "polygon")?;
        let r = rasterize(&p.0, (height, width))?;
        if !degenerate.is_null() {
            *degenerate = r.degenerate;
        }
        put(out, KpMask(r.mask), "out")
    })
}

/// Set pixels with a 4-neighbor that is unset or outside the grid.
///
/// # Safety
/// `mask` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn kp_extract_boundary(mask: *const KpMask, out: *mut *mut KpMask) -> KpStatus {
    guard(|| {
        let m = deref(mask, "mask")?;
        put(out, KpMask(extract_boundary(&m.0).into_mask()), "out")
    })
}

/// F1, IoU, boundary SSIM and boundary F-measure of `pred` against `truth`.
/// Masks must be at least 11 x 11.
///
/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kp_evaluate_patch(
    pred: *const KpMask,
    truth: *const KpMask,
    tolerance: f64,
    out: *mut KpEvalReport,
) -> KpStatus {
    guard(|| {
        let p = deref(pred, "pred")?;
        let t = deref(truth, "truth")?;
        if out.is_null() {
            return Err(KpFail::Null("out"));
        }
        let r = evaluate_patch(&p.0, &t.0, &BoundaryMatchConfig { tolerance })?;
        *out = KpEvalReport {
            f1: r.f1,
            iou: r.iou,
            ssim: r.ssim,
            boundary_f: r.boundary_f,
            n_patches: r.n_patches,
        };
        Ok(())
    })
}
