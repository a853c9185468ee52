//! Non-neural core of keypoint-based building segmentation.
//!
//! A detector emits one heatmap per building patch. From there the crate
//! extracts corner peaks, chains them into a polygon by nearest-neighbor
//! grouping, rasterizes the polygon, and scores the mask against a
//! reference with mask (F1, IoU) and boundary (SSIM, F-measure) metrics.
//! Training targets and the focal loss with its gradient are included, as
//! is a seeded synthetic generator that stands in for real imagery.
//!
//! ```
//! use keypoly::heatmap::{render_gaussian_target, extract_peaks, GaussianSpec, Keypoint, PeakConfig};
//! use keypoly::polygonize::group_keypoints;
//! use keypoly::raster::rasterize;
//!
//! let corners = [Keypoint::new(8, 8), Keypoint::new(8, 40), Keypoint::new(40, 40), Keypoint::new(40, 8)];
//! let heatmap = render_gaussian_target(&corners, (48, 48), &GaussianSpec::default()).unwrap();
//! let peaks = extract_peaks(&heatmap, &PeakConfig::default()).unwrap();
//! let (polygon, _) = group_keypoints(&peaks).unwrap();
//! let mask = rasterize(&polygon, heatmap.dims()).unwrap().mask;
//! assert_eq!(mask.count(), 32 * 32);
//! ```

pub mod commands;
pub mod config;
pub mod error;
pub mod grid;
pub mod heatmap;
pub mod io;
pub mod metrics;
pub mod polygonize;
pub mod raster;
pub mod synth;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use grid::Grid;
pub use heatmap::{Heatmap, Keypoint};
pub use metrics::EvalReport;
pub use polygonize::{Point, Polygon};
pub use raster::{BoundaryMap, Mask};
