//! Polygon to mask conversion and inner-boundary extraction.
//!
//! Pixel `(r, c)` is covered when its center `(c + 0.5, r + 0.5)` lies inside
//! the polygon under the even-odd rule, or exactly on one of its edges.

use crate::error::Result;
use crate::grid::Grid;
use crate::polygonize::{Point, Polygon};

/// Binary building/background grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask(Grid<u8>);

impl Mask {
    pub fn empty(height: usize, width: usize) -> Result<Self> {
        Ok(Self(Grid::filled(height, width, 0)?))
    }

    /// Build from arbitrary values; anything nonzero becomes 1.
    pub fn from_vec(height: usize, width: usize, values: Vec<u8>) -> Result<Self> {
        let values = values.into_iter().map(|v| u8::from(v != 0)).collect();
        Ok(Self(Grid::from_vec(height, width, values)?))
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        Ok(Self(Grid::from_fn(height, width, |r, c| u8::from(f(r, c)))?))
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
    pub fn get(&self, row: usize, col: usize) -> bool {
        *self.0.get(row, col) != 0
    }

    pub fn set(&mut self, row: usize, col: usize, on: bool) {
        *self.0.get_mut(row, col) = u8::from(on);
    }

    pub fn values(&self) -> &[u8] {
        self.0.values()
    }

    pub fn grid(&self) -> &Grid<u8> {
        &self.0
    }

    pub fn count(&self) -> usize {
        self.0.values().iter().filter(|&&v| v != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.0.values().iter().all(|&v| v == 0)
    }

    /// Values as reals in {0.0, 1.0}.
    pub fn to_f64(&self) -> Grid<f64> {
        self.0.map(|&v| f64::from(v))
    }
}

/// Inner boundary of a [`Mask`]; always a subset of that mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundaryMap(Mask);

impl BoundaryMap {
    /// Treat an existing mask as a boundary map without recomputing it.
    pub fn from_mask(mask: Mask) -> Self {
        Self(mask)
    }

    pub fn as_mask(&self) -> &Mask {
        &self.0
    }

    pub fn into_mask(self) -> Mask {
        self.0
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.0.get(row, col)
    }
}

/// Mask produced by [`rasterize`], plus a flag for collinear input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rasterized {
    pub mask: Mask,
    /// The polygon was collinear; the mask is empty.
    pub degenerate: bool,
}

/// Edge with endpoints ordered by `(y, x)` so results do not depend on
/// polygon orientation or starting vertex.
#[derive(Clone, Copy)]
struct Edge {
    lo: Point,
    hi: Point,
}

impl Edge {
    fn new(a: Point, b: Point) -> Self {
        if (a.y, a.x) <= (b.y, b.x) {
            Edge { lo: a, hi: b }
        } else {
            Edge { lo: b, hi: a }
        }
    }

    #[inline]
    fn x_at(&self, y: f64) -> f64 {
        if y == self.lo.y {
            self.lo.x
        } else if y == self.hi.y {
            self.hi.x
        } else {
            self.lo.x + (y - self.lo.y) * (self.hi.x - self.lo.x) / (self.hi.y - self.lo.y)
        }
    }
}

/// First column whose center is `>= x` (may be past the grid).
fn first_center_at_or_after(x: f64) -> i64 {
    let mut c = (x - 0.5).ceil() as i64;
    while (c as f64 + 0.5) < x {
        c += 1;
    }
    while c > i64::MIN && ((c - 1) as f64 + 0.5) >= x {
        c -= 1;
    }
    c
}

/// Scanline even-odd fill sampled at pixel centers; on-edge centers count as inside.
pub fn rasterize(polygon: &Polygon, dims: (usize, usize)) -> Result<Rasterized> {
    let (h, w) = dims;
    let mut mask = Mask::empty(h, w)?;
    if polygon.is_degenerate() {
        return Ok(Rasterized {
            mask,
            degenerate: true,
        });
    }

    let edges: Vec<Edge> = polygon.edges().map(|(a, b)| Edge::new(a, b)).collect();
    let ymin = edges.iter().map(|e| e.lo.y).fold(f64::INFINITY, f64::min);
    let ymax = edges.iter().map(|e| e.hi.y).fold(f64::NEG_INFINITY, f64::max);
    let wf = w as f64;
    // clamping x to [-1, w + 1] leaves every in-grid comparison unchanged
    let col_at = |x: f64| first_center_at_or_after(x.clamp(-1.0, wf + 1.0)).clamp(0, w as i64) as usize;

    let mut crossings = Vec::with_capacity(edges.len());
    for r in 0..h {
        let py = r as f64 + 0.5;
        if py < ymin || py > ymax {
            continue;
        }

        crossings.clear();
        for e in &edges {
            if e.lo.y <= py && py < e.hi.y {
                crossings.push(e.x_at(py));
            }
        }
        crossings.sort_by(f64::total_cmp);
        for span in crossings.chunks_exact(2) {
            let start = col_at(span[0]);
            let end = col_at(span[1]);
            for c in start..end {
                mask.set(r, c, true);
            }
        }

        // closed region: centers lying exactly on an edge
        for e in &edges {
            if py < e.lo.y || py > e.hi.y {
                continue;
            }
            let (x0, x1) = if e.lo.y == e.hi.y {
                (e.lo.x.min(e.hi.x), e.lo.x.max(e.hi.x))
            } else {
                let x = e.x_at(py);
                (x, x)
            };
            let start = col_at(x0);
            for c in start..w {
                if c as f64 + 0.5 > x1 {
                    break;
                }
                mask.set(r, c, true);
            }
        }
    }
    Ok(Rasterized {
        mask,
        degenerate: false,
    })
}

/// Mask pixels with at least one 4-neighbor that is background or outside
/// the grid (the mask minus its 4-connected erosion).
pub fn extract_boundary(mask: &Mask) -> BoundaryMap {
    let (h, w) = mask.dims();
    let boundary = Mask::from_fn(h, w, |r, c| {
        mask.get(r, c)
            && (r == 0
                || c == 0
                || r + 1 == h
                || c + 1 == w
                || !mask.get(r - 1, c)
                || !mask.get(r + 1, c)
                || !mask.get(r, c - 1)
                || !mask.get(r, c + 1))
    })
    .expect("dims come from an existing mask");
    BoundaryMap(boundary)
}
