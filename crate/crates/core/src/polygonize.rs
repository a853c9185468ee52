//! Geometric grouping of keypoints into a closed polygon.
//!
//! Starting from the leftmost keypoint (topmost among ties), the chain
//! repeatedly connects the current point to its nearest unvisited keypoint
//! and finally closes back to the start. Scores are ignored; only
//! coordinates drive the chaining, so the result does not depend on the
//! order of the input sequence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heatmap::Keypoint;

/// A point in continuous pixel coordinates (`x` = column, `y` = row).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

impl From<Keypoint> for Point {
    fn from(k: Keypoint) -> Self {
        Point::new(k.col as f64, k.row as f64)
    }
}

/// Implicitly closed polygon; the last vertex connects back to the first.
#[derive(Clone, Debug, PartialEq)]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InsufficientPoints {
                found: vertices.len(),
            });
        }
        if let Some(p) = vertices.iter().find(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(Error::Value(format!("non-finite polygon vertex ({}, {})", p.x, p.y)));
        }
        let n = vertices.len();
        for i in 0..n {
            if vertices[i] == vertices[(i + 1) % n] {
                return Err(Error::Value(format!(
                    "consecutive identical polygon vertices at ({}, {})",
                    vertices[i].x, vertices[i].y
                )));
            }
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Closed edges as `(start, end)` pairs.
    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Shoelace area; positive for counter-clockwise in a y-up frame.
    pub fn signed_area(&self) -> f64 {
        0.5 * self
            .edges()
            .map(|(a, b)| a.x * b.y - b.x * a.y)
            .sum::<f64>()
    }

    /// True when all vertices are collinear, so the enclosed region has no area.
    pub fn is_degenerate(&self) -> bool {
        let v = &self.vertices;
        v.iter().all(|&p| orient(v[0], v[1], p) == 0.0)
    }

    /// Whether any two non-adjacent edges touch or cross.
    pub fn is_self_intersecting(&self) -> bool {
        let n = self.vertices.len();
        let v = &self.vertices;
        for i in 0..n {
            let (a, b) = (v[i], v[(i + 1) % n]);
            for j in i + 2..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                let (c, d) = (v[j], v[(j + 1) % n]);
                if segments_intersect(a, b, c, d) {
                    return true;
                }
            }
        }
        false
    }

    pub fn reversed(&self) -> Self {
        let mut vertices = self.vertices.clone();
        vertices.reverse();
        Self { vertices }
    }

    pub fn to_file(&self) -> PolygonFile {
        PolygonFile {
            vertices: self.vertices.iter().map(|p| [p.x, p.y]).collect(),
            closed: true,
            self_intersecting: self.is_self_intersecting(),
        }
    }
}

/// JSON representation: `{"vertices": [[x, y], ...], "closed": true, "self_intersecting": bool}`.
/// On input `closed` defaults to true and `self_intersecting` is informational.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolygonFile {
    pub vertices: Vec<[f64; 2]>,
    #[serde(default = "closed_default")]
    pub closed: bool,
    #[serde(default)]
    pub self_intersecting: bool,
}

fn closed_default() -> bool {
    true
}

impl TryFrom<PolygonFile> for Polygon {
    type Error = Error;

    fn try_from(file: PolygonFile) -> Result<Self> {
        if !file.closed {
            return Err(Error::Value("only closed polygons are supported".into()));
        }
        Polygon::new(file.vertices.into_iter().map(|[x, y]| Point::new(x, y)).collect())
    }
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

/// Diagnostic record of one nearest-neighbor chaining run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupingTrace {
    /// Index into the input of the start keypoint.
    pub start_vertex: usize,
    /// Input indices in the order they were chained.
    pub visit_order: Vec<usize>,
    /// Steps where several unvisited keypoints were equally near.
    pub tie_events: usize,
}

/// Index of the leftmost keypoint, topmost among equal columns.
pub fn select_start(keypoints: &[Keypoint]) -> Result<usize> {
    keypoints
        .iter()
        .enumerate()
        .min_by_key(|(_, k)| (k.col, k.row))
        .map(|(i, _)| i)
        .ok_or(Error::EmptyInput("keypoints"))
}

/// Chain keypoints into a closed polygon by greedy nearest-neighbor linking.
///
/// Ties between equidistant candidates go to the smallest `(row, col)`.
/// The polygon's vertex order equals the visit order. Self-intersecting
/// results are returned as-is; check [`Polygon::is_self_intersecting`].
pub fn group_keypoints(keypoints: &[Keypoint]) -> Result<(Polygon, GroupingTrace)> {
    if keypoints.len() < 3 {
        return Err(Error::InsufficientPoints {
            found: keypoints.len(),
        });
    }
    let mut sorted: Vec<(usize, usize)> = keypoints.iter().map(Keypoint::location).collect();
    sorted.sort_unstable();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::DuplicatePoint {
            row: w[0].0,
            col: w[0].1,
        });
    }

    let n = keypoints.len();
    let start = select_start(keypoints)?;
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut tie_events = 0;
    let mut current = start;
    visited[start] = true;
    order.push(start);

    while order.len() < n {
        let here = keypoints[current];
        let mut best: Option<(u128, (usize, usize), usize)> = None;
        let mut tied = false;
        for (i, k) in keypoints.iter().enumerate() {
            if visited[i] {
                continue;
            }
            let dr = k.row.abs_diff(here.row) as u128;
            let dc = k.col.abs_diff(here.col) as u128;
            let key = (dr * dr + dc * dc, k.location(), i);
            match best {
                Some(b) if key.0 == b.0 => {
                    tied = true;
                    if key < b {
                        best = Some(key);
                    }
                }
                Some(b) if key.0 > b.0 => {}
                _ => {
                    tied = false;
                    best = Some(key);
                }
            }
        }
        let (_, _, next) = best.expect("unvisited keypoint remains");
        if tied {
            tie_events += 1;
        }
        visited[next] = true;
        order.push(next);
        current = next;
    }

    let polygon = Polygon::new(order.iter().map(|&i| Point::from(keypoints[i])).collect())?;
    Ok((
        polygon,
        GroupingTrace {
            start_vertex: start,
            visit_order: order,
            tie_events,
        },
    ))
}
