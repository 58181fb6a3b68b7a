use serde::{Deserialize, Serialize};

use super::{GridSpec, ScalarGrid};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerimeterKind {
    /// Keep-out region: signed distance is negative inside.
    Obstacle,
    /// Keep-in region: signed distance is positive inside.
    PathBoundary,
}

/// Simple closed polygon with a kind-specific sign convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perimeter<T = f64> {
    pub kind: PerimeterKind,
    pub vertices: Vec<[T; 2]>,
}

impl<T: Real> Perimeter<T> {
    pub fn new(kind: PerimeterKind, vertices: Vec<[T; 2]>) -> Result<Self> {
        let p = Self { kind, vertices };
        p.validate()?;
        Ok(p)
    }

    pub fn obstacle(vertices: Vec<[T; 2]>) -> Result<Self> {
        Self::new(PerimeterKind::Obstacle, vertices)
    }

    pub fn path_boundary(vertices: Vec<[T; 2]>) -> Result<Self> {
        Self::new(PerimeterKind::PathBoundary, vertices)
    }

    /// Axis-aligned rectangle helper.
    pub fn rect(kind: PerimeterKind, x0: T, y0: T, x1: T, y1: T) -> Result<Self> {
        Self::new(kind, vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if n < 3 {
            return Err(Error::config(format!(
                "perimeter needs >= 3 vertices, got {n}"
            )));
        }
        if self.vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::config("perimeter has non-finite vertices"));
        }
        if self.signed_area().abs() <= T::epsilon() {
            return Err(Error::config("perimeter has zero area"));
        }
        for a in 0..n {
            for b in (a + 1)..n {
                let adjacent = b == a + 1 || (a == 0 && b == n - 1);
                if adjacent {
                    continue;
                }
                let (p1, p2) = (self.vertices[a], self.vertices[(a + 1) % n]);
                let (q1, q2) = (self.vertices[b], self.vertices[(b + 1) % n]);
                if segments_intersect(p1, p2, q1, q2) {
                    return Err(Error::config(format!(
                        "perimeter self-intersects between edges {a} and {b}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn signed_area(&self) -> T {
        let n = self.vertices.len();
        let mut acc = T::zero();
        for k in 0..n {
            let [x0, y0] = self.vertices[k];
            let [x1, y1] = self.vertices[(k + 1) % n];
            acc = acc + x0 * y1 - x1 * y0;
        }
        acc * T::lit(0.5)
    }

    /// Even-odd point-in-polygon test.
    pub fn contains(&self, p: [T; 2]) -> bool {
        let n = self.vertices.len();
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let [xi, yi] = self.vertices[i];
            let [xj, yj] = self.vertices[j];
            if (yi > p[1]) != (yj > p[1]) {
                let x_cross = xj + (p[1] - yj) * (xi - xj) / (yi - yj);
                if p[0] < x_cross {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    /// Unsigned distance to the nearest edge.
    pub fn edge_distance(&self, p: [T; 2]) -> T {
        let n = self.vertices.len();
        (0..n)
            .map(|k| point_segment_distance(p, self.vertices[k], self.vertices[(k + 1) % n]))
            .fold(T::infinity(), T::min)
    }
}

fn point_segment_distance<T: Real>(p: [T; 2], a: [T; 2], b: [T; 2]) -> T {
    let (abx, aby) = (b[0] - a[0], b[1] - a[1]);
    let (apx, apy) = (p[0] - a[0], p[1] - a[1]);
    let len2 = abx * abx + aby * aby;
    let t = if len2 > T::zero() {
        ((apx * abx + apy * aby) / len2)
            .max(T::zero())
            .min(T::one())
    } else {
        T::zero()
    };
    let dx = apx - t * abx;
    let dy = apy - t * aby;
    (dx * dx + dy * dy).sqrt()
}

fn orient<T: Real>(a: [T; 2], b: [T; 2], c: [T; 2]) -> T {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment<T: Real>(a: [T; 2], b: [T; 2], p: [T; 2]) -> bool {
    p[0] >= a[0].min(b[0])
        && p[0] <= a[0].max(b[0])
        && p[1] >= a[1].min(b[1])
        && p[1] <= a[1].max(b[1])
}

fn segments_intersect<T: Real>(p1: [T; 2], p2: [T; 2], q1: [T; 2], q2: [T; 2]) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    let zero = T::zero();
    if ((d1 > zero && d2 < zero) || (d1 < zero && d2 > zero))
        && ((d3 > zero && d4 < zero) || (d3 < zero && d4 > zero))
    {
        return true;
    }
    (d1 == zero && on_segment(q1, q2, p1))
        || (d2 == zero && on_segment(q1, q2, p2))
        || (d3 == zero && on_segment(p1, p2, q1))
        || (d4 == zero && on_segment(p1, p2, q2))
}

/// Signed minimum 2D distance from `point` to the perimeter.
///
/// Obstacles are negative inside and positive outside; path boundaries are
/// the reverse.
pub fn signed_distance<T: Real>(point: [T; 2], p: &Perimeter<T>) -> T {
    let d = p.edge_distance(point);
    let inside = p.contains(point);
    match (p.kind, inside) {
        (PerimeterKind::Obstacle, true) | (PerimeterKind::PathBoundary, false) => -d,
        _ => d,
    }
}

/// Precomputed signed distance to the nearest feature, sampled bilinearly.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedDistanceMap<T = f64> {
    grid: ScalarGrid<T>,
    featureless: bool,
}

impl<T: Real> SignedDistanceMap<T> {
    pub fn spec(&self) -> &GridSpec<T> {
        self.grid.spec()
    }

    pub fn values(&self) -> &[T] {
        self.grid.values()
    }

    /// `true` when no perimeter contributed (all cells are `+inf`).
    pub fn is_featureless(&self) -> bool {
        self.featureless
    }

    #[inline]
    pub fn sdist_at(&self, x: T, y: T) -> T {
        self.grid.sample(x, y)
    }

    pub fn cast<U: Real>(&self) -> SignedDistanceMap<U> {
        SignedDistanceMap {
            grid: self.grid.cast(),
            featureless: self.featureless,
        }
    }
}

/// Evaluates the per-node minimum of every perimeter's signed distance.
/// With no perimeters every node holds `+inf`.
pub fn build_sdist_map<T: Real>(
    spec: GridSpec<T>,
    perimeters: &[Perimeter<T>],
) -> Result<SignedDistanceMap<T>> {
    let grid = ScalarGrid::from_fn(spec, |x, y| {
        perimeters
            .iter()
            .map(|p| signed_distance([x, y], p))
            .fold(T::infinity(), T::min)
    })?;
    let featureless = grid.values().iter().all(|v| *v == T::infinity());
    Ok(SignedDistanceMap { grid, featureless })
}
