//! Rigid terrain as a regular heightmap grid, plus 2D signed-distance
//! geometry for obstacles and path boundaries.
//!
//! Grid node `(i, j)` sits at `(origin_x + i * resolution, origin_y + j *
//! resolution)`. Queries between nodes are bilinear; queries outside the grid
//! clamp to the boundary, so the terrain extends flat past its edges.

mod io;
mod sdf;
mod smooth;
mod synth;

pub use io::{read_heightmap, write_heightmap};
pub use sdf::{build_sdist_map, signed_distance, Perimeter, PerimeterKind, SignedDistanceMap};
pub use smooth::{attenuation, gaussian_kernel, gaussian_smooth};
pub use synth::{synth_terrain, TerrainSpec};

use serde::{Deserialize, Serialize};

use crate::math::Vec3;
use crate::{Error, Real, Result};

/// Placement and size of a regular grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec<T = f64> {
    pub origin_x: T,
    pub origin_y: T,
    pub resolution: T,
    pub nx: usize,
    pub ny: usize,
}

impl<T: Real> GridSpec<T> {
    pub fn new(origin_x: T, origin_y: T, resolution: T, nx: usize, ny: usize) -> Result<Self> {
        let spec = Self {
            origin_x,
            origin_y,
            resolution,
            nx,
            ny,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::config(format!(
                "grid must be at least 2x2, got {}x{}",
                self.nx, self.ny
            )));
        }
        if !(self.resolution > T::zero()) || !self.resolution.is_finite() {
            return Err(Error::config(format!(
                "grid resolution must be positive, got {}",
                self.resolution
            )));
        }
        if !self.origin_x.is_finite() || !self.origin_y.is_finite() {
            return Err(Error::config("grid origin must be finite"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline(always)]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// World coordinates of node `(i, j)`.
    #[inline(always)]
    pub fn node(&self, i: usize, j: usize) -> (T, T) {
        (
            self.origin_x + T::from_usize(i).unwrap() * self.resolution,
            self.origin_y + T::from_usize(j).unwrap() * self.resolution,
        )
    }

    pub fn x_max(&self) -> T {
        self.origin_x + T::from_usize(self.nx - 1).unwrap() * self.resolution
    }

    pub fn y_max(&self) -> T {
        self.origin_y + T::from_usize(self.ny - 1).unwrap() * self.resolution
    }

    pub fn cast<U: Real>(&self) -> GridSpec<U> {
        GridSpec {
            origin_x: U::lit(self.origin_x.as_f64()),
            origin_y: U::lit(self.origin_y.as_f64()),
            resolution: U::lit(self.resolution.as_f64()),
            nx: self.nx,
            ny: self.ny,
        }
    }
}

/// Row-major scalar field over a [`GridSpec`], sampled bilinearly.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid<T = f64> {
    spec: GridSpec<T>,
    values: Vec<T>,
}

impl<T: Real> ScalarGrid<T> {
    pub fn new(spec: GridSpec<T>, values: Vec<T>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.len() {
            return Err(Error::config(format!(
                "grid expects {} values, got {}",
                spec.len(),
                values.len()
            )));
        }
        Ok(Self { spec, values })
    }

    pub fn from_fn(spec: GridSpec<T>, mut f: impl FnMut(T, T) -> T) -> Result<Self> {
        spec.validate()?;
        let mut values = Vec::with_capacity(spec.len());
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                let (x, y) = spec.node(i, j);
                values.push(f(x, y));
            }
        }
        Ok(Self { spec, values })
    }

    pub fn spec(&self) -> &GridSpec<T> {
        &self.spec
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline(always)]
    pub fn at(&self, i: usize, j: usize) -> T {
        self.values[self.spec.index(i, j)]
    }

    /// Bilinear interpolation with boundary clamping. If any of the four
    /// surrounding nodes is non-finite the largest of them is returned.
    #[inline]
    pub fn sample(&self, x: T, y: T) -> T {
        let s = &self.spec;
        let inv = s.resolution.recip();
        // max/min map NaN queries onto the origin cell
        let gx = ((x - s.origin_x) * inv)
            .max(T::zero())
            .as_f64()
            .min((s.nx - 1) as f64);
        let gy = ((y - s.origin_y) * inv)
            .max(T::zero())
            .as_f64()
            .min((s.ny - 1) as f64);
        let i0 = (gx as usize).min(s.nx - 2);
        let j0 = (gy as usize).min(s.ny - 2);
        let fx = T::lit(gx - i0 as f64);
        let fy = T::lit(gy - j0 as f64);
        let base = j0 * s.nx + i0;
        let v00 = self.values[base];
        let v10 = self.values[base + 1];
        let v01 = self.values[base + s.nx];
        let v11 = self.values[base + s.nx + 1];
        if !(v00.is_finite() && v10.is_finite() && v01.is_finite() && v11.is_finite()) {
            return v00.max(v10).max(v01).max(v11);
        }
        let a = v00 + (v10 - v00) * fx;
        let b = v01 + (v11 - v01) * fx;
        a + (b - a) * fy
    }

    pub fn cast<U: Real>(&self) -> ScalarGrid<U> {
        ScalarGrid {
            spec: self.spec.cast(),
            values: self.values.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

/// Rigid terrain heights in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct Heightmap<T = f64> {
    grid: ScalarGrid<T>,
}

impl<T: Real> Heightmap<T> {
    pub fn new(spec: GridSpec<T>, heights: Vec<T>) -> Result<Self> {
        if let Some(k) = heights.iter().position(|h| !h.is_finite()) {
            return Err(Error::config(format!("non-finite height at index {k}")));
        }
        Ok(Self {
            grid: ScalarGrid::new(spec, heights)?,
        })
    }

    pub fn from_fn(spec: GridSpec<T>, f: impl FnMut(T, T) -> T) -> Result<Self> {
        let grid = ScalarGrid::from_fn(spec, f)?;
        if grid.values.iter().any(|h| !h.is_finite()) {
            return Err(Error::config("height function produced non-finite values"));
        }
        Ok(Self { grid })
    }

    pub fn flat(spec: GridSpec<T>, height: T) -> Result<Self> {
        Self::from_fn(spec, |_, _| height)
    }

    pub fn spec(&self) -> &GridSpec<T> {
        &self.grid.spec
    }

    pub fn heights(&self) -> &[T] {
        &self.grid.values
    }

    pub fn grid(&self) -> &ScalarGrid<T> {
        &self.grid
    }

    /// Terrain height `f(x, y)`.
    #[inline]
    pub fn height_at(&self, x: T, y: T) -> T {
        self.grid.sample(x, y)
    }

    /// Partial derivatives `(f_x, f_y)` by central differences of
    /// [`height_at`](Self::height_at) with a one-cell step. Near the grid edge
    /// the stencil is cut at the boundary; outside the grid the slope is zero.
    #[inline]
    pub fn gradient_at(&self, x: T, y: T) -> (T, T) {
        let s = &self.grid.spec;
        let r = s.resolution;
        let (x0, x1) = (s.origin_x, s.x_max());
        let (y0, y1) = (s.origin_y, s.y_max());
        let xl = (x - r).max(x0).min(x1);
        let xh = (x + r).max(x0).min(x1);
        let yl = (y - r).max(y0).min(y1);
        let yh = (y + r).max(y0).min(y1);
        let fx = if xh > xl {
            (self.height_at(xh, y) - self.height_at(xl, y)) / (xh - xl)
        } else {
            T::zero()
        };
        let fy = if yh > yl {
            (self.height_at(x, yh) - self.height_at(x, yl)) / (yh - yl)
        } else {
            T::zero()
        };
        (fx, fy)
    }

    /// Upward unit surface normal, proportional to `[-f_x, -f_y, 1]`.
    #[inline]
    pub fn normal_at(&self, x: T, y: T) -> Vec3<T> {
        let (fx, fy) = self.gradient_at(x, y);
        unit_normal(fx, fy)
    }

    pub fn cast<U: Real>(&self) -> Heightmap<U> {
        Heightmap {
            grid: self.grid.cast(),
        }
    }
}

/// Normalizes `[-f_x, -f_y, 1]`.
#[inline]
pub fn unit_normal<T: Real>(fx: T, fy: T) -> Vec3<T> {
    let inv = (fx * fx + fy * fy + T::one()).sqrt().recip();
    [-fx * inv, -fy * inv, inv]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(nx: usize, ny: usize, res: f64) -> GridSpec<f64> {
        GridSpec::<f64>::new(0.0, 0.0, res, nx, ny).unwrap()
    }

    #[test]
    fn constant_map_is_constant_everywhere() {
        let m = Heightmap::flat(spec(5, 4, 0.5), 2.0).unwrap();
        for &(x, y) in &[(0.0, 0.0), (0.3, 1.1), (-10.0, 50.0), (1.99, 1.49)] {
            assert_eq!(m.height_at(x, y), 2.0);
            assert_eq!(m.gradient_at(x, y), (0.0, 0.0));
            assert_eq!(m.normal_at(x, y), [0.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn nodes_return_stored_heights() {
        let s = spec(4, 3, 0.25);
        let m = Heightmap::from_fn(s, |x, y| x * 3.0 - y * y + 0.1).unwrap();
        for j in 0..3 {
            for i in 0..4 {
                let (x, y) = s.node(i, j);
                assert_eq!(m.height_at(x, y), m.heights()[s.index(i, j)]);
            }
        }
    }

    #[test]
    fn two_by_two_mid_cell() {
        // rows are y-major: y=0 row is {0,0}, y=1 row is {1,1}
        let m = Heightmap::new(spec(2, 2, 1.0), vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert!((m.height_at(0.5, 0.5) - 0.5).abs() < 1e-15);
        assert!((m.height_at(0.25, 0.75) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn plane_gradient_is_exact() {
        let m = Heightmap::from_fn(spec(40, 30, 0.2), |x, y| 0.1 * x - 0.05 * y + 1.0).unwrap();
        for &(x, y) in &[
            (1.0, 1.0),
            (3.33, 2.71),
            (0.0, 0.0),
            (7.8, 5.8),
            (0.05, 5.7),
        ] {
            let (fx, fy) = m.gradient_at(x, y);
            assert!((fx - 0.1).abs() < 1e-9, "fx={fx} at ({x},{y})");
            assert!((fy + 0.05).abs() < 1e-9, "fy={fy} at ({x},{y})");
        }
    }

    #[test]
    fn sinusoid_gradient_is_second_order() {
        let lambda = 4.0;
        let k = 2.0 * std::f64::consts::PI / lambda;
        let err_at = |res: f64| {
            let n = (20.0 / res) as usize + 1;
            let m = Heightmap::from_fn(spec(n, 3, res), |x, _| (k * x).sin()).unwrap();
            // nodes only, so the bilinear interpolant does not add error
            (20..n - 20)
                .map(|i| {
                    let x = i as f64 * res;
                    (m.gradient_at(x, res).0 - k * (k * x).cos()).abs()
                })
                .fold(0.0, f64::max)
        };
        let e1 = err_at(0.1);
        let e2 = err_at(0.05);
        assert!(e1 < k.powi(3) * 0.1 * 0.1 / 6.0 * 1.01, "e1={e1}");
        assert!((e1 / e2 - 4.0).abs() < 0.2, "ratio {}", e1 / e2);
    }

    #[test]
    fn normal_of_unit_slope() {
        let m = Heightmap::from_fn(spec(10, 10, 0.5), |x, _| x).unwrap();
        let n = m.normal_at(2.0, 2.0);
        assert!((n[2] - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!((n[0] + 1.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn out_of_bounds_clamps() {
        let m = Heightmap::from_fn(spec(3, 3, 1.0), |x, y| x + 10.0 * y).unwrap();
        assert_eq!(m.height_at(-5.0, -5.0), 0.0);
        assert_eq!(m.height_at(9.0, 9.0), 22.0);
        assert_eq!(m.gradient_at(9.0, 1.0).0, 0.0);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(GridSpec::<f64>::new(0.0, 0.0, 1.0, 1, 5).is_err());
        assert!(GridSpec::<f64>::new(0.0, 0.0, 0.0, 3, 5).is_err());
        assert!(Heightmap::new(spec(2, 2, 1.0), vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
        assert!(Heightmap::new(spec(2, 2, 1.0), vec![0.0; 3]).is_err());
    }

    #[test]
    fn works_in_f32() {
        let s = GridSpec::<f32>::new(0.0, 0.0, 0.5, 8, 8).unwrap();
        let m = Heightmap::from_fn(s, |x, _| 0.2 * x).unwrap();
        let (fx, fy) = m.gradient_at(1.3, 1.1);
        assert!((fx - 0.2).abs() < 1e-5 && fy.abs() < 1e-6);
    }
}
