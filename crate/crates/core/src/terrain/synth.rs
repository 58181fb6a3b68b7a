use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GridSpec, Heightmap};
use crate::{Error, Real, Result};

/// Synthetic terrain generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TerrainSpec {
    Flat {
        #[serde(default)]
        height: f64,
    },
    /// Plane `z = height + slope_x * x + slope_y * y`.
    Ramp {
        slope_x: f64,
        #[serde(default)]
        slope_y: f64,
        #[serde(default)]
        height: f64,
    },
    /// Parallel ridges `z = amplitude * sin(2π (s - start) / wavelength)`
    /// where `s` is the coordinate along `heading`. Outside `[start, end]`
    /// the terrain is flat at zero.
    SineRidge {
        amplitude: f64,
        wavelength: f64,
        #[serde(default)]
        heading: f64,
        #[serde(default)]
        start: Option<f64>,
        #[serde(default)]
        end: Option<f64>,
    },
    /// Sum of `count` Gaussian bumps with random centers inside the grid and
    /// random signed peak heights in `[-amplitude, amplitude]`.
    BumpField {
        seed: u64,
        count: usize,
        amplitude: f64,
        radius: f64,
    },
}

impl TerrainSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!(
                    "terrain parameter `{name}` must be finite"
                )))
            }
        };
        match *self {
            TerrainSpec::Flat { height } => finite("height", height),
            TerrainSpec::Ramp {
                slope_x,
                slope_y,
                height,
            } => {
                finite("slope_x", slope_x)?;
                finite("slope_y", slope_y)?;
                finite("height", height)
            }
            TerrainSpec::SineRidge {
                amplitude,
                wavelength,
                heading,
                start,
                end,
            } => {
                finite("amplitude", amplitude)?;
                finite("heading", heading)?;
                if !(wavelength > 0.0) || !wavelength.is_finite() {
                    return Err(Error::config("sine_ridge wavelength must be positive"));
                }
                if let (Some(s), Some(e)) = (start, end) {
                    if !(e > s) {
                        return Err(Error::config("sine_ridge requires end > start"));
                    }
                }
                Ok(())
            }
            TerrainSpec::BumpField {
                amplitude, radius, ..
            } => {
                finite("amplitude", amplitude)?;
                if !(radius > 0.0) || !radius.is_finite() {
                    return Err(Error::config("bump_field radius must be positive"));
                }
                Ok(())
            }
        }
    }
}

/// Generates a synthetic heightmap. Deterministic for a given spec.
pub fn synth_terrain<T: Real>(spec: &TerrainSpec, grid: GridSpec<T>) -> Result<Heightmap<T>> {
    spec.validate()?;
    grid.validate()?;
    match *spec {
        TerrainSpec::Flat { height } => Heightmap::flat(grid, T::lit(height)),
        TerrainSpec::Ramp {
            slope_x,
            slope_y,
            height,
        } => Heightmap::from_fn(grid, |x, y| {
            T::lit(height + slope_x * x.as_f64() + slope_y * y.as_f64())
        }),
        TerrainSpec::SineRidge {
            amplitude,
            wavelength,
            heading,
            start,
            end,
        } => {
            let (c, s) = (heading.cos(), heading.sin());
            let k = 2.0 * std::f64::consts::PI / wavelength;
            let start_s = start.unwrap_or(f64::NEG_INFINITY);
            let end_s = end.unwrap_or(f64::INFINITY);
            let phase0 = start.unwrap_or(0.0);
            Heightmap::from_fn(grid, |x, y| {
                let along = x.as_f64() * c + y.as_f64() * s;
                if along < start_s || along > end_s {
                    T::zero()
                } else {
                    T::lit(amplitude * (k * (along - phase0)).sin())
                }
            })
        }
        TerrainSpec::BumpField {
            seed,
            count,
            amplitude,
            radius,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (x0, y0) = (grid.origin_x.as_f64(), grid.origin_y.as_f64());
            let (x1, y1) = (grid.x_max().as_f64(), grid.y_max().as_f64());
            let bumps: Vec<(f64, f64, f64)> = (0..count)
                .map(|_| {
                    (
                        rng.gen_range(x0..=x1),
                        rng.gen_range(y0..=y1),
                        rng.gen_range(-amplitude..=amplitude),
                    )
                })
                .collect();
            let inv = 1.0 / (2.0 * radius * radius);
            Heightmap::from_fn(grid, |x, y| {
                let (x, y) = (x.as_f64(), y.as_f64());
                T::lit(
                    bumps
                        .iter()
                        .map(|&(bx, by, a)| {
                            a * (-((x - bx).powi(2) + (y - by).powi(2)) * inv).exp()
                        })
                        .sum(),
                )
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec<f64> {
        GridSpec::<f64>::new(0.0, 0.0, 0.25, 41, 33).unwrap()
    }

    #[test]
    fn flat_is_constant() {
        let m = synth_terrain(&TerrainSpec::Flat { height: 0.0 }, grid()).unwrap();
        assert!(m.heights().iter().all(|&h| h == 0.0));
    }

    #[test]
    fn ramp_gradient() {
        let spec = TerrainSpec::Ramp {
            slope_x: 0.1,
            slope_y: 0.0,
            height: 0.0,
        };
        let m = synth_terrain(&spec, grid()).unwrap();
        let (fx, fy) = m.gradient_at(4.2, 3.3);
        assert!((fx - 0.1).abs() < 1e-9 && fy.abs() < 1e-9);
    }

    #[test]
    fn bump_field_is_deterministic() {
        let spec = TerrainSpec::BumpField {
            seed: 7,
            count: 12,
            amplitude: 0.4,
            radius: 0.8,
        };
        let a = synth_terrain(&spec, grid()).unwrap();
        let b = synth_terrain(&spec, grid()).unwrap();
        assert_eq!(a, b);
        let other = TerrainSpec::BumpField {
            seed: 8,
            count: 12,
            amplitude: 0.4,
            radius: 0.8,
        };
        assert_ne!(a, synth_terrain(&other, grid()).unwrap());
    }

    #[test]
    fn sine_ridge_is_bounded_to_its_band() {
        let spec = TerrainSpec::SineRidge {
            amplitude: 0.35,
            wavelength: 4.0,
            heading: 0.0,
            start: Some(2.0),
            end: Some(6.0),
        };
        let m = synth_terrain(&spec, grid()).unwrap();
        assert_eq!(m.height_at(1.0, 3.0), 0.0);
        assert_eq!(m.height_at(8.0, 3.0), 0.0);
        assert!((m.height_at(3.0, 3.0) - 0.35).abs() < 1e-12);
    }

    #[test]
    fn invalid_params_are_config_errors() {
        let bad = TerrainSpec::SineRidge {
            amplitude: 1.0,
            wavelength: 0.0,
            heading: 0.0,
            start: None,
            end: None,
        };
        assert!(matches!(synth_terrain(&bad, grid()), Err(Error::Config(_))));
        let bad = TerrainSpec::BumpField {
            seed: 1,
            count: 3,
            amplitude: 1.0,
            radius: -1.0,
        };
        assert!(synth_terrain(&bad, grid()).is_err());
    }

    #[test]
    fn spec_parses_from_json() {
        let s: TerrainSpec =
            serde_json::from_str(r#"{"kind":"sine_ridge","amplitude":0.35,"wavelength":4.0}"#)
                .unwrap();
        assert!(matches!(s, TerrainSpec::SineRidge { heading, .. } if heading == 0.0));
        assert!(serde_json::from_str::<TerrainSpec>(r#"{"kind":"volcano"}"#).is_err());
    }
}
