//! Data-driven regularization weights.
//!
//! Each weight is a non-decreasing function of the magnitude of the local
//! cube entry, so pixels with more activity in a window hold closer to the
//! data in that window. Frame `i < r` takes the weight of slice `i`; the
//! last frame `r` replicates slice `r - 1`.

use crate::cube::DataCube;
use crate::error::{Error, Result};
use crate::event::SensorGeometry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LambdaMode {
    /// `1 / (1 + exp(-|d|))`
    #[default]
    Sigmoid,
    /// `max(epsilon, |d|)`
    MaxAbs,
    /// `exp(|d|)`, saturating at `f64::MAX`
    Exponential,
}

pub const DEFAULT_EPSILON: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaConfig {
    mode: LambdaMode,
    epsilon: f64,
}

impl LambdaConfig {
    pub fn new(mode: LambdaMode, epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be finite and > 0, got {epsilon}")));
        }
        Ok(LambdaConfig { mode, epsilon })
    }

    pub fn mode(&self) -> LambdaMode {
        self.mode
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

impl Default for LambdaConfig {
    fn default() -> Self {
        LambdaConfig {
            mode: LambdaMode::Sigmoid,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

pub fn lambda_scalar(d: i32, config: &LambdaConfig) -> f64 {
    let a = d.unsigned_abs() as f64;
    match config.mode {
        LambdaMode::Sigmoid => 1.0 / (1.0 + (-a).exp()),
        LambdaMode::MaxAbs => config.epsilon.max(a),
        LambdaMode::Exponential => {
            let v = a.exp();
            if v.is_finite() {
                v
            } else {
                f64::MAX
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    Uniform(f64),
    /// Pixel-major, `n_frames` values per pixel.
    Dense(Vec<f64>),
    /// A shared background value with per-pixel overrides.
    Sparse {
        background: f64,
        offsets: Vec<usize>,
        overrides: Vec<(u32, f64)>,
    },
}

/// Per-pixel, per-frame positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaField {
    geometry: SensorGeometry,
    n_frames: usize,
    storage: Storage,
}

fn check_positive(v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Range(format!("regularization weight {v} must be finite and > 0")))
    }
}

impl LambdaField {
    pub fn uniform(geometry: SensorGeometry, n_frames: usize, value: f64) -> Result<Self> {
        check_positive(value)?;
        Ok(LambdaField {
            geometry,
            n_frames,
            storage: Storage::Uniform(value),
        })
    }

    /// `values` is pixel-major: `values[pixel * n_frames + frame]`.
    pub fn from_values(geometry: SensorGeometry, n_frames: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != geometry.pixel_count() * n_frames {
            return Err(Error::Shape(format!(
                "{} weights for {n_frames} frames on a {geometry} grid",
                values.len()
            )));
        }
        for &v in &values {
            check_positive(v)?;
        }
        Ok(LambdaField {
            geometry,
            n_frames,
            storage: Storage::Dense(values),
        })
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn get(&self, pixel: usize, frame: usize) -> f64 {
        match &self.storage {
            Storage::Uniform(v) => *v,
            Storage::Dense(values) => values[pixel * self.n_frames + frame],
            Storage::Sparse {
                background,
                offsets,
                overrides,
            } => {
                let own = &overrides[offsets[pixel]..offsets[pixel + 1]];
                match own.binary_search_by_key(&(frame as u32), |o| o.0) {
                    Ok(i) => own[i].1,
                    Err(_) => *background,
                }
            }
        }
    }

    /// Writes one pixel's `n_frames` weights into `out`.
    #[inline]
    pub fn fill_pixel(&self, pixel: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.n_frames);
        match &self.storage {
            Storage::Uniform(v) => out.fill(*v),
            Storage::Dense(values) => {
                out.copy_from_slice(&values[pixel * self.n_frames..(pixel + 1) * self.n_frames])
            }
            Storage::Sparse {
                background,
                offsets,
                overrides,
            } => {
                out.fill(*background);
                for &(frame, v) in &overrides[offsets[pixel]..offsets[pixel + 1]] {
                    out[frame as usize] = v;
                }
            }
        }
    }

    pub fn pixel_values(&self, pixel: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_frames];
        self.fill_pixel(pixel, &mut out);
        out
    }
}

/// Maps every cube entry through [`lambda_scalar`] to a field of `r + 1` frames.
pub fn compute_lambda(cube: &DataCube, config: &LambdaConfig) -> LambdaField {
    let geometry = cube.geometry();
    let r = cube.r();
    let n = geometry.pixel_count();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut overrides = Vec::with_capacity(cube.nonzero_count());
    offsets.push(0);
    for pixel in 0..n {
        let entries = cube.pixel_entries(pixel);
        overrides.extend(
            entries
                .iter()
                .map(|e| (e.slice, lambda_scalar(e.value, config))),
        );
        if let Some(last) = entries.last().filter(|e| e.slice as usize == r - 1) {
            overrides.push((r as u32, lambda_scalar(last.value, config)));
        }
        offsets.push(overrides.len());
    }
    LambdaField {
        geometry,
        n_frames: r + 1,
        storage: Storage::Sparse {
            background: lambda_scalar(0, config),
            offsets,
            overrides,
        },
    }
}
