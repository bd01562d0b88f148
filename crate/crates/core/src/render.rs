//! Dynamic-range normalization and netpbm encoding.

use std::io::Write;

use crate::error::{Error, Result};
use crate::solver::FrameStack;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormalizationMode {
    /// One min/max over the whole stack.
    #[default]
    Global,
    /// Each frame rescaled by its own min/max.
    PerFrame,
}

/// Affine map of `[min, max]` onto `[0, 1]`; a degenerate range maps to 0.5.
#[inline]
pub fn rescale(v: f64, min: f64, max: f64) -> f64 {
    if max > min {
        ((v - min) / (max - min)).clamp(0.0, 1.0)
    } else {
        0.5
    }
}

/// Running min/max accumulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const EMPTY: Range = Range {
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
    };

    #[inline]
    pub fn include(&mut self, v: f64) {
        self.min = self.min.min(v);
        self.max = self.max.max(v);
    }

    #[inline]
    pub fn merge(self, other: Range) -> Range {
        Range {
            min: self.min.min(other.min),
            max: self.max.max(other.max),
        }
    }

    #[inline]
    pub fn rescale(&self, v: f64) -> f64 {
        rescale(v, self.min, self.max)
    }
}

impl Default for Range {
    fn default() -> Self {
        Range::EMPTY
    }
}

/// Min/max tables in the shape a [`NormalizationMode`] needs.
#[derive(Debug, Clone, PartialEq)]
pub enum RangeTable {
    Global(Range),
    PerFrame(Vec<Range>),
}

impl RangeTable {
    pub fn empty(mode: NormalizationMode, n_frames: usize) -> Self {
        match mode {
            NormalizationMode::Global => RangeTable::Global(Range::EMPTY),
            NormalizationMode::PerFrame => RangeTable::PerFrame(vec![Range::EMPTY; n_frames]),
        }
    }

    /// Folds in one pixel's trajectory.
    #[inline]
    pub fn include_pixel(&mut self, values: &[f64]) {
        match self {
            RangeTable::Global(range) => values.iter().for_each(|&v| range.include(v)),
            RangeTable::PerFrame(ranges) => {
                for (range, &v) in ranges.iter_mut().zip(values) {
                    range.include(v);
                }
            }
        }
    }

    pub fn merge(self, other: RangeTable) -> RangeTable {
        match (self, other) {
            (RangeTable::Global(a), RangeTable::Global(b)) => RangeTable::Global(a.merge(b)),
            (RangeTable::PerFrame(mut a), RangeTable::PerFrame(b)) => {
                for (x, y) in a.iter_mut().zip(b) {
                    *x = x.merge(y);
                }
                RangeTable::PerFrame(a)
            }
            _ => unreachable!("range tables of different modes"),
        }
    }

    #[inline]
    pub fn range(&self, frame: usize) -> Range {
        match self {
            RangeTable::Global(range) => *range,
            RangeTable::PerFrame(ranges) => ranges[frame],
        }
    }

    /// Overall extent across all frames.
    pub fn overall(&self) -> Range {
        match self {
            RangeTable::Global(range) => *range,
            RangeTable::PerFrame(ranges) => {
                ranges.iter().fold(Range::EMPTY, |acc, r| acc.merge(*r))
            }
        }
    }
}

pub fn normalize(stack: &FrameStack, mode: NormalizationMode) -> Result<FrameStack> {
    if let Some(bad) = stack.data().iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("frame value {bad}")));
    }
    let n_frames = stack.n_frames();
    let mut table = RangeTable::empty(mode, n_frames);
    for pixel in 0..stack.geometry().pixel_count() {
        table.include_pixel(stack.pixel(pixel));
    }
    let data = stack
        .data()
        .chunks(n_frames)
        .flat_map(|px| {
            px.iter()
                .enumerate()
                .map(|(frame, &v)| table.range(frame).rescale(v))
                .collect::<Vec<_>>()
        })
        .collect();
    FrameStack::new(stack.geometry(), stack.frame_times().to_vec(), data)
}

/// Piecewise-linear RGB colormap over `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorMap {
    anchors: Vec<(f64, [u8; 3])>,
}

impl ColorMap {
    pub fn new(anchors: Vec<(f64, [u8; 3])>) -> Result<Self> {
        let ok = anchors.len() >= 2
            && anchors.first().map(|a| a.0) == Some(0.0)
            && anchors.last().map(|a| a.0) == Some(1.0)
            && anchors.windows(2).all(|w| w[0].0 < w[1].0);
        if !ok {
            return Err(Error::Config(
                "colormap anchors must increase strictly from 0.0 to 1.0".into(),
            ));
        }
        Ok(ColorMap { anchors })
    }

    pub fn anchors(&self) -> &[(f64, [u8; 3])] {
        &self.anchors
    }
}

impl Default for ColorMap {
    /// Blue at 0, green at 0.5, red at 1.
    fn default() -> Self {
        ColorMap {
            anchors: vec![(0.0, [0, 0, 255]), (0.5, [0, 255, 0]), (1.0, [255, 0, 0])],
        }
    }
}

pub fn apply_colormap(value: f64, map: &ColorMap) -> Result<[u8; 3]> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::Range(format!("colormap input {value} outside [0, 1]")));
    }
    let anchors = &map.anchors;
    let hi = anchors
        .iter()
        .position(|a| a.0 >= value)
        .unwrap_or(anchors.len() - 1)
        .max(1);
    let (u0, c0) = anchors[hi - 1];
    let (u1, c1) = anchors[hi];
    let w = (value - u0) / (u1 - u0);
    let mut rgb = [0u8; 3];
    for ch in 0..3 {
        let v = c0[ch] as f64 + w * (c1[ch] as f64 - c0[ch] as f64);
        rgb[ch] = v.round().clamp(0.0, 255.0) as u8;
    }
    Ok(rgb)
}

/// `round(255 v)`, half away from zero.
#[inline]
pub fn gray_level(v: f64) -> u8 {
    (255.0 * v).round().clamp(0.0, 255.0) as u8
}

pub(crate) fn write_netpbm_header<W: Write>(
    sink: &mut W,
    magic: &str,
    width: usize,
    height: usize,
) -> std::io::Result<()> {
    write!(sink, "{magic}\n{width} {height}\n255\n")
}

/// Binary P5 image of a row-major grid with values in `[0, 1]`.
pub fn write_pgm<W: Write>(width: usize, height: usize, frame: &[f64], mut sink: W) -> Result<()> {
    if frame.len() != width * height {
        return Err(Error::Shape(format!(
            "{} values for a {width}x{height} image",
            frame.len()
        )));
    }
    if let Some(bad) = frame.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Range(format!("gray value {bad} outside [0, 1]")));
    }
    let payload: Vec<u8> = frame.iter().map(|&v| gray_level(v)).collect();
    write_netpbm_header(&mut sink, "P5", width, height)?;
    sink.write_all(&payload)?;
    sink.flush()?;
    Ok(())
}

/// Binary P6 image of row-major RGB triples.
pub fn write_ppm<W: Write>(
    width: usize,
    height: usize,
    pixels: &[[u8; 3]],
    mut sink: W,
) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::Shape(format!(
            "{} pixels for a {width}x{height} image",
            pixels.len()
        )));
    }
    write_netpbm_header(&mut sink, "P6", width, height)?;
    sink.write_all(pixels.as_flattened())?;
    sink.flush()?;
    Ok(())
}

pub fn frame_file_name(index: usize, extension: &str) -> String {
    format!("frame_{index:06}.{extension}")
}
