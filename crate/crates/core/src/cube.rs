//! Count-window binning of the global event stream.
//!
//! Slice `π` (0-based here) holds, for every pixel, the polarity sum of the
//! global events with indices `π*k .. (π+1)*k`. Windows are taken over the
//! interleaved stream of all pixels, so every slice covers the same number
//! of events and the cube stays rectangular.
//!
//! Event cameras are sparse: a slice of `k` events touches at most `k`
//! pixels. The cube is therefore stored pixel-major with only the non-zero
//! entries kept, which also hands the solver each pixel's time series as a
//! contiguous run.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::event::{EventStream, SensorGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CubeConfig {
    k: usize,
    nu: Option<usize>,
}

impl CubeConfig {
    /// `k` events per window; `nu` caps the number of events used
    /// (`None` uses the whole stream).
    pub fn new(k: usize, nu: Option<usize>) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("events per window k must be >= 1".into()));
        }
        if let Some(nu) = nu {
            if nu < k {
                return Err(Error::Config(format!(
                    "total events nu = {nu} is smaller than k = {k}, no window fits"
                )));
            }
        }
        Ok(CubeConfig { k, nu })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn nu(&self) -> Option<usize> {
        self.nu
    }
}

/// One non-zero cube entry of a pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CubeEntry {
    pub slice: u32,
    pub value: i32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataCube {
    geometry: SensorGeometry,
    k: usize,
    r: usize,
    boundary_times: Vec<f64>,
    offsets: Vec<usize>,
    entries: Vec<CubeEntry>,
}

impl DataCube {
    /// Builds a cube from dense slices, each a row-major grid.
    pub fn from_slices(
        geometry: SensorGeometry,
        k: usize,
        boundary_times: Vec<f64>,
        slices: &[Vec<i32>],
    ) -> Result<Self> {
        let r = slices.len();
        if r == 0 || k == 0 {
            return Err(Error::Config(format!("cube needs r >= 1 and k >= 1 (r = {r}, k = {k})")));
        }
        if boundary_times.len() != r + 1 {
            return Err(Error::Shape(format!(
                "{} boundary times for {r} slices",
                boundary_times.len()
            )));
        }
        let n = geometry.pixel_count();
        if let Some(bad) = slices.iter().position(|s| s.len() != n) {
            return Err(Error::Shape(format!("slice {bad} does not match {geometry}")));
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut entries = Vec::new();
        offsets.push(0);
        for pixel in 0..n {
            for (slice, grid) in slices.iter().enumerate() {
                let value = grid[pixel];
                if value.unsigned_abs() as usize > k {
                    return Err(Error::Range(format!(
                        "entry {value} at slice {slice}, pixel {pixel} exceeds k = {k}"
                    )));
                }
                if value != 0 {
                    entries.push(CubeEntry {
                        slice: slice as u32,
                        value,
                    });
                }
            }
            offsets.push(entries.len());
        }
        Ok(DataCube {
            geometry,
            k,
            r,
            boundary_times,
            offsets,
            entries,
        })
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of slices.
    pub fn r(&self) -> usize {
        self.r
    }

    /// Frame count of the reconstruction, `r + 1`.
    pub fn n_frames(&self) -> usize {
        self.r + 1
    }

    pub fn boundary_times(&self) -> &[f64] {
        &self.boundary_times
    }

    /// Non-zero entries of one pixel, ascending by slice.
    #[inline]
    pub fn pixel_entries(&self, pixel: usize) -> &[CubeEntry] {
        &self.entries[self.offsets[pixel]..self.offsets[pixel + 1]]
    }

    /// Writes the pixel's `r` slice values into `out`.
    #[inline]
    pub fn fill_pixel_series(&self, pixel: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.r);
        out.fill(0.0);
        for e in self.pixel_entries(pixel) {
            out[e.slice as usize] = e.value as f64;
        }
    }

    pub fn get(&self, slice: usize, x: u16, y: u16) -> i32 {
        let entries = self.pixel_entries(self.geometry.index(x, y));
        match entries.binary_search_by_key(&(slice as u32), |e| e.slice) {
            Ok(i) => entries[i].value,
            Err(_) => 0,
        }
    }

    /// Dense row-major grid of one slice.
    pub fn slice_grid(&self, slice: usize) -> Vec<i32> {
        let mut grid = vec![0; self.geometry.pixel_count()];
        for (pixel, v) in grid.iter_mut().enumerate() {
            let entries = self.pixel_entries(pixel);
            if let Ok(i) = entries.binary_search_by_key(&(slice as u32), |e| e.slice) {
                *v = entries[i].value;
            }
        }
        grid
    }

    pub fn nonzero_count(&self) -> usize {
        self.entries.len()
    }

    pub fn grand_total(&self) -> i64 {
        self.entries.iter().map(|e| e.value as i64).sum()
    }

    /// Text dump: a `width height r k` header line, then each slice as
    /// `height` lines of `width` space-separated integers.
    pub fn write_text<W: Write>(&self, mut sink: W) -> std::io::Result<()> {
        let (w, h) = (self.geometry.width(), self.geometry.height());
        writeln!(sink, "{w} {h} {} {}", self.r, self.k)?;
        for slice in 0..self.r {
            let grid = self.slice_grid(slice);
            for row in grid.chunks(w) {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                writeln!(sink, "{}", line.join(" "))?;
            }
        }
        sink.flush()
    }

    /// Reads a dump written by [`DataCube::write_text`]. Boundary times are
    /// not part of the dump and are set to the window indices `0..=r`.
    pub fn read_text<R: BufRead>(source: R) -> Result<Self> {
        let mut numbers = Vec::new();
        for line in source.lines() {
            for tok in line?.split_whitespace() {
                let v: i64 = tok
                    .parse()
                    .map_err(|_| Error::Range(format!("bad integer `{tok}` in cube dump")))?;
                numbers.push(v);
            }
        }
        if numbers.len() < 4 {
            return Err(Error::Shape("cube dump header is incomplete".into()));
        }
        let dim = |v: i64, name: &str| -> Result<u16> {
            u16::try_from(v).map_err(|_| Error::Range(format!("bad {name} {v} in cube header")))
        };
        let geometry = SensorGeometry::new(dim(numbers[0], "width")?, dim(numbers[1], "height")?)?;
        let r = numbers[2].max(0) as usize;
        let k = numbers[3].max(0) as usize;
        let n = geometry.pixel_count();
        let body = &numbers[4..];
        if body.len() != r * n {
            return Err(Error::Shape(format!(
                "cube dump has {} values, expected {}",
                body.len(),
                r * n
            )));
        }
        let slices: Vec<Vec<i32>> = body
            .chunks(n.max(1))
            .map(|c| c.iter().map(|&v| v as i32).collect())
            .collect();
        DataCube::from_slices(geometry, k, (0..=r).map(|i| i as f64).collect(), &slices)
    }
}

/// Bins the first `r * k` events of the stream, `r = floor(min(nu, len) / k)`.
pub fn build_cube(stream: &EventStream, config: &CubeConfig) -> Result<DataCube> {
    let geometry = stream.geometry();
    let available = stream.len();
    let nu = match config.nu {
        Some(nu) if nu > available => {
            log::warn!("requested nu = {nu} events but only {available} available; clamping");
            available
        }
        Some(nu) => nu,
        None => available,
    };
    let k = config.k;
    let r = nu / k;
    if r == 0 {
        return Err(Error::Config(format!(
            "{nu} usable events are fewer than k = {k}; no window can be formed"
        )));
    }
    if r > u32::MAX as usize {
        return Err(Error::Config(format!("{r} windows exceed the supported slice count")));
    }
    let used = &stream.events()[..r * k];

    let n = geometry.pixel_count();
    let mut counts = vec![0usize; n + 1];
    for ev in used {
        counts[geometry.index(ev.x, ev.y) + 1] += 1;
    }
    for i in 0..n {
        counts[i + 1] += counts[i];
    }
    // raw (slice, sign) records bucketed by pixel, slices ascending within a bucket
    let mut raw = vec![CubeEntry { slice: 0, value: 0 }; used.len()];
    let mut cursor = counts.clone();
    for (i, ev) in used.iter().enumerate() {
        let pixel = geometry.index(ev.x, ev.y);
        raw[cursor[pixel]] = CubeEntry {
            slice: (i / k) as u32,
            value: ev.p.sign(),
        };
        cursor[pixel] += 1;
    }

    let mut offsets = Vec::with_capacity(n + 1);
    let mut entries = Vec::new();
    offsets.push(0);
    for pixel in 0..n {
        let mut pending: Option<CubeEntry> = None;
        for &e in &raw[counts[pixel]..counts[pixel + 1]] {
            match pending.as_mut() {
                Some(acc) if acc.slice == e.slice => acc.value += e.value,
                _ => {
                    if let Some(acc) = pending.take().filter(|a| a.value != 0) {
                        entries.push(acc);
                    }
                    pending = Some(e);
                }
            }
        }
        if let Some(acc) = pending.filter(|a| a.value != 0) {
            entries.push(acc);
        }
        offsets.push(entries.len());
    }

    let mut boundary_times = Vec::with_capacity(r + 1);
    boundary_times.push(used[0].t);
    boundary_times.extend((1..=r).map(|pi| used[pi * k - 1].t));

    Ok(DataCube {
        geometry,
        k,
        r,
        boundary_times,
        offsets,
        entries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SliceStats {
    pub min: i32,
    pub max: i32,
    pub sum: i64,
    pub nonzero: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CubeStats {
    pub slices: Vec<SliceStats>,
    pub grand_total: i64,
    pub nonzero: usize,
    pub zero_fraction: f64,
}

impl CubeStats {
    pub fn min(&self) -> i32 {
        self.slices.iter().map(|s| s.min).min().unwrap_or(0)
    }

    pub fn max(&self) -> i32 {
        self.slices.iter().map(|s| s.max).max().unwrap_or(0)
    }
}

pub fn cube_stats(cube: &DataCube) -> CubeStats {
    let n = cube.geometry.pixel_count();
    let mut slices = vec![
        SliceStats {
            min: i32::MAX,
            max: i32::MIN,
            sum: 0,
            nonzero: 0
        };
        cube.r
    ];
    for e in &cube.entries {
        let s = &mut slices[e.slice as usize];
        s.min = s.min.min(e.value);
        s.max = s.max.max(e.value);
        s.sum += e.value as i64;
        s.nonzero += 1;
    }
    for s in &mut slices {
        if s.nonzero < n {
            s.min = s.min.min(0);
            s.max = s.max.max(0);
        }
    }
    let nonzero = cube.entries.len();
    CubeStats {
        grand_total: slices.iter().map(|s| s.sum).sum(),
        slices,
        nonzero,
        zero_fraction: 1.0 - nonzero as f64 / (cube.r * n) as f64,
    }
}
