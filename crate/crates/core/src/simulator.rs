//! Forward event-camera model.
//!
//! Each pixel keeps a reference log-luminance. Whenever the current sample
//! differs from the reference by at least the contrast threshold `c`, the
//! pixel fires `m = floor(|delta| / c)` events of the matching polarity and
//! moves the reference by exactly `m * c`. The residual between the true
//! log-luminance and the reference therefore stays strictly below `c`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::event::{Event, EventStream, Polarity, SensorGeometry};

/// Positive luminance samples on a common time grid.
///
/// Samples are stored sample-major: `samples[s * pixel_count + pixel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LuminanceSignal {
    geometry: SensorGeometry,
    sample_times: Vec<f64>,
    samples: Vec<f64>,
}

impl LuminanceSignal {
    pub fn new(geometry: SensorGeometry, sample_times: Vec<f64>, samples: Vec<f64>) -> Result<Self> {
        check_times(&sample_times)?;
        if samples.len() != sample_times.len() * geometry.pixel_count() {
            return Err(Error::Shape(format!(
                "{} samples for {} times on a {geometry} grid",
                samples.len(),
                sample_times.len()
            )));
        }
        if let Some(bad) = samples.iter().find(|q| !(q.is_finite() && **q > 0.0)) {
            return Err(Error::Signal(format!("luminance {bad} is not finite and positive")));
        }
        Ok(LuminanceSignal {
            geometry,
            sample_times,
            samples,
        })
    }

    /// Builds a signal from a log-luminance function `f(x, y, t)`.
    pub fn from_log_fn<F>(geometry: SensorGeometry, sample_times: Vec<f64>, f: F) -> Result<Self>
    where
        F: Fn(u16, u16, f64) -> f64,
    {
        let n = geometry.pixel_count();
        let mut samples = Vec::with_capacity(sample_times.len() * n);
        for &t in &sample_times {
            for pixel in 0..n {
                let (x, y) = geometry.coords(pixel);
                samples.push(f(x, y, t).exp());
            }
        }
        Self::new(geometry, sample_times, samples)
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn sample_times(&self) -> &[f64] {
        &self.sample_times
    }

    pub fn sample_count(&self) -> usize {
        self.sample_times.len()
    }

    #[inline]
    pub fn luminance(&self, sample: usize, pixel: usize) -> f64 {
        self.samples[sample * self.geometry.pixel_count() + pixel]
    }

    #[inline]
    pub fn log_luminance(&self, sample: usize, pixel: usize) -> f64 {
        self.luminance(sample, pixel).ln()
    }

    /// `(time, log q)` pairs for one pixel.
    pub fn log_series(&self, pixel: usize) -> Vec<(f64, f64)> {
        self.sample_times
            .iter()
            .enumerate()
            .map(|(s, &t)| (t, self.log_luminance(s, pixel)))
            .collect()
    }

    /// Index of the sample taken exactly at `t`.
    pub fn sample_index(&self, t: f64) -> Option<usize> {
        self.sample_times
            .binary_search_by(|probe| probe.total_cmp(&t))
            .ok()
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if let Some(t) = times.iter().find(|t| !t.is_finite()) {
        return Err(Error::Signal(format!("sample time {t} is not finite")));
    }
    if let Some(i) = times.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::Signal(format!(
            "sample times not strictly increasing at index {}",
            i + 1
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulatorConfig {
    threshold: f64,
    geometry: SensorGeometry,
}

impl SimulatorConfig {
    pub fn new(threshold: f64, geometry: SensorGeometry) -> Result<Self> {
        check_threshold(threshold)?;
        Ok(SimulatorConfig {
            threshold,
            geometry,
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }
}

fn check_threshold(threshold: f64) -> Result<()> {
    if threshold.is_finite() && threshold > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "contrast threshold must be finite and positive, got {threshold}"
        )))
    }
}

/// Reference-level state machine for a single pixel.
#[derive(Debug, Clone, Copy)]
pub struct PixelModel {
    reference: f64,
    threshold: f64,
}

impl PixelModel {
    pub fn new(initial_log: f64, threshold: f64) -> Self {
        PixelModel {
            reference: initial_log,
            threshold,
        }
    }

    pub fn reference(&self) -> f64 {
        self.reference
    }

    /// Feeds one log-luminance sample; returns the fired polarity and count.
    pub fn step(&mut self, log_q: f64) -> Option<(Polarity, u32)> {
        let c = self.threshold;
        let delta = log_q - self.reference;
        if delta >= c {
            let mut m = (delta / c).floor().max(1.0);
            // settle rounding so that 0 <= log_q - new_reference < c
            while log_q - (self.reference + (m + 1.0) * c) >= 0.0 {
                m += 1.0;
            }
            while m > 1.0 && log_q - (self.reference + m * c) < 0.0 {
                m -= 1.0;
            }
            self.reference += m * c;
            Some((Polarity::On, m as u32))
        } else if delta <= -c {
            let mut m = (-delta / c).floor().max(1.0);
            while log_q - (self.reference - (m + 1.0) * c) <= 0.0 {
                m += 1.0;
            }
            while m > 1.0 && log_q - (self.reference - m * c) > 0.0 {
                m -= 1.0;
            }
            self.reference -= m * c;
            Some((Polarity::Off, m as u32))
        } else {
            None
        }
    }
}

/// Events fired by one pixel at one sample time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelFiring {
    pub t: f64,
    pub p: Polarity,
    pub multiplicity: u32,
}

/// Runs the threshold model over `(time, log-luminance)` samples.
pub fn simulate_pixel(log_samples: &[(f64, f64)], threshold: f64) -> Result<Vec<PixelFiring>> {
    check_threshold(threshold)?;
    if let Some(&(t, l)) = log_samples.iter().find(|(t, l)| !t.is_finite() || !l.is_finite()) {
        return Err(Error::NonFinite(format!("sample ({t}, {l})")));
    }
    if let Some(i) = log_samples.windows(2).position(|w| w[1].0 <= w[0].0) {
        return Err(Error::Signal(format!(
            "sample times not strictly increasing at index {}",
            i + 1
        )));
    }
    let Some(&(_, first)) = log_samples.first() else {
        return Ok(Vec::new());
    };
    let mut model = PixelModel::new(first, threshold);
    Ok(log_samples[1..]
        .iter()
        .filter_map(|&(t, l)| {
            model.step(l).map(|(p, multiplicity)| PixelFiring {
                t,
                p,
                multiplicity,
            })
        })
        .collect())
}

/// Simulates every pixel independently and merges the output into one stream.
///
/// Events sharing a timestamp are ordered by ascending `(y, x)`.
pub fn simulate_scene(signal: &LuminanceSignal, config: &SimulatorConfig) -> Result<EventStream> {
    let geometry = config.geometry();
    if signal.geometry() != geometry {
        return Err(Error::Shape(format!(
            "signal is {} but simulator expects {geometry}",
            signal.geometry()
        )));
    }
    let threshold = config.threshold();
    let n_samples = signal.sample_count();

    // (sample index, pixel index, polarity, multiplicity)
    let per_pixel: Vec<Vec<(u32, u32, Polarity, u32)>> = (0..geometry.pixel_count())
        .into_par_iter()
        .map(|pixel| {
            let mut out = Vec::new();
            if n_samples == 0 {
                return out;
            }
            let mut model = PixelModel::new(signal.log_luminance(0, pixel), threshold);
            for s in 1..n_samples {
                if let Some((p, m)) = model.step(signal.log_luminance(s, pixel)) {
                    out.push((s as u32, pixel as u32, p, m));
                }
            }
            out
        })
        .collect();

    let mut firings: Vec<_> = per_pixel.into_iter().flatten().collect();
    firings.sort_unstable_by_key(|&(s, pixel, _, _)| (s, pixel));

    let mut events = Vec::with_capacity(firings.iter().map(|f| f.3 as usize).sum());
    for (s, pixel, p, m) in firings {
        let (x, y) = geometry.coords(pixel as usize);
        let t = signal.sample_times()[s as usize];
        events.extend(std::iter::repeat(Event::new(t, x, y, p)).take(m as usize));
    }
    EventStream::new(geometry, events)
}

/// `(log q(t_b) - log q(t_a)) / c` for one pixel: the true log-luminance
/// change measured in event units.
pub fn oracle_log_difference(
    signal: &LuminanceSignal,
    threshold: f64,
    x: u16,
    y: u16,
    t_a: f64,
    t_b: f64,
) -> Result<f64> {
    check_threshold(threshold)?;
    let geometry = signal.geometry();
    if !geometry.contains(x, y) {
        return Err(Error::Range(format!("pixel ({x}, {y}) outside {geometry}")));
    }
    let pixel = geometry.index(x, y);
    let sample = |t: f64| {
        signal
            .sample_index(t)
            .ok_or_else(|| Error::Range(format!("time {t} is not a sample time")))
    };
    let (a, b) = (sample(t_a)?, sample(t_b)?);
    Ok((signal.log_luminance(b, pixel) - signal.log_luminance(a, pixel)) / threshold)
}

/// Analytic test scenes, all defined in log-luminance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    /// `log q = amplitude * phase(x, y)`: spatially varying, static in time.
    Constant,
    /// `log q = amplitude * (t / period + phase(x, y))`.
    Ramp,
    /// `log q = amplitude * sin(2 pi (t / period + phase(x, y)))`.
    Sine,
}

/// Scene parameters. `phase(x, y) = spatial_phase * (y * width + x) / pixel_count`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneParams {
    pub kind: SceneKind,
    pub amplitude: f64,
    pub period: f64,
    pub spatial_phase: f64,
    pub duration: f64,
    pub samples: usize,
}

impl SceneParams {
    pub fn new(kind: SceneKind, samples: usize) -> Self {
        SceneParams {
            kind,
            amplitude: 1.0,
            period: 1.0,
            spatial_phase: 1.0,
            duration: 1.0,
            samples,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples < 2 {
            return Err(Error::Config(format!("need at least 2 samples, got {}", self.samples)));
        }
        for (name, v) in [("duration", self.duration), ("period", self.period)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be finite and positive, got {v}")));
            }
        }
        for (name, v) in [("amplitude", self.amplitude), ("phase", self.spatial_phase)] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite, got {v}")));
            }
        }
        Ok(())
    }

    /// Sample `i` is taken at `duration * i / (samples - 1)`.
    pub fn sample_times(&self) -> Vec<f64> {
        let last = (self.samples - 1) as f64;
        (0..self.samples)
            .map(|i| self.duration * i as f64 / last)
            .collect()
    }

    pub fn log_luminance(&self, geometry: SensorGeometry, x: u16, y: u16, t: f64) -> f64 {
        let phase =
            self.spatial_phase * geometry.index(x, y) as f64 / geometry.pixel_count() as f64;
        match self.kind {
            SceneKind::Constant => self.amplitude * phase,
            SceneKind::Ramp => self.amplitude * (t / self.period + phase),
            SceneKind::Sine => {
                self.amplitude * (std::f64::consts::TAU * (t / self.period + phase)).sin()
            }
        }
    }

    pub fn generate(&self, geometry: SensorGeometry) -> Result<LuminanceSignal> {
        self.validate()?;
        LuminanceSignal::from_log_fn(geometry, self.sample_times(), |x, y, t| {
            self.log_luminance(geometry, x, y, t)
        })
    }
}
