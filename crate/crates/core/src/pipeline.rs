//! End-to-end orchestration.
//!
//! `run_reconstruct` runs the stages cube → λ → solve → normalize/encode.
//! A full frame stack at sensor scale does not fit in memory (240×180 pixels
//! × 16,667 frames is ~5.8 GB of `f64`), so the solve stage only records the
//! value ranges needed for normalization, and the render stage re-solves the
//! pixels for each block of frames it encodes. Solves are deterministic, so
//! both passes see bitwise-identical trajectories.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use crate::cube::{build_cube, cube_stats, CubeConfig, CubeStats, DataCube};
use crate::error::{Error, Result};
use crate::event::{format_timestamp, write_event_text, EventStream, SensorGeometry};
use crate::lambda::{compute_lambda, LambdaConfig, LambdaField};
use crate::render::{
    apply_colormap, frame_file_name, gray_level, write_netpbm_header, ColorMap, NormalizationMode,
    Range, RangeTable,
};
use crate::simulator::{simulate_scene, LuminanceSignal, SceneParams, SimulatorConfig};
use crate::solver::{check_shapes, PixelSolver};

/// Upper bound on the encoded-frame buffer held by the render stage.
const RENDER_BUFFER_BYTES: usize = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ColorOutput {
    /// P5 grayscale.
    #[default]
    Gray,
    /// P6 through the default [`ColorMap`].
    Map,
}

impl ColorOutput {
    fn channels(self) -> usize {
        match self {
            ColorOutput::Gray => 1,
            ColorOutput::Map => 3,
        }
    }

    fn magic(self) -> &'static str {
        match self {
            ColorOutput::Gray => "P5",
            ColorOutput::Map => "P6",
        }
    }

    fn extension(self) -> &'static str {
        match self {
            ColorOutput::Gray => "pgm",
            ColorOutput::Map => "ppm",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionConfig {
    pub cube: CubeConfig,
    pub lambda: LambdaConfig,
    pub normalization: NormalizationMode,
    pub color: ColorOutput,
    pub output_dir: PathBuf,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl ReconstructionConfig {
    pub fn new(cube: CubeConfig, output_dir: impl Into<PathBuf>) -> Self {
        ReconstructionConfig {
            cube,
            lambda: LambdaConfig::default(),
            normalization: NormalizationMode::default(),
            color: ColorOutput::default(),
            output_dir: output_dir.into(),
            threads: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Setup,
    Cube,
    Lambda,
    Solve,
    Render,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Setup => "setup",
            Stage::Cube => "cube",
            Stage::Lambda => "lambda",
            Stage::Solve => "solve",
            Stage::Render => "render",
            Stage::Report => "report",
        })
    }
}

#[derive(Debug, Error)]
#[error("{stage} stage failed: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, PipelineError>;
}

impl<T, E: Into<Error>> AtStage<T> for std::result::Result<T, E> {
    fn at(self, stage: Stage) -> std::result::Result<T, PipelineError> {
        self.map_err(|e| PipelineError {
            stage,
            source: e.into(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageTimings {
    pub cube: Duration,
    pub lambda: Duration,
    pub solve: Duration,
    pub render: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub events_read: usize,
    pub events_used: usize,
    pub events_discarded: usize,
    pub k: usize,
    pub r: usize,
    pub n_frames: usize,
    pub cube: CubeStats,
    /// Extent of the unnormalized reconstruction.
    pub value_range: Range,
    pub output_files: usize,
    pub timings: StageTimings,
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "events_read: {}", self.events_read)?;
        writeln!(f, "events_used: {}", self.events_used)?;
        writeln!(f, "events_discarded: {}", self.events_discarded)?;
        writeln!(f, "k: {}", self.k)?;
        writeln!(f, "r: {}", self.r)?;
        writeln!(f, "n_frames: {}", self.n_frames)?;
        writeln!(f, "cube_total: {}", self.cube.grand_total)?;
        writeln!(f, "cube_nonzero: {}", self.cube.nonzero)?;
        writeln!(f, "cube_zero_fraction: {:.6}", self.cube.zero_fraction)?;
        writeln!(f, "cube_min: {}", self.cube.min())?;
        writeln!(f, "cube_max: {}", self.cube.max())?;
        writeln!(f, "value_min: {}", self.value_range.min)?;
        writeln!(f, "value_max: {}", self.value_range.max)?;
        writeln!(f, "output_files: {}", self.output_files)?;
        writeln!(f, "time_cube_s: {:.6}", self.timings.cube.as_secs_f64())?;
        writeln!(f, "time_lambda_s: {:.6}", self.timings.lambda.as_secs_f64())?;
        writeln!(f, "time_solve_s: {:.6}", self.timings.solve.as_secs_f64())?;
        writeln!(f, "time_render_s: {:.6}", self.timings.render.as_secs_f64())
    }
}

/// Files written by a run; removed again unless the run commits.
struct OutputGuard {
    dir: PathBuf,
    created_dir: bool,
    files: Vec<PathBuf>,
    committed: bool,
}

impl OutputGuard {
    fn open(dir: &Path) -> std::io::Result<Self> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir)?;
        Ok(OutputGuard {
            dir: dir.to_path_buf(),
            created_dir,
            files: Vec::new(),
            committed: false,
        })
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

fn with_pool<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> std::result::Result<T, PipelineError> + Send,
) -> std::result::Result<T, PipelineError> {
    match threads {
        None => f(),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))
                .at(Stage::Setup)?;
            pool.install(f)
        }
    }
}

pub fn run_reconstruct(
    stream: &EventStream,
    config: &ReconstructionConfig,
) -> std::result::Result<RunReport, PipelineError> {
    with_pool(config.threads, || reconstruct(stream, config))
}

fn reconstruct(
    stream: &EventStream,
    config: &ReconstructionConfig,
) -> std::result::Result<RunReport, PipelineError> {
    let mut timings = StageTimings::default();

    let start = Instant::now();
    let cube = build_cube(stream, &config.cube).at(Stage::Cube)?;
    let stats = cube_stats(&cube);
    timings.cube = start.elapsed();

    let start = Instant::now();
    let lambda = compute_lambda(&cube, &config.lambda);
    timings.lambda = start.elapsed();

    let start = Instant::now();
    let table = solve_ranges(&cube, &lambda, config.normalization).at(Stage::Solve)?;
    timings.solve = start.elapsed();

    let mut guard = OutputGuard::open(&config.output_dir).at(Stage::Render)?;
    let start = Instant::now();
    render_frames(&cube, &lambda, &table, config.color, &mut guard).at(Stage::Render)?;
    timings.render = start.elapsed();

    let nu = config.cube.nu().map_or(stream.len(), |nu| nu.min(stream.len()));
    let used = cube.r() * cube.k();
    let report = RunReport {
        events_read: stream.len(),
        events_used: used,
        events_discarded: nu - used,
        k: cube.k(),
        r: cube.r(),
        n_frames: cube.n_frames(),
        cube: stats,
        value_range: table.overall(),
        output_files: guard.files.len(),
        timings,
    };
    let report_path = config.output_dir.join("report.txt");
    guard.files.push(report_path.clone());
    fs::write(&report_path, report.to_string()).at(Stage::Report)?;
    guard.committed = true;
    Ok(report)
}

struct PassState {
    solver: PixelSolver,
    values: Vec<f64>,
    table: RangeTable,
}

/// Solves every pixel and collects the value ranges for normalization.
pub(crate) fn solve_ranges(
    cube: &DataCube,
    lambda: &LambdaField,
    mode: NormalizationMode,
) -> Result<RangeTable> {
    check_shapes(cube, lambda)?;
    let n_frames = cube.n_frames();
    (0..cube.geometry().pixel_count())
        .into_par_iter()
        .try_fold(
            || PassState {
                solver: PixelSolver::new(n_frames),
                values: vec![0.0; n_frames],
                table: RangeTable::empty(mode, n_frames),
            },
            |mut st, pixel| {
                st.solver.solve(cube, lambda, pixel, &mut st.values)?;
                if let Some(bad) = st.values.iter().find(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("pixel {pixel} solved to {bad}")));
                }
                st.table.include_pixel(&st.values);
                Ok(st)
            },
        )
        .map(|st| st.map(|st| st.table))
        .try_reduce(|| RangeTable::empty(mode, n_frames), |a, b| Ok(a.merge(b)))
}

/// Encodes all frames, in blocks bounded by [`RENDER_BUFFER_BYTES`].
fn render_frames(
    cube: &DataCube,
    lambda: &LambdaField,
    table: &RangeTable,
    color: ColorOutput,
    guard: &mut OutputGuard,
) -> Result<()> {
    let geometry = cube.geometry();
    let (width, height) = (geometry.width(), geometry.height());
    let n_frames = cube.n_frames();
    let channels = color.channels();
    let row_bytes = width * channels;
    let frame_bytes = row_bytes * height;
    let block = (RENDER_BUFFER_BYTES / frame_bytes).clamp(1, n_frames);
    let colormap = ColorMap::default();

    let mut buffer = Vec::new();
    for first in (0..n_frames).step_by(block) {
        let last = (first + block).min(n_frames);
        let len = last - first;
        // row-blocked layout: buffer[y][frame - first][x * channels + c]
        buffer.clear();
        buffer.resize(len * frame_bytes, 0u8);
        buffer
            .par_chunks_mut(len * row_bytes)
            .enumerate()
            .try_for_each_init(
                || (PixelSolver::new(n_frames), vec![0.0; n_frames]),
                |(solver, values), (y, rows)| -> Result<()> {
                    for x in 0..width {
                        let pixel = y * width + x;
                        solver.solve(cube, lambda, pixel, values)?;
                        for f in first..last {
                            let v = table.range(f).rescale(values[f]);
                            let at = (f - first) * row_bytes + x * channels;
                            match color {
                                ColorOutput::Gray => rows[at] = gray_level(v),
                                ColorOutput::Map => rows[at..at + 3]
                                    .copy_from_slice(&apply_colormap(v, &colormap)?),
                            }
                        }
                    }
                    Ok(())
                },
            )?;

        let paths: Vec<PathBuf> = (first..last)
            .map(|f| guard.dir.join(frame_file_name(f, color.extension())))
            .collect();
        // register before writing so that a failed block is cleaned up too
        guard.files.extend(paths.iter().cloned());
        let buffer = &buffer;
        paths.par_iter().enumerate().try_for_each(|(i, path)| -> Result<()> {
            let mut bytes = Vec::with_capacity(frame_bytes + 32);
            write_netpbm_header(&mut bytes, color.magic(), width, height)?;
            for y in 0..height {
                let at = (y * len + i) * row_bytes;
                bytes.extend_from_slice(&buffer[at..at + row_bytes]);
            }
            fs::write(path, bytes)?;
            Ok(())
        })?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub events: usize,
    pub samples: usize,
    pub events_path: PathBuf,
    pub ground_truth_path: PathBuf,
}

impl fmt::Display for SimulationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "events: {}", self.events)?;
        writeln!(f, "samples: {}", self.samples)?;
        writeln!(f, "events_file: {}", self.events_path.display())?;
        writeln!(f, "ground_truth_file: {}", self.ground_truth_path.display())
    }
}

pub const EVENTS_FILE: &str = "events.txt";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.txt";

/// Simulates an analytic scene and writes `events.txt` plus `ground_truth.txt`.
pub fn run_simulate(
    scene: &SceneParams,
    config: &SimulatorConfig,
    output_dir: &Path,
) -> Result<SimulationReport> {
    let signal = scene.generate(config.geometry())?;
    let stream = simulate_scene(&signal, config)?;

    let mut guard = OutputGuard::open(output_dir)?;
    let events_path = output_dir.join(EVENTS_FILE);
    let truth_path = output_dir.join(GROUND_TRUTH_FILE);
    guard.files.push(events_path.clone());
    write_event_text(&stream, BufWriter::new(fs::File::create(&events_path)?))?;
    guard.files.push(truth_path.clone());
    write_ground_truth(&signal, BufWriter::new(fs::File::create(&truth_path)?))?;
    guard.committed = true;

    Ok(SimulationReport {
        events: stream.len(),
        samples: signal.sample_count(),
        events_path,
        ground_truth_path: truth_path,
    })
}

/// Ground-truth dump: a `# width W height H` comment, then one line per
/// sample holding the time followed by the row-major log-luminance.
pub fn write_ground_truth<W: Write>(signal: &LuminanceSignal, mut sink: W) -> Result<()> {
    let g = signal.geometry();
    writeln!(sink, "# width {} height {}", g.width(), g.height())?;
    let mut line = String::new();
    for (s, &t) in signal.sample_times().iter().enumerate() {
        line.clear();
        line.push_str(&format_timestamp(t));
        for pixel in 0..g.pixel_count() {
            line.push(' ');
            line.push_str(&signal.log_luminance(s, pixel).to_string());
        }
        writeln!(sink, "{line}")?;
    }
    sink.flush()?;
    Ok(())
}

/// Reads a ground-truth dump back into a signal.
pub fn read_ground_truth<R: BufRead>(source: R) -> Result<LuminanceSignal> {
    let mut geometry = None;
    let mut times = Vec::new();
    let mut samples = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if let Some(comment) = line.strip_prefix('#') {
            let f: Vec<&str> = comment.split_whitespace().collect();
            if let ["width", w, "height", h] = f.as_slice() {
                let parse = |v: &str| {
                    v.parse::<u16>()
                        .map_err(|_| Error::Range(format!("bad dimension `{v}` in ground truth")))
                };
                geometry = Some(SensorGeometry::new(parse(w)?, parse(h)?)?);
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let g = geometry
            .ok_or_else(|| Error::Shape("ground truth lacks a `# width W height H` header".into()))?;
        let mut fields = line.split_whitespace().map(|tok| {
            tok.parse::<f64>().map_err(|_| Error::Parse {
                line: i + 1,
                kind: crate::ParseErrorKind::Malformed(format!("bad number `{tok}`")),
            })
        });
        times.push(fields.next().transpose()?.unwrap_or(f64::NAN));
        let before = samples.len();
        for v in fields {
            samples.push(v?.exp());
        }
        if samples.len() - before != g.pixel_count() {
            return Err(Error::Shape(format!(
                "line {} has {} values for a {g} grid",
                i + 1,
                samples.len() - before
            )));
        }
    }
    let g = geometry
        .ok_or_else(|| Error::Shape("ground truth lacks a `# width W height H` header".into()))?;
    LuminanceSignal::new(g, times, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::SceneKind;

    #[test]
    fn ground_truth_round_trip() {
        let g = SensorGeometry::new(2, 1).unwrap();
        let mut scene = SceneParams::new(SceneKind::Sine, 5);
        scene.amplitude = 0.3;
        let signal = scene.generate(g).unwrap();
        let mut buf = Vec::new();
        write_ground_truth(&signal, &mut buf).unwrap();
        let back = read_ground_truth(buf.as_slice()).unwrap();
        assert_eq!(back.sample_times(), signal.sample_times());
        for s in 0..5 {
            for p in 0..2 {
                assert!((back.log_luminance(s, p) - signal.log_luminance(s, p)).abs() < 1e-12);
            }
        }
        assert!(read_ground_truth("0.0 1 2\n".as_bytes()).is_err());
        assert!(read_ground_truth("# width 2 height 1\n0.0 1\n".as_bytes()).is_err());
    }

    #[test]
    fn failed_run_leaves_no_directory() {
        let tmp = tempfile::tempdir().unwrap();
        let out = tmp.path().join("never");
        let g = SensorGeometry::new(1, 1).unwrap();
        let stream = EventStream::empty(g);
        let cfg = ReconstructionConfig::new(CubeConfig::new(2, None).unwrap(), &out);
        let err = run_reconstruct(&stream, &cfg).unwrap_err();
        assert_eq!(err.stage, Stage::Cube);
        assert!(!out.exists());
    }

    #[test]
    fn guard_removes_uncommitted_files() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("out");
        {
            let mut guard = OutputGuard::open(&dir).unwrap();
            let f = dir.join("frame_000000.pgm");
            fs::write(&f, b"x").unwrap();
            guard.files.push(f);
        }
        assert!(!dir.exists());
        {
            let mut guard = OutputGuard::open(&dir).unwrap();
            let f = dir.join("kept.txt");
            fs::write(&f, b"x").unwrap();
            guard.files.push(f);
            guard.committed = true;
        }
        assert!(dir.join("kept.txt").exists());
    }
}
