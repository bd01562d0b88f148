//! Per-pixel regularized least squares.
//!
//! For one pixel with window sums `E` (length `n - 1`) and weights `λ`
//! (length `n`), the reconstruction minimizes
//!
//! ```text
//! ½‖A v − E‖² + ½‖λ ⊙ v‖²
//! ```
//!
//! where `A` is the `(n−1)×n` forward-difference matrix (`(Av)_i = v_{i+1} − v_i`).
//! The normal equations `(AᵀA + diag(λ²)) v = AᵀE` are symmetric
//! positive-definite and tridiagonal, and are solved by Thomas elimination.

use rayon::prelude::*;

use crate::cube::DataCube;
use crate::error::{Error, Result};
use crate::event::SensorGeometry;
use crate::lambda::LambdaField;

/// Symmetric tridiagonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalSystem {
    diag: Vec<f64>,
    off: Vec<f64>,
}

impl TridiagonalSystem {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || off.len() + 1 != diag.len() {
            return Err(Error::Shape(format!(
                "tridiagonal system with {} diagonal and {} off-diagonal entries",
                diag.len(),
                off.len()
            )));
        }
        Ok(TridiagonalSystem { diag, off })
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn off(&self) -> &[f64] {
        &self.off
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * v[i];
                if i > 0 {
                    s += self.off[i - 1] * v[i - 1];
                }
                if i + 1 < n {
                    s += self.off[i] * v[i + 1];
                }
                s
            })
            .collect()
    }
}

fn check_lambda(lambda: &[f64]) -> Result<()> {
    if lambda.len() < 2 {
        return Err(Error::Shape(format!("need at least 2 frames, got {}", lambda.len())));
    }
    if let Some(bad) = lambda.iter().find(|l| !(**l > 0.0)) {
        return Err(Error::Range(format!("regularization weight {bad} must be > 0")));
    }
    Ok(())
}

/// Fills `diag` with the diagonal of `AᵀA + diag(λ²)`; the off-diagonal is −1.
#[inline]
fn fill_diagonal(lambda: &[f64], diag: &mut [f64]) {
    let n = lambda.len();
    for (i, (d, l)) in diag.iter_mut().zip(lambda).enumerate() {
        let ata = if i == 0 || i == n - 1 { 1.0 } else { 2.0 };
        *d = ata + l * l;
    }
}

pub fn assemble_system(lambda: &[f64]) -> Result<TridiagonalSystem> {
    check_lambda(lambda)?;
    let mut diag = vec![0.0; lambda.len()];
    fill_diagonal(lambda, &mut diag);
    Ok(TridiagonalSystem {
        diag,
        off: vec![-1.0; lambda.len() - 1],
    })
}

#[inline]
fn fill_rhs(accum: &[f64], rhs: &mut [f64]) {
    let m = accum.len();
    rhs[0] = -accum[0];
    for j in 1..m {
        rhs[j] = accum[j - 1] - accum[j];
    }
    rhs[m] = accum[m - 1];
}

/// `AᵀE`. Returns an empty vector for empty input.
pub fn rhs_from_accum(accum: &[f64]) -> Vec<f64> {
    if accum.is_empty() {
        return Vec::new();
    }
    let mut rhs = vec![0.0; accum.len() + 1];
    fill_rhs(accum, &mut rhs);
    rhs
}

/// Thomas elimination, overwriting `rhs` with the solution.
/// `scratch` holds the modified super-diagonal and needs `n - 1` slots.
#[inline]
fn thomas_in_place(diag: &[f64], off: &[f64], rhs: &mut [f64], scratch: &mut [f64]) -> Result<()> {
    let n = diag.len();
    let mut pivot = diag[0];
    if pivot == 0.0 || pivot.is_nan() {
        return Err(Error::ZeroPivot(0));
    }
    let mut inv = 1.0 / pivot;
    rhs[0] *= inv;
    for i in 1..n {
        let c = off[i - 1] * inv;
        scratch[i - 1] = c;
        pivot = diag[i] - off[i - 1] * c;
        if pivot == 0.0 || pivot.is_nan() {
            return Err(Error::ZeroPivot(i));
        }
        inv = 1.0 / pivot;
        rhs[i] = (rhs[i] - off[i - 1] * rhs[i - 1]) * inv;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= scratch[i] * rhs[i + 1];
    }
    Ok(())
}

pub fn solve_tridiagonal(system: &TridiagonalSystem, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = system.n();
    if rhs.len() != n {
        return Err(Error::Shape(format!("rhs of length {} for a {n}x{n} system", rhs.len())));
    }
    let mut x = rhs.to_vec();
    let mut scratch = vec![0.0; n.saturating_sub(1)];
    thomas_in_place(&system.diag, &system.off, &mut x, &mut scratch)?;
    Ok(x)
}

/// Data for one pixel: `accum` holds `n - 1` window sums, `lambda` `n` weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelProblem {
    accum: Vec<f64>,
    lambda: Vec<f64>,
}

impl PixelProblem {
    pub fn new(accum: Vec<f64>, lambda: Vec<f64>) -> Result<Self> {
        check_lambda(&lambda)?;
        if accum.len() + 1 != lambda.len() {
            return Err(Error::Shape(format!(
                "{} window sums for {} frames",
                accum.len(),
                lambda.len()
            )));
        }
        if let Some(bad) = accum.iter().find(|a| !a.is_finite()) {
            return Err(Error::NonFinite(format!("window sum {bad}")));
        }
        Ok(PixelProblem { accum, lambda })
    }

    pub fn accum(&self) -> &[f64] {
        &self.accum
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn n_frames(&self) -> usize {
        self.lambda.len()
    }
}

pub fn solve_pixel(problem: &PixelProblem) -> Result<Vec<f64>> {
    let system = assemble_system(&problem.lambda)?;
    let rhs = rhs_from_accum(&problem.accum);
    solve_tridiagonal(&system, &rhs)
}

/// Reusable buffers for solving many pixels of one cube.
pub(crate) struct PixelSolver {
    accum: Vec<f64>,
    lambda: Vec<f64>,
    scratch: Vec<f64>,
}

impl PixelSolver {
    pub(crate) fn new(n_frames: usize) -> Self {
        PixelSolver {
            accum: vec![0.0; n_frames - 1],
            lambda: vec![0.0; n_frames],
            scratch: vec![0.0; n_frames - 1],
        }
    }

    /// Solves one pixel into `out` (length `n_frames`).
    ///
    /// This is [`assemble_system`], [`rhs_from_accum`] and the elimination of
    /// [`solve_tridiagonal`] fused into one sweep with the off-diagonal fixed
    /// at −1. Multiplying by −1 is exact, so the result is bitwise identical
    /// to [`solve_pixel`].
    #[inline]
    pub(crate) fn solve(
        &mut self,
        cube: &DataCube,
        lambda: &LambdaField,
        pixel: usize,
        out: &mut [f64],
    ) -> Result<()> {
        cube.fill_pixel_series(pixel, &mut self.accum);
        lambda.fill_pixel(pixel, &mut self.lambda);
        let (e, l, inv_pivots) = (&self.accum, &self.lambda, &mut self.scratch);
        let n = l.len();
        let last = n - 1;

        let mut pivot = 1.0 + l[0] * l[0];
        if pivot == 0.0 || pivot.is_nan() {
            return Err(Error::ZeroPivot(0));
        }
        let mut inv = 1.0 / pivot;
        out[0] = -e[0] * inv;
        for i in 1..last {
            inv_pivots[i - 1] = inv;
            pivot = (2.0 + l[i] * l[i]) - inv;
            if pivot == 0.0 || pivot.is_nan() {
                return Err(Error::ZeroPivot(i));
            }
            inv = 1.0 / pivot;
            out[i] = ((e[i - 1] - e[i]) + out[i - 1]) * inv;
        }
        inv_pivots[last - 1] = inv;
        pivot = (1.0 + l[last] * l[last]) - inv;
        if pivot == 0.0 || pivot.is_nan() {
            return Err(Error::ZeroPivot(last));
        }
        out[last] = (e[last - 1] + out[last - 1]) * (1.0 / pivot);

        for i in (0..last).rev() {
            out[i] += inv_pivots[i] * out[i + 1];
        }
        Ok(())
    }
}

pub(crate) fn check_shapes(cube: &DataCube, lambda: &LambdaField) -> Result<()> {
    if cube.geometry() != lambda.geometry() || cube.n_frames() != lambda.n_frames() {
        return Err(Error::Shape(format!(
            "cube is {} with {} frames, weights are {} with {} frames",
            cube.geometry(),
            cube.n_frames(),
            lambda.geometry(),
            lambda.n_frames()
        )));
    }
    Ok(())
}

/// Reconstructed per-pixel trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStack {
    geometry: SensorGeometry,
    n_frames: usize,
    frame_times: Vec<f64>,
    data: Vec<f64>,
}

impl FrameStack {
    /// `data` is pixel-major: `data[pixel * n_frames + frame]`.
    pub fn new(
        geometry: SensorGeometry,
        frame_times: Vec<f64>,
        data: Vec<f64>,
    ) -> Result<Self> {
        let n_frames = frame_times.len();
        if n_frames == 0 || data.len() != geometry.pixel_count() * n_frames {
            return Err(Error::Shape(format!(
                "{} values for {n_frames} frames on a {geometry} grid",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("frame value {bad}")));
        }
        Ok(FrameStack {
            geometry,
            n_frames,
            frame_times,
            data,
        })
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn frame_times(&self) -> &[f64] {
        &self.frame_times
    }

    pub fn pixel(&self, pixel: usize) -> &[f64] {
        &self.data[pixel * self.n_frames..(pixel + 1) * self.n_frames]
    }

    pub fn get(&self, x: u16, y: u16, frame: usize) -> f64 {
        self.data[self.geometry.index(x, y) * self.n_frames + frame]
    }

    /// Row-major image of one frame.
    pub fn frame(&self, frame: usize) -> Vec<f64> {
        self.data
            .iter()
            .skip(frame)
            .step_by(self.n_frames)
            .copied()
            .collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Solves every pixel of the cube, data-parallel over pixels.
///
/// Each pixel is computed by one lane with a fixed operation order, so the
/// output does not depend on the size of the thread pool.
pub fn solve_all(cube: &DataCube, lambda: &LambdaField) -> Result<FrameStack> {
    check_shapes(cube, lambda)?;
    let n_frames = cube.n_frames();
    let mut data = vec![0.0; cube.geometry().pixel_count() * n_frames];
    data.par_chunks_mut(n_frames)
        .enumerate()
        .try_for_each_init(
            || PixelSolver::new(n_frames),
            |solver, (pixel, out)| solver.solve(cube, lambda, pixel, out),
        )?;
    FrameStack::new(cube.geometry(), cube.boundary_times().to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn assembles_normal_matrix_pattern() {
        let s = assemble_system(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(s.diag(), &[2.0, 3.0, 2.0]);
        assert_eq!(s.off(), &[-1.0, -1.0]);
        let d = 0.3;
        let s = assemble_system(&[d, d]).unwrap();
        assert_eq!(s.diag(), &[1.0 + d * d, 1.0 + d * d]);
        assert_eq!(s.off(), &[-1.0]);
    }

    #[test]
    fn assemble_rejects_bad_weights() {
        assert!(assemble_system(&[1.0]).is_err());
        assert!(assemble_system(&[1.0, 0.0]).is_err());
        assert!(assemble_system(&[1.0, -2.0, 1.0]).is_err());
        assert!(assemble_system(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn rhs_pattern() {
        assert_eq!(rhs_from_accum(&[1.0, 1.0]), vec![-1.0, 0.0, 1.0]);
        assert_eq!(rhs_from_accum(&[0.0; 4]), vec![0.0; 5]);
        let rhs = rhs_from_accum(&[3.0, -7.0, 2.0]);
        assert_eq!(rhs, vec![-3.0, 10.0, -9.0, 2.0]);
        assert_eq!(rhs.iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn small_system_matches_hand_solution() {
        // [2 -1 0; -1 3 -1; 0 -1 2] v = [-1 0 1] has v = [-0.5, 0, 0.5]
        let p = PixelProblem::new(vec![1.0, 1.0], vec![1.0; 3]).unwrap();
        let v = solve_pixel(&p).unwrap();
        assert!(max_abs_diff(&v, &[-0.5, 0.0, 0.5]) < 1e-15);
    }

    #[test]
    fn zero_data_gives_zero() {
        let s = assemble_system(&[0.2, 5.0, 1.0, 0.7]).unwrap();
        assert_eq!(solve_tridiagonal(&s, &[0.0; 4]).unwrap(), vec![0.0; 4]);
        let p = PixelProblem::new(vec![0.0; 5], vec![1e-3; 6]).unwrap();
        assert!(solve_pixel(&p).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn small_lambda_recovers_differences() {
        let p = PixelProblem::new(vec![1.0, 1.0], vec![1e-3; 3]).unwrap();
        let v = solve_pixel(&p).unwrap();
        assert!((v[1] - v[0] - 1.0).abs() <= 1e-5);
        assert!((v[2] - v[1] - 1.0).abs() <= 1e-5);
    }

    #[test]
    fn zero_pivot_detected() {
        let s = TridiagonalSystem::new(vec![1.0, 1.0], vec![1.0]).unwrap();
        assert!(matches!(solve_tridiagonal(&s, &[1.0, 1.0]), Err(Error::ZeroPivot(1))));
        let s = TridiagonalSystem::new(vec![0.0, 1.0], vec![1.0]).unwrap();
        assert!(matches!(solve_tridiagonal(&s, &[1.0, 1.0]), Err(Error::ZeroPivot(0))));
        assert!(TridiagonalSystem::new(vec![1.0, 1.0], vec![]).is_err());
    }

    #[test]
    fn problem_shape_checked() {
        assert!(PixelProblem::new(vec![1.0; 3], vec![1.0; 3]).is_err());
        assert!(PixelProblem::new(vec![f64::INFINITY], vec![1.0; 2]).is_err());
    }

    #[test]
    fn saturated_weights_stay_finite() {
        let p = PixelProblem::new(vec![150.0, -150.0], vec![f64::MAX, 1.0, f64::MAX]).unwrap();
        assert!(solve_pixel(&p).unwrap().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn fused_solver_is_bitwise_identical() {
        let g = SensorGeometry::new(3, 1).unwrap();
        let slices = vec![vec![3, -1, 0], vec![0, 2, -5], vec![1, 0, 0], vec![-4, 4, 1]];
        let cube = DataCube::from_slices(g, 5, vec![0.0; 5], &slices).unwrap();
        let cfg = crate::LambdaConfig::new(crate::LambdaMode::MaxAbs, 0.3).unwrap();
        let lambda = crate::compute_lambda(&cube, &cfg);
        let stack = solve_all(&cube, &lambda).unwrap();
        for pixel in 0..3 {
            let accum: Vec<f64> = slices.iter().map(|s| s[pixel] as f64).collect();
            let p = PixelProblem::new(accum, lambda.pixel_values(pixel)).unwrap();
            assert_eq!(stack.pixel(pixel), solve_pixel(&p).unwrap().as_slice());
        }
        // two frames: no interior rows
        let cube = DataCube::from_slices(g, 5, vec![0.0; 2], &slices[..1]).unwrap();
        let lambda = LambdaField::uniform(g, 2, 0.7).unwrap();
        let stack = solve_all(&cube, &lambda).unwrap();
        let p = PixelProblem::new(vec![3.0], vec![0.7; 2]).unwrap();
        assert_eq!(stack.pixel(0), solve_pixel(&p).unwrap().as_slice());
    }

    #[test]
    fn solve_all_on_zero_cube() {
        let g = SensorGeometry::new(3, 2).unwrap();
        let cube = DataCube::from_slices(g, 2, vec![0.0, 1.0, 2.0], &vec![vec![0; 6]; 2]).unwrap();
        let lambda = LambdaField::uniform(g, 3, 0.5).unwrap();
        let stack = solve_all(&cube, &lambda).unwrap();
        assert!(stack.data().iter().all(|&v| v == 0.0));
        assert_eq!(stack.frame_times(), &[0.0, 1.0, 2.0]);

        let wrong = LambdaField::uniform(g, 4, 0.5).unwrap();
        assert!(solve_all(&cube, &wrong).is_err());
    }
}
