//! Test-only oracles, independent of the library's solve path.
#![allow(dead_code)]

use evframe::{Event, EventStream, Polarity, SensorGeometry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense `(n-1) x n` forward-difference matrix.
pub fn difference_matrix(n: usize) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0; n]; n - 1];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = -1.0;
        row[i + 1] = 1.0;
    }
    a
}

pub fn transpose_mul_vec(a: &[Vec<f64>], e: &[f64]) -> Vec<f64> {
    let n = a[0].len();
    (0..n)
        .map(|j| a.iter().zip(e).map(|(row, ei)| row[j] * ei).sum())
        .collect()
}

/// `AᵀA + diag(λ²)` by explicit dense products.
pub fn dense_normal_matrix(lambda: &[f64]) -> Vec<Vec<f64>> {
    let n = lambda.len();
    let a = difference_matrix(n);
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            k[i][j] = a.iter().map(|row| row[i] * row[j]).sum();
        }
        k[i][i] += lambda[i] * lambda[i];
    }
    k
}

/// Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                m[row][c] -= f * m[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / m[i][i];
    }
    x
}

/// Minimizer of ½‖Av − E‖² + ½‖λ v‖² via dense normal equations.
pub fn dense_reconstruct(accum: &[f64], lambda: &[f64]) -> Vec<f64> {
    let a = difference_matrix(lambda.len());
    gauss_solve(dense_normal_matrix(lambda), transpose_mul_vec(&a, accum))
}

pub fn objective(v: &[f64], accum: &[f64], lambda: &[f64]) -> f64 {
    let fit: f64 = accum
        .iter()
        .enumerate()
        .map(|(i, e)| (v[i + 1] - v[i] - e).powi(2))
        .sum();
    let reg: f64 = v.iter().zip(lambda).map(|(x, l)| (l * x).powi(2)).sum();
    0.5 * fit + 0.5 * reg
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Uniformly random pixels and polarities with exponential inter-arrival times.
pub fn synthetic_stream(geometry: SensorGeometry, n_events: usize, seed: u64) -> EventStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = 0.0f64;
    let events = (0..n_events)
        .map(|_| {
            t += -(1.0 - rng.gen::<f64>()).ln() * 1e-6;
            let x = rng.gen_range(0..geometry.width()) as u16;
            let y = rng.gen_range(0..geometry.height()) as u16;
            let p = if rng.gen::<bool>() { Polarity::On } else { Polarity::Off };
            Event::new(t, x, y, p)
        })
        .collect();
    EventStream::new(geometry, events).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Parses a binary netpbm file into (magic, width, height, payload).
pub fn read_netpbm(bytes: &[u8]) -> (String, usize, usize, Vec<u8>) {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        fields.push(String::from_utf8(bytes[start..pos].to_vec()).unwrap());
    }
    pos += 1;
    assert_eq!(fields[3], "255");
    (
        fields[0].clone(),
        fields[1].parse().unwrap(),
        fields[2].parse().unwrap(),
        bytes[pos..].to_vec(),
    )
}
