//! Centroidal Voronoi tessellation of the descriptor space.

use std::io::{Read, Write};

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{format_float, parse_float};
use crate::rng::RngStream;

pub const DEFAULT_CVT_SAMPLES: usize = 50_000;
pub const DEFAULT_CVT_ITERATIONS: usize = 100;

/// `k` centroids in `[0, 1]^d`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Centroids {
    points: Vec<f64>,
    k: usize,
    dim: usize,
}

impl Centroids {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().ok_or(Error::EmptyInput("centroid rows"))?.len();
        if dim == 0 {
            return Err(Error::config("centroids must have at least one dimension"));
        }
        let k = rows.len();
        let mut points = Vec::with_capacity(k * dim);
        for row in rows {
            Error::check_dim("centroid row", dim, row.len())?;
            points.extend(row);
        }
        Ok(Self { points, k, dim })
    }

    pub fn len(&self) -> usize {
        self.k
    }

    pub fn is_empty(&self) -> bool {
        self.k == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.dim)
    }

    /// Index of the closest centroid in squared Euclidean distance, lowest index on ties.
    pub fn nearest(&self, descriptor: &[f64]) -> Result<usize> {
        Error::check_dim("descriptor", self.dim, descriptor.len())?;
        Ok(nearest_row(&self.points, self.dim, descriptor))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let header: Vec<String> = (0..self.dim).map(|j| format!("c{j}")).collect();
        w.write_record(&header)?;
        for row in self.iter() {
            w.write_record(row.iter().map(|&x| format_float(x)))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            rows.push(rec.iter().map(parse_float).collect::<Result<Vec<_>>>()?);
        }
        Self::from_rows(rows)
    }
}

fn nearest_row(points: &[f64], dim: usize, x: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in points.chunks_exact(dim).enumerate() {
        let d: f64 = c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Lloyd's algorithm over `n_samples` uniform points, initialised on the first `k` samples.
///
/// Empty clusters keep their previous centroid. Iteration stops early once the
/// assignment is a fixed point, which leaves the result unchanged.
pub fn generate_cvt(
    k: usize,
    dim: usize,
    n_samples: usize,
    iterations: usize,
    stream: &RngStream,
) -> Result<Centroids> {
    if k == 0 || dim == 0 {
        return Err(Error::config("CVT needs k >= 1 and d >= 1"));
    }
    if k > n_samples {
        return Err(Error::config(format!(
            "CVT niche count {k} exceeds the number of samples {n_samples}"
        )));
    }
    let mut rng = stream.rng();
    let samples: Vec<f64> = (0..n_samples * dim).map(|_| rng.random::<f64>()).collect();
    let centroids = lloyd(&samples, dim, samples[..k * dim].to_vec(), iterations);
    Ok(Centroids {
        points: centroids,
        k,
        dim,
    })
}

/// Runs `iterations` Lloyd steps on row-major `samples` from the given initial centroids.
pub(crate) fn lloyd(samples: &[f64], dim: usize, mut centroids: Vec<f64>, iterations: usize) -> Vec<f64> {
    let k = centroids.len() / dim;
    let mut assignment: Vec<usize> = vec![usize::MAX; samples.len() / dim];
    for _ in 0..iterations {
        let next: Vec<usize> = samples
            .par_chunks_exact(dim)
            .map(|x| nearest_row(&centroids, dim, x))
            .collect();
        if next == assignment {
            break;
        }
        assignment = next;
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (x, &c) in samples.chunks_exact(dim).zip(&assignment) {
            counts[c] += 1;
            for (s, v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(x) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..dim {
                    centroids[c * dim + j] = sums[c * dim + j] / counts[c] as f64;
                }
            }
        }
    }
    centroids
}
