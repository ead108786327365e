//! Wall time and output checksums of accumulate/slice across worker counts.

use std::time::Instant;

use dagrid::{
    accumulate, slice, GridSet, KernelKind, Plane, Result, SamplingGrid, TargetShape, Tensor,
};
use rand::Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::random;

pub const DEFAULT_SIZES: [usize; 3] = [64, 224, 512];
pub const DEFAULT_WORKERS: [usize; 3] = [1, 2, 4];

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub op: &'static str,
    pub size: usize,
    pub workers: usize,
    /// Best of the repetitions.
    pub seconds: f64,
    pub checksum: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Every worker count produced the same checksum for each op and size.
    pub deterministic: bool,
}

impl BenchReport {
    /// Wall time at `workers` divided by the single-worker wall time.
    pub fn time_ratio(&self, op: &str, size: usize, workers: usize) -> Option<f64> {
        let at = |n: usize| {
            self.rows
                .iter()
                .find(|r| r.op == op && r.size == size && r.workers == n)
                .map(|r| r.seconds)
        };
        Some(at(workers)? / at(1)?)
    }
}

/// SHA-256 of the little-endian bytes of every entry.
pub fn checksum(t: &Tensor) -> String {
    let mut hasher = Sha256::new();
    for v in t.as_slice() {
        hasher.update(v.to_le_bytes());
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// A jittered identity warp: every pixel moves by up to 3 cells.
fn workload(size: usize, seed: u64) -> Result<(Tensor, Tensor, GridSet)> {
    let mut rng = random::rng(seed);
    let u = random::tensor(&mut rng, 1, size, size);
    let v = random::tensor(&mut rng, 1, size, size);
    let gx = Plane::from_fn(size, size, |i, _| i as f64 + rng.random_range(-3.0..3.0));
    let gy = Plane::from_fn(size, size, |_, j| j as f64 + rng.random_range(-3.0..3.0));
    Ok((u, v, GridSet::single(SamplingGrid::new(gx, gy)?)))
}

fn timed(reps: usize, mut f: impl FnMut() -> Result<Tensor>) -> Result<(f64, Tensor)> {
    let mut best = f64::INFINITY;
    let mut out = None;
    for _ in 0..reps.max(1) {
        let start = Instant::now();
        let t = f()?;
        best = best.min(start.elapsed().as_secs_f64());
        out = Some(t);
    }
    Ok((best, out.expect("at least one repetition")))
}

pub fn run_bench(
    sizes: &[usize],
    workers: &[usize],
    reps: usize,
    seed: u64,
) -> Result<BenchReport> {
    let mut rows = Vec::new();
    let mut deterministic = true;
    for &size in sizes {
        let (u, v, grids) = workload(size, seed)?;
        let shape = TargetShape::new(size, size)?;
        for op in ["accumulate", "slice"] {
            let mut first: Option<String> = None;
            for &n in workers {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| {
                        dagrid::Error::InvalidArgument(format!("cannot start {n} workers: {e}"))
                    })?;
                let (seconds, out) = pool.install(|| {
                    timed(reps, || match op {
                        "accumulate" => accumulate(&u, &grids, KernelKind::Bilinear, shape),
                        _ => slice(&v, &grids, KernelKind::Bilinear, (size, size)),
                    })
                })?;
                let sum = checksum(&out);
                match &first {
                    None => first = Some(sum.clone()),
                    Some(f) => deterministic &= *f == sum,
                }
                rows.push(BenchRow {
                    op,
                    size,
                    workers: n,
                    seconds,
                    checksum: sum,
                });
            }
        }
    }
    Ok(BenchReport {
        rows,
        deterministic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checksum_of_zeros() {
        // SHA-256 of 16 zero bytes
        assert_eq!(
            checksum(&Tensor::zeros(1, 1, 2)),
            "374708fff7719dd5979ec875d56cd2286f6d3cf7ec317a3b25632aab28ec37bb"
        );
    }

    #[test]
    fn small_bench_is_deterministic() {
        let report = run_bench(&[16, 33], &[1, 2, 3], 1, 9).unwrap();
        assert!(report.deterministic);
        assert_eq!(report.rows.len(), 12);
        assert!(report.time_ratio("slice", 33, 3).is_some());
        assert!(report.time_ratio("slice", 34, 3).is_none());
    }
}
