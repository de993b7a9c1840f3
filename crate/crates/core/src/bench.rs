//! Throughput measurement of full two-axis solves.

use std::hint::black_box;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::InstanceRecord;
use crate::oracle::fuzz::stratified_instance;
use crate::solver::SolverConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchReport {
    pub solves: usize,
    pub batch: usize,
    pub seconds: f64,
    pub solves_per_sec: f64,
    /// Mean wall time of one batch.
    pub batch_ms: f64,
}

/// Instances mixing all axis cases, as produced by the fuzz generator.
pub fn bench_instances(n: usize, seed: u64) -> Result<Vec<InstanceRecord>> {
    (0..n).map(|i| stratified_instance(seed, i, &[1.0 / 9.0, 1.0])).collect()
}

/// Solves `solves` instances (cycling through `records`) in batches of
/// `batch`. Batches run one after another; with `parallel` the boxes of a
/// batch are spread over the current rayon pool. One untimed pass over the
/// records warms caches first.
pub fn run_bench(
    records: &[InstanceRecord],
    solves: usize,
    batch: usize,
    parallel: bool,
    cfg: &SolverConfig,
) -> Result<BenchReport> {
    if records.is_empty() || solves == 0 || batch == 0 {
        return Err(Error::invalid("need instances, at least one solve and a positive batch"));
    }
    for r in records {
        black_box(r.solve(cfg)?);
    }
    let mut done = 0;
    let mut batches = 0;
    let mut cursor = 0;
    let mut chunk = Vec::with_capacity(batch);
    let start = Instant::now();
    while done < solves {
        chunk.clear();
        let take = batch.min(solves - done);
        for _ in 0..take {
            chunk.push(&records[cursor]);
            cursor = (cursor + 1) % records.len();
        }
        if parallel {
            chunk.par_iter().try_for_each(|r| r.solve(cfg).map(|s| {
                black_box(s);
            }))?;
        } else {
            for r in &chunk {
                black_box(r.solve(cfg)?);
            }
        }
        done += take;
        batches += 1;
    }
    let seconds = start.elapsed().as_secs_f64();
    Ok(BenchReport {
        solves,
        batch,
        seconds,
        solves_per_sec: solves as f64 / seconds,
        batch_ms: 1e3 * seconds / batches as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_solve_runs() {
        let recs = bench_instances(4, 1).unwrap();
        let r = run_bench(&recs, 1, 512, false, &SolverConfig::default()).unwrap();
        assert_eq!(r.solves, 1);
        assert!(r.solves_per_sec > 0.0);
        assert!(run_bench(&recs, 0, 512, false, &SolverConfig::default()).is_err());
    }
}
