//! Timing sweeps over one world dimension.

use std::time::Duration;

use serde::Serialize;

use crate::backend::OptimizerConfig;
use crate::error::{invalid, Result};
use crate::synth::{generate, WorldSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sweep {
    Poses,
    Points,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub value: usize,
    /// Median over repeats of the mean wall time per optimizer iteration.
    pub time_per_iter_s: f64,
    pub final_cost: f64,
}

/// Optimizes the world `spec` `repeats` times. Summation matrices are built
/// before the clock starts.
pub fn time_optimize(spec: &WorldSpec, config: &OptimizerConfig, repeats: usize) -> Result<BenchRow> {
    if repeats == 0 {
        return Err(invalid("repeats must be at least 1"));
    }
    let ds = generate(spec)?;
    let base = ds.problem(config.clone())?;
    drop(ds);
    let mut times = Vec::with_capacity(repeats);
    let mut final_cost = f64::NAN;
    for _ in 0..repeats {
        let mut problem = base.clone();
        let report = problem.optimize();
        let total: Duration = report.iteration_times.iter().sum();
        times.push(total.as_secs_f64() / report.iteration_times.len().max(1) as f64);
        final_cost = report.final_cost;
    }
    times.sort_by(f64::total_cmp);
    Ok(BenchRow { value: 0, time_per_iter_s: times[times.len() / 2], final_cost })
}

pub fn bench(
    sweep: Sweep,
    values: &[usize],
    base: &WorldSpec,
    config: &OptimizerConfig,
    repeats: usize,
) -> Result<Vec<BenchRow>> {
    values
        .iter()
        .map(|&value| {
            let spec = match sweep {
                Sweep::Poses => WorldSpec { n_poses: value, ..base.clone() },
                Sweep::Points => WorldSpec { points_per_plane: value, ..base.clone() },
            };
            Ok(BenchRow { value, ..time_optimize(&spec, config, repeats)? })
        })
        .collect()
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("value,time_per_iter_s,final_cost\n");
    for r in rows {
        out += &format!("{},{},{}\n", r.value, r.time_per_iter_s, r.final_cost);
    }
    out
}
