//! Per-iteration training time over a sweep of team sizes.

use std::fmt::Write as _;
use std::time::Instant;

use darl1n_core::baseline::Maddpg;
use darl1n_core::learner::{init_policies, Learner};

use crate::config::{Algorithm, RunConfig};
use crate::run::build_env;
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchRow {
    pub algorithm: Algorithm,
    pub agents: usize,
    /// Mean iteration time when every learner has a machine of its own:
    /// the slowest learner's work. For the centralized baseline this is its
    /// whole iteration.
    pub iteration_s: f64,
    /// Mean compute of one iteration summed over all learners, i.e. the
    /// wall time on a single core.
    pub total_s: f64,
}

/// Learners run one after another on this thread so each timing is free
/// of contention; updates install together after every learner reported,
/// as the controller does.
fn time_darl1n(cfg: &RunConfig, agents: usize) -> Result<BenchRow, CliError> {
    let env = build_env(cfg, agents)?;
    let tc = cfg.train_config(cfg.seed);
    let mut table = init_policies(env.as_ref(), &tc)?;
    let mut learners = (0..agents).map(|i| Learner::new(env.as_ref(), i, tc.clone())).collect::<Result<Vec<_>, _>>()?;
    let (mut slowest, mut total) = (0.0, 0.0);
    for k in 0..cfg.bench_warmup + cfg.bench_iterations {
        let mut times = Vec::with_capacity(agents);
        let mut pairs = Vec::with_capacity(agents);
        for l in &mut learners {
            let start = Instant::now();
            let u = l.run_iteration(env.as_ref(), &table, k as u64)?;
            times.push(start.elapsed().as_secs_f64());
            pairs.push(u.pair);
        }
        table.pairs = pairs;
        if k >= cfg.bench_warmup {
            slowest += times.iter().copied().fold(0.0, f64::max);
            total += times.iter().sum::<f64>();
        }
    }
    let n = cfg.bench_iterations as f64;
    Ok(BenchRow { algorithm: Algorithm::Darl1n, agents, iteration_s: slowest / n, total_s: total / n })
}

fn time_maddpg(cfg: &RunConfig, agents: usize) -> Result<BenchRow, CliError> {
    let env = build_env(cfg, agents)?;
    let mut trainer = Maddpg::new(env.as_ref(), cfg.train_config(cfg.seed))?;
    for k in 0..cfg.bench_warmup {
        trainer.run_iteration(env.as_ref(), k as u64)?;
    }
    let start = Instant::now();
    for k in 0..cfg.bench_iterations {
        trainer.run_iteration(env.as_ref(), (cfg.bench_warmup + k) as u64)?;
    }
    let per = start.elapsed().as_secs_f64() / cfg.bench_iterations as f64;
    Ok(BenchRow { algorithm: Algorithm::Maddpg, agents, iteration_s: per, total_s: per })
}

/// Times both algorithms at every configured team size.
pub fn bench(cfg: &RunConfig) -> Result<Vec<BenchRow>, CliError> {
    let mut rows = Vec::new();
    for &m in &cfg.bench_sizes {
        rows.push(time_darl1n(cfg, m)?);
        rows.push(time_maddpg(cfg, m)?);
    }
    Ok(rows)
}

fn find(rows: &[BenchRow], algorithm: Algorithm, agents: usize) -> Option<&BenchRow> {
    rows.iter().find(|r| r.algorithm == algorithm && r.agents == agents)
}

/// Iteration-time growth `t(large) / t(small)` for one algorithm.
pub fn scaling_ratio(rows: &[BenchRow], algorithm: Algorithm, small: usize, large: usize) -> Option<f64> {
    Some(find(rows, algorithm, large)?.iteration_s / find(rows, algorithm, small)?.iteration_s)
}

/// Growth of single-core compute, `total(large) / total(small)`.
pub fn total_ratio(rows: &[BenchRow], algorithm: Algorithm, small: usize, large: usize) -> Option<f64> {
    Some(find(rows, algorithm, large)?.total_s / find(rows, algorithm, small)?.total_s)
}

/// CSV table followed by growth ratios between the smallest and largest
/// team.
pub fn bench_table(rows: &[BenchRow]) -> String {
    let name = |a: Algorithm| match a {
        Algorithm::Darl1n => "darl1n",
        Algorithm::Maddpg => "maddpg",
    };
    let mut out = String::from("algorithm,M,iteration_s,single_core_s\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{:.6},{:.6}", name(r.algorithm), r.agents, r.iteration_s, r.total_s);
    }
    let sizes: Vec<usize> = rows.iter().map(|r| r.agents).collect();
    if let (Some(&lo), Some(&hi)) = (sizes.iter().min(), sizes.iter().max()) {
        if lo != hi {
            for a in [Algorithm::Darl1n, Algorithm::Maddpg] {
                if let (Some(it), Some(total)) = (scaling_ratio(rows, a, lo, hi), total_ratio(rows, a, lo, hi)) {
                    let _ = writeln!(out, "# {} M={hi}/M={lo}: iteration time ratio {it:.3}, single-core ratio {total:.3} (agent ratio {:.3})", name(a), hi as f64 / lo as f64);
                }
            }
        }
    }
    out
}
