//! The central controller: holds every policy pair, broadcasts them, and
//! waits for each learner's update before starting the next iteration.
//!
//! Each iteration is a barrier. The controller never sees a critic; only
//! policy pairs travel in either direction.

mod transport;
pub mod wire;

use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

pub use transport::{connect, serve_learner, spawn_tcp_learners, InProcess, TcpTransport, Transport, HEARTBEAT_INTERVAL};
pub use wire::{Message, ParamMsg, UpdateMsg, PROTOCOL_VERSION};

use crate::baseline::Maddpg;
use crate::envs::{rollout, Environment};
use crate::error::{Error, Result};
use crate::learner::PolicyTable;
use crate::metrics::MetricsRow;

/// Attempts per send before a broadcast is abandoned.
pub const SEND_ATTEMPTS: u32 = 4;

/// Slowest learner's timings for one iteration.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IterationTiming {
    pub collect_s: f64,
    pub update_s: f64,
}

pub struct Controller<T: Transport> {
    transport: T,
    table: PolicyTable,
    iteration: u64,
    timeout: Duration,
}

impl<T: Transport> Controller<T> {
    /// `timeout` bounds how long one iteration's updates may take.
    pub fn new(transport: T, table: PolicyTable, timeout: Duration) -> Result<Self> {
        if transport.agents() != table.len() {
            return Err(Error::InvalidArgument(format!(
                "{} learners for {} policies",
                transport.agents(),
                table.len()
            )));
        }
        Ok(Self { transport, table, iteration: 0, timeout })
    }

    pub fn table(&self) -> &PolicyTable {
        &self.table
    }

    /// Index of the iteration the next broadcast starts.
    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Sends the current table to every learner, retrying each send with
    /// exponential backoff.
    pub fn broadcast_params(&mut self) -> Result<()> {
        let msg = Arc::new(ParamMsg { iteration: self.iteration, table: self.table.clone() });
        for agent in 0..self.transport.agents() {
            let mut wait = Duration::from_millis(10);
            let mut attempt = 1;
            loop {
                match self.transport.send_params(agent, &msg) {
                    Ok(()) => break,
                    Err(e) if attempt >= SEND_ATTEMPTS => {
                        return Err(Error::Transport(format!("broadcast to learner {agent} failed after {attempt} attempts: {e}")));
                    }
                    Err(_) => {
                        thread::sleep(wait);
                        wait *= 2;
                        attempt += 1;
                    }
                }
            }
        }
        Ok(())
    }

    /// Blocks until every learner has reported for the current iteration,
    /// then installs all updates at once and advances the iteration.
    /// Repeated updates and leftovers from earlier iterations are ignored.
    pub fn collect_updates(&mut self) -> Result<IterationTiming> {
        let m = self.table.len();
        let deadline = Instant::now() + self.timeout;
        let mut fresh: Vec<Option<UpdateMsg>> = vec![None; m];
        let mut received = 0;
        while received < m {
            let left = deadline.saturating_duration_since(Instant::now());
            let Some(u) = self.transport.recv_update(left)? else {
                let missing = (0..m).filter(|&k| fresh[k].is_none()).collect();
                return Err(Error::Timeout { missing });
            };
            if u.iteration < self.iteration {
                continue;
            }
            if u.iteration > self.iteration {
                return Err(Error::Protocol(format!("update for future iteration {} during {}", u.iteration, self.iteration)));
            }
            let current = self.table.pairs.get(u.agent).ok_or(Error::InvalidAgent { id: u.agent, count: m })?;
            if !u.pair.online.same_shape(&current.online) || !u.pair.target.same_shape(&current.target) {
                return Err(Error::Protocol(format!("update from agent {} has the wrong shape", u.agent)));
            }
            let slot = &mut fresh[u.agent];
            if slot.is_none() {
                *slot = Some(u);
                received += 1;
            }
        }
        let mut timing = IterationTiming::default();
        for u in fresh.into_iter().flatten() {
            timing.collect_s = timing.collect_s.max(u.collect_s);
            timing.update_s = timing.update_s.max(u.update_s);
            self.table.pairs[u.agent] = u.pair;
        }
        self.iteration += 1;
        Ok(timing)
    }

    /// One full barrier: broadcast then collect.
    pub fn step(&mut self) -> Result<IterationTiming> {
        self.broadcast_params()?;
        self.collect_updates()
    }

    /// Stops every learner and returns the final policy table.
    pub fn finish(mut self) -> Result<PolicyTable> {
        self.transport.shutdown(self.iteration)?;
        Ok(self.table)
    }
}

/// Evaluation cadence and size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainingOptions {
    pub max_iterations: u64,
    /// Evaluate after every `eval_every` iterations.
    pub eval_every: u64,
    pub eval_episodes: usize,
    /// Evaluation worlds come from streams `(eval_seed, episode, EVAL)`, so
    /// every evaluation point scores the same starting worlds.
    pub eval_seed: u64,
}

impl TrainingOptions {
    pub fn new(max_iterations: u64, eval_seed: u64) -> Self {
        Self { max_iterations, eval_every: 1, eval_episodes: 10, eval_seed }
    }
}

fn evaluate(env: &dyn Environment, table: &PolicyTable, opts: &TrainingOptions) -> Result<f64> {
    let totals = rollout(env, &table.online_policies(), opts.eval_seed, opts.eval_episodes)?;
    Ok(totals.iter().sum::<f64>() / totals.len().max(1) as f64)
}

/// Shared loop: `iterate` runs one training iteration, `table` exposes the
/// current policies for evaluation.
fn drive(
    env: &dyn Environment,
    opts: &TrainingOptions,
    on_row: &mut dyn FnMut(&MetricsRow),
    mut iterate: impl FnMut() -> Result<IterationTiming>,
    mut table: impl FnMut() -> PolicyTable,
) -> Result<Vec<MetricsRow>> {
    if opts.eval_every == 0 || opts.eval_episodes == 0 {
        return Err(Error::Config("evaluation needs a positive cadence and episode count".into()));
    }
    let mut rows = Vec::new();
    let mut seconds = 0.0;
    for k in 1..=opts.max_iterations {
        let start = Instant::now();
        let timing = iterate()?;
        seconds += start.elapsed().as_secs_f64();
        if k % opts.eval_every == 0 {
            let row = MetricsRow {
                iteration: k,
                seconds,
                avg_total_reward: evaluate(env, &table(), opts)?,
                collect_s: timing.collect_s,
                update_s: timing.update_s,
            };
            on_row(&row);
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Runs DARL1N for `max_iterations` barriers, evaluating the greedy team
/// as configured. `on_row` sees each metrics row as it is produced.
pub fn run_training<T: Transport>(
    env: &dyn Environment,
    controller: &mut Controller<T>,
    opts: &TrainingOptions,
    on_row: &mut dyn FnMut(&MetricsRow),
) -> Result<Vec<MetricsRow>> {
    let cell = std::cell::RefCell::new(controller);
    drive(env, opts, on_row, || cell.borrow_mut().step(), || cell.borrow().table().clone())
}

/// Same loop for the centralized baseline.
pub fn run_baseline(env: &dyn Environment, trainer: &mut Maddpg, opts: &TrainingOptions, on_row: &mut dyn FnMut(&MetricsRow)) -> Result<Vec<MetricsRow>> {
    let cell = std::cell::RefCell::new(trainer);
    let mut k = 0u64;
    drive(
        env,
        opts,
        on_row,
        || {
            let r = cell.borrow_mut().run_iteration(env, k)?;
            k += 1;
            Ok(IterationTiming { collect_s: r.collect_s, update_s: r.update_s })
        },
        || cell.borrow().policies().clone(),
    )
}

#[cfg(test)]
mod tests;
