//! Training, evaluation and the learner-process entry point.

use std::fs;
use std::net::{SocketAddr, TcpListener};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::Arc;
use std::time::Duration;

use darl1n_core::baseline::Maddpg;
use darl1n_core::coordinator::{
    connect, run_baseline, run_training, serve_learner, spawn_tcp_learners, Controller, InProcess, TcpTransport, TrainingOptions, Transport,
};
use darl1n_core::envs::{rollout, Env, Environment};
use darl1n_core::learner::{init_policies, Learner, PolicyTable};
use darl1n_core::metrics::MetricsRow;

use crate::config::{Algorithm, RunConfig, TransportKind};
use crate::outputs::{aggregate, emit, load_params, save_params, Summary, CONFIG_FILE};
use crate::CliError;

/// Where TCP learners run.
#[derive(Clone, Debug)]
pub enum LearnerHost {
    /// Threads of this process (tests, embedding).
    Threads,
    /// Child processes of `exe`, started as `exe learner <config> ...`.
    Processes { exe: PathBuf, config: PathBuf },
}

/// Outcome of one seeded run.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub seed: u64,
    pub dir: PathBuf,
    pub rows: Vec<MetricsRow>,
    pub summary: Summary,
    pub table: PolicyTable,
}

pub fn build_env(cfg: &RunConfig, agents: usize) -> Result<Arc<Env>, CliError> {
    Ok(Arc::new(Env::new(cfg.env_config(agents)?)?))
}

fn options(cfg: &RunConfig, seed: u64) -> TrainingOptions {
    TrainingOptions { max_iterations: cfg.max_iterations, eval_every: cfg.eval_every, eval_episodes: cfg.eval_episodes, eval_seed: seed }
}

fn timeout(cfg: &RunConfig) -> Duration {
    Duration::from_secs_f64(cfg.timeout_s)
}

fn drive<T: Transport>(env: &Env, transport: T, table: PolicyTable, cfg: &RunConfig, seed: u64, on_row: &mut dyn FnMut(&MetricsRow)) -> Result<(Vec<MetricsRow>, PolicyTable), CliError> {
    let mut controller = Controller::new(transport, table, timeout(cfg))?;
    let rows = run_training(env, &mut controller, &options(cfg, seed), on_row)?;
    Ok((rows, controller.finish()?))
}

/// Kills still-running learner processes if training aborts.
struct Children(Vec<Child>);

impl Children {
    fn wait(mut self) -> Result<(), CliError> {
        for mut c in std::mem::take(&mut self.0) {
            let status = c.wait()?;
            if !status.success() {
                return Err(CliError::Runtime(format!("learner process exited with {status}")));
            }
        }
        Ok(())
    }
}

impl Drop for Children {
    fn drop(&mut self) {
        for c in &mut self.0 {
            let _ = c.kill();
            let _ = c.wait();
        }
    }
}

fn spawn_processes(exe: &Path, config: &Path, agents: usize, seed: u64, addr: SocketAddr) -> Result<Children, CliError> {
    let mut children = Children(Vec::with_capacity(agents));
    for i in 0..agents {
        let child = Command::new(exe)
            .arg("learner")
            .arg(config)
            .args(["--agent", &i.to_string(), "--seed", &seed.to_string(), "--connect", &addr.to_string()])
            .stdin(Stdio::null())
            .spawn()?;
        children.0.push(child);
    }
    Ok(children)
}

/// One training run with the given seed; returns the metrics and the final
/// policies.
pub fn train_once(cfg: &RunConfig, seed: u64, host: &LearnerHost, on_row: &mut dyn FnMut(&MetricsRow)) -> Result<(Vec<MetricsRow>, PolicyTable), CliError> {
    let env = build_env(cfg, cfg.agents)?;
    let tc = cfg.train_config(seed);
    if cfg.algorithm == Algorithm::Maddpg {
        let mut trainer = Maddpg::new(env.as_ref(), tc)?;
        let rows = run_baseline(env.as_ref(), &mut trainer, &options(cfg, seed), on_row)?;
        return Ok((rows, trainer.policies().clone()));
    }
    let table = init_policies(env.as_ref(), &tc)?;
    let make_learners = || (0..cfg.agents).map(|i| Learner::new(env.as_ref(), i, tc.clone())).collect::<Result<Vec<_>, _>>();
    match cfg.transport {
        TransportKind::InProc => {
            let transport = InProcess::spawn(Arc::clone(&env) as Arc<dyn Environment>, make_learners()?)?;
            drive(&env, transport, table, cfg, seed, on_row)
        }
        TransportKind::Tcp => {
            let listener = TcpListener::bind(&cfg.listen).map_err(|e| CliError::Runtime(format!("cannot listen on {}: {e}", cfg.listen)))?;
            let addr = listener.local_addr()?;
            match host {
                LearnerHost::Threads => {
                    let handles = spawn_tcp_learners(addr, Arc::clone(&env) as Arc<dyn Environment>, make_learners()?, timeout(cfg))?;
                    let transport = TcpTransport::accept(&listener, cfg.agents, timeout(cfg))?;
                    let out = drive(&env, transport, table, cfg, seed, on_row)?;
                    for h in handles {
                        h.join().map_err(|_| CliError::Runtime("learner thread panicked".into()))??;
                    }
                    Ok(out)
                }
                LearnerHost::Processes { exe, config } => {
                    let children = spawn_processes(exe, config, cfg.agents, seed, addr)?;
                    let transport = TcpTransport::accept(&listener, cfg.agents, timeout(cfg))?;
                    let out = drive(&env, transport, table, cfg, seed, on_row)?;
                    children.wait()?;
                    Ok(out)
                }
            }
        }
    }
}

fn title(cfg: &RunConfig, seed: u64) -> String {
    let algo = match cfg.algorithm {
        Algorithm::Darl1n => "DARL1N",
        Algorithm::Maddpg => "MADDPG",
    };
    format!("{algo} on {} with M={}, seed {seed}", cfg.env.name(), cfg.agents)
}

/// Runs every configured seed and writes outputs. One run writes straight
/// into the output directory; several write `run-<seed>/` subdirectories
/// plus an `aggregate/` directory with per-iteration means.
pub fn train(cfg: &RunConfig, host: &LearnerHost, progress: &mut dyn FnMut(u64, &MetricsRow)) -> Result<Vec<RunResult>, CliError> {
    fs::create_dir_all(&cfg.output)?;
    fs::write(cfg.output.join(CONFIG_FILE), cfg.to_string())?;
    let mut results = Vec::new();
    for seed in cfg.seeds() {
        let dir = if cfg.runs == 1 { cfg.output.clone() } else { cfg.output.join(format!("run-{seed}")) };
        let (rows, table) = train_once(cfg, seed, host, &mut |r| progress(seed, r))?;
        let summary = emit(&dir, &rows, &title(cfg, seed))?;
        save_params(&dir, cfg.max_iterations, &table)?;
        results.push(RunResult { seed, dir, rows, summary, table });
    }
    if cfg.runs > 1 {
        let all: Vec<Vec<MetricsRow>> = results.iter().map(|r| r.rows.clone()).collect();
        emit(&cfg.output.join("aggregate"), &aggregate(&all), &format!("mean of {} runs", cfg.runs))?;
    }
    Ok(results)
}

/// Greedy team reward of stored policies over the configured number of
/// evaluation episodes.
pub fn eval(cfg: &RunConfig, params_dir: &Path) -> Result<Vec<f64>, CliError> {
    let params = load_params(params_dir)?;
    let env = build_env(cfg, cfg.agents)?;
    if params.table.len() != cfg.agents {
        return Err(CliError::Config(format!("stored policies cover {} agents, config has M={}", params.table.len(), cfg.agents)));
    }
    Ok(rollout(env.as_ref(), &params.table.online_policies(), cfg.seed, cfg.eval_episodes)?)
}

/// Body of a learner process: connects to the controller and serves
/// iterations until shut down.
pub fn serve(cfg: &RunConfig, agent: usize, seed: u64, addr: &str) -> Result<(), CliError> {
    let env = build_env(cfg, cfg.agents)?;
    let learner = Learner::new(env.as_ref(), agent, cfg.train_config(seed))?;
    let stream = connect(addr, timeout(cfg))?;
    serve_learner(stream, env.as_ref(), learner)?;
    Ok(())
}
