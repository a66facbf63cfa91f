//! Per-agent training: local interaction sampling, replay, critic and actor
//! updates, and target tracking.
//!
//! A learner owns its agent's critic and target critic and never shares
//! them. It receives every agent's policy pair at the start of an iteration
//! and returns only its own agent's updated pair.

mod buffer;
mod collect;
mod update;

use std::time::Instant;

pub use buffer::ReplayBuffer;
pub use collect::{collect_from_world, collect_local_interaction, explore, Collection, InteractionRecord, NextNeighborhood};
pub use update::{actor_objective_and_grad, actor_update, critic_loss_and_grad, critic_update, td_target};

use crate::envs::{EnvKind, Environment};
use crate::error::{Error, Result};
use crate::nn::{layer_sizes, polyak_update, AdamState, Head, Mlp};
use crate::proximity::AgentId;
use crate::seed::{stream, tag};

/// A policy and its slowly tracking target copy.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyPair {
    pub online: Mlp,
    pub target: Mlp,
}

/// Every agent's policy pair, indexed by agent id.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyTable {
    pub pairs: Vec<PolicyPair>,
}

impl PolicyTable {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn online(&self, j: AgentId) -> Result<&Mlp> {
        self.pairs.get(j).map(|p| &p.online).ok_or(Error::InvalidAgent { id: j, count: self.pairs.len() })
    }

    pub fn target(&self, j: AgentId) -> Result<&Mlp> {
        self.pairs.get(j).map(|p| &p.target).ok_or(Error::InvalidAgent { id: j, count: self.pairs.len() })
    }

    pub fn online_policies(&self) -> Vec<Mlp> {
        self.pairs.iter().map(|p| p.online.clone()).collect()
    }
}

/// Training hyperparameters shared by DARL1N learners and the baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub gamma: f64,
    pub lr: f64,
    /// Weight of the online network in each target update.
    pub polyak: f64,
    pub batch: usize,
    pub buffer_capacity: usize,
    /// One-step samples collected per iteration.
    pub transitions_per_iteration: usize,
    /// Iterations between gradient steps.
    pub update_every: usize,
    /// Standard deviation of exploration noise during collection.
    pub noise: f64,
    pub hidden_layers: usize,
    pub hidden_width: usize,
}

impl TrainConfig {
    /// Defaults for an environment: batch 32 on the lattice and 1024 in
    /// particle worlds, four episodes' worth of samples per iteration.
    pub fn for_env(kind: EnvKind, episode_length: usize) -> Self {
        Self {
            seed: 0,
            gamma: 0.95,
            lr: 0.01,
            polyak: 0.01,
            batch: if kind == EnvKind::Ising { 32 } else { 1024 },
            buffer_capacity: 1_000_000,
            transitions_per_iteration: 4 * episode_length,
            update_every: 1,
            noise: 0.1,
            hidden_layers: 3,
            hidden_width: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(0.0..=1.0).contains(&self.polyak) {
            return bad("polyak rate must lie in [0, 1]");
        }
        if self.batch == 0 || self.buffer_capacity == 0 || self.update_every == 0 {
            return bad("batch, buffer and update cadence must be positive");
        }
        if self.batch > self.buffer_capacity {
            return bad("batch exceeds buffer capacity");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("exploration noise must be a finite non-negative value");
        }
        Ok(())
    }

    /// Whether iteration `k` ends with a gradient step.
    pub fn updates_at(&self, iteration: u64) -> bool {
        (iteration + 1).is_multiple_of(self.update_every as u64)
    }
}

fn policy_sizes(env: &dyn Environment, cfg: &TrainConfig) -> Vec<usize> {
    let pad = env.pad_spec();
    layer_sizes(pad.policy_input_dim(), cfg.hidden_layers, cfg.hidden_width, pad.action_dim)
}

/// Initial policy pairs; agent `m` draws from stream `(seed, m, POLICY_INIT)`
/// and its target starts as an exact copy.
pub fn init_policies(env: &dyn Environment, cfg: &TrainConfig) -> Result<PolicyTable> {
    let sizes = policy_sizes(env, cfg);
    let head = env.action_kind().policy_head();
    let pairs = (0..env.agent_count())
        .map(|m| {
            let online = Mlp::new(&sizes, head, &mut stream(cfg.seed, m as u64, tag::POLICY_INIT))?;
            Ok(PolicyPair { target: online.clone(), online })
        })
        .collect::<Result<_>>()?;
    Ok(PolicyTable { pairs })
}

/// Initial critic of agent `i` for a critic input of `input_dim`, drawn
/// from stream `(seed, i, CRITIC_INIT)`.
pub fn init_critic(input_dim: usize, i: AgentId, cfg: &TrainConfig) -> Result<Mlp> {
    let sizes = layer_sizes(input_dim, cfg.hidden_layers, cfg.hidden_width, 1);
    Mlp::new(&sizes, Head::Linear, &mut stream(cfg.seed, i as u64, tag::CRITIC_INIT))
}

/// What a learner reports after one iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnerUpdate {
    pub agent: AgentId,
    pub iteration: u64,
    pub pair: PolicyPair,
    /// Critic loss of the gradient step, if one was taken.
    pub loss: Option<f64>,
    pub collect_s: f64,
    pub update_s: f64,
}

/// Training state of one agent.
#[derive(Clone, Debug)]
pub struct Learner {
    agent: AgentId,
    cfg: TrainConfig,
    critic: Mlp,
    critic_target: Mlp,
    critic_adam: AdamState,
    policy_adam: AdamState,
    buffer: ReplayBuffer<InteractionRecord>,
}

impl Learner {
    pub fn new(env: &dyn Environment, agent: AgentId, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if agent >= env.agent_count() {
            return Err(Error::InvalidAgent { id: agent, count: env.agent_count() });
        }
        let critic = init_critic(env.pad_spec().critic_input_dim(), agent, &cfg)?;
        let policy_shape = Mlp::zeros(&policy_sizes(env, &cfg), env.action_kind().policy_head())?;
        Ok(Self {
            agent,
            critic_adam: AdamState::new(&critic, cfg.lr),
            policy_adam: AdamState::new(&policy_shape, cfg.lr),
            critic_target: critic.clone(),
            critic,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            cfg,
        })
    }

    pub fn agent(&self) -> AgentId {
        self.agent
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic
    }

    pub fn critic_target(&self) -> &Mlp {
        &self.critic_target
    }

    pub fn buffer(&self) -> &ReplayBuffer<InteractionRecord> {
        &self.buffer
    }

    /// Collects this iteration's samples with the received policies, then,
    /// if the buffer holds a full batch, takes one critic step, one actor
    /// step and the two target updates. All randomness comes from stream
    /// `(seed, agent, iteration)`.
    pub fn run_iteration(&mut self, env: &dyn Environment, table: &PolicyTable, iteration: u64) -> Result<LearnerUpdate> {
        let i = self.agent;
        let mut pair = table.pairs.get(i).cloned().ok_or(Error::InvalidAgent { id: i, count: table.len() })?;
        let mut rng = stream(self.cfg.seed, i as u64, iteration);

        let start = Instant::now();
        for _ in 0..self.cfg.transitions_per_iteration {
            let c = collect_local_interaction(env, table, i, self.cfg.noise, &mut rng)?;
            self.buffer.push(c.record);
        }
        let collect_s = start.elapsed().as_secs_f64();

        let start = Instant::now();
        let mut loss = None;
        if self.cfg.updates_at(iteration) {
            if let Some(batch) = self.buffer.sample(self.cfg.batch, &mut rng) {
                let pad = env.pad_spec();
                let targets = batch
                    .iter()
                    .map(|r| td_target(r, table, &self.critic_target, &pad, self.cfg.gamma))
                    .collect::<Result<Vec<_>>>()?;
                let critic_in = batch.iter().map(|r| r.critic_input(&pad)).collect::<Result<Vec<_>>>()?;
                let policy_in = batch.iter().map(|r| r.policy_input(&pad)).collect::<Result<Vec<_>>>()?;
                loss = Some(critic_update(&mut self.critic, &mut self.critic_adam, &critic_in, &targets)?);
                actor_update(&mut pair.online, &mut self.policy_adam, &self.critic, &policy_in, &critic_in, pad.action_range(0))?;
                polyak_update(&mut self.critic_target, &self.critic, self.cfg.polyak)?;
                polyak_update(&mut pair.target, &pair.online, self.cfg.polyak)?;
            }
        }
        let update_s = start.elapsed().as_secs_f64();
        Ok(LearnerUpdate { agent: i, iteration, pair, loss, collect_s, update_s })
    }
}
