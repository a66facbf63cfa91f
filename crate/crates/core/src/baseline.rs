//! Centralized-critic MADDPG for comparison.
//!
//! Policies stay decentralized (same inputs as DARL1N), but each agent's
//! critic sees the joint state and action of the whole team, and every
//! sample requires simulating every agent. Samples are one-step transitions
//! from fresh random worlds, exactly like DARL1N collection, so with a
//! single agent both algorithms follow the same parameter trajectory.

use std::time::Instant;

use crate::envs::{step, Environment, World};
use crate::error::{Error, Result};
use crate::learner::{actor_update, critic_update, explore, init_critic, init_policies, PolicyTable, ReplayBuffer, TrainConfig};
use crate::nn::{polyak_update, AdamState, Mlp, PadSpec};
use crate::proximity::{all_neighbor_sets, AgentId};
use crate::seed::{stream, SimRng};

/// One joint transition with the policy inputs it was taken from.
#[derive(Clone, Debug, PartialEq)]
pub struct CentralRecord {
    /// Features of all agents, flattened by agent id.
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_states: Vec<f64>,
    /// Decentralized policy input of each agent at `s`.
    pub policy_inputs: Vec<Vec<f64>>,
    /// Decentralized policy input of each agent at `s'`.
    pub next_policy_inputs: Vec<Vec<f64>>,
}

/// Per-agent policy inputs and flattened features of a world.
fn observe(env: &dyn Environment, world: &World) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let pad = env.pad_spec();
    let sets = all_neighbor_sets(&world.agents, env.graph())?;
    let features: Vec<Vec<f64>> = (0..env.agent_count()).map(|j| env.features(world, j)).collect();
    let inputs = sets
        .iter()
        .enumerate()
        .map(|(j, set)| {
            let flat: Vec<f64> = set.one_hop.iter().flat_map(|&k| features[k].iter().copied()).collect();
            pad.encode_states(j, &set.one_hop, &flat)
        })
        .collect::<Result<_>>()?;
    Ok((inputs, features.concat()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaddpgReport {
    pub iteration: u64,
    /// Critic losses by agent, present when a gradient step was taken.
    pub losses: Option<Vec<f64>>,
    pub collect_s: f64,
    pub update_s: f64,
}

/// Whole-team trainer.
#[derive(Clone, Debug)]
pub struct Maddpg {
    cfg: TrainConfig,
    central: PadSpec,
    policies: PolicyTable,
    critics: Vec<Mlp>,
    critic_targets: Vec<Mlp>,
    critic_adams: Vec<AdamState>,
    policy_adams: Vec<AdamState>,
    buffer: ReplayBuffer<CentralRecord>,
}

impl Maddpg {
    /// Policies and critics are drawn from the same streams DARL1N uses.
    pub fn new(env: &dyn Environment, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let m = env.agent_count();
        let pad = env.pad_spec();
        let central = PadSpec { max_neighbors: m, ..pad };
        let policies = init_policies(env, &cfg)?;
        let critics = (0..m).map(|i| init_critic(central.critic_input_dim(), i, &cfg)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            critic_adams: critics.iter().map(|c| AdamState::new(c, cfg.lr)).collect(),
            policy_adams: policies.pairs.iter().map(|p| AdamState::new(&p.online, cfg.lr)).collect(),
            critic_targets: critics.clone(),
            critics,
            central,
            policies,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            cfg,
        })
    }

    pub fn policies(&self) -> &PolicyTable {
        &self.policies
    }

    pub fn critics(&self) -> &[Mlp] {
        &self.critics
    }

    /// Layout of the centralized critic input (every agent, subject first).
    pub fn critic_layout(&self) -> PadSpec {
        self.central
    }

    pub fn buffer(&self) -> &ReplayBuffer<CentralRecord> {
        &self.buffer
    }

    fn joint_input(&self, i: AgentId, states: &[f64], actions: &[f64]) -> Result<Vec<f64>> {
        let ids: Vec<AgentId> = (0..self.policies.len()).collect();
        self.central.encode_joint(i, &ids, states, actions)
    }

    fn collect(&mut self, env: &dyn Environment, rng: &mut SimRng) -> Result<()> {
        let world = env.sample_world(rng);
        let (policy_inputs, states) = observe(env, &world)?;
        let actions: Vec<Vec<f64>> = policy_inputs
            .iter()
            .enumerate()
            .map(|(j, input)| Ok(explore(env.action_kind(), self.policies.online(j)?.predict(input)?, self.cfg.noise, rng)))
            .collect::<Result<_>>()?;
        let (after, rewards) = step(env, &world, &actions, rng)?;
        let (next_policy_inputs, next_states) = observe(env, &after)?;
        self.buffer.push(CentralRecord { states, actions: actions.concat(), rewards, next_states, policy_inputs, next_policy_inputs });
        Ok(())
    }

    /// One training iteration: collection of `transitions_per_iteration`
    /// joint samples, then one critic and actor step per agent followed by
    /// target updates. Randomness comes from stream `(seed, 0, iteration)`.
    pub fn run_iteration(&mut self, env: &dyn Environment, iteration: u64) -> Result<MaddpgReport> {
        if env.agent_count() != self.policies.len() {
            return Err(Error::InvalidArgument("environment does not match the trained team".into()));
        }
        let mut rng = stream(self.cfg.seed, 0, iteration);
        let start = Instant::now();
        for _ in 0..self.cfg.transitions_per_iteration {
            self.collect(env, &mut rng)?;
        }
        let collect_s = start.elapsed().as_secs_f64();

        let start = Instant::now();
        let mut losses = None;
        if self.cfg.updates_at(iteration) {
            if let Some(batch) = self.buffer.sample(self.cfg.batch, &mut rng) {
                let batch: Vec<CentralRecord> = batch.into_iter().cloned().collect();
                losses = Some(self.update(&batch)?);
            }
        }
        let update_s = start.elapsed().as_secs_f64();
        Ok(MaddpgReport { iteration, losses, collect_s, update_s })
    }

    fn update(&mut self, batch: &[CentralRecord]) -> Result<Vec<f64>> {
        let m = self.policies.len();
        // Target actions use the policies as they stood at the start of the
        // iteration, matching what distributed learners receive.
        let next_actions: Vec<Vec<f64>> = batch
            .iter()
            .map(|rec| {
                let mut a = Vec::new();
                for (j, input) in rec.next_policy_inputs.iter().enumerate() {
                    a.extend(self.policies.target(j)?.predict(input)?);
                }
                Ok(a)
            })
            .collect::<Result<_>>()?;

        let mut losses = Vec::with_capacity(m);
        for i in 0..m {
            let mut targets = Vec::with_capacity(batch.len());
            let mut critic_in = Vec::with_capacity(batch.len());
            for (rec, a_next) in batch.iter().zip(&next_actions) {
                let q_next = self.critic_targets[i].predict(&self.joint_input(i, &rec.next_states, a_next)?)?[0];
                targets.push(rec.rewards[i] + self.cfg.gamma * q_next);
                critic_in.push(self.joint_input(i, &rec.states, &rec.actions)?);
            }
            let policy_in: Vec<Vec<f64>> = batch.iter().map(|r| r.policy_inputs[i].clone()).collect();
            losses.push(critic_update(&mut self.critics[i], &mut self.critic_adams[i], &critic_in, &targets)?);
            let pair = &mut self.policies.pairs[i];
            actor_update(&mut pair.online, &mut self.policy_adams[i], &self.critics[i], &policy_in, &critic_in, self.central.action_range(0))?;
            polyak_update(&mut self.critic_targets[i], &self.critics[i], self.cfg.polyak)?;
            polyak_update(&mut pair.target, &pair.online, self.cfg.polyak)?;
        }
        Ok(losses)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{Env, EnvConfig, EnvKind};
    use crate::learner::Learner;

    fn env(kind: EnvKind, m: usize) -> Env {
        Env::new(EnvConfig::new(kind, m).unwrap()).unwrap()
    }

    fn small(env: &Env) -> TrainConfig {
        let mut cfg = TrainConfig::for_env(env.config().kind, env.episode_length());
        cfg.hidden_width = 16;
        cfg.seed = 7;
        cfg
    }

    #[test]
    fn critic_sees_the_whole_team() {
        let e = env(EnvKind::Ising, 9);
        let b = Maddpg::new(&e, small(&e)).unwrap();
        assert_eq!(b.critics()[0].input_dim(), 9 * (1 + 2));
        assert_eq!(b.critic_layout().critic_input_dim(), 27);
    }

    #[test]
    fn single_agent_matches_darl1n() {
        for kind in [EnvKind::Ising, EnvKind::FoodCollection] {
            let e = env(kind, 1);
            let mut cfg = small(&e);
            cfg.batch = 32;
            let mut base = Maddpg::new(&e, cfg.clone()).unwrap();
            let mut table = init_policies(&e, &cfg).unwrap();
            let mut learner = Learner::new(&e, 0, cfg).unwrap();
            for k in 0..5 {
                base.run_iteration(&e, k).unwrap();
                table.pairs[0] = learner.run_iteration(&e, &table, k).unwrap().pair;
                assert_eq!(&table, base.policies(), "{kind:?} iteration {k}");
                assert_eq!(learner.critic(), &base.critics()[0]);
            }
        }
    }

    #[test]
    fn training_changes_every_agent() {
        let e = env(EnvKind::Ising, 4);
        let cfg = small(&e);
        let mut b = Maddpg::new(&e, cfg.clone()).unwrap();
        let start = init_policies(&e, &cfg).unwrap();
        let r = b.run_iteration(&e, 0).unwrap();
        assert_eq!(r.losses.as_ref().map(Vec::len), Some(4));
        assert_eq!(b.buffer().len(), 100);
        for (a, s) in b.policies().pairs.iter().zip(&start.pairs) {
            assert_ne!(a, s);
        }
    }
}
