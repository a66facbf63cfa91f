//! One-step local interaction sampling.
//!
//! Only agents whose next state can influence the record are simulated:
//! the potential neighbors of the subject, then the potential neighbors of
//! each of its next-step one-hop neighbors. Everyone else keeps an empty
//! next-state slot, so an accidental read is an error rather than a silent
//! use of stale data.

use rand_distr::{Distribution, Normal};

use super::PolicyTable;
use crate::envs::{ActionKind, Environment, World};
use crate::error::{Error, Result};
use crate::proximity::{one_hop_neighbors, potential_neighbors, AgentId, AgentState, DIST_SLACK};
use crate::seed::SimRng;

/// One replay entry of agent `agent`.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionRecord {
    pub agent: AgentId,
    /// One-hop neighborhood at `t`, ascending.
    pub neighbors: Vec<AgentId>,
    /// Features of `neighbors`, flattened in the same order.
    pub states: Vec<f64>,
    /// Actions of `neighbors`, flattened in the same order.
    pub actions: Vec<f64>,
    pub reward: f64,
    /// One entry per member of the next one-hop neighborhood, ascending by
    /// agent. Each holds that member's own next neighborhood, which is what
    /// its target-policy action needs.
    pub next: Vec<NextNeighborhood>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NextNeighborhood {
    pub agent: AgentId,
    pub ids: Vec<AgentId>,
    pub states: Vec<f64>,
}

impl InteractionRecord {
    /// Next neighborhood of `j`, if `j` is a next one-hop neighbor.
    pub fn next_of(&self, j: AgentId) -> Option<&NextNeighborhood> {
        self.next.iter().find(|n| n.agent == j)
    }

    /// Every agent id the record refers to.
    pub fn referenced_ids(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.neighbors.iter().copied().chain(self.next.iter().flat_map(|n| n.ids.iter().copied()))
    }
}

/// A record plus the agents that were simulated to produce it (ascending).
#[derive(Clone, Debug)]
pub struct Collection {
    pub record: InteractionRecord,
    pub transitioned: Vec<AgentId>,
}

/// Perturbs a policy output for data collection. Continuous actions get
/// clipped Gaussian noise; discrete ones get noise on the log-probabilities
/// and are renormalized.
pub fn explore(kind: ActionKind, mut output: Vec<f64>, std: f64, rng: &mut SimRng) -> Vec<f64> {
    if std <= 0.0 {
        return output;
    }
    let noise = Normal::new(0.0, std).expect("positive standard deviation");
    match kind {
        ActionKind::Continuous(_) => {
            output.iter_mut().for_each(|v| *v = (*v + noise.sample(rng)).clamp(-1.0, 1.0));
            output
        }
        ActionKind::Discrete(_) => {
            let logits: Vec<f64> = output.iter().map(|p| p.max(1e-12).ln() + noise.sample(rng)).collect();
            let max = logits.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
            let e: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|v| v / s).collect()
        }
    }
}

/// Memoized view of the world at `t` and the partially simulated world at
/// `t + 1`.
struct LocalSim<'a> {
    env: &'a dyn Environment,
    policies: &'a PolicyTable,
    world: &'a World,
    noise: f64,
    one_hop: Vec<Option<Vec<AgentId>>>,
    features: Vec<Option<Vec<f64>>>,
    actions: Vec<Option<Vec<f64>>>,
    next: Vec<Option<AgentState>>,
}

impl<'a> LocalSim<'a> {
    fn one_hop(&mut self, j: AgentId) -> Result<Vec<AgentId>> {
        if self.one_hop[j].is_none() {
            self.one_hop[j] = Some(one_hop_neighbors(&self.world.agents, self.env.graph(), j)?);
        }
        Ok(self.one_hop[j].clone().unwrap_or_default())
    }

    fn features(&mut self, j: AgentId) -> &[f64] {
        let (env, world) = (self.env, self.world);
        self.features[j].get_or_insert_with(|| env.features(world, j))
    }

    fn action(&mut self, j: AgentId, rng: &mut SimRng) -> Result<Vec<f64>> {
        if let Some(a) = &self.actions[j] {
            return Ok(a.clone());
        }
        let hood = self.one_hop(j)?;
        let flat: Vec<f64> = hood.iter().flat_map(|&k| self.features(k).to_vec()).collect();
        let input = self.env.pad_spec().encode_states(j, &hood, &flat)?;
        let out = self.policies.online(j)?.predict(&input)?;
        let a = explore(self.env.action_kind(), out, self.noise, rng);
        self.actions[j] = Some(a.clone());
        Ok(a)
    }

    fn transition(&mut self, j: AgentId, rng: &mut SimRng) -> Result<()> {
        if self.next[j].is_some() {
            return Ok(());
        }
        let a = self.action(j, rng)?;
        let hood = self.one_hop(j)?;
        let local: Vec<_> = hood.iter().map(|&k| (k, &self.world.agents[k])).collect();
        self.next[j] = Some(self.env.transition_agent(j, &local, &a, rng)?);
        Ok(())
    }

    fn next_state(&self, j: AgentId) -> Result<&AgentState> {
        self.next[j].as_ref().ok_or_else(|| {
            Error::InvalidArgument(format!("next state of agent {j} was read but never simulated"))
        })
    }

    /// `{k in candidates | dist(s_j', s_k') <= d}`; candidates must cover
    /// every possible next one-hop neighbor of `j`.
    fn next_one_hop(&self, j: AgentId, candidates: &[AgentId]) -> Result<Vec<AgentId>> {
        let g = self.env.graph();
        let me = self.next_state(j)?;
        let mut out = Vec::new();
        for &k in candidates {
            if k == j || g.dist(me, self.next_state(k)?)? <= g.d + DIST_SLACK {
                out.push(k);
            }
        }
        Ok(out)
    }
}

/// Samples one local interaction of agent `i` starting from `world`.
pub fn collect_from_world(
    env: &dyn Environment,
    policies: &PolicyTable,
    world: &World,
    i: AgentId,
    noise: f64,
    rng: &mut SimRng,
) -> Result<Collection> {
    let m = env.agent_count();
    if i >= m {
        return Err(Error::InvalidAgent { id: i, count: m });
    }
    if policies.len() != m || world.agents.len() != m {
        return Err(Error::InvalidArgument(format!(
            "{} policies and {} agent states for a team of {m}",
            policies.len(),
            world.agents.len()
        )));
    }
    let mut sim = LocalSim {
        env,
        policies,
        world,
        noise,
        one_hop: vec![None; m],
        features: vec![None; m],
        actions: vec![None; m],
        next: vec![None; m],
    };

    let neighbors = sim.one_hop(i)?;
    let mut states = Vec::new();
    let mut actions = Vec::new();
    for &j in &neighbors {
        actions.extend(sim.action(j, rng)?);
        states.extend_from_slice(sim.features(j));
    }
    let local: Vec<_> = neighbors.iter().map(|&j| (j, &world.agents[j])).collect();
    let acts: Vec<_> = neighbors.iter().zip(actions.chunks_exact(env.action_kind().dim())).map(|(&j, a)| (j, a)).collect();
    let reward = env.reward(&world.items, i, &local, &acts)?;

    let potential_i = potential_neighbors(&world.agents, env.graph(), i)?;
    for &j in &potential_i {
        sim.transition(j, rng)?;
    }
    let next_hood = sim.next_one_hop(i, &potential_i)?;
    let mut next_sets = Vec::with_capacity(next_hood.len());
    for &j in &next_hood {
        let potential_j = potential_neighbors(&world.agents, env.graph(), j)?;
        for &k in &potential_j {
            sim.transition(k, rng)?;
        }
        next_sets.push((j, sim.next_one_hop(j, &potential_j)?));
    }

    // Untouched agents keep their old state in the snapshot handed to
    // `refresh_items` and `features`; neither reads them for the members we
    // record.
    let transitioned: Vec<AgentId> = (0..m).filter(|&j| sim.next[j].is_some()).collect();
    let mut after = World {
        agents: (0..m).map(|j| sim.next[j].clone().unwrap_or_else(|| world.agents[j].clone())).collect(),
        items: world.items.clone(),
    };
    env.refresh_items(world, &mut after, rng);
    let next = next_sets
        .into_iter()
        .map(|(j, ids)| {
            let states = ids.iter().flat_map(|&k| env.features(&after, k)).collect();
            NextNeighborhood { agent: j, ids, states }
        })
        .collect();

    Ok(Collection { record: InteractionRecord { agent: i, neighbors, states, actions, reward, next }, transitioned })
}

/// Draws a fresh random world and samples one local interaction from it.
pub fn collect_local_interaction(
    env: &dyn Environment,
    policies: &PolicyTable,
    i: AgentId,
    noise: f64,
    rng: &mut SimRng,
) -> Result<Collection> {
    let world = env.sample_world(rng);
    collect_from_world(env, policies, &world, i, noise, rng)
}

