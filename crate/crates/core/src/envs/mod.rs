//! Desk-scale environments whose rewards and transitions only read one-hop
//! neighborhoods: an Ising lattice plus three particle-world games.
//!
//! Pellets and resources are environment furniture, not agents. They never
//! enter the proximity graph; an agent sees the nearest one within radius `d`.

pub mod conformance;
mod ising;
mod particle;
mod rollout;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Head, PadSpec};
use crate::proximity::{AgentId, AgentState, GraphConfig, JointState, Metric, DIST_SLACK};
use crate::seed::SimRng;

pub use rollout::{greedy_action, rollout, step};

/// Steps a tagged grassland agent stays frozen.
pub const FREEZE_STEPS: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EnvKind {
    Ising,
    FoodCollection,
    Grassland,
    AdversarialBattle,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Ising => "ising",
            EnvKind::FoodCollection => "food_collection",
            EnvKind::Grassland => "grassland",
            EnvKind::AdversarialBattle => "adversarial_battle",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "ising" => EnvKind::Ising,
            "food_collection" => EnvKind::FoodCollection,
            "grassland" => EnvKind::Grassland,
            "adversarial_battle" => EnvKind::AdversarialBattle,
            _ => return None,
        })
    }

    pub fn is_particle(self) -> bool {
        self != EnvKind::Ising
    }

    /// Whether the game has an adversary/second team.
    pub fn is_mixed(self) -> bool {
        matches!(self, EnvKind::Grassland | EnvKind::AdversarialBattle)
    }

    pub const PARTICLE: [EnvKind; 3] = [EnvKind::FoodCollection, EnvKind::Grassland, EnvKind::AdversarialBattle];
    pub const ALL: [EnvKind; 4] = [EnvKind::Ising, EnvKind::FoodCollection, EnvKind::Grassland, EnvKind::AdversarialBattle];
}

/// Neighborhood scale per team size for particle worlds:
/// `(M, d, epsilon, activity half-width)`.
pub const PARTICLE_SCALES: [(usize, f64, f64, f64); 5] = [
    (3, 0.15, 0.05, 1.0),
    (6, 0.20, 0.10, 1.5),
    (12, 0.25, 0.15, 2.0),
    (24, 0.30, 0.20, 2.5),
    (48, 0.35, 0.25, 3.0),
];

/// Scale row for `m` agents: the smallest listed team at least as large,
/// or the largest row.
pub fn particle_scale(m: usize) -> (f64, f64, f64) {
    let row = PARTICLE_SCALES.iter().find(|r| r.0 >= m).unwrap_or(&PARTICLE_SCALES[4]);
    (row.1, row.2, row.3)
}

/// Episode length per team size.
pub fn default_episode_length(kind: EnvKind, m: usize) -> usize {
    match kind {
        EnvKind::Ising | EnvKind::FoodCollection => 25,
        EnvKind::Grassland | EnvKind::AdversarialBattle => match m {
            0..=6 => 25,
            7..=12 => 30,
            13..=24 => 35,
            _ => 40,
        },
    }
}

/// Rows and columns of the Ising torus: the most square factorization of `m`.
pub fn lattice_shape(m: usize) -> (usize, usize) {
    let mut rows = (m as f64).sqrt().floor() as usize;
    while rows > 1 && !m.is_multiple_of(rows) {
        rows -= 1;
    }
    let rows = rows.max(1);
    (rows, m / rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvConfig {
    pub kind: EnvKind,
    pub agents: usize,
    pub episode_length: usize,
    /// Activity box is `[-half_width, half_width]^2` (particle worlds).
    pub half_width: f64,
    pub graph: GraphConfig,
    /// Bound on the absolute single-step reward of any agent.
    pub reward_bound: f64,
    /// Pellets / grass / resources (`M/2` by default).
    pub items: usize,
    pub pickup_radius: f64,
    pub collision_radius: f64,
    /// Tagging and kill radius, `d/2`.
    pub tag_radius: f64,
}

impl EnvConfig {
    pub fn new(kind: EnvKind, agents: usize) -> Result<Self> {
        if agents == 0 {
            return Err(Error::Config("at least one agent is required".into()));
        }
        let episode_length = default_episode_length(kind, agents);
        if kind == EnvKind::Ising {
            let (rows, cols) = lattice_shape(agents);
            return Ok(Self {
                kind,
                agents,
                episode_length,
                half_width: 0.0,
                graph: GraphConfig::new(1.0, 0.0, Metric::LatticeTorus { rows, cols })?,
                reward_bound: 1.0,
                items: 0,
                pickup_radius: 0.0,
                collision_radius: 0.0,
                tag_radius: 0.0,
            });
        }
        let (d, eps, half_width) = particle_scale(agents);
        Self::particle(kind, agents, GraphConfig::euclidean(d, eps)?, half_width, episode_length)
    }

    /// Particle world with explicit geometry.
    pub fn particle(kind: EnvKind, agents: usize, graph: GraphConfig, half_width: f64, episode_length: usize) -> Result<Self> {
        if !kind.is_particle() {
            return Err(Error::Config("particle geometry given for a lattice environment".into()));
        }
        if agents == 0 || episode_length == 0 || !(half_width > 0.0) {
            return Err(Error::Config("particle world needs agents, a positive episode length and box".into()));
        }
        let d = graph.d;
        Ok(Self {
            kind,
            agents,
            episode_length,
            half_width,
            graph,
            reward_bound: 10.0,
            items: (agents / 2).max(1),
            pickup_radius: d / 3.0,
            collision_radius: d / 4.0,
            tag_radius: d / 2.0,
        })
    }

    pub fn lattice_shape(&self) -> Option<(usize, usize)> {
        match self.graph.metric {
            Metric::LatticeTorus { rows, cols } => Some((rows, cols)),
            Metric::Euclidean => None,
        }
    }
}

/// Joint state plus furniture.
#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub agents: JointState,
    pub items: Vec<[f64; 2]>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActionKind {
    /// Relaxed one-hot over `n` choices.
    Discrete(usize),
    /// Box `[-1, 1]^n`.
    Continuous(usize),
}

impl ActionKind {
    pub fn dim(self) -> usize {
        match self {
            ActionKind::Discrete(n) | ActionKind::Continuous(n) => n,
        }
    }

    pub fn policy_head(self) -> Head {
        match self {
            ActionKind::Discrete(_) => Head::Softmax { temperature: 1.0 },
            ActionKind::Continuous(_) => Head::Tanh { low: -1.0, high: 1.0 },
        }
    }
}

/// Borrowed state of one neighborhood member.
pub type LocalState<'a> = (AgentId, &'a AgentState);
/// Borrowed action of one neighborhood member.
pub type LocalAction<'a> = (AgentId, &'a [f64]);

/// Simulation interface used by learners, the baseline and evaluation.
///
/// `transition_agent` and `reward` only receive one-hop neighborhoods; an
/// implementation therefore satisfies reward and transition locality by
/// construction.
pub trait Environment: Send + Sync {
    fn agent_count(&self) -> usize;
    fn graph(&self) -> &GraphConfig;
    fn episode_length(&self) -> usize;
    fn reward_bound(&self) -> f64;
    /// Length of the per-agent feature vector fed to networks.
    fn state_dim(&self) -> usize;
    fn action_kind(&self) -> ActionKind;
    /// Largest possible one-hop neighborhood (including the agent).
    fn max_neighbors(&self) -> usize;

    /// Random initial world.
    fn sample_world(&self, rng: &mut SimRng) -> World;

    /// Network features of agent `i`.
    fn features(&self, world: &World, i: AgentId) -> Vec<f64>;

    /// Next state of agent `i` given its one-hop neighborhood and action.
    fn transition_agent(&self, i: AgentId, local: &[LocalState<'_>], action: &[f64], rng: &mut SimRng) -> Result<AgentState>;

    /// Reward of agent `i` from its one-hop neighborhood.
    fn reward(&self, items: &[[f64; 2]], i: AgentId, local: &[LocalState<'_>], actions: &[LocalAction<'_>]) -> Result<f64>;

    /// Respawns furniture consumed in `before` into `after`. Default: none.
    fn refresh_items(&self, _before: &World, _after: &mut World, _rng: &mut SimRng) {}

    /// Padding layout shared by this environment's policies and critics.
    fn pad_spec(&self) -> PadSpec {
        PadSpec { max_neighbors: self.max_neighbors(), state_dim: self.state_dim(), action_dim: self.action_kind().dim() }
    }
}

/// The built-in environments.
#[derive(Clone, Debug)]
pub struct Env {
    cfg: EnvConfig,
    max_neighbors: usize,
}

impl Env {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        if cfg.agents == 0 || cfg.episode_length == 0 {
            return Err(Error::Config("environment needs at least one agent and one step".into()));
        }
        let max_neighbors = match cfg.lattice_shape() {
            Some((rows, cols)) => ising::max_one_hop(rows, cols, &cfg.graph),
            None => cfg.agents,
        };
        Ok(Self { cfg, max_neighbors })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    /// Resets with a seeded stream: same seed, same world.
    pub fn reset(&self, seed: u64) -> World {
        use rand::SeedableRng;
        self.sample_world(&mut SimRng::seed_from_u64(seed))
    }

    fn check_local<'a>(&self, i: AgentId, local: &[LocalState<'a>]) -> Result<&'a AgentState> {
        if i >= self.cfg.agents {
            return Err(Error::InvalidAgent { id: i, count: self.cfg.agents });
        }
        let me = local
            .iter()
            .find(|(j, _)| *j == i)
            .map(|(_, s)| *s)
            .ok_or_else(|| Error::InvalidArgument(format!("neighborhood of agent {i} lacks its own state")))?;
        for (j, s) in local {
            if *j >= self.cfg.agents {
                return Err(Error::InvalidAgent { id: *j, count: self.cfg.agents });
            }
            if *j != i && self.cfg.graph.dist(me, s)? > self.cfg.graph.d + DIST_SLACK {
                return Err(Error::NotLocal { subject: i, other: *j });
            }
        }
        Ok(me)
    }
}

impl Environment for Env {
    fn agent_count(&self) -> usize {
        self.cfg.agents
    }

    fn graph(&self) -> &GraphConfig {
        &self.cfg.graph
    }

    fn episode_length(&self) -> usize {
        self.cfg.episode_length
    }

    fn reward_bound(&self) -> f64 {
        self.cfg.reward_bound
    }

    fn state_dim(&self) -> usize {
        match self.cfg.kind {
            EnvKind::Ising => ising::STATE_DIM,
            _ => particle::STATE_DIM,
        }
    }

    fn action_kind(&self) -> ActionKind {
        match self.cfg.kind {
            EnvKind::Ising => ActionKind::Discrete(2),
            _ => ActionKind::Continuous(2),
        }
    }

    fn max_neighbors(&self) -> usize {
        self.max_neighbors
    }

    fn sample_world(&self, rng: &mut SimRng) -> World {
        match self.cfg.kind {
            EnvKind::Ising => ising::sample_world(&self.cfg, rng),
            _ => particle::sample_world(&self.cfg, rng),
        }
    }

    fn features(&self, world: &World, i: AgentId) -> Vec<f64> {
        match self.cfg.kind {
            EnvKind::Ising => ising::features(&world.agents[i]),
            _ => particle::features(&self.cfg, world, i),
        }
    }

    fn transition_agent(&self, i: AgentId, local: &[LocalState<'_>], action: &[f64], rng: &mut SimRng) -> Result<AgentState> {
        let me = self.check_local(i, local)?;
        validate_action(self.action_kind(), i, action)?;
        match self.cfg.kind {
            EnvKind::Ising => Ok(ising::transition(me, action)),
            _ => Ok(particle::transition(&self.cfg, i, me, local, action, rng)),
        }
    }

    fn reward(&self, items: &[[f64; 2]], i: AgentId, local: &[LocalState<'_>], actions: &[LocalAction<'_>]) -> Result<f64> {
        let me = self.check_local(i, local)?;
        for (j, a) in actions {
            if !local.iter().any(|(k, _)| k == j) {
                return Err(Error::NotLocal { subject: i, other: *j });
            }
            validate_action(self.action_kind(), *j, a)?;
        }
        let r = match self.cfg.kind {
            EnvKind::Ising => ising::reward(&self.cfg.graph, i, me, local, actions)?,
            _ => particle::reward(&self.cfg, items, i, me, local),
        };
        Ok(r.clamp(-self.cfg.reward_bound, self.cfg.reward_bound))
    }

    fn refresh_items(&self, before: &World, after: &mut World, rng: &mut SimRng) {
        if self.cfg.kind.is_particle() {
            particle::refresh_items(&self.cfg, before, after, rng);
        }
    }
}

fn validate_action(kind: ActionKind, agent: AgentId, action: &[f64]) -> Result<()> {
    let bad = |reason: String| Err(Error::InvalidAction { agent, reason });
    if action.len() != kind.dim() {
        return bad(format!("expected {} components, got {}", kind.dim(), action.len()));
    }
    if !action.iter().all(|v| v.is_finite()) {
        return bad("non-finite component".into());
    }
    match kind {
        ActionKind::Discrete(_) => {
            if action.iter().any(|v| !(-1e-9..=1.0 + 1e-9).contains(v)) {
                return bad("relaxed one-hot components must lie in [0, 1]".into());
            }
        }
        ActionKind::Continuous(_) => {
            if action.iter().any(|v| !(-1.0 - 1e-9..=1.0 + 1e-9).contains(v)) {
                return bad("components must lie in [-1, 1]".into());
            }
        }
    }
    Ok(())
}

/// Uniform point in the activity box.
pub(crate) fn uniform_point(half_width: f64, rng: &mut SimRng) -> [f64; 2] {
    [rng.random_range(-half_width..=half_width), rng.random_range(-half_width..=half_width)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_table_lookup() {
        assert_eq!(particle_scale(3), (0.15, 0.05, 1.0));
        assert_eq!(particle_scale(24), (0.3, 0.2, 2.5));
        assert_eq!(particle_scale(20), (0.3, 0.2, 2.5));
        assert_eq!(particle_scale(100), (0.35, 0.25, 3.0));
        assert_eq!(default_episode_length(EnvKind::Grassland, 48), 40);
        assert_eq!(default_episode_length(EnvKind::AdversarialBattle, 12), 30);
    }

    #[test]
    fn lattice_shapes() {
        assert_eq!(lattice_shape(9), (3, 3));
        assert_eq!(lattice_shape(2), (1, 2));
        assert_eq!(lattice_shape(1), (1, 1));
        assert_eq!(lattice_shape(12), (3, 4));
        assert_eq!(lattice_shape(25), (5, 5));
    }

    #[test]
    fn reset_is_deterministic_and_in_domain() {
        let ising = Env::new(EnvConfig::new(EnvKind::Ising, 9).unwrap()).unwrap();
        let w = ising.reset(7);
        assert_eq!(w, ising.reset(7));
        assert_eq!(w.agents.len(), 9);
        assert!(w.agents.iter().all(|a| a.extra[0] == 1.0 || a.extra[0] == -1.0));

        for kind in EnvKind::PARTICLE {
            let env = Env::new(EnvConfig::new(kind, 12).unwrap()).unwrap();
            let w = env.reset(3);
            assert_eq!(w, env.reset(3));
            let hw = env.config().half_width;
            assert!(w.agents.iter().all(|a| a.position.iter().all(|x| x.abs() <= hw)));
            assert!(w.items.iter().all(|p| p.iter().all(|x| x.abs() <= hw)));
            assert_eq!(w.items.len(), 6);
        }
    }

    #[test]
    fn ising_max_neighbors() {
        for (m, expect) in [(1, 1), (2, 2), (4, 3), (9, 5), (25, 5)] {
            let env = Env::new(EnvConfig::new(EnvKind::Ising, m).unwrap()).unwrap();
            assert_eq!(env.max_neighbors(), expect, "M={m}");
        }
    }
}
