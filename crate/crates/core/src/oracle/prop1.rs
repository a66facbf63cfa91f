//! Empirical check that next-step neighbors are always potential neighbors.

use rand::Rng;

use crate::envs::conformance::random_action;
use crate::envs::{step, Environment, World};
use crate::error::Result;
use crate::proximity::{all_neighbor_sets, validate_motion, AgentId, AgentState, GraphConfig, JointState};
use crate::seed::SimRng;

/// Source of consecutive joint states `(s(t), s(t+1))`.
pub trait StepSource {
    fn next_step(&mut self) -> Result<(JointState, JointState)>;
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Prop1Report {
    pub steps: usize,
    /// Steps where some agent moved further than ε. They break the premise,
    /// so they are counted here and not scanned for violations.
    pub motion_faults: usize,
    /// Pairs `(i, j)` with `j ∈ N_i(t+1)` but `j ∉ P_i(t)`.
    pub violations: usize,
    pub first_violation: Option<(usize, AgentId, AgentId)>,
    /// Next-step neighbor pairs examined (excluding `j = i`).
    pub pairs_checked: usize,
}

/// Scans one transition with potential sets of the given radius.
fn scan(prev: &[AgentState], next: &[AgentState], cfg: &GraphConfig, potential_radius: f64, t: usize, report: &mut Prop1Report) -> Result<()> {
    report.steps += 1;
    for (a, b) in prev.iter().zip(next) {
        if !validate_motion(a, b, cfg)? {
            report.motion_faults += 1;
            return Ok(());
        }
    }
    let wide = GraphConfig { epsilon: (potential_radius - cfg.d).max(0.0) / 2.0, ..*cfg };
    let before = all_neighbor_sets(prev, &wide)?;
    let after = all_neighbor_sets(next, cfg)?;
    for (i, (b, a)) in before.iter().zip(&after).enumerate() {
        for &j in a.one_hop.iter().filter(|&&j| j != i) {
            report.pairs_checked += 1;
            if b.potential.binary_search(&j).is_err() {
                report.violations += 1;
                report.first_violation.get_or_insert((t, i, j));
            }
        }
    }
    Ok(())
}

/// Draws `steps` transitions and counts next-step neighbors missing from
/// the potential set `P_i(t)`.
pub fn prop1_violations(source: &mut dyn StepSource, cfg: &GraphConfig, steps: usize) -> Result<Prop1Report> {
    prop1_violations_with_radius(source, cfg, steps, cfg.potential_radius())
}

/// As [`prop1_violations`] with a caller-chosen potential radius. A radius
/// below `d + 2ε` models a faulty predictor.
pub fn prop1_violations_with_radius(source: &mut dyn StepSource, cfg: &GraphConfig, steps: usize, potential_radius: f64) -> Result<Prop1Report> {
    let mut report = Prop1Report::default();
    for t in 0..steps {
        let (prev, next) = source.next_step()?;
        scan(&prev, &next, cfg, potential_radius, t, &mut report)?;
    }
    Ok(report)
}

/// Agents wandering a square box, each step a uniform draw from the disk of
/// radius `step` (clamped to the box).
pub struct RandomWalk {
    pub states: JointState,
    pub half_width: f64,
    pub step: f64,
    pub rng: SimRng,
}

impl RandomWalk {
    pub fn new(agents: usize, half_width: f64, step: f64, mut rng: SimRng) -> Self {
        let states = (0..agents)
            .map(|_| AgentState::at(vec![rng.random_range(-half_width..=half_width), rng.random_range(-half_width..=half_width)]))
            .collect();
        Self { states, half_width, step, rng }
    }
}

impl StepSource for RandomWalk {
    fn next_step(&mut self) -> Result<(JointState, JointState)> {
        let prev = self.states.clone();
        let h = self.half_width;
        for s in &mut self.states {
            let r = self.step * self.rng.random::<f64>().sqrt();
            let theta = self.rng.random_range(0.0..std::f64::consts::TAU);
            s.position[0] = (s.position[0] + r * theta.cos()).clamp(-h, h);
            s.position[1] = (s.position[1] + r * theta.sin()).clamp(-h, h);
        }
        Ok((prev, self.states.clone()))
    }
}

/// Wraps a source and, every `every` steps, displaces agent 0 by `jump`.
pub struct Teleport<S> {
    pub inner: S,
    pub every: usize,
    pub jump: f64,
    count: usize,
}

impl<S> Teleport<S> {
    pub fn new(inner: S, every: usize, jump: f64) -> Self {
        Self { inner, every: every.max(1), jump, count: 0 }
    }
}

impl<S: StepSource> StepSource for Teleport<S> {
    fn next_step(&mut self) -> Result<(JointState, JointState)> {
        let (prev, mut next) = self.inner.next_step()?;
        self.count += 1;
        if self.count.is_multiple_of(self.every) {
            if let Some(s) = next.first_mut() {
                s.position[0] = prev[0].position[0] + self.jump;
            }
        }
        Ok((prev, next))
    }
}

/// Trajectories of a simulated environment under uniformly random actions.
/// A fresh world is drawn at each episode boundary; the reset itself is
/// never reported as a step.
pub struct EnvWalk<'a> {
    env: &'a dyn Environment,
    world: World,
    t: usize,
    rng: SimRng,
}

impl<'a> EnvWalk<'a> {
    pub fn new(env: &'a dyn Environment, mut rng: SimRng) -> Self {
        let world = env.sample_world(&mut rng);
        Self { env, world, t: 0, rng }
    }
}

impl StepSource for EnvWalk<'_> {
    fn next_step(&mut self) -> Result<(JointState, JointState)> {
        if self.t == self.env.episode_length() {
            self.world = self.env.sample_world(&mut self.rng);
            self.t = 0;
        }
        let kind = self.env.action_kind();
        let actions: Vec<_> = (0..self.env.agent_count()).map(|_| random_action(kind, &mut self.rng)).collect();
        let (next, _) = step(self.env, &self.world, &actions, &mut self.rng)?;
        let prev = std::mem::replace(&mut self.world, next);
        self.t += 1;
        Ok((prev.agents, self.world.agents.clone()))
    }
}
