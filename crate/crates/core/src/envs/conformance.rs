//! Randomized probes of the locality and boundedness assumptions:
//! rewards and transitions ignore everything outside the one-hop
//! neighborhood, rewards stay within the bound, steps stay within `ε`.

use rand::Rng;

use super::{step, ActionKind, Environment, World};
use crate::error::Result;
use crate::proximity::{one_hop_neighbors, validate_motion, AgentId, DIST_SLACK};
use crate::seed::{stream, tag, SimRng};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConformanceReport {
    pub probes: usize,
    pub reward_locality: usize,
    pub transition_locality: usize,
    pub reward_bound: usize,
    pub motion_bound: usize,
}

impl ConformanceReport {
    pub fn violations(&self) -> usize {
        self.reward_locality + self.transition_locality + self.reward_bound + self.motion_bound
    }
}

pub fn random_action(kind: ActionKind, rng: &mut SimRng) -> Vec<f64> {
    match kind {
        ActionKind::Continuous(n) => (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect(),
        ActionKind::Discrete(n) => {
            let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / s).collect()
        }
    }
}

/// Reward of `i` computed from the whole world: selects the one-hop
/// neighborhood, then calls the local reward.
pub fn reward_from_world(env: &dyn Environment, world: &World, i: AgentId, actions: &[Vec<f64>]) -> Result<f64> {
    let ids = one_hop_neighbors(&world.agents, env.graph(), i)?;
    let local: Vec<_> = ids.iter().map(|&j| (j, &world.agents[j])).collect();
    let acts: Vec<_> = ids.iter().map(|&j| (j, actions[j].as_slice())).collect();
    env.reward(&world.items, i, &local, &acts)
}

/// Shrinks the world toward one agent so neighborhoods get crowded. Convex
/// combinations keep everything inside the activity box.
fn pull_together(env: &dyn Environment, world: &mut World, rng: &mut SimRng) {
    if env.graph().metric != crate::proximity::Metric::Euclidean || world.agents.is_empty() {
        return;
    }
    let c = world.agents[rng.random_range(0..world.agents.len())].position.clone();
    let shrink = rng.random_range(0.02..0.15);
    let squeeze = |x: &mut f64, k: usize| *x = c[k] + (*x - c[k]) * shrink;
    for a in &mut world.agents {
        a.position.iter_mut().enumerate().for_each(|(k, x)| squeeze(x, k));
    }
    for it in &mut world.items {
        it.iter_mut().enumerate().for_each(|(k, x)| squeeze(x, k));
    }
}

/// Runs `probes` randomized checks. Half the probes squeeze the team into a
/// small region so neighborhoods are crowded; each probe then advances a few
/// random steps to reach non-initial states (frozen timers and the like).
pub fn probe(env: &dyn Environment, probes: usize, seed: u64) -> Result<ConformanceReport> {
    let m = env.agent_count();
    let kind = env.action_kind();
    let g = *env.graph();
    let mut report = ConformanceReport { probes, ..Default::default() };
    let mut rng = stream(seed, 0, tag::RESET);

    for p in 0..probes {
        let mut world = env.sample_world(&mut rng);
        if p % 2 == 1 {
            pull_together(env, &mut world, &mut rng);
        }
        for _ in 0..rng.random_range(0..3) {
            let acts: Vec<_> = (0..m).map(|_| random_action(kind, &mut rng)).collect();
            world = step(env, &world, &acts, &mut rng)?.0;
        }
        let actions: Vec<_> = (0..m).map(|_| random_action(kind, &mut rng)).collect();
        let i = rng.random_range(0..m);
        let hood = one_hop_neighbors(&world.agents, &g, i)?;

        let r = reward_from_world(env, &world, i, &actions)?;
        if !(r.abs() <= env.reward_bound()) {
            report.reward_bound += 1;
        }

        // Perturb everything outside the neighborhood.
        let mut other = world.clone();
        let mut other_actions = actions.clone();
        let fresh = env.sample_world(&mut rng);
        for j in (0..m).filter(|j| !hood.contains(j)) {
            let candidate = &fresh.agents[j];
            if g.dist(&world.agents[i], candidate)? > g.d + DIST_SLACK {
                other.agents[j] = candidate.clone();
            } else if !candidate.extra.is_empty() {
                other.agents[j].extra = candidate.extra.clone();
            }
            other_actions[j] = random_action(kind, &mut rng);
        }
        for (k, item) in fresh.items.iter().enumerate() {
            let far = |p: &[f64; 2]| {
                let me = &world.agents[i].position;
                ((p[0] - me[0]).powi(2) + (p[1] - me[1]).powi(2)).sqrt() > g.d + DIST_SLACK
            };
            if far(&world.items[k]) && far(item) {
                other.items[k] = *item;
            }
        }
        let same_hood = one_hop_neighbors(&other.agents, &g, i)? == hood;
        let r_other = reward_from_world(env, &other, i, &other_actions)?;
        if !same_hood || r.to_bits() != r_other.to_bits() {
            report.reward_locality += 1;
        }

        let local: Vec<_> = hood.iter().map(|&j| (j, &world.agents[j])).collect();
        let local_other: Vec<_> = hood.iter().map(|&j| (j, &other.agents[j])).collect();
        let draw = rng.clone();
        let next = env.transition_agent(i, &local, &actions[i], &mut draw.clone())?;
        let next_other = env.transition_agent(i, &local_other, &actions[i], &mut draw.clone())?;
        if next != next_other {
            report.transition_locality += 1;
        }
        if !validate_motion(&world.agents[i], &next, &g)? {
            report.motion_bound += 1;
        }
        // keep the outer stream moving independently of the matched draws
        let _: u64 = rng.random();
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{Env, EnvConfig, EnvKind};

    #[test]
    fn builtin_environments_conform() {
        for kind in EnvKind::ALL {
            let m = if kind == EnvKind::Ising { 9 } else { 6 };
            let env = Env::new(EnvConfig::new(kind, m).unwrap()).unwrap();
            let report = probe(&env, 500, 11).unwrap();
            assert_eq!(report.violations(), 0, "{kind:?}: {report:?}");
        }
    }
}
