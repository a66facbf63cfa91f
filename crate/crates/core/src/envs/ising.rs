//! Spin lattice on a torus. Each agent sets its own spin; the reward is the
//! mean alignment of its (relaxed) spin with its lattice neighbors'.

use rand::Rng;

use super::{EnvConfig, LocalAction, LocalState, World};
use crate::error::{Error, Result};
use crate::proximity::{one_hop_neighbors, AgentId, AgentState, GraphConfig};
use crate::seed::SimRng;

pub(super) const STATE_DIM: usize = 1;

/// Relaxed spin of an action `[p(-1), p(+1)]`.
fn soft_spin(action: &[f64]) -> f64 {
    action[1] - action[0]
}

pub(super) fn sample_world(cfg: &EnvConfig, rng: &mut SimRng) -> World {
    let (_, cols) = cfg.lattice_shape().expect("ising uses a lattice");
    let agents = (0..cfg.agents)
        .map(|k| {
            let spin = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            AgentState::with_extra(vec![(k / cols) as f64, (k % cols) as f64], vec![spin])
        })
        .collect();
    World { agents, items: Vec::new() }
}

pub(super) fn features(agent: &AgentState) -> Vec<f64> {
    vec![agent.extra[0]]
}

/// The chosen spin: `+1` unless `-1` is strictly preferred.
pub(super) fn transition(me: &AgentState, action: &[f64]) -> AgentState {
    let spin = if action[1] >= action[0] { 1.0 } else { -1.0 };
    AgentState::with_extra(me.position.clone(), vec![spin])
}

/// `(1/k) * sum_j m_i * m_j` over the `k` lattice-adjacent agents, where
/// `m = p(+1) - p(-1)`. With one-hot actions this is the spin alignment;
/// all neighbors aligned gives `+1`.
pub(super) fn reward(
    _graph: &GraphConfig,
    i: AgentId,
    _me: &AgentState,
    local: &[LocalState<'_>],
    actions: &[LocalAction<'_>],
) -> Result<f64> {
    let action_of = |j: AgentId| {
        actions
            .iter()
            .find(|(k, _)| *k == j)
            .map(|(_, a)| *a)
            .ok_or_else(|| Error::InvalidArgument(format!("ising reward needs the action of agent {j}")))
    };
    let mine = soft_spin(action_of(i)?);
    let mut sum = 0.0;
    let mut count = 0usize;
    for (j, _) in local.iter().filter(|(j, _)| *j != i) {
        sum += mine * soft_spin(action_of(*j)?);
        count += 1;
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// Largest one-hop set on the torus (fixed topology, so every site agrees).
pub(super) fn max_one_hop(rows: usize, cols: usize, graph: &GraphConfig) -> usize {
    let sites: Vec<AgentState> = (0..rows * cols)
        .map(|k| AgentState::at(vec![(k / cols) as f64, (k % cols) as f64]))
        .collect();
    (0..sites.len())
        .map(|i| one_hop_neighbors(&sites, graph, i).map_or(1, |n| n.len()))
        .max()
        .unwrap_or(1)
}

#[cfg(test)]
mod tests {
    use crate::envs::{Env, EnvConfig, EnvKind, Environment};
    use crate::proximity::{one_hop_neighbors, AgentState};
    use crate::seed::stream;

    fn env9() -> Env {
        Env::new(EnvConfig::new(EnvKind::Ising, 9).unwrap()).unwrap()
    }

    const UP: [f64; 2] = [0.0, 1.0];
    const DOWN: [f64; 2] = [1.0, 0.0];

    #[test]
    fn set_spin_is_deterministic() {
        let env = env9();
        let w = env.reset(1);
        let local: Vec<_> = vec![(4, &w.agents[4])];
        for seed in 0..5 {
            let next = env.transition_agent(4, &local, &UP, &mut stream(seed, 0, 0)).unwrap();
            assert_eq!(next.extra, vec![1.0]);
            assert_eq!(next.position, w.agents[4].position);
        }
        let next = env.transition_agent(4, &local, &DOWN, &mut stream(0, 0, 0)).unwrap();
        assert_eq!(next.extra, vec![-1.0]);
    }

    /// Enumerates every up/down assignment of the center and its four
    /// neighbors; the best reward is +1, reached only when all agree.
    #[test]
    fn aligned_neighbors_give_maximal_reward() {
        let env = env9();
        let w = env.reset(2);
        let ids = one_hop_neighbors(&w.agents, env.graph(), 4).unwrap();
        assert_eq!(ids, vec![1, 3, 4, 5, 7]);
        let local: Vec<_> = ids.iter().map(|&j| (j, &w.agents[j])).collect();
        let mut best = f64::NEG_INFINITY;
        for mask in 0u32..32 {
            let acts: Vec<[f64; 2]> = (0..5).map(|b| if mask >> b & 1 == 1 { UP } else { DOWN }).collect();
            let actions: Vec<_> = ids.iter().zip(&acts).map(|(&j, a)| (j, &a[..])).collect();
            let r = env.reward(&[], 4, &local, &actions).unwrap();
            let aligned = mask == 0 || mask == 31;
            assert_eq!(r == 1.0, aligned, "mask {mask:05b} reward {r}");
            best = best.max(r);
        }
        assert_eq!(best, 1.0);
    }

    #[test]
    fn reward_rejects_non_neighbors() {
        let env = env9();
        let w = env.reset(3);
        // agents 4 and 0 are diagonal: distance 2 on the torus
        let local = vec![(4, &w.agents[4]), (0, &w.agents[0])];
        let actions = vec![(4, &UP[..]), (0, &UP[..])];
        assert!(env.reward(&[], 4, &local, &actions).is_err());
    }

    #[test]
    fn invalid_discrete_action() {
        let env = env9();
        let s = AgentState::with_extra(vec![1.0, 1.0], vec![1.0]);
        assert!(env.transition_agent(4, &[(4, &s)], &[0.5], &mut stream(0, 0, 0)).is_err());
        assert!(env.transition_agent(4, &[(4, &s)], &[2.0, -1.0], &mut stream(0, 0, 0)).is_err());
    }
}
