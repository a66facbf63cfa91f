use super::{ActionKind, Environment, World};
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::proximity::{all_neighbor_sets, AgentState};
use crate::seed::{stream, tag, SimRng};

/// Evaluation-time action: one-hot argmax for discrete policies (first
/// maximum wins), the raw output otherwise.
pub fn greedy_action(kind: ActionKind, output: Vec<f64>) -> Vec<f64> {
    match kind {
        ActionKind::Continuous(_) => output,
        ActionKind::Discrete(n) => {
            let best = output
                .iter()
                .enumerate()
                .fold(0, |best, (k, v)| if *v > output[best] { k } else { best });
            (0..n).map(|k| if k == best { 1.0 } else { 0.0 }).collect()
        }
    }
}

/// Advances every agent one step. Returns the next world and each agent's
/// reward at `world`.
pub fn step(env: &dyn Environment, world: &World, actions: &[Vec<f64>], rng: &mut SimRng) -> Result<(World, Vec<f64>)> {
    let m = env.agent_count();
    if actions.len() != m || world.agents.len() != m {
        return Err(Error::InvalidArgument(format!(
            "step over {} agents with {} actions for a team of {m}",
            world.agents.len(),
            actions.len()
        )));
    }
    let sets = all_neighbor_sets(&world.agents, env.graph())?;
    let mut rewards = Vec::with_capacity(m);
    let mut next: Vec<AgentState> = Vec::with_capacity(m);
    for (i, set) in sets.iter().enumerate() {
        let local: Vec<_> = set.one_hop.iter().map(|&j| (j, &world.agents[j])).collect();
        let acts: Vec<_> = set.one_hop.iter().map(|&j| (j, actions[j].as_slice())).collect();
        rewards.push(env.reward(&world.items, i, &local, &acts)?);
        next.push(env.transition_agent(i, &local, &actions[i], rng)?);
    }
    let mut after = World { agents: next, items: world.items.clone() };
    env.refresh_items(world, &mut after, rng);
    Ok((after, rewards))
}

/// Greedy actions of every agent at `world`.
pub(crate) fn joint_greedy_actions(env: &dyn Environment, policies: &[Mlp], world: &World) -> Result<Vec<Vec<f64>>> {
    let pad = env.pad_spec();
    let sets = all_neighbor_sets(&world.agents, env.graph())?;
    let features: Vec<Vec<f64>> = (0..world.agents.len()).map(|i| env.features(world, i)).collect();
    sets.iter()
        .enumerate()
        .map(|(i, set)| {
            let flat: Vec<f64> = set.one_hop.iter().flat_map(|&j| features[j].iter().copied()).collect();
            let input = pad.encode_states(i, &set.one_hop, &flat)?;
            Ok(greedy_action(env.action_kind(), policies[i].predict(&input)?))
        })
        .collect()
}

/// Total team reward of each of `episodes` full-team episodes under greedy
/// policies. Episode `e` starts from the world drawn by stream
/// `(seed, e, EVAL)`.
pub fn rollout(env: &dyn Environment, policies: &[Mlp], seed: u64, episodes: usize) -> Result<Vec<f64>> {
    if policies.len() != env.agent_count() {
        return Err(Error::InvalidArgument(format!(
            "{} policies for a team of {}",
            policies.len(),
            env.agent_count()
        )));
    }
    (0..episodes)
        .map(|e| {
            let mut rng = stream(seed, e as u64, tag::EVAL);
            let mut world = env.sample_world(&mut rng);
            let mut total = 0.0;
            for _ in 0..env.episode_length() {
                let actions = joint_greedy_actions(env, policies, &world)?;
                let (next, rewards) = step(env, &world, &actions, &mut rng)?;
                total += rewards.iter().sum::<f64>();
                world = next;
            }
            Ok(total)
        })
        .collect()
}
