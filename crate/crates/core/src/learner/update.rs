//! Critic and actor updates. The arithmetic works on encoded network inputs
//! so the centralized baseline shares it exactly.

use std::ops::Range;

use super::{InteractionRecord, PolicyTable};
use crate::error::{Error, Result};
use crate::nn::{adam_step, AdamState, Gradient, Mlp, PadSpec};

impl InteractionRecord {
    /// Critic input `(s_N, a_N)` in padded layout.
    pub fn critic_input(&self, pad: &PadSpec) -> Result<Vec<f64>> {
        pad.encode_joint(self.agent, &self.neighbors, &self.states, &self.actions)
    }

    /// Policy input `s_N` of the subject.
    pub fn policy_input(&self, pad: &PadSpec) -> Result<Vec<f64>> {
        pad.encode_states(self.agent, &self.neighbors, &self.states)
    }
}

/// `y = r + γ Q̂(s', a')` where each next neighbor's action comes from its
/// target policy evaluated on that neighbor's own next neighborhood.
pub fn td_target(record: &InteractionRecord, targets: &PolicyTable, critic_target: &Mlp, pad: &PadSpec, gamma: f64) -> Result<f64> {
    let own = record.next_of(record.agent).ok_or(Error::MissingNeighborhood(record.agent))?;
    let mut actions = Vec::with_capacity(own.ids.len() * pad.action_dim);
    for &j in &own.ids {
        let hood = record.next_of(j).ok_or(Error::MissingNeighborhood(j))?;
        let input = pad.encode_states(j, &hood.ids, &hood.states)?;
        actions.extend(targets.target(j)?.predict(&input)?);
    }
    let input = pad.encode_joint(record.agent, &own.ids, &own.states, &actions)?;
    Ok(record.reward + gamma * critic_target.predict(&input)?[0])
}

/// Mean squared error of `critic` on `inputs` against fixed `targets`, and
/// its parameter gradient. Targets carry no gradient.
pub fn critic_loss_and_grad(critic: &Mlp, inputs: &[Vec<f64>], targets: &[f64]) -> Result<(f64, Gradient)> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(Error::InvalidArgument(format!("{} inputs with {} targets", inputs.len(), targets.len())));
    }
    let n = inputs.len() as f64;
    let mut loss = 0.0;
    let mut grad = Gradient::zeros_like(critic);
    for (input, y) in inputs.iter().zip(targets) {
        let (q, cache) = critic.forward(input)?;
        let err = q[0] - y;
        loss += err * err / n;
        let (g, _) = critic.backward(&cache, &[2.0 * err / n])?;
        grad.add_assign(&g);
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("critic loss"));
    }
    Ok((loss, grad))
}

/// Batch mean of `Q` with the action in `slot` replaced by the policy's
/// output on the matching policy input, and its gradient with respect to
/// the policy parameters. Only `slot` carries gradient into the policy.
pub fn actor_objective_and_grad(
    policy: &Mlp,
    critic: &Mlp,
    policy_inputs: &[Vec<f64>],
    critic_inputs: &[Vec<f64>],
    slot: Range<usize>,
) -> Result<(f64, Gradient)> {
    if policy_inputs.is_empty() || policy_inputs.len() != critic_inputs.len() {
        return Err(Error::InvalidArgument(format!(
            "{} policy inputs with {} critic inputs",
            policy_inputs.len(),
            critic_inputs.len()
        )));
    }
    let n = policy_inputs.len() as f64;
    let mut objective = 0.0;
    let mut grad = Gradient::zeros_like(policy);
    for (p_in, c_in) in policy_inputs.iter().zip(critic_inputs) {
        let (a, p_cache) = policy.forward(p_in)?;
        let mut c_in = c_in.clone();
        c_in[slot.clone()].copy_from_slice(&a);
        let (q, c_cache) = critic.forward(&c_in)?;
        objective += q[0] / n;
        let (_, dq_dinput) = critic.backward(&c_cache, &[1.0 / n])?;
        let (g, _) = policy.backward(&p_cache, &dq_dinput[slot.clone()])?;
        grad.add_assign(&g);
    }
    if !grad.is_finite() {
        return Err(Error::NonFinite("actor gradient"));
    }
    Ok((objective, grad))
}

/// One Adam step on the critic. Returns the loss before the step.
pub fn critic_update(critic: &mut Mlp, adam: &mut AdamState, inputs: &[Vec<f64>], targets: &[f64]) -> Result<f64> {
    let (loss, grad) = critic_loss_and_grad(critic, inputs, targets)?;
    adam_step(critic, &grad, adam)?;
    Ok(loss)
}

/// One ascent step on the policy objective (Adam minimizes, so the gradient
/// is negated). Returns the objective before the step.
pub fn actor_update(
    policy: &mut Mlp,
    adam: &mut AdamState,
    critic: &Mlp,
    policy_inputs: &[Vec<f64>],
    critic_inputs: &[Vec<f64>],
    slot: Range<usize>,
) -> Result<f64> {
    let (objective, mut grad) = actor_objective_and_grad(policy, critic, policy_inputs, critic_inputs, slot)?;
    grad.scale(-1.0);
    adam_step(policy, &grad, adam)?;
    Ok(objective)
}
