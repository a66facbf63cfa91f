//! Small factored MDPs solved exactly by enumeration.

use rand::Rng;

use crate::error::{Error, Result};
use crate::proximity::AgentId;

/// Fixed-point iterations stop once the sup-norm change is below this.
pub const RESIDUAL: f64 = 1e-10;
const MAX_SWEEPS: usize = 1_000_000;
const ROW_TOLERANCE: f64 = 1e-9;

/// A multi-agent MDP with a fixed neighbor structure. Agent `i`'s reward
/// reads only its neighbors' states and actions, and its next state
/// depends only on its neighbors' states and its own action. Joint indices
/// are mixed radix with agent 0 least significant.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    pub states: usize,
    pub actions: usize,
    /// One-hop sets, ascending and containing the agent itself.
    pub neighbors: Vec<Vec<AgentId>>,
    pub gamma: f64,
    pub reward_bound: f64,
    /// `transitions[i][(local_state * actions + a_i) * states + s_i']`.
    pub transitions: Vec<Vec<f64>>,
    /// `rewards[i][local_state * local_actions + local_action]`.
    pub rewards: Vec<Vec<f64>>,
}

fn pow(base: usize, exp: usize) -> usize {
    base.pow(exp as u32)
}

/// Digit `k` of `index` in base `radix`.
fn digit(index: usize, radix: usize, k: usize) -> usize {
    index / pow(radix, k) % radix
}

impl TabularMdp {
    pub fn agents(&self) -> usize {
        self.neighbors.len()
    }

    pub fn joint_states(&self) -> usize {
        pow(self.states, self.agents())
    }

    pub fn joint_actions(&self) -> usize {
        pow(self.actions, self.agents())
    }

    /// Index of the neighbors' components of a joint index.
    pub fn local_index(&self, i: AgentId, joint: usize, radix: usize) -> usize {
        self.neighbors[i].iter().rev().fold(0, |acc, &j| acc * radix + digit(joint, radix, j))
    }

    /// Index of the non-neighbors' components of a joint index.
    pub fn complement_index(&self, i: AgentId, joint: usize, radix: usize) -> usize {
        (0..self.agents()).rev().filter(|j| !self.neighbors[i].contains(j)).fold(0, |acc, j| acc * radix + digit(joint, radix, j))
    }

    pub fn reward(&self, i: AgentId, s: usize, a: usize) -> f64 {
        let local_actions = pow(self.actions, self.neighbors[i].len());
        self.rewards[i][self.local_index(i, s, self.states) * local_actions + self.local_index(i, a, self.actions)]
    }

    /// `P(s' | s, a)` as the product of per-agent factors.
    pub fn transition(&self, s: usize, a: usize, next: usize) -> f64 {
        (0..self.agents())
            .map(|i| {
                let row = self.local_index(i, s, self.states) * self.actions + digit(a, self.actions, i);
                self.transitions[i][row * self.states + digit(next, self.states, i)]
            })
            .product()
    }

    /// Checks shapes, neighbor sets, stochastic rows and the reward bound.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidMdp(m));
        let m = self.agents();
        if m == 0 || self.states == 0 || self.actions == 0 {
            return bad("empty state, action or agent set".into());
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return bad(format!("discount {} outside [0, 1)", self.gamma));
        }
        if self.transitions.len() != m || self.rewards.len() != m {
            return bad("one transition and reward table per agent required".into());
        }
        for (i, hood) in self.neighbors.iter().enumerate() {
            if !hood.contains(&i) || hood.windows(2).any(|w| w[0] >= w[1]) || hood.iter().any(|&j| j >= m) {
                return bad(format!("neighbor set of agent {i} must be ascending, in range and contain {i}"));
            }
            let rows = pow(self.states, hood.len()) * self.actions;
            if self.transitions[i].len() != rows * self.states {
                return bad(format!("transition table of agent {i} has the wrong size"));
            }
            for (r, row) in self.transitions[i].chunks_exact(self.states).enumerate() {
                let sum: f64 = row.iter().sum();
                if row.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > ROW_TOLERANCE {
                    return bad(format!("transition row {r} of agent {i} sums to {sum}"));
                }
            }
            if self.rewards[i].len() != pow(self.states, hood.len()) * pow(self.actions, hood.len()) {
                return bad(format!("reward table of agent {i} has the wrong size"));
            }
            if self.rewards[i].iter().any(|r| !(r.abs() <= self.reward_bound)) {
                return bad(format!("reward of agent {i} exceeds the bound {}", self.reward_bound));
            }
        }
        Ok(())
    }

    /// Random instance with the given neighbor structure: transition rows
    /// from normalized uniform draws, rewards uniform in `[-r̄, r̄]`.
    pub fn random<R: Rng>(rng: &mut R, neighbors: Vec<Vec<AgentId>>, states: usize, actions: usize, gamma: f64, reward_bound: f64) -> Result<Self> {
        let transitions = neighbors
            .iter()
            .map(|hood| {
                let rows = pow(states, hood.len()) * actions;
                (0..rows)
                    .flat_map(|_| {
                        let raw: Vec<f64> = (0..states).map(|_| rng.random::<f64>() + 1e-3).collect();
                        let s: f64 = raw.iter().sum();
                        raw.into_iter().map(move |v| v / s)
                    })
                    .collect()
            })
            .collect();
        let rewards = neighbors
            .iter()
            .map(|hood| {
                let n = pow(states, hood.len()) * pow(actions, hood.len());
                (0..n).map(|_| rng.random_range(-reward_bound..=reward_bound)).collect()
            })
            .collect();
        let mdp = Self { states, actions, neighbors, gamma, reward_bound, transitions, rewards };
        mdp.validate()?;
        Ok(mdp)
    }

    /// Three agents on a line: `N_0 = {0,1}`, `N_1 = {0,1,2}`, `N_2 = {1,2}`.
    pub fn line_neighbors() -> Vec<Vec<AgentId>> {
        vec![vec![0, 1], vec![0, 1, 2], vec![1, 2]]
    }

    /// Dense `P(s' | s, a)` indexed `[(s * A + a) * S + s']`.
    fn dense_transitions(&self) -> Vec<f64> {
        let (ns, na) = (self.joint_states(), self.joint_actions());
        let mut p = Vec::with_capacity(ns * na * ns);
        for s in 0..ns {
            for a in 0..na {
                p.extend((0..ns).map(|n| self.transition(s, a, n)));
            }
        }
        p
    }
}

/// Distribution over joint actions for every joint state.
#[derive(Clone, Debug, PartialEq)]
pub struct JointPolicy {
    /// `probs[s * A + a]`.
    pub probs: Vec<f64>,
}

impl JointPolicy {
    pub fn uniform(mdp: &TabularMdp) -> Self {
        let na = mdp.joint_actions();
        Self { probs: vec![1.0 / na as f64; mdp.joint_states() * na] }
    }

    /// Deterministic policy choosing `choice[s]` in joint state `s`.
    pub fn deterministic(mdp: &TabularMdp, choice: &[usize]) -> Result<Self> {
        let na = mdp.joint_actions();
        if choice.len() != mdp.joint_states() || choice.iter().any(|&a| a >= na) {
            return Err(Error::InvalidMdp("one valid joint action per joint state required".into()));
        }
        let mut probs = vec![0.0; choice.len() * na];
        choice.iter().enumerate().for_each(|(s, &a)| probs[s * na + a] = 1.0);
        Ok(Self { probs })
    }

    /// Each agent acts on its neighbors' states: `local[i][local_state]`.
    pub fn from_local(mdp: &TabularMdp, local: &[Vec<usize>]) -> Result<Self> {
        let choice: Vec<usize> = (0..mdp.joint_states())
            .map(|s| {
                (0..mdp.agents()).rev().fold(0, |acc, i| acc * mdp.actions + local[i][mdp.local_index(i, s, mdp.states)])
            })
            .collect();
        Self::deterministic(mdp, &choice)
    }

    fn validate(&self, mdp: &TabularMdp) -> Result<()> {
        let na = mdp.joint_actions();
        if self.probs.len() != mdp.joint_states() * na {
            return Err(Error::InvalidMdp("policy table has the wrong size".into()));
        }
        for (s, row) in self.probs.chunks_exact(na).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::InvalidMdp(format!("policy row {s} sums to {sum}")));
            }
        }
        Ok(())
    }
}

/// Exact action values of every agent, `q[i][s * A + a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactQ {
    pub joint_actions: usize,
    pub q: Vec<Vec<f64>>,
}

impl ExactQ {
    pub fn get(&self, i: AgentId, s: usize, a: usize) -> f64 {
        self.q[i][s * self.joint_actions + a]
    }
}

/// `Q_i` of a fixed joint policy for every agent, by fixed-point iteration.
pub fn exact_q(mdp: &TabularMdp, policy: &JointPolicy) -> Result<ExactQ> {
    mdp.validate()?;
    policy.validate(mdp)?;
    let (ns, na) = (mdp.joint_states(), mdp.joint_actions());
    let p = mdp.dense_transitions();
    let mut out = Vec::with_capacity(mdp.agents());
    for i in 0..mdp.agents() {
        let r: Vec<f64> = (0..ns * na).map(|k| mdp.reward(i, k / na, k % na)).collect();
        let mut q = r.clone();
        let mut v = vec![0.0; ns];
        for sweep in 0.. {
            for (s, vs) in v.iter_mut().enumerate() {
                *vs = (0..na).map(|a| policy.probs[s * na + a] * q[s * na + a]).sum();
            }
            let mut change: f64 = 0.0;
            for (k, qk) in q.iter_mut().enumerate() {
                let row = &p[k * ns..(k + 1) * ns];
                let new = r[k] + mdp.gamma * row.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
                change = change.max((new - *qk).abs());
                *qk = new;
            }
            if change <= RESIDUAL {
                break;
            }
            if sweep >= MAX_SWEEPS {
                return Err(Error::InvalidMdp("policy evaluation did not converge".into()));
            }
        }
        out.push(q);
    }
    Ok(ExactQ { joint_actions: na, q: out })
}

/// Largest violation of `Q_i = r_i + γ P V_i` over all agents and pairs.
pub fn bellman_residual(mdp: &TabularMdp, policy: &JointPolicy, exact: &ExactQ) -> f64 {
    let (ns, na) = (mdp.joint_states(), mdp.joint_actions());
    let mut worst: f64 = 0.0;
    for (i, q) in exact.q.iter().enumerate() {
        let v: Vec<f64> = (0..ns).map(|s| (0..na).map(|a| policy.probs[s * na + a] * q[s * na + a]).sum()).collect();
        for s in 0..ns {
            for a in 0..na {
                let next: f64 = (0..ns).map(|n| mdp.transition(s, a, n) * v[n]).sum();
                worst = worst.max((q[s * na + a] - mdp.reward(i, s, a) - mdp.gamma * next).abs());
            }
        }
    }
    worst
}

/// Optimal team action values (reward summed over agents) and the greedy
/// joint action per state, ties going to the lowest index.
pub fn value_iteration(mdp: &TabularMdp) -> Result<(Vec<f64>, Vec<usize>)> {
    mdp.validate()?;
    let (ns, na) = (mdp.joint_states(), mdp.joint_actions());
    let p = mdp.dense_transitions();
    let r: Vec<f64> = (0..ns * na).map(|k| (0..mdp.agents()).map(|i| mdp.reward(i, k / na, k % na)).sum()).collect();
    let mut q = r.clone();
    for sweep in 0.. {
        let v: Vec<f64> = (0..ns).map(|s| q[s * na..(s + 1) * na].iter().fold(f64::NEG_INFINITY, |m, x| m.max(*x))).collect();
        let mut change: f64 = 0.0;
        for (k, qk) in q.iter_mut().enumerate() {
            let new = r[k] + mdp.gamma * p[k * ns..(k + 1) * ns].iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
            change = change.max((new - *qk).abs());
            *qk = new;
        }
        if change <= RESIDUAL {
            break;
        }
        if sweep >= MAX_SWEEPS {
            return Err(Error::InvalidMdp("value iteration did not converge".into()));
        }
    }
    let greedy = (0..ns)
        .map(|s| {
            let row = &q[s * na..(s + 1) * na];
            let best = row.iter().fold(f64::NEG_INFINITY, |m, x| m.max(*x));
            row.iter().position(|x| *x >= best - 1e-9).unwrap_or(0)
        })
        .collect();
    Ok((q, greedy))
}

/// Averaging weights over the non-neighbor completions `(s⁻, a⁻)`.
pub enum Weights<'a> {
    Uniform,
    /// All weight on one completion, given by complement indices.
    PointMass { states: usize, actions: usize },
    /// `w(local_state, local_action, complement_state, complement_action)`.
    Custom(&'a dyn Fn(usize, usize, usize, usize) -> f64),
}

/// `Q̃_i` over `(s_N, a_N)`, indexed `[local_state * local_actions + local_action]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedQ {
    pub agent: AgentId,
    pub local_actions: usize,
    pub values: Vec<f64>,
}

/// Weighted average of `Q_i` over every completion of the agents outside
/// `N_i`. Weights must be non-negative and sum to one per `(s_N, a_N)`.
pub fn truncated_q(mdp: &TabularMdp, exact: &ExactQ, i: AgentId, weights: &Weights<'_>) -> Result<TruncatedQ> {
    if i >= mdp.agents() {
        return Err(Error::InvalidAgent { id: i, count: mdp.agents() });
    }
    let k = mdp.neighbors[i].len();
    let outside = mdp.agents() - k;
    let (ls, la) = (pow(mdp.states, k), pow(mdp.actions, k));
    let (cs, ca) = (pow(mdp.states, outside), pow(mdp.actions, outside));
    let (ns, na) = (mdp.joint_states(), mdp.joint_actions());
    let mut values = vec![0.0; ls * la];
    let mut mass = vec![0.0; ls * la];
    for s in 0..ns {
        let (l_s, c_s) = (mdp.local_index(i, s, mdp.states), mdp.complement_index(i, s, mdp.states));
        for a in 0..na {
            let (l_a, c_a) = (mdp.local_index(i, a, mdp.actions), mdp.complement_index(i, a, mdp.actions));
            let w = match weights {
                Weights::Uniform => 1.0 / (cs * ca) as f64,
                Weights::PointMass { states, actions } => f64::from(u8::from(c_s == *states && c_a == *actions)),
                Weights::Custom(f) => f(l_s, l_a, c_s, c_a),
            };
            if !(w >= 0.0) {
                return Err(Error::InvalidMdp(format!("negative or undefined weight {w}")));
            }
            values[l_s * la + l_a] += w * exact.get(i, s, a);
            mass[l_s * la + l_a] += w;
        }
    }
    if let Some(m) = mass.iter().find(|m| (*m - 1.0).abs() > ROW_TOLERANCE) {
        return Err(Error::InvalidMdp(format!("weights sum to {m}, not 1")));
    }
    Ok(TruncatedQ { agent: i, local_actions: la, values })
}

/// `max_{s,a} |Q̃_i(s_N, a_N) - Q_i(s, a)|`.
pub fn truncation_gap(mdp: &TabularMdp, exact: &ExactQ, t: &TruncatedQ) -> f64 {
    let i = t.agent;
    let mut worst: f64 = 0.0;
    for s in 0..mdp.joint_states() {
        for a in 0..mdp.joint_actions() {
            let local = mdp.local_index(i, s, mdp.states) * t.local_actions + mdp.local_index(i, a, mdp.actions);
            worst = worst.max((t.values[local] - exact.get(i, s, a)).abs());
        }
    }
    worst
}

/// `2 r̄ γ / (1 - γ)`: worst-case error of any normalized truncation.
pub fn lemma1_bound(reward_bound: f64, gamma: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!("discount {gamma} must lie in [0, 1)")));
    }
    if !(reward_bound > 0.0) {
        return Err(Error::InvalidArgument("reward bound must be positive".into()));
    }
    Ok(2.0 * reward_bound * gamma / (1.0 - gamma))
}

/// Outcome of one exhaustive truncation check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LemmaCheck {
    pub gamma: f64,
    pub bound: f64,
    /// Largest gap over agents, states and actions.
    pub max_gap: f64,
}

impl LemmaCheck {
    pub fn holds(&self) -> bool {
        self.max_gap <= self.bound
    }
}

/// Random line MDP, random deterministic local policy, uniform weights.
pub fn random_lemma_check<R: Rng>(rng: &mut R, gamma: f64) -> Result<LemmaCheck> {
    let states = rng.random_range(2..=3);
    let actions = 2;
    let mdp = TabularMdp::random(rng, TabularMdp::line_neighbors(), states, actions, gamma, 1.0)?;
    let local: Vec<Vec<usize>> = mdp
        .neighbors
        .iter()
        .map(|h| (0..pow(states, h.len())).map(|_| rng.random_range(0..actions)).collect())
        .collect();
    let policy = JointPolicy::from_local(&mdp, &local)?;
    let exact = exact_q(&mdp, &policy)?;
    let mut max_gap: f64 = 0.0;
    for i in 0..mdp.agents() {
        let t = truncated_q(&mdp, &exact, i, &Weights::Uniform)?;
        max_gap = max_gap.max(truncation_gap(&mdp, &exact, &t));
    }
    Ok(LemmaCheck { gamma, bound: lemma1_bound(mdp.reward_bound, gamma)?, max_gap })
}
