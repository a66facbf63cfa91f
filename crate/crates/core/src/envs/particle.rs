//! Particle worlds: Food Collection, Grassland and Adversarial Battle.
//!
//! Agents are points in a square box moving at most `ε` per step
//! (`position += ε * v`, `|v| <= 1`). Every reward term reads only the agent,
//! its one-hop neighbors and furniture within radius `d`.

use super::{uniform_point, EnvConfig, EnvKind, LocalState, World, FREEZE_STEPS};
use crate::proximity::{AgentId, AgentState};
use crate::seed::SimRng;

/// `[x/w, y/w, dx/d, dy/d, item visible, role, status]`.
pub(super) const STATE_DIM: usize = 7;

const PICKUP_BONUS: f64 = 5.0;
const COLLISION_PENALTY: f64 = 1.0;
const TAG_BONUS: f64 = 5.0;
const FROZEN_PENALTY: f64 = 2.0;
const CAPTURE: f64 = 5.0;
const KILL: f64 = 10.0;

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Grassland: the last `M/2` agents are adversaries.
fn is_adversary(cfg: &EnvConfig, i: AgentId) -> bool {
    i >= cfg.agents - cfg.agents / 2
}

/// Adversarial Battle: the first `M/2` agents form team 0.
fn team(cfg: &EnvConfig, i: AgentId) -> u8 {
    u8::from(i >= cfg.agents / 2)
}

fn frozen(s: &AgentState) -> bool {
    s.extra.first().is_some_and(|t| *t > 0.0)
}

/// Nearest furniture item within radius `d`: `(index, distance)`.
fn nearest_item(cfg: &EnvConfig, items: &[[f64; 2]], pos: &[f64]) -> Option<(usize, f64)> {
    items
        .iter()
        .enumerate()
        .map(|(k, p)| (k, dist2(pos, p)))
        .filter(|(_, r)| *r <= cfg.graph.d)
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

pub(super) fn sample_world(cfg: &EnvConfig, rng: &mut SimRng) -> World {
    let agents = (0..cfg.agents)
        .map(|_| AgentState::with_extra(uniform_point(cfg.half_width, rng).to_vec(), vec![0.0]))
        .collect();
    let items = (0..cfg.items).map(|_| uniform_point(cfg.half_width, rng)).collect();
    World { agents, items }
}

pub(super) fn features(cfg: &EnvConfig, world: &World, i: AgentId) -> Vec<f64> {
    let s = &world.agents[i];
    let (x, y) = (s.position[0], s.position[1]);
    let (dx, dy, seen) = match nearest_item(cfg, &world.items, &s.position) {
        Some((k, _)) => ((world.items[k][0] - x) / cfg.graph.d, (world.items[k][1] - y) / cfg.graph.d, 1.0),
        None => (0.0, 0.0, 0.0),
    };
    let (role, status) = match cfg.kind {
        EnvKind::Grassland => (f64::from(u8::from(is_adversary(cfg, i))), s.extra[0] / FREEZE_STEPS),
        EnvKind::AdversarialBattle => (f64::from(team(cfg, i)), 0.0),
        _ => (0.0, 0.0),
    };
    vec![x / cfg.half_width, y / cfg.half_width, dx, dy, seen, role, status]
}

pub(super) fn transition(
    cfg: &EnvConfig,
    i: AgentId,
    me: &AgentState,
    local: &[LocalState<'_>],
    action: &[f64],
    _rng: &mut SimRng,
) -> AgentState {
    if cfg.kind == EnvKind::Grassland && !is_adversary(cfg, i) {
        if frozen(me) {
            return AgentState::with_extra(me.position.clone(), vec![(me.extra[0] - 1.0).max(0.0)]);
        }
        let tagged = local
            .iter()
            .any(|(j, s)| is_adversary(cfg, *j) && dist2(&me.position, &s.position) <= cfg.tag_radius);
        if tagged {
            return AgentState::with_extra(me.position.clone(), vec![FREEZE_STEPS]);
        }
    }

    let norm = (action[0] * action[0] + action[1] * action[1]).sqrt();
    let scale = if norm > 1.0 { cfg.graph.epsilon / norm } else { cfg.graph.epsilon };
    let w = cfg.half_width;
    let position = vec![
        (me.position[0] + scale * action[0]).clamp(-w, w),
        (me.position[1] + scale * action[1]).clamp(-w, w),
    ];
    AgentState::with_extra(position, me.extra.clone())
}

fn forage(cfg: &EnvConfig, items: &[[f64; 2]], me: &AgentState) -> f64 {
    match nearest_item(cfg, items, &me.position) {
        Some((_, r)) if r <= cfg.pickup_radius => PICKUP_BONUS - r,
        Some((_, r)) => -r,
        None => -cfg.graph.d,
    }
}

fn collides(cfg: &EnvConfig, i: AgentId, me: &AgentState, local: &[LocalState<'_>], same_side: impl Fn(AgentId) -> bool) -> bool {
    local
        .iter()
        .any(|(j, s)| *j != i && same_side(*j) && dist2(&me.position, &s.position) <= cfg.collision_radius)
}

pub(super) fn reward(cfg: &EnvConfig, items: &[[f64; 2]], i: AgentId, me: &AgentState, local: &[LocalState<'_>]) -> f64 {
    match cfg.kind {
        EnvKind::Ising => unreachable!("lattice rewards live in the ising module"),
        EnvKind::FoodCollection => {
            let mut r = forage(cfg, items, me);
            if collides(cfg, i, me, local, |_| true) {
                r -= COLLISION_PENALTY;
            }
            r
        }
        EnvKind::Grassland if !is_adversary(cfg, i) => {
            let mut r = forage(cfg, items, me);
            if collides(cfg, i, me, local, |j| !is_adversary(cfg, j)) {
                r -= COLLISION_PENALTY;
            }
            if frozen(me) {
                r -= FROZEN_PENALTY;
            }
            r
        }
        EnvKind::Grassland => {
            let prey = local
                .iter()
                .filter(|(j, _)| !is_adversary(cfg, *j))
                .map(|(_, s)| (dist2(&me.position, &s.position), frozen(s)));
            let mut nearest = cfg.graph.d;
            let mut tag = false;
            for (r, is_frozen) in prey {
                nearest = nearest.min(r);
                tag |= r <= cfg.tag_radius && !is_frozen;
            }
            if tag {
                TAG_BONUS
            } else {
                -nearest
            }
        }
        EnvKind::AdversarialBattle => battle_reward(cfg, items, i, me, local),
    }
}

fn battle_reward(cfg: &EnvConfig, items: &[[f64; 2]], i: AgentId, me: &AgentState, local: &[LocalState<'_>]) -> f64 {
    let mine = team(cfg, i);
    // Only resources within d of `i` count, so furniture stays local too.
    let visible: Vec<[f64; 2]> = items.iter().filter(|p| dist2(&me.position, &p[..]) <= cfg.graph.d).copied().collect();
    let captures = |s: &AgentState| visible.iter().any(|p| dist2(&s.position, p) <= cfg.pickup_radius);
    // Opponents of `who` within the kill radius. Everything within d/2 of a
    // neighbor that is itself within d/2 of `i` lies inside `i`'s one-hop set.
    let attackers = |who: AgentId, at: &AgentState| {
        local
            .iter()
            .filter(|(k, s)| team(cfg, *k) != team(cfg, who) && dist2(&at.position, &s.position) <= cfg.tag_radius)
            .count()
    };

    let mut r = match nearest_item(cfg, items, &me.position) {
        Some((_, d)) => -d,
        None => -cfg.graph.d,
    };
    if captures(me) {
        r += CAPTURE;
    }
    if local.iter().any(|(j, s)| team(cfg, *j) != mine && captures(s)) {
        r -= CAPTURE;
    }
    if attackers(i, me) >= 2 {
        r -= KILL;
    }
    for (j, s) in local.iter().filter(|(j, _)| team(cfg, *j) != mine) {
        if dist2(&me.position, &s.position) <= cfg.tag_radius {
            let killers = attackers(*j, s);
            if killers >= 2 {
                r += KILL / killers as f64;
            }
        }
    }
    r
}

/// Items picked up in `before` reappear uniformly in `after`.
pub(super) fn refresh_items(cfg: &EnvConfig, before: &World, after: &mut World, rng: &mut SimRng) {
    for (k, item) in before.items.iter().enumerate() {
        let taken = before.agents.iter().enumerate().any(|(j, s)| {
            let eligible = cfg.kind != EnvKind::Grassland || !is_adversary(cfg, j);
            eligible && dist2(&s.position, item) <= cfg.pickup_radius
        });
        if taken {
            after.items[k] = uniform_point(cfg.half_width, rng);
        }
    }
}
