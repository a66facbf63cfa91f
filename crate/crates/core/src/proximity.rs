//! Geometry of the agent team: the d-disk proximity graph, one-hop and
//! potential neighbor queries, and the per-step motion bound.
//!
//! Distances must come from a true metric. The potential-neighbor guarantee
//! (an agent outside radius `d + 2ε` now cannot be within `d` after one
//! bounded step) relies on the triangle inequality.

use std::collections::HashMap;

use crate::error::{Error, Result};

pub type AgentId = usize;

/// Absolute slack applied to every distance comparison.
pub const DIST_SLACK: f64 = 1e-12;

/// Above this team size the all-agents query switches to a uniform grid.
pub const GRID_THRESHOLD: usize = 32;

/// State of one agent. `position` is what the metric sees; `extra` carries
/// environment-specific attributes (spin, freeze timer, ...).
#[derive(Clone, Debug, PartialEq)]
pub struct AgentState {
    pub position: Vec<f64>,
    pub extra: Vec<f64>,
}

impl AgentState {
    pub fn at(position: Vec<f64>) -> Self {
        Self { position, extra: Vec::new() }
    }

    pub fn with_extra(position: Vec<f64>, extra: Vec<f64>) -> Self {
        Self { position, extra }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(&self.extra).all(|v| v.is_finite())
    }
}

pub type JointState = Vec<AgentState>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Metric {
    Euclidean,
    /// Manhattan distance on a `rows x cols` torus; positions are integer
    /// `(row, col)` coordinates embedded as reals. With `d = 1` the one-hop
    /// set is the agent plus its four cardinal neighbors.
    LatticeTorus { rows: usize, cols: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GraphConfig {
    pub d: f64,
    pub epsilon: f64,
    pub metric: Metric,
}

impl GraphConfig {
    pub fn new(d: f64, epsilon: f64, metric: Metric) -> Result<Self> {
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::Config(format!("neighbor radius d must be > 0, got {d}")));
        }
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(Error::Config(format!("motion bound epsilon must be >= 0, got {epsilon}")));
        }
        if let Metric::LatticeTorus { rows, cols } = metric {
            if rows == 0 || cols == 0 {
                return Err(Error::Config("lattice must have at least one row and column".into()));
            }
        }
        Ok(Self { d, epsilon, metric })
    }

    pub fn euclidean(d: f64, epsilon: f64) -> Result<Self> {
        Self::new(d, epsilon, Metric::Euclidean)
    }

    /// Radius of the potential-neighbor disk, `d + 2ε`.
    pub fn potential_radius(&self) -> f64 {
        self.d + 2.0 * self.epsilon
    }

    pub fn dist(&self, a: &AgentState, b: &AgentState) -> Result<f64> {
        dist(self.metric, &a.position, &b.position)
    }
}

pub fn dist(metric: Metric, a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    Ok(match metric {
        Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
        Metric::LatticeTorus { rows, cols } => {
            let wrap = |x: f64, y: f64, n: usize| {
                let n = n as f64;
                let delta = (x - y).abs().rem_euclid(n);
                delta.min(n - delta)
            };
            let mut sum = 0.0;
            for (k, (x, y)) in a.iter().zip(b).enumerate() {
                sum += match k {
                    0 => wrap(*x, *y, rows),
                    1 => wrap(*x, *y, cols),
                    _ => (x - y).abs(),
                };
            }
            sum
        }
    })
}

/// One-hop set `N_i` and potential set `P_i` of one agent, both ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborSets {
    pub one_hop: Vec<AgentId>,
    pub potential: Vec<AgentId>,
}

fn check_query(states: &[AgentState], i: AgentId) -> Result<usize> {
    let Some(subject) = states.get(i) else {
        return Err(Error::InvalidAgent { id: i, count: states.len() });
    };
    let dim = subject.position.len();
    for s in states {
        if s.position.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: s.position.len() });
        }
    }
    Ok(dim)
}

fn within(states: &[AgentState], cfg: &GraphConfig, i: AgentId, radius: f64) -> Result<Vec<AgentId>> {
    check_query(states, i)?;
    let me = &states[i].position;
    let mut out = Vec::new();
    for (j, s) in states.iter().enumerate() {
        if j == i || dist(cfg.metric, me, &s.position)? <= radius + DIST_SLACK {
            out.push(j);
        }
    }
    Ok(out)
}

/// `{j != i | dist(s_i, s_j) <= d} ∪ {i}`, ascending.
pub fn one_hop_neighbors(states: &[AgentState], cfg: &GraphConfig, i: AgentId) -> Result<Vec<AgentId>> {
    within(states, cfg, i, cfg.d)
}

/// `{j | dist(s_i, s_j) <= d + 2ε}`, ascending. Always a superset of the
/// one-hop set.
pub fn potential_neighbors(states: &[AgentState], cfg: &GraphConfig, i: AgentId) -> Result<Vec<AgentId>> {
    within(states, cfg, i, cfg.potential_radius())
}

/// Whether one step from `prev` to `next` respects the motion bound ε.
pub fn validate_motion(prev: &AgentState, next: &AgentState, cfg: &GraphConfig) -> Result<bool> {
    Ok(cfg.dist(prev, next)? <= cfg.epsilon + DIST_SLACK)
}

/// Neighbor sets of every agent. Brute force for small teams, a uniform grid
/// keyed on the potential radius otherwise; both return identical sets.
pub fn all_neighbor_sets(states: &[AgentState], cfg: &GraphConfig) -> Result<Vec<NeighborSets>> {
    if states.is_empty() {
        return Ok(Vec::new());
    }
    check_query(states, 0)?;
    if states.len() > GRID_THRESHOLD && cfg.metric == Metric::Euclidean {
        grid_neighbor_sets(states, cfg)
    } else {
        brute_neighbor_sets(states, cfg)
    }
}

pub fn brute_neighbor_sets(states: &[AgentState], cfg: &GraphConfig) -> Result<Vec<NeighborSets>> {
    let m = states.len();
    let mut sets = vec![NeighborSets { one_hop: Vec::new(), potential: Vec::new() }; m];
    let (d, p) = (cfg.d + DIST_SLACK, cfg.potential_radius() + DIST_SLACK);
    for i in 0..m {
        for j in 0..m {
            let r = if i == j { 0.0 } else { dist(cfg.metric, &states[i].position, &states[j].position)? };
            if i == j || r <= p {
                sets[i].potential.push(j);
                if i == j || r <= d {
                    sets[i].one_hop.push(j);
                }
            }
        }
    }
    Ok(sets)
}

/// Uniform-grid variant for Euclidean positions of any dimension.
pub fn grid_neighbor_sets(states: &[AgentState], cfg: &GraphConfig) -> Result<Vec<NeighborSets>> {
    if cfg.metric != Metric::Euclidean {
        return Err(Error::InvalidArgument("grid search requires the Euclidean metric".into()));
    }
    let dim = check_query(states, 0)?;
    let cell = cfg.potential_radius().max(f64::MIN_POSITIVE);
    let key = |pos: &[f64]| pos.iter().map(|x| (x / cell).floor() as i64).collect::<Vec<_>>();

    let mut grid: HashMap<Vec<i64>, Vec<AgentId>> = HashMap::new();
    for (j, s) in states.iter().enumerate() {
        grid.entry(key(&s.position)).or_default().push(j);
    }

    let offsets = neighbor_offsets(dim);
    let (d, p) = (cfg.d + DIST_SLACK, cfg.potential_radius() + DIST_SLACK);
    let mut sets = Vec::with_capacity(states.len());
    for (i, s) in states.iter().enumerate() {
        let home = key(&s.position);
        let mut potential = Vec::new();
        let mut one_hop = Vec::new();
        let mut probe = home.clone();
        for off in &offsets {
            for (k, o) in off.iter().enumerate() {
                probe[k] = home[k] + o;
            }
            let Some(bucket) = grid.get(&probe) else { continue };
            for &j in bucket {
                let r = if i == j { 0.0 } else { dist(cfg.metric, &s.position, &states[j].position)? };
                if i == j || r <= p {
                    potential.push(j);
                    if i == j || r <= d {
                        one_hop.push(j);
                    }
                }
            }
        }
        potential.sort_unstable();
        one_hop.sort_unstable();
        sets.push(NeighborSets { one_hop, potential });
    }
    Ok(sets)
}

fn neighbor_offsets(dim: usize) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::with_capacity(dim)];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (-1..=1).map(move |o| {
                    let mut v = prefix.clone();
                    v.push(o);
                    v
                })
            })
            .collect();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(coords: &[(f64, f64)]) -> JointState {
        coords.iter().map(|&(x, y)| AgentState::at(vec![x, y])).collect()
    }

    fn lattice(rows: usize, cols: usize) -> JointState {
        (0..rows * cols)
            .map(|k| AgentState::at(vec![(k / cols) as f64, (k % cols) as f64]))
            .collect()
    }

    #[test]
    fn one_hop_basic() {
        let s = pts(&[(0.0, 0.0), (0.1, 0.0), (1.0, 0.0)]);
        let g = GraphConfig::euclidean(0.15, 0.05).unwrap();
        assert_eq!(one_hop_neighbors(&s, &g, 0).unwrap(), vec![0, 1]);
    }

    #[test]
    fn single_agent_is_its_own_neighbor() {
        let s = pts(&[(3.0, -2.0)]);
        for d in [1e-6, 0.15, 100.0] {
            let g = GraphConfig::euclidean(d, 0.0).unwrap();
            assert_eq!(one_hop_neighbors(&s, &g, 0).unwrap(), vec![0]);
        }
    }

    #[test]
    fn lattice_center_has_four_cardinal_neighbors() {
        let s = lattice(3, 3);
        let g = GraphConfig::new(1.0, 0.0, Metric::LatticeTorus { rows: 3, cols: 3 }).unwrap();
        assert_eq!(one_hop_neighbors(&s, &g, 4).unwrap(), vec![1, 3, 4, 5, 7]);
        // corner wraps around the torus
        assert_eq!(one_hop_neighbors(&s, &g, 0).unwrap(), vec![0, 1, 2, 3, 6]);
    }

    #[test]
    fn potential_radius_widens_by_two_epsilon() {
        let s = pts(&[(0.0, 0.0), (0.2, 0.0)]);
        let g = GraphConfig::euclidean(0.15, 0.05).unwrap();
        assert_eq!(one_hop_neighbors(&s, &g, 0).unwrap(), vec![0]);
        assert_eq!(potential_neighbors(&s, &g, 0).unwrap(), vec![0, 1]);

        let far = pts(&[(0.0, 0.0), (0.3, 0.0)]);
        assert_eq!(potential_neighbors(&far, &g, 0).unwrap(), vec![0]);
    }

    #[test]
    fn zero_epsilon_collapses_potential_set() {
        let s = pts(&[(0.0, 0.0), (0.1, 0.0), (0.2, 0.0), (0.5, 0.5)]);
        let g = GraphConfig::euclidean(0.15, 0.0).unwrap();
        for i in 0..s.len() {
            assert_eq!(one_hop_neighbors(&s, &g, i).unwrap(), potential_neighbors(&s, &g, i).unwrap());
        }
    }

    #[test]
    fn boundary_distance_counts() {
        let s = pts(&[(0.0, 0.0), (0.25, 0.0)]);
        let g = GraphConfig::euclidean(0.25, 0.0).unwrap();
        assert_eq!(one_hop_neighbors(&s, &g, 0).unwrap(), vec![0, 1]);
    }

    #[test]
    fn motion_bound() {
        let g = GraphConfig::euclidean(0.15, 0.05).unwrap();
        let o = AgentState::at(vec![0.0, 0.0]);
        assert!(validate_motion(&o, &AgentState::at(vec![0.04, 0.0]), &g).unwrap());
        assert!(!validate_motion(&o, &AgentState::at(vec![0.06, 0.0]), &g).unwrap());
        assert!(validate_motion(&o, &o, &GraphConfig::euclidean(0.1, 0.0).unwrap()).unwrap());
    }

    #[test]
    fn errors() {
        let g = GraphConfig::euclidean(0.15, 0.05).unwrap();
        let s = pts(&[(0.0, 0.0)]);
        assert!(matches!(one_hop_neighbors(&s, &g, 3), Err(Error::InvalidAgent { .. })));
        let mixed = vec![AgentState::at(vec![0.0, 0.0]), AgentState::at(vec![0.0])];
        assert!(matches!(one_hop_neighbors(&mixed, &g, 0), Err(Error::DimensionMismatch { .. })));
        assert!(validate_motion(&mixed[0], &mixed[1], &g).is_err());
        assert!(GraphConfig::euclidean(0.0, 0.1).is_err());
        assert!(GraphConfig::euclidean(0.1, -0.1).is_err());
    }

    fn cloud(max: usize) -> impl Strategy<Value = JointState> {
        prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..max).prop_map(|v| pts(&v))
    }

    proptest! {
        #[test]
        fn graph_properties(s in cloud(24), d in 0.01f64..1.0, eps in 0.0f64..0.3) {
            let g = GraphConfig::euclidean(d, eps).unwrap();
            let sets = brute_neighbor_sets(&s, &g).unwrap();
            for i in 0..s.len() {
                let one = one_hop_neighbors(&s, &g, i).unwrap();
                let pot = potential_neighbors(&s, &g, i).unwrap();
                prop_assert!(one.contains(&i));
                prop_assert!(one.iter().all(|j| pot.contains(j)));
                prop_assert!(one.windows(2).all(|w| w[0] < w[1]));
                for &j in &one {
                    prop_assert!(one_hop_neighbors(&s, &g, j).unwrap().contains(&i));
                }
                prop_assert_eq!(&sets[i].one_hop, &one);
                prop_assert_eq!(&sets[i].potential, &pot);
            }
        }

        #[test]
        fn grid_matches_brute_force(s in cloud(80), d in 0.01f64..0.8, eps in 0.0f64..0.3) {
            let g = GraphConfig::euclidean(d, eps).unwrap();
            prop_assert_eq!(grid_neighbor_sets(&s, &g).unwrap(), brute_neighbor_sets(&s, &g).unwrap());
            prop_assert_eq!(all_neighbor_sets(&s, &g).unwrap(), brute_neighbor_sets(&s, &g).unwrap());
        }
    }
}
