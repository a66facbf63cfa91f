//! Independent checks of the two guarantees the method rests on: truncated
//! action values stay close to the exact ones, and next-step neighbors are
//! always potential neighbors.

mod prop1;
mod tabular;

pub use prop1::{prop1_violations, prop1_violations_with_radius, EnvWalk, Prop1Report, RandomWalk, StepSource, Teleport};
pub use tabular::{
    bellman_residual, exact_q, lemma1_bound, random_lemma_check, truncated_q, truncation_gap, value_iteration, ExactQ, JointPolicy, LemmaCheck,
    TabularMdp, TruncatedQ, Weights, RESIDUAL,
};

use crate::envs::{Env, EnvConfig, EnvKind, PARTICLE_SCALES};
use crate::error::Result;
use crate::proximity::GraphConfig;
use crate::seed::stream;

/// Discounts exercised by the truncation check.
pub const LEMMA_GAMMAS: [f64; 3] = [0.5, 0.9, 0.95];

/// One line of the verification report.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// `per_gamma` random line MDPs for each discount in [`LEMMA_GAMMAS`].
pub fn lemma1_checks(seed: u64, per_gamma: usize) -> Result<Vec<LemmaCheck>> {
    let mut out = Vec::new();
    for (g, &gamma) in LEMMA_GAMMAS.iter().enumerate() {
        let mut rng = stream(seed, g as u64, 0);
        for _ in 0..per_gamma {
            out.push(random_lemma_check(&mut rng, gamma)?);
        }
    }
    Ok(out)
}

/// Sums reports from random walks and every particle environment at the
/// given scale row, `steps` transitions each.
pub fn prop1_scale_report(seed: u64, scale: usize, steps: usize) -> Result<Prop1Report> {
    let (m, d, eps, half) = PARTICLE_SCALES[scale];
    let cfg = GraphConfig::euclidean(d, eps)?;
    let reports: Vec<Result<Prop1Report>> = std::thread::scope(|scope| {
        let walk = scope.spawn(move || prop1_violations(&mut RandomWalk::new(m, half, eps, stream(seed, scale as u64, 1)), &cfg, steps));
        let envs: Vec<_> = EnvKind::PARTICLE
            .into_iter()
            .enumerate()
            .map(|(k, kind)| {
                scope.spawn(move || {
                    let env = Env::new(EnvConfig::particle(kind, m, cfg, half, crate::envs::default_episode_length(kind, m))?)?;
                    prop1_violations(&mut EnvWalk::new(&env, stream(seed, scale as u64, 2 + k as u64)), &cfg, steps)
                })
            })
            .collect();
        std::iter::once(walk).chain(envs).map(|h| h.join().expect("neighbor check thread panicked")).collect()
    });
    let mut total = Prop1Report::default();
    for r in reports {
        let r = r?;
        total.steps += r.steps;
        total.motion_faults += r.motion_faults;
        total.violations += r.violations;
        total.pairs_checked += r.pairs_checked;
        total.first_violation = total.first_violation.or(r.first_violation);
    }
    Ok(total)
}

/// Injects motion beyond ε and a predictor that ignores motion; returns
/// whether each fault was caught.
pub fn prop1_fault_detection(seed: u64, steps: usize) -> Result<(bool, bool)> {
    let (m, d, eps, half) = PARTICLE_SCALES[1];
    let cfg = GraphConfig::euclidean(d, eps)?;
    let walk = RandomWalk::new(m, half, eps, stream(seed, 9, 0));
    let motion = prop1_violations(&mut Teleport::new(walk, 10, 3.0 * eps), &cfg, steps)?;
    // A dense walk so neighbors form quickly.
    let mut walk = RandomWalk::new(m, d, eps, stream(seed, 9, 1));
    let narrow = prop1_violations_with_radius(&mut walk, &cfg, steps, d)?;
    Ok((motion.motion_faults > 0, narrow.violations > 0))
}

/// Full verification report: exact-solver sanity cases, the truncation bound
/// on random MDPs, the neighbor-prediction check at every scale, and fault
/// injection. `steps` sets the transitions per source and scale.
pub fn verification_suite(seed: u64, lemma_per_gamma: usize, steps: usize) -> Result<Vec<Check>> {
    let mut checks = Vec::new();

    let single = TabularMdp {
        states: 1,
        actions: 1,
        neighbors: vec![vec![0]],
        gamma: 0.95,
        reward_bound: 1.0,
        transitions: vec![vec![1.0]],
        rewards: vec![vec![1.0]],
    };
    let q = exact_q(&single, &JointPolicy::uniform(&single))?.get(0, 0, 0);
    checks.push(Check { name: "exact Q, constant reward".into(), passed: (q - 20.0).abs() <= 1e-8, detail: format!("Q = {q:.10}, expected 20") });

    let lemma = lemma1_checks(seed, lemma_per_gamma)?;
    for &gamma in &LEMMA_GAMMAS {
        let group: Vec<_> = lemma.iter().filter(|c| c.gamma == gamma).collect();
        let worst = group.iter().map(|c| c.max_gap).fold(0.0, f64::max);
        let fails = group.iter().filter(|c| !c.holds()).count();
        checks.push(Check {
            name: format!("truncation bound, gamma {gamma}"),
            passed: fails == 0,
            detail: format!("{} MDPs, max gap {worst:.6} vs bound {:.6}, {fails} violations", group.len(), group[0].bound),
        });
    }

    for (scale, row) in PARTICLE_SCALES.iter().enumerate() {
        let r = prop1_scale_report(seed, scale, steps)?;
        checks.push(Check {
            name: format!("potential neighbors, d {} eps {}", row.1, row.2),
            passed: r.violations == 0 && r.motion_faults == 0,
            detail: format!("{} steps, {} pairs, {} violations, {} motion faults", r.steps, r.pairs_checked, r.violations, r.motion_faults),
        });
    }

    let (motion, narrow) = prop1_fault_detection(seed, steps.clamp(1, 10_000))?;
    checks.push(Check { name: "fault injection".into(), passed: motion && narrow, detail: format!("excess motion caught {motion}, narrow predictor caught {narrow}") });
    Ok(checks)
}
