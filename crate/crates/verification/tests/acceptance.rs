//! Acceptance suite: one PASS/FAIL line per criterion with the measured
//! values. Runs without the libtest harness so the report is always shown;
//! the process fails if any criterion fails.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use darl1n_cli::bench::{bench, bench_table, scaling_ratio, total_ratio};
use darl1n_cli::run::{serve, train_once, LearnerHost};
use darl1n_cli::{Algorithm, RunConfig};
use darl1n_core::baseline::Maddpg;
use darl1n_core::envs::conformance::probe;
use darl1n_core::envs::{Env, EnvConfig, EnvKind, Environment, PARTICLE_SCALES};
use darl1n_core::learner::{actor_objective_and_grad, critic_loss_and_grad, init_policies, Learner, PolicyTable, TrainConfig};
use darl1n_core::metrics::detect_convergence;
use darl1n_core::nn::{layer_sizes, Gradient, Head, Mlp};
use darl1n_core::oracle::{lemma1_checks, prop1_fault_detection, prop1_scale_report};
use darl1n_core::seed::{stream, SimRng};
use rand::Rng;

type Outcome = Result<(bool, String), String>;

fn max_abs_diff(a: &PolicyTable, b: &PolicyTable) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let nets = |t: &PolicyTable| t.pairs.iter().flat_map(|p| [p.online.clone(), p.target.clone()]).collect::<Vec<_>>();
    nets(a).iter().zip(&nets(b)).fold(0.0, |m, (x, y)| {
        if !x.same_shape(y) {
            return f64::INFINITY;
        }
        x.values().zip(y.values()).fold(m, |m, (p, q)| m.max((p - q).abs()))
    })
}

fn lemma_bound() -> Outcome {
    let start = Instant::now();
    let checks = lemma1_checks(2024, 7).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let violations = checks.iter().filter(|c| !c.holds()).count();
    let worst = checks.iter().map(|c| c.max_gap / c.bound).fold(0.0, f64::max);
    Ok((
        checks.len() >= 20 && violations == 0 && secs < 10.0,
        format!("{} MDPs over gamma {{0.5, 0.9, 0.95}}, {violations} violations, largest gap/bound {worst:.4}, {secs:.2}s", checks.len()),
    ))
}

fn potential_neighbors() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (scale, row) in PARTICLE_SCALES.iter().enumerate() {
        let r = prop1_scale_report(7, scale, 100_000).map_err(|e| e.to_string())?;
        pass &= r.violations == 0 && r.motion_faults == 0;
        parts.push(format!("(d {}, eps {}): {} steps {} violations", row.1, row.2, r.steps, r.violations));
    }
    let (motion, narrow) = prop1_fault_detection(7, 10_000).map_err(|e| e.to_string())?;
    pass &= motion && narrow;
    parts.push(format!("injected motion fault caught {motion}, narrow predictor caught {narrow}"));
    Ok((pass, parts.join("; ")))
}

fn central_difference(net: &Mlp, f: impl Fn(&Mlp) -> f64) -> Vec<f64> {
    const H: f64 = 1e-6;
    (0..net.len())
        .map(|k| {
            let (mut plus, mut minus) = (net.clone(), net.clone());
            *plus.values_mut().nth(k).unwrap() += H;
            *minus.values_mut().nth(k).unwrap() -= H;
            (f(&plus) - f(&minus)) / (2.0 * H)
        })
        .collect()
}

fn relative_error(analytic: &Gradient, numeric: &[f64]) -> f64 {
    let a: Vec<f64> = analytic.values().collect();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(numeric).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(&a).max(norm(numeric)).max(1e-12)
}

fn vector(rng: &mut SimRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn gradients() -> Outcome {
    let mut rng = stream(3, 0, 0);
    let (mut worst_critic, mut worst_actor) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let kind = EnvKind::ALL[rng.random_range(0..4)];
        let agents = if kind == EnvKind::Ising { 9 } else { rng.random_range(1..=6) };
        let env = Env::new(EnvConfig::new(kind, agents).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let pad = env.pad_spec();
        let (hidden, width, batch) = (rng.random_range(1..=3), rng.random_range(3..=12), rng.random_range(1..=5));
        let critic = Mlp::new(&layer_sizes(pad.critic_input_dim(), hidden, width, 1), Head::Linear, &mut rng).unwrap();
        let policy = Mlp::new(&layer_sizes(pad.policy_input_dim(), hidden, width, pad.action_dim), env.action_kind().policy_head(), &mut rng).unwrap();
        let c_in: Vec<Vec<f64>> = (0..batch).map(|_| vector(&mut rng, pad.critic_input_dim())).collect();
        let p_in: Vec<Vec<f64>> = (0..batch).map(|_| vector(&mut rng, pad.policy_input_dim())).collect();
        let targets = vector(&mut rng, batch);
        let slot = pad.action_range(rng.random_range(0..pad.max_neighbors));

        let (_, g) = critic_loss_and_grad(&critic, &c_in, &targets).map_err(|e| e.to_string())?;
        let fd = central_difference(&critic, |n| critic_loss_and_grad(n, &c_in, &targets).unwrap().0);
        worst_critic = worst_critic.max(relative_error(&g, &fd));

        let (_, g) = actor_objective_and_grad(&policy, &critic, &p_in, &c_in, slot.clone()).map_err(|e| e.to_string())?;
        let fd = central_difference(&policy, |n| actor_objective_and_grad(n, &critic, &p_in, &c_in, slot.clone()).unwrap().0);
        worst_actor = worst_actor.max(relative_error(&g, &fd));
    }
    Ok((
        worst_critic <= 1e-4 && worst_actor <= 1e-4,
        format!("50 configurations, worst relative error critic {worst_critic:.2e}, actor {worst_actor:.2e}"),
    ))
}

fn transports(dir: &Path) -> Outcome {
    let text = "M=2\nseed=11\nmax_iterations=10\neval_every=10\neval_episodes=1\ntimeout_s=120\n";
    let local = RunConfig::parse(text).map_err(|e| e.to_string())?;
    let (_, a) = train_once(&local, local.seed, &LearnerHost::Threads, &mut |_| {}).map_err(|e| e.to_string())?;
    let tcp_text = format!("{text}transport=tcp\n");
    let path = dir.join("tcp.cfg");
    std::fs::write(&path, &tcp_text).map_err(|e| e.to_string())?;
    let remote = RunConfig::parse(&tcp_text).map_err(|e| e.to_string())?;
    let exe = std::env::current_exe().map_err(|e| e.to_string())?;
    let host = LearnerHost::Processes { exe, config: path };
    let (_, b) = train_once(&remote, remote.seed, &host, &mut |_| {}).map_err(|e| e.to_string())?;
    let diff = max_abs_diff(&a, &b);
    Ok((diff <= 1e-12, format!("Ising M=2, 10 iterations, in-process vs TCP learner processes: max |diff| {diff:e}")))
}

fn single_agent_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    for kind in [EnvKind::Ising, EnvKind::FoodCollection] {
        let env = Env::new(EnvConfig::new(kind, 1).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let mut cfg = TrainConfig::for_env(kind, env.episode_length());
        cfg.seed = 5;
        cfg.batch = 32;
        let mut table = init_policies(&env, &cfg).map_err(|e| e.to_string())?;
        let mut learner = Learner::new(&env, 0, cfg.clone()).map_err(|e| e.to_string())?;
        let mut central = Maddpg::new(&env, cfg).map_err(|e| e.to_string())?;
        for k in 0..20 {
            let u = learner.run_iteration(&env, &table, k).map_err(|e| e.to_string())?;
            table.pairs[0] = u.pair;
            central.run_iteration(&env, k).map_err(|e| e.to_string())?;
            worst = worst.max(max_abs_diff(&table, central.policies()));
        }
    }
    Ok((worst <= 1e-12, format!("Ising and food_collection with M=1, 20 iterations, max |diff| over the trajectory {worst:e}")))
}

fn learning() -> Outcome {
    let cfg = RunConfig::parse("env=ising\nM=9\nseed=1\nmax_iterations=2000\n").map_err(|e| e.to_string())?;
    let start = Instant::now();
    let (rows, _) = train_once(&cfg, cfg.seed, &LearnerHost::Threads, &mut |_| {}).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let rewards: Vec<f64> = rows.iter().map(|r| r.avg_total_reward).collect();
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let first = mean(&rewards[..200]);
    let last = mean(&rewards[rewards.len() - 200..]);
    let converged = detect_convergence(&rewards);
    let ratio = last / first;
    Ok((
        first > 0.0 && ratio >= 1.5 && converged.is_some() && secs < 600.0,
        format!(
            "Ising M=9, {} iterations in {secs:.0}s: first-200 mean {first:.2}, final-200 mean {last:.2}, ratio {ratio:.3} (needs 1.5), convergence at {converged:?}",
            rows.len()
        ),
    ))
}

fn scaling(dir: &Path) -> Outcome {
    let text = format!("env=ising\nbench_sizes=9,25\nbench_iterations=10\nbench_warmup=2\noutput={}\n", dir.display());
    let cfg = RunConfig::parse(&text).map_err(|e| e.to_string())?;
    let rows = bench(&cfg).map_err(|e| e.to_string())?;
    print!("{}", bench_table(&rows));
    let d = scaling_ratio(&rows, Algorithm::Darl1n, 9, 25).unwrap();
    let m = scaling_ratio(&rows, Algorithm::Maddpg, 9, 25).unwrap();
    let d_core = total_ratio(&rows, Algorithm::Darl1n, 9, 25).unwrap();
    let limit = 25.0 / 9.0 * 1.5;
    Ok((
        d <= limit && m > d,
        format!("iteration time ratio M=25/M=9: darl1n {d:.3} (limit {limit:.3}), maddpg {m:.3}; single-core darl1n ratio {d_core:.3}"),
    ))
}

fn conformance() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in EnvKind::ALL {
        let agents = if kind == EnvKind::Ising { 9 } else { 6 };
        let env = Env::new(EnvConfig::new(kind, agents).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let r = probe(&env, 100_000, 17).map_err(|e| e.to_string())?;
        pass &= r.violations() == 0;
        parts.push(format!(
            "{}: {} probes, locality r/t {}/{}, bound {}, motion {}",
            kind.name(),
            r.probes,
            r.reward_locality,
            r.transition_locality,
            r.reward_bound,
            r.motion_bound
        ));
    }
    Ok((pass, parts.join("; ")))
}

/// Learner processes for the TCP check are this binary started as
/// `acceptance learner <config> --agent i --seed s --connect addr`.
fn serve_learner(args: &[String]) -> ExitCode {
    let flag = |name: &str| args.iter().position(|a| a == name).and_then(|k| args.get(k + 1)).expect("learner flag");
    let text = std::fs::read_to_string(&args[2]).expect("learner config");
    let cfg = RunConfig::parse(&text).expect("learner config parses");
    match serve(&cfg, flag("--agent").parse().unwrap(), flag("--seed").parse().unwrap(), flag("--connect")) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("learner: {e}");
            ExitCode::FAILURE
        }
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    if args.get(1).map(String::as_str) == Some("learner") {
        return serve_learner(&args);
    }
    // libtest flags such as --nocapture may be passed through; none apply.
    let dir = tempfile::tempdir().expect("temporary directory");
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("truncated Q stays within 2 r gamma / (1 - gamma)", Box::new(lemma_bound)),
        ("next-step neighbors are potential neighbors", Box::new(potential_neighbors)),
        ("analytic gradients match finite differences", Box::new(gradients)),
        ("in-process and TCP transports agree", Box::new(|| transports(dir.path()))),
        ("single-agent DARL1N equals MADDPG", Box::new(single_agent_equivalence)),
        ("desk-scale Ising learning", Box::new(learning)),
        ("iteration time scaling", Box::new(|| scaling(dir.path()))),
        ("assumption conformance", Box::new(conformance)),
    ];
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = match check() {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!pass);
        let took = Duration::from_secs_f64(start.elapsed().as_secs_f64());
        println!("criterion {} [{}] {name}: {detail} ({took:.1?})", n + 1, if pass { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
