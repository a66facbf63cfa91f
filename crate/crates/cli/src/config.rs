//! Run configuration: `key=value` lines, `#` comments, every key optional.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use darl1n_core::envs::{default_episode_length, particle_scale, EnvConfig, EnvKind, PARTICLE_SCALES};
use darl1n_core::learner::TrainConfig;
use darl1n_core::proximity::GraphConfig;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Darl1n,
    Maddpg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransportKind {
    InProc,
    Tcp,
}

/// Fully resolved run settings.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub env: EnvKind,
    pub agents: usize,
    pub seed: u64,
    pub gamma: f64,
    pub lr: f64,
    pub polyak: f64,
    pub buffer: usize,
    pub batch: usize,
    pub episode_length: usize,
    /// Neighbor radius and motion bound; `None` for the lattice.
    pub geometry: Option<Geometry>,
    pub transport: TransportKind,
    pub listen: String,
    pub max_iterations: u64,
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub output: PathBuf,
    /// Independent runs with seeds `seed, seed+1, ...`; more than one adds an
    /// aggregate across runs.
    pub runs: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub noise: f64,
    pub transitions: usize,
    pub update_every: usize,
    pub timeout_s: f64,
    pub bench_sizes: Vec<usize>,
    pub bench_iterations: usize,
    pub bench_warmup: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Geometry {
    pub d: f64,
    pub epsilon: f64,
    pub half_width: f64,
}

const KEYS: [&str; 29] = [
    "algorithm",
    "env",
    "M",
    "seed",
    "gamma",
    "lr",
    "polyak",
    "buffer",
    "batch",
    "episode_length",
    "d",
    "epsilon",
    "half_width",
    "transport",
    "listen",
    "max_iterations",
    "eval_every",
    "eval_episodes",
    "output",
    "runs",
    "hidden_layers",
    "hidden_width",
    "noise",
    "transitions",
    "update_every",
    "timeout_s",
    "bench_sizes",
    "bench_iterations",
    "bench_warmup",
];

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

struct Fields(BTreeMap<String, (usize, String)>);

impl Fields {
    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError> {
        match self.0.remove(key) {
            None => Ok(None),
            Some((line, raw)) => raw.parse().map(Some).map_err(|_| config_err(format!("line {line}: cannot parse {key}={raw}"))),
        }
    }

    fn get<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.take(key)?.unwrap_or(default))
    }
}

fn parse_list(key: &str, raw: &str) -> Result<Vec<usize>, CliError> {
    raw.split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|_| config_err(format!("cannot parse {key}={raw}"))))
        .collect()
}

fn default_bench_sizes(env: EnvKind) -> Vec<usize> {
    match env {
        EnvKind::Ising => vec![9, 16, 25],
        _ => PARTICLE_SCALES[..4].iter().map(|r| r.0).collect(),
    }
}

impl RunConfig {
    /// Parses and validates a configuration. Missing keys take their
    /// defaults; unknown or repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut fields = Fields(BTreeMap::new());
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| config_err(format!("line {}: expected key=value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(config_err(format!("line {}: unknown key {key:?}", n + 1)));
            }
            if fields.0.insert(key.to_string(), (n + 1, value.to_string())).is_some() {
                return Err(config_err(format!("line {}: {key} given twice", n + 1)));
            }
        }

        let algorithm = match fields.take::<String>("algorithm")?.as_deref() {
            None | Some("darl1n") => Algorithm::Darl1n,
            Some("maddpg") => Algorithm::Maddpg,
            Some(other) => return Err(config_err(format!("unknown algorithm {other:?}"))),
        };
        let env = match fields.take::<String>("env")? {
            None => EnvKind::Ising,
            Some(name) => EnvKind::parse(&name).ok_or_else(|| config_err(format!("unknown env {name:?}")))?,
        };
        let agents = fields.get("M", 9usize)?;
        if agents == 0 {
            return Err(config_err("M must be at least 1"));
        }
        let defaults = TrainConfig::for_env(env, default_episode_length(env, agents));
        let episode_length = fields.get("episode_length", default_episode_length(env, agents))?;

        let (d, epsilon, half_width) = (fields.take::<f64>("d")?, fields.take::<f64>("epsilon")?, fields.take::<f64>("half_width")?);
        let geometry = if env.is_particle() {
            let (dd, de, dh) = particle_scale(agents);
            let g = Geometry { d: d.unwrap_or(dd), epsilon: epsilon.unwrap_or(de), half_width: half_width.unwrap_or(dh) };
            if g.epsilon > g.d {
                return Err(config_err(format!("epsilon {} exceeds d {}", g.epsilon, g.d)));
            }
            GraphConfig::euclidean(g.d, g.epsilon).map_err(|e| config_err(e.to_string()))?;
            if !(g.half_width > 0.0) {
                return Err(config_err("half_width must be positive"));
            }
            Some(g)
        } else {
            if d.is_some() || epsilon.is_some() || half_width.is_some() {
                return Err(config_err("the ising lattice fixes its own neighborhoods; d, epsilon and half_width do not apply"));
            }
            None
        };

        let transport = match fields.take::<String>("transport")?.as_deref() {
            None | Some("inproc") => TransportKind::InProc,
            Some("tcp") => TransportKind::Tcp,
            Some(other) => return Err(config_err(format!("unknown transport {other:?}"))),
        };
        let bench_sizes = match fields.take::<String>("bench_sizes")? {
            None => default_bench_sizes(env),
            Some(raw) => parse_list("bench_sizes", &raw)?,
        };

        let cfg = Self {
            algorithm,
            env,
            agents,
            seed: fields.get("seed", 0)?,
            gamma: fields.get("gamma", defaults.gamma)?,
            lr: fields.get("lr", defaults.lr)?,
            polyak: fields.get("polyak", defaults.polyak)?,
            buffer: fields.get("buffer", defaults.buffer_capacity)?,
            batch: fields.get("batch", defaults.batch)?,
            episode_length,
            geometry,
            transport,
            listen: fields.get("listen", "127.0.0.1:0".to_string())?,
            max_iterations: fields.get("max_iterations", 2000)?,
            eval_every: fields.get("eval_every", 1)?,
            eval_episodes: fields.get("eval_episodes", 10)?,
            output: fields.get("output", PathBuf::from("runs/out"))?,
            runs: fields.get("runs", 1)?,
            hidden_layers: fields.get("hidden_layers", defaults.hidden_layers)?,
            hidden_width: fields.get("hidden_width", defaults.hidden_width)?,
            noise: fields.get("noise", defaults.noise)?,
            transitions: fields.get("transitions", 4 * episode_length)?,
            update_every: fields.get("update_every", defaults.update_every)?,
            timeout_s: fields.get("timeout_s", 600.0)?,
            bench_sizes,
            bench_iterations: fields.get("bench_iterations", 5)?,
            bench_warmup: fields.get("bench_warmup", 2)?,
        };
        debug_assert!(fields.0.is_empty());
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(config_err(format!("gamma {} outside (0, 1)", self.gamma)));
        }
        if self.episode_length == 0 || self.eval_every == 0 || self.eval_episodes == 0 || self.runs == 0 {
            return Err(config_err("episode_length, eval_every, eval_episodes and runs must be positive"));
        }
        if self.transitions == 0 || self.hidden_layers == 0 || self.hidden_width == 0 {
            return Err(config_err("transitions and network sizes must be positive"));
        }
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return Err(config_err("timeout_s must be positive"));
        }
        if self.bench_sizes.is_empty() || self.bench_sizes.contains(&0) || self.bench_iterations == 0 {
            return Err(config_err("bench_sizes must list positive team sizes and bench_iterations must be positive"));
        }
        self.train_config(self.seed).validate().map_err(|e| config_err(e.to_string()))?;
        self.env_config(self.agents).map_err(|e| config_err(e.to_string()))?;
        Ok(())
    }

    /// Environment for a team of `agents` with this run's geometry. Particle
    /// runs with no explicit geometry rescale with the team size.
    pub fn env_config(&self, agents: usize) -> darl1n_core::Result<EnvConfig> {
        let mut cfg = EnvConfig::new(self.env, agents)?;
        if let Some(g) = self.geometry.filter(|_| agents == self.agents) {
            cfg = EnvConfig::particle(self.env, agents, GraphConfig::euclidean(g.d, g.epsilon)?, g.half_width, self.episode_length)?;
        }
        cfg.episode_length = if agents == self.agents { self.episode_length } else { default_episode_length(self.env, agents) };
        Ok(cfg)
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            gamma: self.gamma,
            lr: self.lr,
            polyak: self.polyak,
            batch: self.batch,
            buffer_capacity: self.buffer,
            transitions_per_iteration: self.transitions,
            update_every: self.update_every,
            noise: self.noise,
            hidden_layers: self.hidden_layers,
            hidden_width: self.hidden_width,
        }
    }

    /// Seeds of the configured runs.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.runs as u64).map(|k| self.seed.wrapping_add(k)).collect()
    }
}

/// Writes every key, so the output parses back to the same configuration.
impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let algorithm = match self.algorithm {
            Algorithm::Darl1n => "darl1n",
            Algorithm::Maddpg => "maddpg",
        };
        let transport = match self.transport {
            TransportKind::InProc => "inproc",
            TransportKind::Tcp => "tcp",
        };
        writeln!(f, "algorithm={algorithm}")?;
        writeln!(f, "env={}", self.env.name())?;
        writeln!(f, "M={}", self.agents)?;
        writeln!(f, "seed={}", self.seed)?;
        writeln!(f, "gamma={}", self.gamma)?;
        writeln!(f, "lr={}", self.lr)?;
        writeln!(f, "polyak={}", self.polyak)?;
        writeln!(f, "buffer={}", self.buffer)?;
        writeln!(f, "batch={}", self.batch)?;
        writeln!(f, "episode_length={}", self.episode_length)?;
        if let Some(g) = self.geometry {
            writeln!(f, "d={}", g.d)?;
            writeln!(f, "epsilon={}", g.epsilon)?;
            writeln!(f, "half_width={}", g.half_width)?;
        }
        writeln!(f, "transport={transport}")?;
        writeln!(f, "listen={}", self.listen)?;
        writeln!(f, "max_iterations={}", self.max_iterations)?;
        writeln!(f, "eval_every={}", self.eval_every)?;
        writeln!(f, "eval_episodes={}", self.eval_episodes)?;
        writeln!(f, "output={}", self.output.display())?;
        writeln!(f, "runs={}", self.runs)?;
        writeln!(f, "hidden_layers={}", self.hidden_layers)?;
        writeln!(f, "hidden_width={}", self.hidden_width)?;
        writeln!(f, "noise={}", self.noise)?;
        writeln!(f, "transitions={}", self.transitions)?;
        writeln!(f, "update_every={}", self.update_every)?;
        writeln!(f, "timeout_s={}", self.timeout_s)?;
        let sizes: Vec<String> = self.bench_sizes.iter().map(usize::to_string).collect();
        writeln!(f, "bench_sizes={}", sizes.join(","))?;
        writeln!(f, "bench_iterations={}", self.bench_iterations)?;
        writeln!(f, "bench_warmup={}", self.bench_warmup)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!((c.algorithm, c.env, c.agents), (Algorithm::Darl1n, EnvKind::Ising, 9));
        assert_eq!((c.gamma, c.lr, c.polyak, c.buffer, c.batch), (0.95, 0.01, 0.01, 1_000_000, 32));
        assert_eq!((c.episode_length, c.transitions), (25, 100));
        assert_eq!(c.geometry, None);
        assert_eq!(c.transport, TransportKind::InProc);
    }

    #[test]
    fn comments_and_whitespace() {
        let c = RunConfig::parse("# a run\n  seed = 7   # trailing\n\nalgorithm=maddpg\n").unwrap();
        assert_eq!((c.seed, c.algorithm), (7, Algorithm::Maddpg));
    }

    #[test]
    fn gamma_out_of_range() {
        assert!(matches!(RunConfig::parse("gamma=1.5"), Err(CliError::Config(_))));
        assert!(RunConfig::parse("gamma=0").is_err());
    }

    #[test]
    fn particle_geometry_follows_team_size() {
        let c = RunConfig::parse("env=food_collection\nM=24").unwrap();
        let g = c.geometry.unwrap();
        assert_eq!((g.d, g.epsilon), (0.3, 0.20));
        assert_eq!(c.batch, 1024);
        let e = c.env_config(24).unwrap();
        assert_eq!((e.graph.d, e.graph.epsilon), (0.3, 0.2));
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "bogus=1",
            "seed=1\nseed=2",
            "M=nine",
            "just words",
            "env=chess",
            "env=grassland\nd=0.1\nepsilon=0.2",
            "d=0.3",
            "transport=udp",
            "M=0",
            "batch=2\nbuffer=1",
        ] {
            assert!(matches!(RunConfig::parse(text), Err(CliError::Config(_))), "{text:?} accepted");
        }
    }

    #[test]
    fn echo_round_trips() {
        for text in ["", "env=adversarial_battle\nM=12\nd=0.3\nepsilon=0.1\nruns=3\nbench_sizes=6,12", "algorithm=maddpg\ntransport=tcp\ngamma=0.9"] {
            let c = RunConfig::parse(text).unwrap();
            assert_eq!(RunConfig::parse(&c.to_string()).unwrap(), c);
        }
    }

    #[test]
    fn seeds_count_up() {
        let c = RunConfig::parse("seed=5\nruns=3").unwrap();
        assert_eq!(c.seeds(), vec![5, 6, 7]);
    }
}
