use std::collections::VecDeque;
use std::net::TcpListener;
use std::sync::{Arc, Mutex};

use super::*;
use crate::envs::{Env, EnvConfig, EnvKind};
use crate::learner::{init_policies, Learner, TrainConfig};
use crate::proximity::AgentId;

#[derive(Clone, Debug, PartialEq)]
enum Logged {
    Sent { agent: AgentId, iteration: u64 },
    Received { agent: AgentId, iteration: u64 },
}

/// Wraps a transport, logging traffic and optionally repeating or
/// swallowing one agent's updates.
struct Recorder<T> {
    inner: T,
    log: Arc<Mutex<Vec<Logged>>>,
    payloads: Vec<Arc<ParamMsg>>,
    repeat: Option<AgentId>,
    swallow: Option<AgentId>,
    pending: VecDeque<UpdateMsg>,
}

impl<T: Transport> Recorder<T> {
    fn new(inner: T) -> Self {
        Self { inner, log: Arc::default(), payloads: Vec::new(), repeat: None, swallow: None, pending: VecDeque::new() }
    }
}

impl<T: Transport> Transport for Recorder<T> {
    fn agents(&self) -> usize {
        self.inner.agents()
    }

    fn send_params(&mut self, agent: AgentId, msg: &Arc<ParamMsg>) -> crate::Result<()> {
        self.log.lock().unwrap().push(Logged::Sent { agent, iteration: msg.iteration });
        self.payloads.push(Arc::clone(msg));
        self.inner.send_params(agent, msg)
    }

    fn recv_update(&mut self, timeout: Duration) -> crate::Result<Option<UpdateMsg>> {
        if let Some(u) = self.pending.pop_front() {
            return Ok(Some(u));
        }
        let deadline = Instant::now() + timeout;
        loop {
            let Some(u) = self.inner.recv_update(deadline.saturating_duration_since(Instant::now()))? else {
                return Ok(None);
            };
            if self.swallow == Some(u.agent) {
                continue;
            }
            self.log.lock().unwrap().push(Logged::Received { agent: u.agent, iteration: u.iteration });
            if self.repeat == Some(u.agent) {
                let mut copy = u.clone();
                copy.pair.online.layers[0].bias[0] += 1.0;
                self.pending.push_back(copy);
            }
            return Ok(Some(u));
        }
    }

    fn shutdown(&mut self, iteration: u64) -> crate::Result<()> {
        self.inner.shutdown(iteration)
    }
}

fn ising(m: usize) -> Arc<Env> {
    Arc::new(Env::new(EnvConfig::new(EnvKind::Ising, m).unwrap()).unwrap())
}

fn setup(env: &Arc<Env>, seed: u64) -> (TrainConfig, PolicyTable, Vec<Learner>) {
    let mut cfg = TrainConfig::for_env(EnvKind::Ising, env.episode_length());
    cfg.seed = seed;
    cfg.hidden_width = 16;
    let table = init_policies(env.as_ref(), &cfg).unwrap();
    let learners = (0..env.agent_count()).map(|i| Learner::new(env.as_ref(), i, cfg.clone()).unwrap()).collect();
    (cfg, table, learners)
}

fn in_process(env: &Arc<Env>, learners: Vec<Learner>) -> InProcess {
    InProcess::spawn(Arc::clone(env) as Arc<dyn Environment>, learners).unwrap()
}

const WAIT: Duration = Duration::from_secs(60);

#[test]
fn broadcast_sends_identical_payloads() {
    let env = ising(2);
    let (_, table, learners) = setup(&env, 1);
    let mut c = Controller::new(Recorder::new(in_process(&env, learners)), table.clone(), WAIT).unwrap();
    c.broadcast_params().unwrap();
    let sent = &c.transport.payloads;
    assert_eq!(sent.len(), 2);
    assert_eq!(sent[0], sent[1]);
    assert_eq!(sent[0].table, table);
    c.collect_updates().unwrap();
    c.finish().unwrap();
}

#[test]
fn every_learner_reports_and_the_barrier_holds() {
    let env = ising(3);
    let (_, table, learners) = setup(&env, 2);
    let mut c = Controller::new(Recorder::new(in_process(&env, learners)), table.clone(), WAIT).unwrap();
    let log = Arc::clone(&c.transport.log);
    for _ in 0..3 {
        c.step().unwrap();
    }
    assert_eq!(c.iteration(), 3);
    assert!(c.table().pairs.iter().zip(&table.pairs).all(|(a, b)| a != b));
    let log = log.lock().unwrap().clone();
    for k in 0..3u64 {
        let block = &log[(6 * k) as usize..(6 * k + 6) as usize];
        assert!(block[..3].iter().all(|e| matches!(e, Logged::Sent { iteration, .. } if *iteration == k)));
        assert!(block[3..].iter().all(|e| matches!(e, Logged::Received { iteration, .. } if *iteration == k)));
    }
    c.finish().unwrap();
}

#[test]
fn duplicate_updates_install_once() {
    let env = ising(3);
    let (_, table, learners) = setup(&env, 3);
    let (_, _, reference) = setup(&env, 3);
    let mut rec = Recorder::new(in_process(&env, learners));
    rec.repeat = Some(1);
    let mut c = Controller::new(rec, table.clone(), WAIT).unwrap();
    c.step().unwrap();
    c.step().unwrap();
    let mut plain = Controller::new(in_process(&env, reference), table, WAIT).unwrap();
    plain.step().unwrap();
    plain.step().unwrap();
    assert_eq!(c.table(), plain.table());
}

#[test]
fn silent_learner_times_out_by_name() {
    let env = ising(3);
    let (_, table, learners) = setup(&env, 4);
    let mut rec = Recorder::new(in_process(&env, learners));
    rec.swallow = Some(2);
    let mut c = Controller::new(rec, table, Duration::from_millis(500)).unwrap();
    match c.step() {
        Err(Error::Timeout { missing }) => assert_eq!(missing, vec![2]),
        other => panic!("expected a timeout, got {other:?}"),
    }
}

#[test]
fn zero_iterations_yield_no_rows() {
    let env = ising(2);
    let (_, table, learners) = setup(&env, 5);
    let mut c = Controller::new(in_process(&env, learners), table.clone(), WAIT).unwrap();
    let rows = run_training(env.as_ref(), &mut c, &TrainingOptions::new(0, 0), &mut |_| {}).unwrap();
    assert!(rows.is_empty());
    assert_eq!(c.finish().unwrap(), table);
}

#[test]
fn rows_follow_the_evaluation_cadence() {
    let env = ising(2);
    let (_, table, learners) = setup(&env, 6);
    let mut c = Controller::new(in_process(&env, learners), table, WAIT).unwrap();
    let mut opts = TrainingOptions::new(6, 0);
    opts.eval_every = 2;
    opts.eval_episodes = 2;
    let mut seen = 0;
    let rows = run_training(env.as_ref(), &mut c, &opts, &mut |_| seen += 1).unwrap();
    assert_eq!(rows.iter().map(|r| r.iteration).collect::<Vec<_>>(), vec![2, 4, 6]);
    assert_eq!(seen, 3);
    assert!(rows.windows(2).all(|w| w[1].seconds >= w[0].seconds));
    assert!(rows.iter().all(|r| r.collect_s >= 0.0 && r.update_s >= 0.0));
}

#[test]
fn tcp_matches_in_process_bit_for_bit() {
    let env = ising(2);
    let (_, table, learners) = setup(&env, 7);
    let mut local = Controller::new(in_process(&env, learners), table.clone(), WAIT).unwrap();
    for _ in 0..5 {
        local.step().unwrap();
    }
    let local = local.finish().unwrap();

    let (_, _, learners) = setup(&env, 7);
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let handles = spawn_tcp_learners(addr, Arc::clone(&env) as Arc<dyn Environment>, learners, WAIT).unwrap();
    let transport = TcpTransport::accept(&listener, 2, WAIT).unwrap();
    let mut remote = Controller::new(transport, table, WAIT).unwrap();
    for _ in 0..5 {
        remote.step().unwrap();
    }
    let remote = remote.finish().unwrap();
    for h in handles {
        h.join().unwrap().unwrap();
    }
    assert_eq!(local, remote);
}

#[test]
fn controller_rejects_mismatched_team() {
    let env = ising(2);
    let (_, table, mut learners) = setup(&env, 8);
    learners.pop();
    let t = in_process(&env, learners);
    assert!(Controller::new(t, table, WAIT).is_err());
}
