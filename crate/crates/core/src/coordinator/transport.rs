//! Channels between the controller and its learners.

use std::io::{BufReader, BufWriter, Write};
use std::net::{Shutdown, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use super::wire::{self, Message, ParamMsg, UpdateMsg};
use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::learner::Learner;
use crate::proximity::AgentId;

/// Liveness ping period on TCP links.
pub const HEARTBEAT_INTERVAL: Duration = Duration::from_secs(5);

/// Controller side of a reliable, ordered, framed channel to each learner.
pub trait Transport {
    fn agents(&self) -> usize;
    fn send_params(&mut self, agent: AgentId, msg: &Arc<ParamMsg>) -> Result<()>;
    /// Next update from any learner; `Ok(None)` when `timeout` elapses first.
    fn recv_update(&mut self, timeout: Duration) -> Result<Option<UpdateMsg>>;
    /// Tells every learner to stop and releases the channels.
    fn shutdown(&mut self, iteration: u64) -> Result<()>;
}

enum Event {
    Update(UpdateMsg),
    Failed { agent: AgentId, reason: String },
}

fn next_event(events: &Receiver<Event>, timeout: Duration) -> Result<Option<UpdateMsg>> {
    match events.recv_timeout(timeout) {
        Ok(Event::Update(u)) => Ok(Some(u)),
        Ok(Event::Failed { agent, reason }) => Err(Error::Transport(format!("learner {agent}: {reason}"))),
        Err(RecvTimeoutError::Timeout) => Ok(None),
        Err(RecvTimeoutError::Disconnected) => Err(Error::Transport("every learner channel closed".into())),
    }
}

fn check_team(learners: &[Learner]) -> Result<()> {
    for (k, l) in learners.iter().enumerate() {
        if l.agent() != k {
            return Err(Error::InvalidArgument(format!("learner {k} trains agent {}; expected one learner per agent in order", l.agent())));
        }
    }
    Ok(())
}

enum Command {
    Params(Arc<ParamMsg>),
    Shutdown,
}

/// One thread per learner; parameters are shared by reference, never
/// copied or serialized.
pub struct InProcess {
    commands: Vec<Sender<Command>>,
    events: Receiver<Event>,
    handles: Vec<JoinHandle<()>>,
}

impl InProcess {
    /// `learners[k]` must train agent `k`.
    pub fn spawn(env: Arc<dyn Environment>, learners: Vec<Learner>) -> Result<Self> {
        check_team(&learners)?;
        let (event_tx, events) = mpsc::channel();
        let mut commands = Vec::with_capacity(learners.len());
        let mut handles = Vec::with_capacity(learners.len());
        for mut learner in learners {
            let (tx, rx) = mpsc::channel::<Command>();
            let (env, out) = (Arc::clone(&env), event_tx.clone());
            let agent = learner.agent();
            let handle = thread::Builder::new().name(format!("learner-{agent}")).spawn(move || {
                while let Ok(Command::Params(msg)) = rx.recv() {
                    let event = match learner.run_iteration(env.as_ref(), &msg.table, msg.iteration) {
                        Ok(u) => Event::Update(update_msg(u)),
                        Err(e) => Event::Failed { agent, reason: e.to_string() },
                    };
                    if out.send(event).is_err() {
                        break;
                    }
                }
            })?;
            commands.push(tx);
            handles.push(handle);
        }
        Ok(Self { commands, events, handles })
    }
}

fn update_msg(u: crate::learner::LearnerUpdate) -> UpdateMsg {
    UpdateMsg { iteration: u.iteration, agent: u.agent, pair: u.pair, collect_s: u.collect_s, update_s: u.update_s }
}

impl Transport for InProcess {
    fn agents(&self) -> usize {
        self.commands.len()
    }

    fn send_params(&mut self, agent: AgentId, msg: &Arc<ParamMsg>) -> Result<()> {
        let tx = self.commands.get(agent).ok_or(Error::InvalidAgent { id: agent, count: self.commands.len() })?;
        tx.send(Command::Params(Arc::clone(msg)))
            .map_err(|_| Error::Transport(format!("learner {agent} thread has exited")))
    }

    fn recv_update(&mut self, timeout: Duration) -> Result<Option<UpdateMsg>> {
        next_event(&self.events, timeout)
    }

    fn shutdown(&mut self, _iteration: u64) -> Result<()> {
        for tx in &self.commands {
            let _ = tx.send(Command::Shutdown);
        }
        for h in self.handles.drain(..) {
            h.join().map_err(|_| Error::Transport("learner thread panicked".into()))?;
        }
        Ok(())
    }
}

impl Drop for InProcess {
    fn drop(&mut self) {
        let _ = self.shutdown(0);
    }
}

type Writer = Arc<Mutex<BufWriter<TcpStream>>>;

fn send_on(writer: &Writer, bytes: &[u8]) -> Result<()> {
    let mut w = writer.lock().map_err(|_| Error::Transport("writer lock poisoned".into()))?;
    w.write_all(bytes)?;
    w.flush()?;
    Ok(())
}

/// Sends a heartbeat on every writer each [`HEARTBEAT_INTERVAL`] until
/// `stop` is raised.
fn heartbeat(writers: Vec<Writer>, stop: Arc<AtomicBool>) -> Result<JoinHandle<()>> {
    let frame = wire::encode(&Message::Heartbeat { iteration: 0 })?;
    Ok(thread::Builder::new().name("heartbeat".into()).spawn(move || {
        let tick = Duration::from_millis(50);
        let mut last = Instant::now();
        while !stop.load(Ordering::Relaxed) {
            thread::sleep(tick);
            if last.elapsed() >= HEARTBEAT_INTERVAL {
                last = Instant::now();
                for w in &writers {
                    let _ = send_on(w, &frame);
                }
            }
        }
    })?)
}

/// Controller end of TCP links, one connection per learner.
pub struct TcpTransport {
    writers: Vec<Writer>,
    streams: Vec<TcpStream>,
    events: Receiver<Event>,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
    /// Encoded frame of the last broadcast, reused for every learner.
    cached: Option<(u64, Arc<Vec<u8>>)>,
}

impl TcpTransport {
    /// Waits until `agents` learners have connected and introduced
    /// themselves, or fails after `timeout`.
    pub fn accept(listener: &TcpListener, agents: usize, timeout: Duration) -> Result<Self> {
        listener.set_nonblocking(true)?;
        let deadline = Instant::now() + timeout;
        let mut slots: Vec<Option<TcpStream>> = (0..agents).map(|_| None).collect();
        let mut joined = 0;
        while joined < agents {
            match listener.accept() {
                Ok((stream, _)) => {
                    stream.set_nonblocking(false)?;
                    stream.set_nodelay(true)?;
                    stream.set_read_timeout(Some(deadline.saturating_duration_since(Instant::now()).max(Duration::from_millis(10))))?;
                    let hello = wire::read_frame(&mut &stream)?;
                    stream.set_read_timeout(None)?;
                    let Some(Message::Hello { agent }) = hello else {
                        return Err(Error::Protocol("first frame from a learner must be a hello".into()));
                    };
                    match slots.get_mut(agent) {
                        Some(slot @ None) => {
                            *slot = Some(stream);
                            joined += 1;
                        }
                        Some(Some(_)) => return Err(Error::Protocol(format!("agent {agent} connected twice"))),
                        None => return Err(Error::InvalidAgent { id: agent, count: agents }),
                    }
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    if Instant::now() >= deadline {
                        let missing = (0..agents).filter(|&k| slots[k].is_none()).collect();
                        return Err(Error::Timeout { missing });
                    }
                    thread::sleep(Duration::from_millis(5));
                }
                Err(e) => return Err(e.into()),
            }
        }
        listener.set_nonblocking(false)?;

        let streams: Vec<TcpStream> = slots.into_iter().map(|s| s.expect("every slot joined")).collect();
        let stop = Arc::new(AtomicBool::new(false));
        let (tx, events) = mpsc::channel();
        let mut writers = Vec::with_capacity(agents);
        let mut threads = Vec::with_capacity(agents + 1);
        for (agent, stream) in streams.iter().enumerate() {
            writers.push(Arc::new(Mutex::new(BufWriter::new(stream.try_clone()?))));
            let mut reader = BufReader::new(stream.try_clone()?);
            let (tx, stop) = (tx.clone(), Arc::clone(&stop));
            threads.push(thread::Builder::new().name(format!("link-{agent}")).spawn(move || loop {
                let event = match wire::read_frame(&mut reader) {
                    Ok(Some(Message::Update(u))) if u.agent == agent => Event::Update(u),
                    Ok(Some(Message::Update(u))) => {
                        Event::Failed { agent, reason: format!("sent an update for agent {}", u.agent) }
                    }
                    Ok(Some(Message::Heartbeat { .. })) => continue,
                    Ok(Some(other)) => Event::Failed { agent, reason: format!("unexpected message {other:?}") },
                    Ok(None) => Event::Failed { agent, reason: "connection closed".into() },
                    Err(e) => Event::Failed { agent, reason: e.to_string() },
                };
                let fatal = matches!(event, Event::Failed { .. });
                if fatal && stop.load(Ordering::Relaxed) {
                    return;
                }
                if tx.send(event).is_err() || fatal {
                    return;
                }
            })?);
        }
        threads.push(heartbeat(writers.clone(), Arc::clone(&stop))?);
        Ok(Self { writers, streams, events, stop, threads, cached: None })
    }
}

impl Transport for TcpTransport {
    fn agents(&self) -> usize {
        self.writers.len()
    }

    fn send_params(&mut self, agent: AgentId, msg: &Arc<ParamMsg>) -> Result<()> {
        let writer = self.writers.get(agent).ok_or(Error::InvalidAgent { id: agent, count: self.writers.len() })?;
        let bytes = match &self.cached {
            Some((k, bytes)) if *k == msg.iteration => Arc::clone(bytes),
            _ => {
                let bytes = Arc::new(wire::encode(&Message::Params(msg.as_ref().clone()))?);
                self.cached = Some((msg.iteration, Arc::clone(&bytes)));
                bytes
            }
        };
        send_on(writer, &bytes)
    }

    fn recv_update(&mut self, timeout: Duration) -> Result<Option<UpdateMsg>> {
        next_event(&self.events, timeout)
    }

    fn shutdown(&mut self, iteration: u64) -> Result<()> {
        if self.stop.swap(true, Ordering::Relaxed) {
            return Ok(());
        }
        let frame = wire::encode(&Message::Shutdown { iteration })?;
        for w in &self.writers {
            let _ = send_on(w, &frame);
        }
        for s in &self.streams {
            let _ = s.shutdown(Shutdown::Both);
        }
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
        Ok(())
    }
}

impl Drop for TcpTransport {
    fn drop(&mut self) {
        let _ = self.shutdown(0);
    }
}

/// Connects to a controller, retrying with exponential backoff until
/// `timeout`.
pub fn connect(addr: impl ToSocketAddrs + Clone, timeout: Duration) -> Result<TcpStream> {
    let deadline = Instant::now() + timeout;
    let mut wait = Duration::from_millis(10);
    loop {
        match TcpStream::connect(addr.clone()) {
            Ok(s) => {
                s.set_nodelay(true)?;
                return Ok(s);
            }
            Err(e) if Instant::now() + wait > deadline => return Err(Error::Transport(format!("cannot reach controller: {e}"))),
            Err(_) => {
                thread::sleep(wait);
                wait = (wait * 2).min(Duration::from_secs(1));
            }
        }
    }
}

/// Learner end of a TCP link: introduces itself, then answers every
/// parameter broadcast with its update until told to stop. Returns the
/// learner so callers can inspect its final state.
pub fn serve_learner(stream: TcpStream, env: &dyn Environment, mut learner: Learner) -> Result<Learner> {
    let agent = learner.agent();
    let writer: Writer = Arc::new(Mutex::new(BufWriter::new(stream.try_clone()?)));
    send_on(&writer, &wire::encode(&Message::Hello { agent })?)?;
    let stop = Arc::new(AtomicBool::new(false));
    let pinger = heartbeat(vec![Arc::clone(&writer)], Arc::clone(&stop))?;
    let mut reader = BufReader::new(stream);

    let outcome = (|| -> Result<()> {
        let mut last: Option<u64> = None;
        loop {
            match wire::read_frame(&mut reader)? {
                Some(Message::Params(msg)) => {
                    // A repeated broadcast of an iteration already served is
                    // ignored; its update has been sent.
                    if last.is_some_and(|k| msg.iteration <= k) {
                        continue;
                    }
                    let u = learner.run_iteration(env, &msg.table, msg.iteration)?;
                    last = Some(msg.iteration);
                    send_on(&writer, &wire::encode(&Message::Update(update_msg(u)))?)?;
                }
                Some(Message::Heartbeat { .. }) => {}
                Some(Message::Shutdown { .. }) | None => return Ok(()),
                Some(other) => return Err(Error::Protocol(format!("learner {agent} got unexpected {other:?}"))),
            }
        }
    })();
    stop.store(true, Ordering::Relaxed);
    let _ = pinger.join();
    outcome.map(|()| learner)
}

/// Runs each learner on its own thread over TCP to `addr`.
pub fn spawn_tcp_learners(
    addr: std::net::SocketAddr,
    env: Arc<dyn Environment>,
    learners: Vec<Learner>,
    connect_timeout: Duration,
) -> Result<Vec<JoinHandle<Result<Learner>>>> {
    check_team(&learners)?;
    learners
        .into_iter()
        .map(|learner| {
            let env = Arc::clone(&env);
            Ok(thread::Builder::new().name(format!("tcp-learner-{}", learner.agent())).spawn(move || {
                let stream = connect(addr, connect_timeout)?;
                serve_learner(stream, env.as_ref(), learner)
            })?)
        })
        .collect()
}
