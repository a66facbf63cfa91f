//! Framed binary protocol between the controller and learners.
//!
//! Every frame is `u32 length | u16 version | u8 kind | u32 iteration`,
//! followed by a kind-specific body. All integers and floats are little
//! endian; `length` counts the bytes after itself. A network is written as
//! `u32 layers | u8 head | f64 head param a | f64 head param b`, then per
//! layer `u32 rows | u32 cols`, then each layer's weights (row-major) and
//! biases as raw `f64`, so parameters cross the wire bit for bit.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::learner::{PolicyPair, PolicyTable};
use crate::nn::{Dense, Head, Mlp};
use crate::proximity::AgentId;

pub const PROTOCOL_VERSION: u16 = 1;
/// Frames larger than this are rejected before allocation.
pub const MAX_FRAME: usize = 1 << 30;

const HEARTBEAT: u8 = 0;
const PARAMS: u8 = 1;
const UPDATE: u8 = 2;
const SHUTDOWN: u8 = 3;
const HELLO: u8 = 4;

/// Controller to learners: every agent's policy pair for one iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamMsg {
    pub iteration: u64,
    pub table: PolicyTable,
}

/// Learner to controller: one agent's updated policy pair. Critic
/// parameters have no place in any message.
#[derive(Clone, Debug, PartialEq)]
pub struct UpdateMsg {
    pub iteration: u64,
    pub agent: AgentId,
    pub pair: PolicyPair,
    pub collect_s: f64,
    pub update_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    Heartbeat { iteration: u64 },
    Params(ParamMsg),
    Update(UpdateMsg),
    Shutdown { iteration: u64 },
    /// First frame on a learner connection, naming its agent.
    Hello { agent: AgentId },
}

fn u32_of(v: u64, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Protocol(format!("{what} {v} does not fit the frame header")))
}

fn put_net(out: &mut Vec<u8>, net: &Mlp) -> Result<()> {
    out.extend(u32_of(net.layers.len() as u64, "layer count")?.to_le_bytes());
    let (tag, a, b) = match net.head {
        Head::Linear => (0u8, 0.0, 0.0),
        Head::Tanh { low, high } => (1, low, high),
        Head::Softmax { temperature } => (2, temperature, 0.0),
    };
    out.push(tag);
    out.extend(a.to_le_bytes());
    out.extend(b.to_le_bytes());
    for l in &net.layers {
        out.extend(u32_of(l.rows as u64, "rows")?.to_le_bytes());
        out.extend(u32_of(l.cols as u64, "cols")?.to_le_bytes());
    }
    for l in &net.layers {
        l.weights.iter().chain(&l.bias).for_each(|v| out.extend(v.to_le_bytes()));
    }
    Ok(())
}

/// Serializes a message into one complete frame.
pub fn encode(msg: &Message) -> Result<Vec<u8>> {
    let mut out = vec![0u8; 4];
    out.extend(PROTOCOL_VERSION.to_le_bytes());
    let (kind, iteration) = match msg {
        Message::Heartbeat { iteration } => (HEARTBEAT, *iteration),
        Message::Params(p) => (PARAMS, p.iteration),
        Message::Update(u) => (UPDATE, u.iteration),
        Message::Shutdown { iteration } => (SHUTDOWN, *iteration),
        Message::Hello { .. } => (HELLO, 0),
    };
    out.push(kind);
    out.extend(u32_of(iteration, "iteration")?.to_le_bytes());
    match msg {
        Message::Heartbeat { .. } | Message::Shutdown { .. } => {}
        Message::Hello { agent } => out.extend(u32_of(*agent as u64, "agent")?.to_le_bytes()),
        Message::Params(p) => {
            out.extend(u32_of(p.table.len() as u64, "agent count")?.to_le_bytes());
            for pair in &p.table.pairs {
                put_net(&mut out, &pair.online)?;
                put_net(&mut out, &pair.target)?;
            }
        }
        Message::Update(u) => {
            out.extend(u32_of(u.agent as u64, "agent")?.to_le_bytes());
            put_net(&mut out, &u.pair.online)?;
            put_net(&mut out, &u.pair.target)?;
            out.extend(u.collect_s.to_le_bytes());
            out.extend(u.update_s.to_le_bytes());
        }
    }
    let len = out.len() - 4;
    if len > MAX_FRAME {
        return Err(Error::Protocol(format!("frame of {len} bytes exceeds the limit")));
    }
    out[..4].copy_from_slice(&(len as u32).to_le_bytes());
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Protocol("truncated frame".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("two bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("eight bytes")))
    }

    fn net(&mut self) -> Result<Mlp> {
        let n = self.u32()? as usize;
        let (tag, a, b) = (self.u8()?, self.f64()?, self.f64()?);
        let head = match tag {
            0 => Head::Linear,
            1 => Head::Tanh { low: a, high: b },
            2 => Head::Softmax { temperature: a },
            t => return Err(Error::Protocol(format!("unknown output head {t}"))),
        };
        if n == 0 || n.saturating_mul(8) > self.buf.len() - self.pos {
            return Err(Error::Protocol(format!("implausible layer count {n}")));
        }
        let mut shapes = Vec::with_capacity(n);
        for _ in 0..n {
            shapes.push((self.u32()? as usize, self.u32()? as usize));
        }
        let mut layers = Vec::with_capacity(n);
        for (k, &(rows, cols)) in shapes.iter().enumerate() {
            if k > 0 && cols != shapes[k - 1].0 {
                return Err(Error::Protocol("layer shapes do not chain".into()));
            }
            let count = rows.checked_mul(cols).and_then(|w| w.checked_add(rows));
            let bytes = count.and_then(|c| c.checked_mul(8)).filter(|&b| b <= self.buf.len() - self.pos);
            if bytes.is_none() || rows == 0 || cols == 0 {
                return Err(Error::Protocol(format!("bad layer shape {rows}x{cols}")));
            }
            let weights = (0..rows * cols).map(|_| self.f64()).collect::<Result<_>>()?;
            let bias = (0..rows).map(|_| self.f64()).collect::<Result<_>>()?;
            layers.push(Dense { rows, cols, weights, bias });
        }
        Ok(Mlp { layers, head })
    }

    fn pair(&mut self) -> Result<PolicyPair> {
        let online = self.net()?;
        let target = self.net()?;
        if !online.same_shape(&target) {
            return Err(Error::Protocol("policy and target shapes differ".into()));
        }
        Ok(PolicyPair { online, target })
    }
}

/// Parses a frame body (everything after the length prefix).
pub fn decode_body(body: &[u8]) -> Result<Message> {
    let mut c = Cursor { buf: body, pos: 0 };
    let version = c.u16()?;
    if version != PROTOCOL_VERSION {
        return Err(Error::Protocol(format!("protocol version {version}, expected {PROTOCOL_VERSION}")));
    }
    let kind = c.u8()?;
    let iteration = u64::from(c.u32()?);
    let msg = match kind {
        HEARTBEAT => Message::Heartbeat { iteration },
        SHUTDOWN => Message::Shutdown { iteration },
        HELLO => Message::Hello { agent: c.u32()? as AgentId },
        PARAMS => {
            let m = c.u32()? as usize;
            if m.saturating_mul(2) > body.len() {
                return Err(Error::Protocol(format!("implausible agent count {m}")));
            }
            let pairs = (0..m).map(|_| c.pair()).collect::<Result<_>>()?;
            Message::Params(ParamMsg { iteration, table: PolicyTable { pairs } })
        }
        UPDATE => {
            let agent = c.u32()? as AgentId;
            let pair = c.pair()?;
            let (collect_s, update_s) = (c.f64()?, c.f64()?);
            Message::Update(UpdateMsg { iteration, agent, pair, collect_s, update_s })
        }
        k => return Err(Error::Protocol(format!("unknown message kind {k}"))),
    };
    if c.pos != body.len() {
        return Err(Error::Protocol(format!("{} trailing bytes in frame", body.len() - c.pos)));
    }
    Ok(msg)
}

/// Parses one complete frame including its length prefix.
pub fn decode(frame: &[u8]) -> Result<Message> {
    if frame.len() < 4 {
        return Err(Error::Protocol("frame shorter than its length prefix".into()));
    }
    let len = u32::from_le_bytes(frame[..4].try_into().expect("four bytes")) as usize;
    if len != frame.len() - 4 {
        return Err(Error::Protocol(format!("length prefix {len} but {} body bytes", frame.len() - 4)));
    }
    decode_body(&frame[4..])
}

/// Reads one frame. `Ok(None)` means the peer closed the stream cleanly
/// between frames.
pub fn read_frame(r: &mut impl Read) -> Result<Option<Message>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_le_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(Error::Protocol(format!("frame of {len} bytes exceeds the limit")));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    decode_body(&body).map(Some)
}

pub fn write_frame(w: &mut impl Write, msg: &Message) -> Result<()> {
    w.write_all(&encode(msg)?)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::stream;

    fn net(seed: u64, head: Head) -> Mlp {
        Mlp::new(&[3, 4, 2], head, &mut stream(seed, 0, 0)).unwrap()
    }

    fn pair(seed: u64) -> PolicyPair {
        PolicyPair { online: net(seed, Head::Softmax { temperature: 1.0 }), target: net(seed + 1, Head::Softmax { temperature: 1.0 }) }
    }

    fn samples() -> Vec<Message> {
        vec![
            Message::Heartbeat { iteration: 3 },
            Message::Shutdown { iteration: 9 },
            Message::Hello { agent: 4 },
            Message::Params(ParamMsg { iteration: 7, table: PolicyTable { pairs: vec![pair(1), pair(3)] } }),
            Message::Update(UpdateMsg { iteration: 7, agent: 1, pair: pair(5), collect_s: 0.25, update_s: 1e-3 }),
            Message::Update(UpdateMsg {
                iteration: 0,
                agent: 0,
                pair: PolicyPair { online: net(9, Head::Tanh { low: -1.0, high: 1.0 }), target: net(9, Head::Tanh { low: -1.0, high: 1.0 }) },
                collect_s: 0.0,
                update_s: 0.0,
            }),
        ]
    }

    #[test]
    fn round_trip_is_exact() {
        for msg in samples() {
            let bytes = encode(&msg).unwrap();
            assert_eq!(decode(&bytes).unwrap(), msg);
            assert_eq!(read_frame(&mut bytes.as_slice()).unwrap(), Some(msg));
        }
        assert_eq!(read_frame(&mut [].as_slice()).unwrap(), None);
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&Message::Update(UpdateMsg { iteration: 258, agent: 3, pair: pair(1), collect_s: 0.0, update_s: 0.0 })).unwrap();
        assert_eq!(u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize, bytes.len() - 4);
        assert_eq!(&bytes[4..6], &PROTOCOL_VERSION.to_le_bytes());
        assert_eq!(bytes[6], UPDATE);
        assert_eq!(&bytes[7..11], &[2, 1, 0, 0]);
        assert_eq!(&bytes[11..15], &[3, 0, 0, 0]);
    }

    #[test]
    fn rejects_bad_frames() {
        let good = encode(&samples()[3]).unwrap();
        let mut wrong_version = good.clone();
        wrong_version[4] = 99;
        assert!(matches!(decode(&wrong_version), Err(Error::Protocol(m)) if m.contains("version")));
        let mut unknown = good.clone();
        unknown[6] = 42;
        assert!(decode(&unknown).is_err());
        for cut in [5, 11, 20, good.len() - 1] {
            let mut short = good[..cut].to_vec();
            let len = (short.len() - 4) as u32;
            short[..4].copy_from_slice(&len.to_le_bytes());
            assert!(decode(&short).is_err(), "cut at {cut}");
        }
        let mut trailing = good.clone();
        trailing.push(0);
        let len = (trailing.len() - 4) as u32;
        trailing[..4].copy_from_slice(&len.to_le_bytes());
        assert!(decode(&trailing).is_err());
    }

    #[test]
    fn oversized_iteration_is_refused() {
        assert!(encode(&Message::Heartbeat { iteration: u64::from(u32::MAX) + 1 }).is_err());
    }
}
