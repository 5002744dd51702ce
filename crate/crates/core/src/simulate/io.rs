//! Persistence of trajectory batches.
//!
//! # CSV
//!
//! Long format with header `replica,t,series,index,value`. `series` is one
//! of `X` (named position, index = name), `Y` (ranked position, index =
//! rank), `Z` (gap, index = lower rank) or `L` (cumulative local time,
//! index = gap). Floats use Rust's shortest round-trip formatting.
//!
//! # Binary frames
//!
//! All integers and floats little-endian.
//!
//! ```text
//! header   "RKFL"  u16 version (=1)
//!          f64 dt  f64 horizon  u64 replicas  u64 seed  u64 record_stride
//! replica  u64 index  f64 max_complementarity
//!          u32 abort_len  [abort_len bytes UTF-8]   (0 = not aborted)
//!          u64 frame_count
//! frame    u64 step  f64 t  i64 m  i64 n  u8 flags (bit 0: local time)
//!          P = n - m + 1
//!          i64[P] names  f64[P] x  i64[P] rank_names  f64[P] y
//!          f64[P-1] z  [f64[P-1] local_time if flagged]
//! ```
//!
//! Absorption events are not part of the frame file; they are written as
//! JSON lines, one event per line.

use std::io::{self, Write};

use super::adaptive::AbsorptionEvent;
use super::{Frame, ReplicaPath, SimConfig, SimError, TrajectoryBatch};
use crate::model::Window;

pub const MAGIC: &[u8; 4] = b"RKFL";
pub const VERSION: u16 = 1;

pub fn write_csv<W: Write>(batch: &TrajectoryBatch, mut out: W) -> io::Result<()> {
    writeln!(out, "replica,t,series,index,value")?;
    for r in &batch.replicas {
        for f in &r.frames {
            let id = r.replica;
            let t = f.t;
            for (n, v) in f.names.iter().zip(&f.x) {
                writeln!(out, "{id},{t:?},X,{n},{v:?}")?;
            }
            for (k, v) in (f.window.m..).zip(&f.y) {
                writeln!(out, "{id},{t:?},Y,{k},{v:?}")?;
            }
            for (k, v) in (f.window.m..).zip(&f.z) {
                writeln!(out, "{id},{t:?},Z,{k},{v:?}")?;
            }
            if let Some(l) = &f.local_time {
                for (k, v) in (f.window.m..).zip(l) {
                    writeln!(out, "{id},{t:?},L,{k},{v:?}")?;
                }
            }
        }
    }
    Ok(())
}

pub fn csv_string(batch: &TrajectoryBatch) -> String {
    let mut buf = Vec::new();
    write_csv(batch, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("CSV is ASCII")
}

pub fn write_events_jsonl<'a, W: Write>(
    events: impl IntoIterator<Item = &'a AbsorptionEvent>,
    mut out: W,
) -> io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_events_jsonl(text: &str) -> Result<Vec<AbsorptionEvent>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

pub fn to_binary(batch: &TrajectoryBatch) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(MAGIC);
    b.extend_from_slice(&VERSION.to_le_bytes());
    let c = &batch.config;
    b.extend_from_slice(&c.dt.to_le_bytes());
    b.extend_from_slice(&c.horizon.to_le_bytes());
    b.extend_from_slice(&(c.replicas as u64).to_le_bytes());
    b.extend_from_slice(&c.seed.to_le_bytes());
    b.extend_from_slice(&c.record_stride.to_le_bytes());
    for r in &batch.replicas {
        b.extend_from_slice(&r.replica.to_le_bytes());
        b.extend_from_slice(&r.max_complementarity.to_le_bytes());
        let msg = r.aborted.as_deref().unwrap_or("").as_bytes();
        b.extend_from_slice(&(msg.len() as u32).to_le_bytes());
        b.extend_from_slice(msg);
        b.extend_from_slice(&(r.frames.len() as u64).to_le_bytes());
        for f in &r.frames {
            b.extend_from_slice(&f.step.to_le_bytes());
            b.extend_from_slice(&f.t.to_le_bytes());
            b.extend_from_slice(&f.window.m.to_le_bytes());
            b.extend_from_slice(&f.window.n.to_le_bytes());
            b.push(u8::from(f.local_time.is_some()));
            f.names.iter().for_each(|v| b.extend_from_slice(&v.to_le_bytes()));
            f.x.iter().for_each(|v| b.extend_from_slice(&v.to_le_bytes()));
            f.rank_names.iter().for_each(|v| b.extend_from_slice(&v.to_le_bytes()));
            f.y.iter().for_each(|v| b.extend_from_slice(&v.to_le_bytes()));
            f.z.iter().for_each(|v| b.extend_from_slice(&v.to_le_bytes()));
            if let Some(l) = &f.local_time {
                l.iter().for_each(|v| b.extend_from_slice(&v.to_le_bytes()));
            }
        }
    }
    b
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SimError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| SimError::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], SimError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, SimError> {
        Ok(self.array::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16, SimError> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32, SimError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, SimError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn i64(&mut self) -> Result<i64, SimError> {
        Ok(i64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64, SimError> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn i64s(&mut self, n: usize) -> Result<Vec<i64>, SimError> {
        (0..n).map(|_| self.i64()).collect()
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, SimError> {
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn from_binary(bytes: &[u8]) -> Result<TrajectoryBatch, SimError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(SimError::Format("bad magic".into()));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(SimError::Format(format!("unsupported version {version}")));
    }
    let config = SimConfig {
        dt: r.f64()?,
        horizon: r.f64()?,
        replicas: r.u64()? as usize,
        seed: r.u64()?,
        record_stride: r.u64()?,
    };
    let mut replicas = Vec::new();
    while r.pos < bytes.len() {
        let replica = r.u64()?;
        let max_complementarity = r.f64()?;
        let len = r.u32()? as usize;
        let msg = std::str::from_utf8(r.take(len)?)
            .map_err(|e| SimError::Format(e.to_string()))?;
        let aborted = (!msg.is_empty()).then(|| msg.to_string());
        let count = r.u64()?;
        let mut frames = Vec::new();
        for _ in 0..count {
            let step = r.u64()?;
            let t = r.f64()?;
            let (m, n) = (r.i64()?, r.i64()?);
            let window = Window::new(m, n).map_err(|e| SimError::Format(e.to_string()))?;
            let flags = r.u8()?;
            let p = window.particles();
            frames.push(Frame {
                step,
                t,
                window,
                names: r.i64s(p)?,
                x: r.f64s(p)?,
                rank_names: r.i64s(p)?,
                y: r.f64s(p)?,
                z: r.f64s(p - 1)?,
                local_time: if flags & 1 == 1 { Some(r.f64s(p - 1)?) } else { None },
            });
        }
        replicas.push(ReplicaPath {
            replica,
            frames,
            aborted,
            events: Vec::new(),
            max_complementarity,
        });
    }
    Ok(TrajectoryBatch { config, replicas })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Configuration, GapVector};
    use crate::simulate::{simulate_gap_srbm, simulate_named_finite, NoiseStream, Side};

    #[test]
    fn csv_layout() {
        let x0 = Configuration::consecutive(1, vec![0.0, 5.0]);
        let cfg = SimConfig::new(0.5, 0.5, 1, 0);
        let b = simulate_named_finite(&[1.0, 0.0], &[1.0, 1.0], &x0, &cfg, &NoiseStream::scripted())
            .unwrap();
        let text = csv_string(&b);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "replica,t,series,index,value");
        assert_eq!(lines.len(), 1 + 2 * 5);
        assert!(lines.contains(&"0,0.5,X,1,0.5"));
        assert!(lines.contains(&"0,0.5,Z,1,4.5"));
    }

    #[test]
    fn binary_round_trip() {
        let z0 = GapVector::new(Window::new(1, 3).unwrap(), vec![0.2, 0.0]).unwrap();
        let cfg = SimConfig::new(0.01, 0.5, 2, 9).with_stride(7);
        let mut b = simulate_gap_srbm(&[1.0, 0.0, -1.0], &[1.0; 3], &z0, &cfg, &NoiseStream::counter(9))
            .unwrap();
        b.replicas[1].aborted = Some("stopped".into());
        let bytes = to_binary(&b);
        assert_eq!(&bytes[..4], b"RKFL");
        assert_eq!(from_binary(&bytes).unwrap(), b);
        assert!(from_binary(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(from_binary(&bad).is_err());
    }

    #[test]
    fn events_round_trip() {
        let e = AbsorptionEvent {
            replica: 2,
            step: 10,
            t: 0.1,
            name: -7,
            side: Side::Lower,
            window: Window::new(-7, 5).unwrap(),
        };
        let mut buf = Vec::new();
        write_events_jsonl([&e, &e], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.contains("\"side\":\"lower\""));
        assert_eq!(read_events_jsonl(&text).unwrap(), vec![e, e]);
    }
}
