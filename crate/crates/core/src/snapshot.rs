//! Binary state snapshots and evolution checkpoints.
//!
//! Snapshot layout: magic `CEPR1`, `N` as u64 LE, one representation tag
//! byte, then the amplitudes as interleaved LE f64 (re, im), row-major in
//! `p1`. Tags: `0x00`/`0x01` two-particle momentum/angle, `0x10`/`0x11`
//! one-particle momentum/angle.
//!
//! Checkpoints prepend `CEPRCK1` (full state) or `CEPRCK2` (rank-2 state),
//! the step index (u64 LE) and the accumulated `ln P` (f64 LE).

use std::io::{Read, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::schmidt::RankTwoState;
use crate::state::{OneParticleState, Representation, TwoParticleState};

const MAGIC: &[u8; 5] = b"CEPR1";
const CK_FULL: &[u8; 7] = b"CEPRCK1";
const CK_RANK2: &[u8; 7] = b"CEPRCK2";

fn tag(one_particle: bool, repr: Representation) -> u8 {
    let base = if one_particle { 0x10 } else { 0x00 };
    base | match repr {
        Representation::Momentum => 0,
        Representation::Angle => 1,
    }
}

fn untag(t: u8) -> Result<(bool, Representation)> {
    let repr = match t & 0x0f {
        0 => Representation::Momentum,
        1 => Representation::Angle,
        _ => return Err(Error::Snapshot(format!("unknown tag byte {t:#04x}"))),
    };
    match t & 0xf0 {
        0x00 => Ok((false, repr)),
        0x10 => Ok((true, repr)),
        _ => Err(Error::Snapshot(format!("unknown tag byte {t:#04x}"))),
    }
}

fn write_amps<W: Write>(w: &mut W, amps: &[Complex64]) -> Result<()> {
    let mut buf = Vec::with_capacity(amps.len() * 16);
    for a in amps {
        buf.extend_from_slice(&a.re.to_le_bytes());
        buf.extend_from_slice(&a.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

fn read_amps<R: Read>(r: &mut R, count: usize) -> Result<Vec<Complex64>> {
    let mut buf = vec![0u8; count * 16];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect())
}

fn read_header<R: Read>(r: &mut R) -> Result<(usize, bool, Representation)> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Snapshot("bad magic".into()));
    }
    let n = read_u64(r)?;
    if n == 0 || n > (1 << 20) {
        return Err(Error::Snapshot(format!("implausible size N = {n}")));
    }
    let mut t = [0u8; 1];
    r.read_exact(&mut t)?;
    let (one, repr) = untag(t[0])?;
    Ok((n as usize, one, repr))
}

pub fn write_two_particle<W: Write>(mut w: W, state: &TwoParticleState) -> Result<()> {
    if !state.is_square() {
        return Err(Error::UnsupportedShape {
            rows: state.rows(),
            cols: state.cols(),
            reason: "snapshots hold square grids",
        });
    }
    w.write_all(MAGIC)?;
    w.write_all(&(state.n() as u64).to_le_bytes())?;
    w.write_all(&[tag(false, state.representation())])?;
    write_amps(&mut w, state.amplitudes())
}

pub fn read_two_particle<R: Read>(mut r: R) -> Result<TwoParticleState> {
    let (n, one, repr) = read_header(&mut r)?;
    if one {
        return Err(Error::Snapshot("expected a two-particle snapshot".into()));
    }
    let amps = read_amps(&mut r, n * n)?;
    TwoParticleState::from_amplitudes(n, n, amps, repr)
}

pub fn write_one_particle<W: Write>(mut w: W, state: &OneParticleState) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(state.len() as u64).to_le_bytes())?;
    w.write_all(&[tag(true, state.repr)])?;
    write_amps(&mut w, &state.amps)
}

pub fn read_one_particle<R: Read>(mut r: R) -> Result<OneParticleState> {
    let (n, one, repr) = read_header(&mut r)?;
    if !one {
        return Err(Error::Snapshot("expected a one-particle snapshot".into()));
    }
    Ok(OneParticleState::from_amplitudes(read_amps(&mut r, n)?, repr))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub log_p: f64,
    pub state: TwoParticleState,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rank2Checkpoint {
    pub step: u64,
    pub log_p: f64,
    pub state: RankTwoState,
}

#[derive(Clone, Debug, PartialEq)]
pub enum AnyCheckpoint {
    Full(Checkpoint),
    RankTwo(Rank2Checkpoint),
}

pub fn write_checkpoint<W: Write>(mut w: W, c: &Checkpoint) -> Result<()> {
    w.write_all(CK_FULL)?;
    w.write_all(&c.step.to_le_bytes())?;
    w.write_all(&c.log_p.to_le_bytes())?;
    write_two_particle(w, &c.state)
}

/// Rank-2 body: `alpha1`, `alpha2`, then `u1, u2, v1, v2` as one-particle snapshots.
pub fn write_rank2_checkpoint<W: Write>(mut w: W, c: &Rank2Checkpoint) -> Result<()> {
    w.write_all(CK_RANK2)?;
    w.write_all(&c.step.to_le_bytes())?;
    w.write_all(&c.log_p.to_le_bytes())?;
    w.write_all(&c.state.alpha1.to_le_bytes())?;
    w.write_all(&c.state.alpha2.to_le_bytes())?;
    for k in [&c.state.u1, &c.state.u2, &c.state.v1, &c.state.v2] {
        write_one_particle(&mut w, k)?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<AnyCheckpoint> {
    let mut magic = [0u8; 7];
    r.read_exact(&mut magic)?;
    let step = read_u64(&mut r)?;
    let log_p = read_f64(&mut r)?;
    if &magic == CK_FULL {
        let state = read_two_particle(r)?;
        Ok(AnyCheckpoint::Full(Checkpoint { step, log_p, state }))
    } else if &magic == CK_RANK2 {
        let alpha1 = read_f64(&mut r)?;
        let alpha2 = read_f64(&mut r)?;
        let mut k = Vec::with_capacity(4);
        for _ in 0..4 {
            k.push(read_one_particle(&mut r)?);
        }
        let v2 = k.pop().unwrap();
        let v1 = k.pop().unwrap();
        let u2 = k.pop().unwrap();
        let u1 = k.pop().unwrap();
        Ok(AnyCheckpoint::RankTwo(Rank2Checkpoint {
            step,
            log_p,
            state: RankTwoState { alpha1, alpha2, u1, u2, v1, v2 },
        }))
    } else {
        Err(Error::Snapshot("bad checkpoint magic".into()))
    }
}
