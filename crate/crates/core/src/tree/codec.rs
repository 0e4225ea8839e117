//! Binary and JSON-lines dumps of recorded trajectories.
//!
//! Binary layout, little-endian throughout:
//!
//! | field          | type           | count       |
//! |----------------|----------------|-------------|
//! | magic `TMPT`   | `u8`           | 4           |
//! | version (= 1)  | `u16`          | 1           |
//! | `T` branches   | `u16`          | 1           |
//! | `S` steps      | `u16`          | 1           |
//! | flags          | `u16`          | 1 (bit 0: root seeded) |
//! | branch steps   | `u16`          | `T`         |
//! | choices        | `u16`          | `T`         |
//! | noises         | `f64`          | `2T`        |
//! | gammas         | `f64`          | `T`         |
//! | step logps     | `f64`          | `T`         |
//! | logp total     | `f64`          | 1           |
//! | states         | `f64`          | `2(S + 1)`  |
//!
//! The terminal sample is the last state.

use std::io::Write;

use super::{RolloutTree, Trajectory};
use crate::{Error, Result, Vec2};

pub const TRAJECTORY_MAGIC: [u8; 4] = *b"TMPT";
const VERSION: u16 = 1;

fn to_u16(v: usize, what: &str) -> Result<u16> {
    u16::try_from(v).map_err(|_| Error::InvalidInput(format!("{what} {v} exceeds u16")))
}

pub fn encode_trajectory(traj: &Trajectory) -> Result<Vec<u8>> {
    let t = traj.branch_steps.len();
    let s = traj
        .states
        .len()
        .checked_sub(1)
        .ok_or_else(|| Error::InvalidInput("trajectory has no states".into()))?;
    let mut out = Vec::new();
    out.extend_from_slice(&TRAJECTORY_MAGIC);
    for v in [
        VERSION,
        to_u16(t, "branch count")?,
        to_u16(s, "step count")?,
        traj.root_seeded as u16,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &v in traj.branch_steps.iter().chain(&traj.choices) {
        out.extend_from_slice(&to_u16(v, "index")?.to_le_bytes());
    }
    let mut put = |x: f64| out.extend_from_slice(&x.to_le_bytes());
    traj.noises.iter().flatten().for_each(|&x| put(x));
    traj.gammas.iter().for_each(|&x| put(x));
    traj.step_logps.iter().for_each(|&x| put(x));
    put(traj.logp_total);
    traj.states.iter().flatten().for_each(|&x| put(x));
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.at + n;
        if end > self.bytes.len() {
            return Err(Error::InvalidInput("truncated trajectory record".into()));
        }
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn vec2s(&mut self, n: usize) -> Result<Vec<Vec2>> {
        (0..n).map(|_| Ok([self.f64()?, self.f64()?])).collect()
    }
}

pub fn decode_trajectory(bytes: &[u8]) -> Result<Trajectory> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(4)? != TRAJECTORY_MAGIC {
        return Err(Error::InvalidInput("bad trajectory magic".into()));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::InvalidInput(format!("unsupported trajectory version {version}")));
    }
    let t = r.u16()? as usize;
    let s = r.u16()? as usize;
    let flags = r.u16()?;
    let branch_steps = (0..t).map(|_| r.u16().map(usize::from)).collect::<Result<Vec<_>>>()?;
    let choices = (0..t).map(|_| r.u16().map(usize::from)).collect::<Result<Vec<_>>>()?;
    let noises = r.vec2s(t)?;
    let gammas = (0..t).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let step_logps = (0..t).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let logp_total = r.f64()?;
    let states = r.vec2s(s + 1)?;
    if r.at != bytes.len() {
        return Err(Error::InvalidInput("trailing bytes after trajectory".into()));
    }
    Ok(Trajectory {
        branch_steps,
        choices,
        noises,
        gammas,
        terminal: *states.last().expect("s + 1 >= 1 states"),
        states,
        step_logps,
        logp_total,
        root_seeded: flags & 1 == 1,
    })
}

/// One JSON object per leaf, tagged with the tree index.
pub fn write_tree_jsonl<W: Write>(mut out: W, tree_index: usize, tree: &RolloutTree) -> Result<()> {
    for (leaf_index, leaf) in tree.leaves.iter().enumerate() {
        let line = serde_json::json!({
            "tree": tree_index,
            "leaf": leaf_index,
            "root": tree.root,
            "trajectory": leaf,
        });
        writeln!(out, "{line}")?;
    }
    Ok(())
}
