//! Binary model checkpoints.
//!
//! Layout, all integers `u64` and floats `f64`, little-endian:
//! magic `SMIDIFF\0`, format version, flavor (0 conditional, 1 joint),
//! x_dim, y_dim, width, blocks, time_embed_dim, β_min, β_max, T, t_eps,
//! seed, iteration, tensor count, then per tensor its rank, dims and data.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::models::{CondScoreModel, JointScoreModel, ScoreModel};
use super::net::{Flavor, ScoreArch};
use super::ScoreError;
use crate::nn::Tensor;
use crate::sde::VpSchedule;

const MAGIC: &[u8; 8] = b"SMIDIFF\0";
const VERSION: u64 = 1;

/// A decoded checkpoint of either flavor.
#[derive(Clone, Debug)]
pub enum Checkpoint {
    Conditional(CondScoreModel),
    Joint(JointScoreModel),
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn write_checkpoint<M: ScoreModel, W: Write>(model: &M, mut w: W) -> Result<(), ScoreError> {
    let arch = model.arch();
    let s = model.schedule();
    let mut out = Vec::with_capacity(160 + 8 * model.params().numel());
    out.extend_from_slice(MAGIC);
    put_u64(&mut out, VERSION);
    put_u64(&mut out, matches!(arch.flavor, Flavor::Joint) as u64);
    for d in [arch.x_dim, arch.y_dim, arch.width, arch.blocks, arch.time_embed_dim] {
        put_u64(&mut out, d as u64);
    }
    for f in [s.beta_min, s.beta_max, s.horizon, s.t_eps] {
        put_f64(&mut out, f);
    }
    put_u64(&mut out, model.seed());
    put_u64(&mut out, model.iterations());
    put_u64(&mut out, model.params().len() as u64);
    for t in model.params().iter() {
        put_u64(&mut out, t.rank() as u64);
        for &d in t.shape() {
            put_u64(&mut out, d as u64);
        }
        for &v in t.data() {
            put_f64(&mut out, v);
        }
    }
    w.write_all(&out)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], ScoreError> {
        if self.buf.len() - self.pos < n {
            return Err(ScoreError::Checkpoint("truncated file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64, ScoreError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize, ScoreError> {
        usize::try_from(self.u64()?).map_err(|_| ScoreError::Checkpoint("size overflow".into()))
    }

    fn f64(&mut self) -> Result<f64, ScoreError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint, ScoreError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut rd = Reader { buf: &buf, pos: 0 };
    if rd.take(8)? != MAGIC {
        return Err(ScoreError::Checkpoint("bad magic".into()));
    }
    let version = rd.u64()?;
    if version != VERSION {
        return Err(ScoreError::Checkpoint(format!("unsupported version {version}")));
    }
    let flavor = match rd.u64()? {
        0 => Flavor::Conditional,
        1 => Flavor::Joint,
        other => return Err(ScoreError::Checkpoint(format!("unknown flavor {other}"))),
    };
    let arch = ScoreArch {
        flavor,
        x_dim: rd.usize()?,
        y_dim: rd.usize()?,
        width: rd.usize()?,
        blocks: rd.usize()?,
        time_embed_dim: rd.usize()?,
    };
    let schedule = VpSchedule::new(rd.f64()?, rd.f64()?, rd.f64()?, rd.f64()?)?;
    let seed = rd.u64()?;
    let iterations = rd.u64()?;
    let count = rd.usize()?;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let rank = rd.usize()?;
        if rank == 0 || rank > 8 {
            return Err(ScoreError::Checkpoint(format!("bad tensor rank {rank}")));
        }
        let shape = (0..rank).map(|_| rd.usize()).collect::<Result<Vec<_>, _>>()?;
        let len = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|&l| l <= (buf.len() - rd.pos) / 8)
            .ok_or_else(|| ScoreError::Checkpoint("tensor larger than file".into()))?;
        let data = (0..len).map(|_| rd.f64()).collect::<Result<Vec<_>, _>>()?;
        tensors.push(Tensor::new(shape, data)?);
    }
    if rd.pos != buf.len() {
        return Err(ScoreError::Checkpoint("trailing bytes".into()));
    }
    Ok(match flavor {
        Flavor::Conditional => {
            let mut m = CondScoreModel::new(arch, schedule, seed)?;
            m.params_mut().load(tensors)?;
            m.set_iterations(iterations);
            Checkpoint::Conditional(m)
        }
        Flavor::Joint => {
            let mut m = JointScoreModel::new(arch, schedule, seed)?;
            m.params_mut().load(tensors)?;
            m.set_iterations(iterations);
            Checkpoint::Joint(m)
        }
    })
}

pub fn save_checkpoint<M: ScoreModel>(model: &M, path: &Path) -> Result<(), ScoreError> {
    let tmp = path.with_extension("tmp");
    write_checkpoint(model, fs::File::create(&tmp)?)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ScoreError> {
    read_checkpoint(std::io::BufReader::new(fs::File::open(path)?))
}
