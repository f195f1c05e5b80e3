//! Little-endian binary containers.
//!
//! Policy blob: `HKPP`, u32 version, u32 actor layer count, u32 critic layer
//! count, then per layer u32 out, u32 in, `out*in` weights (row-major) and
//! `out` biases as f64, then u32 log-std length and the log-std values.
//!
//! Checkpoint: `HKCK`, u32 version, u8 variant tag, u64 iteration, u64 blob
//! length, policy blob, u64 Adam step, u64 moment length, m, v.

use std::path::Path;

use crate::coach::{AblationVariant, PolicyParams};
use crate::error::{Error, Result};
use crate::nn::{Dense, Mlp};
use crate::ppo::Adam;

const POLICY_MAGIC: &[u8; 4] = b"HKPP";
const CHECKPOINT_MAGIC: &[u8; 4] = b"HKCK";
const VERSION: u32 = 1;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("length overflow".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn magic(&mut self, expect: &[u8; 4]) -> Result<()> {
        if self.take(4)? != expect {
            return Err(Error::Checkpoint(format!("bad magic, expected {}", String::from_utf8_lossy(expect))));
        }
        let v = self.u32()?;
        if v != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {v}")));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn write_mlp(out: &mut Vec<u8>, mlp: &Mlp) {
    for l in &mlp.layers {
        out.extend_from_slice(&(l.out_dim as u32).to_le_bytes());
        out.extend_from_slice(&(l.in_dim as u32).to_le_bytes());
        put_f64s(out, &l.weights);
        put_f64s(out, &l.bias);
    }
}

fn read_mlp(r: &mut Reader<'_>, n_layers: u32) -> Result<Mlp> {
    let mut layers = Vec::with_capacity(n_layers as usize);
    for _ in 0..n_layers {
        let out_dim = r.u32()? as usize;
        let in_dim = r.u32()? as usize;
        let weights = r.f64s(out_dim * in_dim)?;
        let bias = r.f64s(out_dim)?;
        layers.push(Dense { in_dim, out_dim, weights, bias });
    }
    Ok(Mlp { layers })
}

pub fn params_to_bytes(p: &PolicyParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * p.num_params() + 8 * (p.actor.layers.len() + p.critic.layers.len()));
    out.extend_from_slice(POLICY_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(p.actor.layers.len() as u32).to_le_bytes());
    out.extend_from_slice(&(p.critic.layers.len() as u32).to_le_bytes());
    write_mlp(&mut out, &p.actor);
    write_mlp(&mut out, &p.critic);
    out.extend_from_slice(&(p.log_std.len() as u32).to_le_bytes());
    put_f64s(&mut out, &p.log_std);
    out
}

fn read_params(r: &mut Reader<'_>) -> Result<PolicyParams> {
    r.magic(POLICY_MAGIC)?;
    let n_actor = r.u32()?;
    let n_critic = r.u32()?;
    let actor = read_mlp(r, n_actor)?;
    let critic = read_mlp(r, n_critic)?;
    let d = r.u32()? as usize;
    let log_std = r.f64s(d)?;
    let p = PolicyParams { actor, critic, log_std };
    p.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok(p)
}

pub fn params_from_bytes(buf: &[u8]) -> Result<PolicyParams> {
    let mut r = Reader { buf, pos: 0 };
    let p = read_params(&mut r)?;
    r.finish()?;
    Ok(p)
}

/// Policy plus optimiser state at a given iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub variant: AblationVariant,
    pub iteration: u64,
    pub params: PolicyParams,
    pub adam: Adam,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let blob = params_to_bytes(&self.params);
        let mut out = Vec::with_capacity(blob.len() + 16 * self.adam.m.len() + 48);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.variant.tag());
        out.extend_from_slice(&self.iteration.to_le_bytes());
        out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
        out.extend_from_slice(&blob);
        out.extend_from_slice(&self.adam.step.to_le_bytes());
        out.extend_from_slice(&(self.adam.m.len() as u64).to_le_bytes());
        put_f64s(&mut out, &self.adam.m);
        put_f64s(&mut out, &self.adam.v);
        out
    }

    /// Decodes a checkpoint; optimiser hyperparameters are not stored and
    /// come from `lr`, `betas` and `eps`.
    pub fn from_bytes(buf: &[u8], lr: f64, betas: (f64, f64), eps: f64) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        r.magic(CHECKPOINT_MAGIC)?;
        let tag = r.u8()?;
        let variant =
            AblationVariant::from_tag(tag).ok_or_else(|| Error::Checkpoint(format!("unknown variant tag {tag}")))?;
        let iteration = r.u64()?;
        let blob_len = r.u64()? as usize;
        let blob = r.take(blob_len)?;
        let params = params_from_bytes(blob)?;
        let step = r.u64()?;
        let n = r.u64()? as usize;
        if n != params.num_params() {
            return Err(Error::Checkpoint(format!("moment length {n} does not match {} parameters", params.num_params())));
        }
        let m = r.f64s(n)?;
        let v = r.f64s(n)?;
        r.finish()?;
        let adam = Adam { lr, beta1: betas.0, beta2: betas.1, eps, step, m, v };
        Ok(Self { variant, iteration, params, adam })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, ppo: &crate::ppo::PpoConfig) -> Result<Self> {
        let buf = std::fs::read(path)?;
        Self::from_bytes(&buf, ppo.learning_rate, (ppo.adam_beta1, ppo.adam_beta2), ppo.adam_eps)
    }
}
