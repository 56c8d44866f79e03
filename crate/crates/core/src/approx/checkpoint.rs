//! Versioned binary checkpoints for trained models.
//!
//! A checkpoint bundles everything needed to resume or evaluate a run: the
//! agent kind, an echo of the run configuration text, the input scaler, the
//! delta action bounds, and named sections holding network parameters,
//! scalar values, and optimizer moments. All floats are little-endian f64;
//! writing the same checkpoint twice produces identical bytes, and a
//! save/load round trip restores every value bit-exactly.

use std::io::{Read, Write};
use std::path::Path;

use super::{Mlp, MlpArch};
use crate::dynsys::Scaler;

/// Magic prefix of checkpoint files.
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FWDC";
/// Current checkpoint format version.
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

/// Serialized optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// Everything a trained agent persists between sessions.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Agent family, e.g. `"sac"` or `"sl"`.
    pub kind: String,
    /// Verbatim text of the run configuration that produced this model.
    pub config_echo: String,
    pub scaler: Scaler,
    pub delta_low: Vec<f64>,
    pub delta_high: Vec<f64>,
    pub networks: Vec<(String, Mlp)>,
    pub scalars: Vec<(String, f64)>,
    pub adam_states: Vec<(String, AdamState)>,
}

impl Checkpoint {
    pub fn network(&self, name: &str) -> Option<&Mlp> {
        self.networks.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.scalars.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn adam_state(&self, name: &str) -> Option<&AdamState> {
        self.adam_states.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(file)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read(file)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<(), CheckpointError> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        write_string(&mut w, &self.kind)?;
        write_string(&mut w, &self.config_echo)?;
        write_f64s(&mut w, self.scaler.min())?;
        write_f64s(&mut w, self.scaler.max())?;
        write_f64s(&mut w, &self.delta_low)?;
        write_f64s(&mut w, &self.delta_high)?;
        w.write_all(&(self.networks.len() as u32).to_le_bytes())?;
        for (name, mlp) in &self.networks {
            write_string(&mut w, name)?;
            let arch = mlp.arch();
            w.write_all(&(arch.input as u32).to_le_bytes())?;
            w.write_all(&(arch.hidden.len() as u32).to_le_bytes())?;
            for h in &arch.hidden {
                w.write_all(&(*h as u32).to_le_bytes())?;
            }
            w.write_all(&(arch.output as u32).to_le_bytes())?;
            write_f64s(&mut w, mlp.params())?;
        }
        w.write_all(&(self.scalars.len() as u32).to_le_bytes())?;
        for (name, v) in &self.scalars {
            write_string(&mut w, name)?;
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(self.adam_states.len() as u32).to_le_bytes())?;
        for (name, s) in &self.adam_states {
            write_string(&mut w, name)?;
            w.write_all(&s.lr.to_le_bytes())?;
            w.write_all(&s.t.to_le_bytes())?;
            write_f64s(&mut w, &s.m)?;
            write_f64s(&mut w, &s.v)?;
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self, CheckpointError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let kind = read_string(&mut r)?;
        let config_echo = read_string(&mut r)?;
        let scaler_min = read_f64s(&mut r)?;
        let scaler_max = read_f64s(&mut r)?;
        if scaler_min.len() != scaler_max.len() {
            return Err(CheckpointError::Corrupt("scaler halves differ in width".into()));
        }
        let scaler = Scaler::new(scaler_min, scaler_max);
        let delta_low = read_f64s(&mut r)?;
        let delta_high = read_f64s(&mut r)?;
        let n_networks = read_u32(&mut r)? as usize;
        let mut networks = Vec::with_capacity(n_networks);
        for _ in 0..n_networks {
            let name = read_string(&mut r)?;
            let input = read_u32(&mut r)? as usize;
            let n_hidden = read_u32(&mut r)? as usize;
            let mut hidden = Vec::with_capacity(n_hidden);
            for _ in 0..n_hidden {
                hidden.push(read_u32(&mut r)? as usize);
            }
            let output = read_u32(&mut r)? as usize;
            let arch = MlpArch::new(input, hidden, output);
            let params = read_f64s(&mut r)?;
            if params.len() != arch.param_count() {
                return Err(CheckpointError::Corrupt(format!(
                    "network '{name}' has {} parameters, architecture wants {}",
                    params.len(),
                    arch.param_count()
                )));
            }
            networks.push((name, Mlp::from_params(arch, params)));
        }
        let n_scalars = read_u32(&mut r)? as usize;
        let mut scalars = Vec::with_capacity(n_scalars);
        for _ in 0..n_scalars {
            let name = read_string(&mut r)?;
            scalars.push((name, read_f64(&mut r)?));
        }
        let n_adam = read_u32(&mut r)? as usize;
        let mut adam_states = Vec::with_capacity(n_adam);
        for _ in 0..n_adam {
            let name = read_string(&mut r)?;
            let lr = read_f64(&mut r)?;
            let mut buf = [0u8; 8];
            r.read_exact(&mut buf)?;
            let t = u64::from_le_bytes(buf);
            let m = read_f64s(&mut r)?;
            let v = read_f64s(&mut r)?;
            adam_states.push((name, AdamState { lr, t, m, v }));
        }
        Ok(Self {
            kind,
            config_echo,
            scaler,
            delta_low,
            delta_high,
            networks,
            scalars,
            adam_states,
        })
    }
}

fn write_string<W: Write>(w: &mut W, s: &str) -> Result<(), CheckpointError> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn write_f64s<W: Write>(w: &mut W, v: &[f64]) -> Result<(), CheckpointError> {
    w.write_all(&(v.len() as u32).to_le_bytes())?;
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, CheckpointError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, CheckpointError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn read_f64s<R: Read>(r: &mut R) -> Result<Vec<f64>, CheckpointError> {
    let count = read_u32(r)? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        out.push(read_f64(r)?);
    }
    Ok(out)
}

fn read_string<R: Read>(r: &mut R) -> Result<String, CheckpointError> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| CheckpointError::Corrupt("non-UTF-8 string".into()))
}
