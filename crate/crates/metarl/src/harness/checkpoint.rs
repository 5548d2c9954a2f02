//! Binary checkpoints: everything a run needs to continue bit-exactly.
//!
//! Because every random stream in the crate is derived from (seed,
//! iteration, purpose tag), there is no RNG state to persist — the file
//! stores the policy, the adversary pair with its optimizer states when
//! present, the iteration counter, and the config hash that guards resume
//! against silently changed settings. Writes go to a temporary file that is
//! renamed into place, so a crash never leaves a partial checkpoint behind.

use std::fs;
use std::path::Path;

use crate::attacks::AdGanParams;
use crate::diffcore::{AdamState, DiffError, ParamVector};
use crate::nets::MlpArch;
use crate::rollout::{GaussianPolicy, LOG_STD_SEGMENT};
use crate::trainers::{Regime, TrainerState};

use super::{write_atomic, HarnessError};

const MAGIC: &[u8; 8] = b"METARLC\x01";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A persisted training state plus the identifiers that make it safe to
/// resume: the regime, the master seed, and the config hash.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub regime: Regime,
    pub config_hash: u64,
    pub seed: u64,
    /// (iteration, mean return) at every log point so far, so convergence
    /// CSVs regenerate identically after a resume.
    pub history: Vec<(usize, f64)>,
    pub state: TrainerState,
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn string(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }
    fn f64_slice(&mut self, xs: &[f64]) {
        self.u64(xs.len() as u64);
        for &x in xs {
            self.f64(x);
        }
    }
    fn arch(&mut self, arch: &MlpArch) {
        self.u32(arch.input as u32);
        self.u32(arch.hidden.len() as u32);
        for &h in &arch.hidden {
            self.u32(h as u32);
        }
        self.u32(arch.output as u32);
    }
    fn params(&mut self, p: &ParamVector) {
        let blob = p.to_bytes();
        self.u64(blob.len() as u64);
        self.buf.extend_from_slice(&blob);
    }
    fn adam(&mut self, s: &AdamState) {
        self.f64_slice(&s.m);
        self.f64_slice(&s.v);
        self.u64(s.t);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn corrupt(detail: impl Into<String>) -> HarnessError {
    HarnessError::CheckpointCorrupt { detail: detail.into() }
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], HarnessError> {
        if self.pos + n > self.buf.len() {
            return Err(corrupt("truncated checkpoint"));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8, HarnessError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, HarnessError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, HarnessError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, HarnessError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn string(&mut self) -> Result<String, HarnessError> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| corrupt("non-utf8 string"))
    }
    fn f64_vec(&mut self) -> Result<Vec<f64>, HarnessError> {
        let len = self.u64()? as usize;
        if len > self.buf.len() / 8 + 1 {
            return Err(corrupt("implausible vector length"));
        }
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            out.push(self.f64()?);
        }
        Ok(out)
    }
    fn arch(&mut self) -> Result<MlpArch, HarnessError> {
        let input = self.u32()? as usize;
        let n_hidden = self.u32()? as usize;
        if n_hidden > 64 {
            return Err(corrupt("implausible hidden-layer count"));
        }
        let mut hidden = Vec::with_capacity(n_hidden);
        for _ in 0..n_hidden {
            hidden.push(self.u32()? as usize);
        }
        let output = self.u32()? as usize;
        Ok(MlpArch::new(input, &hidden, output))
    }
    fn params(&mut self) -> Result<ParamVector, HarnessError> {
        let len = self.u64()? as usize;
        let blob = self.take(len)?;
        let (params, used) = ParamVector::from_bytes(blob).map_err(|e| match e {
            DiffError::FormatVersion { found, expected } => corrupt(format!(
                "parameter blob format {found} (this build reads {expected})"
            )),
            other => corrupt(other.to_string()),
        })?;
        if used != len {
            return Err(corrupt("parameter blob has trailing bytes"));
        }
        Ok(params)
    }
    fn adam(&mut self, expected_len: usize) -> Result<AdamState, HarnessError> {
        let m = self.f64_vec()?;
        let v = self.f64_vec()?;
        let t = self.u64()?;
        if m.len() != expected_len || v.len() != expected_len {
            return Err(corrupt("optimizer state length mismatch"));
        }
        Ok(AdamState { m, v, t })
    }
}

fn encode(ckpt: &Checkpoint) -> Vec<u8> {
    let mut w = Writer::new();
    w.buf.extend_from_slice(MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.u64(ckpt.config_hash);
    w.u64(ckpt.seed);
    w.string(ckpt.regime.name());
    w.u64(ckpt.state.iteration as u64);
    w.u64(ckpt.history.len() as u64);
    for &(it, ret) in &ckpt.history {
        w.u64(it as u64);
        w.f64(ret);
    }
    w.arch(&ckpt.state.policy.arch);
    w.params(&ckpt.state.policy.params);
    match &ckpt.state.gan {
        None => w.u8(0),
        Some(gan) => {
            w.u8(1);
            w.arch(&gan.gen_arch);
            w.arch(&gan.disc_arch);
            w.f64(gan.hinge_bound);
            w.f64(gan.gan_weight_alpha);
            w.f64(gan.hinge_weight_beta);
            w.params(&gan.generator);
            w.params(&gan.discriminator);
            w.adam(ckpt.state.gen_adam.as_ref().expect("gan state has adam"));
            w.adam(ckpt.state.disc_adam.as_ref().expect("gan state has adam"));
        }
    }
    w.buf
}

fn decode(bytes: &[u8]) -> Result<Checkpoint, HarnessError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(HarnessError::CheckpointVersion {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let config_hash = r.u64()?;
    let seed = r.u64()?;
    let regime_name = r.string()?;
    let regime = Regime::from_name(&regime_name)
        .ok_or_else(|| corrupt(format!("unknown regime `{regime_name}`")))?;
    let iteration = r.u64()? as usize;
    let n_history = r.u64()? as usize;
    if n_history > bytes.len() / 16 + 1 {
        return Err(corrupt("implausible history length"));
    }
    let mut history = Vec::with_capacity(n_history);
    for _ in 0..n_history {
        let it = r.u64()? as usize;
        let ret = r.f64()?;
        history.push((it, ret));
    }

    let arch = r.arch()?;
    let params = r.params()?;
    let log_std_len =
        params.layout().find(LOG_STD_SEGMENT).map(|s| s.len).unwrap_or(0);
    if log_std_len != arch.output {
        return Err(corrupt("policy parameters do not match the stored architecture"));
    }
    let policy = GaussianPolicy { arch, params };

    let (gan, gen_adam, disc_adam) = if r.u8()? == 1 {
        let gen_arch = r.arch()?;
        let disc_arch = r.arch()?;
        let hinge_bound = r.f64()?;
        let gan_weight_alpha = r.f64()?;
        let hinge_weight_beta = r.f64()?;
        let generator = r.params()?;
        let discriminator = r.params()?;
        if generator.len() != gen_arch.layout().total_len()
            || discriminator.len() != disc_arch.layout().total_len()
        {
            return Err(corrupt("pair parameters do not match the stored architectures"));
        }
        let gen_adam = r.adam(generator.len())?;
        let disc_adam = r.adam(discriminator.len())?;
        (
            Some(AdGanParams {
                gen_arch,
                disc_arch,
                generator,
                discriminator,
                hinge_bound,
                gan_weight_alpha,
                hinge_weight_beta,
            }),
            Some(gen_adam),
            Some(disc_adam),
        )
    } else {
        (None, None, None)
    };

    if r.pos != bytes.len() {
        return Err(corrupt("trailing bytes after checkpoint"));
    }
    Ok(Checkpoint {
        regime,
        config_hash,
        seed,
        history,
        state: TrainerState { policy, gan, gen_adam, disc_adam, iteration },
    })
}

/// Serializes and atomically replaces `path`.
pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), HarnessError> {
    write_atomic(path, &encode(ckpt))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, HarnessError> {
    let bytes = fs::read(path)?;
    decode(&bytes)
}
