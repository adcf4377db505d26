//! Versioned, checksummed run checkpoints. Everything a run needs to continue
//! is stored: the RNG streams are derived from `(seed, epoch)` and
//! `(seed, step)`, so the counters are the whole RNG state.

use std::path::Path;

use super::{BestCheckpoint, Objective, OptimizerKind, TrainConfig, TrainRun, TraceRow};
use crate::codec::{open, seal, Decoder, Encoder, Magic};
use crate::constraints::{DualState, Optimizer, SlackRule};
use crate::error::{AceError, Result};
use crate::layers::{decode_model, encode_model, ConvCertificate};

pub const RUN_MAGIC: Magic = *b"ACERUN\0\0";
pub const RUN_VERSION: u32 = 1;

fn encode_config(c: &TrainConfig, enc: &mut Encoder) {
    match c.objective {
        Objective::Strict => enc.u8(0),
        Objective::Resilient => enc.u8(1),
        Objective::Penalty { alpha, beta, n_g_samples } => enc.u8(2).f64(alpha).f64(beta).usize(n_g_samples),
        Objective::Plain => enc.u8(3),
    };
    enc.f64(c.eta_p).f64(c.eta_d).f64(c.gamma_init).f64(c.rho);
    enc.u64(c.epochs).usize(c.batch_size).u64(c.seed).u64(c.eval_every);
    enc.u8(match c.spectral_norm {
        None => 0,
        Some(false) => 1,
        Some(true) => 2,
    });
    enc.usize(c.power_iters);
    enc.bool(c.slack_rule == SlackRule::Ascent);
    enc.bool(c.optimizer == OptimizerKind::Adam);
    enc.bool(c.certificate == ConvCertificate::Exact);
    enc.usize(c.eq_probes);
}

fn decode_config(dec: &mut Decoder) -> Result<TrainConfig> {
    let objective = match dec.u8()? {
        0 => Objective::Strict,
        1 => Objective::Resilient,
        2 => Objective::Penalty { alpha: dec.f64()?, beta: dec.f64()?, n_g_samples: dec.usize()? },
        3 => Objective::Plain,
        t => return Err(AceError::Corrupt(format!("unknown objective tag {t}"))),
    };
    let config = TrainConfig {
        objective,
        eta_p: dec.f64()?,
        eta_d: dec.f64()?,
        gamma_init: dec.f64()?,
        rho: dec.f64()?,
        epochs: dec.u64()?,
        batch_size: dec.usize()?,
        seed: dec.u64()?,
        eval_every: dec.u64()?,
        spectral_norm: match dec.u8()? {
            0 => None,
            1 => Some(false),
            2 => Some(true),
            t => return Err(AceError::Corrupt(format!("unknown spectral norm tag {t}"))),
        },
        power_iters: dec.usize()?,
        slack_rule: if dec.bool()? { SlackRule::Ascent } else { SlackRule::Descent },
        optimizer: if dec.bool()? { OptimizerKind::Adam } else { OptimizerKind::Sgd },
        certificate: if dec.bool()? { ConvCertificate::Exact } else { ConvCertificate::Frobenius },
        eq_probes: dec.usize()?,
    };
    config.validate().map_err(|e| AceError::Corrupt(format!("stored config is invalid: {e}")))?;
    Ok(config)
}

impl TrainRun {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        encode_config(&self.config, &mut enc);
        encode_model(&self.model, &mut enc);
        self.dual.encode(&mut enc);
        self.optimizer.encode(&mut enc);
        enc.u64(self.step).u64(self.epoch).usize(self.trace.len());
        self.trace.iter().for_each(|r| r.encode(&mut enc));
        match &self.best {
            None => {
                enc.bool(false);
            }
            Some(b) => {
                enc.bool(true).u64(b.step).f64(b.score);
                encode_model(&b.model, &mut enc);
            }
        }
        seal(&RUN_MAGIC, RUN_VERSION, &enc.finish())
    }

    /// Fully validates before returning; a failure yields no partial run.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut dec = Decoder::new(open(&RUN_MAGIC, RUN_VERSION, bytes)?);
        let config = decode_config(&mut dec)?;
        let model = decode_model(&mut dec)?;
        let dual = DualState::decode(&mut dec)?;
        let optimizer = Optimizer::decode(&mut dec)?;
        let (step, epoch) = (dec.u64()?, dec.u64()?);
        let n_rows = dec.usize()?;
        let trace = (0..n_rows).map(|_| TraceRow::decode(&mut dec)).collect::<Result<Vec<_>>>()?;
        let best = if dec.bool()? {
            let (step, score) = (dec.u64()?, dec.f64()?);
            Some(BestCheckpoint { step, score, model: decode_model(&mut dec)? })
        } else {
            None
        };
        dec.finish()?;
        if dual.len() != model.depth() || trace.iter().any(|r| r.depth() != model.depth()) {
            return Err(AceError::Corrupt("dual state or trace does not match the model depth".into()));
        }
        if trace.windows(2).any(|w| w[0].step >= w[1].step) {
            return Err(AceError::Corrupt("trace steps are not increasing".into()));
        }
        Ok(Self { model, dual, config, trace, best, step, epoch, optimizer })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
