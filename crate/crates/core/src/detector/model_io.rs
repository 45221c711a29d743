//! Binary model files.
//!
//! All integers are little-endian `u64` and all reals little-endian IEEE-754
//! `f64`, so a saved model reloads bit for bit:
//!
//! ```text
//! magic            8 bytes  "CWMODEL\0"
//! format_version   u64      1
//! hidden_units     u64
//! batch_size       u64
//! epochs           u64
//! seed             u64
//! learning_rate    f64
//! alpha            f64
//! value_min        f64      normalizer
//! value_max        f64
//! delta_min        f64
//! delta_max        f64
//! mean_loss        f64      last-epoch mean training loss
//! train_time_s     f64
//! n_epoch_losses   u64
//! epoch_losses     f64 * n_epoch_losses
//! weights          f64 * (4 * hidden_units + 1)   W1 row-major, b1, w2, b2
//! ```

use std::io::{Read, Write};

use super::mlp::{Hyperparams, MlpParams, TrainedModel};
use crate::error::{Error, Result};
use crate::pipeline::Normalizer;

pub const MAGIC: &[u8; 8] = b"CWMODEL\0";
pub const FORMAT_VERSION: u64 = 1;

pub fn write_model<W: Write>(model: &TrainedModel, mut w: W) -> Result<()> {
    let hp = &model.hyperparams;
    let n = &model.normalizer;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    for v in [
        FORMAT_VERSION,
        model.params.hidden_units() as u64,
        hp.batch_size as u64,
        hp.epochs as u64,
        hp.seed,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in [
        hp.learning_rate,
        hp.alpha,
        n.value_min,
        n.value_max,
        n.delta_min,
        n.delta_max,
        model.mean_last_epoch_loss,
        model.train_wall_time_s,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&(model.per_epoch_mean_loss.len() as u64).to_le_bytes());
    for v in model
        .per_epoch_mean_loss
        .iter()
        .chain(&model.params.to_flat())
    {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf).map_err(|e| Error::io("<model>", e))
}

struct Cursor<'a>(&'a [u8]);

impl Cursor<'_> {
    fn take8(&mut self) -> Result<[u8; 8]> {
        if self.0.len() < 8 {
            return Err(Error::ModelFormat("truncated file".into()));
        }
        let (head, rest) = self.0.split_at(8);
        self.0 = rest;
        Ok(head.try_into().expect("8 bytes"))
    }

    fn u64(&mut self) -> Result<u64> {
        self.take8().map(u64::from_le_bytes)
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::ModelFormat("size overflow".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        self.take8().map(f64::from_le_bytes)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        if self.0.len() / 8 < n {
            return Err(Error::ModelFormat("truncated file".into()));
        }
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn read_model<R: Read>(mut r: R) -> Result<TrainedModel> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::io("<model>", e))?;
    let mut c = Cursor(&bytes);
    if &c.take8()? != MAGIC {
        return Err(Error::ModelFormat("bad magic".into()));
    }
    let version = c.u64()?;
    if version != FORMAT_VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported format version {version}"
        )));
    }
    let hidden = c.usize()?;
    let batch_size = c.usize()?;
    let epochs = c.usize()?;
    let seed = c.u64()?;
    let learning_rate = c.f64()?;
    let alpha = c.f64()?;
    let normalizer = Normalizer {
        value_min: c.f64()?,
        value_max: c.f64()?,
        delta_min: c.f64()?,
        delta_max: c.f64()?,
    };
    let mean_last_epoch_loss = c.f64()?;
    let train_wall_time_s = c.f64()?;
    let n_losses = c.usize()?;
    let per_epoch_mean_loss = c.f64s(n_losses)?;
    let flat = c.f64s(hidden.saturating_mul(4).saturating_add(1))?;
    if !c.0.is_empty() {
        return Err(Error::ModelFormat("trailing bytes".into()));
    }
    let params = MlpParams::from_flat(hidden, &flat)
        .ok_or_else(|| Error::ModelFormat("weight count".into()))?;
    Ok(TrainedModel {
        params,
        hyperparams: Hyperparams {
            learning_rate,
            batch_size,
            epochs,
            hidden_units: hidden,
            alpha,
            seed,
        },
        normalizer,
        per_epoch_mean_loss,
        mean_last_epoch_loss,
        last_epoch_losses: Vec::new(),
        train_wall_time_s,
    })
}
