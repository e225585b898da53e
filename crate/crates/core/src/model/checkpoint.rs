//! Binary checkpoints. All numbers little-endian.
//!
//! ```text
//! "DPRDMDL1"
//! version: u32 (= 1)
//! d: u64, hidden: u64, k: u64, flags: u64, delta_scale: f64
//!     flags: bit 0 log-decay deltas, bit 1 mean pooling, bit 2 alignment
//!            matrix, bit 3 static mode
//! U: u64, I: u64
//! embedding table, (U + I + 1) x d f64, row-major, padding row last
//! temporal mode: for gate in z, r, n:
//!     w_input (hidden x d), w_delta (hidden), w_state (hidden x hidden),
//!     b_input, b_delta, b_state (hidden each)
//! alignment matrix (hidden x hidden), when flag bit 2 is set
//! optional optimizer block:
//!     "DPRDOPT1", step: u64, then first moments and second moments for
//!     every tensor above, in the same order
//! crc32 (IEEE) of every preceding byte: u32
//! ```

use super::{DeltaTransform, EncoderMode, Model, ModelConfig, PoolKind};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::trainer::AdamState;

pub const MODEL_MAGIC: &[u8; 8] = b"DPRDMDL1";
pub const OPTIMIZER_MAGIC: &[u8; 8] = b"DPRDOPT1";
const VERSION: u32 = 1;

const FLAG_LOG_DECAY: u64 = 1;
const FLAG_MEAN_POOL: u64 = 1 << 1;
const FLAG_THETA: u64 = 1 << 2;
const FLAG_STATIC: u64 = 1 << 3;

pub fn encode_checkpoint(model: &Model, optimizer: Option<&AdamState>) -> Vec<u8> {
    let cfg = model.config();
    let mut out = Vec::with_capacity(64 + 8 * model.params().num_scalars() * 3);
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let mut flags = 0;
    if cfg.delta_transform == DeltaTransform::LogDecay {
        flags |= FLAG_LOG_DECAY;
    }
    if cfg.pooling == PoolKind::Mean {
        flags |= FLAG_MEAN_POOL;
    }
    if cfg.use_theta {
        flags |= FLAG_THETA;
    }
    if cfg.mode == EncoderMode::Static {
        flags |= FLAG_STATIC;
    }
    for v in [cfg.d as u64, cfg.hidden as u64, cfg.k as u64, flags] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&cfg.delta_scale.to_le_bytes());
    out.extend_from_slice(&(model.num_users() as u64).to_le_bytes());
    out.extend_from_slice(&(model.num_items() as u64).to_le_bytes());
    for (_, p) in model.params().iter() {
        put_tensor(&mut out, &p.value);
    }
    if let Some(opt) = optimizer {
        out.extend_from_slice(OPTIMIZER_MAGIC);
        out.extend_from_slice(&opt.step.to_le_bytes());
        for t in opt.first.iter().chain(&opt.second) {
            put_tensor(&mut out, t);
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn put_tensor(out: &mut Vec<u8>, t: &Tensor) {
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn tensor(&mut self, rows: usize, cols: usize) -> Result<Tensor> {
        let data = (0..rows * cols).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Tensor::from_vec(rows, cols, data)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(Model, Option<AdamState>)> {
    if bytes.len() < 12 {
        return Err(Error::Checkpoint("truncated".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(Error::Checkpoint("crc mismatch".into()));
    }
    let mut r = Reader { bytes: body, pos: 0 };
    if r.take(8)? != MODEL_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let d = r.u64()? as usize;
    let hidden = r.u64()? as usize;
    let k = r.u64()? as usize;
    let flags = r.u64()?;
    let delta_scale = r.f64()?;
    let cfg = ModelConfig {
        d,
        hidden,
        k,
        delta_transform: if flags & FLAG_LOG_DECAY != 0 { DeltaTransform::LogDecay } else { DeltaTransform::Raw },
        pooling: if flags & FLAG_MEAN_POOL != 0 { PoolKind::Mean } else { PoolKind::Max },
        use_theta: flags & FLAG_THETA != 0,
        mode: if flags & FLAG_STATIC != 0 { EncoderMode::Static } else { EncoderMode::Temporal },
        delta_scale,
    };
    cfg.validate()?;
    let num_users = r.u64()? as usize;
    let num_items = r.u64()? as usize;

    let mut shapes = vec![(num_users + num_items + 1, d)];
    if cfg.mode == EncoderMode::Temporal {
        for _ in 0..3 {
            shapes.extend([(hidden, d), (hidden, 1), (hidden, hidden), (hidden, 1), (hidden, 1), (hidden, 1)]);
        }
    }
    if cfg.use_theta {
        shapes.push((hidden, hidden));
    }
    let values = shapes.iter().map(|&(a, b)| r.tensor(a, b)).collect::<Result<Vec<_>>>()?;
    let model = Model::from_parts(cfg, num_users, num_items, values)?;

    let optimizer = if r.pos == body.len() {
        None
    } else {
        if r.take(8)? != OPTIMIZER_MAGIC {
            return Err(Error::Checkpoint("unexpected trailing data".into()));
        }
        let step = r.u64()?;
        let first = shapes.iter().map(|&(a, b)| r.tensor(a, b)).collect::<Result<Vec<_>>>()?;
        let second = shapes.iter().map(|&(a, b)| r.tensor(a, b)).collect::<Result<Vec<_>>>()?;
        Some(AdamState { step, first, second })
    };
    if r.pos != body.len() {
        return Err(Error::Checkpoint("unexpected trailing data".into()));
    }
    Ok((model, optimizer))
}
