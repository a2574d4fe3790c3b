//! Model checkpoints.
//!
//! Little-endian layout:
//!
//! ```text
//! magic        4 bytes   "ISCK"
//! version      u32       1
//! variant      u32       0 inset, 1 deepsets-only
//! mode         u32       0 exact, 1 variational, 2 direct
//! d, h, h_d    3 × u32
//! tensors      u32 count, then per tensor: rows u32, cols u32, rows·cols f64
//! has_state    u8        0 or 1
//! state        (only if has_state = 1)
//!   epoch        u32     completed epochs
//!   adam_step    u64
//!   best_epoch   u32
//!   since_best   u32
//!   best_val     f64
//!   tensor lists: first moments, second moments, best parameters
//!                (each a u32 count followed by shape-headered tensors)
//! ```
//!
//! The parameter tensors appear in `PARAM_NAMES` order.

use std::fs;
use std::path::Path;

use crate::model::{Dims, InsetModel, ModelError, ModelVariant, PARAM_NAMES};
use crate::prob::TrainMode;
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"ISCK";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("unknown {field} code {code}")]
    UnknownCode { field: &'static str, code: u32 },
    #[error("checkpoint holds {got} tensors, expected {expected}")]
    TensorCount { expected: usize, got: usize },
    #[error("{0} trailing bytes after checkpoint")]
    TrailingBytes(usize),
    #[error("checkpoint was trained on d={found}, data has d={expected}")]
    FeatureWidth { expected: usize, found: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("cannot read checkpoint {path}: {source}")]
    Read {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Optimizer and early-stopping state needed to resume training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub epoch: u32,
    pub adam_step: u64,
    pub best_epoch: u32,
    pub since_best: u32,
    pub best_val: f64,
    pub first_moments: Vec<Tensor>,
    pub second_moments: Vec<Tensor>,
    pub best_params: Vec<Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: InsetModel,
    pub mode: TrainMode,
    pub state: Option<TrainState>,
}

fn variant_code(v: ModelVariant) -> u32 {
    match v {
        ModelVariant::Inset => 0,
        ModelVariant::DeepSetsOnly => 1,
    }
}

fn mode_code(m: TrainMode) -> u32 {
    match m {
        TrainMode::Exact => 0,
        TrainMode::Variational => 1,
        TrainMode::Direct => 2,
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_tensors(out: &mut Vec<u8>, ts: &[Tensor]) {
    put_u32(out, ts.len());
    for t in ts {
        put_u32(out, t.rows());
        put_u32(out, t.cols());
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let out = self.bytes.get(self.pos..end).ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn tensors(&mut self) -> Result<Vec<Tensor>, CheckpointError> {
        let count = self.u32()? as usize;
        let mut out = Vec::with_capacity(count.min(64));
        for _ in 0..count {
            let rows = self.u32()? as usize;
            let cols = self.u32()? as usize;
            let len = rows.checked_mul(cols).ok_or(CheckpointError::Truncated)?;
            if len.saturating_mul(8) > self.bytes.len() - self.pos {
                return Err(CheckpointError::Truncated);
            }
            let data = (0..len).map(|_| self.f64()).collect::<Result<Vec<_>, _>>()?;
            out.push(Tensor::from_vec(rows, cols, data).expect("length checked"));
        }
        Ok(out)
    }
}

impl Checkpoint {
    pub fn new(model: InsetModel, mode: TrainMode) -> Self {
        Checkpoint {
            model,
            mode,
            state: None,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&variant_code(self.model.variant).to_le_bytes());
        out.extend_from_slice(&mode_code(self.mode).to_le_bytes());
        let Dims { d, h, h_d } = self.model.dims;
        for v in [d, h, h_d] {
            put_u32(&mut out, v);
        }
        put_tensors(&mut out, &self.model.params.to_vec());
        match &self.state {
            None => out.push(0),
            Some(s) => {
                out.push(1);
                out.extend_from_slice(&s.epoch.to_le_bytes());
                out.extend_from_slice(&s.adam_step.to_le_bytes());
                out.extend_from_slice(&s.best_epoch.to_le_bytes());
                out.extend_from_slice(&s.since_best.to_le_bytes());
                out.extend_from_slice(&s.best_val.to_le_bytes());
                put_tensors(&mut out, &s.first_moments);
                put_tensors(&mut out, &s.second_moments);
                put_tensors(&mut out, &s.best_params);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4).map_err(|_| CheckpointError::BadMagic)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::VersionMismatch {
                found: version,
                expected: VERSION,
            });
        }
        let variant = match r.u32()? {
            0 => ModelVariant::Inset,
            1 => ModelVariant::DeepSetsOnly,
            code => return Err(CheckpointError::UnknownCode { field: "variant", code }),
        };
        let mode = match r.u32()? {
            0 => TrainMode::Exact,
            1 => TrainMode::Variational,
            2 => TrainMode::Direct,
            code => return Err(CheckpointError::UnknownCode { field: "mode", code }),
        };
        let dims = Dims {
            d: r.u32()? as usize,
            h: r.u32()? as usize,
            h_d: r.u32()? as usize,
        };
        let params = r.tensors()?;
        if params.len() != PARAM_NAMES.len() {
            return Err(CheckpointError::TensorCount {
                expected: PARAM_NAMES.len(),
                got: params.len(),
            });
        }
        let mut model = InsetModel::zeros(variant, dims);
        model.params.assign(&params)?;
        let state = match r.u8()? {
            0 => None,
            1 => {
                let epoch = r.u32()?;
                let adam_step = r.u64()?;
                let best_epoch = r.u32()?;
                let since_best = r.u32()?;
                let best_val = r.f64()?;
                let first_moments = r.tensors()?;
                let second_moments = r.tensors()?;
                let best_params = r.tensors()?;
                for list in [&first_moments, &second_moments, &best_params] {
                    // Shapes are checked against the model by assigning.
                    InsetModel::zeros(variant, dims).params.assign(list)?;
                }
                Some(TrainState {
                    epoch,
                    adam_step,
                    best_epoch,
                    since_best,
                    best_val,
                    first_moments,
                    second_moments,
                    best_params,
                })
            }
            code => {
                return Err(CheckpointError::UnknownCode {
                    field: "state flag",
                    code: code as u32,
                })
            }
        };
        if r.pos != bytes.len() {
            return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos));
        }
        Ok(Checkpoint { model, mode, state })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| CheckpointError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }

    /// Rejects data whose feature width differs from the model's.
    pub fn check_width(&self, d: usize) -> Result<(), CheckpointError> {
        if self.model.dims.d != d {
            return Err(CheckpointError::FeatureWidth {
                expected: d,
                found: self.model.dims.d,
            });
        }
        Ok(())
    }
}
