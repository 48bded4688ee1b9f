//! Named parameter storage, Adam updates, and binary checkpoints.
//!
//! Checkpoint layout (version 1, all integers little-endian):
//!
//! ```text
//! magic   4 bytes  b"SCK1"
//! version u32      1
//! step    u64      optimizer step counter
//! count   u64      number of parameters
//! then per parameter, in insertion order:
//!   name_len u32, name bytes (UTF-8)
//!   rows u64, cols u64
//!   values rows*cols f64   (row-major)
//!   adam_m rows*cols f64
//!   adam_v rows*cols f64
//! ```
//!
//! Saving and re-loading is bit-exact. Loads reject bad magic, unknown
//! versions, and inconsistent lengths; shape expectations of a concrete
//! model are checked with [`ParameterStore::expect`].

use std::collections::HashMap;
use std::io::{self, Read, Write};

use rand::Rng;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"SCK1";
const VERSION: u32 = 1;

/// Default Adam hyper-parameters.
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic bytes; not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("parameter {name}: expected shape {want_rows}x{want_cols}, found {got_rows}x{got_cols}")]
    ShapeMismatch { name: String, want_rows: usize, want_cols: usize, got_rows: usize, got_cols: usize },
    #[error("parameter {0} missing from checkpoint")]
    MissingParam(String),
}

struct Slot {
    name: String,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    grad: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Named parameters with stable insertion order plus per-parameter Adam
/// moments and a shared step counter.
#[derive(Default)]
pub struct ParameterStore {
    slots: Vec<Slot>,
    index: HashMap<String, usize>,
    step: u64,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn insert(&mut self, name: &str, rows: usize, cols: usize, values: Vec<f64>) {
        assert!(!self.index.contains_key(name), "duplicate parameter {name:?}");
        assert_eq!(values.len(), rows * cols);
        let n = rows * cols;
        self.index.insert(name.to_string(), self.slots.len());
        self.slots.push(Slot {
            name: name.to_string(),
            rows,
            cols,
            values,
            grad: vec![0.0; n],
            m: vec![0.0; n],
            v: vec![0.0; n],
        });
    }

    /// Register a parameter initialized uniformly in `(-a, a)` with
    /// `a = sqrt(6 / (rows + cols))`.
    pub fn register_glorot(&mut self, name: &str, rows: usize, cols: usize, rng: &mut impl Rng) {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        let values = (0..rows * cols)
            .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * a)
            .collect();
        self.insert(name, rows, cols, values);
    }

    pub fn register_zeros(&mut self, name: &str, rows: usize, cols: usize) {
        self.insert(name, rows, cols, vec![0.0; rows * cols]);
    }

    pub fn register_values(&mut self, name: &str, rows: usize, cols: usize, values: Vec<f64>) {
        self.insert(name, rows, cols, values);
    }

    /// Shape and values of a parameter.
    pub fn entry(&self, name: &str) -> Option<(usize, usize, &[f64])> {
        let slot = &self.slots[*self.index.get(name)?];
        Some((slot.rows, slot.cols, &slot.values))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    /// Overwrite a parameter's values, keeping moments; for tests and
    /// finite-difference probing.
    pub fn set_values(&mut self, name: &str, values: &[f64]) {
        let slot = &mut self.slots[*self.index.get(name).expect("unknown parameter")];
        assert_eq!(values.len(), slot.values.len(), "set_values length");
        slot.values.copy_from_slice(values);
    }

    pub fn add_grad(&mut self, name: &str, grad: &[f64]) {
        let slot = &mut self.slots[*self.index.get(name).expect("unknown parameter")];
        assert_eq!(grad.len(), slot.grad.len(), "grad length");
        for (a, g) in slot.grad.iter_mut().zip(grad) {
            *a += g;
        }
    }

    pub fn grad(&self, name: &str) -> Option<&[f64]> {
        Some(&self.slots[*self.index.get(name)?].grad)
    }

    pub fn clear_grads(&mut self) {
        for slot in &mut self.slots {
            slot.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Parameter names in insertion order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.slots.iter().map(|s| s.name.as_str())
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.slots.iter().map(|s| s.values.len()).sum()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// One Adam update with default `beta1/beta2/eps`; clears gradients.
    pub fn adam_step(&mut self, lr: f64) {
        self.adam_step_with(lr, ADAM_BETA1, ADAM_BETA2, ADAM_EPS)
    }

    /// Bias-corrected Adam. Gradients are cleared after the update.
    pub fn adam_step_with(&mut self, lr: f64, beta1: f64, beta2: f64, eps: f64) {
        self.step += 1;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for slot in &mut self.slots {
            for k in 0..slot.values.len() {
                let g = slot.grad[k];
                slot.m[k] = beta1 * slot.m[k] + (1.0 - beta1) * g;
                slot.v[k] = beta2 * slot.v[k] + (1.0 - beta2) * g * g;
                let m_hat = slot.m[k] / bc1;
                let v_hat = slot.v[k] / bc2;
                slot.values[k] -= lr * m_hat / (v_hat.sqrt() + eps);
                slot.grad[k] = 0.0;
            }
        }
    }

    // ---- checkpoints ----

    pub fn save(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&self.step.to_le_bytes())?;
        w.write_all(&(self.slots.len() as u64).to_le_bytes())?;
        for slot in &self.slots {
            let name = slot.name.as_bytes();
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name)?;
            w.write_all(&(slot.rows as u64).to_le_bytes())?;
            w.write_all(&(slot.cols as u64).to_le_bytes())?;
            for part in [&slot.values, &slot.m, &slot.v] {
                for x in part.iter() {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn save_to_vec(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.save(&mut buf).expect("write to Vec cannot fail");
        buf
    }

    pub fn load(r: &mut impl Read) -> Result<Self, CheckpointError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(CheckpointError::BadVersion(version));
        }
        let step = read_u64(r)?;
        let count = read_u64(r)? as usize;
        let mut store = Self { step, ..Self::default() };
        for _ in 0..count {
            let name_len = read_u32(r)? as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name)
                .map_err(|_| CheckpointError::Corrupt("non-UTF8 parameter name".into()))?;
            let rows = read_u64(r)? as usize;
            let cols = read_u64(r)? as usize;
            let n = rows
                .checked_mul(cols)
                .ok_or_else(|| CheckpointError::Corrupt(format!("overflowing shape for {name}")))?;
            let values = read_f64s(r, n)?;
            let m = read_f64s(r, n)?;
            let v = read_f64s(r, n)?;
            if store.index.contains_key(&name) {
                return Err(CheckpointError::Corrupt(format!("duplicate parameter {name}")));
            }
            store.index.insert(name.clone(), store.slots.len());
            store.slots.push(Slot { name, rows, cols, values, grad: vec![0.0; n], m, v });
        }
        Ok(store)
    }

    /// Check that a parameter exists with the given shape.
    pub fn expect(&self, name: &str, rows: usize, cols: usize) -> Result<(), CheckpointError> {
        match self.entry(name) {
            None => Err(CheckpointError::MissingParam(name.to_string())),
            Some((r, c, _)) if (r, c) != (rows, cols) => Err(CheckpointError::ShapeMismatch {
                name: name.to_string(),
                want_rows: rows,
                want_cols: cols,
                got_rows: r,
                got_cols: c,
            }),
            Some(_) => Ok(()),
        }
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64, CheckpointError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>, CheckpointError> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
