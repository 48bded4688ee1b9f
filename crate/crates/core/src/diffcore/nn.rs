//! Small learned building blocks on top of the tape: multi-layer
//! perceptrons and a gated recurrent unit cell.

use rand::Rng;

use super::store::ParameterStore;
use super::tape::{Tape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    fn apply(self, tape: &mut Tape, x: Tensor) -> Tensor {
        match self {
            Activation::Linear => x,
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
            Activation::Sigmoid => tape.sigmoid(x),
        }
    }
}

/// Layer widths and parameter naming for an MLP. `widths = [in, h1, .., out]`
/// gives `widths.len() - 1` affine layers; the activation is applied between
/// layers and never after the last one, so a single-layer MLP is affine.
#[derive(Debug, Clone)]
pub struct MlpSpec {
    pub prefix: String,
    pub widths: Vec<usize>,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(prefix: &str, widths: Vec<usize>, activation: Activation) -> Self {
        assert!(widths.len() >= 2, "MLP needs at least one layer");
        Self { prefix: prefix.to_string(), widths, activation }
    }

    pub fn in_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    fn weight_name(&self, layer: usize) -> String {
        format!("{}.w{}", self.prefix, layer)
    }

    fn bias_name(&self, layer: usize) -> String {
        format!("{}.b{}", self.prefix, layer)
    }

    /// Glorot-uniform weights, zero biases.
    pub fn register(&self, store: &mut ParameterStore, rng: &mut impl Rng) {
        for l in 0..self.widths.len() - 1 {
            store.register_glorot(&self.weight_name(l), self.widths[l], self.widths[l + 1], rng);
            store.register_zeros(&self.bias_name(l), 1, self.widths[l + 1]);
        }
    }

    /// Check that a loaded store carries all layers with matching shapes.
    pub fn expect(&self, store: &ParameterStore) -> Result<(), super::store::CheckpointError> {
        for l in 0..self.widths.len() - 1 {
            store.expect(&self.weight_name(l), self.widths[l], self.widths[l + 1])?;
            store.expect(&self.bias_name(l), 1, self.widths[l + 1])?;
        }
        Ok(())
    }

    /// `x` is `batch x in_dim`; returns `batch x out_dim`.
    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, x: Tensor) -> Tensor {
        assert_eq!(x.cols(), self.in_dim(), "MLP {} expects input width {}, got {}", self.prefix, self.in_dim(), x.cols());
        let last = self.widths.len() - 2;
        let mut h = x;
        for l in 0..=last {
            let w = tape.param(store, &self.weight_name(l));
            let b = tape.param(store, &self.bias_name(l));
            let z = tape.matmul(h, w);
            h = tape.add_row_vec(z, b);
            if l != last {
                h = self.activation.apply(tape, h);
            }
        }
        h
    }
}

/// Convenience free-function form of [`MlpSpec::forward`].
pub fn mlp_forward(tape: &mut Tape, store: &ParameterStore, spec: &MlpSpec, x: Tensor) -> Tensor {
    spec.forward(tape, store, x)
}

/// Parameter naming for one GRU cell of width `dim`.
#[derive(Debug, Clone)]
pub struct GruSpec {
    pub prefix: String,
    pub dim: usize,
}

impl GruSpec {
    pub fn new(prefix: &str, dim: usize) -> Self {
        Self { prefix: prefix.to_string(), dim }
    }

    const GATES: [&'static str; 3] = ["update", "reset", "cand"];

    fn names(&self, gate: &str) -> (String, String, String) {
        (
            format!("{}.{gate}.wx", self.prefix),
            format!("{}.{gate}.wh", self.prefix),
            format!("{}.{gate}.b", self.prefix),
        )
    }

    pub fn register(&self, store: &mut ParameterStore, rng: &mut impl Rng) {
        for gate in Self::GATES {
            let (wx, wh, b) = self.names(gate);
            store.register_glorot(&wx, self.dim, self.dim, rng);
            store.register_glorot(&wh, self.dim, self.dim, rng);
            store.register_zeros(&b, 1, self.dim);
        }
    }

    pub fn expect(&self, store: &ParameterStore) -> Result<(), super::store::CheckpointError> {
        for gate in Self::GATES {
            let (wx, wh, b) = self.names(gate);
            store.expect(&wx, self.dim, self.dim)?;
            store.expect(&wh, self.dim, self.dim)?;
            store.expect(&b, 1, self.dim)?;
        }
        Ok(())
    }

    /// One GRU step, batched over rows:
    ///
    /// ```text
    /// z = sigmoid(x Wxz + h Whz + bz)
    /// r = sigmoid(x Wxr + h Whr + br)
    /// c = tanh(x Wxc + (r . h) Whc + bc)
    /// h' = (1 - z) . h + z . c
    /// ```
    pub fn cell(&self, tape: &mut Tape, store: &ParameterStore, h_prev: Tensor, x: Tensor) -> Tensor {
        assert_eq!(h_prev.cols(), self.dim, "GRU state width");
        assert_eq!(x.cols(), self.dim, "GRU input width");
        assert_eq!(h_prev.rows(), x.rows(), "GRU batch mismatch");
        let gate = |tape: &mut Tape, names: (String, String, String), hin: Tensor| {
            let wx = tape.param(store, &names.0);
            let wh = tape.param(store, &names.1);
            let b = tape.param(store, &names.2);
            let xs = tape.matmul(x, wx);
            let hs = tape.matmul(hin, wh);
            let s = tape.add(xs, hs);
            tape.add_row_vec(s, b)
        };
        let z_pre = gate(tape, self.names("update"), h_prev);
        let z = tape.sigmoid(z_pre);
        let r_pre = gate(tape, self.names("reset"), h_prev);
        let r = tape.sigmoid(r_pre);
        let rh = tape.mul(r, h_prev);
        let c_pre = gate(tape, self.names("cand"), rh);
        let c = tape.tanh(c_pre);
        // (1 - z) . h + z . c  ==  h + z . (c - h)
        let diff = tape.sub(c, h_prev);
        let zd = tape.mul(z, diff);
        tape.add(h_prev, zd)
    }
}

/// Free-function form of [`GruSpec::cell`].
pub fn gru_cell(tape: &mut Tape, store: &ParameterStore, spec: &GruSpec, h_prev: Tensor, x: Tensor) -> Tensor {
    spec.cell(tape, store, h_prev, x)
}
