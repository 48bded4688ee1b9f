//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation of a forward computation as a node in
//! an append-only arena. [`Tensor`] handles are cheap copies that index into
//! the tape. Calling [`Tape::backward`] on a scalar output walks the arena in
//! reverse and accumulates adjoints for every node, which can then be read
//! off per tensor or folded into a [`ParameterStore`].
//!
//! Everything is 64-bit and single-threaded per tape; distinct tapes are
//! independent. Shape mismatches are programming errors and panic.

use std::rc::Rc;

use super::matrix::DenseMatrix;
use super::store::ParameterStore;

/// Handle to a node on a [`Tape`]. Carries its shape for cheap checking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tensor {
    pub(crate) id: usize,
    pub(crate) rows: usize,
    pub(crate) cols: usize,
}

impl Tensor {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Sparse matrix in adjacency-list form, attached to tape nodes as a
/// constant operator. Both orientations are stored so the backward pass can
/// multiply by the transpose without rebuilding.
#[derive(Debug, Clone)]
pub struct SparseMat {
    rows: usize,
    cols: usize,
    fwd: Vec<Vec<(usize, f64)>>,
    bwd: Vec<Vec<(usize, f64)>>,
}

impl SparseMat {
    /// Build from `(row, col, value)` triples. Entries in each row are kept
    /// sorted by column so multiplication order is canonical.
    pub fn from_triples(rows: usize, cols: usize, triples: &[(usize, usize, f64)]) -> Self {
        let mut fwd = vec![Vec::new(); rows];
        let mut bwd = vec![Vec::new(); cols];
        for &(r, c, v) in triples {
            assert!(r < rows && c < cols, "sparse entry ({r},{c}) out of {rows}x{cols}");
            fwd[r].push((c, v));
            bwd[c].push((r, v));
        }
        for row in fwd.iter_mut().chain(bwd.iter_mut()) {
            row.sort_by_key(|&(j, _)| j);
        }
        Self { rows, cols, fwd, bwd }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Entries of one row, sorted by column.
    pub fn row_entries(&self, r: usize) -> &[(usize, f64)] {
        &self.fwd[r]
    }

    fn apply(&self, entries: &[Vec<(usize, f64)>], x: &[f64], x_cols: usize, out: &mut [f64]) {
        for (i, row) in entries.iter().enumerate() {
            let dst = &mut out[i * x_cols..(i + 1) * x_cols];
            for &(j, w) in row {
                let src = &x[j * x_cols..(j + 1) * x_cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
    }
}

enum Op {
    Constant,
    Param(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    MatMul(usize, usize),
    Transpose(usize),
    /// `a (m x n) + b (1 x n)` broadcast over rows.
    AddRowVec(usize, usize),
    /// `a (m x n) + b (m x 1)` broadcast over columns.
    AddColVec(usize, usize),
    /// Row `i` of `a` scaled by `s[i]`, `s` being `m x 1`.
    ScaleRows(usize, usize),
    Relu(usize),
    Tanh(usize),
    Sigmoid(usize),
    Exp(usize),
    Abs(usize),
    Scale(usize, f64),
    AddScalar(usize),
    SumAll(usize),
    RowLse(usize),
    ColLse(usize),
    RowMax(usize),
    ColMax(usize),
    RowNorm(usize),
    L2NormalizeRows(usize),
    ConcatRows(Vec<usize>),
    ConcatCols(Vec<usize>),
    GatherRows(usize, Rc<Vec<usize>>),
    ScatterAddRows(usize, Rc<Vec<usize>>),
    SparseMatMul(Rc<SparseMat>, usize),
    /// Per output row `i`: element-wise max over the input rows listed in
    /// `adj[i]`; zero when the list is empty.
    NeighborMax(usize, Rc<Vec<Vec<usize>>>),
    /// A balanced log-transport-plan over `scores / tau` whose backward pass
    /// applies the implicit-function adjoint of the balance conditions.
    SinkhornImplicit(usize, f64),
}

struct Node {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    op: Op,
}

/// Adjoints produced by [`Tape::backward`], indexed by tensor.
pub struct Gradients {
    grads: Vec<Vec<f64>>,
}

impl Gradients {
    /// Gradient of the backward output with respect to `t`, row-major.
    pub fn wrt(&self, t: Tensor) -> &[f64] {
        &self.grads[t.id]
    }
}

/// Guard for the denominator in L2 normalization of a zero row.
pub const L2_NORM_EPS: f64 = 1e-12;

/// Append-only record of a forward computation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_names: Vec<String>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    fn push(&mut self, rows: usize, cols: usize, values: Vec<f64>, op: Op) -> Tensor {
        debug_assert_eq!(values.len(), rows * cols);
        let id = self.nodes.len();
        self.nodes.push(Node { rows, cols, values, op });
        Tensor { id, rows, cols }
    }

    fn values(&self, id: usize) -> &[f64] {
        &self.nodes[id].values
    }

    /// Raw row-major values of a tensor.
    pub fn value(&self, t: Tensor) -> &[f64] {
        self.values(t.id)
    }

    /// Value of a `1 x 1` tensor.
    pub fn scalar_value(&self, t: Tensor) -> f64 {
        assert_eq!((t.rows, t.cols), (1, 1), "scalar_value on {}x{}", t.rows, t.cols);
        self.nodes[t.id].values[0]
    }

    /// Copy a tensor's values into an owned matrix.
    pub fn to_matrix(&self, t: Tensor) -> DenseMatrix {
        DenseMatrix::from_vec(t.rows, t.cols, self.value(t).to_vec())
    }

    // ---- leaves ----

    pub fn constant(&mut self, m: &DenseMatrix) -> Tensor {
        self.push(m.rows(), m.cols(), m.data().to_vec(), Op::Constant)
    }

    pub fn constant_vec(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
        assert_eq!(data.len(), rows * cols, "constant data length");
        self.push(rows, cols, data, Op::Constant)
    }

    pub fn scalar(&mut self, v: f64) -> Tensor {
        self.push(1, 1, vec![v], Op::Constant)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Tensor {
        self.push(rows, cols, vec![0.0; rows * cols], Op::Constant)
    }

    /// Leaf bound to a named parameter; [`Tape::param_grads`] later reports
    /// the adjoint under the same name.
    pub fn param(&mut self, store: &ParameterStore, name: &str) -> Tensor {
        let (rows, cols, values) = store
            .entry(name)
            .unwrap_or_else(|| panic!("unknown parameter {name:?}"));
        let idx = self.param_names.len();
        self.param_names.push(name.to_string());
        self.push(rows, cols, values.to_vec(), Op::Param(idx))
    }

    // ---- element-wise and broadcast arithmetic ----

    fn zip(&mut self, a: Tensor, b: Tensor, op: Op, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!((a.rows, a.cols), (b.rows, b.cols), "elementwise shape {}x{} vs {}x{}", a.rows, a.cols, b.rows, b.cols);
        let data = self
            .values(a.id)
            .iter()
            .zip(self.values(b.id))
            .map(|(&x, &y)| f(x, y))
            .collect();
        self.push(a.rows, a.cols, data, op)
    }

    pub fn add(&mut self, a: Tensor, b: Tensor) -> Tensor {
        self.zip(a, b, Op::Add(a.id, b.id), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Tensor, b: Tensor) -> Tensor {
        self.zip(a, b, Op::Sub(a.id, b.id), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Tensor, b: Tensor) -> Tensor {
        self.zip(a, b, Op::Mul(a.id, b.id), |x, y| x * y)
    }

    pub fn add_row_vec(&mut self, a: Tensor, b: Tensor) -> Tensor {
        assert_eq!((b.rows, b.cols), (1, a.cols), "add_row_vec wants 1x{}, got {}x{}", a.cols, b.rows, b.cols);
        let bv = self.values(b.id).to_vec();
        let data = self
            .values(a.id)
            .iter()
            .enumerate()
            .map(|(i, &x)| x + bv[i % a.cols])
            .collect();
        self.push(a.rows, a.cols, data, Op::AddRowVec(a.id, b.id))
    }

    pub fn add_col_vec(&mut self, a: Tensor, b: Tensor) -> Tensor {
        assert_eq!((b.rows, b.cols), (a.rows, 1), "add_col_vec wants {}x1, got {}x{}", a.rows, b.rows, b.cols);
        let bv = self.values(b.id).to_vec();
        let data = self
            .values(a.id)
            .iter()
            .enumerate()
            .map(|(i, &x)| x + bv[i / a.cols])
            .collect();
        self.push(a.rows, a.cols, data, Op::AddColVec(a.id, b.id))
    }

    pub fn scale_rows(&mut self, a: Tensor, s: Tensor) -> Tensor {
        assert_eq!((s.rows, s.cols), (a.rows, 1), "scale_rows wants {}x1, got {}x{}", a.rows, s.rows, s.cols);
        let sv = self.values(s.id).to_vec();
        let data = self
            .values(a.id)
            .iter()
            .enumerate()
            .map(|(i, &x)| x * sv[i / a.cols])
            .collect();
        self.push(a.rows, a.cols, data, Op::ScaleRows(a.id, s.id))
    }

    fn unary(&mut self, a: Tensor, op: Op, f: impl Fn(f64) -> f64) -> Tensor {
        let data = self.values(a.id).iter().map(|&x| f(x)).collect();
        self.push(a.rows, a.cols, data, op)
    }

    pub fn relu(&mut self, a: Tensor) -> Tensor {
        self.unary(a, Op::Relu(a.id), |x| x.max(0.0))
    }

    pub fn tanh(&mut self, a: Tensor) -> Tensor {
        self.unary(a, Op::Tanh(a.id), f64::tanh)
    }

    pub fn sigmoid(&mut self, a: Tensor) -> Tensor {
        self.unary(a, Op::Sigmoid(a.id), |x| 1.0 / (1.0 + (-x).exp()))
    }

    pub fn exp(&mut self, a: Tensor) -> Tensor {
        self.unary(a, Op::Exp(a.id), f64::exp)
    }

    pub fn abs(&mut self, a: Tensor) -> Tensor {
        self.unary(a, Op::Abs(a.id), f64::abs)
    }

    pub fn scale(&mut self, a: Tensor, c: f64) -> Tensor {
        self.unary(a, Op::Scale(a.id, c), |x| x * c)
    }

    pub fn add_scalar(&mut self, a: Tensor, c: f64) -> Tensor {
        self.unary(a, Op::AddScalar(a.id), |x| x + c)
    }

    pub fn neg(&mut self, a: Tensor) -> Tensor {
        self.scale(a, -1.0)
    }

    // ---- linear algebra ----

    pub fn matmul(&mut self, a: Tensor, b: Tensor) -> Tensor {
        assert_eq!(a.cols, b.rows, "matmul {}x{} . {}x{}", a.rows, a.cols, b.rows, b.cols);
        let (m, k, n) = (a.rows, a.cols, b.cols);
        let av = self.values(a.id);
        let bv = self.values(b.id);
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let x = av[i * k + p];
                if x == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                let drow = &mut data[i * n..(i + 1) * n];
                for (d, &y) in drow.iter_mut().zip(brow) {
                    *d += x * y;
                }
            }
        }
        self.push(m, n, data, Op::MatMul(a.id, b.id))
    }

    pub fn transpose(&mut self, a: Tensor) -> Tensor {
        let (m, n) = (a.rows, a.cols);
        let av = self.values(a.id);
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = av[i * n + j];
            }
        }
        self.push(n, m, data, Op::Transpose(a.id))
    }

    pub fn sparse_matmul(&mut self, mat: Rc<SparseMat>, x: Tensor) -> Tensor {
        assert_eq!(mat.cols(), x.rows, "sparse_matmul {}x{} . {}x{}", mat.rows(), mat.cols(), x.rows, x.cols);
        let mut data = vec![0.0; mat.rows() * x.cols];
        mat.apply(&mat.fwd, self.values(x.id), x.cols, &mut data);
        self.push(mat.rows(), x.cols, data, Op::SparseMatMul(mat, x.id))
    }

    // ---- reductions ----

    pub fn sum_all(&mut self, a: Tensor) -> Tensor {
        let s = self.values(a.id).iter().sum();
        self.push(1, 1, vec![s], Op::SumAll(a.id))
    }

    /// Log-sum-exp of each row, computed stably; `m x n -> m x 1`.
    pub fn row_lse(&mut self, a: Tensor) -> Tensor {
        let data = (0..a.rows)
            .map(|i| {
                let row = &self.values(a.id)[i * a.cols..(i + 1) * a.cols];
                lse(row.iter().copied())
            })
            .collect();
        self.push(a.rows, 1, data, Op::RowLse(a.id))
    }

    /// Log-sum-exp of each column; `m x n -> 1 x n`.
    pub fn col_lse(&mut self, a: Tensor) -> Tensor {
        let v = self.values(a.id);
        let data = (0..a.cols)
            .map(|j| lse((0..a.rows).map(|i| v[i * a.cols + j])))
            .collect();
        self.push(1, a.cols, data, Op::ColLse(a.id))
    }

    /// Maximum of each row; `m x n -> m x 1`. Backward routes to the first
    /// index attaining the maximum.
    pub fn row_max(&mut self, a: Tensor) -> Tensor {
        let data = (0..a.rows)
            .map(|i| {
                let row = &self.values(a.id)[i * a.cols..(i + 1) * a.cols];
                row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        self.push(a.rows, 1, data, Op::RowMax(a.id))
    }

    /// Maximum of each column; `m x n -> 1 x n`. First row wins ties.
    pub fn col_max(&mut self, a: Tensor) -> Tensor {
        let v = self.values(a.id);
        let data = (0..a.cols)
            .map(|j| (0..a.rows).map(|i| v[i * a.cols + j]).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        self.push(1, a.cols, data, Op::ColMax(a.id))
    }

    /// Euclidean norm of each row; `m x n -> m x 1`. Zero rows get a zero
    /// subgradient.
    pub fn row_norm(&mut self, a: Tensor) -> Tensor {
        let data = (0..a.rows)
            .map(|i| {
                let row = &self.values(a.id)[i * a.cols..(i + 1) * a.cols];
                row.iter().map(|x| x * x).sum::<f64>().sqrt()
            })
            .collect();
        self.push(a.rows, 1, data, Op::RowNorm(a.id))
    }

    /// Each row divided by its Euclidean norm plus [`L2_NORM_EPS`]; a zero
    /// row stays zero rather than erroring.
    pub fn l2_normalize_rows(&mut self, a: Tensor) -> Tensor {
        let mut data = self.values(a.id).to_vec();
        for i in 0..a.rows {
            let row = &mut data[i * a.cols..(i + 1) * a.cols];
            let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            let inv = 1.0 / (n + L2_NORM_EPS);
            for x in row {
                *x *= inv;
            }
        }
        self.push(a.rows, a.cols, data, Op::L2NormalizeRows(a.id))
    }

    // ---- structure ----

    pub fn concat_rows(&mut self, parts: &[Tensor]) -> Tensor {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        let cols = parts[0].cols;
        let rows = parts.iter().map(|p| p.rows).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for p in parts {
            assert_eq!(p.cols, cols, "concat_rows column mismatch");
            data.extend_from_slice(self.values(p.id));
        }
        self.push(rows, cols, data, Op::ConcatRows(parts.iter().map(|p| p.id).collect()))
    }

    pub fn concat_cols(&mut self, parts: &[Tensor]) -> Tensor {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let rows = parts[0].rows;
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut data = vec![0.0; rows * cols];
        let mut at = 0;
        for p in parts {
            assert_eq!(p.rows, rows, "concat_cols row mismatch");
            let pv = self.values(p.id);
            for r in 0..rows {
                data[r * cols + at..r * cols + at + p.cols]
                    .copy_from_slice(&pv[r * p.cols..(r + 1) * p.cols]);
            }
            at += p.cols;
        }
        self.push(rows, cols, data, Op::ConcatCols(parts.iter().map(|p| p.id).collect()))
    }

    /// Select rows by index (duplicates allowed); backward scatter-adds.
    pub fn gather_rows(&mut self, a: Tensor, idx: Rc<Vec<usize>>) -> Tensor {
        let mut data = Vec::with_capacity(idx.len() * a.cols);
        for &i in idx.iter() {
            assert!(i < a.rows, "gather_rows index {i} out of {}", a.rows);
            data.extend_from_slice(&self.values(a.id)[i * a.cols..(i + 1) * a.cols]);
        }
        self.push(idx.len(), a.cols, data, Op::GatherRows(a.id, idx))
    }

    /// Adds row `k` of `a` into output row `idx[k]` of a zero `rows x cols`
    /// matrix; the reverse of [`Tape::gather_rows`].
    pub fn scatter_add_rows(&mut self, a: Tensor, idx: Rc<Vec<usize>>, rows: usize) -> Tensor {
        assert_eq!(idx.len(), a.rows, "scatter_add_rows index count");
        let mut data = vec![0.0; rows * a.cols];
        for (k, &i) in idx.iter().enumerate() {
            assert!(i < rows, "scatter index {i} out of {rows}");
            let src = &self.values(a.id)[k * a.cols..(k + 1) * a.cols];
            for (d, s) in data[i * a.cols..(i + 1) * a.cols].iter_mut().zip(src) {
                *d += s;
            }
        }
        self.push(rows, a.cols, data, Op::ScatterAddRows(a.id, idx))
    }

    /// Element-wise max over the rows listed per output row; empty lists
    /// yield a zero row. Ties go to the earliest listed row.
    pub fn neighbor_max(&mut self, a: Tensor, adj: Rc<Vec<Vec<usize>>>) -> Tensor {
        let cols = a.cols;
        let mut data = vec![0.0; adj.len() * cols];
        let av = self.values(a.id);
        for (i, nbrs) in adj.iter().enumerate() {
            if nbrs.is_empty() {
                continue;
            }
            let dst = &mut data[i * cols..(i + 1) * cols];
            for (c, d) in dst.iter_mut().enumerate() {
                let mut best = f64::NEG_INFINITY;
                for &l in nbrs {
                    let v = av[l * cols + c];
                    if v > best {
                        best = v;
                    }
                }
                *d = best;
            }
        }
        self.push(adj.len(), cols, data, Op::NeighborMax(a.id, adj))
    }

    /// Attach an externally balanced log-plan for `scores / tau` computed
    /// off the tape. Gradients flow to `scores` via implicit differentiation
    /// of the marginal conditions, which is the derivative of the fully
    /// converged plan; the values must therefore be balanced to near the
    /// marginal tolerance.
    pub(crate) fn sinkhorn_implicit_node(
        &mut self,
        scores: Tensor,
        tau: f64,
        log_p: Vec<f64>,
    ) -> Tensor {
        let n = scores.rows;
        assert_eq!(scores.cols, n, "plan must be square");
        assert_eq!(log_p.len(), n * n, "log plan size");
        self.push(n, n, log_p, Op::SinkhornImplicit(scores.id, tau))
    }

    // ---- backward ----

    /// Reverse pass from a scalar output with adjoint 1.
    pub fn backward(&self, output: Tensor) -> Gradients {
        self.backward_seeded(output, 1.0)
    }

    /// Reverse pass from a scalar output with the given adjoint.
    pub fn backward_seeded(&self, output: Tensor, seed: f64) -> Gradients {
        assert_eq!((output.rows, output.cols), (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|n| vec![0.0; n.rows * n.cols])
            .collect();
        grads[output.id][0] = seed;
        for id in (0..self.nodes.len()).rev() {
            if grads[id].iter().all(|&g| g == 0.0) {
                continue;
            }
            self.backprop_node(id, &mut grads);
        }
        Gradients { grads }
    }

    fn backprop_node(&self, id: usize, grads: &mut [Vec<f64>]) {
        let node = &self.nodes[id];
        let (rows, cols) = (node.rows, node.cols);
        // The output adjoint is moved out to satisfy the borrow checker and
        // put back afterwards.
        let g = std::mem::take(&mut grads[id]);
        match &node.op {
            Op::Constant | Op::Param(_) => {}
            Op::Add(a, b) => {
                axpy(&mut grads[*a], &g, 1.0);
                axpy(&mut grads[*b], &g, 1.0);
            }
            Op::Sub(a, b) => {
                axpy(&mut grads[*a], &g, 1.0);
                axpy(&mut grads[*b], &g, -1.0);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.values(*a), self.values(*b));
                for (k, &gk) in g.iter().enumerate() {
                    grads[*a][k] += gk * bv[k];
                }
                for (k, &gk) in g.iter().enumerate() {
                    grads[*b][k] += gk * av[k];
                }
            }
            Op::MatMul(a, b) => {
                let (av, bv) = (self.values(*a), self.values(*b));
                let k = self.nodes[*a].cols;
                let n = cols;
                // dA = G . B^T
                for i in 0..rows {
                    for p in 0..k {
                        let mut acc = 0.0;
                        for j in 0..n {
                            acc += g[i * n + j] * bv[p * n + j];
                        }
                        grads[*a][i * k + p] += acc;
                    }
                }
                // dB = A^T . G
                for p in 0..k {
                    for i in 0..rows {
                        let x = av[i * k + p];
                        if x == 0.0 {
                            continue;
                        }
                        for j in 0..n {
                            grads[*b][p * n + j] += x * g[i * n + j];
                        }
                    }
                }
            }
            Op::Transpose(a) => {
                let (m, n) = (self.nodes[*a].rows, self.nodes[*a].cols);
                for i in 0..m {
                    for j in 0..n {
                        grads[*a][i * n + j] += g[j * m + i];
                    }
                }
            }
            Op::AddRowVec(a, b) => {
                axpy(&mut grads[*a], &g, 1.0);
                for (k, &gk) in g.iter().enumerate() {
                    grads[*b][k % cols] += gk;
                }
            }
            Op::AddColVec(a, b) => {
                axpy(&mut grads[*a], &g, 1.0);
                for (k, &gk) in g.iter().enumerate() {
                    grads[*b][k / cols] += gk;
                }
            }
            Op::ScaleRows(a, s) => {
                let (av, sv) = (self.values(*a), self.values(*s));
                for (k, &gk) in g.iter().enumerate() {
                    grads[*a][k] += gk * sv[k / cols];
                }
                for (k, &gk) in g.iter().enumerate() {
                    grads[*s][k / cols] += gk * av[k];
                }
            }
            Op::Relu(a) => {
                let av = self.values(*a);
                for (k, &gk) in g.iter().enumerate() {
                    if av[k] > 0.0 {
                        grads[*a][k] += gk;
                    }
                }
            }
            Op::Tanh(a) => {
                for (k, &gk) in g.iter().enumerate() {
                    let y = node.values[k];
                    grads[*a][k] += gk * (1.0 - y * y);
                }
            }
            Op::Sigmoid(a) => {
                for (k, &gk) in g.iter().enumerate() {
                    let y = node.values[k];
                    grads[*a][k] += gk * y * (1.0 - y);
                }
            }
            Op::Exp(a) => {
                for (k, &gk) in g.iter().enumerate() {
                    grads[*a][k] += gk * node.values[k];
                }
            }
            Op::Abs(a) => {
                let av = self.values(*a);
                for (k, &gk) in g.iter().enumerate() {
                    // Subgradient 0 at the kink.
                    if av[k] > 0.0 {
                        grads[*a][k] += gk;
                    } else if av[k] < 0.0 {
                        grads[*a][k] -= gk;
                    }
                }
            }
            Op::Scale(a, c) => axpy(&mut grads[*a], &g, *c),
            Op::AddScalar(a) => axpy(&mut grads[*a], &g, 1.0),
            Op::SumAll(a) => {
                for ga in grads[*a].iter_mut() {
                    *ga += g[0];
                }
            }
            Op::RowLse(a) => {
                let av = self.values(*a);
                let n = self.nodes[*a].cols;
                for i in 0..rows {
                    let gi = g[i];
                    if gi == 0.0 {
                        continue;
                    }
                    let l = node.values[i];
                    for j in 0..n {
                        grads[*a][i * n + j] += gi * (av[i * n + j] - l).exp();
                    }
                }
            }
            Op::ColLse(a) => {
                let av = self.values(*a);
                let m = self.nodes[*a].rows;
                for j in 0..cols {
                    let gj = g[j];
                    if gj == 0.0 {
                        continue;
                    }
                    let l = node.values[j];
                    for i in 0..m {
                        grads[*a][i * cols + j] += gj * (av[i * cols + j] - l).exp();
                    }
                }
            }
            Op::RowMax(a) => {
                let av = self.values(*a);
                let n = self.nodes[*a].cols;
                for i in 0..rows {
                    let row = &av[i * n..(i + 1) * n];
                    let arg = argmax(row.iter().copied());
                    grads[*a][i * n + arg] += g[i];
                }
            }
            Op::ColMax(a) => {
                let av = self.values(*a);
                let m = self.nodes[*a].rows;
                for j in 0..cols {
                    let arg = argmax((0..m).map(|i| av[i * cols + j]));
                    grads[*a][arg * cols + j] += g[j];
                }
            }
            Op::RowNorm(a) => {
                let av = self.values(*a);
                let n = self.nodes[*a].cols;
                for i in 0..rows {
                    let norm = node.values[i];
                    if norm == 0.0 {
                        continue;
                    }
                    let gi = g[i] / norm;
                    for j in 0..n {
                        grads[*a][i * n + j] += gi * av[i * n + j];
                    }
                }
            }
            Op::L2NormalizeRows(a) => {
                let av = self.values(*a);
                for i in 0..rows {
                    let x = &av[i * cols..(i + 1) * cols];
                    let gy = &g[i * cols..(i + 1) * cols];
                    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let denom = norm + L2_NORM_EPS;
                    if norm == 0.0 {
                        for (j, &gj) in gy.iter().enumerate() {
                            grads[*a][i * cols + j] += gj / denom;
                        }
                    } else {
                        let dot: f64 = gy.iter().zip(x).map(|(gv, xv)| gv * xv).sum();
                        let coef = dot / (norm * denom * denom);
                        for j in 0..cols {
                            grads[*a][i * cols + j] += gy[j] / denom - coef * x[j];
                        }
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut at = 0;
                for &p in parts {
                    let len = self.nodes[p].rows * self.nodes[p].cols;
                    for (k, gk) in g[at..at + len].iter().enumerate() {
                        grads[p][k] += gk;
                    }
                    at += len;
                }
            }
            Op::ConcatCols(parts) => {
                let mut at = 0;
                for &p in parts {
                    let pc = self.nodes[p].cols;
                    for r in 0..rows {
                        for j in 0..pc {
                            grads[p][r * pc + j] += g[r * cols + at + j];
                        }
                    }
                    at += pc;
                }
            }
            Op::GatherRows(a, idx) => {
                for (k, &i) in idx.iter().enumerate() {
                    for j in 0..cols {
                        grads[*a][i * cols + j] += g[k * cols + j];
                    }
                }
            }
            Op::ScatterAddRows(a, idx) => {
                for (k, &i) in idx.iter().enumerate() {
                    for j in 0..cols {
                        grads[*a][k * cols + j] += g[i * cols + j];
                    }
                }
            }
            Op::SparseMatMul(mat, x) => {
                // d/dx = A^T . G
                mat.apply(&mat.bwd, &g, cols, &mut grads[*x]);
            }
            Op::NeighborMax(a, adj) => {
                let av = self.values(*a);
                for (i, nbrs) in adj.iter().enumerate() {
                    if nbrs.is_empty() {
                        continue;
                    }
                    for c in 0..cols {
                        let gk = g[i * cols + c];
                        if gk == 0.0 {
                            continue;
                        }
                        let mut best = f64::NEG_INFINITY;
                        let mut arg = nbrs[0];
                        for &l in nbrs.iter() {
                            let v = av[l * cols + c];
                            if v > best {
                                best = v;
                                arg = l;
                            }
                        }
                        grads[*a][arg * cols + c] += gk;
                    }
                }
            }
            Op::SinkhornImplicit(scores, tau) => {
                self.backprop_sinkhorn_implicit(*scores, *tau, &node.values, &g, grads);
            }
        }
        grads[id] = g;
    }

    /// Implicit adjoint of the balanced plan `log P = C/tau + u + v` with
    /// uniform marginals. Differentiating the row and column constraints
    /// gives the symmetric system
    ///
    /// ```text
    /// [ I  Q ] [du]   [-(Q . dK) 1]          Q = N P (doubly stochastic)
    /// [ Qt I ] [dv] = [-(Q . dK)t 1]
    /// ```
    ///
    /// whose adjoint solve yields
    /// `dL/dC = (G - Q . (a_u (+) a_v)) / tau` with `M a = (row sums of G,
    /// column sums of G)`. The gauge freedom `u + c, v - c` is fixed by
    /// pinning the mean of `a_v`, which cancels in the result.
    fn backprop_sinkhorn_implicit(
        &self,
        scores: usize,
        tau: f64,
        log_p: &[f64],
        g: &[f64],
        grads: &mut [Vec<f64>],
    ) {
        let n = self.nodes[scores].rows;
        let q: Vec<f64> = log_p.iter().map(|&lp| n as f64 * lp.exp()).collect();
        let mut ubar = vec![0.0; n];
        let mut vbar = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                ubar[i] += g[i * n + j];
                vbar[j] += g[i * n + j];
            }
        }
        // rhs = vbar - Q^T ubar; system (I - Q^T Q + (1/n) 1 1^T) a_v = rhs.
        let mut rhs = vbar.clone();
        for i in 0..n {
            for j in 0..n {
                rhs[j] -= q[i * n + j] * ubar[i];
            }
        }
        let mut system = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                let mut qtq = 0.0;
                for i in 0..n {
                    qtq += q[i * n + a] * q[i * n + b];
                }
                // Tiny ridge besides the gauge pin: plans that are nearly
                // hard permutations make the system degenerate.
                let diag = if a == b { 1.0 + 1e-12 } else { 0.0 };
                system[a * n + b] = diag - qtq + 1.0 / n as f64;
            }
        }
        let a_v = DenseMatrix::from_vec(n, n, system)
            .solve(&rhs)
            .filter(|sol| sol.iter().all(|x| x.is_finite()))
            .unwrap_or_else(|| vec![0.0; n]);
        let mut a_u = ubar;
        for i in 0..n {
            for j in 0..n {
                a_u[i] -= q[i * n + j] * a_v[j];
            }
        }
        for i in 0..n {
            for j in 0..n {
                grads[scores][i * n + j] +=
                    (g[i * n + j] - q[i * n + j] * (a_u[i] + a_v[j])) / tau;
            }
        }
    }

    /// Fold adjoints of every parameter leaf into the store's gradient
    /// accumulators. Leaves bound to the same name accumulate together.
    pub fn accumulate_param_grads(&self, grads: &Gradients, store: &mut ParameterStore) {
        for (id, node) in self.nodes.iter().enumerate() {
            if let Op::Param(pidx) = node.op {
                store.add_grad(&self.param_names[pidx], &grads.grads[id]);
            }
        }
    }

    /// Adjoints per parameter name, summed over leaves with the same name.
    pub fn param_grads(&self, grads: &Gradients) -> Vec<(String, Vec<f64>)> {
        let mut out: Vec<(String, Vec<f64>)> = Vec::new();
        for (id, node) in self.nodes.iter().enumerate() {
            if let Op::Param(pidx) = node.op {
                let name = &self.param_names[pidx];
                match out.iter_mut().find(|(n, _)| n == name) {
                    Some((_, acc)) => {
                        for (a, g) in acc.iter_mut().zip(&grads.grads[id]) {
                            *a += g;
                        }
                    }
                    None => out.push((name.clone(), grads.grads[id].clone())),
                }
            }
        }
        out
    }
}

fn axpy(dst: &mut [f64], src: &[f64], c: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += c * s;
    }
}

fn lse(it: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = it.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + it.map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn argmax(it: impl Iterator<Item = f64>) -> usize {
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    for (i, v) in it.enumerate() {
        if v > best {
            best = v;
            arg = i;
        }
    }
    arg
}
