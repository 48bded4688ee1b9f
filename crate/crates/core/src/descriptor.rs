//! Per-seed features: a stack of topology-adaptive graph convolutions over
//! the local graph pooled into a unit descriptor, and the fused node feature
//! combining descriptors with Fourier-encoded seed positions.

use std::rc::Rc;

use rand::Rng;

use crate::diffcore::{
    Activation, CheckpointError, DenseMatrix, MlpSpec, ParameterStore, SparseMat, Tape, Tensor,
};
use crate::hiergraph::LocalGraph;
use crate::mesh::Point3;

/// Fourier feature mapping with `m - 1` log-linear frequencies per axis:
/// frequency `j` is `sigma^(j/m)` for `j = 0 .. m-2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodingConfig {
    pub sigma: f64,
    pub m: usize,
}

impl EncodingConfig {
    pub fn new(sigma: f64, m: usize) -> Self {
        assert!(sigma > 1.0, "sigma must exceed 1");
        assert!(m >= 2, "m must be at least 2");
        Self { sigma, m }
    }

    /// Output length: cos and sin for each of `m - 1` frequencies on each
    /// of the three axes.
    pub fn dim(&self) -> usize {
        6 * (self.m - 1)
    }
}

/// Encode a position as interleaved cosines and sines. Layout: for each
/// axis in x, y, z order, then for each frequency index `j` ascending,
/// the pair `cos(2 pi sigma^(j/m) v)`, `sin(2 pi sigma^(j/m) v)`.
pub fn fourier_encode(v: Point3, cfg: &EncodingConfig) -> Vec<f64> {
    let mut out = Vec::with_capacity(cfg.dim());
    for axis in 0..3 {
        for j in 0..cfg.m - 1 {
            let freq = cfg.sigma.powf(j as f64 / cfg.m as f64);
            let arg = 2.0 * std::f64::consts::PI * freq * v[axis];
            out.push(arg.cos());
            out.push(arg.sin());
        }
    }
    out
}

/// The normalized propagation operator of one local graph, shared by every
/// convolution layer applied to it.
///
/// The adjacency holds the radius-ball edge weights without self-loops; the
/// degree of a node is its incident weight sum plus one, so isolated nodes
/// keep a well-defined hop-zero term while `A^k` vanishes on them for
/// `k >= 1`. Nodes are handled in ascending vertex order internally, which
/// makes the arithmetic independent of how the caller ordered them.
pub struct TagOperator {
    /// Canonical position -> index into `local.nodes`.
    order: Vec<usize>,
    /// Index into `local.nodes` -> canonical position.
    rank: Vec<usize>,
    adjacency: Rc<SparseMat>,
    inv_sqrt_degree: DenseMatrix,
    coords: DenseMatrix,
}

impl TagOperator {
    pub fn new(local: &LocalGraph) -> Self {
        let n = local.node_count();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| local.nodes[i].0);
        let mut rank = vec![0usize; n];
        for (c, &i) in order.iter().enumerate() {
            rank[i] = c;
        }
        let mut triples = Vec::with_capacity(local.edges.len() * 2);
        for &(a, b, w) in &local.edges {
            triples.push((rank[a], rank[b], w));
            triples.push((rank[b], rank[a], w));
        }
        let adjacency = Rc::new(SparseMat::from_triples(n, n, &triples));
        // Summing incident weights in sorted-column order keeps the degrees
        // bit-identical under any caller-side node or edge reordering.
        let inv_sqrt_degree = DenseMatrix::from_vec(
            n,
            1,
            (0..n)
                .map(|i| {
                    let deg: f64 =
                        1.0 + adjacency.row_entries(i).iter().map(|&(_, w)| w).sum::<f64>();
                    1.0 / deg.sqrt()
                })
                .collect(),
        );
        let mut coords = DenseMatrix::zeros(n, 3);
        for (c, &i) in order.iter().enumerate() {
            let p = local.nodes[i].1;
            for axis in 0..3 {
                coords.set(c, axis, p[axis]);
            }
        }
        Self { order, rank, adjacency, inv_sqrt_degree, coords }
    }

    pub fn node_count(&self) -> usize {
        self.order.len()
    }

    /// Node coordinates in canonical order, `n x 3`.
    pub fn canonical_coords(&self) -> &DenseMatrix {
        &self.coords
    }

    /// `sum_k D^{-1/2} A^k D^{-1/2} x theta_k` for features already in
    /// canonical order; the hop count is `thetas.len() - 1`.
    pub fn convolve(&self, tape: &mut Tape, x: Tensor, thetas: &[Tensor]) -> Tensor {
        assert!(!thetas.is_empty(), "need at least the hop-zero weight");
        assert_eq!(x.rows(), self.node_count(), "feature rows must match graph nodes");
        let dinv = tape.constant(&self.inv_sqrt_degree);
        let scaled = tape.scale_rows(x, dinv);
        let mut hop = scaled;
        let mut out: Option<Tensor> = None;
        for (k, &theta) in thetas.iter().enumerate() {
            if k > 0 {
                hop = tape.sparse_matmul(self.adjacency.clone(), hop);
            }
            let rescaled = tape.scale_rows(hop, dinv);
            let term = tape.matmul(rescaled, theta);
            out = Some(match out {
                None => term,
                Some(acc) => tape.add(acc, term),
            });
        }
        out.expect("at least one hop")
    }
}

/// Topology-adaptive convolution in the caller's node order. Features row
/// `i` corresponds to `local.nodes[i]`; the result keeps that layout.
pub fn tag_conv(tape: &mut Tape, features: Tensor, local: &LocalGraph, thetas: &[Tensor]) -> Tensor {
    let op = TagOperator::new(local);
    let to_canonical = Rc::new(op.order.clone());
    let from_canonical = Rc::new(op.rank.clone());
    let canonical = tape.gather_rows(features, to_canonical);
    let out = op.convolve(tape, canonical, thetas);
    tape.gather_rows(out, from_canonical)
}

/// Dimensions and parameter names of the descriptor network: three
/// convolution layers with hop counts 1, 2, 3, a linear head, the position
/// encoder `enc`, and the fusion MLP `fuse`.
#[derive(Debug, Clone)]
pub struct DescriptorParams {
    pub tag_widths: [usize; 4],
    pub head: MlpSpec,
    pub enc: MlpSpec,
    pub fuse: MlpSpec,
    pub encoding: EncodingConfig,
}

impl DescriptorParams {
    /// Standard layout for feature size `d`: convolution widths
    /// `3 -> d/2 -> d -> d`, a `d -> d` head, and two-layer encoder and
    /// fusion MLPs.
    pub fn with_feat_dim(d: usize, encoding: EncodingConfig) -> Self {
        assert!(d >= 2, "feature size too small");
        Self {
            tag_widths: [3, (d / 2).max(2), d, d],
            head: MlpSpec::new("desc.head", vec![d, d], Activation::Relu),
            enc: MlpSpec::new("desc.enc", vec![encoding.dim(), d, d], Activation::Relu),
            fuse: MlpSpec::new("desc.fuse", vec![d, d, d], Activation::Relu),
            encoding,
        }
    }

    pub fn feat_dim(&self) -> usize {
        self.tag_widths[3]
    }

    /// Hop count of convolution layer `layer` (0-based).
    fn hops(layer: usize) -> usize {
        layer + 1
    }

    fn theta_name(layer: usize, k: usize) -> String {
        format!("desc.tag{layer}.k{k}")
    }

    pub fn register(&self, store: &mut ParameterStore, rng: &mut impl Rng) {
        for layer in 0..3 {
            let (fan_in, fan_out) = (self.tag_widths[layer], self.tag_widths[layer + 1]);
            for k in 0..=Self::hops(layer) {
                store.register_glorot(&Self::theta_name(layer, k), fan_in, fan_out, rng);
            }
        }
        self.head.register(store, rng);
        self.enc.register(store, rng);
        self.fuse.register(store, rng);
    }

    pub fn expect(&self, store: &ParameterStore) -> Result<(), CheckpointError> {
        for layer in 0..3 {
            let (fan_in, fan_out) = (self.tag_widths[layer], self.tag_widths[layer + 1]);
            for k in 0..=Self::hops(layer) {
                store.expect(&Self::theta_name(layer, k), fan_in, fan_out)?;
            }
        }
        self.head.expect(store)?;
        self.enc.expect(store)?;
        self.fuse.expect(store)
    }

    fn thetas(&self, tape: &mut Tape, store: &ParameterStore, layer: usize) -> Vec<Tensor> {
        (0..=Self::hops(layer))
            .map(|k| tape.param(store, &Self::theta_name(layer, k)))
            .collect()
    }
}

/// Unit-norm descriptor of one local graph: three convolutions with ReLU
/// between them over the seed-relative coordinates, column-wise max pooling
/// over nodes, the head MLP, and L2 normalization. Returns `1 x d`.
pub fn local_descriptor(
    tape: &mut Tape,
    store: &ParameterStore,
    local: &LocalGraph,
    params: &DescriptorParams,
) -> Tensor {
    assert!(local.node_count() >= 1, "descriptor needs at least one node");
    let op = TagOperator::new(local);
    let mut h = tape.constant(op.canonical_coords());
    for layer in 0..3 {
        let thetas = params.thetas(tape, store, layer);
        h = op.convolve(tape, h, &thetas);
        if layer != 2 {
            h = tape.relu(h);
        }
    }
    let pooled = tape.col_max(h);
    let headed = params.head.forward(tape, store, pooled);
    tape.l2_normalize_rows(headed)
}

/// Fused node feature `fuse(D + enc(gamma(v)))`, batched over seeds.
/// `descriptors` is `N x d`; `positions[i]` is the seed position of row `i`.
pub fn node_feature(
    tape: &mut Tape,
    store: &ParameterStore,
    descriptors: Tensor,
    positions: &[Point3],
    params: &DescriptorParams,
) -> Tensor {
    assert_eq!(descriptors.rows(), positions.len(), "one position per descriptor row");
    assert_eq!(descriptors.cols(), params.fuse.in_dim(), "descriptor width");
    assert_eq!(params.enc.out_dim(), descriptors.cols(), "encoder must emit descriptor-sized rows");
    let enc_dim = params.encoding.dim();
    let mut enc = DenseMatrix::zeros(positions.len(), enc_dim);
    for (i, p) in positions.iter().enumerate() {
        for (j, e) in fourier_encode(*p, &params.encoding).into_iter().enumerate() {
            enc.set(i, j, e);
        }
    }
    let enc_t = tape.constant(&enc);
    let embedded = params.enc.forward(tape, store, enc_t);
    let sum = tape.add(descriptors, embedded);
    params.fuse.forward(tape, store, sum)
}
