//! Training objectives: the descriptor triplet loss, the soft-weighted
//! matching negative log-likelihood, the Laplacian regularizer over
//! softpooled positions, and their scheduled weighted sum.

use crate::diffcore::{DenseMatrix, Tape, Tensor};
use crate::got::TransportPlan;
use crate::hiergraph::BipartiteGeodesicMatrix;
use crate::mesh::Point3;

/// Triplet margin loss over batched unit descriptors (one row per item):
/// `max(sum_i [ ||a_i - b_i|| - ||a_i - n_i|| ] + margin, 0)`, clamping the
/// batch sum rather than each item.
pub fn triplet_loss(
    tape: &mut Tape,
    anchors: Tensor,
    positives: Tensor,
    negatives: Tensor,
    margin: f64,
) -> Tensor {
    assert_eq!(anchors.rows(), positives.rows(), "batch sizes disagree");
    assert_eq!(anchors.rows(), negatives.rows(), "batch sizes disagree");
    let ab = tape.sub(anchors, positives);
    let an = tape.sub(anchors, negatives);
    let dist_ab = tape.row_norm(ab);
    let dist_an = tape.row_norm(an);
    let diff = tape.sub(dist_ab, dist_an);
    let total = tape.sum_all(diff);
    let shifted = tape.add_scalar(total, margin);
    tape.relu(shifted)
}

/// Linear fall-off of the geodesic supervision: entries go from 1 at zero
/// distance to 0 at `r_d` and beyond.
#[derive(Debug, Clone)]
pub struct SoftWeightMatrix {
    pub entries: DenseMatrix,
    pub r_d: f64,
}

pub fn soft_weight_matrix(m: &BipartiteGeodesicMatrix, r_d: f64) -> SoftWeightMatrix {
    assert!(r_d > 0.0, "soft-weight radius must be positive");
    let entries = m.matrix().map(|d| if d <= r_d { (r_d - d) / r_d } else { 0.0 });
    SoftWeightMatrix { entries, r_d }
}

/// Weighted negative log-likelihood of the row-renormalized plan:
/// `-sum_{W > 0} W_il log Phat_il`. Entries with zero weight contribute
/// nothing.
pub fn matching_loss(tape: &mut Tape, plan: &TransportPlan, weights: &SoftWeightMatrix) -> Tensor {
    assert_eq!(weights.entries.rows(), plan.n(), "weight shape");
    assert_eq!(weights.entries.cols(), plan.n(), "weight shape");
    let log_p = plan.tensor;
    let row_lse = tape.row_lse(log_p);
    let neg_lse = tape.scale(row_lse, -1.0);
    let log_p_hat = tape.add_col_vec(log_p, neg_lse);
    let w = tape.constant(&weights.entries);
    let weighted = tape.mul(w, log_p_hat);
    let total = tape.sum_all(weighted);
    tape.scale(total, -1.0)
}

/// Barycenters of the target seeds under the row-renormalized plan:
/// `s_i = sum_l Phat_il * v_l`.
pub fn softpool_positions(tape: &mut Tape, plan: &TransportPlan, seeds_b: &[Point3]) -> Tensor {
    assert_eq!(seeds_b.len(), plan.n(), "one target position per column");
    let log_p = plan.tensor;
    let row_lse = tape.row_lse(log_p);
    let neg_lse = tape.scale(row_lse, -1.0);
    let log_p_hat = tape.add_col_vec(log_p, neg_lse);
    let p_hat = tape.exp(log_p_hat);
    let mut targets = DenseMatrix::zeros(seeds_b.len(), 3);
    for (l, p) in seeds_b.iter().enumerate() {
        for axis in 0..3 {
            targets.set(l, axis, p[axis]);
        }
    }
    let t = tape.constant(&targets);
    tape.matmul(p_hat, t)
}

/// Per-node sum of incident edge lengths, differentiable in the positions.
pub fn laplace_operator(tape: &mut Tape, positions: Tensor, edges: &[(usize, usize, f64)]) -> Tensor {
    let n = positions.rows();
    assert_eq!(positions.cols(), 3, "positions are N x 3");
    if edges.is_empty() {
        return tape.zeros(n, 1);
    }
    let src: std::rc::Rc<Vec<usize>> = std::rc::Rc::new(edges.iter().map(|&(a, _, _)| a).collect());
    let dst: std::rc::Rc<Vec<usize>> = std::rc::Rc::new(edges.iter().map(|&(_, b, _)| b).collect());
    let pa = tape.gather_rows(positions, src.clone());
    let pb = tape.gather_rows(positions, dst.clone());
    let diff = tape.sub(pa, pb);
    let lengths = tape.row_norm(diff);
    let at_src = tape.scatter_add_rows(lengths, src, n);
    let at_dst = tape.scatter_add_rows(lengths, dst, n);
    tape.add(at_src, at_dst)
}

/// Plain-value counterpart of [`laplace_operator`] for constant inputs.
pub fn laplace_values(positions: &[Point3], edges: &[(usize, usize, f64)]) -> Vec<f64> {
    let mut out = vec![0.0; positions.len()];
    for &(a, b, _) in edges {
        let d = crate::mesh::vec3::dist(positions[a], positions[b]);
        out[a] += d;
        out[b] += d;
    }
    out
}

/// `sum_i | lap(predicted)_i - lap(source)_i |` over the shape-graph edges,
/// with subgradient zero at the kinks.
pub fn regularization_loss(
    tape: &mut Tape,
    predicted: Tensor,
    source: &[Point3],
    edges: &[(usize, usize, f64)],
) -> Tensor {
    assert_eq!(predicted.rows(), source.len(), "node counts disagree");
    let lap_pred = laplace_operator(tape, predicted, edges);
    let lap_src = tape.constant_vec(source.len(), 1, laplace_values(source, edges));
    let diff = tape.sub(lap_pred, lap_src);
    let abs = tape.abs(diff);
    tape.sum_all(abs)
}

/// Loss weights per epoch: phases of `(first epoch, [gamma_d, gamma_m,
/// gamma_r])` in ascending order. Epochs past the last phase keep its
/// weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LossWeights {
    pub phases: Vec<(usize, [f64; 3])>,
}

impl LossWeights {
    /// Two-phase schedule switching after `switch_epoch` (1-based,
    /// inclusive).
    pub fn two_phase(switch_epoch: usize, early: [f64; 3], late: [f64; 3]) -> Self {
        Self { phases: vec![(1, early), (switch_epoch + 1, late)] }
    }

    pub fn gammas(&self, epoch: usize) -> [f64; 3] {
        let mut current = self.phases.first().map(|&(_, g)| g).unwrap_or([1.0, 1.0, 1.0]);
        for &(start, g) in &self.phases {
            if epoch >= start {
                current = g;
            }
        }
        current
    }
}

impl Default for LossWeights {
    /// Descriptor-first warm-up for 30 epochs, then the matching loss takes
    /// over: `(1, 0, 1)` through epoch 30 and `(0.1, 1, 1)` after.
    fn default() -> Self {
        Self::two_phase(30, [1.0, 0.0, 1.0], [0.1, 1.0, 1.0])
    }
}

/// `gamma_d * L_D + gamma_m * L_M + gamma_r * L_R` at the epoch's weights.
pub fn total_loss(
    tape: &mut Tape,
    l_d: Tensor,
    l_m: Tensor,
    l_r: Tensor,
    weights: &LossWeights,
    epoch: usize,
) -> Tensor {
    let [gd, gm, gr] = weights.gammas(epoch);
    let sd = tape.scale(l_d, gd);
    let sm = tape.scale(l_m, gm);
    let sr = tape.scale(l_r, gr);
    let partial = tape.add(sd, sm);
    tape.add(partial, sr)
}
