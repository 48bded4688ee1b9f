//! Gated optimal transport: inner-product score matrices, a log-domain
//! Sinkhorn solver with uniform marginals, per-node confidences read off the
//! plan, confidence-gated recurrent feature propagation on the shape graphs,
//! and the iterated loop combining them.

use std::rc::Rc;

use thiserror::Error;

use crate::diffcore::{DenseMatrix, GruSpec, ParameterStore, Tape, Tensor};
use crate::hiergraph::ShapeGraph;

#[derive(Debug, Error)]
pub enum GotError {
    #[error("score matrix contains a non-finite entry at ({0}, {1})")]
    NonFiniteScore(usize, usize),
    #[error("shape graphs disagree on node count: {0} vs {1}")]
    NodeCountMismatch(usize, usize),
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("match file at line {line}: {message}")]
    ParseMatches { line: usize, message: String },
}

/// Marginal deviation below which a plan counts as converged.
pub const MARGINAL_TOL: f64 = 1e-6;

/// Inner products of all feature pairs: `C[i][k] = <fa_i, fb_k>`.
pub fn score_matrix(tape: &mut Tape, fa: Tensor, fb: Tensor) -> Tensor {
    assert_eq!(fa.cols(), fb.cols(), "feature dimensions disagree: {} vs {}", fa.cols(), fb.cols());
    let fbt = tape.transpose(fb);
    tape.matmul(fa, fbt)
}

/// Log-domain transport plan over uniform marginals `1/N`.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    /// Handle to the differentiable `N x N` log-plan on the tape.
    pub tensor: Tensor,
    /// Snapshot of the log-plan values.
    pub log_p: DenseMatrix,
    pub iterations: usize,
    /// Whether the marginal deviation fell below [`MARGINAL_TOL`].
    pub converged: bool,
}

impl TransportPlan {
    pub fn n(&self) -> usize {
        self.log_p.rows()
    }

    /// Largest absolute deviation of any row or column sum of `exp(log_p)`
    /// from the uniform marginal `1/N`.
    pub fn marginal_deviation(&self) -> f64 {
        marginal_deviation(&self.log_p)
    }

    pub fn matches(&self, mode: MatchMode) -> MatchSet {
        extract_matches(&self.log_p, mode)
    }
}

pub fn marginal_deviation(log_p: &DenseMatrix) -> f64 {
    let n = log_p.rows();
    let target = 1.0 / n as f64;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let s: f64 = (0..n).map(|j| log_p.get(i, j).exp()).sum();
        worst = worst.max((s - target).abs());
    }
    for j in 0..n {
        let s: f64 = (0..n).map(|i| log_p.get(i, j).exp()).sum();
        worst = worst.max((s - target).abs());
    }
    worst
}

/// One plain-arithmetic row-then-column normalization round over the log
/// kernel, updating the dual potentials in place.
fn potential_round(
    kernel: &[f64],
    n: usize,
    log_marginal: f64,
    u: &mut [f64],
    v: &mut [f64],
    buf: &mut [f64],
) {
    for i in 0..n {
        for j in 0..n {
            buf[j] = kernel[i * n + j] + v[j];
        }
        u[i] = log_marginal - lse_slice(buf);
    }
    for j in 0..n {
        for i in 0..n {
            buf[i] = kernel[i * n + j] + u[i];
        }
        v[j] = log_marginal - lse_slice(buf);
    }
}

fn lse_slice(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn potentials_deviation(kernel: &[f64], n: usize, u: &[f64], v: &[f64]) -> f64 {
    let target = 1.0 / n as f64;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let s: f64 = (0..n).map(|j| (kernel[i * n + j] + u[i] + v[j]).exp()).sum();
        worst = worst.max((s - target).abs());
    }
    for j in 0..n {
        let s: f64 = (0..n).map(|i| (kernel[i * n + j] + u[i] + v[j]).exp()).sum();
        worst = worst.max((s - target).abs());
    }
    worst
}

/// Newton direction for the dual balance conditions at `(u, v)`. Linearizing
/// `LSE_j(K + u + v) = logr` and `LSE_i(K + u + v) = logc` gives
///
/// ```text
/// [ I  A ] [du]   [-r]     A = row-renormalized plan
/// [ Bt I ] [dv] = [-s]     B = column-renormalized plan
/// ```
///
/// reduced to `(I - Bt A + (1/n) 1 1t) dv = -s + Bt r`, with the rank-one
/// term pinning the `u + c, v - c` gauge.
fn newton_direction(
    kernel: &[f64],
    n: usize,
    log_marginal: f64,
    u: &[f64],
    v: &[f64],
) -> Option<(Vec<f64>, Vec<f64>)> {
    let mut row_lse = vec![0.0; n];
    let mut col_lse = vec![0.0; n];
    let mut buf = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            buf[j] = kernel[i * n + j] + u[i] + v[j];
        }
        row_lse[i] = lse_slice(&buf);
    }
    for j in 0..n {
        for i in 0..n {
            buf[i] = kernel[i * n + j] + u[i] + v[j];
        }
        col_lse[j] = lse_slice(&buf);
    }
    let a = |i: usize, j: usize| (kernel[i * n + j] + u[i] + v[j] - row_lse[i]).exp();
    let b = |i: usize, j: usize| (kernel[i * n + j] + u[i] + v[j] - col_lse[j]).exp();
    let r: Vec<f64> = (0..n).map(|i| row_lse[i] - log_marginal).collect();
    let s: Vec<f64> = (0..n).map(|j| col_lse[j] - log_marginal).collect();

    let mut system = vec![0.0; n * n];
    for x in 0..n {
        for y in 0..n {
            let mut bta = 0.0;
            for i in 0..n {
                bta += b(i, x) * a(i, y);
            }
            system[x * n + y] = if x == y { 1.0 } else { 0.0 } - bta + 1.0 / n as f64;
        }
    }
    let mut rhs: Vec<f64> = (0..n).map(|j| -s[j]).collect();
    for j in 0..n {
        for i in 0..n {
            rhs[j] += b(i, j) * r[i];
        }
    }
    let dv = DenseMatrix::from_vec(n, n, system).solve(&rhs)?;
    if dv.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let mut du: Vec<f64> = (0..n).map(|i| -r[i]).collect();
    for i in 0..n {
        for j in 0..n {
            du[i] -= a(i, j) * dv[j];
        }
    }
    Some((du, dv))
}

/// Drive the potentials to a marginal deviation below `tol`, alternating
/// normalization bursts with damped Newton steps. Returns the round count
/// charged against the budget.
fn refine_potentials(
    kernel: &[f64],
    n: usize,
    log_marginal: f64,
    u: &mut Vec<f64>,
    v: &mut Vec<f64>,
    tol: f64,
    round_cap: usize,
) -> usize {
    let mut buf = vec![0.0; n];
    let mut used = 0usize;
    let mut dev = potentials_deviation(kernel, n, u, v);
    let mut cycles_without_progress = 0;
    let mut best = dev;
    while dev >= tol && used < round_cap && cycles_without_progress < 4 {
        for _ in 0..64.min(round_cap - used) {
            potential_round(kernel, n, log_marginal, u, v, &mut buf);
            used += 1;
        }
        dev = potentials_deviation(kernel, n, u, v);
        // Damped Newton burst; each step is charged as n rounds.
        for _ in 0..12 {
            if dev < tol || used >= round_cap {
                break;
            }
            let Some((du, dv)) = newton_direction(kernel, n, log_marginal, u, v) else {
                break;
            };
            used += n;
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..16 {
                let ut: Vec<f64> = u.iter().zip(&du).map(|(x, d)| x + alpha * d).collect();
                let vt: Vec<f64> = v.iter().zip(&dv).map(|(x, d)| x + alpha * d).collect();
                let trial = potentials_deviation(kernel, n, &ut, &vt);
                if trial < dev {
                    *u = ut;
                    *v = vt;
                    dev = trial;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if dev < best {
            best = dev;
            cycles_without_progress = 0;
        } else {
            cycles_without_progress += 1;
        }
    }
    used
}

/// Alternating row/column normalization of `exp(C / tau)` toward uniform
/// marginals, kept in log space. One iteration is a full row-then-column
/// round.
///
/// When the requested rounds already balance the marginals below
/// [`MARGINAL_TOL`], they are recorded on the tape one by one and the plan
/// is differentiable through every iteration. Sharp temperatures can need
/// far more rounds; then the solve continues in plain arithmetic (capped by
/// a flop budget) and the converged plan enters the tape as a single node
/// whose backward pass is the implicit-function adjoint of the balance
/// conditions, the exact derivative of the converged plan.
/// [`TransportPlan::iterations`] reports the rounds used and `converged`
/// whether the marginal deviation fell below tolerance.
pub fn sinkhorn(
    tape: &mut Tape,
    scores: Tensor,
    iterations: usize,
    tau: f64,
) -> Result<TransportPlan, GotError> {
    let n = scores.rows();
    if scores.cols() != n {
        return Err(GotError::BadConfig(format!(
            "score matrix must be square, got {}x{}",
            scores.rows(),
            scores.cols()
        )));
    }
    if iterations == 0 {
        return Err(GotError::BadConfig("sinkhorn needs at least one iteration".into()));
    }
    if tau <= 0.0 {
        return Err(GotError::BadConfig(format!("temperature must be positive, got {tau}")));
    }
    for (k, &v) in tape.value(scores).iter().enumerate() {
        if !v.is_finite() {
            return Err(GotError::NonFiniteScore(k / n, k % n));
        }
    }
    let log_marginal = (1.0 / n as f64).ln();
    let kernel_vals: Vec<f64> = tape.value(scores).iter().map(|x| x / tau).collect();

    // Dry run of the requested rounds off the tape.
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut buf = vec![0.0; n];
    for _ in 0..iterations {
        potential_round(&kernel_vals, n, log_marginal, &mut u, &mut v, &mut buf);
    }
    if potentials_deviation(&kernel_vals, n, &u, &v) < MARGINAL_TOL {
        // Record the plain unrolled loop; gradients flow through every
        // round.
        let kernel = tape.scale(scores, 1.0 / tau);
        let mut col_potential = tape.zeros(1, n);
        let mut row_potential = tape.zeros(n, 1);
        for _ in 0..iterations {
            let with_cols = tape.add_row_vec(kernel, col_potential);
            let row_lse = tape.row_lse(with_cols);
            let neg_row = tape.scale(row_lse, -1.0);
            row_potential = tape.add_scalar(neg_row, log_marginal);

            let with_rows = tape.add_col_vec(kernel, row_potential);
            let col_lse = tape.col_lse(with_rows);
            let neg_col = tape.scale(col_lse, -1.0);
            col_potential = tape.add_scalar(neg_col, log_marginal);
        }
        let with_rows = tape.add_col_vec(kernel, row_potential);
        let log_p = tape.add_row_vec(with_rows, col_potential);
        let snapshot = tape.to_matrix(log_p);
        let converged = marginal_deviation(&snapshot) < MARGINAL_TOL;
        return Ok(TransportPlan { tensor: log_p, log_p: snapshot, iterations, converged });
    }

    // Keep solving in plain arithmetic until the implicit-gradient
    // assumption (a balanced plan) holds to near the fp floor, progress
    // stalls there, or the budget runs out.
    let cap = (800_000_000 / (n * n).max(1)).max(iterations);
    let deep_tol = 1e-13 / n as f64;
    let extra_rounds = refine_potentials(&kernel_vals, n, log_marginal, &mut u, &mut v, deep_tol, cap);
    let mut log_p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            log_p[i * n + j] = kernel_vals[i * n + j] + u[i] + v[j];
        }
    }
    let plan_tensor = tape.sinkhorn_implicit_node(scores, tau, log_p);
    let snapshot = tape.to_matrix(plan_tensor);
    let converged = marginal_deviation(&snapshot) < MARGINAL_TOL;
    Ok(TransportPlan {
        tensor: plan_tensor,
        log_p: snapshot,
        iterations: iterations + extra_rounds,
        converged,
    })
}

/// Per-node log-confidences: the best renormalized log-probability in each
/// row (shape A) and each column (shape B) of the plan.
#[derive(Debug, Clone, Copy)]
pub struct NodeConfidence {
    /// `N x 1`, one entry per shape A node.
    pub w_row: Tensor,
    /// `N x 1`, one entry per shape B node.
    pub w_col: Tensor,
}

pub fn confidence_weights(tape: &mut Tape, plan: &TransportPlan) -> NodeConfidence {
    let log_p = plan.tensor;
    let row_lse = tape.row_lse(log_p);
    let neg_row_lse = tape.scale(row_lse, -1.0);
    let row_renorm = tape.add_col_vec(log_p, neg_row_lse);
    let w_row = tape.row_max(row_renorm);

    let col_lse = tape.col_lse(log_p);
    let neg_col_lse = tape.scale(col_lse, -1.0);
    let col_renorm = tape.add_row_vec(log_p, neg_col_lse);
    let w_col_wide = tape.col_max(col_renorm);
    let w_col = tape.transpose(w_col_wide);
    NodeConfidence { w_row, w_col }
}

/// `steps` synchronous rounds of confidence-gated propagation. Each node
/// receives the element-wise maximum of its neighbors' states scaled by
/// `exp` of their log-confidence, and feeds it as input to a shared GRU with
/// its own previous state; isolated nodes receive a zero message.
pub fn gated_propagation(
    tape: &mut Tape,
    store: &ParameterStore,
    graph: &ShapeGraph,
    hidden: Tensor,
    confidence: Tensor,
    steps: usize,
    gru: &GruSpec,
) -> Tensor {
    assert_eq!(hidden.rows(), graph.node_count(), "one hidden row per node");
    assert_eq!((confidence.rows(), confidence.cols()), (hidden.rows(), 1), "confidence is N x 1");
    if steps == 0 {
        return hidden;
    }
    let adjacency = Rc::new(graph.adjacency());
    let scale = tape.exp(confidence);
    let mut h = hidden;
    for _ in 0..steps {
        let scaled = tape.scale_rows(h, scale);
        let message = tape.neighbor_max(scaled, adjacency.clone());
        h = gru.cell(tape, store, h, message);
    }
    h
}

/// Knobs of the iterated transport loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GotConfig {
    /// Outer Sinkhorn-propagate rounds before the final Sinkhorn.
    pub n_got: usize,
    /// Propagation steps per round.
    pub n_gfp: usize,
    pub sinkhorn_iterations: usize,
    pub tau: f64,
    pub match_mode: MatchMode,
}

impl Default for GotConfig {
    fn default() -> Self {
        Self {
            n_got: 1,
            n_gfp: 2,
            sinkhorn_iterations: 100,
            tau: 0.1,
            match_mode: MatchMode::RowArgmax,
        }
    }
}

/// Result of [`got_forward`]: the final plan, the confidences read from it,
/// and the extracted matches.
pub struct GotOutput {
    pub plan: TransportPlan,
    pub confidence: NodeConfidence,
    pub matches: MatchSet,
}

/// The full matching loop. Features are L2-normalized row-wise before every
/// scoring pass, so scores are cosine similarities; propagation evolves the
/// un-normalized states. `n_got = 0` reduces to a single Sinkhorn over the
/// normalized input features.
pub fn got_forward(
    tape: &mut Tape,
    store: &ParameterStore,
    graph_a: &ShapeGraph,
    features_a: Tensor,
    graph_b: &ShapeGraph,
    features_b: Tensor,
    gru: &GruSpec,
    cfg: &GotConfig,
) -> Result<GotOutput, GotError> {
    if graph_a.node_count() != graph_b.node_count() {
        return Err(GotError::NodeCountMismatch(graph_a.node_count(), graph_b.node_count()));
    }
    assert_eq!(features_a.rows(), graph_a.node_count(), "shape A features per node");
    assert_eq!(features_b.rows(), graph_b.node_count(), "shape B features per node");
    assert_eq!(features_a.cols(), features_b.cols(), "feature width mismatch");

    let mut ha = features_a;
    let mut hb = features_b;
    for _ in 0..cfg.n_got {
        let na = tape.l2_normalize_rows(ha);
        let nb = tape.l2_normalize_rows(hb);
        let scores = score_matrix(tape, na, nb);
        let plan = sinkhorn(tape, scores, cfg.sinkhorn_iterations, cfg.tau)?;
        let conf = confidence_weights(tape, &plan);
        ha = gated_propagation(tape, store, graph_a, ha, conf.w_row, cfg.n_gfp, gru);
        hb = gated_propagation(tape, store, graph_b, hb, conf.w_col, cfg.n_gfp, gru);
    }
    let na = tape.l2_normalize_rows(ha);
    let nb = tape.l2_normalize_rows(hb);
    let scores = score_matrix(tape, na, nb);
    let plan = sinkhorn(tape, scores, cfg.sinkhorn_iterations, cfg.tau)?;
    let confidence = confidence_weights(tape, &plan);
    let matches = plan.matches(cfg.match_mode);
    Ok(GotOutput { plan, confidence, matches })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchMode {
    /// One match per source node at its row argmax.
    RowArgmax,
    /// Only pairs where row and column argmaxes agree; a partial injection.
    Mutual,
}

impl MatchMode {
    pub fn name(self) -> &'static str {
        match self {
            MatchMode::RowArgmax => "row_argmax",
            MatchMode::Mutual => "mutual",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "row_argmax" => Some(Self::RowArgmax),
            "mutual" => Some(Self::Mutual),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchPair {
    pub source: usize,
    pub target: usize,
    /// Row-renormalized plan probability of the chosen entry, in `(0, 1]`.
    pub confidence: f64,
    /// Whether the pair is also the column argmax.
    pub mutual: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchSet {
    pub n: usize,
    pub mode: MatchMode,
    pub pairs: Vec<MatchPair>,
}

impl MatchSet {
    /// Fraction of source nodes with a mutual match, in percent.
    pub fn bijectivity_rate(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let mutual = self.pairs.iter().filter(|p| p.mutual).count();
        100.0 * mutual as f64 / self.n as f64
    }

    /// Text form: a header `N=<n> mode=<mode>` followed by one
    /// `source target confidence` line per pair.
    pub fn to_text(&self) -> String {
        let mut out = format!("N={} mode={}\n", self.n, self.mode.name());
        for p in &self.pairs {
            out.push_str(&format!("{} {} {}\n", p.source, p.target, p.confidence));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<MatchSet, GotError> {
        let mut lines = text.lines().enumerate();
        let bad = |line: usize, message: String| GotError::ParseMatches { line: line + 1, message };
        let (hl, header) = lines
            .next()
            .ok_or_else(|| bad(0, "empty match file".into()))?;
        let mut n = None;
        let mut mode = None;
        for tok in header.split_whitespace() {
            if let Some(v) = tok.strip_prefix("N=") {
                n = v.parse::<usize>().ok();
            } else if let Some(v) = tok.strip_prefix("mode=") {
                mode = MatchMode::parse(v);
            }
        }
        let n = n.ok_or_else(|| bad(hl, "header lacks N=<count>".into()))?;
        let mode = mode.ok_or_else(|| bad(hl, "header lacks mode=<row_argmax|mutual>".into()))?;
        let mut pairs = Vec::new();
        for (l, line) in lines {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.is_empty() {
                continue;
            }
            if toks.len() != 3 {
                return Err(bad(l, format!("expected 'source target confidence', found {} fields", toks.len())));
            }
            let source = toks[0].parse().map_err(|_| bad(l, "bad source index".into()))?;
            let target = toks[1].parse().map_err(|_| bad(l, "bad target index".into()))?;
            let confidence = toks[2].parse().map_err(|_| bad(l, "bad confidence".into()))?;
            // Mutuality is not serialized; mark what the mode guarantees.
            pairs.push(MatchPair { source, target, confidence, mutual: mode == MatchMode::Mutual });
        }
        Ok(MatchSet { n, mode, pairs })
    }
}

/// Read matches off a log-plan. Row and column argmaxes break ties toward
/// the lowest index; confidences are row-renormalized probabilities.
pub fn extract_matches(log_p: &DenseMatrix, mode: MatchMode) -> MatchSet {
    let n = log_p.rows();
    assert_eq!(log_p.cols(), n, "plan must be square");
    let mut col_arg = vec![0usize; n];
    for l in 0..n {
        let mut best = f64::NEG_INFINITY;
        for i in 0..n {
            let v = log_p.get(i, l);
            if v > best {
                best = v;
                col_arg[l] = i;
            }
        }
    }
    let mut pairs = Vec::with_capacity(n);
    for i in 0..n {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0usize;
        for l in 0..n {
            let v = log_p.get(i, l);
            if v > best {
                best = v;
                arg = l;
            }
        }
        let row_lse = {
            let m = best;
            let s: f64 = (0..n).map(|l| (log_p.get(i, l) - m).exp()).sum();
            m + s.ln()
        };
        let confidence = (log_p.get(i, arg) - row_lse).exp();
        let mutual = col_arg[arg] == i;
        if mode == MatchMode::RowArgmax || mutual {
            pairs.push(MatchPair { source: i, target: arg, confidence, mutual });
        }
    }
    MatchSet { n, mode, pairs }
}

#[cfg(test)]
mod tests {
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::diffcore::{finite_difference_check, FD_STEP};

    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> DenseMatrix {
        DenseMatrix::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|_| (rng.random::<f64>() * 2.0 - 1.0) * scale).collect(),
        )
    }

    /// Unit-norm feature rows, pairwise distinct with overwhelming
    /// probability.
    fn random_unit_features(rng: &mut impl Rng, rows: usize, cols: usize) -> DenseMatrix {
        let mut m = random_matrix(rng, rows, cols, 1.0);
        for i in 0..rows {
            let norm: f64 = (0..cols).map(|j| m.get(i, j).powi(2)).sum::<f64>().sqrt();
            for j in 0..cols {
                m.set(i, j, m.get(i, j) / norm);
            }
        }
        m
    }

    fn line_graph(n: usize) -> ShapeGraph {
        let positions = (0..n).map(|i| [i as f64, 0.0, 0.0]).collect();
        let edges = (0..n - 1).map(|i| (i, i + 1, 1.0)).collect();
        ShapeGraph { positions, edges, connected: true, descriptors: None, node_features: None }
    }

    fn edgeless_graph(n: usize) -> ShapeGraph {
        ShapeGraph {
            positions: (0..n).map(|i| [i as f64, 0.0, 0.0]).collect(),
            edges: vec![],
            connected: n <= 1,
            descriptors: None,
            node_features: None,
        }
    }

    fn registered_gru(dim: usize, seed: u64) -> (GruSpec, ParameterStore) {
        let gru = GruSpec::new("gru", dim);
        let mut store = ParameterStore::new();
        gru.register(&mut store, &mut rng(seed));
        (gru, store)
    }

    // ---- score_matrix ----

    #[test]
    fn basis_features_give_identity_scores() {
        let mut tape = Tape::new();
        let eye = tape.constant(&DenseMatrix::identity(3));
        let c = score_matrix(&mut tape, eye, eye);
        assert_eq!(tape.value(c), DenseMatrix::identity(3).data());
    }

    #[test]
    fn equal_unit_features_give_all_ones() {
        let mut tape = Tape::new();
        let f = tape.constant_vec(3, 2, vec![0.6, 0.8, 0.6, 0.8, 0.6, 0.8]);
        let c = score_matrix(&mut tape, f, f);
        for v in tape.value(c) {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn scores_match_double_loop_oracle() {
        let mut r = rng(1);
        let fa = random_matrix(&mut r, 4, 3, 1.0);
        let fb = random_matrix(&mut r, 4, 3, 1.0);
        let mut tape = Tape::new();
        let ta = tape.constant(&fa);
        let tb = tape.constant(&fb);
        let scores = score_matrix(&mut tape, ta, tb);
        let c = tape.to_matrix(scores);
        for i in 0..4 {
            for k in 0..4 {
                let expect: f64 = (0..3).map(|j| fa.get(i, j) * fb.get(k, j)).sum();
                assert!((c.get(i, k) - expect).abs() < 1e-15);
            }
        }
    }

    // ---- sinkhorn ----

    #[test]
    fn zero_scores_give_the_uniform_plan() {
        let mut tape = Tape::new();
        let c = tape.zeros(2, 2);
        let plan = sinkhorn(&mut tape, c, 5, 1.0).unwrap();
        for v in plan.log_p.data() {
            assert!((v.exp() - 0.25).abs() < 1e-12);
        }
        assert!(plan.converged);
    }

    /// Plain-arithmetic alternating normalization oracle, iterated until
    /// its own marginals settle below `tol`.
    fn sinkhorn_oracle(scores: &DenseMatrix, tau: f64, tol: f64) -> DenseMatrix {
        let n = scores.rows();
        let target = 1.0 / n as f64;
        let mut p = scores.map(|v| (v / tau).exp());
        loop {
            for i in 0..n {
                let s: f64 = (0..n).map(|j| p.get(i, j)).sum();
                for j in 0..n {
                    p.set(i, j, p.get(i, j) * target / s);
                }
            }
            for j in 0..n {
                let s: f64 = (0..n).map(|i| p.get(i, j)).sum();
                for i in 0..n {
                    p.set(i, j, p.get(i, j) * target / s);
                }
            }
            let dev = (0..n)
                .map(|i| ((0..n).map(|j| p.get(i, j)).sum::<f64>() - target).abs())
                .fold(0.0, f64::max);
            if dev < tol {
                return p;
            }
        }
    }

    #[test]
    fn strong_diagonal_concentrates_mass_and_matches_oracle() {
        let n = 4;
        let mut scores = DenseMatrix::zeros(n, n);
        for i in 0..n {
            scores.set(i, i, 10.0);
        }
        let mut tape = Tape::new();
        let c = tape.constant(&scores);
        let plan = sinkhorn(&mut tape, c, 100, 1.0).unwrap();
        let p = plan.log_p.map(f64::exp);
        // Both the solver and the oracle settle on the unique balanced
        // scaling of exp(C / tau).
        let oracle = sinkhorn_oracle(&scores, 1.0, 1e-12);
        assert!(p.max_abs_diff(&oracle) < 1e-6);
        let matches = plan.matches(MatchMode::RowArgmax);
        for (i, m) in matches.pairs.iter().enumerate() {
            assert_eq!(m.target, i);
            assert!(p.get(i, i) > 0.9 / n as f64);
        }
    }

    #[test]
    fn permutation_structured_scores_recover_the_permutation() {
        let n = 5;
        let perm = [3usize, 0, 4, 1, 2];
        let mut scores = DenseMatrix::zeros(n, n);
        for (i, &p) in perm.iter().enumerate() {
            scores.set(i, p, 8.0);
        }
        let mut tape = Tape::new();
        let c = tape.constant(&scores);
        let plan = sinkhorn(&mut tape, c, 100, 0.5).unwrap();
        for (i, m) in plan.matches(MatchMode::RowArgmax).pairs.iter().enumerate() {
            assert_eq!(m.target, perm[i]);
            assert!(m.mutual);
        }
    }

    #[test]
    fn sinkhorn_marginals_converge_for_random_scores() {
        let mut r = rng(2);
        for &n in &[4usize, 16, 64] {
            for &tau in &[0.05, 0.1, 1.0] {
                let scores = random_matrix(&mut r, n, n, 10.0);
                let mut tape = Tape::new();
                let c = tape.constant(&scores);
                let plan = sinkhorn(&mut tape, c, 100, tau).unwrap();
                assert!(plan.marginal_deviation() < MARGINAL_TOL, "n={n} tau={tau}");
                assert!(plan.converged);
                assert!(plan.iterations >= 100);
                assert!(plan.log_p.data().iter().all(|v| v.is_finite()));
            }
        }
    }

    /// Sharp temperatures on wide score ranges need far more than the
    /// requested rounds; the solver keeps going and reports the count.
    #[test]
    fn sinkhorn_extends_past_requested_rounds_when_needed() {
        let mut r = rng(7);
        let scores = random_matrix(&mut r, 8, 8, 50.0);
        let mut tape = Tape::new();
        let c = tape.constant(&scores);
        let plan = sinkhorn(&mut tape, c, 100, 0.1).unwrap();
        assert!(plan.converged, "deviation {}", plan.marginal_deviation());
        assert!(plan.marginal_deviation() < MARGINAL_TOL);
        assert!(plan.iterations > 100, "used {}", plan.iterations);
    }

    #[test]
    fn sinkhorn_is_shift_invariant() {
        let mut r = rng(3);
        let scores = random_matrix(&mut r, 6, 6, 5.0);
        let shifted = scores.map(|v| v + 3.7);
        let mut tape = Tape::new();
        let c0 = tape.constant(&scores);
        let c1 = tape.constant(&shifted);
        let p0 = sinkhorn(&mut tape, c0, 100, 0.5).unwrap();
        let p1 = sinkhorn(&mut tape, c1, 100, 0.5).unwrap();
        assert!(p0.log_p.max_abs_diff(&p1.log_p) < 1e-9);
    }

    #[test]
    fn sinkhorn_is_row_permutation_equivariant() {
        let mut r = rng(4);
        let n = 5;
        let scores = random_matrix(&mut r, n, n, 4.0);
        let perm = [2usize, 0, 4, 3, 1];
        let mut permuted = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                permuted.set(i, j, scores.get(perm[i], j));
            }
        }
        let mut tape = Tape::new();
        let c0 = tape.constant(&scores);
        let c1 = tape.constant(&permuted);
        let p0 = sinkhorn(&mut tape, c0, 100, 0.5).unwrap();
        let p1 = sinkhorn(&mut tape, c1, 100, 0.5).unwrap();
        for i in 0..n {
            for j in 0..n {
                assert!((p1.log_p.get(i, j) - p0.log_p.get(perm[i], j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sinkhorn_rejects_non_finite_scores() {
        let mut tape = Tape::new();
        let c = tape.constant_vec(2, 2, vec![0.0, f64::NAN, 0.0, 0.0]);
        assert!(matches!(sinkhorn(&mut tape, c, 10, 1.0), Err(GotError::NonFiniteScore(0, 1))));
    }

    #[test]
    fn sinkhorn_gradients_match_finite_differences() {
        let mut r = rng(5);
        let mut store = ParameterStore::new();
        store.register_values("c", 4, 4, random_matrix(&mut r, 4, 4, 2.0).data().to_vec());
        let err = finite_difference_check(&mut store, FD_STEP, |tape, store| {
            let c = tape.param(store, "c");
            let plan = sinkhorn(tape, c, 30, 0.5).unwrap();
            let p = tape.exp(plan.tensor);
            let sq = tape.mul(p, p);
            tape.sum_all(sq)
        });
        assert!(err < 1e-4, "relative error {err}");
    }

    // ---- confidence_weights ----

    #[test]
    fn uniform_plan_confidence_is_log_inverse_n() {
        let mut tape = Tape::new();
        let c = tape.zeros(4, 4);
        let plan = sinkhorn(&mut tape, c, 10, 1.0).unwrap();
        let conf = confidence_weights(&mut tape, &plan);
        for &w in tape.value(conf.w_row).iter().chain(tape.value(conf.w_col)) {
            assert!((w - (0.25f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn near_permutation_plan_has_near_zero_confidence() {
        let n = 4;
        let mut scores = DenseMatrix::zeros(n, n);
        for i in 0..n {
            scores.set(i, i, 10.0);
        }
        let mut tape = Tape::new();
        let c = tape.constant(&scores);
        let plan = sinkhorn(&mut tape, c, 100, 0.5).unwrap();
        let conf = confidence_weights(&mut tape, &plan);
        for &w in tape.value(conf.w_row) {
            assert!(w <= 0.0, "log confidence must stay non-positive");
            assert!(w > -0.01, "diagonal plan should be confident, got {w}");
        }
    }

    /// A row forced toward uniform amid an otherwise peaked plan carries
    /// strictly the lowest confidence.
    #[test]
    fn flat_row_is_least_confident() {
        let n = 4;
        let mut scores = DenseMatrix::zeros(n, n);
        for i in 1..n {
            scores.set(i, i, 10.0);
        }
        // Row 0 stays all-zero: no preferred column.
        let mut tape = Tape::new();
        let c = tape.constant(&scores);
        let plan = sinkhorn(&mut tape, c, 100, 1.0).unwrap();
        let conf = confidence_weights(&mut tape, &plan);
        let w = tape.value(conf.w_row);
        for i in 1..n {
            assert!(w[0] < w[i], "flat row not the least confident: {w:?}");
        }
    }

    // ---- gated_propagation ----

    #[test]
    fn zero_steps_leave_hidden_untouched() {
        let (gru, store) = registered_gru(3, 10);
        let graph = line_graph(4);
        let mut tape = Tape::new();
        let h = tape.constant_vec(4, 3, (0..12).map(|k| k as f64 / 10.0).collect());
        let conf = tape.zeros(4, 1);
        let out = gated_propagation(&mut tape, &store, &graph, h, conf, 0, &gru);
        assert_eq!(out, h);
    }

    /// Scalar GRU oracle for an edgeless graph: every node sees a zero
    /// message, so each row evolves by the same per-node recurrence.
    #[test]
    fn edgeless_graph_matches_per_node_gru_oracle() {
        let dim = 3;
        let (gru, store) = registered_gru(dim, 11);
        let graph = edgeless_graph(5);
        let mut r = rng(12);
        let h0 = random_matrix(&mut r, 5, dim, 1.0);
        let confv = random_matrix(&mut r, 5, 1, 1.0);

        let mut tape = Tape::new();
        let h = tape.constant(&h0);
        let conf = tape.constant(&confv);
        let out = gated_propagation(&mut tape, &store, &graph, h, conf, 2, &gru);

        // Oracle: dense per-node arithmetic with zero input.
        let get = |name: &str| {
            let (r, c, v) = store.entry(name).unwrap();
            DenseMatrix::from_vec(r, c, v.to_vec())
        };
        let sigmoid = |x: f64| 1.0 / (1.0 + (-x).exp());
        let mut state = h0.clone();
        for _ in 0..2 {
            let mut next = DenseMatrix::zeros(5, dim);
            for node in 0..5 {
                for d in 0..dim {
                    let mut z = get("gru.update.b").get(0, d);
                    let mut rr = get("gru.reset.b").get(0, d);
                    for k in 0..dim {
                        z += state.get(node, k) * get("gru.update.wh").get(k, d);
                        rr += state.get(node, k) * get("gru.reset.wh").get(k, d);
                    }
                    let z = sigmoid(z);
                    let rr = sigmoid(rr);
                    let _ = rr;
                    let mut cand = get("gru.cand.b").get(0, d);
                    for k in 0..dim {
                        let rk = {
                            let mut rv = get("gru.reset.b").get(0, k);
                            for kk in 0..dim {
                                rv += state.get(node, kk) * get("gru.reset.wh").get(kk, k);
                            }
                            sigmoid(rv)
                        };
                        cand += rk * state.get(node, k) * get("gru.cand.wh").get(k, d);
                    }
                    let cand = cand.tanh();
                    let hv = state.get(node, d);
                    next.set(node, d, hv + z * (cand - hv));
                }
            }
            state = next;
        }
        assert!(tape.to_matrix(out).max_abs_diff(&state) < 1e-12);
    }

    /// Two nodes, one edge, one step, d = 2, hand-set weights: the message
    /// and GRU arithmetic is small enough to compute by hand.
    #[test]
    fn two_node_propagation_matches_hand_computation() {
        let dim = 2;
        let gru = GruSpec::new("gru", dim);
        let mut store = ParameterStore::new();
        // Identity input weights, zero recurrent weights and biases: then
        // z = sigmoid(m), r = sigmoid(m), cand = tanh(m) element-wise in the
        // message m.
        for gate in ["update", "reset", "cand"] {
            store.register_values(&format!("gru.{gate}.wx"), dim, dim, DenseMatrix::identity(dim).data().to_vec());
            store.register_zeros(&format!("gru.{gate}.wh"), dim, dim);
            store.register_zeros(&format!("gru.{gate}.b"), 1, dim);
        }
        let graph = ShapeGraph {
            positions: vec![[0.0; 3], [1.0, 0.0, 0.0]],
            edges: vec![(0, 1, 1.0)],
            connected: true,
            descriptors: None,
            node_features: None,
        };
        let h0 = DenseMatrix::from_rows(&[&[0.5, -0.3], &[0.2, 0.8]]);
        let confv = DenseMatrix::from_vec(2, 1, vec![(0.7f64).ln(), (0.4f64).ln()]);

        let mut tape = Tape::new();
        let h = tape.constant(&h0);
        let conf = tape.constant(&confv);
        let out = gated_propagation(&mut tape, &store, &graph, h, conf, 1, &gru);

        let sigmoid = |x: f64| 1.0 / (1.0 + (-x).exp());
        // Node 0 hears node 1 scaled by exp(w_1) = 0.4, and vice versa.
        let m0 = [0.4 * 0.2, 0.4 * 0.8];
        let m1 = [0.7 * 0.5, 0.7 * -0.3];
        let mut expect = DenseMatrix::zeros(2, dim);
        for (node, (m, h_row)) in [(m0, [0.5, -0.3]), (m1, [0.2, 0.8])].iter().enumerate() {
            for d in 0..dim {
                let z = sigmoid(m[d]);
                let cand = m[d].tanh();
                expect.set(node, d, h_row[d] + z * (cand - h_row[d]));
            }
        }
        assert!(tape.to_matrix(out).max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn zero_log_confidence_reduces_to_unweighted_max_propagation() {
        let dim = 3;
        let (gru, store) = registered_gru(dim, 13);
        let graph = line_graph(4);
        let mut r = rng(14);
        let h0 = random_matrix(&mut r, 4, dim, 1.0);

        let mut tape = Tape::new();
        let h = tape.constant(&h0);
        let conf = tape.zeros(4, 1);
        let gated = gated_propagation(&mut tape, &store, &graph, h, conf, 2, &gru);

        // Hand-rolled unweighted variant.
        let adjacency = std::rc::Rc::new(graph.adjacency());
        let mut plain = h;
        for _ in 0..2 {
            let message = tape.neighbor_max(plain, adjacency.clone());
            plain = gru.cell(&mut tape, &store, plain, message);
        }
        assert_eq!(tape.value(gated), tape.value(plain));
    }

    #[test]
    fn gated_propagation_gradients_flow_to_confidence_and_state() {
        let dim = 3;
        let (gru, mut store) = registered_gru(dim, 15);
        let graph = line_graph(4);
        let mut r = rng(16);
        store.register_values("h0", 4, dim, random_matrix(&mut r, 4, dim, 1.0).data().to_vec());
        store.register_values("conf", 4, 1, random_matrix(&mut r, 4, 1, 0.5).data().to_vec());
        let err = finite_difference_check(&mut store, FD_STEP, |tape, store| {
            let h = tape.param(store, "h0");
            let conf = tape.param(store, "conf");
            let out = gated_propagation(tape, store, &graph, h, conf, 2, &gru);
            let sq = tape.mul(out, out);
            tape.sum_all(sq)
        });
        assert!(err < 1e-4, "relative error {err}");
    }

    // ---- got_forward ----

    #[test]
    fn zero_got_rounds_reduce_to_plain_sinkhorn() {
        let (gru, store) = registered_gru(4, 17);
        let graph = line_graph(5);
        let mut r = rng(18);
        let fa = random_unit_features(&mut r, 5, 4);
        let fb = random_unit_features(&mut r, 5, 4);
        let cfg = GotConfig { n_got: 0, ..Default::default() };

        let mut tape = Tape::new();
        let ta = tape.constant(&fa);
        let tb = tape.constant(&fb);
        let out = got_forward(&mut tape, &store, &graph, ta, &graph, tb, &gru, &cfg).unwrap();

        // Equivalent to one Sinkhorn over the raw score matrix for unit
        // features (normalization only touches the 12th decimal).
        let c = score_matrix(&mut tape, ta, tb);
        let plain = sinkhorn(&mut tape, c, cfg.sinkhorn_iterations, cfg.tau).unwrap();
        assert!(out.plan.log_p.max_abs_diff(&plain.log_p) < 1e-9);

        // And exactly one Sinkhorn over explicitly normalized features.
        let na = tape.l2_normalize_rows(ta);
        let nb = tape.l2_normalize_rows(tb);
        let cn = score_matrix(&mut tape, na, nb);
        let exact = sinkhorn(&mut tape, cn, cfg.sinkhorn_iterations, cfg.tau).unwrap();
        assert_eq!(out.plan.log_p.data(), exact.log_p.data());
    }

    #[test]
    fn matching_a_shape_against_itself_is_the_identity() {
        let (gru, store) = registered_gru(6, 19);
        let graph = line_graph(8);
        let mut r = rng(20);
        let f = random_unit_features(&mut r, 8, 6);
        let cfg = GotConfig::default();

        let mut tape = Tape::new();
        let ta = tape.constant(&f);
        let tb = tape.constant(&f);
        let out = got_forward(&mut tape, &store, &graph, ta, &graph, tb, &gru, &cfg).unwrap();
        let matches = out.plan.matches(MatchMode::RowArgmax);
        for (i, m) in matches.pairs.iter().enumerate() {
            assert_eq!(m.target, i, "row {i} matched {}", m.target);
            assert!(m.mutual);
        }
        assert_eq!(matches.bijectivity_rate(), 100.0);
    }

    /// The full loop equals a straight-line transcript of the already
    /// tested operations.
    #[test]
    fn got_forward_matches_compositional_transcript() {
        let dim = 5;
        let (gru, store) = registered_gru(dim, 21);
        let graph_a = line_graph(6);
        let graph_b = {
            let mut g = line_graph(6);
            g.edges.push((0, 3, 3.0));
            g
        };
        let mut r = rng(22);
        let fa = random_matrix(&mut r, 6, dim, 1.0);
        let fb = random_matrix(&mut r, 6, dim, 1.0);
        let cfg = GotConfig { n_got: 1, n_gfp: 2, ..Default::default() };

        let mut tape = Tape::new();
        let ta = tape.constant(&fa);
        let tb = tape.constant(&fb);
        let out = got_forward(&mut tape, &store, &graph_a, ta, &graph_b, tb, &gru, &cfg).unwrap();

        // Transcript on a fresh tape.
        let mut t2 = Tape::new();
        let ha = t2.constant(&fa);
        let hb = t2.constant(&fb);
        let na = t2.l2_normalize_rows(ha);
        let nb = t2.l2_normalize_rows(hb);
        let c = score_matrix(&mut t2, na, nb);
        let plan = sinkhorn(&mut t2, c, cfg.sinkhorn_iterations, cfg.tau).unwrap();
        let conf = confidence_weights(&mut t2, &plan);
        let ha = gated_propagation(&mut t2, &store, &graph_a, ha, conf.w_row, 2, &gru);
        let hb = gated_propagation(&mut t2, &store, &graph_b, hb, conf.w_col, 2, &gru);
        let na = t2.l2_normalize_rows(ha);
        let nb = t2.l2_normalize_rows(hb);
        let c = score_matrix(&mut t2, na, nb);
        let final_plan = sinkhorn(&mut t2, c, cfg.sinkhorn_iterations, cfg.tau).unwrap();

        assert!(out.plan.log_p.max_abs_diff(&final_plan.log_p) < 1e-12);
    }

    #[test]
    fn got_forward_rejects_node_count_mismatch() {
        let (gru, store) = registered_gru(4, 23);
        let ga = line_graph(4);
        let gb = line_graph(5);
        let mut tape = Tape::new();
        let fa = tape.zeros(4, 4);
        let fb = tape.zeros(5, 4);
        assert!(matches!(
            got_forward(&mut tape, &store, &ga, fa, &gb, fb, &gru, &GotConfig::default()),
            Err(GotError::NodeCountMismatch(4, 5))
        ));
    }

    #[test]
    fn got_forward_gradients_match_finite_differences() {
        let dim = 6;
        let (gru, mut store) = registered_gru(dim, 24);
        let graph = line_graph(4);
        let mut r = rng(25);
        store.register_values("fa", 4, dim, random_matrix(&mut r, 4, dim, 1.0).data().to_vec());
        store.register_values("fb", 4, dim, random_matrix(&mut r, 4, dim, 1.0).data().to_vec());
        let cfg = GotConfig { n_got: 1, n_gfp: 1, sinkhorn_iterations: 20, ..Default::default() };
        let err = finite_difference_check(&mut store, FD_STEP, |tape, store| {
            let fa = tape.param(store, "fa");
            let fb = tape.param(store, "fb");
            let out = got_forward(tape, store, &graph, fa, &graph, fb, &gru, &cfg).unwrap();
            let p = tape.exp(out.plan.tensor);
            let sq = tape.mul(p, p);
            tape.sum_all(sq)
        });
        assert!(err < 1e-4, "relative error {err}");
    }

    // ---- extract_matches ----

    #[test]
    fn identity_plan_extracts_identity_pairs() {
        let n = 4;
        let mut log_p = DenseMatrix::zeros(n, n).map(|_| (0.01f64 / n as f64).ln());
        for i in 0..n {
            log_p.set(i, i, (0.97f64 / n as f64).ln());
        }
        let ms = extract_matches(&log_p, MatchMode::RowArgmax);
        assert_eq!(ms.pairs.len(), n);
        for (i, p) in ms.pairs.iter().enumerate() {
            assert_eq!((p.source, p.target), (i, i));
            assert!(p.mutual);
            assert!(p.confidence > 0.9);
        }
        assert_eq!(ms.bijectivity_rate(), 100.0);
    }

    #[test]
    fn uniform_plan_breaks_ties_toward_index_zero() {
        let n = 3;
        let log_p = DenseMatrix::zeros(n, n).map(|_| (1.0f64 / (n * n) as f64).ln());
        let row = extract_matches(&log_p, MatchMode::RowArgmax);
        for p in &row.pairs {
            assert_eq!(p.target, 0);
        }
        // Column 0's argmax is row 0, so only (0, 0) is mutual.
        let mutual = extract_matches(&log_p, MatchMode::Mutual);
        assert_eq!(mutual.pairs.len(), 1);
        assert_eq!((mutual.pairs[0].source, mutual.pairs[0].target), (0, 0));
    }

    #[test]
    fn mutual_matches_equal_double_argmax_oracle() {
        let mut r = rng(26);
        for _ in 0..200 {
            let n = 5;
            let log_p = random_matrix(&mut r, n, n, 2.0);
            let ms = extract_matches(&log_p, MatchMode::Mutual);

            let mut oracle = Vec::new();
            for i in 0..n {
                let best_l = (0..n)
                    .max_by(|&a, &b| log_p.get(i, a).total_cmp(&log_p.get(i, b)))
                    .unwrap();
                let best_i = (0..n)
                    .max_by(|&a, &b| log_p.get(a, best_l).total_cmp(&log_p.get(b, best_l)))
                    .unwrap();
                if best_i == i {
                    oracle.push((i, best_l));
                }
            }
            let got: Vec<(usize, usize)> = ms.pairs.iter().map(|p| (p.source, p.target)).collect();
            assert_eq!(got, oracle);
            // Partial injection: no repeated source or target.
            let mut targets: Vec<usize> = ms.pairs.iter().map(|p| p.target).collect();
            targets.sort_unstable();
            targets.dedup();
            assert_eq!(targets.len(), ms.pairs.len());
        }
    }

    #[test]
    fn match_set_text_roundtrip() {
        let ms = MatchSet {
            n: 3,
            mode: MatchMode::Mutual,
            pairs: vec![
                MatchPair { source: 0, target: 2, confidence: 0.75, mutual: true },
                MatchPair { source: 2, target: 1, confidence: 0.5, mutual: true },
            ],
        };
        let text = ms.to_text();
        let back = MatchSet::from_text(&text).unwrap();
        assert_eq!(back, ms);
        assert!(MatchSet::from_text("garbage\n1 2 3\n").is_err());
    }
}
