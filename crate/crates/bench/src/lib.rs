//! Shared fixtures for the benchmark targets.

use shapecorr::pipeline::{base_mesh, BaseShape, TrainConfig};
use shapecorr::TriangleMesh;

/// Configuration sized for benchmarking single pipeline stages.
pub fn bench_config() -> TrainConfig {
    TrainConfig {
        n_seeds: 32,
        d_cut: 4,
        r_local: 0.25,
        r_shape: 0.7,
        feat_dim: 32,
        sigma: 4.0,
        m_freqs: 4,
        sinkhorn_iterations: 100,
        ..Default::default()
    }
}

pub fn bench_mesh() -> TriangleMesh {
    base_mesh(BaseShape::Cylinder, (24, 24))
}
