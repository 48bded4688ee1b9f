//! Matching quality metrics: coarse geodesic error normalized by the square
//! root of the target surface area, and the bijectivity rate.

use crate::diffcore::{ParameterStore, Tape};
use crate::got::{got_forward, MatchMode, MatchSet};
use crate::hiergraph::{bipartite_geodesic_matrix, BipartiteGeodesicMatrix};

use super::config::TrainConfig;
use super::model::{prepare_shape, shape_features, Model, Rotation};
use super::synth::ShapePairSample;
use super::PipelineError;

#[derive(Debug, Clone, PartialEq)]
pub struct PairReport {
    /// Mean geodesic distance on B between each predicted seed and the
    /// ground-truth image, divided by `sqrt(area(B))`.
    pub coarse_error: f64,
    /// Percentage of seeds whose match is a mutual argmax.
    pub bijectivity: f64,
    pub n_seeds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub pairs: Vec<PairReport>,
    pub mean_error: f64,
    pub mean_bijectivity: f64,
}

impl EvalReport {
    /// Tab-separated breakdown plus a `mean` summary line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("pair\tcoarse_error\tbijectivity_rate\n");
        for (k, p) in self.pairs.iter().enumerate() {
            out.push_str(&format!("{k}\t{:.6}\t{:.2}\n", p.coarse_error, p.bijectivity));
        }
        out.push_str(&format!("mean\t{:.6}\t{:.2}\n", self.mean_error, self.mean_bijectivity));
        out
    }

    pub fn summary_line(&self) -> String {
        format!(
            "pairs={} mean_coarse_error={:.6} mean_bijectivity={:.2}%",
            self.pairs.len(),
            self.mean_error,
            self.mean_bijectivity
        )
    }
}

/// Metrics for one already-extracted match set against the supervision
/// matrix; `area_b` is the surface area of the normalized target mesh.
pub fn pair_metrics(matches: &MatchSet, bipartite: &BipartiteGeodesicMatrix, area_b: f64) -> PairReport {
    assert!(area_b > 0.0, "degenerate target area");
    let norm = area_b.sqrt();
    let mut err = 0.0;
    for pair in &matches.pairs {
        err += bipartite.get(pair.source, pair.target) / norm;
    }
    PairReport {
        coarse_error: err / matches.pairs.len().max(1) as f64,
        bijectivity: matches.bijectivity_rate(),
        n_seeds: matches.n,
    }
}

/// Run the matcher over every pair and aggregate the metrics.
pub fn evaluate(
    store: &ParameterStore,
    cfg: &TrainConfig,
    pairs: &[ShapePairSample],
) -> Result<EvalReport, PipelineError> {
    if pairs.is_empty() {
        return Err(PipelineError::EmptyDataset("evaluation set".into()));
    }
    let model = Model::from_config(cfg);
    model.expect(store)?;
    let got_cfg = cfg.got_config();
    let mut reports = Vec::with_capacity(pairs.len());
    for sample in pairs {
        let a = prepare_shape(&sample.mesh_a, cfg)?;
        let b = prepare_shape(&sample.mesh_b, cfg)?;
        let mut tape = Tape::new();
        let fa = shape_features(&mut tape, store, &model, &a, &Rotation::IDENTITY);
        let fb = shape_features(&mut tape, store, &model, &b, &Rotation::IDENTITY);
        let got = got_forward(
            &mut tape,
            store,
            &a.shape_graph,
            fa.features,
            &b.shape_graph,
            fb.features,
            &model.gru,
            &got_cfg,
        )?;
        let matches = got.plan.matches(MatchMode::RowArgmax);
        let bipartite =
            bipartite_geodesic_matrix(&sample.correspondence, &a.seeds, &b.seeds, &b.graph)?;
        reports.push(pair_metrics(&matches, &bipartite, b.area));
    }
    let mean_error = reports.iter().map(|r| r.coarse_error).sum::<f64>() / reports.len() as f64;
    let mean_bijectivity =
        reports.iter().map(|r| r.bijectivity).sum::<f64>() / reports.len() as f64;
    Ok(EvalReport { pairs: reports, mean_error, mean_bijectivity })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::diffcore::DenseMatrix;
    use crate::got::extract_matches;
    use crate::hiergraph::Correspondence;
    use crate::pipeline::synth::{generate_synthetic_pair, BaseShape, DeformParams};

    use super::*;

    fn eval_config() -> TrainConfig {
        TrainConfig {
            n_seeds: 10,
            d_cut: 2,
            r_local: 0.35,
            r_shape: 1.2,
            feat_dim: 8,
            sigma: 4.0,
            m_freqs: 3,
            sinkhorn_iterations: 50,
            ..Default::default()
        }
    }

    fn registered_store(cfg: &TrainConfig, seed: u64) -> ParameterStore {
        let model = Model::from_config(cfg);
        let mut store = ParameterStore::new();
        model.register(&mut store, &mut ChaCha8Rng::seed_from_u64(seed));
        store
    }

    /// A shape matched against itself scores a perfect report for any
    /// random parameters, provided its patches are genuinely distinct. A
    /// plain cylinder violates that: its interior patches are exact
    /// translates of each other, so a deformed one is used.
    #[test]
    fn identical_pair_scores_perfectly() {
        let cfg = TrainConfig { feat_dim: 16, ..eval_config() };
        let store = registered_store(&cfg, 21);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let deform = DeformParams { bend_angle: 0.5, twist_rate: 0.9, bump_amplitude: 0.08 };
        let generated =
            generate_synthetic_pair(BaseShape::Cylinder, (24, 24), deform, &mut rng).unwrap();
        let pair = ShapePairSample {
            mesh_a: generated.mesh_b.clone(),
            mesh_b: generated.mesh_b,
            correspondence: Correspondence::Identity,
            provenance: None,
        };
        let report = evaluate(&store, &cfg, &[pair]).unwrap();
        assert_eq!(report.pairs[0].bijectivity, 100.0);
        assert_eq!(report.pairs[0].coarse_error, 0.0);
        assert_eq!(report.mean_error, 0.0);
    }

    /// Zero parameters give all-zero descriptors and a uniform plan; the
    /// report must equal the brute-force oracle on that plan.
    #[test]
    fn uniform_plan_bijectivity_matches_oracle() {
        let cfg = eval_config();
        let model = Model::from_config(&cfg);
        let mut store = ParameterStore::new();
        // Zero weights of the right shapes.
        model.register(&mut store, &mut ChaCha8Rng::seed_from_u64(0));
        let zeros: Vec<(String, usize)> = store
            .names()
            .map(|n| (n.to_string(), store.entry(n).unwrap().2.len()))
            .collect();
        for (name, len) in zeros {
            store.set_values(&name, &vec![0.0; len]);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pair = generate_synthetic_pair(
            BaseShape::Cylinder,
            (24, 24),
            DeformParams { bend_angle: 0.4, ..Default::default() },
            &mut rng,
        )
        .unwrap();
        let report = evaluate(&store, &cfg, &[pair]).unwrap();

        // Uniform tie-broken plan: row argmax 0 for every row, column 0's
        // argmax is row 0, so exactly one mutual pair.
        let uniform = DenseMatrix::zeros(cfg.n_seeds, cfg.n_seeds)
            .map(|_| (1.0 / (cfg.n_seeds * cfg.n_seeds) as f64).ln());
        let oracle = extract_matches(&uniform, MatchMode::RowArgmax);
        assert_eq!(report.pairs[0].bijectivity, oracle.bijectivity_rate());
    }

    /// Hand-built plan with known argmaxes: the report equals hand
    /// arithmetic.
    #[test]
    fn hand_built_plan_metrics_match_hand_arithmetic() {
        let n = 6;
        // Plan concentrated on a permutation with two rows swapped relative
        // to the identity.
        let perm = [0usize, 2, 1, 3, 4, 5];
        let mut log_p = DenseMatrix::zeros(n, n).map(|_| (0.002f64).ln());
        for (i, &p) in perm.iter().enumerate() {
            log_p.set(i, p, (0.9f64 / n as f64).ln());
        }
        let matches = extract_matches(&log_p, MatchMode::RowArgmax);

        // Bipartite distances: |i - l| scaled.
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for l in 0..n {
                m.set(i, l, 0.1 * (i as f64 - l as f64).abs());
            }
        }
        let bip = {
            // Assemble through the public constructor path: a fake path
            // graph with unit spacing scaled by 0.1.
            let vertices: Vec<[f64; 3]> = (0..n).map(|i| [0.1 * i as f64, 0.0, 0.0]).collect();
            let faces: Vec<[usize; 3]> = (0..n - 1).map(|i| [i, i + 1, i + 1]).collect();
            let mesh = crate::mesh::TriangleMesh::new(vertices, faces).unwrap();
            let graph = crate::mesh::build_mesh_graph(&mesh);
            let seeds: Vec<usize> = (0..n).collect();
            bipartite_geodesic_matrix(&Correspondence::Identity, &seeds, &seeds, &graph).unwrap()
        };
        let area = 4.0; // sqrt(area) = 2
        let report = pair_metrics(&matches, &bip, area);

        // Rows 1 and 2 miss by one step of 0.1 each; all others hit.
        let expect_err = (0.1 + 0.1) / 2.0 / n as f64;
        assert!((report.coarse_error - expect_err).abs() < 1e-12);
        // The permutation is bijective everywhere.
        assert_eq!(report.bijectivity, 100.0);
    }

    #[test]
    fn evaluation_is_invariant_to_a_shared_translation() {
        let cfg = eval_config();
        let store = registered_store(&cfg, 22);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pair = generate_synthetic_pair(
            BaseShape::Cylinder,
            (24, 24),
            DeformParams { bend_angle: 0.3, ..Default::default() },
            &mut rng,
        )
        .unwrap();
        let shift = [2.5, -1.0, 0.5];
        let moved = ShapePairSample {
            mesh_a: crate::mesh::TriangleMesh {
                vertices: pair.mesh_a.vertices.iter().map(|v| crate::mesh::vec3::add(*v, shift)).collect(),
                faces: pair.mesh_a.faces.clone(),
            },
            mesh_b: crate::mesh::TriangleMesh {
                vertices: pair.mesh_b.vertices.iter().map(|v| crate::mesh::vec3::add(*v, shift)).collect(),
                faces: pair.mesh_b.faces.clone(),
            },
            correspondence: pair.correspondence.clone(),
            provenance: None,
        };
        let base = evaluate(&store, &cfg, &[pair]).unwrap();
        let shifted = evaluate(&store, &cfg, &[moved]).unwrap();
        assert!((base.mean_error - shifted.mean_error).abs() < 1e-9);
        assert_eq!(base.mean_bijectivity, shifted.mean_bijectivity);
    }

    #[test]
    fn report_serializes_with_summary_line() {
        let report = EvalReport {
            pairs: vec![PairReport { coarse_error: 0.125, bijectivity: 75.0, n_seeds: 8 }],
            mean_error: 0.125,
            mean_bijectivity: 75.0,
        };
        let tsv = report.to_tsv();
        assert!(tsv.starts_with("pair\tcoarse_error\tbijectivity_rate\n"));
        assert!(tsv.lines().last().unwrap().starts_with("mean\t"));
        assert!(report.summary_line().contains("mean_bijectivity=75.00%"));
    }
}
