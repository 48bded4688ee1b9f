//! Model assembly shared by training, evaluation, and matching: parameter
//! registration, per-mesh preparation, and batched feature computation.

use rand::Rng;

use crate::descriptor::{local_descriptor, node_feature, DescriptorParams};
use crate::diffcore::{CheckpointError, GruSpec, ParameterStore, Tape, Tensor};
use crate::hiergraph::{build_shape_graph, extract_local_graph, LocalGraph, PatchCut, ShapeGraph};
use crate::mesh::vec3::Point3;
use crate::mesh::{
    build_mesh_graph, farthest_point_sampling, normalize_to_unit_ball, surface_area, MeshGraph,
    TriangleMesh,
};

use super::config::TrainConfig;
use super::PipelineError;

/// Parameter layout of the full network.
pub struct Model {
    pub descriptor: DescriptorParams,
    pub gru: GruSpec,
}

impl Model {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self {
            descriptor: DescriptorParams::with_feat_dim(cfg.feat_dim, cfg.encoding()),
            gru: GruSpec::new("gru", cfg.feat_dim),
        }
    }

    pub fn register(&self, store: &mut ParameterStore, rng: &mut impl Rng) {
        self.descriptor.register(store, rng);
        self.gru.register(store, rng);
    }

    /// Validate that a loaded store matches this layout.
    pub fn expect(&self, store: &ParameterStore) -> Result<(), CheckpointError> {
        self.descriptor.expect(store)?;
        self.gru.expect(store)
    }
}

/// A mesh with everything the matcher needs derived from it.
pub struct PreparedShape {
    pub mesh: TriangleMesh,
    pub graph: MeshGraph,
    pub seeds: Vec<usize>,
    pub patches: Vec<LocalGraph>,
    pub shape_graph: ShapeGraph,
    pub area: f64,
}

impl PreparedShape {
    pub fn seed_positions(&self) -> Vec<Point3> {
        self.seeds.iter().map(|&s| self.mesh.vertices[s]).collect()
    }
}

/// Normalize, sample seeds, cut local patches, and build the shape graph.
pub fn prepare_shape(mesh: &TriangleMesh, cfg: &TrainConfig) -> Result<PreparedShape, PipelineError> {
    let mesh = normalize_to_unit_ball(mesh)?;
    let graph = build_mesh_graph(&mesh);
    let seeds = farthest_point_sampling(&mesh.vertices, cfg.n_seeds, 0)?;
    let patches = seeds
        .iter()
        .map(|&s| extract_local_graph(&graph, &mesh.vertices, s, PatchCut::Hops(cfg.d_cut), cfg.r_local))
        .collect::<Result<Vec<_>, _>>()?;
    let shape_graph = build_shape_graph(&seeds, &mesh.vertices, &graph, cfg.r_shape)?;
    let area = surface_area(&mesh);
    Ok(PreparedShape { mesh, graph, seeds, patches, shape_graph, area })
}

/// A rotation matrix applied to patch coordinates and seed positions.
#[derive(Debug, Clone, Copy)]
pub struct Rotation(pub [[f64; 3]; 3]);

impl Rotation {
    pub const IDENTITY: Rotation =
        Rotation([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn apply(&self, p: Point3) -> Point3 {
        let m = &self.0;
        [
            m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2],
            m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2],
            m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2],
        ]
    }

    /// Uniformly random rotation from three unit draws (Shoemake's
    /// quaternion construction).
    pub fn random(rng: &mut impl Rng) -> Rotation {
        let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
        let two_pi = 2.0 * std::f64::consts::PI;
        let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
        let q = [
            a * (two_pi * u2).sin(),
            a * (two_pi * u2).cos(),
            b * (two_pi * u3).sin(),
            b * (two_pi * u3).cos(),
        ];
        let (x, y, z, w) = (q[0], q[1], q[2], q[3]);
        Rotation([
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
            [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
            [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
        ])
    }
}

/// Stack one unit descriptor per patch into an `N x d` tensor, applying the
/// rotation to local coordinates first.
pub fn patch_descriptors(
    tape: &mut Tape,
    store: &ParameterStore,
    model: &Model,
    patches: &[LocalGraph],
    rotation: &Rotation,
) -> Tensor {
    assert!(!patches.is_empty(), "need at least one patch");
    let rows: Vec<Tensor> = patches
        .iter()
        .map(|p| {
            let rotated = p.with_transformed_coords(|c| rotation.apply(c));
            local_descriptor(tape, store, &rotated, &model.descriptor)
        })
        .collect();
    tape.concat_rows(&rows)
}

/// Descriptors plus fused node features for one prepared shape under a
/// rotation.
pub struct ShapeFeatures {
    pub descriptors: Tensor,
    pub features: Tensor,
    pub positions: Vec<Point3>,
}

pub fn shape_features(
    tape: &mut Tape,
    store: &ParameterStore,
    model: &Model,
    shape: &PreparedShape,
    rotation: &Rotation,
) -> ShapeFeatures {
    let descriptors = patch_descriptors(tape, store, model, &shape.patches, rotation);
    let positions: Vec<Point3> =
        shape.seed_positions().into_iter().map(|p| rotation.apply(p)).collect();
    let features = node_feature(tape, store, descriptors, &positions, &model.descriptor);
    ShapeFeatures { descriptors, features, positions }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::mesh::vec3;
    use crate::pipeline::synth::{base_mesh, BaseShape};

    use super::*;

    fn desk_config() -> TrainConfig {
        TrainConfig {
            n_seeds: 12,
            d_cut: 3,
            r_local: 0.3,
            r_shape: 0.9,
            feat_dim: 8,
            m_freqs: 3,
            sigma: 4.0,
            ..Default::default()
        }
    }

    #[test]
    fn prepare_shape_produces_consistent_pieces() {
        let cfg = desk_config();
        let mesh = base_mesh(BaseShape::Cylinder, (12, 10));
        let shape = prepare_shape(&mesh, &cfg).unwrap();
        assert_eq!(shape.seeds.len(), cfg.n_seeds);
        assert_eq!(shape.patches.len(), cfg.n_seeds);
        assert_eq!(shape.shape_graph.node_count(), cfg.n_seeds);
        assert!(shape.area > 0.0);
        for (patch, &seed) in shape.patches.iter().zip(&shape.seeds) {
            assert_eq!(patch.seed, seed);
            assert_eq!(patch.nodes[patch.seed_node()].1, [0.0, 0.0, 0.0]);
        }
        let far = shape.mesh.vertices.iter().map(|v| vec3::norm(*v)).fold(0.0, f64::max);
        assert!((far - 1.0).abs() < 1e-9);
    }

    #[test]
    fn random_rotations_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let rot = Rotation::random(&mut rng);
            let m = rot.0;
            for i in 0..3 {
                for j in 0..3 {
                    let dot: f64 = (0..3).map(|k| m[k][i] * m[k][j]).sum();
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - expect).abs() < 1e-12);
                }
            }
            // Proper rotation: determinant +1.
            let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
            assert!((det - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn features_have_expected_shapes_and_unit_descriptors() {
        let cfg = desk_config();
        let model = Model::from_config(&cfg);
        let mut store = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        model.register(&mut store, &mut rng);
        assert!(model.expect(&store).is_ok());

        let mesh = base_mesh(BaseShape::Cylinder, (12, 10));
        let shape = prepare_shape(&mesh, &cfg).unwrap();
        let mut tape = Tape::new();
        let feats = shape_features(&mut tape, &store, &model, &shape, &Rotation::IDENTITY);
        assert_eq!(feats.descriptors.rows(), cfg.n_seeds);
        assert_eq!(feats.descriptors.cols(), cfg.feat_dim);
        assert_eq!(feats.features.rows(), cfg.n_seeds);
        assert_eq!(feats.features.cols(), cfg.feat_dim);
        for i in 0..cfg.n_seeds {
            let row = &tape.value(feats.descriptors)[i * cfg.feat_dim..(i + 1) * cfg.feat_dim];
            let norm: f64 = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9);
        }
    }
}
