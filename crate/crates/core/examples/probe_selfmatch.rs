use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shapecorr::diffcore::{ParameterStore, Tape};
use shapecorr::got::{got_forward, MatchMode};
use shapecorr::pipeline::model::{prepare_shape, shape_features, Model, Rotation};
use shapecorr::pipeline::synth::{generate_synthetic_pair, BaseShape, DeformParams};
use shapecorr::pipeline::TrainConfig;

fn run(cfg: &TrainConfig, deform: DeformParams, label: &str) {
    let mut gen_rng = ChaCha8Rng::seed_from_u64(33);
    let pair = generate_synthetic_pair(BaseShape::Cylinder, (24, 24), deform, &mut gen_rng).unwrap();
    let shape = prepare_shape(&pair.mesh_b, cfg).unwrap();
    let model = Model::from_config(cfg);
    let mut failures = 0;
    let mut worst_offdiag: f64 = 0.0;
    for init in 0..20u64 {
        let mut store = ParameterStore::new();
        model.register(&mut store, &mut ChaCha8Rng::seed_from_u64(1000 + init));
        let mut tape = Tape::new();
        let fa = shape_features(&mut tape, &store, &model, &shape, &Rotation::IDENTITY);
        let fb = shape_features(&mut tape, &store, &model, &shape, &Rotation::IDENTITY);
        let d = tape.to_matrix(fa.descriptors);
        let n = cfg.n_seeds;
        for i in 0..n {
            for l in 0..n {
                if i != l {
                    let dot: f64 = (0..cfg.feat_dim).map(|k| d.get(i, k) * d.get(l, k)).sum();
                    worst_offdiag = worst_offdiag.max(dot);
                }
            }
        }
        let got = got_forward(
            &mut tape,
            &store,
            &shape.shape_graph,
            fa.features,
            &shape.shape_graph,
            fb.features,
            &model.gru,
            &cfg.got_config(),
        )
        .unwrap();
        let matches = got.plan.matches(MatchMode::RowArgmax);
        let flips = matches.pairs.iter().enumerate().filter(|(i, m)| m.target != *i).count();
        if flips > 0 {
            failures += 1;
        }
    }
    println!(
        "{label}: N={} d={} tau={}: {}/20 inits with flips; worst off-diag similarity {:.4}",
        cfg.n_seeds, cfg.feat_dim, cfg.tau, failures, worst_offdiag
    );
}

fn main() {
    let base = TrainConfig {
        n_seeds: 32,
        d_cut: 3,
        r_local: 0.3,
        r_shape: 0.8,
        feat_dim: 32,
        sigma: 4.0,
        m_freqs: 4,
        sinkhorn_iterations: 100,
        ..Default::default()
    };
    let plain = DeformParams::default();
    let generic = DeformParams { bend_angle: 0.55, twist_rate: 0.9, bump_amplitude: 0.08 };
    let strong = DeformParams { bend_angle: 0.9, twist_rate: 1.6, bump_amplitude: 0.15 };

    run(&base, plain, "plain cylinder            ");
    run(&base, generic, "deformed cylinder         ");
    run(&base, strong, "strongly deformed         ");

    let d64 = TrainConfig { feat_dim: 64, ..base.clone() };
    run(&d64, generic, "deformed cylinder d=64    ");

    let sharp = TrainConfig { tau: 0.05, ..base.clone() };
    run(&sharp, plain, "plain cylinder tau=0.05   ");
    run(&sharp, generic, "deformed cylinder tau=0.05");
    run(&sharp, strong, "strong deform tau=0.05    ");
}
