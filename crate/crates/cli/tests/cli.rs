//! End-to-end runs of the binary over temporary directories.

use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_shapecorr"))
}

fn write_tiny_config(path: &Path) {
    // Small enough to finish quickly, large enough to be meaningful.
    fs::write(
        path,
        "n_seeds=8\nd_cut=2\nr_local=0.35\nr_shape=1.2\nfeat_dim=8\nsigma=4\nm_freqs=3\n\
         sinkhorn_iterations=30\nepochs=2\nr_d=0.5\nring_min_hops=3\nring_max_hops=6\n\
         checkpoint_every=10\nseed=7\n",
    )
    .unwrap();
}

#[test]
fn gen_train_match_eval_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = dir.path().join("run");
    let config = dir.path().join("config.txt");
    write_tiny_config(&config);

    let status = bin()
        .args(["gen", "--count", "2", "--base", "cylinder", "--resolution", "23x23"])
        .args(["--bend-max", "0.5", "--seed", "3"])
        .arg("--out")
        .arg(&data)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(data.join("pair_0000_a.off").exists());
    assert!(data.join("pair_0000.corr").exists());

    let status = bin()
        .arg("train")
        .arg("--config")
        .arg(&config)
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let checkpoint = out.join("checkpoint_final.ckpt");
    assert!(checkpoint.exists());
    let log = fs::read_to_string(out.join("training_log.tsv")).unwrap();
    // Two epochs over two pairs: four optimizer steps, six columns each.
    assert_eq!(log.lines().count(), 4);
    assert!(log.lines().all(|l| l.split('\t').count() == 6));

    let matches_path = dir.path().join("matches.txt");
    let status = bin()
        .arg("match")
        .arg("--source")
        .arg(data.join("pair_0000_a.off"))
        .arg("--target")
        .arg(data.join("pair_0000_b.off"))
        .arg("--checkpoint")
        .arg(&checkpoint)
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&matches_path)
        .arg("--dump-graphs")
        .status()
        .unwrap();
    assert!(status.success());
    let match_text = fs::read_to_string(&matches_path).unwrap();
    assert!(match_text.starts_with("N=8 mode=row_argmax"));
    assert_eq!(match_text.lines().count(), 9);

    // Shape-graph dumps: node lines carry 4 fields, edge lines 3.
    let graph_text =
        fs::read_to_string(dir.path().join("matches_source_graph.txt")).unwrap();
    let mut node_lines = 0;
    for line in graph_text.lines() {
        match line.split_whitespace().count() {
            4 => node_lines += 1,
            3 => {}
            other => panic!("unexpected field count {other} in {line:?}"),
        }
    }
    assert_eq!(node_lines, 8);

    let report_path = dir.path().join("report.tsv");
    let output = bin()
        .arg("eval")
        .arg("--data")
        .arg(&data)
        .arg("--checkpoint")
        .arg(&checkpoint)
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&report_path)
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("mean_coarse_error="), "summary missing: {stdout}");
    let report = fs::read_to_string(&report_path).unwrap();
    assert!(report.starts_with("pair\tcoarse_error\tbijectivity_rate"));
    assert!(report.lines().last().unwrap().starts_with("mean\t"));
}

#[test]
fn missing_checkpoint_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = dir.path().join("m.off");
    fs::write(&mesh, "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n").unwrap();
    let missing = dir.path().join("no_such_checkpoint.ckpt");
    let output = bin()
        .arg("match")
        .arg("--source")
        .arg(&mesh)
        .arg("--target")
        .arg(&mesh)
        .arg("--checkpoint")
        .arg(&missing)
        .arg("--out")
        .arg(dir.path().join("out.txt"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("no_such_checkpoint.ckpt"), "stderr must name the path: {stderr}");
}

#[test]
fn unparseable_mesh_fails_nonzero_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.off");
    fs::write(&bad, "NOT_A_MESH\n").unwrap();
    let config = dir.path().join("config.txt");
    write_tiny_config(&config);

    // Build a real checkpoint quickly via gen + train.
    let data = dir.path().join("data");
    let out = dir.path().join("run");
    assert!(bin()
        .args(["gen", "--count", "1", "--resolution", "23x23", "--seed", "1"])
        .arg("--out")
        .arg(&data)
        .status()
        .unwrap()
        .success());
    assert!(bin()
        .arg("train")
        .arg("--config")
        .arg(&config)
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());

    let output = bin()
        .arg("match")
        .arg("--source")
        .arg(&bad)
        .arg("--target")
        .arg(&bad)
        .arg("--checkpoint")
        .arg(out.join("checkpoint_final.ckpt"))
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("out.txt"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("bad.off"), "{stderr}");
}

#[test]
fn train_is_deterministic_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let config = dir.path().join("config.txt");
    write_tiny_config(&config);
    assert!(bin()
        .args(["gen", "--count", "1", "--resolution", "23x23", "--bend-max", "0.4", "--seed", "9"])
        .arg("--out")
        .arg(&data)
        .status()
        .unwrap()
        .success());
    let run = |out: &Path| {
        assert!(bin()
            .arg("train")
            .arg("--config")
            .arg(&config)
            .arg("--data")
            .arg(&data)
            .arg("--out")
            .arg(out)
            .status()
            .unwrap()
            .success());
        (
            fs::read(out.join("checkpoint_final.ckpt")).unwrap(),
            fs::read(out.join("training_log.tsv")).unwrap(),
        )
    };
    let (ck1, log1) = run(&dir.path().join("run1"));
    let (ck2, log2) = run(&dir.path().join("run2"));
    assert_eq!(ck1, ck2, "checkpoints differ byte-wise");
    assert_eq!(log1, log2, "logs differ byte-wise");
}
