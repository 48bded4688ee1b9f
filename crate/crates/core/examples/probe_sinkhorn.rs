use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn lse(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Plain-array alternating rounds; returns rounds needed to reach `tol`.
fn iters_to_converge(c: &[f64], n: usize, tau: f64, tol: f64, cap: usize) -> usize {
    let k: Vec<f64> = c.iter().map(|x| x / tau).collect();
    let logr = (1.0 / n as f64).ln();
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut buf = vec![0.0; n];
    let mut rounds = 0;
    loop {
        for _ in 0..16 {
            for i in 0..n {
                for j in 0..n {
                    buf[j] = k[i * n + j] + v[j];
                }
                u[i] = logr - lse(&buf);
            }
            for j in 0..n {
                for i in 0..n {
                    buf[i] = k[i * n + j] + u[i];
                }
                v[j] = logr - lse(&buf);
            }
            rounds += 1;
        }
        let target = 1.0 / n as f64;
        let mut dev: f64 = 0.0;
        for i in 0..n {
            let s: f64 = (0..n).map(|j| (k[i * n + j] + u[i] + v[j]).exp()).sum();
            dev = dev.max((s - target).abs());
        }
        for j in 0..n {
            let s: f64 = (0..n).map(|i| (k[i * n + j] + u[i] + v[j]).exp()).sum();
            dev = dev.max((s - target).abs());
        }
        if dev < tol || rounds >= cap {
            return rounds;
        }
    }
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for &(n, trials, cap) in &[
        (4usize, 200usize, 40_000_000usize),
        (16, 100, 2_000_000),
        (64, 40, 200_000),
    ] {
        for &tau in &[0.05, 0.1, 1.0] {
            let mut counts: Vec<usize> = Vec::new();
            for _ in 0..trials {
                let c: Vec<f64> =
                    (0..n * n).map(|_| (rng.random::<f64>() * 2.0 - 1.0) * 10.0).collect();
                counts.push(iters_to_converge(&c, n, tau, 1e-6, cap));
            }
            counts.sort_unstable();
            println!(
                "n={n:3} tau={tau:5}: median {:8} p90 {:8} max {:9}",
                counts[counts.len() / 2],
                counts[counts.len() * 9 / 10],
                counts[counts.len() - 1]
            );
        }
    }
}
