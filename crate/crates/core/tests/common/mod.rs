#![allow(dead_code)]

use ictmc_core::{fixtures, Gamble, ImpreciseQMatrix, QMatrix};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

pub fn random_q(rng: &mut ChaCha8Rng, m: usize, max_rate: f64) -> QMatrix {
    let mut rows = vec![vec![0.0; m]; m];
    for (k, row) in rows.iter_mut().enumerate() {
        let mut total = 0.0;
        for (l, v) in row.iter_mut().enumerate() {
            if l != k {
                *v = rng.gen_range(0.0..max_rate / (m as f64 - 1.0).max(1.0));
                total += *v;
            }
        }
        row[k] = -total;
    }
    QMatrix::from_rows(&rows).unwrap()
}

pub fn random_gamble(rng: &mut ChaCha8Rng, m: usize) -> Gamble {
    Gamble::new((0..m).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// A random model containing a random matrix `Q0`. Each row polytope is cut out by
/// `extra` random gambles and by upper bounds on every rate, all with random slack
/// around `Q0`.
pub fn random_model(rng: &mut ChaCha8Rng, m: usize, extra: usize, max_rate: f64) -> ImpreciseQMatrix {
    let q0 = random_q(rng, m, max_rate);
    let mut gambles: Vec<Vec<f64>> = Vec::new();
    for _ in 0..extra {
        loop {
            let g: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let spread = g.iter().cloned().fold(f64::MIN, f64::max) - g.iter().cloned().fold(f64::MAX, f64::min);
            if spread > 0.2 {
                gambles.push(g);
                break;
            }
        }
    }
    for l in 0..m {
        let mut g = vec![0.0; m];
        g[l] = -1.0;
        gambles.push(g);
    }
    let lower = gambles
        .iter()
        .map(|g| {
            (0..m)
                .map(|k| {
                    let v: f64 = (0..m).map(|l| q0.as_matrix()[(k, l)] * g[l]).sum();
                    v - rng.gen_range(0.0..0.3 * max_rate)
                })
                .collect()
        })
        .collect();
    ImpreciseQMatrix::new(m, gambles, lower).unwrap()
}

/// Example 1 with every finite lower bound shifted by up to `amount`.
pub fn perturbed_example1(rng: &mut ChaCha8Rng, amount: f64) -> ImpreciseQMatrix {
    let base = fixtures::example1();
    let gambles: Vec<Vec<f64>> = (0..6).map(|i| base.gamble(i).to_vec()).collect();
    let lower = (0..6)
        .map(|i| (0..3).map(|k| base.lower_bound(i, k) - rng.gen_range(0.0..amount)).collect())
        .collect();
    ImpreciseQMatrix::new(3, gambles, lower).unwrap()
}

/// Status line for one acceptance criterion.
pub fn report(id: u32, name: &str, pass: bool, detail: &str) {
    println!("criterion {id} [{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
}
