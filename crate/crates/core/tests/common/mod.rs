#![allow(dead_code)]

use pmcert::norms::SolverConfig;
use pmcert::WitnessMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random matrix with the given shape and entries in `-r..=r`.
pub fn random_matrix(rng: &mut impl Rng, n: usize, m: usize, r: i64) -> WitnessMatrix {
    let data = (0..n * m).map(|_| rng.random_range(-r..=r)).collect();
    WitnessMatrix::new(n, m, data).unwrap()
}

/// `count` matrices with `n, m ∈ 1..=10` and entries in `[-9, 9]`.
pub fn corpus(count: usize, seed: u64) -> Vec<WitnessMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.random_range(1..=10);
            let m = rng.random_range(1..=10);
            random_matrix(&mut rng, n, m, 9)
        })
        .collect()
}

pub fn sign_matrix(n: usize, seed: u64) -> WitnessMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
    WitnessMatrix::new(n, n, data).unwrap()
}

pub fn single_thread() -> SolverConfig {
    SolverConfig {
        threads: 1,
        ..SolverConfig::default()
    }
}
