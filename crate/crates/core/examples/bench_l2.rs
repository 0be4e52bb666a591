//! Times the exact L_2 solver on a seeded random ±1 matrix.
//!
//! cargo run --release -p pmcert --example bench_l2 -- <n> [seed] [threads] [depth]

use std::time::Instant;

use pmcert::norms::{lk_branch_bound, local_bound_branch_bound, SolverConfig};
use pmcert::WitnessMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, default: u64| args.get(i).map_or(default, |s| s.parse().unwrap());
    let n = arg(0, 30) as usize;
    let seed = arg(1, 1);
    let mut cfg = SolverConfig::default();
    cfg.threads = arg(2, cfg.threads as u64) as usize;
    cfg.parallel_depth = arg(3, cfg.parallel_depth as u64) as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * n)
        .map(|_| if rng.random::<bool>() { 1 } else { -1 })
        .collect();
    let m = WitnessMatrix::new(n, n, data).unwrap();
    let t = Instant::now();
    let l = local_bound_branch_bound(&m, &cfg).unwrap();
    println!("L={} time={:.2?}", l.value, t.elapsed());
    let t = Instant::now();
    let r = lk_branch_bound(&m, 2, &cfg).unwrap();
    println!(
        "n={n} seed={seed} L2={} nodes={} time={:.2?}",
        r.value,
        r.nodes,
        t.elapsed()
    );
}
