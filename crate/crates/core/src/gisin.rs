//! Monte Carlo simulation of the one-bit Gisin-Gisin protocol.
//!
//! Shared randomness is a uniform `λ ∈ S²`. Alice sends `c = sgn(a·λ)`;
//! Bob answers `sgn(c b·λ)` with probability `|b·λ|` and `0` otherwise.
//! Grouping `0` with `+1` gives expectation `(a·b + 1)/2`, and conditioned
//! on detection the expectation is `a·b`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::RealMatrix;
use crate::qgeom::{BlochConfig, Vec3};

/// Samples drawn from one generator stream.
pub const CHUNK_SAMPLES: u64 = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub n_samples: u64,
    pub detect_rate: f64,
    /// Mean of `b` over detected events.
    pub e_detected: f64,
    /// Mean of `b` after mapping `0` to `+1`.
    pub e_coarse: f64,
    pub se_detect_rate: f64,
    pub se_detected: f64,
    pub se_coarse: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Counts {
    plus: u64,
    minus: u64,
    none: u64,
}

impl SimReport {
    fn from_counts(c: Counts) -> Self {
        let n = (c.plus + c.minus + c.none) as f64;
        let detected = (c.plus + c.minus) as f64;
        let detect_rate = detected / n;
        let e_detected = if detected > 0.0 {
            (c.plus as f64 - c.minus as f64) / detected
        } else {
            0.0
        };
        let e_coarse = 1.0 - 2.0 * c.minus as f64 / n;
        SimReport {
            n_samples: n as u64,
            detect_rate,
            e_detected,
            e_coarse,
            se_detect_rate: (detect_rate * (1.0 - detect_rate) / n).sqrt(),
            se_detected: if detected > 0.0 {
                ((1.0 - e_detected * e_detected) / detected).sqrt()
            } else {
                f64::INFINITY
            },
            se_coarse: ((1.0 - e_coarse * e_coarse) / n).sqrt(),
        }
    }
}

/// One protocol run. Returns Bob's raw outcome in `{-1, 0, +1}`.
#[inline]
pub fn protocol_sample<R: Rng>(a: &Vec3, b: &Vec3, lambda: &Vec3, rng: &mut R) -> i8 {
    let c = if a.dot(lambda) >= 0.0 { 1.0 } else { -1.0 };
    let bl = b.dot(lambda);
    if rng.random::<f64>() < bl.abs() {
        if c * bl >= 0.0 {
            1
        } else {
            -1
        }
    } else {
        0
    }
}

fn uniform_sphere<R: Rng>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

fn check_unit(v: &Vec3, index: usize) -> Result<()> {
    let norm = v.norm();
    if (norm - 1.0).abs() > crate::qgeom::UNIT_TOLERANCE {
        return Err(Error::Normalization { index, norm });
    }
    Ok(())
}

/// Simulates `n_samples` rounds for one pair of settings.
///
/// Samples are split into chunks of [`CHUNK_SAMPLES`]; chunk `c` uses the
/// ChaCha8 generator seeded with `seed` on stream `c`. All statistics are
/// integer counts, so the report does not depend on thread scheduling.
pub fn simulate_gg(a: &Vec3, b: &Vec3, n_samples: u64, seed: u64) -> Result<SimReport> {
    check_unit(a, 0)?;
    check_unit(b, 1)?;
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    Ok(SimReport::from_counts(simulate_counts(a, b, n_samples, seed, 0)))
}

fn simulate_counts(a: &Vec3, b: &Vec3, n_samples: u64, seed: u64, stream_base: u64) -> Counts {
    let chunks = n_samples.div_ceil(CHUNK_SAMPLES);
    (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream_base + chunk);
            let len = CHUNK_SAMPLES.min(n_samples - chunk * CHUNK_SAMPLES);
            let mut c = Counts::default();
            for _ in 0..len {
                let lambda = uniform_sphere(&mut rng);
                match protocol_sample(a, b, &lambda, &mut rng) {
                    1 => c.plus += 1,
                    -1 => c.minus += 1,
                    _ => c.none += 1,
                }
            }
            c
        })
        .reduce(Counts::default, |p, q| Counts {
            plus: p.plus + q.plus,
            minus: p.minus + q.minus,
            none: p.none + q.none,
        })
}

/// Coarse-grained expectation estimate for every pair `(a_x, b_y)`. Pair
/// `(x, y)` draws from streams starting at `(x·m + y)·2³²`.
pub fn gg_matrix(cfg: &BlochConfig, n_samples: u64, seed: u64) -> Result<RealMatrix> {
    gg_reports(cfg, n_samples, seed).map(|r| {
        let (n, m) = cfg.shape();
        RealMatrix::from_fn(n, m, |x, y| r[x * m + y].e_coarse)
    })
}

/// Full reports for every pair, row-major.
pub fn gg_reports(cfg: &BlochConfig, n_samples: u64, seed: u64) -> Result<Vec<SimReport>> {
    let (n, m) = cfg.shape();
    let pairs: Vec<(Vec3, Vec3)> = (0..n * m).map(|p| (cfg.a()[p / m], cfg.b()[p % m])).collect();
    simulate_pairs(&pairs, n_samples, seed)
}

/// One report per `(a, b)`; pair `i` draws from streams starting at `i·2³²`.
pub fn simulate_pairs(pairs: &[(Vec3, Vec3)], n_samples: u64, seed: u64) -> Result<Vec<SimReport>> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    if n_samples.div_ceil(CHUNK_SAMPLES) > 1 << 32 {
        return Err(Error::SizeCap(format!("{n_samples} samples per pair is too many")));
    }
    for (i, (a, b)) in pairs.iter().enumerate() {
        check_unit(a, 2 * i)?;
        check_unit(b, 2 * i + 1)?;
    }
    Ok(pairs
        .par_iter()
        .enumerate()
        .map(|(i, (a, b))| SimReport::from_counts(simulate_counts(a, b, n_samples, seed, (i as u64) << 32)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aligned_pair_always_agrees() {
        let z = Vec3::new(0.0, 0.0, 1.0);
        let r = simulate_gg(&z, &z, 200_000, 3).unwrap();
        assert_eq!(r.e_detected, 1.0);
        assert!((r.e_coarse - 1.0).abs() < 1e-12);
        assert!((r.detect_rate - 0.5).abs() < 4.0 * r.se_detect_rate);
    }

    #[test]
    fn orthogonal_pair() {
        let r = simulate_gg(&Vec3::x(), &Vec3::z(), 400_000, 5).unwrap();
        assert!((r.e_coarse - 0.5).abs() < 4.0 * r.se_coarse);
        assert!(r.e_detected.abs() < 4.0 * r.se_detected);
        assert!((r.detect_rate - 0.5).abs() < 4.0 * r.se_detect_rate);
    }

    #[test]
    fn reports_are_reproducible() {
        let a = Vec3::new(0.6, 0.0, 0.8);
        let b = Vec3::new(0.0, 1.0, 0.0);
        let r1 = simulate_gg(&a, &b, 150_000, 11).unwrap();
        assert_eq!(r1, simulate_gg(&a, &b, 150_000, 11).unwrap());
        assert_ne!(r1, simulate_gg(&a, &b, 150_000, 12).unwrap());
        assert!(simulate_gg(&(a * 2.0), &b, 10, 0).is_err());
    }

    #[test]
    fn matrix_matches_closed_form() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let cfg = BlochConfig::new(
            vec![Vec3::z(), Vec3::x()],
            vec![Vec3::new(s, 0.0, s), Vec3::new(-s, 0.0, s)],
        )
        .unwrap();
        let e = gg_matrix(&cfg, 200_000, 1).unwrap();
        let exact = crate::qgeom::correlation_matrix(&cfg);
        for x in 0..2 {
            for y in 0..2 {
                let want = (exact.get(x, y) + 1.0) / 2.0;
                assert!((e.get(x, y) - want).abs() < 4.0 / (200_000f64).sqrt());
            }
        }
    }
}
