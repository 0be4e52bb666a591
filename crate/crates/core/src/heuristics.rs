//! See-saw lower bounds on `L_2(M)`.
//!
//! A deterministic one-bit strategy is a bit `a_x` per row and two output
//! vectors `b⁺`, `b⁻`; row `x` is scored against `b⁺` when `a_x = +1` and
//! against `b⁻` otherwise. The see-saw alternates between the optimal output
//! vectors for fixed bits and the optimal bits for fixed outputs until the
//! objective stops changing.

use std::cmp::Ordering;
use std::iter::Sum;
use std::ops::{Add, Neg, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::{Matrix, RealMatrix};

/// Hard cap on see-saw iterations per restart.
pub const MAX_ITERATIONS: usize = 10_000;

/// Relative tolerance used to detect a repeated objective on real input.
pub const REAL_TOLERANCE: f64 = 1e-12;

/// Entry types the see-saw runs on. Integers compare exactly, reals with
/// [`REAL_TOLERANCE`].
pub trait Scalar:
    Copy + Send + Sync + PartialOrd + Default + Add<Output = Self> + Sub<Output = Self> + Neg<Output = Self> + Sum
{
    fn same_value(prev: Self, next: Self) -> bool;
    fn to_f64(self) -> f64;
}

impl Scalar for i64 {
    fn same_value(prev: Self, next: Self) -> bool {
        prev == next
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn same_value(prev: Self, next: Self) -> bool {
        (next - prev).abs() <= REAL_TOLERANCE * prev.abs().max(next.abs()).max(1.0)
    }
    fn to_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OneBitStrategy {
    pub a: Vec<i8>,
    pub b_plus: Vec<i8>,
    pub b_minus: Vec<i8>,
}

impl OneBitStrategy {
    pub fn new(a: Vec<i8>, b_plus: Vec<i8>, b_minus: Vec<i8>) -> Result<Self> {
        if b_plus.len() != b_minus.len() {
            return Err(Error::Dimension(format!(
                "b_plus has {} entries, b_minus {}",
                b_plus.len(),
                b_minus.len()
            )));
        }
        if a.iter().chain(&b_plus).chain(&b_minus).any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidArgument("strategy entries must be +1 or -1".into()));
        }
        Ok(OneBitStrategy { a, b_plus, b_minus })
    }

    /// Output of Bob on setting `y` for preparation `x`.
    #[inline]
    pub fn output(&self, x: usize, y: usize) -> i8 {
        if self.a[x] > 0 {
            self.b_plus[y]
        } else {
            self.b_minus[y]
        }
    }

    /// `Σ_xy M_xy E_xy` for the correlation this strategy produces.
    pub fn evaluate<T: Scalar>(&self, m: &Matrix<T>) -> Result<T> {
        if m.rows() != self.a.len() || m.cols() != self.b_plus.len() {
            return Err(Error::Dimension(format!(
                "strategy is {}x{}, matrix is {}x{}",
                self.a.len(),
                self.b_plus.len(),
                m.rows(),
                m.cols()
            )));
        }
        Ok(m.row_iter()
            .enumerate()
            .map(|(x, row)| {
                let b = if self.a[x] > 0 { &self.b_plus } else { &self.b_minus };
                signed_dot(row, b)
            })
            .sum())
    }
}

/// Deterministic correlation matrix of a strategy, entries in `{-1, +1}`.
pub fn strategy_correlation(s: &OneBitStrategy) -> RealMatrix {
    RealMatrix::from_fn(s.a.len(), s.b_plus.len(), |x, y| s.output(x, y) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeesawReport<T> {
    pub value: T,
    pub strategy: OneBitStrategy,
    /// Iterations taken by the restart that produced `value`.
    pub iterations: usize,
    pub restarts_used: usize,
}

/// Best see-saw value over `restarts` random starts. Restart `r` draws its
/// initial bits from a ChaCha8 generator seeded with `seed + r`; ties keep
/// the lowest restart index.
pub fn seesaw_l2<T: Scalar>(m: &Matrix<T>, restarts: usize, seed: u64) -> Result<SeesawReport<T>> {
    if restarts == 0 {
        return Err(Error::InvalidArgument("restarts must be at least 1".into()));
    }
    let best = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let a = random_bits(m.rows(), seed.wrapping_add(r as u64));
            let (trace, strategy) = run(m, a);
            (r, *trace.last().expect("at least one iterate"), trace.len(), strategy)
        })
        .reduce_with(|p, q| {
            let q_wins = match q.1.partial_cmp(&p.1) {
                Some(Ordering::Greater) => true,
                Some(Ordering::Equal) => q.0 < p.0,
                _ => false,
            };
            if q_wins {
                q
            } else {
                p
            }
        })
        .expect("restarts >= 1");
    Ok(SeesawReport {
        value: best.1,
        strategy: best.3,
        iterations: best.2,
        restarts_used: restarts,
    })
}

/// Runs one see-saw from the given bits. Returns the objective after every
/// iteration together with the final strategy.
pub fn seesaw_from<T: Scalar>(m: &Matrix<T>, a: Vec<i8>) -> Result<(Vec<T>, OneBitStrategy)> {
    if a.len() != m.rows() {
        return Err(Error::Dimension(format!(
            "{} initial bits for {} rows",
            a.len(),
            m.rows()
        )));
    }
    if a.iter().any(|&s| s != 1 && s != -1) {
        return Err(Error::InvalidArgument("initial bits must be +1 or -1".into()));
    }
    Ok(run(m, a))
}

/// Objective sequence of the single restart `seed` of [`seesaw_l2`].
pub fn seesaw_trace<T: Scalar>(m: &Matrix<T>, seed: u64) -> Vec<T> {
    run(m, random_bits(m.rows(), seed)).0
}

fn random_bits(n: usize, seed: u64) -> Vec<i8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect()
}

#[inline]
fn sgn<T: Scalar>(v: T) -> i8 {
    if v >= T::default() {
        1
    } else {
        -1
    }
}

#[inline]
fn signed_dot<T: Scalar>(row: &[T], signs: &[i8]) -> T {
    row.iter()
        .zip(signs)
        .map(|(&v, &s)| if s > 0 { v } else { -v })
        .sum()
}

fn run<T: Scalar>(m: &Matrix<T>, mut a: Vec<i8>) -> (Vec<T>, OneBitStrategy) {
    let cols = m.cols();
    let zero = T::default();
    let mut b_plus = vec![1i8; cols];
    let mut b_minus = vec![1i8; cols];
    let mut trace: Vec<T> = Vec::new();
    for _ in 0..MAX_ITERATIONS {
        // Best outputs for fixed bits: sign of each group's column sums.
        let mut plus = vec![zero; cols];
        let mut minus = vec![zero; cols];
        for (x, row) in m.row_iter().enumerate() {
            let acc = if a[x] > 0 { &mut plus } else { &mut minus };
            for (s, &v) in acc.iter_mut().zip(row) {
                *s = *s + v;
            }
        }
        for y in 0..cols {
            b_plus[y] = sgn(plus[y]);
            b_minus[y] = sgn(minus[y]);
        }
        // Best bits for fixed outputs.
        let mut value = zero;
        for (ax, row) in a.iter_mut().zip(m.row_iter()) {
            let p = signed_dot(row, &b_plus);
            let q = signed_dot(row, &b_minus);
            if p >= q {
                *ax = 1;
                value = value + p;
            } else {
                *ax = -1;
                value = value + q;
            }
        }
        let done = trace.last().is_some_and(|&prev| T::same_value(prev, value));
        trace.push(value);
        if done {
            break;
        }
    }
    (
        trace,
        OneBitStrategy {
            a,
            b_plus,
            b_minus,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{gen_family, WitnessMatrix};
    use crate::norms::lk_bruteforce;

    #[test]
    fn chsh_reaches_four() {
        let r = seesaw_l2(&gen_family(2).unwrap(), 10, 1).unwrap();
        assert_eq!(r.value, 4);
        assert_eq!(r.strategy.evaluate(&gen_family(2).unwrap()).unwrap(), 4);
        assert_eq!(r.restarts_used, 10);
    }

    #[test]
    fn zero_matrix_gives_zero() {
        let z = WitnessMatrix::zeros(3, 4).unwrap();
        assert_eq!(seesaw_l2(&z, 3, 0).unwrap().value, 0);
        let zr = RealMatrix::zeros(2, 2);
        assert_eq!(seesaw_l2(&zr, 3, 0).unwrap().value, 0.0);
    }

    #[test]
    fn strategy_correlation_examples() {
        let s = OneBitStrategy::new(vec![1], vec![1], vec![-1]).unwrap();
        assert_eq!(strategy_correlation(&s).as_slice(), &[1.0]);
        let s = OneBitStrategy::new(vec![-1], vec![1], vec![-1]).unwrap();
        assert_eq!(strategy_correlation(&s).as_slice(), &[-1.0]);
        assert!(OneBitStrategy::new(vec![0], vec![1], vec![1]).is_err());
    }

    #[test]
    fn report_is_reproducible_and_sound() {
        let m = WitnessMatrix::from_rows(vec![
            vec![3, -1, 4, 1],
            vec![-5, 9, 2, -6],
            vec![5, 3, -5, 8],
            vec![-9, 7, 9, 3],
        ])
        .unwrap();
        let r1 = seesaw_l2(&m, 8, 42).unwrap();
        let r2 = seesaw_l2(&m, 8, 42).unwrap();
        assert_eq!(r1, r2);
        assert!(r1.value <= lk_bruteforce(&m, 2).unwrap());
        let trace = seesaw_trace(&m, 42);
        assert!(trace.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn real_input_matches_integer_input() {
        let m = gen_family(4).unwrap();
        let ri = seesaw_l2(&m, 5, 3).unwrap();
        let rr = seesaw_l2(&m.to_real(), 5, 3).unwrap();
        assert_eq!(ri.value as f64, rr.value);
    }
}
