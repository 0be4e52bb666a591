//! Exhaustive enumeration. Exponential; size caps are enforced up front.

use crate::error::{Error, Result};
use crate::matrix::WitnessMatrix;

use super::check_k;

/// Sign enumeration is limited to this many free variables.
pub const LOCAL_BOUND_MAX_SIDE: usize = 30;
/// Upper limit on `k^n` for [`lk_bruteforce`] and on `2^(n+m)` for
/// [`cut_norm_bruteforce`].
pub const ENUMERATION_CAP: u128 = 100_000_000;

/// Optimal signs for the local bound: `L(M) = Σ_xy M_xy a_x b_y`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalWitness {
    pub value: i64,
    pub a: Vec<i8>,
    pub b: Vec<i8>,
}

/// `L(M) = max_{v ∈ {±1}^n} ‖vM‖₁`.
pub fn local_bound_bruteforce(m: &WitnessMatrix) -> Result<i64> {
    local_bound_witness(m).map(|w| w.value)
}

/// `L(M)` together with an optimal pair of sign vectors. Enumerates the
/// shorter side of the matrix, so the cap applies to `min(n, m)`.
pub fn local_bound_witness(m: &WitnessMatrix) -> Result<LocalWitness> {
    let side = m.rows().min(m.cols());
    if side > LOCAL_BOUND_MAX_SIDE {
        return Err(Error::SizeCap(format!(
            "local bound enumeration needs min(n, m) <= {LOCAL_BOUND_MAX_SIDE}, got {side}"
        )));
    }
    let transposed = m.rows() > m.cols();
    let a_mat = if transposed { m.transpose() } else { m.clone() };
    let (r, c) = a_mat.shape();

    // Fix v_0 = +1: v and -v give the same norm.
    let mut v = vec![1i8; r];
    let mut s = vec![0i64; c];
    for row in a_mat.row_iter() {
        for (acc, x) in s.iter_mut().zip(row) {
            *acc += x;
        }
    }
    let mut best = s.iter().map(|x| x.abs()).sum::<i64>();
    let mut best_v = v.clone();
    for g in 1u64..(1u64 << (r - 1)) {
        let flip = g.trailing_zeros() as usize + 1;
        let sign = v[flip] as i64;
        for (acc, x) in s.iter_mut().zip(a_mat.row(flip)) {
            *acc -= 2 * sign * x;
        }
        v[flip] = -v[flip];
        let val = s.iter().map(|x| x.abs()).sum::<i64>();
        if val > best {
            best = val;
            best_v.copy_from_slice(&v);
        }
    }
    let other: Vec<i8> = (0..c)
        .map(|y| {
            let col: i64 = (0..r).map(|x| best_v[x] as i64 * a_mat.get(x, y)).sum();
            if col >= 0 {
                1
            } else {
                -1
            }
        })
        .collect();
    let (a, b) = if transposed {
        (other, best_v)
    } else {
        (best_v, other)
    };
    Ok(LocalWitness { value: best, a, b })
}

/// `L_k(M)` by visiting every one of the `k^n` row-to-group maps.
pub fn lk_bruteforce(m: &WitnessMatrix, k: usize) -> Result<i64> {
    check_k(k)?;
    let n = m.rows();
    let count = (k as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if count > ENUMERATION_CAP {
        return Err(Error::SizeCap(format!(
            "k^n = {k}^{n} exceeds {ENUMERATION_CAP}"
        )));
    }
    let cols = m.cols();
    let mut sums = vec![0i64; k * cols];
    let mut best = i64::MIN;
    enumerate(m, k, 0, &mut sums, &mut best);
    debug_assert!(cols > 0);
    Ok(best)
}

fn enumerate(m: &WitnessMatrix, k: usize, row: usize, sums: &mut [i64], best: &mut i64) {
    if row == m.rows() {
        let val: i64 = sums.iter().map(|s| s.abs()).sum();
        *best = (*best).max(val);
        return;
    }
    let cols = m.cols();
    for g in 0..k {
        for (s, v) in sums[g * cols..(g + 1) * cols].iter_mut().zip(m.row(row)) {
            *s += v;
        }
        enumerate(m, k, row + 1, sums, best);
        for (s, v) in sums[g * cols..(g + 1) * cols].iter_mut().zip(m.row(row)) {
            *s -= v;
        }
    }
}

/// Cut norm `C(M) = max Σ_xy M_xy a_x b_y` over `a, b ∈ {0,1}`.
///
/// For a fixed row selection the best column selection takes exactly the
/// positive column sums, so only the shorter side is enumerated.
pub fn cut_norm_bruteforce(m: &WitnessMatrix) -> Result<i64> {
    let (n, c) = m.shape();
    if n + c > 126 || (1u128 << (n + c)) > ENUMERATION_CAP {
        return Err(Error::SizeCap(format!(
            "2^(n+m) = 2^{} exceeds {ENUMERATION_CAP}",
            n + c
        )));
    }
    let a_mat = if n > c { m.transpose() } else { m.clone() };
    let (r, c) = a_mat.shape();
    let mut selected = vec![false; r];
    let mut col_sums = vec![0i64; c];
    let mut best = 0i64;
    for g in 1u64..(1u64 << r) {
        let flip = g.trailing_zeros() as usize;
        let sign = if selected[flip] { -1 } else { 1 };
        selected[flip] = !selected[flip];
        for (acc, x) in col_sums.iter_mut().zip(a_mat.row(flip)) {
            *acc += sign * x;
        }
        let val: i64 = col_sums.iter().map(|&s| s.max(0)).sum();
        best = best.max(val);
    }
    Ok(best)
}

/// Absolute cut norm `max |Σ_xy M_xy a_x b_y|` over `a, b ∈ {0,1}`, the
/// form for which `C ≤ L ≤ 4C` and `C ≤ L_2 ≤ 8C` hold. Equals
/// `max(C(M), C(−M))`.
pub fn cut_norm_abs_bruteforce(m: &WitnessMatrix) -> Result<i64> {
    Ok(cut_norm_bruteforce(m)?.max(cut_norm_bruteforce(&m.scaled(-1)?)?))
}
