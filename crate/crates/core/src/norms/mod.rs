//! Exact classical bounds of a witness matrix.
//!
//! `L_k(M)` is the largest value of `Σ_g ‖Σ_{x∈g} M_x‖₁` over all ways of
//! splitting the rows of `M` into `k` groups; it is the classical bound when
//! the sender can transmit one of `k` messages. `L(M)` is the local bound
//! `max_v ‖vM‖₁` over sign vectors `v`, and `C(M)` the cut norm.
//!
//! [`lk_branch_bound`] is the production solver. The functions in
//! [`bruteforce`] enumerate everything and exist as oracles for it.

mod branch_bound;
pub mod bruteforce;
mod parallel;
mod sign_search;

pub use branch_bound::{lk_branch_bound, lk_suffix_table, SolveResult, SolverConfig};
pub use sign_search::local_bound_branch_bound;
pub use bruteforce::{
    cut_norm_abs_bruteforce, cut_norm_bruteforce, lk_bruteforce, local_bound_bruteforce, local_bound_witness, LocalWitness,
};

use crate::error::{Error, Result};
use crate::matrix::WitnessMatrix;

/// A split of the `n` rows into at most `k` groups. Group labels are
/// zero-based and kept canonical: labels first appear in the order
/// `0, 1, 2, …`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroupAssignment {
    k: usize,
    groups: Vec<u8>,
}

impl GroupAssignment {
    /// Validates labels and relabels them into canonical order.
    pub fn new(k: usize, groups: Vec<usize>) -> Result<Self> {
        if k == 0 || k > u8::MAX as usize {
            return Err(Error::InvalidArgument(format!("group count {k} out of range")));
        }
        if let Some(&g) = groups.iter().find(|&&g| g >= k) {
            return Err(Error::InvalidArgument(format!(
                "group index {g} not below k = {k}"
            )));
        }
        let mut out = GroupAssignment {
            k,
            groups: groups.into_iter().map(|g| g as u8).collect(),
        };
        out.canonicalize();
        Ok(out)
    }

    pub(crate) fn from_raw(k: usize, groups: Vec<u8>) -> Self {
        let mut out = GroupAssignment { k, groups };
        out.canonicalize();
        out
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Zero-based group index of every row.
    pub fn groups(&self) -> Vec<usize> {
        self.groups.iter().map(|&g| g as usize).collect()
    }

    pub fn group_of(&self, row: usize) -> usize {
        self.groups[row] as usize
    }

    pub(crate) fn raw(&self) -> &[u8] {
        &self.groups
    }

    pub fn is_canonical(&self) -> bool {
        is_canonical(&self.groups)
    }

    fn canonicalize(&mut self) {
        let mut relabel = [u8::MAX; 256];
        let mut next = 0u8;
        for g in &mut self.groups {
            if relabel[*g as usize] == u8::MAX {
                relabel[*g as usize] = next;
                next += 1;
            }
            *g = relabel[*g as usize];
        }
    }

    /// `Σ_g ‖Σ_{x∈g} M_x‖₁` at this assignment.
    pub fn evaluate(&self, m: &WitnessMatrix) -> Result<i64> {
        if self.groups.len() != m.rows() {
            return Err(Error::Dimension(format!(
                "assignment covers {} rows, matrix has {}",
                self.groups.len(),
                m.rows()
            )));
        }
        Ok(evaluate_groups(m, 0, &self.groups, self.k))
    }
}

pub(crate) fn is_canonical(groups: &[u8]) -> bool {
    let mut next = 0u8;
    for &g in groups {
        if g > next {
            return false;
        }
        if g == next {
            next += 1;
        }
    }
    true
}

/// Objective value of `groups` applied to rows `start..start+groups.len()`.
pub(crate) fn evaluate_groups(m: &WitnessMatrix, start: usize, groups: &[u8], k: usize) -> i64 {
    let cols = m.cols();
    let mut sums = vec![0i64; k * cols];
    for (offset, &g) in groups.iter().enumerate() {
        let sum = &mut sums[g as usize * cols..(g as usize + 1) * cols];
        for (s, v) in sum.iter_mut().zip(m.row(start + offset)) {
            *s += v;
        }
    }
    sums.iter().map(|s| s.abs()).sum()
}

pub(crate) fn check_k(k: usize) -> Result<()> {
    if k == 0 || k > u8::MAX as usize {
        return Err(Error::InvalidArgument(format!(
            "k must be in 1..=255, got {k}"
        )));
    }
    Ok(())
}
