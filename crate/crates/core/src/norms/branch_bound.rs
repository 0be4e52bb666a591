//! Exact `L_k(M)` by depth-first branch and bound over row-to-group maps.
//!
//! Rows are assigned in the order they appear in `M`. A partial assignment
//! of rows `0..i` is abandoned when
//!
//! ```text
//! ‖Pᵀ A‖ + L_k(rows i..n) <= best known value
//! ```
//!
//! where `‖Pᵀ A‖` is the value of the prefix alone. The `L_k` of every row
//! suffix comes from a table filled bottom-up (shortest suffix first), each
//! entry solved by the same search. Only canonical prefixes are explored,
//! since relabelling the groups does not change the objective.
//!
//! The search splits into independent subtrees at `parallel_depth`; workers
//! pull subtrees from a shared queue and publish improvements through one
//! atomic incumbent.

use std::thread;

use log::debug;

use crate::error::{Error, Result};
use crate::matrix::WitnessMatrix;

use super::parallel::{prune_start, run_workers, select_witness, Incumbent, Record};
use super::{check_k, evaluate_groups, sign_search, GroupAssignment};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Worker threads, at least 1.
    pub threads: usize,
    /// Prefix length at which the tree is split into parallel tasks.
    pub parallel_depth: usize,
    /// Suffixes holding at least this fraction of the rows skip the prune
    /// test. `1.0` tests everywhere below the root, `0.0` never prunes.
    pub skip_fraction: f64,
    /// Lower bound on the answer supplied by the caller. A guess above the
    /// true value is returned unchanged and flagged as dominated.
    pub guess: i64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            threads: thread::available_parallelism().map_or(1, |n| n.get()),
            parallel_depth: 3,
            skip_fraction: 0.75,
            guess: 0,
        }
    }
}

impl SolverConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.threads == 0 {
            return Err(Error::InvalidArgument("threads must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.skip_fraction) {
            return Err(Error::InvalidArgument(format!(
                "skip fraction {} not in [0, 1]",
                self.skip_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolveResult {
    pub value: i64,
    /// An assignment attaining `value`; absent only when the guess dominated.
    pub witness: Option<GroupAssignment>,
    pub guess_dominated: bool,
    /// Search-tree nodes expanded over the whole run, table included.
    pub nodes: u64,
}

/// `L_k(M)` with a witness assignment.
///
/// The value does not depend on `threads` or `parallel_depth`. Which of
/// several optimal witnesses is returned may.
pub fn lk_branch_bound(m: &WitnessMatrix, k: usize, cfg: &SolverConfig) -> Result<SolveResult> {
    check_k(k)?;
    cfg.validate()?;
    if k == 2 {
        return Ok(sign_search::l2_branch_bound(m, cfg));
    }
    Ok(lk_grouped(m, k, cfg))
}

/// The search over group labels, valid for every `k`.
pub(crate) fn lk_grouped(m: &WitnessMatrix, k: usize, cfg: &SolverConfig) -> SolveResult {
    let table = SuffixTable::build(m, k, cfg, 1);
    let floor = cfg.guess.saturating_sub(1);
    let top = table.solve(m, 0, floor, cfg);
    let nodes = table.nodes + top.nodes;
    match top.witness {
        Some(groups) => SolveResult {
            value: top.value,
            witness: Some(GroupAssignment::from_raw(k, groups)),
            guess_dominated: false,
            nodes,
        },
        None => SolveResult {
            value: cfg.guess,
            witness: None,
            guess_dominated: true,
            nodes,
        },
    }
}

/// `L_k` of every row suffix: entry `i` is `L_k(rows i..n)`, so entry 0 is
/// `L_k(M)`. The guess in `cfg` is not used.
pub fn lk_suffix_table(m: &WitnessMatrix, k: usize, cfg: &SolverConfig) -> Result<Vec<i64>> {
    check_k(k)?;
    cfg.validate()?;
    if k == 2 {
        return Ok(sign_search::l2_suffix_table(m, cfg));
    }
    let mut table = SuffixTable::build(m, k, cfg, 1);
    let top = table.solve(m, 0, i64::MIN, cfg);
    table.values[0] = top.value;
    table.values.pop();
    Ok(table.values)
}

struct SuffixTable {
    k: usize,
    /// `values[i] = L_k(rows i..n)` for `i >= lowest`, `values[n] = 0`.
    values: Vec<i64>,
    /// Optimal assignment of the shortest suffix solved so far.
    witness: Vec<u8>,
    nodes: u64,
}

struct Solved {
    value: i64,
    witness: Option<Vec<u8>>,
    nodes: u64,
}

impl SuffixTable {
    /// Fills entries `n-1` down to `lowest`.
    fn build(m: &WitnessMatrix, k: usize, cfg: &SolverConfig, lowest: usize) -> Self {
        let n = m.rows();
        let mut table = SuffixTable {
            k,
            values: vec![0; n + 1],
            witness: Vec::new(),
            nodes: 0,
        };
        for start in (lowest..n).rev() {
            let solved = table.solve(m, start, i64::MIN, cfg);
            table.values[start] = solved.value;
            table.witness = solved.witness.expect("unguessed solve always has a witness");
            table.nodes += solved.nodes;
        }
        table
    }

    /// Solves rows `start..n`, assuming entries above `start` are filled.
    fn solve(&self, m: &WitnessMatrix, start: usize, floor: i64, cfg: &SolverConfig) -> Solved {
        let n = m.rows();
        let (seed_value, seed) = if start + 1 == n {
            let v = m.row(start).iter().map(|x| x.abs()).sum();
            (v, vec![0u8])
        } else {
            seed_assignment(m, start, self.k, &self.witness)
        };

        let incumbent = Incumbent::new(seed_value.max(floor));
        let depth = cfg.parallel_depth.min(n - start);
        let tasks = canonical_prefixes(depth, self.k);
        let ctx = SearchContext {
            m: m.as_slice(),
            cols: m.cols(),
            n,
            k: self.k,
            start,
            suffix: &self.values,
            prune_from: prune_start(start, n, cfg.skip_fraction),
            incumbent: &incumbent,
        };

        let outputs = run_workers(tasks.len(), cfg.threads, |queue| {
            let mut w = Worker::new(&ctx);
            while let Some(t) = queue.next() {
                w.task = t;
                w.run_prefix(&tasks[t]);
            }
            (w.best, w.nodes)
        });
        let nodes = outputs.iter().map(|o| o.1).sum();
        let value = incumbent.into_inner();
        let witness = select_witness(
            outputs.into_iter().filter_map(|o| o.0),
            value,
            (seed_value, seed),
            floor,
        );
        debug!(
            "L_{} of rows {start}..{n}: {value} ({nodes} nodes, {} tasks)",
            self.k,
            tasks.len()
        );
        Solved {
            value,
            witness,
            nodes,
        }
    }
}

/// All canonical label sequences of length `depth`, in depth-first order.
fn canonical_prefixes(depth: usize, k: usize) -> Vec<Vec<u8>> {
    fn extend(prefix: &mut Vec<u8>, used: usize, depth: usize, k: usize, out: &mut Vec<Vec<u8>>) {
        if prefix.len() == depth {
            out.push(prefix.clone());
            return;
        }
        for g in 0..(used + 1).min(k) {
            prefix.push(g as u8);
            extend(prefix, used.max(g + 1), depth, k, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    extend(&mut Vec::with_capacity(depth), 0, depth, k, &mut out);
    out
}

/// Starting incumbent for rows `start..n`: the optimal assignment of rows
/// `start+1..n` with row `start` placed in its best group, then improved by
/// single-row moves.
fn seed_assignment(m: &WitnessMatrix, start: usize, k: usize, tail: &[u8]) -> (i64, Vec<u8>) {
    let used = tail.iter().map(|&g| g as usize + 1).max().unwrap_or(0);
    let mut best: Option<(i64, Vec<u8>)> = None;
    for g in 0..(used + 1).min(k) {
        let mut groups = Vec::with_capacity(tail.len() + 1);
        groups.push(g as u8);
        groups.extend_from_slice(tail);
        let v = evaluate_groups(m, start, &groups, k);
        if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
            best = Some((v, groups));
        }
    }
    let (_, mut groups) = best.expect("at least one group");
    let value = improve_by_moves(m, start, k, &mut groups);
    let groups = GroupAssignment::from_raw(k, groups).raw().to_vec();
    (value, groups)
}

/// Hill climbing: move single rows between groups while that strictly
/// improves the objective. Returns the final value.
fn improve_by_moves(m: &WitnessMatrix, start: usize, k: usize, groups: &mut [u8]) -> i64 {
    let cols = m.cols();
    let mut sums = vec![0i64; k * cols];
    for (i, &g) in groups.iter().enumerate() {
        for (s, v) in sums[g as usize * cols..][..cols].iter_mut().zip(m.row(start + i)) {
            *s += v;
        }
    }
    let norm = |s: &[i64]| s.iter().map(|x| x.abs()).sum::<i64>();
    let mut norms: Vec<i64> = sums.chunks_exact(cols).map(norm).collect();
    const MAX_PASSES: usize = 50;
    for _ in 0..MAX_PASSES {
        let mut improved = false;
        for (i, g) in groups.iter_mut().enumerate() {
            let row = m.row(start + i);
            let from = *g as usize;
            let from_after: i64 = sums[from * cols..][..cols]
                .iter()
                .zip(row)
                .map(|(s, v)| (s - v).abs())
                .sum();
            let mut best = (0i64, from, 0i64);
            for to in (0..k).filter(|&t| t != from) {
                let to_after: i64 = sums[to * cols..][..cols]
                    .iter()
                    .zip(row)
                    .map(|(s, v)| (s + v).abs())
                    .sum();
                let gain = from_after - norms[from] + to_after - norms[to];
                if gain > best.0 {
                    best = (gain, to, to_after);
                }
            }
            if best.0 > 0 {
                let (_, to, to_after) = best;
                for (s, v) in sums[from * cols..][..cols].iter_mut().zip(row) {
                    *s -= v;
                }
                for (s, v) in sums[to * cols..][..cols].iter_mut().zip(row) {
                    *s += v;
                }
                norms[from] = from_after;
                norms[to] = to_after;
                *g = to as u8;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    norms.iter().sum()
}

struct SearchContext<'a> {
    m: &'a [i64],
    cols: usize,
    n: usize,
    k: usize,
    start: usize,
    suffix: &'a [i64],
    prune_from: usize,
    incumbent: &'a Incumbent,
}

struct Worker<'a> {
    ctx: &'a SearchContext<'a>,
    /// Running row sums of each group, `k × cols`.
    sums: Vec<i64>,
    /// Cached Manhattan norm of each group sum.
    norms: Vec<i64>,
    /// Labels of rows `start..n`.
    assign: Vec<u8>,
    best: Option<Record<Vec<u8>>>,
    task: usize,
    nodes: u64,
}

impl<'a> Worker<'a> {
    fn new(ctx: &'a SearchContext<'a>) -> Self {
        Worker {
            ctx,
            sums: vec![0; ctx.k * ctx.cols],
            norms: vec![0; ctx.k],
            assign: vec![0; ctx.n - ctx.start],
            best: None,
            task: 0,
            nodes: 0,
        }
    }

    #[inline]
    fn row(&self, i: usize) -> &'a [i64] {
        &self.ctx.m[i * self.ctx.cols..(i + 1) * self.ctx.cols]
    }

    fn run_prefix(&mut self, prefix: &[u8]) {
        let ctx = self.ctx;
        let cols = ctx.cols;
        self.sums.iter_mut().for_each(|s| *s = 0);
        let mut used = 0;
        for (offset, &g) in prefix.iter().enumerate() {
            let row = self.row(ctx.start + offset);
            for (s, v) in self.sums[g as usize * cols..][..cols].iter_mut().zip(row) {
                *s += v;
            }
            self.assign[offset] = g;
            used = used.max(g as usize + 1);
        }
        for (norm, sum) in self.norms.iter_mut().zip(self.sums.chunks_exact(cols)) {
            *norm = sum.iter().map(|x| x.abs()).sum();
        }
        let prefix_value: i64 = self.norms.iter().sum();
        let i = ctx.start + prefix.len();
        if i == ctx.n {
            self.offer(prefix_value);
            return;
        }
        if i >= ctx.prune_from
            && prefix_value + ctx.suffix[i] <= ctx.incumbent.get()
        {
            return;
        }
        self.dfs(i, used, prefix_value);
    }

    /// Expands row `i` given the current prefix value.
    fn dfs(&mut self, i: usize, used: usize, prefix_value: i64) {
        self.nodes += 1;
        let ctx = self.ctx;
        let cols = ctx.cols;
        let row = self.row(i);
        let last = i + 1 == ctx.n;
        let prune_child = i + 1 >= ctx.prune_from;
        let bound_rest = ctx.suffix[i + 1];
        let local = i - ctx.start;

        for g in 0..(used + 1).min(ctx.k) {
            let sum = &self.sums[g * cols..(g + 1) * cols];
            let new_norm: i64 = sum.iter().zip(row).map(|(s, v)| (s + v).abs()).sum();
            let child_value = prefix_value - self.norms[g] + new_norm;
            if last {
                self.assign[local] = g as u8;
                self.offer(child_value);
                continue;
            }
            if prune_child
                && child_value + bound_rest <= ctx.incumbent.get()
            {
                continue;
            }
            let old_norm = self.norms[g];
            for (s, v) in self.sums[g * cols..(g + 1) * cols].iter_mut().zip(row) {
                *s += v;
            }
            self.norms[g] = new_norm;
            self.assign[local] = g as u8;
            self.dfs(i + 1, used.max(g + 1), child_value);
            for (s, v) in self.sums[g * cols..(g + 1) * cols].iter_mut().zip(row) {
                *s -= v;
            }
            self.norms[g] = old_norm;
        }
    }

    #[inline]
    fn offer(&mut self, value: i64) {
        if self.ctx.incumbent.offer(value) {
            self.best = Some(Record {
                value,
                task: self.task,
                assignment: self.assign.clone(),
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{gen_family, make_doubled};
    use crate::norms::bruteforce::{lk_bruteforce, local_bound_bruteforce};

    fn cfg(threads: usize, depth: usize) -> SolverConfig {
        SolverConfig {
            threads,
            parallel_depth: depth,
            ..SolverConfig::default()
        }
    }

    fn chsh() -> WitnessMatrix {
        gen_family(2).unwrap()
    }

    #[test]
    fn chsh_values() {
        let r = lk_branch_bound(&chsh(), 2, &SolverConfig::default()).unwrap();
        assert_eq!(r.value, 4);
        assert!(!r.guess_dominated);
        assert_eq!(r.witness.unwrap().evaluate(&chsh()).unwrap(), 4);
        assert_eq!(lk_branch_bound(&chsh(), 3, &cfg(1, 0)).unwrap().value, 4);
    }

    #[test]
    fn concatenation_example() {
        let ab = WitnessMatrix::from_rows(vec![vec![1, 1], vec![1, -1], vec![-1, 0]]).unwrap();
        assert_eq!(lk_branch_bound(&ab, 2, &cfg(1, 3)).unwrap().value, 3);
    }

    #[test]
    fn doubled_chsh_equals_twice_local_bound() {
        let d = make_doubled(&chsh());
        assert_eq!(lk_branch_bound(&d, 2, &cfg(2, 3)).unwrap().value, 4);
    }

    #[test]
    fn suffix_table_entries() {
        let c = SolverConfig::default();
        assert_eq!(lk_suffix_table(&chsh(), 2, &c).unwrap(), vec![4, 2]);
        let row = WitnessMatrix::from_rows(vec![vec![3, -4, 0, 1]]).unwrap();
        for k in 1..4 {
            assert_eq!(lk_suffix_table(&row, k, &c).unwrap(), vec![8]);
        }
        let m4 = gen_family(4).unwrap();
        let table = lk_suffix_table(&m4, 2, &c).unwrap();
        assert_eq!(*table.last().unwrap(), 8);
        for (i, &v) in table.iter().enumerate() {
            assert_eq!(v, lk_bruteforce(&m4.row_suffix(i), 2).unwrap());
        }
    }

    #[test]
    fn guess_above_optimum_is_dominated() {
        let m4 = gen_family(4).unwrap();
        let truth = lk_bruteforce(&m4, 2).unwrap();
        let r = lk_branch_bound(
            &m4,
            2,
            &SolverConfig {
                guess: truth + 1,
                ..cfg(1, 2)
            },
        )
        .unwrap();
        assert_eq!(r.value, truth + 1);
        assert!(r.guess_dominated);
        assert!(r.witness.is_none());
    }

    #[test]
    fn exact_guess_still_finds_witness() {
        let m4 = gen_family(4).unwrap();
        let truth = lk_bruteforce(&m4, 3).unwrap();
        let r = lk_branch_bound(
            &m4,
            3,
            &SolverConfig {
                guess: truth,
                ..cfg(2, 1)
            },
        )
        .unwrap();
        assert_eq!(r.value, truth);
        assert!(!r.guess_dominated);
        assert_eq!(r.witness.unwrap().evaluate(&m4).unwrap(), truth);
    }

    #[test]
    fn family_formulas() {
        for k in 1..=5 {
            let f = gen_family(k).unwrap();
            let expect = (k as i64) << (k - 1);
            assert_eq!(lk_branch_bound(&f, k, &cfg(1, 3)).unwrap().value, expect);
            assert!(local_bound_bruteforce(&f).unwrap() <= expect);
        }
    }

    #[test]
    fn canonical_prefix_counts() {
        // Stirling-type counts of set partitions into at most k blocks.
        assert_eq!(canonical_prefixes(0, 2).len(), 1);
        assert_eq!(canonical_prefixes(3, 2).len(), 4);
        assert_eq!(canonical_prefixes(4, 3).len(), 14);
        assert!(canonical_prefixes(5, 3)
            .iter()
            .all(|p| super::super::is_canonical(p)));
    }

    #[test]
    fn skip_fraction_extremes_agree() {
        let m = WitnessMatrix::from_rows(vec![
            vec![3, -1, 4, 1],
            vec![-5, 9, 2, -6],
            vec![5, 3, -5, 8],
            vec![-9, 7, 9, 3],
            vec![2, -3, 8, -4],
        ])
        .unwrap();
        let truth = lk_bruteforce(&m, 2).unwrap();
        for skip in [0.0, 0.5, 0.75, 1.0] {
            let c = SolverConfig {
                skip_fraction: skip,
                ..cfg(1, 0)
            };
            assert_eq!(lk_branch_bound(&m, 2, &c).unwrap().value, truth);
        }
    }

    #[test]
    fn grouped_search_at_k2_matches_bruteforce() {
        let m = WitnessMatrix::from_rows(vec![
            vec![3, -1, 4, 1],
            vec![-5, 9, 2, -6],
            vec![5, 3, -5, 8],
            vec![-9, 7, 9, 3],
            vec![2, -3, 8, -4],
            vec![-2, 6, 0, 4],
        ])
        .unwrap();
        let r = lk_grouped(&m, 2, &cfg(2, 2));
        assert_eq!(r.value, lk_bruteforce(&m, 2).unwrap());
        assert_eq!(r.witness.unwrap().evaluate(&m).unwrap(), r.value);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let bad = SolverConfig {
            threads: 0,
            ..SolverConfig::default()
        };
        assert!(lk_branch_bound(&chsh(), 2, &bad).is_err());
        let bad = SolverConfig {
            skip_fraction: 1.5,
            ..SolverConfig::default()
        };
        assert!(lk_branch_bound(&chsh(), 2, &bad).is_err());
        assert!(lk_branch_bound(&chsh(), 0, &SolverConfig::default()).is_err());
    }
}
