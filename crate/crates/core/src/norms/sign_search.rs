//! Branch and bound over sign vectors, for the local bound and for `L_2`.
//!
//! With two groups `|u| + |v| = max(|u + v|, |u - v|)` holds column by
//! column, so
//!
//! ```text
//! L_2(M) = max_a Σ_y max(|C_y|, |(aM)_y|)
//! ```
//!
//! with `C` the column sums of `M` and `a` a sign vector; rows with `a = +1`
//! form one group. Replacing `C` by zero gives `L(M)`. The search therefore
//! tracks a single partial sum `Δ = Σ_{x<i} a_x M_x`. Since the rows left
//! change `Δ` by at most `L(rest)` in Manhattan norm,
//!
//! ```text
//! Σ_y max(|C_y|, |Δ_y|) + L(rows i..n)
//! ```
//!
//! bounds every completion. For `L_2` the two-group prefix value plus
//! `L_2(rows i..n)` is also a bound, and the smaller of the two is used.
//! Both suffix tables are filled bottom-up by the same search.

use log::debug;

use crate::error::{Error, Result};
use crate::matrix::WitnessMatrix;

use super::branch_bound::{SolveResult, SolverConfig};
use super::bruteforce::LocalWitness;
use super::parallel::{prune_start, run_workers, select_witness, Incumbent, Record};
use super::GroupAssignment;

/// `L(M)` with optimal sign vectors, by branch and bound over the shorter
/// side of `M`. The guess in `cfg` is not used.
pub fn local_bound_branch_bound(m: &WitnessMatrix, cfg: &SolverConfig) -> Result<LocalWitness> {
    cfg.validate()?;
    if m.rows() == 0 {
        return Err(Error::Dimension("empty matrix".into()));
    }
    let transposed = m.rows() > m.cols();
    let a_mat = if transposed { m.transpose() } else { m.clone() };
    let tables = Tables::local(&a_mat, cfg, 0);
    let value = tables.local[0];
    let best = tables.local_witness;
    let other: Vec<i8> = (0..a_mat.cols())
        .map(|y| {
            let col: i64 = (0..a_mat.rows())
                .map(|x| best[x] as i64 * a_mat.get(x, y))
                .sum();
            if col >= 0 {
                1
            } else {
                -1
            }
        })
        .collect();
    let (a, b) = if transposed {
        (other, best)
    } else {
        (best, other)
    };
    Ok(LocalWitness { value, a, b })
}

/// `L_2(M)` with the guess semantics of [`super::lk_branch_bound`].
pub(super) fn l2_branch_bound(m: &WitnessMatrix, cfg: &SolverConfig) -> SolveResult {
    let tables = Tables::pair(m, cfg, 1);
    let floor = cfg.guess.saturating_sub(1);
    let top = tables.solve_pair(m, 0, floor, cfg);
    let nodes = tables.nodes + top.nodes;
    match top.witness {
        Some(signs) => SolveResult {
            value: top.value,
            witness: Some(signs_to_groups(&signs)),
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

/// Entry `i` is `L_2(rows i..n)`.
pub(super) fn l2_suffix_table(m: &WitnessMatrix, cfg: &SolverConfig) -> Vec<i64> {
    let mut tables = Tables::pair(m, cfg, 1);
    let top = tables.solve_pair(m, 0, i64::MIN, cfg);
    tables.pair[0] = top.value;
    tables.pair.pop();
    tables.pair
}

fn signs_to_groups(signs: &[i8]) -> GroupAssignment {
    GroupAssignment::from_raw(2, signs.iter().map(|&s| u8::from(s < 0)).collect())
}

struct Tables {
    /// `local[i] = L(rows i..n)`, `local[n] = 0`.
    local: Vec<i64>,
    local_witness: Vec<i8>,
    /// `pair[i] = L_2(rows i..n)`, `pair[n] = 0`.
    pair: Vec<i64>,
    pair_witness: Vec<i8>,
    nodes: u64,
}

struct Solved {
    value: i64,
    witness: Option<Vec<i8>>,
    nodes: u64,
}

impl Tables {
    /// Local bound of every suffix from `n-1` down to `lowest`.
    fn local(m: &WitnessMatrix, cfg: &SolverConfig, lowest: usize) -> Self {
        let n = m.rows();
        let mut t = Tables {
            local: vec![0; n + 1],
            local_witness: Vec::new(),
            pair: Vec::new(),
            pair_witness: Vec::new(),
            nodes: 0,
        };
        let zero = vec![0i64; m.cols()];
        for start in (lowest..n).rev() {
            let problem = Problem {
                m,
                start,
                floor: &zero,
                local: &t.local,
                pair: None,
            };
            let s = problem.solve(&t.local_witness, i64::MIN, cfg);
            t.local[start] = s.value;
            t.local_witness = s.witness.expect("unguessed solve always has a witness");
            t.nodes += s.nodes;
        }
        t
    }

    /// Both tables for every suffix from `n-1` down to `lowest`.
    fn pair(m: &WitnessMatrix, cfg: &SolverConfig, lowest: usize) -> Self {
        let n = m.rows();
        let mut t = Tables::local(m, cfg, lowest);
        t.pair = vec![0; n + 1];
        for start in (lowest..n).rev() {
            let s = t.solve_pair(m, start, i64::MIN, cfg);
            t.pair[start] = s.value;
            t.pair_witness = s.witness.expect("unguessed solve always has a witness");
            t.nodes += s.nodes;
        }
        t
    }

    fn solve_pair(&self, m: &WitnessMatrix, start: usize, floor: i64, cfg: &SolverConfig) -> Solved {
        let (n, cols) = m.shape();
        let mut col_sum = vec![0i64; cols];
        // |column sums of rows start..i| for i = start..=n, row-major.
        let mut prefix_abs = vec![0i64; (n - start + 1) * cols];
        for i in start..n {
            for (c, v) in col_sum.iter_mut().zip(m.row(i)) {
                *c += v;
            }
            for (p, c) in prefix_abs[(i + 1 - start) * cols..][..cols]
                .iter_mut()
                .zip(&col_sum)
            {
                *p = c.abs();
            }
        }
        let floor_vec: Vec<i64> = col_sum.iter().map(|c| c.abs()).collect();
        let problem = Problem {
            m,
            start,
            floor: &floor_vec,
            local: &self.local,
            pair: Some((&self.pair, &prefix_abs)),
        };
        problem.solve(&self.pair_witness, floor, cfg)
    }
}

/// Maximise `Σ_y max(floor_y, |Σ_x a_x M_xy|)` over signs of rows `start..n`.
struct Problem<'a> {
    m: &'a WitnessMatrix,
    start: usize,
    floor: &'a [i64],
    local: &'a [i64],
    pair: Option<(&'a [i64], &'a [i64])>,
}

impl Problem<'_> {
    fn objective(&self, delta: &[i64]) -> i64 {
        delta
            .iter()
            .zip(self.floor)
            .map(|(d, f)| d.abs().max(*f))
            .sum()
    }

    /// `tail` holds optimal signs for rows `start+1..n` of the previous
    /// suffix.
    fn solve(&self, tail: &[i8], floor: i64, cfg: &SolverConfig) -> Solved {
        let n = self.m.rows();
        let (seed_value, seed) = self.seed(tail);
        let incumbent = Incumbent::new(seed_value.max(floor));
        let size = n - self.start;
        let depth = cfg.parallel_depth.clamp(1, size.min(24));
        let tasks = 1usize << (depth - 1);
        let prune_from = prune_start(self.start, n, cfg.skip_fraction);
        let outputs = if fits_i32(self.m) {
            let m32: Vec<i32> = narrow(self.m.as_slice());
            let floor32: Vec<i32> = narrow(self.floor);
            let local32: Vec<i32> = narrow(self.local);
            let pair32 = self.pair.map(|(t, p)| (narrow(t), narrow(p)));
            let ctx = Ctx {
                m: &m32,
                cols: self.m.cols(),
                n,
                start: self.start,
                floor: &floor32,
                local: &local32,
                pair: pair32.as_ref().map(|(t, p)| (&t[..], &p[..])),
                prune_from,
                incumbent: &incumbent,
            };
            search(&ctx, tasks, depth, cfg.threads)
        } else {
            let ctx = Ctx {
                m: self.m.as_slice(),
                cols: self.m.cols(),
                n,
                start: self.start,
                floor: self.floor,
                local: self.local,
                pair: self.pair,
                prune_from,
                incumbent: &incumbent,
            };
            search(&ctx, tasks, depth, cfg.threads)
        };
        let nodes = outputs.iter().map(|o| o.1).sum();
        let value = incumbent.into_inner();
        let witness = select_witness(
            outputs.into_iter().filter_map(|o| o.0),
            value,
            (seed_value, seed),
            floor,
        );
        debug!(
            "sign search on rows {}..{n} ({}): {value} ({nodes} nodes)",
            self.start,
            if self.pair.is_some() { "L_2" } else { "L" }
        );
        Solved {
            value,
            witness,
            nodes,
        }
    }

    /// The previous optimum extended by `+1`, improved by single flips.
    fn seed(&self, tail: &[i8]) -> (i64, Vec<i8>) {
        let mut signs = Vec::with_capacity(tail.len() + 1);
        signs.push(1i8);
        signs.extend_from_slice(tail);
        let cols = self.m.cols();
        let mut delta = vec![0i64; cols];
        for (x, &s) in signs.iter().enumerate() {
            for (d, v) in delta.iter_mut().zip(self.m.row(self.start + x)) {
                *d += s as i64 * v;
            }
        }
        let mut value = self.objective(&delta);
        const MAX_PASSES: usize = 50;
        for _ in 0..MAX_PASSES {
            let mut improved = false;
            for (x, s) in signs.iter_mut().enumerate() {
                let row = self.m.row(self.start + x);
                let k = 2 * *s as i64;
                let flipped: i64 = delta
                    .iter()
                    .zip(row)
                    .zip(self.floor)
                    .map(|((d, v), f)| (d - k * v).abs().max(*f))
                    .sum();
                if flipped > value {
                    for (d, v) in delta.iter_mut().zip(row) {
                        *d -= k * v;
                    }
                    *s = -*s;
                    value = flipped;
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }
        if signs[0] < 0 {
            signs.iter_mut().for_each(|s| *s = -*s);
        }
        (value, signs)
    }
}

/// Entries are narrowed to `i32` when no objective value or bound can
/// overflow it; the inner loop then vectorizes much better.
fn fits_i32(m: &WitnessMatrix) -> bool {
    m.manhattan()
        .checked_mul(2)
        .is_some_and(|t| t < i32::MAX as i64)
}

fn narrow(v: &[i64]) -> Vec<i32> {
    v.iter().map(|&x| x as i32).collect()
}

/// Search arithmetic. Wrapping ops: the magnitude bound checked before
/// narrowing rules out overflow, and checked ops would block vectorization
/// in builds with overflow checks on.
trait Word: Copy + Ord + Default + Send + Sync + Into<i64> {
    fn plus(self, o: Self) -> Self;
    fn minus(self, o: Self) -> Self;
    fn abs(self) -> Self;
}

macro_rules! word {
    ($t:ty) => {
        impl Word for $t {
            #[inline]
            fn plus(self, o: Self) -> Self {
                self.wrapping_add(o)
            }
            #[inline]
            fn minus(self, o: Self) -> Self {
                self.wrapping_sub(o)
            }
            #[inline]
            fn abs(self) -> Self {
                self.wrapping_abs()
            }
        }
    };
}
word!(i32);
word!(i64);

fn max_sum<T: Word>(delta: &[T], floor: &[T]) -> T {
    delta
        .iter()
        .zip(floor)
        .fold(T::default(), |acc, (&d, &f)| acc.plus(d.abs().max(f)))
}

type Output = (Option<Record<Vec<i8>>>, u64);

fn search<T: Word>(ctx: &Ctx<'_, T>, tasks: usize, depth: usize, threads: usize) -> Vec<Output> {
    run_workers(tasks, threads, |queue| {
        let mut w = Worker::new(ctx);
        while let Some(t) = queue.next() {
            w.task = t;
            w.run_task(t, depth);
        }
        (w.best, w.nodes)
    })
}

struct Ctx<'a, T> {
    m: &'a [T],
    cols: usize,
    n: usize,
    start: usize,
    floor: &'a [T],
    local: &'a [T],
    /// `L_2` suffix table and absolute prefix column sums.
    pair: Option<(&'a [T], &'a [T])>,
    prune_from: usize,
    incumbent: &'a Incumbent,
}

struct Worker<'a, T> {
    ctx: &'a Ctx<'a, T>,
    delta: Vec<T>,
    signs: Vec<i8>,
    best: Option<Record<Vec<i8>>>,
    task: usize,
    nodes: u64,
}

impl<'a, T: Word> Worker<'a, T> {
    fn new(ctx: &'a Ctx<'a, T>) -> Self {
        Worker {
            ctx,
            delta: vec![T::default(); ctx.cols],
            signs: vec![0; ctx.n - ctx.start],
            best: None,
            task: 0,
            nodes: 0,
        }
    }

    #[inline]
    fn row(&self, i: usize) -> &'a [T] {
        &self.ctx.m[i * self.ctx.cols..(i + 1) * self.ctx.cols]
    }

    /// Task `t` fixes the first `depth` signs: `+1`, then the bits of `t`.
    fn run_task(&mut self, t: usize, depth: usize) {
        let ctx = self.ctx;
        self.delta.iter_mut().for_each(|d| *d = T::default());
        for j in 0..depth {
            let s: i8 = if j > 0 && (t >> (j - 1)) & 1 == 1 { -1 } else { 1 };
            self.signs[j] = s;
            self.apply(ctx.start + j, s);
        }
        let i = ctx.start + depth;
        let value = max_sum(&self.delta, ctx.floor);
        if i == ctx.n {
            self.offer(value.into());
            return;
        }
        if i >= ctx.prune_from {
            let mut bound = value.plus(ctx.local[i]);
            if let Some((table, prefix)) = ctx.pair {
                let p = &prefix[(i - ctx.start) * ctx.cols..][..ctx.cols];
                bound = bound.min(max_sum(&self.delta, p).plus(table[i]));
            }
            if bound.into() <= ctx.incumbent.get() {
                return;
            }
        }
        match ctx.pair {
            Some(_) => self.dfs::<true>(i),
            None => self.dfs::<false>(i),
        }
    }

    #[inline]
    fn apply(&mut self, i: usize, s: i8) {
        let row = self.row(i);
        if s > 0 {
            self.delta.iter_mut().zip(row).for_each(|(d, &v)| *d = d.plus(v));
        } else {
            self.delta.iter_mut().zip(row).for_each(|(d, &v)| *d = d.minus(v));
        }
    }

    fn dfs<const PAIR: bool>(&mut self, i: usize) {
        self.nodes += 1;
        let ctx = self.ctx;
        let cols = ctx.cols;
        let row = self.row(i);
        let last = i + 1 == ctx.n;

        let zero = T::default();
        let (mut vp, mut vm, mut op, mut om) = (zero, zero, zero, zero);
        if PAIR {
            let (_, prefix) = ctx.pair.expect("pair tables present");
            let p = &prefix[(i + 1 - ctx.start) * cols..][..cols];
            for (((&d, &v), &f), &p) in self.delta.iter().zip(row).zip(ctx.floor).zip(p) {
                let (ap, am) = (d.plus(v).abs(), d.minus(v).abs());
                vp = vp.plus(ap.max(f));
                vm = vm.plus(am.max(f));
                op = op.plus(ap.max(p));
                om = om.plus(am.max(p));
            }
        } else {
            for (&d, &v) in self.delta.iter().zip(row) {
                vp = vp.plus(d.plus(v).abs());
                vm = vm.plus(d.minus(v).abs());
            }
        }

        let children = if vp >= vm {
            [(1i8, vp, op), (-1, vm, om)]
        } else {
            [(-1, vm, om), (1, vp, op)]
        };
        let local = i - ctx.start;
        for (s, value, two) in children {
            if last {
                self.signs[local] = s;
                self.offer(value.into());
                continue;
            }
            if i + 1 >= ctx.prune_from {
                let mut bound = value.plus(ctx.local[i + 1]);
                if PAIR {
                    let (table, _) = ctx.pair.expect("pair tables present");
                    bound = bound.min(two.plus(table[i + 1]));
                }
                if bound.into() <= ctx.incumbent.get() {
                    continue;
                }
            }
            self.apply(i, s);
            self.signs[local] = s;
            self.dfs::<PAIR>(i + 1);
            self.apply(i, -s);
        }
    }

    #[inline]
    fn offer(&mut self, value: i64) {
        if self.ctx.incumbent.offer(value) {
            self.best = Some(Record {
                value,
                task: self.task,
                assignment: self.signs.clone(),
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{gen_family, make_doubled};
    use crate::norms::bruteforce::{lk_bruteforce, local_bound_bruteforce};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(threads: usize, depth: usize) -> SolverConfig {
        SolverConfig {
            threads,
            parallel_depth: depth,
            ..SolverConfig::default()
        }
    }

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, m: usize, r: i64) -> WitnessMatrix {
        let data = (0..n * m).map(|_| rng.random_range(-r..=r)).collect();
        WitnessMatrix::new(n, m, data).unwrap()
    }

    #[test]
    fn matches_bruteforce_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..40 {
            let n = 1 + trial % 11;
            let m = 1 + (trial * 7) % 9;
            let mat = random_matrix(&mut rng, n, m, 1 + (trial as i64 % 4));
            let c = cfg(1 + trial % 3, trial % 5);
            let r = l2_branch_bound(&mat, &c);
            assert_eq!(r.value, lk_bruteforce(&mat, 2).unwrap(), "trial {trial}");
            assert_eq!(r.witness.unwrap().evaluate(&mat).unwrap(), r.value);
            let table = l2_suffix_table(&mat, &c);
            for (i, v) in table.iter().enumerate() {
                assert_eq!(*v, lk_bruteforce(&mat.row_suffix(i), 2).unwrap());
            }
            let lw = local_bound_branch_bound(&mat, &c).unwrap();
            assert_eq!(lw.value, local_bound_bruteforce(&mat).unwrap());
            let mut check = 0;
            for x in 0..n {
                for y in 0..m {
                    check += mat.get(x, y) * lw.a[x] as i64 * lw.b[y] as i64;
                }
            }
            assert_eq!(check, lw.value);
        }
    }

    #[test]
    fn family_and_doubled_values() {
        for k in 1..=6 {
            let f = gen_family(k).unwrap();
            let r = l2_branch_bound(&f, &cfg(2, 3));
            assert_eq!(r.value, lk_bruteforce(&f, 2).unwrap());
        }
        let chsh = gen_family(2).unwrap();
        let d = make_doubled(&chsh);
        assert_eq!(l2_branch_bound(&d, &cfg(1, 2)).value, 4);
        assert_eq!(local_bound_branch_bound(&d, &cfg(1, 2)).unwrap().value, 4);
    }

    #[test]
    fn guess_handling() {
        let m = gen_family(5).unwrap();
        let truth = lk_bruteforce(&m, 2).unwrap();
        let over = l2_branch_bound(
            &m,
            &SolverConfig {
                guess: truth + 1,
                ..cfg(1, 2)
            },
        );
        assert!(over.guess_dominated && over.witness.is_none());
        assert_eq!(over.value, truth + 1);
        let exact = l2_branch_bound(
            &m,
            &SolverConfig {
                guess: truth,
                ..cfg(1, 2)
            },
        );
        assert!(!exact.guess_dominated);
        assert_eq!(exact.witness.unwrap().evaluate(&m).unwrap(), truth);
    }
}
