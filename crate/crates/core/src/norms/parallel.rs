use std::sync::atomic::{AtomicI64, AtomicUsize, Ordering};
use std::thread;

/// Subtree indices handed out to workers in order.
pub(super) struct TaskQueue {
    next: AtomicUsize,
    len: usize,
}

impl TaskQueue {
    pub(super) fn next(&self) -> Option<usize> {
        let t = self.next.fetch_add(1, Ordering::Relaxed);
        (t < self.len).then_some(t)
    }
}

/// Runs `work` on `min(threads, tasks)` workers sharing one queue of
/// `tasks` subtrees, and collects each worker's output.
pub(super) fn run_workers<R, F>(tasks: usize, threads: usize, work: F) -> Vec<R>
where
    R: Send,
    F: Fn(&TaskQueue) -> R + Sync,
{
    let queue = TaskQueue {
        next: AtomicUsize::new(0),
        len: tasks,
    };
    let workers = threads.min(tasks).max(1);
    if workers == 1 {
        return vec![work(&queue)];
    }
    thread::scope(|s| {
        let handles: Vec<_> = (0..workers).map(|_| s.spawn(|| work(&queue))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("solver worker panicked"))
            .collect()
    })
}

/// Best objective value found so far, shared by all workers. Only ever
/// increases.
pub(super) struct Incumbent(AtomicI64);

impl Incumbent {
    pub(super) fn new(value: i64) -> Self {
        Incumbent(AtomicI64::new(value))
    }

    #[inline]
    pub(super) fn get(&self) -> i64 {
        self.0.load(Ordering::Relaxed)
    }

    /// Raises the incumbent to `value`; true iff this call made it strictly
    /// larger.
    #[inline]
    pub(super) fn offer(&self, value: i64) -> bool {
        value > self.get() && self.0.fetch_max(value, Ordering::SeqCst) < value
    }

    pub(super) fn into_inner(self) -> i64 {
        self.0.into_inner()
    }
}

/// A complete assignment that raised the incumbent, tagged with the subtree
/// it came from.
pub(super) struct Record<T> {
    pub value: i64,
    pub task: usize,
    pub assignment: T,
}

/// Index of the first row at which the prune test runs for the subproblem
/// on rows `start..n`: the remaining suffix must hold fewer than
/// `skip_fraction` of its rows. `n + 1` disables pruning entirely.
pub(super) fn prune_start(start: usize, n: usize, skip_fraction: f64) -> usize {
    let cutoff = skip_fraction * (n - start) as f64;
    (start..=n)
        .find(|&i| ((n - i) as f64) < cutoff)
        .unwrap_or(n + 1)
}

/// Picks the witness for the final incumbent value: the record from the
/// earliest subtree, else the seed if it attains the value and beat the
/// floor.
pub(super) fn select_witness<T>(
    records: impl IntoIterator<Item = Record<T>>,
    value: i64,
    seed: (i64, T),
    floor: i64,
) -> Option<T> {
    records
        .into_iter()
        .filter(|r| r.value == value)
        .min_by_key(|r| r.task)
        .map(|r| r.assignment)
        .or_else(|| (seed.0 == value && seed.0 > floor).then_some(seed.1))
}
