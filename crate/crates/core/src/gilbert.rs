//! Distance from a target correlation matrix to the one-bit polytope.
//!
//! Gilbert's method: the iterate `E⁽ⁱ⁾` is a convex combination of
//! deterministic one-bit correlations. Each step asks the see-saw oracle for
//! the vertex with the largest overlap with the residual `E − E⁽ⁱ⁾`, then
//! projects the target onto the hull of the iterate and a buffer of recent
//! vertices. When the target is outside the polytope the final residual is a
//! candidate witness.

use std::collections::{HashMap, VecDeque};

use log::{debug, info};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::heuristics::{seesaw_from, seesaw_l2, strategy_correlation, OneBitStrategy};
use crate::matrix::RealMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct GilbertConfig {
    /// Stop once the distance is at most this.
    pub epsilon: f64,
    pub i_max: usize,
    pub buffer_size: usize,
    /// Random see-saw restarts per oracle call.
    pub oracle_restarts: usize,
    pub seed: u64,
    /// Stop when the distance shrank by a relative amount below
    /// `stall_tolerance` over the last `stall_window` iterations. 0 disables.
    pub stall_window: usize,
    pub stall_tolerance: f64,
}

impl Default for GilbertConfig {
    fn default() -> Self {
        GilbertConfig {
            epsilon: 1e-6,
            i_max: 200_000,
            buffer_size: 40,
            oracle_restarts: 20,
            seed: 0,
            stall_window: 0,
            stall_tolerance: 1e-9,
        }
    }
}

impl GilbertConfig {
    fn validate(&self) -> Result<()> {
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.oracle_restarts == 0 {
            return Err(Error::InvalidArgument("oracle_restarts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Why [`run_gilbert`] returned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Distance reached epsilon: the target is (numerically) inside.
    Converged,
    /// The oracle found no vertex improving on the iterate.
    NoImprovingVertex,
    IterationLimit,
    Stalled,
}

#[derive(Debug, Clone)]
pub struct GilbertState {
    pub iterate: RealMatrix,
    /// Most recent oracle vertices, oldest first.
    pub buffer: VecDeque<(OneBitStrategy, RealMatrix)>,
    pub dist_history: Vec<f64>,
    pub i: usize,
    vertices: Vec<OneBitStrategy>,
    weights: Vec<f64>,
    index: HashMap<OneBitStrategy, usize>,
}

impl GilbertState {
    /// Starts at the zero matrix, the midpoint of the all-`+1` and all-`-1`
    /// correlations.
    pub fn new(target: &RealMatrix) -> Self {
        let (n, m) = target.shape();
        let plus = OneBitStrategy {
            a: vec![1; n],
            b_plus: vec![1; m],
            b_minus: vec![1; m],
        };
        let minus = OneBitStrategy {
            a: vec![1; n],
            b_plus: vec![-1; m],
            b_minus: vec![-1; m],
        };
        let index = HashMap::from([(plus.clone(), 0), (minus.clone(), 1)]);
        let iterate = RealMatrix::zeros(n, m);
        GilbertState {
            dist_history: vec![target.sub(&iterate).frobenius()],
            iterate,
            buffer: VecDeque::new(),
            i: 0,
            vertices: vec![plus, minus],
            weights: vec![0.5, 0.5],
            index,
        }
    }

    /// Vertices with positive weight in the current iterate.
    pub fn decomposition(&self) -> Vec<(&OneBitStrategy, f64)> {
        self.vertices
            .iter()
            .zip(&self.weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(v, &w)| (v, w))
            .collect()
    }

    /// The iterate rebuilt from its vertex weights.
    pub fn reconstruct(&self) -> RealMatrix {
        let (n, m) = self.iterate.shape();
        let mut out = vec![0.0; n * m];
        for (s, w) in self.decomposition() {
            for (x, row) in out.chunks_exact_mut(m).enumerate() {
                let b = if s.a[x] > 0 { &s.b_plus } else { &s.b_minus };
                for (o, &by) in row.iter_mut().zip(b) {
                    *o += w * by as f64;
                }
            }
        }
        RealMatrix::new(n, m, out).expect("finite weights")
    }

    pub fn dist(&self) -> f64 {
        *self.dist_history.last().expect("history starts with dist(0)")
    }

    /// Adds `vertex` to the buffer and moves the iterate to the point of
    /// the hull of the iterate and the buffer closest to `target`. The
    /// distance never increases.
    pub fn project(&mut self, target: &RealMatrix, vertex: OneBitStrategy, buffer_size: usize) {
        if !self.buffer.iter().any(|(s, _)| *s == vertex) {
            let point = strategy_correlation(&vertex);
            self.buffer.push_back((vertex, point));
            while self.buffer.len() > buffer_size.max(1) {
                self.buffer.pop_front();
            }
        }
        let mut points: Vec<&RealMatrix> = vec![&self.iterate];
        points.extend(self.buffer.iter().map(|(_, p)| p));
        let lambda = min_norm_weights(&points, target);

        let (n, m) = target.shape();
        let mut next = vec![0.0; n * m];
        for (p, &l) in points.iter().zip(&lambda) {
            if l > 0.0 {
                for (o, v) in next.iter_mut().zip(p.as_slice()) {
                    *o += l * v;
                }
            }
        }
        let next = RealMatrix::new(n, m, next).expect("finite combination");
        let d = target.sub(&next).frobenius();
        self.i += 1;
        if d < self.dist() {
            self.weights.iter_mut().for_each(|w| *w *= lambda[0]);
            for ((s, _), &l) in self.buffer.iter().zip(&lambda[1..]) {
                if l > 0.0 {
                    let k = *self.index.entry(s.clone()).or_insert_with(|| {
                        self.vertices.push(s.clone());
                        self.weights.push(0.0);
                        self.vertices.len() - 1
                    });
                    self.weights[k] += l;
                }
            }
            self.iterate = next;
            self.dist_history.push(d);
        } else {
            let d = self.dist();
            self.dist_history.push(d);
        }
    }
}

/// Weights `λ ≥ 0`, `Σλ = 1` minimizing `‖Σ_j λ_j p_j − target‖` in the
/// Frobenius norm, by Wolfe's minimum-norm-point method on the Gram matrix
/// of `p_j − target`.
pub fn min_norm_weights(points: &[&RealMatrix], target: &RealMatrix) -> Vec<f64> {
    let k = points.len();
    assert!(k > 0, "need at least one point");
    let shifted: Vec<RealMatrix> = points.iter().map(|p| p.sub(target)).collect();
    let gram = DMatrix::from_fn(k, k, |i, j| shifted[i].dot(&shifted[j]));
    wolfe(&gram)
}

fn wolfe(g: &DMatrix<f64>) -> Vec<f64> {
    let k = g.nrows();
    let scale = (0..k).map(|i| g[(i, i)]).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale;
    let first = (0..k)
        .min_by(|&i, &j| g[(i, i)].total_cmp(&g[(j, j)]))
        .expect("k > 0");
    let mut active = vec![first];
    let mut lambda = vec![0.0; k];
    lambda[first] = 1.0;

    const MAX_MAJOR: usize = 1000;
    for _ in 0..MAX_MAJOR {
        // <x, q_j> for every point and |x|².
        let gx: Vec<f64> = (0..k)
            .map(|j| active.iter().map(|&i| lambda[i] * g[(i, j)]).sum())
            .collect();
        let xx: f64 = active.iter().map(|&i| lambda[i] * gx[i]).sum();
        let j = (0..k)
            .min_by(|&a, &b| gx[a].total_cmp(&gx[b]))
            .expect("k > 0");
        if gx[j] >= xx - tol || active.contains(&j) {
            break;
        }
        active.push(j);
        loop {
            let Some(mu) = affine_minimizer(g, &active) else {
                return lambda;
            };
            if mu.iter().all(|&v| v > 0.0) {
                for (&i, &v) in active.iter().zip(&mu) {
                    lambda[i] = v;
                }
                break;
            }
            // Step toward mu until the first weight hits zero.
            let mut theta: f64 = 1.0;
            for (&i, &v) in active.iter().zip(&mu) {
                if v <= 0.0 {
                    let l = lambda[i];
                    theta = theta.min(if l - v > 0.0 { l / (l - v) } else { 0.0 });
                }
            }
            for (&i, &v) in active.iter().zip(&mu) {
                lambda[i] += theta * (v - lambda[i]);
            }
            active.retain(|&i| {
                if lambda[i] <= 1e-15 {
                    lambda[i] = 0.0;
                    false
                } else {
                    true
                }
            });
            let total: f64 = active.iter().map(|&i| lambda[i]).sum();
            active.iter().for_each(|&i| lambda[i] /= total);
        }
    }
    lambda
}

/// Minimizer of `μᵀ G μ` over `Σ μ = 1` on the active points.
fn affine_minimizer(g: &DMatrix<f64>, active: &[usize]) -> Option<Vec<f64>> {
    let s = active.len();
    let mut a = DMatrix::zeros(s + 1, s + 1);
    for (r, &i) in active.iter().enumerate() {
        for (c, &j) in active.iter().enumerate() {
            a[(r, c)] = g[(i, j)];
        }
        a[(r, s)] = 1.0;
        a[(s, r)] = 1.0;
    }
    let mut rhs = DVector::zeros(s + 1);
    rhs[s] = 1.0;
    let sol = a.lu().solve(&rhs)?;
    let mu: Vec<f64> = sol.iter().take(s).copied().collect();
    mu.iter().all(|v| v.is_finite()).then_some(mu)
}

/// The strategy the see-saw finds with the largest overlap
/// `Σ residual·E_det`, and that overlap. `warm` adds a start from known
/// bits.
pub fn gilbert_oracle(
    residual: &RealMatrix,
    restarts: usize,
    seed: u64,
    warm: Option<&[i8]>,
) -> Result<(OneBitStrategy, f64)> {
    let report = seesaw_l2(residual, restarts, seed)?;
    let mut best = (report.strategy, report.value);
    if let Some(a) = warm {
        let (trace, s) = seesaw_from(residual, a.to_vec())?;
        let v = *trace.last().expect("non-empty trace");
        if v > best.1 {
            best = (s, v);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone)]
pub struct GilbertOutcome {
    /// `E(η) − E⁽ⁱ⁾`.
    pub residual: RealMatrix,
    pub final_dist: f64,
    pub stop: StopReason,
    pub state: GilbertState,
}

pub fn run_gilbert(target: &RealMatrix, cfg: &GilbertConfig) -> Result<GilbertOutcome> {
    run_gilbert_from(target, cfg, GilbertState::new(target))
}

/// Continues a run from an existing state.
pub fn run_gilbert_from(
    target: &RealMatrix,
    cfg: &GilbertConfig,
    mut state: GilbertState,
) -> Result<GilbertOutcome> {
    cfg.validate()?;
    if state.iterate.shape() != target.shape() {
        return Err(Error::Dimension("state and target differ in shape".into()));
    }
    let mut warm: Option<Vec<i8>> = None;
    let stop = loop {
        if state.dist() <= cfg.epsilon {
            break StopReason::Converged;
        }
        if state.i >= cfg.i_max {
            break StopReason::IterationLimit;
        }
        if cfg.stall_window > 0 && state.dist_history.len() > cfg.stall_window {
            let h = &state.dist_history;
            let old = h[h.len() - 1 - cfg.stall_window];
            if old - state.dist() <= cfg.stall_tolerance * old {
                break StopReason::Stalled;
            }
        }
        let residual = target.sub(&state.iterate);
        let seed = cfg
            .seed
            .wrapping_add((state.i as u64).wrapping_mul(cfg.oracle_restarts as u64));
        let (vertex, overlap) =
            gilbert_oracle(&residual, cfg.oracle_restarts, seed, warm.as_deref())?;
        let current = residual.dot(&state.iterate);
        if overlap <= current + 1e-12 * current.abs().max(1.0) {
            break StopReason::NoImprovingVertex;
        }
        warm = Some(vertex.a.clone());
        state.project(target, vertex, cfg.buffer_size);
        if state.i.is_multiple_of(1000) {
            info!("gilbert iteration {}: dist {:.9e}", state.i, state.dist());
        }
    };
    debug!("gilbert stopped after {} iterations: {stop:?}", state.i);
    Ok(GilbertOutcome {
        residual: target.sub(&state.iterate),
        final_dist: state.dist(),
        stop,
        state,
    })
}

/// `dist(i)` history as CSV with a header line.
pub fn history_csv(history: &[f64]) -> String {
    let mut out = String::from("iteration,dist\n");
    for (i, d) in history.iter().enumerate() {
        out.push_str(&format!("{i},{d:e}\n"));
    }
    out
}
