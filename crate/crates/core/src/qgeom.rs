//! Bloch-vector configurations and lower bounds on the qubit value
//! `q(M) = max Σ_xy M_xy a_x·b_y` over unit vectors in R³.

use std::fs;
use std::path::Path;

use log::warn;
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::{RealMatrix, WitnessMatrix};

pub type Vec3 = Vector3<f64>;

/// Allowed deviation from unit length in a [`BlochConfig`].
pub const UNIT_TOLERANCE: f64 = 1e-9;
/// Vectors read from files may be off unit length by this much; they are
/// renormalized.
pub const LOAD_TOLERANCE: f64 = 1e-6;

pub const DEFAULT_MAX_ITER: usize = 10_000;
pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct BlochConfig {
    a: Vec<Vec3>,
    b: Vec<Vec3>,
}

impl BlochConfig {
    pub fn new(a: Vec<Vec3>, b: Vec<Vec3>) -> Result<Self> {
        if a.is_empty() || b.is_empty() {
            return Err(Error::Dimension("configuration needs at least one vector on each side".into()));
        }
        for (index, v) in a.iter().chain(&b).enumerate() {
            let norm = v.norm();
            if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOLERANCE {
                return Err(Error::Normalization { index, norm });
            }
        }
        Ok(BlochConfig { a, b })
    }

    /// The same vectors for preparations and measurements.
    pub fn symmetric(v: Vec<Vec3>) -> Result<Self> {
        BlochConfig::new(v.clone(), v)
    }

    /// Independent Gaussian-direction vectors.
    pub fn random(n: usize, m: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = (0..n).map(|_| random_unit(&mut rng)).collect();
        let b = (0..m).map(|_| random_unit(&mut rng)).collect();
        BlochConfig { a, b }
    }

    /// `±ẑ` vectors from sign vectors, so `Σ M a·b` equals `Σ M a_x b_y`.
    pub fn from_signs(a: &[i8], b: &[i8]) -> Result<Self> {
        let z = |s: &i8| Vec3::new(0.0, 0.0, if *s < 0 { -1.0 } else { 1.0 });
        BlochConfig::new(a.iter().map(z).collect(), b.iter().map(z).collect())
    }

    pub fn a(&self) -> &[Vec3] {
        &self.a
    }

    pub fn b(&self) -> &[Vec3] {
        &self.b
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.a.len(), self.b.len())
    }
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
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

/// `E_xy = a_x · b_y`.
pub fn correlation_matrix(cfg: &BlochConfig) -> RealMatrix {
    RealMatrix::from_fn(cfg.a.len(), cfg.b.len(), |x, y| {
        cfg.a[x].dot(&cfg.b[y]).clamp(-1.0, 1.0)
    })
}

/// `η E + (1 − η)` entry-wise. Values of `η` below one half are allowed but
/// logged.
pub fn noisy_family(e: &RealMatrix, eta: f64) -> Result<RealMatrix> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidArgument(format!("eta {eta} not in [0, 1]")));
    }
    if eta < 0.5 {
        warn!("eta = {eta} is below 1/2, where the one-bit Gisin-Gisin model already applies");
    }
    Ok(RealMatrix::from_fn(e.rows(), e.cols(), |x, y| {
        eta * e.get(x, y) + (1.0 - eta)
    }))
}

/// `Σ_xy M_xy a_x·b_y`.
pub fn q_value(m: &WitnessMatrix, cfg: &BlochConfig) -> Result<f64> {
    check_shape(m, cfg)?;
    Ok(m.row_iter()
        .zip(&cfg.a)
        .map(|(row, a)| {
            row.iter()
                .zip(&cfg.b)
                .map(|(&v, b)| v as f64 * a.dot(b))
                .sum::<f64>()
        })
        .sum())
}

fn check_shape(m: &WitnessMatrix, cfg: &BlochConfig) -> Result<()> {
    if m.shape() != cfg.shape() {
        return Err(Error::Dimension(format!(
            "configuration is {}x{}, matrix is {}x{}",
            cfg.a.len(),
            cfg.b.len(),
            m.rows(),
            m.cols()
        )));
    }
    Ok(())
}

/// Starting point of the alternation.
#[derive(Debug, Clone)]
pub enum QInit {
    Config(BlochConfig),
    Seed(u64),
}

#[derive(Debug, Clone)]
pub struct QBound {
    pub value: f64,
    pub config: BlochConfig,
    /// Objective at the start and after every iteration.
    pub trace: Vec<f64>,
}

/// Alternating maximization: every `b_y` becomes the normalized
/// `Σ_x M_xy a_x`, then every `a_x` the normalized `Σ_y M_xy b_y`. A zero
/// resultant leaves the vector unchanged. Stops once an iteration gains less
/// than `tol`.
pub fn q_lowerbound_alternate(
    m: &WitnessMatrix,
    init: QInit,
    max_iter: usize,
    tol: f64,
) -> Result<QBound> {
    if max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    let cfg = match init {
        QInit::Config(c) => c,
        QInit::Seed(s) => BlochConfig::random(m.rows(), m.cols(), s),
    };
    check_shape(m, &cfg)?;
    let real = m.to_real();
    let BlochConfig { mut a, mut b } = cfg;
    let mut value = q_value(m, &BlochConfig { a: a.clone(), b: b.clone() })?;
    let mut trace = vec![value];
    for _ in 0..max_iter {
        update_side(&real, &a, &mut b, true);
        update_side(&real, &b, &mut a, false);
        let next = objective(&real, &a, &b);
        trace.push(next);
        let gain = next - value;
        value = next;
        if gain < tol {
            break;
        }
    }
    Ok(QBound {
        value,
        config: BlochConfig { a, b },
        trace,
    })
}

/// Best of `restarts` random starts plus optional extra starting points.
pub fn q_lowerbound_restarts(
    m: &WitnessMatrix,
    starts: Vec<BlochConfig>,
    restarts: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<QBound> {
    let inits: Vec<QInit> = starts
        .into_iter()
        .map(QInit::Config)
        .chain((0..restarts).map(|r| QInit::Seed(seed.wrapping_add(r as u64))))
        .collect();
    if inits.is_empty() {
        return Err(Error::InvalidArgument("no starting configuration".into()));
    }
    let results: Vec<QBound> = inits
        .into_par_iter()
        .map(|init| q_lowerbound_alternate(m, init, max_iter, tol))
        .collect::<Result<_>>()?;
    Ok(results
        .into_iter()
        .reduce(|best, r| if r.value > best.value { r } else { best })
        .expect("non-empty"))
}

fn objective(m: &RealMatrix, a: &[Vec3], b: &[Vec3]) -> f64 {
    m.row_iter()
        .zip(a)
        .map(|(row, ax)| {
            let s: Vec3 = row.iter().zip(b).map(|(&v, by)| by * v).sum();
            ax.dot(&s)
        })
        .sum()
}

/// Replaces every vector of `target` by the normalized weighted sum of
/// `source`; `columns` selects whether `target` indexes columns of `m`.
fn update_side(m: &RealMatrix, source: &[Vec3], target: &mut [Vec3], columns: bool) {
    let mut sums = vec![Vec3::zeros(); target.len()];
    for (x, row) in m.row_iter().enumerate() {
        for (y, &v) in row.iter().enumerate() {
            if columns {
                sums[y] += source[x] * v;
            } else {
                sums[x] += source[y] * v;
            }
        }
    }
    for (t, s) in target.iter_mut().zip(sums) {
        let n = s.norm();
        if n > 0.0 {
            *t = s / n;
        }
    }
}

/// Smallest angle in radians between the lines `±v_i`.
pub fn min_line_angle(v: &[Vec3]) -> f64 {
    let mut max_cos: f64 = 0.0;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            max_cos = max_cos.max(v[i].dot(&v[j]).abs());
        }
    }
    max_cos.min(1.0).acos()
}

/// `n` unit vectors spreading the lines `±v_i` apart.
///
/// Projected gradient descent on `Σ_{i<j} (1 − (v_i·v_j)²)^(-p)`, starting
/// at `p = 1` and doubling `p` over six phases so the final phases act on
/// the closest pairs. Deterministic in `seed`.
pub fn gen_packing(n: usize, seed: u64, iters: usize) -> Vec<Vec3> {
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![Vec3::new(0.0, 0.0, 1.0)];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<Vec3> = (0..n).map(|_| random_unit(&mut rng)).collect();
    const PHASES: usize = 6;
    let per_phase = (iters / PHASES).max(1);
    let mut grad = vec![Vec3::zeros(); n];
    for phase in 0..PHASES {
        let p = (1u32 << phase) as f64;
        for step in 0..per_phase {
            // Step length decays geometrically from 0.1 to 1e-9 per phase.
            let lr = 0.1 * (1e-8f64).powf(step as f64 / per_phase as f64);
            let mut s_min = f64::INFINITY;
            for i in 0..n {
                for j in i + 1..n {
                    let c = v[i].dot(&v[j]);
                    s_min = s_min.min((1.0 - c * c).max(1e-300));
                }
            }
            grad.iter_mut().for_each(|g| *g = Vec3::zeros());
            for i in 0..n {
                for j in i + 1..n {
                    let c = v[i].dot(&v[j]);
                    let s = (1.0 - c * c).max(1e-300);
                    // Gradient of (s_min / s)^p, rescaled by 1 / s_min^p.
                    let w = p * (s_min / s).powf(p) / s * 2.0 * c;
                    grad[i] += v[j] * w;
                    grad[j] += v[i] * w;
                }
            }
            let mut g_max: f64 = 0.0;
            for (g, vi) in grad.iter_mut().zip(&v) {
                *g -= vi * vi.dot(g);
                g_max = g_max.max(g.norm());
            }
            if g_max == 0.0 {
                break;
            }
            for (vi, g) in v.iter_mut().zip(&grad) {
                *vi = (*vi - g * (lr / g_max)).normalize();
            }
        }
    }
    v
}

/// Reads unit vectors. Either a count line followed by that many `x y z`
/// lines, or just a whitespace-separated list of coordinates.
pub fn load_vectors(path: impl AsRef<Path>) -> Result<Vec<Vec3>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_vectors(&text)
}

pub fn parse_vectors(text: &str) -> Result<Vec<Vec3>> {
    let mut numbers = Vec::new();
    let mut first_line_len = None;
    for (line_no, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|f| !f.is_empty())
            .collect();
        if fields.is_empty() {
            continue;
        }
        first_line_len.get_or_insert(fields.len());
        for f in fields {
            let v: f64 = f
                .parse()
                .map_err(|_| Error::parse(line_no + 1, format!("not a number: {f:?}")))?;
            if !v.is_finite() {
                return Err(Error::parse(line_no + 1, format!("non-finite value {f}")));
            }
            numbers.push((line_no + 1, v));
        }
    }
    let coords: &[(usize, f64)] = if first_line_len == Some(1) {
        let (line, count) = numbers[0];
        if count < 0.0 || count.fract() != 0.0 {
            return Err(Error::parse(line, format!("bad vector count {count}")));
        }
        let rest = &numbers[1..];
        if rest.len() != 3 * count as usize {
            return Err(Error::parse(
                line,
                format!("header says {count} vectors, found {} numbers", rest.len()),
            ));
        }
        rest
    } else {
        &numbers
    };
    if coords.is_empty() || !coords.len().is_multiple_of(3) {
        return Err(Error::parse(
            coords.last().map_or(1, |c| c.0),
            format!("{} coordinates is not a positive multiple of 3", coords.len()),
        ));
    }
    coords
        .chunks_exact(3)
        .enumerate()
        .map(|(index, c)| {
            let v = Vec3::new(c[0].1, c[1].1, c[2].1);
            let norm = v.norm();
            if (norm - 1.0).abs() > LOAD_TOLERANCE {
                return Err(Error::Normalization { index, norm });
            }
            if (norm - 1.0).abs() > UNIT_TOLERANCE {
                warn!("vector {index} has norm {norm}; renormalized");
            }
            Ok(v / norm)
        })
        .collect()
}

/// Count line plus one `x y z` line per vector, round-trip precision.
pub fn vectors_to_text(v: &[Vec3]) -> String {
    let mut out = format!("{}\n", v.len());
    for x in v {
        out.push_str(&format!("{:?} {:?} {:?}\n", x[0], x[1], x[2]));
    }
    out
}
