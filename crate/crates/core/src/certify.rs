//! Certificates: exact `L_2`, an achievable qubit value with a rigorous
//! floating-point error bound, and the thresholds derived from them.
//!
//! With `Q` the qubit value of a configuration and `S` the entry sum,
//!
//! ```text
//! K_PM ≥ Q / L_2        K_D ≥ (Q − S) / (L_2 − S)
//! p    = L_2 / Q        η   = (L_2 − S) / (Q − S)
//! ```
//!
//! A claim is only made when `Q − err > L_2`, where `err` bounds every
//! rounding error in the evaluation of `Q`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::matrix::{sum_s, RealMatrix, WitnessMatrix};
use crate::norms::{lk_branch_bound, local_bound_branch_bound, SolverConfig};
use crate::qgeom::{
    correlation_matrix, noisy_family, q_lowerbound_alternate, q_lowerbound_restarts, BlochConfig, QInit,
    DEFAULT_MAX_ITER, DEFAULT_TOL,
};

/// Literature values, for comparison in reports only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceBounds {
    pub kg3_lower: f64,
    pub kg3_upper: f64,
    pub kd_lower: f64,
    pub kd_upper: f64,
    pub eta_crit_upper: f64,
}

pub const REFERENCE: ReferenceBounds = ReferenceBounds {
    kg3_lower: 1.4367,
    kg3_upper: 1.4546,
    kd_lower: 1.5682,
    kd_upper: 2.0,
    eta_crit_upper: 0.6377,
};

/// Random restarts added to the sign-vector start when no configuration is
/// supplied.
pub const DEFAULT_Q_RESTARTS: usize = 10;

const UNIT_ROUNDOFF: f64 = f64::EPSILON / 2.0;
/// Slack per reduction level in the error bound.
const LEVEL_SLACK: f64 = 1.0 / (1u64 << 48) as f64;

/// Neumaier's compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `Σ M_xy â_x·b̂_y` for the normalized configuration vectors, with a bound
/// on its absolute error.
///
/// The bound covers the dot products, the products with `M`, the deviation
/// of the stored vectors from unit length, and the summation, plus
/// `n·m·max|M|·2⁻⁴⁸` for every one of the two reduction levels.
pub fn certified_q_value(m: &WitnessMatrix, cfg: &BlochConfig) -> Result<(f64, f64)> {
    if m.shape() != cfg.shape() {
        return Err(Error::Dimension(format!(
            "configuration is {:?}, matrix is {:?}",
            cfg.shape(),
            m.shape()
        )));
    }
    if m.max_abs() >= 1 << 53 {
        return Err(Error::Overflow("entries too large for exact conversion to f64".into()));
    }
    let deviation = |v: &[crate::qgeom::Vec3]| {
        v.iter()
            .map(|x| (x.norm_squared() - 1.0).abs())
            .fold(0.0f64, f64::max)
            + 4.0 * UNIT_ROUNDOFF
    };
    let (da, db) = (deviation(cfg.a()), deviation(cfg.b()));
    // |1/(|a||b|) − 1| over the admissible norms.
    let rel_norm = 1.0 / ((1.0 - da) * (1.0 - db)).sqrt() - 1.0;
    let dot_bound = ((1.0 + da) * (1.0 + db)).sqrt();

    let mut total = CompensatedSum::default();
    let mut abs_total = 0.0f64;
    for (row, a) in m.row_iter().zip(cfg.a()) {
        for (&v, b) in row.iter().zip(cfg.b()) {
            let term = v as f64 * a.dot(b);
            total.add(term);
            abs_total += v.unsigned_abs() as f64;
        }
    }
    let q = total.value();
    let per_term = dot_bound * (rel_norm + 6.0 * UNIT_ROUNDOFF);
    let (n, cols) = m.shape();
    let err = abs_total * per_term * (1.0 + 1e-6)
        + 4.0 * UNIT_ROUNDOFF * q.abs()
        + 2.0 * (n * cols) as f64 * m.max_abs() as f64 * LEVEL_SLACK;
    Ok((q, err))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub m: WitnessMatrix,
    pub l2_exact: i64,
    pub s: i64,
    pub q_lb: f64,
    /// Bound on the absolute rounding error of `q_lb`.
    pub q_err: f64,
    pub ratio_kpm: f64,
    /// Absent when `L_2 = S`.
    pub ratio_kd: Option<f64>,
    pub eta_certified: Option<f64>,
    pub p_certified: f64,
    /// `q_lb − q_err > L_2`.
    pub margin_ok: bool,
    pub config: BlochConfig,
}

impl Certificate {
    /// Largest integer known to be at most the true qubit value.
    pub fn q_floor(&self) -> i64 {
        (self.q_lb - self.q_err).floor() as i64
    }

    /// `(⌊Q − err⌋ − S, L_2 − S)`: a rational lower bound on `K_D`.
    pub fn kd_lower_rational(&self) -> Option<(i64, i64)> {
        (self.l2_exact != self.s).then(|| (self.q_floor() - self.s, self.l2_exact - self.s))
    }

    /// `(⌊Q − err⌋, L_2)`: a rational lower bound on `K_PM`.
    pub fn kpm_lower_rational(&self) -> (i64, i64) {
        (self.q_floor(), self.l2_exact)
    }

    /// Machine-readable `key = value` lines. Integers in decimal, reals with
    /// 12 significant digits, ratios also as `p/q`.
    pub fn to_key_value(&self) -> String {
        let real = |x: f64| format!("{x:.11e}");
        let opt = |x: Option<f64>| x.map_or("undefined".to_string(), real);
        let mut out = String::new();
        let (n, m) = self.m.shape();
        let _ = writeln!(out, "n = {n}");
        let _ = writeln!(out, "m = {m}");
        let _ = writeln!(out, "l2_exact = {}", self.l2_exact);
        let _ = writeln!(out, "s = {}", self.s);
        let _ = writeln!(out, "q_lb = {}", real(self.q_lb));
        let _ = writeln!(out, "q_err = {}", real(self.q_err));
        let _ = writeln!(out, "ratio_kpm = {}", real(self.ratio_kpm));
        let _ = writeln!(out, "ratio_kd = {}", opt(self.ratio_kd));
        let _ = writeln!(out, "eta_certified = {}", opt(self.eta_certified));
        let _ = writeln!(out, "p_certified = {}", real(self.p_certified));
        let _ = writeln!(out, "margin_ok = {}", self.margin_ok);
        let (a, b) = self.kpm_lower_rational();
        let _ = writeln!(out, "kpm_lower_rational = {a}/{b}");
        match self.kd_lower_rational() {
            Some((a, b)) => {
                let _ = writeln!(out, "kd_lower_rational = {a}/{b}");
                let _ = writeln!(out, "eta_upper_rational = {b}/{a}");
            }
            None => {
                let _ = writeln!(out, "kd_lower_rational = undefined");
                let _ = writeln!(out, "eta_upper_rational = undefined");
            }
        }
        out
    }

    pub fn to_report(&self) -> String {
        let mut out = String::new();
        let (n, m) = self.m.shape();
        let _ = writeln!(out, "witness {n}x{m}");
        let _ = writeln!(out, "  L2 (exact)     {}", self.l2_exact);
        let _ = writeln!(out, "  S              {}", self.s);
        let _ = writeln!(out, "  q lower bound  {:.6} (error <= {:.3e})", self.q_lb, self.q_err);
        let _ = writeln!(
            out,
            "  q/L2           {:.8}  (K_G(3) in [{}, {}])",
            self.ratio_kpm, REFERENCE.kg3_lower, REFERENCE.kg3_upper
        );
        match (self.ratio_kd, self.eta_certified) {
            (Some(kd), Some(eta)) => {
                let _ = writeln!(
                    out,
                    "  (q-S)/(L2-S)   {kd:.8}  (K_D in [{}, {}])",
                    REFERENCE.kd_lower, REFERENCE.kd_upper
                );
                let _ = writeln!(
                    out,
                    "  eta            {eta:.8}  (best known {})",
                    REFERENCE.eta_crit_upper
                );
            }
            _ => {
                let _ = writeln!(out, "  (q-S)/(L2-S)   undefined (L2 = S)");
            }
        }
        let _ = writeln!(out, "  p = L2/q       {:.8}", self.p_certified);
        if let Some((a, b)) = self.kd_lower_rational() {
            let _ = writeln!(out, "  K_D >= {a}/{b}");
        }
        let _ = writeln!(
            out,
            "  margin         {}",
            if self.margin_ok { "ok (q - err > L2)" } else { "NOT certified" }
        );
        out
    }
}

/// Builds a certificate for `m`.
///
/// `L_2` comes from the exact solver. The qubit value is the best of the
/// supplied configuration as given, the alternation started from it, or,
/// without a configuration, the alternation started from an optimal local
/// strategy embedded as `±ẑ` and [`DEFAULT_Q_RESTARTS`] random starts.
pub fn certify_witness(
    m: &WitnessMatrix,
    vectors: Option<&BlochConfig>,
    solver_cfg: &SolverConfig,
    seed: u64,
) -> Result<Certificate> {
    let solved = lk_branch_bound(m, 2, solver_cfg)?;
    if solved.guess_dominated {
        return Err(Error::GuessDominated {
            guess: solver_cfg.guess,
        });
    }
    let config = best_configuration(m, vectors, solver_cfg, seed)?;
    certificate_from_parts(m, solved.value, config)
}

/// Certificate from a known exact `L_2` and a fixed configuration.
pub fn certificate_from_parts(m: &WitnessMatrix, l2: i64, config: BlochConfig) -> Result<Certificate> {
    let s = sum_s(m);
    let (q_lb, q_err) = certified_q_value(m, &config)?;
    let ratio_kd = (l2 != s).then(|| (q_lb - s as f64) / (l2 - s) as f64);
    Ok(Certificate {
        m: m.clone(),
        l2_exact: l2,
        s,
        q_lb,
        q_err,
        ratio_kpm: q_lb / l2 as f64,
        ratio_kd,
        eta_certified: ratio_kd.map(|r| 1.0 / r),
        p_certified: l2 as f64 / q_lb,
        margin_ok: q_lb - q_err > l2 as f64,
        config,
    })
}

fn best_configuration(
    m: &WitnessMatrix,
    vectors: Option<&BlochConfig>,
    solver_cfg: &SolverConfig,
    seed: u64,
) -> Result<BlochConfig> {
    match vectors {
        Some(cfg) => {
            let fixed = certified_q_value(m, cfg)?.0;
            let alt = q_lowerbound_alternate(m, QInit::Config(cfg.clone()), DEFAULT_MAX_ITER, DEFAULT_TOL)?;
            Ok(if alt.value > fixed { alt.config } else { cfg.clone() })
        }
        None => {
            let local = local_bound_branch_bound(m, solver_cfg)?;
            let start = BlochConfig::from_signs(&local.a, &local.b)?;
            let best = q_lowerbound_restarts(
                m,
                vec![start],
                DEFAULT_Q_RESTARTS,
                seed,
                DEFAULT_MAX_ITER,
                DEFAULT_TOL,
            )?;
            Ok(best.config)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViolationReport {
    /// `Σ M_xy E_xy`.
    pub value: f64,
    pub l2: i64,
    /// `value − L_2`.
    pub margin: f64,
    /// Bound on the rounding error of `value`.
    pub err: f64,
    pub violated: bool,
}

/// Whether `Σ M E > L_2` holds by more than the rounding error bound.
pub fn check_violation(m: &WitnessMatrix, e: &RealMatrix, l2: i64) -> Result<ViolationReport> {
    if m.shape() != e.shape() {
        return Err(Error::Dimension(format!(
            "matrix is {:?}, correlations are {:?}",
            m.shape(),
            e.shape()
        )));
    }
    let mut total = CompensatedSum::default();
    let mut abs_total = 0.0;
    for (&v, &x) in m.as_slice().iter().zip(e.as_slice()) {
        let t = v as f64 * x;
        total.add(t);
        abs_total += t.abs();
    }
    let value = total.value();
    let (n, cols) = m.shape();
    let err = abs_total * 2.0 * UNIT_ROUNDOFF
        + 4.0 * UNIT_ROUNDOFF * value.abs()
        + 2.0 * (n * cols) as f64 * m.max_abs() as f64 * e.max_abs().max(1.0) * LEVEL_SLACK;
    let margin = value - l2 as f64;
    Ok(ViolationReport {
        value,
        l2,
        margin,
        err,
        violated: margin > err,
    })
}

/// Smallest `η` (to within `tol`) at which the family `η E + (1 − η)`
/// built from `cfg` violates the one-bit bound. Computes `L_2` exactly.
pub fn eta_bisect(
    m: &WitnessMatrix,
    cfg: &BlochConfig,
    tol: f64,
    solver_cfg: &SolverConfig,
) -> Result<f64> {
    let solved = lk_branch_bound(m, 2, solver_cfg)?;
    if solved.guess_dominated {
        return Err(Error::GuessDominated {
            guess: solver_cfg.guess,
        });
    }
    eta_bisect_with_l2(m, cfg, solved.value, tol)
}

/// [`eta_bisect`] with `L_2` already known.
pub fn eta_bisect_with_l2(m: &WitnessMatrix, cfg: &BlochConfig, l2: i64, tol: f64) -> Result<f64> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    let e = correlation_matrix(cfg);
    let violated = |eta: f64| -> Result<bool> {
        Ok(check_violation(m, &noisy_family(&e, eta)?, l2)?.violated)
    };
    if !violated(1.0)? {
        let s = sum_s(m);
        let (q, _) = certified_q_value(m, cfg)?;
        let ratio = if l2 == s { f64::NAN } else { (q - s as f64) / (l2 - s) as f64 };
        return Err(Error::NoViolation { ratio });
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if violated(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{gen_family, make_doubled};
    use crate::qgeom::Vec3;
    use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

    /// Optimal CHSH vectors, duplicated with flipped preparations for the
    /// doubled matrix.
    fn doubled_chsh_config() -> BlochConfig {
        let s = FRAC_1_SQRT_2;
        let a = vec![Vec3::new(s, 0.0, s), Vec3::new(-s, 0.0, s)];
        let mut a2 = a.clone();
        a2.extend(a.iter().map(|v| -v));
        BlochConfig::new(a2, vec![Vec3::z(), Vec3::x()]).unwrap()
    }

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    #[test]
    fn doubled_chsh_certificate() {
        let d = make_doubled(&gen_family(2).unwrap());
        let c = certify_witness(&d, None, &cfg(), 1).unwrap();
        assert_eq!(c.l2_exact, 4);
        assert_eq!(c.s, 0);
        assert!((c.q_lb - 4.0 * SQRT_2).abs() < 1e-6);
        assert!((c.ratio_kd.unwrap() - SQRT_2).abs() < 1e-6);
        assert!((c.ratio_kpm - SQRT_2).abs() < 1e-6);
        assert!((c.eta_certified.unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-5);
        assert!(c.margin_ok);
        assert_eq!(c.kd_lower_rational(), Some((5, 4)));
        let fixed = certify_witness(&d, Some(&doubled_chsh_config()), &cfg(), 1).unwrap();
        assert!((fixed.q_lb - 4.0 * SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn chsh_certificate_has_no_advantage() {
        let c = certify_witness(&gen_family(2).unwrap(), None, &cfg(), 1).unwrap();
        assert_eq!((c.l2_exact, c.s), (4, 2));
        assert!((c.ratio_kd.unwrap() - (2.0 * SQRT_2 - 2.0) / 2.0).abs() < 1e-6);
        assert!(!c.margin_ok);
    }

    #[test]
    fn violation_at_known_noise_levels() {
        let d = make_doubled(&gen_family(2).unwrap());
        let e = correlation_matrix(&doubled_chsh_config());
        assert!(check_violation(&d, &noisy_family(&e, 0.75).unwrap(), 4).unwrap().violated);
        assert!(!check_violation(&d, &noisy_family(&e, 0.70).unwrap(), 4).unwrap().violated);
    }

    #[test]
    fn optimal_deterministic_point_is_not_a_violation() {
        let m = gen_family(3).unwrap();
        let solved = lk_branch_bound(&m, 2, &cfg()).unwrap();
        let groups = solved.witness.unwrap();
        let a: Vec<i8> = groups.groups().iter().map(|&g| if g == 0 { 1 } else { -1 }).collect();
        let sgn = |v: i64| if v >= 0 { 1i8 } else { -1 };
        let mut plus = vec![0i64; m.cols()];
        let mut minus = vec![0i64; m.cols()];
        for (x, row) in m.row_iter().enumerate() {
            let acc = if a[x] > 0 { &mut plus } else { &mut minus };
            acc.iter_mut().zip(row).for_each(|(s, v)| *s += v);
        }
        let strat = crate::heuristics::OneBitStrategy::new(
            a,
            plus.into_iter().map(sgn).collect(),
            minus.into_iter().map(sgn).collect(),
        )
        .unwrap();
        let e = crate::heuristics::strategy_correlation(&strat);
        let r = check_violation(&m, &e, solved.value).unwrap();
        assert_eq!(r.margin, 0.0);
        assert!(!r.violated);
    }

    #[test]
    fn eta_bisection() {
        let d = make_doubled(&gen_family(2).unwrap());
        let eta = eta_bisect(&d, &doubled_chsh_config(), 1e-9, &cfg()).unwrap();
        assert!((eta - FRAC_1_SQRT_2).abs() < 1e-8);
        let chsh = gen_family(2).unwrap();
        let s = FRAC_1_SQRT_2;
        let chsh_cfg = BlochConfig::new(
            vec![Vec3::new(s, 0.0, s), Vec3::new(-s, 0.0, s)],
            vec![Vec3::z(), Vec3::x()],
        )
        .unwrap();
        assert!(matches!(
            eta_bisect(&chsh, &chsh_cfg, 1e-6, &cfg()),
            Err(Error::NoViolation { .. })
        ));
    }

    #[test]
    fn key_value_output() {
        let d = make_doubled(&gen_family(2).unwrap());
        let c = certify_witness(&d, None, &cfg(), 1).unwrap();
        let kv = c.to_key_value();
        assert!(kv.contains("l2_exact = 4\n"));
        assert!(kv.contains("margin_ok = true\n"));
        assert!(kv.contains("kd_lower_rational = 5/4\n"));
        assert!(c.to_report().contains("ok"));
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        for x in [1e16, 1.0, -1e16, 1.0] {
            s.add(x);
        }
        assert_eq!(s.value(), 2.0);
    }
}
