//! Partition functions, Hamiltonians, barrier-restricted sums, tilted
//! samplers, the derivative martingale, and closed-form references for the
//! homogeneous and time-inhomogeneous models.
//!
//! Conventions used throughout (d is the offspring mean, n the depth):
//!
//! * homogeneous:   `W_n = d^-n sum_leaves exp(beta H_n - beta^2 n / 2)`
//!   with `H_n(x) = sum_i w(x_i)`;
//! * inhomogeneous: `Wbar_n` replaces `w(x_i)` by `sqrt(f(i/n)) w(x_i)` and
//!   the normalizer by `S_n = sum_i f(i/n)`;
//! * two branches with overlap h have Hamiltonian covariance `S_h` (the
//!   shared-prefix variance), which is what the exact second-moment series
//!   below is built from.
//!
//! Everything is computed from streamed trees in log space; replica results
//! are pure functions of `(seed, replica)`.

mod partition;
mod tilt;

pub use partition::{
    derivative_martingale, partition_pair, spine_second_moment_mc, DerivativeMode,
};
pub(crate) use partition::normalize_log_partition;
pub use tilt::{girsanov_shift, symmetric_eigenvalues, tilted_pair_walk, TiltedPairEstimate};

use crate::numerics::{LogSumAccumulator, LogWeight};
use crate::{Error, Result};

/// Variance profile f: [0,1] -> [0,1] evaluated on the integer grid i/n,
/// with prefix sums `S_h = sum_{i<=h} f(i/n)`.
///
/// The grid always belongs to one specific depth n: `S_h` depends on the
/// total depth, so profiles are rebuilt per n rather than cached across
/// depths.
#[derive(Clone, Debug, PartialEq)]
pub struct VarianceProfile {
    kind: ProfileKind,
    /// f(i/n) for i = 1..=n
    values: Vec<f64>,
    /// sqrt(f(i/n)), the per-step displacement scales
    scales: Vec<f64>,
    /// S_0..S_n
    prefix: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProfileKind {
    ConstantOne,
    LinearDecreasing,
    PiecewiseTable,
    CustomGrid,
}

/// Tolerance for the smallest-grid-point check `f(1/n) >= 1 - tol(n)`; the
/// profiles model functions continuous at 0 with f(0) = 1, and 2/n vanishes
/// while admitting any Lipschitz-1 decreasing profile.
pub fn first_point_tolerance(n: u32) -> f64 {
    2.0 / n.max(1) as f64
}

impl VarianceProfile {
    /// f = 1: the time-homogeneous case, S_h = h exactly.
    pub fn constant_one(n: u32) -> Self {
        Self::build(ProfileKind::ConstantOne, vec![1.0; n as usize]).expect("valid by construction")
    }

    /// f(t) = 1 - t on the grid i/n.
    pub fn linear_decreasing(n: u32) -> Self {
        let values = (1..=n).map(|i| 1.0 - i as f64 / n as f64).collect();
        Self::build(ProfileKind::LinearDecreasing, values).expect("valid by construction")
    }

    /// Explicit grid values f(i/n) for i = 1..=n.
    pub fn from_grid(values: Vec<f64>) -> Result<Self> {
        Self::build(ProfileKind::CustomGrid, values)
    }

    /// Piecewise-linear table of (t, f(t)) knots interpolated onto the grid.
    pub fn from_table(n: u32, knots: &[(f64, f64)]) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidProfile("table needs at least 2 knots".into()));
        }
        let mut sorted = knots.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        if sorted.first().unwrap().0 > 0.0 || sorted.last().unwrap().0 < 1.0 {
            return Err(Error::InvalidProfile("table must cover [0,1]".into()));
        }
        let interp = |t: f64| -> f64 {
            let j = sorted.partition_point(|k| k.0 < t).min(sorted.len() - 1);
            if j == 0 {
                return sorted[0].1;
            }
            let (t0, f0) = sorted[j - 1];
            let (t1, f1) = sorted[j];
            if t1 == t0 {
                f1
            } else {
                f0 + (f1 - f0) * (t - t0) / (t1 - t0)
            }
        };
        let values = (1..=n).map(|i| interp(i as f64 / n as f64)).collect();
        Self::build(ProfileKind::PiecewiseTable, values)
    }

    fn build(kind: ProfileKind, values: Vec<f64>) -> Result<Self> {
        let n = values.len() as u32;
        for (i, &f) in values.iter().enumerate() {
            if !f.is_finite() || !(0.0..=1.0).contains(&f) {
                return Err(Error::InvalidProfile(format!(
                    "f({}/{n}) = {f} outside [0,1]",
                    i + 1
                )));
            }
        }
        if let Some(&first) = values.first() {
            let tol = first_point_tolerance(n);
            if first < 1.0 - tol {
                return Err(Error::InvalidProfile(format!(
                    "f(1/{n}) = {first} < 1 - {tol}: profile is not continuous-at-0 with f(0)=1 \
                     at this depth"
                )));
            }
        }
        let mut prefix = Vec::with_capacity(values.len() + 1);
        prefix.push(0.0);
        let mut s = 0.0;
        for &f in &values {
            s += f;
            prefix.push(s);
        }
        let scales = values.iter().map(|f| f.sqrt()).collect();
        Ok(VarianceProfile {
            kind,
            values,
            scales,
            prefix,
        })
    }

    pub fn kind(&self) -> ProfileKind {
        self.kind
    }

    pub fn is_constant_one(&self) -> bool {
        self.values.iter().all(|&f| f == 1.0)
    }

    pub fn depth(&self) -> u32 {
        self.values.len() as u32
    }

    /// f(i/n), 1-indexed.
    pub fn value(&self, i: u32) -> f64 {
        self.values[i as usize - 1]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn step_scales(&self) -> &[f64] {
        &self.scales
    }

    /// S_h = sum_{i<=h} f(i/n), h = 0..=n.
    pub fn prefix_sum(&self, h: u32) -> f64 {
        self.prefix[h as usize]
    }

    pub fn prefix(&self) -> &[f64] {
        &self.prefix
    }
}

/// Barrier parameters: partial Hamiltonians must stay below `alpha * T`
/// (profile-weighted: `alpha * S_T`) for every generation `T` from `n0`
/// through `n`. The unsatisfiable `T = 0` endpoint (0 < 0) is excluded, so
/// `n0 = 0` starts the checks at `T = 1`; `n0 > n` makes the barrier vacuous.

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BarrierSpec {
    pub alpha: f64,
    pub n0: u32,
}

impl BarrierSpec {
    pub fn new(alpha: f64, n0: u32) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "barrier alpha {alpha} must be positive"
            )));
        }
        Ok(BarrierSpec { alpha, n0 })
    }

    /// First generation actually checked.
    pub(crate) fn t_min(&self) -> u32 {
        self.n0.max(1)
    }
}

/// The two critical inverse temperatures of the model on mean-d trees.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CriticalConstants {
    /// Weak/strong disorder transition: sqrt(2 ln d).
    pub beta_c: f64,
    /// L2-boundedness transition: sqrt(ln d).
    pub beta_2: f64,
    pub d: f64,
}

/// `beta_c = sqrt(2 ln d)`, `beta_2 = sqrt(ln d)`; requires d > 1.
pub fn critical_constants(d: f64) -> Result<CriticalConstants> {
    if !(d > 1.0) || !d.is_finite() {
        return Err(Error::SubcriticalMean(d));
    }
    Ok(CriticalConstants {
        beta_c: (2.0 * d.ln()).sqrt(),
        beta_2: d.ln().sqrt(),
        d,
    })
}

/// Per-replica record of the coupled partition functions and derived masses,
/// all in log space. `log_j`/`log_jbar` equal `log_w`/`log_wbar` when no
/// barrier is given (vacuous restriction).
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct ReplicaOutcome {
    pub n: u32,
    pub beta: f64,
    pub log_w: LogWeight,
    pub log_wbar: LogWeight,
    pub log_j: LogWeight,
    pub log_jbar: LogWeight,
    /// Derivative martingale at beta_c (normalized variant); present only
    /// when the requested beta is critical for the tree's offspring mean.
    pub d_n: Option<f64>,
    pub leaf_count: u64,
    pub seed: u64,
    pub replica: u64,
}

/// Exact second moment of `Wbar_n` on the deterministic d-ary tree, in log
/// space:
///
/// `E[Wbar_n^2] = ((d-1)/d) sum_{h=0}^{n-1} d^-h e^{beta^2 S_h}
///              + d^-n e^{beta^2 S_n}`
///
/// which is the overlap decomposition with exact pair counts
/// (`pair_count_dary`) and `E[e^{beta(Hbar(x)+Hbar(y))}] = e^{beta^2 (S_n + S_h)}`
/// for an overlap-h pair.
pub fn exact_second_moment_dary(
    d: u32,
    n: u32,
    beta: f64,
    profile: &VarianceProfile,
) -> Result<LogWeight> {
    if d < 2 {
        return Err(Error::SubcriticalMean(d as f64));
    }
    if profile.depth() != n {
        return Err(Error::ProfileLengthMismatch {
            depth: n,
            len: profile.values.len(),
        });
    }
    Ok(second_moment_series(d as f64, n, beta, profile.prefix()))
}

/// Shared log-space evaluation of the overlap series: `prefix[h]` is the
/// Hamiltonian variance accumulated through generation h.
pub(crate) fn second_moment_series(d: f64, n: u32, beta: f64, prefix: &[f64]) -> LogWeight {
    let log_d = d.ln();
    let b2 = beta * beta;
    let mut acc = LogSumAccumulator::new();
    if n > 0 {
        let log_ratio = (d - 1.0).ln() - log_d;
        for h in 0..n {
            acc.add(log_ratio - h as f64 * log_d + b2 * prefix[h as usize]);
        }
    }
    acc.add(-(n as f64) * log_d + b2 * prefix[n as usize]);
    acc.total()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_constants_reference_values() {
        let c = critical_constants(2.0).unwrap();
        assert!((c.beta_c - 1.1774100226).abs() < 1e-9);
        assert!((c.beta_2 - 0.8325546112).abs() < 1e-9);
        assert!((c.beta_c - std::f64::consts::SQRT_2 * c.beta_2).abs() < 1e-14);

        let e = critical_constants(std::f64::consts::E).unwrap();
        assert!((e.beta_c - std::f64::consts::SQRT_2).abs() < 1e-15);
        assert!((e.beta_2 - 1.0).abs() < 1e-15);

        let three = critical_constants(3.0).unwrap();
        assert!((three.beta_2 - 1.0481).abs() < 5e-4);

        assert!(matches!(
            critical_constants(1.0),
            Err(Error::SubcriticalMean(_))
        ));
    }

    #[test]
    fn second_moment_trivial_cases() {
        // beta = 0: E[W^2] = 1 for any d, n, profile
        for n in [0u32, 1, 5] {
            for d in [2u32, 3] {
                let p = VarianceProfile::linear_decreasing(n);
                let v = exact_second_moment_dary(d, n, 0.0, &p).unwrap();
                assert!(
                    (v.to_linear() - 1.0).abs() < 1e-12,
                    "d={d} n={n}: {}",
                    v.to_linear()
                );
            }
        }
    }

    #[test]
    fn second_moment_two_leaf_oracle() {
        // d=2, n=1, beta=1, constant: (1 + e)/2 from the direct two-leaf
        // Gaussian integral E[W^2] = (2 E e^{2w - 1} + 2 E e^{w1 + w2 - 1})/4.
        let p = VarianceProfile::constant_one(1);
        let v = exact_second_moment_dary(2, 1, 1.0, &p).unwrap().to_linear();
        let want = (1.0 + std::f64::consts::E) / 2.0;
        assert!((v - want).abs() < 1e-12, "{v} vs {want}");
        assert!((v - 1.8591409142295225).abs() < 1e-12);
    }

    #[test]
    fn second_moment_phase_dichotomy() {
        // bounded below beta_2 = sqrt(ln 2), divergent above
        let beta_lo = 0.9 * (2f64).ln().sqrt();
        let beta_hi = 1.1 * (2f64).ln().sqrt();
        let at = |beta: f64, n: u32| {
            exact_second_moment_dary(2, n, beta, &VarianceProfile::constant_one(n))
                .unwrap()
                .0
        };
        let lo_growth = at(beta_lo, 96) - at(beta_lo, 48);
        let hi_growth = at(beta_hi, 96) - at(beta_hi, 48);
        assert!(lo_growth < 0.01, "subcritical growth {lo_growth}");
        assert!(hi_growth > 2.0, "supercritical growth {hi_growth}");
    }

    #[test]
    fn profile_dominance_termwise() {
        // f <= 1 pointwise implies the series is dominated by the constant
        // profile value for every (d, n, beta)
        for n in [1u32, 4, 9] {
            for beta in [0.3, 0.8, 1.3] {
                for d in [2u32, 3] {
                    let f = VarianceProfile::linear_decreasing(n);
                    let one = VarianceProfile::constant_one(n);
                    let a = exact_second_moment_dary(d, n, beta, &f).unwrap().0;
                    let b = exact_second_moment_dary(d, n, beta, &one).unwrap().0;
                    assert!(a <= b + 1e-12, "d={d} n={n} beta={beta}: {a} > {b}");
                }
            }
        }
    }

    #[test]
    fn second_moment_monotone_in_beta() {
        let p = VarianceProfile::linear_decreasing(9);
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=12 {
            let beta = k as f64 * 0.125;
            let v = exact_second_moment_dary(2, 9, beta, &p).unwrap().0;
            assert!(v >= prev - 1e-13);
            prev = v;
        }
    }

    #[test]
    fn profile_construction_and_validation() {
        let p = VarianceProfile::constant_one(5);
        assert_eq!(p.prefix_sum(5), 5.0);
        assert!(p.is_constant_one());

        let lin = VarianceProfile::linear_decreasing(4);
        assert_eq!(lin.value(4), 0.0);
        for h in 1..=4u32 {
            let df = lin.prefix_sum(h) - lin.prefix_sum(h - 1);
            assert!((df - lin.value(h)).abs() < 1e-12);
        }

        // out-of-range values rejected
        assert!(VarianceProfile::from_grid(vec![1.0, 1.2]).is_err());
        // first grid point too far below 1 rejected
        assert!(VarianceProfile::from_grid(vec![0.2, 0.1, 0.0, 0.0, 0.0, 0.0]).is_err());

        // table interpolation hits the grid exactly at the knots
        let t = VarianceProfile::from_table(4, &[(0.0, 1.0), (0.5, 0.8), (1.0, 0.2)]).unwrap();
        assert!((t.value(2) - 0.8).abs() < 1e-12);
        assert!((t.value(4) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn barrier_spec_validation() {
        assert!(BarrierSpec::new(1.2, 0).is_ok());
        assert!(BarrierSpec::new(0.0, 3).is_err());
        assert_eq!(BarrierSpec::new(1.0, 0).unwrap().t_min(), 1);
        assert_eq!(BarrierSpec::new(1.0, 7).unwrap().t_min(), 7);
    }
}
