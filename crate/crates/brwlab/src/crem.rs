//! CREM partition function on the binary tree and the dyadic
//! multiplicative-cascade measure on [0,1].
//!
//! The CREM field assigns branch `x` at depth n the Hamiltonian
//! `H_n(x) = sum_k e_k(x)` of independent per-edge Gaussians with variances
//! `n (A(k/n) - A((k-1)/n))`, the unique consistent realization of the
//! covariance `Cov(x, y) = n A(C(x,y)/n)` for tree-indexed fields. `A(x) = x`
//! makes every edge variance 1 and recovers the time-homogeneous binary
//! model, sharing the per-vertex draws bit for bit under equal seeds.

use crate::brw::normalize_log_partition;
use crate::numerics::{log_add_exp, LogSumAccumulator, LogWeight};
use crate::tree::{walk, OffspringLaw, SurvivalMode, TreeStream, WalkEvent};
use crate::{Error, Result};

/// Covariance profile A: [0,1] -> [0,1], nondecreasing with A(0) = 0 and
/// A(1) = 1, discretized into per-edge variances `n * (A(k/n) - A((k-1)/n))`.
///
/// The right derivative at 0 is supplied by the caller rather than
/// differenced from the table: the critical temperature depends only on
/// A'(0), and differencing a user table there is ill-conditioned.
#[derive(Clone, Debug, PartialEq)]
pub struct CremProfile {
    depth: u32,
    a_prime_0: f64,
    /// A(k/n) for k = 0..=n
    a_values: Vec<f64>,
    /// n * (A(k/n) - A((k-1)/n)) for k = 1..=n
    increments: Vec<f64>,
    /// per-edge displacement scales sqrt(increment)
    scales: Vec<f64>,
    /// cumulative variance sum_{j<=k} increment_j = n A(k/n), k = 0..=n
    prefix: Vec<f64>,
}

impl CremProfile {
    /// A(x) = x: every edge variance is exactly 1.0, the homogeneous case.
    pub fn identity(n: u32) -> Self {
        let a_values = (0..=n).map(|k| k as f64 / n.max(1) as f64).collect();
        let increments = vec![1.0; n as usize];
        Self::assemble(n, 1.0, a_values, increments)
    }

    /// Piecewise-linear A through `(x, A(x))` knots, with an explicit right
    /// derivative at 0.
    pub fn from_table(n: u32, knots: &[(f64, f64)], a_prime_0: f64) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidCremProfile("need at least 2 knots".into()));
        }
        if !a_prime_0.is_finite() || a_prime_0 <= 0.0 {
            return Err(Error::InvalidCremProfile(format!(
                "A'(0) = {a_prime_0} must be positive and finite"
            )));
        }
        let mut sorted = knots.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        if (sorted[0].0, sorted[0].1) != (0.0, 0.0) {
            return Err(Error::InvalidCremProfile("A(0) must be 0".into()));
        }
        let (x_last, a_last) = *sorted.last().unwrap();
        if x_last != 1.0 || (a_last - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidCremProfile("A(1) must be 1".into()));
        }
        for pair in sorted.windows(2) {
            if pair[1].1 < pair[0].1 {
                return Err(Error::InvalidCremProfile(format!(
                    "A must be nondecreasing, violated at x = {}",
                    pair[1].0
                )));
            }
        }
        let interp = |x: f64| -> f64 {
            let j = sorted.partition_point(|k| k.0 < x).min(sorted.len() - 1);
            if j == 0 {
                return sorted[0].1;
            }
            let (x0, a0) = sorted[j - 1];
            let (x1, a1) = sorted[j];
            if x1 == x0 {
                a1
            } else {
                a0 + (a1 - a0) * (x - x0) / (x1 - x0)
            }
        };
        let a_values: Vec<f64> = (0..=n).map(|k| interp(k as f64 / n.max(1) as f64)).collect();
        let increments: Vec<f64> = (1..=n as usize)
            .map(|k| n as f64 * (a_values[k] - a_values[k - 1]))
            .collect();
        if increments.iter().any(|v| *v < 0.0) {
            return Err(Error::InvalidCremProfile(
                "negative edge variance from non-monotone table".into(),
            ));
        }
        Ok(Self::assemble(n, a_prime_0, a_values, increments))
    }

    fn assemble(n: u32, a_prime_0: f64, a_values: Vec<f64>, increments: Vec<f64>) -> Self {
        let mut prefix = Vec::with_capacity(n as usize + 1);
        prefix.push(0.0);
        let mut s = 0.0;
        for &v in &increments {
            s += v;
            prefix.push(s);
        }
        let scales = increments.iter().map(|v| v.sqrt()).collect();
        CremProfile {
            depth: n,
            a_prime_0,
            a_values,
            increments,
            scales,
            prefix,
        }
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn a_prime_0(&self) -> f64 {
        self.a_prime_0
    }

    pub fn a_value(&self, k: u32) -> f64 {
        self.a_values[k as usize]
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// Accumulated Hamiltonian variance through generation k, `n A(k/n)`.
    pub fn prefix(&self) -> &[f64] {
        &self.prefix
    }

    /// Whether `sup A' <= A'(0)` holds on the discretized profile, the
    /// hypothesis under which the partition function converges below the
    /// critical temperature.
    pub fn satisfies_slope_hypothesis(&self) -> bool {
        self.increments
            .iter()
            .all(|&v| v <= self.a_prime_0 + 1e-9)
    }
}

/// Static critical inverse temperature `sqrt(2 ln 2) / sqrt(A'(0))`.
pub fn crem_beta_c(profile: &CremProfile) -> Result<f64> {
    let a0 = profile.a_prime_0;
    if !(a0 > 0.0) || !a0.is_finite() {
        return Err(Error::InvalidCremProfile(format!(
            "A'(0) = {a0} must be positive"
        )));
    }
    if !profile.satisfies_slope_hypothesis() {
        log::warn!(
            "CREM profile has edge slopes above A'(0) = {a0}; the L1-convergence \
             hypothesis does not hold for it"
        );
    }
    Ok((2.0 * std::f64::consts::LN_2).sqrt() / a0.sqrt())
}

/// Normalized CREM partition function
/// `log Z_n = log sum_x e^{beta H_n(x)} - (n ln 2 + beta^2 V_n / 2)`
/// with `V_n = n A(1)` the total edge variance; `E[Z_n] = 1` by construction.
pub fn crem_partition(n: u32, beta: f64, profile: &CremProfile, seed: u64) -> Result<LogWeight> {
    crem_partition_replica(n, beta, profile, seed, 0)
}

/// Replica variant: folds `replica` into the seed exactly like [`TreeStream`].
pub fn crem_partition_replica(
    n: u32,
    beta: f64,
    profile: &CremProfile,
    seed: u64,
    replica: u64,
) -> Result<LogWeight> {
    if profile.depth != n {
        return Err(Error::InvalidCremProfile(format!(
            "profile depth {} does not match n = {n}",
            profile.depth
        )));
    }
    let tree = TreeStream::new(
        OffspringLaw::DeterministicD { d: 2 },
        n,
        seed,
        SurvivalMode::Raw,
    )?
    .with_replica(replica);
    let nn = n as usize;
    let scales = &profile.scales;
    let mut h = vec![0.0f64; nn + 1];
    let mut acc = LogSumAccumulator::new();
    walk(&tree, |ev| match ev {
        WalkEvent::Descend { level, draw, .. } => {
            h[level + 1] = h[level] + scales[level] * draw;
        }
        WalkEvent::Leaf => acc.add(beta * h[nn]),
    })?;
    Ok(normalize_log_partition(
        acc.total(),
        beta,
        profile.prefix[nn],
        n,
        std::f64::consts::LN_2,
    ))
}

/// Exact second moment of `Z_n` on the binary tree, in log space:
/// `(1/2) sum_{h<n} 2^-h e^{beta^2 n A(h/n)} + 2^-n e^{beta^2 n A(1)}`.
pub fn crem_second_moment(n: u32, beta: f64, profile: &CremProfile) -> Result<LogWeight> {
    if profile.depth != n {
        return Err(Error::InvalidCremProfile(format!(
            "profile depth {} does not match n = {n}",
            profile.depth
        )));
    }
    Ok(crate::brw::second_moment_series(
        2.0,
        n,
        beta,
        &profile.prefix,
    ))
}

/// Dyadic multiplicative-cascade measure at depth m: each cell
/// `[i/2^m, (i+1)/2^m)` carries the log mass
/// `-m ln 2 + sum_{levels} (beta W'_I - beta^2 / 2)` over the dyadic
/// intervals containing it.
#[derive(Clone, Debug)]
pub struct DyadicMeasure {
    depth: u32,
    beta: f64,
    /// log masses of the 2^depth cells, in left-to-right order
    masses: Vec<LogWeight>,
}

/// 2^24 cells is the densest measure kept in memory; deeper refinements go
/// through the streaming partition path instead.
pub const CASCADE_DEPTH_CAP: u32 = 24;

/// Samples the cascade measure at depth m. The per-interval weights reuse
/// the binary tree's addressable Gaussians, so the total mass of the measure
/// is the homogeneous binary partition function of the same seed.
pub fn cascade_measure(m: u32, beta: f64, seed: u64) -> Result<DyadicMeasure> {
    cascade_measure_replica(m, beta, seed, 0)
}

pub fn cascade_measure_replica(
    m: u32,
    beta: f64,
    seed: u64,
    replica: u64,
) -> Result<DyadicMeasure> {
    if m > CASCADE_DEPTH_CAP {
        return Err(Error::CascadeDepthCap(m));
    }
    let tree = TreeStream::new(
        OffspringLaw::DeterministicD { d: 2 },
        m,
        seed,
        SurvivalMode::Raw,
    )?
    .with_replica(replica);
    let mm = m as usize;
    let half_b2 = 0.5 * beta * beta;
    let lebesgue = -(m as f64) * std::f64::consts::LN_2;
    let mut lm = vec![0.0f64; mm + 1];
    let mut masses = Vec::with_capacity(1usize << m);
    walk(&tree, |ev| match ev {
        WalkEvent::Descend { level, draw, .. } => {
            lm[level + 1] = lm[level] + (beta * draw - half_b2);
        }
        WalkEvent::Leaf => masses.push(LogWeight(lebesgue + lm[mm])),
    })?;
    Ok(DyadicMeasure {
        depth: m,
        beta,
        masses,
    })
}

impl DyadicMeasure {
    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Log masses of the depth-m cells.
    pub fn cell_masses(&self) -> &[LogWeight] {
        &self.masses
    }

    /// Log mass of the whole interval [0,1].
    pub fn total_mass(&self) -> LogWeight {
        self.interval_log_mass(0, 0)
    }

    /// Log mass the measure assigns to the level-l dyadic interval
    /// `[i/2^l, (i+1)/2^l)`, l <= depth. Computed by pairwise combination of
    /// the two child intervals, so the refinement identity
    /// `mass(l, i) = combine(mass(l+1, 2i), mass(l+1, 2i+1))`
    /// holds exactly, bit for bit.
    pub fn interval_log_mass(&self, level: u32, index: u64) -> LogWeight {
        assert!(level <= self.depth, "level {level} beyond depth {}", self.depth);
        assert!(index < 1u64 << level, "index {index} out of range at level {level}");
        if level == self.depth {
            return self.masses[index as usize];
        }
        self.interval_log_mass(level + 1, 2 * index)
            .combine(self.interval_log_mass(level + 1, 2 * index + 1))
    }

    /// The measure restricted to level-l resolution (masses of the coarser
    /// dyadic cells under the same realization).
    pub fn coarsen(&self, level: u32) -> DyadicMeasure {
        assert!(level <= self.depth);
        let mut masses = self.masses.clone();
        for _ in level..self.depth {
            masses = masses
                .chunks_exact(2)
                .map(|pair| LogWeight(log_add_exp(pair[0].0, pair[1].0)))
                .collect();
        }
        DyadicMeasure {
            depth: level,
            beta: self.beta,
            masses,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brw::{partition_pair, VarianceProfile};

    fn concave_knots() -> Vec<(f64, f64)> {
        vec![(0.0, 0.0), (0.5, 0.75), (1.0, 1.0)]
    }

    #[test]
    fn identity_profile_has_unit_increments() {
        let p = CremProfile::identity(12);
        assert!(p.increments().iter().all(|&v| v == 1.0));
        assert_eq!(p.prefix()[12], 12.0);
        assert!(p.satisfies_slope_hypothesis());
    }

    #[test]
    fn table_profile_telescopes() {
        let n = 24;
        let p = CremProfile::from_table(n, &concave_knots(), 1.5).unwrap();
        let total: f64 = p.increments().iter().sum();
        assert!((total - n as f64).abs() < 1e-9 * n as f64);
        assert!((p.a_value(n) - 1.0).abs() < 1e-12);
        assert_eq!(p.a_value(0), 0.0);
        assert!(p.satisfies_slope_hypothesis());
    }

    #[test]
    fn invalid_tables_rejected() {
        assert!(CremProfile::from_table(8, &[(0.0, 0.1), (1.0, 1.0)], 1.0).is_err());
        assert!(CremProfile::from_table(8, &[(0.0, 0.0), (1.0, 0.9)], 1.0).is_err());
        assert!(
            CremProfile::from_table(8, &[(0.0, 0.0), (0.5, 0.8), (0.6, 0.4), (1.0, 1.0)], 2.0)
                .is_err()
        );
        assert!(CremProfile::from_table(8, &[(0.0, 0.0), (1.0, 1.0)], 0.0).is_err());
    }

    #[test]
    fn beta_c_formula() {
        let id = CremProfile::identity(4);
        let got = crem_beta_c(&id).unwrap();
        assert!((got - 1.1774100225154747).abs() < 1e-12);

        let mut p = CremProfile::identity(4);
        p.a_prime_0 = 4.0;
        assert!((crem_beta_c(&p).unwrap() - 0.5887050112577373).abs() < 1e-12);
        let mut q = CremProfile::identity(4);
        q.a_prime_0 = 2.0 * std::f64::consts::LN_2;
        assert!((crem_beta_c(&q).unwrap() - 1.0).abs() < 1e-12);

        // A'(0) = 2 concave case
        let steep = CremProfile::from_table(8, &[(0.0, 0.0), (0.5, 1.0), (1.0, 1.0)], 2.0).unwrap();
        assert!((crem_beta_c(&steep).unwrap() - 0.8325546111576977).abs() < 1e-12);
    }

    #[test]
    fn beta_zero_partition_is_unit() {
        let p = CremProfile::from_table(10, &concave_knots(), 1.5).unwrap();
        let z = crem_partition(10, 0.0, &p, 99).unwrap();
        assert!(z.0.abs() < 1e-12);
    }

    #[test]
    fn identity_profile_matches_homogeneous_brw_bitwise() {
        use crate::tree::{OffspringLaw, SurvivalMode, TreeStream};
        for (n, beta, seed) in [(6u32, 0.8, 3u64), (10, 1.1774100225154747, 8)] {
            let z = crem_partition(n, beta, &CremProfile::identity(n), seed).unwrap();
            let tree = TreeStream::new(
                OffspringLaw::DeterministicD { d: 2 },
                n,
                seed,
                SurvivalMode::Raw,
            )
            .unwrap();
            let w = partition_pair(&tree, beta, &VarianceProfile::constant_one(n), None)
                .unwrap()
                .log_w;
            assert_eq!(z.0.to_bits(), w.0.to_bits(), "n={n} beta={beta}");
        }
    }

    #[test]
    fn second_moment_matches_dary_for_identity() {
        for (n, beta) in [(5u32, 0.4), (9, 0.9)] {
            let a = crem_second_moment(n, beta, &CremProfile::identity(n)).unwrap();
            let b = crate::brw::exact_second_moment_dary(
                2,
                n,
                beta,
                &VarianceProfile::constant_one(n),
            )
            .unwrap();
            assert_eq!(a.0.to_bits(), b.0.to_bits());
        }
    }

    #[test]
    fn second_moment_monotone_in_beta() {
        let p = CremProfile::from_table(8, &concave_knots(), 1.5).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=10 {
            let v = crem_second_moment(8, k as f64 * 0.15, &p).unwrap().0;
            assert!(v >= prev - 1e-13);
            prev = v;
        }
    }

    #[test]
    fn cascade_depth_zero_and_beta_zero() {
        let m0 = cascade_measure(0, 0.7, 9).unwrap();
        assert_eq!(m0.cell_masses().len(), 1);
        assert_eq!(m0.total_mass().0, 0.0);

        let flat = cascade_measure(5, 0.0, 9).unwrap();
        let want = -(5f64) * std::f64::consts::LN_2;
        for c in flat.cell_masses() {
            assert!((c.0 - want).abs() < 1e-15);
        }
        assert!(flat.total_mass().0.abs() < 1e-12);
    }

    #[test]
    fn cascade_total_mass_is_binary_partition_function() {
        use crate::tree::{OffspringLaw, SurvivalMode, TreeStream};
        let (m, beta, seed) = (10u32, 0.8, 1234u64);
        let mu = cascade_measure(m, beta, seed).unwrap();
        let tree = TreeStream::new(
            OffspringLaw::DeterministicD { d: 2 },
            m,
            seed,
            SurvivalMode::Raw,
        )
        .unwrap();
        let w = partition_pair(&tree, beta, &VarianceProfile::constant_one(m), None)
            .unwrap()
            .log_w;
        assert!(
            (mu.total_mass().0 - w.0).abs() < 1e-10,
            "{} vs {}",
            mu.total_mass().0,
            w.0
        );
    }

    #[test]
    fn refinement_consistency_is_exact() {
        let mu = cascade_measure(8, 1.1, 42).unwrap();
        for level in (0..8u32).rev() {
            for index in 0..(1u64 << level) {
                let parent = mu.interval_log_mass(level, index);
                let combined = mu
                    .interval_log_mass(level + 1, 2 * index)
                    .combine(mu.interval_log_mass(level + 1, 2 * index + 1));
                assert_eq!(parent.0.to_bits(), combined.0.to_bits());
            }
        }
        let coarse = mu.coarsen(3);
        for i in 0..8u64 {
            assert_eq!(
                coarse.cell_masses()[i as usize].0.to_bits(),
                mu.interval_log_mass(3, i).0.to_bits()
            );
        }
    }

    #[test]
    fn cascade_depth_cap_enforced() {
        assert!(matches!(
            cascade_measure(25, 0.5, 1),
            Err(Error::CascadeDepthCap(25))
        ));
    }
}
