//! Gaussian measure tilting: the mean-shift contract and the two-path
//! tilted sampler for good-environment probabilities.

use super::{BarrierSpec, VarianceProfile};
use crate::numerics::{inverse_normal_cdf, SplitMix, Stream};
use crate::{Error, Result};

/// Mean of a Gaussian vector after exponential tilting by `<alpha, X>`:
/// the covariance is unchanged and the mean moves to `mu + V alpha`.
///
/// `cov` must be square, symmetric, and positive semidefinite, all checked
/// to 1e-10 relative to the largest entry.
pub fn girsanov_shift(cov: &[Vec<f64>], mu: &[f64], alpha: &[f64]) -> Result<Vec<f64>> {
    let dim = cov.len();
    if mu.len() != dim || alpha.len() != dim || cov.iter().any(|row| row.len() != dim) {
        return Err(Error::InvalidCovariance(format!(
            "dimension mismatch: cov {dim}x?, mu {}, alpha {}",
            mu.len(),
            alpha.len()
        )));
    }
    let scale = cov
        .iter()
        .flatten()
        .fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-10 * scale;
    for i in 0..dim {
        for j in (i + 1)..dim {
            if (cov[i][j] - cov[j][i]).abs() > tol {
                return Err(Error::InvalidCovariance(format!(
                    "asymmetric at ({i},{j}): {} vs {}",
                    cov[i][j], cov[j][i]
                )));
            }
        }
    }
    if dim > 0 {
        let eigs = symmetric_eigenvalues(cov);
        let min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -tol {
            return Err(Error::InvalidCovariance(format!(
                "not positive semidefinite: min eigenvalue {min}"
            )));
        }
    }
    Ok((0..dim)
        .map(|i| mu[i] + cov[i].iter().zip(alpha).map(|(v, a)| v * a).sum::<f64>())
        .collect())
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations. Intended
/// for the small covariance matrices the tilting contract is checked on.
pub fn symmetric_eigenvalues(m: &[Vec<f64>]) -> Vec<f64> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[i][j] * a[i][j];
            }
        }
        if off < 1e-28 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

/// Estimate of the joint good-environment probability for a tilted pair of
/// walks, plus the shared-segment Hamiltonian statistics that pin down the
/// Girsanov mean-shift contract.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct TiltedPairEstimate {
    /// Empirical probability that both walks stay under the barrier.
    pub probability: f64,
    /// Wilson score interval at the requested level.
    pub ci: (f64, f64),
    /// Mean of `Hbar_h` over replicas (expected `2 beta S_h` under the tilt).
    pub shared_mean: f64,
    pub shared_stderr: f64,
    pub replicas: u64,
}

/// Simulates two Hamiltonian paths sharing their first `h` increments under
/// the measure tilted by `e^{beta (Hbar(x) + Hbar(y))}`: per-step mean shift
/// `2 beta f(i/n)` on shared steps, `beta f(i/n)` on disjoint steps,
/// variances unchanged. Returns the empirical probability that both paths
/// satisfy `Hbar_T < alpha S_T` for every `T in {max(n0,1), ..., n}`, with a
/// binomial (Wilson) confidence interval.
pub fn tilted_pair_walk(
    n: u32,
    h: u32,
    beta: f64,
    profile: &VarianceProfile,
    barrier: &BarrierSpec,
    replicas: u64,
    seed: u64,
    ci_level: f64,
) -> Result<TiltedPairEstimate> {
    if h > n {
        return Err(Error::TiltOverlapTooLarge { h, n });
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "tilted walk needs beta > 0, got {beta}"
        )));
    }
    if profile.depth() != n {
        return Err(Error::ProfileLengthMismatch {
            depth: n,
            len: profile.values().len(),
        });
    }
    let t_min = barrier.t_min();
    let alpha = barrier.alpha;

    let mut successes = 0u64;
    let mut sh_mean = 0.0f64;
    let mut sh_m2 = 0.0f64;

    for r in 0..replicas {
        let root = SplitMix::root(SplitMix::replica_seed(seed, r));
        let mut hx = 0.0f64;
        let mut hy = 0.0f64;
        let mut ok = true;
        let mut shared_h = 0.0f64;
        for i in 1..=n {
            let f_i = profile.value(i);
            let scale = f_i.sqrt();
            let step = root.child(i);
            if i <= h {
                // shared increment, tilt shift 2 beta f(i/n)
                let inc = scale * step.gaussian(Stream::Gaussian) + 2.0 * beta * f_i;
                hx += inc;
                hy += inc;
                if i == h {
                    shared_h = hx;
                }
            } else {
                let wx = step.child(1).gaussian(Stream::Gaussian);
                let wy = step.child(2).gaussian(Stream::Gaussian);
                hx += scale * wx + beta * f_i;
                hy += scale * wy + beta * f_i;
            }
            if i >= t_min {
                let bound = alpha * profile.prefix_sum(i);
                if hx >= bound || hy >= bound {
                    ok = false;
                    // keep walking: the shared-segment statistics are
                    // unconditional on the barrier
                }
            }
            if !ok && i >= h {
                // nothing left to record once past the shared segment
                break;
            }
        }
        if ok {
            successes += 1;
        }
        let k = (r + 1) as f64;
        let delta = shared_h - sh_mean;
        sh_mean += delta / k;
        sh_m2 += delta * (shared_h - sh_mean);
    }

    let p_hat = successes as f64 / replicas as f64;
    let z = inverse_normal_cdf(0.5 + ci_level / 2.0);
    let nf = replicas as f64;
    let denom = 1.0 + z * z / nf;
    let center = (p_hat + z * z / (2.0 * nf)) / denom;
    let half = z * (p_hat * (1.0 - p_hat) / nf + z * z / (4.0 * nf * nf)).sqrt() / denom;
    let shared_stderr = if replicas >= 2 {
        (sh_m2 / (nf - 1.0) / nf).sqrt()
    } else {
        0.0
    };

    Ok(TiltedPairEstimate {
        probability: p_hat,
        ci: ((center - half).max(0.0), (center + half).min(1.0)),
        shared_mean: sh_mean,
        shared_stderr,
        replicas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_covariance_shifts_by_alpha() {
        let v = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let got = girsanov_shift(&v, &[0.0, 0.0], &[0.7, 0.0]).unwrap();
        assert_eq!(got, vec![0.7, 0.0]);
    }

    #[test]
    fn matrix_vector_shift() {
        let v = vec![vec![2.0, 1.0], vec![1.0, 2.0]];
        let got = girsanov_shift(&v, &[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!((got[0] - 2.0).abs() < 1e-15);
        assert!((got[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_covariances() {
        let asym = vec![vec![1.0, 0.5], vec![0.2, 1.0]];
        assert!(matches!(
            girsanov_shift(&asym, &[0.0, 0.0], &[1.0, 1.0]),
            Err(Error::InvalidCovariance(_))
        ));
        let indef = vec![vec![1.0, 2.0], vec![2.0, 1.0]]; // eigenvalues 3, -1
        assert!(matches!(
            girsanov_shift(&indef, &[0.0, 0.0], &[1.0, 1.0]),
            Err(Error::InvalidCovariance(_))
        ));
        let wrong_dim = vec![vec![1.0]];
        assert!(girsanov_shift(&wrong_dim, &[0.0, 0.0], &[1.0]).is_err());
    }

    #[test]
    fn jacobi_matches_known_spectrum() {
        let m = vec![vec![2.0, 1.0], vec![1.0, 2.0]];
        let mut eigs = symmetric_eigenvalues(&m);
        eigs.sort_by(f64::total_cmp);
        assert!((eigs[0] - 1.0).abs() < 1e-12);
        assert!((eigs[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn vacuous_barrier_probability_is_one() {
        let n = 10;
        let profile = VarianceProfile::constant_one(n);
        // n0 > n: empty constraint set, exact probability 1
        let est = tilted_pair_walk(
            n,
            3,
            0.8,
            &profile,
            &BarrierSpec::new(1.0, n + 1).unwrap(),
            500,
            9,
            0.95,
        )
        .unwrap();
        assert_eq!(est.probability, 1.0);

        // enormous alpha: barrier never binds at this depth
        let est = tilted_pair_walk(
            n,
            3,
            0.8,
            &profile,
            &BarrierSpec::new(1e3, 0).unwrap(),
            500,
            9,
            0.95,
        )
        .unwrap();
        assert!(est.ci.1 >= 1.0 - 1e-9);
        assert_eq!(est.probability, 1.0);
    }

    #[test]
    fn estimate_converges_as_n0_grows() {
        // for fixed n, the estimate approaches 1 as n0 -> infinity
        let n = 16;
        let profile = VarianceProfile::constant_one(n);
        let beta = 0.9;
        let p_at = |n0: u32| {
            tilted_pair_walk(
                n,
                0,
                beta,
                &profile,
                &BarrierSpec::new(1.7, n0).unwrap(),
                4000,
                123,
                0.95,
            )
            .unwrap()
            .probability
        };
        let p2 = p_at(2);
        let p10 = p_at(10);
        let p15 = p_at(15);
        assert!(p2 < p10 && p10 < p15, "{p2} {p10} {p15}");
        assert!(p15 > 0.9);
    }

    #[test]
    fn estimate_stabilizes_as_n_grows() {
        // with n0 fixed the constraint set grows with n, so the estimate is
        // nonincreasing and settles toward its limit
        let beta = 0.9;
        let p_at = |n: u32| {
            tilted_pair_walk(
                n,
                0,
                beta,
                &VarianceProfile::constant_one(n),
                &BarrierSpec::new(1.4, 2).unwrap(),
                6000,
                77,
                0.95,
            )
            .unwrap()
            .probability
        };
        let p8 = p_at(8);
        let p16 = p_at(16);
        let p32 = p_at(32);
        assert!(p16 <= p8 + 0.02);
        assert!(p32 <= p16 + 0.02);
        assert!((p32 - p16).abs() < (p16 - p8).abs() + 0.02);
    }

    #[test]
    fn rejects_overlap_past_depth() {
        let profile = VarianceProfile::constant_one(4);
        assert!(matches!(
            tilted_pair_walk(
                4,
                5,
                0.5,
                &profile,
                &BarrierSpec::new(1.0, 0).unwrap(),
                10,
                0,
                0.95
            ),
            Err(Error::TiltOverlapTooLarge { .. })
        ));
    }
}
