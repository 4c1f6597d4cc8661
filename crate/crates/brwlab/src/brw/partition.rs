//! Single-pass streaming computation of the coupled partition functions.
//!
//! One depth-first walk of the tree maintains, per path level, the
//! homogeneous and profile-weighted partial Hamiltonians plus the latest
//! barrier-violation generation. Leaf exponents feed log-sum-exp
//! accumulators, so the whole computation is O(vertex count) time and
//! O(depth) memory with no linear-space mass ever materialized. The
//! `constant_one` profile collapses to a single channel: both Hamiltonians
//! are the same numbers, so the homogeneous results are reused bit for bit.

use super::{critical_constants, BarrierSpec, ProfileKind, ReplicaOutcome, VarianceProfile};
use crate::numerics::{LogSumAccumulator, LogWeight};
use crate::tree::{walk, TreeStream, WalkEvent};
use crate::{Error, Result};

/// Derivative-martingale normalization. The plain summand is
/// `(beta_c H - beta_c^2 n/2) e^{beta_c H - beta_c^2 n/2}`; the normalized
/// variant multiplies each exponential by `d^-n` (the same normalization the
/// partition function carries), which is the variant whose Seneta-Heyde
/// correlation with `n^(1/2) W_n` is meaningful. The two differ exactly by
/// the constant factor `d^n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DerivativeMode {
    Normalized,
    PaperLiteral,
}

/// Relative tolerance for "beta is the critical temperature" when deciding
/// whether to accumulate the derivative martingale alongside a partition run.
const BETA_CRITICAL_TOL: f64 = 1e-9;

fn warn_linear_range(beta: f64, n: u32) {
    if beta * (n as f64).sqrt() > 600.0 {
        log::warn!(
            "beta sqrt(n) = {:.1} > 600: log-space internals are fine, but linear-space \
             comparisons of these masses would overflow double precision",
            beta * (n as f64).sqrt()
        );
    }
}

#[inline]
pub(crate) fn normalize_log_partition(
    sum: LogWeight,
    beta: f64,
    total_var: f64,
    n: u32,
    log_d: f64,
) -> LogWeight {
    LogWeight(sum.0 - 0.5 * beta * beta * total_var - n as f64 * log_d)
}

/// Streams the tree once and computes, from the same per-vertex Gaussians:
/// `log W_n`, `log Wbar_n`, and with a barrier the restricted masses
/// `log J_n` (homogeneous barrier `H_T < alpha T`) and `log Jbar_n`
/// (profile barrier `Hbar_T < alpha S_T`) over `T in {max(n0,1), ..., n}`.
///
/// A subtree is dead for J as soon as its prefix violates the barrier (the
/// event is a prefix property), which the walk tracks with one flag per
/// level. When `beta` equals `beta_c` of the tree's offspring mean, the
/// normalized derivative martingale `D_n` is accumulated in the same pass.
pub fn partition_pair(
    tree: &TreeStream,
    beta: f64,
    profile: &VarianceProfile,
    barrier: Option<&BarrierSpec>,
) -> Result<ReplicaOutcome> {
    let n = tree.depth;
    if profile.depth() != n {
        return Err(Error::ProfileLengthMismatch {
            depth: n,
            len: profile.values().len(),
        });
    }
    warn_linear_range(beta, n);

    let nn = n as usize;
    let d = tree.law.mean();
    let log_d = d.ln();
    let beta_c = critical_constants(d)?.beta_c;
    let compute_d = (beta - beta_c).abs() <= BETA_CRITICAL_TOL * beta_c.max(1.0);
    // f = 1 makes the weighted channel identical to the homogeneous one
    let single_channel = profile.kind() == ProfileKind::ConstantOne;

    let scales = profile.step_scales();
    let prefix = profile.prefix();

    // per-generation path state, index 0 = root
    let mut h_hom = vec![0.0f64; nn + 1];
    let mut h_inh = vec![0.0f64; nn + 1];
    // generation of the most recent barrier violation on the path, 0 = none
    let mut lv_hom = vec![0u32; nn + 1];
    let mut lv_inh = vec![0u32; nn + 1];

    let (alpha, t_min, with_barrier) = match barrier {
        Some(b) => (b.alpha, b.t_min(), true),
        None => (0.0, u32::MAX, false),
    };

    let mut acc_w = LogSumAccumulator::new();
    let mut acc_wbar = LogSumAccumulator::new();
    let mut acc_j = LogSumAccumulator::new();
    let mut acc_jbar = LogSumAccumulator::new();
    let mut d_sum = 0.0f64;

    let half_b2_n = 0.5 * beta * beta * n as f64;
    let n_log_d = n as f64 * log_d;

    let leaf_count = walk(tree, |ev| match ev {
        WalkEvent::Descend { level, draw, .. } => {
            let g = level + 1;
            let hh = h_hom[level] + draw;
            h_hom[g] = hh;
            if !single_channel {
                h_inh[g] = h_inh[level] + scales[level] * draw;
            }
            if with_barrier {
                let t = g as u32;
                lv_hom[g] = if t >= t_min && hh >= alpha * g as f64 {
                    t
                } else {
                    lv_hom[level]
                };
                if !single_channel {
                    lv_inh[g] = if t >= t_min && h_inh[g] >= alpha * prefix[g] {
                        t
                    } else {
                        lv_inh[level]
                    };
                }
            }
        }
        WalkEvent::Leaf => {
            let e_hom = beta * h_hom[nn];
            acc_w.add(e_hom);
            if !single_channel {
                acc_wbar.add(beta * h_inh[nn]);
            }
            if with_barrier {
                if lv_hom[nn] == 0 {
                    acc_j.add(e_hom);
                }
                if !single_channel && lv_inh[nn] == 0 {
                    acc_jbar.add(beta * h_inh[nn]);
                }
            }
            if compute_d {
                let coef = e_hom - half_b2_n;
                d_sum += coef * (coef - n_log_d).exp();
            }
        }
    })?;

    let log_w = normalize_log_partition(acc_w.total(), beta, n as f64, n, log_d);
    let log_wbar = if single_channel {
        log_w
    } else {
        normalize_log_partition(acc_wbar.total(), beta, prefix[nn], n, log_d)
    };
    let (log_j, log_jbar) = if with_barrier {
        let j = normalize_log_partition(acc_j.total(), beta, n as f64, n, log_d);
        let jbar = if single_channel {
            j
        } else {
            normalize_log_partition(acc_jbar.total(), beta, prefix[nn], n, log_d)
        };
        (j, jbar)
    } else {
        (log_w, log_wbar)
    };

    Ok(ReplicaOutcome {
        n,
        beta,
        log_w,
        log_wbar,
        log_j,
        log_jbar,
        d_n: compute_d.then_some(d_sum),
        leaf_count,
        seed: tree.effective_seed(),
        replica: tree.replica,
    })
}

/// Derivative martingale
/// `D_n = sum_leaves (beta_c H_n - beta_c^2 n/2) e^{beta_c H_n - beta_c^2 n/2}`
/// at the critical temperature of the tree's offspring mean.
///
/// The normalized variant is accumulated directly (its exponent
/// `beta_c H - beta_c^2 n` stays in floating-point range); the plain variant
/// is the exact constant multiple `d^n` of it.
pub fn derivative_martingale(tree: &TreeStream, mode: DerivativeMode) -> Result<f64> {
    let n = tree.depth as usize;
    let d = tree.law.mean();
    let log_d = d.ln();
    let beta_c = critical_constants(d)?.beta_c;
    let half_b2_n = 0.5 * beta_c * beta_c * n as f64;
    let n_log_d = n as f64 * log_d;

    let mut h = vec![0.0f64; n + 1];
    let mut sum = 0.0f64;
    walk(tree, |ev| match ev {
        WalkEvent::Descend { level, draw, .. } => h[level + 1] = h[level] + draw,
        WalkEvent::Leaf => {
            let coef = beta_c * h[n] - half_b2_n;
            sum += coef * (coef - n_log_d).exp();
        }
    })?;
    Ok(match mode {
        DerivativeMode::Normalized => sum,
        DerivativeMode::PaperLiteral => sum * (n as f64 * log_d).exp(),
    })
}

/// One sample of the size-biased estimator of `E[Wbar_n^2]` on the
/// deterministic d-ary tree.
///
/// Tilting the field by `e^{beta Hbar(x*) - beta^2 S_n / 2}` along the fixed
/// leftmost spine `x* = (0,...,0)` (per-step Gaussian shift
/// `beta sqrt(f(i/n))`, Cameron-Martin-Girsanov) turns the second moment into
/// a first moment: `E[Wbar_n^2] = E_tilted[Wbar_n]`. The returned value is
/// `Wbar_n` of the shifted field; averaging it over replicas is an unbiased
/// Monte Carlo estimate of the second moment whose variance stays controlled
/// where the naive `Wbar^2` estimator is dominated by unobservably rare
/// leaves.
pub fn spine_second_moment_mc(
    tree: &TreeStream,
    beta: f64,
    profile: &VarianceProfile,
) -> Result<LogWeight> {
    let n = tree.depth;
    if profile.depth() != n {
        return Err(Error::ProfileLengthMismatch {
            depth: n,
            len: profile.values().len(),
        });
    }
    warn_linear_range(beta, n);
    let nn = n as usize;
    let log_d = tree.law.mean().ln();
    let scales = profile.step_scales();

    let mut h = vec![0.0f64; nn + 1];
    // path-prefix lies on the all-zeros spine
    let mut on_spine = vec![true; nn + 1];
    let mut acc = LogSumAccumulator::new();
    walk(tree, |ev| match ev {
        WalkEvent::Descend { level, child, draw } => {
            let spine = on_spine[level] && child == 0;
            on_spine[level + 1] = spine;
            let w = if spine {
                draw + beta * scales[level]
            } else {
                draw
            };
            h[level + 1] = h[level] + scales[level] * w;
        }
        WalkEvent::Leaf => acc.add(beta * h[nn]),
    })?;
    Ok(normalize_log_partition(
        acc.total(),
        beta,
        profile.prefix_sum(n),
        n,
        log_d,
    ))
}
