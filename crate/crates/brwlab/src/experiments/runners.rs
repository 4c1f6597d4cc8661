//! The experiment runners.
//!
//! Each runner expands its replica ensemble with rayon, then folds the
//! per-replica values into `EnsembleSummary`s strictly in replica order.
//! Independent experiments draw from distinct seed lanes of the base seed.

use rayon::prelude::*;

use super::config::{config_hash, ExperimentConfig};
use super::{ScanResult, ScanRow};
use crate::brw::{
    critical_constants, exact_second_moment_dary, partition_pair, spine_second_moment_mc,
    BarrierSpec, ReplicaOutcome, VarianceProfile,
};
use crate::crem::{cascade_measure_replica, crem_partition_replica, crem_second_moment};
use crate::numerics::{EnsembleSummary, FitResult};
use crate::tree::{OffspringLaw, SurvivalMode, TreeStream};
use crate::{Error, Result};

// Seed lanes, one per experiment family, so ensembles never overlap.
const LANE_SIMULATE: u64 = 0x01;
const LANE_UNIVERSALITY: u64 = 0x02;
const LANE_PHASE_SCAN: u64 = 0x03;
const LANE_FRACTIONAL: u64 = 0x04;
const LANE_KAHANE_INHOM: u64 = 0x05;
const LANE_KAHANE_HOM: u64 = 0x06;
const LANE_CRITICAL: u64 = 0x07;
const LANE_GOOD_ENV: u64 = 0x08;
const LANE_CREM: u64 = 0x09;
const LANE_CASCADE: u64 = 0x0a;

fn par_replicas<T, F>(replicas: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..replicas).into_par_iter().map(f).collect()
}

fn summarize(values: &[f64], ci_level: f64) -> EnsembleSummary {
    let mut s = EnsembleSummary::new(ci_level);
    for &v in values {
        s.add(v);
    }
    s
}

fn dary_tree(d: u32, n: u32, seed: u64, replica: u64) -> Result<TreeStream> {
    Ok(
        TreeStream::new(OffspringLaw::DeterministicD { d }, n, seed, SurvivalMode::Raw)?
            .with_replica(replica),
    )
}

/// Per-replica partition dumps for the `simulate` subcommand: the full
/// (n, beta, replica) product under the configured offspring law, with the
/// configured barrier.
pub fn simulate_replicas(config: &ExperimentConfig) -> Result<Vec<ReplicaOutcome>> {
    config.validate()?;
    let seed = config.replica_seed_lane(LANE_SIMULATE);
    let barrier = BarrierSpec::new(config.estimator.alpha, config.estimator.n0)?;
    let mut out = Vec::new();
    for &n in &config.model.ns {
        let profile = config.model.profile.build(n)?;
        for &beta in &config.model.betas {
            let rows = par_replicas(config.ensemble.replicas, |r| {
                let tree = TreeStream::new(
                    config.model.offspring.clone(),
                    n,
                    seed,
                    config.model.survival,
                )?
                .with_replica(r);
                partition_pair(&tree, beta, &profile, Some(&barrier))
            })?;
            out.extend(rows);
        }
    }
    Ok(out)
}

/// Mean coupled gap `E|W_n - Wbar_n|` per (n, beta), the universality
/// statistic: both masses come from the same Gaussian draws, so the gap is
/// the in-coupling L1 distance.
pub fn universality_gap(config: &ExperimentConfig) -> Result<ScanResult> {
    config.validate()?;
    let hash = config_hash(config);
    let seed = config.replica_seed_lane(LANE_UNIVERSALITY);
    let d = config.model.d;
    let beta_c = critical_constants(d as f64)?.beta_c;
    let ci = config.ensemble.ci_level;

    if !config.estimator.override_guards {
        for &beta in &config.model.betas {
            if beta >= beta_c {
                return Err(Error::BetaAboveCritical { beta, beta_c });
            }
        }
        let probe = config.model.profile.build(*config.model.ns.last().unwrap())?;
        if probe.is_constant_one() {
            return Err(Error::GapIdenticallyZero);
        }
    }

    let mut rows = Vec::new();
    for &n in &config.model.ns {
        let profile = config.model.profile.build(n)?;
        for &beta in &config.model.betas {
            let samples = par_replicas(config.ensemble.replicas, |r| {
                let out = partition_pair(&dary_tree(d, n, seed, r)?, beta, &profile, None)?;
                let w = out.log_w.to_linear();
                let wbar = out.log_wbar.to_linear();
                Ok([(w - wbar).abs(), out.log_w.0, out.log_wbar.0])
            })?;
            for (idx, stat) in ["gap_abs", "log_w", "log_wbar"].iter().enumerate() {
                let vals: Vec<f64> = samples.iter().map(|s| s[idx]).collect();
                rows.push(ScanRow::from_summary(
                    "universality",
                    n,
                    beta,
                    stat,
                    &summarize(&vals, ci),
                    config.ensemble.base_seed,
                    hash,
                ));
            }
        }
    }
    Ok(ScanResult {
        experiment: "universality".into(),
        rows,
        config_hash: hash,
        base_seed: config.ensemble.base_seed,
    })
}

/// Exact second moment next to its size-biased Monte Carlo estimate per
/// (n, beta), plus a bounded/diverging classification of each beta from the
/// per-generation growth of the exact series across the two largest depths.
pub fn phase_scan_l2(config: &ExperimentConfig) -> Result<ScanResult> {
    config.validate()?;
    let hash = config_hash(config);
    let seed = config.replica_seed_lane(LANE_PHASE_SCAN);
    let d = config.model.d;
    let ci = config.ensemble.ci_level;

    let mut rows = Vec::new();
    for &n in &config.model.ns {
        let profile = config.model.profile.build(n)?;
        for &beta in &config.model.betas {
            let exact = exact_second_moment_dary(d, n, beta, &profile)?;
            rows.push(ScanRow::from_value(
                "phase_scan_l2",
                n,
                beta,
                "m2_exact",
                exact.to_linear(),
                config.ensemble.base_seed,
                hash,
            ));
            let samples = par_replicas(config.ensemble.replicas, |r| {
                Ok(
                    spine_second_moment_mc(&dary_tree(d, n, seed, r)?, beta, &profile)?
                        .to_linear(),
                )
            })?;
            rows.push(ScanRow::from_summary(
                "phase_scan_l2",
                n,
                beta,
                "m2_mc",
                &summarize(&samples, ci),
                config.ensemble.base_seed,
                hash,
            ));
        }
    }
    if config.model.ns.len() >= 2 {
        let n_hi = *config.model.ns.last().unwrap();
        let n_lo = config.model.ns[config.model.ns.len() - 2];
        for &beta in &config.model.betas {
            let growth = second_moment_growth(d, n_lo, n_hi, beta, &config.model.profile)?;
            let diverging = growth > config.estimator.growth_threshold.ln();
            rows.push(ScanRow::from_value(
                "phase_scan_l2",
                n_hi,
                beta,
                "m2_log_growth_per_gen",
                growth,
                config.ensemble.base_seed,
                hash,
            ));
            rows.push(ScanRow::from_value(
                "phase_scan_l2",
                n_hi,
                beta,
                "l2_diverging",
                f64::from(diverging),
                config.ensemble.base_seed,
                hash,
            ));
        }
    }
    Ok(ScanResult {
        experiment: "phase_scan_l2".into(),
        rows,
        config_hash: hash,
        base_seed: config.ensemble.base_seed,
    })
}

fn second_moment_growth(
    d: u32,
    n_lo: u32,
    n_hi: u32,
    beta: f64,
    profile: &super::config::ProfileSpec,
) -> Result<f64> {
    let hi = exact_second_moment_dary(d, n_hi, beta, &profile.build(n_hi)?)?;
    let lo = exact_second_moment_dary(d, n_lo, beta, &profile.build(n_lo)?)?;
    Ok((hi.0 - lo.0) / (n_hi - n_lo) as f64)
}

/// Bisection bracket for the L2 transition temperature.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct Beta2Bracket {
    /// Largest beta classified bounded.
    pub lo: f64,
    /// Smallest beta classified diverging.
    pub hi: f64,
    /// Bracket midpoint, the estimate of beta_2.
    pub mid: f64,
}

/// Locates the bounded/diverging transition of the exact homogeneous
/// second-moment series by bisection on the growth-ratio classification
/// between the two largest depths of `ns`.
pub fn l2_beta2_bracket(d: u32, ns: &[u32], growth_threshold: f64) -> Result<Beta2Bracket> {
    if ns.len() < 2 {
        return Err(Error::InvalidConfig(
            "beta_2 bracket needs at least two depths".into(),
        ));
    }
    let n_hi = *ns.last().unwrap();
    let n_lo = ns[ns.len() - 2];
    let spec = super::config::ProfileSpec::Constant;
    let log_thresh = growth_threshold.ln();
    let classify = |beta: f64| -> Result<bool> {
        Ok(second_moment_growth(d, n_lo, n_hi, beta, &spec)? > log_thresh)
    };
    let mut lo = 1e-6;
    let mut hi = 2.0 * (2.0 * (d as f64).ln()).sqrt();
    if classify(lo)? || !classify(hi)? {
        return Err(Error::InvalidConfig(
            "bisection endpoints do not bracket the transition".into(),
        ));
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if classify(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Beta2Bracket {
        lo,
        hi,
        mid: 0.5 * (lo + hi),
    })
}

/// Analytic per-generation decay rate of the homogeneous fractional moment:
/// `E[W_n^a] <= e^{n rate}` with
/// `rate = (1-a) ln d - a beta^2/2 + a^2 beta^2/2`.
pub fn fractional_moment_rate(a: f64, beta: f64, d: f64) -> f64 {
    (1.0 - a) * d.ln() - 0.5 * a * beta * beta + 0.5 * a * a * beta * beta
}

/// Minimizer of the rate over a, `1/2 + ln d / beta^2`, clipped into (0,1).
pub fn optimal_fractional_a(beta: f64, d: f64) -> f64 {
    (0.5 + d.ln() / (beta * beta)).clamp(1e-9, 1.0 - 1e-9)
}

/// Replica means of `W_n^a` and `Wbar_n^a` per (n, beta) with the analytic
/// rate and optimal exponent, plus the truncated-moment check at the
/// decomposition depth n1 when `2a <= 1`: the Monte Carlo mean of
/// `(Wbar_n^{n1})^{2a}` against its closed-form bound
/// `e^{n1 (1-2a) ln d - a beta^2 S_{n1} + 2 a^2 beta^2 n1}`.
pub fn fractional_moment_scan(config: &ExperimentConfig) -> Result<ScanResult> {
    config.validate()?;
    let hash = config_hash(config);
    let seed = config.replica_seed_lane(LANE_FRACTIONAL);
    let d = config.model.d;
    let a = config.estimator.fractional_a;
    let ci = config.ensemble.ci_level;
    let n1 = config.estimator.n1;

    let mut rows = Vec::new();
    for &n in &config.model.ns {
        let profile = config.model.profile.build(n)?;
        for &beta in &config.model.betas {
            let samples = par_replicas(config.ensemble.replicas, |r| {
                let out = partition_pair(&dary_tree(d, n, seed, r)?, beta, &profile, None)?;
                Ok([(a * out.log_w.0).exp(), (a * out.log_wbar.0).exp()])
            })?;
            for (idx, stat) in ["w_frac", "wbar_frac"].iter().enumerate() {
                let vals: Vec<f64> = samples.iter().map(|s| s[idx]).collect();
                rows.push(ScanRow::from_summary(
                    "fractional",
                    n,
                    beta,
                    stat,
                    &summarize(&vals, ci),
                    config.ensemble.base_seed,
                    hash,
                ));
            }
            rows.push(ScanRow::from_value(
                "fractional",
                n,
                beta,
                "rate_per_gen",
                fractional_moment_rate(a, beta, d as f64),
                config.ensemble.base_seed,
                hash,
            ));
            rows.push(ScanRow::from_value(
                "fractional",
                n,
                beta,
                "a_star",
                optimal_fractional_a(beta, d as f64),
                config.ensemble.base_seed,
                hash,
            ));

            if 2.0 * a <= 1.0 && n1 >= 1 && n1 <= n {
                let sliced =
                    VarianceProfile::from_grid(profile.values()[..n1 as usize].to_vec())?;
                let s_n1 = sliced.prefix_sum(n1);
                let samples = par_replicas(config.ensemble.replicas, |r| {
                    let out =
                        partition_pair(&dary_tree(d, n1, seed, r)?, beta, &sliced, None)?;
                    Ok((2.0 * a * out.log_wbar.0).exp())
                })?;
                rows.push(ScanRow::from_summary(
                    "fractional",
                    n,
                    beta,
                    "trunc_frac_mc",
                    &summarize(&samples, ci),
                    config.ensemble.base_seed,
                    hash,
                ));
                let log_bound = n1 as f64 * (1.0 - 2.0 * a) * (d as f64).ln()
                    - a * beta * beta * s_n1
                    + 2.0 * a * a * beta * beta * n1 as f64;
                rows.push(ScanRow::from_value(
                    "fractional",
                    n,
                    beta,
                    "trunc_frac_bound",
                    log_bound.exp(),
                    config.ensemble.base_seed,
                    hash,
                ));
            }
        }
    }
    Ok(ScanResult {
        experiment: "fractional".into(),
        rows,
        config_hash: hash,
        base_seed: config.ensemble.base_seed,
    })
}

/// One cell of the concavity comparison.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct KahaneCell {
    pub n: u32,
    pub beta: f64,
    pub mean_inhom: f64,
    pub mean_hom: f64,
    /// `E[(Wbar)^a] - E[(W)^a]`; the comparison predicts this nonnegative.
    pub diff: f64,
    pub diff_stderr: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct KahaneReport {
    pub cells: Vec<KahaneCell>,
    pub pass: bool,
    pub rows: Vec<ScanRow>,
    pub config_hash: u64,
}

/// Concave-moment comparison: with `f <= 1` pointwise the weighted field has
/// the smaller covariance, so `E[(Wbar_n)^a] >= E[(W_n)^a]`. The two
/// expectations are estimated from independent ensembles (the inequality is
/// between laws, not couplings); pass means the difference stays above
/// `-4 stderr`.
pub fn kahane_check(config: &ExperimentConfig) -> Result<KahaneReport> {
    config.validate()?;
    let hash = config_hash(config);
    let seed_inhom = config.replica_seed_lane(LANE_KAHANE_INHOM);
    let seed_hom = config.replica_seed_lane(LANE_KAHANE_HOM);
    let d = config.model.d;
    let a = config.estimator.fractional_a;
    let ci = config.ensemble.ci_level;

    let mut rows = Vec::new();
    let mut cells = Vec::new();
    for &n in &config.model.ns {
        let profile = config.model.profile.build(n)?;
        if let Some(bad) = profile.values().iter().position(|&f| f > 1.0) {
            return Err(Error::KernelDominationViolated(bad + 1));
        }
        let constant = VarianceProfile::constant_one(n);
        for &beta in &config.model.betas {
            let inhom = par_replicas(config.ensemble.replicas, |r| {
                let out =
                    partition_pair(&dary_tree(d, n, seed_inhom, r)?, beta, &profile, None)?;
                Ok((a * out.log_wbar.0).exp())
            })?;
            let hom = par_replicas(config.ensemble.replicas, |r| {
                let out =
                    partition_pair(&dary_tree(d, n, seed_hom, r)?, beta, &constant, None)?;
                Ok((a * out.log_w.0).exp())
            })?;
            let s_inhom = summarize(&inhom, ci);
            let s_hom = summarize(&hom, ci);
            let diff = s_inhom.mean() - s_hom.mean();
            let diff_stderr =
                (s_inhom.stderr().powi(2) + s_hom.stderr().powi(2)).sqrt();
            let pass = diff >= -4.0 * diff_stderr;
            rows.push(ScanRow::from_summary(
                "kahane", n, beta, "wbar_frac", &s_inhom, config.ensemble.base_seed, hash,
            ));
            rows.push(ScanRow::from_summary(
                "kahane", n, beta, "w_frac", &s_hom, config.ensemble.base_seed, hash,
            ));
            let mut diff_row = ScanRow::from_value(
                "kahane",
                n,
                beta,
                "frac_diff",
                diff,
                config.ensemble.base_seed,
                hash,
            );
            diff_row.stderr = diff_stderr;
            diff_row.ci_lo = diff - 4.0 * diff_stderr;
            diff_row.ci_hi = diff + 4.0 * diff_stderr;
            diff_row.count = config.ensemble.replicas;
            rows.push(diff_row);
            cells.push(KahaneCell {
                n,
                beta,
                mean_inhom: s_inhom.mean(),
                mean_hom: s_hom.mean(),
                diff,
                diff_stderr,
                pass,
            });
        }
    }
    let pass = cells.iter().all(|c| c.pass);
    Ok(KahaneReport {
        cells,
        pass,
        rows,
        config_hash: hash,
    })
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct CriticalFitReport {
    pub beta_c: f64,
    /// Per-depth medians of `Wbar_n` at the critical temperature.
    pub medians: Vec<(u32, f64)>,
    /// Per-depth medians of `sqrt(n) Wbar_n` (stabilization diagnostic).
    pub diagnostic: Vec<(u32, f64)>,
    pub fit: FitResult,
    pub rows: Vec<ScanRow>,
    pub config_hash: u64,
}

/// Fits `log median(Wbar_n)` against `log n` at the critical temperature and
/// reports the stabilization diagnostic `median(sqrt(n) Wbar_n)` per depth.
/// Requires at least 3 depths with `n_max >= 3 n_min`; `betas` must be empty
/// or pinned to `beta_c`.
pub fn critical_decay_fit(config: &ExperimentConfig) -> Result<CriticalFitReport> {
    config.validate()?;
    let hash = config_hash(config);
    let seed = config.replica_seed_lane(LANE_CRITICAL);
    let d = config.model.d;
    let beta_c = critical_constants(d as f64)?.beta_c;
    let ci = config.ensemble.ci_level;

    for &beta in &config.model.betas {
        if (beta - beta_c).abs() > 1e-9 * beta_c {
            return Err(Error::BetaNotCritical {
                expected: beta_c,
                got: beta,
            });
        }
    }
    let ns = &config.model.ns;
    if ns.len() < 3 || *ns.last().unwrap() < 3 * ns[0] {
        return Err(Error::NListTooShort);
    }

    let mut rows = Vec::new();
    let mut medians = Vec::new();
    let mut diagnostic = Vec::new();
    for &n in ns {
        let profile = config.model.profile.build(n)?;
        let samples = par_replicas(config.ensemble.replicas, |r| {
            let out = partition_pair(&dary_tree(d, n, seed, r)?, beta_c, &profile, None)?;
            Ok(out.log_wbar.to_linear())
        })?;
        let summary = summarize(&samples, ci);
        let median = summary.median().expect("nonempty ensemble");
        medians.push((n, median));
        let diag = (n as f64).sqrt() * median;
        diagnostic.push((n, diag));
        rows.push(ScanRow::from_summary(
            "critical_fit",
            n,
            beta_c,
            "wbar_linear",
            &summary,
            config.ensemble.base_seed,
            hash,
        ));
        rows.push(ScanRow::from_value(
            "critical_fit",
            n,
            beta_c,
            "wbar_median",
            median,
            config.ensemble.base_seed,
            hash,
        ));
        rows.push(ScanRow::from_value(
            "critical_fit",
            n,
            beta_c,
            "seneta_heyde_median",
            diag,
            config.ensemble.base_seed,
            hash,
        ));
    }

    let pts: Vec<(u64, f64)> = medians.iter().map(|&(n, m)| (n as u64, m)).collect();
    let fit = crate::numerics::fit_loglog(&pts)?;
    let n_last = *ns.last().unwrap();
    for (stat, value) in [
        ("fit_slope", fit.slope),
        ("fit_stderr_slope", fit.stderr_slope),
        ("fit_r_squared", fit.r_squared),
    ] {
        rows.push(ScanRow::from_value(
            "critical_fit",
            n_last,
            beta_c,
            stat,
            value,
            config.ensemble.base_seed,
            hash,
        ));
    }

    Ok(CriticalFitReport {
        beta_c,
        medians,
        diagnostic,
        fit,
        rows,
        config_hash: hash,
    })
}

#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct GoodEnvCell {
    pub n: u32,
    pub beta: f64,
    pub n0: u32,
    /// Mean of `K_n = W_n - J_n` (homogeneous barrier remainder).
    pub k_mean: f64,
    pub k_stderr: f64,
    pub k_ci: (f64, f64),
    /// Mean of `J_n / W_n`.
    pub ratio_mean: f64,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct GoodEnvReport {
    pub cells: Vec<GoodEnvCell>,
    /// Whether `E[K_n]` is nonincreasing along the scanned n0 list for every
    /// (n, beta).
    pub monotone_in_n0: bool,
    /// Whether the confidence intervals of the first and last n0 separate.
    pub ci_separated: bool,
    pub rows: Vec<ScanRow>,
    pub config_hash: u64,
}

/// Barrier-mass scan: per (n, beta, n0), the replica means of the excluded
/// mass `K_n = W_n - J_n` and of the retained ratio `J_n / W_n`, for both
/// the homogeneous and the profile-weighted channels. Warns when alpha lies
/// outside `(beta, 2 beta)`.
pub fn good_env_mass(config: &ExperimentConfig) -> Result<GoodEnvReport> {
    config.validate()?;
    let hash = config_hash(config);
    let seed = config.replica_seed_lane(LANE_GOOD_ENV);
    let d = config.model.d;
    let alpha = config.estimator.alpha;
    let ci = config.ensemble.ci_level;
    let n0_list = config
        .estimator
        .n0_list
        .clone()
        .unwrap_or_else(|| vec![config.estimator.n0]);
    if n0_list.is_empty() {
        return Err(Error::InvalidConfig("empty n0 list".into()));
    }

    let mut rows = Vec::new();
    let mut cells = Vec::new();
    let mut monotone = true;
    let mut separated = true;
    for &n in &config.model.ns {
        let profile = config.model.profile.build(n)?;
        for &beta in &config.model.betas {
            if !(beta < alpha && alpha < 2.0 * beta) {
                log::warn!(
                    "good-env barrier alpha = {alpha} outside (beta, 2 beta) = \
                     ({beta}, {}); estimates remain valid but leave the regime the \
                     L2 bound needs",
                    2.0 * beta
                );
            }
            let mut extremes: Vec<(f64, f64)> = Vec::new();
            let mut prev_k: Option<f64> = None;
            for &n0 in &n0_list {
                let barrier = BarrierSpec::new(alpha, n0)?;
                let samples = par_replicas(config.ensemble.replicas, |r| {
                    let out = partition_pair(
                        &dary_tree(d, n, seed, r)?,
                        beta,
                        &profile,
                        Some(&barrier),
                    )?;
                    let w = out.log_w.to_linear();
                    let j = out.log_j.to_linear();
                    let wbar = out.log_wbar.to_linear();
                    let jbar = out.log_jbar.to_linear();
                    Ok([w - j, j / w, wbar - jbar, jbar / wbar])
                })?;
                let stats = ["k_mass", "jw_ratio", "kbar_mass", "jbar_wbar_ratio"];
                let mut summaries = Vec::new();
                for (idx, stat) in stats.iter().enumerate() {
                    let vals: Vec<f64> = samples.iter().map(|s| s[idx]).collect();
                    let s = summarize(&vals, ci);
                    rows.push(ScanRow::from_summary(
                        "good_env",
                        n,
                        beta,
                        &format!("{stat}[n0={n0}]"),
                        &s,
                        config.ensemble.base_seed,
                        hash,
                    ));
                    summaries.push(s);
                }
                let k = &summaries[0];
                if let Some(prev) = prev_k {
                    if k.mean() > prev {
                        monotone = false;
                    }
                }
                prev_k = Some(k.mean());
                extremes.push(k.ci());
                cells.push(GoodEnvCell {
                    n,
                    beta,
                    n0,
                    k_mean: k.mean(),
                    k_stderr: k.stderr(),
                    k_ci: k.ci(),
                    ratio_mean: summaries[1].mean(),
                });
            }
            if n0_list.len() >= 2 {
                let first = extremes.first().unwrap();
                let last = extremes.last().unwrap();
                // K decreases with n0: the last CI must sit below the first
                if last.1 >= first.0 {
                    separated = false;
                }
            }
        }
    }
    Ok(GoodEnvReport {
        cells,
        monotone_in_n0: monotone,
        ci_separated: separated,
        rows,
        config_hash: hash,
    })
}

/// CREM scan: replica mean of `Z_n` (unit by construction) next to the exact
/// second moment, per (n, beta), under the configured covariance profile.
pub fn crem_scan(config: &ExperimentConfig) -> Result<ScanResult> {
    config.validate()?;
    let hash = config_hash(config);
    let seed = config.replica_seed_lane(LANE_CREM);
    let ci = config.ensemble.ci_level;

    let mut rows = Vec::new();
    for &n in &config.model.ns {
        let profile = match &config.model.crem {
            Some(spec) => spec.build(n)?,
            None => crate::crem::CremProfile::identity(n),
        };
        for &beta in &config.model.betas {
            let samples = par_replicas(config.ensemble.replicas, |r| {
                Ok(crem_partition_replica(n, beta, &profile, seed, r)?.to_linear())
            })?;
            rows.push(ScanRow::from_summary(
                "crem",
                n,
                beta,
                "z_linear",
                &summarize(&samples, ci),
                config.ensemble.base_seed,
                hash,
            ));
            rows.push(ScanRow::from_value(
                "crem",
                n,
                beta,
                "m2_exact",
                crem_second_moment(n, beta, &profile)?.to_linear(),
                config.ensemble.base_seed,
                hash,
            ));
        }
    }
    Ok(ScanResult {
        experiment: "crem".into(),
        rows,
        config_hash: hash,
        base_seed: config.ensemble.base_seed,
    })
}

/// Cascade-measure normalization scan: replica mean of the total mass of
/// `mu_m` per beta at the configured depth (expected 1).
pub fn cascade_mass_scan(config: &ExperimentConfig) -> Result<ScanResult> {
    config.validate()?;
    let hash = config_hash(config);
    let seed = config.replica_seed_lane(LANE_CASCADE);
    let ci = config.ensemble.ci_level;
    let m = config.estimator.cascade_depth;

    let mut rows = Vec::new();
    for &beta in &config.model.betas {
        let samples = par_replicas(config.ensemble.replicas, |r| {
            Ok(cascade_measure_replica(m, beta, seed, r)?
                .total_mass()
                .to_linear())
        })?;
        rows.push(ScanRow::from_summary(
            "cascade",
            m,
            beta,
            "total_mass",
            &summarize(&samples, ci),
            config.ensemble.base_seed,
            hash,
        ));
    }
    Ok(ScanResult {
        experiment: "cascade".into(),
        rows,
        config_hash: hash,
        base_seed: config.ensemble.base_seed,
    })
}
