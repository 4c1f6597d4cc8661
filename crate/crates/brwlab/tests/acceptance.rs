//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured values once its assertions hold.
//!
//! The checks combine exact-formula oracles, Monte Carlo with confidence
//! intervals, and trend checks; tolerances are fixed here, not tuned at run
//! time. The heavy ensembles (criteria 4, 6, 7) run minutes to hours on a
//! single core.

use brwlab::brw::{
    critical_constants, partition_pair, tilted_pair_walk, BarrierSpec, VarianceProfile,
};
use brwlab::crem::{cascade_measure, crem_beta_c, crem_partition, CremProfile};
use brwlab::experiments::{
    cascade_mass_scan, critical_decay_fit, fractional_moment_rate, fractional_moment_scan,
    good_env_mass, kahane_check, l2_beta2_bracket, phase_scan_l2, universality_gap,
    ExperimentConfig, ProfileSpec, ScanRow,
};
use brwlab::tree::{OffspringLaw, SurvivalMode, TreeStream};

fn base_config() -> ExperimentConfig {
    let mut config = ExperimentConfig::default();
    config.ensemble.base_seed = 0xACCE_2026;
    config
}

fn find_row<'a>(rows: &'a [ScanRow], n: u32, beta: f64, stat: &str) -> &'a ScanRow {
    rows.iter()
        .find(|r| r.n == n && (r.beta - beta).abs() < 1e-12 && r.statistic == stat)
        .unwrap_or_else(|| panic!("missing row n={n} beta={beta} stat={stat}"))
}

#[test]
fn criterion_01_critical_constants() {
    let c = critical_constants(2.0).unwrap();
    assert!(
        (c.beta_c - 1.1774100226).abs() < 1e-9,
        "beta_c(2) = {}",
        c.beta_c
    );
    assert!(
        (c.beta_2 - 0.8325546112).abs() < 1e-9,
        "beta_2(2) = {}",
        c.beta_2
    );
    println!(
        "criterion 01 PASS: beta_c(2) = {:.12}, beta_2(2) = {:.12} within 1e-9",
        c.beta_c, c.beta_2
    );
}

#[test]
fn criterion_02_second_moment_oracle() {
    let mut config = base_config();
    config.model.ns = vec![1, 4, 8];
    config.model.betas = vec![0.3, 0.7, 1.0];
    config.ensemble.replicas = 100_000;
    for (label, spec) in [
        ("constant", ProfileSpec::Constant),
        ("linear", ProfileSpec::Linear),
    ] {
        config.model.profile = spec;
        let result = phase_scan_l2(&config).unwrap();
        for &n in &config.model.ns {
            for &beta in &config.model.betas {
                let exact = find_row(&result.rows, n, beta, "m2_exact").mean;
                let mc = find_row(&result.rows, n, beta, "m2_mc");
                let diff = (mc.mean - exact).abs();
                assert!(
                    diff <= 4.0 * mc.stderr,
                    "{label} n={n} beta={beta}: |{} - {exact}| > 4 x {}",
                    mc.mean,
                    mc.stderr
                );
                println!(
                    "criterion 02 PASS: {label} n={n} beta={beta}: MC {:.5} vs exact {:.5} \
                     (diff {:.2e} <= 4 x {:.2e})",
                    mc.mean, exact, diff, mc.stderr
                );
            }
        }
    }
}

#[test]
fn criterion_03_beta2_bracket() {
    for d in [2u32, 3] {
        let bracket = l2_beta2_bracket(d, &[8, 16, 24], 1.05).unwrap();
        let exact = (d as f64).ln().sqrt();
        let rel = (bracket.mid - exact).abs() / exact;
        assert!(
            rel < 0.05,
            "d={d}: bracket mid {} vs sqrt(ln d) {exact} ({:.2}%)",
            bracket.mid,
            100.0 * rel
        );
        println!(
            "criterion 03 PASS: d={d}: beta_2 bracket mid {:.6} vs sqrt(ln d) {:.6} ({:.2}% off)",
            bracket.mid,
            exact,
            100.0 * rel
        );
    }
}

#[test]
fn criterion_04_universality_gap() {
    let mut config = base_config();
    config.model.ns = vec![8, 16, 24];
    config.model.betas = vec![0.9];
    config.model.profile = ProfileSpec::Linear;
    config.ensemble.replicas = 10_000;
    let result = universality_gap(&config).unwrap();

    let rows: Vec<&ScanRow> = config
        .model
        .ns
        .iter()
        .map(|&n| find_row(&result.rows, n, 0.9, "gap_abs"))
        .collect();
    for pair in rows.windows(2) {
        assert!(
            pair[1].mean < pair[0].mean,
            "gap not strictly decreasing: n={} mean {} vs n={} mean {}",
            pair[0].n,
            pair[0].mean,
            pair[1].n,
            pair[1].mean
        );
    }
    let first = rows.first().unwrap();
    let last = rows.last().unwrap();
    assert!(
        last.ci_hi < first.ci_lo,
        "95% CIs overlap: n=8 [{}, {}] vs n=24 [{}, {}]",
        first.ci_lo,
        first.ci_hi,
        last.ci_lo,
        last.ci_hi
    );
    println!(
        "criterion 04 PASS: mean |W - Wbar| strictly decreasing {:.4} > {:.4} > {:.4}; \
         95% CIs separate: [{:.4}, {:.4}] vs [{:.4}, {:.4}]",
        rows[0].mean,
        rows[1].mean,
        rows[2].mean,
        first.ci_lo,
        first.ci_hi,
        last.ci_lo,
        last.ci_hi
    );
}

#[test]
fn criterion_05_strong_disorder_fractional_moment() {
    let a = 0.673;
    let beta = 2.0;
    let rate = fractional_moment_rate(a, beta, 2.0);
    assert!(
        (rate + 0.213).abs() < 1e-3,
        "analytic rate {rate} not about -0.213"
    );

    let mut config = base_config();
    config.model.ns = vec![24];
    config.model.betas = vec![beta];
    config.model.profile = ProfileSpec::Constant;
    config.estimator.fractional_a = a;
    config.estimator.n1 = 0; // no truncated-moment rows needed here
    config.ensemble.replicas = 400;
    let result = fractional_moment_scan(&config).unwrap();
    let row = find_row(&result.rows, 24, beta, "wbar_frac");
    assert!(
        row.mean < 0.05,
        "E[Wbar_24^{a}] = {} not below 0.05",
        row.mean
    );
    println!(
        "criterion 05 PASS: analytic rate {:.4}/generation (e^(24 rate) = {:.4}); \
         MC mean of Wbar_24^{a} = {:.5} < 0.05",
        rate,
        (24.0 * rate).exp(),
        row.mean
    );
}

#[test]
fn criterion_06_critical_decay() {
    for (label, spec) in [
        ("constant", ProfileSpec::Constant),
        ("linear", ProfileSpec::Linear),
    ] {
        let mut config = base_config();
        config.model.ns = vec![8, 12, 16, 20, 24];
        config.model.betas = vec![];
        config.model.profile = spec;
        config.ensemble.replicas = 200;
        let report = critical_decay_fit(&config).unwrap();
        assert!(
            report.fit.slope >= -0.80 && report.fit.slope <= -0.25,
            "{label}: slope {} outside [-0.80, -0.25]",
            report.fit.slope
        );
        let diag: Vec<f64> = report
            .diagnostic
            .iter()
            .filter(|(n, _)| *n >= 16)
            .map(|&(_, v)| v)
            .collect();
        let spread = diag.iter().cloned().fold(f64::MIN, f64::max)
            / diag.iter().cloned().fold(f64::MAX, f64::min);
        assert!(
            spread < 2.0,
            "{label}: sqrt(n) Wbar median spread {spread} not below 2"
        );
        println!(
            "criterion 06 PASS: {label} profile: log-median slope {:.3} in [-0.80, -0.25]; \
             sqrt(n) median spread over n in {{16,20,24}} = {:.3} < 2",
            report.fit.slope, spread
        );
    }
}

#[test]
fn criterion_07_kahane_direction() {
    let mut config = base_config();
    config.model.ns = vec![16];
    config.model.betas = vec![1.0];
    config.model.profile = ProfileSpec::Linear;
    config.estimator.fractional_a = 0.5;
    config.ensemble.replicas = 100_000;
    let report = kahane_check(&config).unwrap();
    assert!(report.pass, "cells: {:?}", report.cells);
    let cell = &report.cells[0];
    println!(
        "criterion 07 PASS: E[(Wbar_16)^0.5] = {:.5} >= E[(W_16)^0.5] - 4se = {:.5} \
         (diff {:+.2e}, 4se {:.2e})",
        cell.mean_inhom,
        cell.mean_hom - 4.0 * cell.diff_stderr,
        cell.diff,
        4.0 * cell.diff_stderr
    );
}

#[test]
fn criterion_08_girsanov_contract() {
    let n = 16;
    let beta = 0.9;
    let profile = VarianceProfile::linear_decreasing(n);
    let barrier = BarrierSpec::new(1.2, 2).unwrap();
    for h in [0u32, 4, 8] {
        let est = tilted_pair_walk(n, h, beta, &profile, &barrier, 200_000, 0x61B5, 0.95).unwrap();
        let want = 2.0 * beta * profile.prefix_sum(h);
        let diff = (est.shared_mean - want).abs();
        assert!(
            diff <= 4.0 * est.shared_stderr,
            "h={h}: shared mean {} vs 2 beta S_h = {want} (4se = {})",
            est.shared_mean,
            4.0 * est.shared_stderr
        );
        println!(
            "criterion 08 PASS: h={h}: tilted shared-segment mean {:.5} vs 2 beta S_h {:.5} \
             (diff {:.2e} <= 4 x {:.2e})",
            est.shared_mean, want, diff, est.shared_stderr
        );
    }
}

#[test]
fn criterion_09_good_environment_mass() {
    let mut config = base_config();
    config.model.ns = vec![16];
    config.model.betas = vec![0.9];
    config.model.profile = ProfileSpec::Constant;
    config.estimator.alpha = 1.2;
    config.estimator.n0_list = Some(vec![2, 6, 12]);
    config.ensemble.replicas = 20_000;
    let report = good_env_mass(&config).unwrap();
    assert!(
        report.monotone_in_n0,
        "E[K] not monotone decreasing: {:?}",
        report.cells
    );
    assert!(
        report.ci_separated,
        "extreme CIs not separated: {:?}",
        report.cells
    );
    let k: Vec<(u32, f64)> = report.cells.iter().map(|c| (c.n0, c.k_mean)).collect();
    println!(
        "criterion 09 PASS: E[K_16] decreasing over n0: {:?}; extreme CIs separated",
        k
    );
}

#[test]
fn criterion_10_crem_reductions() {
    // A(x) = x reproduces the homogeneous binary partition function bitwise
    for (n, beta, seed) in [(8u32, 0.7, 11u64), (12, 1.0, 99)] {
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
        assert_eq!(
            z.0.to_bits(),
            w.0.to_bits(),
            "log Z != log W bitwise at n={n}, beta={beta}"
        );
    }

    // piecewise-linear concave A: E[Z_n] = 1 within 4 stderr at n = 12
    let mut config = base_config();
    config.model.ns = vec![12];
    config.model.betas = vec![0.7];
    config.model.crem = Some(brwlab::experiments::CremSpec {
        knots: vec![(0.0, 0.0), (0.5, 0.75), (1.0, 1.0)],
        a_prime_0: 1.5,
    });
    config.ensemble.replicas = 10_000;
    let result = brwlab::experiments::crem_scan(&config).unwrap();
    let z = find_row(&result.rows, 12, 0.7, "z_linear");
    assert!(
        (z.mean - 1.0).abs() <= 4.0 * z.stderr,
        "E[Z_12] = {} +/- {}",
        z.mean,
        z.stderr
    );

    // identity critical temperature equals the binary beta_c exactly
    let crem_bc = crem_beta_c(&CremProfile::identity(8)).unwrap();
    let bc = critical_constants(2.0).unwrap().beta_c;
    assert_eq!(crem_bc.to_bits(), bc.to_bits());
    println!(
        "criterion 10 PASS: identity CREM bitwise-equal to homogeneous BRW; \
         concave-A E[Z_12] = {:.4} +/- {:.4}; crem_beta_c(identity) = beta_c(2) = {:.6}",
        z.mean, z.stderr, bc
    );
}

#[test]
fn criterion_11_cascade_normalization() {
    let mut config = base_config();
    config.model.betas = vec![0.8];
    config.estimator.cascade_depth = 12;
    config.ensemble.replicas = 10_000;
    let result = cascade_mass_scan(&config).unwrap();
    let mass = find_row(&result.rows, 12, 0.8, "total_mass");
    assert!(
        (mass.mean - 1.0).abs() <= 4.0 * mass.stderr,
        "mean total mass {} +/- {}",
        mass.mean,
        mass.stderr
    );

    // refinement consistency is exact, bit for bit
    let mu = cascade_measure(10, 0.8, 0xCA5C).unwrap();
    for level in (0..10u32).rev() {
        for index in 0..(1u64 << level) {
            let parent = mu.interval_log_mass(level, index);
            let combined = mu
                .interval_log_mass(level + 1, 2 * index)
                .combine(mu.interval_log_mass(level + 1, 2 * index + 1));
            assert_eq!(parent.0.to_bits(), combined.0.to_bits());
        }
    }
    println!(
        "criterion 11 PASS: mean cascade mass {:.4} +/- {:.4} (10^4 replicas, m=12, beta=0.8); \
         refinement identity exact at every level",
        mass.mean, mass.stderr
    );
}

#[test]
fn criterion_12_reproducibility() {
    // library level: identical config, bitwise-identical rows
    let mut config = base_config();
    config.model.ns = vec![4, 6];
    config.model.betas = vec![0.8];
    config.model.profile = ProfileSpec::Linear;
    config.ensemble.replicas = 500;
    let a = universality_gap(&config).unwrap();
    let b = universality_gap(&config).unwrap();
    assert_eq!(a.rows.len(), b.rows.len());
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert_eq!(x.to_csv_line(), y.to_csv_line());
    }

    // CLI level: byte-identical CSV across reruns and worker counts
    let bin = env!("CARGO_BIN_EXE_brwlab");
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    let config_path = dir.join("config.json");
    std::fs::write(
        &config_path,
        r#"{
            "model": {"ns": [4, 6], "betas": [0.8], "profile": {"kind": "linear"}},
            "ensemble": {"replicas": 300, "base_seed": 7}
        }"#,
    )
    .unwrap();
    let run = |out: &std::path::Path, workers: &str| {
        let status = std::process::Command::new(bin)
            .args([
                "universality",
                "--config",
                config_path.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--workers",
                workers,
            ])
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(out).unwrap()
    };
    let first = run(&dir.join("a.csv"), "1");
    let second = run(&dir.join("b.csv"), "1");
    let third = run(&dir.join("c.csv"), "3");
    assert_eq!(first, second, "rerun CSV bytes differ");
    assert_eq!(first, third, "worker-count change alters CSV bytes");
    println!(
        "criterion 12 PASS: identical config reproduces identical rows (library bitwise, \
         CLI byte-identical across reruns and worker counts)"
    );
}
