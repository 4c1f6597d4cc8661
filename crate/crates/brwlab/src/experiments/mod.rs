//! Replica-ensemble experiment runners: phase scans, universality gap,
//! fractional moments, concavity comparison, critical-decay fit, and
//! good-environment mass, each reduced to statistics with confidence
//! intervals.
//!
//! Replicas are computed in parallel (rayon) but always reduced in replica
//! order, so a given `ExperimentConfig` produces bitwise-identical results
//! for any worker count or schedule.

mod config;
mod runners;

pub use config::{
    config_hash, CremSpec, EnsembleConfig, EstimatorConfig, ExperimentConfig, ModelConfig,
    ProfileSpec,
};
pub use runners::{
    cascade_mass_scan, crem_scan, critical_decay_fit, fractional_moment_rate,
    fractional_moment_scan, good_env_mass, kahane_check, l2_beta2_bracket, optimal_fractional_a,
    phase_scan_l2, simulate_replicas, universality_gap, Beta2Bracket, CriticalFitReport,
    GoodEnvReport, KahaneReport,
};

use crate::numerics::EnsembleSummary;

/// One scan cell: a statistic of the replica ensemble at a given (n, beta).
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct ScanRow {
    pub experiment: String,
    pub n: u32,
    pub beta: f64,
    pub statistic: String,
    pub mean: f64,
    pub stderr: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub count: u64,
    pub seed: u64,
    pub config_hash: u64,
}

impl ScanRow {
    /// The fixed CSV header every scan file starts with.
    pub const CSV_HEADER: &'static str =
        "experiment,n,beta,statistic,mean,stderr,ci_lo,ci_hi,count,seed,config_hash";

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{:016x}",
            self.experiment,
            self.n,
            self.beta,
            self.statistic,
            self.mean,
            self.stderr,
            self.ci_lo,
            self.ci_hi,
            self.count,
            self.seed,
            self.config_hash
        )
    }

    fn from_summary(
        experiment: &str,
        n: u32,
        beta: f64,
        statistic: &str,
        summary: &EnsembleSummary,
        seed: u64,
        config_hash: u64,
    ) -> Self {
        let (ci_lo, ci_hi) = summary.ci();
        ScanRow {
            experiment: experiment.to_string(),
            n,
            beta,
            statistic: statistic.to_string(),
            mean: summary.mean(),
            stderr: summary.stderr(),
            ci_lo,
            ci_hi,
            count: summary.count(),
            seed,
            config_hash,
        }
    }

    /// A deterministic scalar (exact formula value, fit output): no spread.
    fn from_value(
        experiment: &str,
        n: u32,
        beta: f64,
        statistic: &str,
        value: f64,
        seed: u64,
        config_hash: u64,
    ) -> Self {
        ScanRow {
            experiment: experiment.to_string(),
            n,
            beta,
            statistic: statistic.to_string(),
            mean: value,
            stderr: 0.0,
            ci_lo: value,
            ci_hi: value,
            count: 1,
            seed,
            config_hash,
        }
    }
}

/// Rows plus provenance for one experiment run.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct ScanResult {
    pub experiment: String,
    pub rows: Vec<ScanRow>,
    pub config_hash: u64,
    pub base_seed: u64,
}
