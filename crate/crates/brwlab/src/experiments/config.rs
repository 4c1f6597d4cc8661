//! Experiment configuration: one JSON document, hashed canonically for
//! provenance.

use crate::brw::VarianceProfile;
use crate::crem::CremProfile;
use crate::tree::{OffspringLaw, SurvivalMode};
use crate::{Error, Result};

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub ensemble: EnsembleConfig,
    pub estimator: EstimatorConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelConfig::default(),
            ensemble: EnsembleConfig::default(),
            estimator: EstimatorConfig::default(),
        }
    }
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Branching factor for the deterministic d-ary experiments.
    pub d: u32,
    /// Offspring law for distributional (`simulate`) runs; the heavy scan
    /// experiments always use the deterministic d-ary tree.
    pub offspring: OffspringLaw,
    pub survival: SurvivalMode,
    /// Depths to scan, strictly increasing.
    pub ns: Vec<u32>,
    pub betas: Vec<f64>,
    pub profile: ProfileSpec,
    /// CREM covariance profile; `None` means A(x) = x.
    pub crem: Option<CremSpec>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 2,
            offspring: OffspringLaw::DeterministicD { d: 2 },
            survival: SurvivalMode::Conditioned,
            ns: vec![8],
            betas: vec![0.5],
            profile: ProfileSpec::Constant,
            crem: None,
        }
    }
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub replicas: u64,
    pub base_seed: u64,
    pub ci_level: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            replicas: 1000,
            base_seed: 0x5EED,
            ci_level: 0.95,
        }
    }
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Fractional-moment exponent a in (0,1]; a = 1 is allowed as the
    /// reference boundary where E[W^a] = 1.
    pub fractional_a: f64,
    /// Barrier slope alpha.
    pub alpha: f64,
    /// Barrier start generation.
    pub n0: u32,
    /// Good-environment runs scan these n0 values; defaults to `[n0]`.
    pub n0_list: Option<Vec<u32>>,
    /// Decomposition depth for the truncated fractional-moment bound.
    pub n1: u32,
    /// Per-generation growth factor above which the second-moment series is
    /// classified as diverging.
    pub growth_threshold: f64,
    /// Lifts the beta < beta_c and non-constant-profile guards on the
    /// universality experiment.
    pub override_guards: bool,
    /// Depth of the cascade measure runs.
    pub cascade_depth: u32,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            fractional_a: 0.5,
            alpha: 1.2,
            n0: 2,
            n0_list: None,
            n1: 4,
            growth_threshold: 1.05,
            override_guards: false,
            cascade_depth: 12,
        }
    }
}

/// Variance-profile choices, built per depth (the grid depends on n).
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileSpec {
    Constant,
    Linear,
    Table { knots: Vec<(f64, f64)> },
    Grid { values: Vec<f64> },
}

impl ProfileSpec {
    pub fn build(&self, n: u32) -> Result<VarianceProfile> {
        match self {
            ProfileSpec::Constant => Ok(VarianceProfile::constant_one(n)),
            ProfileSpec::Linear => Ok(VarianceProfile::linear_decreasing(n)),
            ProfileSpec::Table { knots } => VarianceProfile::from_table(n, knots),
            ProfileSpec::Grid { values } => {
                if values.len() != n as usize {
                    return Err(Error::InvalidProfile(format!(
                        "grid length {} does not match depth {n}",
                        values.len()
                    )));
                }
                VarianceProfile::from_grid(values.clone())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CremSpec {
    pub knots: Vec<(f64, f64)>,
    pub a_prime_0: f64,
}

impl CremSpec {
    pub fn build(&self, n: u32) -> Result<CremProfile> {
        CremProfile::from_table(n, &self.knots, self.a_prime_0)
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ensemble.replicas < 1 {
            return Err(Error::InvalidConfig("replicas must be >= 1".into()));
        }
        if !(self.ensemble.ci_level > 0.0 && self.ensemble.ci_level < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "ci_level {} outside (0,1)",
                self.ensemble.ci_level
            )));
        }
        if self.model.ns.is_empty() {
            return Err(Error::InvalidConfig("ns must be nonempty".into()));
        }
        if self.model.ns.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "ns must be strictly increasing".into(),
            ));
        }
        if self.model.betas.iter().any(|b| *b < 0.0 || !b.is_finite()) {
            return Err(Error::InvalidConfig(
                "betas must be finite and nonnegative".into(),
            ));
        }
        if self.model.d < 2 {
            return Err(Error::InvalidConfig(format!(
                "d = {} must be at least 2",
                self.model.d
            )));
        }
        let a = self.estimator.fractional_a;
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "fractional_a {a} outside (0,1]"
            )));
        }
        if !(self.estimator.growth_threshold > 1.0) {
            return Err(Error::InvalidConfig(
                "growth_threshold must exceed 1".into(),
            ));
        }
        self.model.offspring.validate()?;
        Ok(())
    }

    /// Seed for the r-th replica of experiment substream `lane`. Lanes keep
    /// experiments that need independent ensembles (the concavity
    /// comparison) statistically disjoint under one base seed.
    pub fn replica_seed_lane(&self, lane: u64) -> u64 {
        crate::numerics::SplitMix::replica_seed(self.ensemble.base_seed, lane)
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over the canonical JSON encoding of the config (object keys
/// sorted), so the hash is stable under field reordering in the source file.
pub fn config_hash(config: &ExperimentConfig) -> u64 {
    let value = serde_json::to_value(config).expect("config serializes");
    let canonical = value.to_string();
    let mut h = FNV_OFFSET;
    for &b in canonical.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}
