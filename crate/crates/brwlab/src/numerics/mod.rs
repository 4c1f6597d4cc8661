//! Deterministic random-number generation, log-space arithmetic, streaming
//! statistics, and least-squares fitting shared by all other modules.
//!
//! All partition masses are carried as natural logarithms ([`LogWeight`]);
//! no linear-space partition value is ever materialized internally, since
//! `exp(beta * H)` overflows double precision near `beta * H ~ 700` while the
//! experiments push `beta * n` well past that.

mod fit;
mod rng;
mod stats;

pub use fit::{fit_loglog, FitResult};
pub use rng::{gaussian_at, inverse_normal_cdf, SplitKey, SplitMix, Stream};
pub use stats::{EnsembleSummary, QuantileSketch};

/// A positive mass carried in natural-log space. `NEG_INFINITY` encodes mass
/// zero; `NaN` and `+inf` are never produced from finite inputs.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct LogWeight(pub f64);

impl LogWeight {
    pub const ZERO_MASS: LogWeight = LogWeight(f64::NEG_INFINITY);
    pub const UNIT_MASS: LogWeight = LogWeight(0.0);

    pub fn from_linear(mass: f64) -> Self {
        debug_assert!(mass >= 0.0, "linear mass must be nonnegative");
        LogWeight(mass.ln())
    }

    pub fn to_linear(self) -> f64 {
        self.0.exp()
    }

    pub fn is_zero_mass(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    /// `log(e^a + e^b)` without overflow for exponents up to |1e6|.
    pub fn combine(self, other: LogWeight) -> LogWeight {
        LogWeight(log_add_exp(self.0, other.0))
    }
}

/// `log(exp(a) + exp(b))` via the max-shifted form. `(-inf, x)` yields `x`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `log sum_i exp(v_i)` over a slice; empty input yields `-inf`.
pub fn log_sum_exp(values: &[LogWeight]) -> LogWeight {
    let mut acc = LogSumAccumulator::new();
    for v in values {
        acc.add(v.0);
    }
    acc.total()
}

/// Streaming single-pass log-sum-exp with a running maximum. Matches the
/// two-pass max-shifted evaluation to better than 1e-12 relative.
#[derive(Clone, Debug)]
pub struct LogSumAccumulator {
    max: f64,
    // sum of exp(v - max) over values seen so far
    scaled: f64,
}

impl Default for LogSumAccumulator {
    fn default() -> Self {
        Self::new()
    }
}

impl LogSumAccumulator {
    pub fn new() -> Self {
        LogSumAccumulator {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        debug_assert!(!v.is_nan(), "log-space value must not be NaN");
        if v == f64::NEG_INFINITY {
            return;
        }
        if v <= self.max {
            // exp underflows harmlessly to 0 below ~-745; skip the libm call
            // once the term cannot move the accumulated sum.
            let d = v - self.max;
            if d > -60.0 {
                self.scaled += d.exp();
            }
        } else {
            if self.max != f64::NEG_INFINITY {
                self.scaled = self.scaled * (self.max - v).exp() + 1.0;
            } else {
                self.scaled = 1.0;
            }
            self.max = v;
        }
    }

    pub fn total(&self) -> LogWeight {
        if self.scaled == 0.0 {
            LogWeight::ZERO_MASS
        } else {
            LogWeight(self.max + self.scaled.ln())
        }
    }
}
