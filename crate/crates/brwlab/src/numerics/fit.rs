//! Ordinary least squares on log-log axes, for estimating decay exponents.

use crate::{Error, Result};

/// Result of fitting `log y = slope * log n + intercept`.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub stderr_slope: f64,
    pub r_squared: f64,
}

/// Least-squares fit of `log y` against `log n`.
///
/// Needs at least 3 points with distinct `n`; every `y` must be positive.
/// A planted power law `y = c * n^p` is recovered with slope `p` exactly
/// (to floating-point round-off) and `r_squared = 1`.
pub fn fit_loglog(points: &[(u64, f64)]) -> Result<FitResult> {
    if points.len() < 3 {
        return Err(Error::InsufficientPoints);
    }
    {
        let mut ns: Vec<u64> = points.iter().map(|p| p.0).collect();
        ns.sort_unstable();
        ns.dedup();
        if ns.len() < 3 {
            return Err(Error::InsufficientPoints);
        }
    }
    for &(_, y) in points {
        if !(y > 0.0) || !y.is_finite() {
            return Err(Error::NonPositiveFitValue(y));
        }
    }

    let xs: Vec<f64> = points.iter().map(|p| (p.0 as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;

    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let sst: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let r_squared = if sst > 0.0 {
        (1.0 - sse / sst).clamp(0.0, 1.0)
    } else {
        1.0 // constant y is fit exactly by slope 0
    };
    let stderr_slope = if points.len() > 2 {
        (sse / (k - 2.0) / sxx).max(0.0).sqrt()
    } else {
        0.0
    };

    Ok(FitResult {
        slope,
        intercept,
        stderr_slope,
        r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_power_law() {
        let fit = fit_loglog(&[(1, 1.0), (2, 0.5), (4, 0.25)]).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(fit.stderr_slope < 1e-12);
    }

    #[test]
    fn constant_series_has_zero_slope() {
        let c = 0.37;
        let fit = fit_loglog(&[(1, c), (2, c), (4, c)]).unwrap();
        assert!(fit.slope.abs() < 1e-12);
    }

    #[test]
    fn inverse_sqrt_recovered() {
        let pts: Vec<(u64, f64)> = [2u64, 4, 8, 16]
            .iter()
            .map(|&n| (n, 1.0 / (n as f64).sqrt()))
            .collect();
        let fit = fit_loglog(&pts).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(matches!(
            fit_loglog(&[(1, 1.0), (2, 2.0)]),
            Err(Error::InsufficientPoints)
        ));
        assert!(matches!(
            fit_loglog(&[(1, 1.0), (1, 2.0), (1, 3.0)]),
            Err(Error::InsufficientPoints)
        ));
        assert!(matches!(
            fit_loglog(&[(1, 1.0), (2, 0.0), (4, 3.0)]),
            Err(Error::NonPositiveFitValue(_))
        ));
    }

    proptest! {
        #[test]
        fn planted_law_recovered(
            p in -3.0..3.0f64,
            logc in -5.0..5.0f64,
            ns in proptest::sample::subsequence(vec![2u64, 3, 5, 8, 13, 21, 34, 55], 3..8),
        ) {
            let c = logc.exp();
            let pts: Vec<(u64, f64)> = ns.iter().map(|&n| (n, c * (n as f64).powf(p))).collect();
            let fit = fit_loglog(&pts).unwrap();
            prop_assert!((fit.slope - p).abs() < 1e-9);
            prop_assert!((fit.intercept - logc).abs() < 1e-8);
        }
    }
}
