//! Estimators computed from stopped traces: sample mean, empirical CDF,
//! monotone functionals, and the sample variance and median.
//!
//! All statistics are evaluated at the recorded stopping time (which is the
//! capped time for truncated traces), over the per-arm sample multisets.

use serde::{Deserialize, Serialize};

use crate::engine::Trace;
use crate::tabular::{ArmIndex, ArmSpec};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Functionals
// ---------------------------------------------------------------------------

/// A functional of an arm's empirical measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionalSpec {
    /// The sample mean.
    IdentityMean,
    /// The empirical CDF evaluated at `y`.
    IndicatorAt { y: f64 },
    /// Unbiased sample variance (needs at least two samples).
    VarianceUnbiased,
    /// Sample median: middle order statistic, averaging the two middle ones
    /// for even sample sizes.
    Median,
    /// A tabulated non-decreasing step function: value `values[i]` on
    /// `[points[i], points[i+1])`, extended constantly on both sides.
    CustomMonotone { points: Vec<f64>, values: Vec<f64> },
}

impl FunctionalSpec {
    /// Whether the functional is a monotone functional of the sample
    /// multiset (the bias theory applies to these).
    pub fn is_monotone(&self) -> bool {
        match self {
            FunctionalSpec::IdentityMean
            | FunctionalSpec::IndicatorAt { .. }
            | FunctionalSpec::CustomMonotone { .. } => true,
            FunctionalSpec::VarianceUnbiased | FunctionalSpec::Median => false,
        }
    }

    /// Short label used in reports.
    pub fn label(&self) -> String {
        match self {
            FunctionalSpec::IdentityMean => "mean".into(),
            FunctionalSpec::IndicatorAt { y } => format!("indicator_at_{y}"),
            FunctionalSpec::VarianceUnbiased => "variance".into(),
            FunctionalSpec::Median => "median".into(),
            FunctionalSpec::CustomMonotone { .. } => "custom_monotone".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let FunctionalSpec::CustomMonotone { points, values } = self {
            if points.is_empty() || points.len() != values.len() {
                return Err(Error::InvalidArgument(
                    "custom_monotone needs equally sized, nonempty points and values".into(),
                ));
            }
            if points.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::InvalidArgument(
                    "custom_monotone points must be strictly ascending".into(),
                ));
            }
            if values.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::InvalidArgument(
                    "custom_monotone values must be non-decreasing".into(),
                ));
            }
        }
        Ok(())
    }

    /// Evaluate on a sample multiset (draw order is irrelevant).
    pub fn evaluate(&self, samples: &[f64]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::UndefinedStatistic(
                "functionals need at least one sample".into(),
            ));
        }
        let n = samples.len();
        Ok(match self {
            FunctionalSpec::IdentityMean => samples.iter().sum::<f64>() / n as f64,
            FunctionalSpec::IndicatorAt { y } => {
                samples.iter().filter(|x| **x <= *y).count() as f64 / n as f64
            }
            FunctionalSpec::VarianceUnbiased => {
                if n < 2 {
                    return Err(Error::UndefinedStatistic(
                        "sample variance needs at least two samples".into(),
                    ));
                }
                let mean = samples.iter().sum::<f64>() / n as f64;
                samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
            }
            FunctionalSpec::Median => {
                let mut sorted = samples.to_vec();
                sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
                if n % 2 == 0 {
                    0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
                } else {
                    sorted[n / 2]
                }
            }
            FunctionalSpec::CustomMonotone { points, values } => {
                samples.iter().map(|x| step_eval(points, values, *x)).sum::<f64>() / n as f64
            }
        })
    }

    /// The functional's true value under an arm distribution, used as the
    /// bias reference.
    pub fn true_value(&self, arm: &ArmSpec) -> f64 {
        match self {
            FunctionalSpec::IdentityMean => arm.mean(),
            FunctionalSpec::IndicatorAt { y } => arm.cdf(*y),
            FunctionalSpec::VarianceUnbiased => arm.variance(),
            FunctionalSpec::Median => arm.median(),
            FunctionalSpec::CustomMonotone { points, values } => match arm {
                // Atoms evaluate exactly.
                ArmSpec::Bernoulli { .. } | ArmSpec::Discrete { .. } => {
                    let (support, probs): (Vec<f64>, Vec<f64>) = match arm {
                        ArmSpec::Bernoulli { p } => (vec![0.0, 1.0], vec![1.0 - p, *p]),
                        ArmSpec::Discrete { support, probs } => (support.clone(), probs.clone()),
                        ArmSpec::Normal { .. } => unreachable!(),
                    };
                    support
                        .iter()
                        .zip(&probs)
                        .map(|(x, p)| step_eval(points, values, *x) * p)
                        .sum()
                }
                // Piecewise-constant integrand against a continuous CDF.
                ArmSpec::Normal { .. } => {
                    let mut total = values[0] * arm.cdf(points[0]);
                    for i in 0..points.len() - 1 {
                        total += values[i] * (arm.cdf(points[i + 1]) - arm.cdf(points[i]));
                    }
                    total += values[points.len() - 1] * (1.0 - arm.cdf(points[points.len() - 1]));
                    total
                }
            },
        }
    }
}

/// Right-continuous step lookup: value of the last point <= x, clamped to
/// the first value below the table.
fn step_eval(points: &[f64], values: &[f64], x: f64) -> f64 {
    match points.partition_point(|p| *p <= x) {
        0 => values[0],
        idx => values[idx - 1],
    }
}

// ---------------------------------------------------------------------------
// CDF grid
// ---------------------------------------------------------------------------

/// Strictly ascending evaluation points for CDF curves; the finite stand-in
/// for suprema and infima over the whole real line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CdfGrid {
    points: Vec<f64>,
}

impl CdfGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("a CDF grid needs points".into()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("CDF grid points must be finite".into()));
        }
        if points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument(
                "CDF grid points must be strictly ascending".into(),
            ));
        }
        Ok(CdfGrid { points })
    }

    /// `n` equispaced points on [lo, hi].
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 || !(lo < hi) {
            return Err(Error::InvalidArgument(format!(
                "uniform grid needs lo < hi and n >= 2, got [{lo}, {hi}] with {n}"
            )));
        }
        let step = (hi - lo) / (n - 1) as f64;
        CdfGrid::new((0..n).map(|i| lo + step * i as f64).collect())
    }

    /// Default grid for normal-arm experiments: 161 points on [-4, 4].
    pub fn default_normal() -> Self {
        CdfGrid::uniform(-4.0, 4.0, 161).expect("static parameters")
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl TryFrom<Vec<f64>> for CdfGrid {
    type Error = Error;
    fn try_from(points: Vec<f64>) -> Result<Self> {
        CdfGrid::new(points)
    }
}

impl From<CdfGrid> for Vec<f64> {
    fn from(grid: CdfGrid) -> Vec<f64> {
        grid.points
    }
}

// ---------------------------------------------------------------------------
// Trace-level statistics
// ---------------------------------------------------------------------------

fn arm_samples(trace: &Trace, k: ArmIndex) -> Result<&[f64]> {
    let samples = trace.state.samples(k);
    if samples.is_empty() {
        return Err(Error::UndefinedStatistic(format!(
            "arm {k} has no samples at the stopping time"
        )));
    }
    Ok(samples)
}

/// Sample mean of arm k at the stopping time.
pub fn sample_mean(trace: &Trace, k: ArmIndex) -> Result<f64> {
    let samples = arm_samples(trace, k)?;
    Ok(trace.state.sum(k) / samples.len() as f64)
}

/// Empirical CDF of arm k at `y`: the fraction of its samples <= y.
pub fn empirical_cdf(trace: &Trace, k: ArmIndex, y: f64) -> Result<f64> {
    let samples = arm_samples(trace, k)?;
    Ok(samples.iter().filter(|x| **x <= y).count() as f64 / samples.len() as f64)
}

/// Evaluate a functional of arm k's empirical measure.
pub fn empirical_functional(trace: &Trace, k: ArmIndex, f: &FunctionalSpec) -> Result<f64> {
    f.evaluate(arm_samples(trace, k)?)
}

/// Empirical CDF of arm k on every grid point; non-decreasing by
/// construction.
pub fn cdf_curve(trace: &Trace, k: ArmIndex, grid: &CdfGrid) -> Result<Vec<f64>> {
    let samples = arm_samples(trace, k)?;
    Ok(cdf_curve_of_samples(samples, grid))
}

/// Grid CDF of a raw sample multiset; sorts once and walks the grid.
pub fn cdf_curve_of_samples(samples: &[f64], grid: &CdfGrid) -> Vec<f64> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let n = sorted.len() as f64;
    let mut idx = 0usize;
    let mut out = Vec::with_capacity(grid.len());
    for y in grid.points() {
        while idx < sorted.len() && sorted[idx] <= *y {
            idx += 1;
        }
        out.push(idx as f64 / n);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::TrialState;
    use crate::rules::StopReason;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn trace_with_samples(per_arm: &[&[f64]]) -> Trace {
        let mut state = TrialState::new(per_arm.len());
        for (k, samples) in per_arm.iter().enumerate() {
            for s in samples.iter() {
                state.record(k + 1, *s);
            }
        }
        Trace {
            stop_time: state.time(),
            truncated: false,
            stop_reason: StopReason::MaxTime,
            kappa: 1,
            state,
            table_seed: 0,
            noise_seed: 0,
        }
    }

    #[test]
    fn sample_mean_examples() {
        let trace = trace_with_samples(&[&[1.0, 2.0, 3.0]]);
        assert_eq!(sample_mean(&trace, 1).unwrap(), 2.0);
        let trace = trace_with_samples(&[&[0.7]]);
        assert_eq!(sample_mean(&trace, 1).unwrap(), 0.7);
        let trace = trace_with_samples(&[&[0.0, 0.0, 3.0]]);
        assert_eq!(sample_mean(&trace, 1).unwrap(), 1.0);
    }

    #[test]
    fn empirical_cdf_examples() {
        let trace = trace_with_samples(&[&[1.0, 2.0, 3.0]]);
        assert_abs_diff_eq!(empirical_cdf(&trace, 1, 2.0).unwrap(), 2.0 / 3.0);
        assert_eq!(empirical_cdf(&trace, 1, 0.5).unwrap(), 0.0);
        assert_eq!(empirical_cdf(&trace, 1, 9.0).unwrap(), 1.0);
        // Ties count with <=.
        let trace = trace_with_samples(&[&[1.0, 1.0, 2.0]]);
        assert_abs_diff_eq!(empirical_cdf(&trace, 1, 1.0).unwrap(), 2.0 / 3.0);
    }

    #[test]
    fn functional_examples() {
        let trace = trace_with_samples(&[&[0.0, 2.0]]);
        assert_eq!(
            empirical_functional(&trace, 1, &FunctionalSpec::VarianceUnbiased).unwrap(),
            2.0
        );
        let trace = trace_with_samples(&[&[4.0, 2.0, 1.0, 3.0]]);
        assert_eq!(empirical_functional(&trace, 1, &FunctionalSpec::Median).unwrap(), 2.5);
        let trace = trace_with_samples(&[&[1.0, 2.0, 3.0]]);
        assert_abs_diff_eq!(
            empirical_functional(&trace, 1, &FunctionalSpec::IndicatorAt { y: 2.0 }).unwrap(),
            empirical_cdf(&trace, 1, 2.0).unwrap()
        );
        assert_eq!(
            empirical_functional(&trace, 1, &FunctionalSpec::IdentityMean).unwrap(),
            sample_mean(&trace, 1).unwrap()
        );
        // Odd-n median is the middle order statistic.
        assert_eq!(empirical_functional(&trace, 1, &FunctionalSpec::Median).unwrap(), 2.0);
    }

    #[test]
    fn variance_of_single_sample_is_undefined() {
        let trace = trace_with_samples(&[&[1.0]]);
        assert!(matches!(
            empirical_functional(&trace, 1, &FunctionalSpec::VarianceUnbiased),
            Err(Error::UndefinedStatistic(_))
        ));
    }

    #[test]
    fn cdf_curve_examples() {
        let grid = CdfGrid::new(vec![0.0, 1.0, 2.0]).unwrap();
        let trace = trace_with_samples(&[&[1.0]]);
        assert_eq!(cdf_curve(&trace, 1, &grid).unwrap(), vec![0.0, 1.0, 1.0]);
        let grid = CdfGrid::new(vec![-2.0, 0.0, 2.0]).unwrap();
        let trace = trace_with_samples(&[&[-1.0, 1.0]]);
        assert_eq!(cdf_curve(&trace, 1, &grid).unwrap(), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn custom_monotone_step_function() {
        let f = FunctionalSpec::CustomMonotone {
            points: vec![0.0, 1.0],
            values: vec![0.0, 2.0],
        };
        f.validate().unwrap();
        let trace = trace_with_samples(&[&[-1.0, 0.5, 1.5]]);
        // f(-1) = 0 (left extension), f(0.5) = 0, f(1.5) = 2.
        assert_abs_diff_eq!(empirical_functional(&trace, 1, &f).unwrap(), 2.0 / 3.0);
        // True value against a Bernoulli(0.3): f(0) = 0, f(1) = 2.
        assert_abs_diff_eq!(f.true_value(&ArmSpec::bernoulli(0.3)), 0.6, epsilon = 1e-15);
        // And against a standard normal: 2 * P(X >= 1).
        assert_abs_diff_eq!(
            f.true_value(&ArmSpec::normal(0.0, 1.0)),
            2.0 * (1.0 - 0.841_344_746_068_543),
            epsilon = 1e-9
        );
    }

    #[test]
    fn monotone_flags() {
        assert!(FunctionalSpec::IdentityMean.is_monotone());
        assert!(FunctionalSpec::IndicatorAt { y: 0.0 }.is_monotone());
        assert!(!FunctionalSpec::VarianceUnbiased.is_monotone());
        assert!(!FunctionalSpec::Median.is_monotone());
    }

    #[test]
    fn grid_validation() {
        assert!(CdfGrid::new(vec![]).is_err());
        assert!(CdfGrid::new(vec![0.0, 0.0]).is_err());
        assert!(CdfGrid::new(vec![1.0, 0.0]).is_err());
        let grid = CdfGrid::default_normal();
        assert_eq!(grid.len(), 161);
        assert_eq!(grid.points()[0], -4.0);
        assert_eq!(*grid.points().last().unwrap(), 4.0);
    }

    proptest! {
        #[test]
        fn empirical_cdf_is_a_cdf(
            samples in proptest::collection::vec(-10.0f64..10.0, 1..30),
        ) {
            let grid = CdfGrid::uniform(-12.0, 12.0, 49).unwrap();
            let curve = cdf_curve_of_samples(&samples, &grid);
            prop_assert!(curve.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(curve.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert_eq!(*curve.last().unwrap(), 1.0);
        }

        #[test]
        fn monotone_functionals_respect_pointwise_dominance(
            base in proptest::collection::vec(-5.0f64..5.0, 1..20),
            bumps in proptest::collection::vec(0.0f64..3.0, 20),
        ) {
            // Build two multisets where one dominates the other pointwise
            // after sorting.
            let mut lo = base.clone();
            lo.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let hi: Vec<f64> = lo.iter().zip(&bumps).map(|(x, b)| x + b).collect();

            let monotone = [
                FunctionalSpec::IdentityMean,
                FunctionalSpec::IndicatorAt { y: 0.5 },
                FunctionalSpec::CustomMonotone { points: vec![-1.0, 0.0, 1.0], values: vec![0.0, 0.25, 1.0] },
                FunctionalSpec::Median,
            ];
            for f in &monotone {
                let skip_indicator_sign = matches!(f, FunctionalSpec::IndicatorAt { .. });
                let lo_val = f.evaluate(&lo).unwrap();
                let hi_val = f.evaluate(&hi).unwrap();
                if skip_indicator_sign {
                    // Indicators of {x <= y} decrease when samples grow.
                    prop_assert!(hi_val <= lo_val);
                } else {
                    prop_assert!(lo_val <= hi_val);
                }
            }
        }
    }
}
