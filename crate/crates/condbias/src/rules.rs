//! Declarative sampling, stopping and choosing rules.
//!
//! Every rule is a pure evaluator over a [`TrialState`]: no internal state,
//! safe for concurrent use. Argmax ties always break toward the lowest arm
//! index so that runs are deterministic and the enumeration oracle can
//! replay them exactly.

use serde::{Deserialize, Serialize};

use crate::engine::TrialState;
use crate::tabular::{standard_normal_quantile, ArmIndex, RandomnessSource};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Rule variants
// ---------------------------------------------------------------------------

/// Arm-selection policy for each time step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplingRule {
    /// Arm 1 on odd times, arm 2 on even times.
    AlternateTwoArms,
    /// Always arm 1.
    SingleArm,
    /// Cycle through arms 1..=K.
    RoundRobin {
        #[serde(rename = "K")]
        arms: usize,
    },
    /// One forced pull per arm for t <= K, then the arm maximizing
    /// mean plus an iterated-logarithm exploration bonus.
    LilUcb {
        beta: f64,
        epsilon: f64,
        delta: f64,
        sigma2: f64,
    },
    /// Diagnostic probe for the oracle: same index as `LilUcb` but picks the
    /// minimizer, which is deliberately not optimistic.
    LilUcbArgmin {
        beta: f64,
        epsilon: f64,
        delta: f64,
        sigma2: f64,
    },
}

/// Termination policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StoppingRule {
    /// Stop once t reaches the budget M.
    FixedTime {
        #[serde(rename = "M")]
        max_time: u64,
    },
    /// Stop once arm 1's sample mean crosses the pointwise upper boundary
    /// `z_alpha / sqrt(t)`.
    UpperBoundary { alpha: f64 },
    /// At even times, stop once the mean difference between arms 1 and 2
    /// leaves `[-U(t), U(t)]` with `U(t) = z_{alpha/2} * sqrt(2/t)`.
    TwoSidedEven { alpha: f64 },
    /// Stop once one arm's count dominates: `N_k >= 1 + lambda * sum_{j!=k} N_j`.
    /// Not evaluated until every arm has been pulled once, mirroring the
    /// forced initialization rounds of the count-dominance algorithm.
    LilUcbCount { lambda: f64 },
    /// First sub-rule to fire wins; ties resolve in list order.
    MinOf { rules: Vec<StoppingRule> },
}

/// Post-stopping arm selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChoosingRule {
    /// Arm with the largest sample mean; requires every arm sampled.
    ArgmaxMean,
    /// Arm with the largest pull count.
    ArgmaxCount,
    /// A fixed arm, independent of the data.
    Fixed { arm: ArmIndex },
    /// Diagnostic probe for the oracle: arm with the smallest sample mean.
    ArgminMean,
}

/// Why a run terminated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxTime,
    UpperCross,
    LowerCross,
    CountDominance,
    HalvingComplete,
    /// The horizon cap was hit before any rule fired.
    Truncated,
}

impl StopReason {
    pub fn label(&self) -> &'static str {
        match self {
            StopReason::MaxTime => "max_time",
            StopReason::UpperCross => "upper_cross",
            StopReason::LowerCross => "lower_cross",
            StopReason::CountDominance => "count_dominance",
            StopReason::HalvingComplete => "halving_complete",
            StopReason::Truncated => "truncated",
        }
    }
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

// ---------------------------------------------------------------------------
// Boundary evaluators
// ---------------------------------------------------------------------------

/// Pointwise upper confidence boundary `U(t) = z_alpha / sqrt(t)`, where
/// `z_alpha` is the upper alpha-quantile of the standard normal.
pub fn pointwise_upper_boundary(t: u64, alpha: f64) -> f64 {
    debug_assert!(t >= 1 && alpha > 0.0 && alpha < 1.0);
    standard_normal_quantile(1.0 - alpha) / (t as f64).sqrt()
}

/// Two-arm difference boundary `U(t) = z_{alpha/2} * sqrt(2/t)` for even t.
/// The lower boundary is its negation.
pub fn two_arm_boundary(t: u64, alpha: f64) -> Result<f64> {
    if t < 2 || t % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "two-arm boundary is defined for even t >= 2, got {t}"
        )));
    }
    Ok(standard_normal_quantile(1.0 - alpha / 2.0) * (2.0 / t as f64).sqrt())
}

/// Iterated-logarithm exploration bonus
/// `(1+beta)(1+sqrt(eps)) * sqrt(2 sigma^2 (1+eps) log(log((1+eps) n)/delta) / n)`.
///
/// For small `n` the iterated logarithm is negative and the bonus is
/// undefined; we return +inf there, which maximally favors under-sampled
/// arms while staying reward-independent.
pub fn lil_ucb_bonus(n: u64, beta: f64, epsilon: f64, delta: f64, sigma2: f64) -> f64 {
    debug_assert!(n >= 1);
    let inner = ((1.0 + epsilon) * n as f64).ln() / delta;
    let under = 2.0 * sigma2 * (1.0 + epsilon) * inner.ln() / n as f64;
    if under > 0.0 {
        (1.0 + beta) * (1.0 + epsilon.sqrt()) * under.sqrt()
    } else {
        f64::INFINITY
    }
}

// ---------------------------------------------------------------------------
// Rule evaluation
// ---------------------------------------------------------------------------

impl SamplingRule {
    /// Check rule parameters and compatibility with a K-armed experiment.
    pub fn validate_for(&self, num_arms: usize) -> Result<()> {
        match self {
            SamplingRule::AlternateTwoArms => {
                if num_arms != 2 {
                    return Err(Error::InvalidConfig(format!(
                        "alternate_two_arms needs exactly 2 arms, got {num_arms}"
                    )));
                }
            }
            SamplingRule::SingleArm => {
                if num_arms < 1 {
                    return Err(Error::InvalidConfig("single_arm needs an arm".into()));
                }
            }
            SamplingRule::RoundRobin { arms } => {
                if *arms != num_arms || *arms == 0 {
                    return Err(Error::InvalidConfig(format!(
                        "round_robin over {arms} arms cannot drive a {num_arms}-arm experiment"
                    )));
                }
            }
            SamplingRule::LilUcb {
                beta,
                epsilon,
                delta,
                sigma2,
            }
            | SamplingRule::LilUcbArgmin {
                beta,
                epsilon,
                delta,
                sigma2,
            } => {
                if !(*beta > 0.0 && *epsilon > 0.0 && *sigma2 > 0.0) || !(*delta > 0.0 && *delta < 1.0)
                {
                    return Err(Error::InvalidConfig(
                        "lil_ucb requires beta, epsilon, sigma2 > 0 and delta in (0,1)".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Arm pulled at time `state.time() + 1`. Deterministic given the state;
    /// the randomness source is part of the interface for randomized rules
    /// but none of the built-in rules consume it.
    pub fn next_arm(&self, state: &TrialState, _noise: &RandomnessSource) -> ArmIndex {
        let t_next = state.time() + 1;
        match self {
            SamplingRule::AlternateTwoArms => {
                if t_next % 2 == 1 {
                    1
                } else {
                    2
                }
            }
            SamplingRule::SingleArm => 1,
            SamplingRule::RoundRobin { arms } => ((t_next - 1) % *arms as u64) as usize + 1,
            SamplingRule::LilUcb {
                beta,
                epsilon,
                delta,
                sigma2,
            } => lil_index_arm(state, *beta, *epsilon, *delta, *sigma2, true),
            SamplingRule::LilUcbArgmin {
                beta,
                epsilon,
                delta,
                sigma2,
            } => lil_index_arm(state, *beta, *epsilon, *delta, *sigma2, false),
        }
    }

    /// Upper bound on how many times arm `k` can be pulled within `horizon`
    /// steps; the oracle uses this to restrict enumeration to reachable rows.
    pub fn max_pulls_within(&self, horizon: u64, k: ArmIndex, num_arms: usize) -> u64 {
        match self {
            SamplingRule::AlternateTwoArms => {
                if k == 1 {
                    horizon.div_ceil(2)
                } else if k == 2 {
                    horizon / 2
                } else {
                    0
                }
            }
            SamplingRule::SingleArm => {
                if k == 1 {
                    horizon
                } else {
                    0
                }
            }
            SamplingRule::RoundRobin { arms } => {
                let k = k as u64;
                if k <= *arms as u64 && k <= horizon {
                    (horizon - k) / *arms as u64 + 1
                } else if k <= *arms as u64 {
                    0
                } else {
                    0
                }
            }
            // Forced initialization pins K-1 pulls on the other arms.
            SamplingRule::LilUcb { .. } | SamplingRule::LilUcbArgmin { .. } => {
                horizon.saturating_sub(num_arms as u64 - 1)
            }
        }
    }
}

/// Index policy shared by the optimistic rule and its inverted probe.
fn lil_index_arm(
    state: &TrialState,
    beta: f64,
    epsilon: f64,
    delta: f64,
    sigma2: f64,
    maximize: bool,
) -> ArmIndex {
    let k_total = state.num_arms();
    let t_next = state.time() + 1;
    if t_next <= k_total as u64 {
        // Forced round: one sample per arm.
        return t_next as usize;
    }
    let mut best = 1;
    let mut best_score = f64::NAN;
    for k in 1..=k_total {
        let n = state.count(k);
        debug_assert!(n >= 1, "forced rounds guarantee every arm was pulled");
        let score = state.mean(k).expect("count >= 1") + lil_ucb_bonus(n, beta, epsilon, delta, sigma2);
        let better = if best_score.is_nan() {
            true
        } else if maximize {
            score > best_score
        } else {
            score < best_score
        };
        if better {
            best = k;
            best_score = score;
        }
    }
    best
}

impl StoppingRule {
    pub fn validate(&self) -> Result<()> {
        match self {
            StoppingRule::FixedTime { max_time } => {
                if *max_time < 1 {
                    return Err(Error::InvalidConfig("fixed_time needs M >= 1".into()));
                }
            }
            StoppingRule::UpperBoundary { alpha } | StoppingRule::TwoSidedEven { alpha } => {
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "boundary alpha must lie in (0,1), got {alpha}"
                    )));
                }
            }
            StoppingRule::LilUcbCount { lambda } => {
                if !(*lambda > 0.0) {
                    return Err(Error::InvalidConfig("lil_ucb_count needs lambda > 0".into()));
                }
            }
            StoppingRule::MinOf { rules } => {
                if rules.is_empty() {
                    return Err(Error::InvalidConfig("min_of needs at least one rule".into()));
                }
                for rule in rules {
                    rule.validate()?;
                }
            }
        }
        Ok(())
    }

    /// Evaluate the stopping condition on the state after the latest pull.
    pub fn should_stop(&self, state: &TrialState) -> Option<StopReason> {
        let t = state.time();
        match self {
            StoppingRule::FixedTime { max_time } => (t >= *max_time).then_some(StopReason::MaxTime),
            StoppingRule::UpperBoundary { alpha } => {
                let mean = state.mean(1)?;
                (mean >= pointwise_upper_boundary(t, *alpha)).then_some(StopReason::UpperCross)
            }
            StoppingRule::TwoSidedEven { alpha } => {
                if t < 2 || t % 2 != 0 {
                    return None;
                }
                let diff = state.mean(1)? - state.mean(2)?;
                let bound = two_arm_boundary(t, *alpha).expect("t checked even");
                if diff >= bound {
                    Some(StopReason::UpperCross)
                } else if diff <= -bound {
                    Some(StopReason::LowerCross)
                } else {
                    None
                }
            }
            StoppingRule::LilUcbCount { lambda } => {
                if (1..=state.num_arms()).any(|k| state.count(k) == 0) {
                    return None;
                }
                let fired = (1..=state.num_arms()).any(|k| {
                    let own = state.count(k) as f64;
                    let others = (t - state.count(k)) as f64;
                    own >= 1.0 + lambda * others
                });
                fired.then_some(StopReason::CountDominance)
            }
            StoppingRule::MinOf { rules } => rules.iter().find_map(|rule| rule.should_stop(state)),
        }
    }
}

impl ChoosingRule {
    pub fn validate_for(&self, num_arms: usize) -> Result<()> {
        if let ChoosingRule::Fixed { arm } = self {
            if *arm < 1 || *arm > num_arms {
                return Err(Error::InvalidConfig(format!(
                    "fixed choosing arm {arm} outside 1..={num_arms}"
                )));
            }
        }
        Ok(())
    }

    /// Select the target arm from the final state; ties break toward the
    /// lowest index.
    pub fn choose(&self, state: &TrialState) -> Result<ArmIndex> {
        let k_total = state.num_arms();
        match self {
            ChoosingRule::Fixed { arm } => Ok(*arm),
            ChoosingRule::ArgmaxCount => {
                let mut best = 1;
                for k in 2..=k_total {
                    if state.count(k) > state.count(best) {
                        best = k;
                    }
                }
                Ok(best)
            }
            ChoosingRule::ArgmaxMean | ChoosingRule::ArgminMean => {
                let mut best = 1;
                let mut best_mean = state.mean(1).ok_or_else(|| {
                    Error::ContractViolation("argmax_mean choosing with an unsampled arm".into())
                })?;
                for k in 2..=k_total {
                    let mean = state.mean(k).ok_or_else(|| {
                        Error::ContractViolation("argmax_mean choosing with an unsampled arm".into())
                    })?;
                    let better = match self {
                        ChoosingRule::ArgminMean => mean < best_mean,
                        _ => mean > best_mean,
                    };
                    if better {
                        best = k;
                        best_mean = mean;
                    }
                }
                Ok(best)
            }
        }
    }
}
