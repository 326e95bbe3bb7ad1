//! Monte Carlo estimation of marginal and conditional biases.
//!
//! Trials are independent work items keyed by replication index: trial `r`
//! derives its table and noise seeds from `(base_seed, r)`, is classified
//! into every matching conditioning event, and contributes to per-condition
//! mergeable aggregates. Chunks of trials reduce in a fixed order, so a
//! report is bit-identical for any worker count.

use serde::{Deserialize, Serialize};

use crate::engine::{run_design, Design, Trace};
use crate::exec::map_chunks;
use crate::stats::{cdf_curve_of_samples, CdfGrid, FunctionalSpec};
use crate::tabular::{hash3, ArmIndex, ArmSpec, RandomnessSource, RewardTable};
use crate::{Error, Result};

/// Trials per aggregation chunk. Fixed so that the floating-point reduction
/// tree never depends on the worker count.
const TRIALS_PER_CHUNK: u64 = 1024;

const TABLE_SEED_DOMAIN: u64 = 0x7461_626c_6573_6565;
const NOISE_SEED_DOMAIN: u64 = 0x6e6f_6973_6573_6565;

/// Table and noise-stream seeds for replication `rep` of a run.
pub fn trial_seeds(base_seed: u64, rep: u64) -> (u64, u64) {
    (
        hash3(TABLE_SEED_DOMAIN, base_seed, rep, 0),
        hash3(NOISE_SEED_DOMAIN, base_seed, rep, 1),
    )
}

// ---------------------------------------------------------------------------
// Conditioning events
// ---------------------------------------------------------------------------

/// An event determined by the trace at the stopping time.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConditionSpec {
    /// All (non-truncated) runs.
    Marginal,
    /// The budget fired before any boundary was crossed.
    EarlyStop,
    /// The upper boundary was crossed.
    LineCross,
    /// Two-arm test accepted the null (lower crossing).
    #[serde(rename = "accept_H0")]
    AcceptH0,
    /// Two-arm test accepted the alternative (upper crossing).
    #[serde(rename = "accept_H1")]
    AcceptH1,
    /// Two-arm test ran out of budget.
    ReachMax,
    /// Arm `arm` was chosen.
    Chosen { arm: ArmIndex },
    /// Arm `arm` was not chosen.
    NotChosen { arm: ArmIndex },
}

impl ConditionSpec {
    pub fn label(&self) -> String {
        match self {
            ConditionSpec::Marginal => "marginal".into(),
            ConditionSpec::EarlyStop => "early_stop".into(),
            ConditionSpec::LineCross => "line_cross".into(),
            ConditionSpec::AcceptH0 => "accept_H0".into(),
            ConditionSpec::AcceptH1 => "accept_H1".into(),
            ConditionSpec::ReachMax => "reach_max".into(),
            ConditionSpec::Chosen { arm } => format!("chosen_{arm}"),
            ConditionSpec::NotChosen { arm } => format!("not_chosen_{arm}"),
        }
    }

    /// Whether a completed trace belongs to the event.
    pub fn matches(&self, trace: &Trace) -> bool {
        use crate::rules::StopReason;
        match self {
            ConditionSpec::Marginal => true,
            ConditionSpec::EarlyStop | ConditionSpec::ReachMax => {
                trace.stop_reason == StopReason::MaxTime
            }
            ConditionSpec::LineCross | ConditionSpec::AcceptH1 => {
                trace.stop_reason == StopReason::UpperCross
            }
            ConditionSpec::AcceptH0 => trace.stop_reason == StopReason::LowerCross,
            ConditionSpec::Chosen { arm } => trace.kappa == *arm,
            ConditionSpec::NotChosen { arm } => trace.kappa != *arm,
        }
    }

    pub fn validate_for(&self, num_arms: usize) -> Result<()> {
        match self {
            ConditionSpec::Chosen { arm } | ConditionSpec::NotChosen { arm } => {
                if *arm < 1 || *arm > num_arms {
                    return Err(Error::InvalidConfig(format!(
                        "condition references arm {arm} outside 1..={num_arms}"
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Sign verdicts
// ---------------------------------------------------------------------------

/// Verdict scale: a bias needs to clear this many standard errors.
pub const DEFAULT_VERDICT_Z: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignVerdict {
    Positive,
    Negative,
    Indeterminate,
}

impl SignVerdict {
    pub fn label(&self) -> &'static str {
        match self {
            SignVerdict::Positive => "positive",
            SignVerdict::Negative => "negative",
            SignVerdict::Indeterminate => "indeterminate",
        }
    }
}

/// Classify a bias estimate against `z` standard errors.
pub fn sign_verdict(bias: f64, se: f64, z: f64) -> SignVerdict {
    debug_assert!(se >= 0.0);
    if bias > z * se {
        SignVerdict::Positive
    } else if bias < -z * se {
        SignVerdict::Negative
    } else {
        SignVerdict::Indeterminate
    }
}

// ---------------------------------------------------------------------------
// Mergeable aggregates
// ---------------------------------------------------------------------------

/// Count, sum and sum of squares of one scalar statistic.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Accum {
    pub n: u64,
    pub sum: f64,
    pub sumsq: f64,
}

impl Accum {
    fn add(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sumsq += x * x;
    }

    fn merge(&mut self, other: &Accum) {
        self.n += other.n;
        self.sum += other.sum;
        self.sumsq += other.sumsq;
    }

    fn mean(&self) -> f64 {
        debug_assert!(self.n > 0);
        self.sum / self.n as f64
    }

    /// Standard error of the mean: sample standard deviation over sqrt(n).
    /// Zero when fewer than two observations exist (the verdict logic treats
    /// those cells as indeterminate).
    fn se(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let var = ((self.sumsq - self.sum * self.sum / n) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
struct CondArmAgg {
    mean: Accum,
    cdf: Vec<Accum>,
    extras: Vec<Accum>,
}

#[derive(Clone, Debug, Default, PartialEq)]
struct CondAgg {
    n: u64,
    arms: Vec<CondArmAgg>,
}

/// Per-chunk aggregation state; merging disjoint adjacent chunks in index
/// order reproduces the single-pass reduction bit for bit.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialAggregate {
    /// Covered replication range, `None` for the empty aggregate.
    chunk: Option<(u64, u64)>,
    classified: u64,
    truncated: u64,
    conditions: Vec<CondAgg>,
}

impl PartialAggregate {
    /// Identity element for a layout of `conditions` x `arms` with `grid`
    /// CDF points and `extras` extra functionals.
    pub fn empty(conditions: usize, arms: usize, grid: usize, extras: usize) -> Self {
        PartialAggregate {
            chunk: None,
            classified: 0,
            truncated: 0,
            conditions: vec![
                CondAgg {
                    n: 0,
                    arms: vec![
                        CondArmAgg {
                            mean: Accum::default(),
                            cdf: vec![Accum::default(); grid],
                            extras: vec![Accum::default(); extras],
                        };
                        arms
                    ],
                };
                conditions
            ],
        }
    }

    pub fn classified(&self) -> u64 {
        self.classified
    }

    pub fn truncated(&self) -> u64 {
        self.truncated
    }

    pub fn condition_count(&self, c: usize) -> u64 {
        self.conditions[c].n
    }

    /// Merge `next` into `self`. Ranges must be disjoint and adjacent in
    /// index order (the empty aggregate merges with anything).
    pub fn merge(mut self, next: PartialAggregate) -> Result<PartialAggregate> {
        self.chunk = match (self.chunk, next.chunk) {
            (a, None) => a,
            (None, b) => b,
            (Some((a0, a1)), Some((b0, b1))) => {
                if a1 != b0 {
                    return Err(Error::InvalidArgument(format!(
                        "aggregates must merge in index order: {a0}..{a1} then {b0}..{b1}"
                    )));
                }
                Some((a0, b1))
            }
        };
        self.classified += next.classified;
        self.truncated += next.truncated;
        debug_assert_eq!(self.conditions.len(), next.conditions.len());
        for (mine, theirs) in self.conditions.iter_mut().zip(&next.conditions) {
            mine.n += theirs.n;
            for (a, b) in mine.arms.iter_mut().zip(&theirs.arms) {
                a.mean.merge(&b.mean);
                for (x, y) in a.cdf.iter_mut().zip(&b.cdf) {
                    x.merge(y);
                }
                for (x, y) in a.extras.iter_mut().zip(&b.extras) {
                    x.merge(y);
                }
            }
        }
        Ok(self)
    }
}

// ---------------------------------------------------------------------------
// Estimation parameters and report
// ---------------------------------------------------------------------------

/// Everything needed to run one Monte Carlo bias estimation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateParams {
    /// Report label (experiment name).
    pub label: String,
    pub arms: Vec<ArmSpec>,
    pub design: Design,
    /// Trials that reach this many pulls without stopping are truncated,
    /// reported, and excluded from every condition.
    pub horizon_cap: u64,
    pub reps: u64,
    pub base_seed: u64,
    pub grid: CdfGrid,
    pub conditions: Vec<ConditionSpec>,
    /// Extra functionals beyond the always-reported mean and CDF curve.
    /// `identity_mean` entries are ignored (the mean is always present).
    pub functionals: Vec<FunctionalSpec>,
}

impl EstimateParams {
    pub fn validate(&self) -> Result<()> {
        if self.reps < 1 {
            return Err(Error::InvalidConfig("reps must be at least 1".into()));
        }
        if self.conditions.is_empty() {
            return Err(Error::InvalidConfig("at least one condition is required".into()));
        }
        for arm in &self.arms {
            arm.validate()?;
        }
        self.design.validate_for(self.arms.len())?;
        for cond in &self.conditions {
            cond.validate_for(self.arms.len())?;
        }
        for f in &self.functionals {
            f.validate()?;
        }
        Ok(())
    }

    /// The extra functionals actually aggregated (mean is implicit).
    fn extras(&self) -> Vec<FunctionalSpec> {
        self.functionals
            .iter()
            .filter(|f| !matches!(f, FunctionalSpec::IdentityMean))
            .cloned()
            .collect()
    }
}

/// One scalar statistic row: estimate, bias against the truth, standard
/// error and sign verdict.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatLine {
    pub statistic: String,
    pub n: u64,
    pub estimate: f64,
    pub true_value: f64,
    pub bias: f64,
    pub se: f64,
    pub verdict: SignVerdict,
}

impl StatLine {
    fn from_accum(statistic: &str, accum: &Accum, true_value: f64) -> Option<StatLine> {
        if accum.n == 0 {
            return None;
        }
        let estimate = accum.mean();
        let bias = estimate - true_value;
        let se = accum.se();
        let verdict = if accum.n < 2 {
            SignVerdict::Indeterminate
        } else {
            sign_verdict(bias, se, DEFAULT_VERDICT_Z)
        };
        Some(StatLine {
            statistic: statistic.into(),
            n: accum.n,
            estimate,
            true_value,
            bias,
            se,
            verdict,
        })
    }
}

/// CDF bias curve of one arm under one condition.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CdfBiasCurve {
    /// Average empirical CDF per grid point.
    pub estimate: Vec<f64>,
    /// `estimate - F_k(y)` per grid point.
    pub bias: Vec<f64>,
    /// Pointwise standard errors.
    pub se: Vec<f64>,
    pub min_bias: f64,
    pub min_at: f64,
    pub min_verdict: SignVerdict,
    pub max_bias: f64,
    pub max_at: f64,
    pub max_verdict: SignVerdict,
}

/// Statistics of one arm under one condition.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CondArmReport {
    pub arm: ArmIndex,
    pub mean: StatLine,
    pub functionals: Vec<StatLine>,
    pub cdf: CdfBiasCurve,
}

/// One conditioning event: trial count, probability and per-arm statistics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionReport {
    pub label: String,
    pub n: u64,
    /// n / classified trials; the denominator excludes truncated trials.
    pub probability: f64,
    /// True when no trial matched; no biases are reported then.
    pub empty: bool,
    pub arms: Vec<CondArmReport>,
}

/// Per-arm ground truth echoed into the report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArmInfo {
    pub arm: ArmIndex,
    pub spec: ArmSpec,
    pub true_mean: f64,
    pub true_variance: f64,
    pub true_median: f64,
    pub true_cdf: Vec<f64>,
}

/// Full Monte Carlo bias report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BiasReport {
    pub schema_version: u32,
    pub label: String,
    pub base_seed: u64,
    pub reps: u64,
    pub truncated: u64,
    /// Non-truncated trials, the denominator of condition probabilities.
    pub classified: u64,
    pub grid: Vec<f64>,
    pub arms: Vec<ArmInfo>,
    pub conditions: Vec<ConditionReport>,
    /// Configuration echo for replay.
    pub config: EstimateParams,
}

// ---------------------------------------------------------------------------
// Estimation
// ---------------------------------------------------------------------------

/// Run `params.reps` independent trials on `threads` workers and estimate
/// the per-condition biases. Output is deterministic in `(params)` and
/// identical for any worker count.
pub fn estimate(params: &EstimateParams, threads: usize) -> Result<BiasReport> {
    params.validate()?;
    let extras = params.extras();
    let num_arms = params.arms.len();
    let grid_len = params.grid.len();
    let n_conditions = params.conditions.len();

    let chunks: Vec<Result<PartialAggregate>> =
        map_chunks(params.reps, TRIALS_PER_CHUNK, threads, |range| {
            let mut agg = PartialAggregate::empty(n_conditions, num_arms, grid_len, extras.len());
            agg.chunk = Some((range.start, range.end));
            for rep in range {
                let trace = run_one(params, rep)?;
                accumulate(&mut agg, params, &extras, &trace)?;
            }
            Ok(agg)
        });

    let mut total = PartialAggregate::empty(n_conditions, num_arms, grid_len, extras.len());
    for chunk in chunks {
        total = total.merge(chunk?)?;
    }
    finalize(params, &extras, total)
}

/// Run a single replication of the experiment (public so that counterfactual
/// tooling and trace dumps can replay exactly what `estimate` ran).
pub fn run_one(params: &EstimateParams, rep: u64) -> Result<Trace> {
    let (table_seed, noise_seed) = trial_seeds(params.base_seed, rep);
    let table = RewardTable::new(table_seed, params.arms.clone())?;
    let noise = RandomnessSource::new(noise_seed);
    run_design(&table, &noise, &params.design, params.horizon_cap)
}

fn accumulate(
    agg: &mut PartialAggregate,
    params: &EstimateParams,
    extras: &[FunctionalSpec],
    trace: &Trace,
) -> Result<()> {
    if trace.truncated {
        agg.truncated += 1;
        return Ok(());
    }
    agg.classified += 1;

    // Per-arm statistics are shared by every matching condition.
    let num_arms = params.arms.len();
    let mut means = Vec::with_capacity(num_arms);
    let mut curves = Vec::with_capacity(num_arms);
    let mut extra_vals: Vec<Vec<Option<f64>>> = Vec::with_capacity(num_arms);
    for k in 1..=num_arms {
        let samples = trace.state.samples(k);
        if samples.is_empty() {
            return Err(Error::ContractViolation(format!(
                "arm {k} was never sampled; per-arm statistics are undefined"
            )));
        }
        means.push(trace.state.sum(k) / samples.len() as f64);
        curves.push(cdf_curve_of_samples(samples, &params.grid));
        let vals = extras
            .iter()
            .map(|f| match f {
                // The sample variance exists only from two samples on; such
                // trials are skipped for that statistic and its row carries
                // its own n.
                FunctionalSpec::VarianceUnbiased if samples.len() < 2 => Ok(None),
                _ => f.evaluate(samples).map(Some),
            })
            .collect::<Result<Vec<_>>>()?;
        extra_vals.push(vals);
    }

    for (c, cond) in params.conditions.iter().enumerate() {
        if !cond.matches(trace) {
            continue;
        }
        let slot = &mut agg.conditions[c];
        slot.n += 1;
        for k in 0..num_arms {
            let arm_slot = &mut slot.arms[k];
            arm_slot.mean.add(means[k]);
            for (acc, v) in arm_slot.cdf.iter_mut().zip(&curves[k]) {
                acc.add(*v);
            }
            for (acc, v) in arm_slot.extras.iter_mut().zip(&extra_vals[k]) {
                if let Some(v) = v {
                    acc.add(*v);
                }
            }
        }
    }
    Ok(())
}

fn finalize(
    params: &EstimateParams,
    extras: &[FunctionalSpec],
    total: PartialAggregate,
) -> Result<BiasReport> {
    let grid_points = params.grid.points();
    let arms: Vec<ArmInfo> = params
        .arms
        .iter()
        .enumerate()
        .map(|(idx, spec)| ArmInfo {
            arm: idx + 1,
            spec: spec.clone(),
            true_mean: spec.mean(),
            true_variance: spec.variance(),
            true_median: spec.median(),
            true_cdf: grid_points.iter().map(|y| spec.cdf(*y)).collect(),
        })
        .collect();

    let mut conditions = Vec::with_capacity(params.conditions.len());
    for (c, cond) in params.conditions.iter().enumerate() {
        let slot = &total.conditions[c];
        let probability = if total.classified > 0 {
            slot.n as f64 / total.classified as f64
        } else {
            0.0
        };
        let mut arm_reports = Vec::new();
        if slot.n > 0 {
            for (k, arm_slot) in slot.arms.iter().enumerate() {
                let info = &arms[k];
                let mean = StatLine::from_accum("mean", &arm_slot.mean, info.true_mean)
                    .expect("n > 0 implies mean observations");
                let functionals = extras
                    .iter()
                    .zip(&arm_slot.extras)
                    .filter_map(|(f, acc)| {
                        StatLine::from_accum(&f.label(), acc, f.true_value(&params.arms[k]))
                    })
                    .collect();
                arm_reports.push(CondArmReport {
                    arm: k + 1,
                    mean,
                    functionals,
                    cdf: cdf_bias_curve(arm_slot, info, grid_points),
                });
            }
        }
        conditions.push(ConditionReport {
            label: cond.label(),
            n: slot.n,
            probability,
            empty: slot.n == 0,
            arms: arm_reports,
        });
    }

    Ok(BiasReport {
        schema_version: 1,
        label: params.label.clone(),
        base_seed: params.base_seed,
        reps: params.reps,
        truncated: total.truncated,
        classified: total.classified,
        grid: grid_points.to_vec(),
        arms,
        conditions,
        config: params.clone(),
    })
}

fn cdf_bias_curve(arm_slot: &CondArmAgg, info: &ArmInfo, grid: &[f64]) -> CdfBiasCurve {
    let mut estimate = Vec::with_capacity(grid.len());
    let mut bias = Vec::with_capacity(grid.len());
    let mut se = Vec::with_capacity(grid.len());
    for (acc, truth) in arm_slot.cdf.iter().zip(&info.true_cdf) {
        let est = acc.mean();
        estimate.push(est);
        bias.push(est - truth);
        se.push(acc.se());
    }
    let (mut min_g, mut max_g) = (0usize, 0usize);
    for g in 1..bias.len() {
        if bias[g] < bias[min_g] {
            min_g = g;
        }
        if bias[g] > bias[max_g] {
            max_g = g;
        }
    }
    let n = arm_slot.cdf.first().map(|a| a.n).unwrap_or(0);
    let verdict_at = |g: usize| {
        if n < 2 {
            SignVerdict::Indeterminate
        } else {
            sign_verdict(bias[g], se[g], DEFAULT_VERDICT_Z)
        }
    };
    CdfBiasCurve {
        min_bias: bias[min_g],
        min_at: grid[min_g],
        min_verdict: verdict_at(min_g),
        max_bias: bias[max_g],
        max_at: grid[max_g],
        max_verdict: verdict_at(max_g),
        estimate,
        bias,
        se,
    }
}
