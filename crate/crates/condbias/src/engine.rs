//! Trial execution against a reward table.
//!
//! [`run_trial`] drives the generic sample/stop/choose protocol; sequential
//! halving has its own structured schedule in [`run_sequential_halving`].
//! Both read rewards exclusively through the table, so the j-th sample ever
//! drawn from arm k always equals cell (j, k) and a counterfactual cell
//! change replays exactly.

use serde::{Deserialize, Serialize};

use crate::rules::{ChoosingRule, SamplingRule, StopReason, StoppingRule};
use crate::tabular::{ArmIndex, RandomnessSource, RewardTable};
use crate::{Error, Result};

/// How an experiment collects data: a free-form rule triple or the
/// sequential-halving schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Design {
    Rules {
        sampling: SamplingRule,
        stopping: StoppingRule,
        choosing: ChoosingRule,
    },
    SequentialHalving { budget: u64 },
}

impl Design {
    pub fn validate_for(&self, num_arms: usize) -> Result<()> {
        match self {
            Design::Rules {
                sampling,
                stopping,
                choosing,
            } => {
                sampling.validate_for(num_arms)?;
                stopping.validate()?;
                choosing.validate_for(num_arms)
            }
            Design::SequentialHalving { budget } => {
                let rounds = halving_rounds(num_arms);
                if num_arms < 2 {
                    return Err(Error::InvalidConfig(
                        "sequential halving needs at least two arms".into(),
                    ));
                }
                if *budget < (num_arms as u64) * rounds {
                    return Err(Error::InvalidConfig(format!(
                        "halving budget {budget} gives an empty first round for {num_arms} arms"
                    )));
                }
                Ok(())
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Trial state
// ---------------------------------------------------------------------------

/// Running state of one trial: time, per-arm counts, sums and samples in
/// draw order, plus the full pull sequence for replay and trace dumps.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialState {
    t: u64,
    counts: Vec<u64>,
    sums: Vec<f64>,
    samples: Vec<Vec<f64>>,
    pulls: Vec<ArmIndex>,
}

impl TrialState {
    pub fn new(num_arms: usize) -> Self {
        TrialState {
            t: 0,
            counts: vec![0; num_arms],
            sums: vec![0.0; num_arms],
            samples: vec![Vec::new(); num_arms],
            pulls: Vec::new(),
        }
    }

    /// Record one pull of `arm` returning `reward`.
    pub fn record(&mut self, arm: ArmIndex, reward: f64) {
        debug_assert!(arm >= 1 && arm <= self.counts.len());
        self.t += 1;
        self.counts[arm - 1] += 1;
        self.sums[arm - 1] += reward;
        self.samples[arm - 1].push(reward);
        self.pulls.push(arm);
    }

    pub fn num_arms(&self) -> usize {
        self.counts.len()
    }

    /// Current time t = total pulls.
    pub fn time(&self) -> u64 {
        self.t
    }

    /// Pull count N_k(t).
    pub fn count(&self, k: ArmIndex) -> u64 {
        self.counts[k - 1]
    }

    /// Running sum S_k(t).
    pub fn sum(&self, k: ArmIndex) -> f64 {
        self.sums[k - 1]
    }

    /// Sample mean S_k(t) / N_k(t), or `None` while the arm is unsampled.
    pub fn mean(&self, k: ArmIndex) -> Option<f64> {
        let n = self.counts[k - 1];
        (n > 0).then(|| self.sums[k - 1] / n as f64)
    }

    /// Samples of arm k in draw order.
    pub fn samples(&self, k: ArmIndex) -> &[f64] {
        &self.samples[k - 1]
    }

    /// Arms pulled at times 1..=t.
    pub fn pulls(&self) -> &[ArmIndex] {
        &self.pulls
    }

    /// Last pulled arm A_t.
    pub fn last_arm(&self) -> Option<ArmIndex> {
        self.pulls.last().copied()
    }

    /// Last observed reward Y_t.
    pub fn last_reward(&self) -> Option<f64> {
        let arm = self.last_arm()?;
        self.samples[arm - 1].last().copied()
    }

    /// Pull counts for every prefix time 1..=t, as one row per time step.
    /// Row `t-1` holds `[N_1(t), ..., N_K(t)]`.
    pub fn count_history(&self) -> Vec<Vec<u64>> {
        let mut history = Vec::with_capacity(self.pulls.len());
        let mut counts = vec![0u64; self.counts.len()];
        for arm in &self.pulls {
            counts[arm - 1] += 1;
            history.push(counts.clone());
        }
        history
    }
}

// ---------------------------------------------------------------------------
// Trace
// ---------------------------------------------------------------------------

/// A completed run: stopping time, reason, chosen arm and the final state.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub stop_time: u64,
    pub truncated: bool,
    pub stop_reason: StopReason,
    pub kappa: ArmIndex,
    pub state: TrialState,
    /// Seeds echoed for replay.
    pub table_seed: u64,
    pub noise_seed: u64,
}

impl Trace {
    /// Sample mean of arm k at the stopping time.
    pub fn mean(&self, k: ArmIndex) -> Option<f64> {
        self.state.mean(k)
    }
}

// ---------------------------------------------------------------------------
// Generic rule-driven trials
// ---------------------------------------------------------------------------

/// Run one trial: repeatedly sample the arm picked by `sampling`, read its
/// next stacked reward from the table, and stop at the first time the
/// stopping rule fires. If nothing fires by `horizon_cap` the trace comes
/// back with `truncated = true`.
pub fn run_trial(
    table: &RewardTable,
    noise: &RandomnessSource,
    sampling: &SamplingRule,
    stopping: &StoppingRule,
    choosing: &ChoosingRule,
    horizon_cap: u64,
) -> Result<Trace> {
    if horizon_cap < 1 {
        return Err(Error::InvalidArgument("horizon cap must be at least 1".into()));
    }
    let num_arms = table.num_arms();
    sampling.validate_for(num_arms)?;
    stopping.validate()?;
    choosing.validate_for(num_arms)?;

    let mut state = TrialState::new(num_arms);
    let (stop_reason, truncated) = loop {
        let arm = sampling.next_arm(&state, noise);
        if arm < 1 || arm > num_arms {
            return Err(Error::ContractViolation(format!(
                "sampling rule picked arm {arm} outside 1..={num_arms}"
            )));
        }
        let row = state.count(arm) + 1;
        let reward = table.cell(row, arm)?;
        state.record(arm, reward);
        if let Some(reason) = stopping.should_stop(&state) {
            break (reason, false);
        }
        if state.time() >= horizon_cap {
            break (StopReason::Truncated, true);
        }
    };

    let kappa = choosing.choose(&state)?;
    Ok(Trace {
        stop_time: state.time(),
        truncated,
        stop_reason,
        kappa,
        state,
        table_seed: table.seed(),
        noise_seed: noise.seed(),
    })
}

// ---------------------------------------------------------------------------
// Sequential halving
// ---------------------------------------------------------------------------

/// Number of halving rounds for K arms.
pub fn halving_rounds(num_arms: usize) -> u64 {
    (num_arms.max(1) as f64).log2().ceil() as u64
}

/// Per-arm samples in a round: `floor(budget / (active * ceil(log2 K)))`.
pub fn halving_round_budget(budget: u64, active_count: usize, num_arms: usize) -> u64 {
    debug_assert!(active_count >= 1);
    budget / (active_count as u64 * halving_rounds(num_arms))
}

/// Run the sequential-halving schedule: in each of ceil(log2 K) rounds every
/// active arm draws the round budget of fresh stacked samples (row indices
/// continue across rounds), the arms with the largest round-local means
/// survive (ties toward the lowest index), and the unique survivor is
/// chosen. Within a round, active arms are pulled in ascending index order.
pub fn run_sequential_halving(table: &RewardTable, budget: u64, noise_seed: u64) -> Result<Trace> {
    let num_arms = table.num_arms();
    Design::SequentialHalving { budget }.validate_for(num_arms)?;

    let rounds = halving_rounds(num_arms);
    let mut active: Vec<ArmIndex> = (1..=num_arms).collect();
    let mut state = TrialState::new(num_arms);

    for _round in 1..=rounds {
        let per_arm = halving_round_budget(budget, active.len(), num_arms);
        if per_arm == 0 {
            return Err(Error::InvalidConfig(format!(
                "halving budget {budget} gives an empty round for {} active arms",
                active.len()
            )));
        }
        let mut round_means: Vec<(ArmIndex, f64)> = Vec::with_capacity(active.len());
        for &arm in &active {
            let mut sum = 0.0;
            for _ in 0..per_arm {
                let row = state.count(arm) + 1;
                let reward = table.cell(row, arm)?;
                state.record(arm, reward);
                sum += reward;
            }
            round_means.push((arm, sum / per_arm as f64));
        }
        // Keep the ceil(|A|/2) arms with the largest round means.
        let keep = active.len().div_ceil(2);
        round_means.sort_by(|(ka, ma), (kb, mb)| {
            mb.partial_cmp(ma)
                .expect("finite round means")
                .then_with(|| ka.cmp(kb))
        });
        active = round_means.iter().take(keep).map(|(k, _)| *k).collect();
        active.sort_unstable();
    }

    debug_assert_eq!(active.len(), 1, "halving must leave a unique survivor");
    let kappa = active[0];
    Ok(Trace {
        stop_time: state.time(),
        truncated: false,
        stop_reason: StopReason::HalvingComplete,
        kappa,
        state,
        table_seed: table.seed(),
        noise_seed,
    })
}

/// Run a trial under either design.
pub fn run_design(
    table: &RewardTable,
    noise: &RandomnessSource,
    design: &Design,
    horizon_cap: u64,
) -> Result<Trace> {
    match design {
        Design::Rules {
            sampling,
            stopping,
            choosing,
        } => run_trial(table, noise, sampling, stopping, choosing, horizon_cap),
        Design::SequentialHalving { budget } => {
            run_sequential_halving(table, *budget, noise.seed())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::ArmSpec;

    fn bern_table(ps: &[f64]) -> RewardTable {
        RewardTable::new(11, ps.iter().map(|&p| ArmSpec::bernoulli(p)).collect()).unwrap()
    }

    #[test]
    fn single_arm_fixed_time_on_degenerate_arm() {
        let table = bern_table(&[1.0]);
        let trace = run_trial(
            &table,
            &RandomnessSource::new(0),
            &SamplingRule::SingleArm,
            &StoppingRule::FixedTime { max_time: 3 },
            &ChoosingRule::Fixed { arm: 1 },
            100,
        )
        .unwrap();
        assert_eq!(trace.stop_time, 3);
        assert_eq!(trace.state.count(1), 3);
        assert_eq!(trace.mean(1), Some(1.0));
        assert_eq!(trace.stop_reason, StopReason::MaxTime);
        assert!(!trace.truncated);
    }

    #[test]
    fn boundary_cross_at_first_step() {
        // First cell 2.0 >= U(1) = 0.8416: stops immediately with upper_cross.
        let table = RewardTable::new(5, vec![ArmSpec::normal(0.0, 1.0)])
            .unwrap()
            .with_cell_overridden(1, 1, 2.0)
            .unwrap();
        let stopping = StoppingRule::MinOf {
            rules: vec![
                StoppingRule::UpperBoundary { alpha: 0.2 },
                StoppingRule::FixedTime { max_time: 10 },
            ],
        };
        let trace = run_trial(
            &table,
            &RandomnessSource::new(0),
            &SamplingRule::SingleArm,
            &stopping,
            &ChoosingRule::Fixed { arm: 1 },
            100,
        )
        .unwrap();
        assert_eq!(trace.stop_time, 1);
        assert_eq!(trace.stop_reason, StopReason::UpperCross);
    }

    #[test]
    fn alternate_sampling_pull_sequence() {
        let table = bern_table(&[0.5, 0.5]);
        let trace = run_trial(
            &table,
            &RandomnessSource::new(0),
            &SamplingRule::AlternateTwoArms,
            &StoppingRule::FixedTime { max_time: 4 },
            &ChoosingRule::ArgmaxMean,
            100,
        )
        .unwrap();
        assert_eq!(trace.state.pulls(), &[1, 2, 1, 2]);
    }

    #[test]
    fn stacked_rows_match_table_cells() {
        // The j-th sample drawn from arm k equals cell(j, k).
        let table = RewardTable::new(77, vec![ArmSpec::normal(0.0, 1.0); 2]).unwrap();
        let trace = run_trial(
            &table,
            &RandomnessSource::new(1),
            &SamplingRule::AlternateTwoArms,
            &StoppingRule::FixedTime { max_time: 9 },
            &ChoosingRule::ArgmaxMean,
            100,
        )
        .unwrap();
        for k in 1..=2 {
            for (j, sample) in trace.state.samples(k).iter().enumerate() {
                let cell = table.cell(j as u64 + 1, k).unwrap();
                assert_eq!(sample.to_bits(), cell.to_bits());
            }
        }
    }

    #[test]
    fn truncation_reports_horizon_cap() {
        let table = bern_table(&[0.0]);
        let trace = run_trial(
            &table,
            &RandomnessSource::new(0),
            &SamplingRule::SingleArm,
            &StoppingRule::FixedTime { max_time: 50 },
            &ChoosingRule::Fixed { arm: 1 },
            5,
        )
        .unwrap();
        assert!(trace.truncated);
        assert_eq!(trace.stop_time, 5);
        assert_eq!(trace.stop_reason, StopReason::Truncated);
    }

    #[test]
    fn traces_are_bit_identical_for_identical_inputs() {
        let table = RewardTable::new(123, vec![ArmSpec::normal(0.5, 2.0); 3]).unwrap();
        let noise = RandomnessSource::new(9);
        let sampling = SamplingRule::LilUcb {
            beta: 0.5,
            epsilon: 0.1,
            delta: 0.2,
            sigma2: 1.0,
        };
        let stopping = StoppingRule::LilUcbCount { lambda: 1.0 };
        let choosing = ChoosingRule::ArgmaxCount;
        let a = run_trial(&table, &noise, &sampling, &stopping, &choosing, 100_000).unwrap();
        let b = run_trial(&table, &noise, &sampling, &stopping, &choosing, 100_000).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lil_ucb_stop_is_minimal() {
        // Replaying the trace, the stop condition holds at T and fails before.
        let table = RewardTable::new(321, vec![ArmSpec::normal(1.0, 1.0), ArmSpec::normal(0.0, 1.0)])
            .unwrap();
        let stopping = StoppingRule::LilUcbCount { lambda: 1.0 };
        let trace = run_trial(
            &table,
            &RandomnessSource::new(0),
            &SamplingRule::LilUcb {
                beta: 0.5,
                epsilon: 0.1,
                delta: 0.2,
                sigma2: 1.0,
            },
            &stopping,
            &ChoosingRule::ArgmaxCount,
            100_000,
        )
        .unwrap();
        assert!(!trace.truncated);
        let mut replay = TrialState::new(2);
        for (step, &arm) in trace.state.pulls().iter().enumerate() {
            let reward = trace.state.samples(arm)[replay.count(arm) as usize];
            replay.record(arm, reward);
            let fired = stopping.should_stop(&replay).is_some();
            if (step as u64) < trace.stop_time - 1 {
                assert!(!fired, "stop fired early at t = {}", step + 1);
            } else {
                assert!(fired, "stop failed to fire at T");
            }
        }
    }

    // -- sequential halving ---------------------------------------------------

    #[test]
    fn halving_round_budgets_match_schedule_arithmetic() {
        assert_eq!(halving_round_budget(10, 3, 3), 1);
        assert_eq!(halving_round_budget(10, 2, 3), 2);
        // Exact division: budget K * ceil(log2 K) gives one pull each.
        assert_eq!(halving_round_budget(12, 4, 4), 1);
        assert_eq!(halving_rounds(3), 2);
        assert_eq!(halving_rounds(2), 1);
        assert_eq!(halving_rounds(4), 2);
        assert_eq!(halving_rounds(5), 3);
    }

    #[test]
    fn halving_k3_budget10_total_pulls() {
        let table = bern_table(&[0.5, 0.5, 0.5]);
        let trace = run_sequential_halving(&table, 10, 0).unwrap();
        // Round one: 3 arms x 1 pull; round two: 2 arms x 2 pulls.
        assert_eq!(trace.stop_time, 7);
        assert_eq!(trace.stop_reason, StopReason::HalvingComplete);
        let survivors = (1..=3).filter(|&k| trace.state.count(k) == 3).count();
        assert_eq!(survivors, 2);
    }

    #[test]
    fn halving_two_arms_single_round() {
        let table = bern_table(&[1.0, 0.0]);
        let trace = run_sequential_halving(&table, 4, 0).unwrap();
        assert_eq!(trace.stop_time, 4);
        assert_eq!(trace.state.count(1), 2);
        assert_eq!(trace.state.count(2), 2);
        assert_eq!(trace.kappa, 1);
    }

    #[test]
    fn halving_degenerate_arms_pick_the_unit_arm() {
        let table = bern_table(&[1.0, 0.0, 0.0, 0.0]);
        let trace = run_sequential_halving(&table, 16, 0).unwrap();
        assert_eq!(trace.kappa, 1);
        // |A_{r+1}| = ceil(|A_r| / 2) each round, ending at one arm.
        assert_eq!(halving_rounds(4), 2);
    }

    #[test]
    fn halving_rejects_budgets_below_one_pull_per_round() {
        let table = bern_table(&[0.5, 0.5, 0.5]);
        assert!(run_sequential_halving(&table, 5, 0).is_err());
        assert!(run_sequential_halving(&table, 6, 0).is_ok());
    }

    #[test]
    fn halving_survivor_count_shrinks_by_half_each_round() {
        // K = 5 goes 5 -> 3 -> 2 -> 1 over three rounds.
        let table = bern_table(&[0.9, 0.7, 0.5, 0.3, 0.1]);
        let budget = 5 * 3 * 2; // comfortably above one pull per arm per round
        let trace = run_sequential_halving(&table, budget, 0).unwrap();
        assert_eq!(trace.stop_reason, StopReason::HalvingComplete);
        assert!((1..=5).contains(&trace.kappa));
    }
}
