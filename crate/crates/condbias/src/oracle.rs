//! Exhaustive verification of monotonicity properties on finite instances.
//!
//! The oracle enumerates every reward table over a finite support (only the
//! rows a run can actually reach within the horizon), replays trials under
//! single-cell perturbations, and checks that the quantities driving the
//! bias signs move in the claimed direction:
//!
//! * condition monotonicity of `1(C) / N_k(T)` under upward changes of the
//!   target arm's cells (compared as exact rationals, never floats);
//! * optimistic sampling: `N_k(t)` non-decreasing in arm k's own cells for
//!   every `t` up to the horizon, with the sampling rule run free of any
//!   stopping interplay;
//! * the count coupling of the lil'UCB sampler across tables differing only
//!   in one arm's column;
//! * the count and chosen-indicator coupling of sequential halving.
//!
//! Scans cover the whole space (no early exit), so the reported comparison
//! count is deterministic and a counterexample is always the
//! lexicographically first one in (table, cell, raised value) order.

use serde::{Deserialize, Serialize};

use crate::bias::ConditionSpec;
use crate::engine::{
    halving_round_budget, halving_rounds, run_design, run_trial, Design, Trace,
};
use crate::exec::map_chunks;
use crate::rules::{ChoosingRule, SamplingRule, StoppingRule};
use crate::tabular::{ArmIndex, ArmSpec, RandomnessSource, RewardTable};
use crate::{Error, Result};

const TABLES_PER_CHUNK: u64 = 512;

/// Claimed direction of a monotone response.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Increasing,
    Decreasing,
}

/// Which property a report verified.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CheckKind {
    ConditionMonotonicity { direction: Direction },
    OptimisticSampling,
    LilUcbCoupling,
    HalvingCoupling,
}

impl CheckKind {
    pub fn label(&self) -> String {
        match self {
            CheckKind::ConditionMonotonicity { direction } => format!(
                "condition_monotonicity[{}]",
                match direction {
                    Direction::Increasing => "increasing",
                    Direction::Decreasing => "decreasing",
                }
            ),
            CheckKind::OptimisticSampling => "optimistic_sampling".into(),
            CheckKind::LilUcbCoupling => "lil_ucb_coupling".into(),
            CheckKind::HalvingCoupling => "halving_coupling".into(),
        }
    }
}

// ---------------------------------------------------------------------------
// Instances
// ---------------------------------------------------------------------------

/// A finite, fully enumerable stand-in for the infinite tabular model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteInstance {
    pub label: String,
    pub num_arms: usize,
    /// Shared per-arm support, strictly ascending, at least two values.
    pub support: Vec<f64>,
    /// Horizon for rule-driven designs; halving designs derive their total
    /// pull count from the budget.
    pub horizon: u64,
    pub design: Design,
    /// The arm whose cells are perturbed in condition checks.
    pub target_arm: ArmIndex,
    pub condition: ConditionSpec,
    /// Enumeration size guard; instances exceeding it are rejected.
    pub max_tables: u64,
}

/// Default enumeration guard: 10^7 tables.
pub const DEFAULT_MAX_TABLES: u64 = 10_000_000;

impl FiniteInstance {
    pub fn validate(&self) -> Result<()> {
        if self.support.len() < 2 {
            return Err(Error::InvalidConfig(
                "an oracle instance needs a support with at least two values".into(),
            ));
        }
        if self.support.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidConfig("support must be strictly ascending".into()));
        }
        if self.target_arm < 1 || self.target_arm > self.num_arms {
            return Err(Error::InvalidConfig(format!(
                "target arm {} outside 1..={}",
                self.target_arm, self.num_arms
            )));
        }
        if self.horizon < 1 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        self.design.validate_for(self.num_arms)?;
        self.condition.validate_for(self.num_arms)?;
        Ok(())
    }

    /// Rows of arm `k` reachable by any run of the instance.
    fn reachable_rows(&self, k: ArmIndex) -> u64 {
        match &self.design {
            Design::Rules { sampling, .. } => {
                sampling.max_pulls_within(self.horizon, k, self.num_arms)
            }
            Design::SequentialHalving { budget } => {
                // An arm active in every round draws every round budget.
                let rounds = halving_rounds(self.num_arms);
                let mut active = self.num_arms;
                let mut total = 0;
                for _ in 0..rounds {
                    total += halving_round_budget(*budget, active, self.num_arms);
                    active = active.div_ceil(2);
                }
                total
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Table enumeration
// ---------------------------------------------------------------------------

/// Cell layout and mixed-radix indexing for the table space.
struct Enumeration {
    /// Cells in (arm, row) order; digit position j corresponds to cells[j].
    cells: Vec<(u64, ArmIndex)>,
    support: Vec<f64>,
    arms: Vec<ArmSpec>,
    total_tables: u64,
}

impl Enumeration {
    fn new(inst: &FiniteInstance) -> Result<Self> {
        inst.validate()?;
        let mut cells = Vec::new();
        for k in 1..=inst.num_arms {
            for row in 1..=inst.reachable_rows(k) {
                cells.push((row, k));
            }
        }
        let base = inst.support.len() as u128;
        let mut total: u128 = 1;
        for _ in &cells {
            total = total.saturating_mul(base);
        }
        if total > inst.max_tables as u128 {
            return Err(Error::InstanceTooLarge(format!(
                "{} tables ({} cells over {} support values) exceed the guard of {}",
                total,
                cells.len(),
                inst.support.len(),
                inst.max_tables
            )));
        }
        Ok(Enumeration {
            cells,
            support: inst.support.clone(),
            arms: vec![ArmSpec::uniform_on(inst.support.clone()); inst.num_arms],
            total_tables: total as u64,
        })
    }

    fn digits(&self, mut index: u64) -> Vec<usize> {
        let base = self.support.len() as u64;
        let mut digits = Vec::with_capacity(self.cells.len());
        for _ in &self.cells {
            digits.push((index % base) as usize);
            index /= base;
        }
        digits
    }

    fn table_from_digits(&self, digits: &[usize]) -> RewardTable {
        let mut table =
            RewardTable::new(0, self.arms.clone()).expect("uniform support arms are valid");
        for (pos, &(row, arm)) in self.cells.iter().enumerate() {
            table = table
                .with_cell_overridden(row, arm, self.support[digits[pos]])
                .expect("enumerated cells are in range");
        }
        table
    }

    /// Digit positions belonging to one arm's column.
    fn column_positions(&self, k: ArmIndex) -> Vec<usize> {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, (_, arm))| *arm == k)
            .map(|(pos, _)| pos)
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// One stored table as explicit cell values.
pub type TableCells = Vec<(u64, ArmIndex, f64)>;

/// A replayable violation: the two tables, what changed, and the two
/// evaluated quantities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub base_cells: TableCells,
    pub perturbed_cells: TableCells,
    /// Human description of the perturbation.
    pub changed: String,
    /// Quantity under the base table.
    pub lhs: String,
    /// Quantity under the perturbed table.
    pub rhs: String,
    /// The violated relation.
    pub violated: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleVerdict {
    Pass,
    Counterexample,
}

/// Outcome of an exhaustive check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub instance: String,
    pub check: CheckKind,
    pub verdict: OracleVerdict,
    pub tables_enumerated: u64,
    pub comparisons: u64,
    pub counterexample: Option<Counterexample>,
}

impl MonotonicityReport {
    pub fn passed(&self) -> bool {
        self.verdict == OracleVerdict::Pass
    }

    /// Re-run the stored violating pair and return the freshly evaluated
    /// quantities; a sound counterexample reproduces `(lhs, rhs)` exactly.
    pub fn replay(&self, inst: &FiniteInstance) -> Result<(String, String)> {
        let cex = self.counterexample.as_ref().ok_or_else(|| {
            Error::InvalidArgument("nothing to replay: the check passed".into())
        })?;
        let base = table_from_cells(inst, &cex.base_cells)?;
        let pert = table_from_cells(inst, &cex.perturbed_cells)?;
        let changed_arm = changed_arm(&cex.base_cells, &cex.perturbed_cells)?;
        let violation = evaluate_pair(inst, &self.check, &base, &pert, changed_arm)?;
        violation
            .map(|v| (v.lhs, v.rhs))
            .ok_or_else(|| Error::ContractViolation("stored counterexample does not replay".into()))
    }
}

fn table_from_cells(inst: &FiniteInstance, cells: &TableCells) -> Result<RewardTable> {
    let arms = vec![ArmSpec::uniform_on(inst.support.clone()); inst.num_arms];
    let mut table = RewardTable::new(0, arms)?;
    for &(row, arm, value) in cells {
        table = table.with_cell_overridden(row, arm, value)?;
    }
    Ok(table)
}

fn changed_arm(base: &TableCells, pert: &TableCells) -> Result<ArmIndex> {
    for (&(row, arm, a), &(row2, arm2, b)) in base.iter().zip(pert) {
        if row != row2 || arm != arm2 {
            return Err(Error::InvalidArgument("misaligned counterexample tables".into()));
        }
        if a != b {
            return Ok(arm);
        }
    }
    Err(Error::InvalidArgument("counterexample tables are identical".into()))
}

fn cells_of(enumeration: &Enumeration, digits: &[usize]) -> TableCells {
    enumeration
        .cells
        .iter()
        .zip(digits)
        .map(|(&(row, arm), &d)| (row, arm, enumeration.support[d]))
        .collect()
}

// ---------------------------------------------------------------------------
// Quantity evaluation shared by scan and replay
// ---------------------------------------------------------------------------

struct Violation {
    lhs: String,
    rhs: String,
    violated: String,
}

/// `1(C) / N_k(T)` as an exact rational; zero when the condition fails.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
struct ConditionRatio {
    indicator: bool,
    pulls: u64,
}

impl ConditionRatio {
    fn of(trace: &Trace, condition: &ConditionSpec, k: ArmIndex) -> Result<Self> {
        let indicator = condition.matches(trace);
        let pulls = trace.state.count(k);
        if indicator && pulls == 0 {
            return Err(Error::ContractViolation(
                "condition holds while the target arm is unsampled".into(),
            ));
        }
        Ok(ConditionRatio { indicator, pulls })
    }

    fn le(self, other: Self) -> bool {
        // ia/na <= ib/nb with positive denominators, zero when !indicator.
        let (ia, na) = if self.indicator { (1, self.pulls) } else { (0, 1) };
        let (ib, nb) = if other.indicator { (1, other.pulls) } else { (0, 1) };
        ia * nb <= ib * na
    }

    fn format(self) -> String {
        if self.indicator {
            format!("1/{}", self.pulls)
        } else {
            "0".into()
        }
    }
}

fn run_full(inst: &FiniteInstance, table: &RewardTable) -> Result<Trace> {
    let noise = RandomnessSource::new(0);
    let trace = run_design(table, &noise, &inst.design, inst.horizon)?;
    if trace.truncated {
        return Err(Error::InvalidConfig(
            "the instance horizon does not bound the stopping time; add a fixed-time component"
                .into(),
        ));
    }
    Ok(trace)
}

/// Run only the sampling rule for exactly `horizon` pulls (no stopping
/// interplay); used by the sampling facts, which quantify over every t.
fn run_sampling_only(inst: &FiniteInstance, table: &RewardTable) -> Result<Trace> {
    let sampling = match &inst.design {
        Design::Rules { sampling, .. } => sampling.clone(),
        Design::SequentialHalving { .. } => {
            return Err(Error::InvalidConfig(
                "sampling checks need a rule-driven design".into(),
            ))
        }
    };
    run_trial(
        table,
        &RandomnessSource::new(0),
        &sampling,
        &StoppingRule::FixedTime {
            max_time: inst.horizon,
        },
        &ChoosingRule::Fixed { arm: 1 },
        inst.horizon,
    )
}

/// Evaluate one (base, perturbed) pair under a check; `Some` is a violation.
fn evaluate_pair(
    inst: &FiniteInstance,
    check: &CheckKind,
    base: &RewardTable,
    pert: &RewardTable,
    changed_arm: ArmIndex,
) -> Result<Option<Violation>> {
    match check {
        CheckKind::ConditionMonotonicity { direction } => {
            let k = inst.target_arm;
            let q0 = ConditionRatio::of(&run_full(inst, base)?, &inst.condition, k)?;
            let q1 = ConditionRatio::of(&run_full(inst, pert)?, &inst.condition, k)?;
            let ok = match direction {
                Direction::Decreasing => q1.le(q0),
                Direction::Increasing => q0.le(q1),
            };
            Ok((!ok).then(|| Violation {
                lhs: q0.format(),
                rhs: q1.format(),
                violated: format!(
                    "1(C)/N_{k} must be {} in the raised cell",
                    match direction {
                        Direction::Increasing => "non-decreasing",
                        Direction::Decreasing => "non-increasing",
                    }
                ),
            }))
        }
        CheckKind::OptimisticSampling => {
            let k = changed_arm;
            let base_counts = run_sampling_only(inst, base)?.state.count_history();
            let pert_counts = run_sampling_only(inst, pert)?.state.count_history();
            for (t, (b, p)) in base_counts.iter().zip(&pert_counts).enumerate() {
                if p[k - 1] < b[k - 1] {
                    return Ok(Some(Violation {
                        lhs: format!("N_{k}({}) = {}", t + 1, b[k - 1]),
                        rhs: format!("N_{k}({}) = {}", t + 1, p[k - 1]),
                        violated: format!("optimistic sampling requires N_{k}(t) non-decreasing in X_(i,{k})"),
                    }));
                }
            }
            Ok(None)
        }
        CheckKind::LilUcbCoupling => {
            let k = changed_arm;
            let base_counts = run_sampling_only(inst, base)?.state.count_history();
            let pert_counts = run_sampling_only(inst, pert)?.state.count_history();
            for (t, (b, p)) in base_counts.iter().zip(&pert_counts).enumerate() {
                for j in 1..=inst.num_arms {
                    if j == k {
                        continue;
                    }
                    let bad = (b[k - 1] <= p[k - 1] && b[j - 1] < p[j - 1])
                        || (b[k - 1] >= p[k - 1] && b[j - 1] > p[j - 1]);
                    if bad {
                        return Ok(Some(Violation {
                            lhs: format!("N_{k}({t1}) = {}, N_{j}({t1}) = {}", b[k - 1], b[j - 1], t1 = t + 1),
                            rhs: format!("N_{k}({t1}) = {}, N_{j}({t1}) = {}", p[k - 1], p[j - 1], t1 = t + 1),
                            violated: format!(
                                "count coupling: N_{k}(t) <= N'_{k}(t) must force N_{j}(t) >= N'_{j}(t) and symmetrically"
                            ),
                        }));
                    }
                }
            }
            Ok(None)
        }
        CheckKind::HalvingCoupling => {
            let k = changed_arm;
            let base_trace = run_full(inst, base)?;
            let pert_trace = run_full(inst, pert)?;
            let base_counts = base_trace.state.count_history();
            let pert_counts = pert_trace.state.count_history();
            for (t, (b, p)) in base_counts.iter().zip(&pert_counts).enumerate() {
                if b[k - 1] > p[k - 1] {
                    return Ok(Some(Violation {
                        lhs: format!("N_{k}({}) = {}", t + 1, b[k - 1]),
                        rhs: format!("N_{k}({}) = {}", t + 1, p[k - 1]),
                        violated: format!("halving coupling requires N_{k}(t) <= N'_{k}(t) for all t"),
                    }));
                }
            }
            let base_chosen = base_trace.kappa == k;
            let pert_chosen = pert_trace.kappa == k;
            if base_chosen && !pert_chosen {
                return Ok(Some(Violation {
                    lhs: format!("kappa = {}", base_trace.kappa),
                    rhs: format!("kappa = {}", pert_trace.kappa),
                    violated: format!("halving coupling requires 1(kappa={k}) <= 1(kappa'={k})"),
                }));
            }
            Ok(None)
        }
    }
}

// ---------------------------------------------------------------------------
// Exhaustive scans
// ---------------------------------------------------------------------------

struct ChunkOutcome {
    comparisons: u64,
    /// (order key, counterexample); the order key makes the lexicographic
    /// minimum well-defined across chunks.
    first: Option<(u128, Counterexample)>,
}

fn combine_outcomes(chunks: Vec<Result<ChunkOutcome>>) -> Result<(u64, Option<Counterexample>)> {
    let mut comparisons = 0;
    let mut best: Option<(u128, Counterexample)> = None;
    for chunk in chunks {
        let chunk = chunk?;
        comparisons += chunk.comparisons;
        if let Some((key, cex)) = chunk.first {
            if best.as_ref().is_none_or(|(bk, _)| key < *bk) {
                best = Some((key, cex));
            }
        }
    }
    Ok((comparisons, best.map(|(_, cex)| cex)))
}

/// Scan every table and every upward single-cell change in the columns
/// selected by `arms_to_perturb`, applying `check` to each pair.
fn scan_cell_perturbations(
    inst: &FiniteInstance,
    check: &CheckKind,
    arms_to_perturb: &[ArmIndex],
    threads: usize,
) -> Result<MonotonicityReport> {
    let enumeration = Enumeration::new(inst)?;
    let positions: Vec<usize> = arms_to_perturb
        .iter()
        .flat_map(|&k| enumeration.column_positions(k))
        .collect();
    let support_len = enumeration.support.len();

    let chunks = map_chunks(
        enumeration.total_tables,
        TABLES_PER_CHUNK,
        threads,
        |range| -> Result<ChunkOutcome> {
            let mut outcome = ChunkOutcome {
                comparisons: 0,
                first: None,
            };
            for index in range {
                let digits = enumeration.digits(index);
                let base = enumeration.table_from_digits(&digits);
                for (slot, &pos) in positions.iter().enumerate() {
                    let (row, arm) = enumeration.cells[pos];
                    for raised in digits[pos] + 1..support_len {
                        let pert = base
                            .with_cell_overridden(row, arm, enumeration.support[raised])
                            .expect("enumerated cell");
                        outcome.comparisons += 1;
                        if outcome.first.is_some() {
                            // Still counting, but the earliest violation in
                            // this chunk is already fixed.
                            continue;
                        }
                        if let Some(v) = evaluate_pair(inst, check, &base, &pert, arm)? {
                            let mut pert_cells = cells_of(&enumeration, &digits);
                            pert_cells[pos].2 = enumeration.support[raised];
                            let key = ((index as u128) * positions.len() as u128
                                + slot as u128)
                                * support_len as u128
                                + raised as u128;
                            outcome.first = Some((
                                key,
                                Counterexample {
                                    base_cells: cells_of(&enumeration, &digits),
                                    perturbed_cells: pert_cells,
                                    changed: format!(
                                        "cell (row {row}, arm {arm}): {} -> {}",
                                        enumeration.support[digits[pos]],
                                        enumeration.support[raised]
                                    ),
                                    lhs: v.lhs,
                                    rhs: v.rhs,
                                    violated: v.violated,
                                },
                            ));
                        }
                    }
                }
            }
            Ok(outcome)
        },
    );

    let (comparisons, counterexample) = combine_outcomes(chunks)?;
    Ok(MonotonicityReport {
        instance: inst.label.clone(),
        check: check.clone(),
        verdict: if counterexample.is_some() {
            OracleVerdict::Counterexample
        } else {
            OracleVerdict::Pass
        },
        tables_enumerated: enumeration.total_tables,
        comparisons,
        counterexample,
    })
}

/// Verify the claimed direction of `1(C) / N_k(T)` in every cell of the
/// target arm's column.
pub fn check_condition_monotonicity(
    inst: &FiniteInstance,
    direction: Direction,
    threads: usize,
) -> Result<MonotonicityReport> {
    scan_cell_perturbations(
        inst,
        &CheckKind::ConditionMonotonicity { direction },
        &[inst.target_arm],
        threads,
    )
}

/// Verify that the sampling rule is optimistic for every arm: each arm's
/// pull count is non-decreasing in its own cells at every time.
pub fn check_optimistic_sampling(inst: &FiniteInstance, threads: usize) -> Result<MonotonicityReport> {
    let arms: Vec<ArmIndex> = (1..=inst.num_arms).collect();
    scan_cell_perturbations(inst, &CheckKind::OptimisticSampling, &arms, threads)
}

/// Verify the two count-coupling implications (and their equality corollary)
/// for every pair of tables differing only in one arm's column.
pub fn check_lil_ucb_coupling(inst: &FiniteInstance, threads: usize) -> Result<MonotonicityReport> {
    match &inst.design {
        Design::Rules {
            sampling: SamplingRule::LilUcb { .. },
            ..
        } => {}
        _ => {
            return Err(Error::InvalidConfig(
                "the count-coupling check targets the lil'UCB sampling rule".into(),
            ))
        }
    }
    let enumeration = Enumeration::new(inst)?;
    let check = CheckKind::LilUcbCoupling;
    let support_len = enumeration.support.len() as u64;

    let mut comparisons_total = 0u64;
    let mut first: Option<(u128, Counterexample)> = None;

    for k in 1..=inst.num_arms {
        let column: Vec<usize> = enumeration.column_positions(k);
        let others: Vec<usize> = (0..enumeration.cells.len())
            .filter(|pos| !column.contains(pos))
            .collect();
        let column_space = support_len.pow(column.len() as u32);
        let other_space = support_len.pow(others.len() as u32);

        let chunks = map_chunks(other_space, 64, threads, |range| -> Result<ChunkOutcome> {
            let mut outcome = ChunkOutcome {
                comparisons: 0,
                first: None,
            };
            let mut digits = vec![0usize; enumeration.cells.len()];
            for other_index in range {
                // Fill the fixed columns.
                let mut rem = other_index;
                for &pos in &others {
                    digits[pos] = (rem % support_len) as usize;
                    rem /= support_len;
                }
                for a in 0..column_space {
                    set_column(&mut digits, &column, a, support_len);
                    let base = enumeration.table_from_digits(&digits);
                    let base_cells = cells_of(&enumeration, &digits);
                    for b in a + 1..column_space {
                        set_column(&mut digits, &column, b, support_len);
                        let pert = enumeration.table_from_digits(&digits);
                        outcome.comparisons += 1;
                        if outcome.first.is_none() {
                            if let Some(v) = evaluate_pair(inst, &check, &base, &pert, k)? {
                                let key = ((k as u128 * other_space as u128 + other_index as u128)
                                    * column_space as u128
                                    + a as u128)
                                    * column_space as u128
                                    + b as u128;
                                outcome.first = Some((
                                    key,
                                    Counterexample {
                                        base_cells: base_cells.clone(),
                                        perturbed_cells: cells_of(&enumeration, &digits),
                                        changed: format!("column of arm {k} reassigned"),
                                        lhs: v.lhs,
                                        rhs: v.rhs,
                                        violated: v.violated,
                                    },
                                ));
                            }
                        }
                    }
                    set_column(&mut digits, &column, a, support_len);
                }
            }
            Ok(outcome)
        });

        let (comparisons, cex) = combine_outcomes(chunks)?;
        comparisons_total += comparisons;
        if first.is_none() {
            first = cex.map(|c| (0, c));
        }
    }

    Ok(MonotonicityReport {
        instance: inst.label.clone(),
        check,
        verdict: if first.is_some() {
            OracleVerdict::Counterexample
        } else {
            OracleVerdict::Pass
        },
        tables_enumerated: enumeration.total_tables,
        comparisons: comparisons_total,
        counterexample: first.map(|(_, c)| c),
    })
}

fn set_column(digits: &mut [usize], column: &[usize], mut value: u64, base: u64) {
    for &pos in column {
        digits[pos] = (value % base) as usize;
        value /= base;
    }
}

/// Verify sequential halving's count coupling and chosen-arm indicator
/// implication for every upward single-cell change in every column.
pub fn check_halving_coupling(inst: &FiniteInstance, threads: usize) -> Result<MonotonicityReport> {
    if !matches!(inst.design, Design::SequentialHalving { .. }) {
        return Err(Error::InvalidConfig(
            "the halving-coupling check needs a sequential-halving design".into(),
        ));
    }
    let arms: Vec<ArmIndex> = (1..=inst.num_arms).collect();
    scan_cell_perturbations(inst, &CheckKind::HalvingCoupling, &arms, threads)
}

/// Dispatch a check by kind.
pub fn run_check(inst: &FiniteInstance, check: &CheckKind, threads: usize) -> Result<MonotonicityReport> {
    match check {
        CheckKind::ConditionMonotonicity { direction } => {
            check_condition_monotonicity(inst, *direction, threads)
        }
        CheckKind::OptimisticSampling => check_optimistic_sampling(inst, threads),
        CheckKind::LilUcbCoupling => check_lil_ucb_coupling(inst, threads),
        CheckKind::HalvingCoupling => check_halving_coupling(inst, threads),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e1_instance(condition: ConditionSpec) -> FiniteInstance {
        FiniteInstance {
            label: "e1-h3".into(),
            num_arms: 1,
            support: vec![0.0, 1.0],
            horizon: 3,
            design: Design::Rules {
                sampling: SamplingRule::SingleArm,
                stopping: StoppingRule::MinOf {
                    rules: vec![
                        StoppingRule::UpperBoundary { alpha: 0.2 },
                        StoppingRule::FixedTime { max_time: 3 },
                    ],
                },
                choosing: ChoosingRule::Fixed { arm: 1 },
            },
            target_arm: 1,
            condition,
            max_tables: DEFAULT_MAX_TABLES,
        }
    }

    fn lil_instance(num_arms: usize, horizon: u64) -> FiniteInstance {
        FiniteInstance {
            label: format!("lilucb-k{num_arms}"),
            num_arms,
            support: vec![0.0, 1.0],
            horizon,
            design: Design::Rules {
                sampling: SamplingRule::LilUcb {
                    beta: 0.5,
                    epsilon: 0.1,
                    delta: 0.2,
                    sigma2: 1.0,
                },
                stopping: StoppingRule::LilUcbCount { lambda: 1.0 },
                choosing: ChoosingRule::ArgmaxCount,
            },
            target_arm: 1,
            condition: ConditionSpec::Chosen { arm: 1 },
            max_tables: DEFAULT_MAX_TABLES,
        }
    }

    fn halving_instance(num_arms: usize, budget: u64) -> FiniteInstance {
        FiniteInstance {
            label: format!("halving-k{num_arms}"),
            num_arms,
            support: vec![0.0, 1.0],
            horizon: budget,
            design: Design::SequentialHalving { budget },
            target_arm: 1,
            condition: ConditionSpec::Chosen { arm: 1 },
            max_tables: DEFAULT_MAX_TABLES,
        }
    }

    #[test]
    fn early_stop_ratio_is_decreasing_on_e1() {
        let report = check_condition_monotonicity(
            &e1_instance(ConditionSpec::EarlyStop),
            Direction::Decreasing,
            1,
        )
        .unwrap();
        assert!(report.passed(), "counterexample: {:?}", report.counterexample);
        assert_eq!(report.tables_enumerated, 8);
        assert_eq!(report.comparisons, 8 * 3); // three raisable cells per {0,1} table
    }

    #[test]
    fn line_cross_ratio_is_increasing_on_e1() {
        let report = check_condition_monotonicity(
            &e1_instance(ConditionSpec::LineCross),
            Direction::Increasing,
            1,
        )
        .unwrap();
        assert!(report.passed(), "counterexample: {:?}", report.counterexample);
    }

    #[test]
    fn inverted_chooser_yields_replayable_counterexample() {
        let inst = FiniteInstance {
            label: "broken-argmin".into(),
            num_arms: 2,
            support: vec![0.0, 1.0],
            horizon: 4,
            design: Design::Rules {
                sampling: SamplingRule::RoundRobin { arms: 2 },
                stopping: StoppingRule::FixedTime { max_time: 4 },
                choosing: ChoosingRule::ArgminMean,
            },
            target_arm: 1,
            condition: ConditionSpec::Chosen { arm: 1 },
            max_tables: DEFAULT_MAX_TABLES,
        };
        let report =
            check_condition_monotonicity(&inst, Direction::Increasing, 1).unwrap();
        assert!(!report.passed());
        let cex = report.counterexample.as_ref().unwrap();
        let (lhs, rhs) = report.replay(&inst).unwrap();
        assert_eq!(lhs, cex.lhs);
        assert_eq!(rhs, cex.rhs);
    }

    #[test]
    fn lil_ucb_sampling_is_optimistic_for_two_arms() {
        let report = check_optimistic_sampling(&lil_instance(2, 6), 1).unwrap();
        assert!(report.passed(), "counterexample: {:?}", report.counterexample);
        // R_k = 6 - 1 = 5 rows per arm over two arms.
        assert_eq!(report.tables_enumerated, 1 << 10);
    }

    #[test]
    fn reward_independent_sampling_is_trivially_optimistic() {
        let mut inst = lil_instance(2, 6);
        inst.design = Design::Rules {
            sampling: SamplingRule::AlternateTwoArms,
            stopping: StoppingRule::FixedTime { max_time: 6 },
            choosing: ChoosingRule::Fixed { arm: 1 },
        };
        let report = check_optimistic_sampling(&inst, 1).unwrap();
        assert!(report.passed());
    }

    #[test]
    fn anti_optimistic_sampler_is_caught() {
        let mut inst = lil_instance(2, 6);
        inst.label = "broken-anti-lil".into();
        inst.design = Design::Rules {
            sampling: SamplingRule::LilUcbArgmin {
                beta: 0.5,
                epsilon: 0.1,
                delta: 0.2,
                sigma2: 1.0,
            },
            stopping: StoppingRule::FixedTime { max_time: 6 },
            choosing: ChoosingRule::Fixed { arm: 1 },
        };
        let report = check_optimistic_sampling(&inst, 1).unwrap();
        assert!(!report.passed());
        let (lhs, rhs) = report.replay(&inst).unwrap();
        let cex = report.counterexample.unwrap();
        assert_eq!((lhs, rhs), (cex.lhs, cex.rhs));
    }

    #[test]
    fn lil_ucb_coupling_holds_for_two_arms() {
        let report = check_lil_ucb_coupling(&lil_instance(2, 6), 1).unwrap();
        assert!(report.passed(), "counterexample: {:?}", report.counterexample);
        // With K = 2 the counting identity N_1 + N_2 = t forces the
        // implication; the oracle confirms it rather than assuming it.
        assert!(report.comparisons > 0);
    }

    #[test]
    fn halving_coupling_holds_for_two_arms() {
        let report = check_halving_coupling(&halving_instance(2, 4), 1).unwrap();
        assert!(report.passed(), "counterexample: {:?}", report.counterexample);
        assert_eq!(report.tables_enumerated, 16);
    }

    #[test]
    fn perturbing_unread_rows_changes_nothing() {
        // Halving with K=2, T=4 pulls each arm twice; row 3 exists only if
        // reachable-row accounting said so. The enumeration must not include
        // unreachable rows at all.
        let inst = halving_instance(2, 4);
        let enumeration = Enumeration::new(&inst).unwrap();
        assert!(enumeration.cells.iter().all(|&(row, _)| row <= 2));

        // And an explicit unread-cell perturbation on a real table is inert.
        let table = table_from_cells(
            &inst,
            &vec![(1, 1, 1.0), (2, 1, 0.0), (1, 2, 0.0), (2, 2, 1.0)],
        )
        .unwrap();
        let bumped = table.with_cell_overridden(9, 1, 1.0).unwrap();
        let a = run_full(&inst, &table).unwrap();
        let b = run_full(&inst, &bumped).unwrap();
        assert_eq!(a.kappa, b.kappa);
        assert_eq!(a.state.pulls(), b.state.pulls());
    }

    #[test]
    fn size_guard_rejects_oversized_instances() {
        let mut inst = lil_instance(3, 6);
        inst.max_tables = 100;
        assert!(matches!(
            check_optimistic_sampling(&inst, 1),
            Err(Error::InstanceTooLarge(_))
        ));
    }

    #[test]
    fn scans_are_worker_count_invariant() {
        let inst = halving_instance(3, 12);
        let seq = check_halving_coupling(&inst, 1).unwrap();
        let par = check_halving_coupling(&inst, 4) .unwrap();
        assert_eq!(seq, par);
    }
}
