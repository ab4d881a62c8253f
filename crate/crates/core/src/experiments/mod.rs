//! Multi-run experiments: scenario grids, paired lifts against the
//! rule-based baseline, confidence intervals and report emission.

pub mod report;
pub mod stats;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policies::{PolicyKind, PolicySpec};
use crate::rng::{run_seed, substream, Stream};
use crate::sim::{collect_logged_data, replay_verify, simulate, CollectionScenario, SimulationConfig};
use crate::world::{ConversionScenario, ReferencePool, WorldBase, WorldConfig};

pub use report::{emit_plot_data, emit_svg, emit_table};
pub use stats::{CiMethod, Interval, Pairing};

/// A scenario dimension varied in one sub-table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Collection,
    Conversion,
    Delay,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::Collection, Axis::Conversion, Axis::Delay];

    pub fn as_str(self) -> &'static str {
        match self {
            Axis::Collection => "collection",
            Axis::Conversion => "conversion",
            Axis::Delay => "delay",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Axis::Collection => "Varying data collection",
            Axis::Conversion => "Varying lead conversion",
            Axis::Delay => "Varying delay",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "collection" => Ok(Axis::Collection),
            "conversion" => Ok(Axis::Conversion),
            "delay" => Ok(Axis::Delay),
            other => Err(Error::config(format!("unknown axis `{other}`"))),
        }
    }
}

/// One scenario combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub collection: CollectionScenario,
    pub conversion: ConversionScenario,
    pub delay_lambda: f64,
}

impl Default for Cell {
    fn default() -> Self {
        Cell {
            collection: CollectionScenario::Observational,
            conversion: ConversionScenario::FhatAdjusted,
            delay_lambda: 1.0,
        }
    }
}

impl Cell {
    pub fn key(&self) -> String {
        format!("{}/{}/{}", self.collection, self.conversion, self.delay_lambda)
    }

    /// Column heading when this cell appears in the given axis's table.
    pub fn label(&self, axis: Axis) -> String {
        match axis {
            Axis::Collection => self.collection.as_str().to_string(),
            Axis::Conversion => self.conversion.as_str().to_string(),
            Axis::Delay => format!("lambda_{}", self.delay_lambda),
        }
    }
}

/// Day counts shared by every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub collection_days: u32,
    pub horizon_days: u32,
    pub leads_per_day: usize,
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            collection_days: 90,
            horizon_days: 365,
            leads_per_day: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    /// Scenario used for every axis not being varied.
    pub base_cell: Cell,
    pub axes: Vec<Axis>,
    /// Delay multipliers compared on the delay axis.
    pub delay_lambdas: Vec<f64>,
    pub policies: Vec<PolicySpec>,
    pub runs: usize,
    pub base_seed: u64,
    pub protocol: Protocol,
    pub world: WorldConfig,
    pub ci_method: CiMethod,
    pub bootstrap_resamples: usize,
    pub pairing: Pairing,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            base_cell: Cell::default(),
            axes: Axis::ALL.to_vec(),
            delay_lambdas: vec![0.0, 0.5, 1.0],
            policies: PolicySpec::default_list(),
            runs: 100,
            base_seed: 2020,
            protocol: Protocol::default(),
            world: WorldConfig::default(),
            ci_method: CiMethod::Normal,
            bootstrap_resamples: 2000,
            pairing: Pairing::Paired,
        }
    }
}

/// Column layout of one sub-table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisTable {
    pub axis: Axis,
    /// `(column label, index into the cell list)`.
    pub columns: Vec<(String, usize)>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.runs < 2 {
            return Err(Error::config("experiment.runs must be at least 2"));
        }
        if self.policies.is_empty() {
            return Err(Error::config("at least one policy is required"));
        }
        for p in &self.policies {
            p.validate()?;
        }
        let mut labels: Vec<String> = self.policies.iter().map(PolicySpec::label).collect();
        labels.sort();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::config(format!("duplicate policy label `{}`", w[0])));
        }
        if self.axes.contains(&Axis::Delay) && self.delay_lambdas.is_empty() {
            return Err(Error::config("delay axis needs at least one lambda"));
        }
        for &l in self.delay_lambdas.iter().chain([&self.base_cell.delay_lambda]) {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::config(format!("delay lambda must be >= 0, got {l}")));
            }
        }
        if self.protocol.horizon_days < 1 {
            return Err(Error::config("horizon_days must be at least 1"));
        }
        self.world.validate()
    }

    /// Policy list with the rule-based baseline guaranteed present.
    pub fn with_baseline(mut self) -> Self {
        if !self.policies.iter().any(|p| p.kind == PolicyKind::RuleBased) {
            self.policies.insert(0, PolicySpec::new(PolicyKind::RuleBased));
        }
        self
    }

    pub fn baseline_index(&self) -> Result<usize> {
        self.policies
            .iter()
            .position(|p| p.kind == PolicyKind::RuleBased)
            .ok_or_else(|| Error::config("policy list must include rule_based"))
    }

    /// Distinct cells, base cell first, then each axis's variations in order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = vec![self.base_cell];
        for (_, cell) in self.axis_cells() {
            if !out.contains(&cell) {
                out.push(cell);
            }
        }
        out
    }

    fn axis_cells(&self) -> Vec<(Axis, Cell)> {
        let b = self.base_cell;
        let mut out = Vec::new();
        for &axis in &self.axes {
            match axis {
                Axis::Collection => out.extend(CollectionScenario::ALL.map(|c| (axis, Cell { collection: c, ..b }))),
                Axis::Conversion => out.extend(ConversionScenario::ALL.map(|c| (axis, Cell { conversion: c, ..b }))),
                Axis::Delay => out.extend(self.delay_lambdas.iter().map(|&l| {
                    (
                        axis,
                        Cell {
                            delay_lambda: l,
                            ..b
                        },
                    )
                })),
            }
        }
        out
    }

    pub fn tables(&self) -> Vec<AxisTable> {
        let cells = self.cells();
        let index = |c: &Cell| cells.iter().position(|x| x == c).expect("cell listed");
        self.axes
            .iter()
            .map(|&axis| AxisTable {
                axis,
                columns: self
                    .axis_cells()
                    .iter()
                    .filter(|(a, _)| *a == axis)
                    .map(|(_, c)| (c.label(axis), index(c)))
                    .collect(),
            })
            .collect()
    }

    pub fn run_seeds(&self) -> Vec<u64> {
        (0..self.runs as u64).map(|i| run_seed(self.base_seed, i)).collect()
    }
}

/// Cumulative rewards of every policy in one run of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRewards {
    pub run: usize,
    pub seed: u64,
    /// Indexed like `ExperimentSpec::policies`.
    pub rewards: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub cell: String,
    pub run: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftSummary {
    pub policy: String,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Runs entering the estimate.
    pub runs: usize,
    /// Runs dropped because the baseline earned zero reward.
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub cell: Cell,
    pub summaries: Vec<LiftSummary>,
    pub runs: Vec<RunRewards>,
    pub failed_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub format: String,
    pub version: u32,
    pub spec: ExperimentSpec,
    /// Full resolved configuration, when run from a config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    pub run_seeds: Vec<u64>,
    pub tables: Vec<AxisTable>,
    pub cells: Vec<CellReport>,
    pub failures: Vec<RunFailure>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Internal(format!("report serialization: {e}")))
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let r: ExperimentReport = serde_json::from_str(text).map_err(|e| Error::parse(origin, e.to_string()))?;
        if r.format != REPORT_FORMAT {
            return Err(Error::parse(origin, "not a salesim experiment report"));
        }
        Ok(r)
    }

    pub fn summary(&self, cell: &Cell, policy: &str) -> Option<&LiftSummary> {
        self.cells
            .iter()
            .find(|c| &c.cell == cell)?
            .summaries
            .iter()
            .find(|s| s.policy == policy)
    }
}

const REPORT_FORMAT: &str = "salesim-experiment";

/// One run of one cell: realize the world, collect logged data, then
/// evaluate every policy on the same run seed.
pub fn run_once(base: &WorldBase, spec: &ExperimentSpec, cell: &Cell, run: usize) -> Result<RunRewards> {
    let seed = run_seed(spec.base_seed, run as u64);
    let world_cfg = WorldConfig {
        conversion: cell.conversion,
        delay_lambda: cell.delay_lambda,
        ..spec.world.clone()
    };
    let world = base.realize(&world_cfg, seed)?;
    let p = &spec.protocol;
    let logged = collect_logged_data(cell.collection, &world, p.collection_days, p.leads_per_day, seed)?;
    let sim_cfg = SimulationConfig::new(p.horizon_days, p.leads_per_day, seed);
    let mut rewards = Vec::with_capacity(spec.policies.len());
    for ps in &spec.policies {
        let mut policy = ps.build(world.context_dim())?;
        let result = simulate(policy.as_mut(), &world, Some(&logged), &sim_cfg)?;
        replay_verify(&result)?;
        rewards.push(result.cumulative_reward);
    }
    Ok(RunRewards { run, seed, rewards })
}

/// Aggregate one cell's runs into per-policy lift summaries.
pub fn summarize(spec: &ExperimentSpec, cell_index: usize, runs: &[RunRewards]) -> Result<Vec<LiftSummary>> {
    let base = spec.baseline_index()?;
    let column = |i: usize| -> Vec<f64> { runs.iter().map(|r| r.rewards[i] as f64).collect() };
    let baseline = column(base);
    let mut out = Vec::with_capacity(spec.policies.len());
    for (i, ps) in spec.policies.iter().enumerate() {
        let mut rng = substream(spec.base_seed, Stream::Bootstrap, (cell_index * 1024 + i) as u64);
        let (ci, used, dropped) = if i == base {
            let zero_base = baseline.iter().filter(|&&b| b == 0.0).count();
            (Interval::ZERO, runs.len() - zero_base, zero_base)
        } else {
            let rewards = column(i);
            match spec.pairing {
                Pairing::Paired => {
                    let (lifts, dropped) = stats::paired_lifts(&rewards, &baseline);
                    let ci = match spec.ci_method {
                        CiMethod::Normal => stats::normal_ci(&lifts),
                        CiMethod::Bootstrap => stats::bootstrap_ci(&lifts, spec.bootstrap_resamples, &mut rng),
                    };
                    (ci, lifts.len(), dropped)
                }
                Pairing::Independent => {
                    match stats::independent_lift(
                        &rewards,
                        &baseline,
                        spec.ci_method,
                        spec.bootstrap_resamples,
                        &mut rng,
                    ) {
                        Some(ci) => (ci, runs.len(), 0),
                        None => (Interval::ZERO, 0, runs.len()),
                    }
                }
            }
        };
        out.push(LiftSummary {
            policy: ps.label(),
            mean: ci.mean,
            ci_low: ci.low,
            ci_high: ci.high,
            runs: used,
            dropped,
        });
    }
    Ok(out)
}

/// Run a single cell for `spec.runs` runs and summarize it.
pub fn run_cell(base: &WorldBase, spec: &ExperimentSpec, cell: &Cell) -> Result<CellReport> {
    spec.validate()?;
    let outcomes: Vec<Result<RunRewards>> =
        (0..spec.runs).into_par_iter().map(|r| run_once(base, spec, cell, r)).collect();
    let runs = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(CellReport {
        cell: *cell,
        summaries: summarize(spec, 0, &runs)?,
        runs,
        failed_runs: 0,
    })
}

/// Run the full grid. Failing runs are recorded in `failures` and left out
/// of the aggregates; the caller decides how to treat them.
pub fn run_experiment(pool: ReferencePool, spec: &ExperimentSpec, workers: Option<usize>) -> Result<ExperimentReport> {
    spec.validate()?;
    spec.baseline_index()?;
    let base = WorldBase::fit(pool, &spec.world, spec.base_seed)?;
    let cells = spec.cells();
    let units: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..spec.runs).map(move |r| (c, r))).collect();
    let work = || -> Vec<Result<RunRewards>> {
        units
            .par_iter()
            .map(|&(c, r)| run_once(&base, spec, &cells[c], r))
            .collect()
    };
    let outcomes = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Internal(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };

    let mut per_cell: Vec<Vec<RunRewards>> = vec![Vec::new(); cells.len()];
    let mut failed = vec![0usize; cells.len()];
    let mut failures = Vec::new();
    for (&(c, r), outcome) in units.iter().zip(outcomes) {
        match outcome {
            Ok(rr) => per_cell[c].push(rr),
            Err(e) => {
                failed[c] += 1;
                failures.push(RunFailure {
                    cell: cells[c].key(),
                    run: r,
                    seed: run_seed(spec.base_seed, r as u64),
                    message: e.to_string(),
                });
            }
        }
    }
    let cell_reports = cells
        .iter()
        .zip(per_cell)
        .zip(failed)
        .enumerate()
        .map(|(i, ((cell, runs), failed_runs))| {
            Ok(CellReport {
                cell: *cell,
                summaries: summarize(spec, i, &runs)?,
                runs,
                failed_runs,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ExperimentReport {
        format: REPORT_FORMAT.into(),
        version: 1,
        spec: spec.clone(),
        config: None,
        run_seeds: spec.run_seeds(),
        tables: spec.tables(),
        cells: cell_reports,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rr(run: usize, rewards: &[u64]) -> RunRewards {
        RunRewards {
            run,
            seed: run as u64,
            rewards: rewards.to_vec(),
        }
    }

    fn two_policy_spec() -> ExperimentSpec {
        ExperimentSpec {
            policies: vec![PolicySpec::new(PolicyKind::RuleBased), PolicySpec::new(PolicyKind::LinUcb)],
            runs: 2,
            ..ExperimentSpec::default()
        }
    }

    #[test]
    fn default_grid_shares_the_base_cell() {
        let spec = ExperimentSpec::default();
        let cells = spec.cells();
        assert_eq!(cells.len(), 7);
        assert_eq!(cells[0], Cell::default());
        let tables = spec.tables();
        assert_eq!(tables.len(), 3);
        for t in &tables {
            assert_eq!(t.columns.len(), 3);
            assert!(t.columns.iter().any(|(_, i)| *i == 0));
        }
    }

    #[test]
    fn baseline_is_zero_and_lift_is_per_run() {
        let spec = two_policy_spec();
        let s = summarize(&spec, 0, &[rr(0, &[100, 120]), rr(1, &[100, 120])]).unwrap();
        assert_eq!((s[0].mean, s[0].ci_low, s[0].ci_high), (0.0, 0.0, 0.0));
        assert_eq!((s[1].mean, s[1].ci_low, s[1].ci_high), (20.0, 20.0, 20.0));
    }

    #[test]
    fn zero_baseline_runs_are_counted() {
        let spec = two_policy_spec();
        let s = summarize(&spec, 0, &[rr(0, &[0, 5]), rr(1, &[10, 11]), rr(2, &[10, 13])]).unwrap();
        assert_eq!(s[1].dropped, 1);
        assert_eq!(s[1].runs, 2);
        assert!((s[1].mean - 20.0).abs() < 1e-12);
    }

    #[test]
    fn summary_ignores_run_order() {
        let spec = two_policy_spec();
        let runs: Vec<RunRewards> = (0..9).map(|i| rr(i, &[100 + i as u64 * 3, 97 + i as u64 * 7])).collect();
        let mut rev = runs.clone();
        rev.reverse();
        assert_eq!(summarize(&spec, 0, &runs).unwrap(), summarize(&spec, 0, &rev).unwrap());
    }

    #[test]
    fn validation() {
        let mut spec = two_policy_spec();
        spec.runs = 1;
        assert!(spec.validate().is_err());
        let mut spec = two_policy_spec();
        spec.policies.push(PolicySpec::new(PolicyKind::LinUcb));
        assert!(spec.validate().is_err());
        let spec = ExperimentSpec {
            policies: vec![PolicySpec::new(PolicyKind::LinUcb)],
            ..ExperimentSpec::default()
        };
        assert!(spec.baseline_index().is_err());
        assert_eq!(spec.with_baseline().baseline_index().unwrap(), 0);
    }
}
