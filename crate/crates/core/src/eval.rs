//! Closed-loop evaluation: seeded trial suites, success/collision rates,
//! navigation time, and CSV reports.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::demo::{write_file, DemoDataset};
use crate::error::{Error, Result};
use crate::expert::{expert_control, ExpertParams};
use crate::graph::{EdgeStrategy, GraphConfig};
use crate::parallel::ordered_map;
use crate::policy::{Action, Command, PolicyNetwork};
use crate::train::{train, TrainConfig};
use crate::world::{spawn_scenario, EpisodeOutcome, OutcomeTag, ScenarioConfig, Simulation, TrajectoryRow};

/// Traffic density level of an evaluation cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setup {
    Easy,
    Middle,
    Hard,
}

impl Setup {
    pub const ALL: [Setup; 3] = [Setup::Easy, Setup::Middle, Setup::Hard];

    pub fn density(self) -> usize {
        match self {
            Setup::Easy => 3,
            Setup::Middle => 5,
            Setup::Hard => 7,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Setup::Easy => "easy",
            Setup::Middle => "middle",
            Setup::Hard => "hard",
        }
    }
}

impl fmt::Display for Setup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Setup {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Setup::ALL.into_iter().find(|x| x.as_str() == s).ok_or_else(|| format!("unknown setup `{s}`"))
    }
}

/// Evaluation scenario settings. Spawn ranges default to bands disjoint
/// from the training ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub trials: usize,
    pub base_seed: u64,
    pub agent_spawn_intervals: Vec<[f64; 2]>,
    pub ego_spawn_intervals: Vec<[f64; 2]>,
    pub non_conflicting_fraction: f64,
    pub setups: Vec<Setup>,
    pub commands: Vec<Command>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            trials: 70,
            base_seed: 10_000,
            agent_spawn_intervals: vec![[8.0, 12.0], [16.0, 20.0], [24.0, 28.0], [32.0, 36.0]],
            ego_spawn_intervals: vec![[13.0, 16.0]],
            non_conflicting_fraction: 0.3,
            setups: Setup::ALL.to_vec(),
            commands: Command::ALL.to_vec(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("eval.trials", "must be at least 1"));
        }
        if self.setups.is_empty() || self.commands.is_empty() {
            return Err(Error::invalid("eval.setups", "need at least one setup and one command"));
        }
        if !(0.0..=1.0).contains(&self.non_conflicting_fraction) {
            return Err(Error::invalid("eval.non_conflicting_fraction", "must be within [0, 1]"));
        }
        Ok(())
    }

    /// Scenario settings for one evaluation cell.
    pub fn cell_config(&self, base: &ScenarioConfig, setup: Setup, command: Command) -> ScenarioConfig {
        let mut c = base.clone();
        c.traffic.density = Some(setup.density());
        c.traffic.command = Some(command);
        c.traffic.agent_spawn_intervals = self.agent_spawn_intervals.clone();
        c.traffic.ego_spawn_intervals = self.ego_spawn_intervals.clone();
        c.traffic.non_conflicting_fraction = self.non_conflicting_fraction;
        c
    }
}

/// Something that drives the ego.
pub trait Driver: Sync {
    fn method(&self) -> String;
    fn act(&self, sim: &Simulation) -> Result<Action>;
}

impl Driver for PolicyNetwork {
    fn method(&self) -> String {
        self.kind().method_name().to_string()
    }

    fn act(&self, sim: &Simulation) -> Result<Action> {
        let s = &sim.scenario;
        self.act_in_world(&s.world, &s.goal, s.command)
    }
}

/// The scripted demonstrator as a driver.
pub struct ExpertDriver(pub ExpertParams);

impl Driver for ExpertDriver {
    fn method(&self) -> String {
        "expert".into()
    }

    fn act(&self, sim: &Simulation) -> Result<Action> {
        let s = &sim.scenario;
        Ok(expert_control(&s.world, &s.ego_path, &self.0, sim.dynamics()).action)
    }
}

/// Applies the same action at every step.
pub struct ConstantDriver(pub Action);

impl Driver for ConstantDriver {
    fn method(&self) -> String {
        format!("constant({} {})", self.0.delta, self.0.tau)
    }

    fn act(&self, _sim: &Simulation) -> Result<Action> {
        Ok(self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub setup: Setup,
    pub command: Command,
    pub seed: u64,
    pub outcome: EpisodeOutcome,
}

impl TrialResult {
    /// Elapsed time, only for successful trials.
    pub fn nav_time(&self) -> Option<f64> {
        (self.outcome.tag == OutcomeTag::Success).then_some(self.outcome.elapsed)
    }
}

/// Runs one seeded trial, optionally recording the trajectory.
pub fn run_trial(
    driver: &dyn Driver,
    config: &ScenarioConfig,
    seed: u64,
    record: bool,
) -> Result<(EpisodeOutcome, Option<Vec<TrajectoryRow>>)> {
    let mut sim = Simulation::new(spawn_scenario(config, seed)?, config);
    if record {
        sim.record_trajectory();
    }
    let outcome = sim.run(|s| driver.act(s))?;
    Ok((outcome, sim.trajectory().map(<[TrajectoryRow]>::to_vec)))
}

fn percent(count: usize, total: usize) -> Result<f64> {
    if total == 0 {
        return Err(Error::EmptyResults);
    }
    Ok(count as f64 / total as f64 * 100.0)
}

pub fn success_rate(results: &[TrialResult]) -> Result<f64> {
    percent(results.iter().filter(|r| r.outcome.tag == OutcomeTag::Success).count(), results.len())
}

pub fn collision_rate(results: &[TrialResult]) -> Result<f64> {
    percent(results.iter().filter(|r| r.outcome.tag == OutcomeTag::Collision).count(), results.len())
}

/// Mean elapsed time over successful trials; `None` without successes.
pub fn mean_navigation_time(results: &[TrialResult]) -> Option<f64> {
    let times: Vec<f64> = results.iter().filter_map(TrialResult::nav_time).collect();
    (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64)
}

/// One report cell; `command == None` marks the per-setup average.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportRow {
    pub setup: Setup,
    pub command: Option<Command>,
    pub success_rate: f64,
    pub collision_rate: f64,
    pub mean_nav_time: Option<f64>,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub method: String,
    pub base_seed: u64,
    pub rows: Vec<ReportRow>,
    /// Sorted by (setup, command, seed).
    pub trials: Vec<TrialResult>,
}

/// Aggregates raw trials into per-cell rows plus one AVG row per setup:
/// the plain mean of the command cells (times over the cells that have any).
pub fn aggregate(method: &str, base_seed: u64, mut trials: Vec<TrialResult>) -> Result<SuiteReport> {
    if trials.is_empty() {
        return Err(Error::EmptyResults);
    }
    trials.sort_by(|a, b| (a.setup, a.command, a.seed).cmp(&(b.setup, b.command, b.seed)));
    let mut rows = Vec::new();
    for setup in Setup::ALL {
        let mut cells = Vec::new();
        for command in Command::ALL {
            let cell: Vec<TrialResult> =
                trials.iter().filter(|t| t.setup == setup && t.command == command).copied().collect();
            if cell.is_empty() {
                continue;
            }
            cells.push(ReportRow {
                setup,
                command: Some(command),
                success_rate: success_rate(&cell)?,
                collision_rate: collision_rate(&cell)?,
                mean_nav_time: mean_navigation_time(&cell),
                trials: cell.len(),
            });
        }
        if cells.is_empty() {
            continue;
        }
        let n = cells.len() as f64;
        let times: Vec<f64> = cells.iter().filter_map(|c| c.mean_nav_time).collect();
        let avg = ReportRow {
            setup,
            command: None,
            success_rate: cells.iter().map(|c| c.success_rate).sum::<f64>() / n,
            collision_rate: cells.iter().map(|c| c.collision_rate).sum::<f64>() / n,
            mean_nav_time: (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64),
            trials: cells.iter().map(|c| c.trials).sum(),
        };
        rows.extend(cells);
        rows.push(avg);
    }
    Ok(SuiteReport { method: method.to_string(), base_seed, rows, trials })
}

/// Runs `trials` seeded episodes (seeds `base_seed + i`) in every
/// configured (setup, command) cell.
pub fn run_suite(driver: &dyn Driver, base: &ScenarioConfig, eval: &EvalConfig, jobs: usize) -> Result<SuiteReport> {
    eval.validate()?;
    let mut jobs_list = Vec::new();
    for &setup in &eval.setups {
        for &command in &eval.commands {
            for i in 0..eval.trials {
                jobs_list.push((setup, command, eval.base_seed + i as u64));
            }
        }
    }
    let results = ordered_map(&jobs_list, jobs, |&(setup, command, seed)| {
        let config = eval.cell_config(base, setup, command);
        run_trial(driver, &config, seed, false).map(|(outcome, _)| TrialResult { setup, command, seed, outcome })
    });
    let trials = results.into_iter().collect::<Result<Vec<_>>>()?;
    aggregate(&driver.method(), eval.base_seed, trials)
}

fn fmt2(x: f64) -> String {
    format!("{x:.2}")
}

fn fmt_time(t: Option<f64>) -> String {
    t.map_or_else(|| "NA".to_string(), fmt2)
}

pub const REPORT_CSV_HEADER: &str =
    "setup,method,command,success_rate_pct,collision_rate_pct,mean_nav_time_s,trials,base_seed";

pub fn report_csv(report: &SuiteReport) -> String {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.setup,
            report.method,
            r.command.map_or("avg", Command::as_str),
            fmt2(r.success_rate),
            fmt2(r.collision_rate),
            fmt_time(r.mean_nav_time),
            r.trials,
            report.base_seed
        ));
    }
    out
}

pub const TRIALS_CSV_HEADER: &str = "setup,command,seed,outcome,elapsed_s,steps";

pub fn trials_csv(report: &SuiteReport) -> String {
    let mut out = String::from(TRIALS_CSV_HEADER);
    out.push('\n');
    for t in &report.trials {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            t.setup,
            t.command,
            t.seed,
            t.outcome.tag.as_str(),
            t.outcome.elapsed,
            t.outcome.steps
        ));
    }
    out
}

/// Parses a per-trial CSV written by [`trials_csv`].
pub fn parse_trials_csv(path: &Path, text: &str) -> Result<Vec<TrialResult>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let err = |message: String| Error::Parse { path: path.to_path_buf(), line: i + 1, message };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(err(format!("expected 6 fields, found {}", f.len())));
        }
        out.push(TrialResult {
            setup: f[0].parse().map_err(err)?,
            command: f[1].parse().map_err(err)?,
            seed: f[2].parse().map_err(|e| err(format!("seed: {e}")))?,
            outcome: EpisodeOutcome {
                tag: OutcomeTag::parse(f[3]).ok_or_else(|| err(format!("unknown outcome `{}`", f[3])))?,
                elapsed: f[4].parse().map_err(|e| err(format!("elapsed_s: {e}")))?,
                steps: f[5].parse().map_err(|e| err(format!("steps: {e}")))?,
            },
        });
    }
    Ok(out)
}

pub fn write_report(dir: &Path, report: &SuiteReport) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let summary = dir.join("report.csv");
    let trials = dir.join("trials.csv");
    write_file(&summary, report_csv(report).as_bytes())?;
    write_file(&trials, trials_csv(report).as_bytes())?;
    Ok(vec![summary, trials])
}

/// One strategy's row of the edge-definition ablation.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub strategy: EdgeStrategy,
    pub graph: GraphConfig,
    pub report: SuiteReport,
}

impl AblationRow {
    fn cell(&self) -> &ReportRow {
        self.report.rows.iter().find(|r| r.command.is_some()).expect("one evaluated cell")
    }

    pub fn success_rate(&self) -> f64 {
        self.cell().success_rate
    }

    pub fn collision_rate(&self) -> f64 {
        self.cell().collision_rate
    }

    pub fn mean_nav_time(&self) -> Option<f64> {
        self.cell().mean_nav_time
    }
}

/// Published ablation figures (SR %, CR %, navigation time s) on the hard
/// Forward cell, printed next to ours for orientation.
pub const REFERENCE_ABLATION: [(EdgeStrategy, f64, f64, f64); 4] = [
    (EdgeStrategy::NCloseWeighted, 57.14, 42.86, 15.45),
    (EdgeStrategy::FullyConnected, 40.00, 60.00, 15.95),
    (EdgeStrategy::StarConnected, 45.71, 54.29, 15.40),
    (EdgeStrategy::NonWeighted, 37.14, 62.86, 14.41),
];

/// Trains one G-CIL per strategy on the same dataset and seeds, then
/// evaluates each on the hard Forward cell.
pub fn run_ablation(
    dataset: &DemoDataset,
    strategies: &[EdgeStrategy],
    train_config: &TrainConfig,
    graph: &GraphConfig,
    base: &ScenarioConfig,
    eval: &EvalConfig,
    jobs: usize,
) -> Result<Vec<AblationRow>> {
    let mut eval = eval.clone();
    eval.setups = vec![Setup::Hard];
    eval.commands = vec![Command::Forward];
    let mut rows = Vec::with_capacity(strategies.len());
    for &strategy in strategies {
        let g = graph.with_strategy(strategy);
        let run = train(dataset, train_config, &g, None, None)?;
        let report = run_suite(&run.network, base, &eval, jobs)?;
        rows.push(AblationRow { strategy, graph: g, report });
    }
    Ok(rows)
}

pub const ABLATION_CSV_HEADER: &str = "strategy,success_rate_pct,collision_rate_pct,mean_nav_time_s";

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from(ABLATION_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.strategy,
            fmt2(r.success_rate()),
            fmt2(r.collision_rate()),
            fmt_time(r.mean_nav_time())
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial(tag: OutcomeTag, elapsed: f64, seed: u64) -> TrialResult {
        TrialResult {
            setup: Setup::Easy,
            command: Command::Forward,
            seed,
            outcome: EpisodeOutcome { tag, elapsed, steps: (elapsed * 10.0) as usize },
        }
    }

    #[test]
    fn seven_of_ten() {
        let r: Vec<_> = (0..10).map(|i| trial(if i < 7 { OutcomeTag::Success } else { OutcomeTag::Timeout }, 10.0, i)).collect();
        assert_eq!(success_rate(&r).unwrap(), 70.0);
    }

    #[test]
    fn seventy_trial_rounding() {
        let r: Vec<_> =
            (0..70).map(|i| trial(if i < 55 { OutcomeTag::Success } else { OutcomeTag::Collision }, 10.0, i)).collect();
        assert_eq!(fmt2(success_rate(&r).unwrap()), "78.57");
    }

    #[test]
    fn rates_need_not_sum_to_hundred() {
        let mut r = Vec::new();
        r.extend((0..3).map(|i| trial(OutcomeTag::Success, 9.0, i)));
        r.extend((3..7).map(|i| trial(OutcomeTag::Collision, 4.0, i)));
        r.extend((7..10).map(|i| trial(OutcomeTag::Timeout, 30.0, i)));
        assert_eq!(success_rate(&r).unwrap(), 30.0);
        assert_eq!(collision_rate(&r).unwrap(), 40.0);
    }

    #[test]
    fn navigation_time_over_successes() {
        let r = [trial(OutcomeTag::Success, 10.0, 0), trial(OutcomeTag::Success, 12.0, 1), trial(OutcomeTag::Collision, 3.0, 2)];
        assert_eq!(mean_navigation_time(&r), Some(11.0));
        assert_eq!(mean_navigation_time(&r[..1]), Some(10.0));
        assert_eq!(mean_navigation_time(&r[2..]), None);
        assert!(success_rate(&[]).is_err());
    }

    #[test]
    fn zero_success_cell_reports_na() {
        let report = aggregate("m", 0, vec![trial(OutcomeTag::Collision, 2.0, 0)]).unwrap();
        let csv = report_csv(&report);
        assert!(csv.lines().nth(1).unwrap().contains(",NA,"), "{csv}");
    }
}
