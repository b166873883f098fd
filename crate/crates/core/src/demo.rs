//! Expert demonstrations: per-episode recording and the three
//! command-keyed JSON-Lines buffers.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expert::{expert_control, ExpertParams};
use crate::graph::{build_adjacency, build_features, GraphConfig, EGO_DIM, NODE_DIM};
use crate::nn::Tensor2;
use crate::parallel::ordered_map;
use crate::policy::{Action, Command, PerCommand};
use crate::world::{spawn_scenario, EpisodeOutcome, OutcomeTag, ScenarioConfig, Simulation};

pub const DATASET_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Stride separating the seed ranges of the three commands.
const COMMAND_SEED_STRIDE: u64 = 1_000_000;

/// One recorded observation with the expert's action.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoSample {
    pub episode_id: u64,
    pub step: usize,
    pub command: Command,
    pub features: Tensor2,
    pub adjacency: Tensor2,
    pub x_ego: [f64; EGO_DIM],
    pub u_star: Action,
}

#[derive(Serialize, Deserialize)]
struct Record {
    episode_id: u64,
    step: usize,
    command: Command,
    #[serde(rename = "S")]
    s: Vec<Vec<f64>>,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    x_ego: [f64; EGO_DIM],
    u_star: [f64; 2],
}

impl DemoSample {
    fn to_record(&self) -> Record {
        Record {
            episode_id: self.episode_id,
            step: self.step,
            command: self.command,
            s: self.features.to_rows(),
            a: self.adjacency.to_rows(),
            x_ego: self.x_ego,
            u_star: self.u_star.as_array(),
        }
    }

    fn from_record(r: Record) -> std::result::Result<Self, String> {
        let features = Tensor2::from_rows(&r.s).map_err(|e| e.to_string())?;
        let adjacency = Tensor2::from_rows(&r.a).map_err(|e| e.to_string())?;
        if features.rows() == 0 || features.cols() != NODE_DIM {
            return Err(format!("S must be N x {NODE_DIM}, got {:?}", features.shape()));
        }
        if adjacency.shape() != (features.rows(), features.rows()) {
            return Err(format!("A must be {n} x {n}, got {:?}", adjacency.shape(), n = features.rows()));
        }
        let u_star = Action::new(r.u_star[0], r.u_star[1]);
        if !u_star.in_box() {
            return Err(format!("u_star {:?} outside [-1, 1]", r.u_star));
        }
        Ok(Self { episode_id: r.episode_id, step: r.step, command: r.command, features, adjacency, x_ego: r.x_ego, u_star })
    }
}

/// Runs one expert episode, recording a sample at every step, whatever the
/// outcome.
pub fn collect_episode(
    config: &ScenarioConfig,
    graph: &GraphConfig,
    expert: &ExpertParams,
    seed: u64,
    episode_id: u64,
) -> Result<(Vec<DemoSample>, EpisodeOutcome)> {
    let scenario = spawn_scenario(config, seed)?;
    let command = scenario.command;
    let path = scenario.ego_path.clone();
    let mut sim = Simulation::new(scenario, config);
    let dynamics = *sim.dynamics();
    let mut samples = Vec::new();
    let outcome = sim.run(|sim| {
        let world = &sim.scenario.world;
        let features = build_features(world, &sim.scenario.goal, graph);
        let adjacency = build_adjacency(&world.positions(), graph);
        let decision = expert_control(world, &path, expert, &dynamics);
        let mut x_ego = [0.0; EGO_DIM];
        x_ego.copy_from_slice(&features.row(0)[..EGO_DIM]);
        samples.push(DemoSample { episode_id, step: sim.steps(), command, features, adjacency, x_ego, u_star: decision.action });
        Ok(decision.action)
    })?;
    Ok((samples, outcome))
}

/// Seed of episode `index` for `command` under `base_seed`.
pub fn episode_seed(base_seed: u64, command: Command, index: usize) -> u64 {
    base_seed.wrapping_add(command.index() as u64 * COMMAND_SEED_STRIDE + index as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub success: usize,
    pub collision: usize,
    pub timeout: usize,
    pub goal_missed: usize,
}

impl OutcomeCounts {
    pub fn new() -> Self {
        Self { success: 0, collision: 0, timeout: 0, goal_missed: 0 }
    }

    pub fn record(&mut self, tag: OutcomeTag) {
        match tag {
            OutcomeTag::Success => self.success += 1,
            OutcomeTag::Collision => self.collision += 1,
            OutcomeTag::Timeout => self.timeout += 1,
            OutcomeTag::GoalMissed => self.goal_missed += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.success + self.collision + self.timeout + self.goal_missed
    }

    pub fn success_rate(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            100.0 * self.success as f64 / self.total() as f64
        }
    }
}

impl Default for OutcomeCounts {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub config_hash: String,
    pub base_seed: u64,
    pub episodes_per_command: usize,
    /// First and last episode seed per command (inclusive).
    pub seed_ranges: PerCommand<[u64; 2]>,
    pub counts: PerCommand<usize>,
    pub expert_outcomes: PerCommand<OutcomeCounts>,
    pub graph: GraphConfig,
    /// Node features are stored in raw physical units (m, m/s).
    pub feature_units: String,
}

/// Three command-keyed sample buffers plus their manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoDataset {
    pub buffers: PerCommand<Vec<DemoSample>>,
    pub manifest: DatasetManifest,
}

impl DemoDataset {
    pub fn buffer(&self, command: Command) -> &[DemoSample] {
        self.buffers.get(command)
    }

    pub fn len(&self) -> usize {
        self.buffers.iter().map(|(_, b)| b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Collects `episodes_per_command` expert episodes for every command.
pub fn collect_dataset(
    config: &ScenarioConfig,
    graph: &GraphConfig,
    expert: &ExpertParams,
    episodes_per_command: usize,
    base_seed: u64,
    config_hash: &str,
    jobs: usize,
) -> Result<DemoDataset> {
    expert.validate()?;
    let mut buffers: PerCommand<Vec<DemoSample>> = PerCommand::default();
    let mut outcomes = PerCommand::from_fn(|_| OutcomeCounts::new());
    for command in Command::ALL {
        let mut cfg = config.clone();
        cfg.traffic.command = Some(command);
        let seeds: Vec<u64> = (0..episodes_per_command).map(|k| episode_seed(base_seed, command, k)).collect();
        let episodes = ordered_map(&seeds, jobs, |&seed| {
            collect_episode(&cfg, graph, expert, seed, seed.wrapping_sub(base_seed))
        });
        for episode in episodes {
            let (samples, outcome) = episode?;
            outcomes.get_mut(command).record(outcome.tag);
            buffers.get_mut(command).extend(samples);
        }
    }
    let last = episodes_per_command.saturating_sub(1);
    let manifest = DatasetManifest {
        schema_version: DATASET_SCHEMA_VERSION,
        config_hash: config_hash.to_string(),
        base_seed,
        episodes_per_command,
        seed_ranges: PerCommand::from_fn(|c| [episode_seed(base_seed, c, 0), episode_seed(base_seed, c, last)]),
        counts: PerCommand::from_fn(|c| buffers.get(c).len()),
        expert_outcomes: outcomes,
        graph: *graph,
        feature_units: "raw (m, m/s)".to_string(),
    };
    Ok(DemoDataset { buffers, manifest })
}

pub fn buffer_file_name(command: Command) -> String {
    format!("{}.jsonl", command.as_str())
}

/// Writes the three buffers and the manifest into `dir`; returns the
/// written paths.
pub fn write_dataset(dataset: &DemoDataset, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for (command, buffer) in dataset.buffers.iter() {
        let path = dir.join(buffer_file_name(command));
        let mut out = String::new();
        for sample in buffer {
            out.push_str(&serde_json::to_string(&sample.to_record())?);
            out.push('\n');
        }
        write_file(&path, out.as_bytes())?;
        written.push(path);
    }
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&dataset.manifest)?;
    text.push('\n');
    write_file(&path, text.as_bytes())?;
    written.push(path);
    Ok(written)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

fn read_buffer(path: &Path, command: Command) -> Result<Vec<DemoSample>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut samples = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { path: path.to_path_buf(), line: line_no, message };
        let record: Record = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let sample = DemoSample::from_record(record).map_err(parse_err)?;
        if sample.command != command {
            return Err(parse_err(format!("sample command {} in the {command} buffer", sample.command)));
        }
        samples.push(sample);
    }
    Ok(samples)
}

pub fn read_dataset(dir: &Path) -> Result<DemoDataset> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Parse { path: manifest_path.clone(), line: e.line(), message: e.to_string() })?;
    if manifest.schema_version != DATASET_SCHEMA_VERSION {
        return Err(Error::Parse {
            path: manifest_path,
            line: 1,
            message: format!("schema_version {} is not {DATASET_SCHEMA_VERSION}", manifest.schema_version),
        });
    }
    let mut buffers: PerCommand<Vec<DemoSample>> = PerCommand::default();
    for command in Command::ALL {
        let path = dir.join(buffer_file_name(command));
        let samples = read_buffer(&path, command)?;
        if samples.len() != *manifest.counts.get(command) {
            return Err(Error::Parse {
                path,
                line: samples.len(),
                message: format!("{} samples but the manifest lists {}", samples.len(), manifest.counts.get(command)),
            });
        }
        *buffers.get_mut(command) = samples;
    }
    Ok(DemoDataset { buffers, manifest })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ScenarioConfig {
        ScenarioConfig::default()
    }

    #[test]
    fn episode_is_reproducible_and_indexed() {
        let c = small_config();
        let (a, oa) = collect_episode(&c, &GraphConfig::default(), &ExpertParams::default(), 42, 0).unwrap();
        let (b, ob) = collect_episode(&c, &GraphConfig::default(), &ExpertParams::default(), 42, 0).unwrap();
        assert_eq!(a, b);
        assert_eq!(oa, ob);
        assert_eq!(a.len(), oa.steps);
        assert!(a.iter().enumerate().all(|(i, s)| s.step == i));
        assert!(a.iter().all(|s| s.u_star.in_box()));
    }

    #[test]
    fn dataset_round_trip_and_truncation() {
        let dataset =
            collect_dataset(&small_config(), &GraphConfig::default(), &ExpertParams::default(), 1, 5, "abc", 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&dataset, dir.path()).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back, dataset);
        for (c, n) in dataset.manifest.counts.iter() {
            assert_eq!(*n, dataset.buffer(c).len());
        }

        let path = dir.path().join(buffer_file_name(Command::Forward));
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let last = lines.len();
        let mut cut = lines[..last - 1].join("\n");
        cut.push('\n');
        cut.push_str(&lines[last - 1][..lines[last - 1].len() / 2]);
        fs::write(&path, cut).unwrap();
        match read_dataset(dir.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, last),
            other => panic!("expected a parse error, got {other:?}"),
        }
        let partial = read_buffer(&path, Command::Forward);
        assert!(partial.is_err());
    }
}
