use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gcil::checkpoint::Checkpoint;
use gcil::config::Config;
use gcil::demo::{collect_dataset, read_dataset, write_dataset, write_file};
use gcil::eval::{
    ablation_csv, run_ablation, run_suite, run_trial, write_report, Driver, ExpertDriver, Setup, REFERENCE_ABLATION,
};
use gcil::graph::EdgeStrategy;
use gcil::manifest::{unix_now, RunManifest};
use gcil::nn::GradCheckOptions;
use gcil::policy::{CheckBatch, Command, NetworkKind, PolicyNetwork};
use gcil::train::train;
use gcil::world::{write_trajectory_csv, TrajectoryRow};

const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "gcil", version, about = "Graph-based conditional imitation learning at unsignalized intersections")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration; unset keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; 1 runs everything serially.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    network: Option<NetworkKind>,
    #[arg(long)]
    strategy: Option<EdgeStrategy>,
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Debug, Args)]
struct PolicyChoice {
    /// Trained checkpoint to drive the ego.
    #[arg(long, conflicts_with_all = ["expert", "untrained"])]
    checkpoint: Option<PathBuf>,
    /// Drive with the scripted expert instead of a network.
    #[arg(long)]
    expert: bool,
    /// Drive with a freshly initialized network of `--network` kind.
    #[arg(long, conflicts_with = "expert")]
    untrained: bool,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Record expert demonstrations into per-command JSON-Lines buffers.
    Collect {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
    },
    /// Behavior-clone a policy from a collected dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        /// Continue from a checkpoint carrying optimizer state.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        max_steps: Option<u64>,
    },
    /// Run the seeded evaluation suite.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        policy: PolicyChoice,
        /// Write one trajectory CSV per trial.
        #[arg(long)]
        dump_trajectories: bool,
    },
    /// Train and evaluate one policy per edge strategy on a shared dataset.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        /// Strategies to compare, comma separated; defaults to all four.
        #[arg(long = "strategies", value_delimiter = ',')]
        strategies: Vec<EdgeStrategy>,
        #[arg(long)]
        max_steps: Option<u64>,
    },
    /// Re-run one seeded trial and dump its action curves.
    Replay {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        policy: PolicyChoice,
        #[arg(long)]
        setup: Setup,
        #[arg(long = "command")]
        nav_command: Command,
    },
    /// Finite-difference check of analytic gradients.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Parameters sampled per network.
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
    },
}

#[derive(Debug)]
enum Failure {
    Core(gcil::Error),
    Usage(String),
    Verification(String),
}

impl From<gcil::Error> for Failure {
    fn from(e: gcil::Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Core(e) if e.is_config_error() => 2,
            Failure::Usage(_) => 2,
            Failure::Core(_) => 3,
            Failure::Verification(_) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Usage(m) => write!(f, "{m}"),
            Failure::Verification(m) => write!(f, "verification failed: {m}"),
        }
    }
}

type Outcome = Result<(), Failure>;

/// File config with command-line overrides applied.
fn effective_config(common: &Common) -> Result<Config, Failure> {
    let mut config = match &common.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(kind) = common.network {
        config.train.network = kind;
    }
    if let Some(strategy) = common.strategy {
        config.graph.strategy = strategy;
    }
    if let Some(trials) = common.trials {
        config.eval.trials = trials;
    }
    if let Some(seed) = common.seed {
        config.train.seed = seed;
        config.eval.base_seed = seed;
    }
    if common.jobs == 0 {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    config.validate()?;
    Ok(config)
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Core(gcil::Error::Io { path: dir.to_path_buf(), source: e }))
}

fn collect(common: &Common, episodes: usize) -> Outcome {
    let started = unix_now();
    let config = effective_config(common)?;
    if episodes == 0 {
        return Err(Failure::Usage("--episodes must be at least 1".into()));
    }
    let seed = common.seed.unwrap_or(0);
    let dataset =
        collect_dataset(&config.scenario(), &config.graph, &config.expert, episodes, seed, &config.hash(), common.jobs)?;
    let files = write_dataset(&dataset, &common.out)?;
    for (command, counts) in dataset.manifest.expert_outcomes.iter() {
        println!(
            "{command}: expert success {:.2}% over {} episodes, {} samples",
            counts.success_rate(),
            counts.total(),
            dataset.buffer(command).len()
        );
    }
    RunManifest::new("collect", &config, vec![seed], started).finish(&common.out, &files)?;
    Ok(())
}

fn train_cmd(common: &Common, dataset_dir: &Path, resume: Option<&Path>, max_steps: Option<u64>) -> Outcome {
    let started = unix_now();
    let mut config = effective_config(common)?;
    if max_steps.is_some() {
        config.train.max_steps = max_steps;
    }
    let dataset = read_dataset(dataset_dir)?;
    let checkpoint = resume.map(Checkpoint::load).transpose()?;
    let graph = checkpoint.as_ref().map_or(config.graph, |c| c.graph);
    create_dir(&common.out)?;
    let run = train(&dataset, &config.train, &graph, checkpoint.as_ref(), Some(&common.out));
    let run = match run {
        Ok(run) => run,
        Err(e) => {
            let diverged = common.out.join("checkpoint_diverged.json");
            if diverged.exists() {
                eprintln!("diagnostic checkpoint written to {}", diverged.display());
            }
            return Err(e.into());
        }
    };
    if let Some(last) = run.history.last() {
        println!(
            "{} steps, final minibatch loss {:.6}, {:.1} s",
            last.loss.step + 1,
            last.loss.mean,
            run.wall_clock_s
        );
    }
    let mut files = run.checkpoints.clone();
    files.push(common.out.join("loss.csv"));
    RunManifest::new("train", &config, vec![config.train.seed], started).finish(&common.out, &files)?;
    Ok(())
}

fn load_driver(choice: &PolicyChoice, config: &Config, expected: Option<NetworkKind>) -> Result<Box<dyn Driver>, Failure> {
    if choice.expert {
        return Ok(Box::new(ExpertDriver(config.expert.clone())));
    }
    if choice.untrained {
        let kind = expected.unwrap_or(config.train.network);
        return Ok(Box::new(PolicyNetwork::new(kind, &config.train.topology, config.graph, config.train.seed)));
    }
    let path = choice
        .checkpoint
        .as_ref()
        .ok_or_else(|| Failure::Usage("one of --checkpoint, --expert or --untrained is required".into()))?;
    let (network, _) = Checkpoint::load(path)?.restore(expected)?;
    Ok(Box::new(network))
}

fn eval_cmd(common: &Common, choice: &PolicyChoice, dump: bool) -> Outcome {
    let started = unix_now();
    let config = effective_config(common)?;
    let driver = load_driver(choice, &config, common.network)?;
    let scenario = config.scenario();
    let report = run_suite(driver.as_ref(), &scenario, &config.eval, common.jobs)?;
    let mut files = write_report(&common.out, &report)?;
    if dump {
        let dir = common.out.join("trajectories");
        create_dir(&dir)?;
        for t in &report.trials {
            let cell = config.eval.cell_config(&scenario, t.setup, t.command);
            let (_, rows) = run_trial(driver.as_ref(), &cell, t.seed, true)?;
            let path = dir.join(format!("{}_{}_{}.csv", t.setup, t.command, t.seed));
            write_trajectory_csv(&path, rows.as_deref().unwrap_or_default())?;
            files.push(path);
        }
    }
    print!("{}", gcil::eval::report_csv(&report));
    RunManifest::new("eval", &config, vec![config.eval.base_seed], started).finish(&common.out, &files)?;
    Ok(())
}

fn ablate(common: &Common, dataset_dir: &Path, strategies: &[EdgeStrategy], max_steps: Option<u64>) -> Outcome {
    let started = unix_now();
    let mut config = effective_config(common)?;
    if max_steps.is_some() {
        config.train.max_steps = max_steps;
    }
    config.train.network = NetworkKind::Gcil;
    let strategies = if strategies.is_empty() { EdgeStrategy::ALL.to_vec() } else { strategies.to_vec() };
    let dataset = read_dataset(dataset_dir)?;
    let rows = run_ablation(&dataset, &strategies, &config.train, &config.graph, &config.scenario(), &config.eval, common.jobs)?;
    create_dir(&common.out)?;
    let path = common.out.join("ablation.csv");
    let csv = ablation_csv(&rows);
    write_file(&path, csv.as_bytes())?;
    let mut files = vec![path];
    for row in &rows {
        let dir = common.out.join(row.strategy.as_str());
        files.extend(write_report(&dir, &row.report)?);
    }
    print!("{csv}");
    println!("reference (hard Forward, 35 trials each): strategy, SR %, CR %, time s");
    for (strategy, sr, cr, time) in REFERENCE_ABLATION {
        println!("  {strategy}: {sr:.2}, {cr:.2}, {time:.2}");
    }
    let cr = |s: EdgeStrategy| rows.iter().find(|r| r.strategy == s).map(|r| r.collision_rate());
    if let (Some(weighted), Some(flat)) = (cr(EdgeStrategy::NCloseWeighted), cr(EdgeStrategy::NonWeighted)) {
        let verdict = if weighted <= flat { "holds" } else { "does not hold" };
        println!("weighted CR {weighted:.2}% <= non-weighted CR {flat:.2}%: {verdict}");
    }
    RunManifest::new("ablate", &config, vec![config.train.seed, config.eval.base_seed], started)
        .finish(&common.out, &files)?;
    Ok(())
}

fn replay(common: &Common, choice: &PolicyChoice, setup: Setup, command: Command) -> Outcome {
    let started = unix_now();
    let config = effective_config(common)?;
    let seed = common.seed.unwrap_or(config.eval.base_seed);
    let driver = load_driver(choice, &config, common.network)?;
    let cell = config.eval.cell_config(&config.scenario(), setup, command);
    let (outcome, rows) = run_trial(driver.as_ref(), &cell, seed, true)?;
    let rows: Vec<TrajectoryRow> = rows.unwrap_or_default();
    create_dir(&common.out)?;
    let actions = common.out.join("actions.csv");
    let mut csv = String::from("step,delta,tau\n");
    for r in rows.iter().filter(|r| r.vehicle_id == 0 && r.step < outcome.steps) {
        csv.push_str(&format!("{},{},{}\n", r.step, r.delta, r.tau));
    }
    write_file(&actions, csv.as_bytes())?;
    let trajectory = common.out.join("trajectory.csv");
    write_trajectory_csv(&trajectory, &rows)?;
    println!("{setup} {command} seed {seed}: {} after {:.1} s", outcome.tag.as_str(), outcome.elapsed);
    RunManifest::new("replay", &config, vec![seed], started).finish(&common.out, &[actions, trajectory])?;
    Ok(())
}

fn gradcheck(common: &Common, samples: usize, eps: f64) -> Outcome {
    let started = unix_now();
    let config = effective_config(common)?;
    let seed = common.seed.unwrap_or(0);
    let kinds = common.network.map_or(NetworkKind::ALL.to_vec(), |k| vec![k]);
    let batch = CheckBatch::from_scenarios(&config.scenario(), &config.graph, 6, seed)?;
    let mut csv = String::from("network,max_rel_error,checked,skipped\n");
    let mut worst: f64 = 0.0;
    for kind in kinds {
        let network = PolicyNetwork::new(kind, &config.train.topology, config.graph, seed);
        let report = network.gradient_check(&batch, GradCheckOptions { eps, samples, seed, ..Default::default() })?;
        println!("{kind}: max relative error {:.3e} over {} parameters ({} skipped)", report.max_rel_error, report.checked, report.skipped);
        csv.push_str(&format!("{kind},{:e},{},{}\n", report.max_rel_error, report.checked, report.skipped));
        worst = worst.max(report.max_rel_error);
    }
    create_dir(&common.out)?;
    let path = common.out.join("gradcheck.csv");
    write_file(&path, csv.as_bytes())?;
    RunManifest::new("gradcheck", &config, vec![seed], started).finish(&common.out, &[path])?;
    if worst >= GRADCHECK_TOLERANCE {
        return Err(Failure::Verification(format!("max relative error {worst:.3e} >= {GRADCHECK_TOLERANCE:e}")));
    }
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    match &cli.command {
        Cmd::Collect { common, episodes } => collect(common, *episodes),
        Cmd::Train { common, dataset, resume, max_steps } => train_cmd(common, dataset, resume.as_deref(), *max_steps),
        Cmd::Eval { common, policy, dump_trajectories } => eval_cmd(common, policy, *dump_trajectories),
        Cmd::Ablate { common, dataset, strategies, max_steps } => ablate(common, dataset, strategies, *max_steps),
        Cmd::Replay { common, policy, setup, nav_command } => replay(common, policy, *setup, *nav_command),
        Cmd::Gradcheck { common, samples, eps } => gradcheck(common, *samples, *eps),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}
