//! Behavior cloning with equal-command minibatches and Adam.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::demo::{write_file, DemoDataset};
use crate::error::{Error, Result};
use crate::graph::GraphConfig;
use crate::nn::{batch_loss, AdamConfig, AdamState, Tensor2};
use crate::policy::{Command, NetInput, NetworkKind, PerCommand, PolicyNetwork, Topology};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Fixed per-command counts (forward, turn_left, turn_right). Unset
    /// means the near-equal rotating split.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<[usize; 3]>,
    pub epochs: usize,
    /// Overrides the epoch-derived step budget.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<u64>,
    pub lr: f64,
    /// Learning rate reached at the last step; the rate follows a cosine
    /// from `lr` down to this value.
    pub lr_final: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Checkpoint cadence in steps; 0 writes only the final checkpoint.
    pub eval_every: u64,
    pub seed: u64,
    pub network: NetworkKind,
    pub topology: Topology,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            batch_size: 512,
            split: None,
            epochs: 50,
            max_steps: None,
            lr: adam.lr,
            lr_final: adam.lr / 10.0,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            eval_every: 0,
            seed: 0,
            network: NetworkKind::Gcil,
            topology: Topology::default(),
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 3 {
            return Err(Error::invalid("train.batch_size", "must be at least 3"));
        }
        if let Some(split) = self.split {
            if split.iter().sum::<usize>() != self.batch_size {
                return Err(Error::invalid("train.split", format!("{split:?} does not sum to batch_size {}", self.batch_size)));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("train.lr", "must be positive"));
        }
        if !(self.lr_final > 0.0 && self.lr_final <= self.lr) {
            return Err(Error::invalid("train.lr_final", "must be positive and at most train.lr"));
        }
        for (key, b) in [("train.beta1", self.beta1), ("train.beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(key, "must be within [0, 1)"));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::invalid("train.eps", "must be positive"));
        }
        self.topology.validate()
    }

    /// Steps per epoch: `ceil(total_samples / batch_size)`.
    pub fn steps_per_epoch(&self, total_samples: usize) -> u64 {
        total_samples.div_ceil(self.batch_size).max(1) as u64
    }

    pub fn total_steps(&self, total_samples: usize) -> u64 {
        self.max_steps.unwrap_or(self.epochs as u64 * self.steps_per_epoch(total_samples))
    }

    /// Cosine-decayed learning rate for optimizer step `step` of `total`.
    pub fn lr_at(&self, step: u64, total: u64) -> f64 {
        let progress = if total <= 1 { 0.0 } else { (step.min(total - 1)) as f64 / (total - 1) as f64 };
        self.lr_final + 0.5 * (self.lr - self.lr_final) * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

/// Per-command sample counts for optimizer step `step`.
///
/// With no explicit split, every command gets `batch / 3` and the
/// remainder goes one each to the commands following `step mod 3`, so over
/// three consecutive steps each command takes the short share once.
pub fn batch_split(config: &TrainConfig, step: u64) -> [usize; 3] {
    if let Some(split) = config.split {
        return split;
    }
    let base = config.batch_size / 3;
    let extra = config.batch_size % 3;
    let mut counts = [base; 3];
    for j in 0..extra {
        counts[(step as usize + j) % 3] += 1;
    }
    counts
}

/// Rows of one minibatch as `(command, index into that buffer)`, drawn with
/// replacement from a stream that depends only on `(seed, step)`.
pub fn sample_minibatch(sizes: &PerCommand<usize>, config: &TrainConfig, step: u64) -> Result<Vec<(Command, usize)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(step);
    let counts = batch_split(config, step);
    let mut rows = Vec::with_capacity(config.batch_size);
    for command in Command::ALL {
        let n = *sizes.get(command);
        let want = counts[command.index()];
        if n == 0 && want > 0 {
            return Err(Error::EmptyBuffer(command));
        }
        rows.extend((0..want).map(|_| (command, rng.gen_range(0..n))));
    }
    Ok(rows)
}

/// Losses of one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLoss {
    pub step: u64,
    pub mean: f64,
    pub per_command: PerCommand<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRow {
    pub loss: StepLoss,
    pub wall_clock_s: f64,
}

/// Training state: network, optimizer and the encoded dataset.
pub struct Trainer {
    pub network: PolicyNetwork,
    pub adam: AdamState,
    pub step: u64,
    pub config: TrainConfig,
    inputs: PerCommand<Vec<NetInput>>,
    targets: PerCommand<Vec<[f64; 2]>>,
}

impl Trainer {
    /// Fresh network seeded from `config.seed`. Adjacency matrices are
    /// rebuilt from the stored node features under `graph`.
    pub fn new(dataset: &DemoDataset, config: &TrainConfig, graph: &GraphConfig) -> Result<Self> {
        config.validate()?;
        let network = PolicyNetwork::new(config.network, &config.topology, *graph, config.seed);
        let adam = AdamState::new(&network, config.adam());
        Self::with_state(dataset, config, network, adam, 0)
    }

    /// Continues from a checkpoint that carries optimizer state.
    pub fn resume(dataset: &DemoDataset, config: &TrainConfig, checkpoint: &Checkpoint) -> Result<Self> {
        config.validate()?;
        let (network, adam) = checkpoint.restore(Some(config.network))?;
        let adam = adam.ok_or_else(|| Error::Checkpoint { field: "optimizer".into(), message: "missing; cannot resume".into() })?;
        Self::with_state(dataset, config, network, adam, checkpoint.step)
    }

    fn with_state(
        dataset: &DemoDataset,
        config: &TrainConfig,
        network: PolicyNetwork,
        adam: AdamState,
        step: u64,
    ) -> Result<Self> {
        let graph = network.graph;
        let mut inputs: PerCommand<Vec<NetInput>> = PerCommand::default();
        let mut targets: PerCommand<Vec<[f64; 2]>> = PerCommand::default();
        for command in Command::ALL {
            let buffer = dataset.buffer(command);
            if buffer.is_empty() {
                return Err(Error::EmptyBuffer(command));
            }
            *inputs.get_mut(command) =
                buffer.iter().map(|s| NetInput::from_features(s.features.clone(), &graph)).collect::<Result<_>>()?;
            *targets.get_mut(command) = buffer.iter().map(|s| s.u_star.as_array()).collect();
        }
        Ok(Self { network, adam, step, config: config.clone(), inputs, targets })
    }

    pub fn sample_count(&self) -> usize {
        self.inputs.iter().map(|(_, v)| v.len()).sum()
    }

    pub fn total_steps(&self) -> u64 {
        self.config.total_steps(self.sample_count())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::capture(&self.network, Some(&self.adam), self.step)
    }

    /// Mean loss over every stored sample, without updating anything.
    pub fn dataset_loss(&self) -> Result<f64> {
        let mut batch = Vec::new();
        let mut commands = Vec::new();
        let mut targets = Vec::new();
        for command in Command::ALL {
            batch.extend(self.inputs.get(command));
            commands.extend(std::iter::repeat(command).take(self.inputs.get(command).len()));
            targets.extend(self.targets.get(command).iter().flatten().copied());
        }
        let (out, _) = self.network.forward_batch(&batch, &commands)?;
        Ok(batch_loss(&out, &Tensor2::from_vec(commands.len(), 2, targets)?)?.0)
    }

    /// One minibatch: forward, mean squared action error, backward, Adam.
    pub fn train_step(&mut self) -> Result<StepLoss> {
        let sizes = PerCommand::from_fn(|c| self.inputs.get(c).len());
        let rows = sample_minibatch(&sizes, &self.config, self.step)?;
        let batch: Vec<&NetInput> = rows.iter().map(|(c, i)| &self.inputs.get(*c)[*i]).collect();
        let commands: Vec<Command> = rows.iter().map(|(c, _)| *c).collect();
        let mut target = Tensor2::zeros(rows.len(), 2);
        for (r, (c, i)) in rows.iter().enumerate() {
            target.row_mut(r).copy_from_slice(&self.targets.get(*c)[*i]);
        }
        let (out, cache) = self.network.forward_batch(&batch, &commands)?;
        let (mean, upstream, per_sample) = batch_loss(&out, &target)?;
        if !mean.is_finite() {
            return Err(Error::NonFiniteLoss { step: self.step, loss: mean });
        }
        let grads = self.network.backward(&cache, &upstream)?;
        self.adam.config.lr = self.config.lr_at(self.step, self.total_steps());
        self.adam.step(&mut self.network, &grads)?;
        let per_command = PerCommand::from_fn(|c| {
            let (sum, n) = commands
                .iter()
                .zip(&per_sample)
                .filter(|(k, _)| **k == c)
                .fold((0.0, 0usize), |(s, n), (_, l)| (s + l, n + 1));
            if n == 0 {
                0.0
            } else {
                sum / n as f64
            }
        });
        let loss = StepLoss { step: self.step, mean, per_command };
        self.step += 1;
        Ok(loss)
    }

    /// Trains until `until` steps have been taken in total, invoking
    /// `on_step` after each one.
    pub fn run_until(&mut self, until: u64, mut on_step: impl FnMut(&Trainer, &StepLoss) -> Result<()>) -> Result<Vec<StepLoss>> {
        let mut history = Vec::new();
        while self.step < until {
            let loss = self.train_step()?;
            on_step(self, &loss)?;
            history.push(loss);
        }
        Ok(history)
    }
}

pub const LOSS_CSV_HEADER: &str = "step,mean_loss,loss_forward,loss_left,loss_right,wall_clock_s";

pub fn loss_csv_row(row: &LossRow) -> String {
    let l = &row.loss;
    format!(
        "{},{},{},{},{},{:.3}",
        l.step, l.mean, l.per_command.forward, l.per_command.turn_left, l.per_command.turn_right, row.wall_clock_s
    )
}

pub fn write_loss_csv(path: &Path, rows: &[LossRow]) -> Result<()> {
    let mut out = String::from(LOSS_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&loss_csv_row(r));
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

/// Outcome of [`train`].
pub struct TrainRun {
    pub network: PolicyNetwork,
    pub history: Vec<LossRow>,
    pub checkpoints: Vec<std::path::PathBuf>,
    pub wall_clock_s: f64,
}

/// Full training run writing `loss.csv` and checkpoints into `out_dir`
/// (when given). A non-finite loss aborts after saving
/// `checkpoint_diverged.json`.
pub fn train(
    dataset: &DemoDataset,
    config: &TrainConfig,
    graph: &GraphConfig,
    resume: Option<&Checkpoint>,
    out_dir: Option<&Path>,
) -> Result<TrainRun> {
    let mut trainer = match resume {
        Some(ck) => Trainer::resume(dataset, config, ck)?,
        None => Trainer::new(dataset, config, graph)?,
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let start = Instant::now();
    let until = trainer.total_steps();
    let mut history = Vec::new();
    let mut checkpoints = Vec::new();
    let every = config.eval_every;
    let result = trainer.run_until(until, |t, loss| {
        history.push(LossRow { loss: *loss, wall_clock_s: start.elapsed().as_secs_f64() });
        if let Some(dir) = out_dir {
            if every > 0 && t.step % every == 0 && t.step < until {
                let path = dir.join(format!("checkpoint_{:06}.json", t.step));
                t.checkpoint().save(&path)?;
                checkpoints.push(path);
            }
        }
        Ok(())
    });
    if let Some(dir) = out_dir {
        write_loss_csv(&dir.join("loss.csv"), &history)?;
        if let Err(Error::NonFiniteLoss { .. }) = &result {
            trainer.checkpoint().save(&dir.join("checkpoint_diverged.json"))?;
        }
    }
    result?;
    if let Some(dir) = out_dir {
        let path = dir.join("checkpoint_final.json");
        trainer.checkpoint().save(&path)?;
        checkpoints.push(path);
    }
    Ok(TrainRun { network: trainer.network, history, checkpoints, wall_clock_s: start.elapsed().as_secs_f64() })
}
