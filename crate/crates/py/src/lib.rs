use std::path::PathBuf;

use gcil::checkpoint::Checkpoint;
use gcil::config::Config;
use gcil::demo::{collect_dataset, read_dataset, write_dataset};
use gcil::eval::{run_suite, run_trial, Driver, ExpertDriver, Setup};
use gcil::geometry::Vec2;
use gcil::graph::{build_adjacency, edge_weight as weight, EdgeStrategy, GraphConfig};
use gcil::nn::{GradCheckOptions, ParamSet, Tensor2};
use gcil::policy::{CheckBatch, Command, NetInput, NetworkKind, PolicyNetwork};
use gcil::train::train as train_policy;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

create_exception!(gcil_py, GcilError, PyException);

fn err(e: gcil::Error) -> PyErr {
    GcilError::new_err(e.to_string())
}

fn parse<T: std::str::FromStr<Err = String>>(s: &str) -> PyResult<T> {
    s.parse().map_err(GcilError::new_err)
}

fn config_from(toml: Option<&str>) -> PyResult<Config> {
    toml.map_or_else(|| Ok(Config::default()), |t| Config::from_toml_str(t).map_err(err))
}

/// A policy network of any family.
#[pyclass(name = "Policy", module = "gcil_py", from_py_object)]
#[derive(Clone)]
struct Policy {
    inner: PolicyNetwork,
}

#[pymethods]
impl Policy {
    /// Fresh network: `kind` is "gcil", "nncil" or "setcil".
    #[new]
    #[pyo3(signature = (kind = "gcil", seed = 0, strategy = "n_close_weighted"))]
    fn new(kind: &str, seed: u64, strategy: &str) -> PyResult<Self> {
        let graph = GraphConfig::default().with_strategy(parse(strategy)?);
        let config = Config::default();
        Ok(Self { inner: PolicyNetwork::new(parse(kind)?, &config.train.topology, graph, seed) })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (inner, _) = Checkpoint::load(&path).map_err(err)?.restore(None).map_err(err)?;
        Ok(Self { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        Checkpoint::capture(&self.inner, None, 0).save(&path).map_err(err)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind().as_str()
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.param_count()
    }

    /// Action `(delta, tau)` for an `N x 12` node-feature matrix.
    fn act(&self, features: Vec<Vec<f64>>, command: &str) -> PyResult<(f64, f64)> {
        let s = Tensor2::from_rows(&features).map_err(err)?;
        let input = NetInput::from_features(s, &self.inner.graph).map_err(err)?;
        let a = self.inner.act(&input, parse(command)?).map_err(err)?;
        Ok((a.delta, a.tau))
    }

    /// Largest relative error of a finite-difference gradient check.
    #[pyo3(signature = (samples = 200, seed = 0))]
    fn gradcheck(&self, samples: usize, seed: u64) -> PyResult<f64> {
        let config = Config::default();
        let batch = CheckBatch::from_scenarios(&config.scenario(), &self.inner.graph, 6, seed).map_err(err)?;
        let options = GradCheckOptions { samples, seed, ..Default::default() };
        Ok(self.inner.gradient_check(&batch, options).map_err(err)?.max_rel_error)
    }

    fn __repr__(&self) -> String {
        format!("Policy(kind={:?}, params={})", self.kind(), self.param_count())
    }
}

#[pyfunction]
#[pyo3(signature = (distance, alpha = 10.0))]
fn edge_weight(distance: f64, alpha: f64) -> f64 {
    weight(distance, alpha)
}

/// Row-normalized adjacency for node positions (ego first).
#[pyfunction]
#[pyo3(signature = (positions, strategy = "n_close_weighted"))]
fn adjacency(positions: Vec<(f64, f64)>, strategy: &str) -> PyResult<Vec<Vec<f64>>> {
    let strategy: EdgeStrategy = parse(strategy)?;
    let p: Vec<Vec2> = positions.into_iter().map(|(x, y)| Vec2::new(x, y)).collect();
    Ok(build_adjacency(&p, &GraphConfig::default().with_strategy(strategy)).to_rows())
}

/// Records expert demonstrations; returns per-command sample counts.
#[pyfunction]
#[pyo3(signature = (out_dir, episodes = 10, seed = 0, config = None))]
fn collect(out_dir: PathBuf, episodes: usize, seed: u64, config: Option<&str>) -> PyResult<Vec<(String, usize)>> {
    let c = config_from(config)?;
    let d = collect_dataset(&c.scenario(), &c.graph, &c.expert, episodes, seed, &c.hash(), 1).map_err(err)?;
    write_dataset(&d, &out_dir).map_err(err)?;
    Ok(d.manifest.counts.iter().map(|(cmd, n)| (cmd.to_string(), *n)).collect())
}

/// Trains a policy on a dataset directory.
#[pyfunction]
#[pyo3(signature = (dataset_dir, network = "gcil", max_steps = None, seed = 0, out_dir = None, config = None))]
fn train(
    dataset_dir: PathBuf,
    network: &str,
    max_steps: Option<u64>,
    seed: u64,
    out_dir: Option<PathBuf>,
    config: Option<&str>,
) -> PyResult<(Policy, Vec<f64>)> {
    let mut c = config_from(config)?;
    c.train.network = parse(network)?;
    c.train.seed = seed;
    if max_steps.is_some() {
        c.train.max_steps = max_steps;
    }
    let d = read_dataset(&dataset_dir).map_err(err)?;
    let run = train_policy(&d, &c.train, &c.graph, None, out_dir.as_deref()).map_err(err)?;
    let losses = run.history.iter().map(|h| h.loss.mean).collect();
    Ok((Policy { inner: run.network }, losses))
}

fn driver(policy: Option<&Policy>, config: &Config) -> Box<dyn Driver> {
    match policy {
        Some(p) => Box::new(p.inner.clone()),
        None => Box::new(ExpertDriver(config.expert.clone())),
    }
}

/// Evaluation suite rows `(setup, command, SR %, CR %, time or None)`;
/// `policy=None` evaluates the scripted expert.
#[pyfunction]
#[pyo3(signature = (policy = None, trials = 5, seed = 10_000, setups = None, config = None))]
fn evaluate(
    policy: Option<Policy>,
    trials: usize,
    seed: u64,
    setups: Option<Vec<String>>,
    config: Option<&str>,
) -> PyResult<Vec<(String, String, f64, f64, Option<f64>)>> {
    let mut c = config_from(config)?;
    c.eval.trials = trials;
    c.eval.base_seed = seed;
    if let Some(s) = setups {
        c.eval.setups = s.iter().map(|x| parse::<Setup>(x)).collect::<PyResult<_>>()?;
    }
    let d = driver(policy.as_ref(), &c);
    let report = run_suite(d.as_ref(), &c.scenario(), &c.eval, 1).map_err(err)?;
    Ok(report
        .rows
        .iter()
        .map(|r| {
            let command = r.command.map_or("avg".to_string(), |c| c.to_string());
            (r.setup.to_string(), command, r.success_rate, r.collision_rate, r.mean_nav_time)
        })
        .collect())
}

/// One seeded trial: `(outcome, elapsed_s, steps)`.
#[pyfunction]
#[pyo3(signature = (setup, command, seed, policy = None))]
fn run_episode(setup: &str, command: &str, seed: u64, policy: Option<Policy>) -> PyResult<(String, f64, usize)> {
    let c = Config::default();
    let cmd: Command = parse(command)?;
    let cell = c.eval.cell_config(&c.scenario(), parse(setup)?, cmd);
    let d = driver(policy.as_ref(), &c);
    let (o, _) = run_trial(d.as_ref(), &cell, seed, false).map_err(err)?;
    Ok((o.tag.as_str().to_string(), o.elapsed, o.steps))
}

#[pyfunction]
fn network_kinds() -> Vec<&'static str> {
    NetworkKind::ALL.iter().map(|k| k.as_str()).collect()
}

#[pymodule]
fn gcil_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("GcilError", m.py().get_type::<GcilError>())?;
    m.add_class::<Policy>()?;
    m.add_function(wrap_pyfunction!(edge_weight, m)?)?;
    m.add_function(wrap_pyfunction!(adjacency, m)?)?;
    m.add_function(wrap_pyfunction!(collect, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(run_episode, m)?)?;
    m.add_function(wrap_pyfunction!(network_kinds, m)?)?;
    Ok(())
}
