//! Acceptance suite: one line per criterion, nonzero exit on any failure.

use std::path::Path;
use std::time::Instant;

use gcil::checkpoint::Checkpoint;
use gcil::demo::{collect_dataset, write_dataset, DemoDataset};
use gcil::eval::{
    ablation_csv, aggregate, collision_rate, mean_navigation_time, parse_trials_csv, report_csv, run_ablation,
    run_suite, success_rate, trials_csv, EvalConfig, ExpertDriver, Setup, TrialResult, REFERENCE_ABLATION,
};
use gcil::expert::ExpertParams;
use gcil::geometry::Vec2;
use gcil::graph::{build_adjacency, build_features, edge_weight, EdgeStrategy, GraphConfig, EGO_DIM, NODE_DIM};
use gcil::nn::{GradCheckOptions, ParamSet, Tensor2};
use gcil::policy::{
    BatchCache, CheckBatch, Command, NetInput, NetworkBody, NetworkKind, PolicyNetwork, Topology, PERCEPTION_DIM,
};
use gcil::train::{train, TrainConfig, Trainer};
use gcil::world::{spawn_scenario, EpisodeOutcome, OutcomeTag, ScenarioConfig, Simulation};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn gradient_fidelity() -> Verdict {
    let start = Instant::now();
    let config = ScenarioConfig::default();
    let batch = CheckBatch::from_scenarios(&config, &GraphConfig::default(), 6, 21).map_err(e2s)?;
    let mut details = Vec::new();
    for kind in NetworkKind::ALL {
        let net = PolicyNetwork::new(kind, &Topology::default(), GraphConfig::default(), 17);
        let options = GradCheckOptions { samples: 300, seed: 2, ..Default::default() };
        let r = net.gradient_check(&batch, options).map_err(e2s)?;
        details.push(format!("{kind} {:.2e} ({} params)", r.max_rel_error, r.checked));
        ensure(r.checked >= 200, format!("{kind}: only {} parameters checked", r.checked))?;
        ensure(r.max_rel_error < 1e-4, format!("{kind}: max relative error {:.3e} at {:?}", r.max_rel_error, r.worst))?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 120.0, format!("took {secs:.1} s"))?;
    Ok(format!("{}; {secs:.1} s", details.join(", ")))
}

fn adjacency_invariants() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checked = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=9);
        let p: Vec<Vec2> = (0..n).map(|_| Vec2::new(rng.gen_range(-40.0..40.0), rng.gen_range(-40.0..40.0))).collect();
        for strategy in EdgeStrategy::ALL {
            let config = GraphConfig::default().with_strategy(strategy);
            let a = build_adjacency(&p, &config);
            for i in 0..n {
                let sum: f64 = a.row(i).iter().sum();
                ensure((sum - 1.0).abs() <= 1e-9, format!("{strategy} row {i} sums to {sum}"))?;
                ensure(a.get(i, i) > 0.0, format!("{strategy} diagonal {i} not positive"))?;
                let nonzero = a.row(i).iter().filter(|&&x| x > 0.0).count();
                let want = match (strategy, i) {
                    (EdgeStrategy::FullyConnected, _) | (_, 0) => n,
                    (EdgeStrategy::StarConnected, _) => 2,
                    _ => (config.k + 1).min(n),
                };
                ensure(nonzero == want, format!("{strategy} row {i}: {nonzero} nonzeros, expected {want}"))?;
                if strategy == EdgeStrategy::FullyConnected {
                    ensure(a.row(i).iter().all(|&x| x == 1.0 / n as f64), "fully-connected row not uniform")?;
                }
            }
            checked += 1;
        }
    }
    let four: Vec<Vec2> = (0..4).map(|i| Vec2::new(i as f64 * 3.0, 1.0 - i as f64)).collect();
    let a = build_adjacency(&four, &GraphConfig::default().with_strategy(EdgeStrategy::FullyConnected));
    ensure(a.data().iter().all(|&x| x == 0.25), "N=4 fully-connected entries are not 0.25")?;
    Ok(format!("{checked} (configuration, strategy) pairs"))
}

fn weight_points() -> Verdict {
    let w0 = edge_weight(0.0, 10.0);
    let w10 = edge_weight(10.0, 10.0);
    ensure(w0 == 1.0, format!("weight(0) = {w0}"))?;
    ensure((w10 - (-1.0f64).exp()).abs() <= 1e-12, format!("weight(10) = {w10}"))?;
    Ok(format!("weight(0) = {w0}, weight(10) = {w10:.15}"))
}

fn permute(s: &Tensor2, order: &[usize]) -> Tensor2 {
    s.gather_rows(order)
}

fn structure() -> Verdict {
    let graph = GraphConfig::default();
    let mut config = ScenarioConfig::default();
    config.traffic.density = Some(6);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let nets: Vec<PolicyNetwork> =
        NetworkKind::ALL.iter().map(|&k| PolicyNetwork::new(k, &Topology::default(), graph, 5)).collect();
    let mut cases = 0;
    for seed in 0..40 {
        let scenario = spawn_scenario(&config, seed).map_err(e2s)?;
        let s = build_features(&scenario.world, &scenario.goal, &graph);
        let n = scenario.world.vehicle_count();
        ensure(s.shape() == (n, NODE_DIM), format!("S is {:?}", s.shape()))?;
        ensure((0..n).all(|i| s.row(i)[..EGO_DIM] == s.row(0)[..EGO_DIM]), "ego block not shared")?;
        ensure(s.row(0)[EGO_DIM..].iter().all(|&x| x == 0.0), "ego relative block not zero")?;

        let input = NetInput::from_features(s.clone(), &graph).map_err(e2s)?;
        let mut tail: Vec<usize> = (1..n).collect();
        tail.shuffle(&mut rng);
        let order: Vec<usize> = std::iter::once(0).chain(tail).collect();
        let shuffled = NetInput::from_features(permute(&s, &order), &graph).map_err(e2s)?;
        for net in &nets {
            let command = Command::ALL[seed as usize % 3];
            let (out, cache) = net.forward_batch(&[&input], &[command]).map_err(e2s)?;
            ensure(out.data().iter().all(|x| (-1.0..=1.0).contains(x)), "action outside [-1, 1]")?;
            if let BatchCache::Gcil(c) = &cache {
                ensure(c.perception.cols() == PERCEPTION_DIM && PERCEPTION_DIM == 16, "p_t is not 16-dimensional")?;
            }
            let (again, _) = net.forward_batch(&[&shuffled], &[command]).map_err(e2s)?;
            match &net.body {
                NetworkBody::Gcil(g) => {
                    ensure(out == again, "G-CIL output changed under node relabeling")?;
                    let (mut h, mut hp) = (net.topology.scale_features(&input.features), net.topology.scale_features(&shuffled.features));
                    for layer in &g.gcn {
                        h = layer.forward(&input.adjacency, &h).map_err(e2s)?.0;
                        hp = layer.forward(&shuffled.adjacency, &hp).map_err(e2s)?.0;
                        ensure(permute(&h, &order) == hp, "GCN embeddings not permutation-equivariant")?;
                    }
                }
                NetworkBody::Setcil(_) => ensure(out == again, "Set-CIL output changed under permutation")?,
                NetworkBody::Nncil(_) => {}
            }
        }
        cases += 1;
    }

    // Branch isolation on a mixed batch that never selects TurnRight.
    let batch = CheckBatch::from_scenarios(&config, &graph, 6, 8).map_err(e2s)?;
    let refs: Vec<&NetInput> = batch.inputs.iter().collect();
    let commands: Vec<Command> = (0..6).map(|i| [Command::Forward, Command::TurnLeft][i % 2]).collect();
    for net in &nets {
        let (out, cache) = net.forward_batch(&refs, &commands).map_err(e2s)?;
        let names: Vec<String> = net.named_params().into_iter().map(|(n, _)| n).collect();
        let mut poked = net.clone();
        for (name, p) in names.iter().zip(poked.params_mut()) {
            if name.contains("branch.turn_right") {
                p.data_mut().iter_mut().for_each(|x| *x = -*x + 0.5);
            }
        }
        let (out2, _) = poked.forward_batch(&refs, &commands).map_err(e2s)?;
        ensure(out == out2, format!("{}: output depends on an unselected branch", net.kind()))?;
        let grads = net.backward(&cache, &Tensor2::filled(6, 2, 0.7)).map_err(e2s)?;
        for (name, g) in names.iter().zip(grads.tensors()) {
            if name.contains("branch.turn_right") {
                ensure(g.data().iter().all(|&x| x == 0.0), format!("{}: nonzero gradient in {name}", net.kind()))?;
            }
        }
    }
    Ok(format!("{cases} scenes x 3 networks; branch isolation on 3 networks"))
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

/// Loss CSV without the wall-clock column.
fn loss_columns(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().map_err(e2s)?;
    let graph = GraphConfig::default();
    let scenario = ScenarioConfig::default();
    let collect = || collect_dataset(&scenario, &graph, &ExpertParams::default(), 4, 77, "h", 1);
    let (a, b) = (collect().map_err(e2s)?, collect().map_err(e2s)?);
    write_dataset(&a, &dir.path().join("a")).map_err(e2s)?;
    write_dataset(&b, &dir.path().join("b")).map_err(e2s)?;
    ensure(read_all(&dir.path().join("a")) == read_all(&dir.path().join("b")), "datasets differ")?;

    let config = TrainConfig { batch_size: 60, max_steps: Some(40), eval_every: 10, seed: 3, ..Default::default() };
    let ra = train(&a, &config, &graph, None, Some(&dir.path().join("ta"))).map_err(e2s)?;
    let rb = train(&a, &config, &graph, None, Some(&dir.path().join("tb"))).map_err(e2s)?;
    ensure(
        loss_columns(&dir.path().join("ta/loss.csv")) == loss_columns(&dir.path().join("tb/loss.csv")),
        "loss curves differ",
    )?;
    for name in ["checkpoint_000010.json", "checkpoint_final.json"] {
        let x = std::fs::read(dir.path().join("ta").join(name)).map_err(e2s)?;
        let y = std::fs::read(dir.path().join("tb").join(name)).map_err(e2s)?;
        ensure(x == y, format!("{name} differs"))?;
    }

    let eval = EvalConfig { trials: 3, ..Default::default() };
    let e1 = run_suite(&ra.network, &scenario, &eval, 1).map_err(e2s)?;
    let e2 = run_suite(&rb.network, &scenario, &eval, 2).map_err(e2s)?;
    ensure(report_csv(&e1) == report_csv(&e2) && trials_csv(&e1) == trials_csv(&e2), "eval reports differ")?;

    let mut resumed_kinds = Vec::new();
    for kind in NetworkKind::ALL {
        let config = TrainConfig { network: kind, ..config.clone() };
        let full = train(&a, &config, &graph, None, None).map_err(e2s)?;
        let mut head = Trainer::new(&a, &config, &graph).map_err(e2s)?;
        head.run_until(17, |_, _| Ok(())).map_err(e2s)?;
        let path = dir.path().join(format!("resume_{kind}.json"));
        head.checkpoint().save(&path).map_err(e2s)?;
        let ck = Checkpoint::load(&path).map_err(e2s)?;
        let tail = train(&a, &config, &graph, Some(&ck), None).map_err(e2s)?;
        ensure(tail.network == full.network, format!("{kind}: resumed parameters differ"))?;
        let x: Vec<_> = full.history[17..].iter().map(|h| h.loss).collect();
        let y: Vec<_> = tail.history.iter().map(|h| h.loss).collect();
        ensure(x == y, format!("{kind}: resumed loss curve differs"))?;
        resumed_kinds.push(kind.as_str());
    }
    Ok(format!(
        "{} samples collected twice, 40-step curves, 27-trial reports, resume at 17 for {}",
        a.len(),
        resumed_kinds.join("/")
    ))
}

fn expert_gate() -> Verdict {
    let start = Instant::now();
    let mut config = ScenarioConfig::default();
    config.traffic.density = Some(Setup::Easy.density());
    let expert = ExpertParams::default();
    let mut successes = 0;
    for seed in 0..100 {
        let scenario = spawn_scenario(&config, seed).map_err(e2s)?;
        let mut sim = Simulation::new(scenario, &config);
        let driver = ExpertDriver(expert.clone());
        let outcome = sim.run(|s| gcil::eval::Driver::act(&driver, s)).map_err(e2s)?;
        successes += usize::from(outcome.tag == OutcomeTag::Success);
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(successes >= 90, format!("expert success {successes}/100"))?;
    ensure(secs < 120.0, format!("took {secs:.1} s"))?;
    Ok(format!("SR {successes}% over 100 episodes with 4 vehicles; {secs:.1} s"))
}

fn epoch_means(losses: &[f64], steps_per_epoch: usize) -> Vec<f64> {
    losses.chunks(steps_per_epoch).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()
}

fn learning_gate(dataset: &DemoDataset, train_config: &TrainConfig) -> Verdict {
    let start = Instant::now();
    let graph = GraphConfig::default();
    let scenario = ScenarioConfig::default();
    ensure(dataset.len() >= 5000, format!("only {} samples", dataset.len()))?;
    let run = train(dataset, train_config, &graph, None, None).map_err(e2s)?;
    let losses: Vec<f64> = run.history.iter().map(|h| h.loss.mean).collect();
    let spe = train_config.steps_per_epoch(dataset.len()) as usize;
    let epochs = epoch_means(&losses, spe);
    let (first, last) = (epochs[0], *epochs.last().unwrap());
    let reduction = 1.0 - last / first;

    let windows: Vec<f64> = losses.chunks(20).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    let rises = windows.windows(2).filter(|w| w[1] > w[0]).count();

    let eval = EvalConfig { trials: 50, setups: vec![Setup::Easy], ..Default::default() };
    let trained = run_suite(&run.network, &scenario, &eval, 1).map_err(e2s)?;
    let fresh = PolicyNetwork::new(NetworkKind::Gcil, &train_config.topology, graph, train_config.seed);
    let untrained = run_suite(&fresh, &scenario, &eval, 1).map_err(e2s)?;
    let sr = |r: &gcil::eval::SuiteReport| r.rows.iter().find(|x| x.command.is_none()).unwrap().success_rate;
    let per_command: Vec<String> = trained
        .rows
        .iter()
        .filter_map(|r| r.command.map(|c| format!("{c} {:.0}%", r.success_rate)))
        .collect();
    let secs = start.elapsed().as_secs_f64() + dataset_seconds();
    let summary = format!(
        "{} samples, {} steps, epoch loss {first:.4} -> {last:.4} (-{:.1}%), SR trained {:.2}% [{}] vs untrained {:.2}%, \
         20-step window rises {rises}/{} (soft), {secs:.0} s",
        dataset.len(),
        losses.len(),
        reduction * 100.0,
        sr(&trained),
        per_command.join(", "),
        sr(&untrained),
        windows.len() - 1
    );
    ensure(reduction >= 0.8, format!("loss reduction {:.1}%: {summary}", reduction * 100.0))?;
    ensure(sr(&trained) >= 60.0, format!("trained SR too low: {summary}"))?;
    ensure(sr(&untrained) <= 10.0, format!("untrained SR too high: {summary}"))?;
    ensure(secs < 900.0, format!("too slow: {summary}"))?;
    Ok(summary)
}

static DATASET_SECONDS: std::sync::Mutex<f64> = std::sync::Mutex::new(0.0);

fn dataset_seconds() -> f64 {
    *DATASET_SECONDS.lock().unwrap()
}

fn overfit_gate() -> Verdict {
    let start = Instant::now();
    let mut d = collect_dataset(&ScenarioConfig::default(), &GraphConfig::default(), &ExpertParams::default(), 1, 5, "o", 1)
        .map_err(e2s)?;
    for (c, keep) in Command::ALL.into_iter().zip([6, 5, 5]) {
        let buf = d.buffers.get_mut(c);
        let stride = buf.len() / keep;
        *buf = buf.iter().step_by(stride).take(keep).cloned().collect();
    }
    ensure(d.len() == 16, format!("{} samples", d.len()))?;
    let config = TrainConfig { batch_size: 48, max_steps: Some(2000), seed: 1, ..Default::default() };
    let mut trainer = Trainer::new(&d, &config, &GraphConfig::default()).map_err(e2s)?;
    let mut reached = None;
    while trainer.step < 2000 {
        trainer.train_step().map_err(e2s)?;
        if trainer.step % 100 == 0 && trainer.dataset_loss().map_err(e2s)? < 1e-3 {
            reached = Some(trainer.step);
            break;
        }
    }
    let loss = trainer.dataset_loss().map_err(e2s)?;
    let secs = start.elapsed().as_secs_f64();
    ensure(reached.is_some(), format!("loss {loss:.2e} after 2000 steps"))?;
    ensure(secs < 60.0, format!("took {secs:.1} s"))?;
    Ok(format!("loss {loss:.2e} at step {}; {secs:.1} s", reached.unwrap()))
}

fn trial(tag: OutcomeTag, seed: u64) -> TrialResult {
    TrialResult {
        setup: Setup::Easy,
        command: Command::Forward,
        seed,
        outcome: EpisodeOutcome { tag, elapsed: 10.0 + seed as f64, steps: 100 },
    }
}

fn metric_exactness() -> Verdict {
    let eval = EvalConfig { trials: 4, ..Default::default() };
    let report = run_suite(&ExpertDriver(ExpertParams::default()), &ScenarioConfig::default(), &eval, 1).map_err(e2s)?;
    let parsed = parse_trials_csv(Path::new("trials.csv"), &trials_csv(&report)).map_err(e2s)?;
    ensure(parsed == report.trials, "per-trial CSV does not round-trip")?;
    for row in report.rows.iter().filter(|r| r.command.is_some()) {
        let cell: Vec<TrialResult> =
            parsed.iter().filter(|t| t.setup == row.setup && Some(t.command) == row.command).copied().collect();
        ensure(success_rate(&cell).map_err(e2s)? == row.success_rate, "SR mismatch")?;
        ensure(collision_rate(&cell).map_err(e2s)? == row.collision_rate, "CR mismatch")?;
        ensure(mean_navigation_time(&cell) == row.mean_nav_time, "navigation time mismatch")?;
    }
    let regrouped = aggregate(&report.method, report.base_seed, parsed).map_err(e2s)?;
    ensure(report_csv(&regrouped) == report_csv(&report), "re-aggregated report differs")?;

    let mut mixed: Vec<TrialResult> = (0..3).map(|s| trial(OutcomeTag::Success, s)).collect();
    mixed.extend((3..7).map(|s| trial(OutcomeTag::Collision, s)));
    mixed.extend((7..10).map(|s| trial(OutcomeTag::Timeout, s)));
    let (sr, cr) = (success_rate(&mixed).map_err(e2s)?, collision_rate(&mixed).map_err(e2s)?);
    ensure(sr == 30.0 && cr == 40.0, format!("SR {sr}, CR {cr}"))?;
    let none = aggregate("m", 0, (0..5).map(|s| trial(OutcomeTag::Collision, s)).collect()).map_err(e2s)?;
    ensure(report_csv(&none).lines().skip(1).all(|l| l.split(',').nth(5) == Some("NA")), "zero-success cell not NA")?;
    Ok(format!("{} trials re-aggregated exactly; 30%/40% split; NA cells", report.trials.len()))
}

fn ablation(dataset: &DemoDataset, train_config: &TrainConfig) -> Verdict {
    let start = Instant::now();
    let graph = GraphConfig::default();
    let eval = EvalConfig { trials: 200, ..Default::default() };
    let rows = run_ablation(dataset, &EdgeStrategy::ALL, train_config, &graph, &ScenarioConfig::default(), &eval, 1)
        .map_err(e2s)?;
    let csv = ablation_csv(&rows);
    ensure(csv.lines().count() == 5, "ablation CSV must have 4 rows")?;
    ensure(csv.lines().skip(1).all(|l| l.split(',').count() == 4), "ablation rows must have 4 fields")?;
    for r in &rows {
        ensure(r.graph == graph.with_strategy(r.strategy), format!("{} differs beyond its strategy", r.strategy))?;
    }
    for line in csv.lines() {
        println!("      {line}");
    }
    for (strategy, sr, cr, time) in REFERENCE_ABLATION {
        println!("      reference {strategy}: SR {sr:.2}, CR {cr:.2}, time {time:.2}");
    }
    let cr = |s: EdgeStrategy| rows.iter().find(|r| r.strategy == s).unwrap().collision_rate();
    let (weighted, flat) = (cr(EdgeStrategy::NCloseWeighted), cr(EdgeStrategy::NonWeighted));
    let soft = if weighted <= flat { "holds" } else { "does not hold" };
    Ok(format!(
        "4 rows, 200 hard-Forward trials each; soft check weighted CR {weighted:.2}% <= non-weighted {flat:.2}% {soft}; {:.0} s",
        start.elapsed().as_secs_f64()
    ))
}

fn main() {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let wants = |n: usize| filter.as_deref().map_or(true, |f| f.split(',').any(|x| x == n.to_string()));
    let mut failures = 0;
    let mut report = |n: usize, name: &str, verdict: Verdict| {
        match verdict {
            Ok(detail) => println!("[PASS] {n:>2} {name}: {detail}"),
            Err(detail) => {
                failures += 1;
                println!("[FAIL] {n:>2} {name}: {detail}");
            }
        }
    };

    let cheap: [(usize, &str, fn() -> Verdict); 7] = [
        (1, "gradient fidelity", gradient_fidelity),
        (2, "adjacency invariants", adjacency_invariants),
        (3, "edge weight points", weight_points),
        (4, "structure, branch isolation, permutation symmetry", structure),
        (5, "determinism and resume", determinism),
        (6, "expert gate", expert_gate),
        (8, "overfit gate", overfit_gate),
    ];
    for (n, name, check) in cheap {
        if wants(n) {
            report(n, name, check());
        }
    }

    if wants(9) {
        report(9, "metric exactness", metric_exactness());
    }

    if wants(7) || wants(10) {
        let start = Instant::now();
        let dataset = collect_dataset(
            &ScenarioConfig::default(),
            &GraphConfig::default(),
            &ExpertParams::default(),
            100,
            0,
            "acceptance",
            1,
        );
        *DATASET_SECONDS.lock().unwrap() = start.elapsed().as_secs_f64();
        match dataset {
            Err(e) => {
                report(7, "learning gate", Err(e.to_string()));
                report(10, "ablation harness", Err(e.to_string()));
            }
            Ok(dataset) => {
                if wants(7) {
                    report(7, "learning gate", learning_gate(&dataset, &TrainConfig::default()));
                }
                if wants(10) {
                    let config = TrainConfig { max_steps: Some(1500), ..Default::default() };
                    report(10, "ablation harness", ablation(&dataset, &config));
                }
            }
        }
    }

    if failures > 0 {
        println!("{failures} criterion(s) failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
