use std::path::Path;

use gcil::demo::collect_dataset;
use gcil::eval::{
    ablation_csv, aggregate, parse_trials_csv, report_csv, run_ablation, run_suite, trials_csv, ConstantDriver,
    EvalConfig, ExpertDriver, Setup,
};
use gcil::expert::ExpertParams;
use gcil::graph::{EdgeStrategy, GraphConfig};
use gcil::policy::{Action, Command};
use gcil::train::TrainConfig;
use gcil::world::{OutcomeTag, ScenarioConfig};

fn small_eval(trials: usize) -> EvalConfig {
    EvalConfig { trials, ..Default::default() }
}

#[test]
fn always_brake_never_succeeds() {
    let report = run_suite(&ConstantDriver(Action::new(0.0, -1.0)), &ScenarioConfig::default(), &small_eval(4), 1).unwrap();
    assert_eq!(report.trials.len(), 36);
    for row in &report.rows {
        assert_eq!(row.success_rate, 0.0);
        assert_eq!(row.mean_nav_time, None);
    }
    for t in &report.trials {
        assert!(matches!(t.outcome.tag, OutcomeTag::Collision | OutcomeTag::Timeout));
    }
    assert!(report_csv(&report).lines().skip(1).all(|l| l.contains(",NA,")));
}

#[test]
fn reports_are_deterministic_and_reaggregate() {
    let driver = ExpertDriver(ExpertParams::default());
    let eval = small_eval(3);
    let a = run_suite(&driver, &ScenarioConfig::default(), &eval, 1).unwrap();
    let b = run_suite(&driver, &ScenarioConfig::default(), &eval, 2).unwrap();
    assert_eq!(report_csv(&a), report_csv(&b));
    assert_eq!(trials_csv(&a), trials_csv(&b));

    let parsed = parse_trials_csv(Path::new("trials.csv"), &trials_csv(&a)).unwrap();
    let again = aggregate(&a.method, a.base_seed, parsed).unwrap();
    assert_eq!(again.rows, a.rows);
    assert_eq!(report_csv(&again), report_csv(&a));

    for setup in Setup::ALL {
        let cells: Vec<_> = a.rows.iter().filter(|r| r.setup == setup).collect();
        assert_eq!(cells.len(), 4);
        let avg = cells[3];
        assert!(avg.command.is_none());
        let mean = cells[..3].iter().map(|c| c.success_rate).sum::<f64>() / 3.0;
        assert!((avg.success_rate - mean).abs() < 1e-12);
    }
}

#[test]
fn seeds_follow_base_plus_index() {
    let eval = EvalConfig { trials: 2, base_seed: 500, setups: vec![Setup::Easy], commands: vec![Command::TurnLeft], ..Default::default() };
    let r = run_suite(&ExpertDriver(ExpertParams::default()), &ScenarioConfig::default(), &eval, 1).unwrap();
    let seeds: Vec<u64> = r.trials.iter().map(|t| t.seed).collect();
    assert_eq!(seeds, [500, 501]);
    assert!(report_csv(&r).lines().nth(1).unwrap().ends_with(",2,500"));
}

#[test]
fn ablation_varies_only_the_strategy() {
    let graph = GraphConfig::default();
    let d = collect_dataset(&ScenarioConfig::default(), &graph, &ExpertParams::default(), 1, 0, "t", 1).unwrap();
    let train = TrainConfig { batch_size: 30, max_steps: Some(3), ..Default::default() };
    let rows = run_ablation(&d, &EdgeStrategy::ALL, &train, &graph, &ScenarioConfig::default(), &small_eval(2), 1).unwrap();
    assert_eq!(rows.len(), 4);
    let csv = ablation_csv(&rows);
    assert_eq!(csv.lines().count(), 5);
    assert_eq!(csv.lines().next().unwrap(), "strategy,success_rate_pct,collision_rate_pct,mean_nav_time_s");
    let ours = rows.iter().find(|r| r.strategy == EdgeStrategy::NCloseWeighted).unwrap();
    let flat = rows.iter().find(|r| r.strategy == EdgeStrategy::NonWeighted).unwrap();
    assert_eq!(ours.graph.with_strategy(EdgeStrategy::NonWeighted), flat.graph);
    for r in &rows {
        assert_eq!(r.report.trials.len(), 2);
        assert!(r.report.trials.iter().all(|t| t.setup == Setup::Hard && t.command == Command::Forward));
    }
}
