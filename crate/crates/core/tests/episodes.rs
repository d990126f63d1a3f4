use std::sync::OnceLock;

use sage_core::bench::{generate_scenario, Family, Mode, ScenarioConfig};
use sage_core::config::RunConfig;
use sage_core::layout::{fit, Predictor};
use sage_core::library::Library;
use sage_core::parser::parse;
use sage_core::planner::{Ordering, TaskSpec};
use sage_core::sim::episode::{run_episode, verify_graph, PhaseVerdict};

fn fixture() -> &'static (Library, Predictor<f64>) {
    static F: OnceLock<(Library, Predictor<f64>)> = OnceLock::new();
    F.get_or_init(|| {
        let lib = Library::build(&Family::ALL, 20, 11, &RunConfig::default()).unwrap();
        let p = fit(&lib.examples(), (640, 360)).unwrap();
        (lib, p)
    })
}

#[test]
fn satisfied_task_has_no_phases() {
    let (lib, p) = fixture();
    let (w, _) = generate_scenario(&ScenarioConfig::new(Family::SequentialStack, 1, 0)).unwrap();
    let task = TaskSpec { description: String::new(), goals: Vec::new(), ordering: Ordering::Sequential, order_seed: 0 };
    let r = run_episode(&w, &task, Mode::Seen, p, lib, &RunConfig::default()).unwrap();
    assert!(r.success);
    assert!(r.phases.is_empty());
}

#[test]
fn episodes_succeed_and_verdicts_replay_offline() {
    let (lib, p) = fixture();
    let cfg = RunConfig::default();
    for f in Family::ALL {
        for (mode, order) in [(Mode::Seen, 0), (Mode::Unseen, 1)] {
            let (w, task) = generate_scenario(&ScenarioConfig::new(f, 900 + order, order)).unwrap();
            let r = run_episode(&w, &task, mode, p, lib, &cfg).unwrap();
            assert!(r.success, "{f} {mode:?}: {:?}", r.phases.iter().find(|p| p.verdict != PhaseVerdict::Passed));
            for ph in &r.phases {
                let g = parse(ph.achieved.as_ref().unwrap(), &cfg.thresholds).unwrap();
                let offline = verify_graph(&g, &r.chain.graphs[ph.index + 1]).is_ok();
                assert_eq!(offline, ph.verdict == PhaseVerdict::Passed);
            }
        }
    }
}

#[test]
fn truncated_chain_passes_phases_but_not_the_task() {
    let (lib, p) = fixture();
    let cfg = RunConfig { truncate_chain: 2, ..RunConfig::default() };
    let (w, task) = generate_scenario(&ScenarioConfig::new(Family::FlexiblePlace, 5, 0)).unwrap();
    let r = run_episode(&w, &task, Mode::Seen, p, lib, &cfg).unwrap();
    assert_eq!(r.phases.len(), 16);
    assert_eq!(r.passed_phases(), 16);
    assert!(!r.goals_met && !r.success);
}

#[test]
fn episodes_are_deterministic() {
    let (lib, p) = fixture();
    let (w, task) = generate_scenario(&ScenarioConfig::new(Family::HybridDrawer, 3, 1)).unwrap();
    let cfg = RunConfig::default();
    let a = run_episode(&w, &task, Mode::Unseen, p, lib, &cfg).unwrap();
    let b = run_episode(&w, &task, Mode::Unseen, p, lib, &cfg).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}
