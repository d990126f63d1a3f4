use sage_core::bench::{generate_scenario, Family, ScenarioConfig};
use sage_core::parser::{parse, GeomThresholds};
use sage_core::planner::{plan, validate_chain};
use sage_core::sim::episode::verify_graph;
use sage_core::sim::script::run_scripted;
use sage_core::sim::{ControllerParams, SimParams};

#[test]
fn scripted_demos_verify_in_every_family_and_order() {
    let th = GeomThresholds::default();
    for f in Family::ALL {
        for order in 0..f.order_count() {
            for seed in 0..3 {
                let (w, task) = generate_scenario(&ScenarioConfig::new(f, seed, order)).unwrap();
                let g0 = parse(&w, &th).unwrap();
                let chain = plan(&g0, &task).unwrap();
                let r = validate_chain(&chain);
                assert!(r.is_valid(), "{f} {order} {seed}: {:?}", r.issues);
                let demo = run_scripted(&w, &chain, &SimParams::default(), &ControllerParams::default())
                    .unwrap_or_else(|e| panic!("{f} order {order} seed {seed}: {e}"));
                for (k, kf) in demo.keyframes.iter().enumerate() {
                    let got = parse(kf, &th).unwrap_or_else(|e| panic!("{f} {order} {seed} frame {k}: {e}"));
                    if let Err(m) = verify_graph(&got, &chain.graphs[k]) {
                        panic!("{f} order {order} seed {seed} frame {k} after {:?}: {m:?}", chain.steps.get(k.wrapping_sub(1)).map(|s| s.action()));
                    }
                }
            }
        }
    }
}

#[test]
fn chain_lengths_per_family() {
    let th = GeomThresholds::default();
    let want = [(Family::SequentialStack, 18), (Family::FlexiblePlace, 18), (Family::HybridGrill, 36), (Family::HybridDrawer, 20)];
    for (f, n) in want {
        let (w, task) = generate_scenario(&ScenarioConfig::new(f, 0, 0)).unwrap();
        let chain = plan(&parse(&w, &th).unwrap(), &task).unwrap();
        assert_eq!(chain.len(), n, "{f}");
    }
}
