use percept_core::engine::Shape;
use percept_core::metrics::oracles::{constant_network, easy_target_detector};
use percept_core::metrics::{context_experiment, ContextOptions, Verdict};
use percept_core::stimuli::{enumerate_configs, Paradigm, PatternGeometry, PatternRenderer};

fn opts() -> ContextOptions {
    ContextOptions {
        samples_per_category: 6,
        seed: 11,
        ..Default::default()
    }
}

#[test]
fn easy_detector_is_consistent_everywhere() {
    let renderer = PatternRenderer::new(PatternGeometry::with_canvas(112));
    for paradigm in Paradigm::ALL {
        let mut consistent = 0;
        for config in enumerate_configs(paradigm) {
            let net = easy_target_detector(&renderer, &config).unwrap();
            let r = context_experiment(&net, &renderer, &config, &opts()).unwrap();
            if r.verdict == Verdict::Consistent {
                consistent += 1;
            } else {
                eprintln!(
                    "{} {:?} easy {} hard {}",
                    r.config_id, r.verdict, r.easy_aggregate, r.hard_aggregate
                );
            }
        }
        assert_eq!(consistent, 90, "{paradigm}");
    }
}

#[test]
fn constant_network_ties_everywhere() {
    let renderer = PatternRenderer::new(PatternGeometry::with_canvas(64));
    let net = constant_network(Shape::new(1, 64, 64)).unwrap();
    for config in enumerate_configs(Paradigm::Segmentation) {
        let r = context_experiment(&net, &renderer, &config, &opts()).unwrap();
        assert_eq!(r.verdict, Verdict::Tie);
        assert_eq!((r.easy_aggregate, r.hard_aggregate), (0.0, 0.0));
    }
}
