use hrc_core::comms::MessageTemplates;
use hrc_core::model::TaskRegistry;
use hrc_core::orchestrator::TaskController;
use hrc_core::verify::{alphabet, enumerate, explore};

fn controller() -> TaskController {
    TaskController::new(TaskRegistry::cable_shark(), MessageTemplates::default())
}

#[test]
fn all_sequences_up_to_twelve_events() {
    let c = controller();
    let report = explore(&c, &alphabet("t1", 4), 12);
    for ce in report.counterexamples.iter().take(5) {
        eprintln!("{}: {} after {:?}", ce.property, ce.detail, ce.path);
    }
    assert!(report.passed());
    assert_eq!(report.sequences_covered, (0..=12).map(|k| 17u128.pow(k)).sum::<u128>());
    // Fault-free run, one interrupt per subtask, and restarts all stay small.
    assert!(report.distinct_states > 10 && report.distinct_states < 1000, "{}", report.distinct_states);
}

#[test]
fn literal_enumeration_agrees_to_depth_four() {
    let c = controller();
    let a = alphabet("t1", 4);
    let report = explore(&c, &a, 4);
    let (n, states, violated) = enumerate(&c, &a, 4);
    assert_eq!(n, 1 + 17 + 289 + 4913 + 83521);
    assert_eq!(states, report.states);
    assert!(violated.is_empty());
}

#[test]
fn reachable_states_saturate() {
    // Past the shortest full run (start, then sense and move four times) no
    // new states appear.
    let c = controller();
    let a = alphabet("t1", 4);
    let deep = explore(&c, &a, 12).states;
    assert_eq!(explore(&c, &a, 9).states, deep);
}

mod random_walks {
    use super::controller;
    use hrc_core::orchestrator::SessionState;
    use hrc_core::verify::{alphabet, check_step};
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        // Walks far past the exhaustive bound.
        #[test]
        fn long_walks_keep_every_property(picks in prop::collection::vec(0..17usize, 1..80)) {
            let c = controller();
            let a = alphabet("t1", 4);
            let mut state = SessionState::idle();
            for i in picks {
                let (next, effects) = c.handle_event(&state, &a[i]);
                let bad = check_step(&c, &state, &a[i], &next, &effects);
                prop_assert!(bad.is_empty(), "{bad:?}");
                state = next;
            }
        }
    }
}
