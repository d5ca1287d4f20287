//! Randomized command sequences over the fixture bench, with every
//! intermediate state audited.

use std::collections::BTreeMap;

use joinery_core::session::replay;
use joinery_core::testkit::{fixture_config, Auditor, Driver};

const SEQUENCES: u64 = 10_000;
const COMMANDS: usize = 40;

#[test]
fn invariants_hold_over_ten_thousand_sequences() {
    let config = fixture_config();
    let mut seen: BTreeMap<&'static str, usize> = BTreeMap::new();
    for seed in 0..SEQUENCES {
        let mut driver = Driver::new(seed, 4);
        let mut auditor = Auditor::new(driver.session.catalog().clone(), &config);
        for _ in 0..COMMANDS {
            let (cmd, events) = driver.step();
            auditor
                .observe_all(&events)
                .unwrap_or_else(|e| panic!("seed {seed}, command {cmd:?}: {e}"));
            if driver.pipeline_due() {
                for batch in driver.pump() {
                    auditor
                        .observe_all(&batch)
                        .unwrap_or_else(|e| panic!("seed {seed}, pipeline: {e}"));
                }
            }
        }
        assert_eq!(auditor.world().digest(), driver.session.digest(), "seed {seed}");
        let replayed = replay(driver.session.catalog(), &config, &driver.log).unwrap();
        assert_eq!(replayed.digest(), driver.session.digest(), "seed {seed}");
        for event in &driver.log {
            *seen.entry(event.kind.type_name()).or_default() += 1;
        }
    }
    // The generator must actually reach the interesting transitions.
    for kind in [
        "SpliceSucceeded",
        "SpliceRejected",
        "VerificationSucceeded",
        "VerificationFailed",
        "ModelReady",
        "ModelActivated",
        "Checkpoint",
        "UserLeft",
    ] {
        assert!(seen.get(kind).copied().unwrap_or(0) > 0, "no {kind} in {seen:?}");
    }
    eprintln!("event mix: {seen:?}");
}

#[test]
fn long_runs_replay_identically() {
    let config = fixture_config();
    for seed in 0..20 {
        let mut driver = Driver::new(1_000_000 + seed, 4);
        driver.run(600);
        let replayed = replay(driver.session.catalog(), &config, &driver.log).unwrap();
        assert_eq!(replayed, *driver.session.world());
        assert_eq!(replayed.digest(), driver.session.digest());
    }
}

#[test]
fn same_seed_same_log() {
    let mut a = Driver::new(42, 4);
    let mut b = Driver::new(42, 4);
    a.run(300);
    b.run(300);
    assert_eq!(a.log, b.log);
}
