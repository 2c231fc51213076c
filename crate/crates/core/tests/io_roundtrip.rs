use std::fs::File;
use std::path::PathBuf;

use l1adapt::scenario::{Scenario, ScenarioError};
use l1adapt::sim::{SimSettings, Trace};

fn shipped(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.toml"))
}

#[test]
fn shipped_scenarios_match_builtins() {
    for name in Scenario::BUILTIN_NAMES {
        let loaded = Scenario::load(&shipped(name)).unwrap();
        let builtin = Scenario::builtin(name).unwrap();
        assert_eq!(loaded.file, builtin.file, "{name}");
        assert_eq!(loaded.settings, builtin.settings, "{name}");
    }
}

#[test]
fn scenario_survives_a_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("arm.toml");
    let original = Scenario::builtin("fig4").unwrap();
    std::fs::write(&path, original.to_toml().unwrap()).unwrap();
    let back = Scenario::load(&path).unwrap();
    assert_eq!(back.file, original.file);
    let (a, b) = (original.certify().unwrap(), back.certify().unwrap());
    assert_eq!(a.l1_condition_value, b.l1_condition_value);
    assert_eq!(a.gamma1, b.gamma1);
}

#[test]
fn unknown_keys_are_rejected() {
    let text = Scenario::builtin("fig3").unwrap().to_toml().unwrap();
    let bad = text.replace("[sim]", "[sim]\nstep = 1.0");
    assert!(matches!(Scenario::from_toml(&bad), Err(ScenarioError::Toml(_))));
}

#[test]
fn trace_csv_round_trip_is_exact() {
    let s = Scenario::builtin("fig3").unwrap();
    let settings = SimSettings {
        horizon: 0.5,
        ..s.settings
    };
    for with_reference in [false, true] {
        let rep = s.simulate_with(s.gamma_c(), &settings, with_reference, false).unwrap();
        let trace = &rep.output.trace;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        trace.write_csv(File::create(&path).unwrap()).unwrap();
        let back = Trace::read_csv(File::open(&path).unwrap()).unwrap();
        assert_eq!(&back, trace);
        assert_eq!(back.max_deviation(trace), 0.0);
        assert_eq!(back.header()[0], "t");
        assert_eq!(back.header().last().unwrap(), "r");
    }
}

#[test]
fn malformed_trace_header_is_rejected() {
    let text = "t,x1,x2,u\n0,0,0,0\n";
    assert!(Trace::read_csv(text.as_bytes()).is_err());
}
