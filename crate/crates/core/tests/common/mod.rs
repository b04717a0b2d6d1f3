#![allow(dead_code)]

use std::path::PathBuf;

use casreg::harness;
use casreg::sim::ScenarioConfig;

pub fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

pub fn scenario_path(name: &str) -> PathBuf {
    scenarios_dir().join(name)
}

/// A bundled config, by file name relative to `scenarios/`.
pub fn load(name: &str) -> ScenarioConfig {
    harness::load_config(&scenario_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn bundled() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(scenarios_dir())
        .expect("scenarios directory")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    v.sort();
    v
}
