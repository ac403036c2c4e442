use nifs_core::config::RunConfig;
use nifs_core::ifs::SystemDescriptor;
use nifs_core::pressure::BetaSchedule;
use std::path::PathBuf;

pub fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn load(name: &str) -> RunConfig {
    let path = configs_dir().join(name);
    let text = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()));
    RunConfig::from_str_toml(&text).expect("bundled config parses")
}

pub fn system_and_beta(name: &str) -> (SystemDescriptor, BetaSchedule) {
    let cfg = load(name);
    (cfg.system.build().unwrap(), cfg.beta.build().unwrap())
}

#[allow(dead_code)]
pub fn pass(criterion: usize, detail: &str) {
    println!("[PASS] criterion {criterion}: {detail}");
}
