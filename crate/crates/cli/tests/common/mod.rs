#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use distractor_align::dataset::SyntheticProfile;
use distractor_align_cli::{cmd_analyze, cmd_report, cmd_score, cmd_synth, RunConfig};

/// Writes a synthetic fixture into `dir` and loads its config.
pub fn synth_config(dir: &Path, profile: SyntheticProfile, n: usize, seed: u64) -> RunConfig {
    cmd_synth(seed, profile, n, dir).expect("synth");
    RunConfig::load(&dir.join("config.toml")).expect("config")
}

/// score, analyze and report with the config as given.
pub fn run_all(cfg: &RunConfig) {
    cmd_score(cfg, true).expect("score");
    cmd_analyze(cfg).expect("analyze");
    cmd_report(cfg).expect("report");
}

/// Every file in `dir`, by file name.
pub fn read_dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).expect("output dir") {
        let entry = entry.unwrap();
        out.insert(entry.file_name().to_string_lossy().into_owned(), fs::read(entry.path()).unwrap());
    }
    out
}
