#![allow(dead_code)]

use std::path::{Path, PathBuf};

use diachron::pipeline::RunConfig;
use diachron::synth::PlantedConfig;

pub struct Fixture {
    pub planted: PlantedConfig,
    pub corpus: Vec<PathBuf>,
    pub probes: PathBuf,
}

/// Planted transcripts and probe lexicon under `dir`.
pub fn planted_fixture(dir: &Path) -> Fixture {
    let planted = PlantedConfig::default();
    let corpus = planted.write_transcripts(&dir.join("corpus")).unwrap();
    let probes = dir.join("probes.csv");
    planted.lexicon().write_csv(&probes).unwrap();
    Fixture {
        planted,
        corpus,
        probes,
    }
}

pub fn run_config(f: &Fixture, output: PathBuf) -> RunConfig {
    let mut c = RunConfig {
        corpus: f.corpus.clone(),
        probes: Some(f.probes.clone()),
        age_range: f.planted.age_range(),
        compass: f.planted.compass_config(0),
        modes: vec![
            diachron::compass::TrainingMode::Incremental,
            diachron::compass::TrainingMode::NonIncremental,
        ],
        output: Some(output),
        ..Default::default()
    };
    c.analysis.rsa.permutations = 500;
    c
}

pub fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn header(path: &Path) -> String {
    read(path).lines().next().unwrap_or_default().to_string()
}
