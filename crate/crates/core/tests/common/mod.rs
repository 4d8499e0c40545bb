#![allow(dead_code)]

use std::path::PathBuf;

use newsverify::pipeline::Pipeline;
use newsverify::providers::scripted::{load_scenarios, Scenario};
use newsverify::{PipelineConfig, ProviderEnv, ProviderMode, Providers};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn config() -> PipelineConfig {
    PipelineConfig::from_path(&fixtures().join("config.toml")).unwrap()
}

pub fn scenarios() -> Vec<Scenario> {
    load_scenarios(&fixtures().join("scenarios")).unwrap()
}

pub fn replay_pipeline(config: PipelineConfig) -> Pipeline {
    let providers = Providers::build(&ProviderMode::Replay(fixtures().join("replay")), &config, &ProviderEnv::default()).unwrap();
    Pipeline::new(config, providers).unwrap()
}

pub fn golden(id: &str) -> String {
    std::fs::read_to_string(fixtures().join("golden").join(format!("{id}.json"))).unwrap()
}
