#![allow(dead_code)]

use std::sync::Arc;

use urca_core::config::{PipelineConfig, Templates};
use urca_core::embedding::{CountingEmbedder, HashEmbedder};
use urca_core::generation::{Script, ScriptRule, ScriptedChat};
use urca_core::pipeline::{write_run_log, RunManifest};
use urca_core::{Pipeline, PredictionRecord, VariantSpec};

pub struct Harness {
    pub pipeline: Pipeline,
    pub chat: Arc<ScriptedChat>,
    pub embedder: Arc<CountingEmbedder<HashEmbedder>>,
}

pub fn harness(config: PipelineConfig, script: Script) -> Harness {
    let chat = Arc::new(ScriptedChat::new(script));
    let embedder = Arc::new(CountingEmbedder::new(HashEmbedder::new(config.embedder.dim, config.embedder.seed)));
    let pipeline = Pipeline::with_backends(config, Templates::default(), chat.clone(), embedder.clone());
    Harness { pipeline, chat, embedder }
}

/// Answers every final prompt with `answer` and every extraction prompt
/// with a fixed digest.
pub fn catch_all_script(answer: &str) -> Script {
    Script {
        responses: Default::default(),
        rules: vec![
            ScriptRule { all_of: vec!["ANSWER: no difference".into()], response: answer.into() },
            ScriptRule { all_of: vec![], response: "Drug A lowered pain scores in every trial.".into() },
        ],
    }
}

pub fn run_log_bytes(pipeline: &Pipeline, variant: VariantSpec, records: &[PredictionRecord]) -> Vec<u8> {
    let manifest = RunManifest::new(pipeline, std::path::Path::new("fixture.jsonl"), variant, None);
    let mut buf = Vec::new();
    write_run_log(&mut buf, &manifest, records).unwrap();
    buf
}
