//! Regenerates `demo/fixtures.json` by running the demo script against the
//! rule-based test provider and recording every answer.
//!
//! cargo run -p innerpond-api --example record_demo

use std::path::PathBuf;
use std::sync::Arc;

use innerpond_api::runner::{run, RunOptions};
use innerpond_core::clock::SystemClock;
use innerpond_core::testkit::{RecordingProvider, RuleProvider};
use innerpond_core::SessionConfig;

fn main() -> anyhow::Result<()> {
    let demo = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../demo").canonicalize()?;
    let recorder = Arc::new(RecordingProvider::new(RuleProvider::default()));
    let data_dir = tempfile::tempdir()?;
    let report = run(RunOptions {
        presurvey: demo.join("p6_presurvey.json"),
        script: demo.join("script.json"),
        data_dir: data_dir.path().to_path_buf(),
        session_id: Some("demo".into()),
        config: SessionConfig::default(),
        provider: recorder.clone(),
        clock: Arc::new(SystemClock),
    })?;
    let out = demo.join("fixtures.json");
    recorder.write(&out)?;
    println!(
        "{} events, {} fixtures written to {}",
        report.events,
        recorder.fixtures().len(),
        out.display()
    );
    Ok(())
}
