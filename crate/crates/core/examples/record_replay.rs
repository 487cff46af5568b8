//! Record a scenario to an in-memory JSONL log, then replay it.

use std::path::Path;

use sharedcam::session::files::load_scenario;
use sharedcam::session::log::{read_log, replay, run_recorded};
use sharedcam::session::{Engine, Scene, SessionConfig};

fn main() -> sharedcam::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/scenarios/point.json");
    let file = load_scenario(&path)?;
    let mut engine = Engine::new(Scene::reference(), SessionConfig::default().deterministic())?.with_scenario(&file)?;
    let (summary, bytes) = run_recorded(&mut engine, 240, Vec::new())?;
    println!(
        "recorded {} ticks, {} bytes, hash {}",
        summary.ticks,
        bytes.len(),
        summary.snapshot_hash
    );

    let log = read_log(bytes.as_slice())?;
    let report = replay(&log)?;
    println!("replayed hash {} identical: {}", report.replayed_hash, report.identical);
    Ok(())
}
