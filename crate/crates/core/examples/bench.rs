//! Solver latency on seeded tracking-like requests.

use sharedcam::session::bench::{run_bench, BenchOptions};
use sharedcam::session::{Scene, SessionConfig};

fn main() -> sharedcam::Result<()> {
    let opts = BenchOptions {
        iters: 300,
        ..BenchOptions::default()
    };
    let report = run_bench(&Scene::reference(), &SessionConfig::default(), &opts)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
