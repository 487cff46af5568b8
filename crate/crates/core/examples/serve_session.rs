//! Host a short live session and drive it from a websocket client.

use futures_util::{SinkExt, StreamExt};
use tokio_tungstenite::tungstenite::Message;

use sharedcam::session::engine::default_engine;
use sharedcam::session::server::{run_session, ServeOptions};

#[tokio::main]
async fn main() -> sharedcam::Result<()> {
    let handle = run_session(
        default_engine(60.0)?,
        ServeOptions {
            listen: "127.0.0.1:0".into(),
            log: None,
            max_ticks: Some(120),
        },
    )
    .await?;
    let url = format!("ws://{}/?role=helper", handle.local_addr());
    let (mut ws, _) = tokio_tungstenite::connect_async(&url).await.expect("server is up");
    ws.send(Message::text(r#"{"type": "set_target_3d", "point": [0.7, 0.1, 0.03]}"#))
        .await
        .expect("send");

    let mut snapshots = 0;
    while let Some(Ok(msg)) = ws.next().await {
        let Message::Text(text) = msg else { continue };
        let v: serde_json::Value = serde_json::from_str(&text)?;
        match v["type"].as_str() {
            Some("snapshot") => {
                snapshots += 1;
                if snapshots % 30 == 0 {
                    println!(
                        "tick {} camera {}",
                        v["snapshot"]["tick"], v["snapshot"]["camera"]["position"]
                    );
                }
            }
            _ => println!("{text}"),
        }
    }
    let summary = handle.wait().await?;
    println!(
        "session ended after {} ticks, {snapshots} snapshots received",
        summary.ticks
    );
    Ok(())
}
