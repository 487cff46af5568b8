//! Session host: files, engine loop, wire protocol, logging and the
//! websocket server.

pub mod bench;
pub mod click;
pub mod engine;
pub mod files;
pub mod log;
pub mod protocol;
pub mod server;

pub use engine::{Engine, StateSnapshot};
pub use files::{Scene, SessionConfig};
