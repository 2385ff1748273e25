//! Protocol state machines for a sharded BFT ordering service: routers,
//! batchers, consenters and assemblers, plus the shared wire model.
//!
//! Every node is a plain state machine driven by `handle`-style calls that
//! return the messages it wants sent. Nothing here touches a clock or a
//! socket; the simulator (or a real transport) owns both.

pub mod assembler;
pub mod batcher;
pub mod codec;
pub mod config;
pub mod consenter;
pub mod crypto;
pub mod hash;
pub mod mempool;
pub mod messages;
pub mod net;
pub mod router;
pub mod storage;
pub mod types;

pub use config::{Config, ConfigError};
