//! Transaction pools for primary and secondary batchers.

mod bundling;
mod concurrent;
mod tracking;

pub use bundling::{Backpressure, BundlingPool, Inserted, Limits};
pub use concurrent::ConcurrentBundlingPool;
pub use tracking::{Overdue, SeenSet, TrackInsert, TrackingPool, TrackingTimers};
