pub mod analytics;
pub mod classifier;
pub mod dataset;
pub mod error;
pub mod formats;
pub mod labels;
pub mod metrics;
pub mod pipeline;
pub mod signal;
pub mod sim;

pub use error::{Error, Result};
pub use labels::{ActivityClass, FrameTimeline, NUM_CLASSES};
