//! Extreme-lifetime modelling under truncation and censoring.

pub mod bayes;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod ingest;
pub mod lexis;
pub mod likelihood;
pub mod manifest;
pub mod models;
pub mod nonparam;
pub mod numeric;
pub mod record;
pub mod rng;
pub mod simlab;

pub use error::{Error, Result};
pub use lexis::{CalendarDate, FrameKind, SamplingFrame};
pub use models::{Family, ModelSpec, Params};
pub use record::{Event, Interval, LifetimeRecord, TruncationSet};
