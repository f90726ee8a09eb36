pub mod cadlag;
pub mod cli;
pub mod error;
pub mod events;
pub mod fdd;
pub mod grid;
pub mod jumps;
pub mod regularity;
pub mod report;
pub mod sampling;
pub mod time;

pub use error::{Error, Result};
pub use fdd::{FddFamily, ProbInterval, RateMatrix, Truncation};
pub use grid::{State, StateSpace, StateTuple, TimeDomain, TimeGrid, TimeSet};
pub use report::{CheckReport, Verdict};
pub use time::Time;
