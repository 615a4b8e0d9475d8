//! Event synthesis from video via the log-intensity contrast-threshold model.

pub mod io;
mod simulate;
mod stream;

pub use simulate::{
    integrate_events, pixel_events, round_trip_residual, synthesize_events, EventSimConfig,
};
pub use stream::{Event, EventStream};
