pub mod conv;
pub mod sample;
