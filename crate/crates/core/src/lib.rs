pub mod cohort;
pub mod distributions;
pub mod evaluation;
pub mod graph;
pub mod learning;
pub mod synthgen;
pub mod cli;
