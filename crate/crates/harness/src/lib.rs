pub mod channels;
pub mod config;
pub mod emit;
pub mod experiment;
