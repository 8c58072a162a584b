//! Library side of the `sarmover` binary.

pub mod bench;
pub mod commands;
pub mod export;
