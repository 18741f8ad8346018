pub mod error;
pub mod exec;
pub mod geometry;
pub mod json;
pub mod numkit;
pub mod pencil;
pub mod problem;
pub mod rado;
pub mod rng;
pub mod synth;
pub mod sysmodel;
pub mod verify;
