pub mod cli;
pub mod induced_dist;
pub mod ks_stats;
pub mod mc_harness;
pub mod pit_core;
pub mod report_io;
