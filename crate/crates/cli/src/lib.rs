//! Command-line front end for the echo, recurrence, Husimi and classical experiments.

pub mod config;
pub mod run;
