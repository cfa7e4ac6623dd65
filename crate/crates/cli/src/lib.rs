//! Command-line front end for the step-timing simulator: scenario parsing,
//! trace and summary output, and push sweeps.

pub mod commands;
pub mod report;
pub mod scenario;
