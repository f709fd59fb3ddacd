//! Library surface of the command-line front end: scene files, the
//! built-in fixture catalog, experiment execution, and report emission.

pub mod fixtures;
pub mod report;
pub mod runner;
pub mod scene;
