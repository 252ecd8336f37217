//! File formats and scene tooling behind the `certl` binary: portable
//! bitmap I/O, key-value reports, the filter-bank container, scene
//! synthesis with structured noise, and the unconstrained Hough baseline.

pub mod bank_io;
pub mod config;
pub mod naive;
pub mod pgm;
pub mod report;
pub mod scene;
