//! Harness around the choreography library: configured examples, the
//! conformance suites, and the pieces of the `choreo` command line.

pub mod config;
pub mod examples;
pub mod suites;
