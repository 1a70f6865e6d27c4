//! Command-line front end for the prescribed-mean-curvature solver: run
//! configuration, the `solve`/`sweep`/`norms` commands and the `verify`
//! property suites.

pub mod config;
pub mod run;
pub mod verify;
