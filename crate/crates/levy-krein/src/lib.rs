//! Fluctuation theory for killed symmetric Lévy processes.
//!
//! The crate revolves around one object: the renewal-type function
//! `H(x)`, the probability that the post-minimum part of a killed path
//! stays below `x`. Everything else is built out of it:
//!
//! * [`path_sim`] simulates killed paths and extracts extrema summaries,
//! * [`extrema_chain`] decomposes a path into its alternating ladder chain
//!   and estimates `H` from path ensembles,
//! * [`phi_system`] solves the coupled restricted-Laplace-transform system
//!   driven by `dH`,
//! * [`stable_forms`] holds the closed forms available for symmetric
//!   stable processes (two-sided exit, exit times, Beta ratio laws),
//! * [`krein_string`] integrates second-order strings `A'' = lambda^2 rho A`
//!   and works with their spectral measures,
//! * [`string_bridge`] maps `H` to a string, evaluates the log-Laplace
//!   transform of the final displacement, the entropy identity, and the
//!   commutation transform for unbounded strings.
//!
//! The thin binary `levy-krein` exposes the same pipelines as subcommands;
//! `examples/` holds one runnable walk-through per capability.

pub mod error;
pub mod table;
pub mod specfun;
pub mod models;
pub mod stats;
pub mod path_sim;
pub mod extrema_chain;
pub mod phi_system;
pub mod stable_forms;
pub mod krein_string;
pub mod string_bridge;
pub mod cli;

pub use error::{Error, Result};
pub use models::{LevyModel, PositivityParams};
pub use table::MonotoneTable;
