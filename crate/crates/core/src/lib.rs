// SPDX-License-Identifier: Apache-2.0

//! Classical post-processing for quantum amplitude estimation.
//!
//! Grover-iterate measurements taken at a sparse set of depths are treated as
//! a sensor array. Products of the measured complex signal synthesize a long
//! virtual uniform array, ESPRIT extracts the frequency `4θ`, and a
//! likelihood-driven sign search resolves the quadrant ambiguity of each
//! measured cosine.

pub mod arrays;
pub mod error;
pub mod esprit;
pub mod estimator;
pub mod grover_sim;
pub mod harness;
pub mod presets;
pub mod signal;
pub mod signsearch;

pub use error::{Error, Result};
