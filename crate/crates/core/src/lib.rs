//! Compressed differentially private aggregation (CDPA) for federated learning.
//!
//! A client quantizes its gradient with a subtractive-dithered lattice
//! quantizer, encodes every value as an `m`-bit two's-complement fixed-point
//! word scaled by `10^z`, and flips a small set of masked bit positions with
//! probability `1 - p`. The server adds the words bit by bit across clients and
//! thresholds each accumulated position to recover the aggregate; unselected
//! layers fall back to plain averaging of the decoded values.
//!
//! Module map:
//!
//! - [`data`] and [`model`]: desk-scale datasets and models with exact gradients.
//! - [`quantizer`]: scaled-integer lattice quantization with (subtractive) dither.
//! - [`codec`]: fixed-point conversion, masked bit flipping, privacy budget, wire format.
//! - [`pipeline`]: the client-side chain for one layer, quantize then encode then flip.
//! - [`aggregator`]: bitwise secure addition, recovery, FedAvg and baseline aggregators.
//! - [`analysis`]: recovery-error formulas and Monte Carlo, communication/carbon cost,
//!   and a single-sample gradient inversion probe.
//! - [`harness`]: experiment configuration, simulated rounds, reports and the CLI.
//!
//! Runnable walkthroughs of each capability live in `crates/core/examples/`.

pub mod aggregator;
pub mod analysis;
pub mod codec;
pub mod data;
pub mod error;
pub mod harness;
pub mod model;
pub mod pipeline;
pub mod quantizer;
pub mod rng;

pub use error::{Error, Result};
