//! Continuous sign language segmentation from skeleton sequences.
//!
//! The pipeline labels every frame of a pose sequence as sign-boundary,
//! sign-interior, transition, or padding, then derives sign segments from the
//! label stream. A spatio-temporal graph network over body joints does the
//! frame labeling; a lightweight graph network over the dominant hand
//! recognizes handshapes; a gated cross-attention step injects handshape
//! evidence into the segmentation features. Training runs in three stages
//! (segmentation backbone, handshape recognizer, fusion), and evaluation
//! scores boundary placement and segment overlap at multiple tolerances.
//!
//! Everything is f64 and single-threaded by design: fixed reduction orders
//! make runs with the same seed byte-identical, which the tests lean on.

pub mod data;
pub mod error;
pub mod graphs;
pub mod metrics;
pub mod models;
pub mod posefile;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
