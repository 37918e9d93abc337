//! Game-theoretic explainers for models over continuous-time dynamic graphs.
//!
//! The crate is organised bottom-up:
//!
//! * [`ctdg`]: event streams, CSV ingestion and computational-subgraph extraction.
//! * [`masking`]: average events and masked subgraph construction.
//! * [`game`]: event-level and feature-level cooperative games over a black-box model.
//! * [`shapley`]: KernelSHAP estimation plus an exact enumeration oracle.
//! * [`owen`]: the feature explainer (two-step Owen approximation) and its exact oracles.
//! * [`models`]: the prediction trait, a leaky toy attention model, the synthetic
//!   benchmark generator and the line-delimited JSON bridge for external models.
//! * [`eval`]: sparsification, fidelity-style metrics, sparsity curves and AUC.
//!
//! Coalition evaluation fans out over rayon when the `parallel` feature is on
//! (the default); results are always reduced in a fixed order.

pub mod coalition;
pub mod ctdg;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod game;
pub mod masking;
pub mod models;
pub mod owen;
pub mod par;
pub mod rng;
pub mod shapley;

pub use coalition::Coalition;
pub use ctdg::{ComputationalSubgraph, Event, SubgraphEvent, TemporalGraph};
pub use error::{Error, Result};
pub use masking::{AverageEventStats, MaskMode};
pub use models::Model;
