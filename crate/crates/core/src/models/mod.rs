//! Black-box prediction interface and the built-in models.

pub mod bridge;
pub mod synth;
pub mod toy;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crate::ctdg::ComputationalSubgraph;
use crate::Result;

pub use bridge::ExternalModel;
pub use toy::{ToyModel, ToyModelConfig};

/// A trained temporal graph model seen as a function from a (possibly masked)
/// computational subgraph to a real-valued logit.
///
/// Implementations must be deterministic and safe to call concurrently.
pub trait Model: Send + Sync {
    fn predict(&self, sg: &ComputationalSubgraph) -> Result<f64>;
}

impl<M: Model + ?Sized> Model for &M {
    fn predict(&self, sg: &ComputationalSubgraph) -> Result<f64> {
        (**self).predict(sg)
    }
}

impl<M: Model + ?Sized> Model for Box<M> {
    fn predict(&self, sg: &ComputationalSubgraph) -> Result<f64> {
        (**self).predict(sg)
    }
}

impl<M: Model + ?Sized> Model for Arc<M> {
    fn predict(&self, sg: &ComputationalSubgraph) -> Result<f64> {
        (**self).predict(sg)
    }
}

/// Wraps a closure as a model.
pub struct FnModel<F>(pub F);

impl<F> Model for FnModel<F>
where
    F: Fn(&ComputationalSubgraph) -> f64 + Send + Sync,
{
    fn predict(&self, sg: &ComputationalSubgraph) -> Result<f64> {
        Ok((self.0)(sg))
    }
}

/// Returns the same logit for every input.
#[derive(Debug, Clone, Copy)]
pub struct ConstantModel(pub f64);

impl Model for ConstantModel {
    fn predict(&self, _: &ComputationalSubgraph) -> Result<f64> {
        Ok(self.0)
    }
}

/// Counts calls to the wrapped model.
pub struct CountingModel<M> {
    inner: M,
    calls: AtomicUsize,
}

impl<M> CountingModel<M> {
    pub fn new(inner: M) -> Self {
        CountingModel { inner, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::SeqCst);
    }
}

impl<M: Model> Model for CountingModel<M> {
    fn predict(&self, sg: &ComputationalSubgraph) -> Result<f64> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.predict(sg)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
