use std::sync::Mutex;

use bac_core::nn::{AdamConfig, AdamState, Gradients, NetworkParams};
use bac_core::rl::{ParameterStore, SubmitError};

/// Global parameters behind a mutex. Snapshots are full copies, so a reader
/// never observes a half-applied update.
#[derive(Debug)]
pub struct SharedStore {
    inner: Mutex<(NetworkParams<f32>, AdamState<f32>)>,
    max_updates: Option<u64>,
}

impl SharedStore {
    pub fn new(params: NetworkParams<f32>, adam: AdamConfig, max_updates: Option<u64>) -> Self {
        let state = AdamState::new(&params, adam);
        Self::from_parts(params, state, max_updates)
    }

    pub fn from_parts(params: NetworkParams<f32>, adam: AdamState<f32>, max_updates: Option<u64>) -> Self {
        SharedStore { inner: Mutex::new((params, adam)), max_updates }
    }

    pub fn version(&self) -> u64 {
        self.lock().0.version
    }

    /// Consistent copy of both the weights and the optimizer moments.
    pub fn full_snapshot(&self) -> (NetworkParams<f32>, AdamState<f32>) {
        self.lock().clone()
    }

    pub fn into_parts(self) -> (NetworkParams<f32>, AdamState<f32>) {
        self.inner.into_inner().unwrap_or_else(|e| e.into_inner())
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, (NetworkParams<f32>, AdamState<f32>)> {
        // A panicking worker cannot leave a torn update: apply validates
        // before it writes.
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl ParameterStore for SharedStore {
    fn snapshot(&self) -> NetworkParams<f32> {
        self.lock().0.clone()
    }

    fn submit(&self, grads: &Gradients<f32>) -> Result<u64, SubmitError> {
        let mut guard = self.lock();
        let (params, adam) = &mut *guard;
        if self.max_updates.is_some_and(|m| params.version >= m) {
            return Err(SubmitError::BudgetExhausted);
        }
        adam.apply(params, grads).map_err(SubmitError::Rejected)?;
        Ok(params.version)
    }
}
