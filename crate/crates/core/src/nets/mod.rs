//! Dense networks with analytic gradients, Adam, target blending and checkpoints.

mod adam;
pub mod checkpoint;
mod mlp;

use thiserror::Error;

pub use adam::Adam;
pub use checkpoint::{config_hash, Checkpoint, RngState};
pub use mlp::{Activation, Dense, Gradients, Mlp, Tape};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("network shapes differ")]
    ShapeMismatch,
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint version {found} not supported (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("observation layout mismatch: expected {expected}, checkpoint has {found}")]
    LayoutMismatch { expected: String, found: String },
    #[error("missing tensor {0}")]
    MissingTensor(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `target <- (1 - zeta) * target + zeta * online`.
pub fn soft_update(target: &mut Mlp, online: &Mlp, zeta: f64) -> Result<(), NetError> {
    if !target.same_shape(online) {
        return Err(NetError::ShapeMismatch);
    }
    for (t, o) in target.tensors_mut().into_iter().zip(online.tensors()) {
        for (a, b) in t.iter_mut().zip(o) {
            *a = (1.0 - zeta) * *a + zeta * b;
        }
    }
    Ok(())
}
