//! A small dense feed-forward network with batch normalisation, exact
//! reverse-mode gradients and Adam.

mod adam;
mod checkpoint;
mod network;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use network::{
    Activation, BatchNorm, ForwardCache, Gradients, InputScaler, Layer, LayerSpec, MlpNetwork, Mode,
};
