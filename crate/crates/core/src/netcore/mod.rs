//! Network representation, forward pass, mass and checkpoint files.

pub mod checkpoint;
mod forward;
mod network;
mod spec;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub(crate) use forward::{conv_for_each, conv_geom, layer_forward};
pub use forward::{apply_output_activation, forward, forward_batch, forward_logits, sigmoid, softmax};
pub use network::{build_network, network_mass, LayerParams, Network, BN_EPS, INIT_SCHEME};
pub use spec::{layer_param_count, ArchitectureSpec, ImageShape, LayerSpec, OutputActivation, Shape};
