//! A Poincare-equivariant point-cloud network.
//!
//! Each layer builds equivariant filters from coordinate differences,
//! `F_{ijqr} = δ_{qq'} ΔX_{ijr} + Σ_{g,s,t} C_{g,qr,q's,q't} f_{qg} ΔX_{ijs} ΔX_{ijt}`,
//! couples them to the activations through the Clebsch-Gordan tensors and
//! mixes channels with complex weights. Class logits are an affine map of
//! the point-averaged trivial-representation channels, so they are
//! invariant.

mod catalog;
mod network;
mod train;

pub use catalog::{CgBlock, RepCatalog};
pub use network::{
    argmax, backward, batch_loss, build_filters, cross_entropy, forward, forward_activations, layer_forward,
    softmax, Activation, Aggregation, BatchGradient, Filters, Geometry, LayerWeights, NetworkConfig,
    NetworkWeights, Readout,
};
pub use train::{accuracy, spread_task, train, train_from, write_metrics_csv, Checkpoint, MetricRow, TrainConfig, TrainResult};
