use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::catalog::RepCatalog;
use super::network::{argmax, backward, forward, NetworkConfig, NetworkWeights};
use crate::clebsch::CgOptions;
use crate::dataset::SpacetimeCloud;
use crate::numerics::AdamState;
use crate::reps::AlgebraRep;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub network: NetworkConfig,
    pub epochs: usize,
    pub lr: f64,
    /// Record a metrics row every this many steps (0: only at epoch ends).
    pub log_every: usize,
    /// Evaluate dev accuracy whenever a row is recorded, not only at epoch
    /// ends.
    pub eval_every_row: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            network: NetworkConfig::default(),
            epochs: 10,
            lr: 0.01,
            log_every: 0,
            eval_every_row: false,
        }
    }
}

/// One line of the metric trace. Loss and accuracy are averaged over the
/// batches since the previous row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub step: usize,
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub dev_acc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub weights: NetworkWeights,
    pub metrics: Vec<MetricRow>,
    pub steps: usize,
}

/// Fraction of clouds whose largest logit is their label.
pub fn accuracy(
    clouds: &[SpacetimeCloud],
    weights: &NetworkWeights,
    catalog: &RepCatalog,
    config: &NetworkConfig,
) -> Result<f64> {
    if clouds.is_empty() {
        return Err(Error::domain("accuracy of an empty set"));
    }
    let mut correct = 0;
    for chunk in clouds.chunks(config.batch_size) {
        let logits = forward(chunk, weights, catalog, config)?;
        correct += chunk.iter().zip(&logits).filter(|(c, z)| argmax(z) == c.label).count();
    }
    Ok(correct as f64 / clouds.len() as f64)
}

/// Adam on mini-batches of `train`, reshuffled each epoch from the network
/// seed, starting from freshly initialized weights.
pub fn train(
    train_set: &[SpacetimeCloud],
    dev_set: &[SpacetimeCloud],
    catalog: &RepCatalog,
    config: &TrainConfig,
) -> Result<TrainResult> {
    let weights = NetworkWeights::init(&config.network, catalog)?;
    train_from(weights, train_set, dev_set, catalog, config, &mut |_| {})
}

/// Like [`train`] from the given weights, calling `observe` on every
/// metrics row as it is recorded.
pub fn train_from(
    mut weights: NetworkWeights,
    train_set: &[SpacetimeCloud],
    dev_set: &[SpacetimeCloud],
    catalog: &RepCatalog,
    config: &TrainConfig,
    observe: &mut dyn FnMut(&MetricRow),
) -> Result<TrainResult> {
    if train_set.is_empty() {
        return Err(Error::domain("empty training set"));
    }
    if !(config.lr.is_finite() && config.lr >= 0.0) {
        return Err(Error::domain("learning rate must be finite and nonnegative"));
    }
    let net = &config.network;
    let mut params = weights.to_params();
    let mut adam = AdamState::new(params.len(), config.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(net.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut metrics = Vec::new();
    let mut step = 0;
    let (mut loss_sum, mut correct, mut seen, mut batches) = (0.0, 0usize, 0usize, 0usize);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let n_batches = order.len().div_ceil(net.batch_size);
        for (b, idx) in order.chunks(net.batch_size).enumerate() {
            let clouds: Vec<SpacetimeCloud> = idx.iter().map(|&i| train_set[i].clone()).collect();
            let labels: Vec<usize> = clouds.iter().map(|c| c.label).collect();
            let g = backward(&clouds, &labels, &weights, catalog, net)?;
            if !g.loss.is_finite() {
                return Err(Error::numerical(format!("training loss became {} at step {step}", g.loss)));
            }
            adam.step(&mut params, &g.grads.to_params())?;
            weights.set_params(&params)?;
            step += 1;
            loss_sum += g.loss;
            batches += 1;
            correct += g.correct;
            seen += clouds.len();

            let epoch_end = b + 1 == n_batches;
            let periodic = config.log_every > 0 && step % config.log_every == 0;
            if epoch_end || periodic {
                let dev_acc = if !dev_set.is_empty() && (epoch_end || config.eval_every_row) {
                    Some(accuracy(dev_set, &weights, catalog, net)?)
                } else {
                    None
                };
                let row = MetricRow {
                    step,
                    epoch,
                    train_loss: loss_sum / batches as f64,
                    train_acc: correct as f64 / seen as f64,
                    dev_acc,
                };
                observe(&row);
                metrics.push(row);
                (loss_sum, correct, seen, batches) = (0.0, 0, 0, 0);
            }
        }
    }
    Ok(TrainResult { weights, metrics, steps: step })
}

/// Two-class clouds that differ only in spatial spread: class 0 points are
/// uniform in `[-1, 1]` per coordinate, class 1 in `[-spread, spread]`,
/// with labels alternating.
pub fn spread_task(count: usize, points: usize, spatial_dims: usize, spread: f64, seed: u64) -> Result<Vec<SpacetimeCloud>> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            let label = k % 2;
            let s = if label == 0 { 1.0 } else { spread };
            let pts = (0..points * (spatial_dims + 1)).map(|_| s * rng.random_range(-1.0..1.0)).collect();
            SpacetimeCloud::new(spatial_dims, pts, label)
        })
        .collect()
}

/// Writes the metric trace as CSV `step,train_loss,train_acc,dev_acc`, with
/// an empty `dev_acc` where none was measured.
pub fn write_metrics_csv(rows: &[MetricRow], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "step,train_loss,train_acc,dev_acc")?;
    for r in rows {
        let dev = r.dev_acc.map(|a| a.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{}", r.step, r.train_loss, r.train_acc, dev)?;
    }
    Ok(())
}

/// Saved weights with the configuration and representation catalog that
/// produced them. Complex weights serialize as `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub spatial_dims: usize,
    pub reps: Vec<AlgebraRep>,
    pub embedding: usize,
    pub weights: NetworkWeights,
}

impl Checkpoint {
    pub fn new(config: TrainConfig, catalog: &RepCatalog, weights: NetworkWeights) -> Self {
        Self {
            config,
            spatial_dims: catalog.spatial_dims,
            reps: catalog.reps.clone(),
            embedding: catalog.embedding,
            weights,
        }
    }

    /// Rebuilds the catalog the weights were trained against.
    pub fn catalog(&self, opts: &CgOptions) -> Result<RepCatalog> {
        let catalog = RepCatalog::new(self.reps.clone(), self.embedding, opts)?;
        if catalog.spatial_dims != self.spatial_dims {
            return Err(Error::domain("checkpoint spatial dimensions disagree with its representations"));
        }
        Ok(catalog)
    }
}
