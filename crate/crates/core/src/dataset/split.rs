use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cloud::{lorentz_boost, sample_cloud, CloudOptions, SpacetimeCloud, POINTS_PER_CLOUD};
use super::idx::DigitImage;
use super::transform::PoincareTransform;
use crate::{Error, Execution, Result};

const SHUFFLE_STREAM: u64 = 0;
const TRAIN_STREAM: u64 = 1;
const DEV_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    /// Digits kept; a cloud's label is the digit's position in this list.
    pub classes: Vec<u8>,
    pub train_count: usize,
    pub dev_count: usize,
    pub spatial_dims: usize,
    pub eval_velocity_max: f64,
    pub points: usize,
    pub jitter: bool,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            classes: vec![0, 9],
            train_count: 4096,
            dev_count: 124,
            spatial_dims: 2,
            eval_velocity_max: 0.3,
            points: POINTS_PER_CLOUD,
            jitter: true,
            seed: 0,
        }
    }
}

fn stream_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(u128::from(index) * 2);
    rand::RngCore::next_u64(&mut rng)
}

/// Builds untransformed training clouds and randomly rotated and boosted
/// dev clouds from disjoint source images.
///
/// Dev clouds take the first `dev_count` images of a seeded shuffle; the
/// training clouds cycle through the rest, so a source image is reused
/// (with fresh sampling) when `train_count` exceeds the remaining images.
pub fn make_split(
    images: &[DigitImage],
    config: &SplitConfig,
    execution: Execution,
) -> Result<(Vec<SpacetimeCloud>, Vec<SpacetimeCloud>)> {
    if !(0.0..1.0).contains(&config.eval_velocity_max) {
        return Err(Error::domain("eval_velocity_max must lie in [0, 1)"));
    }
    let mut pool: Vec<(&DigitImage, usize)> = images
        .iter()
        .filter_map(|im| config.classes.iter().position(|&c| c == im.label).map(|k| (im, k)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(SHUFFLE_STREAM);
    pool.shuffle(&mut rng);
    if pool.len() < config.dev_count || (config.train_count > 0 && pool.len() == config.dev_count) {
        return Err(Error::domain(format!(
            "{} images of classes {:?} cannot supply {} dev and {} train clouds",
            pool.len(),
            config.classes,
            config.dev_count,
            config.train_count
        )));
    }
    let (dev_pool, train_pool) = pool.split_at(config.dev_count);
    let opts = CloudOptions {
        points: config.points,
        spatial_dims: config.spatial_dims,
        jitter: config.jitter,
    };

    let train = execution
        .map(config.train_count, |k| {
            let (img, label) = train_pool[k % train_pool.len()];
            sample_cloud(img, label, &opts, stream_seed(config.seed, TRAIN_STREAM, k as u64))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let dev = execution
        .map(config.dev_count, |k| {
            let (img, label) = dev_pool[k];
            let seed = stream_seed(config.seed, DEV_STREAM, k as u64);
            let cloud = sample_cloud(img, label, &opts, seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1);
            let tf = PoincareTransform::random(config.spatial_dims, config.eval_velocity_max, &mut rng)?;
            lorentz_boost(&cloud, &tf)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok((train, dev))
}
