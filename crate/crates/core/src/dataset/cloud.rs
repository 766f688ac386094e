use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use super::idx::{DigitImage, SIDE};
use super::transform::PoincareTransform;
use crate::{Error, Result};

/// Events per MNIST-Live cloud.
pub const POINTS_PER_CLOUD: usize = 64;

/// Labeled events `(t, x⃗)` with the transform applied since generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacetimeCloud {
    pub spatial_dims: usize,
    /// Row-major `points × (1 + spatial_dims)`.
    pub points: Vec<f64>,
    pub label: usize,
    pub transform: PoincareTransform,
}

impl SpacetimeCloud {
    pub fn new(spatial_dims: usize, points: Vec<f64>, label: usize) -> Result<Self> {
        if spatial_dims != 2 && spatial_dims != 3 {
            return Err(Error::domain(format!("spatial dimension must be 2 or 3, got {spatial_dims}")));
        }
        if points.is_empty() || !points.len().is_multiple_of(spatial_dims + 1) {
            return Err(Error::shape(format!(
                "{} coordinates do not form events of length {}",
                points.len(),
                spatial_dims + 1
            )));
        }
        Ok(Self {
            spatial_dims,
            points,
            label,
            transform: PoincareTransform::identity(spatial_dims),
        })
    }

    pub fn event_len(&self) -> usize {
        self.spatial_dims + 1
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.event_len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn event(&self, i: usize) -> &[f64] {
        let n = self.event_len();
        &self.points[i * n..(i + 1) * n]
    }

    /// Invariant interval `(t_i − t_j)² − |x⃗_i − x⃗_j|²`.
    pub fn interval(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.event(i), self.event(j));
        let dt = a[0] - b[0];
        dt * dt - a[1..].iter().zip(&b[1..]).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
    }

    /// Largest absolute difference of pairwise intervals between two clouds
    /// with the same event count.
    pub fn max_interval_drift(&self, other: &Self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                worst = worst.max((self.interval(i, j) - other.interval(i, j)).abs());
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudOptions {
    pub points: usize,
    pub spatial_dims: usize,
    /// Uniform sub-pixel offset one pixel wide.
    pub jitter: bool,
}

impl Default for CloudOptions {
    fn default() -> Self {
        Self {
            points: POINTS_PER_CLOUD,
            spatial_dims: 2,
            jitter: true,
        }
    }
}

/// Samples events with `t ~ U[−1/2, 1/2]` and positions drawn from the
/// pixel intensities, mapped onto `[−1/2, 1/2]²` (`x` to the right, `y`
/// up). In three dimensions the digit lies in the `z = 0` plane, spread
/// over one pixel in `z` when jitter is on.
pub fn sample_cloud(img: &DigitImage, label: usize, opts: &CloudOptions, seed: u64) -> Result<SpacetimeCloud> {
    let weights = WeightedIndex::new(&img.pixels).map_err(|e| Error::domain(format!("image cannot be sampled: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let px = 1.0 / SIDE as f64;
    let jitter = |rng: &mut ChaCha8Rng| {
        if opts.jitter {
            rng.random_range(-0.5..0.5) * px
        } else {
            0.0
        }
    };
    let mut points = Vec::with_capacity(opts.points * (opts.spatial_dims + 1));
    for _ in 0..opts.points {
        let t = rng.random_range(-0.5..=0.5);
        let k = weights.sample(&mut rng);
        let (row, col) = (k / SIDE, k % SIDE);
        let x = (col as f64 + 0.5) * px - 0.5 + jitter(&mut rng);
        let y = 0.5 - (row as f64 + 0.5) * px + jitter(&mut rng);
        points.extend_from_slice(&[t, x, y]);
        if opts.spatial_dims == 3 {
            points.push(jitter(&mut rng));
        }
    }
    SpacetimeCloud::new(opts.spatial_dims, points, label)
}

/// Applies `tf` to every event and records it in the cloud's transform.
pub fn lorentz_boost(cloud: &SpacetimeCloud, tf: &PoincareTransform) -> Result<SpacetimeCloud> {
    if tf.spatial_dims() != cloud.spatial_dims {
        return Err(Error::shape("transform and cloud differ in spatial dimension"));
    }
    let points = (0..cloud.len()).flat_map(|i| tf.apply(cloud.event(i))).collect();
    Ok(SpacetimeCloud {
        spatial_dims: cloud.spatial_dims,
        points,
        label: cloud.label,
        transform: tf.compose(&cloud.transform)?,
    })
}
