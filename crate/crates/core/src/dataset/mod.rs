//! MNIST ingestion and MNIST-Live spacetime point clouds.
//!
//! Digits are read from IDX files and turned into clouds of events
//! `(t, x⃗)`: times uniform on `[−1/2, 1/2]`, positions sampled from the
//! pixel intensities. Dev clouds are rotated and boosted.

mod cloud;
mod idx;
mod split;
mod stc;
mod transform;

pub use cloud::{lorentz_boost, sample_cloud, CloudOptions, SpacetimeCloud, POINTS_PER_CLOUD};
pub use idx::{read_idx, read_idx_files, write_idx, DigitImage, IMAGE_MAGIC, LABEL_MAGIC, SIDE};
pub use split::{make_split, SplitConfig};
pub use stc::{decode_stc, encode_stc, read_stc, write_stc, STC_MAGIC, STC_VERSION};
pub use transform::{boost_matrix, PoincareTransform};
