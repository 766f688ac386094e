use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, UnitCircle, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const ROTATION_TOLERANCE: f64 = 1e-9;

/// Rotation, then boost, then translation, acting on events `(t, x⃗)` with
/// `c = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincareTransform {
    pub velocity: Vec<f64>,
    /// Row-major `d × d` orthogonal matrix.
    pub rotation: Vec<f64>,
    /// `(t, x⃗)` offset added last.
    pub translation: Vec<f64>,
}

fn check_dims(d: usize) -> Result<()> {
    if d == 2 || d == 3 {
        Ok(())
    } else {
        Err(Error::domain(format!("spatial dimension must be 2 or 3, got {d}")))
    }
}

/// The pure boost matrix for velocity `v` acting on `(t, x⃗)`:
/// `t' = γ(t − v·x)`, `x' = x + ((γ−1)(v·x)/v² − γt) v`.
pub fn boost_matrix(velocity: &[f64]) -> Result<DMatrix<f64>> {
    let d = velocity.len();
    let v2: f64 = velocity.iter().map(|v| v * v).sum();
    if !(v2 < 1.0) {
        return Err(Error::domain(format!("boost speed {} is not below 1", v2.sqrt())));
    }
    let gamma = 1.0 / (1.0 - v2).sqrt();
    let mut m = DMatrix::identity(d + 1, d + 1);
    m[(0, 0)] = gamma;
    for i in 0..d {
        m[(0, i + 1)] = -gamma * velocity[i];
        m[(i + 1, 0)] = -gamma * velocity[i];
        if v2 > 0.0 {
            for j in 0..d {
                m[(i + 1, j + 1)] += (gamma - 1.0) * velocity[i] * velocity[j] / v2;
            }
        }
    }
    Ok(m)
}

impl PoincareTransform {
    pub fn identity(spatial_dims: usize) -> Self {
        let mut rotation = vec![0.0; spatial_dims * spatial_dims];
        for i in 0..spatial_dims {
            rotation[i * spatial_dims + i] = 1.0;
        }
        Self {
            velocity: vec![0.0; spatial_dims],
            rotation,
            translation: vec![0.0; spatial_dims + 1],
        }
    }

    pub fn new(velocity: Vec<f64>, rotation: Vec<f64>, translation: Vec<f64>) -> Result<Self> {
        let d = velocity.len();
        check_dims(d)?;
        if rotation.len() != d * d || translation.len() != d + 1 {
            return Err(Error::shape("rotation must be d×d and translation d+1 long"));
        }
        let tf = Self {
            velocity,
            rotation,
            translation,
        };
        boost_matrix(&tf.velocity)?;
        let r = tf.rotation_matrix();
        if (r.transpose() * &r - DMatrix::identity(d, d)).amax() > ROTATION_TOLERANCE || r.determinant() < 0.0 {
            return Err(Error::domain("rotation is not a proper orthogonal matrix"));
        }
        Ok(tf)
    }

    pub fn boost(velocity: Vec<f64>) -> Result<Self> {
        let d = velocity.len();
        let id = Self::identity(d);
        Self::new(velocity, id.rotation, id.translation)
    }

    pub fn spatial_dims(&self) -> usize {
        self.velocity.len()
    }

    pub fn speed(&self) -> f64 {
        self.velocity.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn rotation_matrix(&self) -> DMatrix<f64> {
        let d = self.spatial_dims();
        DMatrix::from_row_slice(d, d, &self.rotation)
    }

    /// The homogeneous Lorentz part `B(v)·diag(1, R)`.
    pub fn lorentz_matrix(&self) -> DMatrix<f64> {
        let d = self.spatial_dims();
        let mut r = DMatrix::identity(d + 1, d + 1);
        r.view_mut((1, 1), (d, d)).copy_from(&self.rotation_matrix());
        boost_matrix(&self.velocity).expect("velocity checked on construction") * r
    }

    /// Recovers the rotate-then-boost parameters of a proper orthochronous
    /// Lorentz matrix.
    pub fn from_matrix(lorentz: &DMatrix<f64>, translation: Vec<f64>) -> Result<Self> {
        let n = lorentz.nrows();
        let d = n - 1;
        let g = lorentz[(0, 0)];
        let velocity: Vec<f64> = (1..n).map(|i| -lorentz[(i, 0)] / g).collect();
        let rest = boost_matrix(&velocity.iter().map(|v| -v).collect::<Vec<_>>())? * lorentz;
        let rotation = (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .map(|(i, j)| rest[(i + 1, j + 1)])
            .collect();
        Self::new(velocity, rotation, translation)
    }

    pub fn apply(&self, event: &[f64]) -> Vec<f64> {
        let m = self.lorentz_matrix();
        let out = m * DVector::from_column_slice(event);
        out.iter().zip(&self.translation).map(|(x, a)| x + a).collect()
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        let m1 = self.lorentz_matrix();
        let m = &m1 * other.lorentz_matrix();
        let shift = &m1 * DVector::from_column_slice(&other.translation);
        let translation = shift.iter().zip(&self.translation).map(|(a, b)| a + b).collect();
        Self::from_matrix(&m, translation)
    }

    pub fn inverse(&self) -> Result<Self> {
        let r = self.rotation_matrix();
        let rt = r.transpose();
        let v = DVector::from_column_slice(&self.velocity);
        let velocity: Vec<f64> = (-(&rt * v)).iter().copied().collect();
        let rotation: Vec<f64> = (0..rt.nrows())
            .flat_map(|i| (0..rt.ncols()).map(move |j| (i, j)))
            .map(|(i, j)| rt[(i, j)])
            .collect();
        let inv = Self::new(velocity, rotation, vec![0.0; self.translation.len()])?;
        let shift = inv.lorentz_matrix() * DVector::from_column_slice(&self.translation);
        Ok(Self {
            translation: shift.iter().map(|x| -x).collect(),
            ..inv
        })
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity(self.spatial_dims())
    }

    /// Uniform random rotation and a velocity with uniform speed in
    /// `[0, max_speed]` and uniform direction; no translation.
    pub fn random<R: Rng + ?Sized>(spatial_dims: usize, max_speed: f64, rng: &mut R) -> Result<Self> {
        check_dims(spatial_dims)?;
        if !(0.0..1.0).contains(&max_speed) {
            return Err(Error::domain(format!("maximum speed {max_speed} outside [0, 1)")));
        }
        let rotation = random_rotation(spatial_dims, rng);
        let speed = rng.random_range(0.0..=max_speed);
        let direction: Vec<f64> = if spatial_dims == 2 {
            let [x, y]: [f64; 2] = UnitCircle.sample(rng);
            vec![x, y]
        } else {
            let p: [f64; 3] = UnitSphere.sample(rng);
            p.to_vec()
        };
        Self::new(
            direction.iter().map(|u| u * speed).collect(),
            rotation,
            vec![0.0; spatial_dims + 1],
        )
    }
}

/// Haar-uniform rotation (angle for 2D, unit quaternion for 3D).
fn random_rotation<R: Rng + ?Sized>(spatial_dims: usize, rng: &mut R) -> Vec<f64> {
    if spatial_dims == 2 {
        let a = rng.random_range(0.0..2.0 * PI);
        let (s, c) = a.sin_cos();
        return vec![c, -s, s, c];
    }
    let q: [f64; 4] = loop {
        let g: [f64; 4] = std::array::from_fn(|_| rand_distr::StandardNormal.sample(rng));
        let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            break g.map(|x| x / n);
        }
    };
    let [w, x, y, z] = q;
    vec![
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn boost_along_x() {
        let tf = PoincareTransform::boost(vec![0.6, 0.0]).unwrap();
        let e = tf.apply(&[1.0, 0.0, 0.0]);
        assert!((e[0] - 1.25).abs() < 1e-15);
        assert!((e[1] + 0.75).abs() < 1e-15);
        assert_eq!(e[2], 0.0);
    }

    #[test]
    fn zero_velocity_is_identity() {
        assert_eq!(boost_matrix(&[0.0, 0.0, 0.0]).unwrap(), DMatrix::identity(4, 4));
    }

    #[test]
    fn superluminal_rejected() {
        assert!(matches!(PoincareTransform::boost(vec![0.8, 0.6]), Err(Error::Domain(_))));
        assert!(PoincareTransform::random(2, 1.0, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn random_transforms_preserve_metric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in [2, 3] {
            let eta = DMatrix::from_diagonal(&DVector::from_fn(d + 1, |i, _| if i == 0 { 1.0 } else { -1.0 }));
            for _ in 0..10 {
                let tf = PoincareTransform::random(d, 0.9, &mut rng).unwrap();
                let m = tf.lorentz_matrix();
                assert!((m.transpose() * &eta * &m - &eta).amax() < 1e-12);
                assert!(tf.speed() <= 0.9);
            }
        }
    }

    #[test]
    fn inverse_and_compose_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for d in [2, 3] {
            let mut tf = PoincareTransform::random(d, 0.7, &mut rng).unwrap();
            tf.translation = (0..=d).map(|i| 0.1 * i as f64 - 0.2).collect();
            let inv = tf.inverse().unwrap();
            let e: Vec<f64> = (0..=d).map(|i| 0.3 - 0.2 * i as f64).collect();
            let back = inv.apply(&tf.apply(&e));
            assert!(back.iter().zip(&e).all(|(a, b)| (a - b).abs() < 1e-12));
            let id = inv.compose(&tf).unwrap();
            assert!(id.speed() < 1e-12);
            assert!(id.translation.iter().all(|a| a.abs() < 1e-12));
            let other = PoincareTransform::random(d, 0.5, &mut rng).unwrap();
            let both = tf.compose(&other).unwrap();
            let seq = tf.apply(&other.apply(&e));
            assert!(both.apply(&e).iter().zip(&seq).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }

    #[test]
    fn improper_rotation_rejected() {
        assert!(PoincareTransform::new(vec![0.0, 0.0], vec![1.0, 0.0, 0.0, -1.0], vec![0.0; 3]).is_err());
    }
}
