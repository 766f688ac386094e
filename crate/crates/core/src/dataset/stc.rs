//! `.stc` cloud files, all little-endian:
//!
//! ```text
//! magic "STCF" | version u32 | count u64 | spatial_dims u32 | points u32
//! per cloud: label u32 | points × (1 + d) f64 events
//!            | velocity d f64 | rotation d×d f64 | translation (1 + d) f64
//! ```

use std::io::Write;
use std::path::Path;

use super::cloud::SpacetimeCloud;
use super::transform::PoincareTransform;
use crate::{Error, Result};

pub const STC_MAGIC: &[u8; 4] = b"STCF";
pub const STC_VERSION: u32 = 1;

/// Serializes clouds that share spatial dimension and event count.
pub fn encode_stc(clouds: &[SpacetimeCloud]) -> Result<Vec<u8>> {
    let (d, n) = clouds.first().map_or((2, 0), |c| (c.spatial_dims, c.len()));
    if clouds.iter().any(|c| c.spatial_dims != d || c.len() != n) {
        return Err(Error::shape("clouds in one file must share dimension and event count"));
    }
    let mut out = Vec::new();
    out.extend_from_slice(STC_MAGIC);
    out.extend_from_slice(&STC_VERSION.to_le_bytes());
    out.extend_from_slice(&(clouds.len() as u64).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    for c in clouds {
        out.extend_from_slice(&(c.label as u32).to_le_bytes());
        let tf = &c.transform;
        for x in c.points.iter().chain(&tf.velocity).chain(&tf.rotation).chain(&tf.translation) {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos + n;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::format(self.bytes.len(), format!("file truncated; needed {n} bytes at {}", self.pos)))?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(n * 8)?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn decode_stc(bytes: &[u8]) -> Result<Vec<SpacetimeCloud>> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != STC_MAGIC {
        return Err(Error::format(0, format!("expected magic {:?}, found {:?}", STC_MAGIC, magic)));
    }
    let version = r.u32()?;
    if version != STC_VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let count = r.u64()? as usize;
    let d = r.u32()? as usize;
    let n = r.u32()? as usize;
    if d != 2 && d != 3 {
        return Err(Error::format(16, format!("spatial dimension {d} is not 2 or 3")));
    }
    let mut clouds = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let start = r.pos;
        let label = r.u32()? as usize;
        let points = r.f64s(n * (d + 1))?;
        let velocity = r.f64s(d)?;
        let rotation = r.f64s(d * d)?;
        let translation = r.f64s(d + 1)?;
        let transform = PoincareTransform::new(velocity, rotation, translation)
            .map_err(|e| Error::format(start, format!("invalid transform: {e}")))?;
        let mut cloud = SpacetimeCloud::new(d, points, label).map_err(|e| Error::format(start, e.to_string()))?;
        cloud.transform = transform;
        clouds.push(cloud);
    }
    if r.pos != bytes.len() {
        return Err(Error::format(r.pos, "trailing bytes after the last cloud"));
    }
    Ok(clouds)
}

pub fn write_stc(path: impl AsRef<Path>, clouds: &[SpacetimeCloud]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_stc(clouds)?)?;
    Ok(())
}

pub fn read_stc(path: impl AsRef<Path>) -> Result<Vec<SpacetimeCloud>> {
    decode_stc(&std::fs::read(path)?)
}
