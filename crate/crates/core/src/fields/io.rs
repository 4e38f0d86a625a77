//! Flat little-endian binary layout for sampled fields.
//!
//! ```text
//! offset  size        content
//! 0       4           magic "HLGF"
//! 4       4           u32 format version (1)
//! 8       4           u32 dim
//! 12      4           u32 components
//! 16      4           u32 grid_n
//! 20      4           u32 domain kind (0 periodic, 1 box)
//! 24      4           u32 flags (bit 0 divergence-free, bit 1 mask present)
//! 28      16·dim      f64 lower, f64 upper for each axis
//! ...     8·c·n^dim   f64 values, component-major, row-major within a component
//! ...     n^dim       u8 mask (only when flag bit 1 is set)
//! ```
//!
//! A JSON sidecar next to the binary (same stem, `.json`) records how the
//! field was generated.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Domain, Grid, SampledField};
use crate::error::{Error, Result};

pub const FIELD_MAGIC: &[u8; 4] = b"HLGF";
const VERSION: u32 = 1;

/// Metadata written next to every saved field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSidecar {
    pub format: String,
    pub phase_generator: String,
    pub generator: serde_json::Value,
}

impl FieldSidecar {
    pub fn new(generator: serde_json::Value) -> Self {
        FieldSidecar {
            format: "hologlab-field/1".into(),
            phase_generator: super::PHASE_GENERATOR.into(),
            generator,
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn encode(f: &SampledField) -> Vec<u8> {
    let g = &f.grid;
    let mut out = Vec::with_capacity(28 + 16 * g.dim + 8 * f.values.len());
    out.extend_from_slice(FIELD_MAGIC);
    let (kind, bounds): (u32, Vec<(f64, f64)>) = match &g.domain {
        Domain::Periodic => (0, vec![(0.0, TAU); g.dim]),
        Domain::Box { lower, upper } => (1, lower.iter().copied().zip(upper.iter().copied()).collect()),
    };
    let flags = u32::from(f.divergence_free) | (u32::from(f.mask.is_some()) << 1);
    for v in [VERSION, g.dim as u32, f.components as u32, g.n as u32, kind, flags] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for (l, u) in bounds {
        out.extend_from_slice(&l.to_le_bytes());
        out.extend_from_slice(&u.to_le_bytes());
    }
    for v in &f.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(m) = &f.mask {
        out.extend(m.iter().map(|&b| u8::from(b)));
    }
    out
}

fn decode(bytes: &[u8]) -> Result<SampledField> {
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes
            .get(pos..pos + n)
            .ok_or_else(|| Error::Format(format!("truncated field file at byte {pos}")))?;
        pos += n;
        Ok(s)
    };
    if take(4)? != FIELD_MAGIC {
        return Err(Error::Format("bad magic, not a field file".into()));
    }
    let mut u32s = [0u32; 6];
    for v in u32s.iter_mut() {
        *v = u32::from_le_bytes(take(4)?.try_into().unwrap());
    }
    let [version, dim, comps, n, kind, flags] = u32s;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported field format version {version}")));
    }
    let (dim, comps, n) = (dim as usize, comps as usize, n as usize);
    if !(1..=2).contains(&dim) {
        return Err(Error::Format(format!("bad dimension {dim}")));
    }
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for _ in 0..dim {
        lower.push(f64::from_le_bytes(take(8)?.try_into().unwrap()));
        upper.push(f64::from_le_bytes(take(8)?.try_into().unwrap()));
    }
    let domain = match kind {
        0 => Domain::Periodic,
        1 => Domain::Box { lower, upper },
        k => return Err(Error::Format(format!("unknown domain kind {k}"))),
    };
    let grid = Grid { dim, n, domain };
    grid.validate()?;
    let count = comps * grid.len();
    let raw = take(8 * count)?;
    let values = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut f = SampledField::new(grid, comps, values)?;
    f.divergence_free = flags & 1 != 0;
    if flags & 2 != 0 {
        let m = take(f.len())?;
        f.mask = Some(m.iter().map(|&b| b != 0).collect());
    }
    Ok(f)
}

/// Writes `field` to `path` and, when given, its sidecar to `path.json`.
pub fn save_field(path: &Path, field: &SampledField, sidecar: Option<&FieldSidecar>) -> Result<()> {
    fs::write(path, encode(field)).map_err(|e| Error::io(path, e))?;
    if let Some(sc) = sidecar {
        let p = sidecar_path(path);
        let text = serde_json::to_string_pretty(sc).expect("sidecar serialises");
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

pub fn load_field(path: &Path) -> Result<SampledField> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_little_endian() {
        let g = Grid::periodic(1, 4).unwrap();
        let f = SampledField::new(g, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = encode(&f);
        assert_eq!(&b[0..4], b"HLGF");
        assert_eq!(u32::from_le_bytes(b[16..20].try_into().unwrap()), 4);
        assert_eq!(f64::from_le_bytes(b[36..44].try_into().unwrap()), TAU);
        assert_eq!(f64::from_le_bytes(b[44..52].try_into().unwrap()), 1.0);
        assert_eq!(b.len(), 28 + 16 + 32);
    }

    #[test]
    fn truncated_file_rejected() {
        let g = Grid::periodic(1, 4).unwrap();
        let f = SampledField::zeros(g, 1);
        let b = encode(&f);
        assert!(matches!(decode(&b[..b.len() - 3]), Err(Error::Format(_))));
    }

    proptest! {
        #[test]
        fn roundtrip_is_bit_exact(vals in proptest::collection::vec(-1e6f64..1e6, 32), div in any::<bool>(), boxed in any::<bool>()) {
            let g = if boxed {
                Grid::boxed(&[-1.5, -1.5], &[1.5, 1.5], 4).unwrap()
            } else {
                Grid::periodic(2, 4).unwrap()
            };
            let mut f = SampledField::new(g, 2, vals).unwrap();
            f.divergence_free = div;
            if boxed {
                f = f.with_mask((0..16).map(|i| i % 3 == 0).collect()).unwrap();
            }
            let back = decode(&encode(&f)).unwrap();
            prop_assert_eq!(back, f);
        }
    }
}
