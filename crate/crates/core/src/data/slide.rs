use std::collections::HashSet;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const SLIDE_MAGIC: &[u8; 4] = b"GMIL";
pub const SLIDE_VERSION: u16 = 1;

/// Default patch edge length in pixels.
pub const PATCH_SIZE: i32 = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Normal = 0,
    Tumor = 1,
}

impl Label {
    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Label::Normal),
            1 => Ok(Label::Tumor),
            other => Err(Error::Malformed(format!("label {other} is not 0 or 1"))),
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn as_f64(self) -> f64 {
        self as u8 as f64
    }

    pub fn is_positive(self) -> bool {
        self == Label::Tumor
    }
}

/// Patch position in grid units (pixel coordinate divided by the patch size).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridCoord {
    pub x: i32,
    pub y: i32,
}

impl GridCoord {
    pub fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn from_pixels(px: i64, py: i64, patch_size: i32) -> Self {
        let s = patch_size as i64;
        Self { x: px.div_euclid(s) as i32, y: py.div_euclid(s) as i32 }
    }

    pub fn chebyshev(self, other: GridCoord) -> i32 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }
}

/// One bag: patch features with their grid positions.
#[derive(Clone, Debug, PartialEq)]
pub struct SlideRecord {
    pub slide_id: String,
    pub label: Label,
    pub center_id: String,
    coords: Vec<GridCoord>,
    features: Matrix,
}

impl SlideRecord {
    pub fn new(
        slide_id: impl Into<String>,
        label: Label,
        center_id: impl Into<String>,
        coords: Vec<GridCoord>,
        features: Matrix,
    ) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Empty("slide without patches".into()));
        }
        if coords.len() != features.rows() {
            return Err(Error::Malformed(format!(
                "{} coordinates for {} feature rows",
                coords.len(),
                features.rows()
            )));
        }
        let mut seen = HashSet::with_capacity(coords.len());
        if let Some(dup) = coords.iter().find(|c| !seen.insert(**c)) {
            return Err(Error::Malformed(format!("duplicate patch coordinate ({}, {})", dup.x, dup.y)));
        }
        features.ensure_finite("slide features")?;
        Ok(Self { slide_id: slide_id.into(), label, center_id: center_id.into(), coords, features })
    }

    pub fn n_patches(&self) -> usize {
        self.coords.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn coords(&self) -> &[GridCoord] {
        &self.coords
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    /// Reorders patches; `order[i]` is the old index placed at position `i`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            slide_id: self.slide_id.clone(),
            label: self.label,
            center_id: self.center_id.clone(),
            coords: order.iter().map(|&i| self.coords[i]).collect(),
            features: self.features.select_rows(order),
        }
    }

    /// Encodes the record in the GMIL layout (features narrowed to `f32`).
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let center = self.center_id.as_bytes();
        let center_len = u16::try_from(center.len())
            .map_err(|_| Error::invalid("center id longer than 65535 bytes"))?;
        let (n, f) = self.features.shape();
        let mut out = Vec::with_capacity(17 + center.len() + n * 8 + n * f * 4);
        out.extend_from_slice(SLIDE_MAGIC);
        out.extend_from_slice(&SLIDE_VERSION.to_le_bytes());
        out.push(self.label.as_u8());
        out.extend_from_slice(&center_len.to_le_bytes());
        out.extend_from_slice(center);
        out.extend_from_slice(&(n as u32).to_le_bytes());
        out.extend_from_slice(&(f as u32).to_le_bytes());
        for c in &self.coords {
            out.extend_from_slice(&c.x.to_le_bytes());
            out.extend_from_slice(&c.y.to_le_bytes());
        }
        for v in self.features.data() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(slide_id: impl Into<String>, mut r: impl Read) -> Result<Self> {
        let magic: [u8; 4] = read_array(&mut r)?;
        check_magic(SLIDE_MAGIC, &magic)?;
        let version = u16::from_le_bytes(read_array(&mut r)?);
        if version != SLIDE_VERSION {
            return Err(Error::VersionMismatch { expected: SLIDE_VERSION, found: version });
        }
        let [label] = read_array::<1>(&mut r)?;
        let label = Label::from_u8(label)?;
        let center_len = u16::from_le_bytes(read_array(&mut r)?) as usize;
        let mut center = vec![0u8; center_len];
        r.read_exact(&mut center)?;
        let center = String::from_utf8(center)
            .map_err(|_| Error::Malformed("center id is not UTF-8".into()))?;
        let n = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let f = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let mut coords = Vec::with_capacity(n);
        for _ in 0..n {
            let x = i32::from_le_bytes(read_array(&mut r)?);
            let y = i32::from_le_bytes(read_array(&mut r)?);
            coords.push(GridCoord::new(x, y));
        }
        let mut buf = vec![0u8; n * f * 4];
        r.read_exact(&mut buf)?;
        let data = buf
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        let features = Matrix::from_vec(n, f, data)?;
        Self::new(slide_id, label, center, coords, features)
    }
}

pub fn save_slide(record: &SlideRecord, path: impl AsRef<Path>) -> Result<()> {
    let bytes = record.to_bytes()?;
    let mut file = fs::File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}

/// Loads a GMIL file; the slide id is taken from the file stem.
pub fn load_slide(path: impl AsRef<Path>) -> Result<SlideRecord> {
    let path = path.as_ref();
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let bytes = fs::read(path)?;
    SlideRecord::from_bytes(id, bytes.as_slice())
}

pub(crate) fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

pub(crate) fn check_magic(expected: &[u8; 4], found: &[u8; 4]) -> Result<()> {
    if expected != found {
        return Err(Error::BadMagic {
            expected: String::from_utf8_lossy(expected).into_owned(),
            found: String::from_utf8_lossy(found).into_owned(),
        });
    }
    Ok(())
}
