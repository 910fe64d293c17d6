//! Volumetric data model: scalar volumes, label masks and voxel geometry.
//!
//! Voxel data is stored with the first axis varying fastest (the NIfTI
//! convention), so the linear index of `(i, j, k)` is `i + nx * (j + ny * k)`.
//! Multi-channel volumes store each channel as a contiguous block.

mod components;
pub mod nifti;
mod preprocess;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use components::{label_components, largest_component, ComponentLabels, Connectivity};
pub use nifti::{read_header, read_label_mask, read_nifti, write_label_mask, write_nifti, NiftiHeader};
pub use preprocess::{clip_normalize, percentile, point_to_relative, remap_index};

/// Voxels per axis of a 3D grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Dims(pub [usize; 3]);

impl Dims {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Dims([nx, ny, nz])
    }

    pub fn len(&self) -> usize {
        self.0.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, c: VoxelCoord) -> usize {
        c.i + self.0[0] * (c.j + self.0[1] * c.k)
    }

    #[inline]
    pub fn coord(&self, index: usize) -> VoxelCoord {
        let [nx, ny, _] = self.0;
        VoxelCoord {
            i: index % nx,
            j: (index / nx) % ny,
            k: index / (nx * ny),
        }
    }

    pub fn contains(&self, c: VoxelCoord) -> bool {
        c.i < self.0[0] && c.j < self.0[1] && c.k < self.0[2]
    }

    /// Neighbor at signed offset, or `None` when it falls off the grid.
    #[inline]
    pub fn offset(&self, c: VoxelCoord, d: [isize; 3]) -> Option<VoxelCoord> {
        let step = |v: usize, dv: isize, n: usize| {
            let r = v as isize + dv;
            (r >= 0 && (r as usize) < n).then_some(r as usize)
        };
        Some(VoxelCoord {
            i: step(c.i, d[0], self.0[0])?,
            j: step(c.j, d[1], self.0[1])?,
            k: step(c.k, d[2], self.0[2])?,
        })
    }
}

impl From<[usize; 3]> for Dims {
    fn from(v: [usize; 3]) -> Self {
        Dims(v)
    }
}

/// Voxel index triple. Serialized as `[i, j, k]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 3]", into = "[usize; 3]")]
pub struct VoxelCoord {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

impl VoxelCoord {
    pub const fn new(i: usize, j: usize, k: usize) -> Self {
        VoxelCoord { i, j, k }
    }

    pub fn to_array(self) -> [usize; 3] {
        [self.i, self.j, self.k]
    }
}

impl From<[usize; 3]> for VoxelCoord {
    fn from([i, j, k]: [usize; 3]) -> Self {
        VoxelCoord { i, j, k }
    }
}

impl From<VoxelCoord> for [usize; 3] {
    fn from(c: VoxelCoord) -> Self {
        c.to_array()
    }
}

/// Element storage of a [`Volume`].
#[derive(Debug, Clone, PartialEq)]
pub enum VoxelData {
    U8(Vec<u8>),
    I16(Vec<i16>),
    I32(Vec<i32>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

/// Element kind of a [`Volume`], matching the supported NIfTI datatypes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementKind {
    U8,
    I16,
    I32,
    F32,
    F64,
}

impl VoxelData {
    pub fn len(&self) -> usize {
        match self {
            VoxelData::U8(v) => v.len(),
            VoxelData::I16(v) => v.len(),
            VoxelData::I32(v) => v.len(),
            VoxelData::F32(v) => v.len(),
            VoxelData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> ElementKind {
        match self {
            VoxelData::U8(_) => ElementKind::U8,
            VoxelData::I16(_) => ElementKind::I16,
            VoxelData::I32(_) => ElementKind::I32,
            VoxelData::F32(_) => ElementKind::F32,
            VoxelData::F64(_) => ElementKind::F64,
        }
    }

    /// All values widened to `f64` (lossless for every supported kind).
    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            VoxelData::U8(v) => v.iter().map(|&x| x as f64).collect(),
            VoxelData::I16(v) => v.iter().map(|&x| x as f64).collect(),
            VoxelData::I32(v) => v.iter().map(|&x| x as f64).collect(),
            VoxelData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            VoxelData::F64(v) => v.clone(),
        }
    }
}

/// Row-major 3x4 voxel-to-world affine in millimetres.
pub type Affine = [[f64; 4]; 3];

pub fn diagonal_affine(spacing: [f64; 3]) -> Affine {
    [
        [spacing[0], 0.0, 0.0, 0.0],
        [0.0, spacing[1], 0.0, 0.0],
        [0.0, 0.0, spacing[2], 0.0],
    ]
}

fn determinant3(a: &Affine) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

fn check_geometry(dims: Dims, spacing: [f64; 3], affine: &Affine) -> Result<()> {
    if dims.0.contains(&0) {
        return Err(Error::InvalidVolume(format!("shape {:?} has a zero axis", dims.0)));
    }
    if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::InvalidVolume(format!("spacing {spacing:?} must be positive and finite")));
    }
    let det = determinant3(affine);
    if !det.is_finite() || det == 0.0 {
        return Err(Error::InvalidVolume("affine has a singular 3x3 block".into()));
    }
    Ok(())
}

/// A 3D scalar image with physical geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: Dims,
    spacing: [f64; 3],
    affine: Affine,
    channels: usize,
    data: VoxelData,
}

impl Volume {
    pub fn new(dims: Dims, spacing: [f64; 3], affine: Affine, channels: usize, data: VoxelData) -> Result<Self> {
        check_geometry(dims, spacing, &affine)?;
        if channels == 0 {
            return Err(Error::InvalidVolume("channel count must be >= 1".into()));
        }
        if dims.len() * channels != data.len() {
            return Err(Error::InvalidVolume(format!(
                "{} voxels x {} channels != data length {}",
                dims.len(),
                channels,
                data.len()
            )));
        }
        Ok(Volume {
            dims,
            spacing,
            affine,
            channels,
            data,
        })
    }

    /// Single-channel volume with an axis-aligned affine.
    pub fn from_data(dims: Dims, spacing: [f64; 3], data: VoxelData) -> Result<Self> {
        Self::new(dims, spacing, diagonal_affine(spacing), 1, data)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn shape(&self) -> [usize; 3] {
        self.dims.0
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn affine(&self) -> &Affine {
        &self.affine
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &VoxelData {
        &self.data
    }

    pub fn into_data(self) -> VoxelData {
        self.data
    }

    /// Interpret as a label map. Requires a single channel of non-negative
    /// integral values.
    pub fn to_label_mask(&self) -> Result<LabelMask> {
        if self.channels != 1 {
            return Err(Error::InvalidVolume(format!(
                "label maps must have one channel, found {}",
                self.channels
            )));
        }
        fn bad(v: f64) -> Error {
            Error::InvalidVolume(format!("label value {v} is not a non-negative integer"))
        }
        let labels: Result<Vec<u32>> = match &self.data {
            VoxelData::U8(v) => Ok(v.iter().map(|&x| x as u32).collect()),
            VoxelData::I16(v) => v
                .iter()
                .map(|&x| u32::try_from(x).map_err(|_| bad(x as f64)))
                .collect(),
            VoxelData::I32(v) => v
                .iter()
                .map(|&x| u32::try_from(x).map_err(|_| bad(x as f64)))
                .collect(),
            VoxelData::F32(v) => v.iter().map(|&x| float_label(x as f64).ok_or_else(|| bad(x as f64))).collect(),
            VoxelData::F64(v) => v.iter().map(|&x| float_label(x).ok_or_else(|| bad(x))).collect(),
        };
        LabelMask::with_affine(self.dims, self.spacing, self.affine, labels?)
    }
}

fn float_label(x: f64) -> Option<u32> {
    (x >= 0.0 && x.fract() == 0.0 && x <= u32::MAX as f64).then_some(x as u32)
}

/// Integer label map on a 3D grid. Non-zero voxels are foreground when the
/// mask is used as a binary mask.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMask {
    dims: Dims,
    spacing: [f64; 3],
    affine: Affine,
    voxels: Vec<u32>,
}

impl LabelMask {
    pub fn new(dims: Dims, spacing: [f64; 3], voxels: Vec<u32>) -> Result<Self> {
        Self::with_affine(dims, spacing, diagonal_affine(spacing), voxels)
    }

    pub fn with_affine(dims: Dims, spacing: [f64; 3], affine: Affine, voxels: Vec<u32>) -> Result<Self> {
        check_geometry(dims, spacing, &affine)?;
        if dims.len() != voxels.len() {
            return Err(Error::InvalidVolume(format!(
                "{} voxels != data length {}",
                dims.len(),
                voxels.len()
            )));
        }
        Ok(LabelMask {
            dims,
            spacing,
            affine,
            voxels,
        })
    }

    /// All-background mask sharing this mask's geometry.
    pub fn empty_like(&self) -> LabelMask {
        LabelMask {
            voxels: vec![0; self.voxels.len()],
            ..self.clone()
        }
    }

    /// Geometry-preserving copy with new voxel values.
    pub fn with_voxels(&self, voxels: Vec<u32>) -> Result<LabelMask> {
        LabelMask::with_affine(self.dims, self.spacing, self.affine, voxels)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn shape(&self) -> [usize; 3] {
        self.dims.0
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn affine(&self) -> &Affine {
        &self.affine
    }

    pub fn voxels(&self) -> &[u32] {
        &self.voxels
    }

    pub fn voxels_mut(&mut self) -> &mut [u32] {
        &mut self.voxels
    }

    pub fn get(&self, c: VoxelCoord) -> u32 {
        self.voxels[self.dims.index(c)]
    }

    pub fn is_foreground(&self, c: VoxelCoord) -> bool {
        self.get(c) != 0
    }

    /// Binary view selecting `label == k`.
    pub fn binary(&self, k: u32) -> LabelMask {
        self.select(&[k])
    }

    /// Binary view selecting any of `labels`.
    pub fn select(&self, labels: &[u32]) -> LabelMask {
        LabelMask {
            voxels: self.voxels.iter().map(|v| labels.contains(v) as u32).collect(),
            ..self.clone()
        }
    }

    /// Binary view of all non-zero labels.
    pub fn nonzero(&self) -> LabelMask {
        LabelMask {
            dims: self.dims,
            spacing: self.spacing,
            affine: self.affine,
            voxels: self.voxels.iter().map(|&v| (v != 0) as u32).collect(),
        }
    }

    pub fn foreground_count(&self) -> usize {
        self.voxels.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_binary(&self) -> bool {
        self.voxels.iter().all(|&v| v <= 1)
    }

    pub(crate) fn same_shape(&self, other: &LabelMask) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::ShapeMismatch {
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    pub fn to_volume(&self) -> Volume {
        let max = self.voxels.iter().copied().max().unwrap_or(0);
        let data = if max <= u8::MAX as u32 {
            VoxelData::U8(self.voxels.iter().map(|&v| v as u8).collect())
        } else {
            VoxelData::I32(self.voxels.iter().map(|&v| v as i32).collect())
        };
        Volume {
            dims: self.dims,
            spacing: self.spacing,
            affine: self.affine,
            channels: 1,
            data,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_and_coord_are_inverse() {
        let d = Dims::new(3, 4, 5);
        for idx in 0..d.len() {
            assert_eq!(d.index(d.coord(idx)), idx);
        }
        assert_eq!(d.index(VoxelCoord::new(1, 2, 3)), 1 + 3 * (2 + 4 * 3));
    }

    #[test]
    fn volume_rejects_bad_geometry() {
        let d = Dims::new(2, 2, 2);
        assert!(Volume::from_data(d, [1.0, 0.0, 1.0], VoxelData::U8(vec![0; 8])).is_err());
        assert!(Volume::from_data(d, [1.0, f64::NAN, 1.0], VoxelData::U8(vec![0; 8])).is_err());
        assert!(Volume::from_data(d, [1.0; 3], VoxelData::U8(vec![0; 7])).is_err());
        let singular = [[1.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]];
        assert!(Volume::new(d, [1.0; 3], singular, 1, VoxelData::U8(vec![0; 8])).is_err());
        assert!(Volume::new(d, [1.0; 3], diagonal_affine([1.0; 3]), 2, VoxelData::U8(vec![0; 16])).is_ok());
    }

    #[test]
    fn label_conversion() {
        let d = Dims::new(2, 1, 1);
        let v = Volume::from_data(d, [1.0; 3], VoxelData::F32(vec![0.0, 3.0])).unwrap();
        assert_eq!(v.to_label_mask().unwrap().voxels(), &[0, 3]);
        let v = Volume::from_data(d, [1.0; 3], VoxelData::F32(vec![0.5, 3.0])).unwrap();
        assert!(v.to_label_mask().is_err());
        let v = Volume::from_data(d, [1.0; 3], VoxelData::I16(vec![-1, 3])).unwrap();
        assert!(v.to_label_mask().is_err());
    }

    #[test]
    fn binary_views() {
        let m = LabelMask::new(Dims::new(4, 1, 1), [1.0; 3], vec![0, 1, 2, 2]).unwrap();
        assert_eq!(m.binary(2).voxels(), &[0, 0, 1, 1]);
        assert_eq!(m.select(&[1, 2]).voxels(), &[0, 1, 1, 1]);
        assert_eq!(m.binary(7).foreground_count(), 0);
    }
}
