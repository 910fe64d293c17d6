use super::edt::{feature_transform, NO_SITE};
use super::EmptyPolicy;
use crate::error::{Error, Result};
use crate::volume::{Dims, LabelMask, VoxelCoord};

const FACE_NEIGHBORS: [[isize; 3]; 6] = [[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]];

fn surface_bits(m: &LabelMask) -> Vec<bool> {
    let dims = m.dims();
    let v = m.voxels();
    (0..v.len())
        .map(|idx| {
            if v[idx] == 0 {
                return false;
            }
            let c = dims.coord(idx);
            FACE_NEIGHBORS.iter().any(|&d| match dims.offset(c, d) {
                Some(n) => v[dims.index(n)] == 0,
                None => true,
            })
        })
        .collect()
}

/// Foreground voxels with at least one face neighbor that is background or
/// outside the grid, in linear-index order.
pub fn surface_extract(m: &LabelMask) -> Vec<VoxelCoord> {
    let dims = m.dims();
    surface_bits(m)
        .iter()
        .enumerate()
        .filter(|(_, &s)| s)
        .map(|(i, _)| dims.coord(i))
        .collect()
}

fn distance_mm(a: VoxelCoord, b: VoxelCoord, spacing: [f64; 3]) -> f64 {
    let dx = (a.i as f64 - b.i as f64) * spacing[0];
    let dy = (a.j as f64 - b.j as f64) * spacing[1];
    let dz = (a.k as f64 - b.k as f64) * spacing[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Number of `from` surface voxels within `tau` mm of the `to` surface.
fn count_within(from: &[bool], to: &[bool], dims: Dims, spacing: [f64; 3], tau: f64) -> usize {
    let ft = feature_transform(to, dims, spacing);
    from.iter()
        .enumerate()
        .filter(|(_, &s)| s)
        .filter(|(idx, _)| {
            let site = ft.nearest[*idx];
            site != NO_SITE && distance_mm(dims.coord(*idx), dims.coord(site as usize), spacing) <= tau
        })
        .count()
}

/// Normalised surface Dice at tolerance `tau` (mm).
///
/// Fraction of both surfaces lying within `tau` of the other surface, with
/// distances measured between voxel centres in physical units.
pub fn nsd(pred: &LabelMask, reference: &LabelMask, spacing: [f64; 3], tau: f64) -> Result<f64> {
    nsd_with(pred, reference, spacing, tau, EmptyPolicy::Match)
}

pub fn nsd_with(
    pred: &LabelMask,
    reference: &LabelMask,
    spacing: [f64; 3],
    tau: f64,
    empty: EmptyPolicy,
) -> Result<f64> {
    pred.same_shape(reference)?;
    if tau.is_nan() || tau < 0.0 {
        return Err(Error::InvalidArgument(format!("tolerance {tau} must be >= 0")));
    }
    if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::InvalidArgument(format!("spacing {spacing:?} must be positive")));
    }
    let dims = pred.dims();
    let sp = surface_bits(pred);
    let sr = surface_bits(reference);
    let np = sp.iter().filter(|&&b| b).count();
    let nr = sr.iter().filter(|&&b| b).count();
    match (np, nr) {
        (0, 0) => return Ok(empty.score()),
        (0, _) | (_, 0) => return Ok(0.0),
        _ => {}
    }
    let close_p = count_within(&sp, &sr, dims, spacing, tau);
    let close_r = count_within(&sr, &sp, dims, spacing, tau);
    Ok((close_p + close_r) as f64 / (np + nr) as f64)
}
