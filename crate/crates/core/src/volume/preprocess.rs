use log::warn;

use super::{Volume, VoxelCoord, VoxelData};
use crate::error::{Error, Result};

/// Linear-interpolation percentile (`pct` in `[0, 100]`) of `values`.
///
/// Uses two selections rather than a full sort; `values` is reordered.
pub fn percentile(values: &mut [f64], pct: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("percentile of an empty set"));
    }
    if !(0.0..=100.0).contains(&pct) {
        return Err(Error::InvalidArgument(format!("percentile {pct} outside [0, 100]")));
    }
    let n = values.len();
    let pos = (pct / 100.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    let (_, &mut below, upper) = values.select_nth_unstable_by(lo, f64::total_cmp);
    if frac == 0.0 || upper.is_empty() {
        return Ok(below);
    }
    let above = upper.iter().copied().min_by(f64::total_cmp).unwrap_or(below);
    Ok(below + (above - below) * frac)
}

/// Clip intensities to the `[lo_pct, hi_pct]` percentile range of the whole
/// volume and rescale linearly so that the low percentile maps to 0 and the
/// high percentile to `out_max`.
///
/// A constant volume has no usable range; the output is then all zeros and a
/// warning is logged.
pub fn clip_normalize(v: &Volume, lo_pct: f64, hi_pct: f64, out_max: f64) -> Result<Volume> {
    if !(0.0 <= lo_pct && lo_pct < hi_pct && hi_pct <= 100.0) {
        return Err(Error::InvalidArgument(format!(
            "need 0 <= lo_pct < hi_pct <= 100, got {lo_pct}, {hi_pct}"
        )));
    }
    let values = v.data().to_f64();
    let mut scratch = values.clone();
    let p_lo = percentile(&mut scratch, lo_pct)?;
    let p_hi = percentile(&mut scratch, hi_pct)?;

    let out: Vec<f32> = if p_hi > p_lo {
        let scale = out_max / (p_hi - p_lo);
        values
            .iter()
            .map(|&x| ((x.clamp(p_lo, p_hi) - p_lo) * scale) as f32)
            .collect()
    } else {
        warn!("clip_normalize: constant intensity range ({p_lo}); output set to zero");
        vec![0.0; values.len()]
    };
    Volume::new(v.dims(), v.spacing(), *v.affine(), v.channels(), VoxelData::F32(out))
}

/// Map a voxel index between grids of different extent using voxel centres:
/// per axis `floor((c + 0.5) / from * to)`, clamped to `[0, to - 1]`.
pub fn remap_index(c: VoxelCoord, from_shape: [usize; 3], to_shape: [usize; 3]) -> VoxelCoord {
    let axis = |v: usize, from: usize, to: usize| -> usize {
        if to == 0 || from == 0 {
            return 0;
        }
        let mapped = ((v as f64 + 0.5) / from as f64 * to as f64).floor();
        (mapped.max(0.0) as usize).min(to - 1)
    };
    VoxelCoord {
        i: axis(c.i, from_shape[0], to_shape[0]),
        j: axis(c.j, from_shape[1], to_shape[1]),
        k: axis(c.k, from_shape[2], to_shape[2]),
    }
}

/// Position of a voxel centre relative to a crop box, each axis in `(0, 1)`.
pub fn point_to_relative(c: VoxelCoord, crop_origin: VoxelCoord, crop_shape: [usize; 3]) -> Result<[f64; 3]> {
    let p = c.to_array();
    let o = crop_origin.to_array();
    let mut rel = [0.0; 3];
    for a in 0..3 {
        if p[a] < o[a] || p[a] >= o[a] + crop_shape[a] {
            return Err(Error::OutOfCrop {
                point: p,
                origin: o,
                extent: crop_shape,
            });
        }
        rel[a] = ((p[a] - o[a]) as f64 + 0.5) / crop_shape[a] as f64;
    }
    Ok(rel)
}
