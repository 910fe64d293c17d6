//! Synthetic volumes for tests, benchmarks and smoke runs.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::simulator::Sample;
use crate::volume::{write_label_mask, write_nifti, Dims, LabelMask, Volume, VoxelData};

/// Binary ball of `radius` voxels around `center` (voxel units).
pub fn sphere(dims: Dims, spacing: [f64; 3], center: [f64; 3], radius: f64) -> Result<LabelMask> {
    let r2 = radius * radius;
    let voxels = (0..dims.len())
        .map(|idx| {
            let c = dims.coord(idx).to_array();
            let d2: f64 = (0..3).map(|a| (c[a] as f64 - center[a]).powi(2)).sum();
            u32::from(d2 <= r2)
        })
        .collect();
    LabelMask::new(dims, spacing, voxels)
}

/// Independent Bernoulli(`fill`) voxels.
pub fn random_mask(dims: Dims, spacing: [f64; 3], fill: f64, rng: &mut impl Rng) -> Result<LabelMask> {
    let voxels = (0..dims.len()).map(|_| u32::from(rng.random_bool(fill))).collect();
    LabelMask::new(dims, spacing, voxels)
}

/// Union of `balls` random balls; gives irregular but mostly compact shapes.
pub fn blob_mask(dims: Dims, spacing: [f64; 3], balls: usize, rng: &mut impl Rng) -> Result<LabelMask> {
    let max_r = (dims.0.iter().copied().min().unwrap_or(1) as f64 / 3.0).max(1.0);
    let mut voxels = vec![0u32; dims.len()];
    for _ in 0..balls {
        let center: [f64; 3] = std::array::from_fn(|a| rng.random_range(0.0..dims.0[a] as f64));
        let r = rng.random_range(0.5..=max_r);
        let ball = sphere(dims, spacing, center, r)?;
        for (v, &b) in voxels.iter_mut().zip(ball.voxels()) {
            *v |= b;
        }
    }
    LabelMask::new(dims, spacing, voxels)
}

/// Write one image/label pair per radius under `dir/images` and `dir/labels`
/// as `case_NNN.nii.gz`. Centres are jittered with `seed` but keep the ball
/// inside the grid. Images are the ball at intensity 200 plus uniform noise.
pub fn write_sphere_dataset(dir: &Path, dims: Dims, radii: &[f64], seed: u64) -> Result<Vec<Sample>> {
    if radii.is_empty() {
        return Err(Error::EmptyInput("no sphere radii"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (images, labels) = (dir.join("images"), dir.join("labels"));
    for d in [&images, &labels] {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let spacing = [1.0; 3];
    let mut samples = Vec::with_capacity(radii.len());
    for (n, &r) in radii.iter().enumerate() {
        let center: [f64; 3] = std::array::from_fn(|a| {
            let (lo, hi) = (r, dims.0[a] as f64 - 1.0 - r);
            if hi > lo {
                rng.random_range(lo..=hi)
            } else {
                (dims.0[a] as f64 - 1.0) / 2.0
            }
        });
        let label = sphere(dims, spacing, center, r)?;
        let data = label
            .voxels()
            .iter()
            .map(|&v| (v as i16) * 200 + rng.random_range(0..40))
            .collect();
        let image = Volume::from_data(dims, spacing, VoxelData::I16(data))?;
        let name = format!("case_{n:03}.nii.gz");
        let (img_path, lbl_path) = (images.join(&name), labels.join(&name));
        write_nifti(&image, &img_path)?;
        write_label_mask(&label, &lbl_path)?;
        samples.push(Sample {
            id: format!("case_{n:03}"),
            image_paths: vec![img_path],
            label_path: lbl_path,
        });
    }
    Ok(samples)
}
