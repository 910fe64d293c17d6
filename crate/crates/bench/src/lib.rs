//! Fixtures shared by the criterion benches.

use iseval_core::synth::sphere;
use iseval_core::volume::VoxelData;
use iseval_core::{Dims, LabelMask, Volume};

/// Reference and prediction spheres on an `n`³ grid, the prediction shifted
/// by two voxels and slightly smaller.
pub fn sphere_pair(n: usize, spacing: [f64; 3]) -> (LabelMask, LabelMask) {
    let dims = Dims::new(n, n, n);
    let c = n as f64 / 2.0;
    let r = n as f64 / 4.0;
    let reference = sphere(dims, spacing, [c; 3], r).expect("valid geometry");
    let pred = sphere(dims, spacing, [c + 2.0, c, c - 1.0], r - 1.5).expect("valid geometry");
    (pred, reference)
}

/// Label map with `count` separate small balls along the diagonal plus a
/// checkerboard slab, so component labelling has many small pieces.
pub fn fragmented_mask(n: usize, count: usize) -> LabelMask {
    let dims = Dims::new(n, n, n);
    let mut voxels = vec![0u32; dims.len()];
    for b in 0..count {
        let t = (b as f64 + 0.5) / count as f64 * (n as f64 - 1.0);
        let ball = sphere(dims, [1.0; 3], [t, t, (n as f64 - 1.0) - t], 1.5).expect("valid geometry");
        for (v, &x) in voxels.iter_mut().zip(ball.voxels()) {
            *v |= x;
        }
    }
    for (idx, v) in voxels.iter_mut().enumerate() {
        let c = dims.coord(idx);
        if c.k < 2 && (c.i + c.j).is_multiple_of(2) {
            *v = 1;
        }
    }
    LabelMask::new(dims, [1.0; 3], voxels).expect("valid geometry")
}

/// CT-like `i16` intensities: a smooth gradient with a bright ball.
pub fn ct_like(n: usize) -> Volume {
    let dims = Dims::new(n, n, n);
    let data = (0..dims.len())
        .map(|idx| {
            let c = dims.coord(idx);
            let d2 = [c.i, c.j, c.k].iter().map(|&x| (x as f64 - n as f64 / 2.0).powi(2)).sum::<f64>();
            let base = (c.i + 2 * c.j + 3 * c.k) as i16 - 1000;
            if d2 < (n as f64 / 5.0).powi(2) { base + 1500 } else { base }
        })
        .collect();
    Volume::from_data(dims, [0.8, 0.8, 2.5], VoxelData::I16(data)).expect("valid geometry")
}
