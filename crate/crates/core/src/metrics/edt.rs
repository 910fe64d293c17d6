//! Exact Euclidean feature transform on an anisotropic voxel grid.
//!
//! Separable lower-envelope-of-parabolas algorithm (Felzenszwalb &
//! Huttenlocher), run once per axis. Besides the squared distance it carries
//! the linear index of the nearest site, so callers can recompute the
//! distance to that site in closed form.

use crate::volume::Dims;

pub const NO_SITE: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct FeatureTransform {
    /// Squared distance in mm² to the nearest site; infinite when there are
    /// no sites.
    pub dist_sq: Vec<f64>,
    /// Linear index of the nearest site, or [`NO_SITE`].
    pub nearest: Vec<u32>,
}

struct Scratch {
    f: Vec<f64>,
    feat: Vec<u32>,
    out_f: Vec<f64>,
    out_feat: Vec<u32>,
    v: Vec<usize>,
    z: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Scratch {
            f: vec![0.0; n],
            feat: vec![0; n],
            out_f: vec![0.0; n],
            out_feat: vec![0; n],
            v: Vec::with_capacity(n),
            z: Vec::with_capacity(n),
        }
    }

    /// 1D transform of `f[..n]` with squared sample spacing `s2`.
    fn line(&mut self, n: usize, s2: f64) {
        let Scratch {
            f,
            feat,
            out_f,
            out_feat,
            v,
            z,
        } = self;
        v.clear();
        z.clear();
        for q in 0..n {
            if f[q].is_infinite() {
                continue;
            }
            let qf = q as f64;
            loop {
                let Some(&p) = v.last() else {
                    v.push(q);
                    z.push(f64::NEG_INFINITY);
                    break;
                };
                let pf = p as f64;
                let s = ((f[q] + s2 * qf * qf) - (f[p] + s2 * pf * pf)) / (2.0 * s2 * (qf - pf));
                if s <= *z.last().unwrap() {
                    v.pop();
                    z.pop();
                    continue;
                }
                v.push(q);
                z.push(s);
                break;
            }
        }
        if v.is_empty() {
            out_f[..n].fill(f64::INFINITY);
            out_feat[..n].fill(NO_SITE);
            return;
        }
        let mut k = 0;
        for x in 0..n {
            let xf = x as f64;
            while k + 1 < v.len() && z[k + 1] < xf {
                k += 1;
            }
            let p = v[k];
            let d = xf - p as f64;
            out_f[x] = s2 * d * d + f[p];
            out_feat[x] = feat[p];
        }
    }
}

/// Distance/feature transform of the voxels where `is_site` is true.
pub fn feature_transform(is_site: &[bool], dims: Dims, spacing: [f64; 3]) -> FeatureTransform {
    let n = dims.len();
    assert_eq!(is_site.len(), n, "site mask length must match the grid");
    assert!(n <= NO_SITE as usize, "grid too large for 32-bit feature indices");

    let mut dist_sq: Vec<f64> = is_site.iter().map(|&s| if s { 0.0 } else { f64::INFINITY }).collect();
    let mut nearest: Vec<u32> = (0..n as u32).map(|i| if is_site[i as usize] { i } else { NO_SITE }).collect();

    let [nx, ny, nz] = dims.0;
    let strides = [1, nx, nx * ny];
    let extents = [nx, ny, nz];
    let mut scratch = Scratch::new(nx.max(ny).max(nz));

    for axis in 0..3 {
        let len = extents[axis];
        let stride = strides[axis];
        let s2 = spacing[axis] * spacing[axis];
        // Enumerate line starts: every voxel whose coordinate on `axis` is 0.
        let (a, b) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for u in 0..extents[b] {
            for w in 0..extents[a] {
                let start = w * strides[a] + u * strides[b];
                for t in 0..len {
                    let idx = start + t * stride;
                    scratch.f[t] = dist_sq[idx];
                    scratch.feat[t] = nearest[idx];
                }
                scratch.line(len, s2);
                for t in 0..len {
                    let idx = start + t * stride;
                    dist_sq[idx] = scratch.out_f[t];
                    nearest[idx] = scratch.out_feat[t];
                }
            }
        }
    }
    FeatureTransform { dist_sq, nearest }
}
