use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{Dims, LabelMask};

/// Voxel adjacency used for connected components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    /// Face neighbors.
    Six,
    /// Face and edge neighbors.
    Eighteen,
    /// Face, edge and corner neighbors.
    #[default]
    TwentySix,
}

impl Connectivity {
    pub fn offsets(self) -> Vec<[isize; 3]> {
        let mut out = Vec::with_capacity(26);
        for dk in -1isize..=1 {
            for dj in -1isize..=1 {
                for di in -1isize..=1 {
                    let nonzero = (di != 0) as u8 + (dj != 0) as u8 + (dk != 0) as u8;
                    let keep = match self {
                        Connectivity::Six => nonzero == 1,
                        Connectivity::Eighteen => (1..=2).contains(&nonzero),
                        Connectivity::TwentySix => nonzero >= 1,
                    };
                    if keep {
                        out.push([di, dj, dk]);
                    }
                }
            }
        }
        out
    }
}

impl TryFrom<u8> for Connectivity {
    type Error = String;

    fn try_from(n: u8) -> Result<Self, Self::Error> {
        match n {
            6 => Ok(Connectivity::Six),
            18 => Ok(Connectivity::Eighteen),
            26 => Ok(Connectivity::TwentySix),
            other => Err(format!("connectivity must be 6, 18 or 26, got {other}")),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Six => 6,
            Connectivity::Eighteen => 18,
            Connectivity::TwentySix => 26,
        }
    }
}

/// Connected components of a binary mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentLabels {
    /// Per voxel: 0 for background, else the 1-based component id. Ids are
    /// assigned in order of each component's lowest linear index.
    pub labels: Vec<u32>,
    /// Voxel count of component `id` at position `id - 1`.
    pub sizes: Vec<usize>,
}

impl ComponentLabels {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    /// Id of the largest component; ties go to the lowest id.
    pub fn largest(&self) -> Option<u32> {
        let mut best: Option<(u32, usize)> = None;
        for (i, &size) in self.sizes.iter().enumerate() {
            if best.is_none_or(|(_, s)| size > s) {
                best = Some((i as u32 + 1, size));
            }
        }
        best.map(|(id, _)| id)
    }
}

/// Label the foreground (non-zero) components of `mask`.
pub fn label_components(mask: &LabelMask, connectivity: Connectivity) -> ComponentLabels {
    let dims: Dims = mask.dims();
    let offsets = connectivity.offsets();
    let voxels = mask.voxels();
    let mut labels = vec![0u32; voxels.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();

    for seed in 0..voxels.len() {
        if voxels[seed] == 0 || labels[seed] != 0 {
            continue;
        }
        let id = sizes.len() as u32 + 1;
        labels[seed] = id;
        queue.push_back(seed);
        let mut size = 0;
        while let Some(idx) = queue.pop_front() {
            size += 1;
            let c = dims.coord(idx);
            for d in &offsets {
                if let Some(n) = dims.offset(c, *d) {
                    let ni = dims.index(n);
                    if voxels[ni] != 0 && labels[ni] == 0 {
                        labels[ni] = id;
                        queue.push_back(ni);
                    }
                }
            }
        }
        sizes.push(size);
    }
    ComponentLabels { labels, sizes }
}

/// Keep only the largest foreground component. An empty mask is returned
/// unchanged.
pub fn largest_component(mask: &LabelMask, connectivity: Connectivity) -> LabelMask {
    let comps = label_components(mask, connectivity);
    let Some(keep) = comps.largest() else {
        return mask.empty_like();
    };
    let mut out = mask.empty_like();
    for (o, &l) in out.voxels_mut().iter_mut().zip(&comps.labels) {
        *o = (l == keep) as u32;
    }
    out
}
