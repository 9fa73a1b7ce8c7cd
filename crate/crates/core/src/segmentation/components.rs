use std::collections::VecDeque;

use super::{Connectivity, LabelMask, SegmentationError};

/// Labels connected foreground components 1..n, largest first.
///
/// Equal-sized components are ordered by their smallest linear voxel index.
/// Returns the labelled mask and the component sizes in label order.
pub fn connected_components(mask: &LabelMask, connectivity: Connectivity) -> (LabelMask, Vec<usize>) {
    let grid = mask.grid();
    let dims = grid.dims();
    let offsets = connectivity.offsets();
    let mut provisional = vec![0u32; grid.len()];
    let mut sizes: Vec<usize> = Vec::new();
    let mut queue = VecDeque::new();

    // Scanning in linear order means each component is discovered at its
    // smallest index, so discovery order is the tie-break order.
    for start in 0..grid.len() {
        if !mask.is_set(start) || provisional[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        provisional[start] = label;
        queue.push_back(start);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let [x, y, z] = grid.coords(i);
            for o in &offsets {
                let n = [x as i64 + o[0], y as i64 + o[1], z as i64 + o[2]];
                if !grid.contains(n) {
                    continue;
                }
                let j = n[0] as usize + dims[0] * (n[1] as usize + dims[1] * n[2] as usize);
                if mask.is_set(j) && provisional[j] == 0 {
                    provisional[j] = label;
                    queue.push_back(j);
                }
            }
        }
        sizes.push(size);
    }

    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]));
    let mut relabel = vec![0u32; sizes.len() + 1];
    for (rank, &old) in order.iter().enumerate() {
        relabel[old + 1] = rank as u32 + 1;
    }
    let data = provisional.into_iter().map(|l| relabel[l as usize]).collect();
    let sorted_sizes = order.iter().map(|&i| sizes[i]).collect();
    let labelled = LabelMask::new(grid.clone(), data).expect("same grid length");
    (labelled, sorted_sizes)
}

/// Keeps only the largest connected component as a binary mask.
pub fn largest_component(mask: &LabelMask, connectivity: Connectivity) -> Result<LabelMask, SegmentationError> {
    let (labels, sizes) = connected_components(mask, connectivity);
    if sizes.is_empty() {
        return Err(SegmentationError::EmptyMask);
    }
    Ok(labels.select(1))
}
