//! Seeded multi-stage region growing and the binary morphology around it.
//!
//! Growth proceeds in stages. The first stage floods from the user's seeds
//! through voxels whose intensity lies in the stage interval. Every later stage
//! re-seeds from the previous result and may only expand inside a dilation band
//! of that result, so relaxed thresholds cannot leak into distant structures.

mod components;
mod morphology;

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use components::{connected_components, largest_component};
pub use morphology::{dilate, erode, structuring_element};

use crate::grid::{Grid, GridId};
use crate::volume::VoxelVolume;

#[derive(Debug, Error, PartialEq)]
pub enum SegmentationError {
    #[error("mask grid {found} is not aligned with reference grid {expected}")]
    GridMismatch { expected: GridId, found: GridId },
    #[error("seed {0:?} lies outside the volume")]
    SeedOutOfBounds([i64; 3]),
    #[error("seed {seed:?} rejected: {reason}")]
    RejectedSeed { seed: [i64; 3], reason: String },
    #[error("seed set is empty")]
    NoSeeds,
    #[error("at least one growth stage is required")]
    NoStages,
    #[error("stage {index}: {reason}")]
    InvalidStage { index: usize, reason: String },
    #[error("mask is empty")]
    EmptyMask,
    #[error("radius must be a non-negative finite number of mm, got {0}")]
    InvalidRadius(f64),
    #[error("label data: {0}")]
    InvalidLabels(String),
}

/// Voxel neighbourhood used for growth and component labelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Six,
    TwentySix,
}

impl TryFrom<u8> for Connectivity {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            6 => Ok(Self::Six),
            26 => Ok(Self::TwentySix),
            other => Err(format!("connectivity must be 6 or 26, got {other}")),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Six => 6,
            Connectivity::TwentySix => 26,
        }
    }
}

impl fmt::Display for Connectivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", u8::from(*self))
    }
}

const FACE_OFFSETS: [[i64; 3]; 6] = [
    [-1, 0, 0],
    [1, 0, 0],
    [0, -1, 0],
    [0, 1, 0],
    [0, 0, -1],
    [0, 0, 1],
];

impl Connectivity {
    pub fn offsets(self) -> Vec<[i64; 3]> {
        match self {
            Self::Six => FACE_OFFSETS.to_vec(),
            Self::TwentySix => {
                let mut v = Vec::with_capacity(26);
                for dz in -1..=1 {
                    for dy in -1..=1 {
                        for dx in -1..=1 {
                            if (dx, dy, dz) != (0, 0, 0) {
                                v.push([dx, dy, dz]);
                            }
                        }
                    }
                }
                v
            }
        }
    }
}

/// Integer label grid aligned to a reference volume; 0 is background.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMask {
    grid: Grid,
    data: Vec<u32>,
    labels: Vec<u32>,
}

fn label_table(data: &[u32]) -> Vec<u32> {
    let mut seen: Vec<u32> = data.iter().copied().filter(|&v| v != 0).collect();
    seen.sort_unstable();
    seen.dedup();
    seen
}

impl LabelMask {
    pub fn new(grid: Grid, data: Vec<u32>) -> Result<Self, SegmentationError> {
        if data.len() != grid.len() {
            return Err(SegmentationError::InvalidLabels(format!(
                "{} labels for a grid of {} voxels",
                data.len(),
                grid.len()
            )));
        }
        let labels = label_table(&data);
        Ok(Self { grid, data, labels })
    }

    pub fn empty(grid: &Grid) -> Self {
        Self {
            data: vec![0; grid.len()],
            grid: grid.clone(),
            labels: Vec::new(),
        }
    }

    pub fn from_bits(grid: &Grid, bits: &[bool]) -> Self {
        let data: Vec<u32> = bits.iter().map(|&b| b as u32).collect();
        let labels = if data.iter().any(|&v| v != 0) { vec![1] } else { Vec::new() };
        Self {
            grid: grid.clone(),
            data,
            labels,
        }
    }

    /// Reads integer labels stored in a scalar volume (e.g. an external label file).
    pub fn from_volume(volume: &VoxelVolume) -> Result<Self, SegmentationError> {
        let data = volume
            .data()
            .iter()
            .map(|&v| {
                if v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f32 {
                    Ok(v as u32)
                } else {
                    Err(SegmentationError::InvalidLabels(format!(
                        "value {v} is not a non-negative integer label"
                    )))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(volume.grid().clone(), data)
    }

    pub fn to_volume(&self) -> VoxelVolume {
        VoxelVolume::new(self.grid.clone(), self.data.iter().map(|&v| v as f32).collect())
            .expect("mask length matches its grid")
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims()
    }

    pub fn reference_id(&self) -> GridId {
        self.grid.id()
    }

    pub fn data(&self) -> &[u32] {
        &self.data
    }

    /// Distinct non-zero labels present, ascending.
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn is_set(&self, index: usize) -> bool {
        self.data[index] != 0
    }

    pub fn bits(&self) -> Vec<bool> {
        self.data.iter().map(|&v| v != 0).collect()
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Keeps voxels carrying `label`, as a binary mask.
    pub fn select(&self, label: u32) -> LabelMask {
        let bits: Vec<bool> = self.data.iter().map(|&v| v == label && v != 0).collect();
        Self::from_bits(&self.grid, &bits)
    }

    pub fn complement(&self) -> LabelMask {
        let bits: Vec<bool> = self.data.iter().map(|&v| v == 0).collect();
        Self::from_bits(&self.grid, &bits)
    }

    pub(crate) fn check_aligned(&self, grid: &Grid) -> Result<(), SegmentationError> {
        if self.grid.is_aligned_with(grid) {
            Ok(())
        } else {
            Err(SegmentationError::GridMismatch {
                expected: grid.id(),
                found: self.grid.id(),
            })
        }
    }
}

/// Parameters of one growth stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthStage {
    pub low: f64,
    #[serde(default = "unbounded")]
    pub high: f64,
    pub connectivity: Connectivity,
    #[serde(default)]
    pub band_radius_mm: f64,
}

fn unbounded() -> f64 {
    f64::INFINITY
}

impl GrowthStage {
    pub fn new(low: f64, high: f64, connectivity: Connectivity) -> Self {
        Self {
            low,
            high,
            connectivity,
            band_radius_mm: 0.0,
        }
    }

    pub fn with_band(mut self, band_radius_mm: f64) -> Self {
        self.band_radius_mm = band_radius_mm;
        self
    }

    #[inline]
    pub fn admits(&self, value: f64) -> bool {
        value >= self.low && value <= self.high
    }
}

/// Manually placed start voxels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedSet {
    seeds: Vec<[i64; 3]>,
}

impl SeedSet {
    pub fn new(seeds: Vec<[i64; 3]>) -> Result<Self, SegmentationError> {
        if seeds.is_empty() {
            return Err(SegmentationError::NoSeeds);
        }
        Ok(Self { seeds })
    }

    pub fn seeds(&self) -> &[[i64; 3]] {
        &self.seeds
    }
}

pub(crate) fn validate_stages(stages: &[GrowthStage]) -> Result<(), SegmentationError> {
    if stages.is_empty() {
        return Err(SegmentationError::NoStages);
    }
    for (index, s) in stages.iter().enumerate() {
        if s.low.is_nan() || s.high.is_nan() || s.low > s.high {
            return Err(SegmentationError::InvalidStage {
                index,
                reason: format!("interval [{}, {}] is empty", s.low, s.high),
            });
        }
        if index > 0 && !(s.band_radius_mm > 0.0 && s.band_radius_mm.is_finite()) {
            return Err(SegmentationError::InvalidStage {
                index,
                reason: format!("band_radius_mm must be > 0 after the first stage, got {}", s.band_radius_mm),
            });
        }
    }
    Ok(())
}

/// Breadth-first flood from the already-marked `frontier` voxels into voxels
/// accepted by `admissible`.
fn flood(
    grid: &Grid,
    region: &mut [bool],
    frontier: impl IntoIterator<Item = usize>,
    connectivity: Connectivity,
    admissible: impl Fn(usize) -> bool,
) {
    let dims = grid.dims();
    let offsets = connectivity.offsets();
    let mut queue: VecDeque<usize> = frontier.into_iter().collect();
    while let Some(i) = queue.pop_front() {
        let [x, y, z] = grid.coords(i);
        for o in &offsets {
            let n = [x as i64 + o[0], y as i64 + o[1], z as i64 + o[2]];
            if !grid.contains(n) {
                continue;
            }
            let j = n[0] as usize + dims[0] * (n[1] as usize + dims[1] * n[2] as usize);
            if !region[j] && admissible(j) {
                region[j] = true;
                queue.push_back(j);
            }
        }
    }
}

/// Multi-stage seeded region growing. Returns the final stage's voxel set as a
/// binary mask on `volume`'s grid.
pub fn region_grow(
    volume: &VoxelVolume,
    seeds: &SeedSet,
    stages: &[GrowthStage],
    domain: Option<&LabelMask>,
) -> Result<LabelMask, SegmentationError> {
    validate_stages(stages)?;
    let grid = volume.grid();
    if let Some(d) = domain {
        d.check_aligned(grid)?;
    }
    let data = volume.data();
    let in_domain = |i: usize| domain.is_none_or(|d| d.is_set(i));

    let first = &stages[0];
    let mut region = vec![false; grid.len()];
    let mut starts = Vec::with_capacity(seeds.seeds().len());
    for &seed in seeds.seeds() {
        if !grid.contains(seed) {
            return Err(SegmentationError::SeedOutOfBounds(seed));
        }
        let i = grid.index(seed[0] as usize, seed[1] as usize, seed[2] as usize);
        let value = data[i] as f64;
        if !first.admits(value) {
            return Err(SegmentationError::RejectedSeed {
                seed,
                reason: format!(
                    "intensity {value} outside stage-1 interval [{}, {}]",
                    first.low, first.high
                ),
            });
        }
        if !in_domain(i) {
            return Err(SegmentationError::RejectedSeed {
                seed,
                reason: "outside the growth domain".into(),
            });
        }
        if !region[i] {
            region[i] = true;
            starts.push(i);
        }
    }
    flood(grid, &mut region, starts, first.connectivity, |j| {
        in_domain(j) && first.admits(data[j] as f64)
    });

    for stage in &stages[1..] {
        let previous = LabelMask::from_bits(grid, &region);
        let band = dilate(&previous, stage.band_radius_mm)?;
        let frontier: Vec<usize> = (0..region.len()).filter(|&i| region[i]).collect();
        flood(grid, &mut region, frontier, stage.connectivity, |j| {
            band.is_set(j) && in_domain(j) && stage.admits(data[j] as f64)
        });
    }
    Ok(LabelMask::from_bits(grid, &region))
}

/// Which side of a mask survives [`mask_volume`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    KeepInside,
    KeepOutside,
}

/// Zeroes voxels on the rejected side of `mask`.
pub fn mask_volume(
    volume: &VoxelVolume,
    mask: &LabelMask,
    mode: MaskMode,
) -> Result<VoxelVolume, SegmentationError> {
    mask.check_aligned(volume.grid())?;
    let keep_set = mode == MaskMode::KeepInside;
    let data = volume
        .data()
        .iter()
        .zip(mask.data())
        .map(|(&v, &m)| if (m != 0) == keep_set { v } else { 0.0 })
        .collect();
    Ok(volume.with_data(data).expect("same grid"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn volume(dims: [usize; 3], f: impl Fn([usize; 3]) -> f32 + Sync) -> VoxelVolume {
        VoxelVolume::from_fn(Grid::with_spacing(dims, [1.0; 3]).unwrap(), f)
    }

    #[test]
    fn uniform_volume_fills_entirely() {
        let v = volume([6, 5, 4], |_| 100.0);
        let seeds = SeedSet::new(vec![[2, 2, 2]]).unwrap();
        let m = region_grow(&v, &seeds, &[GrowthStage::new(50.0, 150.0, Connectivity::Six)], None).unwrap();
        assert_eq!(m.count(), 6 * 5 * 4);
        assert_eq!(m.labels(), &[1]);
    }

    #[test]
    fn domain_restricts_growth() {
        let v = volume([6, 6, 6], |_| 100.0);
        let grid = v.grid().clone();
        let bits: Vec<bool> = (0..grid.len()).map(|i| grid.coords(i)[0] < 3).collect();
        let domain = LabelMask::from_bits(&grid, &bits);
        let seeds = SeedSet::new(vec![[0, 0, 0]]).unwrap();
        let m = region_grow(&v, &seeds, &[GrowthStage::new(0.0, 200.0, Connectivity::TwentySix)], Some(&domain)).unwrap();
        assert_eq!(m, domain);
    }

    #[test]
    fn seed_errors() {
        let v = volume([4, 4, 4], |[x, _, _]| x as f32);
        let stage = [GrowthStage::new(2.0, 3.0, Connectivity::Six)];
        let out = SeedSet::new(vec![[4, 0, 0]]).unwrap();
        assert_eq!(region_grow(&v, &out, &stage, None), Err(SegmentationError::SeedOutOfBounds([4, 0, 0])));
        let rejected = SeedSet::new(vec![[2, 0, 0], [0, 1, 1]]).unwrap();
        match region_grow(&v, &rejected, &stage, None) {
            Err(SegmentationError::RejectedSeed { seed, .. }) => assert_eq!(seed, [0, 1, 1]),
            other => panic!("{other:?}"),
        }
        assert_eq!(SeedSet::new(vec![]), Err(SegmentationError::NoSeeds));
    }

    #[test]
    fn stage_validation() {
        let v = volume([3, 3, 3], |_| 1.0);
        let seeds = SeedSet::new(vec![[1, 1, 1]]).unwrap();
        assert_eq!(region_grow(&v, &seeds, &[], None), Err(SegmentationError::NoStages));
        let inverted = [GrowthStage::new(2.0, 1.0, Connectivity::Six)];
        assert!(matches!(region_grow(&v, &seeds, &inverted, None), Err(SegmentationError::InvalidStage { index: 0, .. })));
        let no_band = [GrowthStage::new(0.0, 2.0, Connectivity::Six), GrowthStage::new(0.0, 2.0, Connectivity::Six)];
        assert!(matches!(region_grow(&v, &seeds, &no_band, None), Err(SegmentationError::InvalidStage { index: 1, .. })));
    }

    #[test]
    fn second_stage_stays_in_band() {
        // Bright core x in 8..12, dimmer shell to either side along x.
        let v = volume([20, 5, 5], |[x, _, _]| if (8..12).contains(&x) { 200.0 } else { 120.0 });
        let seeds = SeedSet::new(vec![[10, 2, 2]]).unwrap();
        let stages = [
            GrowthStage::new(150.0, f64::INFINITY, Connectivity::Six),
            GrowthStage::new(100.0, f64::INFINITY, Connectivity::Six).with_band(2.0),
        ];
        let m = region_grow(&v, &seeds, &stages, None).unwrap();
        for i in 0..m.data().len() {
            let x = v.grid().coords(i)[0];
            assert_eq!(m.is_set(i), (6..14).contains(&x), "x = {x}");
        }
    }

    #[test]
    fn mask_volume_modes() {
        let v = volume([3, 3, 3], |[x, y, z]| (x + 3 * y + 9 * z) as f32 + 1.0);
        let grid = v.grid().clone();
        let ones = LabelMask::from_bits(&grid, &[true; 27]);
        let zeros = LabelMask::empty(&grid);
        assert_eq!(mask_volume(&v, &ones, MaskMode::KeepInside).unwrap(), v);
        assert!(mask_volume(&v, &zeros, MaskMode::KeepInside).unwrap().data().iter().all(|&x| x == 0.0));

        let bits: Vec<bool> = (0..27).map(|i| i % 4 == 1).collect();
        let m = LabelMask::from_bits(&grid, &bits);
        let a = mask_volume(&v, &m, MaskMode::KeepInside).unwrap();
        let b = mask_volume(&v, &m, MaskMode::KeepOutside).unwrap();
        for i in 0..27 {
            assert_eq!(a.data()[i] + b.data()[i], v.data()[i]);
        }

        let other = LabelMask::empty(&Grid::with_spacing([3, 3, 3], [2.0; 3]).unwrap());
        assert!(matches!(mask_volume(&v, &other, MaskMode::KeepInside), Err(SegmentationError::GridMismatch { .. })));
    }

    #[test]
    fn label_table_and_conversions() {
        let grid = Grid::with_spacing([2, 2, 1], [1.0; 3]).unwrap();
        let m = LabelMask::new(grid.clone(), vec![0, 3, 3, 7]).unwrap();
        assert_eq!(m.labels(), &[3, 7]);
        assert_eq!(m.select(3).count(), 2);
        let back = LabelMask::from_volume(&m.to_volume()).unwrap();
        assert_eq!(back, m);
        let bad = VoxelVolume::new(grid, vec![0.0, 0.5, 1.0, 2.0]).unwrap();
        assert!(LabelMask::from_volume(&bad).is_err());
    }

    #[test]
    fn connectivity_serde() {
        let c: Connectivity = serde_json::from_str("26").unwrap();
        assert_eq!(c, Connectivity::TwentySix);
        assert!(serde_json::from_str::<Connectivity>("8").is_err());
        assert_eq!(serde_json::to_string(&Connectivity::Six).unwrap(), "6");
    }
}
