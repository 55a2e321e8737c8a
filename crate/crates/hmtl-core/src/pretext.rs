//! Self-supervised pretext transforms: tile puzzling, per-tile rotation and
//! their combination, each emitting per-region classification labels.
//!
//! Regions are indexed row-major, 0..n²-1. Labels are anchored to the output
//! image: for every region `j` of a perturbed sample,
//! `puzzle_labels[j]` is the original index of the tile now sitting at `j`
//! and `rotation_labels[j]` is the 90-degree class applied to that tile.
//! Reading the labels off the shuffled image therefore needs no extra
//! bookkeeping, and un-shuffling by `puzzle_labels` restores the original.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageops::{self, Image};

/// Square tiling of an image into n x n regions.
///
/// Sides that are not divisible by `n` split so that the first `side % n`
/// rows/columns take the ceil size and the rest the floor size
/// (224 with n=3 gives spans 75, 75, 74).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileGrid {
    pub n: usize,
}

impl TileGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("tile grid needs n >= 2"));
        }
        Ok(TileGrid { n })
    }

    pub fn regions(&self) -> usize {
        self.n * self.n
    }

    /// Per-cell spans along one axis of length `side`.
    pub fn spans(&self, side: usize) -> Vec<usize> {
        let q = side / self.n;
        let r = side % self.n;
        (0..self.n)
            .map(|i| if i < r { q + 1 } else { q })
            .collect()
    }

    /// Start offsets along one axis of length `side`.
    fn offsets(&self, side: usize) -> Vec<usize> {
        let mut offs = Vec::with_capacity(self.n);
        let mut acc = 0;
        for s in self.spans(side) {
            offs.push(acc);
            acc += s;
        }
        offs
    }

    /// (top, left, height, width) of region `idx` in an image of the given size.
    pub fn region_rect(&self, idx: usize, h: usize, w: usize) -> (usize, usize, usize, usize) {
        let row = idx / self.n;
        let col = idx % self.n;
        let row_spans = self.spans(h);
        let col_spans = self.spans(w);
        let row_offs = self.offsets(h);
        let col_offs = self.offsets(w);
        (row_offs[row], col_offs[col], row_spans[row], col_spans[col])
    }
}

/// A bijection over region indices: the tile originally at `i` is placed at
/// `pi(i)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let n = mapping.len();
        let mut seen = vec![false; n];
        for &m in &mapping {
            if m >= n || seen[m] {
                return Err(Error::invalid("mapping is not a bijection over regions"));
            }
            seen[m] = true;
        }
        Ok(Permutation(mapping))
    }

    pub fn identity(n: usize) -> Self {
        Permutation((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Destination region of the tile originally at `i`.
    pub fn apply(&self, i: usize) -> usize {
        self.0[i]
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.0.len()];
        for (i, &d) in self.0.iter().enumerate() {
            inv[d] = i;
        }
        Permutation(inv)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Uniformly random permutation over `n` regions.
    pub fn random(n: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut mapping: Vec<usize> = (0..n).collect();
        mapping.shuffle(rng);
        Permutation(mapping)
    }
}

/// Per-region counterclockwise rotation classes; entry `j` in {0..3} means
/// the tile at region `j` is rotated by `j_class * 90` degrees.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RotationAssignment(Vec<u8>);

impl RotationAssignment {
    pub fn new(classes: Vec<u8>) -> Result<Self> {
        if classes.iter().any(|&c| c > 3) {
            return Err(Error::invalid("rotation classes must be in 0..=3"));
        }
        Ok(RotationAssignment(classes))
    }

    pub fn zeros(n: usize) -> Self {
        RotationAssignment(vec![0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn nonzero_count(&self) -> usize {
        self.0.iter().filter(|&&c| c != 0).count()
    }
}

/// Which pretext perturbation to sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PretextTask {
    Puzzle,
    Rotation,
    PuzzleRotation,
}

impl PretextTask {
    pub fn name(&self) -> &'static str {
        match self {
            PretextTask::Puzzle => "puzzle",
            PretextTask::Rotation => "rotation",
            PretextTask::PuzzleRotation => "puzzle_rotation",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "puzzle" => Ok(PretextTask::Puzzle),
            "rotation" => Ok(PretextTask::Rotation),
            "puzzle_rotation" | "puzzle-rotation" => Ok(PretextTask::PuzzleRotation),
            other => Err(Error::invalid(format!("unknown pretext task '{other}'"))),
        }
    }

    /// The classification head groups this task produces.
    pub fn head_tasks(&self) -> Vec<HeadTask> {
        match self {
            PretextTask::Puzzle => vec![HeadTask::Puzzle],
            PretextTask::Rotation => vec![HeadTask::Rotation],
            PretextTask::PuzzleRotation => vec![HeadTask::Puzzle, HeadTask::Rotation],
        }
    }
}

impl std::fmt::Display for PretextTask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One of the two per-region classification objectives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadTask {
    Puzzle,
    Rotation,
}

impl HeadTask {
    pub fn name(&self) -> &'static str {
        match self {
            HeadTask::Puzzle => "puzzle",
            HeadTask::Rotation => "rotation",
        }
    }

    /// Number of classes per region head for a grid of side `n`.
    pub fn classes(&self, n: usize) -> usize {
        match self {
            HeadTask::Puzzle => n * n,
            HeadTask::Rotation => 4,
        }
    }
}

impl std::fmt::Display for HeadTask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A perturbed image together with the per-region labels that describe the
/// perturbation. At least one label vector is always present.
#[derive(Debug, Clone)]
pub struct PretextSample {
    pub image: Image,
    pub puzzle_labels: Option<Vec<usize>>,
    pub rotation_labels: Option<Vec<u8>>,
}

impl PretextSample {
    pub fn validate(&self, grid: &TileGrid) -> Result<()> {
        let regions = grid.regions();
        if self.puzzle_labels.is_none() && self.rotation_labels.is_none() {
            return Err(Error::invalid("pretext sample carries no labels"));
        }
        if let Some(p) = &self.puzzle_labels {
            Permutation::new(p.clone())?;
            if p.len() != regions {
                return Err(Error::invalid("puzzle label length mismatch"));
            }
        }
        if let Some(r) = &self.rotation_labels {
            if r.len() != regions || r.iter().any(|&c| c > 3) {
                return Err(Error::invalid("rotation label out of range"));
            }
        }
        Ok(())
    }
}

/// Splits an image into n² tiles in row-major region order.
pub fn tile(img: &Image, grid: &TileGrid) -> Result<Vec<Image>> {
    let (h, w) = imageops::dims(img);
    if h < grid.n || w < grid.n {
        return Err(Error::invalid(format!(
            "{h}x{w} image cannot be tiled into {0}x{0} regions",
            grid.n
        )));
    }
    let mut tiles = Vec::with_capacity(grid.regions());
    for idx in 0..grid.regions() {
        let (top, left, th, tw) = grid.region_rect(idx, h, w);
        tiles.push(imageops::crop(img, top, left, th, tw)?);
    }
    Ok(tiles)
}

/// Reassembles tiles produced by [`tile`] back into one image. Exact inverse.
pub fn assemble(tiles: &[Image], grid: &TileGrid) -> Result<Image> {
    if tiles.len() != grid.regions() {
        return Err(Error::invalid(format!(
            "expected {} tiles, got {}",
            grid.regions(),
            tiles.len()
        )));
    }
    let channels = tiles[0].shape()[2];
    let h: usize = (0..grid.n)
        .map(|row| tiles[row * grid.n].shape()[0])
        .sum();
    let w: usize = (0..grid.n).map(|col| tiles[col].shape()[1]).sum();
    let mut out = Image::zeros((h, w, channels));
    for (idx, t) in tiles.iter().enumerate() {
        let (top, left, th, tw) = grid.region_rect(idx, h, w);
        if t.shape() != [th, tw, channels] {
            return Err(Error::invalid(format!(
                "tile {idx} has shape {:?}, expected {th}x{tw}x{channels}",
                t.shape()
            )));
        }
        imageops::paste(&mut out, &t.view(), top, left)?;
    }
    Ok(out)
}

/// Rotates one tile by `class` * 90 degrees counterclockwise. Non-square
/// tiles rotate inside their own bounding box and are resized back to the
/// original tile shape by nearest neighbor.
fn rotate_tile(tile: &Image, class: u8) -> Image {
    let (h, w) = imageops::dims(tile);
    let rotated = imageops::rot90(tile, class);
    if imageops::dims(&rotated) == (h, w) {
        rotated
    } else {
        imageops::resize_nearest(&rotated, h, w)
    }
}

/// Moves one tile into a destination slot, resizing only if the slot shape
/// differs (possible when the image side is not divisible by n).
fn fit_tile(tile: Image, th: usize, tw: usize) -> Image {
    if imageops::dims(&tile) == (th, tw) {
        tile
    } else {
        imageops::resize_nearest(&tile, th, tw)
    }
}

/// Shuffles tiles by `pi` (tile at `i` moves to region `pi(i)`), labeling
/// each output region with the original index of the tile it now holds.
pub fn apply_puzzle(img: &Image, grid: &TileGrid, pi: &Permutation) -> Result<PretextSample> {
    if pi.len() != grid.regions() {
        return Err(Error::invalid("permutation size does not match grid"));
    }
    let (h, w) = imageops::dims(img);
    let tiles = tile(img, grid)?;
    let inv = pi.inverse();
    let mut out = Image::zeros(img.raw_dim());
    let mut labels = Vec::with_capacity(grid.regions());
    for dest in 0..grid.regions() {
        let src = inv.apply(dest);
        let (top, left, th, tw) = grid.region_rect(dest, h, w);
        let placed = fit_tile(tiles[src].clone(), th, tw);
        imageops::paste(&mut out, &placed.view(), top, left)?;
        labels.push(src);
    }
    Ok(PretextSample {
        image: out,
        puzzle_labels: Some(labels),
        rotation_labels: None,
    })
}

/// Rotates each region independently by its assigned 90-degree class.
pub fn apply_rotation(
    img: &Image,
    grid: &TileGrid,
    rotations: &RotationAssignment,
) -> Result<PretextSample> {
    if rotations.len() != grid.regions() {
        return Err(Error::invalid("rotation assignment size does not match grid"));
    }
    let (h, w) = imageops::dims(img);
    let tiles = tile(img, grid)?;
    let mut out = Image::zeros(img.raw_dim());
    for (idx, t) in tiles.iter().enumerate() {
        let (top, left, _, _) = grid.region_rect(idx, h, w);
        let rotated = rotate_tile(t, rotations.as_slice()[idx]);
        imageops::paste(&mut out, &rotated.view(), top, left)?;
    }
    Ok(PretextSample {
        image: out,
        puzzle_labels: None,
        rotation_labels: Some(rotations.as_slice().to_vec()),
    })
}

/// Combined perturbation: tiles are rotated in place first (indexed by their
/// original region), then shuffled by `pi`. At most two rotation entries may
/// be nonzero; untouched tiles keep class 0. Both label vectors are anchored
/// to output regions, so `rotation_labels[j]` is the class of the tile that
/// ends up at region `j`.
pub fn apply_puzzle_rotation(
    img: &Image,
    grid: &TileGrid,
    pi: &Permutation,
    rotations: &RotationAssignment,
) -> Result<PretextSample> {
    if pi.len() != grid.regions() || rotations.len() != grid.regions() {
        return Err(Error::invalid("permutation/rotation size does not match grid"));
    }
    if rotations.nonzero_count() > 2 {
        return Err(Error::ConstraintViolation(format!(
            "puzzle-rotation allows at most 2 rotated tiles, got {}",
            rotations.nonzero_count()
        )));
    }
    let (h, w) = imageops::dims(img);
    let tiles = tile(img, grid)?;
    let inv = pi.inverse();
    let mut out = Image::zeros(img.raw_dim());
    let mut puzzle_labels = Vec::with_capacity(grid.regions());
    let mut rotation_labels = Vec::with_capacity(grid.regions());
    for dest in 0..grid.regions() {
        let src = inv.apply(dest);
        let class = rotations.as_slice()[src];
        let (top, left, th, tw) = grid.region_rect(dest, h, w);
        let placed = fit_tile(rotate_tile(&tiles[src], class), th, tw);
        imageops::paste(&mut out, &placed.view(), top, left)?;
        puzzle_labels.push(src);
        rotation_labels.push(class);
    }
    Ok(PretextSample {
        image: out,
        puzzle_labels: Some(puzzle_labels),
        rotation_labels: Some(rotation_labels),
    })
}

/// Draws the rotation assignment for the puzzle-rotation task: k in {0,1,2}
/// uniform, then k distinct regions, then nonzero classes from {1,2,3}.
pub fn sample_puzzle_rotation_assignment(
    regions: usize,
    rng: &mut ChaCha8Rng,
) -> RotationAssignment {
    let k = rng.random_range(0..=2usize);
    let mut idx: Vec<usize> = (0..regions).collect();
    idx.shuffle(rng);
    let mut classes = vec![0u8; regions];
    for &region in idx.iter().take(k) {
        classes[region] = rng.random_range(1..=3u8);
    }
    RotationAssignment(classes)
}

/// Samples one pretext perturbation of `img`. Deterministic given the rng
/// state: identical seeds produce bit-identical samples.
pub fn sample_pretext(
    rng: &mut ChaCha8Rng,
    task: PretextTask,
    grid: &TileGrid,
    img: &Image,
) -> Result<PretextSample> {
    let regions = grid.regions();
    match task {
        PretextTask::Puzzle => {
            let pi = Permutation::random(regions, rng);
            apply_puzzle(img, grid, &pi)
        }
        PretextTask::Rotation => {
            let classes: Vec<u8> = (0..regions).map(|_| rng.random_range(0..=3u8)).collect();
            apply_rotation(img, grid, &RotationAssignment(classes))
        }
        PretextTask::PuzzleRotation => {
            let pi = Permutation::random(regions, rng);
            let rot = sample_puzzle_rotation_assignment(regions, rng);
            apply_puzzle_rotation(img, grid, &pi, &rot)
        }
    }
}

/// Undoes a puzzle by moving region `j`'s tile back to `puzzle_labels[j]`.
/// Exact when all tiles share one shape (side divisible by n).
pub fn unshuffle(sample: &PretextSample, grid: &TileGrid) -> Result<Image> {
    let labels = sample
        .puzzle_labels
        .as_ref()
        .ok_or_else(|| Error::invalid("sample has no puzzle labels"))?;
    let (h, w) = imageops::dims(&sample.image);
    let tiles = tile(&sample.image, grid)?;
    let mut out = Image::zeros(sample.image.raw_dim());
    for (region, t) in tiles.iter().enumerate() {
        let orig = labels[region];
        let (top, left, th, tw) = grid.region_rect(orig, h, w);
        let placed = fit_tile(t.clone(), th, tw);
        imageops::paste(&mut out, &placed.view(), top, left)?;
    }
    Ok(out)
}
