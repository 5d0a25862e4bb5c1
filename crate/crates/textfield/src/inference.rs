//! Direction-field decoding: thresholding, parent-pointer superpixels,
//! representative grouping, balance filtering, and instance extraction.
//!
//! Candidates are pixels whose field magnitude clears `lambda_m`. Each
//! candidate points at its 8-neighbor in the binned field direction, which
//! chains pixels into trees whose roots sit near instance symmetry axes.
//! Roots dilate and merge into groups, groups without enough opposite-facing
//! roots are discarded as noise, and the survivors propagate their id to all
//! of their pixels before a per-instance closing fills interior holes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{magnitude_of, DirectionField};
use crate::grid::{BinaryMask, Grid, InstanceMap};
use crate::morph::{close_square, connected_components, dilate_square};

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("magnitude threshold {0} must lie in (0, 1)")]
    BadMagnitudeThreshold(f64),
    #[error("pairing ratio {0} must lie in [0, 1]")]
    BadPairingRatio(f64),
    #[error("kernel side {0} must be an odd positive integer")]
    BadKernel(u32),
    #[error("zero vector has no direction bin")]
    ZeroVector,
    #[error("candidate pixel ({0}, {1}) has a zero vector")]
    ZeroVectorCandidate(u32, u32),
    #[error("field is {0}x{1} but the candidate mask is {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("unknown preset {0:?}, expected ctw1500, totaltext, ic15, or td500")]
    UnknownPreset(String),
}

/// Post-processing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    /// Magnitude threshold selecting candidate text pixels, in (0, 1).
    pub lambda_m: f64,
    /// Minimum fraction of opposite-paired representatives a group needs to
    /// survive, in [0, 1].
    pub lambda_r: f64,
    /// Minimum area in pixels for an emitted instance.
    pub lambda_a: u64,
    /// Side of the square kernel dilating representatives into groups; odd.
    pub k1: u32,
    /// Side of the square kernel closing each instance's holes; odd.
    pub k2: u32,
    /// Side of the box average used to expose each instance's symmetry axis
    /// before thresholding; odd, 1 disables.
    ///
    /// Candidates must clear lambda_m both pointwise and after the average.
    /// Trained predictors regress low magnitudes along the axis on their
    /// own, but an exact field is unit-magnitude everywhere, and without the
    /// axis gap its roots degenerate to scattered mutual pairs that k1
    /// cannot reliably group.
    pub smooth_k: u32,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            lambda_m: 0.5,
            lambda_r: 0.6,
            lambda_a: 200,
            k1: 3,
            k2: 11,
            smooth_k: 5,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<(), InferenceError> {
        if !(self.lambda_m > 0.0 && self.lambda_m < 1.0) {
            return Err(InferenceError::BadMagnitudeThreshold(self.lambda_m));
        }
        if !(0.0..=1.0).contains(&self.lambda_r) {
            return Err(InferenceError::BadPairingRatio(self.lambda_r));
        }
        for k in [self.k1, self.k2, self.smooth_k] {
            if k == 0 || k % 2 == 0 {
                return Err(InferenceError::BadKernel(k));
            }
        }
        Ok(())
    }
}

/// Tuned magnitude thresholds for the common benchmark datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Ctw1500,
    TotalText,
    Ic15,
    Td500,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::Ctw1500,
        Preset::TotalText,
        Preset::Ic15,
        Preset::Td500,
    ];

    pub fn lambda_m(self) -> f64 {
        match self {
            Preset::Ctw1500 => 0.59,
            Preset::TotalText => 0.50,
            Preset::Ic15 => 0.69,
            Preset::Td500 => 0.64,
        }
    }

    /// The preset threshold over otherwise default parameters.
    pub fn config(self) -> InferenceConfig {
        InferenceConfig {
            lambda_m: self.lambda_m(),
            ..InferenceConfig::default()
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Ctw1500 => "ctw1500",
            Preset::TotalText => "totaltext",
            Preset::Ic15 => "ic15",
            Preset::Td500 => "td500",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = InferenceError;

    fn from_str(s: &str) -> Result<Self, InferenceError> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| InferenceError::UnknownPreset(s.to_string()))
    }
}

/// The eight neighbor offsets in bin order E, NE, N, NW, W, SW, S, SE.
/// y grows downward, so N is (0, -1) and the index of the opposite direction
/// is (bin + 4) mod 8.
pub const DIRECTION_OFFSETS: [(i32, i32); 8] = [
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// Bins a nonzero vector into the nearest of the eight neighbor directions
/// by cosine similarity. An exact tie on a sector boundary goes to the lower
/// bin index.
pub fn bin_direction(vx: f32, vy: f32) -> Result<u8, InferenceError> {
    if vx == 0.0 && vy == 0.0 {
        return Err(InferenceError::ZeroVector);
    }
    let x = vx as f64;
    let y = vy as f64;
    let mut best = 0u8;
    let mut best_dot = f64::NEG_INFINITY;
    for (i, &(ox, oy)) in DIRECTION_OFFSETS.iter().enumerate() {
        let scale = if ox != 0 && oy != 0 {
            std::f64::consts::FRAC_1_SQRT_2
        } else {
            1.0
        };
        let dot = (x * ox as f64 + y * oy as f64) * scale;
        if dot > best_dot {
            best_dot = dot;
            best = i as u8;
        }
    }
    Ok(best)
}

/// Candidate text pixels: magnitude at least `lambda_m`.
pub fn threshold_candidates(field: &DirectionField, lambda_m: f64) -> BinaryMask {
    let data = field
        .vx()
        .iter()
        .zip(field.vy())
        .map(|(&x, &y)| magnitude_of(x, y) as f64 >= lambda_m)
        .collect();
    BinaryMask::from_grid(Grid::from_vec(field.width(), field.height(), data))
}

/// Separable k x k box average of one component plane, with zero padding and
/// a fixed k*k divisor so magnitudes fade toward the border.
fn box_plane(plane: &[f32], w: usize, h: usize, k: usize) -> Vec<f64> {
    let r = k / 2;
    let mut rows = vec![0.0f64; w * h];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        let mut acc = 0.0f64;
        for &v in &row[..w.min(r)] {
            acc += v as f64;
        }
        for x in 0..w {
            if x + r < w {
                acc += row[x + r] as f64;
            }
            rows[y * w + x] = acc;
            if x >= r {
                acc -= row[x - r] as f64;
            }
        }
    }
    let mut out = vec![0.0f64; w * h];
    let scale = 1.0 / (k * k) as f64;
    for x in 0..w {
        let mut acc = 0.0f64;
        for y in 0..h.min(r) {
            acc += rows[y * w + x];
        }
        for y in 0..h {
            if y + r < h {
                acc += rows[(y + r) * w + x];
            }
            out[y * w + x] = acc * scale;
            if y >= r {
                acc -= rows[(y - r) * w + x];
            }
        }
    }
    out
}

/// Candidates gated by both the pointwise and the box-averaged magnitude.
///
/// Averaging cancels the opposite directions that meet at a symmetry axis,
/// so the axis band drops below lambda_m and the pixels flanking it become
/// roots; intersecting with the pointwise test keeps the band's removal from
/// bleeding candidacy outward.
fn smoothed_candidates(field: &DirectionField, lambda_m: f64, smooth_k: u32) -> BinaryMask {
    let mut c = threshold_candidates(field, lambda_m);
    if smooth_k <= 1 {
        return c;
    }
    let (w, h) = (field.width() as usize, field.height() as usize);
    let sx = box_plane(field.vx(), w, h, smooth_k as usize);
    let sy = box_plane(field.vy(), w, h, smooth_k as usize);
    for (keep, (ax, ay)) in c.data_mut().iter_mut().zip(sx.iter().zip(&sy)) {
        *keep = *keep && (ax * ax + ay * ay).sqrt() >= lambda_m;
    }
    c
}

/// A root pixel of one superpixel tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Representative {
    pub x: u32,
    pub y: u32,
    /// Direction bin of the root pixel.
    pub bin: u8,
    /// Bin of the demoted partner when this root came from collapsing a
    /// two-pixel mutual-pointing pair; always the opposite of `bin`.
    pub partner_bin: Option<u8>,
    /// Tree id in 1..=tree_count.
    pub tree: u32,
}

const PARENT_NONE: u32 = u32::MAX;
const PARENT_ROOT: u32 = u32::MAX - 1;

/// Parent-pointer structure over candidate pixels.
///
/// Acyclic by construction: every parent chain ends at a root, and each tree
/// holds exactly one root, its representative.
#[derive(Debug, Clone)]
pub struct SuperpixelForest {
    width: u32,
    height: u32,
    candidates: BinaryMask,
    parent: Grid<u32>,
    bins: Grid<u8>,
    labels: InstanceMap,
    tree_count: u32,
    representatives: Vec<Representative>,
}

impl SuperpixelForest {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn candidates(&self) -> &BinaryMask {
        &self.candidates
    }

    pub fn is_candidate(&self, x: u32, y: u32) -> bool {
        self.candidates.get(x, y)
    }

    pub fn is_root(&self, x: u32, y: u32) -> bool {
        self.parent.get(x, y) == PARENT_ROOT
    }

    /// Parent pixel of a candidate; None for roots and non-candidates.
    pub fn parent(&self, x: u32, y: u32) -> Option<(u32, u32)> {
        match self.parent.get(x, y) {
            PARENT_NONE | PARENT_ROOT => None,
            idx => Some((idx % self.width, idx / self.width)),
        }
    }

    /// Direction bin of a candidate; None off-support.
    pub fn bin(&self, x: u32, y: u32) -> Option<u8> {
        let b = self.bins.get(x, y);
        (b != u8::MAX).then_some(b)
    }

    /// Tree id of a candidate in 1..=tree_count, 0 off-support.
    pub fn tree_label(&self, x: u32, y: u32) -> u32 {
        self.labels.get(x, y)
    }

    /// Per-pixel tree ids.
    pub fn labels(&self) -> &InstanceMap {
        &self.labels
    }

    pub fn tree_count(&self) -> u32 {
        self.tree_count
    }

    /// All roots in scan order.
    pub fn representatives(&self) -> &[Representative] {
        &self.representatives
    }
}

struct Dsu {
    parent: Vec<u32>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu {
            parent: (0..n as u32).collect(),
        }
    }

    fn find(&mut self, mut i: u32) -> u32 {
        while self.parent[i as usize] != i {
            let up = self.parent[self.parent[i as usize] as usize];
            self.parent[i as usize] = up;
            i = up;
        }
        i
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb) as usize] = ra.min(rb);
        }
    }
}

/// Builds the parent-pointer forest over candidate pixels.
///
/// Each candidate points at its 8-neighbor in its binned direction; pointing
/// outside the domain or at a non-candidate makes it a root. The raw pointer
/// graph can contain cycles (most commonly two pixels pointing at each
/// other across a symmetry axis), and every cycle is broken by promoting its
/// scan-order-first member to root; for a two-pixel cycle that member also
/// records the demoted partner's bin. Trees are labeled 1..=tree_count in
/// scan order of each tree's first pixel.
pub fn build_forest(
    field: &DirectionField,
    candidates: &BinaryMask,
) -> Result<SuperpixelForest, InferenceError> {
    let (w, h) = (field.width(), field.height());
    if (w, h) != (candidates.width(), candidates.height()) {
        return Err(InferenceError::DimensionMismatch(
            w,
            h,
            candidates.width(),
            candidates.height(),
        ));
    }
    let len = w as usize * h as usize;
    assert!(
        (len as u64) < PARENT_ROOT as u64,
        "image too large for u32 pixel indices"
    );

    let mut parent = Grid::new(w, h, PARENT_NONE);
    let mut bins = Grid::new(w, h, u8::MAX);
    for y in 0..h {
        for x in 0..w {
            if !candidates.get(x, y) {
                continue;
            }
            let (vx, vy) = field.get(x, y);
            let bin =
                bin_direction(vx, vy).map_err(|_| InferenceError::ZeroVectorCandidate(x, y))?;
            bins.set(x, y, bin);
            let (ox, oy) = DIRECTION_OFFSETS[bin as usize];
            let nx = x as i64 + ox as i64;
            let ny = y as i64 + oy as i64;
            let link = if candidates.in_bounds(nx, ny) && candidates.get(nx as u32, ny as u32) {
                ny as u32 * w + nx as u32
            } else {
                PARENT_ROOT
            };
            parent.set(x, y, link);
        }
    }

    // Break cycles: walk each unvisited chain, and when it bites its own
    // tail promote the cycle's smallest index (scan-order-first pixel) to
    // root. Two-pixel cycles remember the partner bin for the balance
    // filter, since the demoted pixel still faces the opposite way.
    const WHITE: u8 = 0;
    const ON_PATH: u8 = 1;
    const DONE: u8 = 2;
    let mut color = vec![WHITE; len];
    let mut path: Vec<u32> = Vec::new();
    let mut partner_of: std::collections::HashMap<u32, u8> = std::collections::HashMap::new();
    for start in 0..len as u32 {
        if parent.data()[start as usize] == PARENT_NONE || color[start as usize] != WHITE {
            continue;
        }
        path.clear();
        let mut cur = start;
        loop {
            match color[cur as usize] {
                WHITE => {
                    color[cur as usize] = ON_PATH;
                    path.push(cur);
                    let link = parent.data()[cur as usize];
                    if link == PARENT_ROOT {
                        break;
                    }
                    cur = link;
                }
                ON_PATH => {
                    // Cycle: the suffix of the path from cur onward.
                    let at = path
                        .iter()
                        .rposition(|&p| p == cur)
                        .expect("on-path pixel is on the path");
                    let cycle = &path[at..];
                    let root = *cycle.iter().min().expect("cycle is nonempty");
                    parent.data_mut()[root as usize] = PARENT_ROOT;
                    if cycle.len() == 2 {
                        let other = cycle[if cycle[0] == root { 1 } else { 0 }];
                        let ob = bins.data()[other as usize];
                        partner_of.insert(root, ob);
                    }
                    break;
                }
                _ => break,
            }
        }
        for &p in &path {
            color[p as usize] = DONE;
        }
    }

    // Tree labels: union each candidate with its parent, then number the
    // component roots in scan order of first contact.
    let mut dsu = Dsu::new(len);
    for idx in 0..len as u32 {
        let link = parent.data()[idx as usize];
        if link != PARENT_NONE && link != PARENT_ROOT {
            dsu.union(idx, link);
        }
    }
    let mut labels = InstanceMap::new(w, h);
    let mut label_of_root = vec![0u32; len];
    let mut tree_count = 0u32;
    for idx in 0..len as u32 {
        if parent.data()[idx as usize] == PARENT_NONE {
            continue;
        }
        let root = dsu.find(idx);
        if label_of_root[root as usize] == 0 {
            tree_count += 1;
            label_of_root[root as usize] = tree_count;
        }
        labels.set(idx % w, idx / w, label_of_root[root as usize]);
    }

    let mut representatives = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if parent.get(x, y) != PARENT_ROOT {
                continue;
            }
            let idx = y * w + x;
            representatives.push(Representative {
                x,
                y,
                bin: bins.get(x, y),
                partner_bin: partner_of.get(&idx).copied(),
                tree: labels.get(x, y),
            });
        }
    }
    debug_assert_eq!(
        representatives.len() as u32,
        tree_count,
        "every tree has exactly one root"
    );

    Ok(SuperpixelForest {
        width: w,
        height: h,
        candidates: candidates.clone(),
        parent,
        bins,
        labels,
        tree_count,
        representatives,
    })
}

/// Representatives dilated into connected groups.
#[derive(Debug, Clone)]
pub struct RepGroups {
    group_map: InstanceMap,
    group_count: u32,
    group_of_rep: Vec<u32>,
}

impl RepGroups {
    /// Component labels over the dilated representative mask, 0 elsewhere.
    pub fn group_map(&self) -> &InstanceMap {
        &self.group_map
    }

    pub fn group_count(&self) -> u32 {
        self.group_count
    }

    /// Group id of each representative, parallel to
    /// [`SuperpixelForest::representatives`].
    pub fn group_of_rep(&self) -> &[u32] {
        &self.group_of_rep
    }
}

/// Dilates the representative pixels by a k1 x k1 square and labels the
/// result with 8-connected components; representatives whose dilated squares
/// touch end up in one group. A representative that stands for a collapsed
/// mutual pair occupies both of the pair's pixels, mirroring how the balance
/// filter counts both of its bins.
pub fn group_representatives(forest: &SuperpixelForest, k1: u32) -> RepGroups {
    let mut reps = BinaryMask::new(forest.width(), forest.height());
    for r in forest.representatives() {
        reps.set(r.x, r.y, true);
        if r.partner_bin.is_some() {
            let (ox, oy) = DIRECTION_OFFSETS[r.bin as usize];
            let px = r.x as i64 + ox as i64;
            let py = r.y as i64 + oy as i64;
            // The demoted partner is the root's binned neighbor, in C by
            // construction and therefore in bounds.
            reps.set(px as u32, py as u32, true);
        }
    }
    let dilated = dilate_square(&reps, k1);
    let (group_map, group_count) = connected_components(&dilated);
    let group_of_rep = forest
        .representatives()
        .iter()
        .map(|r| group_map.get(r.x, r.y))
        .collect();
    RepGroups {
        group_map,
        group_count,
        group_of_rep,
    }
}

/// Survival flags indexed by group id (entry 0 unused).
///
/// A group member with bin b pairs greedily with a member facing (b+4) mod 8,
/// so each opposite-bin pair contributes twice the smaller population. A
/// collapsed mutual pair contributes both of its bins: the demoted pixel
/// still faces opposite to its root and evidences the same symmetry. Groups
/// survive when paired / total >= lambda_r.
pub fn filter_unbalanced(
    groups: &RepGroups,
    forest: &SuperpixelForest,
    lambda_r: f64,
) -> Vec<bool> {
    let g = groups.group_count() as usize;
    let mut counts = vec![[0u64; 8]; g + 1];
    let mut sizes = vec![0u64; g + 1];
    for (rep, &gid) in forest.representatives().iter().zip(groups.group_of_rep()) {
        counts[gid as usize][rep.bin as usize] += 1;
        sizes[gid as usize] += 1;
        if let Some(pb) = rep.partner_bin {
            counts[gid as usize][pb as usize] += 1;
            sizes[gid as usize] += 1;
        }
    }
    let mut survive = vec![false; g + 1];
    for gid in 1..=g {
        let c = &counts[gid];
        let paired: u64 = (0..4).map(|b| 2 * c[b].min(c[b + 4])).sum();
        survive[gid] = sizes[gid] > 0 && paired as f64 / sizes[gid] as f64 >= lambda_r;
    }
    survive
}

/// Bounding boxes of each nonzero label: label -> (x0, y0, x1, y1).
fn label_bboxes(map: &InstanceMap) -> std::collections::BTreeMap<u32, (u32, u32, u32, u32)> {
    let mut boxes = std::collections::BTreeMap::new();
    for y in 0..map.height() {
        for x in 0..map.width() {
            let label = map.get(x, y);
            if label == 0 {
                continue;
            }
            boxes
                .entry(label)
                .and_modify(|b: &mut (u32, u32, u32, u32)| {
                    b.0 = b.0.min(x);
                    b.1 = b.1.min(y);
                    b.2 = b.2.max(x);
                    b.3 = b.3.max(y);
                })
                .or_insert((x, y, x, y));
        }
    }
    boxes
}

/// Full decoding pipeline.
///
/// Threshold, forest, grouping, balance filter, label propagation to every
/// candidate of a surviving group, per-instance closing (each instance on
/// its own crop, so closings never weld neighbors; lower group id wins where
/// closed instances collide), minimum-area filter, and a final scan-order
/// relabel to 1..=K. A field with no candidates yields an empty map.
pub fn detect(
    field: &DirectionField,
    config: &InferenceConfig,
) -> Result<InstanceMap, InferenceError> {
    config.validate()?;
    let (w, h) = (field.width(), field.height());
    let candidates = smoothed_candidates(field, config.lambda_m, config.smooth_k);
    if candidates.count_true() == 0 {
        return Ok(InstanceMap::new(w, h));
    }
    let forest = build_forest(field, &candidates)?;
    let groups = group_representatives(&forest, config.k1);
    let survive = filter_unbalanced(&groups, &forest, config.lambda_r);

    let mut group_of_tree = vec![0u32; forest.tree_count() as usize + 1];
    for (rep, &gid) in forest.representatives().iter().zip(groups.group_of_rep()) {
        group_of_tree[rep.tree as usize] = gid;
    }
    let mut pre = InstanceMap::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let tree = forest.tree_label(x, y);
            if tree == 0 {
                continue;
            }
            let gid = group_of_tree[tree as usize];
            if survive[gid as usize] {
                pre.set(x, y, gid);
            }
        }
    }

    // Close each instance on its own padded crop and recomposite.
    let r2 = config.k2 / 2;
    let mut out = InstanceMap::new(w, h);
    for (&gid, &(x0, y0, x1, y1)) in &label_bboxes(&pre) {
        let cx0 = x0.saturating_sub(r2);
        let cy0 = y0.saturating_sub(r2);
        let cx1 = (x1 + r2).min(w - 1);
        let cy1 = (y1 + r2).min(h - 1);
        let (cw, ch) = (cx1 - cx0 + 1, cy1 - cy0 + 1);
        let mut crop = BinaryMask::new(cw, ch);
        for y in y0..=y1 {
            for x in x0..=x1 {
                if pre.get(x, y) == gid {
                    crop.set(x - cx0, y - cy0, true);
                }
            }
        }
        let closed = close_square(&crop, config.k2);
        for cy in 0..ch {
            for cx in 0..cw {
                if closed.get(cx, cy) && out.get(cx0 + cx, cy0 + cy) == 0 {
                    out.set(cx0 + cx, cy0 + cy, gid);
                }
            }
        }
    }

    // Drop small instances, then renumber the survivors in scan order.
    let drop: std::collections::BTreeSet<u32> = out
        .label_areas()
        .into_iter()
        .filter(|&(_, area)| area < config.lambda_a)
        .map(|(label, _)| label)
        .collect();
    let mut remap = vec![0u32; groups.group_count() as usize + 1];
    let mut next = 0u32;
    let mut relabeled = InstanceMap::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let v = out.get(x, y);
            if v == 0 || drop.contains(&v) {
                continue;
            }
            if remap[v as usize] == 0 {
                next += 1;
                remap[v as usize] = next;
            }
            relabeled.set(x, y, remap[v as usize]);
        }
    }
    Ok(relabeled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::generate_scene_field;
    use crate::geometry::{mask_iou, rasterize, Polygon, PolygonScene};
    use proptest::prelude::*;

    fn bar_scene(w: u32, h: u32, bars: &[(f64, f64, f64, f64)]) -> PolygonScene {
        let polys = bars
            .iter()
            .map(|&(x0, y0, x1, y1)| {
                Polygon::new(vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1)]).unwrap()
            })
            .collect();
        PolygonScene::new(w, h, polys).unwrap()
    }

    #[test]
    fn config_validation_catches_bad_values() {
        let mut c = InferenceConfig::default();
        assert!(c.validate().is_ok());
        c.lambda_m = 0.0;
        assert!(matches!(
            c.validate(),
            Err(InferenceError::BadMagnitudeThreshold(_))
        ));
        c = InferenceConfig {
            k1: 4,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(InferenceError::BadKernel(4))));
        c = InferenceConfig {
            lambda_r: 1.5,
            ..Default::default()
        };
        assert!(matches!(
            c.validate(),
            Err(InferenceError::BadPairingRatio(_))
        ));
        c = InferenceConfig {
            smooth_k: 0,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(InferenceError::BadKernel(0))));
        c = InferenceConfig {
            smooth_k: 1,
            ..Default::default()
        };
        assert!(c.validate().is_ok());
    }

    #[test]
    fn presets_carry_their_thresholds() {
        assert_eq!(Preset::Ctw1500.config().lambda_m, 0.59);
        assert_eq!(Preset::TotalText.config().lambda_m, 0.50);
        assert_eq!(Preset::Ic15.config().lambda_m, 0.69);
        assert_eq!(Preset::Td500.config().lambda_m, 0.64);
        assert_eq!("td500".parse::<Preset>().unwrap(), Preset::Td500);
        assert!("imagenet".parse::<Preset>().is_err());
    }

    #[test]
    fn threshold_examples() {
        let zero = DirectionField::new(4, 4);
        assert_eq!(threshold_candidates(&zero, 0.5).count_true(), 0);

        let mut edge = DirectionField::new(3, 1);
        edge.set(0, 0, 0.3, 0.4);
        let c = threshold_candidates(&edge, 0.5);
        assert!(c.get(0, 0), "magnitude exactly 0.5 passes the >= test");

        let scene = bar_scene(40, 20, &[(4.0, 4.0, 36.0, 14.0)]);
        let (mask, labels) = rasterize(&scene);
        let field = generate_scene_field(&labels);
        assert_eq!(threshold_candidates(&field, 0.5), mask);
    }

    #[test]
    fn bins_follow_the_offsets() {
        assert_eq!(bin_direction(1.0, 0.0).unwrap(), 0);
        assert_eq!(DIRECTION_OFFSETS[0], (1, 0));
        let d = bin_direction(0.7, 0.7).unwrap();
        assert_eq!(DIRECTION_OFFSETS[d as usize], (1, 1));
        assert_eq!(bin_direction(0.9, 0.1).unwrap(), 0);
        assert_eq!(bin_direction(0.0, -1.0).unwrap(), 2);
        assert!(bin_direction(0.0, 0.0).is_err());
    }

    #[test]
    fn bins_match_an_angle_reference() {
        // Sector index by rounded angle, avoiding exact boundaries.
        for k in 0..720 {
            let theta = (k as f64 + 0.31) * std::f64::consts::PI / 360.0;
            let (vx, vy) = (theta.cos() as f32, theta.sin() as f32);
            let eighth = (theta / (std::f64::consts::PI / 4.0)).round() as i64 % 8;
            let offset = match eighth {
                0 => (1, 0),
                1 => (1, 1),
                2 => (0, 1),
                3 => (-1, 1),
                4 => (-1, 0),
                5 => (-1, -1),
                6 => (0, -1),
                _ => (1, -1),
            };
            let bin = bin_direction(vx, vy).unwrap();
            assert_eq!(
                DIRECTION_OFFSETS[bin as usize],
                offset,
                "angle {} degrees",
                theta.to_degrees()
            );
        }
    }

    #[test]
    fn lone_candidate_becomes_its_own_tree() {
        let mut field = DirectionField::new(5, 5);
        field.set(2, 2, 1.0, 0.0);
        let c = threshold_candidates(&field, 0.5);
        let forest = build_forest(&field, &c).unwrap();
        assert_eq!(forest.tree_count(), 1);
        assert!(forest.is_root(2, 2));
        assert_eq!(forest.parent(2, 2), None);
        assert_eq!(forest.representatives().len(), 1);
        assert_eq!(forest.representatives()[0].partner_bin, None);
    }

    #[test]
    fn mutual_pair_collapses_to_one_scan_order_root() {
        let mut field = DirectionField::new(4, 1);
        field.set(1, 0, 1.0, 0.0); // points east at (2, 0)
        field.set(2, 0, -1.0, 0.0); // points west at (1, 0)
        let c = threshold_candidates(&field, 0.5);
        let forest = build_forest(&field, &c).unwrap();
        assert_eq!(forest.tree_count(), 1);
        assert!(forest.is_root(1, 0));
        assert!(!forest.is_root(2, 0));
        assert_eq!(forest.parent(2, 0), Some((1, 0)));
        let rep = forest.representatives()[0];
        assert_eq!((rep.x, rep.y, rep.bin), (1, 0, 0));
        assert_eq!(rep.partner_bin, Some(4));
    }

    #[test]
    fn longer_cycles_also_break_at_the_first_pixel() {
        // Three pixels chasing each other: (0,0) -> (1,0) -> (0,1) -> (0,0).
        let mut field = DirectionField::new(2, 2);
        field.set(0, 0, 1.0, 0.0); // E to (1,0)
        field.set(1, 0, -0.7, 0.7); // SW to (0,1)
        field.set(0, 1, 0.0, -1.0); // N to (0,0)
        let c = threshold_candidates(&field, 0.5);
        let forest = build_forest(&field, &c).unwrap();
        assert_eq!(forest.tree_count(), 1);
        assert!(forest.is_root(0, 0));
        assert_eq!(forest.representatives().len(), 1);
        assert_eq!(forest.representatives()[0].partner_bin, None);
    }

    #[test]
    fn strip_roots_hug_the_symmetry_axis() {
        let scene = bar_scene(30, 17, &[(2.0, 4.0, 28.0, 13.0)]);
        let (_, labels) = rasterize(&scene);
        let field = generate_scene_field(&labels);
        let c = threshold_candidates(&field, 0.5);
        let forest = build_forest(&field, &c).unwrap();
        assert!(forest.tree_count() > 0);
        // Bar rows are 4..=12, so the axis is y = 8; every root sits within
        // one row of it, and above-axis pixels point down while below-axis
        // pixels point up.
        for rep in forest.representatives() {
            assert!(
                (rep.y as i64 - 8).abs() <= 1,
                "root ({}, {}) far from the axis",
                rep.x,
                rep.y
            );
        }
        assert_eq!(forest.parent(10, 5), Some((10, 6)));
        assert_eq!(forest.parent(10, 11), Some((10, 10)));
    }

    /// Lone roots at the given pixels, each pointing north out of the
    /// candidate set.
    fn lone_roots(w: u32, h: u32, at: &[(u32, u32)]) -> SuperpixelForest {
        let mut field = DirectionField::new(w, h);
        for &(x, y) in at {
            field.set(x, y, 0.0, -1.0);
        }
        let c = threshold_candidates(&field, 0.5);
        build_forest(&field, &c).unwrap()
    }

    #[test]
    fn grouping_bridges_by_dilation_distance() {
        let forest = lone_roots(8, 3, &[(1, 1), (2, 1)]);
        assert_eq!(forest.representatives().len(), 2);
        let g = group_representatives(&forest, 3);
        assert_eq!(g.group_count(), 1, "Chebyshev distance 1 merges under k1=3");

        let forest = lone_roots(8, 3, &[(1, 1), (5, 1)]);
        assert_eq!(forest.representatives().len(), 2);
        let g = group_representatives(&forest, 3);
        assert_eq!(g.group_count(), 2, "distance 4 stays separate under k1=3");
        assert_eq!(g.group_of_rep(), &[1, 2]);

        let empty_forest =
            build_forest(&DirectionField::new(4, 4), &BinaryMask::new(4, 4)).unwrap();
        assert_eq!(group_representatives(&empty_forest, 3).group_count(), 0);
    }

    #[test]
    fn collapsed_pairs_occupy_both_pixels_when_grouping() {
        // Mutual pair with its root at x=1: the demoted partner at x=2 stays
        // in the grouping mask, so a lone root at x=5 (Chebyshev 4 from the
        // root but 3 from the partner) joins the pair's group.
        let mut field = DirectionField::new(8, 3);
        field.set(1, 1, 1.0, 0.0);
        field.set(2, 1, -1.0, 0.0);
        field.set(5, 1, 0.0, -1.0);
        let c = threshold_candidates(&field, 0.5);
        let forest = build_forest(&field, &c).unwrap();
        assert_eq!(forest.representatives().len(), 2);
        let g = group_representatives(&forest, 3);
        assert_eq!(g.group_count(), 1);
    }

    /// Builds a forest whose representatives carry exactly the given bins,
    /// by lining up candidates that all point at non-candidates.
    fn forest_with_bins(bins: &[u8]) -> (DirectionField, BinaryMask) {
        let w = (bins.len() as u32) * 2;
        let mut field = DirectionField::new(w, 3);
        let mut cands = BinaryMask::new(w, 3);
        for (i, &b) in bins.iter().enumerate() {
            let (ox, oy) = DIRECTION_OFFSETS[b as usize];
            let norm = ((ox * ox + oy * oy) as f64).sqrt();
            field.set(
                i as u32 * 2,
                1,
                (ox as f64 / norm) as f32,
                (oy as f64 / norm) as f32,
            );
            cands.set(i as u32 * 2, 1, true);
        }
        (field, cands)
    }

    #[test]
    fn balance_filter_follows_the_greedy_pair_count() {
        // E x3 and W x3: perfectly opposed, ratio 1.
        let (field, cands) = forest_with_bins(&[0, 4, 0, 4, 0, 4]);
        let forest = build_forest(&field, &cands).unwrap();
        let groups = group_representatives(&forest, 11); // wide enough to fuse
        assert_eq!(groups.group_count(), 1);
        let s = filter_unbalanced(&groups, &forest, 0.6);
        assert!(s[1]);

        // E x10: nothing opposes, ratio 0.
        let (field, cands) = forest_with_bins(&[0; 10]);
        let forest = build_forest(&field, &cands).unwrap();
        let groups = group_representatives(&forest, 11);
        let s = filter_unbalanced(&groups, &forest, 0.6);
        assert!(!s[1]);

        // N x2, S x1, E x1: paired 2 of 4, ratio 0.5 < 0.6.
        let (field, cands) = forest_with_bins(&[2, 2, 6, 0]);
        let forest = build_forest(&field, &cands).unwrap();
        let groups = group_representatives(&forest, 11);
        assert_eq!(groups.group_count(), 1);
        let s = filter_unbalanced(&groups, &forest, 0.6);
        assert!(!s[1]);
        // The same group passes a laxer ratio.
        assert!(filter_unbalanced(&groups, &forest, 0.5)[1]);
    }

    #[test]
    fn detect_round_trips_two_parallel_bars() {
        // Two 60x12 bars separated by a 3 pixel gap.
        let scene = bar_scene(70, 35, &[(4.0, 4.0, 64.0, 16.0), (4.0, 19.0, 64.0, 31.0)]);
        let (_, gt_labels) = rasterize(&scene);
        let field = generate_scene_field(&gt_labels);
        let config = InferenceConfig {
            lambda_m: 0.3,
            ..Default::default()
        };
        let dets = detect(&field, &config).unwrap();
        let areas = dets.label_areas();
        assert_eq!(areas.len(), 2, "both bars recovered, none merged");
        for (det_label, _) in &areas {
            let mut det_mask = BinaryMask::new(70, 35);
            let mut best = 0.0f64;
            for y in 0..35 {
                for x in 0..70 {
                    det_mask.set(x, y, dets.get(x, y) == *det_label);
                }
            }
            for gt in 1..=2u32 {
                let mut gt_mask = BinaryMask::new(70, 35);
                for y in 0..35 {
                    for x in 0..70 {
                        gt_mask.set(x, y, gt_labels.get(x, y) == gt);
                    }
                }
                best = best.max(mask_iou(&det_mask, &gt_mask).unwrap());
            }
            assert!(best >= 0.90, "instance {det_label} IOU {best}");
        }
    }

    #[test]
    fn zero_field_and_small_blobs_yield_nothing() {
        let config = InferenceConfig {
            lambda_m: 0.3,
            ..Default::default()
        };
        let empty = detect(&DirectionField::new(64, 64), &config).unwrap();
        assert_eq!(empty.count_nonzero(), 0);

        // A 15x10 blob has area 150 < 200 and is filtered out.
        let scene = bar_scene(40, 30, &[(10.0, 10.0, 25.0, 20.0)]);
        let (_, labels) = rasterize(&scene);
        let field = generate_scene_field(&labels);
        let dets = detect(&field, &config).unwrap();
        assert_eq!(dets.count_nonzero(), 0);
        // The same blob passes with a smaller area floor.
        let lax = InferenceConfig {
            lambda_a: 100,
            ..config
        };
        assert_eq!(detect(&field, &lax).unwrap().label_areas().len(), 1);
    }

    #[test]
    fn labels_come_out_in_scan_order() {
        let scene = bar_scene(80, 60, &[(40.0, 30.0, 76.0, 44.0), (4.0, 4.0, 40.0, 18.0)]);
        let (_, labels) = rasterize(&scene);
        let field = generate_scene_field(&labels);
        let config = InferenceConfig {
            lambda_m: 0.3,
            ..Default::default()
        };
        let dets = detect(&field, &config).unwrap();
        assert_eq!(dets.label_areas().len(), 2);
        // The second annotation sits higher in the image, so it is labeled 1.
        assert_eq!(dets.get(20, 10), 1);
        assert_eq!(dets.get(60, 37), 2);
    }

    fn random_field(seed: u64, w: u32, h: u32, density: f64) -> DirectionField {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut field = DirectionField::new(w, h);
        for y in 0..h {
            for x in 0..w {
                if rng.random::<f64>() < density {
                    let angle = rng.random::<f64>() * std::f64::consts::TAU;
                    let mag = 0.2 + 0.8 * rng.random::<f64>();
                    field.set(x, y, (mag * angle.cos()) as f32, (mag * angle.sin()) as f32);
                }
            }
        }
        field
    }

    #[test]
    fn parent_chains_terminate_on_random_fields() {
        for seed in 0..60 {
            let field = random_field(seed, 24, 16, 0.7);
            let c = threshold_candidates(&field, 0.3);
            let forest = build_forest(&field, &c).unwrap();
            let bound = c.count_true() as usize + 1;
            for y in 0..16 {
                for x in 0..24 {
                    if !forest.is_candidate(x, y) {
                        continue;
                    }
                    let mut cur = (x, y);
                    let mut steps = 0;
                    while let Some(next) = forest.parent(cur.0, cur.1) {
                        // Tree membership is constant along the chain.
                        assert_eq!(forest.tree_label(next.0, next.1), forest.tree_label(x, y));
                        cur = next;
                        steps += 1;
                        assert!(steps <= bound, "cycle from ({x}, {y}) seed {seed}");
                    }
                    assert!(forest.is_root(cur.0, cur.1));
                }
            }
        }
    }

    proptest! {
        #[test]
        fn thresholding_is_monotone(seed in 0u64..500, lo in 0.1f64..0.9, delta in 0.0f64..0.5) {
            let field = random_field(seed, 12, 9, 0.6);
            let loose = threshold_candidates(&field, lo);
            let tight = threshold_candidates(&field, lo + delta);
            for y in 0..9 {
                for x in 0..12 {
                    prop_assert!(!tight.get(x, y) || loose.get(x, y));
                }
            }
        }

        #[test]
        fn small_rotations_move_bins_at_most_one_step(seed in 0u64..200) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let angle = rng.random::<f64>() * std::f64::consts::TAU;
            let jitter = (rng.random::<f64>() * 2.0 - 1.0) * 10.0f64.to_radians();
            let before = bin_direction(angle.cos() as f32, angle.sin() as f32).unwrap() as i32;
            let after = bin_direction(
                (angle + jitter).cos() as f32,
                (angle + jitter).sin() as f32,
            )
            .unwrap() as i32;
            let diff = (before - after).rem_euclid(8).min((after - before).rem_euclid(8));
            prop_assert!(diff <= 1, "bin moved {diff} steps");
        }
    }
}
