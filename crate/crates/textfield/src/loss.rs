//! Pixel weighting, field regression loss, and hard-negative selection.
//!
//! The training loss is a weighted sum of per-pixel Euclidean distances
//! between ground-truth and predicted vectors. Weights balance instances:
//! every text instance contributes the same total weight mass no matter its
//! area, and background weighs 1. Hard-negative selection keeps only the
//! highest-loss background pixels, budgeted at gamma times the text area.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::field::DirectionField;
use crate::grid::{BinaryMask, Grid, InstanceMap};

#[derive(Debug, Error)]
pub enum LossError {
    #[error("dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("gamma must be finite and non-negative, got {0}")]
    BadGamma(f64),
}

fn check_dims<A, B>(a: (u32, u32), b: (u32, u32), _ctx_a: &A, _ctx_b: &B) -> Result<(), LossError> {
    if a != b {
        return Err(LossError::DimensionMismatch(a.0, a.1, b.0, b.1));
    }
    Ok(())
}

/// Per-pixel loss weights: 1 on background, instance-balanced on text.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    grid: Grid<f64>,
}

impl WeightMap {
    /// Wraps an explicit weight grid; values must be non-negative.
    pub fn from_grid(grid: Grid<f64>) -> Self {
        debug_assert!(grid.data().iter().all(|&w| w >= 0.0));
        WeightMap { grid }
    }

    /// All-ones map, the unweighted baseline.
    pub fn ones(width: u32, height: u32) -> Self {
        WeightMap {
            grid: Grid::new(width, height, 1.0),
        }
    }

    pub fn width(&self) -> u32 {
        self.grid.width()
    }

    pub fn height(&self) -> u32 {
        self.grid.height()
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.grid.get(x, y)
    }

    pub fn data(&self) -> &[f64] {
        self.grid.data()
    }
}

/// Instance-balanced weights: text pixels of instance T weigh
/// total_text_area / (instance_count * area(T)), background weighs 1.
/// Labels with zero pixels do not exist in the map and cannot skew the count.
pub fn compute_weights(labels: &InstanceMap) -> WeightMap {
    let areas = labels.label_areas();
    let n = areas.len() as f64;
    let total: u64 = areas.iter().map(|&(_, a)| a).sum();
    let per_label: BTreeMap<u32, f64> = areas
        .iter()
        .map(|&(label, area)| (label, total as f64 / (n * area as f64)))
        .collect();
    let data = labels
        .data()
        .iter()
        .map(|&label| if label == 0 { 1.0 } else { per_label[&label] })
        .collect();
    WeightMap {
        grid: Grid::from_vec(labels.width(), labels.height(), data),
    }
}

/// Per-pixel Euclidean distance between the two fields' vectors.
pub fn per_pixel_loss(gt: &DirectionField, pred: &DirectionField) -> Result<Grid<f64>, LossError> {
    check_dims(
        (gt.width(), gt.height()),
        (pred.width(), pred.height()),
        gt,
        pred,
    )?;
    let data = gt
        .vx()
        .iter()
        .zip(gt.vy())
        .zip(pred.vx().iter().zip(pred.vy()))
        .map(|((&gx, &gy), (&px, &py))| {
            let dx = gx as f64 - px as f64;
            let dy = gy as f64 - py as f64;
            (dx * dx + dy * dy).sqrt()
        })
        .collect();
    Ok(Grid::from_vec(gt.width(), gt.height(), data))
}

/// The background pixels retained for the loss, in scan order.
#[derive(Debug, Clone, PartialEq)]
pub struct HardNegativeSelection {
    kept: Vec<(u32, u32)>,
    gamma: f64,
}

impl HardNegativeSelection {
    /// Wraps an explicit kept set; pixels are reordered into scan order.
    pub fn from_kept(mut kept: Vec<(u32, u32)>, gamma: f64) -> Self {
        kept.sort_unstable_by_key(|&(x, y)| (y, x));
        HardNegativeSelection { kept, gamma }
    }

    pub fn kept(&self) -> &[(u32, u32)] {
        &self.kept
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn len(&self) -> usize {
        self.kept.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept.is_empty()
    }

    /// Kept pixels painted onto a canvas.
    pub fn to_mask(&self, width: u32, height: u32) -> BinaryMask {
        let mut mask = BinaryMask::new(width, height);
        for &(x, y) in &self.kept {
            mask.set(x, y, true);
        }
        mask
    }
}

/// Keeps the floor(gamma * text_area) background pixels with the largest
/// loss, or all of them if fewer exist. Ties at the cut break by scan order.
pub fn select_hard_negatives(
    labels: &InstanceMap,
    loss_map: &Grid<f64>,
    gamma: f64,
) -> Result<HardNegativeSelection, LossError> {
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(LossError::BadGamma(gamma));
    }
    check_dims(
        (labels.width(), labels.height()),
        (loss_map.width(), loss_map.height()),
        labels,
        loss_map,
    )?;
    let text_area = labels.count_nonzero();
    let budget = (gamma * text_area as f64).floor() as usize;
    let mut candidates: Vec<(u32, u32)> = Vec::new();
    for y in 0..labels.height() {
        for x in 0..labels.width() {
            if labels.get(x, y) == 0 {
                candidates.push((x, y));
            }
        }
    }
    candidates.sort_by(|&(ax, ay), &(bx, by)| {
        loss_map
            .get(bx, by)
            .total_cmp(&loss_map.get(ax, ay))
            .then(ay.cmp(&by))
            .then(ax.cmp(&bx))
    });
    candidates.truncate(budget);
    Ok(HardNegativeSelection::from_kept(candidates, gamma))
}

/// Weighted loss summed over all text pixels plus the selected background
/// pixels; `None` sums over the whole domain. Text membership comes from the
/// ground-truth field's nonzero support. Summation runs in scan order, so
/// the result is deterministic.
pub fn total_loss(
    gt: &DirectionField,
    pred: &DirectionField,
    weights: &WeightMap,
    selection: Option<&HardNegativeSelection>,
) -> Result<f64, LossError> {
    check_dims(
        (gt.width(), gt.height()),
        (weights.width(), weights.height()),
        gt,
        weights,
    )?;
    let losses = per_pixel_loss(gt, pred)?;
    let kept = selection.map(|s| s.to_mask(gt.width(), gt.height()));
    let mut sum = 0.0;
    for y in 0..gt.height() {
        for x in 0..gt.width() {
            let include = match &kept {
                None => true,
                Some(mask) => !gt.is_zero(x, y) || mask.get(x, y),
            };
            if include {
                sum += weights.get(x, y) * losses.get(x, y);
            }
        }
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels_from(rows: &[&[u32]]) -> InstanceMap {
        let h = rows.len() as u32;
        let w = rows[0].len() as u32;
        let mut m = InstanceMap::new(w, h);
        for (y, row) in rows.iter().enumerate() {
            for (x, &v) in row.iter().enumerate() {
                m.set(x as u32, y as u32, v);
            }
        }
        m
    }

    #[test]
    fn single_instance_weighs_one() {
        let labels = labels_from(&[&[0, 1, 1, 0], &[0, 1, 1, 0]]);
        let w = compute_weights(&labels);
        for y in 0..2 {
            for x in 0..4 {
                assert_eq!(w.get(x, y), 1.0);
            }
        }
    }

    #[test]
    fn two_instances_balance_their_mass() {
        // |T1| = 10, |T2| = 30: weights 40/(2*10) = 2 and 40/(2*30) = 2/3.
        let mut labels = InstanceMap::new(40, 1);
        for x in 0..10 {
            labels.set(x, 0, 1);
        }
        for x in 10..40 {
            labels.set(x, 0, 2);
        }
        let w = compute_weights(&labels);
        assert_eq!(w.get(0, 0), 2.0);
        assert!((w.get(15, 0) - 2.0 / 3.0).abs() < 1e-15);
        let mass1: f64 = (0..10).map(|x| w.get(x, 0)).sum();
        let mass2: f64 = (10..40).map(|x| w.get(x, 0)).sum();
        assert!((mass1 - 20.0).abs() < 1e-9);
        assert!((mass2 - 20.0).abs() < 1e-9);
    }

    #[test]
    fn empty_scene_weighs_all_ones() {
        let w = compute_weights(&InstanceMap::new(5, 5));
        assert!(w.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn per_pixel_loss_basics() {
        let mut gt = DirectionField::new(3, 1);
        let mut pred = DirectionField::new(3, 1);
        gt.set(0, 0, 0.0, 1.0);
        gt.set(1, 0, 1.0, 0.0);
        pred.set(1, 0, 0.0, 1.0);
        let l = per_pixel_loss(&gt, &pred).unwrap();
        assert_eq!(l.get(0, 0), 1.0);
        assert!((l.get(1, 0) - 2.0f64.sqrt()).abs() < 1e-15);
        assert_eq!(l.get(2, 0), 0.0);
        let narrow = DirectionField::new(2, 1);
        assert!(matches!(
            per_pixel_loss(&gt, &narrow),
            Err(LossError::DimensionMismatch(..))
        ));
    }

    #[test]
    fn identical_fields_cost_nothing() {
        let mut gt = DirectionField::new(4, 2);
        gt.set(1, 0, 0.6, 0.8);
        let w = WeightMap::ones(4, 2);
        assert_eq!(total_loss(&gt, &gt.clone(), &w, None).unwrap(), 0.0);
    }

    #[test]
    fn hand_evaluated_weighted_sum() {
        // Two text pixels with unit error and weight 2, plus three kept
        // background pixels with error 0.5 and weight 1: 2*2 + 3*0.5 = 5.5.
        let mut gt = DirectionField::new(8, 1);
        let mut pred = DirectionField::new(8, 1);
        gt.set(0, 0, 0.0, 1.0);
        gt.set(1, 0, 0.0, 1.0);
        for x in 2..=4 {
            pred.set(x, 0, 0.5, 0.0);
        }
        let mut wg = Grid::new(8, 1, 1.0);
        wg.set(0, 0, 2.0);
        wg.set(1, 0, 2.0);
        let weights = WeightMap::from_grid(wg);
        let sel = HardNegativeSelection::from_kept(vec![(2, 0), (3, 0), (4, 0)], 3.0);
        let total = total_loss(&gt, &pred, &weights, Some(&sel)).unwrap();
        assert!((total - 5.5).abs() < 1e-12);
        // Pixels 5..8 have nonzero loss only if predicted; they are zero, so
        // the unrestricted sum agrees here.
        assert!((total_loss(&gt, &pred, &weights, None).unwrap() - 5.5).abs() < 1e-12);
    }

    #[test]
    fn budget_follows_text_area() {
        // 5 text pixels, 100 background, gamma 3: keep 15.
        let mut labels = InstanceMap::new(105, 1);
        for x in 0..5 {
            labels.set(x, 0, 1);
        }
        let losses = Grid::new(105, 1, 0.25);
        let sel = select_hard_negatives(&labels, &losses, 3.0).unwrap();
        assert_eq!(sel.len(), 15);
        // Uniform losses tie everywhere; scan order breaks them.
        assert_eq!(sel.kept()[0], (5, 0));
        assert_eq!(sel.kept()[14], (19, 0));

        let none = select_hard_negatives(&InstanceMap::new(105, 1), &losses, 3.0).unwrap();
        assert_eq!(none.len(), 0);
    }

    #[test]
    fn keeps_the_largest_losses() {
        let labels = labels_from(&[&[1, 0, 0], &[0, 0, 1]]);
        let mut losses = Grid::new(3, 2, 0.0);
        losses.set(1, 0, 0.9);
        losses.set(2, 0, 0.1);
        losses.set(0, 1, 0.5);
        losses.set(1, 1, 0.7);
        let sel = select_hard_negatives(&labels, &losses, 1.0).unwrap();
        assert_eq!(sel.len(), 2);
        assert_eq!(sel.kept(), &[(1, 0), (1, 1)]);
        assert!(select_hard_negatives(&labels, &losses, -1.0).is_err());
    }

    proptest! {
        #[test]
        fn instance_masses_agree(raw in proptest::collection::vec(0u32..4, 64)) {
            let labels = InstanceMap::from_grid(Grid::from_vec(8, 8, raw));
            let w = compute_weights(&labels);
            let areas = labels.label_areas();
            if areas.is_empty() { return Ok(()); }
            let total: u64 = areas.iter().map(|&(_, a)| a).sum();
            let expected = total as f64 / areas.len() as f64;
            for &(label, _) in &areas {
                let mut mass = 0.0;
                for y in 0..8 {
                    for x in 0..8 {
                        if labels.get(x, y) == label { mass += w.get(x, y); }
                    }
                }
                prop_assert!((mass - expected).abs() <= 1e-9 * expected.abs());
            }
        }

        #[test]
        fn selection_is_optimal_and_sized(raw in proptest::collection::vec(0u32..2, 48),
                                          losses in proptest::collection::vec(0.0f64..1.0, 48),
                                          gamma in 0.1f64..4.0) {
            let labels = InstanceMap::from_grid(Grid::from_vec(8, 6, raw));
            let loss_map = Grid::from_vec(8, 6, losses);
            let sel = select_hard_negatives(&labels, &loss_map, gamma).unwrap();
            let text = labels.count_nonzero();
            let background = 48 - text;
            let budget = (gamma * text as f64).floor() as u64;
            prop_assert_eq!(sel.len() as u64, budget.min(background));

            let kept_mask = sel.to_mask(8, 6);
            let mut min_kept = f64::INFINITY;
            let mut max_dropped = f64::NEG_INFINITY;
            for y in 0..6 {
                for x in 0..8 {
                    if labels.get(x, y) != 0 { continue; }
                    let l = loss_map.get(x, y);
                    if kept_mask.get(x, y) {
                        min_kept = min_kept.min(l);
                    } else {
                        max_dropped = max_dropped.max(l);
                    }
                }
            }
            if !sel.is_empty() && (background as usize) > sel.len() {
                prop_assert!(min_kept >= max_dropped);
            }
        }

        #[test]
        fn growing_the_kept_set_never_lowers_the_loss(
            gtc in proptest::collection::vec((-1.0f32..1.0, -1.0f32..1.0), 24),
            pc in proptest::collection::vec((-1.0f32..1.0, -1.0f32..1.0), 24),
            split in 0usize..24,
        ) {
            let gt = DirectionField::from_planes(6, 4,
                gtc.iter().map(|v| v.0).collect(), gtc.iter().map(|v| v.1).collect());
            let pred = DirectionField::from_planes(6, 4,
                pc.iter().map(|v| v.0).collect(), pc.iter().map(|v| v.1).collect());
            let w = WeightMap::ones(6, 4);
            let background: Vec<(u32, u32)> = (0..4u32)
                .flat_map(|y| (0..6u32).map(move |x| (x, y)))
                .filter(|&(x, y)| gt.is_zero(x, y))
                .collect();
            let split = split.min(background.len());
            let small = HardNegativeSelection::from_kept(background[..split].to_vec(), 1.0);
            let large = HardNegativeSelection::from_kept(background.clone(), 1.0);
            let a = total_loss(&gt, &pred, &w, Some(&small)).unwrap();
            let b = total_loss(&gt, &pred, &w, Some(&large)).unwrap();
            prop_assert!(b >= a - 1e-12);
        }

        #[test]
        fn unweighted_total_matches_brute_force(
            gtc in proptest::collection::vec((-1.0f32..1.0, -1.0f32..1.0), 30),
            pc in proptest::collection::vec((-1.0f32..1.0, -1.0f32..1.0), 30),
        ) {
            let gt = DirectionField::from_planes(6, 5,
                gtc.iter().map(|v| v.0).collect(), gtc.iter().map(|v| v.1).collect());
            let pred = DirectionField::from_planes(6, 5,
                pc.iter().map(|v| v.0).collect(), pc.iter().map(|v| v.1).collect());
            let w = WeightMap::ones(6, 5);
            let got = total_loss(&gt, &pred, &w, None).unwrap();
            let mut brute = 0.0;
            for y in 0..5u32 {
                for x in 0..6u32 {
                    let (gx, gy) = gt.get(x, y);
                    let (px, py) = pred.get(x, y);
                    brute += ((gx as f64 - px as f64).powi(2) + (gy as f64 - py as f64).powi(2)).sqrt();
                }
            }
            prop_assert!((got - brute).abs() <= 1e-9 * brute.max(1.0));
        }
    }
}
