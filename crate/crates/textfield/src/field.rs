//! Exact nearest-background feature transform and unit direction fields.
//!
//! Every text pixel gets the unit vector pointing from its nearest background
//! site toward the pixel; background pixels hold (0, 0). Distances are exact
//! Euclidean (no chamfer approximation), equidistant sites tie-break by
//! lowest y then lowest x, and magnitudes are computed from exact f64 squares
//! of the f32 components so ground-truth fields report exactly 1.0 on text.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::grid::{BinaryMask, Grid, InstanceMap};

#[derive(Debug, Error)]
pub enum FieldError {
    /// Every pixel is text and the border counts as text: no site exists.
    #[error("mask has no background sites")]
    NoBackgroundSites,
}

/// How pixels beyond the image border participate in the feature transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BorderPolicy {
    /// A one-pixel virtual background ring surrounds the image, so text
    /// touching the border still has a nearest outside site.
    #[default]
    Background,
    /// Outside pixels count as text; only in-image background pixels are sites.
    Text,
}

const NO_SITE: (i32, i32) = (i32::MIN, i32::MIN);

/// Nearest-background-site assignment over a mask.
///
/// Site coordinates may lie one pixel outside the image when the border
/// policy supplies the virtual background ring.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTransform {
    width: u32,
    height: u32,
    nearest: Grid<(i32, i32)>,
}

impl FeatureTransform {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Nearest background site of a text pixel; None on background pixels.
    pub fn nearest(&self, x: u32, y: u32) -> Option<(i32, i32)> {
        let v = self.nearest.get(x, y);
        (v != NO_SITE).then_some(v)
    }

    /// Squared Euclidean distance to the nearest site; None on background.
    pub fn squared_distance(&self, x: u32, y: u32) -> Option<u64> {
        self.nearest(x, y).map(|(nx, ny)| {
            let dx = x as i64 - nx as i64;
            let dy = y as i64 - ny as i64;
            (dx * dx + dy * dy) as u64
        })
    }
}

/// Exact squared Euclidean distance to the nearest site, by the two-pass
/// lower-envelope method: per-column nearest site distance first, then a
/// parabola envelope along each row. All arithmetic stays on integers small
/// enough to be exact in f64.
fn squared_edt(sites: &Grid<bool>) -> Grid<f64> {
    let (w, h) = (sites.width() as usize, sites.height() as usize);
    let mut d1 = Grid::new(sites.width(), sites.height(), f64::INFINITY);

    for x in 0..w {
        let mut last: Option<usize> = None;
        for y in 0..h {
            if sites.get(x as u32, y as u32) {
                last = Some(y);
            }
            if let Some(s) = last {
                let d = (y - s) as f64;
                d1.set(x as u32, y as u32, d * d);
            }
        }
        last = None;
        for y in (0..h).rev() {
            if sites.get(x as u32, y as u32) {
                last = Some(y);
            }
            if let Some(s) = last {
                let d = (s - y) as f64;
                let d2 = d * d;
                if d2 < d1.get(x as u32, y as u32) {
                    d1.set(x as u32, y as u32, d2);
                }
            }
        }
    }

    let mut out = Grid::new(sites.width(), sites.height(), f64::INFINITY);
    let mut hull_pos = vec![0usize; w];
    let mut bounds = vec![0.0f64; w + 1];
    for y in 0..h {
        let f = |q: usize| d1.get(q as u32, y as u32);
        let mut k = 0usize;
        let mut started = false;
        for q in 0..w {
            let fq = f(q);
            if fq.is_infinite() {
                continue;
            }
            if !started {
                hull_pos[0] = q;
                bounds[0] = f64::NEG_INFINITY;
                bounds[1] = f64::INFINITY;
                started = true;
                continue;
            }
            loop {
                let p = hull_pos[k];
                let s = ((fq + (q * q) as f64) - (f(p) + (p * p) as f64)) / (2 * q - 2 * p) as f64;
                if s <= bounds[k] {
                    // Never underflows: bounds[0] is -inf and s is finite.
                    k -= 1;
                } else {
                    k += 1;
                    hull_pos[k] = q;
                    bounds[k] = s;
                    bounds[k + 1] = f64::INFINITY;
                    break;
                }
            }
        }
        if !started {
            continue;
        }
        let mut k = 0usize;
        for x in 0..w {
            while bounds[k + 1] < x as f64 {
                k += 1;
            }
            let p = hull_pos[k];
            let dx = x as f64 - p as f64;
            out.set(x as u32, y as u32, dx * dx + f(p));
        }
    }
    out
}

fn exact_sqrt(n: u64) -> Option<i64> {
    let s = n.isqrt();
    (s * s == n).then_some(s as i64)
}

/// Walks candidate rows in ascending y and candidate columns in ascending x
/// to find the first site at exactly the transform's squared distance, which
/// is the lex-minimal nearest site by construction.
fn recover_site(
    px: i64,
    py: i64,
    d2: u64,
    lo: i64,
    hi_x: i64,
    hi_y: i64,
    is_site: impl Fn(i64, i64) -> bool,
) -> (i64, i64) {
    let r = d2.isqrt() as i64;
    let sy_lo = (py - r).max(lo);
    let sy_hi = (py + r).min(hi_y);
    for sy in sy_lo..=sy_hi {
        let dy = sy - py;
        let rem = d2 - (dy * dy) as u64;
        let Some(dx) = exact_sqrt(rem) else {
            continue;
        };
        let west = px - dx;
        if west >= lo && west <= hi_x && is_site(west, sy) {
            return (west, sy);
        }
        let east = px + dx;
        if dx != 0 && east >= lo && east <= hi_x && is_site(east, sy) {
            return (east, sy);
        }
    }
    unreachable!("no site at the transform's own distance {d2} from ({px}, {py})");
}

/// Exact Euclidean feature transform with the default virtual-ring border.
pub fn feature_transform(mask: &BinaryMask) -> FeatureTransform {
    feature_transform_with(mask, BorderPolicy::Background)
        .expect("virtual ring always supplies background sites")
}

/// Exact Euclidean feature transform under an explicit border policy.
pub fn feature_transform_with(
    mask: &BinaryMask,
    policy: BorderPolicy,
) -> Result<FeatureTransform, FieldError> {
    let (w, h) = (mask.width(), mask.height());
    let mut nearest = Grid::new(w, h, NO_SITE);
    let text_count = mask.count_true();
    if text_count == 0 {
        return Ok(FeatureTransform {
            width: w,
            height: h,
            nearest,
        });
    }
    let ring = policy == BorderPolicy::Background;
    if !ring && text_count == w as u64 * h as u64 {
        return Err(FieldError::NoBackgroundSites);
    }

    // Work on a grid padded by the ring width; cell (gx, gy) maps to image
    // coordinates (gx - pad, gy - pad).
    let pad = ring as i64;
    let pw = (w as i64 + 2 * pad) as u32;
    let ph = (h as i64 + 2 * pad) as u32;
    let is_site = |x: i64, y: i64| -> bool {
        if mask.in_bounds(x, y) {
            !mask.get(x as u32, y as u32)
        } else {
            ring
        }
    };
    let mut sites = Grid::new(pw, ph, false);
    for gy in 0..ph {
        for gx in 0..pw {
            if is_site(gx as i64 - pad, gy as i64 - pad) {
                sites.set(gx, gy, true);
            }
        }
    }
    let dist = squared_edt(&sites);

    let (lo, hi_x, hi_y) = (-pad, w as i64 - 1 + pad, h as i64 - 1 + pad);
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let d = dist.get((x as i64 + pad) as u32, (y as i64 + pad) as u32);
            debug_assert!(d.is_finite() && d.fract() == 0.0);
            let (sx, sy) = recover_site(x as i64, y as i64, d as u64, lo, hi_x, hi_y, is_site);
            nearest.set(x, y, (sx as i32, sy as i32));
        }
    }
    Ok(FeatureTransform {
        width: w,
        height: h,
        nearest,
    })
}

/// Per-pixel 2-D vector map stored as separate single-precision planes.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionField {
    width: u32,
    height: u32,
    vx: Vec<f32>,
    vy: Vec<f32>,
}

impl DirectionField {
    /// All-zero field.
    pub fn new(width: u32, height: u32) -> Self {
        let len = width as usize * height as usize;
        DirectionField {
            width,
            height,
            vx: vec![0.0; len],
            vy: vec![0.0; len],
        }
    }

    /// Wraps existing row-major component planes.
    ///
    /// Panics if a plane length is not `width * height`.
    pub fn from_planes(width: u32, height: u32, vx: Vec<f32>, vy: Vec<f32>) -> Self {
        let len = width as usize * height as usize;
        assert_eq!(vx.len(), len, "vx plane length does not match dimensions");
        assert_eq!(vy.len(), len, "vy plane length does not match dimensions");
        DirectionField {
            width,
            height,
            vx,
            vy,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y as usize * self.width as usize + x as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> (f32, f32) {
        let i = self.offset(x, y);
        (self.vx[i], self.vy[i])
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, vx: f32, vy: f32) {
        let i = self.offset(x, y);
        self.vx[i] = vx;
        self.vy[i] = vy;
    }

    #[inline]
    pub fn is_zero(&self, x: u32, y: u32) -> bool {
        let i = self.offset(x, y);
        self.vx[i] == 0.0 && self.vy[i] == 0.0
    }

    pub fn magnitude_at(&self, x: u32, y: u32) -> f32 {
        let (vx, vy) = self.get(x, y);
        magnitude_of(vx, vy)
    }

    /// Row-major x-component plane.
    pub fn vx(&self) -> &[f32] {
        &self.vx
    }

    /// Row-major y-component plane.
    pub fn vy(&self) -> &[f32] {
        &self.vy
    }
}

/// Euclidean magnitude of one vector: the f32 components are squared and
/// summed exactly in f64, square-rooted, and rounded once back to f32.
pub fn magnitude_of(vx: f32, vy: f32) -> f32 {
    let x = vx as f64;
    let y = vy as f64;
    (x * x + y * y).sqrt() as f32
}

/// Per-pixel magnitude map of a field.
pub fn magnitude(field: &DirectionField) -> Grid<f32> {
    let data = field
        .vx()
        .iter()
        .zip(field.vy())
        .map(|(&x, &y)| magnitude_of(x, y))
        .collect();
    Grid::from_vec(field.width(), field.height(), data)
}

fn to_ordered(v: f32) -> i64 {
    let b = v.to_bits();
    if b & 0x8000_0000 != 0 {
        -((b & 0x7fff_ffff) as i64)
    } else {
        b as i64
    }
}

fn from_ordered(o: i64) -> f32 {
    if o < 0 {
        f32::from_bits((-o) as u32 | 0x8000_0000)
    } else {
        f32::from_bits(o as u32)
    }
}

fn step_ulps(v: f32, k: i64) -> f32 {
    from_ordered(to_ordered(v) + k)
}

/// Finds the f32 vector closest in direction to (ideal_x, ideal_y) whose
/// computed magnitude equals `target` exactly. One ulp of the larger
/// component moves the squared sum by less than the f32 rounding band around
/// `target`, so a hit exists within a few ulps of the rounded ideal.
pub fn snap_to_magnitude(target: f32, ideal_x: f64, ideal_y: f64) -> (f32, f32) {
    let bx = ideal_x as f32;
    let by = ideal_y as f32;
    if magnitude_of(bx, by) == target {
        return (bx, by);
    }
    for radius in [3i64, 8, 24] {
        let mut best: Option<((f32, f32), f64)> = None;
        for i in -radius..=radius {
            let cx = step_ulps(bx, i);
            for j in -radius..=radius {
                let cy = step_ulps(by, j);
                if magnitude_of(cx, cy) == target {
                    let dx = cx as f64 - ideal_x;
                    let dy = cy as f64 - ideal_y;
                    let err = dx * dx + dy * dy;
                    if best.is_none_or(|(_, e)| err < e) {
                        best = Some(((cx, cy), err));
                    }
                }
            }
        }
        if let Some((v, _)) = best {
            return v;
        }
    }
    panic!("no representable vector of magnitude {target} near ({ideal_x}, {ideal_y})");
}

/// Unit vector along the integer displacement (dx, dy), snapped so that
/// `magnitude_of` returns exactly 1.0.
fn unit_direction(dx: i64, dy: i64) -> (f32, f32) {
    debug_assert!(dx != 0 || dy != 0);
    let d = ((dx * dx + dy * dy) as f64).sqrt();
    snap_to_magnitude(1.0, dx as f64 / d, dy as f64 / d)
}

fn field_from_transform(mask: &BinaryMask, ft: &FeatureTransform) -> DirectionField {
    let mut field = DirectionField::new(mask.width(), mask.height());
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if let Some((nx, ny)) = ft.nearest(x, y) {
                let (vx, vy) = unit_direction(x as i64 - nx as i64, y as i64 - ny as i64);
                field.set(x, y, vx, vy);
            }
        }
    }
    field
}

/// Ground-truth field of a single mask: every text pixel points away from its
/// nearest background site with unit magnitude; background stays (0, 0).
pub fn generate_field(mask: &BinaryMask) -> DirectionField {
    field_from_transform(mask, &feature_transform(mask))
}

/// [`generate_field`] under an explicit border policy.
pub fn generate_field_with(
    mask: &BinaryMask,
    policy: BorderPolicy,
) -> Result<DirectionField, FieldError> {
    Ok(field_from_transform(
        mask,
        &feature_transform_with(mask, policy)?,
    ))
}

/// Ground-truth field of a labeled scene.
///
/// Each instance is transformed against the complement of its own label, so
/// neighboring instances act as background for each other. The transform
/// runs on the instance's bounding box plus a one-pixel margin: a site
/// outside that crop is strictly farther than its clamp onto the margin
/// ring, so the crop already contains every nearest site and all its ties.
pub fn generate_scene_field(labels: &InstanceMap) -> DirectionField {
    let (w, h) = (labels.width(), labels.height());
    let mut field = DirectionField::new(w, h);
    let mut bboxes: BTreeMap<u32, (u32, u32, u32, u32)> = BTreeMap::new();
    for y in 0..h {
        for x in 0..w {
            let label = labels.get(x, y);
            if label == 0 {
                continue;
            }
            bboxes
                .entry(label)
                .and_modify(|b| {
                    b.0 = b.0.min(x);
                    b.1 = b.1.min(y);
                    b.2 = b.2.max(x);
                    b.3 = b.3.max(y);
                })
                .or_insert((x, y, x, y));
        }
    }
    for (&label, &(x0, y0, x1, y1)) in &bboxes {
        let cw = x1 - x0 + 3;
        let ch = y1 - y0 + 3;
        let mut crop = BinaryMask::new(cw, ch);
        for cy in 0..ch {
            for cx in 0..cw {
                let ix = x0 as i64 - 1 + cx as i64;
                let iy = y0 as i64 - 1 + cy as i64;
                if labels.in_bounds(ix, iy) && labels.get(ix as u32, iy as u32) == label {
                    crop.set(cx, cy, true);
                }
            }
        }
        // The margin ring of the crop is all background, so sites exist.
        let ft = feature_transform_with(&crop, BorderPolicy::Text)
            .expect("crop margin ring supplies sites");
        for cy in 0..ch {
            for cx in 0..cw {
                if let Some((nx, ny)) = ft.nearest(cx, cy) {
                    let (vx, vy) = unit_direction(cx as i64 - nx as i64, cy as i64 - ny as i64);
                    field.set(
                        (x0 as i64 - 1 + cx as i64) as u32,
                        (y0 as i64 - 1 + cy as i64) as u32,
                        vx,
                        vy,
                    );
                }
            }
        }
    }
    field
}
