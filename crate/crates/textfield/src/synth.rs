//! Synthetic scenes and field noise: packs text-shaped polygons onto a
//! canvas with guaranteed pairwise clearance, and corrupts clean fields with
//! angle jitter, magnitude jitter, and dropout to mimic model output.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{magnitude_of, snap_to_magnitude, DirectionField};
use crate::geometry::{rasterize, Polygon, PolygonScene};
use crate::grid::BinaryMask;
use crate::morph::dilate_square;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("canvas {0}x{1} is empty")]
    EmptyCanvas(u32, u32),
    #[error("instance count range {0}..={1} is inverted")]
    BadCountRange(u32, u32),
    #[error("minimum gap must be at least 1, got {0}")]
    BadGap(u32),
    #[error("minimum area must be at least 1")]
    BadArea,
    #[error("no shape families enabled")]
    NoFamilies,
    #[error("{field} must be a finite non-negative number, got {value}")]
    BadNoise { field: &'static str, value: f64 },
    #[error("dropout {0} must lie in [0, 1]")]
    BadDropout(f64),
    #[error("placed {placed} of {requested} instances before running out of attempts")]
    InfeasiblePacking { placed: u32, requested: u32 },
    #[error("unknown shape family {0:?}, expected axis_bar, rotated_bar, or arc_ribbon")]
    UnknownFamily(String),
}

/// Shape families the generator draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Axis-aligned rectangle.
    AxisBar,
    /// Rectangle rotated well away from the axes.
    RotatedBar,
    /// Annular band approximated by short chords.
    ArcRibbon,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::AxisBar, Family::RotatedBar, Family::ArcRibbon];

    pub fn name(self) -> &'static str {
        match self {
            Family::AxisBar => "axis_bar",
            Family::RotatedBar => "rotated_bar",
            Family::ArcRibbon => "arc_ribbon",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, SynthError> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| SynthError::UnknownFamily(s.to_string()))
    }
}

/// Scene generation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub width: u32,
    pub height: u32,
    /// Instance count is drawn uniformly from count_min..=count_max.
    pub count_min: u32,
    pub count_max: u32,
    /// Smallest accepted rasterized area per instance, in pixels.
    pub min_area: u64,
    /// Smallest allowed Chebyshev distance between pixels of different
    /// instances; 1 forbids overlap but allows touching.
    pub min_gap: u32,
    /// Clearance kept between every vertex and the canvas border.
    pub margin: u32,
    pub families: Vec<Family>,
    /// Placement attempts allowed per instance before giving up.
    pub max_attempts: u32,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            width: 512,
            height: 512,
            count_min: 2,
            count_max: 6,
            min_area: 400,
            min_gap: 3,
            margin: 4,
            families: Family::ALL.to_vec(),
            max_attempts: 200,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.width == 0 || self.height == 0 {
            return Err(SynthError::EmptyCanvas(self.width, self.height));
        }
        if self.count_min > self.count_max {
            return Err(SynthError::BadCountRange(self.count_min, self.count_max));
        }
        if self.min_gap == 0 {
            return Err(SynthError::BadGap(self.min_gap));
        }
        if self.min_area == 0 {
            return Err(SynthError::BadArea);
        }
        if self.families.is_empty() {
            return Err(SynthError::NoFamilies);
        }
        Ok(())
    }
}

/// Corruption applied to a clean field, mimicking regression error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// Standard deviation of Gaussian angle jitter, radians.
    pub angle_sigma: f64,
    /// Standard deviation of multiplicative magnitude jitter:
    /// m becomes m * (1 + g), floored at zero.
    pub mag_sigma: f64,
    /// Probability that a nonzero vector is zeroed outright.
    pub dropout: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            angle_sigma: 0.0,
            mag_sigma: 0.0,
            dropout: 0.0,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), SynthError> {
        for (field, value) in [
            ("angle_sigma", self.angle_sigma),
            ("mag_sigma", self.mag_sigma),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(SynthError::BadNoise { field, value });
            }
        }
        if !(self.dropout >= 0.0 && self.dropout <= 1.0) {
            return Err(SynthError::BadDropout(self.dropout));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.angle_sigma == 0.0 && self.mag_sigma == 0.0 && self.dropout == 0.0
    }
}

fn round_point(x: f64, y: f64) -> (f64, f64) {
    (x.round(), y.round())
}

/// Drops consecutive duplicate vertices, including the closing wrap pair.
fn dedupe_ring(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.dedup();
    while pts.len() > 1 && pts.first() == pts.last() {
        pts.pop();
    }
    pts
}

fn sample_axis_bar(rng: &mut ChaCha8Rng, spec: &SynthSpec) -> Option<Vec<(f64, f64)>> {
    let horizontal = rng.random::<bool>();
    let t = rng.random_range(10..=18) as u32;
    let len = rng.random_range(40..=120) as u32;
    let (bw, bh) = if horizontal { (len, t) } else { (t, len) };
    let max_x = spec.width.checked_sub(2 * spec.margin + bw)?;
    let max_y = spec.height.checked_sub(2 * spec.margin + bh)?;
    let x0 = (spec.margin + rng.random_range(0..=max_x)) as f64;
    let y0 = (spec.margin + rng.random_range(0..=max_y)) as f64;
    let (x1, y1) = (x0 + bw as f64, y0 + bh as f64);
    Some(vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1)])
}

fn sample_rotated_bar(rng: &mut ChaCha8Rng, spec: &SynthSpec) -> Option<Vec<(f64, f64)>> {
    let half_len = rng.random_range(20.0..60.0);
    let half_t = rng.random_range(5.0..9.0);
    let mut deg: f64 = rng.random_range(15.0..75.0);
    if rng.random::<bool>() {
        deg += 90.0;
    }
    let (sin, cos) = deg.to_radians().sin_cos();
    // The rotated bbox half-extent along each axis.
    let ext_x = half_len * cos.abs() + half_t * sin.abs();
    let ext_y = half_len * sin.abs() + half_t * cos.abs();
    let m = spec.margin as f64 + 1.0;
    let (lo_x, hi_x) = (m + ext_x, spec.width as f64 - m - ext_x);
    let (lo_y, hi_y) = (m + ext_y, spec.height as f64 - m - ext_y);
    if lo_x >= hi_x || lo_y >= hi_y {
        return None;
    }
    let cx = rng.random_range(lo_x..hi_x);
    let cy = rng.random_range(lo_y..hi_y);
    let corners = [
        (-half_len, -half_t),
        (half_len, -half_t),
        (half_len, half_t),
        (-half_len, half_t),
    ];
    Some(
        corners
            .into_iter()
            .map(|(u, v)| round_point(cx + u * cos - v * sin, cy + u * sin + v * cos))
            .collect(),
    )
}

fn sample_arc_ribbon(rng: &mut ChaCha8Rng, spec: &SynthSpec) -> Option<Vec<(f64, f64)>> {
    let t = rng.random_range(10.0..16.0);
    let m = spec.margin as f64 + 1.0;
    let fit = (spec.width.min(spec.height) as f64) / 2.0 - m - t / 2.0 - 2.0;
    if fit < 30.0 {
        return None;
    }
    let r_mid = rng.random_range(30.0..=fit.min(90.0));
    let (r_in, r_out) = (r_mid - t / 2.0, r_mid + t / 2.0);
    let span = rng.random_range(60f64..200.0).to_radians();
    let start = rng.random_range(0f64..std::f64::consts::TAU);
    let (lo_x, hi_x) = (m + r_out, spec.width as f64 - m - r_out);
    let (lo_y, hi_y) = (m + r_out, spec.height as f64 - m - r_out);
    if lo_x >= hi_x || lo_y >= hi_y {
        return None;
    }
    let cx = rng.random_range(lo_x..hi_x);
    let cy = rng.random_range(lo_y..hi_y);
    // Chord step keeping the sagitta under 0.75 px on the outer radius.
    let step = 2.0 * (1.0 - 0.75 / r_out).acos();
    let n = (span / step).ceil() as usize;
    let mut pts = Vec::with_capacity(2 * n + 2);
    for i in 0..=n {
        let a = start + span * i as f64 / n as f64;
        pts.push(round_point(cx + r_out * a.cos(), cy + r_out * a.sin()));
    }
    for i in (0..=n).rev() {
        let a = start + span * i as f64 / n as f64;
        pts.push(round_point(cx + r_in * a.cos(), cy + r_in * a.sin()));
    }
    Some(dedupe_ring(pts))
}

/// Generates a packed scene deterministically from the seed.
///
/// Each instance is sampled, rasterized, and accepted only when its vertices
/// respect the margin, its area clears the floor, and all of its pixels stay
/// at least min_gap away (Chebyshev) from every earlier instance. Rejected
/// attempts consume randomness, so a scene is reproducible only with the
/// same spec and seed. Runs out of attempts on an overfull canvas rather
/// than looping forever.
pub fn generate_scene(spec: &SynthSpec, seed: u64) -> Result<PolygonScene, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let requested = rng.random_range(spec.count_min..=spec.count_max);
    let mut polygons: Vec<Polygon> = Vec::with_capacity(requested as usize);
    // Pixels any new instance must avoid: accepted pixels grown so that
    // staying off the bitmap implies Chebyshev distance >= min_gap.
    let mut blocked = BinaryMask::new(spec.width, spec.height);
    let within = |(x, y): &(f64, f64)| {
        let m = spec.margin as f64;
        *x >= m && *x <= spec.width as f64 - m && *y >= m && *y <= spec.height as f64 - m
    };

    for placed in 0..requested {
        let mut accepted = false;
        for _ in 0..spec.max_attempts {
            let family = spec.families[rng.random_range(0..spec.families.len())];
            let Some(vertices) = (match family {
                Family::AxisBar => sample_axis_bar(&mut rng, spec),
                Family::RotatedBar => sample_rotated_bar(&mut rng, spec),
                Family::ArcRibbon => sample_arc_ribbon(&mut rng, spec),
            }) else {
                continue;
            };
            if !vertices.iter().all(within) {
                continue;
            }
            let Ok(polygon) = Polygon::new(vertices) else {
                continue;
            };
            let lone = PolygonScene::new(spec.width, spec.height, vec![polygon.clone()])
                .expect("vertices bounds-checked");
            let (mask, _) = rasterize(&lone);
            if mask.count_true() < spec.min_area {
                continue;
            }
            if mask
                .data()
                .iter()
                .zip(blocked.data())
                .any(|(&p, &b)| p && b)
            {
                continue;
            }
            let grown = dilate_square(&mask, 2 * spec.min_gap - 1);
            for (b, g) in blocked.data_mut().iter_mut().zip(grown.data()) {
                *b |= *g;
            }
            polygons.push(polygon);
            accepted = true;
            break;
        }
        if !accepted {
            return Err(SynthError::InfeasiblePacking { placed, requested });
        }
    }
    Ok(PolygonScene::new(spec.width, spec.height, polygons).expect("all instances validated"))
}

/// Corrupts a field deterministically from the seed.
///
/// Every nonzero vector gets its own ChaCha stream keyed by pixel index, so
/// the noise at one pixel never depends on how many other pixels exist.
/// Draw order per pixel: angle jitter, magnitude jitter, dropout. Zero
/// vectors pass through untouched, a zero noise model returns a bit-exact
/// copy, and with mag_sigma zero the rotated vector is snapped back to its
/// original magnitude exactly.
pub fn perturb_field(
    field: &DirectionField,
    noise: &NoiseModel,
    seed: u64,
) -> Result<DirectionField, SynthError> {
    noise.validate()?;
    if noise.is_zero() {
        return Ok(field.clone());
    }
    let angle_dist = Normal::new(0.0, noise.angle_sigma).expect("validated sigma");
    let mag_dist = Normal::new(0.0, noise.mag_sigma).expect("validated sigma");
    let (w, h) = (field.width(), field.height());
    let mut out = DirectionField::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let (vx, vy) = field.get(x, y);
            if vx == 0.0 && vy == 0.0 {
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((y as u64) * (w as u64) + x as u64);
            let da = angle_dist.sample(&mut rng);
            let dm = mag_dist.sample(&mut rng);
            let drop = rng.random::<f64>() < noise.dropout;
            if drop {
                continue;
            }
            let mag32 = magnitude_of(vx, vy);
            let angle = (vy as f64).atan2(vx as f64) + da;
            let (sin, cos) = angle.sin_cos();
            if noise.mag_sigma == 0.0 {
                let m = mag32 as f64;
                let (nx, ny) = snap_to_magnitude(mag32, m * cos, m * sin);
                out.set(x, y, nx, ny);
            } else {
                let m = (mag32 as f64 * (1.0 + dm)).max(0.0);
                out.set(x, y, (m * cos) as f32, (m * sin) as f32);
            }
        }
    }
    Ok(out)
}
