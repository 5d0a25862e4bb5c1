//! Binary morphology with square structuring elements, and blob labeling.
//!
//! Dilation and erosion are separable, so each runs as a horizontal then a
//! vertical sliding-window pass in O(pixels) regardless of kernel size.
//! Pixels beyond the border count as background.

use crate::grid::{BinaryMask, InstanceMap};

fn assert_odd(k: u32) {
    assert!(k >= 1 && k % 2 == 1, "kernel side must be odd, got {k}");
}

/// One horizontal sliding-window pass over each row.
/// `full` selects erosion semantics (the whole window must be set, and the
/// window must fit inside the row); otherwise any set pixel suffices.
fn horizontal_pass(src: &BinaryMask, r: u32, full: bool) -> BinaryMask {
    let (w, h) = (src.width(), src.height());
    let mut out = BinaryMask::new(w, h);
    let r = r as i64;
    for y in 0..h {
        let mut count: i64 = 0;
        // Prime the window for x = 0: cells [-r, r].
        for x in 0..=r.min(w as i64 - 1) {
            count += src.get(x as u32, y) as i64;
        }
        for x in 0..w as i64 {
            let keep = if full {
                x - r >= 0 && x + r < w as i64 && count == 2 * r + 1
            } else {
                count > 0
            };
            out.set(x as u32, y, keep);
            let leaving = x - r;
            if leaving >= 0 {
                count -= src.get(leaving as u32, y) as i64;
            }
            let entering = x + r + 1;
            if entering < w as i64 {
                count += src.get(entering as u32, y) as i64;
            }
        }
    }
    out
}

fn transpose(src: &BinaryMask) -> BinaryMask {
    let (w, h) = (src.width(), src.height());
    let mut out = BinaryMask::new(h, w);
    for y in 0..h {
        for x in 0..w {
            out.set(y, x, src.get(x, y));
        }
    }
    out
}

/// Dilation by a k x k square structuring element; k odd.
pub fn dilate_square(mask: &BinaryMask, k: u32) -> BinaryMask {
    assert_odd(k);
    let r = k / 2;
    let pass1 = horizontal_pass(mask, r, false);
    transpose(&horizontal_pass(&transpose(&pass1), r, false))
}

/// Erosion by a k x k square structuring element; k odd. Windows reaching
/// past the border fail, since outside pixels are background.
pub fn erode_square(mask: &BinaryMask, k: u32) -> BinaryMask {
    assert_odd(k);
    let r = k / 2;
    let pass1 = horizontal_pass(mask, r, true);
    transpose(&horizontal_pass(&transpose(&pass1), r, true))
}

/// Morphological closing (dilate then erode) by a k x k square; k odd.
///
/// Runs on a canvas padded by the kernel radius so the border behaves like
/// the infinite plane: closing never eats pixels near the image edge and the
/// result contains the input.
pub fn close_square(mask: &BinaryMask, k: u32) -> BinaryMask {
    assert_odd(k);
    let r = k / 2;
    let (w, h) = (mask.width(), mask.height());
    let mut padded = BinaryMask::new(w + 2 * r, h + 2 * r);
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                padded.set(x + r, y + r, true);
            }
        }
    }
    let closed = erode_square(&dilate_square(&padded, k), k);
    let mut out = BinaryMask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            out.set(x, y, closed.get(x + r, y + r));
        }
    }
    out
}

const NEIGHBORS_8: [(i64, i64); 8] = [
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// 8-connected components of a mask. Labels are assigned 1..=count in the
/// scan order of each component's first pixel, making the labeling
/// deterministic.
pub fn connected_components(mask: &BinaryMask) -> (InstanceMap, u32) {
    let (w, h) = (mask.width(), mask.height());
    let mut labels = InstanceMap::new(w, h);
    let mut next = 0u32;
    let mut stack = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) || labels.get(x, y) != 0 {
                continue;
            }
            next += 1;
            labels.set(x, y, next);
            stack.push((x, y));
            while let Some((cx, cy)) = stack.pop() {
                for (dx, dy) in NEIGHBORS_8 {
                    let nx = cx as i64 + dx;
                    let ny = cy as i64 + dy;
                    if mask.in_bounds(nx, ny)
                        && mask.get(nx as u32, ny as u32)
                        && labels.get(nx as u32, ny as u32) == 0
                    {
                        labels.set(nx as u32, ny as u32, next);
                        stack.push((nx as u32, ny as u32));
                    }
                }
            }
        }
    }
    (labels, next)
}
