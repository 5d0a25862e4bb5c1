//! Renders the direction field of one slanted bar as arrows and checks the
//! two facts everything downstream relies on: unit magnitude on text and a
//! recoverable nearest-background site.

use textfield::inference::{bin_direction, DIRECTION_OFFSETS};
use textfield::{
    feature_transform, generate_scene_field, magnitude_of, rasterize, Polygon, PolygonScene,
};

/// One glyph per direction bin, same order as DIRECTION_OFFSETS, y down.
const ARROWS: [char; 8] = ['→', '↗', '↑', '↖', '←', '↙', '↓', '↘'];

fn main() {
    let bar = Polygon::new(vec![(6.0, 10.0), (30.0, 3.0), (33.0, 7.0), (9.0, 14.0)])
        .expect("simple quad");
    let scene = PolygonScene::new(40, 18, vec![bar]).expect("fits the canvas");
    let (mask, labels) = rasterize(&scene);
    let field = generate_scene_field(&labels);

    println!("field on a {}x{} canvas, one slanted bar\n", 40, 18);
    for y in 0..field.height() {
        let mut row = String::new();
        for x in 0..field.width() {
            let (vx, vy) = field.get(x, y);
            if vx == 0.0 && vy == 0.0 {
                row.push('·');
            } else {
                let bin = bin_direction(vx, vy).expect("nonzero vector");
                row.push(ARROWS[bin as usize]);
            }
        }
        println!("  {row}");
    }

    // Magnitudes are exactly 1 or 0, never approximately.
    let mut text = 0u64;
    let mut off_unit = 0u64;
    for y in 0..field.height() {
        for x in 0..field.width() {
            let (vx, vy) = field.get(x, y);
            if mask.get(x, y) {
                text += 1;
                if magnitude_of(vx, vy) != 1.0 {
                    off_unit += 1;
                }
            } else if vx != 0.0 || vy != 0.0 {
                off_unit += 1;
            }
        }
    }
    println!("\n{text} text pixels, {off_unit} with a magnitude other than exactly 1 or 0");

    // Walking -V * d from any text pixel lands on its nearest background
    // pixel; spot-check the deepest one.
    let ft = feature_transform(&mask);
    let (mut px, mut py, mut d2) = (0, 0, 0);
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if let Some(sq) = ft.squared_distance(x, y) {
                if mask.get(x, y) && sq > d2 {
                    (px, py, d2) = (x, y, sq);
                }
            }
        }
    }
    let (vx, vy) = field.get(px, py);
    let d = (d2 as f64).sqrt();
    let sx = px as f64 - (vx as f64 * d).round();
    let sy = py as f64 - (vy as f64 * d).round();
    println!(
        "deepest text pixel ({px},{py}): distance {d:.3}, vector ({vx:.4},{vy:.4}) \
         points away from background at ({sx},{sy})"
    );
    assert_eq!(ft.nearest(px, py), Some((sx as i32, sy as i32)));

    // The parent offsets the decoder uses are the same eight arrows.
    println!("\nbin  offset   arrow");
    for (bin, &(ox, oy)) in DIRECTION_OFFSETS.iter().enumerate() {
        println!("  {bin}  ({ox:>2},{oy:>2})   {}", ARROWS[bin]);
    }
}
