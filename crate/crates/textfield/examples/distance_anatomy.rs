//! Prints the exact squared-distance transform of a bar touching the image
//! edge under both border policies, side by side.

use textfield::{feature_transform_with, BinaryMask, BorderPolicy};

fn main() {
    // A vertical bar spanning the full height, background on both flanks.
    let mut mask = BinaryMask::new(11, 7);
    for y in 0..7 {
        for x in 2..=6 {
            mask.set(x, y, true);
        }
    }

    for policy in [BorderPolicy::Background, BorderPolicy::Text] {
        let ft = feature_transform_with(&mask, policy).expect("mask has background");
        println!("squared distances, pixels beyond the border count as {policy:?}:");
        for y in 0..7 {
            let mut line = String::from("  ");
            for x in 0..11 {
                match ft.squared_distance(x, y) {
                    Some(d) => line.push_str(&format!("{d:>3}")),
                    None => line.push_str("  ."),
                }
            }
            println!("{line}");
        }
        println!();
    }
    println!("under Background the top and bottom rows drain toward the virtual ring;");
    println!("under Text only the in-image flanks count, so every row looks the same\n");

    // Ties resolve to one fixed site, not an arbitrary one: the centerline
    // pixel is 3 from both flanks and always elects the western site.
    let ft = feature_transform_with(&mask, BorderPolicy::Text).expect("mask has background");
    let (x, y) = (4, 3);
    println!(
        "pixel ({x},{y}) is equidistant from ({},{}) and ({},{}); the transform elects {:?}",
        1,
        3,
        7,
        3,
        ft.nearest(x, y).expect("inside the bar")
    );
    assert_eq!(ft.nearest(x, y), Some((1, 3)));
}
