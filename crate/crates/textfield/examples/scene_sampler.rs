//! Samples a few synthetic scenes and prints a coarse block rendering plus
//! per-instance shape facts.

use textfield::{generate_scene, rasterize, SynthSpec};

fn main() {
    let spec = SynthSpec::default();
    println!(
        "sampling {}x{} scenes, {}..={} instances, min area {}, min gap {}\n",
        spec.width, spec.height, spec.count_min, spec.count_max, spec.min_area, spec.min_gap
    );

    for seed in [1u64, 2, 3] {
        let scene = generate_scene(&spec, seed).expect("scene fits");
        let (_, labels) = rasterize(&scene);
        println!("seed {seed}: {} instances", scene.instances().len());
        println!("  instance  vertices  area      shape");
        for (i, poly) in scene.instances().iter().enumerate() {
            let label = i as u32 + 1;
            let area = labels
                .label_areas()
                .iter()
                .find(|&&(l, _)| l == label)
                .map(|&(_, a)| a)
                .unwrap_or(0);
            // Bars are quads; arc ribbons carry many short chords.
            let shape = if poly.points().len() > 8 {
                "arc"
            } else {
                "bar"
            };
            println!(
                "      {label}        {:>3}   {area:>6}      {shape}",
                poly.points().len()
            );
        }

        // 8x16 blocks, one char per block, label digit of the block's
        // dominant instance.
        let (bw, bh) = (8u32, 16u32);
        for by in 0..spec.height / bh {
            let mut row = String::new();
            for bx in 0..spec.width / bw {
                let mut counts = std::collections::HashMap::new();
                for y in by * bh..(by + 1) * bh {
                    for x in bx * bw..(bx + 1) * bw {
                        let l = labels.get(x, y);
                        if l != 0 {
                            *counts.entry(l).or_insert(0u32) += 1;
                        }
                    }
                }
                match counts.into_iter().max_by_key(|&(_, n)| n) {
                    Some((label, _)) => row.push(char::from_digit(label % 10, 10).unwrap()),
                    None => row.push('.'),
                }
            }
            println!("    {row}");
        }
        println!();
    }
}
