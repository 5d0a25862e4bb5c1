//! Detects instances, traces their lattice outlines, and re-rasterizes one
//! outline to show the loop really is the mask boundary.

use textfield::{
    detect, generate_scene, generate_scene_field, mask_iou, rasterize, trace_boundaries,
    InferenceConfig, Polygon, PolygonScene, SynthSpec,
};

fn main() {
    let spec = SynthSpec {
        width: 320,
        height: 240,
        count_min: 3,
        count_max: 3,
        ..SynthSpec::default()
    };
    let scene = generate_scene(&spec, 23).expect("scene fits");
    let (_, truth) = rasterize(&scene);
    let field = generate_scene_field(&truth);
    let labels = detect(&field, &InferenceConfig::default()).expect("valid config");

    let outlines = trace_boundaries(&labels);
    println!(
        "{} instances, {} traced loops\n",
        labels.label_areas().len(),
        outlines.len()
    );
    println!("label  vertices  first corners");
    for (label, loop_pts) in &outlines {
        let head: Vec<String> = loop_pts
            .iter()
            .take(4)
            .map(|&(x, y)| format!("({x},{y})"))
            .collect();
        println!(
            "   {label}     {:>4}    {} ...",
            loop_pts.len(),
            head.join(" ")
        );
    }

    // Feed the first outline back through the rasterizer; a hole-free piece
    // comes back pixel for pixel.
    let (label, loop_pts) = &outlines[0];
    let poly = Polygon::new(
        loop_pts
            .iter()
            .map(|&(x, y)| (x as f64, y as f64))
            .collect(),
    )
    .expect("traced loop of a simple piece is simple");
    let rescene =
        PolygonScene::new(labels.width(), labels.height(), vec![poly]).expect("in bounds");
    let (remask, _) = rasterize(&rescene);

    let mut original = textfield::BinaryMask::new(labels.width(), labels.height());
    for y in 0..labels.height() {
        for x in 0..labels.width() {
            if labels.get(x, y) == *label {
                original.set(x, y, true);
            }
        }
    }
    let iou = mask_iou(&remask, &original).expect("same dimensions");
    println!("\nre-rasterized outline of label {label}: IOU vs its mask = {iou}");
}
