//! Walks the decoding stages one at a time on a synthetic scene, then runs
//! the bundled `detect` and scores it against the truth it came from.

use textfield::{
    build_forest, detect, filter_unbalanced, generate_scene, generate_scene_field,
    group_representatives, match_and_score, rasterize, threshold_candidates, InferenceConfig,
    SynthSpec,
};

fn main() {
    let spec = SynthSpec {
        width: 384,
        height: 288,
        count_min: 3,
        count_max: 4,
        ..SynthSpec::default()
    };
    let scene = generate_scene(&spec, 11).expect("scene fits");
    let (_, truth) = rasterize(&scene);
    let field = generate_scene_field(&truth);
    let config = InferenceConfig::default();

    println!(
        "scene seed 11: {} instances on {}x{}\n",
        scene.instances().len(),
        spec.width,
        spec.height
    );

    // The staged view below thresholds pointwise; `detect` additionally box-
    // averages the magnitudes so the low band along each symmetry axis
    // splits opposing flanks before the forest is built.
    let candidates = threshold_candidates(&field, config.lambda_m);
    println!(
        "stage 1  threshold lambda_m={}   {} candidate pixels",
        config.lambda_m,
        candidates.count_true()
    );

    let forest = build_forest(&field, &candidates).expect("candidates carry directions");
    println!(
        "stage 2  parent forest           {} trees, {} representatives",
        forest.tree_count(),
        forest.representatives().len()
    );

    let groups = group_representatives(&forest, config.k1);
    println!(
        "stage 3  dilate+group k1={}       {} groups",
        config.k1,
        groups.group_count()
    );

    let survivors = filter_unbalanced(&groups, &forest, config.lambda_r)
        .iter()
        .filter(|&&s| s)
        .count();
    println!(
        "stage 4  balance lambda_r={}    {} groups survive",
        config.lambda_r, survivors
    );

    let found = detect(&field, &config).expect("valid config");
    let report = match_and_score(&found, &truth, 0.5).expect("same dimensions");
    println!(
        "stage 5  close k2={}, area>={}   {} instances\n",
        config.k2,
        config.lambda_a,
        found.label_areas().len()
    );

    println!("det  gt   IOU");
    for m in &report.matches {
        println!("  {}   {}   {:.4}", m.det, m.gt, m.iou);
    }
    println!(
        "\nP={:.4} R={:.4} F={:.4}",
        report.precision, report.recall, report.f_measure
    );
}
