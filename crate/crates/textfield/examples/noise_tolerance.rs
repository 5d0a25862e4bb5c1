//! Sweeps angle noise over a batch of scenes and reports how long exact
//! instance recovery survives.

use textfield::{
    detect, generate_scene, generate_scene_field, match_and_score, perturb_field, InferenceConfig,
    NoiseModel, SynthSpec,
};

fn main() {
    let spec = SynthSpec::default();
    let config = InferenceConfig::default();
    let cases = 12u64;

    println!("{cases} scenes per row, default spec and detector\n");
    println!("angle sigma   dropout   exact count   mean matched IOU");
    for (deg, dropout) in [
        (0.0f64, 0.0),
        (5.0, 0.0),
        (10.0, 0.02),
        (20.0, 0.05),
        (40.0, 0.10),
        (70.0, 0.20),
    ] {
        let noise = NoiseModel {
            angle_sigma: deg.to_radians(),
            mag_sigma: 0.05,
            dropout,
        };
        let mut exact = 0u32;
        let mut iou_sum = 0.0;
        let mut matches = 0u64;
        for i in 0..cases {
            let seed = 300 + i;
            let scene = generate_scene(&spec, seed).expect("scene fits");
            let (_, truth) = textfield::rasterize(&scene);
            let field = generate_scene_field(&truth);
            let noisy = perturb_field(&field, &noise, seed).expect("valid noise");
            let found = detect(&noisy, &config).expect("valid config");
            if found.label_areas().len() == scene.instances().len() {
                exact += 1;
            }
            let report = match_and_score(&found, &truth, 0.5).expect("same dimensions");
            for m in &report.matches {
                iou_sum += m.iou;
                matches += 1;
            }
        }
        let mean = if matches == 0 {
            0.0
        } else {
            iou_sum / matches as f64
        };
        println!("   {deg:>4} deg      {dropout:.2}       {exact:>2}/{cases}           {mean:.4}");
    }
    println!("\ncounts hold while masks erode; at 70 deg the bins scatter so far that");
    println!("no group keeps enough opposite pairs and nothing is emitted at all");
}
