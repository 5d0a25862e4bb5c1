//! Shows how instance balancing equalizes a big and a small instance and how
//! hard-negative selection trims the background term.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use textfield::{
    compute_weights, generate_scene_field, per_pixel_loss, perturb_field, rasterize,
    select_hard_negatives, total_loss, NoiseModel, Polygon, PolygonScene, WeightMap,
};

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Polygon {
    Polygon::new(vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1)]).expect("rectangle")
}

fn main() {
    // One large bar and one small one, areas roughly 12:1.
    let scene = PolygonScene::new(
        160,
        120,
        vec![rect(10.0, 10.0, 130.0, 50.0), rect(20.0, 80.0, 60.0, 90.0)],
    )
    .expect("scene fits");
    let (_, labels) = rasterize(&scene);
    let gt = generate_scene_field(&labels);
    let noise = NoiseModel {
        angle_sigma: 12f64.to_radians(),
        mag_sigma: 0.08,
        dropout: 0.0,
    };
    let mut pred = perturb_field(&gt, &noise, 42).expect("valid noise");

    // A trained predictor also leaks weak activations onto the background;
    // fake some so the negatives have something to mine.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for y in 0..labels.height() {
        for x in 0..labels.width() {
            if labels.get(x, y) == 0 && rng.random::<f64>() < 0.5 {
                let a = rng.random::<f64>() * std::f64::consts::TAU;
                let m = rng.random::<f64>() * 0.4;
                pred.set(x, y, (m * a.cos()) as f32, (m * a.sin()) as f32);
            }
        }
    }

    let areas = labels.label_areas();
    let weights = compute_weights(&labels);
    println!("instance  area   weight per px   weight sum");
    for &(label, area) in &areas {
        let mut sum = 0.0;
        let mut w_px = 0.0;
        for y in 0..labels.height() {
            for x in 0..labels.width() {
                if labels.get(x, y) == label {
                    w_px = weights.get(x, y);
                    sum += w_px;
                }
            }
        }
        println!("   {label}     {area:>5}     {w_px:.6}       {sum:.4}");
    }
    println!("each instance sums to total_text/instances, so both pull equally\n");

    let losses = per_pixel_loss(&gt, &pred).expect("same dimensions");
    let text = labels.count_nonzero();
    let background = (labels.width() as u64) * (labels.height() as u64) - text;
    println!("{text} text pixels, {background} background pixels");
    println!("\ngamma   kept negatives   floor(gamma*text)");
    for gamma in [0.0, 1.0, 3.0, 100.0] {
        let sel = select_hard_negatives(&labels, &losses, gamma).expect("finite gamma");
        let budget = (gamma * text as f64).floor() as u64;
        println!(
            "  {gamma:<5}     {:>7}          {:>7}{}",
            sel.len(),
            budget,
            if (sel.len() as u64) < budget {
                "  (capped by available background)"
            } else {
                ""
            }
        );
    }

    // gamma 1 keeps one negative per text pixel, so the easy background
    // drops out of the sum.
    let uniform = WeightMap::ones(labels.width(), labels.height());
    let sel = select_hard_negatives(&labels, &losses, 1.0).expect("finite gamma");
    let everything = total_loss(&gt, &pred, &uniform, None).expect("same dimensions");
    let mined = total_loss(&gt, &pred, &uniform, Some(&sel)).expect("same dimensions");
    let balanced = total_loss(&gt, &pred, &weights, Some(&sel)).expect("same dimensions");
    println!("\ntotal loss, uniform weights, whole domain:      {everything:.4}");
    println!("total loss, uniform weights, text + gamma 1:    {mined:.4}");
    println!("total loss, balanced weights, text + gamma 1:   {balanced:.4}");
}
