//! Scores a hand-built detection map against truth across a sweep of IOU
//! thresholds, including a pair that sits exactly on 0.5.

use textfield::{match_and_score, InstanceMap};

/// Paints an inclusive rectangle with one label.
fn paint(map: &mut InstanceMap, label: u32, x0: u32, y0: u32, x1: u32, y1: u32) {
    for y in y0..=y1 {
        for x in x0..=x1 {
            map.set(x, y, label);
        }
    }
}

fn main() {
    let (w, h) = (64u32, 48u32);
    let mut truth = InstanceMap::new(w, h);
    let mut dets = InstanceMap::new(w, h);

    // gt 1 / det 1: identical boxes, IOU 1.
    paint(&mut truth, 1, 2, 2, 13, 9);
    paint(&mut dets, 1, 2, 2, 13, 9);
    // gt 2 / det 2: 15x10 boxes shifted 5, overlap 100 of union 200, IOU 1/2.
    paint(&mut truth, 2, 20, 2, 34, 11);
    paint(&mut dets, 2, 25, 2, 39, 11);
    // gt 3 / det 3: overlap 80 of union 120, IOU 2/3.
    paint(&mut truth, 3, 2, 20, 11, 29);
    paint(&mut dets, 3, 2, 22, 11, 31);
    // gt 4 goes undetected; det 4 detects nothing.
    paint(&mut truth, 4, 40, 20, 49, 29);
    paint(&mut dets, 4, 40, 36, 49, 45);

    println!("4 truth boxes, 4 detections: one exact, one IOU 1/2, one IOU 2/3, one stray each\n");
    println!("threshold   TP  FP  FN   precision  recall  f_measure");
    for tau in [0.30, 0.45, 0.499, 0.50, 0.60, 0.667, 0.80] {
        let r = match_and_score(&dets, &truth, tau).expect("same dimensions");
        println!(
            "   {tau:<8} {:>2}  {:>2}  {:>2}     {:.4}    {:.4}    {:.4}",
            r.true_positives,
            r.false_positives,
            r.false_negatives,
            r.precision,
            r.recall,
            r.f_measure
        );
    }

    // Matching is strict: an IOU of exactly 0.5 fails the 0.5 threshold.
    let at_half = match_and_score(&dets, &truth, 0.5).expect("same dimensions");
    assert_eq!(at_half.true_positives, 2);
    let below = match_and_score(&dets, &truth, 0.499).expect("same dimensions");
    assert_eq!(below.true_positives, 3);
    println!(
        "\nthe IOU 1/2 pair counts at tau=0.499 but not at tau=0.5: candidates need IOU > tau"
    );
}
