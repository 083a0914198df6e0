//! Pools detections from three quality-specific detectors and suppresses duplicates.
//!
//! cargo run --example nms_fusion

use qcia::routing::{fuse_detections, iou, nms, Detection, RoutingConfig};

fn main() {
    let face = [40.0, 30.0, 48.0, 52.0];
    let shifted = |dx: f64, s: f64| Detection::new([face[0] + dx, face[1] + dx / 2.0, face[2], face[3]], s);
    let per_model = vec![
        (0.6, vec![shifted(0.0, 0.92), Detection::new([5.0, 90.0, 20.0, 20.0], 0.31)]),
        (0.3, vec![shifted(3.0, 0.88)]),
        (0.1, vec![shifted(-4.0, 0.95), Detection::new([100.0, 4.0, 16.0, 16.0], 0.12)]),
    ];
    for (w, dets) in &per_model {
        for d in dets {
            println!("w {w:.1}  box {:?} score {:.2} iou-with-face {:.2}", d.bbox, d.score, iou(&d.bbox, &face));
        }
    }

    for weighted in [false, true] {
        let cfg = RoutingConfig { weighted_scores: weighted, ..RoutingConfig::default() };
        println!("\nfused (weighted scores: {weighted}):");
        for d in fuse_detections(&per_model, &cfg) {
            println!("  {:?} {:.3}", d.bbox, d.score);
        }
    }

    let all: Vec<Detection> = per_model.iter().flat_map(|(_, d)| d.iter().copied()).collect();
    println!("\nplain NMS at 0.3 keeps {} of {}", nms(&all, 0.3).len(), all.len());
}
