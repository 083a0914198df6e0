//! Average precision and a confusion matrix on hand-made data.
//!
//! cargo run --example detection_metrics

use qcia::eval::{adjacent_accuracy, confusion, mean_ap};
use qcia::routing::Detection;

fn main() -> qcia::Result<()> {
    let gts = vec![vec![[10.0, 10.0, 20.0, 20.0]], vec![[0.0, 0.0, 10.0, 10.0], [50.0, 50.0, 10.0, 10.0]]];
    let dets = vec![
        vec![Detection::new([11.0, 10.0, 20.0, 20.0], 0.9), Detection::new([60.0, 60.0, 5.0, 5.0], 0.7)],
        vec![Detection::new([0.0, 1.0, 10.0, 10.0], 0.8), Detection::new([30.0, 0.0, 10.0, 10.0], 0.4)],
    ];
    for thr in [0.3, 0.5, 0.75, 0.9] {
        println!("mAP@{thr} = {:.4}", mean_ap(&dets, &gts, thr)?);
    }

    let truth = [0, 1, 2, 3, 4, 5, 1, 2, 3, 4];
    let preds = [0, 1, 3, 3, 5, 5, 2, 2, 1, 4];
    let cm = confusion(&preds, &truth, 6)?;
    print!("{}", cm.to_csv());
    println!("exact {:.2}, within one level {:.2}", cm.accuracy(), adjacent_accuracy(&cm, 1));
    Ok(())
}
