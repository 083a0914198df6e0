//! Fuses type and level scores into a quality vector, picks the top-K analyzers and
//! routes one image through them.
//!
//! cargo run --example quality_routing

use qcia::degrade::{Payload, QualityKind, QualityTaxonomy};
use qcia::eval::SyntheticAnalyzerProfile;
use qcia::qualitynet::{fuse_quality, LevelScores, TypeScores};
use qcia::routing::{route, select_top_k, AnalyzerInput, AnalyzerOutput, AnalyzerRegistry, RoutingConfig, Task};

fn main() -> qcia::Result<()> {
    let tax = QualityTaxonomy::desk();
    // a mildly blurred image: mostly BL, levels 2 and 3 most likely
    let t = TypeScores::new(0.05, 0.15, 0.80);
    let bj = LevelScores { family: QualityKind::BJ, probs: vec![0.3, 0.4, 0.2, 0.05, 0.03, 0.02] };
    let bl = LevelScores { family: QualityKind::BL, probs: vec![0.1, 0.1, 0.35, 0.3, 0.1, 0.05] };
    let fused = fuse_quality(&t, &bj, &bl)?;
    for (i, p) in fused.probs.iter().enumerate() {
        println!("{:<6} {p:.4}", tax.class_at(i)?.to_string());
    }

    let truth = Payload { boxes: Some(vec![[32.0, 28.0, 44.0, 44.0]]), identity: Some(5) };
    let input = AnalyzerInput { image: None, width: 128, height: 128, truth: Some(&truth), true_class: Some(tax.class_at(8)?), key: 1 };
    let reg = AnalyzerRegistry::synthetic(Task::Detect, &tax, &SyntheticAnalyzerProfile::default())?;
    for k in [1, 3, 5] {
        let selected = select_top_k(&fused, k, &tax)?;
        let picked: Vec<String> = selected.iter().map(|(c, w)| format!("{c}@{w:.2}")).collect();
        let out = route(&reg, &selected, &input, &RoutingConfig { k, ..RoutingConfig::default() })?;
        let AnalyzerOutput::Detections(dets) = out else { unreachable!() };
        let best = dets.first().map(|d| format!("{:?} {:.2}", d.bbox, d.score)).unwrap_or_default();
        println!("K={k}: [{}] -> {} detections, top {best}", picked.join(", "), dets.len());
    }
    Ok(())
}
