//! Trains the three quality networks on a degraded desk corpus and reports
//! held-out type and level accuracy.
//!
//! cargo run --release --example train_quality_predictor -- [train_images] [epochs]

use std::time::Instant;

use qcia::corpus::{degraded_quality_set, CorpusSpec};
use qcia::degrade::{QualityClass, QualityKind, QualityTaxonomy};
use qcia::neuralnet::{argmax, TrainConfig};
use qcia::qualitynet::{level_distance, predict_quality, train_predictor, ArchProfile, PredictorConfig};

fn main() -> qcia::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("numeric argument"));
    let train_count = args.next().unwrap_or(1200);
    let epochs = args.next().unwrap_or(12);
    let crops = args.next().unwrap_or(2);

    let tax = QualityTaxonomy::desk();
    let train_set = degraded_quality_set(&CorpusSpec { count: train_count, seed: 1, ..Default::default() }, &tax)?;
    let test_set = degraded_quality_set(&CorpusSpec { count: 330, seed: 2, ..Default::default() }, &tax)?;

    let pcfg = PredictorConfig::default();
    let tcfg = TrainConfig { epochs, batch_size: 16, seed: 7, ..TrainConfig::default() };
    let start = Instant::now();
    let (pred, history) = train_predictor(&train_set, &tax, &pcfg, ArchProfile::Desk, &tcfg, crops)?;
    println!("trained in {:.1?}", start.elapsed());
    for (name, h) in [("type", &history.type_net), ("bj", &history.bj_net), ("bl", &history.bl_net)] {
        let last = h.last().unwrap();
        println!("{name:>4}: final epoch loss {:.4} train acc {:.3}", last.loss, last.accuracy);
    }

    let (mut type_ok, mut level_total, mut level_near, mut level_exact, mut fused_near) = (0, 0, 0, 0, 0);
    for (img, truth) in &test_set {
        let p = predict_quality(&pred, img, &pcfg)?;
        type_ok += (p.type_scores.argmax() == truth.kind()) as usize;
        fused_near += matches!(level_distance(p.class, *truth), Some(d) if d <= 1) as usize;
        for (family, scores) in [(QualityKind::BJ, &p.bj_levels), (QualityKind::BL, &p.bl_levels)] {
            let label = match *truth {
                QualityClass::G => 0,
                c if c.kind() == family => c.level().unwrap(),
                _ => continue,
            };
            let guess = argmax(&scores.probs);
            level_total += 1;
            level_near += (guess.abs_diff(label) <= 1) as usize;
            level_exact += (guess == label) as usize;
        }
    }
    let n = test_set.len() as f64;
    println!("held-out type accuracy {:.3}", type_ok as f64 / n);
    println!("held-out level accuracy {:.3}, within one level {:.3}", level_exact as f64 / level_total as f64, level_near as f64 / level_total as f64);
    println!("fused class within one level {:.3}", fused_near as f64 / n);
    println!("total {:.1?}", start.elapsed());
    Ok(())
}
