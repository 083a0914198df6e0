//! Standard vs mixed-trained vs oracle vs top-K routing on a mixed-quality test set
//! with simulated analyzers and a simulated quality estimator.
//!
//! cargo run --release --example mixed_quality -- [detect|recognize] [items] [seed]

use qcia::degrade::{assign_mixed_classes, QualityTaxonomy};
use qcia::eval::{mixed_quality_experiment, synthetic_items, MixedExperimentConfig, SimulatedEstimator, SyntheticAnalyzer, SyntheticAnalyzerProfile};
use qcia::routing::{AnalyzerRegistry, Task};

fn main() -> qcia::Result<()> {
    let mut args = std::env::args().skip(1);
    let task = match args.next().as_deref() {
        Some("recognize") => Task::Recognize,
        _ => Task::Detect,
    };
    let items: usize = args.next().map(|a| a.parse().expect("item count")).unwrap_or(600);
    let seed: u64 = args.next().map(|a| a.parse().expect("seed")).unwrap_or(0);

    let tax = QualityTaxonomy::desk();
    let profile = SyntheticAnalyzerProfile { seed, ..Default::default() };
    let test = synthetic_items(&assign_mixed_classes(items, &tax, seed), 128, profile.identities as u32, seed);
    let registry = AnalyzerRegistry::synthetic(task, &tax, &profile)?;
    let pooled = SyntheticAnalyzer::pooled(profile, task, &tax)?;
    let estimator = SimulatedEstimator { taxonomy: tax, seed, ..Default::default() };
    let cfg = MixedExperimentConfig { seed, ..Default::default() };

    let report = mixed_quality_experiment(&cfg, &test, &registry, Some(&pooled), &estimator)?;
    print!("{}", report.settings_csv());
    for c in &report.checks {
        println!("{:<5} {}", if c.holds { "ok" } else { "FAIL" }, c.name);
    }
    Ok(())
}
