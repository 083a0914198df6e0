//! Metric of every class-specific analyzer on every class's test set.
//!
//! cargo run --release --example cross_quality_matrix -- [detect|recognize]

use qcia::eval::{cross_quality_matrix, CrossQualityConfig};
use qcia::routing::Task;

fn main() -> qcia::Result<()> {
    let task = match std::env::args().nth(1).as_deref() {
        Some("recognize") => Task::Recognize,
        _ => Task::Detect,
    };
    let report = cross_quality_matrix(&CrossQualityConfig { task, ..Default::default() })?;
    let m = report.matrix.as_ref().expect("matrix");
    print!("{:>6}", "");
    for l in &m.labels {
        print!("{l:>6}");
    }
    println!();
    for (label, row) in m.labels.iter().zip(&m.values) {
        print!("{label:>6}");
        for v in row {
            print!("{v:>6.2}");
        }
        println!();
    }
    let held = report.checks.iter().filter(|c| c.holds).count();
    println!("{held}/{} rows peak on the diagonal", report.checks.len());
    Ok(())
}
