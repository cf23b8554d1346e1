//! Per-state comparison of the calculus semantics with the representative
//! rules.
//!
//! ```text
//! cargo run --release --example correspondence -- 5,7 [budget]
//! ```

use ftcalc::model::{Model, ProblemInstance};
use ftcalc::verifier::{check_correspondence, Limits};

fn main() -> ftcalc::Result<()> {
    let mut args = std::env::args().skip(1);
    let values: Vec<u64> = args
        .next()
        .unwrap_or_else(|| "5,7".into())
        .split(',')
        .map(|v| v.parse().expect("values are naturals"))
        .collect();
    let budget = args.next().map(|b| b.parse().expect("budget is a natural"));
    let model = Model::new(ProblemInstance::new(values, budget)?)?;

    let start = std::time::Instant::now();
    let report = check_correspondence(&model, Limits::default())?;
    println!(
        "{} states, {} transitions checked in {:.1?}: {}",
        report.checked,
        report.transitions,
        start.elapsed(),
        if report.pass { "semantics agree" } else { "MISMATCH" }
    );
    for m in report.sound_failures.iter().chain(&report.complete_failures).take(3) {
        println!("  {} from {}", m.transition, m.state);
    }
    Ok(())
}
