//! Runs the full check suite against each deliberately broken variant of
//! the encoding and shows the first failure it reports.

use ftcalc::model::{Model, Mutation, ProblemInstance};
use ftcalc::verifier::{verify_all, Limits};

fn main() -> ftcalc::Result<()> {
    for m in Mutation::ALL {
        let model = Model::with_mutation(ProblemInstance::new(vec![5, 7], None)?, Some(m))?;
        let r = verify_all(&model, Limits::default())?;
        let first = r
            .correspondence
            .sound_failures
            .iter()
            .chain(&r.correspondence.complete_failures)
            .map(|f| format!("correspondence: {}", f.transition))
            .chain(r.correspondence.errors.iter().map(|e| format!("error: {e}")))
            .chain(r.properties.iter().flat_map(|p| p.failures.iter().cloned()))
            .next()
            .unwrap_or_else(|| "none".into());
        println!("{m:>18}: {}  first failure: {first}", if r.pass { "passes (!)" } else { "caught" });
    }
    Ok(())
}
