//! Extracts the standard-form representative of a reachable configuration,
//! expands it back to a term and checks the round trip.

use ftcalc::lts::term_transitions;
use ftcalc::model::{Model, ProblemInstance};
use ftcalc::repsem::{sf_state, sfi_state};

fn main() -> ftcalc::Result<()> {
    let model = Model::new(ProblemInstance::new(vec![5, 7], None)?)?;
    let init = model.initial();
    println!("initial configuration:\n  {init}\n");

    // choose the trusted immortal, then take the first raw transition
    let (rule, _, with_ti) = term_transitions(&model, &init)?.remove(0);
    let (next, _, raw) = term_transitions(&model, &with_ti)?.remove(0);
    println!("after {rule} and {next}:\n  {raw}\n");

    let s = sf_state(&model, &raw)?;
    println!("representative (digest {}):\n{s}\n", s.rep.digest());

    let back = sfi_state(&model, &s)?;
    println!("expanded again:\n  {back}\n");
    assert_eq!(sf_state(&model, &back)?, s);
    println!("sf(sfi(R)) = R holds");
    Ok(())
}
