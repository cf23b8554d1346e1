//! Drives the representative rules directly: a random-free walk that always
//! prefers the first enabled rule, printing each step.

use ftcalc::lts::initial_states;
use ftcalc::model::{Model, ProblemInstance};
use ftcalc::repsem::rep_successors;

fn main() -> ftcalc::Result<()> {
    let model = Model::new(ProblemInstance::new(vec![5, 7], Some(1))?)?;
    for mut s in initial_states(&model)? {
        println!("== trusted immortal {} ==", s.rep.ti);
        loop {
            let succ = rep_successors(&model, &s)?;
            let names: Vec<String> = succ.iter().map(|(r, _)| r.to_string()).collect();
            let Some((rule, next)) = succ.into_iter().next() else { break };
            println!("{rule}   (enabled: {})", names.join(" "));
            s = next;
        }
        println!("final:\n{s}\n");
    }
    Ok(())
}
