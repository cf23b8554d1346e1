//! Validity, agreement, termination and the weak-bisimulation check against
//! the one-state specification that only emits `ok`.

use ftcalc::model::{Model, ProblemInstance};
use ftcalc::verifier::{check_bisimulation, check_properties, explore, Limits, Mode};

fn main() -> ftcalc::Result<()> {
    for values in [vec![4], vec![5, 7], vec![7, 5], vec![3, 3]] {
        for budget in 0..values.len() as u32 {
            let model = Model::new(ProblemInstance::new(values.clone(), Some(budget))?)?;
            let g = explore(&model, Mode::Representative, Limits::default())?;
            let p = check_properties(&model, &g)?;
            let b = check_bisimulation(&model, &g)?;
            println!(
                "U={values:?} budget={budget}: {} states  validity={} agreement={} termination={}  bisimilar={} ({} pairs)",
                p.states,
                p.validity,
                p.agreement,
                p.termination,
                b.bisimilar,
                b.relation.len()
            );
        }
    }
    Ok(())
}
