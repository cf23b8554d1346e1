//! Explores the state graph in both modes and prints statistics; with
//! `--dot` the representative graph is written to stdout instead.
//!
//! ```text
//! cargo run --release --example explore_graph -- 5,7 [--dot]
//! ```

use ftcalc::model::{Model, ProblemInstance};
use ftcalc::verifier::{explore, stats, to_dot, Limits, Mode};

fn main() -> ftcalc::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dot = args.iter().any(|a| a == "--dot");
    let values: Vec<u64> = args
        .iter()
        .find(|a| !a.starts_with("--"))
        .map_or("5,7", String::as_str)
        .split(',')
        .map(|v| v.parse().expect("values are naturals"))
        .collect();
    let model = Model::new(ProblemInstance::new(values, None)?)?;

    if dot {
        print!("{}", to_dot(&explore(&model, Mode::Representative, Limits::default())?));
        return Ok(());
    }
    for mode in [Mode::Representative, Mode::Calculus] {
        let start = std::time::Instant::now();
        let g = explore(&model, mode, Limits::default())?;
        let st = stats(&g);
        println!(
            "{mode:>14}: {:>8} states {:>9} transitions {:>5} terminal  decided {:?}  ({:.1?})",
            st.states,
            st.transitions,
            st.terminal,
            st.decided_values,
            start.elapsed()
        );
    }
    Ok(())
}
