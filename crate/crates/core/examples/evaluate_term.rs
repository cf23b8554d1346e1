//! Builds a small configuration by hand, lists its one-step evaluations and
//! prints the fixed point reached by `evaluate`.

use ftcalc::ast::{Channel, Configuration, Expr, Index, Loc, Network, Pattern, Process, Program, FnTable};
use ftcalc::eval::{eval_steps, evaluate};

fn main() -> ftcalc::Result<()> {
    let mut prog = Program { functions: FnTable::arithmetic(), ..Program::default() };
    // COUNT(k) = if k < 3 then c[1]!<k> || COUNT(k + 1) else 0
    let count = ftcalc::ast::Name::new("COUNT");
    let k = || Expr::var("k");
    prog.define(
        &count,
        Pattern::var("k"),
        Process::cond(
            Expr::call("lt", Expr::pair(k(), Expr::nat(3))),
            Process::par(
                Process::out(Channel::C(Index::Lit(1)), k()),
                Process::call(&count, Expr::call("add", Expr::pair(k(), Expr::nat(1)))),
            ),
            Process::Nil,
        ),
    );

    let net = Network::par(
        Network::at(Loc::Agent(1), Process::call(&count, Expr::nat(0))),
        Network::at(Loc::Agent(2), Process::out(Channel::C(Index::Lit(2)), Expr::nat(9))),
    );
    // agent 2 is dead, so E3 may discard its component
    let c = Configuration { live: [1].into(), budget: 0, ti: Some(1), net };

    println!("start: {c}");
    for (step, next) in eval_steps(&c, &prog)? {
        println!("  {:?} at {:?} -> {next}", step.rule, step.focus);
    }
    println!("normal form: {}", evaluate(&c, &prog)?);
    Ok(())
}
