//! The evaluation relation `>`, its maximal closure and canonical ordering.
//!
//! `evaluate` is a deterministic normaliser; by confluence it agrees with
//! every maximal `>`-sequence, which `verifier::check_confluence` tests
//! against the one-step relation `eval_steps`.

use std::fmt;

use serde::Serialize;

use crate::ast::{eval_expr, Channel, Configuration, Expr, Loc, Network, Process, Program, Value};
use crate::error::{Error, Result};
use crate::model::Model;

pub const DEFAULT_EVAL_BUDGET: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum EvalRule {
    E1,
    E2,
    E3,
    E4,
    E5,
    EOut,
    EConst,
    EIfTrue,
    EIfFalse,
}

impl fmt::Display for EvalRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// One `>` step: the rule and the path to the redex (0 = left / body, 1 = right).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct EvalStep {
    pub rule: EvalRule,
    pub focus: Vec<u8>,
}

fn truthy(e: &Expr, prog: &Program) -> Result<bool> {
    match eval_expr(e, &prog.functions)? {
        Value::Nat(k) => Ok(k > 0),
        v => Err(Error::TypeMismatch { func: "if".into(), arg: v }),
    }
}

/// Resolves a chain of conditionals whose conditions are closed.
fn resolve_ifs<'a>(mut p: &'a Process, prog: &Program) -> Result<&'a Process> {
    while let Process::If(e, t, f) = p {
        p = if truthy(e, prog)? { t } else { f };
    }
    Ok(p)
}

/// Unfolds `K(e)`, i.e. `P{⟦e⟧/X}`.
fn unfold(k: &crate::ast::Name, e: &Expr, prog: &Program) -> Result<Process> {
    let eq = prog.equation(k)?;
    let v = eval_expr(e, &prog.functions)?;
    eq.body.substitute(&eq.param, &v)
}

/// Unfolds `K(e)` unless it is idle: a constant call whose body resolves
/// straight back to itself (a disabled wrapper), where unfolding would only
/// reproduce the call. An idle call with a literal argument is a fixed
/// point; with a non-literal argument it takes one step to the literal form.
fn unfold_unless_idle(k: &crate::ast::Name, e: &Expr, prog: &Program) -> Result<Option<Process>> {
    let body = unfold(k, e, prog)?;
    let idle = match resolve_ifs(&body, prog)? {
        Process::Call(k2, e2) if k2 == k => eval_expr(e2, &prog.functions)? == eval_expr(e, &prog.functions)?,
        _ => false,
    };
    Ok(if idle { None } else { Some(body) })
}

/// The single `>` step at a located process, if any (the located rules
/// other than E3).
fn local_step(p: &Process, prog: &Program) -> Result<Option<(EvalRule, Network)>> {
    Ok(match p {
        Process::Nil => Some((EvalRule::E2, Network::Nil)),
        Process::Out(c, e, k) if !e.is_lit() => {
            let v = eval_expr(e, &prog.functions)?;
            Some((EvalRule::EOut, Network::Located(Loc::Star, Process::Out(c.clone(), Expr::Lit(v), k.clone()))))
        }
        Process::Call(k, e) => match unfold_unless_idle(k, e, prog)? {
            Some(body) => Some((EvalRule::EConst, Network::Located(Loc::Star, body))),
            None if e.is_lit() => None,
            None => {
                let v = eval_expr(e, &prog.functions)?;
                Some((EvalRule::EConst, Network::Located(Loc::Star, Process::Call(k.clone(), Expr::Lit(v)))))
            }
        },
        Process::If(e, t, f) => Some(if truthy(e, prog)? {
            (EvalRule::EIfTrue, Network::Located(Loc::Star, (**t).clone()))
        } else {
            (EvalRule::EIfFalse, Network::Located(Loc::Star, (**f).clone()))
        }),
        Process::Par(a, b) => Some((
            EvalRule::E1,
            Network::par(Network::Located(Loc::Star, (**a).clone()), Network::Located(Loc::Star, (**b).clone())),
        )),
        _ => None,
    })
}

/// Re-locates a network produced by `local_step` (which uses `⋆` as a
/// placeholder) at `loc`.
fn relocate(n: Network, loc: Loc) -> Network {
    match n {
        Network::Located(_, p) => Network::Located(loc, p),
        Network::Par(a, b) => Network::par(relocate(*a, loc), relocate(*b, loc)),
        other => other,
    }
}

/// All one-step `>`-successors.
pub fn eval_steps(c: &Configuration, prog: &Program) -> Result<Vec<(EvalStep, Configuration)>> {
    let mut out = Vec::new();
    let mut path = Vec::new();
    steps_in(&c.net, c, prog, &mut path, &mut |step, net| out.push((step, c.with_net(net))))?;
    Ok(out)
}

fn steps_in(
    n: &Network,
    c: &Configuration,
    prog: &Program,
    path: &mut Vec<u8>,
    emit: &mut dyn FnMut(EvalStep, Network),
) -> Result<()> {
    match n {
        Network::Nil => {}
        Network::Located(l, p) => {
            if !c.is_live(*l) {
                emit(EvalStep { rule: EvalRule::E3, focus: path.clone() }, Network::Nil);
            } else if let Some((rule, m)) = local_step(p, prog)? {
                emit(EvalStep { rule, focus: path.clone() }, relocate(m, *l));
            }
        }
        Network::Par(a, b) => {
            if **a == Network::Nil {
                emit(EvalStep { rule: EvalRule::E4, focus: path.clone() }, (**b).clone());
            }
            if **b == Network::Nil {
                emit(EvalStep { rule: EvalRule::E5, focus: path.clone() }, (**a).clone());
            }
            path.push(0);
            steps_in(a, c, prog, path, &mut |s, m| emit(s, Network::Par(Box::new(m), b.clone())))?;
            path.pop();
            path.push(1);
            steps_in(b, c, prog, path, &mut |s, m| emit(s, Network::Par(a.clone(), Box::new(m))))?;
            path.pop();
        }
        Network::Res(inner, ch) => {
            path.push(0);
            steps_in(inner, c, prog, path, &mut |s, m| emit(s, Network::Res(Box::new(m), *ch)))?;
            path.pop();
        }
    }
    Ok(())
}

/// `>*` with the default step budget.
pub fn evaluate(c: &Configuration, prog: &Program) -> Result<Configuration> {
    evaluate_with_budget(c, prog, DEFAULT_EVAL_BUDGET)
}

/// `>*`: the unique `>`-normal form, or `NonTermination` once `budget`
/// steps have been spent.
pub fn evaluate_with_budget(c: &Configuration, prog: &Program, budget: usize) -> Result<Configuration> {
    evaluate_owned(c.clone(), prog, budget)
}

/// [`evaluate_with_budget`] on an owned configuration; avoids copying the
/// components that are already normal.
pub fn evaluate_owned(c: Configuration, prog: &Program, budget: usize) -> Result<Configuration> {
    let mut left = budget;
    let Configuration { live, budget: crash_budget, ti, net } = c;
    let net = norm_net(net, &live, prog, &mut left, budget)?;
    Ok(Configuration { live, budget: crash_budget, ti, net })
}

fn spend(left: &mut usize, budget: usize) -> Result<()> {
    if *left == 0 {
        return Err(Error::NonTermination(budget));
    }
    *left -= 1;
    Ok(())
}

fn norm_net(
    n: Network,
    live: &std::collections::BTreeSet<u32>,
    prog: &Program,
    left: &mut usize,
    budget: usize,
) -> Result<Network> {
    match n {
        Network::Nil => Ok(Network::Nil),
        Network::Located(l, p) => {
            let is_live = match l {
                Loc::Star => true,
                Loc::Agent(k) => live.contains(&k),
            };
            if !is_live {
                spend(left, budget)?;
                return Ok(Network::Nil);
            }
            norm_proc(l, p, prog, left, budget)
        }
        Network::Par(a, b) => {
            let a = norm_net(*a, live, prog, left, budget)?;
            let b = norm_net(*b, live, prog, left, budget)?;
            join(a, b, left, budget)
        }
        Network::Res(inner, ch) => Ok(Network::Res(Box::new(norm_net(*inner, live, prog, left, budget)?), ch)),
    }
}

/// `A ∥ B` after E4/E5.
fn join(a: Network, b: Network, left: &mut usize, budget: usize) -> Result<Network> {
    Ok(match (a, b) {
        (Network::Nil, b) => {
            spend(left, budget)?;
            b
        }
        (a, Network::Nil) => {
            spend(left, budget)?;
            a
        }
        (a, b) => Network::par(a, b),
    })
}

/// Same steps as `local_step`, taken in place.
fn norm_proc(l: Loc, mut p: Process, prog: &Program, left: &mut usize, budget: usize) -> Result<Network> {
    loop {
        p = match p {
            Process::Nil => {
                spend(left, budget)?;
                return Ok(Network::Nil);
            }
            Process::Out(c, e, k) if !e.is_lit() => {
                spend(left, budget)?;
                Process::Out(c, Expr::Lit(eval_expr(&e, &prog.functions)?), k)
            }
            Process::Call(k, e) => match unfold_unless_idle(&k, &e, prog)? {
                Some(body) => {
                    spend(left, budget)?;
                    body
                }
                None if e.is_lit() => return Ok(Network::Located(l, Process::Call(k, e))),
                None => {
                    spend(left, budget)?;
                    let v = eval_expr(&e, &prog.functions)?;
                    Process::Call(k, Expr::Lit(v))
                }
            },
            Process::If(e, t, f) => {
                spend(left, budget)?;
                std::sync::Arc::unwrap_or_clone(if truthy(&e, prog)? { t } else { f })
            }
            Process::Par(a, b) => {
                spend(left, budget)?;
                let na = norm_proc(l, std::sync::Arc::unwrap_or_clone(a), prog, left, budget)?;
                let nb = norm_proc(l, std::sync::Arc::unwrap_or_clone(b), prog, left, budget)?;
                return join(na, nb, left, budget);
            }
            other => return Ok(Network::Located(l, other)),
        };
    }
}

/// Whether `c` has no `>`-successor.
pub fn is_fixed_point(c: &Configuration, prog: &Program) -> Result<bool> {
    Ok(eval_steps(c, prog)?.is_empty())
}

/// Segments of a fully evaluated reachable configuration, in canonical order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Segment {
    AOut,
    BOut,
    COut,
    C1Guard,
    C2Guard,
    Wrapper,
}

/// Segment and intra-segment key of a located component.
pub fn classify(loc: Loc, p: &Process) -> Option<(Segment, Vec<u32>)> {
    let lits = |c: &Channel| c.id();
    match (loc, p) {
        (Loc::Agent(_), Process::Out(c, e, k)) if e.is_lit() && **k == Process::Nil => match lits(c)? {
            crate::ast::ChannelId::A { sender, receiver, round } => Some((Segment::AOut, vec![sender, receiver, round])),
            crate::ast::ChannelId::B { sender, receiver } => Some((Segment::BOut, vec![sender, receiver])),
            crate::ast::ChannelId::C { agent } => Some((Segment::COut, vec![agent])),
            crate::ast::ChannelId::Ok => None,
        },
        (Loc::Agent(p), Process::Sum(a, b)) => match (&**a, &**b) {
            (Process::In(c, _, _), Process::Susp(..)) => match lits(c)? {
                crate::ast::ChannelId::A { round, .. } => Some((Segment::C1Guard, vec![p, round])),
                crate::ast::ChannelId::B { .. } => Some((Segment::C2Guard, vec![p])),
                _ => None,
            },
            _ => None,
        },
        (Loc::Star, Process::Out(Channel::Ok, _, _))
        | (Loc::Star, Process::Sum(..))
        | (Loc::Star, Process::Call(..)) => Some((Segment::Wrapper, vec![])),
        _ => None,
    }
}

/// Flattens, hoists the restriction group outwards (sorted) and sorts the
/// components by segment and key.
pub fn canonical_order(c: &Configuration) -> Result<Configuration> {
    let (res, comps) = c.net.flatten();
    let mut keyed = comps
        .into_iter()
        .map(|(l, p)| match classify(l, &p) {
            Some((seg, key)) => Ok(((seg, key), (l, p))),
            None => Err(Error::NotFullyEvaluated(format!("{l}[{p}]"))),
        })
        .collect::<Result<Vec<_>>>()?;
    keyed.sort();
    let net = Network::product(keyed.into_iter().map(|(_, (l, p))| Network::Located(l, p))).restrict(&res);
    Ok(c.with_net(net))
}

/// `≡` on reachable configurations: equality of standard-form representatives.
pub fn congruent(model: &Model, a: &Configuration, b: &Configuration) -> Result<bool> {
    Ok(crate::repsem::sf(model, a)? == crate::repsem::sf(model, b)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{ChannelId, FnTable, Index, Name, Pattern};
    use std::collections::BTreeSet;

    fn ch(k: u32) -> Channel {
        Channel::C(Index::Lit(k))
    }

    fn conf(live: &[u32], net: Network) -> Configuration {
        Configuration { live: live.iter().copied().collect::<BTreeSet<_>>(), budget: 0, ti: Some(1), net }
    }

    fn prog() -> Program {
        Program { functions: FnTable::arithmetic(), ..Program::default() }
    }

    fn one_plus_one() -> Expr {
        Expr::call("add", Expr::pair(Expr::nat(1), Expr::nat(1)))
    }

    /// `ℓ[if 1 then (c̄⟨1+1⟩.P ∥ Q) else R]`, with P = d̄⟨3⟩, Q = ē⟨4⟩, R = 0.
    fn worked_example() -> Configuration {
        let p = Process::out(ch(2), Expr::nat(3));
        let q = Process::out(ch(3), Expr::nat(4));
        let body = Process::cond(
            Expr::nat(1),
            Process::par(Process::Out(ch(1), one_plus_one(), std::sync::Arc::new(p)), q),
            Process::Nil,
        );
        conf(&[1], Network::at(Loc::Agent(1), body))
    }

    #[test]
    fn if_true_single_successor() {
        let c = worked_example();
        let s = eval_steps(&c, &prog()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].0.rule, EvalRule::EIfTrue);
        let Network::Located(_, Process::Par(..)) = &s[0].1.net else { panic!("expected ℓ[_ ∥ _]") };
    }

    #[test]
    fn worked_example_evaluates_by_hand() {
        // if-true, then E1, then EOut on the left component
        let expected = Network::par(
            Network::at(Loc::Agent(1), Process::Out(ch(1), Expr::nat(2), std::sync::Arc::new(Process::out(ch(2), Expr::nat(3))))),
            Network::at(Loc::Agent(1), Process::out(ch(3), Expr::nat(4))),
        );
        assert_eq!(evaluate(&worked_example(), &prog()).unwrap().net, expected);
    }

    #[test]
    fn nil_and_dead_locations_vanish() {
        let c = conf(&[1], Network::at(Loc::Agent(1), Process::Nil));
        let s = eval_steps(&c, &prog()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!((s[0].0.rule, &s[0].1.net), (EvalRule::E2, &Network::Nil));

        let c = conf(&[1], Network::at(Loc::Agent(2), Process::out(ch(1), Expr::nat(1))));
        let s = eval_steps(&c, &prog()).unwrap();
        assert_eq!((s[0].0.rule, &s[0].1.net), (EvalRule::E3, &Network::Nil));

        let star = conf(&[], Network::at(Loc::Star, Process::out(ch(1), Expr::nat(1))));
        assert!(eval_steps(&star, &prog()).unwrap().is_empty());
    }

    #[test]
    fn nil_units_are_dropped() {
        let a = Network::at(Loc::Agent(1), Process::out(ch(1), Expr::nat(1)));
        let c = conf(&[1], Network::par(Network::Nil, a.clone()));
        let s = eval_steps(&c, &prog()).unwrap();
        assert_eq!(s.iter().map(|x| x.0.rule).collect::<Vec<_>>(), vec![EvalRule::E4]);
        let c = conf(&[1], Network::par(a.clone(), Network::Nil));
        assert_eq!(eval_steps(&c, &prog()).unwrap()[0].0.rule, EvalRule::E5);
        assert_eq!(evaluate(&c, &prog()).unwrap().net, a);
    }

    #[test]
    fn fixed_point_is_unchanged() {
        let c = evaluate(&worked_example(), &prog()).unwrap();
        assert!(is_fixed_point(&c, &prog()).unwrap());
        assert_eq!(evaluate(&c, &prog()).unwrap(), c);
    }

    #[test]
    fn constants_unfold_and_idle_calls_stop() {
        let mut pr = prog();
        // K(x) = if x == 0 then K(x) else c̄⟨x⟩
        let k = Name::new("K");
        pr.define(
            &k,
            Pattern::var("x"),
            Process::cond(
                Expr::call("eq", Expr::pair(Expr::var("x"), Expr::nat(0))),
                Process::call(&k, Expr::var("x")),
                Process::out(ch(1), Expr::var("x")),
            ),
        );
        let c = conf(&[1], Network::at(Loc::Agent(1), Process::call(&k, Expr::nat(5))));
        assert_eq!(
            evaluate(&c, &pr).unwrap().net,
            Network::at(Loc::Agent(1), Process::out(ch(1), Expr::nat(5)))
        );
        let idle = conf(&[1], Network::at(Loc::Agent(1), Process::call(&k, Expr::nat(0))));
        assert!(eval_steps(&idle, &pr).unwrap().is_empty());
        let idle2 = conf(&[1], Network::at(Loc::Agent(1), Process::call(&k, Expr::call("sub", Expr::pair(Expr::nat(1), Expr::nat(1))))));
        assert_eq!(evaluate(&idle2, &pr).unwrap(), idle);
        let missing = conf(&[1], Network::at(Loc::Agent(1), Process::call(&Name::new("J"), Expr::nat(0))));
        assert_eq!(eval_steps(&missing, &pr), Err(Error::UndefinedConstant(Name::new("J"))));
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let mut pr = prog();
        // L(x) = L(x + 1) never settles
        let l = Name::new("L");
        pr.define(&l, Pattern::var("x"), Process::call(&l, Expr::call("add", Expr::pair(Expr::var("x"), Expr::nat(1)))));
        let c = conf(&[1], Network::at(Loc::Agent(1), Process::call(&l, Expr::nat(0))));
        assert_eq!(evaluate_with_budget(&c, &pr, 100), Err(Error::NonTermination(100)));
    }

    #[test]
    fn restriction_and_par_are_congruence_contexts() {
        let c = worked_example();
        let wrapped = c.with_net(Network::Res(Box::new(c.net.clone()), ChannelId::C { agent: 9 }));
        let s = eval_steps(&wrapped, &prog()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].0.focus, vec![0]);
    }

    #[test]
    fn canonical_order_examples() {
        let b = Network::at(Loc::Agent(2), Process::out(Channel::B(Index::Lit(2), Index::Lit(1)), Expr::nat(1)));
        let a = Network::at(
            Loc::Agent(1),
            Process::out(Channel::A(Index::Lit(1), Index::Lit(2), Index::Lit(1)), Expr::nat(2)),
        );
        let c = conf(&[1, 2], Network::par(b.clone(), a.clone()));
        let o = canonical_order(&c).unwrap();
        assert_eq!(o.net, Network::par(a.clone(), b));
        assert_eq!(canonical_order(&o).unwrap(), o);
        let single = conf(&[1], a);
        assert_eq!(canonical_order(&single).unwrap(), single);
        let junk = conf(&[1], Network::at(Loc::Agent(1), Process::Tau(std::sync::Arc::new(Process::Nil))));
        assert!(matches!(canonical_order(&junk), Err(Error::NotFullyEvaluated(_))));
    }
}
