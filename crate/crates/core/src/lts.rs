//! Labelled transitions of the calculus.
//!
//! `term_transitions` derives the transitions of an arbitrary configuration
//! (after evaluating it, which realises the `≡` closure of `Red`);
//! `successors` lifts them to system states through `SF⁻¹` and `SF`.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ast::{ChannelId, Configuration, Loc, Network, Pattern, Process, Value};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::model::Model;
use crate::repsem::{sf_state, sf_state_owned, sfi_state, SysState};
use crate::verifier::LtsGraph;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Action {
    Tau,
    Send(ChannelId, Value),
    Recv(ChannelId, Value),
}

impl Action {
    pub fn is_tau(&self) -> bool {
        matches!(self, Action::Tau)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Tau => f.write_str("tau"),
            Action::Send(c, v) => write!(f, "{c}!<{v}>"),
            Action::Recv(c, v) => write!(f, "{c}?<{v}>"),
        }
    }
}

/// Which rule of the calculus produced a transition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CalcRule {
    Ti { ti: u32 },
    Stop { agent: u32 },
    Com { chan: ChannelId, from: Loc, to: Loc },
    Susp { by: Loc, target: u32 },
    PSusp { by: Loc, target: u32 },
    Tau { at: Loc },
    Snd { chan: ChannelId, at: Loc },
}

impl fmt::Display for CalcRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CalcRule::Ti { ti } => write!(f, "TI({ti})"),
            CalcRule::Stop { agent } => write!(f, "Stop({agent})"),
            CalcRule::Com { chan, from, to } => write!(f, "Com({chan},{from}->{to})"),
            CalcRule::Susp { by, target } => write!(f, "Susp({by} suspects {target})"),
            CalcRule::PSusp { by, target } => write!(f, "PSusp({by} suspects {target})"),
            CalcRule::Tau { at } => write!(f, "Tau({at})"),
            CalcRule::Snd { chan, at } => write!(f, "Snd({chan} at {at})"),
        }
    }
}

/// Rule `TI`: one τ-successor per live agent.
pub fn select_ti(c: &Configuration) -> Result<Vec<Configuration>> {
    if c.ti.is_some() {
        return Err(Error::TiAlreadySet);
    }
    Ok(c.live.iter().map(|&t| Configuration { ti: Some(t), ..c.clone() }).collect())
}

enum Local {
    Out(ChannelId, Value, Process),
    In(ChannelId, Pattern, Process),
    Tau(CalcRule, Process),
}

/// Prefix-level moves of one located process (the sum rules fold in here).
fn locals(loc: Loc, p: &Process, c: &Configuration, protect_ti: bool, out: &mut Vec<Local>) {
    match p {
        Process::Out(ch, crate::ast::Expr::Lit(v), k) => {
            if let Some(id) = ch.id() {
                out.push(Local::Out(id, v.clone(), (**k).clone()));
            }
        }
        Process::In(ch, x, k) => {
            if let Some(id) = ch.id() {
                out.push(Local::In(id, x.clone(), (**k).clone()));
            }
        }
        Process::Susp(i, k) => {
            if let Some(t) = i.lit() {
                let self_target = loc == Loc::Agent(t);
                let ti_target = c.ti == Some(t) && protect_ti;
                if !self_target && !ti_target {
                    out.push(Local::Tau(CalcRule::Susp { by: loc, target: t }, (**k).clone()));
                }
            }
        }
        Process::PSusp(i, k) => {
            if let Some(t) = i.lit() {
                if !c.is_live(Loc::Agent(t)) {
                    out.push(Local::Tau(CalcRule::PSusp { by: loc, target: t }, (**k).clone()));
                }
            }
        }
        Process::Tau(k) => out.push(Local::Tau(CalcRule::Tau { at: loc }, (**k).clone())),
        Process::Sum(a, b) => {
            locals(loc, a, c, protect_ti, out);
            locals(loc, b, c, protect_ti, out);
        }
        _ => {}
    }
}

fn rebuild(c: &Configuration, res: &BTreeSet<ChannelId>, comps: &[(Loc, Process)]) -> Configuration {
    let net = Network::product(comps.iter().map(|(l, p)| Network::at(*l, p.clone()))).restrict(res);
    c.with_net(net)
}

/// Every transition of `c` derivable from the rules of the calculus. The
/// targets are not evaluated.
pub fn term_transitions(model: &Model, c: &Configuration) -> Result<Vec<(CalcRule, Action, Configuration)>> {
    if c.ti.is_none() {
        return Ok(select_ti(c)?
            .into_iter()
            .map(|t| (CalcRule::Ti { ti: t.ti.expect("set") }, Action::Tau, t))
            .collect());
    }
    let mut ev = evaluate(c, &model.program)?;
    let (res, comps) = std::mem::replace(&mut ev.net, Network::Nil).into_flat();
    let moves: Vec<Vec<Local>> = comps
        .iter()
        .map(|(l, p)| {
            let mut v = Vec::new();
            if ev.is_live(*l) {
                locals(*l, p, &ev, model.protects_ti(), &mut v);
            }
            v
        })
        .collect();

    let mut out = Vec::new();
    for (k, ms) in moves.iter().enumerate() {
        let loc = comps[k].0;
        for m in ms {
            match m {
                Local::Tau(rule, cont) => {
                    let mut next = comps.clone();
                    next[k].1 = cont.clone();
                    out.push((*rule, Action::Tau, rebuild(&ev, &res, &next)));
                }
                Local::Out(ch, v, cont) => {
                    if !res.contains(ch) {
                        let mut next = comps.clone();
                        next[k].1 = cont.clone();
                        out.push((CalcRule::Snd { chan: *ch, at: loc }, Action::Send(*ch, v.clone()), rebuild(&ev, &res, &next)));
                    }
                    for (k2, ms2) in moves.iter().enumerate() {
                        if k2 == k {
                            continue;
                        }
                        for m2 in ms2 {
                            if let Local::In(ch2, x, cont2) = m2 {
                                if ch2 == ch {
                                    let mut next = comps.clone();
                                    next[k].1 = cont.clone();
                                    next[k2].1 = cont2.substitute(x, v)?;
                                    let rule = CalcRule::Com { chan: *ch, from: loc, to: comps[k2].0 };
                                    out.push((rule, Action::Tau, rebuild(&ev, &res, &next)));
                                }
                            }
                        }
                    }
                }
                Local::In(ch, _, _) => {
                    if !res.contains(ch) {
                        return Err(Error::OpenInput(ch.to_string()));
                    }
                }
            }
        }
    }

    if ev.budget > 0 {
        for &p in ev.live.iter().filter(|&&p| Some(p) != ev.ti) {
            let mut live = ev.live.clone();
            live.remove(&p);
            let next = Configuration { live, budget: ev.budget - 1, ti: ev.ti, net: rebuild(&ev, &res, &comps).net };
            out.push((CalcRule::Stop { agent: p }, Action::Tau, next));
        }
    }
    Ok(out)
}

/// Calculus-mode successors of a system state: expand, derive, re-extract.
pub fn successors(model: &Model, s: &SysState) -> Result<Vec<(CalcRule, Action, SysState)>> {
    let c = sfi_state(model, s)?;
    term_transitions(model, &c)?
        .into_iter()
        .map(|(rule, a, t)| Ok((rule, a, sf_state_owned(model, t)?)))
        .collect()
}

/// The initial system states, one per choice of trusted immortal.
pub fn initial_states(model: &Model) -> Result<Vec<SysState>> {
    select_ti(&model.initial())?.iter().map(|c| sf_state(model, c)).collect()
}

/// `{t | s ⇒ t}` in an explored graph.
pub fn weak_reach(g: &LtsGraph, s: u32) -> BTreeSet<u32> {
    let mut seen = BTreeSet::from([s]);
    let mut queue = VecDeque::from([s]);
    while let Some(x) = queue.pop_front() {
        for e in g.out_edges(x) {
            if g.label(e).action.is_tau() && seen.insert(e.to) {
                queue.push_back(e.to);
            }
        }
    }
    seen
}
