//! Standard-form representatives: extraction from fully evaluated
//! configurations (`sf`), expansion back to terms (`sfi`) and the
//! operational rules that act on representatives directly.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ast::{
    Bindings, Channel, ChannelId, Configuration, Expr, Index, Loc, Name, Network, Pattern, Process, Value,
};
use crate::error::{Error, Result};
use crate::eval::{classify, evaluate_owned, Segment, DEFAULT_EVAL_BUDGET};
use crate::lts::Action;
use crate::model::{
    correct_fn, getfst, updatek, updater, KnowVector, Model, MsgSet, Mutation, Phase1Entry, Phase2Entry,
    RelayVector, Slot, Template,
};

/// A Phase-1 message `ā_{p,i,r}⟨Δ⟩` in transit.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Out1 {
    pub p: u32,
    pub i: u32,
    pub r: u32,
    pub payload: RelayVector,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Out2 {
    pub p: u32,
    pub i: u32,
    pub payload: KnowVector,
}

/// A decision `c̄_p⟨v⟩` on its way to the wrapper.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Out3 {
    pub p: u32,
    pub v: u64,
}

/// Agent `p` collecting round-`r` messages, next awaiting sender `i`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct In1 {
    pub p: u32,
    pub r: u32,
    pub v: KnowVector,
    pub m: MsgSet,
    pub i: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct In2 {
    pub p: u32,
    pub v: KnowVector,
    pub m: MsgSet,
    pub i: u32,
}

/// `WRAP(j, w, b)`; `j = 0` stands for `ok̄`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Wrap {
    pub j: u32,
    pub w: Slot,
    pub b: u8,
}

impl fmt::Display for Wrap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = self.w.map_or("⊥".to_string(), |v| v.to_string());
        write!(f, "({}, {w}, {})", self.j, self.b)
    }
}

/// `(Γ, ti, Out1, Out2, Out3, In1, In2, Wj, Ww, Wb)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Representative {
    pub live: BTreeSet<u32>,
    pub budget: u32,
    pub ti: u32,
    pub out1: BTreeSet<Out1>,
    pub out2: BTreeSet<Out2>,
    pub out3: BTreeSet<Out3>,
    pub in1: BTreeSet<In1>,
    pub in2: BTreeSet<In2>,
    pub wrap: Wrap,
}

/// A node of either semantics: a representative plus whether the
/// observable `ok̄` has already been emitted (after which the wrapper
/// component is gone and `renamewrap` restored `WRAP(0, ⊥, 1)`).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SysState {
    pub rep: Representative,
    pub ok_sent: bool,
}

impl Representative {
    /// Sorted-key JSON rendering.
    pub fn canonical_json(&self) -> String {
        serde_json::to_value(self).expect("representatives serialise").to_string()
    }

    /// Short hex digest of the canonical JSON, for graph labels.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))[..12].to_string()
    }

    /// Agents that still have something to do.
    pub fn undecided(&self) -> impl Iterator<Item = u32> + '_ {
        self.in1.iter().map(|e| e.p).chain(self.in2.iter().map(|e| e.p))
    }

    /// The representative invariants: ids live, bounds respected, one role
    /// per agent, at most one message per key.
    pub fn check_invariants(&self, n: u32) -> Result<()> {
        let bad = |m: String| Err(Error::InvariantViolation(m));
        let live = |p: u32| self.live.contains(&p);
        if !self.live.iter().all(|&p| (1..=n).contains(&p)) {
            return bad("live set outside 1..n".into());
        }
        if !live(self.ti) {
            return bad(format!("trusted immortal {} is not live", self.ti));
        }
        let mut keys1 = BTreeSet::new();
        for e in &self.out1 {
            if !live(e.p) || !(1..=n).contains(&e.i) || e.r == 0 || e.r >= n || !keys1.insert((e.p, e.i, e.r)) {
                return bad(format!("bad out1 entry ({}, {}, {})", e.p, e.i, e.r));
            }
        }
        let mut keys2 = BTreeSet::new();
        for e in &self.out2 {
            if !live(e.p) || !(1..=n).contains(&e.i) || !keys2.insert((e.p, e.i)) {
                return bad(format!("bad out2 entry ({}, {})", e.p, e.i));
            }
        }
        let mut roles = BTreeSet::new();
        for p in self.out3.iter().map(|e| e.p).chain(self.undecided()) {
            if !live(p) || !roles.insert(p) {
                return bad(format!("agent {p} is dead or has two roles"));
            }
        }
        for e in &self.in1 {
            if !(1..=n).contains(&e.i) || e.r == 0 || e.r >= n {
                return bad(format!("in1 of {} out of bounds", e.p));
            }
        }
        if self.in2.iter().any(|e| !(1..=n).contains(&e.i)) {
            return bad("in2 index out of bounds".into());
        }
        let w = self.wrap;
        if w.j > n || w.b > 1 || (w.j == 0 && w.b == 0) {
            return bad(format!("wrapper {w} out of bounds"));
        }
        Ok(())
    }
}

impl fmt::Display for Representative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let live: Vec<String> = self.live.iter().map(u32::to_string).collect();
        writeln!(f, "Γ = ({{{}}}, {}), ti = {}", live.join(","), self.budget, self.ti)?;
        for e in &self.out1 {
            writeln!(f, "  out1 a[{},{},{}] <- {}", e.p, e.i, e.r, e.payload)?;
        }
        for e in &self.out2 {
            writeln!(f, "  out2 b[{},{}] <- {}", e.p, e.i, e.payload)?;
        }
        for e in &self.out3 {
            writeln!(f, "  out3 c[{}] <- {}", e.p, e.v)?;
        }
        for e in &self.in1 {
            writeln!(f, "  in1  p={} r={} i={} V={} M={}", e.p, e.r, e.i, e.v, e.m)?;
        }
        for e in &self.in2 {
            writeln!(f, "  in2  p={} i={} V={} M={}", e.p, e.i, e.v, e.m)?;
        }
        write!(f, "  wrap {}", self.wrap)
    }
}

impl fmt::Display for SysState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.rep)?;
        if self.ok_sent {
            write!(f, " [ok emitted]")?;
        }
        Ok(())
    }
}

/// Reads the parameter value off an instance of `t.waiting`.
pub fn match_template(t: &Template, term: &Process) -> Option<Value> {
    let params = t.param.vars();
    let mut binds: Vec<(Name, Value)> = Vec::new();
    if !match_proc(&t.waiting, term, &params, &mut binds) {
        return None;
    }
    build_value(&t.param, &binds)
}

fn build_value(p: &Pattern, binds: &[(Name, Value)]) -> Option<Value> {
    match p {
        Pattern::Var(n) => binds.iter().find(|(m, _)| m == n).map(|(_, v)| v.clone()),
        Pattern::Pair(a, b) => Some(Value::pair(build_value(a, binds)?, build_value(b, binds)?)),
    }
}

fn bind(name: &Name, v: Value, binds: &mut Vec<(Name, Value)>) -> bool {
    match binds.iter().find(|(m, _)| m == name) {
        Some((_, old)) => *old == v,
        None => {
            binds.push((name.clone(), v));
            true
        }
    }
}

fn match_index(t: &Index, i: &Index, params: &[Name], binds: &mut Vec<(Name, Value)>) -> bool {
    match (t, i) {
        (Index::Var(n), Index::Lit(k)) if params.contains(n) => bind(n, Value::Nat(*k as u64), binds),
        _ => t == i,
    }
}

fn match_chan(t: &Channel, c: &Channel, params: &[Name], binds: &mut Vec<(Name, Value)>) -> bool {
    match (t, c) {
        (Channel::A(a, b, r), Channel::A(x, y, z)) => {
            match_index(a, x, params, binds) && match_index(b, y, params, binds) && match_index(r, z, params, binds)
        }
        (Channel::B(a, b), Channel::B(x, y)) => match_index(a, x, params, binds) && match_index(b, y, params, binds),
        (Channel::C(a), Channel::C(x)) => match_index(a, x, params, binds),
        (Channel::Ok, Channel::Ok) => true,
        _ => false,
    }
}

fn match_expr(t: &Expr, e: &Expr, params: &[Name], binds: &mut Vec<(Name, Value)>) -> bool {
    match (t, e) {
        (Expr::Var(n), Expr::Lit(v)) if params.contains(n) => bind(n, v.clone(), binds),
        (Expr::Pair(a, b), Expr::Pair(x, y)) => match_expr(a, x, params, binds) && match_expr(b, y, params, binds),
        // substitution folds closed pairs into literals
        (Expr::Pair(a, b), Expr::Lit(Value::Pair(xy))) => {
            match_expr(a, &Expr::Lit(xy.0.clone()), params, binds) && match_expr(b, &Expr::Lit(xy.1.clone()), params, binds)
        }
        (Expr::Call(f, a), Expr::Call(g, x)) => f == g && match_expr(a, x, params, binds),
        _ => t == e,
    }
}

fn match_proc(t: &Process, p: &Process, params: &[Name], binds: &mut Vec<(Name, Value)>) -> bool {
    use Process as P;
    match (t, p) {
        (P::Nil, P::Nil) => true,
        (P::Out(c, e, k), P::Out(c2, e2, k2)) => {
            match_chan(c, c2, params, binds) && match_expr(e, e2, params, binds) && match_proc(k, k2, params, binds)
        }
        (P::In(c, x, k), P::In(c2, x2, k2)) => {
            x == x2 && match_chan(c, c2, params, binds) && match_proc(k, k2, params, binds)
        }
        (P::Susp(i, k), P::Susp(i2, k2)) | (P::PSusp(i, k), P::PSusp(i2, k2)) => {
            match_index(i, i2, params, binds) && match_proc(k, k2, params, binds)
        }
        (P::Sum(a, b), P::Sum(a2, b2)) | (P::Par(a, b), P::Par(a2, b2)) => {
            match_proc(a, a2, params, binds) && match_proc(b, b2, params, binds)
        }
        (P::If(e, a, b), P::If(e2, a2, b2)) => {
            match_expr(e, e2, params, binds) && match_proc(a, a2, params, binds) && match_proc(b, b2, params, binds)
        }
        (P::Tau(k), P::Tau(k2)) => match_proc(k, k2, params, binds),
        (P::Call(n, e), P::Call(n2, e2)) => n == n2 && match_expr(e, e2, params, binds),
        _ => false,
    }
}

/// `translate⁻¹`: the waiting term of a template at the given parameters.
pub fn instantiate(t: &Template, arg: &Value) -> Result<Process> {
    let b: Bindings = t.param.bind(arg)?;
    t.waiting.subst(&b)
}

fn nat_of(v: &Value) -> Option<u32> {
    v.as_nat().filter(|k| *k <= u32::MAX as u64).map(|k| k as u32)
}

fn shape(l: Loc, p: &Process) -> Error {
    Error::NotReachableShape(format!("{l}[{p}]"))
}

fn slot_of(v: &Value) -> Option<Slot> {
    match v {
        Value::Bot => Some(None),
        Value::Nat(k) => Some(Some(*k)),
        _ => None,
    }
}

/// `SF` as a system state: evaluate, translate, order, `renamewrap`.
pub fn sf_state(model: &Model, c: &Configuration) -> Result<SysState> {
    sf_state_owned(model, c.clone())
}

/// [`sf_state`] consuming its argument.
pub fn sf_state_owned(model: &Model, c: Configuration) -> Result<SysState> {
    let ti = c.ti.ok_or(Error::TiUnset)?;
    let mut e = evaluate_owned(c, &model.program, DEFAULT_EVAL_BUDGET)?;
    let (res, comps) = std::mem::replace(&mut e.net, Network::Nil).into_flat();
    if !res.iter().eq(model.restriction().iter()) {
        return Err(Error::NotReachableShape("restriction set differs from R".into()));
    }
    let mut rep = Representative {
        live: e.live.clone(),
        budget: e.budget,
        ti,
        out1: BTreeSet::new(),
        out2: BTreeSet::new(),
        out3: BTreeSet::new(),
        in1: BTreeSet::new(),
        in2: BTreeSet::new(),
        wrap: Wrap { j: 0, w: None, b: 1 },
    };
    let mut wrapper = false;
    for (l, p) in &comps {
        let (seg, _) = classify(*l, p).ok_or_else(|| shape(*l, p))?;
        let owner = match l {
            Loc::Agent(k) => *k,
            Loc::Star => 0,
        };
        match (seg, p) {
            (Segment::AOut | Segment::BOut | Segment::COut, Process::Out(ch, Expr::Lit(v), _)) => {
                match ch.id() {
                    Some(ChannelId::A { sender, receiver, round }) if sender == owner => {
                        let payload = RelayVector::from_value(v).map_err(|_| shape(*l, p))?;
                        rep.out1.insert(Out1 { p: sender, i: receiver, r: round, payload });
                    }
                    Some(ChannelId::B { sender, receiver }) if sender == owner => {
                        let payload = KnowVector::from_value(v).map_err(|_| shape(*l, p))?;
                        rep.out2.insert(Out2 { p: sender, i: receiver, payload });
                    }
                    Some(ChannelId::C { agent }) if agent == owner => {
                        let v = v.as_nat().ok_or_else(|| shape(*l, p))?;
                        rep.out3.insert(Out3 { p: agent, v });
                    }
                    _ => return Err(shape(*l, p)),
                }
            }
            (Segment::C1Guard, _) => {
                let arg = match_template(model.c1_template(owner), p).ok_or_else(|| shape(*l, p))?;
                rep.in1.insert(read_in1(owner, &arg).ok_or_else(|| shape(*l, p))?);
            }
            (Segment::C2Guard, _) => {
                let arg = match_template(model.c2_template(owner), p).ok_or_else(|| shape(*l, p))?;
                rep.in2.insert(read_in2(owner, &arg).ok_or_else(|| shape(*l, p))?);
            }
            (Segment::Wrapper, _) => {
                if wrapper {
                    return Err(Error::NotReachableShape("two wrapper components".into()));
                }
                wrapper = true;
                rep.wrap = read_wrap(model, p).ok_or_else(|| shape(*l, p))?;
            }
            _ => return Err(shape(*l, p)),
        }
    }
    rep.check_invariants(model.n())?;
    Ok(SysState { rep, ok_sent: !wrapper })
}

/// `SF(C)`.
pub fn sf(model: &Model, c: &Configuration) -> Result<Representative> {
    sf_state(model, c).map(|s| s.rep)
}

fn read_in1(p: u32, arg: &Value) -> Option<In1> {
    let (r, rest) = arg.as_pair()?;
    let (v, rest) = rest.as_pair()?;
    let (m, i) = rest.as_pair()?;
    Some(In1 {
        p,
        r: nat_of(r)?,
        v: KnowVector::from_value(v).ok()?,
        m: MsgSet::from_value(m).ok()?,
        i: nat_of(i)?,
    })
}

fn read_in2(p: u32, arg: &Value) -> Option<In2> {
    let (v, rest) = arg.as_pair()?;
    let (m, i) = rest.as_pair()?;
    Some(In2 { p, v: KnowVector::from_value(v).ok()?, m: MsgSet::from_value(m).ok()?, i: nat_of(i)? })
}

fn read_wrap(model: &Model, p: &Process) -> Option<Wrap> {
    match p {
        Process::Out(Channel::Ok, _, k) if **k == Process::Nil => Some(Wrap { j: 0, w: None, b: 1 }),
        Process::Call(k, Expr::Lit(arg)) if *k == model.wrap_template().name => {
            let (j, rest) = arg.as_pair()?;
            let (w, b) = rest.as_pair()?;
            Some(Wrap { j: nat_of(j)?, w: slot_of(w)?, b: nat_of(b)?.try_into().ok()? })
        }
        Process::Sum(..) => {
            let arg = match_template(model.wrap_template(), p)?;
            let (j, w) = arg.as_pair()?;
            Some(Wrap { j: nat_of(j)?, w: slot_of(w)?, b: 1 })
        }
        _ => None,
    }
}

fn slot_value(s: Slot) -> Value {
    s.map_or(Value::Bot, Value::Nat)
}

fn lit_out(c: ChannelId, v: Value) -> Process {
    Process::out(c.into(), Expr::Lit(v))
}

/// `SF⁻¹` on a system state: the normal-form term.
pub fn sfi_state(model: &Model, s: &SysState) -> Result<Configuration> {
    let rep = &s.rep;
    rep.check_invariants(model.n())?;
    let mut comps: Vec<Network> = Vec::new();
    for e in &rep.out1 {
        let c = ChannelId::A { sender: e.p, receiver: e.i, round: e.r };
        comps.push(Network::at(Loc::Agent(e.p), lit_out(c, e.payload.to_value())));
    }
    for e in &rep.out2 {
        let c = ChannelId::B { sender: e.p, receiver: e.i };
        comps.push(Network::at(Loc::Agent(e.p), lit_out(c, e.payload.to_value())));
    }
    for e in &rep.out3 {
        comps.push(Network::at(Loc::Agent(e.p), lit_out(ChannelId::C { agent: e.p }, Value::Nat(e.v))));
    }
    for e in &rep.in1 {
        let arg = Value::pair(
            Value::Nat(e.r as u64),
            Value::pair(e.v.to_value(), Value::pair(e.m.to_value(), Value::Nat(e.i as u64))),
        );
        comps.push(Network::at(Loc::Agent(e.p), instantiate(model.c1_template(e.p), &arg)?));
    }
    for e in &rep.in2 {
        let arg = Value::pair(e.v.to_value(), Value::pair(e.m.to_value(), Value::Nat(e.i as u64)));
        comps.push(Network::at(Loc::Agent(e.p), instantiate(model.c2_template(e.p), &arg)?));
    }
    if !s.ok_sent {
        let w = rep.wrap;
        let t = model.wrap_template();
        let p = if w.j == 0 {
            Process::out(Channel::Ok, Expr::Lit(Value::Bot))
        } else if w.b == 1 {
            instantiate(t, &Value::pair(Value::Nat(w.j as u64), slot_value(w.w)))?
        } else {
            let arg = Value::pair(Value::Nat(w.j as u64), Value::pair(slot_value(w.w), Value::Nat(0)));
            Process::Call(t.name.clone(), Expr::Lit(arg))
        };
        comps.push(Network::at(Loc::Star, p));
    }
    let net = Network::product(comps).restrict(model.restriction());
    Ok(Configuration { live: rep.live.clone(), budget: rep.budget, ti: Some(rep.ti), net })
}

/// `SF⁻¹(R)`.
pub fn sfi(model: &Model, rep: &Representative) -> Result<Configuration> {
    sfi_state(model, &SysState { rep: rep.clone(), ok_sent: false })
}

/// Names of the representative rules. `p` is the awaited (or suspected)
/// sender and `q` the receiving agent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RuleId {
    Sr1 { p: u32, q: u32, r: u32 },
    Sr2 { p: u32, q: u32, r: u32 },
    Sr3 { p: u32, q: u32, r: u32 },
    Sr4 { p: u32, q: u32, r: u32 },
    Sr5 { p: u32, q: u32, r: u32 },
    Sr6 { p: u32, q: u32, r: u32 },
    /// Phase-2 receive, more senders to come.
    Sr1b { p: u32, q: u32 },
    /// Phase-2 receive from the last sender, then decide.
    Sr2b { p: u32, q: u32 },
    Sr4b { p: u32, q: u32 },
    Sr5b { p: u32, q: u32 },
    Srw1 { i: u32 },
    Srw2 { i: u32 },
    Sr7 { p: u32 },
    Ok,
}

impl RuleId {
    pub fn action(self) -> Action {
        match self {
            RuleId::Ok => Action::Send(ChannelId::Ok, Value::Bot),
            _ => Action::Tau,
        }
    }

    /// `(suspecting agent, suspected agent)` for suspicion rules.
    pub fn suspicion(self) -> Option<(u32, u32)> {
        match self {
            RuleId::Sr4 { p, q, .. }
            | RuleId::Sr5 { p, q, .. }
            | RuleId::Sr6 { p, q, .. }
            | RuleId::Sr4b { p, q }
            | RuleId::Sr5b { p, q } => Some((q, p)),
            _ => None,
        }
    }

    pub fn perfect_suspicion(self) -> Option<u32> {
        match self {
            RuleId::Srw2 { i } => Some(i),
            _ => None,
        }
    }

    pub fn crash(self) -> Option<u32> {
        match self {
            RuleId::Sr7 { p } => Some(p),
            _ => None,
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleId::Sr1 { p, q, r } => write!(f, "SR1(p={p},q={q},r={r})"),
            RuleId::Sr2 { p, q, r } => write!(f, "SR2(p={p},q={q},r={r})"),
            RuleId::Sr3 { p, q, r } => write!(f, "SR3(p={p},q={q},r={r})"),
            RuleId::Sr4 { p, q, r } => write!(f, "SR4(p={p},q={q},r={r})"),
            RuleId::Sr5 { p, q, r } => write!(f, "SR5(p={p},q={q},r={r})"),
            RuleId::Sr6 { p, q, r } => write!(f, "SR6(p={p},q={q},r={r})"),
            RuleId::Sr1b { p, q } => write!(f, "SR1'(p={p},q={q})"),
            RuleId::Sr2b { p, q } => write!(f, "SR2'(p={p},q={q})"),
            RuleId::Sr4b { p, q } => write!(f, "SR4'(p={p},q={q})"),
            RuleId::Sr5b { p, q } => write!(f, "SR5'(p={p},q={q})"),
            RuleId::Srw1 { i } => write!(f, "SRW1(i={i})"),
            RuleId::Srw2 { i } => write!(f, "SRW2(i={i})"),
            RuleId::Sr7 { p } => write!(f, "SR7(p={p})"),
            RuleId::Ok => f.write_str("OK"),
        }
    }
}

fn may_suspect(model: &Model, rep: &Representative, suspect: u32, by: u32) -> bool {
    suspect != by && (suspect != rep.ti || !model.protects_ti())
}

/// All representative-rule successors, in a deterministic order.
pub fn rep_successors(model: &Model, s: &SysState) -> Result<Vec<(RuleId, SysState)>> {
    let n = model.n();
    let rep = &s.rep;
    let mut out = Vec::new();
    let next = |r: Representative| SysState { rep: r, ok_sent: s.ok_sent };

    for e in &rep.in1 {
        let (q, r, p) = (e.p, e.r, e.i);
        let msg = rep.out1.iter().find(|m| m.p == p && m.i == q && m.r == r && rep.live.contains(&p));
        let mut options: Vec<(bool, Option<&Out1>)> = Vec::new();
        if let Some(m) = msg {
            options.push((false, Some(m)));
        }
        if !model.is(Mutation::DisableSr4) && may_suspect(model, rep, p, q) {
            options.push((true, None));
        }
        for (suspected, m) in options {
            let mut nr = rep.clone();
            nr.in1.remove(e);
            if let Some(m) = m {
                nr.out1.remove(m);
            }
            let mut msgs = e.m.clone();
            msgs.phase1.insert(Phase1Entry { round: r, sender: p, relay: m.map(|m| m.payload.clone()) });
            let id = if p < n {
                if !(model.is(Mutation::Sr1DropsIn1) && !suspected) {
                    nr.in1.insert(In1 { p: q, r, v: e.v.clone(), m: msgs, i: p + 1 });
                }
                if suspected { RuleId::Sr4 { p, q, r } } else { RuleId::Sr1 { p, q, r } }
            } else {
                let v = updatek(r, &msgs, &e.v);
                if r + 1 < n {
                    let relay = updater(r, &msgs, &e.v);
                    for j in 1..=n {
                        nr.out1.insert(Out1 { p: q, i: j, r: r + 1, payload: relay.clone() });
                    }
                    nr.in1.insert(In1 { p: q, r: r + 1, v, m: msgs, i: 1 });
                    if suspected { RuleId::Sr5 { p, q, r } } else { RuleId::Sr2 { p, q, r } }
                } else {
                    for j in 1..=n {
                        nr.out2.insert(Out2 { p: q, i: j, payload: v.clone() });
                    }
                    nr.in2.insert(In2 { p: q, v, m: msgs, i: 1 });
                    if suspected { RuleId::Sr6 { p, q, r } } else { RuleId::Sr3 { p, q, r } }
                }
            };
            out.push((id, next(nr)));
        }
    }

    for e in &rep.in2 {
        let (q, p) = (e.p, e.i);
        let msg = rep.out2.iter().find(|m| m.p == p && m.i == q && rep.live.contains(&p));
        let mut options: Vec<(bool, Option<&Out2>)> = Vec::new();
        if let Some(m) = msg {
            options.push((false, Some(m)));
        }
        if may_suspect(model, rep, p, q) {
            options.push((true, None));
        }
        for (suspected, m) in options {
            let mut nr = rep.clone();
            nr.in2.remove(e);
            if let Some(m) = m {
                nr.out2.remove(m);
            }
            let mut msgs = e.m.clone();
            msgs.phase2.insert(Phase2Entry { sender: p, vector: m.map(|m| m.payload.clone()) });
            let id = if p < n {
                nr.in2.insert(In2 { p: q, v: e.v.clone(), m: msgs, i: p + 1 });
                if suspected { RuleId::Sr4b { p, q } } else { RuleId::Sr1b { p, q } }
            } else {
                let decided = if model.is(Mutation::SkipCorrect) { e.v.clone() } else { correct_fn(&msgs, &e.v) };
                nr.out3.insert(Out3 { p: q, v: getfst(&decided)? });
                if suspected { RuleId::Sr5b { p, q } } else { RuleId::Sr2b { p, q } }
            };
            out.push((id, next(nr)));
        }
    }

    let w = rep.wrap;
    let advance = |k: u32, v: Slot| if k == n + 1 { Wrap { j: 0, w: None, b: 1 } } else { Wrap { j: k, w: v, b: 1 } };
    if w.b == 1 && (1..=n).contains(&w.j) {
        let i = w.j;
        if let Some(m) = rep.out3.iter().find(|m| m.p == i && rep.live.contains(&i)) {
            let mut nr = rep.clone();
            nr.out3.remove(m);
            let accept = (w.w.is_none()) || w.w == Some(m.v);
            nr.wrap = if accept { advance(i + 1, Some(m.v)) } else { Wrap { j: i, w: w.w, b: 0 } };
            out.push((RuleId::Srw1 { i }, next(nr)));
        }
        if !rep.live.contains(&i) {
            let mut nr = rep.clone();
            nr.wrap = advance(i + 1, w.w);
            out.push((RuleId::Srw2 { i }, next(nr)));
        }
    }

    if rep.budget > 0 {
        for &p in rep.live.iter().filter(|&&p| p != rep.ti) {
            let mut nr = rep.clone();
            nr.live.remove(&p);
            nr.budget -= 1;
            nr.out1.retain(|m| m.p != p);
            nr.out2.retain(|m| m.p != p);
            nr.out3.retain(|m| m.p != p);
            nr.in1.retain(|m| m.p != p);
            nr.in2.retain(|m| m.p != p);
            out.push((RuleId::Sr7 { p }, next(nr)));
        }
    }

    if w.j == 0 && !s.ok_sent {
        out.push((RuleId::Ok, SysState { rep: rep.clone(), ok_sent: true }));
    }
    Ok(out)
}
