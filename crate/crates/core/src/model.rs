//! The Chandra–Toueg encoding: knowledge/relay vectors, the helper
//! functions used by the agents, the equation set, the restriction set and
//! the initial configurations.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ast::{
    Channel, ChannelId, Configuration, Expr, FnTable, Index, Loc, Name, Network, Pattern, Process, Program, Value,
};
use crate::error::{Error, Result};

/// A data slot: `None` is ⊥.
pub type Slot = Option<u64>;

fn slot_value(s: Slot) -> Value {
    s.map_or(Value::Bot, Value::Nat)
}

fn value_slot(v: &Value) -> Result<Slot> {
    match v {
        Value::Bot => Ok(None),
        Value::Nat(n) => Ok(Some(*n)),
        _ => Err(Error::TypeMismatch { func: "slot".into(), arg: v.clone() }),
    }
}

fn nat(v: &Value, what: &str) -> Result<u32> {
    match v {
        Value::Nat(n) if *n <= u32::MAX as u64 => Ok(*n as u32),
        _ => Err(Error::TypeMismatch { func: what.into(), arg: v.clone() }),
    }
}

/// Iterates the `(q, entry)` pairs of a vector encoded as a finite map,
/// checking that the indices are exactly `1..=len`.
fn vector_entries<'a>(v: &'a Value, what: &str) -> Result<Vec<&'a Value>> {
    let set = v.as_set().ok_or_else(|| Error::TypeMismatch { func: what.into(), arg: v.clone() })?;
    let mut out = Vec::with_capacity(set.len());
    for (k, e) in set.iter().enumerate() {
        match e.as_pair() {
            Some((Value::Nat(q), x)) if *q == k as u64 + 1 => out.push(x),
            _ => return Err(Error::TypeMismatch { func: what.into(), arg: v.clone() }),
        }
    }
    Ok(out)
}

/// An agent's knowledge: one round-stamped slot per agent.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct KnowVector(pub Vec<(Slot, u32)>);

impl KnowVector {
    /// `V⁰ᵢ`: only the own proposal, stamped round 0.
    pub fn initial(n: u32, agent: u32, proposal: u64) -> Self {
        KnowVector((1..=n).map(|q| (if q == agent { Some(proposal) } else { None }, 0)).collect())
    }

    pub fn get(&self, q: u32) -> Slot {
        self.0[(q - 1) as usize].0
    }

    pub fn values(&self) -> impl Iterator<Item = Slot> + '_ {
        self.0.iter().map(|(v, _)| *v)
    }

    pub fn to_value(&self) -> Value {
        Value::set(self.0.iter().enumerate().map(|(k, (v, r))| {
            Value::pair(Value::Nat(k as u64 + 1), Value::pair(slot_value(*v), Value::Nat(*r as u64)))
        }))
    }

    pub fn from_value(v: &Value) -> Result<Self> {
        vector_entries(v, "knowledge vector")?
            .into_iter()
            .map(|e| match e.as_pair() {
                Some((s, r)) => Ok((value_slot(s)?, nat(r, "round stamp")?)),
                None => Err(Error::TypeMismatch { func: "knowledge vector".into(), arg: e.clone() }),
            })
            .collect::<Result<_>>()
            .map(KnowVector)
    }
}

impl fmt::Display for KnowVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (k, (v, r)) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(", ")?;
            }
            write!(f, "({}, {r})", slot_value(*v))?;
        }
        f.write_str(")")
    }
}

/// The fresh values an agent relays in its next round.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RelayVector(pub Vec<Slot>);

impl RelayVector {
    pub fn initial(n: u32, agent: u32, proposal: u64) -> Self {
        RelayVector((1..=n).map(|q| if q == agent { Some(proposal) } else { None }).collect())
    }

    pub fn get(&self, q: u32) -> Slot {
        self.0[(q - 1) as usize]
    }

    pub fn to_value(&self) -> Value {
        Value::set(self.0.iter().enumerate().map(|(k, v)| Value::pair(Value::Nat(k as u64 + 1), slot_value(*v))))
    }

    pub fn from_value(v: &Value) -> Result<Self> {
        vector_entries(v, "relay vector")?
            .into_iter()
            .map(value_slot)
            .collect::<Result<_>>()
            .map(RelayVector)
    }
}

impl fmt::Display for RelayVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| slot_value(*v).to_string()).collect();
        write!(f, "({})", parts.join(", "))
    }
}

/// A Phase-1 message kept by a receiver; `relay` is `None` when the sender
/// was suspected instead.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Phase1Entry {
    pub round: u32,
    pub sender: u32,
    pub relay: Option<RelayVector>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Phase2Entry {
    pub sender: u32,
    pub vector: Option<KnowVector>,
}

/// The local message store `M`.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MsgSet {
    pub phase1: BTreeSet<Phase1Entry>,
    pub phase2: BTreeSet<Phase2Entry>,
}

const PHASE1_TAG: u64 = 1;
const PHASE2_TAG: u64 = 2;

fn phase1_value(payload: Value, round: Value, sender: Value) -> Value {
    Value::pair(Value::Nat(PHASE1_TAG), Value::pair(payload, Value::pair(round, sender)))
}

fn phase2_value(payload: Value, sender: Value) -> Value {
    Value::pair(Value::Nat(PHASE2_TAG), Value::pair(payload, sender))
}

impl MsgSet {
    pub fn is_empty(&self) -> bool {
        self.phase1.is_empty() && self.phase2.is_empty()
    }

    pub fn to_value(&self) -> Value {
        let p1 = self.phase1.iter().map(|e| {
            let payload = e.relay.as_ref().map_or(Value::Bot, RelayVector::to_value);
            phase1_value(payload, Value::Nat(e.round as u64), Value::Nat(e.sender as u64))
        });
        let p2 = self.phase2.iter().map(|e| {
            let payload = e.vector.as_ref().map_or(Value::Bot, KnowVector::to_value);
            phase2_value(payload, Value::Nat(e.sender as u64))
        });
        Value::set(p1.chain(p2))
    }

    pub fn from_value(v: &Value) -> Result<Self> {
        let bad = || Error::TypeMismatch { func: "message set".into(), arg: v.clone() };
        let mut m = MsgSet::default();
        for e in v.as_set().ok_or_else(bad)? {
            let (tag, rest) = e.as_pair().ok_or_else(bad)?;
            let (payload, rest) = rest.as_pair().ok_or_else(bad)?;
            match tag {
                Value::Nat(PHASE1_TAG) => {
                    let (round, sender) = rest.as_pair().ok_or_else(bad)?;
                    let relay = match payload {
                        Value::Bot => None,
                        p => Some(RelayVector::from_value(p)?),
                    };
                    m.phase1.insert(Phase1Entry { round: nat(round, "round")?, sender: nat(sender, "sender")?, relay });
                }
                Value::Nat(PHASE2_TAG) => {
                    let vector = match payload {
                        Value::Bot => None,
                        p => Some(KnowVector::from_value(p)?),
                    };
                    m.phase2.insert(Phase2Entry { sender: nat(rest, "sender")?, vector });
                }
                _ => return Err(bad()),
            }
        }
        Ok(m)
    }
}

impl fmt::Display for MsgSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        for e in &self.phase1 {
            let d = e.relay.as_ref().map_or("⊥".to_string(), |r| r.to_string());
            parts.push(format!("({d}, {}, {})", e.round, e.sender));
        }
        for e in &self.phase2 {
            let d = e.vector.as_ref().map_or("⊥".to_string(), |r| r.to_string());
            parts.push(format!("({d}, {})", e.sender));
        }
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// The value learned for slot `q` from round-`r` messages, taken from the
/// smallest sender that knows it.
fn learned(r: u32, m: &MsgSet, q: u32) -> Slot {
    m.phase1
        .iter()
        .filter(|e| e.round == r)
        .filter_map(|e| e.relay.as_ref().and_then(|d| d.get(q)))
        .next()
}

/// Knowledge after round `r`: unknown slots adopt values relayed in `M`.
pub fn updatek(r: u32, m: &MsgSet, v: &KnowVector) -> KnowVector {
    KnowVector(
        v.0.iter()
            .enumerate()
            .map(|(k, &(val, stamp))| match val {
                Some(_) => (val, stamp),
                None => match learned(r, m, k as u32 + 1) {
                    Some(x) => (Some(x), r),
                    None => (val, stamp),
                },
            })
            .collect(),
    )
}

/// The next relay vector: only the values newly learned in round `r`.
pub fn updater(r: u32, m: &MsgSet, v: &KnowVector) -> RelayVector {
    RelayVector(
        v.0.iter()
            .enumerate()
            .map(|(k, &(val, _))| match val {
                Some(_) => None,
                None => learned(r, m, k as u32 + 1),
            })
            .collect(),
    )
}

/// Drops every slot that some received Phase-2 vector does not know.
/// Entries produced by suspicion carry no vector and are skipped.
pub fn correct_fn(m: &MsgSet, v: &KnowVector) -> KnowVector {
    let mut out = v.clone();
    for vec in m.phase2.iter().filter_map(|e| e.vector.as_ref()) {
        for (k, slot) in out.0.iter_mut().enumerate() {
            if vec.0[k].0.is_none() {
                slot.0 = None;
            }
        }
    }
    out
}

/// The value at the smallest known index.
pub fn getfst(v: &KnowVector) -> Result<u64> {
    v.values().flatten().next().ok_or(Error::EmptyKnowledge)
}

fn typed_args(f: &str, v: &Value) -> Result<(u32, MsgSet, KnowVector)> {
    let bad = || Error::TypeMismatch { func: f.into(), arg: v.clone() };
    let (r, rest) = v.as_pair().ok_or_else(bad)?;
    let (m, k) = rest.as_pair().ok_or_else(bad)?;
    Ok((nat(r, f)?, MsgSet::from_value(m)?, KnowVector::from_value(k)?))
}

fn set_insert(f: &str, m: &Value, e: Value) -> Result<Value> {
    let mut s = m.as_set().ok_or_else(|| Error::TypeMismatch { func: f.into(), arg: m.clone() })?.clone();
    s.insert(e);
    Ok(Value::Set(std::sync::Arc::new(s)))
}

/// Arithmetic plus the consensus helpers, all on `Value`s.
pub fn function_table() -> FnTable {
    let mut t = FnTable::arithmetic();
    t.register("updatek", |v| typed_args("updatek", v).map(|(r, m, k)| updatek(r, &m, &k).to_value()))
        .register("updater", |v| typed_args("updater", v).map(|(r, m, k)| updater(r, &m, &k).to_value()))
        .register("correct", |v| {
            let (m, k) = v.as_pair().ok_or_else(|| Error::TypeMismatch { func: "correct".into(), arg: v.clone() })?;
            Ok(correct_fn(&MsgSet::from_value(m)?, &KnowVector::from_value(k)?).to_value())
        })
        .register("getfst", |v| getfst(&KnowVector::from_value(v)?).map(Value::Nat))
        .register("msg1", |v| {
            // (M, (x, (r, i)))
            let bad = || Error::TypeMismatch { func: "msg1".into(), arg: v.clone() };
            let (m, rest) = v.as_pair().ok_or_else(bad)?;
            let (x, rest) = rest.as_pair().ok_or_else(bad)?;
            let (r, i) = rest.as_pair().ok_or_else(bad)?;
            set_insert("msg1", m, phase1_value(x.clone(), r.clone(), i.clone()))
        })
        .register("msg2", |v| {
            // (M, (x, i))
            let bad = || Error::TypeMismatch { func: "msg2".into(), arg: v.clone() };
            let (m, rest) = v.as_pair().ok_or_else(bad)?;
            let (x, i) = rest.as_pair().ok_or_else(bad)?;
            set_insert("msg2", m, phase2_value(x.clone(), i.clone()))
        });
    t
}

/// `n` agents with proposals `U` and the crash budget.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub n: u32,
    pub values: Vec<u64>,
    pub budget: u32,
}

impl ProblemInstance {
    /// `budget` defaults to `n − 1`; at least one agent must stay correct.
    pub fn new(values: Vec<u64>, budget: Option<u32>) -> Result<Self> {
        let n = values.len() as u32;
        if n == 0 {
            return Err(Error::Config("at least one agent is required".into()));
        }
        if values.contains(&0) {
            return Err(Error::Config("proposed values must be positive".into()));
        }
        let budget = budget.unwrap_or(n - 1);
        if budget > n - 1 {
            return Err(Error::Config(format!("budget {budget} exceeds n-1 = {}: some agent must be correct", n - 1)));
        }
        Ok(ProblemInstance { n, values, budget })
    }

    pub fn proposal(&self, agent: u32) -> u64 {
        self.values[(agent - 1) as usize]
    }

    pub fn agents(&self) -> impl Iterator<Item = u32> {
        1..=self.n
    }
}

/// Deliberate defects used to show the checks are not vacuous.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutation {
    /// Suspicion may target the trusted immortal (both semantics).
    NoTiProtection,
    /// Phase-1 receipt from a non-last sender also drops the collector
    /// (representative semantics only).
    Sr1DropsIn1,
    /// Phase 2 decides on the uncorrected vector (both semantics).
    SkipCorrect,
    /// Phase-1 suspicion twins are disabled (representative semantics only).
    DisableSr4,
}

impl Mutation {
    pub const ALL: [Mutation; 4] =
        [Mutation::NoTiProtection, Mutation::Sr1DropsIn1, Mutation::SkipCorrect, Mutation::DisableSr4];

    pub fn name(self) -> &'static str {
        match self {
            Mutation::NoTiProtection => "no-ti-protection",
            Mutation::Sr1DropsIn1 => "sr1-drops-in1",
            Mutation::SkipCorrect => "skip-correct",
            Mutation::DisableSr4 => "disable-sr4",
        }
    }
}

impl fmt::Display for Mutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mutation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mutation::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mutation `{s}`")))
    }
}

/// The waiting shape a constant evaluates to, used to read parameters back
/// off a fully evaluated term.
#[derive(Clone, Debug)]
pub struct Template {
    pub name: Name,
    pub param: Pattern,
    pub waiting: Process,
}

pub fn p1(p: u32) -> Name {
    Name::from(format!("P1_{p}"))
}

pub fn c1(p: u32) -> Name {
    Name::from(format!("C1_{p}"))
}

pub fn p2(p: u32) -> Name {
    Name::from(format!("P2_{p}"))
}

pub fn c2(p: u32) -> Name {
    Name::from(format!("C2_{p}"))
}

pub fn p3(p: u32) -> Name {
    Name::from(format!("P3_{p}"))
}

pub fn wrap() -> Name {
    Name::new("WRAP")
}

fn v(name: &str) -> Expr {
    Expr::var(name)
}

fn call(f: &str, args: Vec<Expr>) -> Expr {
    Expr::call(f, Expr::tuple(args))
}

fn lit(k: u32) -> Index {
    Index::Lit(k)
}

/// A consensus instance with its equation set and context.
#[derive(Clone, Debug)]
pub struct Model {
    pub inst: ProblemInstance,
    pub mutation: Option<Mutation>,
    pub program: Program,
    restriction: Vec<ChannelId>,
    c1_templates: Vec<Template>,
    c2_templates: Vec<Template>,
    wrap_template: Template,
}

impl Model {
    pub fn new(inst: ProblemInstance) -> Result<Self> {
        Model::with_mutation(inst, None)
    }

    pub fn with_mutation(inst: ProblemInstance, mutation: Option<Mutation>) -> Result<Self> {
        let n = inst.n;
        let (program, c1_templates, c2_templates, wrap_template) = equations(n, mutation)?;
        Ok(Model { restriction: restriction_set(n), inst, mutation, program, c1_templates, c2_templates, wrap_template })
    }

    pub fn n(&self) -> u32 {
        self.inst.n
    }

    pub fn is(&self, m: Mutation) -> bool {
        self.mutation == Some(m)
    }

    /// Whether suspicion must spare the trusted immortal.
    pub fn protects_ti(&self) -> bool {
        !self.is(Mutation::NoTiProtection)
    }

    /// `R`, sorted.
    pub fn restriction(&self) -> &[ChannelId] {
        &self.restriction
    }

    pub fn c1_template(&self, p: u32) -> &Template {
        &self.c1_templates[(p - 1) as usize]
    }

    pub fn c2_template(&self, p: u32) -> &Template {
        &self.c2_templates[(p - 1) as usize]
    }

    pub fn wrap_template(&self) -> &Template {
        &self.wrap_template
    }

    /// The initial configuration with the trusted immortal unset.
    pub fn initial(&self) -> Configuration {
        make_initial(self)
    }
}

/// All `a`, `b` and `c` channels of an `n`-agent system; `ok` stays free.
pub fn restriction_set(n: u32) -> Vec<ChannelId> {
    let mut r = Vec::new();
    for sender in 1..=n {
        for receiver in 1..=n {
            for round in 1..n {
                r.push(ChannelId::A { sender, receiver, round });
            }
            r.push(ChannelId::B { sender, receiver });
        }
        r.push(ChannelId::C { agent: sender });
    }
    r.sort();
    r
}

type Equations = (Program, Vec<Template>, Vec<Template>, Template);

/// Builds the equation set `D` for `n` agents.
pub fn equations(n: u32, mutation: Option<Mutation>) -> Result<Equations> {
    let mut prog = Program { functions: function_table(), ..Program::default() };
    let nn = n as u64;
    let mut c1s = Vec::new();
    let mut c2s = Vec::new();
    for p in 1..=n {
        // P1_p(r, V, D, M) = if r < n then (Π_i a[p,i,r]!<D> | C1_p(r, V, M, 1)) else P2_p(V, M)
        let sends = (1..=n).map(|i| Process::out(Channel::A(lit(p), lit(i), Index::var("r")), v("D")));
        let then = Process::product(
            sends.chain(std::iter::once(Process::call(&c1(p), Expr::tuple(vec![v("r"), v("V"), v("M"), Expr::nat(1)])))),
        );
        let body = Process::cond(
            call("lt", vec![v("r"), Expr::nat(nn)]),
            then,
            Process::call(&p2(p), Expr::tuple(vec![v("V"), v("M")])),
        );
        prog.define(&p1(p), Pattern::tuple(&["r", "V", "D", "M"]), body);

        // C1_p(r, V, M, i) = if i <= n then a[i,p,r](x)>i.C1_p(r, V, M + (x, r, i), i+1)
        //                    else P1_p(r+1, updatek(r, M, V), updater(r, M, V), M)
        let next = Process::call(
            &c1(p),
            Expr::tuple(vec![
                v("r"),
                v("V"),
                call("msg1", vec![v("M"), v("x"), v("r"), v("i")]),
                call("add", vec![v("i"), Expr::nat(1)]),
            ]),
        );
        let waiting = Process::inpat(Channel::A(Index::var("i"), lit(p), Index::var("r")), "x", Index::var("i"), next)?;
        let advance = Process::call(
            &p1(p),
            Expr::tuple(vec![
                call("add", vec![v("r"), Expr::nat(1)]),
                call("updatek", vec![v("r"), v("M"), v("V")]),
                call("updater", vec![v("r"), v("M"), v("V")]),
                v("M"),
            ]),
        );
        let param = Pattern::tuple(&["r", "V", "M", "i"]);
        prog.define(&c1(p), param.clone(), Process::cond(call("le", vec![v("i"), Expr::nat(nn)]), waiting.clone(), advance));
        c1s.push(Template { name: c1(p), param, waiting });

        // P2_p(V, M) = Π_i b[p,i]!<V> | C2_p(V, M, 1)
        let sends = (1..=n).map(|i| Process::out(Channel::B(lit(p), lit(i)), v("V")));
        let body = Process::product(
            sends.chain(std::iter::once(Process::call(&c2(p), Expr::tuple(vec![v("V"), v("M"), Expr::nat(1)])))),
        );
        prog.define(&p2(p), Pattern::tuple(&["V", "M"]), body);

        // C2_p(V, M, i) = if i <= n then b[i,p](x)>i.C2_p(V, M + (x, i), i+1) else P3_p(correct(M, V))
        let next = Process::call(
            &c2(p),
            Expr::tuple(vec![v("V"), call("msg2", vec![v("M"), v("x"), v("i")]), call("add", vec![v("i"), Expr::nat(1)])]),
        );
        let waiting = Process::inpat(Channel::B(Index::var("i"), lit(p)), "x", Index::var("i"), next)?;
        let decided = if mutation == Some(Mutation::SkipCorrect) { v("V") } else { call("correct", vec![v("M"), v("V")]) };
        let param = Pattern::tuple(&["V", "M", "i"]);
        prog.define(
            &c2(p),
            param.clone(),
            Process::cond(call("le", vec![v("i"), Expr::nat(nn)]), waiting.clone(), Process::call(&p3(p), decided)),
        );
        c2s.push(Template { name: c2(p), param, waiting });

        // P3_p(V) = c[p]!<getfst(V)>
        prog.define(&p3(p), Pattern::var("V"), Process::out(Channel::C(lit(p)), Expr::call("getfst", v("V"))));
    }

    // WRAP(i, v, b) = if b == 1 then
    //                   if 1 <= i <= n then psusp i.WRAP(i+1, v, 1)
    //                        + c[i](w).if (v == ⊥ ∧ w != ⊥) ∨ v == w then WRAP(i+1, w, 1) else WRAP(i, v, 0)
    //                   else if i == n+1 then ok!<⊥>
    //                 else WRAP(i, v, 0)
    let w = wrap();
    let stopped = Process::call(&w, Expr::tuple(vec![v("i"), v("v"), Expr::nat(0)]));
    let accept = call(
        "or",
        vec![
            call(
                "and",
                vec![
                    call("eq", vec![v("v"), Expr::Lit(Value::Bot)]),
                    call("neq", vec![v("w"), Expr::Lit(Value::Bot)]),
                ],
            ),
            call("eq", vec![v("v"), v("w")]),
        ],
    );
    let step = call("add", vec![v("i"), Expr::nat(1)]);
    let waiting = Process::sum(
        Process::PSusp(Index::var("i"), std::sync::Arc::new(Process::call(&w, Expr::tuple(vec![step.clone(), v("v"), Expr::nat(1)])))),
        Process::input(
            Channel::C(Index::var("i")),
            Pattern::var("w"),
            Process::cond(accept, Process::call(&w, Expr::tuple(vec![step, v("w"), Expr::nat(1)])), stopped.clone()),
        ),
    );
    let in_range = call("and", vec![call("le", vec![Expr::nat(1), v("i")]), call("le", vec![v("i"), Expr::nat(nn)])]);
    let ok = Process::out(Channel::Ok, Expr::Lit(Value::Bot));
    let enabled = Process::cond(
        in_range,
        waiting.clone(),
        Process::cond(call("eq", vec![v("i"), Expr::nat(nn + 1)]), ok, Process::Nil),
    );
    let param = Pattern::tuple(&["i", "v", "b"]);
    prog.define(&w, param.clone(), Process::cond(call("eq", vec![v("b"), Expr::nat(1)]), enabled, stopped));
    // the template covers the enabled (b = 1) waiting state only
    let wrap_template = Template { name: w, param: Pattern::tuple(&["i", "v"]), waiting };
    Ok((prog, c1s, c2s, wrap_template))
}

/// `⟨(Π, budget), ⊥, (Π_i i[P1_i(1, V⁰_i, Δ⁰_i, ∅)] ∥ ⋆[WRAP(1, ⊥, 1)]) \ R⟩`.
pub fn make_initial(model: &Model) -> Configuration {
    let inst = &model.inst;
    let n = inst.n;
    let agents: Vec<Network> = inst.agents().map(|i| {
        let args = Expr::tuple(vec![
            Expr::nat(1),
            Expr::Lit(KnowVector::initial(n, i, inst.proposal(i)).to_value()),
            Expr::Lit(RelayVector::initial(n, i, inst.proposal(i)).to_value()),
            Expr::Lit(MsgSet::default().to_value()),
        ]);
        Network::at(Loc::Agent(i), Process::call(&p1(i), args))
    }).collect();
    let wrapper = Network::at(
        Loc::Star,
        Process::call(&wrap(), Expr::tuple(vec![Expr::nat(1), Expr::Lit(Value::Bot), Expr::nat(1)])),
    );
    let net = Network::product(agents.into_iter().chain(std::iter::once(wrapper))).restrict(model.restriction());
    Configuration { live: inst.agents().collect(), budget: inst.budget, ti: None, net }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::eval_expr;
    use proptest::prelude::*;

    fn kv(slots: &[(Slot, u32)]) -> KnowVector {
        KnowVector(slots.to_vec())
    }

    #[test]
    fn updatek_and_updater_examples() {
        let v = kv(&[(Some(5), 0), (None, 0)]);
        let mut m = MsgSet::default();
        assert_eq!(updatek(1, &m, &v), v);
        assert_eq!(updater(1, &m, &v), RelayVector(vec![None, None]));
        m.phase1.insert(Phase1Entry { round: 1, sender: 2, relay: Some(RelayVector(vec![None, Some(7)])) });
        assert_eq!(updatek(1, &m, &v), kv(&[(Some(5), 0), (Some(7), 1)]));
        assert_eq!(updater(1, &m, &v), RelayVector(vec![None, Some(7)]));
        // a message from another round is ignored
        assert_eq!(updatek(2, &m, &v), v);
    }

    #[test]
    fn known_slots_are_kept() {
        let v = kv(&[(Some(5), 0), (Some(7), 0)]);
        let mut m = MsgSet::default();
        m.phase1.insert(Phase1Entry { round: 1, sender: 1, relay: Some(RelayVector(vec![Some(9), Some(9)])) });
        assert_eq!(updatek(1, &m, &v), v);
        assert_eq!(updater(1, &m, &v), RelayVector(vec![None, None]));
    }

    #[test]
    fn correct_fn_examples() {
        let v = kv(&[(Some(5), 0), (Some(7), 1)]);
        let mut m = MsgSet::default();
        m.phase2.insert(Phase2Entry { sender: 1, vector: Some(v.clone()) });
        assert_eq!(correct_fn(&m, &v), v);
        m.phase2.insert(Phase2Entry { sender: 2, vector: Some(kv(&[(Some(5), 0), (None, 0)])) });
        assert_eq!(correct_fn(&m, &v), kv(&[(Some(5), 0), (None, 1)]));

        let mut only_susp = MsgSet::default();
        only_susp.phase2.insert(Phase2Entry { sender: 2, vector: None });
        assert_eq!(correct_fn(&only_susp, &v), v);
    }

    #[test]
    fn getfst_examples() {
        assert_eq!(getfst(&kv(&[(Some(5), 0), (Some(7), 1)])), Ok(5));
        assert_eq!(getfst(&kv(&[(None, 0), (Some(7), 1)])), Ok(7));
        assert_eq!(getfst(&kv(&[(None, 0), (None, 1)])), Err(Error::EmptyKnowledge));
    }

    #[test]
    fn getfst_through_the_function_table() {
        let t = function_table();
        let v = kv(&[(None, 0), (Some(7), 1)]).to_value();
        assert_eq!(eval_expr(&Expr::call("getfst", Expr::Lit(v)), &t), Ok(Value::Nat(7)));
    }

    #[test]
    fn msg_builtins_round_trip_through_typed_sets() {
        let t = function_table();
        let relay = RelayVector(vec![Some(3), None]).to_value();
        let e = call("msg1", vec![Expr::Lit(MsgSet::default().to_value()), Expr::Lit(relay), Expr::nat(1), Expr::nat(2)]);
        let e = call("msg2", vec![e, Expr::Lit(Value::Bot), Expr::nat(1)]);
        let m = MsgSet::from_value(&eval_expr(&e, &t).unwrap()).unwrap();
        assert_eq!(m.phase1.len(), 1);
        assert_eq!(m.phase2.iter().next(), Some(&Phase2Entry { sender: 1, vector: None }));
    }

    #[test]
    fn instance_validation() {
        assert!(ProblemInstance::new(vec![5, 7], Some(2)).is_err());
        assert!(ProblemInstance::new(vec![], None).is_err());
        assert!(ProblemInstance::new(vec![0], None).is_err());
        assert_eq!(ProblemInstance::new(vec![5, 7], None).unwrap().budget, 1);
    }

    #[test]
    fn restriction_set_size() {
        // n²(n−1) a-channels, n² b-channels, n c-channels
        assert_eq!(restriction_set(1).len(), 2);
        assert_eq!(restriction_set(3).len(), 18 + 9 + 3);
        assert!(!restriction_set(3).contains(&ChannelId::Ok));
    }

    #[test]
    fn initial_configuration_shape() {
        let m = Model::new(ProblemInstance::new(vec![4], None).unwrap()).unwrap();
        let c = m.initial();
        assert_eq!(c.ti, None);
        assert_eq!(c.budget, 0);
        let (res, comps) = c.net.flatten();
        assert_eq!(res.len(), 2);
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[1].0, Loc::Star);
        let m2 = Model::new(ProblemInstance::new(vec![5, 7], None).unwrap()).unwrap();
        assert_eq!(m2.initial().live, [1, 2].into_iter().collect());
    }

    #[test]
    fn p1_equation_shape() {
        let m = Model::new(ProblemInstance::new(vec![5, 7], None).unwrap()).unwrap();
        let eq = m.program.equation(&p1(1)).unwrap();
        match &eq.body {
            Process::If(Expr::Call(f, _), then, els) => {
                assert_eq!(f.as_str(), "lt");
                assert!(matches!(**then, Process::Par(..)));
                assert!(matches!(&**els, Process::Call(k, _) if *k == p2(1)));
            }
            other => panic!("unexpected P1 body {other}"),
        }
        let c2eq = m.program.equation(&c2(2)).unwrap();
        let Process::If(_, _, els) = &c2eq.body else { panic!() };
        assert!(matches!(&**els, Process::Call(k, Expr::Call(f, _)) if *k == p3(2) && f.as_str() == "correct"));
    }

    #[test]
    fn mutation_names_parse() {
        for m in Mutation::ALL {
            assert_eq!(m.name().parse::<Mutation>().unwrap(), m);
        }
        assert!("bogus".parse::<Mutation>().is_err());
    }

    fn slot(bound: u64) -> impl Strategy<Value = Slot> {
        prop_oneof![Just(None), (1..=bound).prop_map(Some)]
    }

    fn relay(n: usize) -> impl Strategy<Value = Option<RelayVector>> {
        prop::option::of(prop::collection::vec(slot(9), n).prop_map(RelayVector))
    }

    proptest! {
        #[test]
        fn updatek_updater_agree(
            known in prop::collection::vec((slot(9), 0u32..3), 3),
            msgs in prop::collection::vec((1u32..3, 1u32..4, relay(3)), 0..6),
            r in 1u32..3,
        ) {
            let v = KnowVector(known);
            let mut m = MsgSet::default();
            for (round, sender, relay) in msgs {
                m.phase1.insert(Phase1Entry { round, sender, relay });
            }
            let k = updatek(r, &m, &v);
            let d = updater(r, &m, &v);
            for q in 1..=3u32 {
                let fresh = d.get(q).is_some();
                prop_assert_eq!(fresh, k.get(q) != v.get(q));
                if fresh {
                    prop_assert_eq!(k.get(q), d.get(q));
                }
                if v.get(q).is_some() {
                    prop_assert_eq!(k.0[(q - 1) as usize], v.0[(q - 1) as usize]);
                }
            }
        }

        #[test]
        fn correct_fn_is_decreasing(
            known in prop::collection::vec((slot(9), 0u32..3), 3),
            vecs in prop::collection::vec(prop::option::of(prop::collection::vec((slot(9), 0u32..3), 3)), 0..4),
        ) {
            let v = KnowVector(known);
            let mut m = MsgSet::default();
            for (s, x) in vecs.into_iter().enumerate() {
                m.phase2.insert(Phase2Entry { sender: s as u32 + 1, vector: x.map(KnowVector) });
            }
            let c = correct_fn(&m, &v);
            for q in 1..=3u32 {
                prop_assert!(c.get(q).is_none() || c.get(q) == v.get(q));
                prop_assert_eq!(c.0[(q - 1) as usize].1, v.0[(q - 1) as usize].1);
            }
        }

        #[test]
        fn getfst_of_valid_vector_is_a_proposal(
            u in prop::collection::vec(1u64..20, 1..5),
            mask in prop::collection::vec(any::<bool>(), 5),
        ) {
            let v = KnowVector(u.iter().zip(&mask).map(|(x, keep)| (keep.then_some(*x), 0)).collect());
            match getfst(&v) {
                Ok(x) => prop_assert!(u.contains(&x)),
                Err(e) => {
                    prop_assert_eq!(e, Error::EmptyKnowledge);
                    prop_assert!(v.values().all(|s| s.is_none()));
                }
            }
        }

        #[test]
        fn vector_value_encoding_is_bijective(
            known in prop::collection::vec((slot(9), 0u32..3), 1..4),
            msgs in prop::collection::vec((1u32..3, 1u32..4, relay(2)), 0..4),
        ) {
            let v = KnowVector(known);
            prop_assert_eq!(KnowVector::from_value(&v.to_value()).unwrap(), v);
            let mut m = MsgSet::default();
            for (round, sender, relay) in msgs {
                m.phase1.insert(Phase1Entry { round, sender, relay });
            }
            prop_assert_eq!(MsgSet::from_value(&m.to_value()).unwrap(), m);
        }
    }
}
