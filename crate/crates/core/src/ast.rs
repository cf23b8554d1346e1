//! Abstract syntax of the located calculus: data values, expressions,
//! guarded processes, processes, networks and configurations.
//!
//! Channel subscripts and suspicion targets are [`Index`]es so that equation
//! bodies can mention parameters (`a[i,p,r]`, `susp i`); after substitution
//! every index in a reachable term is a literal.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Interned identifier for variables, functions and process constants.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Name(Arc<str>);

impl Name {
    pub fn new(s: &str) -> Self {
        Name(Arc::from(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for Name {
    fn from(s: &str) -> Self {
        Name::new(s)
    }
}

impl From<String> for Name {
    fn from(s: String) -> Self {
        Name(Arc::from(s))
    }
}

impl fmt::Debug for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Closed data values. `Bot` is distinct from `Nat(0)`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Value {
    Bot,
    Nat(u64),
    Pair(Arc<(Value, Value)>),
    Set(Arc<BTreeSet<Value>>),
}

impl Value {
    pub fn pair(a: Value, b: Value) -> Value {
        Value::Pair(Arc::new((a, b)))
    }

    pub fn set<I: IntoIterator<Item = Value>>(items: I) -> Value {
        Value::Set(Arc::new(items.into_iter().collect()))
    }

    pub fn bool(b: bool) -> Value {
        Value::Nat(b as u64)
    }

    pub fn as_nat(&self) -> Option<u64> {
        match self {
            Value::Nat(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_pair(&self) -> Option<(&Value, &Value)> {
        match self {
            Value::Pair(p) => Some((&p.0, &p.1)),
            _ => None,
        }
    }

    pub fn as_set(&self) -> Option<&BTreeSet<Value>> {
        match self {
            Value::Set(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bot => f.write_str("⊥"),
            Value::Nat(n) => write!(f, "{n}"),
            Value::Pair(p) => write!(f, "({}, {})", p.0, p.1),
            Value::Set(s) => {
                f.write_str("{")?;
                for (k, v) in s.iter().enumerate() {
                    if k > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("}")
            }
        }
    }
}

/// Variable patterns `x` and `(X, X)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pattern {
    Var(Name),
    Pair(Box<Pattern>, Box<Pattern>),
}

impl Pattern {
    pub fn var(name: &str) -> Pattern {
        Pattern::Var(Name::new(name))
    }

    /// Right-nested tuple pattern `(x1, (x2, (..., xk)))`.
    pub fn tuple(names: &[&str]) -> Pattern {
        let (last, init) = names.split_last().expect("empty tuple pattern");
        init.iter()
            .rev()
            .fold(Pattern::var(last), |acc, n| Pattern::Pair(Box::new(Pattern::var(n)), Box::new(acc)))
    }

    pub fn vars(&self) -> Vec<Name> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut Vec<Name>) {
        match self {
            Pattern::Var(n) => out.push(n.clone()),
            Pattern::Pair(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn binds(&self, name: &Name) -> bool {
        match self {
            Pattern::Var(n) => n == name,
            Pattern::Pair(a, b) => a.binds(name) || b.binds(name),
        }
    }

    /// Destructures `v` along the pattern.
    pub fn bind(&self, v: &Value) -> Result<Bindings> {
        let mut out = Vec::new();
        self.bind_into(v, &mut out)?;
        Ok(Bindings(out))
    }

    fn bind_into(&self, v: &Value, out: &mut Vec<(Name, Value)>) -> Result<()> {
        match (self, v) {
            (Pattern::Var(n), v) => {
                out.push((n.clone(), v.clone()));
                Ok(())
            }
            (Pattern::Pair(a, b), Value::Pair(p)) => {
                a.bind_into(&p.0, out)?;
                b.bind_into(&p.1, out)
            }
            _ => Err(Error::PatternMismatch { pattern: self.to_string(), value: v.clone() }),
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::Var(n) => write!(f, "{n}"),
            Pattern::Pair(a, b) => write!(f, "({a}, {b})"),
        }
    }
}

/// A substitution `{v/X}` flattened to variable/value pairs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Bindings(pub Vec<(Name, Value)>);

impl Bindings {
    pub fn get(&self, name: &Name) -> Option<&Value> {
        self.0.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn without(&self, pat: &Pattern) -> Bindings {
        Bindings(self.0.iter().filter(|(n, _)| !pat.binds(n)).cloned().collect())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    Lit(Value),
    Var(Name),
    Pair(Arc<Expr>, Arc<Expr>),
    Call(Name, Arc<Expr>),
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(Name::new(name))
    }

    pub fn nat(n: u64) -> Expr {
        Expr::Lit(Value::Nat(n))
    }

    pub fn pair(a: Expr, b: Expr) -> Expr {
        Expr::Pair(Arc::new(a), Arc::new(b))
    }

    /// Right-nested tuple expression.
    pub fn tuple(items: Vec<Expr>) -> Expr {
        let mut it = items.into_iter().rev();
        let last = it.next().expect("empty tuple expression");
        it.fold(last, |acc, e| Expr::pair(e, acc))
    }

    pub fn call(f: &str, arg: Expr) -> Expr {
        Expr::Call(Name::new(f), Arc::new(arg))
    }

    pub fn is_lit(&self) -> bool {
        matches!(self, Expr::Lit(_))
    }

    pub fn substitute(&self, b: &Bindings) -> Result<Expr> {
        Ok(match self {
            Expr::Lit(_) => self.clone(),
            Expr::Var(n) => match b.get(n) {
                Some(v) => Expr::Lit(v.clone()),
                None => self.clone(),
            },
            Expr::Pair(x, y) => Expr::pair(x.substitute(b)?, y.substitute(b)?),
            Expr::Call(f, x) => Expr::Call(f.clone(), Arc::new(x.substitute(b)?)),
        })
    }

    fn free_vars(&self, out: &mut BTreeSet<FreeName>) {
        match self {
            Expr::Lit(_) => {}
            Expr::Var(n) => {
                out.insert(FreeName::Var(n.clone()));
            }
            Expr::Pair(x, y) => {
                x.free_vars(out);
                y.free_vars(out);
            }
            Expr::Call(_, x) => x.free_vars(out),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Lit(v) => write!(f, "{v}"),
            Expr::Var(n) => write!(f, "{n}"),
            Expr::Pair(a, b) => write!(f, "({a}, {b})"),
            Expr::Call(g, a) => write!(f, "{g}{}", Args(a)),
        }
    }
}

/// Call arguments: pairs already print their own parentheses.
struct Args<'a>(&'a Expr);

impl fmt::Display for Args<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Expr::Pair(..) | Expr::Lit(Value::Pair(_)) => write!(f, "{}", self.0),
            e => write!(f, "({e})"),
        }
    }
}

/// Agent numbers in channel subscripts and suspicion prefixes.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Index {
    Lit(u32),
    Var(Name),
}

impl Index {
    pub fn var(name: &str) -> Index {
        Index::Var(Name::new(name))
    }

    pub fn lit(&self) -> Option<u32> {
        match self {
            Index::Lit(k) => Some(*k),
            Index::Var(_) => None,
        }
    }

    fn substitute(&self, b: &Bindings) -> Result<Index> {
        match self {
            Index::Var(n) => match b.get(n) {
                Some(Value::Nat(k)) if *k <= u32::MAX as u64 => Ok(Index::Lit(*k as u32)),
                Some(v) => Err(Error::PatternMismatch { pattern: format!("index {n}"), value: v.clone() }),
                None => Ok(self.clone()),
            },
            Index::Lit(_) => Ok(self.clone()),
        }
    }
}

impl fmt::Display for Index {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Index::Lit(k) => write!(f, "{k}"),
            Index::Var(n) => write!(f, "{n}"),
        }
    }
}

/// A concrete channel of the consensus encoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ChannelId {
    A { sender: u32, receiver: u32, round: u32 },
    B { sender: u32, receiver: u32 },
    C { agent: u32 },
    Ok,
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelId::A { sender, receiver, round } => write!(f, "a[{sender},{receiver},{round}]"),
            ChannelId::B { sender, receiver } => write!(f, "b[{sender},{receiver}]"),
            ChannelId::C { agent } => write!(f, "c[{agent}]"),
            ChannelId::Ok => f.write_str("ok"),
        }
    }
}

/// Channel as written in a term; subscripts may still be parameters.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Channel {
    A(Index, Index, Index),
    B(Index, Index),
    C(Index),
    Ok,
}

impl Channel {
    /// The concrete channel, if every subscript is a literal.
    pub fn id(&self) -> Option<ChannelId> {
        Some(match self {
            Channel::A(s, r, k) => ChannelId::A { sender: s.lit()?, receiver: r.lit()?, round: k.lit()? },
            Channel::B(s, r) => ChannelId::B { sender: s.lit()?, receiver: r.lit()? },
            Channel::C(p) => ChannelId::C { agent: p.lit()? },
            Channel::Ok => ChannelId::Ok,
        })
    }

    fn substitute(&self, b: &Bindings) -> Result<Channel> {
        Ok(match self {
            Channel::A(s, r, k) => Channel::A(s.substitute(b)?, r.substitute(b)?, k.substitute(b)?),
            Channel::B(s, r) => Channel::B(s.substitute(b)?, r.substitute(b)?),
            Channel::C(p) => Channel::C(p.substitute(b)?),
            Channel::Ok => Channel::Ok,
        })
    }

    fn indices(&self) -> Vec<&Index> {
        match self {
            Channel::A(s, r, k) => vec![s, r, k],
            Channel::B(s, r) => vec![s, r],
            Channel::C(p) => vec![p],
            Channel::Ok => vec![],
        }
    }
}

impl From<ChannelId> for Channel {
    fn from(c: ChannelId) -> Channel {
        match c {
            ChannelId::A { sender, receiver, round } => {
                Channel::A(Index::Lit(sender), Index::Lit(receiver), Index::Lit(round))
            }
            ChannelId::B { sender, receiver } => Channel::B(Index::Lit(sender), Index::Lit(receiver)),
            ChannelId::C { agent } => Channel::C(Index::Lit(agent)),
            ChannelId::Ok => Channel::Ok,
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Channel::A(s, r, k) => write!(f, "a[{s},{r},{k}]"),
            Channel::B(s, r) => write!(f, "b[{s},{r}]"),
            Channel::C(p) => write!(f, "c[{p}]"),
            Channel::Ok => f.write_str("ok"),
        }
    }
}

/// Locations: agents `1..n` and the observer location `⋆`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Loc {
    Agent(u32),
    Star,
}

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Loc::Agent(k) => write!(f, "{k}"),
            Loc::Star => f.write_str("*"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Process {
    Nil,
    Out(Channel, Expr, Arc<Process>),
    In(Channel, Pattern, Arc<Process>),
    Susp(Index, Arc<Process>),
    PSusp(Index, Arc<Process>),
    Sum(Arc<Process>, Arc<Process>),
    If(Expr, Arc<Process>, Arc<Process>),
    Tau(Arc<Process>),
    Call(Name, Expr),
    Par(Arc<Process>, Arc<Process>),
}

impl Process {
    /// `c̄⟨e⟩`, output with no continuation.
    pub fn out(c: Channel, e: Expr) -> Process {
        Process::Out(c, e, Arc::new(Process::Nil))
    }

    pub fn input(c: Channel, x: Pattern, cont: Process) -> Process {
        Process::In(c, x, Arc::new(cont))
    }

    pub fn sum(a: Process, b: Process) -> Process {
        Process::Sum(Arc::new(a), Arc::new(b))
    }

    pub fn cond(e: Expr, then: Process, otherwise: Process) -> Process {
        Process::If(e, Arc::new(then), Arc::new(otherwise))
    }

    pub fn par(a: Process, b: Process) -> Process {
        Process::Par(Arc::new(a), Arc::new(b))
    }

    pub fn call(k: &Name, e: Expr) -> Process {
        Process::Call(k.clone(), e)
    }

    /// Right-nested parallel composition; `Nil` when empty.
    pub fn product<I>(items: I) -> Process
    where
        I: IntoIterator<Item = Process>,
        I::IntoIter: DoubleEndedIterator,
    {
        let mut it = items.into_iter().rev();
        match it.next() {
            None => Process::Nil,
            Some(last) => it.fold(last, |acc, p| Process::par(p, acc)),
        }
    }

    /// The input-or-suspect macro `a(x)▷i.P ≜ a(x).P + susp_i.P{⊥/x}`.
    pub fn inpat(c: Channel, x: &str, suspect: Index, cont: Process) -> Result<Process> {
        let bot = Pattern::var(x).bind(&Value::Bot)?;
        let on_susp = cont.subst(&bot)?;
        Ok(Process::sum(
            Process::input(c, Pattern::var(x), cont),
            Process::Susp(suspect, Arc::new(on_susp)),
        ))
    }

    /// Guarded processes per the grammar: prefixes, sums and conditionals of guards.
    pub fn is_guarded(&self) -> bool {
        match self {
            Process::Nil
            | Process::Out(..)
            | Process::In(..)
            | Process::Susp(..)
            | Process::PSusp(..) => true,
            Process::Sum(a, b) | Process::If(_, a, b) => a.is_guarded() && b.is_guarded(),
            Process::Tau(_) | Process::Call(..) | Process::Par(..) => false,
        }
    }

    /// `P{v/X}`: replaces free occurrences of the pattern variables; inner
    /// input binders shadow.
    pub fn substitute(&self, x: &Pattern, v: &Value) -> Result<Process> {
        let b = x.bind(v)?;
        self.subst(&b)
    }

    pub fn subst(&self, b: &Bindings) -> Result<Process> {
        if b.is_empty() {
            return Ok(self.clone());
        }
        Ok(match self {
            Process::Nil => Process::Nil,
            Process::Out(c, e, k) => Process::Out(c.substitute(b)?, e.substitute(b)?, Arc::new(k.subst(b)?)),
            Process::In(c, x, k) => {
                let inner = b.without(x);
                Process::In(c.substitute(b)?, x.clone(), Arc::new(k.subst(&inner)?))
            }
            Process::Susp(i, k) => Process::Susp(i.substitute(b)?, Arc::new(k.subst(b)?)),
            Process::PSusp(i, k) => Process::PSusp(i.substitute(b)?, Arc::new(k.subst(b)?)),
            Process::Sum(l, r) => Process::sum(l.subst(b)?, r.subst(b)?),
            Process::If(e, l, r) => Process::cond(e.substitute(b)?, l.subst(b)?, r.subst(b)?),
            Process::Tau(k) => Process::Tau(Arc::new(k.subst(b)?)),
            Process::Call(n, e) => Process::Call(n.clone(), e.substitute(b)?),
            Process::Par(l, r) => Process::par(l.subst(b)?, r.subst(b)?),
        })
    }

    pub fn free_names(&self) -> BTreeSet<FreeName> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut out);
        out
    }

    fn collect_free(&self, out: &mut BTreeSet<FreeName>) {
        let chan = |c: &Channel, out: &mut BTreeSet<FreeName>| {
            out.insert(FreeName::Chan(c.clone()));
            for i in c.indices() {
                if let Index::Var(n) = i {
                    out.insert(FreeName::Var(n.clone()));
                }
            }
        };
        match self {
            Process::Nil => {}
            Process::Out(c, e, k) => {
                chan(c, out);
                e.free_vars(out);
                k.collect_free(out);
            }
            Process::In(c, x, k) => {
                chan(c, out);
                let mut inner = BTreeSet::new();
                k.collect_free(&mut inner);
                out.extend(inner.into_iter().filter(|n| !matches!(n, FreeName::Var(v) if x.binds(v))));
            }
            Process::Susp(i, k) | Process::PSusp(i, k) => {
                if let Index::Var(n) = i {
                    out.insert(FreeName::Var(n.clone()));
                }
                k.collect_free(out);
            }
            Process::Sum(l, r) | Process::Par(l, r) => {
                l.collect_free(out);
                r.collect_free(out);
            }
            Process::If(e, l, r) => {
                e.free_vars(out);
                l.collect_free(out);
                r.collect_free(out);
            }
            Process::Tau(k) => k.collect_free(out),
            Process::Call(_, e) => e.free_vars(out),
        }
    }
}

impl fmt::Display for Process {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Process::Nil => f.write_str("0"),
            Process::Out(c, e, k) if **k == Process::Nil => write!(f, "{c}!<{e}>"),
            Process::Out(c, e, k) => write!(f, "{c}!<{e}>.{k}"),
            Process::In(c, x, k) => write!(f, "{c}?({x}).{k}"),
            Process::Susp(i, k) => write!(f, "susp {i}.{k}"),
            Process::PSusp(i, k) => write!(f, "psusp {i}.{k}"),
            Process::Sum(l, r) => write!(f, "({l} + {r})"),
            Process::If(e, l, r) => write!(f, "(if {e} then {l} else {r})"),
            Process::Tau(k) => write!(f, "tau.{k}"),
            Process::Call(n, e) => write!(f, "{n}{}", Args(e)),
            Process::Par(l, r) => write!(f, "({l} | {r})"),
        }
    }
}

/// Names that can occur free: variables and channels.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FreeName {
    Var(Name),
    Chan(Channel),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Network {
    Nil,
    Located(Loc, Process),
    Par(Box<Network>, Box<Network>),
    Res(Box<Network>, ChannelId),
}

impl Network {
    pub fn at(loc: Loc, p: Process) -> Network {
        Network::Located(loc, p)
    }

    pub fn par(a: Network, b: Network) -> Network {
        Network::Par(Box::new(a), Box::new(b))
    }

    /// Right-nested parallel composition; `Nil` when empty.
    pub fn product<I>(items: I) -> Network
    where
        I: IntoIterator<Item = Network>,
        I::IntoIter: DoubleEndedIterator,
    {
        let mut it = items.into_iter().rev();
        match it.next() {
            None => Network::Nil,
            Some(last) => it.fold(last, |acc, n| Network::par(n, acc)),
        }
    }

    /// `N \ a1 \ a2 ...` in the given order, `a1` innermost.
    pub fn restrict<'a, I: IntoIterator<Item = &'a ChannelId>>(self, chans: I) -> Network {
        chans.into_iter().fold(self, |n, c| Network::Res(Box::new(n), *c))
    }

    pub fn free_names(&self) -> BTreeSet<FreeName> {
        match self {
            Network::Nil => BTreeSet::new(),
            Network::Located(_, p) => p.free_names(),
            Network::Par(a, b) => {
                let mut s = a.free_names();
                s.extend(b.free_names());
                s
            }
            Network::Res(n, c) => {
                let bound = FreeName::Chan(Channel::from(*c));
                let mut s = n.free_names();
                s.remove(&bound);
                s
            }
        }
    }

    /// Splits off restrictions (hoisted outwards) and lists the located
    /// components left to right. `Nil` components are dropped.
    pub fn flatten(&self) -> (BTreeSet<ChannelId>, Vec<(Loc, Process)>) {
        let mut res = BTreeSet::new();
        let mut comps = Vec::new();
        self.flatten_into(&mut res, &mut comps);
        (res, comps)
    }

    /// [`Network::flatten`] by value.
    pub fn into_flat(self) -> (BTreeSet<ChannelId>, Vec<(Loc, Process)>) {
        let mut res = BTreeSet::new();
        let mut comps = Vec::new();
        let mut stack = vec![self];
        while let Some(n) = stack.pop() {
            match n {
                Network::Nil => {}
                Network::Located(l, p) => comps.push((l, p)),
                Network::Par(a, b) => {
                    stack.push(*b);
                    stack.push(*a);
                }
                Network::Res(n, c) => {
                    res.insert(c);
                    stack.push(*n);
                }
            }
        }
        (res, comps)
    }

    fn flatten_into(&self, res: &mut BTreeSet<ChannelId>, comps: &mut Vec<(Loc, Process)>) {
        match self {
            Network::Nil => {}
            Network::Located(l, p) => comps.push((*l, p.clone())),
            Network::Par(a, b) => {
                a.flatten_into(res, comps);
                b.flatten_into(res, comps);
            }
            Network::Res(n, c) => {
                res.insert(*c);
                n.flatten_into(res, comps);
            }
        }
    }
}

impl fmt::Display for Network {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Network::Nil => f.write_str("0"),
            Network::Located(l, p) => write!(f, "{l}[{p}]"),
            Network::Par(a, b) => write!(f, "{a} || {b}"),
            Network::Res(n, c) => write!(f, "({n})\\{c}"),
        }
    }
}

/// `⟨(L, n), ti, N⟩`. The live set stores agent ids only; `⋆` is always live.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Configuration {
    pub live: BTreeSet<u32>,
    pub budget: u32,
    pub ti: Option<u32>,
    pub net: Network,
}

impl Configuration {
    pub fn is_live(&self, loc: Loc) -> bool {
        match loc {
            Loc::Star => true,
            Loc::Agent(k) => self.live.contains(&k),
        }
    }

    pub fn with_net(&self, net: Network) -> Configuration {
        Configuration { live: self.live.clone(), budget: self.budget, ti: self.ti, net }
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let live: Vec<String> = self.live.iter().map(|k| k.to_string()).collect();
        let ti = self.ti.map_or("_".to_string(), |t| t.to_string());
        write!(f, "<({{{}}}, {}), {}, {}>", live.join(","), self.budget, ti, self.net)
    }
}

pub type Builtin = fn(&Value) -> Result<Value>;

/// The function table `A` available to expressions.
#[derive(Clone, Default)]
pub struct FnTable {
    fns: HashMap<Name, Builtin>,
}

impl FnTable {
    pub fn new() -> Self {
        FnTable::default()
    }

    pub fn register(&mut self, name: &str, f: Builtin) -> &mut Self {
        self.fns.insert(Name::new(name), f);
        self
    }

    pub fn get(&self, name: &Name) -> Option<Builtin> {
        self.fns.get(name).copied()
    }

    /// Arithmetic and boolean helpers; booleans are `Nat 1` / `Nat 0`.
    pub fn arithmetic() -> Self {
        fn nats(f: &str, v: &Value) -> Result<(u64, u64)> {
            match v.as_pair() {
                Some((Value::Nat(a), Value::Nat(b))) => Ok((*a, *b)),
                _ => Err(Error::TypeMismatch { func: f.to_string(), arg: v.clone() }),
            }
        }
        fn pair<'a>(f: &str, v: &'a Value) -> Result<(&'a Value, &'a Value)> {
            v.as_pair().ok_or_else(|| Error::TypeMismatch { func: f.to_string(), arg: v.clone() })
        }
        fn truth(f: &str, v: &Value) -> Result<bool> {
            match v {
                Value::Nat(n) => Ok(*n > 0),
                _ => Err(Error::TypeMismatch { func: f.to_string(), arg: v.clone() }),
            }
        }
        let mut t = FnTable::new();
        t.register("add", |v| nats("add", v).map(|(a, b)| Value::Nat(a + b)))
            .register("sub", |v| nats("sub", v).map(|(a, b)| Value::Nat(a.saturating_sub(b))))
            .register("lt", |v| nats("lt", v).map(|(a, b)| Value::bool(a < b)))
            .register("le", |v| nats("le", v).map(|(a, b)| Value::bool(a <= b)))
            .register("eq", |v| pair("eq", v).map(|(a, b)| Value::bool(a == b)))
            .register("neq", |v| pair("neq", v).map(|(a, b)| Value::bool(a != b)))
            .register("and", |v| {
                let (a, b) = pair("and", v)?;
                Ok(Value::bool(truth("and", a)? && truth("and", b)?))
            })
            .register("or", |v| {
                let (a, b) = pair("or", v)?;
                Ok(Value::bool(truth("or", a)? || truth("or", b)?))
            })
            .register("not", |v| Ok(Value::bool(!truth("not", v)?)));
        t
    }
}

impl fmt::Debug for FnTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut names: Vec<&str> = self.fns.keys().map(Name::as_str).collect();
        names.sort_unstable();
        f.debug_struct("FnTable").field("fns", &names).finish()
    }
}

/// A process equation `K(X) = P`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Equation {
    pub param: Pattern,
    pub body: Process,
}

/// The equation set `D` together with the function table.
#[derive(Clone, Debug, Default)]
pub struct Program {
    pub equations: HashMap<Name, Equation>,
    pub functions: FnTable,
}

impl Program {
    pub fn define(&mut self, name: &Name, param: Pattern, body: Process) {
        self.equations.insert(name.clone(), Equation { param, body });
    }

    pub fn equation(&self, name: &Name) -> Result<&Equation> {
        self.equations.get(name).ok_or_else(|| Error::UndefinedConstant(name.clone()))
    }
}

/// `⟦e⟧`. The expression must be closed.
pub fn eval_expr(e: &Expr, fns: &FnTable) -> Result<Value> {
    match e {
        Expr::Lit(v) => Ok(v.clone()),
        Expr::Var(n) => Err(Error::FreeVariable(n.clone())),
        Expr::Pair(a, b) => Ok(Value::pair(eval_expr(a, fns)?, eval_expr(b, fns)?)),
        Expr::Call(f, a) => {
            let g = fns.get(f).ok_or_else(|| Error::UnboundFunction(f.clone()))?;
            g(&eval_expr(a, fns)?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c() -> Channel {
        Channel::C(Index::Lit(1))
    }

    fn d() -> Channel {
        Channel::C(Index::Lit(2))
    }

    #[test]
    fn literal_and_pair_evaluation() {
        let t = FnTable::arithmetic();
        assert_eq!(eval_expr(&Expr::nat(5), &t).unwrap(), Value::Nat(5));
        assert_eq!(
            eval_expr(&Expr::pair(Expr::nat(1), Expr::Lit(Value::Bot)), &t).unwrap(),
            Value::pair(Value::Nat(1), Value::Bot)
        );
    }

    #[test]
    fn unbound_function_and_type_mismatch() {
        let t = FnTable::arithmetic();
        assert_eq!(
            eval_expr(&Expr::call("nope", Expr::nat(1)), &t),
            Err(Error::UnboundFunction(Name::new("nope")))
        );
        assert!(matches!(
            eval_expr(&Expr::call("lt", Expr::pair(Expr::Lit(Value::Bot), Expr::nat(1))), &t),
            Err(Error::TypeMismatch { .. })
        ));
        assert_eq!(eval_expr(&Expr::var("x"), &t), Err(Error::FreeVariable(Name::new("x"))));
    }

    #[test]
    fn booleans_are_naturals() {
        let t = FnTable::arithmetic();
        let eq = |a: Value, b: Value| eval_expr(&Expr::call("eq", Expr::pair(Expr::Lit(a), Expr::Lit(b))), &t).unwrap();
        assert_eq!(eq(Value::Bot, Value::Bot), Value::Nat(1));
        assert_eq!(eq(Value::Bot, Value::Nat(0)), Value::Nat(0));
    }

    #[test]
    fn substitute_scalar() {
        let p = Process::out(c(), Expr::var("x"));
        let q = p.substitute(&Pattern::var("x"), &Value::Nat(5)).unwrap();
        assert_eq!(q, Process::out(c(), Expr::nat(5)));
    }

    #[test]
    fn substitute_pair_componentwise() {
        let p = Process::out(c(), Expr::pair(Expr::var("y"), Expr::var("x")));
        let q = p
            .substitute(&Pattern::tuple(&["x", "y"]), &Value::pair(Value::Nat(1), Value::Nat(2)))
            .unwrap();
        assert_eq!(q, Process::out(c(), Expr::pair(Expr::nat(2), Expr::nat(1))));
    }

    #[test]
    fn binder_shadows() {
        let p = Process::input(c(), Pattern::var("x"), Process::out(d(), Expr::var("x")));
        assert_eq!(p.substitute(&Pattern::var("x"), &Value::Nat(9)).unwrap(), p);
    }

    #[test]
    fn pattern_mismatch() {
        let p = Process::out(c(), Expr::var("x"));
        assert!(matches!(
            p.substitute(&Pattern::tuple(&["x", "y"]), &Value::Nat(1)),
            Err(Error::PatternMismatch { .. })
        ));
    }

    #[test]
    fn substitution_reaches_indices() {
        let p = Process::Susp(Index::var("i"), Arc::new(Process::out(Channel::C(Index::var("i")), Expr::nat(0))));
        let q = p.substitute(&Pattern::var("i"), &Value::Nat(3)).unwrap();
        assert_eq!(
            q,
            Process::Susp(Index::Lit(3), Arc::new(Process::out(Channel::C(Index::Lit(3)), Expr::nat(0))))
        );
    }

    #[test]
    fn free_names_examples() {
        assert!(Process::Nil.free_names().is_empty());
        let p = Process::out(c(), Expr::var("x"));
        let fv: BTreeSet<FreeName> = [FreeName::Chan(c()), FreeName::Var(Name::new("x"))].into_iter().collect();
        assert_eq!(p.free_names(), fv);
        let chan = ChannelId::C { agent: 1 };
        let n = Network::Res(Box::new(Network::at(Loc::Agent(1), Process::out(chan.into(), Expr::nat(1)))), chan);
        assert!(n.free_names().is_empty());
    }

    #[test]
    fn input_binds_its_pattern() {
        let p = Process::input(c(), Pattern::var("x"), Process::out(d(), Expr::pair(Expr::var("x"), Expr::var("y"))));
        let fv = p.free_names();
        assert!(fv.contains(&FreeName::Var(Name::new("y"))));
        assert!(!fv.contains(&FreeName::Var(Name::new("x"))));
    }

    #[test]
    fn inpat_expands_to_sum() {
        let p = Process::inpat(c(), "x", Index::Lit(2), Process::out(d(), Expr::var("x"))).unwrap();
        assert_eq!(
            p,
            Process::sum(
                Process::input(c(), Pattern::var("x"), Process::out(d(), Expr::var("x"))),
                Process::Susp(Index::Lit(2), Arc::new(Process::out(d(), Expr::Lit(Value::Bot)))),
            )
        );
        assert!(p.is_guarded());
        assert!(!Process::par(Process::Nil, Process::Nil).is_guarded());
    }
}
