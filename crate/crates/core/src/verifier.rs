//! Explicit-state exploration of both semantics and the checks run over
//! the resulting graphs.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};

use crate::ast::{ChannelId, Configuration, Loc, Network, Value};
use crate::error::{Error, Result};
use crate::eval::{eval_steps, evaluate};
use crate::lts::{self, term_transitions, Action, CalcRule};
use crate::model::{KnowVector, Model, MsgSet, RelayVector};
use crate::repsem::{self, rep_successors, sf_state, sfi_state, RuleId, SysState};

pub const DEFAULT_MAX_STATES: usize = 5_000_000;

/// Which successor function drives exploration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Calculus transitions via `SF⁻¹` / `SF`.
    Calculus,
    /// The representative rules.
    Representative,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "calculus" => Ok(Mode::Calculus),
            "representative" => Ok(Mode::Representative),
            _ => Err(Error::Config(format!("unknown mode `{s}`"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Calculus => "calculus",
            Mode::Representative => "representative",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Limits {
    pub max_states: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_states: DEFAULT_MAX_STATES }
    }
}

/// The rule behind an edge, from either semantics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Rule {
    Rep(RuleId),
    Calc(CalcRule),
}

impl Rule {
    /// `(suspecting location, suspected agent)` for `Susp`-style steps.
    pub fn suspicion(self) -> Option<(Loc, u32)> {
        match self {
            Rule::Rep(r) => r.suspicion().map(|(by, t)| (Loc::Agent(by), t)),
            Rule::Calc(CalcRule::Susp { by, target }) => Some((by, target)),
            Rule::Calc(_) => None,
        }
    }

    pub fn perfect_suspicion(self) -> Option<u32> {
        match self {
            Rule::Rep(r) => r.perfect_suspicion(),
            Rule::Calc(CalcRule::PSusp { target, .. }) => Some(target),
            Rule::Calc(_) => None,
        }
    }

    pub fn crash(self) -> Option<u32> {
        match self {
            Rule::Rep(r) => r.crash(),
            Rule::Calc(CalcRule::Stop { agent }) => Some(agent),
            Rule::Calc(_) => None,
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::Rep(r) => write!(f, "{r}"),
            Rule::Calc(r) => write!(f, "{r}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Label {
    pub rule: Rule,
    pub action: Action,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.rule, self.action)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub from: u32,
    pub to: u32,
    label: u32,
}

fn encode(s: &SysState) -> Box<[u8]> {
    postcard::to_allocvec(s).expect("system states serialise").into_boxed_slice()
}

/// An explored state graph. States are stored in a compact binary
/// encoding; edges are grouped by source.
#[derive(Debug, Default)]
pub struct LtsGraph {
    states: IndexSet<Box<[u8]>>,
    pub initials: Vec<u32>,
    edges: Vec<Edge>,
    offsets: Vec<usize>,
    labels: IndexSet<Label>,
    /// Set when exploration stopped at the state bound.
    pub truncated: bool,
    /// Successor computations that failed, by state.
    pub errors: Vec<(u32, Error)>,
}

impl LtsGraph {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn state(&self, id: u32) -> SysState {
        postcard::from_bytes(&self.states[id as usize]).expect("stored states decode")
    }

    pub fn id_of(&self, s: &SysState) -> Option<u32> {
        self.states.get_index_of(&encode(s)).map(|k| k as u32)
    }

    pub fn states(&self) -> impl Iterator<Item = (u32, SysState)> + '_ {
        (0..self.states.len() as u32).map(|k| (k, self.state(k)))
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Outgoing edges; empty for states not (yet) expanded.
    pub fn out_edges(&self, id: u32) -> &[Edge] {
        let k = id as usize;
        if k + 1 >= self.offsets.len() {
            return &[];
        }
        &self.edges[self.offsets[k]..self.offsets[k + 1]]
    }

    pub fn label(&self, e: &Edge) -> &Label {
        &self.labels[e.label as usize]
    }

    pub fn is_expanded(&self, id: u32) -> bool {
        (id as usize) + 1 < self.offsets.len()
    }

    fn intern(&mut self, s: &SysState) -> (u32, bool) {
        let (k, fresh) = self.states.insert_full(encode(s));
        (k as u32, fresh)
    }

    /// Shortest path from an initial state, as `(rule, state digest)` steps.
    pub fn trace_to(&self, target: u32) -> Vec<String> {
        let mut parent: HashMap<u32, Option<(u32, u32)>> = HashMap::new();
        let mut queue = VecDeque::new();
        for &i in &self.initials {
            parent.entry(i).or_insert(None);
            queue.push_back(i);
        }
        while let Some(x) = queue.pop_front() {
            if x == target {
                break;
            }
            for e in self.out_edges(x) {
                if let std::collections::hash_map::Entry::Vacant(v) = parent.entry(e.to) {
                    v.insert(Some((x, e.label)));
                    queue.push_back(e.to);
                }
            }
        }
        let mut steps = Vec::new();
        let mut cur = target;
        while let Some(Some((p, l))) = parent.get(&cur) {
            steps.push(format!("{} -> {}", self.labels[*l as usize], self.state(cur).rep.digest()));
            cur = *p;
        }
        steps.push(format!("init ti={} -> {}", self.state(cur).rep.ti, self.state(cur).rep.digest()));
        steps.reverse();
        steps
    }
}

fn mode_successors(model: &Model, mode: Mode, s: &SysState) -> Result<Vec<(Label, SysState)>> {
    Ok(match mode {
        Mode::Representative => rep_successors(model, s)?
            .into_iter()
            .map(|(r, t)| (Label { rule: Rule::Rep(r), action: r.action() }, t))
            .collect(),
        Mode::Calculus => lts::successors(model, s)?
            .into_iter()
            .map(|(r, a, t)| (Label { rule: Rule::Calc(r), action: a }, t))
            .collect(),
    })
}

/// Breadth-first exploration from every choice of trusted immortal.
pub fn explore(model: &Model, mode: Mode, limits: Limits) -> Result<LtsGraph> {
    let mut g = LtsGraph::default();
    for s in lts::initial_states(model)? {
        let (id, _) = g.intern(&s);
        g.initials.push(id);
    }
    g.offsets.push(0);
    let mut next = 0u32;
    while (next as usize) < g.states.len() {
        let s = g.state(next);
        match mode_successors(model, mode, &s) {
            Ok(succ) => {
                for (label, t) in succ {
                    if g.states.len() >= limits.max_states && g.id_of(&t).is_none() {
                        g.truncated = true;
                        continue;
                    }
                    let (to, _) = g.intern(&t);
                    let (label, _) = g.labels.insert_full(label);
                    g.edges.push(Edge { from: next, to, label: label as u32 });
                }
            }
            Err(e) => g.errors.push((next, e)),
        }
        g.offsets.push(g.edges.len());
        next += 1;
        if g.truncated {
            break;
        }
    }
    Ok(g)
}

/// One disagreement between the two semantics at a state.
#[derive(Clone, Debug, Serialize)]
pub struct Mismatch {
    pub state: String,
    pub transition: String,
    pub target: String,
}

/// Soundness/completeness certificate.
#[derive(Clone, Debug, Default, Serialize)]
pub struct CorrespondenceReport {
    pub checked: usize,
    pub transitions: usize,
    /// Representative steps with no calculus counterpart.
    pub sound_failures: Vec<Mismatch>,
    /// Calculus steps with no representative counterpart.
    pub complete_failures: Vec<Mismatch>,
    pub errors: Vec<String>,
    pub truncated: bool,
    pub pass: bool,
}

const MAX_REPORTED: usize = 20;

/// Compares, state by state, the successor sets of both semantics over
/// everything reachable under either.
pub fn check_correspondence(model: &Model, limits: Limits) -> Result<CorrespondenceReport> {
    let mut report = CorrespondenceReport::default();
    let mut seen: IndexSet<Box<[u8]>> = IndexSet::new();
    for s in lts::initial_states(model)? {
        seen.insert(encode(&s));
    }
    let mut sound = 0usize;
    let mut complete = 0usize;
    let mut next = 0;
    while next < seen.len() {
        let s: SysState = postcard::from_bytes(&seen[next]).expect("stored states decode");
        next += 1;
        report.checked += 1;
        let (rep, calc) = match (rep_successors(model, &s), lts::successors(model, &s)) {
            (Ok(r), Ok(c)) => (r, c),
            (r, c) => {
                for e in [r.err(), c.err()].into_iter().flatten() {
                    if report.errors.len() < MAX_REPORTED {
                        report.errors.push(format!("{}: {e}", s.rep.digest()));
                    }
                }
                continue;
            }
        };
        let rep_set: HashSet<(Action, SysState)> = rep.iter().map(|(r, t)| (r.action(), t.clone())).collect();
        let calc_set: HashSet<(Action, SysState)> = calc.iter().map(|(_, a, t)| (a.clone(), t.clone())).collect();
        report.transitions += rep_set.len();
        for (r, t) in &rep {
            if !calc_set.contains(&(r.action(), t.clone())) {
                sound += 1;
                if report.sound_failures.len() < MAX_REPORTED {
                    report.sound_failures.push(Mismatch {
                        state: s.rep.canonical_json(),
                        transition: r.to_string(),
                        target: t.rep.canonical_json(),
                    });
                }
            }
        }
        for (r, a, t) in &calc {
            if !rep_set.contains(&(a.clone(), t.clone())) {
                complete += 1;
                if report.complete_failures.len() < MAX_REPORTED {
                    report.complete_failures.push(Mismatch {
                        state: s.rep.canonical_json(),
                        transition: format!("{r}:{a}"),
                        target: t.rep.canonical_json(),
                    });
                }
            }
        }
        for t in rep.into_iter().map(|(_, t)| t).chain(calc.into_iter().map(|(_, _, t)| t)) {
            let key = encode(&t);
            if !seen.contains(&key) {
                if seen.len() >= limits.max_states {
                    report.truncated = true;
                } else {
                    seen.insert(key);
                }
            }
        }
        if report.truncated {
            break;
        }
    }
    report.pass = sound == 0 && complete == 0 && report.errors.is_empty();
    Ok(report)
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ConfluenceReport {
    /// Raw configurations whose `>`-closure was explored.
    pub roots: usize,
    /// Distinct configurations visited inside those closures.
    pub configurations: usize,
    /// Configurations with two or more `>`-successors.
    pub diamonds: usize,
    pub failures: Vec<String>,
    pub truncated: bool,
    pub pass: bool,
}

const MAX_CLOSURE: usize = 2_000_000;

/// Every configuration `>`-reachable from `c` must evaluate to the same
/// fixed point, which must have no further step.
fn closure_joins(model: &Model, c: &Configuration, report: &mut ConfluenceReport) -> Result<()> {
    let target = evaluate(c, &model.program)?;
    if !eval_steps(&target, &model.program)?.is_empty() {
        report.failures.push(format!("evaluate result is not a fixed point: {target}"));
        return Ok(());
    }
    let mut seen: HashSet<Network> = HashSet::from([c.net.clone()]);
    let mut stack = vec![c.clone()];
    report.roots += 1;
    while let Some(x) = stack.pop() {
        let steps = eval_steps(&x, &model.program)?;
        if steps.len() >= 2 {
            report.diamonds += 1;
        }
        if steps.is_empty() && x != target {
            if report.failures.len() < MAX_REPORTED {
                report.failures.push(format!("two fixed points from {c}: {x} and {target}"));
            }
            continue;
        }
        for (_, y) in steps {
            if seen.len() >= MAX_CLOSURE {
                report.truncated = true;
                break;
            }
            if seen.insert(y.net.clone()) {
                stack.push(y);
            }
        }
    }
    report.configurations += seen.len();
    Ok(())
}

/// Checks confluence of `>` on the initial configurations and on every raw
/// transition target of every state reachable in the representative graph.
pub fn check_confluence(model: &Model, limits: Limits) -> Result<ConfluenceReport> {
    let mut report = ConfluenceReport::default();
    let init = model.initial();
    closure_joins(model, &init, &mut report)?;
    for c in lts::select_ti(&init)? {
        closure_joins(model, &c, &mut report)?;
    }
    let g = explore(model, Mode::Representative, limits)?;
    report.truncated |= g.truncated;
    for (_, s) in g.states() {
        let joined = sfi_state(model, &s).and_then(|c| {
            closure_joins(model, &c, &mut report)?;
            for (_, _, t) in term_transitions(model, &c)? {
                closure_joins(model, &t, &mut report)?;
            }
            Ok(())
        });
        if let Err(e) = joined {
            if report.failures.len() < MAX_REPORTED {
                report.failures.push(format!("{}: {e}", s.rep.digest()));
            }
        }
    }
    report.pass = report.failures.is_empty() && g.errors.is_empty();
    Ok(report)
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct RoundTripReport {
    pub states: usize,
    pub raw_configurations: usize,
    pub failures: Vec<String>,
    pub pass: bool,
}

/// `SF(SF⁻¹(R)) = R` on every node, and `SF` succeeds on every raw
/// transition target with `SF⁻¹(SF(C)) ≡ C`.
pub fn check_round_trips(model: &Model, g: &LtsGraph) -> Result<RoundTripReport> {
    let mut report = RoundTripReport::default();
    let fail = |report: &mut RoundTripReport, m: String| {
        if report.failures.len() < MAX_REPORTED {
            report.failures.push(m);
        }
    };
    for (_, s) in g.states() {
        report.states += 1;
        let c = match sfi_state(model, &s) {
            Ok(c) => c,
            Err(e) => {
                fail(&mut report, format!("sfi failed on {}: {e}", s.rep.digest()));
                continue;
            }
        };
        match sf_state(model, &c) {
            Ok(back) if back == s => {}
            Ok(_) => fail(&mut report, format!("sf(sfi(R)) != R at {}", s.rep.digest())),
            Err(e) => fail(&mut report, format!("sf failed on sfi({}): {e}", s.rep.digest())),
        }
        let raw = match term_transitions(model, &c) {
            Ok(raw) => raw,
            Err(e) => {
                fail(&mut report, format!("no transitions from {}: {e}", s.rep.digest()));
                continue;
            }
        };
        for (rule, _, t) in raw {
            report.raw_configurations += 1;
            match sf_state(model, &t) {
                Ok(r) => {
                    let again = sfi_state(model, &r)?;
                    if !crate::eval::congruent(model, &again, &t)? {
                        fail(&mut report, format!("sfi(sf(C)) not congruent to C after {rule}"));
                    }
                }
                Err(e) => fail(&mut report, format!("sf failed after {rule} from {}: {e}", s.rep.digest())),
            }
        }
    }
    report.pass = report.failures.is_empty();
    Ok(report)
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct PropertyReport {
    pub states: usize,
    pub transitions: usize,
    pub validity: bool,
    pub agreement: bool,
    pub termination: bool,
    pub only_ok_observable: bool,
    pub weak_accuracy: bool,
    pub psusp_soundness: bool,
    pub crash_monotone: bool,
    pub no_errors: bool,
    /// Number of reachable states carrying a decision message with each value.
    pub decided_values: BTreeMap<u64, usize>,
    pub failures: Vec<String>,
    pub pass: bool,
}

fn slot_ok(v: Option<u64>, q: usize, u: &[u64]) -> bool {
    v.is_none_or(|x| x == u[q])
}

fn know_ok(v: &KnowVector, u: &[u64]) -> bool {
    v.0.len() == u.len() && v.0.iter().enumerate().all(|(q, (x, _))| slot_ok(*x, q, u))
}

fn relay_ok(v: &RelayVector, u: &[u64]) -> bool {
    v.0.len() == u.len() && v.0.iter().enumerate().all(|(q, x)| slot_ok(*x, q, u))
}

fn msgs_ok(m: &MsgSet, u: &[u64]) -> bool {
    m.phase1.iter().all(|e| e.relay.as_ref().is_none_or(|d| relay_ok(d, u)))
        && m.phase2.iter().all(|e| e.vector.as_ref().is_none_or(|v| know_ok(v, u)))
}

/// Slot-purity of every vector and membership of every decided value in `U`.
pub fn state_is_valid(s: &SysState, u: &[u64]) -> bool {
    let r = &s.rep;
    r.out1.iter().all(|e| relay_ok(&e.payload, u))
        && r.out2.iter().all(|e| know_ok(&e.payload, u))
        && r.out3.iter().all(|e| u.contains(&e.v))
        && r.in1.iter().all(|e| know_ok(&e.v, u) && msgs_ok(&e.m, u))
        && r.in2.iter().all(|e| know_ok(&e.v, u) && msgs_ok(&e.m, u))
        && r.wrap.w.is_none_or(|w| u.contains(&w))
}

/// Strongly connected components of the τ-subgraph (iterative Tarjan).
/// Components are numbered in completion order, so every τ-edge leads to a
/// component with a smaller or equal number.
pub fn tau_sccs(n: usize, succ: &[Vec<u32>]) -> (Vec<u32>, usize) {
    const UNSET: u32 = u32::MAX;
    let mut index = vec![UNSET; n];
    let mut low = vec![0u32; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![UNSET; n];
    let mut stack: Vec<u32> = Vec::new();
    let mut calls: Vec<(u32, usize)> = Vec::new();
    let mut counter = 0u32;
    let mut ncomp = 0usize;
    for root in 0..n as u32 {
        if index[root as usize] != UNSET {
            continue;
        }
        index[root as usize] = counter;
        low[root as usize] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root as usize] = true;
        calls.push((root, 0));
        while let Some(top) = calls.len().checked_sub(1) {
            let (v, pos) = calls[top];
            let vs = v as usize;
            if pos < succ[vs].len() {
                calls[top].1 += 1;
                let w = succ[vs][pos];
                let ws = w as usize;
                if index[ws] == UNSET {
                    index[ws] = counter;
                    low[ws] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[ws] = true;
                    calls.push((w, 0));
                } else if on_stack[ws] {
                    low[vs] = low[vs].min(index[ws]);
                }
            } else {
                calls.pop();
                if let Some(&(u, _)) = calls.last() {
                    low[u as usize] = low[u as usize].min(low[vs]);
                }
                if low[vs] == index[vs] {
                    while let Some(w) = stack.pop() {
                        on_stack[w as usize] = false;
                        comp[w as usize] = ncomp as u32;
                        if w == v {
                            break;
                        }
                    }
                    ncomp += 1;
                }
            }
        }
    }
    (comp, ncomp)
}

/// Whether the τ-subgraph has a cycle (including τ self-loops).
pub fn has_tau_cycle(succ: &[Vec<u32>]) -> bool {
    let (_, ncomp) = tau_sccs(succ.len(), succ);
    ncomp < succ.len() || succ.iter().enumerate().any(|(v, ws)| ws.contains(&(v as u32)))
}

struct Summary {
    live: BTreeSet<u32>,
    budget: u32,
    ti: u32,
}

/// Validity, Agreement, Termination and the trace invariants over a fully
/// explored graph.
pub fn check_properties(model: &Model, g: &LtsGraph) -> Result<PropertyReport> {
    if g.truncated {
        return Err(Error::GraphTruncated(g.num_states()));
    }
    let u = &model.inst.values;
    let n = g.num_states();
    let mut rep = PropertyReport {
        states: n,
        transitions: g.num_edges(),
        validity: true,
        agreement: true,
        termination: true,
        only_ok_observable: true,
        weak_accuracy: true,
        psusp_soundness: true,
        crash_monotone: true,
        no_errors: g.errors.is_empty(),
        ..PropertyReport::default()
    };
    let mut first_bad: Vec<(String, u32)> = Vec::new();
    let mut summaries = Vec::with_capacity(n);
    let mut tau: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (id, s) in g.states() {
        if !state_is_valid(&s, u) {
            rep.validity = false;
            first_bad.push(("validity".into(), id));
        }
        if s.rep.wrap.b == 0 {
            if rep.agreement {
                first_bad.push(("agreement (wrapper saw two decisions)".into(), id));
            }
            rep.agreement = false;
        }
        for e in &s.rep.out3 {
            *rep.decided_values.entry(e.v).or_default() += 1;
        }
        for e in g.out_edges(id) {
            if g.label(e).action.is_tau() {
                tau[id as usize].push(e.to);
            }
        }
        if tau[id as usize].is_empty() && s.rep.wrap.j != 0 {
            if rep.termination {
                first_bad.push(("termination (τ-maximal state has not decided)".into(), id));
            }
            rep.termination = false;
        }
        summaries.push(Summary { live: s.rep.live, budget: s.rep.budget, ti: s.rep.ti });
    }
    if has_tau_cycle(&tau) {
        rep.termination = false;
        rep.failures.push("termination: τ-cycle in the state graph".into());
    }
    for e in g.edges() {
        let l = g.label(e);
        let (src, dst) = (&summaries[e.from as usize], &summaries[e.to as usize]);
        let mut bad = |flag: &mut bool, what: &str| {
            if *flag {
                first_bad.push((format!("{what} at {l}"), e.from));
            }
            *flag = false;
        };
        if !l.action.is_tau() && l.action != Action::Send(ChannelId::Ok, Value::Bot) {
            bad(&mut rep.only_ok_observable, "non-ok observable");
        }
        if let Some((_, target)) = l.rule.suspicion() {
            if target == src.ti {
                bad(&mut rep.weak_accuracy, "suspicion of the trusted immortal");
            }
        }
        if let Some(target) = l.rule.perfect_suspicion() {
            if src.live.contains(&target) {
                bad(&mut rep.psusp_soundness, "perfect suspicion of a live agent");
            }
        }
        let crashed = l.rule.crash();
        let monotone = dst.live.is_subset(&src.live)
            && match crashed {
                Some(p) => dst.budget + 1 == src.budget && src.live.contains(&p) && !dst.live.contains(&p),
                None => dst.budget == src.budget && dst.live == src.live,
            };
        if !monotone {
            bad(&mut rep.crash_monotone, "crash monotonicity");
        }
    }
    for (id, err) in &g.errors {
        first_bad.push((format!("successor error: {err}"), *id));
    }
    for (what, id) in first_bad.into_iter().take(MAX_REPORTED) {
        rep.failures.push(format!("{what}; trace: {}", g.trace_to(id).join(" ; ")));
    }
    rep.pass = rep.validity
        && rep.agreement
        && rep.termination
        && rep.only_ok_observable
        && rep.weak_accuracy
        && rep.psusp_soundness
        && rep.crash_monotone
        && rep.no_errors;
    Ok(rep)
}

/// A plain labelled transition system for bisimulation checking. Letters
/// index `alphabet`; `None` is τ.
#[derive(Clone, Debug, Default)]
pub struct Lts {
    pub states: usize,
    pub initial: u32,
    pub edges: Vec<(u32, Option<u32>, u32)>,
    pub alphabet: Vec<Action>,
    /// Per-state description used in counterexamples.
    pub names: Vec<String>,
}

impl Lts {
    fn letter(&mut self, a: &Action) -> Option<u32> {
        if a.is_tau() {
            return None;
        }
        Some(match self.alphabet.iter().position(|b| b == a) {
            Some(k) => k as u32,
            None => {
                self.alphabet.push(a.clone());
                (self.alphabet.len() - 1) as u32
            }
        })
    }

    /// The explored system with a fresh root standing for the configuration
    /// before the trusted immortal is chosen.
    pub fn from_graph(g: &LtsGraph) -> Result<Lts> {
        if g.truncated {
            return Err(Error::GraphTruncated(g.num_states()));
        }
        let root = g.num_states() as u32;
        let mut l = Lts { states: g.num_states() + 1, initial: root, ..Lts::default() };
        for e in g.edges() {
            let a = l.letter(&g.label(e).action);
            l.edges.push((e.from, a, e.to));
        }
        for &i in &g.initials {
            l.edges.push((root, None, i));
        }
        l.names = g.states().map(|(_, s)| s.rep.digest()).collect();
        l.names.push("initial (ti unset)".into());
        Ok(l)
    }

    /// Explores a closed term with the calculus transitions, keyed by its
    /// evaluated form.
    pub fn from_term(model: &Model, c: &Configuration, max_states: usize) -> Result<Lts> {
        let mut seen: IndexSet<Configuration> = IndexSet::new();
        seen.insert(evaluate(c, &model.program)?);
        let mut l = Lts::default();
        let mut next = 0;
        while next < seen.len() {
            let x = seen[next].clone();
            for (_, a, t) in term_transitions(model, &x)? {
                let t = evaluate(&t, &model.program)?;
                let (k, fresh) = seen.insert_full(t);
                if fresh && seen.len() > max_states {
                    return Err(Error::GraphTruncated(max_states));
                }
                let a = l.letter(&a);
                l.edges.push((next as u32, a, k as u32));
            }
            next += 1;
        }
        l.states = seen.len();
        l.names = seen.iter().map(|c| c.to_string()).collect();
        Ok(l)
    }
}

/// The one-state specification `⟨(Π, 0), ti, ⋆[ok̄]⟩` as a term.
pub fn spec_configuration(model: &Model) -> Configuration {
    let p = crate::ast::Process::out(crate::ast::Channel::Ok, crate::ast::Expr::Lit(Value::Bot));
    Configuration { live: model.inst.agents().collect(), budget: 0, ti: Some(1), net: Network::at(Loc::Star, p) }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct BisimReport {
    pub bisimilar: bool,
    pub blocks: usize,
    pub rounds: usize,
    /// Related pairs `(left state, right state)`.
    pub relation: Vec<(u32, u32)>,
    /// A weak trace after which the two sides offer different observations.
    pub counterexample: Option<Vec<String>>,
}

type Sig = (u32, Vec<u32>, Vec<Vec<u32>>);

fn union_into(acc: &mut Vec<u32>, other: &[u32]) {
    if other.is_empty() {
        return;
    }
    acc.extend_from_slice(other);
    acc.sort_unstable();
    acc.dedup();
}

/// Weak bisimilarity of the initial states of `a` and `b` by signature
/// refinement of the saturated union, working on τ-SCCs in completion order.
pub fn weak_bisim(a: &Lts, b: &Lts) -> BisimReport {
    // union: a's states first, then b's; letters merged by action.
    let mut alphabet = a.alphabet.clone();
    let mut remap_b = Vec::new();
    for x in &b.alphabet {
        remap_b.push(match alphabet.iter().position(|y| y == x) {
            Some(k) => k as u32,
            None => {
                alphabet.push(x.clone());
                (alphabet.len() - 1) as u32
            }
        });
    }
    let na = a.states;
    let n = na + b.states;
    let k = alphabet.len();
    let mut tau: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut obs: Vec<Vec<(u32, u32)>> = vec![Vec::new(); n];
    for &(f, l, t) in &a.edges {
        match l {
            None => tau[f as usize].push(t),
            Some(x) => obs[f as usize].push((x, t)),
        }
    }
    for &(f, l, t) in &b.edges {
        let (f, t) = (f as usize + na, t + na as u32);
        match l {
            None => tau[f].push(t),
            Some(x) => obs[f].push((remap_b[x as usize], t)),
        }
    }
    let (comp, ncomp) = tau_sccs(n, &tau);
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); ncomp];
    for (v, &c) in comp.iter().enumerate() {
        members[c as usize].push(v as u32);
    }
    let mut ctau: Vec<Vec<u32>> = vec![Vec::new(); ncomp];
    let mut cobs: Vec<Vec<(u32, u32)>> = vec![Vec::new(); ncomp];
    for v in 0..n {
        let c = comp[v] as usize;
        for &t in &tau[v] {
            let d = comp[t as usize];
            if d as usize != c {
                ctau[c].push(d);
            }
        }
        for &(x, t) in &obs[v] {
            cobs[c].push((x, comp[t as usize]));
        }
    }
    let mut block = vec![0u32; ncomp];
    let mut nblocks = 1;
    let mut rounds = 0;
    let mut weak_obs: Vec<Vec<Vec<u32>>> = vec![vec![Vec::new(); k]; ncomp];
    loop {
        rounds += 1;
        // τ*-reachable blocks, successors first.
        let mut rt: Vec<Vec<u32>> = vec![Vec::new(); ncomp];
        for c in 0..ncomp {
            let mut acc = vec![block[c]];
            for &d in &ctau[c] {
                union_into(&mut acc, &rt[d as usize]);
            }
            rt[c] = acc;
        }
        let mut ra: Vec<Vec<Vec<u32>>> = vec![vec![Vec::new(); k]; ncomp];
        for c in 0..ncomp {
            let mut acc = vec![Vec::new(); k];
            for &(x, d) in &cobs[c] {
                union_into(&mut acc[x as usize], &rt[d as usize]);
            }
            for &d in &ctau[c] {
                for (x, set) in ra[d as usize].iter().enumerate() {
                    union_into(&mut acc[x], set);
                }
            }
            ra[c] = acc;
        }
        let mut ids: HashMap<Sig, u32> = HashMap::new();
        let mut next_block = vec![0u32; ncomp];
        for c in 0..ncomp {
            let sig = (block[c], rt[c].clone(), ra[c].clone());
            let fresh = ids.len() as u32;
            next_block[c] = *ids.entry(sig).or_insert(fresh);
        }
        let count = ids.len();
        block = next_block;
        weak_obs = ra;
        if count == nblocks {
            break;
        }
        nblocks = count;
    }
    let state_block = |v: usize| block[comp[v] as usize];
    let ia = a.initial as usize;
    let ib = b.initial as usize + na;
    let bisimilar = state_block(ia) == state_block(ib);
    let mut report = BisimReport { bisimilar, blocks: nblocks, rounds, ..BisimReport::default() };
    if bisimilar {
        let mut by_block: HashMap<u32, Vec<u32>> = HashMap::new();
        for v in na..n {
            by_block.entry(state_block(v)).or_default().push((v - na) as u32);
        }
        for v in 0..na {
            if let Some(bs) = by_block.get(&state_block(v)) {
                report.relation.extend(bs.iter().map(|&w| (v as u32, w)));
            }
        }
    } else {
        let ready = |v: usize| -> Vec<bool> { weak_obs[comp[v] as usize].iter().map(|s| !s.is_empty()).collect() };
        report.counterexample = Some(distinguishing_trace(a, b, na, &tau, &obs, &alphabet, &ready));
    }
    report
}

/// Searches the weak traces of `a` against the determinised `b` for a
/// state whose weakly enabled observations no matching `b` state offers.
fn distinguishing_trace(
    a: &Lts,
    _b: &Lts,
    na: usize,
    tau: &[Vec<u32>],
    obs: &[Vec<(u32, u32)>],
    alphabet: &[Action],
    ready: &dyn Fn(usize) -> Vec<bool>,
) -> Vec<String> {
    let closure = |set: Vec<u32>| -> Vec<u32> {
        let mut seen: BTreeSet<u32> = set.iter().copied().collect();
        let mut stack = set;
        while let Some(v) = stack.pop() {
            for &t in &tau[v as usize] {
                if seen.insert(t) {
                    stack.push(t);
                }
            }
        }
        seen.into_iter().collect()
    };
    let start = (a.initial, closure(vec![_b.initial + na as u32]));
    let mut parent: HashMap<(u32, Vec<u32>), Option<((u32, Vec<u32>), String)>> = HashMap::new();
    parent.insert(start.clone(), None);
    let mut queue = VecDeque::from([start]);
    while let Some((sa, sb)) = queue.pop_front() {
        let want = ready(sa as usize);
        if !sb.iter().any(|&v| ready(v as usize) == want) {
            let offered: Vec<String> =
                want.iter().enumerate().filter(|(_, r)| **r).map(|(x, _)| alphabet[x].to_string()).collect();
            let mut steps = vec![format!(
                "left state {} weakly offers {{{}}}, which no right state reached by the same trace offers",
                a.names.get(sa as usize).cloned().unwrap_or_default(),
                offered.join(", ")
            )];
            let mut cur = (sa, sb);
            while let Some(Some((p, label))) = parent.get(&cur) {
                steps.push(label.clone());
                cur = p.clone();
            }
            steps.reverse();
            return steps;
        }
        let mut succ: Vec<((u32, Vec<u32>), String)> = Vec::new();
        for &t in &tau[sa as usize] {
            succ.push(((t, sb.clone()), "tau".into()));
        }
        for &(x, t) in &obs[sa as usize] {
            let next: Vec<u32> = sb
                .iter()
                .flat_map(|&v| obs[v as usize].iter().filter(|(y, _)| *y == x).map(|(_, w)| *w))
                .collect();
            succ.push(((t, closure(next)), alphabet[x as usize].to_string()));
        }
        for (key, label) in succ {
            if !parent.contains_key(&key) {
                parent.insert(key.clone(), Some(((sa, sb.clone()), label)));
                queue.push_back(key);
            }
        }
    }
    vec!["no trace-level witness; the states differ in branching only".into()]
}

/// Explores the system, builds the specification and compares them.
pub fn check_bisimulation(model: &Model, g: &LtsGraph) -> Result<BisimReport> {
    let sys = Lts::from_graph(g)?;
    let spec = Lts::from_term(model, &spec_configuration(model), 16)?;
    Ok(weak_bisim(&sys, &spec))
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct GraphStats {
    pub states: usize,
    pub transitions: usize,
    pub initial: usize,
    pub terminal: usize,
    pub truncated: bool,
    pub decided_values: BTreeMap<u64, usize>,
}

pub fn stats(g: &LtsGraph) -> GraphStats {
    let mut st = GraphStats {
        states: g.num_states(),
        transitions: g.num_edges(),
        initial: g.initials.len(),
        truncated: g.truncated,
        ..GraphStats::default()
    };
    for (id, s) in g.states() {
        if g.is_expanded(id) && g.out_edges(id).is_empty() {
            st.terminal += 1;
        }
        for e in &s.rep.out3 {
            *st.decided_values.entry(e.v).or_default() += 1;
        }
    }
    st
}

/// DOT rendering: nodes are representative digests, edges `rule:action`.
pub fn to_dot(g: &LtsGraph) -> String {
    let mut out = String::from("digraph lts {\n  node [shape=box, fontname=monospace];\n");
    let initial: HashSet<u32> = g.initials.iter().copied().collect();
    for (id, s) in g.states() {
        let extra = if initial.contains(&id) { ", style=bold" } else { "" };
        let ok = if s.ok_sent { "+ok" } else { "" };
        out.push_str(&format!("  s{id} [label=\"{}{ok}\"{extra}];\n", s.rep.digest()));
    }
    for e in g.edges() {
        let label = g.label(e).to_string().replace('"', "\\\"");
        out.push_str(&format!("  s{} -> s{} [label=\"{label}\"];\n", e.from, e.to));
    }
    out.push_str("}\n");
    out
}

/// Everything at once, as shipped by the `verify` command.
#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub instance: crate::model::ProblemInstance,
    pub mutation: Option<String>,
    pub confluence: ConfluenceReport,
    pub correspondence: CorrespondenceReport,
    pub round_trips: RoundTripReport,
    pub properties: Option<PropertyReport>,
    pub bisimulation: Option<BisimReport>,
    pub truncated: bool,
    pub pass: bool,
}

pub fn verify_all(model: &Model, limits: Limits) -> Result<VerifyReport> {
    let confluence = check_confluence(model, limits)?;
    let correspondence = check_correspondence(model, limits)?;
    let g = explore(model, Mode::Representative, limits)?;
    let round_trips = check_round_trips(model, &g)?;
    let (properties, bisimulation) = if g.truncated {
        (None, None)
    } else {
        (Some(check_properties(model, &g)?), Some(check_bisimulation(model, &g)?))
    };
    let truncated = g.truncated || correspondence.truncated || confluence.truncated;
    let pass = confluence.pass
        && correspondence.pass
        && round_trips.pass
        && properties.as_ref().is_some_and(|p| p.pass)
        && bisimulation.as_ref().is_some_and(|b| b.bisimilar);
    Ok(VerifyReport {
        instance: model.inst.clone(),
        mutation: model.mutation.map(|m| m.to_string()),
        confluence,
        correspondence,
        round_trips,
        properties,
        bisimulation,
        truncated,
        pass,
    })
}

/// Re-exported for callers that only need the representative type.
pub use repsem::Representative;
