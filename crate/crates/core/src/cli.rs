//! Command-line front end: `explore`, `verify` and `trace`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 state bound
//! exceeded, 3 a check failed.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, Mutation, ProblemInstance};
use crate::repsem::{rep_successors, SysState};
use crate::verifier::{self, Limits, Mode, DEFAULT_MAX_STATES};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_BOUND: i32 = 2;
pub const EXIT_CHECK: i32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Json,
    Dot,
    Text,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Calculus,
    Representative,
    Both,
}

/// Settings after merging flags, config file and defaults.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RunConfig {
    pub n: u32,
    pub values: Vec<u64>,
    pub budget: Option<u32>,
    pub mode: ModeArg,
    pub max_states: usize,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub mutate: Option<Mutation>,
}

/// The JSON config file; every field optional.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub n: Option<u32>,
    pub values: Option<Vec<u64>>,
    pub budget: Option<u32>,
    pub mode: Option<ModeArg>,
    pub max_states: Option<usize>,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
    pub mutate: Option<Mutation>,
}

#[derive(Debug, Parser)]
#[command(name = "ftcalc", version, about = "Explore and verify the consensus encoding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Explore the state graph and print statistics or a DOT graph.
    Explore(InstanceArgs),
    /// Run every check and print a JSON report.
    Verify(InstanceArgs),
    /// Replay a schedule of representative rules from an initial state.
    Trace {
        #[command(flatten)]
        inst: InstanceArgs,
        /// Rule ids such as `TI(1)`, `SR2'(p=1,q=1)`, `SRW1(i=1)`, `OK`.
        steps: Vec<String>,
    },
}

#[derive(Debug, Args)]
struct InstanceArgs {
    /// JSON config file; flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<u32>,
    /// Proposed values, comma separated.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<u64>>,
    /// Crash budget (default n-1).
    #[arg(long)]
    budget: Option<u32>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    max_states: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Negative-testing hook: run with a deliberately broken rule.
    #[arg(long, hide = true)]
    mutate: Option<String>,
}

impl InstanceArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                serde_json::from_str::<FileConfig>(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => FileConfig::default(),
        };
        let mutate = match &self.mutate {
            Some(m) => Some(m.parse()?),
            None => file.mutate,
        };
        resolve(
            FileConfig {
                n: self.n,
                values: self.values.clone(),
                budget: self.budget,
                mode: self.mode,
                max_states: self.max_states,
                output: self.output.clone(),
                format: self.format,
                mutate,
            },
            file,
        )
    }
}

/// Merges flags over the file over defaults and validates the result.
pub fn resolve(flags: FileConfig, file: FileConfig) -> Result<RunConfig> {
    let values = flags.values.or(file.values).ok_or_else(|| Error::Config("no proposed values given".into()))?;
    let n = flags.n.or(file.n).unwrap_or(values.len() as u32);
    if n as usize != values.len() {
        return Err(Error::Config(format!("n = {n} but {} values given", values.len())));
    }
    let budget = flags.budget.or(file.budget);
    ProblemInstance::new(values.clone(), budget)?;
    Ok(RunConfig {
        n,
        values,
        budget,
        mode: flags.mode.or(file.mode).unwrap_or(ModeArg::Representative),
        max_states: flags.max_states.or(file.max_states).unwrap_or(DEFAULT_MAX_STATES),
        output: flags.output.or(file.output),
        format: flags.format.or(file.format).unwrap_or(Format::Json),
        mutate: flags.mutate.or(file.mutate),
    })
}

impl RunConfig {
    pub fn model(&self) -> Result<Model> {
        Model::with_mutation(ProblemInstance::new(self.values.clone(), self.budget)?, self.mutate)
    }

    fn limits(&self) -> Limits {
        Limits { max_states: self.max_states }
    }
}

fn emit(cfg: &RunConfig, text: &str, out: &mut dyn Write) -> Result<()> {
    match &cfg.output {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Config(format!("{}: {e}", p.display()))),
        None => {
            let _ = out.write_all(text.as_bytes());
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(&serde_json::to_value(v).expect("reports serialise")).expect("json");
    s.push('\n');
    s
}

/// `explore`: graph statistics, or the graph itself as DOT.
pub fn cmd_explore(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let model = cfg.model()?;
    let modes: &[Mode] = match cfg.mode {
        ModeArg::Calculus => &[Mode::Calculus],
        ModeArg::Representative => &[Mode::Representative],
        ModeArg::Both => &[Mode::Representative, Mode::Calculus],
    };
    let mut truncated = false;
    let mut reports = serde_json::Map::new();
    let mut text = String::new();
    for &mode in modes {
        let g = verifier::explore(&model, mode, cfg.limits())?;
        truncated |= g.truncated;
        let st = verifier::stats(&g);
        match cfg.format {
            Format::Dot => text.push_str(&verifier::to_dot(&g)),
            Format::Text => {
                let decided: Vec<String> = st.decided_values.keys().map(u64::to_string).collect();
                text.push_str(&format!(
                    "{mode}: {} states, {} transitions, {} terminal, decided values {{{}}}{}\n",
                    st.states,
                    st.transitions,
                    st.terminal,
                    decided.join(", "),
                    if st.truncated { " (truncated)" } else { "" }
                ));
            }
            Format::Json => {
                reports.insert(mode.to_string(), serde_json::to_value(&st).expect("stats serialise"));
            }
        }
    }
    if cfg.format == Format::Json {
        text = to_json(&reports);
    }
    emit(cfg, &text, out)?;
    Ok(if truncated { EXIT_BOUND } else { EXIT_OK })
}

/// `verify`: all checks; JSON report.
pub fn cmd_verify(cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let model = cfg.model()?;
    let report = verifier::verify_all(&model, cfg.limits())?;
    let text = match cfg.format {
        Format::Text => format!(
            "confluence: {}\ncorrespondence: {}\nround trips: {}\nproperties: {}\nbisimulation: {}\noverall: {}\n",
            pass(report.confluence.pass),
            pass(report.correspondence.pass),
            pass(report.round_trips.pass),
            report.properties.as_ref().map_or("skipped", |p| pass(p.pass)),
            report.bisimulation.as_ref().map_or("skipped", |b| pass(b.bisimilar)),
            pass(report.pass),
        ),
        _ => to_json(&report),
    };
    emit(cfg, &text, out)?;
    Ok(if report.pass {
        EXIT_OK
    } else if report.truncated {
        EXIT_BOUND
    } else {
        EXIT_CHECK
    })
}

fn pass(b: bool) -> &'static str {
    if b {
        "pass"
    } else {
        "FAIL"
    }
}

/// Splits schedule arguments at commas and whitespace outside parentheses.
pub fn split_schedule(args: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    for a in args {
        let mut depth = 0i32;
        let mut cur = String::new();
        for ch in a.chars() {
            match ch {
                '(' => depth += 1,
                ')' => depth -= 1,
                _ => {}
            }
            if depth == 0 && (ch == ',' || ch.is_whitespace()) {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
            } else {
                cur.push(ch);
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

#[derive(Debug, Serialize)]
pub struct TraceStep {
    pub rule: String,
    pub state: SysState,
}

/// Replays `schedule` with the representative rules. A leading `TI(k)`
/// picks the trusted immortal (optional when only one agent exists).
pub fn run_trace(model: &Model, schedule: &[String]) -> Result<Vec<TraceStep>> {
    let initials = crate::lts::initial_states(model)?;
    let ti_ids: Vec<String> = initials.iter().map(|s| format!("TI({})", s.rep.ti)).collect();
    let mut steps = schedule.iter().peekable();
    let mut cur = match steps.peek() {
        Some(first) if first.starts_with("TI(") => {
            let k = ti_ids
                .iter()
                .position(|t| t == *first)
                .ok_or_else(|| Error::StepNotEnabled { step: first.to_string(), enabled: ti_ids.clone() })?;
            steps.next();
            initials[k].clone()
        }
        Some(first) if initials.len() > 1 => {
            return Err(Error::StepNotEnabled { step: first.to_string(), enabled: ti_ids });
        }
        _ if initials.len() > 1 => {
            return Ok(initials.into_iter().map(|s| TraceStep { rule: format!("TI({})", s.rep.ti), state: s }).collect());
        }
        _ => initials[0].clone(),
    };
    let mut trace = vec![TraceStep { rule: format!("TI({})", cur.rep.ti), state: cur.clone() }];
    for step in steps {
        let succ = rep_successors(model, &cur)?;
        match succ.iter().find(|(r, _)| r.to_string() == *step) {
            Some((r, t)) => {
                cur = t.clone();
                trace.push(TraceStep { rule: r.to_string(), state: cur.clone() });
            }
            None => {
                return Err(Error::StepNotEnabled {
                    step: step.clone(),
                    enabled: succ.iter().map(|(r, _)| r.to_string()).collect(),
                })
            }
        }
    }
    Ok(trace)
}

/// `trace`: pretty-prints every intermediate representative.
pub fn cmd_trace(cfg: &RunConfig, schedule: &[String], out: &mut dyn Write) -> Result<i32> {
    let model = cfg.model()?;
    let trace = run_trace(&model, &split_schedule(schedule))?;
    let text = match cfg.format {
        Format::Json => to_json(&trace),
        _ => {
            let mut s = String::new();
            for (k, t) in trace.iter().enumerate() {
                s.push_str(&format!("[{k}] {}\n{}\n", t.rule, t.state));
            }
            s
        }
    };
    emit(cfg, &text, out)?;
    Ok(EXIT_OK)
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    EXIT_OK
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    EXIT_USAGE
                }
            };
        }
    };
    let result = match &cli.command {
        Command::Explore(a) => a.resolve().and_then(|cfg| cmd_explore(&cfg, out)),
        Command::Verify(a) => a.resolve().and_then(|cfg| cmd_verify(&cfg, out)),
        Command::Trace { inst, steps } => inst.resolve().and_then(|cfg| cmd_trace(&cfg, steps, out)),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            match e {
                Error::GraphTruncated(_) => EXIT_BOUND,
                Error::Config(_) | Error::StepNotEnabled { .. } => EXIT_USAGE,
                _ => EXIT_CHECK,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(values: &[u64]) -> FileConfig {
        FileConfig { values: Some(values.to_vec()), ..FileConfig::default() }
    }

    #[test]
    fn flags_override_file() {
        let file = FileConfig { values: Some(vec![1, 2, 3]), max_states: Some(7), budget: Some(1), ..FileConfig::default() };
        let cfg = resolve(flags(&[5, 7]), file).unwrap();
        assert_eq!(cfg.values, vec![5, 7]);
        assert_eq!(cfg.max_states, 7);
        assert_eq!(cfg.budget, Some(1));
        assert_eq!(cfg.format, Format::Json);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(resolve(FileConfig::default(), FileConfig::default()).is_err());
        let bad_n = FileConfig { n: Some(3), ..flags(&[5, 7]) };
        assert!(resolve(bad_n, FileConfig::default()).is_err());
        let bad_budget = FileConfig { budget: Some(2), ..flags(&[5, 7]) };
        assert!(matches!(resolve(bad_budget, FileConfig::default()), Err(Error::Config(_))));
    }

    #[test]
    fn schedule_splitting_respects_parentheses() {
        let s = split_schedule(&["TI(1),SR1(p=1,q=2,r=1)".into(), "OK".into()]);
        assert_eq!(s, vec!["TI(1)", "SR1(p=1,q=2,r=1)", "OK"]);
    }

    #[test]
    fn n1_full_trace_reaches_ok() {
        let model = Model::new(ProblemInstance::new(vec![4], None).unwrap()).unwrap();
        let steps: Vec<String> = ["SR2'(p=1,q=1)", "SRW1(i=1)", "OK"].map(String::from).to_vec();
        let t = run_trace(&model, &steps).unwrap();
        assert_eq!(t.len(), 4);
        let last = &t[3].state;
        assert!(last.ok_sent);
        assert_eq!(last.rep.wrap, crate::repsem::Wrap { j: 0, w: None, b: 1 });
        assert_eq!(t[2].state.rep.out3.len(), 0);
        assert_eq!(t[1].state.rep.out3.iter().next().map(|e| e.v), Some(4));
    }

    #[test]
    fn trace_rejects_disabled_steps() {
        let model = Model::new(ProblemInstance::new(vec![4], None).unwrap()).unwrap();
        match run_trace(&model, &["SR7(p=1)".to_string()]) {
            Err(Error::StepNotEnabled { enabled, .. }) => assert_eq!(enabled, vec!["SR2'(p=1,q=1)"]),
            other => panic!("unexpected {other:?}"),
        }
        let m2 = Model::new(ProblemInstance::new(vec![5, 7], None).unwrap()).unwrap();
        assert_eq!(run_trace(&m2, &[]).unwrap().len(), 2);
    }
}
