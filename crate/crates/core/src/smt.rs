//! SMT-LIB2 client for an external solver running as a child process.
//!
//! The solver binary defaults to `z3 -in -smt2`; override with the
//! `SRM_SMT_SOLVER` (program path) and `SRM_SMT_ARGS` (whitespace-separated
//! flags) environment variables.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use crate::logic::sexpr::{self, split_complete, Sexp};
use crate::logic::{to_smtlib, Formula};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);
/// Replies to bookkeeping commands are expected promptly.
const ACK_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, thiserror::Error)]
pub enum SmtError {
    #[error("failed to start solver '{program}': {source}")]
    Spawn {
        program: String,
        source: std::io::Error,
    },
    #[error("solver i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("symbol '{0}' already declared")]
    DuplicateDeclaration(String),
    #[error("symbol '{0}' is not declared")]
    Undeclared(String),
    #[error("solver rejected command: {message}")]
    Rejected { message: String, transcript: String },
    #[error("solver session died")]
    Crashed { transcript: String },
    #[error("no model available: last check-sat was {0:?}")]
    NoModel(Option<Verdict>),
    #[error("unexpected solver output: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sort {
    Bool,
    Real,
}

impl Sort {
    fn name(self) -> &'static str {
        match self {
            Sort::Bool => "Bool",
            Sort::Real => "Real",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Sat,
    Unsat,
    Unknown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub program: String,
    pub args: Vec<String>,
    pub timeout: Duration,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            program: "z3".into(),
            args: vec!["-in".into(), "-smt2".into()],
            timeout: DEFAULT_TIMEOUT,
        }
    }
}

impl SolverConfig {
    /// First line of `<program> --version`, or why it could not be read.
    pub fn identity(&self) -> String {
        match Command::new(&self.program).arg("--version").output() {
            Ok(out) => {
                let text = String::from_utf8_lossy(&out.stdout);
                format!(
                    "{} ({})",
                    text.lines().next().unwrap_or("").trim(),
                    self.program
                )
            }
            Err(e) => format!("unavailable: {} ({e})", self.program),
        }
    }

    pub fn from_env() -> SolverConfig {
        let mut cfg = SolverConfig::default();
        if let Ok(p) = std::env::var("SRM_SMT_SOLVER") {
            if !p.trim().is_empty() {
                cfg.program = p;
            }
        }
        if let Ok(a) = std::env::var("SRM_SMT_ARGS") {
            cfg.args = a.split_whitespace().map(str::to_string).collect();
        }
        cfg
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    /// Whether the configured solver can be started.
    pub fn available(&self) -> bool {
        SolverSession::start(self).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Bool(bool),
    Real(f64),
}

/// Solver model. Symbols the solver leaves out default to `false` / `0`.
#[derive(Debug, Clone, Default)]
pub struct Model {
    values: BTreeMap<String, Value>,
    exact: BTreeMap<String, String>,
}

impl Model {
    pub fn bool(&self, name: &str) -> Option<bool> {
        match self.values.get(name) {
            Some(Value::Bool(b)) => Some(*b),
            _ => None,
        }
    }

    pub fn real(&self, name: &str) -> Option<f64> {
        match self.values.get(name) {
            Some(Value::Real(r)) => Some(*r),
            _ => None,
        }
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.values.get(name)
    }

    /// The value exactly as the solver printed it.
    pub fn exact(&self, name: &str) -> Option<&str> {
        self.exact.get(name).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn from_values(values: BTreeMap<String, Value>) -> Model {
        Model {
            values,
            exact: BTreeMap::new(),
        }
    }
}

impl crate::logic::Valuation for Model {
    fn real(&self, name: &str) -> Option<f64> {
        Model::real(self, name)
    }
    fn boolean(&self, name: &str) -> Option<bool> {
        Model::bool(self, name)
    }
}

/// Parses an SMT-LIB2 real value: decimals, numerals, `(- v)`, `(/ a b)`.
pub fn parse_real_value(s: &Sexp) -> Option<BigRational> {
    match s {
        Sexp::Atom { text, .. } => parse_decimal_exact(text),
        Sexp::List { items, .. } => {
            let head = items.first()?.as_atom()?;
            match (head, items.len()) {
                ("-", 2) => parse_real_value(&items[1]).map(|v| -v),
                ("/", 3) => {
                    let d = parse_real_value(&items[2])?;
                    if d.is_zero() {
                        return None;
                    }
                    Some(parse_real_value(&items[1])? / d)
                }
                ("to_real", 2) => parse_real_value(&items[1]),
                _ => None,
            }
        }
    }
}

fn parse_decimal_exact(text: &str) -> Option<BigRational> {
    let (int_part, frac_part) = match text.split_once('.') {
        Some((i, f)) => (i, f),
        None => (text, ""),
    };
    if int_part.is_empty() || !int_part.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    if !frac_part.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits: BigInt = format!("{int_part}{frac_part}").parse().ok()?;
    let denom = num_traits::pow(BigInt::from(10), frac_part.len());
    Some(BigRational::new(digits, denom))
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

pub struct SolverSession {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    replies: Receiver<String>,
    declared: BTreeMap<String, Sort>,
    defined: BTreeSet<String>,
    transcript: Vec<String>,
    pending_acks: usize,
    last_verdict: Option<Verdict>,
    timeout: Duration,
    dead: bool,
    assertions: usize,
}

impl SolverSession {
    /// Starts the solver and selects `QF_LRA`.
    pub fn start(config: &SolverConfig) -> Result<SolverSession, SmtError> {
        Self::start_with_logic(config, "QF_LRA")
    }

    pub fn start_with_logic(config: &SolverConfig, logic: &str) -> Result<SolverSession, SmtError> {
        let mut child = Command::new(&config.program)
            .args(&config.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|source| SmtError::Spawn {
                program: config.program.clone(),
                source,
            })?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let mut stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut buf = String::new();
            let mut chunk = [0u8; 8192];
            loop {
                match stdout.read(&mut chunk) {
                    Ok(0) | Err(_) => break,
                    Ok(n) => {
                        buf.push_str(&String::from_utf8_lossy(&chunk[..n]));
                        let (items, used) = split_complete(&buf);
                        buf.drain(..used);
                        for it in items {
                            if tx.send(it).is_err() {
                                return;
                            }
                        }
                    }
                }
            }
            let rest = buf.trim();
            if !rest.is_empty() {
                let _ = tx.send(rest.to_string());
            }
        });
        let mut session = SolverSession {
            child,
            stdin,
            replies: rx,
            declared: BTreeMap::new(),
            defined: BTreeSet::new(),
            transcript: Vec::new(),
            pending_acks: 0,
            last_verdict: None,
            timeout: config.timeout,
            dead: false,
            assertions: 0,
        };
        session.command("(set-option :print-success true)")?;
        session.command("(set-option :produce-models true)")?;
        session.command(&format!("(set-logic {logic})"))?;
        session.flush_acks()?;
        Ok(session)
    }

    fn send(&mut self, cmd: &str) -> Result<(), SmtError> {
        if self.dead {
            return Err(SmtError::Crashed {
                transcript: self.transcript_text(),
            });
        }
        self.transcript.push(cmd.to_string());
        let res = writeln!(self.stdin, "{cmd}");
        self.io(res)
    }

    fn io(&mut self, res: std::io::Result<()>) -> Result<(), SmtError> {
        match res {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {
                self.dead = true;
                Err(SmtError::Crashed {
                    transcript: self.transcript_text(),
                })
            }
            Err(e) => Err(SmtError::Io(e)),
        }
    }

    /// Sends a command whose reply is `success`; replies are checked lazily.
    fn command(&mut self, cmd: &str) -> Result<(), SmtError> {
        self.send(cmd)?;
        self.pending_acks += 1;
        Ok(())
    }

    fn recv(&mut self, timeout: Duration) -> Result<Option<String>, SmtError> {
        let res = self.stdin.flush();
        self.io(res)?;
        match self.replies.recv_timeout(timeout) {
            Ok(r) => Ok(Some(r)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => {
                self.dead = true;
                Err(SmtError::Crashed {
                    transcript: self.transcript_text(),
                })
            }
        }
    }

    fn flush_acks(&mut self) -> Result<(), SmtError> {
        while self.pending_acks > 0 {
            let reply = match self.recv(ACK_TIMEOUT)? {
                Some(r) => r,
                None => {
                    self.kill();
                    return Err(SmtError::Crashed {
                        transcript: self.transcript_text(),
                    });
                }
            };
            self.pending_acks -= 1;
            if reply != "success" {
                self.transcript.push(format!("; reply: {reply}"));
                // drain the remaining acknowledgements so the stream stays aligned
                return Err(SmtError::Rejected {
                    message: reply,
                    transcript: self.transcript_text(),
                });
            }
        }
        Ok(())
    }

    pub fn is_declared(&self, name: &str) -> bool {
        self.declared.contains_key(name) || self.defined.contains(name)
    }

    pub fn declare(&mut self, name: &str, sort: Sort) -> Result<(), SmtError> {
        if self.is_declared(name) {
            return Err(SmtError::DuplicateDeclaration(name.to_string()));
        }
        self.declared.insert(name.to_string(), sort);
        self.command(&format!("(declare-const {name} {})", sort.name()))
    }

    /// Introduces a nullary boolean macro `name := body`.
    pub fn define_bool(&mut self, name: &str, body: &Formula) -> Result<(), SmtError> {
        if self.is_declared(name) {
            return Err(SmtError::DuplicateDeclaration(name.to_string()));
        }
        self.check_symbols(body)?;
        self.defined.insert(name.to_string());
        self.command(&format!("(define-fun {name} () Bool {})", to_smtlib(body)))
    }

    fn check_symbols(&self, f: &Formula) -> Result<(), SmtError> {
        for v in f.free_vars() {
            if !self.is_declared(&v) {
                return Err(SmtError::Undeclared(v));
            }
        }
        Ok(())
    }

    pub fn assert_formula(&mut self, f: &Formula) -> Result<(), SmtError> {
        self.check_symbols(f)?;
        self.assertions += 1;
        self.command(&format!("(assert {})", to_smtlib(f)))
    }

    pub fn assertion_count(&self) -> usize {
        self.assertions
    }

    pub fn check_sat(&mut self) -> Result<Verdict, SmtError> {
        self.flush_acks()?;
        self.send("(check-sat)")?;
        let verdict = match self.recv(self.timeout)? {
            None => {
                self.transcript.push("; reply: <timeout>".into());
                self.kill();
                Verdict::Unknown
            }
            Some(r) => {
                self.transcript.push(format!("; reply: {r}"));
                match r.as_str() {
                    "sat" => Verdict::Sat,
                    "unsat" => Verdict::Unsat,
                    "unknown" | "timeout" => Verdict::Unknown,
                    _ => {
                        return Err(SmtError::Rejected {
                            message: r,
                            transcript: self.transcript_text(),
                        })
                    }
                }
            }
        };
        self.last_verdict = Some(verdict);
        Ok(verdict)
    }

    pub fn last_verdict(&self) -> Option<Verdict> {
        self.last_verdict
    }

    pub fn get_model(&mut self) -> Result<Model, SmtError> {
        if self.last_verdict != Some(Verdict::Sat) {
            return Err(SmtError::NoModel(self.last_verdict));
        }
        self.send("(get-model)")?;
        let reply = self
            .recv(self.timeout)?
            .ok_or_else(|| SmtError::Protocol("timed out waiting for model".into()))?;
        for line in reply.lines() {
            self.transcript.push(format!("; {line}"));
        }
        let mut model = parse_model(&reply, &|n| self.declared.contains_key(n))?;
        for (name, sort) in &self.declared {
            if !model.values.contains_key(name) {
                let v = match sort {
                    Sort::Bool => Value::Bool(false),
                    Sort::Real => Value::Real(0.0),
                };
                model.values.insert(name.clone(), v);
            }
        }
        model.values.retain(|k, _| self.declared.contains_key(k));
        Ok(model)
    }

    pub fn transcript(&self) -> &[String] {
        &self.transcript
    }

    pub fn transcript_text(&self) -> String {
        let mut s = self.transcript.join("\n");
        s.push('\n');
        s
    }

    pub fn dump_transcript(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.transcript_text())
    }

    fn kill(&mut self) {
        self.dead = true;
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for SolverSession {
    fn drop(&mut self) {
        if !self.dead {
            let _ = writeln!(self.stdin, "(exit)");
            let _ = self.stdin.flush();
            let deadline = Instant::now() + Duration::from_millis(200);
            while Instant::now() < deadline {
                if let Ok(Some(_)) = self.child.try_wait() {
                    return;
                }
                thread::sleep(Duration::from_millis(5));
            }
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Values of the nullary constants in `keep`; other entries (macros the
/// session defined) are skipped unread.
fn parse_model(reply: &str, keep: &dyn Fn(&str) -> bool) -> Result<Model, SmtError> {
    let s = sexpr::parse_one(reply).map_err(|e| SmtError::Protocol(format!("model: {e}")))?;
    let mut items = s
        .as_list()
        .ok_or_else(|| SmtError::Protocol(format!("model is not a list: {reply}")))?;
    if items.first().and_then(Sexp::as_atom) == Some("model") {
        items = &items[1..];
    }
    if items.first().and_then(Sexp::as_atom) == Some("error") {
        return Err(SmtError::Protocol(reply.to_string()));
    }
    let mut model = Model::default();
    for def in items {
        let parts = match def.as_list() {
            Some(p) if p.len() == 5 && p[0].as_atom() == Some("define-fun") => p,
            _ => continue,
        };
        let name = parts[1].as_atom().unwrap_or_default().to_string();
        if !keep(&name) || parts[2].as_list().is_none_or(|a| !a.is_empty()) {
            continue;
        }
        let value = match parts[3].as_atom() {
            Some("Bool") => match parts[4].as_atom() {
                Some("true") => Value::Bool(true),
                Some("false") => Value::Bool(false),
                _ => return Err(SmtError::Protocol(format!("bad boolean value for {name}"))),
            },
            Some("Real") | Some("Int") => {
                let r = parse_real_value(&parts[4]).ok_or_else(|| {
                    SmtError::Protocol(format!("bad real value for {name}: {}", parts[4]))
                })?;
                Value::Real(rational_to_f64(&r))
            }
            _ => continue,
        };
        model.exact.insert(name.clone(), parts[4].to_string());
        model.values.insert(name, value);
    }
    Ok(model)
}

/// Replays a transcript (as produced by [`SolverSession::transcript`]) in a
/// fresh solver process and returns the verdict of its last `check-sat`.
pub fn replay_transcript(
    config: &SolverConfig,
    transcript: &[String],
) -> Result<Option<Verdict>, SmtError> {
    let mut session = SolverSession::start(config)?;
    let mut verdict = None;
    for line in transcript {
        let t = line.trim();
        if t.is_empty() || t.starts_with(';') {
            continue;
        }
        if t.starts_with("(set-option") || t.starts_with("(set-logic") {
            continue;
        }
        if t == "(check-sat)" {
            verdict = Some(session.check_sat()?);
        } else if t == "(get-model)" {
            if verdict == Some(Verdict::Sat) {
                session.get_model()?;
            }
        } else {
            session.command(t)?;
        }
    }
    Ok(verdict)
}

#[derive(Debug, Clone, PartialEq)]
pub enum SatResult {
    /// A point satisfying the conjunction over its real variables.
    Sat(BTreeMap<String, f64>),
    Unsat,
    Unknown,
}

impl SatResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SatResult::Sat(_))
    }
}

/// Satisfiability of a conjunction of state formulas: the box fast path
/// when it applies, the external solver otherwise.
pub fn conjunction_sat(fs: &[Formula], config: &SolverConfig) -> Result<SatResult, SmtError> {
    let mut vars = BTreeSet::new();
    for f in fs {
        vars.extend(f.real_vars());
    }
    let fill = |mut w: BTreeMap<String, f64>| {
        for v in &vars {
            w.entry(v.clone()).or_insert(0.0);
        }
        w
    };
    match crate::logic::box_conjunction_witness(fs) {
        Ok(Some(w)) => {
            let w = fill(w);
            // the midpoint of a tiny interval can round onto a bound
            if fs.iter().all(|f| f.evaluate(&w).unwrap_or(false)) {
                return Ok(SatResult::Sat(w));
            }
        }
        Ok(None) => return Ok(SatResult::Unsat),
        Err(_) => {}
    }
    let mut session = SolverSession::start(config)?;
    for f in fs {
        for v in f.real_vars() {
            if !session.is_declared(&v) {
                session.declare(&v, Sort::Real)?;
            }
        }
        for v in f.bool_vars() {
            if !session.is_declared(&v) {
                session.declare(&v, Sort::Bool)?;
            }
        }
        session.assert_formula(f)?;
    }
    match session.check_sat()? {
        Verdict::Unsat => Ok(SatResult::Unsat),
        Verdict::Unknown => Ok(SatResult::Unknown),
        Verdict::Sat => {
            let model = session.get_model()?;
            let w = vars
                .iter()
                .filter_map(|v| model.real(v).map(|x| (v.clone(), x)))
                .collect();
            Ok(SatResult::Sat(fill(w)))
        }
    }
}
