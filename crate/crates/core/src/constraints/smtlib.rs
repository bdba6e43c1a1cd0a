//! SMT-LIB2 bridge to an external solver process.
//!
//! Each query is sent as `(reset)`, `(set-logic QF_LIA)`, one declaration
//! per variable, one assertion and `(check-sat)`. The solver's first output
//! line is the verdict.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use super::{ConstraintError, Formula, IntTerm, RelOp, VarSort, Verdict};

#[derive(Debug, Clone, PartialEq)]
pub struct SmtConfig {
    pub program: PathBuf,
    pub args: Vec<String>,
    pub timeout: Duration,
}

impl SmtConfig {
    /// Configuration for a solver binary, with the flags that put the
    /// common solvers into interactive SMT-LIB2 mode.
    pub fn for_program(program: impl Into<PathBuf>) -> SmtConfig {
        let program = program.into();
        let stem = program
            .file_stem()
            .map(|s| s.to_string_lossy().to_lowercase())
            .unwrap_or_default();
        let args: &[&str] = if stem.starts_with("z3") {
            &["-in", "-smt2"]
        } else if stem.starts_with("cvc") {
            &["--lang=smt2", "--incremental"]
        } else if stem.starts_with("yices") {
            &["--incremental"]
        } else {
            &[]
        };
        SmtConfig {
            program,
            args: args.iter().map(|s| s.to_string()).collect(),
            timeout: Duration::from_secs(10),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> SmtConfig {
        self.timeout = timeout;
        self
    }
}

struct Session {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Drop for Session {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A solver subprocess, started lazily and restarted after a timeout.
pub struct SmtSolver {
    config: SmtConfig,
    session: Option<Session>,
}

impl std::fmt::Debug for SmtSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SmtSolver")
            .field("config", &self.config)
            .finish()
    }
}

impl SmtSolver {
    pub fn new(config: SmtConfig) -> SmtSolver {
        SmtSolver {
            config,
            session: None,
        }
    }

    pub fn config(&self) -> &SmtConfig {
        &self.config
    }

    fn spawn(program: &Path, args: &[String]) -> Result<Session, ConstraintError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| {
                ConstraintError::Solver(format!("cannot launch {}: {e}", program.display()))
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Session {
            child,
            stdin,
            lines: rx,
        })
    }

    pub fn check_sat(&mut self, f: &Formula) -> Result<Verdict, ConstraintError> {
        let script = to_smtlib(f)?;
        if self.session.is_none() {
            self.session = Some(Self::spawn(&self.config.program, &self.config.args)?);
        }
        let session = self.session.as_mut().expect("session started");
        let io_err = |e: std::io::Error| ConstraintError::Solver(format!("solver pipe: {e}"));
        session.stdin.write_all(script.as_bytes()).map_err(io_err)?;
        session.stdin.flush().map_err(io_err)?;
        loop {
            match session.lines.recv_timeout(self.config.timeout) {
                Ok(Ok(line)) => {
                    let line = line.trim();
                    match line {
                        "" | "success" => continue,
                        "sat" => return Ok(Verdict::Sat),
                        "unsat" => return Ok(Verdict::Unsat),
                        "unknown" => return Ok(Verdict::Unknown),
                        other => {
                            self.session = None;
                            return Err(ConstraintError::Solver(format!(
                                "unexpected solver output `{other}`"
                            )));
                        }
                    }
                }
                Ok(Err(e)) => {
                    self.session = None;
                    return Err(io_err(e));
                }
                Err(RecvTimeoutError::Timeout) => {
                    self.session = None;
                    return Ok(Verdict::Unknown);
                }
                Err(RecvTimeoutError::Disconnected) => {
                    self.session = None;
                    return Err(ConstraintError::Solver("solver exited".into()));
                }
            }
        }
    }
}

/// Serializes a satisfiability query for `f`.
pub fn to_smtlib(f: &Formula) -> Result<String, ConstraintError> {
    let sorts = f.sorts()?;
    let mut out = String::from("(reset)\n(set-logic QF_LIA)\n");
    for (name, sort) in &sorts {
        let sort = match sort {
            VarSort::Bool => "Bool",
            VarSort::Int => "Int",
        };
        let _ = writeln!(out, "(declare-const {} {sort})", symbol(name));
    }
    let _ = writeln!(out, "(assert {})", formula(f));
    out.push_str("(check-sat)\n");
    Ok(out)
}

fn symbol(name: &str) -> String {
    let simple = name
        .chars()
        .all(|c| c.is_ascii_alphanumeric() || "_~!@$%^&*+-=<>.?/".contains(c))
        && !name.starts_with(|c: char| c.is_ascii_digit());
    if simple {
        name.to_string()
    } else {
        format!("|{name}|")
    }
}

fn term(t: &IntTerm) -> String {
    match t {
        IntTerm::Var(v) => symbol(v),
        IntTerm::Const(c) if *c < 0 => format!("(- {})", c.unsigned_abs()),
        IntTerm::Const(c) => c.to_string(),
        IntTerm::Add(a, b) => format!("(+ {} {})", term(a), term(b)),
        IntTerm::Sub(a, b) => format!("(- {} {})", term(a), term(b)),
        IntTerm::Mul(a, b) => format!("(* {} {})", term(a), term(b)),
    }
}

fn formula(f: &Formula) -> String {
    match f {
        Formula::True => "true".into(),
        Formula::False => "false".into(),
        Formula::BoolVar(v) => symbol(v),
        Formula::Atom(l, RelOp::Ne, r) => format!("(not (= {} {}))", term(l), term(r)),
        Formula::Atom(l, op, r) => {
            let op = match op {
                RelOp::Eq => "=",
                other => other.symbol(),
            };
            format!("({op} {} {})", term(l), term(r))
        }
        Formula::Not(a) => format!("(not {})", formula(a)),
        Formula::And(a, b) => format!("(and {} {})", formula(a), formula(b)),
        Formula::Or(a, b) => format!("(or {} {})", formula(a), formula(b)),
        Formula::Xor(a, b) => format!("(xor {} {})", formula(a), formula(b)),
        Formula::Implies(a, b) => format!("(=> {} {})", formula(a), formula(b)),
        Formula::Iff(a, b) => format!("(= {} {})", formula(a), formula(b)),
    }
}
