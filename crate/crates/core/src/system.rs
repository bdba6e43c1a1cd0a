//! System descriptions: the text format, its renderer, and the initial
//! configuration a description denotes.
//!
//! ```text
//! system {
//!   seed 3
//!   factor 1/2
//!   maxtime 100
//!   timemap tell root -> Norm(1.0, 0.2)
//!   agent 1.root { store X >= 11 children 0 }
//!   process @ root : tell(X == 1) || ask X > 0 -> tell(done) in 1
//! }
//! ```

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::constraints::{Formula, IntTerm, RelOp};
use crate::engine::{Configuration, MapKind, SimulationState, TimeMaps};
use crate::process::{Choice, Command, ProcessError};
use crate::space::{AgentId, AgentObject, Objects};
use crate::stochastic::{StochasticExpression, Time};

/// Initial contents of one space.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentDecl {
    pub id: AgentId,
    pub store: Formula,
    pub children: BTreeSet<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessDecl {
    pub location: AgentId,
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub seed: u64,
    pub factor: Time,
    pub max_time: Option<Time>,
    pub maps: TimeMaps,
    pub agents: Vec<AgentDecl>,
    pub processes: Vec<ProcessDecl>,
}

impl Default for SystemSpec {
    fn default() -> SystemSpec {
        SystemSpec {
            seed: 0,
            factor: Time::from_integer(1),
            max_time: None,
            maps: TimeMaps::default(),
            agents: Vec::new(),
            processes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("{line}:{col}: {msg}")]
    Syntax {
        line: usize,
        col: usize,
        msg: String,
    },
    #[error("{line}:{col}: {source}")]
    Process {
        line: usize,
        col: usize,
        #[source]
        source: ProcessError,
    },
    #[error("{line}:{col}: invalid distribution {dist}")]
    Distribution {
        line: usize,
        col: usize,
        dist: String,
    },
    #[error("no maxtime given")]
    MissingMaxTime,
}

impl SystemSpec {
    /// The initial configuration: declared agents (plus root), and the
    /// declared processes scheduled at time zero under uids 1, 2, ...
    pub fn configuration(&self) -> Result<Configuration, SpecError> {
        let max_time = self.max_time.clone().ok_or(SpecError::MissingMaxTime)?;
        let mut objects = Objects::new();
        for a in &self.agents {
            objects.add_agent(AgentObject {
                id: a.id.clone(),
                store: a.store.clone(),
                children: a.children.clone(),
            });
        }
        let sim = SimulationState::new(self.seed, self.maps.clone(), self.factor.clone(), max_time);
        let mut config = Configuration::new(objects, sim);
        for p in &self.processes {
            config.schedule(p.location.clone(), p.command.clone(), Time::zero());
        }
        Ok(config)
    }

    /// Binders whose recursion is not guarded by an ask, for warnings.
    pub fn unguarded_recursion(&self) -> Vec<(AgentId, u64)> {
        self.processes
            .iter()
            .flat_map(|p| {
                p.command
                    .unguarded_recursion()
                    .into_iter()
                    .map(|n| (p.location.clone(), n))
            })
            .collect()
    }
}

// ---------------------------------------------------------------- lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Nat(String),
    Sym(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
    start: usize,
    end: usize,
}

const SYMBOLS: [&str; 22] = [
    "=/==", "===", "==", "!=", "<=", ">=", "->", "||", "<", ">", "{", "}", "(", ")", ",", ":", ".",
    "@", "/", "-", "+", "*",
];

fn lex(text: &str) -> Result<Vec<Token>, SpecError> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < bytes.len() {
        let c = bytes[i];
        if c == b'\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if text[i..].starts_with("//") {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        let tok = if c.is_ascii_digit() {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            Tok::Nat(text[start..i].to_string())
        } else if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            Tok::Ident(text[start..i].to_string())
        } else if let Some(s) = SYMBOLS.iter().find(|s| text[i..].starts_with(**s)) {
            i += s.len();
            Tok::Sym(s)
        } else {
            let ch = text[i..].chars().next().unwrap_or('?');
            return Err(SpecError::Syntax {
                line,
                col,
                msg: format!("unexpected character `{ch}`"),
            });
        };
        out.push(Token {
            tok,
            line,
            col,
            start,
            end: i,
        });
        col += i - start;
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
        start: i,
        end: i,
    });
    Ok(out)
}

// --------------------------------------------------------------- parser

const FORMULA_KEYWORDS: [&str; 8] = ["true", "false", "not", "and", "or", "xor", "implies", "iff"];

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, SpecError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn here(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, msg: impl Into<String>) -> PResult<T> {
        let t = self.here();
        Err(SpecError::Syntax {
            line: t.line,
            col: t.col,
            msg: msg.into(),
        })
    }

    fn describe(&self) -> String {
        match self.peek() {
            Tok::Ident(s) | Tok::Nat(s) => format!("`{s}`"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".into(),
        }
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == s)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, s: &str) -> bool {
        if self.is_kw(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.error(format!("expected `{s}`, found {}", self.describe()))
        }
    }

    fn expect_kw(&mut self, s: &str) -> PResult<()> {
        if self.eat_kw(s) {
            Ok(())
        } else {
            self.error(format!("expected `{s}`, found {}", self.describe()))
        }
    }

    fn nat(&mut self) -> PResult<u64> {
        match self.peek().clone() {
            Tok::Nat(s) => {
                let v = s
                    .parse()
                    .or_else(|_| self.error(format!("number `{s}` is too large")))?;
                self.bump();
                Ok(v)
            }
            _ => self.error(format!(
                "expected a natural number, found {}",
                self.describe()
            )),
        }
    }

    /// `.` directly followed by digits, as in the fraction of `0.25`.
    fn adjacent_fraction(&self) -> bool {
        let (a, b, c) = (
            &self.toks[self.pos.saturating_sub(1)],
            &self.toks[self.pos],
            self.toks.get(self.pos + 1),
        );
        matches!(b.tok, Tok::Sym("."))
            && a.end == b.start
            && matches!(c, Some(t) if matches!(t.tok, Tok::Nat(_)) && t.start == b.end)
    }

    /// `NAT ["." NAT]` as text, for exact conversion.
    fn decimal_text(&mut self) -> PResult<String> {
        let Tok::Nat(int) = self.peek().clone() else {
            return self.error(format!("expected a number, found {}", self.describe()));
        };
        self.bump();
        if self.adjacent_fraction() {
            self.bump();
            let Tok::Nat(frac) = self.bump().tok else {
                unreachable!()
            };
            Ok(format!("{int}.{frac}"))
        } else {
            Ok(int)
        }
    }

    fn real(&mut self) -> PResult<f64> {
        let neg = self.eat_sym("-");
        let text = self.decimal_text()?;
        let v: f64 = text
            .parse()
            .or_else(|_| self.error(format!("bad number `{text}`")))?;
        Ok(if neg { -v } else { v })
    }

    fn rational(&mut self) -> PResult<Time> {
        let mut text = self.decimal_text()?;
        if self.eat_sym("/") {
            let Tok::Nat(den) = self.peek().clone() else {
                return self.error(format!("expected a denominator, found {}", self.describe()));
            };
            self.bump();
            text = format!("{text}/{den}");
        }
        text.parse().or_else(|e| self.error(format!("{e}")))
    }

    fn aid(&mut self) -> PResult<AgentId> {
        let mut outer_first = Vec::new();
        loop {
            match self.peek() {
                Tok::Ident(s) if s == "root" => {
                    self.bump();
                    outer_first.reverse();
                    return Ok(AgentId::from_path(&outer_first));
                }
                Tok::Nat(_) => {
                    outer_first.push(self.nat()?);
                    self.expect_sym(".")?;
                }
                _ => return self.error(format!("expected an agent id, found {}", self.describe())),
            }
        }
    }

    // formulas, loosest first

    fn formula(&mut self) -> PResult<Formula> {
        let mut f = self.implies()?;
        while self.eat_kw("iff") {
            f = Formula::iff(f, self.implies()?);
        }
        Ok(f)
    }

    fn implies(&mut self) -> PResult<Formula> {
        let f = self.disjunction()?;
        if self.eat_kw("implies") {
            return Ok(Formula::implies(f, self.implies()?));
        }
        Ok(f)
    }

    fn disjunction(&mut self) -> PResult<Formula> {
        let mut f = self.conjunction()?;
        loop {
            if self.eat_kw("or") {
                f = Formula::or(f, self.conjunction()?);
            } else if self.eat_kw("xor") {
                f = Formula::xor(f, self.conjunction()?);
            } else {
                return Ok(f);
            }
        }
    }

    fn conjunction(&mut self) -> PResult<Formula> {
        let mut f = self.negation()?;
        while self.eat_kw("and") {
            f = Formula::and(f, self.negation()?);
        }
        Ok(f)
    }

    fn negation(&mut self) -> PResult<Formula> {
        if self.eat_kw("not") {
            return Ok(Formula::not(self.negation()?));
        }
        self.formula_atom()
    }

    fn relop(&self) -> Option<RelOp> {
        match self.peek() {
            Tok::Sym("<") => Some(RelOp::Lt),
            Tok::Sym("<=") => Some(RelOp::Le),
            Tok::Sym(">") => Some(RelOp::Gt),
            Tok::Sym(">=") => Some(RelOp::Ge),
            Tok::Sym("==") | Tok::Sym("===") => Some(RelOp::Eq),
            Tok::Sym("!=") | Tok::Sym("=/==") => Some(RelOp::Ne),
            _ => None,
        }
    }

    fn term(&mut self) -> PResult<IntTerm> {
        let mut t = self.product()?;
        loop {
            if self.eat_sym("+") {
                t = IntTerm::Add(Box::new(t), Box::new(self.product()?));
            } else if self.eat_sym("-") {
                t = IntTerm::Sub(Box::new(t), Box::new(self.product()?));
            } else {
                return Ok(t);
            }
        }
    }

    fn product(&mut self) -> PResult<IntTerm> {
        let mut t = self.factor()?;
        while self.eat_sym("*") {
            t = IntTerm::Mul(Box::new(t), Box::new(self.factor()?));
        }
        Ok(t)
    }

    fn factor(&mut self) -> PResult<IntTerm> {
        match self.peek().clone() {
            Tok::Ident(v) if !FORMULA_KEYWORDS.contains(&v.as_str()) => {
                self.bump();
                Ok(IntTerm::Var(v))
            }
            Tok::Sym("(") => {
                self.bump();
                let t = self.term()?;
                self.expect_sym(")")?;
                Ok(t)
            }
            Tok::Sym("-") | Tok::Nat(_) => {
                let neg = self.eat_sym("-");
                let Tok::Nat(digits) = self.peek().clone() else {
                    return self.error(format!("expected an integer, found {}", self.describe()));
                };
                let text = if neg { format!("-{digits}") } else { digits };
                let v = text
                    .parse()
                    .or_else(|_| self.error(format!("integer `{text}` out of range")))?;
                self.bump();
                Ok(IntTerm::Const(v))
            }
            _ => self.error(format!("expected a term, found {}", self.describe())),
        }
    }

    fn at_term_continuation(&self) -> bool {
        self.relop().is_some() || self.is_sym("+") || self.is_sym("-") || self.is_sym("*")
    }

    fn formula_atom(&mut self) -> PResult<Formula> {
        if self.eat_kw("true") {
            return Ok(Formula::True);
        }
        if self.eat_kw("false") {
            return Ok(Formula::False);
        }
        if self.is_sym("(") {
            // either a parenthesized formula or the start of `(t) op t`
            let save = self.pos;
            self.bump();
            if let Ok(f) = self.formula() {
                if self.eat_sym(")") && !self.at_term_continuation() {
                    return Ok(f);
                }
            }
            self.pos = save;
        }
        let lhs = self.term()?;
        match self.relop() {
            Some(op) => {
                self.bump();
                let rhs = self.term()?;
                Ok(Formula::Atom(lhs, op, rhs))
            }
            None => match lhs {
                IntTerm::Var(v) => Ok(Formula::BoolVar(v)),
                _ => self.error(format!("expected a comparison, found {}", self.describe())),
            },
        }
    }

    // commands, loosest first

    fn command(&mut self) -> PResult<Command> {
        let c = self.prefix()?;
        if self.eat_sym("||") {
            return Ok(Command::par(c, self.command()?));
        }
        Ok(c)
    }

    fn prefix(&mut self) -> PResult<Command> {
        if self.eat_kw("ask") {
            let guard = self.formula()?;
            self.expect_sym("->")?;
            return Ok(Command::ask(guard, self.prefix()?));
        }
        if self.eat_kw("mu") {
            let n = self.nat()?;
            self.expect_sym(".")?;
            return Ok(Command::mu(n, self.command()?));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<Command> {
        let mut c = self.command_atom()?;
        loop {
            if self.eat_kw("in") {
                c = c.inside(self.nat()?);
            } else if self.eat_kw("out") {
                c = c.outside(self.nat()?);
            } else {
                return Ok(c);
            }
        }
    }

    fn choice(&mut self) -> PResult<(Vec<Command>, Vec<f64>)> {
        self.expect_sym("{")?;
        let (mut cmds, mut probs) = (Vec::new(), Vec::new());
        loop {
            cmds.push(self.command()?);
            self.expect_sym(":")?;
            probs.push(self.real()?);
            self.eat_sym(",");
            if self.eat_sym("}") {
                return Ok((cmds, probs));
            }
        }
    }

    fn command_atom(&mut self) -> PResult<Command> {
        let (line, col) = (self.here().line, self.here().col);
        let at = |source| SpecError::Process { line, col, source };
        match self.peek().clone() {
            Tok::Nat(n) if n == "0" => {
                self.bump();
                Ok(Command::Nil)
            }
            Tok::Sym("(") => {
                self.bump();
                let c = self.command()?;
                self.expect_sym(")")?;
                Ok(c)
            }
            Tok::Ident(kw) => match kw.as_str() {
                "tell" => {
                    self.bump();
                    self.expect_sym("(")?;
                    let f = self.formula()?;
                    self.expect_sym(")")?;
                    Ok(Command::tell(f))
                }
                "V" => {
                    self.bump();
                    self.expect_sym("(")?;
                    let n = self.nat()?;
                    self.expect_sym(")")?;
                    Ok(Command::Var(n))
                }
                "exc" => {
                    self.bump();
                    let (cmds, probs) = self.choice()?;
                    Choice::exclusive(cmds, probs).map(Command::Exc).map_err(at)
                }
                "ind" => {
                    self.bump();
                    let (cmds, probs) = self.choice()?;
                    Choice::independent(cmds, probs)
                        .map(Command::Ind)
                        .map_err(at)
                }
                "watch" => {
                    self.bump();
                    self.expect_sym("(")?;
                    let action = self.command()?;
                    self.expect_sym(",")?;
                    let target = self.formula()?;
                    self.expect_sym(")")?;
                    Ok(Command::watch(action, target))
                }
                _ => self.error(format!("expected a command, found {}", self.describe())),
            },
            _ => self.error(format!("expected a command, found {}", self.describe())),
        }
    }

    fn distribution(&mut self) -> PResult<StochasticExpression> {
        use StochasticExpression as S;
        let (line, col) = (self.here().line, self.here().col);
        let Tok::Ident(name) = self.peek().clone() else {
            return self.error(format!(
                "expected a distribution, found {}",
                self.describe()
            ));
        };
        self.bump();
        self.expect_sym("(")?;
        let e = if name == "Const" {
            S::Constant(self.rational()?)
        } else {
            let a = self.real()?;
            let mut second = || -> PResult<f64> {
                self.expect_sym(",")?;
                self.real()
            };
            match name.as_str() {
                "Norm" => S::Norm {
                    mean: a,
                    stdev: second()?,
                },
                "Exp" => S::Exp { rate: a },
                "Unif" => S::Unif {
                    lo: a,
                    hi: second()?,
                },
                "Gam" => S::Gam {
                    shape: a,
                    scale: second()?,
                },
                "Weib" => S::Weib {
                    scale: a,
                    shape: second()?,
                },
                "Chi" => S::Chi { df: a },
                "Log" => S::Log {
                    mean: a,
                    stdev: second()?,
                },
                _ => {
                    return Err(SpecError::Syntax {
                        line,
                        col,
                        msg: format!("unknown distribution `{name}`"),
                    })
                }
            }
        };
        self.expect_sym(")")?;
        e.validate().map_err(|_| SpecError::Distribution {
            line,
            col,
            dist: e.to_string(),
        })?;
        Ok(e)
    }

    fn map_kind(&mut self) -> PResult<MapKind> {
        let kind = match self.peek() {
            Tok::Ident(s) => MapKind::ALL.into_iter().find(|k| k.keyword() == s),
            _ => None,
        };
        match kind {
            Some(k) => {
                self.bump();
                Ok(k)
            }
            None => self.error(format!(
                "expected tell, ask, space or extrusion, found {}",
                self.describe()
            )),
        }
    }

    fn spec(&mut self) -> PResult<SystemSpec> {
        let mut spec = SystemSpec::default();
        self.expect_kw("system")?;
        self.expect_sym("{")?;
        loop {
            let Tok::Ident(item) = self.peek().clone() else {
                self.expect_sym("}")?;
                break;
            };
            self.bump();
            match item.as_str() {
                "seed" => spec.seed = self.nat()?,
                "factor" => spec.factor = self.rational()?,
                "maxtime" => spec.max_time = Some(self.rational()?),
                "timemap" => {
                    let kind = self.map_kind()?;
                    let loc = self.aid()?;
                    self.expect_sym("->")?;
                    let e = self.distribution()?;
                    spec.maps.get_mut(kind).insert(loc, e);
                }
                "agent" => {
                    let id = self.aid()?;
                    self.expect_sym("{")?;
                    self.expect_kw("store")?;
                    let store = self.formula()?;
                    let mut children = BTreeSet::new();
                    if self.eat_kw("children") {
                        children.insert(self.nat()?);
                        while matches!(self.peek(), Tok::Nat(_)) {
                            children.insert(self.nat()?);
                        }
                    }
                    self.expect_sym("}")?;
                    spec.agents.push(AgentDecl {
                        id,
                        store,
                        children,
                    });
                }
                "process" => {
                    self.expect_sym("@")?;
                    let location = self.aid()?;
                    self.expect_sym(":")?;
                    let (line, col) = (self.here().line, self.here().col);
                    let command = self.command()?;
                    command
                        .check_closed()
                        .map_err(|source| SpecError::Process { line, col, source })?;
                    spec.processes.push(ProcessDecl { location, command });
                }
                other => {
                    self.pos -= 1;
                    return self.error(format!("unknown item `{other}`"));
                }
            }
        }
        if *self.peek() != Tok::Eof {
            return self.error(format!(
                "unexpected {} after the system block",
                self.describe()
            ));
        }
        Ok(spec)
    }
}

fn parse_with<T>(text: &str, f: impl FnOnce(&mut Parser) -> PResult<T>) -> PResult<T> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let v = f(&mut p)?;
    if *p.peek() != Tok::Eof {
        return p.error(format!("unexpected {}", p.describe()));
    }
    Ok(v)
}

pub fn parse_spec(text: &str) -> Result<SystemSpec, SpecError> {
    parse_with(text, Parser::spec)
}

/// Parses a formula on its own, e.g. for a command-line predicate.
pub fn parse_formula(text: &str) -> Result<Formula, SpecError> {
    parse_with(text, Parser::formula)
}

pub fn parse_command(text: &str) -> Result<Command, SpecError> {
    parse_with(text, |p| {
        let (line, col) = (p.here().line, p.here().col);
        let c = p.command()?;
        c.check_closed()
            .map_err(|source| SpecError::Process { line, col, source })?;
        Ok(c)
    })
}

pub fn parse_agent_id(text: &str) -> Result<AgentId, SpecError> {
    parse_with(text, Parser::aid)
}

/// Writes a spec back in the text format; `parse_spec(render(s)) == s`.
pub fn render(spec: &SystemSpec) -> String {
    let mut out = String::from("system {\n");
    let _ = writeln!(out, "  seed {}", spec.seed);
    let _ = writeln!(out, "  factor {}", spec.factor);
    if let Some(t) = &spec.max_time {
        let _ = writeln!(out, "  maxtime {t}");
    }
    for kind in MapKind::ALL {
        for (loc, e) in spec.maps.get(kind) {
            let _ = writeln!(out, "  timemap {} {loc} -> {e}", kind.keyword());
        }
    }
    for a in &spec.agents {
        let _ = write!(out, "  agent {} {{ store {}", a.id, a.store);
        if !a.children.is_empty() {
            out.push_str(" children");
            for c in &a.children {
                let _ = write!(out, " {c}");
            }
        }
        out.push_str(" }\n");
    }
    for p in &spec.processes {
        let _ = writeln!(out, "  process @ {} : {}", p.location, p.command);
    }
    out.push_str("}\n");
    out
}

impl fmt::Display for SystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render(self))
    }
}
