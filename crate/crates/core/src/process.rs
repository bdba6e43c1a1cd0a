//! The process language.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::constraints::Formula;
use crate::space::AgentId;
use crate::stochastic::{sample_prob, SampleCounter};

/// Tolerance on the probabilities of an exclusive choice summing to one.
pub const PROB_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProcessError {
    #[error("choice has {cmds} commands but {probs} probabilities")]
    LengthMismatch { cmds: usize, probs: usize },
    #[error("choice over an empty list")]
    EmptyChoice,
    #[error("probability {0} is outside [0, 1]")]
    ProbabilityRange(f64),
    #[error("exclusive choice probabilities sum to {0}, not 1")]
    ProbabilitySum(f64),
    #[error("V({0}) occurs outside any mu binding {0}")]
    UnboundVariable(u64),
}

/// The weighted command list of a probabilistic choice.
#[derive(Debug, Clone, PartialEq)]
pub struct Choice {
    cmds: Vec<Command>,
    probs: Vec<f64>,
}

impl Choice {
    fn checked(cmds: Vec<Command>, probs: Vec<f64>) -> Result<Choice, ProcessError> {
        if cmds.len() != probs.len() {
            return Err(ProcessError::LengthMismatch {
                cmds: cmds.len(),
                probs: probs.len(),
            });
        }
        if cmds.is_empty() {
            return Err(ProcessError::EmptyChoice);
        }
        if let Some(&p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(ProcessError::ProbabilityRange(p));
        }
        Ok(Choice { cmds, probs })
    }

    /// Weights for `exc`: each in `[0, 1]`, summing to one.
    pub fn exclusive(cmds: Vec<Command>, probs: Vec<f64>) -> Result<Choice, ProcessError> {
        let c = Choice::checked(cmds, probs)?;
        let sum: f64 = c.probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(ProcessError::ProbabilitySum(sum));
        }
        Ok(c)
    }

    /// Weights for `ind`: each in `[0, 1]`.
    pub fn independent(cmds: Vec<Command>, probs: Vec<f64>) -> Result<Choice, ProcessError> {
        Choice::checked(cmds, probs)
    }

    pub fn cmds(&self) -> &[Command] {
        &self.cmds
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Command, f64)> {
        self.cmds.iter().zip(self.probs.iter().copied())
    }

    fn map_cmds(&self, f: impl Fn(&Command) -> Command) -> Choice {
        Choice {
            cmds: self.cmds.iter().map(f).collect(),
            probs: self.probs.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Nil,
    Tell(Formula),
    /// Registers child index `n` in the current space. Only created by
    /// the space rule; it has no surface syntax.
    TellChild(u64),
    Ask(Formula, Box<Command>),
    Par(Box<Command>, Box<Command>),
    In(Box<Command>, u64),
    Out(Box<Command>, u64),
    Var(u64),
    Mu(u64, Box<Command>),
    Exc(Choice),
    Ind(Choice),
    Watch(Box<Command>, Formula),
}

impl Command {
    pub fn tell(f: Formula) -> Command {
        Command::Tell(f)
    }

    pub fn ask(guard: Formula, body: Command) -> Command {
        Command::Ask(guard, Box::new(body))
    }

    pub fn par(a: Command, b: Command) -> Command {
        Command::Par(Box::new(a), Box::new(b))
    }

    /// Right-nested parallel composition; `Nil` when empty.
    pub fn par_all(cmds: impl IntoIterator<Item = Command>) -> Command {
        let mut cmds: Vec<Command> = cmds.into_iter().collect();
        let Some(mut acc) = cmds.pop() else {
            return Command::Nil;
        };
        while let Some(c) = cmds.pop() {
            acc = Command::par(c, acc);
        }
        acc
    }

    pub fn inside(self, n: u64) -> Command {
        Command::In(Box::new(self), n)
    }

    pub fn outside(self, n: u64) -> Command {
        Command::Out(Box::new(self), n)
    }

    pub fn mu(n: u64, body: Command) -> Command {
        Command::Mu(n, Box::new(body))
    }

    pub fn watch(action: Command, target: Formula) -> Command {
        Command::Watch(Box::new(action), target)
    }

    /// Short rule-facing name of the head constructor.
    pub fn kind(&self) -> &'static str {
        match self {
            Command::Nil => "nil",
            Command::Tell(_) => "tell",
            Command::TellChild(_) => "tell-set",
            Command::Ask(..) => "ask",
            Command::Par(..) => "parallel",
            Command::In(..) => "space",
            Command::Out(..) => "extrusion",
            Command::Var(_) => "var",
            Command::Mu(..) => "recursion",
            Command::Exc(_) => "exclusive",
            Command::Ind(_) => "independent",
            Command::Watch(..) => "watch",
        }
    }

    fn children(&self) -> Vec<&Command> {
        match self {
            Command::Ask(_, b) | Command::In(b, _) | Command::Out(b, _) | Command::Mu(_, b) => {
                vec![b]
            }
            Command::Watch(b, _) => vec![b],
            Command::Par(a, b) => vec![a, b],
            Command::Exc(c) | Command::Ind(c) => c.cmds.iter().collect(),
            Command::Nil | Command::Tell(_) | Command::TellChild(_) | Command::Var(_) => vec![],
        }
    }

    /// Variables not bound by an enclosing `mu`.
    pub fn free_vars(&self) -> BTreeSet<u64> {
        let mut out = BTreeSet::new();
        fn walk(c: &Command, bound: &mut Vec<u64>, out: &mut BTreeSet<u64>) {
            match c {
                Command::Var(n) if !bound.contains(n) => {
                    out.insert(*n);
                }
                Command::Mu(n, b) => {
                    bound.push(*n);
                    walk(b, bound, out);
                    bound.pop();
                }
                other => other
                    .children()
                    .into_iter()
                    .for_each(|k| walk(k, bound, out)),
            }
        }
        walk(self, &mut Vec::new(), &mut out);
        out
    }

    /// Every `V(n)` must sit under a `mu n`.
    pub fn check_closed(&self) -> Result<(), ProcessError> {
        match self.free_vars().into_iter().next() {
            Some(n) => Err(ProcessError::UnboundVariable(n)),
            None => Ok(()),
        }
    }

    /// Binders with an occurrence not guarded by an `ask`. Such recursion
    /// unfolds without ever blocking; it is allowed but worth a warning.
    pub fn unguarded_recursion(&self) -> Vec<u64> {
        fn occurs_unguarded(c: &Command, n: u64) -> bool {
            match c {
                Command::Var(m) => *m == n,
                Command::Ask(..) => false,
                Command::Mu(m, _) if *m == n => false,
                other => other.children().into_iter().any(|k| occurs_unguarded(k, n)),
            }
        }
        let mut out = Vec::new();
        fn walk(c: &Command, out: &mut Vec<u64>) {
            if let Command::Mu(n, b) = c {
                if occurs_unguarded(b, *n) && !out.contains(n) {
                    out.push(*n);
                }
            }
            c.children().into_iter().for_each(|k| walk(k, out));
        }
        walk(self, &mut out);
        out
    }

    fn binding(&self) -> u8 {
        match self {
            Command::Par(..) => 0,
            Command::Ask(..) | Command::Mu(..) => 1,
            Command::In(..) | Command::Out(..) => 2,
            _ => 3,
        }
    }
}

/// Substitutes `sub` for `V(n)` in `body`, leaving every `mu` subterm
/// untouched.
pub fn replace(n: u64, body: &Command, sub: &Command) -> Command {
    let r = |c: &Command| replace(n, c, sub);
    match body {
        Command::Var(m) if *m == n => sub.clone(),
        Command::Nil
        | Command::Tell(_)
        | Command::TellChild(_)
        | Command::Var(_)
        | Command::Mu(..) => body.clone(),
        Command::Ask(g, b) => Command::ask(g.clone(), r(b)),
        Command::Par(a, b) => Command::par(r(a), r(b)),
        Command::In(b, k) => r(b).inside(*k),
        Command::Out(b, k) => r(b).outside(*k),
        Command::Exc(c) => Command::Exc(c.map_cmds(r)),
        Command::Ind(c) => Command::Ind(c.map_cmds(r)),
        Command::Watch(a, f) => Command::watch(r(a), f.clone()),
    }
}

/// Candidate moves of a watch at `loc`: out to the parent (unless at
/// root), then into each child in ascending order.
pub fn command_list(loc: &AgentId, children: &BTreeSet<u64>, c: &Command) -> Vec<Command> {
    let mut out = Vec::with_capacity(children.len() + 1);
    if let Some((n, _)) = loc.split() {
        out.push(c.clone().outside(n));
    }
    out.extend(children.iter().map(|&k| c.clone().inside(k)));
    out
}

/// `n` uniform draws normalized by their sum. The list is built by
/// prepending, so the last draw comes first.
pub fn prob_list(n: usize, counter: SampleCounter) -> (Vec<f64>, SampleCounter) {
    assert!(n >= 1, "prob_list needs at least one entry");
    let mut c = counter;
    let mut draws = Vec::with_capacity(n);
    let mut total = 0.0;
    for _ in 0..n {
        let (q, next) = sample_prob(c);
        draws.push(q);
        total += q;
        c = next;
    }
    draws.reverse();
    if total > 0.0 {
        draws.iter_mut().for_each(|q| *q /= total);
    } else {
        // every draw was exactly zero; fall back to equal weights
        draws.iter_mut().for_each(|q| *q = 1.0 / n as f64);
    }
    (draws, c)
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn operand(f: &mut fmt::Formatter<'_>, c: &Command, min: u8) -> fmt::Result {
            if c.binding() < min {
                write!(f, "({c})")
            } else {
                write!(f, "{c}")
            }
        }
        fn choice(f: &mut fmt::Formatter<'_>, kw: &str, c: &Choice) -> fmt::Result {
            write!(f, "{kw}{{")?;
            for (i, (cmd, p)) in c.iter().enumerate() {
                if i > 0 {
                    write!(f, ",")?;
                }
                write!(f, " {cmd} : {p}")?;
            }
            write!(f, " }}")
        }
        match self {
            Command::Nil => write!(f, "0"),
            Command::Tell(g) => write!(f, "tell({g})"),
            Command::TellChild(n) => write!(f, "tell(#{n})"),
            Command::Ask(g, b) => {
                write!(f, "ask {g} -> ")?;
                operand(f, b, 1)
            }
            Command::Par(a, b) => {
                operand(f, a, 2)?;
                write!(f, " || ")?;
                operand(f, b, 0)
            }
            Command::In(b, n) => {
                operand(f, b, 2)?;
                write!(f, " in {n}")
            }
            Command::Out(b, n) => {
                operand(f, b, 2)?;
                write!(f, " out {n}")
            }
            Command::Var(n) => write!(f, "V({n})"),
            Command::Mu(n, b) => write!(f, "mu {n} . {b}"),
            Command::Exc(c) => choice(f, "exc", c),
            Command::Ind(c) => choice(f, "ind", c),
            Command::Watch(a, g) => write!(f, "watch({a}, {g})"),
        }
    }
}
