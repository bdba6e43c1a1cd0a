//! The constraint system.
//!
//! Constraints are quantifier-free formulas over Boolean and integer
//! variables. Stores are conjunctions of such formulas; entailment is
//! decided by refutation (`c` entails `d` iff `c and not d` is unsat).
//!
//! The internal procedure ([`check_sat`]) is complete for atoms whose
//! terms are a single variable or an integer constant. Atoms over linear
//! combinations are outside that fragment and can only be decided by an
//! external SMT-LIB2 solver ([`SmtSolver`]); [`Oracle`] routes between the
//! two.

mod decide;
mod oracle;
mod smtlib;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

pub use decide::check_sat;
pub use oracle::Oracle;
pub use smtlib::{to_smtlib, SmtConfig, SmtSolver};

/// Verdict of a satisfiability query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Sat,
    Unsat,
    /// Only produced by an external solver that could not decide.
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConstraintError {
    #[error("formula outside the supported fragment: `{subterm}` ({reason})")]
    Fragment {
        subterm: String,
        reason: &'static str,
    },
    #[error("variable `{0}` is used both as a Boolean and as an integer")]
    TypeConflict(String),
    #[error("solver could not decide `{0}`")]
    Undecided(String),
    #[error("solver error: {0}")]
    Solver(String),
}

/// Relational operator of an integer atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RelOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl RelOp {
    /// The operator of the negated atom.
    pub fn negate(self) -> RelOp {
        match self {
            RelOp::Lt => RelOp::Ge,
            RelOp::Le => RelOp::Gt,
            RelOp::Gt => RelOp::Le,
            RelOp::Ge => RelOp::Lt,
            RelOp::Eq => RelOp::Ne,
            RelOp::Ne => RelOp::Eq,
        }
    }

    /// The operator with its operands swapped (`a < b` iff `b > a`).
    pub fn flip(self) -> RelOp {
        match self {
            RelOp::Lt => RelOp::Gt,
            RelOp::Le => RelOp::Ge,
            RelOp::Gt => RelOp::Lt,
            RelOp::Ge => RelOp::Le,
            op => op,
        }
    }

    pub fn eval(self, lhs: i128, rhs: i128) -> bool {
        match self {
            RelOp::Lt => lhs < rhs,
            RelOp::Le => lhs <= rhs,
            RelOp::Gt => lhs > rhs,
            RelOp::Ge => lhs >= rhs,
            RelOp::Eq => lhs == rhs,
            RelOp::Ne => lhs != rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            RelOp::Lt => "<",
            RelOp::Le => "<=",
            RelOp::Gt => ">",
            RelOp::Ge => ">=",
            RelOp::Eq => "==",
            RelOp::Ne => "!=",
        }
    }
}

/// Integer term. Only `Var` and `Const` are decided internally; the
/// arithmetic variants exist for the external bridge.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IntTerm {
    Var(String),
    Const(i64),
    Add(Box<IntTerm>, Box<IntTerm>),
    Sub(Box<IntTerm>, Box<IntTerm>),
    Mul(Box<IntTerm>, Box<IntTerm>),
}

impl IntTerm {
    pub fn var(name: impl Into<String>) -> IntTerm {
        IntTerm::Var(name.into())
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self, IntTerm::Var(_) | IntTerm::Const(_))
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            IntTerm::Var(v) => out.push(v),
            IntTerm::Const(_) => {}
            IntTerm::Add(a, b) | IntTerm::Sub(a, b) | IntTerm::Mul(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            IntTerm::Add(..) | IntTerm::Sub(..) => 1,
            IntTerm::Mul(..) => 2,
            IntTerm::Var(_) | IntTerm::Const(_) => 3,
        }
    }
}

impl fmt::Display for IntTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn operand(f: &mut fmt::Formatter<'_>, t: &IntTerm, min: u8) -> fmt::Result {
            if t.precedence() < min {
                write!(f, "({t})")
            } else {
                write!(f, "{t}")
            }
        }
        match self {
            IntTerm::Var(v) => write!(f, "{v}"),
            IntTerm::Const(c) => write!(f, "{c}"),
            IntTerm::Add(a, b) => {
                operand(f, a, 1)?;
                write!(f, " + ")?;
                operand(f, b, 2)
            }
            IntTerm::Sub(a, b) => {
                operand(f, a, 1)?;
                write!(f, " - ")?;
                operand(f, b, 2)
            }
            IntTerm::Mul(a, b) => {
                operand(f, a, 2)?;
                write!(f, " * ")?;
                operand(f, b, 3)
            }
        }
    }
}

/// A quantifier-free constraint.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    True,
    False,
    BoolVar(String),
    Atom(IntTerm, RelOp, IntTerm),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Xor(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Iff(Box<Formula>, Box<Formula>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarSort {
    Bool,
    Int,
}

impl Formula {
    pub fn bool_var(name: impl Into<String>) -> Formula {
        Formula::BoolVar(name.into())
    }

    /// `var op constant`, the most common atom shape.
    pub fn cmp(var: impl Into<String>, op: RelOp, value: i64) -> Formula {
        Formula::Atom(IntTerm::Var(var.into()), op, IntTerm::Const(value))
    }

    /// `lhs op rhs` over two integer variables.
    pub fn cmp_vars(lhs: impl Into<String>, op: RelOp, rhs: impl Into<String>) -> Formula {
        Formula::Atom(IntTerm::Var(lhs.into()), op, IntTerm::Var(rhs.into()))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn xor(a: Formula, b: Formula) -> Formula {
        Formula::Xor(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn iff(a: Formula, b: Formula) -> Formula {
        Formula::Iff(Box::new(a), Box::new(b))
    }

    /// Conjunction of a sequence, left-nested; `True` when empty.
    pub fn conjunction(parts: impl IntoIterator<Item = Formula>) -> Formula {
        parts.into_iter().fold(Formula::True, conjoin)
    }

    /// Measure used by the ask rule's store-size penalty.
    pub fn size(&self) -> u64 {
        match self {
            Formula::Not(a) => 1 + a.size(),
            Formula::And(a, b)
            | Formula::Or(a, b)
            | Formula::Xor(a, b)
            | Formula::Implies(a, b)
            | Formula::Iff(a, b) => 1 + a.size() + b.size(),
            Formula::True | Formula::False | Formula::BoolVar(_) | Formula::Atom(..) => 1,
        }
    }

    /// Variables with the sort they are used at. Fails when one name is
    /// used at both sorts.
    pub fn sorts(&self) -> Result<BTreeMap<String, VarSort>, ConstraintError> {
        let mut out = BTreeMap::new();
        self.collect_sorts(&mut out)?;
        Ok(out)
    }

    fn collect_sorts(&self, out: &mut BTreeMap<String, VarSort>) -> Result<(), ConstraintError> {
        fn record(
            out: &mut BTreeMap<String, VarSort>,
            name: &str,
            sort: VarSort,
        ) -> Result<(), ConstraintError> {
            match out.get(name) {
                Some(s) if *s != sort => Err(ConstraintError::TypeConflict(name.to_string())),
                Some(_) => Ok(()),
                None => {
                    out.insert(name.to_string(), sort);
                    Ok(())
                }
            }
        }
        match self {
            Formula::True | Formula::False => Ok(()),
            Formula::BoolVar(v) => record(out, v, VarSort::Bool),
            Formula::Atom(l, _, r) => {
                let mut vars = Vec::new();
                l.collect_vars(&mut vars);
                r.collect_vars(&mut vars);
                vars.into_iter()
                    .try_for_each(|v| record(out, v, VarSort::Int))
            }
            Formula::Not(a) => a.collect_sorts(out),
            Formula::And(a, b)
            | Formula::Or(a, b)
            | Formula::Xor(a, b)
            | Formula::Implies(a, b)
            | Formula::Iff(a, b) => {
                a.collect_sorts(out)?;
                b.collect_sorts(out)
            }
        }
    }

    /// Integer constants appearing in atoms.
    pub fn constants(&self) -> Vec<i64> {
        fn term(t: &IntTerm, out: &mut Vec<i64>) {
            match t {
                IntTerm::Const(c) => out.push(*c),
                IntTerm::Var(_) => {}
                IntTerm::Add(a, b) | IntTerm::Sub(a, b) | IntTerm::Mul(a, b) => {
                    term(a, out);
                    term(b, out);
                }
            }
        }
        fn walk(f: &Formula, out: &mut Vec<i64>) {
            match f {
                Formula::Atom(l, _, r) => {
                    term(l, out);
                    term(r, out);
                }
                Formula::Not(a) => walk(a, out),
                Formula::And(a, b)
                | Formula::Or(a, b)
                | Formula::Xor(a, b)
                | Formula::Implies(a, b)
                | Formula::Iff(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                _ => {}
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }

    /// Applies the constant-folding identities for `and`, `or` and `not`
    /// bottom-up. Other connectives are left as written.
    pub fn simplify(&self) -> Formula {
        match self {
            Formula::Not(a) => simplify_not(a.simplify()),
            Formula::And(a, b) => simplify_and(a.simplify(), b.simplify()),
            Formula::Or(a, b) => simplify_or(a.simplify(), b.simplify()),
            Formula::Xor(a, b) => Formula::xor(a.simplify(), b.simplify()),
            Formula::Implies(a, b) => Formula::implies(a.simplify(), b.simplify()),
            Formula::Iff(a, b) => Formula::iff(a.simplify(), b.simplify()),
            other => other.clone(),
        }
    }

    fn binding(&self) -> u8 {
        match self {
            Formula::Iff(..) => 0,
            Formula::Implies(..) => 1,
            Formula::Or(..) | Formula::Xor(..) => 2,
            Formula::And(..) => 3,
            Formula::Not(_) => 4,
            _ => 5,
        }
    }
}

fn simplify_not(a: Formula) -> Formula {
    match a {
        Formula::True => Formula::False,
        Formula::False => Formula::True,
        a => Formula::not(a),
    }
}

fn simplify_and(a: Formula, b: Formula) -> Formula {
    match (a, b) {
        (Formula::False, _) | (_, Formula::False) => Formula::False,
        (Formula::True, x) | (x, Formula::True) => x,
        (a, b) => Formula::and(a, b),
    }
}

fn simplify_or(a: Formula, b: Formula) -> Formula {
    match (a, b) {
        (Formula::True, _) | (_, Formula::True) => Formula::True,
        (Formula::False, x) | (x, Formula::False) => x,
        (a, b) => Formula::or(a, b),
    }
}

/// Store merge: `c and d` under the Boolean identities.
pub fn conjoin(c: Formula, d: Formula) -> Formula {
    simplify_and(c.simplify(), d.simplify())
}

/// Satisfiability via the internal procedure, `Unsat` as `true`.
pub fn check_unsat(f: &Formula) -> Result<bool, ConstraintError> {
    match check_sat(f)? {
        Verdict::Unsat => Ok(true),
        Verdict::Sat => Ok(false),
        Verdict::Unknown => Err(ConstraintError::Undecided(f.to_string())),
    }
}

/// `c` entails `d` iff `c and not d` is unsatisfiable.
pub fn entails(c: &Formula, d: &Formula) -> Result<bool, ConstraintError> {
    check_unsat(&refutation(c, d))
}

pub(crate) fn refutation(c: &Formula, d: &Formula) -> Formula {
    simplify_and(c.simplify(), simplify_not(d.simplify()))
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Operands are parenthesized unless they bind strictly tighter, so
        // the rendering re-parses to the same tree for left-nested chains.
        fn side(
            f: &mut fmt::Formatter<'_>,
            sub: &Formula,
            parent: u8,
            left_ok: bool,
        ) -> fmt::Result {
            let b = sub.binding();
            if b > parent || (left_ok && b == parent && same_left_assoc(sub, parent)) {
                write!(f, "{sub}")
            } else {
                write!(f, "({sub})")
            }
        }
        fn same_left_assoc(sub: &Formula, parent: u8) -> bool {
            parent >= 2 || matches!(sub, Formula::Iff(..))
        }
        let me = self.binding();
        match self {
            Formula::True => write!(f, "true"),
            Formula::False => write!(f, "false"),
            Formula::BoolVar(v) => write!(f, "{v}"),
            Formula::Atom(l, op, r) => write!(f, "{l} {} {r}", op.symbol()),
            Formula::Not(a) => {
                write!(f, "not ")?;
                side(f, a, me, false)
            }
            Formula::And(a, b) => {
                side(f, a, me, true)?;
                write!(f, " and ")?;
                side(f, b, me, false)
            }
            Formula::Or(a, b) | Formula::Xor(a, b) => {
                // or/xor share a level; mixing them needs parens on the left.
                let same = std::mem::discriminant(self) == std::mem::discriminant(&**a);
                if a.binding() > me || same {
                    write!(f, "{a}")?;
                } else {
                    write!(f, "({a})")?;
                }
                let kw = if matches!(self, Formula::Or(..)) {
                    "or"
                } else {
                    "xor"
                };
                write!(f, " {kw} ")?;
                side(f, b, me, false)
            }
            Formula::Implies(a, b) => {
                // right-associative
                side(f, a, me, false)?;
                write!(f, " implies ")?;
                if b.binding() >= me {
                    write!(f, "{b}")
                } else {
                    write!(f, "({b})")
                }
            }
            Formula::Iff(a, b) => {
                side(f, a, me, true)?;
                write!(f, " iff ")?;
                side(f, b, me, false)
            }
        }
    }
}
