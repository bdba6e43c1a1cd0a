//! Internal satisfiability procedure.
//!
//! The formula is put in negation normal form and its propositional
//! skeleton is explored branch by branch (every `or` splits the search).
//! Each branch accumulates a conjunction of literals, which is checked for
//! theory consistency:
//!
//! * Boolean literals must not clash;
//! * `var op const` literals become per-variable integer intervals plus a
//!   finite set of excluded points, satisfiable iff the interval contains
//!   more integers than excluded points;
//! * `var op var` literals become difference constraints, checked for a
//!   negative cycle after all-pairs closure. Disequalities in such a branch
//!   are split into `<` or `>`.

use std::collections::{BTreeMap, BTreeSet};

use super::{ConstraintError, Formula, IntTerm, RelOp, Verdict};

/// Decides `f` with the internal procedure. Never returns `Unknown`.
pub fn check_sat(f: &Formula) -> Result<Verdict, ConstraintError> {
    f.sorts()?;
    let nnf = to_nnf(f, true)?;
    let mut state = Branch::default();
    Ok(if search(vec![&nnf], &mut state) {
        Verdict::Sat
    } else {
        Verdict::Unsat
    })
}

#[derive(Debug, Clone, PartialEq)]
enum Nnf {
    True,
    False,
    Bool(String, bool),
    /// `var op const`
    Bound(String, RelOp, i128),
    /// `lhs op rhs` over two distinct variables
    Relate(String, RelOp, String),
    And(Vec<Nnf>),
    Or(Vec<Nnf>),
}

fn to_nnf(f: &Formula, positive: bool) -> Result<Nnf, ConstraintError> {
    Ok(match f {
        Formula::True => {
            if positive {
                Nnf::True
            } else {
                Nnf::False
            }
        }
        Formula::False => {
            if positive {
                Nnf::False
            } else {
                Nnf::True
            }
        }
        Formula::BoolVar(v) => Nnf::Bool(v.clone(), positive),
        Formula::Atom(l, op, r) => {
            let op = if positive { *op } else { op.negate() };
            atom(l, op, r)?
        }
        Formula::Not(a) => to_nnf(a, !positive)?,
        Formula::And(a, b) => {
            if positive {
                Nnf::And(vec![to_nnf(a, true)?, to_nnf(b, true)?])
            } else {
                Nnf::Or(vec![to_nnf(a, false)?, to_nnf(b, false)?])
            }
        }
        Formula::Or(a, b) => {
            if positive {
                Nnf::Or(vec![to_nnf(a, true)?, to_nnf(b, true)?])
            } else {
                Nnf::And(vec![to_nnf(a, false)?, to_nnf(b, false)?])
            }
        }
        Formula::Implies(a, b) => {
            if positive {
                Nnf::Or(vec![to_nnf(a, false)?, to_nnf(b, true)?])
            } else {
                Nnf::And(vec![to_nnf(a, true)?, to_nnf(b, false)?])
            }
        }
        // a xor b == (a and not b) or (not a and b); its negation is iff.
        Formula::Xor(a, b) => equivalence(a, b, !positive)?,
        Formula::Iff(a, b) => equivalence(a, b, positive)?,
    })
}

fn equivalence(a: &Formula, b: &Formula, same: bool) -> Result<Nnf, ConstraintError> {
    let (pa, na) = (to_nnf(a, true)?, to_nnf(a, false)?);
    let (pb, nb) = (to_nnf(b, true)?, to_nnf(b, false)?);
    Ok(if same {
        Nnf::Or(vec![Nnf::And(vec![pa, pb]), Nnf::And(vec![na, nb])])
    } else {
        Nnf::Or(vec![Nnf::And(vec![pa, nb]), Nnf::And(vec![na, pb])])
    })
}

fn atom(l: &IntTerm, op: RelOp, r: &IntTerm) -> Result<Nnf, ConstraintError> {
    for t in [l, r] {
        if !t.is_atomic() {
            return Err(ConstraintError::Fragment {
                subterm: t.to_string(),
                reason: "integer terms must be a variable or a constant",
            });
        }
    }
    Ok(match (l, r) {
        (IntTerm::Const(a), IntTerm::Const(b)) => {
            if op.eval(*a as i128, *b as i128) {
                Nnf::True
            } else {
                Nnf::False
            }
        }
        (IntTerm::Var(x), IntTerm::Const(c)) => Nnf::Bound(x.clone(), op, *c as i128),
        (IntTerm::Const(c), IntTerm::Var(x)) => Nnf::Bound(x.clone(), op.flip(), *c as i128),
        (IntTerm::Var(x), IntTerm::Var(y)) if x == y => {
            if op.eval(0, 0) {
                Nnf::True
            } else {
                Nnf::False
            }
        }
        (IntTerm::Var(x), IntTerm::Var(y)) => Nnf::Relate(x.clone(), op, y.clone()),
        _ => unreachable!("non-atomic terms rejected above"),
    })
}

/// Literals collected along one branch of the search.
#[derive(Debug, Clone, Default)]
struct Branch {
    bools: BTreeMap<String, bool>,
    bounds: BTreeMap<String, Interval>,
    relations: Vec<(String, RelOp, String)>,
}

#[derive(Debug, Clone, Default)]
struct Interval {
    lo: Option<i128>,
    hi: Option<i128>,
    excluded: BTreeSet<i128>,
}

impl Interval {
    fn add(&mut self, op: RelOp, c: i128) {
        match op {
            RelOp::Lt => self.tighten_hi(c - 1),
            RelOp::Le => self.tighten_hi(c),
            RelOp::Gt => self.tighten_lo(c + 1),
            RelOp::Ge => self.tighten_lo(c),
            RelOp::Eq => {
                self.tighten_lo(c);
                self.tighten_hi(c);
            }
            RelOp::Ne => {
                self.excluded.insert(c);
            }
        }
    }

    fn tighten_lo(&mut self, c: i128) {
        self.lo = Some(self.lo.map_or(c, |lo| lo.max(c)));
    }

    fn tighten_hi(&mut self, c: i128) {
        self.hi = Some(self.hi.map_or(c, |hi| hi.min(c)));
    }

    /// Counts the integers in `[lo, hi]` against the excluded points.
    fn satisfiable(&self) -> bool {
        match (self.lo, self.hi) {
            (Some(lo), Some(hi)) => {
                if lo > hi {
                    return false;
                }
                let width = hi - lo + 1;
                let blocked = self.excluded.range(lo..=hi).count() as i128;
                width > blocked
            }
            _ => true,
        }
    }
}

impl Branch {
    /// Adds a literal; returns false on an immediate conflict.
    fn assume(&mut self, lit: &Nnf) -> bool {
        match lit {
            Nnf::True => true,
            Nnf::False => false,
            Nnf::Bool(v, polarity) => match self.bools.get(v) {
                Some(p) => p == polarity,
                None => {
                    self.bools.insert(v.clone(), *polarity);
                    true
                }
            },
            Nnf::Bound(v, op, c) => {
                let iv = self.bounds.entry(v.clone()).or_default();
                iv.add(*op, *c);
                iv.satisfiable()
            }
            Nnf::Relate(x, op, y) => {
                self.relations.push((x.clone(), *op, y.clone()));
                true
            }
            Nnf::And(_) | Nnf::Or(_) => unreachable!("not a literal"),
        }
    }

    fn consistent(&self) -> bool {
        if self.relations.is_empty() {
            return self.bounds.values().all(Interval::satisfiable);
        }
        DifferenceSystem::from_branch(self).satisfiable()
    }
}

/// Depth-first exploration of the NNF skeleton. `pending` holds the
/// conjuncts still to be processed on the current branch.
fn search(mut pending: Vec<&Nnf>, branch: &mut Branch) -> bool {
    while let Some(node) = pending.pop() {
        match node {
            Nnf::And(parts) => pending.extend(parts.iter()),
            Nnf::Or(alts) => {
                return alts.iter().any(|alt| {
                    let mut next = pending.clone();
                    next.push(alt);
                    let mut b = branch.clone();
                    search(next, &mut b)
                });
            }
            lit => {
                if !branch.assume(lit) {
                    return false;
                }
            }
        }
    }
    branch.consistent()
}

/// Difference constraints `v - u <= w` over the branch's integer variables
/// plus a zero node, with var/var and var/const disequalities kept aside.
struct DifferenceSystem {
    nodes: BTreeMap<String, usize>,
    edges: Vec<(usize, usize, i128)>,
    disequalities: Vec<(usize, usize, i128)>,
}

const ZERO: usize = 0;

impl DifferenceSystem {
    fn from_branch(branch: &Branch) -> DifferenceSystem {
        let mut sys = DifferenceSystem {
            nodes: BTreeMap::new(),
            edges: Vec::new(),
            disequalities: Vec::new(),
        };
        for (v, iv) in &branch.bounds {
            let n = sys.node(v);
            if let Some(hi) = iv.hi {
                sys.edges.push((ZERO, n, hi));
            }
            if let Some(lo) = iv.lo {
                sys.edges.push((n, ZERO, -lo));
            }
            for &c in &iv.excluded {
                // n - zero != c
                sys.disequalities.push((n, ZERO, c));
            }
        }
        for (x, op, y) in &branch.relations {
            let (a, b) = (sys.node(x), sys.node(y));
            match op {
                // a - b <= -1
                RelOp::Lt => sys.edges.push((b, a, -1)),
                RelOp::Le => sys.edges.push((b, a, 0)),
                RelOp::Gt => sys.edges.push((a, b, -1)),
                RelOp::Ge => sys.edges.push((a, b, 0)),
                RelOp::Eq => {
                    sys.edges.push((b, a, 0));
                    sys.edges.push((a, b, 0));
                }
                RelOp::Ne => sys.disequalities.push((a, b, 0)),
            }
        }
        sys
    }

    fn node(&mut self, v: &str) -> usize {
        let next = self.nodes.len() + 1;
        *self.nodes.entry(v.to_string()).or_insert(next)
    }

    fn satisfiable(&self) -> bool {
        let n = self.nodes.len() + 1;
        let mut dist = vec![vec![None::<i128>; n]; n];
        for (i, row) in dist.iter_mut().enumerate() {
            row[i] = Some(0);
        }
        for &(u, v, w) in &self.edges {
            let cell = &mut dist[u][v];
            *cell = Some(cell.map_or(w, |d| d.min(w)));
        }
        self.split(dist, 0)
    }

    /// Resolves disequality `k` onwards by splitting `a - b != c` into
    /// `a - b <= c - 1` or `b - a <= -c - 1`.
    fn split(&self, dist: Vec<Vec<Option<i128>>>, k: usize) -> bool {
        let Some(closed) = close(dist) else {
            return false;
        };
        let Some(&(a, b, c)) = self.disequalities.get(k) else {
            return true;
        };
        // Already implied by the closure: skip the split.
        let upper = closed[b][a]; // a - b <= upper
        let lower = closed[a][b].map(|d| -d); // a - b >= lower
        if upper.is_some_and(|u| u < c) || lower.is_some_and(|l| l > c) {
            return self.split(closed, k + 1);
        }
        let mut below = closed.clone();
        tighten(&mut below, b, a, c - 1);
        if self.split(below, k + 1) {
            return true;
        }
        let mut above = closed;
        tighten(&mut above, a, b, -c - 1);
        self.split(above, k + 1)
    }
}

fn tighten(dist: &mut [Vec<Option<i128>>], u: usize, v: usize, w: i128) {
    let cell = &mut dist[u][v];
    *cell = Some(cell.map_or(w, |d| d.min(w)));
}

/// Floyd-Warshall closure; `None` when a negative cycle exists.
fn close(mut dist: Vec<Vec<Option<i128>>>) -> Option<Vec<Vec<Option<i128>>>> {
    let n = dist.len();
    for k in 0..n {
        let row_k = dist[k].clone();
        for row in dist.iter_mut() {
            let Some(ik) = row[k] else { continue };
            for (cell, kj) in row.iter_mut().zip(&row_k) {
                if let Some(kj) = kj {
                    let via = ik + kj;
                    if cell.is_none_or(|d| via < d) {
                        *cell = Some(via);
                    }
                }
            }
        }
    }
    if (0..n).any(|i| dist[i][i].is_some_and(|d| d < 0)) {
        None
    } else {
        Some(dist)
    }
}
