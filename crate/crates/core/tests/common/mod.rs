//! Reference implementations shared by the integration tests. Nothing
//! here calls into the library's decision procedure or heap; they are
//! the independent side of each comparison.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use sscc::constraints::{Formula, IntTerm, RelOp};

pub struct Rng(ChaCha8Rng);

impl Rng {
    pub fn new(seed: u64) -> Rng {
        Rng(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.0.next_u64() % n
    }

    pub fn range(&mut self, lo: i64, hi: i64) -> i64 {
        lo + self.below((hi - lo + 1) as u64) as i64
    }

    pub fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}

const OPS: [RelOp; 6] = [
    RelOp::Lt,
    RelOp::Le,
    RelOp::Gt,
    RelOp::Ge,
    RelOp::Eq,
    RelOp::Ne,
];
const INT_VARS: [&str; 3] = ["X", "Y", "Z"];
const BOOL_VARS: [&str; 2] = ["p", "q"];

fn random_term(rng: &mut Rng, lo: i64, hi: i64) -> IntTerm {
    if rng.below(3) == 0 {
        IntTerm::Const(rng.range(lo, hi))
    } else {
        IntTerm::var(INT_VARS[rng.below(3) as usize])
    }
}

fn random_atom(rng: &mut Rng, lo: i64, hi: i64) -> Formula {
    match rng.below(8) {
        0 => Formula::bool_var(BOOL_VARS[rng.below(2) as usize]),
        1 => [Formula::True, Formula::False][rng.below(2) as usize].clone(),
        _ => Formula::Atom(
            random_term(rng, lo, hi),
            OPS[rng.below(6) as usize],
            random_term(rng, lo, hi),
        ),
    }
}

/// A random formula with exactly `atoms` leaves, constants in `[lo, hi]`.
pub fn random_formula(rng: &mut Rng, atoms: usize, lo: i64, hi: i64) -> Formula {
    if atoms <= 1 {
        let a = random_atom(rng, lo, hi);
        return if rng.below(4) == 0 {
            Formula::not(a)
        } else {
            a
        };
    }
    let left = 1 + rng.below(atoms as u64 - 1) as usize;
    let a = random_formula(rng, left, lo, hi);
    let b = random_formula(rng, atoms - left, lo, hi);
    let f = match rng.below(6) {
        0 | 1 => Formula::and(a, b),
        2 => Formula::or(a, b),
        3 => Formula::xor(a, b),
        4 => Formula::implies(a, b),
        _ => Formula::iff(a, b),
    };
    if rng.below(5) == 0 {
        Formula::not(f)
    } else {
        f
    }
}

fn term_value(t: &IntTerm, env: &BTreeMap<String, i64>) -> i64 {
    match t {
        IntTerm::Var(v) => env[v],
        IntTerm::Const(c) => *c,
        IntTerm::Add(a, b) => term_value(a, env) + term_value(b, env),
        IntTerm::Sub(a, b) => term_value(a, env) - term_value(b, env),
        IntTerm::Mul(a, b) => term_value(a, env) * term_value(b, env),
    }
}

fn holds(op: RelOp, l: i64, r: i64) -> bool {
    match op {
        RelOp::Lt => l < r,
        RelOp::Le => l <= r,
        RelOp::Gt => l > r,
        RelOp::Ge => l >= r,
        RelOp::Eq => l == r,
        RelOp::Ne => l != r,
    }
}

pub fn eval(f: &Formula, ints: &BTreeMap<String, i64>, bools: &BTreeMap<String, bool>) -> bool {
    match f {
        Formula::True => true,
        Formula::False => false,
        Formula::BoolVar(v) => bools[v],
        Formula::Atom(l, op, r) => holds(*op, term_value(l, ints), term_value(r, ints)),
        Formula::Not(a) => !eval(a, ints, bools),
        Formula::And(a, b) => eval(a, ints, bools) && eval(b, ints, bools),
        Formula::Or(a, b) => eval(a, ints, bools) || eval(b, ints, bools),
        Formula::Xor(a, b) => eval(a, ints, bools) != eval(b, ints, bools),
        Formula::Implies(a, b) => !eval(a, ints, bools) || eval(b, ints, bools),
        Formula::Iff(a, b) => eval(a, ints, bools) == eval(b, ints, bools),
    }
}

fn collect(f: &Formula, ints: &mut Vec<String>, bools: &mut Vec<String>, consts: &mut Vec<i64>) {
    fn term(t: &IntTerm, ints: &mut Vec<String>, consts: &mut Vec<i64>) {
        match t {
            IntTerm::Var(v) => {
                if !ints.contains(v) {
                    ints.push(v.clone());
                }
            }
            IntTerm::Const(c) => consts.push(*c),
            IntTerm::Add(a, b) | IntTerm::Sub(a, b) | IntTerm::Mul(a, b) => {
                term(a, ints, consts);
                term(b, ints, consts);
            }
        }
    }
    match f {
        Formula::True | Formula::False => {}
        Formula::BoolVar(v) => {
            if !bools.contains(v) {
                bools.push(v.clone());
            }
        }
        Formula::Atom(l, _, r) => {
            term(l, ints, consts);
            term(r, ints, consts);
        }
        Formula::Not(a) => collect(a, ints, bools, consts),
        Formula::And(a, b)
        | Formula::Or(a, b)
        | Formula::Xor(a, b)
        | Formula::Implies(a, b)
        | Formula::Iff(a, b) => {
            collect(a, ints, bools, consts);
            collect(b, ints, bools, consts);
        }
    }
}

/// Exhaustive satisfiability over `[min constant - m, max constant + m]`
/// for every integer variable, where `m` is 2 plus the number of integer
/// variables. The extra room covers chains such as `X > 8, Y > X, Z > Y`.
pub fn brute_force_sat(f: &Formula) -> bool {
    let (mut ints, mut bools, mut consts) = (Vec::new(), Vec::new(), Vec::new());
    collect(f, &mut ints, &mut bools, &mut consts);
    let m = 2 + ints.len() as i64;
    let lo = consts.iter().copied().min().unwrap_or(0) - m;
    let hi = consts.iter().copied().max().unwrap_or(0) + m;
    let width = (hi - lo + 1) as u64;
    let int_cases = width.pow(ints.len() as u32);
    let mut ienv = BTreeMap::new();
    let mut benv = BTreeMap::new();
    for bmask in 0..(1u64 << bools.len()) {
        for (i, b) in bools.iter().enumerate() {
            benv.insert(b.clone(), bmask >> i & 1 == 1);
        }
        for mut k in 0..int_cases {
            for v in &ints {
                ienv.insert(v.clone(), lo + (k % width) as i64);
                k /= width;
            }
            if eval(f, &ienv, &benv) {
                return true;
            }
        }
    }
    false
}

/// A sorted multiset of `(time, uid)` pairs standing in for the heap.
#[derive(Debug, Clone, Default)]
pub struct ListQueue(pub Vec<(u64, u64)>);

impl ListQueue {
    pub fn insert(&mut self, t: u64, uid: u64) {
        self.0.push((t, uid));
    }

    pub fn merge(&mut self, other: &ListQueue) {
        self.0.extend(other.0.iter().copied());
    }

    pub fn delta(&mut self, d: u64) {
        for e in &mut self.0 {
            e.0 = e.0.saturating_sub(d);
        }
    }

    pub fn min_time(&self) -> Option<u64> {
        self.0.iter().map(|e| e.0).min()
    }

    /// Removes one entry with the minimum time; any uid among ties is
    /// acceptable, so the caller names the one it saw.
    pub fn remove(&mut self, t: u64, uid: u64) -> bool {
        match self.0.iter().position(|e| *e == (t, uid)) {
            Some(i) => {
                self.0.swap_remove(i);
                true
            }
            None => false,
        }
    }

    pub fn sorted_times(&self) -> Vec<u64> {
        let mut t: Vec<u64> = self.0.iter().map(|e| e.0).collect();
        t.sort();
        t
    }
}
