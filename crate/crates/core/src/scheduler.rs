//! Persistent leftist min-heap of schedule entries.
//!
//! Nodes are shared through `Arc`, so cloning a heap is O(1) and old
//! versions stay valid after an update. Comparison is a strict `<` on the
//! entry time only; on equal times `merge` keeps the root of its second
//! argument on top.

use std::sync::Arc;

use thiserror::Error;

use crate::stochastic::Time;

/// Strict ordering used by the heap. Kept separate from `Ord` so that
/// entries with equal times are never ordered by any other field.
pub trait StrictOrder {
    fn precedes(&self, other: &Self) -> bool;
}

/// A process uid waiting `time` units before its rule may fire.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ScheduleEntry {
    pub time: Time,
    pub uid: u64,
}

impl ScheduleEntry {
    pub fn new(time: Time, uid: u64) -> ScheduleEntry {
        ScheduleEntry { time, uid }
    }
}

impl StrictOrder for ScheduleEntry {
    fn precedes(&self, other: &Self) -> bool {
        self.time < other.time
    }
}

#[derive(Debug)]
struct Node<E> {
    rank: usize,
    entry: E,
    left: Heap<E>,
    right: Heap<E>,
}

#[derive(Debug)]
pub struct Heap<E = ScheduleEntry>(Option<Arc<Node<E>>>);

impl<E> Clone for Heap<E> {
    fn clone(&self) -> Self {
        Heap(self.0.clone())
    }
}

impl<E> Default for Heap<E> {
    fn default() -> Self {
        Heap(None)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HeapError {
    #[error("heap is empty")]
    Empty,
    #[error("heap order violated at depth {0}")]
    Order(usize),
    #[error("leftist property violated at depth {0}")]
    Leftist(usize),
    #[error("stored rank {stored} differs from computed rank {computed}")]
    Rank { stored: usize, computed: usize },
}

impl<E: Clone + StrictOrder> Heap<E> {
    pub fn empty() -> Heap<E> {
        Heap(None)
    }

    pub fn singleton(e: E) -> Heap<E> {
        Heap::node(1, e, Heap::empty(), Heap::empty())
    }

    fn node(rank: usize, entry: E, left: Heap<E>, right: Heap<E>) -> Heap<E> {
        Heap(Some(Arc::new(Node {
            rank,
            entry,
            left,
            right,
        })))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_none()
    }

    pub fn rank(&self) -> usize {
        self.0.as_ref().map_or(0, |n| n.rank)
    }

    pub fn len(&self) -> usize {
        self.0
            .as_ref()
            .map_or(0, |n| 1 + n.left.len() + n.right.len())
    }

    /// Builds a node, putting the higher-ranked subtree on the left.
    fn make(entry: E, a: Heap<E>, b: Heap<E>) -> Heap<E> {
        if a.rank() >= b.rank() {
            let r = b.rank() + 1;
            Heap::node(r, entry, a, b)
        } else {
            let r = a.rank() + 1;
            Heap::node(r, entry, b, a)
        }
    }

    pub fn merge(a: &Heap<E>, b: &Heap<E>) -> Heap<E> {
        match (&a.0, &b.0) {
            (None, _) => b.clone(),
            (_, None) => a.clone(),
            (Some(x), Some(y)) => {
                if x.entry.precedes(&y.entry) {
                    Heap::make(x.entry.clone(), x.left.clone(), Heap::merge(&x.right, b))
                } else {
                    Heap::make(y.entry.clone(), y.left.clone(), Heap::merge(a, &y.right))
                }
            }
        }
    }

    pub fn insert(&self, e: E) -> Heap<E> {
        Heap::merge(&Heap::singleton(e), self)
    }

    pub fn find_min(&self) -> Result<&E, HeapError> {
        self.0.as_ref().map(|n| &n.entry).ok_or(HeapError::Empty)
    }

    pub fn delete_min(&self) -> Result<Heap<E>, HeapError> {
        let n = self.0.as_ref().ok_or(HeapError::Empty)?;
        Ok(Heap::merge(&n.left, &n.right))
    }

    /// Same shape with every entry mapped through `f`.
    pub fn map(&self, f: &impl Fn(&E) -> E) -> Heap<E> {
        match &self.0 {
            None => Heap::empty(),
            Some(n) => Heap::node(n.rank, f(&n.entry), n.left.map(f), n.right.map(f)),
        }
    }

    /// Entries in pre-order (root, left subtree, right subtree).
    pub fn entries(&self) -> Vec<E> {
        let mut out = Vec::with_capacity(self.len());
        fn walk<E: Clone>(h: &Heap<E>, out: &mut Vec<E>) {
            if let Some(n) = &h.0 {
                out.push(n.entry.clone());
                walk(&n.left, out);
                walk(&n.right, out);
            }
        }
        walk(self, &mut out);
        out
    }

    /// Checks heap order, the leftist property and the stored ranks.
    pub fn audit(&self) -> Result<(), HeapError> {
        fn go<E: StrictOrder>(h: &Heap<E>, depth: usize) -> Result<usize, HeapError> {
            let Some(n) = &h.0 else { return Ok(0) };
            for child in [&n.left, &n.right] {
                if let Some(c) = &child.0 {
                    if c.entry.precedes(&n.entry) {
                        return Err(HeapError::Order(depth + 1));
                    }
                }
            }
            let l = go(&n.left, depth + 1)?;
            let r = go(&n.right, depth + 1)?;
            if l < r {
                return Err(HeapError::Leftist(depth));
            }
            if n.rank != r + 1 {
                return Err(HeapError::Rank {
                    stored: n.rank,
                    computed: r + 1,
                });
            }
            Ok(n.rank)
        }
        go(self, 0).map(|_| ())
    }
}

impl Heap<ScheduleEntry> {
    /// Shifts every entry's time back by `t`, saturating at zero.
    pub fn delta(&self, t: &Time) -> Heap<ScheduleEntry> {
        if t.is_zero() {
            return self.clone();
        }
        self.map(&|e| ScheduleEntry::new(e.time.monus(t), e.uid))
    }

    pub fn contains_uid(&self, uid: u64) -> bool {
        match &self.0 {
            None => false,
            Some(n) => n.entry.uid == uid || n.left.contains_uid(uid) || n.right.contains_uid(uid),
        }
    }
}

impl<E: PartialEq> PartialEq for Heap<E> {
    fn eq(&self, other: &Self) -> bool {
        match (&self.0, &other.0) {
            (None, None) => true,
            (Some(a), Some(b)) => {
                Arc::ptr_eq(a, b)
                    || (a.rank == b.rank
                        && a.entry == b.entry
                        && a.left == b.left
                        && a.right == b.right)
            }
            _ => false,
        }
    }
}

impl<E: Eq> Eq for Heap<E> {}
