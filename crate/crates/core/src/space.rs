//! Agent identifiers and the object configuration.
//!
//! A configuration is a flat collection of agent objects (one store and
//! one child set per space) and process objects (a command at a location
//! under a uid), plus the simulation object kept by the engine.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::constraints::{conjoin, Formula};
use crate::process::Command;

/// `n_k . ... . n_1 . root`, stored root-first as `[n_1, ..., n_k]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct AgentId {
    path: Vec<u64>,
}

impl AgentId {
    pub fn root() -> AgentId {
        AgentId { path: Vec::new() }
    }

    /// Builds an id from the indices read outermost-first, so
    /// `from_path(&[1, 3])` is `3.1.root`.
    pub fn from_path(path: &[u64]) -> AgentId {
        AgentId {
            path: path.to_vec(),
        }
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    pub fn is_root(&self) -> bool {
        self.path.is_empty()
    }

    /// `n . self`
    pub fn child(&self, n: u64) -> AgentId {
        let mut path = self.path.clone();
        path.push(n);
        AgentId { path }
    }

    /// Splits `n . L` into `(n, L)`; `None` at root.
    pub fn split(&self) -> Option<(u64, AgentId)> {
        let (&n, rest) = self.path.split_last()?;
        Some((
            n,
            AgentId {
                path: rest.to_vec(),
            },
        ))
    }

    pub fn parent(&self) -> Option<AgentId> {
        self.split().map(|(_, p)| p)
    }

    /// Ancestors from the parent up to root.
    pub fn ancestors(&self) -> impl Iterator<Item = AgentId> + '_ {
        (0..self.path.len()).rev().map(|k| AgentId {
            path: self.path[..k].to_vec(),
        })
    }
}

/// `a` is `b` or one of its ancestors.
pub fn is_prefix(a: &AgentId, b: &AgentId) -> bool {
    b.path.starts_with(&a.path)
}

/// `a = n . b` for some `n`.
pub fn is_son(a: &AgentId, b: &AgentId) -> bool {
    a.parent().as_ref() == Some(b)
}

/// Number of components including root.
pub fn size_aid(a: &AgentId) -> usize {
    a.path.len() + 1
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for n in self.path.iter().rev() {
            write!(f, "{n}.")?;
        }
        write!(f, "root")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed agent id `{0}`")]
pub struct AgentIdError(pub String);

impl FromStr for AgentId {
    type Err = AgentIdError;

    fn from_str(s: &str) -> Result<AgentId, AgentIdError> {
        let parts: Vec<&str> = s.trim().split('.').map(str::trim).collect();
        let (last, nums) = parts.split_last().expect("split yields one part");
        if *last != "root" {
            return Err(AgentIdError(s.to_string()));
        }
        let mut path = Vec::with_capacity(nums.len());
        for n in nums.iter().rev() {
            path.push(n.parse().map_err(|_| AgentIdError(s.to_string()))?);
        }
        Ok(AgentId { path })
    }
}

/// One space: its store and the indices of its registered children.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentObject {
    pub id: AgentId,
    pub store: Formula,
    pub children: BTreeSet<u64>,
}

impl AgentObject {
    pub fn new(id: AgentId) -> AgentObject {
        AgentObject {
            id,
            store: Formula::True,
            children: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessObject {
    pub location: AgentId,
    pub uid: u64,
    pub command: Command,
}

/// The agents and processes of a configuration. Agents are keyed by id
/// and processes by uid, so a normalized configuration has at most one
/// of each.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Objects {
    pub agents: BTreeMap<AgentId, AgentObject>,
    pub processes: BTreeMap<u64, ProcessObject>,
}

impl Objects {
    pub fn new() -> Objects {
        let mut o = Objects::default();
        o.add_agent(AgentObject::new(AgentId::root()));
        o
    }

    /// Adds an agent, merging with an existing one of the same id by
    /// conjoining stores and uniting child sets.
    pub fn add_agent(&mut self, a: AgentObject) {
        match self.agents.get_mut(&a.id) {
            Some(existing) => {
                let store = std::mem::replace(&mut existing.store, Formula::True);
                existing.store = conjoin(store, a.store);
                existing.children.extend(a.children);
            }
            None => {
                self.agents.insert(a.id.clone(), a);
            }
        }
    }

    /// The agent at `id`, created with an empty store when missing.
    pub fn agent_mut(&mut self, id: &AgentId) -> &mut AgentObject {
        self.agents
            .entry(id.clone())
            .or_insert_with(|| AgentObject::new(id.clone()))
    }

    pub fn store(&self, id: &AgentId) -> Formula {
        self.agents
            .get(id)
            .map_or(Formula::True, |a| a.store.clone())
    }

    pub fn children(&self, id: &AgentId) -> BTreeSet<u64> {
        self.agents
            .get(id)
            .map(|a| a.children.clone())
            .unwrap_or_default()
    }

    /// Registers a process; nil commands vanish.
    pub fn add_process(&mut self, p: ProcessObject) {
        if p.command != Command::Nil {
            self.processes.insert(p.uid, p);
        }
    }
}

/// A multiset view of a configuration's objects, before the structural
/// equations have been applied.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Soup {
    pub agents: Vec<AgentObject>,
    pub processes: Vec<ProcessObject>,
}

/// Applies the structural equations: nil processes are dropped and agent
/// objects with equal ids are merged.
pub fn normalize(soup: &Soup) -> Soup {
    let mut merged: Vec<AgentObject> = Vec::new();
    for a in &soup.agents {
        match merged.iter_mut().find(|m| m.id == a.id) {
            Some(m) => {
                let store = std::mem::replace(&mut m.store, Formula::True);
                m.store = conjoin(store, a.store.clone());
                m.children.extend(a.children.iter().copied());
            }
            None => merged.push(a.clone()),
        }
    }
    Soup {
        agents: merged,
        processes: soup
            .processes
            .iter()
            .filter(|p| p.command != Command::Nil)
            .cloned()
            .collect(),
    }
}
