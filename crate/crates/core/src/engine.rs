//! The stochastic rewrite semantics.
//!
//! Only the process whose uid sits at the root of `pqueue` may fire. A
//! firing leaves its entry at the root and puts every spawned process in
//! `pend`; the following tick advances the clock by the root's time,
//! removes the root, shifts the remaining entries and merges `pend` back.
//! A delayed ask instead moves its own entry to `pend` without a tick, so
//! the next root gets its turn at the same instant.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::constraints::{conjoin, ConstraintError, Formula, Oracle};
use crate::process::{command_list, prob_list, replace, Choice, Command};
use crate::scheduler::{Heap, HeapError, ScheduleEntry};
use crate::space::{AgentId, AgentObject, Objects, ProcessObject};
use crate::stochastic::{sample_prob, sample_time, SampleCounter, StochasticExpression, Time};

/// The four per-location duration maps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimeMaps {
    pub tell: BTreeMap<AgentId, StochasticExpression>,
    pub ask: BTreeMap<AgentId, StochasticExpression>,
    pub space: BTreeMap<AgentId, StochasticExpression>,
    pub extrusion: BTreeMap<AgentId, StochasticExpression>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MapKind {
    Tell,
    Ask,
    Space,
    Extrusion,
}

impl MapKind {
    pub const ALL: [MapKind; 4] = [
        MapKind::Tell,
        MapKind::Ask,
        MapKind::Space,
        MapKind::Extrusion,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            MapKind::Tell => "tell",
            MapKind::Ask => "ask",
            MapKind::Space => "space",
            MapKind::Extrusion => "extrusion",
        }
    }
}

impl TimeMaps {
    pub fn get(&self, kind: MapKind) -> &BTreeMap<AgentId, StochasticExpression> {
        match kind {
            MapKind::Tell => &self.tell,
            MapKind::Ask => &self.ask,
            MapKind::Space => &self.space,
            MapKind::Extrusion => &self.extrusion,
        }
    }

    pub fn get_mut(&mut self, kind: MapKind) -> &mut BTreeMap<AgentId, StochasticExpression> {
        match kind {
            MapKind::Tell => &mut self.tell,
            MapKind::Ask => &mut self.ask,
            MapKind::Space => &mut self.space,
            MapKind::Extrusion => &mut self.extrusion,
        }
    }

    /// Every location of every map, all set to `e`.
    pub fn uniform(locations: &[AgentId], e: &StochasticExpression) -> TimeMaps {
        let mut maps = TimeMaps::default();
        for kind in MapKind::ALL {
            for l in locations {
                maps.get_mut(kind).insert(l.clone(), e.clone());
            }
        }
        maps
    }

    /// Gives a new space the expressions of its nearest mapped ancestor.
    fn inherit(&mut self, loc: &AgentId) {
        for kind in MapKind::ALL {
            let m = self.get_mut(kind);
            if !m.contains_key(loc) {
                let e = get_ancestor(m, loc);
                m.insert(loc.clone(), e);
            }
        }
    }
}

/// The expression at `loc` or at its nearest mapped ancestor, defaulting
/// to `Norm(1.0, 0.2)`.
pub fn get_ancestor(
    tm: &BTreeMap<AgentId, StochasticExpression>,
    loc: &AgentId,
) -> StochasticExpression {
    std::iter::once(loc.clone())
        .chain(loc.ancestors())
        .find_map(|l| tm.get(&l).cloned())
        .unwrap_or_else(StochasticExpression::default_norm)
}

/// One draw from `tm` at exactly `loc`; unmapped locations use
/// `Norm(1.0, 0.2)`.
pub fn f_time(
    tm: &BTreeMap<AgentId, StochasticExpression>,
    loc: &AgentId,
    counter: SampleCounter,
) -> (Time, SampleCounter) {
    match tm.get(loc) {
        Some(e) => sample_time(e, counter),
        None => sample_time(&StochasticExpression::default_norm(), counter),
    }
}

/// Scheduling delay of a freshly spawned command. Only posting, entering
/// and leaving a space cost time; everything else is scheduled at zero
/// without a draw.
pub fn get_time_cmd(
    c: &Command,
    loc: &AgentId,
    maps: &TimeMaps,
    counter: SampleCounter,
) -> (Time, SampleCounter) {
    match c {
        Command::Tell(_) | Command::TellChild(_) => f_time(&maps.tell, loc, counter),
        Command::In(..) => f_time(&maps.space, loc, counter),
        Command::Out(..) => f_time(&maps.extrusion, loc, counter),
        _ => (Time::zero(), counter),
    }
}

/// Walks the list with a running cumulative probability. Each visited
/// candidate except the last costs a probability draw, and every visited
/// candidate costs a time draw whether chosen or not.
pub fn select_exclusive(
    choice: &Choice,
    loc: &AgentId,
    maps: &TimeMaps,
    counter: SampleCounter,
) -> (usize, Time, SampleCounter) {
    let (cmds, probs) = (choice.cmds(), choice.probs());
    let last = cmds.len() - 1;
    let mut c = counter;
    let mut cumulative = probs[0];
    for i in 0..last {
        let (q, next) = sample_prob(c);
        let (t, next) = get_time_cmd(&cmds[i], loc, maps, next);
        c = next;
        if q <= cumulative {
            return (i, t, c);
        }
        cumulative += probs[i + 1];
    }
    let (t, c) = get_time_cmd(&cmds[last], loc, maps, c);
    (last, t, c)
}

/// Includes each candidate independently. Every candidate costs one
/// probability draw and one time draw.
pub fn select_independent(
    choice: &Choice,
    loc: &AgentId,
    maps: &TimeMaps,
    counter: SampleCounter,
) -> (Vec<(usize, Time)>, SampleCounter) {
    let mut c = counter;
    let mut chosen = Vec::new();
    for (i, (cmd, p)) in choice.iter().enumerate() {
        let (q, next) = sample_prob(c);
        let (t, next) = get_time_cmd(cmd, loc, maps, next);
        c = next;
        if q <= p {
            chosen.push((i, t));
        }
    }
    (chosen, c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationState {
    pub gtime: Time,
    pub pqueue: Heap,
    pub pend: Heap,
    pub next_id: u64,
    pub counter: SampleCounter,
    pub flag: bool,
    pub maps: TimeMaps,
    pub factor: Time,
    pub max_time: Time,
    /// Expand watches with equal probabilities instead of normalized
    /// random weights.
    pub uniform_watch: bool,
    /// Bound on rule firings, for models that loop at zero time.
    pub max_steps: u64,
}

pub const DEFAULT_MAX_STEPS: u64 = 1_000_000;

impl SimulationState {
    pub fn new(seed: u64, maps: TimeMaps, factor: Time, max_time: Time) -> SimulationState {
        SimulationState {
            gtime: Time::zero(),
            pqueue: Heap::empty(),
            pend: Heap::empty(),
            next_id: 1,
            counter: SampleCounter::new(seed),
            flag: false,
            maps,
            factor,
            max_time,
            uniform_watch: false,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub objects: Objects,
    pub sim: SimulationState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    Tell,
    TellSet,
    Ask,
    Delay,
    Parallel,
    Recursion,
    Space,
    Extrusion,
    /// An extrusion whose index does not name the current space; it
    /// waits in `pend` like a delayed ask.
    Blocked,
    Exclusive,
    Independent,
    Found,
    Search,
    /// A watch at a root without children has nowhere to move and ends.
    SearchStuck,
    Tick,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::Tell => "tell",
            Rule::TellSet => "tell-set",
            Rule::Ask => "ask",
            Rule::Delay => "delay",
            Rule::Parallel => "parallel",
            Rule::Recursion => "recursion",
            Rule::Space => "space",
            Rule::Extrusion => "extrusion",
            Rule::Blocked => "blocked",
            Rule::Exclusive => "exclusive",
            Rule::Independent => "independent",
            Rule::Found => "found",
            Rule::Search => "search",
            Rule::SearchStuck => "search-stuck",
            Rule::Tick => "tick",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A process created by a rule, with its scheduled delay. Spawned nil
/// commands get a uid but are never scheduled.
#[derive(Debug, Clone, PartialEq)]
pub struct Spawn {
    pub uid: u64,
    pub location: AgentId,
    pub time: Time,
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub rule: Rule,
    pub uid: u64,
    pub location: AgentId,
    /// Clock value when the rule fired.
    pub gtime: Time,
    /// The formula posted by `tell`.
    pub posted: Option<Formula>,
    /// Exclusive branch index, or the child index registered or entered.
    pub branch: Option<usize>,
    /// Indices included by an independent choice.
    pub subset: Vec<usize>,
    pub spawned: Vec<Spawn>,
    /// Clock advance of a tick.
    pub elapsed: Option<Time>,
}

impl TraceEvent {
    fn new(rule: Rule, uid: u64, location: AgentId, gtime: Time) -> TraceEvent {
        TraceEvent {
            rule,
            uid,
            location,
            gtime,
            posted: None,
            branch: None,
            subset: Vec::new(),
            spawned: Vec::new(),
            elapsed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("no process is scheduled")]
    EmptyQueue,
    #[error("a rule already fired; the clock must tick first")]
    FlagSet,
    #[error("nothing fired since the last tick")]
    FlagClear,
    #[error("scheduled uid {0} has no process object")]
    MissingProcess(u64),
    #[error("process {uid} has command `{command}`, which cannot fire")]
    Stuck { uid: u64, command: String },
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
}

impl From<HeapError> for EngineError {
    fn from(_: HeapError) -> EngineError {
        EngineError::EmptyQueue
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Nothing is scheduled; only delayed processes remain.
    Quiescent,
    /// The next tick would move the clock past `max_time`.
    TimeLimit,
    /// `max_steps` rule firings happened.
    StepLimit,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::Quiescent => "quiescent",
            Termination::TimeLimit => "time-limit",
            Termination::StepLimit => "step-limit",
        }
    }
}

impl Configuration {
    pub fn new(objects: Objects, sim: SimulationState) -> Configuration {
        Configuration { objects, sim }
    }

    /// Schedules a process at `time`, directly in `pqueue`. Used to build
    /// initial configurations.
    pub fn schedule(&mut self, location: AgentId, command: Command, time: Time) -> u64 {
        let uid = self.sim.next_id;
        self.sim.next_id += 1;
        if command != Command::Nil {
            self.objects.agent_mut(&location);
            self.sim.pqueue = self.sim.pqueue.insert(ScheduleEntry::new(time, uid));
            self.objects.add_process(ProcessObject {
                location,
                uid,
                command,
            });
        }
        uid
    }

    pub fn store(&self, id: &AgentId) -> Formula {
        self.objects.store(id)
    }

    /// Creates a process under a fresh uid and puts its entry in `pend`.
    fn spawn(&mut self, location: AgentId, command: Command, time: Time, ev: &mut TraceEvent) {
        let uid = self.sim.next_id;
        self.sim.next_id += 1;
        self.place(uid, location, command, time, ev);
    }

    fn place(
        &mut self,
        uid: u64,
        location: AgentId,
        command: Command,
        time: Time,
        ev: &mut TraceEvent,
    ) {
        if command != Command::Nil {
            self.objects.agent_mut(&location);
            self.sim.pend = self.sim.pend.insert(ScheduleEntry::new(time.clone(), uid));
        }
        ev.spawned.push(Spawn {
            uid,
            location: location.clone(),
            time,
            command: command.clone(),
        });
        self.objects.add_process(ProcessObject {
            location,
            uid,
            command,
        });
    }

    fn time_cmd(&mut self, c: &Command, loc: &AgentId) -> Time {
        let (t, next) = get_time_cmd(c, loc, &self.sim.maps, self.sim.counter);
        self.sim.counter = next;
        t
    }

    /// Moves the root entry to `pend` without consuming its process.
    fn defer(&mut self, entry: ScheduleEntry) -> Result<(), EngineError> {
        self.sim.pqueue = self.sim.pqueue.delete_min()?;
        self.sim.pend = self.sim.pend.insert(entry);
        Ok(())
    }

    /// Fires the rule of the process at the root of `pqueue`.
    pub fn step(&mut self, oracle: &mut Oracle) -> Result<TraceEvent, EngineError> {
        if self.sim.flag {
            return Err(EngineError::FlagSet);
        }
        let entry = self.sim.pqueue.find_min()?.clone();
        let uid = entry.uid;
        let proc = self
            .objects
            .processes
            .get(&uid)
            .ok_or(EngineError::MissingProcess(uid))?
            .clone();
        let loc = proc.location.clone();
        let mut ev = TraceEvent::new(Rule::Tell, uid, loc.clone(), self.sim.gtime.clone());

        match &proc.command {
            Command::Tell(f) => {
                let agent = self.objects.agent_mut(&loc);
                let store = std::mem::replace(&mut agent.store, Formula::True);
                agent.store = conjoin(store, f.clone());
                ev.posted = Some(f.clone());
            }
            Command::TellChild(n) => {
                self.objects.agent_mut(&loc).children.insert(*n);
                ev.rule = Rule::TellSet;
                ev.branch = Some(*n as usize);
            }
            Command::Ask(guard, body) => {
                let store = self.objects.agent_mut(&loc).store.clone();
                if !oracle.entails(&store, guard)? {
                    ev.rule = Rule::Delay;
                    self.defer(entry)?;
                    return Ok(ev);
                }
                ev.rule = Rule::Ask;
                let t0 = self.time_cmd(body, &loc);
                let (t1, next) = f_time(&self.sim.maps.ask, &loc, self.sim.counter);
                self.sim.counter = next;
                let penalty = &Time::from_integer(store.size()) * &self.sim.factor;
                self.spawn(loc.clone(), (**body).clone(), t0 + (t1 + penalty), &mut ev);
            }
            Command::Par(a, b) => {
                ev.rule = Rule::Parallel;
                let t0 = self.time_cmd(a, &loc);
                let t1 = self.time_cmd(b, &loc);
                // the right operand's entry goes in first
                let n = self.sim.next_id;
                self.sim.next_id += 2;
                self.place(n + 1, loc.clone(), (**b).clone(), t1, &mut ev);
                self.place(n, loc.clone(), (**a).clone(), t0, &mut ev);
                ev.spawned.reverse();
            }
            Command::Mu(n, body) => {
                ev.rule = Rule::Recursion;
                let t0 = self.time_cmd(body, &loc);
                let unfolded = replace(*n, body, &proc.command);
                self.spawn(loc.clone(), unfolded, t0, &mut ev);
            }
            Command::In(body, n) => {
                ev.rule = Rule::Space;
                ev.branch = Some(*n as usize);
                let inner = loc.child(*n);
                self.objects.agent_mut(&loc).children.insert(*n);
                self.objects.add_agent(AgentObject::new(inner.clone()));
                self.sim.maps.inherit(&inner);
                let t0 = self.time_cmd(body, &inner);
                let register = Command::TellChild(*n);
                let t1 = self.time_cmd(&register, &loc);
                self.spawn(inner, (**body).clone(), t0, &mut ev);
                self.spawn(loc.clone(), register, t1, &mut ev);
            }
            Command::Out(body, n) => match loc.split() {
                Some((m, parent)) if m == *n => {
                    ev.rule = Rule::Extrusion;
                    let t0 = self.time_cmd(body, &parent);
                    self.spawn(parent, (**body).clone(), t0, &mut ev);
                }
                _ => {
                    ev.rule = Rule::Blocked;
                    self.defer(entry)?;
                    return Ok(ev);
                }
            },
            Command::Exc(choice) => {
                ev.rule = Rule::Exclusive;
                let (i, t, next) = select_exclusive(choice, &loc, &self.sim.maps, self.sim.counter);
                self.sim.counter = next;
                ev.branch = Some(i);
                self.spawn(loc.clone(), choice.cmds()[i].clone(), t, &mut ev);
            }
            Command::Ind(choice) => {
                ev.rule = Rule::Independent;
                let (chosen, next) =
                    select_independent(choice, &loc, &self.sim.maps, self.sim.counter);
                self.sim.counter = next;
                for (i, t) in chosen {
                    ev.subset.push(i);
                    self.spawn(loc.clone(), choice.cmds()[i].clone(), t, &mut ev);
                }
            }
            Command::Watch(action, target) => {
                let store = self.objects.agent_mut(&loc).store.clone();
                if oracle.entails(&store, target)? {
                    ev.rule = Rule::Found;
                    let t0 = self.time_cmd(action, &loc);
                    self.spawn(loc.clone(), (**action).clone(), t0, &mut ev);
                } else {
                    let children = self.objects.children(&loc);
                    let moves = command_list(&loc, &children, &proc.command);
                    if moves.is_empty() {
                        ev.rule = Rule::SearchStuck;
                    } else {
                        ev.rule = Rule::Search;
                        let probs = if self.sim.uniform_watch {
                            vec![1.0 / moves.len() as f64; moves.len()]
                        } else {
                            let (probs, next) = prob_list(moves.len(), self.sim.counter);
                            self.sim.counter = next;
                            probs
                        };
                        let choice = Choice::exclusive(moves, probs)
                            .expect("normalized weights form a valid exclusive choice");
                        self.spawn(loc.clone(), Command::Exc(choice), Time::zero(), &mut ev);
                    }
                }
            }
            Command::Nil | Command::Var(_) => {
                return Err(EngineError::Stuck {
                    uid,
                    command: proc.command.to_string(),
                });
            }
        }
        self.objects.processes.remove(&uid);
        self.sim.flag = true;
        Ok(ev)
    }

    /// Advances the clock by the root entry's time and merges `pend` back.
    pub fn tick(&mut self) -> Result<TraceEvent, EngineError> {
        if !self.sim.flag {
            return Err(EngineError::FlagClear);
        }
        let root = self.sim.pqueue.find_min()?.clone();
        let ev = TraceEvent {
            elapsed: Some(root.time.clone()),
            ..TraceEvent::new(
                Rule::Tick,
                root.uid,
                AgentId::root(),
                self.sim.gtime.clone(),
            )
        };
        let rest = self.sim.pqueue.delete_min()?.delta(&root.time);
        self.sim.pqueue = Heap::merge(&rest, &self.sim.pend);
        self.sim.pend = Heap::empty();
        self.sim.gtime = &self.sim.gtime + &root.time;
        self.sim.flag = false;
        Ok(ev)
    }

    /// Why a run would stop now, if it would.
    fn halt_reason(&self, steps: u64) -> Option<Termination> {
        let Ok(root) = self.sim.pqueue.find_min() else {
            return Some(Termination::Quiescent);
        };
        if &self.sim.gtime + &root.time > self.sim.max_time {
            return Some(Termination::TimeLimit);
        }
        if steps >= self.sim.max_steps {
            return Some(Termination::StepLimit);
        }
        None
    }

    /// Alternates step and tick until quiescence or a limit. `observe`
    /// sees each event right after it happens, with the configuration it
    /// produced.
    pub fn run_observed(
        &mut self,
        oracle: &mut Oracle,
        observe: &mut dyn FnMut(&Configuration, &TraceEvent),
    ) -> Result<Termination, EngineError> {
        let mut steps = 0;
        loop {
            if let Some(t) = self.halt_reason(steps) {
                return Ok(t);
            }
            let ev = self.step(oracle)?;
            steps += 1;
            observe(self, &ev);
            if self.sim.flag {
                let tick = self.tick()?;
                observe(self, &tick);
            }
        }
    }

    /// Runs to termination and returns the full trace.
    pub fn run(
        &mut self,
        oracle: &mut Oracle,
    ) -> Result<(Termination, Vec<TraceEvent>), EngineError> {
        let mut trace = Vec::new();
        let t = self.run_observed(oracle, &mut |_, ev| trace.push(ev.clone()))?;
        Ok((t, trace))
    }

    /// Processes alive now that are not asks waiting in `pend`. Empty at a
    /// well-shaped quiescent state.
    pub fn quiescence_violations(&self) -> Vec<u64> {
        let pending: BTreeSet<u64> = self.sim.pend.entries().into_iter().map(|e| e.uid).collect();
        self.objects
            .processes
            .values()
            .filter(|p| !(matches!(p.command, Command::Ask(..)) && pending.contains(&p.uid)))
            .map(|p| p.uid)
            .collect()
    }

    /// Checks the bookkeeping invariants that hold between ticks: both
    /// heaps are well formed and the scheduled uids are exactly the live
    /// processes, each once.
    pub fn audit(&self) -> Result<(), String> {
        self.sim
            .pqueue
            .audit()
            .map_err(|e| format!("pqueue: {e}"))?;
        self.sim.pend.audit().map_err(|e| format!("pend: {e}"))?;
        let mut scheduled = BTreeSet::new();
        for e in self
            .sim
            .pqueue
            .entries()
            .into_iter()
            .chain(self.sim.pend.entries())
        {
            if !scheduled.insert(e.uid) {
                return Err(format!("uid {} scheduled twice", e.uid));
            }
            if e.uid >= self.sim.next_id {
                return Err(format!(
                    "uid {} not below next id {}",
                    e.uid, self.sim.next_id
                ));
            }
        }
        let live: BTreeSet<u64> = self.objects.processes.keys().copied().collect();
        if scheduled != live {
            return Err(format!("scheduled {scheduled:?} but live {live:?}"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::RelOp;

    fn unit_maps() -> TimeMaps {
        TimeMaps::uniform(
            &[AgentId::root()],
            &StochasticExpression::Constant(Time::from_integer(1)),
        )
    }

    fn config(cmd: Command) -> Configuration {
        let sim = SimulationState::new(7, unit_maps(), Time::zero(), Time::from_integer(1000));
        let mut c = Configuration::new(Objects::new(), sim);
        c.schedule(AgentId::root(), cmd, Time::zero());
        c
    }

    fn x(op: RelOp, v: i64) -> Formula {
        Formula::cmp("X", op, v)
    }

    #[test]
    fn ancestor_lookup() {
        let mut tm = BTreeMap::new();
        assert_eq!(
            get_ancestor(&tm, &AgentId::root()),
            StochasticExpression::default_norm()
        );
        let e = StochasticExpression::Exp { rate: 3.0 };
        tm.insert("1.root".parse().unwrap(), e.clone());
        assert_eq!(get_ancestor(&tm, &"2.1.root".parse().unwrap()), e);
        assert_eq!(get_ancestor(&tm, &"1.root".parse().unwrap()), e);
        assert_eq!(
            get_ancestor(&tm, &"2.root".parse().unwrap()),
            StochasticExpression::default_norm()
        );
    }

    #[test]
    fn time_cmd_costs() {
        let maps = unit_maps();
        let c = SampleCounter::new(1);
        let ask = Command::ask(Formula::True, Command::Nil);
        assert_eq!(
            get_time_cmd(&ask, &AgentId::root(), &maps, c),
            (Time::zero(), c)
        );
        let tell = Command::tell(Formula::True);
        assert_eq!(
            get_time_cmd(&tell, &AgentId::root(), &maps, c),
            (Time::from_integer(1), c)
        );
        let (_, next) = get_time_cmd(&tell, &"5.root".parse().unwrap(), &maps, c);
        assert_eq!(next.index, c.index + 1);
    }

    #[test]
    fn tell_then_tick() {
        let mut c = config(Command::tell(x(RelOp::Gt, 0)));
        let mut o = Oracle::internal();
        let ev = c.step(&mut o).unwrap();
        assert_eq!(ev.rule, Rule::Tell);
        assert!(c.sim.flag);
        assert_eq!(c.store(&AgentId::root()), x(RelOp::Gt, 0));
        assert_eq!(c.step(&mut o), Err(EngineError::FlagSet));
        c.tick().unwrap();
        assert!(!c.sim.flag);
        assert!(c.sim.pqueue.is_empty());
        assert_eq!(c.step(&mut o), Err(EngineError::EmptyQueue));
        assert_eq!(c.tick(), Err(EngineError::FlagClear));
    }

    #[test]
    fn delay_moves_entry_to_pend() {
        let ask = Command::ask(x(RelOp::Gt, 0), Command::Nil);
        let mut c = config(Command::par(ask, Command::tell(x(RelOp::Eq, 3))));
        let mut o = Oracle::internal();
        c.step(&mut o).unwrap();
        c.tick().unwrap();
        assert_eq!(c.sim.pqueue.len(), 2);
        let before = c.sim.pqueue.len();
        let ev = c.step(&mut o).unwrap();
        assert_eq!(ev.rule, Rule::Delay);
        assert!(!c.sim.flag);
        assert_eq!(c.sim.pqueue.len(), before - 1);
        assert_eq!(c.sim.pend.len(), 1);
        assert!(c.objects.processes.contains_key(&ev.uid));
        let (t, _) = c.run(&mut o).unwrap();
        assert_eq!(t, Termination::Quiescent);
        assert!(c.objects.processes.is_empty());
        assert_eq!(c.sim.gtime, Time::from_integer(1));
    }

    #[test]
    fn tick_shifts_remaining_entries() {
        let mut c = config(Command::Nil);
        c.sim.pqueue = Heap::empty()
            .insert(ScheduleEntry::new(Time::from_integer(1), 1))
            .insert(ScheduleEntry::new(Time::from_integer(3), 2));
        c.sim.pend = Heap::singleton(ScheduleEntry::new(Time::zero(), 3));
        c.sim.flag = true;
        c.tick().unwrap();
        assert_eq!(c.sim.gtime, Time::from_integer(1));
        let mut left: Vec<(u64, Time)> = c
            .sim
            .pqueue
            .entries()
            .into_iter()
            .map(|e| (e.uid, e.time))
            .collect();
        left.sort_by_key(|e| e.0);
        assert_eq!(left, vec![(2, Time::from_integer(2)), (3, Time::zero())]);
        assert!(c.sim.pend.is_empty());
    }

    #[test]
    fn parallel_uids_and_insert_order() {
        let mut c = config(Command::par(
            Command::tell(Formula::bool_var("a")),
            Command::tell(Formula::bool_var("b")),
        ));
        let mut o = Oracle::internal();
        let ev = c.step(&mut o).unwrap();
        let uids: Vec<u64> = ev.spawned.iter().map(|s| s.uid).collect();
        assert_eq!(uids, vec![2, 3]);
        assert_eq!(
            c.objects.processes[&2].command,
            Command::tell(Formula::bool_var("a"))
        );
        assert_eq!(c.sim.next_id, 4);
        // equal times: the right operand's entry went in first, and merge
        // keeps the second heap's root on ties
        c.tick().unwrap();
        assert_eq!(c.sim.pqueue.find_min().unwrap().uid, 3);
    }

    #[test]
    fn space_creates_agent_and_registers_child() {
        let mut c = config(Command::tell(Formula::bool_var("p")).inside(4));
        let mut o = Oracle::internal();
        let (t, trace) = c.run(&mut o).unwrap();
        assert_eq!(t, Termination::Quiescent);
        let inner: AgentId = "4.root".parse().unwrap();
        assert_eq!(c.store(&inner), Formula::bool_var("p"));
        assert_eq!(c.objects.children(&AgentId::root()), [4].into());
        assert!(c.sim.maps.tell.contains_key(&inner));
        let rules: Vec<Rule> = trace
            .iter()
            .map(|e| e.rule)
            .filter(|r| *r != Rule::Tick)
            .collect();
        assert_eq!(rules, vec![Rule::Space, Rule::Tell, Rule::TellSet]);
    }

    #[test]
    fn extrusion_needs_matching_index() {
        let ok = Command::tell(Formula::bool_var("p")).outside(1).inside(1);
        let mut c = config(ok);
        c.run(&mut Oracle::internal()).unwrap();
        assert_eq!(c.store(&AgentId::root()), Formula::bool_var("p"));

        let bad = Command::tell(Formula::bool_var("p")).outside(2).inside(1);
        let mut c = config(bad);
        let (t, trace) = c.run(&mut Oracle::internal()).unwrap();
        assert_eq!(t, Termination::Quiescent);
        assert!(trace.iter().any(|e| e.rule == Rule::Blocked));
        assert_eq!(c.quiescence_violations().len(), 1);
    }

    #[test]
    fn recursion_unfolds_once_per_firing() {
        let m = Command::mu(
            1,
            Command::par(
                Command::tell(x(RelOp::Gt, 0)),
                Command::ask(x(RelOp::Gt, 5), Command::Var(1)),
            ),
        );
        let mut c = config(m);
        let (t, _) = c.run(&mut Oracle::internal()).unwrap();
        assert_eq!(t, Termination::Quiescent);
        assert_eq!(c.objects.processes.len(), 1);
        assert!(c.quiescence_violations().is_empty());
    }

    #[test]
    fn unguarded_loop_hits_step_limit() {
        let mut c = config(Command::mu(1, Command::Var(1)));
        c.sim.max_steps = 50;
        let (t, trace) = c.run(&mut Oracle::internal()).unwrap();
        assert_eq!(t, Termination::StepLimit);
        assert_eq!(
            trace.iter().filter(|e| e.rule == Rule::Recursion).count(),
            50
        );
    }

    #[test]
    fn time_limit_stops_before_the_tick() {
        let mut c = config(Command::par(
            Command::tell(Formula::bool_var("a")),
            Command::Nil,
        ));
        c.sim.max_time = Time::ratio(1, 2);
        let (t, _) = c.run(&mut Oracle::internal()).unwrap();
        assert_eq!(t, Termination::TimeLimit);
        assert_eq!(c.sim.gtime, Time::zero());
    }

    #[test]
    fn exclusive_walk_draws() {
        let maps = unit_maps();
        let a = Command::tell(Formula::bool_var("a"));
        let b = Command::tell(Formula::bool_var("b"));
        let single = Choice::exclusive(vec![a.clone()], vec![1.0]).unwrap();
        let c = SampleCounter::new(3);
        let (i, t, next) = select_exclusive(&single, &AgentId::root(), &maps, c);
        assert_eq!((i, t, next), (0, Time::from_integer(1), c));
        let certain = Choice::exclusive(vec![a, b], vec![1.0, 0.0]).unwrap();
        for seed in 0..100 {
            let (i, _, next) =
                select_exclusive(&certain, &AgentId::root(), &maps, SampleCounter::new(seed));
            assert_eq!(i, 0);
            assert_eq!(next.index, 1);
        }
    }

    #[test]
    fn independent_extremes() {
        let maps = unit_maps();
        let cmds: Vec<Command> = (0..3)
            .map(|i| Command::tell(Formula::bool_var(format!("b{i}"))))
            .collect();
        let none = Choice::independent(cmds.clone(), vec![0.0; 3]).unwrap();
        let all = Choice::independent(cmds, vec![1.0; 3]).unwrap();
        let c = SampleCounter::new(9);
        let (chosen, next) = select_independent(&none, &AgentId::root(), &maps, c);
        assert!(chosen.is_empty());
        assert_eq!(next.index, 3);
        let (chosen, _) = select_independent(&all, &AgentId::root(), &maps, c);
        assert_eq!(
            chosen.iter().map(|x| x.0).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn watch_found_and_stuck() {
        let target = Formula::bool_var("bad");
        let w = Command::watch(Command::tell(Formula::bool_var("warn")), target.clone());
        let late = Command::ask(target.clone(), w.clone());
        let mut c = config(Command::par(Command::tell(target), late));
        c.run(&mut Oracle::internal()).unwrap();
        assert_eq!(
            c.store(&AgentId::root()),
            Formula::and(Formula::bool_var("bad"), Formula::bool_var("warn"))
        );

        let mut c = config(w);
        let (t, trace) = c.run(&mut Oracle::internal()).unwrap();
        assert_eq!(t, Termination::Quiescent);
        assert_eq!(trace[0].rule, Rule::SearchStuck);
    }

    #[test]
    fn ask_penalty_uses_store_size() {
        let guard = Formula::bool_var("go");
        let mut c = config(Command::ask(
            guard.clone(),
            Command::tell(Formula::bool_var("done")),
        ));
        c.objects.agent_mut(&AgentId::root()).store = Formula::and(guard, Formula::bool_var("x"));
        c.sim.factor = Time::ratio(1, 2);
        let ev = c.step(&mut Oracle::internal()).unwrap();
        // tell draw 1, ask draw 1, size 3 * 1/2
        assert_eq!(ev.spawned[0].time, Time::ratio(7, 2));
    }

    #[test]
    fn audit_holds_between_ticks() {
        let cmd = Command::par(
            Command::ask(x(RelOp::Gt, 1), Command::tell(x(RelOp::Gt, 2))),
            Command::par(
                Command::tell(x(RelOp::Gt, 1)).inside(2),
                Command::tell(x(RelOp::Eq, 5)),
            ),
        );
        let mut c = config(cmd);
        let mut o = Oracle::internal();
        c.audit().unwrap();
        while !c.sim.pqueue.is_empty() {
            c.step(&mut o).unwrap();
            if c.sim.flag {
                c.tick().unwrap();
            }
            c.audit().unwrap();
        }
    }
}
