//! Ready-made systems: nested containers, hierarchical task assignment,
//! knowledge flowing up a chain of spaces, and a robot searching a
//! randomly generated hierarchy.
//!
//! The first three are the spec files under `examples/`, embedded at
//! compile time.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::constraints::{Formula, Oracle, RelOp};
use crate::engine::{MapKind, TimeMaps};
use crate::process::Command;
use crate::space::AgentId;
use crate::stochastic::{sample_prob, SampleCounter, StochasticExpression, Time};
use crate::system::{parse_spec, AgentDecl, ProcessDecl, SystemSpec};

pub const CONTAINER_SPEC: &str = include_str!("../examples/container.sscc");
pub const TASKS_SPEC: &str = include_str!("../examples/tasks.sscc");
pub const INFERENCE_SPEC: &str = include_str!("../examples/inference.sscc");
pub const ROBOT_SPEC: &str = include_str!("../examples/robot.sscc");

fn embedded(text: &str) -> SystemSpec {
    parse_spec(text).expect("embedded spec files parse")
}

/// Nested containers with constant per-space durations.
pub fn fixture_container() -> SystemSpec {
    embedded(CONTAINER_SPEC)
}

/// Elapsed time of the container system when its four duration tables
/// are read as tell, ask, space and extrusion times, in that order.
pub fn container_elapsed() -> Time {
    Time::ratio(13, 5)
}

/// The container's four duration tables, in the order they are usually
/// listed, as `(location, value)` pairs.
pub fn container_time_tables() -> [Vec<(AgentId, Time)>; 4] {
    let spec = fixture_container();
    MapKind::ALL.map(|k| {
        spec.maps
            .get(k)
            .iter()
            .map(|(loc, e)| match e {
                StochasticExpression::Constant(t) => (loc.clone(), t.clone()),
                other => unreachable!("container durations are constant, found {other}"),
            })
            .collect()
    })
}

/// Runs the container system once for every way of assigning its four
/// duration tables to the four command kinds. `assignment[i]` is the map
/// kind that receives table `i`.
pub fn container_assignments() -> Vec<([MapKind; 4], Time)> {
    let tables = container_time_tables();
    let mut out = Vec::new();
    for assignment in permutations(MapKind::ALL) {
        let mut spec = fixture_container();
        spec.maps = TimeMaps::default();
        for (table, kind) in tables.iter().zip(assignment) {
            for (loc, t) in table {
                spec.maps
                    .get_mut(kind)
                    .insert(loc.clone(), StochasticExpression::Constant(t.clone()));
            }
        }
        let mut c = spec.configuration().expect("container has a max time");
        c.run(&mut Oracle::internal()).expect("container runs");
        out.push((assignment, c.sim.gtime.clone()));
    }
    out
}

fn permutations<T: Copy>(items: [T; 4]) -> Vec<[T; 4]> {
    let mut out = Vec::new();
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let idx = [a, b, c, d];
                    let distinct: BTreeSet<usize> = idx.into_iter().collect();
                    if distinct.len() == 4 {
                        out.push(idx.map(|i| items[i]));
                    }
                }
            }
        }
    }
    out
}

/// Task assignment with an exclusive and an independent choice.
pub fn fixture_tasks() -> SystemSpec {
    embedded(TASKS_SPEC)
}

/// The knowledge chain, starting from the given root store.
pub fn fixture_inference(root_store: Formula) -> SystemSpec {
    let mut spec = embedded(INFERENCE_SPEC);
    if root_store != Formula::True {
        spec.agents.push(AgentDecl {
            id: AgentId::root(),
            store: root_store,
            children: BTreeSet::new(),
        });
    }
    spec
}

/// Seeds used for scans of the knowledge chain.
pub fn inference_seeds() -> Vec<u64> {
    (13..13 + 32).collect()
}

/// Where the unwanted post is planted.
#[derive(Debug, Clone, PartialEq)]
pub enum PostPlacement {
    /// The deepest space of the guaranteed full-depth path.
    Deepest,
    /// A leaf chosen uniformly with the generator's seed.
    RandomLeaf,
    At(AgentId),
}

/// How to build a random hierarchy for the robot.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyGenSpec {
    /// Number of levels, root included.
    pub depth: usize,
    /// Child count per space, rounded to the nearest natural.
    pub branching: StochasticExpression,
    pub placement: PostPlacement,
    pub seed: u64,
    pub max_spaces: usize,
    pub maps: TimeMaps,
}

impl HierarchyGenSpec {
    pub fn new(depth: usize, seed: u64) -> HierarchyGenSpec {
        HierarchyGenSpec {
            depth,
            branching: StochasticExpression::Unif { lo: 0.0, hi: 3.0 },
            placement: PostPlacement::Deepest,
            seed,
            max_spaces: 15,
            maps: default_robot_maps(),
        }
    }
}

fn default_robot_maps() -> TimeMaps {
    let mut maps = TimeMaps::default();
    let root = AgentId::root();
    maps.tell
        .insert(root.clone(), StochasticExpression::default_norm());
    maps.ask.insert(
        root.clone(),
        StochasticExpression::Norm {
            mean: 1.2,
            stdev: 0.2,
        },
    );
    maps.space.insert(
        root.clone(),
        StochasticExpression::Norm {
            mean: 0.5,
            stdev: 0.2,
        },
    );
    maps.extrusion.insert(
        root,
        StochasticExpression::Norm {
            mean: 0.5,
            stdev: 0.2,
        },
    );
    maps
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenError {
    #[error("a hierarchy needs at least one level")]
    ZeroDepth,
    #[error("{max} spaces cannot hold a path of depth {depth}")]
    TooSmall { depth: usize, max: usize },
    #[error("post location {0} is not in the generated hierarchy")]
    UnknownPlacement(AgentId),
}

/// The formula an unwanted post makes true.
pub fn unwanted_post() -> Formula {
    Formula::cmp("U", RelOp::Gt, 0)
}

pub fn warning() -> Formula {
    Formula::cmp("Warning", RelOp::Eq, 1)
}

/// The robot: search until the store reports an unwanted post, then warn.
pub fn robot() -> Command {
    Command::watch(Command::tell(warning()), unwanted_post())
}

/// Generates a hierarchy breadth first. A path of the requested depth
/// through first children is always present; other children are added
/// while the space budget lasts.
pub fn generate_hierarchy(
    gen: &HierarchyGenSpec,
) -> Result<BTreeMap<AgentId, BTreeSet<u64>>, GenError> {
    generate(gen).map(|(tree, _)| tree)
}

type Tree = BTreeMap<AgentId, BTreeSet<u64>>;

fn generate(gen: &HierarchyGenSpec) -> Result<(Tree, SampleCounter), GenError> {
    if gen.depth == 0 {
        return Err(GenError::ZeroDepth);
    }
    if gen.max_spaces < gen.depth {
        return Err(GenError::TooSmall {
            depth: gen.depth,
            max: gen.max_spaces,
        });
    }
    let mut counter = SampleCounter::new(gen.seed);
    let mut tree = Tree::new();
    tree.insert(AgentId::root(), BTreeSet::new());
    // spaces on the guaranteed path that are not yet in the tree
    let mut reserved = gen.depth - 1;
    let mut queue = VecDeque::from([(AgentId::root(), true)]);
    while let Some((node, on_spine)) = queue.pop_front() {
        if node.path().len() + 1 >= gen.depth {
            continue;
        }
        let drawn = gen.branching.sample_real(&mut counter).round().max(0.0) as u64;
        let count = if on_spine { drawn.max(1) } else { drawn };
        for i in 0..count {
            let spine_child = on_spine && i == 0;
            if spine_child {
                reserved -= 1;
            } else if tree.len() + reserved >= gen.max_spaces {
                break;
            }
            let child = node.child(i);
            tree.get_mut(&node).expect("parent present").insert(i);
            tree.insert(child.clone(), BTreeSet::new());
            queue.push_back((child, spine_child));
        }
    }
    Ok((tree, counter))
}

/// A generated hierarchy with benign posts everywhere except one space,
/// and the robot starting at root.
pub fn fixture_robot(gen: &HierarchyGenSpec) -> Result<SystemSpec, GenError> {
    let (tree, counter) = generate(gen)?;
    let target = match &gen.placement {
        PostPlacement::Deepest => AgentId::from_path(&vec![0; gen.depth - 1]),
        PostPlacement::At(id) if tree.contains_key(id) => id.clone(),
        PostPlacement::At(id) => return Err(GenError::UnknownPlacement(id.clone())),
        PostPlacement::RandomLeaf => {
            let leaves: Vec<&AgentId> = tree
                .iter()
                .filter(|(_, c)| c.is_empty())
                .map(|(id, _)| id)
                .collect();
            let (q, _) = sample_prob(counter);
            let k = ((q * leaves.len() as f64) as usize).min(leaves.len() - 1);
            leaves[k].clone()
        }
    };
    let agents = tree
        .into_iter()
        .map(|(id, children)| {
            let value = if id == target { 1 } else { 0 };
            AgentDecl {
                store: Formula::cmp("U", RelOp::Eq, value),
                id,
                children,
            }
        })
        .collect();
    Ok(SystemSpec {
        seed: gen.seed,
        factor: Time::ratio(1, 2),
        max_time: Some(Time::from_integer(10_000)),
        maps: gen.maps.clone(),
        agents,
        processes: vec![ProcessDecl {
            location: AgentId::root(),
            command: robot(),
        }],
    })
}

/// The robot spec shipped under `examples/`.
pub fn fixture_robot_example() -> SystemSpec {
    embedded(ROBOT_SPEC)
}

/// Unit-constant durations for every command kind.
pub fn unit_maps() -> TimeMaps {
    TimeMaps::uniform(
        &[AgentId::root()],
        &StochasticExpression::Constant(Time::from_integer(1)),
    )
}
