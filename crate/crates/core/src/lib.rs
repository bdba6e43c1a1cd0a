//! Interpreter, discrete-event simulator and statistical analyzer for a
//! stochastic, spatial concurrent constraint calculus.
//!
//! Agents live in a tree of spaces, each holding a constraint store.
//! Processes post constraints ([`process::Command::Tell`]), block on
//! entailment ([`process::Command::Ask`]), move between spaces and make
//! probabilistic choices; every action takes a sampled amount of time.
//! [`engine`] executes a model one rule at a time, [`analysis`] estimates
//! expectations by repeated seeded runs and scans runs for states of
//! interest.

pub mod analysis;
pub mod casestudies;
pub mod constraints;
pub mod engine;
pub mod process;
pub mod report;
pub mod scheduler;
pub mod space;
pub mod stochastic;
pub mod system;

// The guide's code listings run as doctests, one module per chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/constraints.md")]
    mod constraints {}
    #[doc = include_str!("../../../book/src/processes.md")]
    mod processes {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/estimation.md")]
    mod estimation {}
    #[doc = include_str!("../../../book/src/scanning.md")]
    mod scanning {}
    #[doc = include_str!("../../../book/src/case-studies.md")]
    mod case_studies {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
