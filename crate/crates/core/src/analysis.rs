//! Monte-Carlo estimation of run observables and seeded state scans.
//!
//! Both work on a [`Model`]: a system description plus the run options
//! that are not part of the description itself. Runs are independent and
//! use consecutive seeds starting at the description's seed, so results
//! are reproducible whatever the thread count.

use std::fmt;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::constraints::{ConstraintError, Formula, Oracle, SmtConfig};
use crate::engine::{Configuration, EngineError, Termination, TraceEvent, DEFAULT_MAX_STEPS};
use crate::space::AgentId;
use crate::system::{SpecError, SystemSpec};

#[derive(Debug, Clone)]
pub struct Model {
    pub spec: SystemSpec,
    /// Expand watch searches with equal weights instead of normalized
    /// random draws.
    pub uniform_watch: bool,
    pub max_steps: u64,
    pub solver: Option<SmtConfig>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("seed {seed}: {source}")]
    Engine {
        seed: u64,
        #[source]
        source: EngineError,
    },
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("no convergence after {} samples (half width {})", .0.samples, .0.half_width)]
    NotConverged(Box<EstimationResult>),
}

/// One finished simulation.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub seed: u64,
    pub termination: Termination,
    pub final_state: Configuration,
    pub trace: Vec<TraceEvent>,
}

impl Model {
    pub fn new(spec: SystemSpec) -> Model {
        Model {
            spec,
            uniform_watch: false,
            max_steps: DEFAULT_MAX_STEPS,
            solver: None,
        }
    }

    pub fn oracle(&self) -> Oracle {
        match &self.solver {
            Some(cfg) => Oracle::with_solver(cfg.clone()),
            None => Oracle::internal(),
        }
    }

    /// The initial configuration with the sampling counter at `seed`.
    pub fn configuration(&self, seed: u64) -> Result<Configuration, AnalysisError> {
        let mut spec = self.spec.clone();
        spec.seed = seed;
        let mut c = spec.configuration()?;
        c.sim.uniform_watch = self.uniform_watch;
        c.sim.max_steps = self.max_steps;
        Ok(c)
    }

    pub fn simulate(&self, seed: u64) -> Result<RunOutcome, AnalysisError> {
        let mut c = self.configuration(seed)?;
        let mut oracle = self.oracle();
        let (termination, trace) = c
            .run(&mut oracle)
            .map_err(|source| AnalysisError::Engine { seed, source })?;
        Ok(RunOutcome {
            seed,
            termination,
            final_state: c,
            trace,
        })
    }
}

/// Which agents a store observable looks at.
#[derive(Debug, Clone, PartialEq)]
pub enum AgentPattern {
    Any,
    Exact(AgentId),
}

pub type Extractor = Arc<dyn Fn(&Configuration) -> f64 + Send + Sync>;

/// A real value read off a terminal configuration.
#[derive(Clone)]
pub enum Observable {
    /// The global clock at termination.
    ExecutionTime,
    /// 1 when a matching agent's store entails the formula, else 0.
    StorePredicateHolds(AgentPattern, Formula),
    AgentCount,
    UserTagged(String, Extractor),
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observable::ExecutionTime => write!(f, "ExecutionTime"),
            Observable::StorePredicateHolds(p, g) => write!(f, "StorePredicateHolds({p:?}, {g})"),
            Observable::AgentCount => write!(f, "AgentCount"),
            Observable::UserTagged(name, _) => write!(f, "UserTagged({name})"),
        }
    }
}

impl Observable {
    pub fn evaluate(&self, c: &Configuration, oracle: &mut Oracle) -> Result<f64, ConstraintError> {
        match self {
            Observable::ExecutionTime => Ok(c.sim.gtime.to_f64()),
            Observable::AgentCount => Ok(c.objects.agents.len() as f64),
            Observable::UserTagged(_, extract) => Ok(extract(c)),
            Observable::StorePredicateHolds(pattern, f) => {
                for a in c.objects.agents.values() {
                    let selected = match pattern {
                        AgentPattern::Any => true,
                        AgentPattern::Exact(id) => *id == a.id,
                    };
                    if selected && oracle.entails(&a.store, f)? {
                        return Ok(1.0);
                    }
                }
                Ok(0.0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub mean: f64,
    pub half_width: f64,
    pub samples: usize,
    pub alpha: f64,
    pub delta: f64,
}

/// Stopping parameters: runs are added `batch` at a time until the
/// `(1 - alpha)` interval is at most `delta` wide or `max_samples` runs
/// have been made.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateParams {
    pub alpha: f64,
    pub delta: f64,
    pub batch: usize,
    pub max_samples: usize,
}

impl Default for EstimateParams {
    fn default() -> EstimateParams {
        EstimateParams {
            alpha: 0.05,
            delta: 0.1,
            batch: 30,
            max_samples: 10_000,
        }
    }
}

impl EstimateParams {
    fn validate(&self) -> Result<(), AnalysisError> {
        let bad = |m: &str| Err(AnalysisError::Parameter(m.to_string()));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie strictly between 0 and 1");
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad("delta must be positive");
        }
        if self.batch < 2 {
            return bad("batch must be at least 2");
        }
        if self.max_samples < self.batch {
            return bad("max_samples must be at least one batch");
        }
        Ok(())
    }
}

/// Sample mean and Student-t half width of the `(1 - alpha)` interval.
pub fn confidence_interval(samples: &[f64], alpha: f64) -> (f64, f64) {
    let n = samples.len();
    // identical samples give an exact mean and zero width, free of
    // summation rounding
    if n >= 2 && samples.iter().all(|x| *x == samples[0]) {
        return (samples[0], 0.0);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::INFINITY);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("degrees of freedom are positive")
        .inverse_cdf(1.0 - alpha / 2.0);
    (mean, t * (var / n as f64).sqrt())
}

/// Sequential estimation over an arbitrary sample source; sample `i` is
/// `sample(i)`. Batches are evaluated in parallel but aggregated in index
/// order.
pub fn estimate_with<F>(
    params: EstimateParams,
    sample: F,
) -> Result<EstimationResult, AnalysisError>
where
    F: Fn(u64) -> Result<f64, AnalysisError> + Sync,
{
    params.validate()?;
    let mut values: Vec<f64> = Vec::new();
    loop {
        let start = values.len() as u64;
        let take = params.batch.min(params.max_samples - values.len()) as u64;
        let batch: Result<Vec<f64>, AnalysisError> =
            (start..start + take).into_par_iter().map(&sample).collect();
        values.extend(batch?);
        let (mean, half_width) = confidence_interval(&values, params.alpha);
        let result = EstimationResult {
            mean,
            half_width,
            samples: values.len(),
            alpha: params.alpha,
            delta: params.delta,
        };
        if 2.0 * half_width <= params.delta {
            return Ok(result);
        }
        if values.len() >= params.max_samples {
            return Err(AnalysisError::NotConverged(Box::new(result)));
        }
    }
}

/// Accepts finished runs from concurrently running simulations.
pub trait TraceSink: Sync {
    fn submit(&self, run: &RunOutcome);
}

/// Keeps submitted runs in memory, in submission order.
#[derive(Debug, Default)]
pub struct MemorySink {
    runs: Mutex<Vec<RunOutcome>>,
}

impl MemorySink {
    pub fn new() -> MemorySink {
        MemorySink::default()
    }

    /// Submitted runs sorted by seed.
    pub fn into_runs(self) -> Vec<RunOutcome> {
        let mut runs = self.runs.into_inner().unwrap_or_else(|e| e.into_inner());
        runs.sort_by_key(|r| r.seed);
        runs
    }
}

impl TraceSink for MemorySink {
    fn submit(&self, run: &RunOutcome) {
        self.runs
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(run.clone());
    }
}

/// Estimates `E[observable]` over runs seeded `spec.seed`, `spec.seed + 1`, ...
pub fn estimate(
    model: &Model,
    observable: &Observable,
    params: EstimateParams,
) -> Result<EstimationResult, AnalysisError> {
    estimate_into(model, observable, params, None)
}

pub fn estimate_into(
    model: &Model,
    observable: &Observable,
    params: EstimateParams,
    sink: Option<&dyn TraceSink>,
) -> Result<EstimationResult, AnalysisError> {
    let base = model.spec.seed;
    estimate_with(params, |i| {
        let seed = base.wrapping_add(i);
        let run = model.simulate(seed)?;
        let mut oracle = model.oracle();
        let v = observable.evaluate(&run.final_state, &mut oracle)?;
        if let Some(sink) = sink {
            sink.submit(&run);
        }
        Ok(v)
    })
}

pub type StoreTest =
    Arc<dyn Fn(&Formula, &mut Oracle) -> Result<bool, ConstraintError> + Send + Sync>;
pub type StorePairTest =
    Arc<dyn Fn(&Formula, &Formula, &mut Oracle) -> Result<bool, ConstraintError> + Send + Sync>;

/// A property of a single state, checked at every agent (or ordered pair
/// of distinct agents).
#[derive(Clone)]
pub enum StatePredicate {
    /// Some store is unsatisfiable.
    InconsistentStore,
    StoreEntails(Formula),
    /// Two distinct agents hold mutually entailing stores, neither `true`.
    EquivalentStores,
    Custom(StoreTest),
    CustomPair(StorePairTest),
}

impl fmt::Debug for StatePredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StatePredicate::InconsistentStore => write!(f, "InconsistentStore"),
            StatePredicate::StoreEntails(g) => write!(f, "StoreEntails({g})"),
            StatePredicate::EquivalentStores => write!(f, "EquivalentStores"),
            StatePredicate::Custom(_) => write!(f, "Custom"),
            StatePredicate::CustomPair(_) => write!(f, "CustomPair"),
        }
    }
}

impl StatePredicate {
    /// The agents (single ids or pairs) at which the predicate holds.
    pub fn witnesses(
        &self,
        c: &Configuration,
        oracle: &mut Oracle,
    ) -> Result<Vec<Vec<AgentId>>, ConstraintError> {
        let agents: Vec<_> = c.objects.agents.values().collect();
        let mut out = Vec::new();
        match self {
            StatePredicate::InconsistentStore
            | StatePredicate::StoreEntails(_)
            | StatePredicate::Custom(_) => {
                for a in &agents {
                    let hit = match self {
                        StatePredicate::InconsistentStore => oracle.check_unsat(&a.store)?,
                        StatePredicate::StoreEntails(f) => oracle.entails(&a.store, f)?,
                        StatePredicate::Custom(test) => test(&a.store, oracle)?,
                        _ => unreachable!(),
                    };
                    if hit {
                        out.push(vec![a.id.clone()]);
                    }
                }
            }
            StatePredicate::EquivalentStores | StatePredicate::CustomPair(_) => {
                for (i, a) in agents.iter().enumerate() {
                    for b in &agents[i + 1..] {
                        let hit = match self {
                            StatePredicate::EquivalentStores => {
                                a.store != Formula::True
                                    && b.store != Formula::True
                                    && oracle.entails(&a.store, &b.store)?
                                    && oracle.entails(&b.store, &a.store)?
                            }
                            StatePredicate::CustomPair(test) => test(&a.store, &b.store, oracle)?,
                            _ => unreachable!(),
                        };
                        if hit {
                            out.push(vec![a.id.clone(), b.id.clone()]);
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// A visited state satisfying a scan predicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanMatch {
    pub seed: u64,
    /// Index into the run's trace of the event that produced the state.
    pub event_index: usize,
    pub gtime: f64,
    pub witnesses: Vec<Vec<AgentId>>,
    /// Every store of the state, by agent id.
    pub stores: Vec<(AgentId, Formula)>,
}

/// Runs each seed and checks the predicate after every rule firing.
/// A match is a witness for testing, not a reachability verdict: other
/// seeds may visit other states.
pub fn scan(
    model: &Model,
    seeds: &[u64],
    predicate: &StatePredicate,
) -> Result<Vec<ScanMatch>, AnalysisError> {
    let per_seed: Result<Vec<Vec<ScanMatch>>, AnalysisError> = seeds
        .par_iter()
        .map(|&seed| scan_seed(model, seed, predicate))
        .collect();
    Ok(per_seed?.into_iter().flatten().collect())
}

fn scan_seed(
    model: &Model,
    seed: u64,
    predicate: &StatePredicate,
) -> Result<Vec<ScanMatch>, AnalysisError> {
    let mut c = model.configuration(seed)?;
    let mut oracle = model.oracle();
    let mut check_oracle = model.oracle();
    let mut matches = Vec::new();
    let mut failure = None;
    let mut index = 0;
    c.run_observed(&mut oracle, &mut |state, ev| {
        let i = index;
        index += 1;
        if failure.is_some() || ev.rule == crate::engine::Rule::Tick {
            return;
        }
        match predicate.witnesses(state, &mut check_oracle) {
            Ok(w) if !w.is_empty() => matches.push(ScanMatch {
                seed,
                event_index: i,
                gtime: state.sim.gtime.to_f64(),
                witnesses: w,
                stores: state
                    .objects
                    .agents
                    .values()
                    .map(|a| (a.id.clone(), a.store.clone()))
                    .collect(),
            }),
            Ok(_) => {}
            Err(e) => failure = Some(e),
        }
    })
    .map_err(|source| AnalysisError::Engine { seed, source })?;
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(matches),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::RelOp;
    use crate::system::parse_spec;

    fn model(text: &str) -> Model {
        Model::new(parse_spec(text).unwrap())
    }

    #[test]
    fn zero_variance_stops_at_first_batch() {
        let m = model("system { maxtime 100 timemap tell root -> Const(3/2) process @ root : tell(a) || tell(b) }");
        let params = EstimateParams {
            alpha: 0.05,
            delta: 0.1,
            batch: 4,
            max_samples: 100,
        };
        let r = estimate(&m, &Observable::ExecutionTime, params).unwrap();
        assert_eq!((r.samples, r.half_width), (4, 0.0));
        assert_eq!(r.mean, 1.5);
    }

    #[test]
    fn parameters_are_checked() {
        let m = model("system { maxtime 1 }");
        for params in [
            EstimateParams {
                alpha: 1.0,
                ..EstimateParams::default()
            },
            EstimateParams {
                delta: 0.0,
                ..EstimateParams::default()
            },
            EstimateParams {
                batch: 1,
                ..EstimateParams::default()
            },
        ] {
            assert!(matches!(
                estimate(&m, &Observable::ExecutionTime, params),
                Err(AnalysisError::Parameter(_))
            ));
        }
    }

    #[test]
    fn non_convergence_keeps_partial_result() {
        let params = EstimateParams {
            alpha: 0.05,
            delta: 1e-6,
            batch: 10,
            max_samples: 40,
        };
        let err = estimate_with(params, |i| Ok((i % 2) as f64)).unwrap_err();
        let AnalysisError::NotConverged(r) = err else {
            panic!()
        };
        assert_eq!(r.samples, 40);
        assert_eq!(r.mean, 0.5);
    }

    #[test]
    fn interval_matches_textbook_value() {
        // mean 3, sample sd sqrt(2.5), t(0.975, 4) = 2.7764451
        let (mean, hw) = confidence_interval(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.05);
        assert_eq!(mean, 3.0);
        assert!((hw - 2.7764451 * (2.5f64 / 5.0).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn store_observable_and_agent_count() {
        let m = model("system { maxtime 10 timemap tell root -> Const(1) process @ root : tell(X == 4) in 2 }");
        let run = m.simulate(0).unwrap();
        let mut o = Oracle::internal();
        let two: AgentId = "2.root".parse().unwrap();
        let f = Formula::cmp("X", RelOp::Gt, 3);
        assert_eq!(
            Observable::StorePredicateHolds(AgentPattern::Exact(two), f.clone())
                .evaluate(&run.final_state, &mut o),
            Ok(1.0)
        );
        assert_eq!(
            Observable::StorePredicateHolds(AgentPattern::Exact(AgentId::root()), f)
                .evaluate(&run.final_state, &mut o),
            Ok(0.0)
        );
        assert_eq!(
            Observable::AgentCount.evaluate(&run.final_state, &mut o),
            Ok(2.0)
        );
    }

    #[test]
    fn scan_reports_pairs_once() {
        let m = model(
            "system { maxtime 10 timemap tell root -> Const(1)
               process @ root : tell(X == 1) in 1 || tell(X == 1) in 2 }",
        );
        let hits = scan(&m, &[0], &StatePredicate::EquivalentStores).unwrap();
        assert!(!hits.is_empty());
        let pair: Vec<AgentId> = vec!["1.root".parse().unwrap(), "2.root".parse().unwrap()];
        assert_eq!(hits.last().unwrap().witnesses, vec![pair]);
    }

    #[test]
    fn sink_collects_every_run() {
        let m =
            model("system { maxtime 10 timemap tell root -> Unif(1, 2) process @ root : tell(a) }");
        let sink = MemorySink::new();
        let params = EstimateParams {
            alpha: 0.05,
            delta: 10.0,
            batch: 6,
            max_samples: 60,
        };
        let r = estimate_into(&m, &Observable::ExecutionTime, params, Some(&sink)).unwrap();
        let runs = sink.into_runs();
        assert_eq!(runs.len(), r.samples);
        assert_eq!(
            runs.iter().map(|r| r.seed).collect::<Vec<_>>(),
            (0..r.samples as u64).collect::<Vec<_>>()
        );
    }
}
