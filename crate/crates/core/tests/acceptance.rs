//! Acceptance run: every criterion at its pinned tolerance, one PASS/FAIL
//! line each. Exits non-zero when any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{brute_force_sat, random_formula, ListQueue, Rng};
use sscc::analysis::{
    estimate, estimate_with, scan, AnalysisError, EstimateParams, Model, Observable, StatePredicate,
};
use sscc::casestudies::{
    container_assignments, container_elapsed, fixture_container, fixture_inference, fixture_robot,
    fixture_tasks, inference_seeds, warning, HierarchyGenSpec,
};
use sscc::constraints::{check_sat, Formula, Oracle, RelOp, Verdict};
use sscc::engine::{Configuration, MapKind, Rule, Termination, TraceEvent};
use sscc::report::write_run;
use sscc::scheduler::{Heap, ScheduleEntry};
use sscc::space::AgentId;
use sscc::stochastic::Time;
use sscc::system::{parse_spec, SystemSpec};

type Outcome = Result<String, String>;

fn aid(s: &str) -> AgentId {
    s.parse().unwrap()
}

fn equivalent(a: &Formula, b: &Formula) -> bool {
    let mut o = Oracle::internal();
    o.entails(a, b).unwrap() && o.entails(b, a).unwrap()
}

fn run_spec(spec: &SystemSpec) -> (Termination, Configuration, Vec<TraceEvent>) {
    let mut c = spec.configuration().unwrap();
    let (t, trace) = c.run(&mut Oracle::internal()).unwrap();
    (t, c, trace)
}

fn with_seed(mut spec: SystemSpec, seed: u64) -> SystemSpec {
    spec.seed = seed;
    spec
}

fn heap_correctness() -> Outcome {
    let mut rng = Rng::new(0x5eed);
    let mut ops = 0u64;
    for seq in 0..10_000u64 {
        let mut heap: Heap = Heap::empty();
        let mut list = ListQueue::default();
        let mut uid = 0u64;
        for _ in 0..(5 + rng.below(30)) {
            ops += 1;
            match rng.below(10) {
                0..=4 => {
                    let t = rng.below(40);
                    heap = heap.insert(ScheduleEntry::new(Time::from_integer(t), uid));
                    list.insert(t, uid);
                    uid += 1;
                }
                5 | 6 => {
                    if let Ok(min) = heap.find_min() {
                        let t: u64 = min.time.as_rational().to_integer().try_into().unwrap();
                        if Some(t) != list.min_time() || !list.remove(t, min.uid) {
                            return Err(format!(
                                "sequence {seq}: find_min {t} disagrees with the list"
                            ));
                        }
                        heap = heap.delete_min().unwrap();
                    }
                }
                7 | 8 => {
                    let mut other: Heap = Heap::empty();
                    let mut other_list = ListQueue::default();
                    for _ in 0..rng.below(6) {
                        let t = rng.below(40);
                        other = other.insert(ScheduleEntry::new(Time::from_integer(t), uid));
                        other_list.insert(t, uid);
                        uid += 1;
                    }
                    heap = if rng.below(2) == 0 {
                        Heap::merge(&heap, &other)
                    } else {
                        Heap::merge(&other, &heap)
                    };
                    list.merge(&other_list);
                }
                _ => {
                    let d = rng.below(10);
                    heap = heap.delta(&Time::from_integer(d));
                    list.delta(d);
                }
            }
            heap.audit().map_err(|e| format!("sequence {seq}: {e}"))?;
        }
        let mut drained: Vec<u64> = Vec::new();
        while let Ok(min) = heap.find_min() {
            drained.push(min.time.as_rational().to_integer().try_into().unwrap());
            heap = heap.delete_min().unwrap();
        }
        if drained != list.sorted_times() {
            return Err(format!(
                "sequence {seq}: extraction {drained:?} vs sorted {:?}",
                list.sorted_times()
            ));
        }
    }
    Ok(format!("10000 sequences, {ops} operations"))
}

fn entailment_oracle() -> Outcome {
    let mut rng = Rng::new(0xf0f0);
    let mut sat = 0;
    for i in 0..10_000 {
        let atoms = 1 + rng.below(4) as usize;
        let f = random_formula(&mut rng, atoms, -8, 8);
        let got = check_sat(&f).map_err(|e| format!("formula {i} `{f}`: {e}"))?;
        let expected = brute_force_sat(&f);
        if (got == Verdict::Sat) != expected || got == Verdict::Unknown {
            return Err(format!(
                "formula {i} `{f}`: procedure {got:?}, enumeration {expected}"
            ));
        }
        sat += expected as usize;
    }
    Ok(format!("10000/10000 agree ({sat} sat)"))
}

fn container() -> Outcome {
    let (t, c, _) = run_spec(&fixture_container());
    if t != Termination::Quiescent {
        return Err(format!("terminated by {}", t.name()));
    }
    let expected = [
        ("root", Formula::cmp("W", RelOp::Eq, 9)),
        ("0.root", Formula::cmp("X", RelOp::Ge, 11)),
        ("1.root", Formula::True),
        ("2.root", Formula::cmp("Z", RelOp::Ne, 10)),
        (
            "0.1.root",
            Formula::and(
                Formula::cmp("Y", RelOp::Gt, 5),
                Formula::cmp("Y", RelOp::Lt, 10),
            ),
        ),
    ];
    if c.objects.agents.len() != expected.len() {
        return Err(format!(
            "{} agents, expected {}",
            c.objects.agents.len(),
            expected.len()
        ));
    }
    for (id, f) in &expected {
        let store = c.store(&aid(id));
        if !equivalent(&store, f) {
            return Err(format!("{id} holds `{store}`, expected `{f}`"));
        }
    }
    let hits: Vec<String> = container_assignments()
        .into_iter()
        .filter(|(_, t)| *t == container_elapsed())
        .map(|(a, _)| a.iter().map(|k| k.keyword()).collect::<Vec<_>>().join("/"))
        .collect();
    let natural = [
        MapKind::Tell,
        MapKind::Ask,
        MapKind::Space,
        MapKind::Extrusion,
    ]
    .iter()
    .map(|k| k.keyword())
    .collect::<Vec<_>>()
    .join("/");
    if c.sim.gtime != container_elapsed() || !hits.contains(&natural) {
        return Err(format!(
            "elapsed {} ; assignments reaching 13/5: {hits:?}",
            c.sim.gtime
        ));
    }
    Ok(format!(
        "stores match, elapsed {} ; {} of 24 table assignments reach it: {}",
        c.sim.gtime,
        hits.len(),
        hits.join(", ")
    ))
}

struct TaskStats {
    first: usize,
    ind_runs: usize,
    inclusion: [usize; 4],
    runs: Vec<(Termination, Configuration)>,
}

fn task_runs() -> TaskStats {
    let spec = fixture_tasks();
    let mut s = TaskStats {
        first: 0,
        ind_runs: 0,
        inclusion: [0; 4],
        runs: Vec::new(),
    };
    for seed in 0..1000 {
        let (t, c, trace) = run_spec(&with_seed(spec.clone(), seed));
        for ev in &trace {
            match ev.rule {
                Rule::Exclusive if ev.branch == Some(0) => s.first += 1,
                Rule::Independent => {
                    s.ind_runs += 1;
                    for &k in &ev.subset {
                        s.inclusion[k] += 1;
                    }
                }
                _ => {}
            }
        }
        s.runs.push((t, c));
    }
    s
}

fn branch_statistics(s: &TaskStats) -> Outcome {
    let p_first = s.first as f64 / 1000.0;
    let rates: Vec<f64> = s
        .inclusion
        .iter()
        .map(|&n| n as f64 / s.ind_runs as f64)
        .collect();
    let detail = format!(
        "exclusive first {p_first:.3} ; independent {rates:.3?} over {} firings",
        s.ind_runs
    );
    let ok = (p_first - 0.6).abs() <= 0.05 && rates.iter().all(|r| (r - 0.5).abs() <= 0.05);
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn inconsistency() -> Outcome {
    let model = Model::new(fixture_inference(Formula::cmp("X", RelOp::Lt, 5)));
    let matches = scan(
        &model,
        &inference_seeds(),
        &StatePredicate::InconsistentStore,
    )
    .map_err(|e| e.to_string())?;
    let clash = Formula::and(
        Formula::cmp("X", RelOp::Lt, 5),
        Formula::cmp("X", RelOp::Ge, 10),
    );
    let mut o = Oracle::internal();
    let good = matches.iter().find(|m| {
        let root = m
            .stores
            .iter()
            .find(|(id, _)| id.is_root())
            .map(|(_, f)| f.clone())
            .unwrap_or(Formula::True);
        let root_bad = o.check_unsat(&root).unwrap() && o.entails(&root, &clash).unwrap();
        let other_ok = m
            .stores
            .iter()
            .any(|(id, f)| !id.is_root() && !o.check_unsat(f).unwrap());
        root_bad && other_ok
    });
    match good {
        Some(m) => Ok(format!(
            "{} matching states ; seed {} at time {:.2}: {}",
            matches.len(),
            m.seed,
            m.gtime,
            m.stores
                .iter()
                .map(|(id, f)| format!("{id}: {f}"))
                .collect::<Vec<_>>()
                .join(" | ")
        )),
        None => Err(format!(
            "{} matches, none with an unsat root beside a satisfiable store",
            matches.len()
        )),
    }
}

fn knowledge_inference() -> Outcome {
    let model = Model::new(fixture_inference(Formula::True));
    let target = Formula::cmp("Y", RelOp::Gt, 9);
    let matches = scan(
        &model,
        &inference_seeds(),
        &StatePredicate::StoreEntails(target),
    )
    .map_err(|e| e.to_string())?;
    let expected = Formula::and(
        Formula::cmp("W", RelOp::Eq, 5),
        Formula::cmp("Y", RelOp::Eq, 32),
    );
    let deep = aid("2.1.root");
    let hit = matches.iter().find(|m| {
        m.witnesses.contains(&vec![deep.clone()])
            && m.stores.iter().any(|(id, f)| *id == deep && *f == expected)
    });
    match hit {
        Some(m) => Ok(format!(
            "{} matching states ; seed {} at time {:.2}: 2.1.root holds {expected}",
            matches.len(),
            m.seed,
            m.gtime
        )),
        None => Err(format!(
            "{} matches, none at 2.1.root with `{expected}`",
            matches.len()
        )),
    }
}

fn same_knowledge() -> Outcome {
    let model = Model::new(fixture_inference(Formula::True));
    let matches = scan(
        &model,
        &inference_seeds(),
        &StatePredicate::EquivalentStores,
    )
    .map_err(|e| e.to_string())?;
    if matches.is_empty() {
        Ok("no equivalent non-trivial stores over 32 seeds".into())
    } else {
        Err(format!(
            "{} matches, first {:?}",
            matches.len(),
            matches[0].witnesses
        ))
    }
}

fn smc_sanity() -> Outcome {
    // (a) constant times, deterministic structure
    let zero = Model::new(fixture_container());
    let params = EstimateParams {
        alpha: 0.05,
        delta: 0.1,
        batch: 10,
        max_samples: 1000,
    };
    let a = estimate(&zero, &Observable::ExecutionTime, params).map_err(|e| e.to_string())?;
    if a.half_width != 0.0 || a.samples != 10 || a.mean != container_elapsed().to_f64() {
        return Err(format!("zero variance case gave {a:?}"));
    }
    // (b) one tell taking Unif(1, 3). Durations are paid when a rule
    // schedules a command, and declared processes start at time 0, so the
    // tell is spawned by a parallel step; a bare declared tell costs 0.
    let bare = parse_spec(
        "system { maxtime 100 timemap tell root -> Unif(1, 3) process @ root : tell(done) }",
    )
    .unwrap();
    let (_, c, _) = run_spec(&bare);
    if !c.sim.gtime.is_zero() {
        return Err(format!("a declared tell took {}", c.sim.gtime));
    }
    let spec = parse_spec(
        "system { maxtime 100 timemap tell root -> Unif(1, 3) process @ root : tell(done) || 0 }",
    )
    .unwrap();
    let params = EstimateParams {
        alpha: 0.05,
        delta: 0.2,
        batch: 50,
        max_samples: 20_000,
    };
    let b = estimate(&Model::new(spec), &Observable::ExecutionTime, params)
        .map_err(|e| e.to_string())?;
    if (b.mean - 2.0).abs() > 0.1 {
        return Err(format!("uniform tell mean {} (±{})", b.mean, b.half_width));
    }
    // (c) coverage of the sequential interval on Bernoulli(1/2) samples
    let mut covered = 0;
    for trial in 0..1000u64 {
        let params = EstimateParams {
            alpha: 0.05,
            delta: 0.2,
            batch: 30,
            max_samples: 100_000,
        };
        let r = estimate_with(params, |i| {
            let mut rng = Rng::new(trial << 32 | i);
            Ok((rng.below(2)) as f64)
        })
        .map_err(|e: AnalysisError| e.to_string())?;
        if (r.mean - 0.5).abs() <= r.half_width {
            covered += 1;
        }
    }
    let detail = format!(
        "(a) hw 0 after {} runs ; (b) mean {:.4} ± {:.4} from {} runs ; (c) coverage {}/1000",
        a.samples, b.mean, b.half_width, b.samples, covered
    );
    if covered >= 930 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn trace_bytes(spec: &SystemSpec) -> Vec<u8> {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.jsonl");
    let (t, c, trace) = run_spec(spec);
    let mut f = std::fs::File::create(&path).unwrap();
    write_run(&mut f, &trace, &c, t).unwrap();
    drop(f);
    std::fs::read(&path).unwrap()
}

fn robot_gens() -> Vec<HierarchyGenSpec> {
    let mut gens = Vec::new();
    for depth in 3..=5 {
        for seed in 0..2 {
            gens.push(HierarchyGenSpec::new(depth, 100 * depth as u64 + seed));
        }
    }
    gens
}

fn determinism() -> Outcome {
    let mut specs = vec![
        fixture_container(),
        fixture_tasks(),
        fixture_inference(Formula::True),
        fixture_inference(Formula::cmp("X", RelOp::Lt, 5)),
    ];
    specs.extend(robot_gens().iter().map(|g| fixture_robot(g).unwrap()));
    let mut bytes = 0;
    for (i, spec) in specs.iter().enumerate() {
        for seed in [0, 13, 99] {
            let s = with_seed(spec.clone(), seed);
            let (a, b) = (trace_bytes(&s), trace_bytes(&s));
            if a != b {
                return Err(format!("fixture {i} seed {seed}: traces differ"));
            }
            bytes += a.len();
        }
    }
    Ok(format!(
        "{} fixtures × 3 seeds identical ({bytes} bytes)",
        specs.len()
    ))
}

/// Interval width target for the robot estimates, in time units. The
/// walk times are heavy tailed (standard deviation close to the mean, up
/// to about 28 on the 14-space tree), so 4 units needs roughly 750 runs.
const ROBOT_DELTA: f64 = 4.0;

fn robot() -> Outcome {
    let mut lines = Vec::new();
    for gen in robot_gens() {
        let spec = fixture_robot(&gen).map_err(|e| e.to_string())?;
        let spaces = spec.agents.len();
        if spaces > 15 {
            return Err(format!(
                "depth {} seed {}: {spaces} spaces",
                gen.depth, gen.seed
            ));
        }
        let params = EstimateParams {
            alpha: 0.05,
            delta: ROBOT_DELTA,
            batch: 50,
            max_samples: 2000,
        };
        match estimate(&Model::new(spec), &Observable::ExecutionTime, params) {
            Ok(r) if r.half_width <= ROBOT_DELTA => lines.push(format!(
                "d{} {}sp {:.2}±{:.2} n={}",
                gen.depth, spaces, r.mean, r.half_width, r.samples
            )),
            Ok(r) => {
                return Err(format!(
                    "depth {}: half width {} above delta",
                    gen.depth, r.half_width
                ))
            }
            Err(AnalysisError::NotConverged(r)) => {
                return Err(format!(
                    "depth {} ({spaces} spaces): ±{:.2} after {}",
                    gen.depth, r.half_width, r.samples
                ))
            }
            Err(e) => return Err(e.to_string()),
        }
    }
    Ok(format!("delta {ROBOT_DELTA}: {}", lines.join(" ; ")))
}

fn quiescence(tasks: &TaskStats) -> Outcome {
    let mut checked = 0;
    let mut check = |label: String, t: Termination, c: &Configuration| -> Result<(), String> {
        if t != Termination::Quiescent {
            return Err(format!("{label}: ended by {}", t.name()));
        }
        let bad = c.quiescence_violations();
        if !bad.is_empty() {
            return Err(format!("{label}: live non-pending processes {bad:?}"));
        }
        checked += 1;
        Ok(())
    };
    let (t, c, _) = run_spec(&fixture_container());
    check("container".into(), t, &c)?;
    for (seed, (t, c)) in tasks.runs.iter().enumerate() {
        check(format!("tasks seed {seed}"), *t, c)?;
    }
    for root in [Formula::True, Formula::cmp("X", RelOp::Lt, 5)] {
        for seed in inference_seeds() {
            let (t, c, _) = run_spec(&with_seed(fixture_inference(root.clone()), seed));
            check(format!("inference seed {seed}"), t, &c)?;
        }
    }
    for gen in robot_gens() {
        for seed in 0..20 {
            let (t, c, _) = run_spec(&with_seed(fixture_robot(&gen).unwrap(), seed));
            let mut o = Oracle::internal();
            if !c
                .objects
                .agents
                .values()
                .any(|a| o.entails(&a.store, &warning()).unwrap())
            {
                return Err(format!(
                    "robot depth {} seed {seed}: no warning posted",
                    gen.depth
                ));
            }
            check(format!("robot depth {} seed {seed}", gen.depth), t, &c)?;
        }
    }
    Ok(format!(
        "{checked} quiescent runs, only pending asks remain"
    ))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, budget: Duration, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = f();
        let took = start.elapsed();
        let (status, detail) = match outcome {
            Ok(d) if took <= budget => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d} ; over the {budget:?} budget")),
            Err(d) => ("FAIL", d),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!(
            "criterion {n:>2} [{status}] {name} ({:.2?}): {detail}",
            took
        );
    };
    report(
        1,
        "heap correctness",
        Duration::from_secs(10),
        &mut heap_correctness,
    );
    report(
        2,
        "entailment oracle equivalence",
        Duration::from_secs(60),
        &mut entailment_oracle,
    );
    report(
        3,
        "containerization fixture",
        Duration::from_secs(1),
        &mut container,
    );
    let start = Instant::now();
    let tasks = task_runs();
    let task_time = start.elapsed();
    report(
        4,
        "task assignment branch statistics",
        Duration::from_secs(120).saturating_sub(task_time),
        &mut || branch_statistics(&tasks),
    );
    report(
        5,
        "consistency scan",
        Duration::from_secs(30),
        &mut inconsistency,
    );
    report(
        6,
        "knowledge inference scan",
        Duration::from_secs(30),
        &mut knowledge_inference,
    );
    report(
        7,
        "same knowledge scan",
        Duration::from_secs(60),
        &mut same_knowledge,
    );
    report(
        8,
        "estimator sanity",
        Duration::from_secs(300),
        &mut smc_sanity,
    );
    report(9, "determinism", Duration::from_secs(10), &mut determinism);
    report(10, "robot estimates", Duration::from_secs(600), &mut robot);
    report(
        11,
        "quiescence shape",
        Duration::from_secs(600),
        &mut || quiescence(&tasks),
    );
    if failed == 0 {
        println!("all 11 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria fail");
        ExitCode::FAILURE
    }
}
