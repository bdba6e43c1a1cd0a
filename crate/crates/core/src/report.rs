//! Line-delimited JSON records for traces, final states, estimates and
//! scan matches, plus the one-row CSV summary of an estimate.
//!
//! Times are written as exact rationals (`"13/5"`) so trace files are
//! byte-identical across platforms; estimates are floating point.

use std::io::{self, Write};

use serde_json::{json, Value};

use crate::analysis::{EstimationResult, ScanMatch};
use crate::engine::{Configuration, Termination, TraceEvent};

pub fn event_record(ev: &TraceEvent) -> Value {
    let mut payload = serde_json::Map::new();
    if let Some(f) = &ev.posted {
        payload.insert("posted".into(), json!(f.to_string()));
    }
    if let Some(b) = ev.branch {
        payload.insert("branch".into(), json!(b));
    }
    if !ev.subset.is_empty() {
        payload.insert("subset".into(), json!(ev.subset));
    }
    if !ev.spawned.is_empty() {
        let spawned: Vec<Value> = ev
            .spawned
            .iter()
            .map(|s| {
                json!({
                    "uid": s.uid,
                    "location": s.location.to_string(),
                    "time": s.time.to_string(),
                    "command": s.command.to_string(),
                })
            })
            .collect();
        payload.insert("spawned".into(), Value::Array(spawned));
    }
    if let Some(t) = &ev.elapsed {
        payload.insert("elapsed".into(), json!(t.to_string()));
    }
    json!({
        "kind": ev.rule.name(),
        "uid": ev.uid,
        "location": ev.location.to_string(),
        "gtime": ev.gtime.to_string(),
        "payload": Value::Object(payload),
    })
}

/// Every agent with its store (identity-simplified) and children, and
/// the processes still alive.
pub fn final_record(c: &Configuration, termination: Termination) -> Value {
    let agents: Vec<Value> = c
        .objects
        .agents
        .values()
        .map(|a| {
            json!({
                "id": a.id.to_string(),
                "store": a.store.simplify().to_string(),
                "children": a.children,
            })
        })
        .collect();
    let processes: Vec<Value> = c
        .objects
        .processes
        .values()
        .map(|p| json!({"uid": p.uid, "location": p.location.to_string(), "command": p.command.to_string()}))
        .collect();
    json!({
        "kind": "final",
        "termination": termination.name(),
        "gtime": c.sim.gtime.to_string(),
        "agents": agents,
        "processes": processes,
    })
}

/// Writes the trace, one record per line, followed by the final state.
pub fn write_run(
    out: &mut dyn Write,
    trace: &[TraceEvent],
    final_state: &Configuration,
    termination: Termination,
) -> io::Result<()> {
    for ev in trace {
        writeln!(out, "{}", event_record(ev))?;
    }
    writeln!(out, "{}", final_record(final_state, termination))
}

pub fn estimation_record(r: &EstimationResult, observable: &str, converged: bool) -> Value {
    json!({
        "kind": "estimate",
        "observable": observable,
        "mean": r.mean,
        "half_width": r.half_width,
        "samples": r.samples,
        "alpha": r.alpha,
        "delta": r.delta,
        "converged": converged,
    })
}

pub const CSV_HEADER: &str = "mean,half_width,samples,wall_time_s";

pub fn csv_row(r: &EstimationResult, wall_seconds: f64) -> String {
    format!(
        "{},{},{},{:.3}",
        r.mean, r.half_width, r.samples, wall_seconds
    )
}

pub fn match_record(m: &ScanMatch) -> Value {
    let witnesses: Vec<Vec<String>> = m
        .witnesses
        .iter()
        .map(|w| w.iter().map(ToString::to_string).collect())
        .collect();
    let stores: Vec<Value> = m
        .stores
        .iter()
        .map(|(id, f)| json!({"id": id.to_string(), "store": f.simplify().to_string()}))
        .collect();
    json!({
        "kind": "match",
        "seed": m.seed,
        "event": m.event_index,
        "gtime": m.gtime,
        "witnesses": witnesses,
        "stores": stores,
    })
}
