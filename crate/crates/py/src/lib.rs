//! Python extension module over the exact auction solvers.
//!
//! Structured inputs and outputs are JSON strings using the same schemas
//! as the command-line tool, so results round-trip between the two. The
//! `seqauct` Python package wraps these functions with dict-based
//! helpers.

use std::collections::BTreeMap;
use std::str::FromStr;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde_json::{json, Value};

use seqauct::matroid::{CocircuitPolicy, GraphInput, Mode};
use seqauct::money::Money;
use seqauct::schema::{
    build_scenario, game_report_json, outcome_json, parse_format, InstanceSpec,
    MatrixInput, ProfileSpec,
};
use seqauct::seq::{
    grid_stage_equilibrium, play_profile, solve_spe, solve_spe_all, verify_spe,
    AuctionInstance, EnumLimits, GridStageConfig, GridStageResult, SpeVerdict,
    VerifyCaps,
};
use seqauct::stage::{Bid, ExternalityMatrix};

fn bad<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix_from(json_text: &str) -> PyResult<ExternalityMatrix> {
    let input: MatrixInput = serde_json::from_str(json_text).map_err(bad)?;
    ExternalityMatrix::new(input.v).map_err(bad)
}

fn instance_from(json_text: &str) -> PyResult<AuctionInstance> {
    let spec: InstanceSpec = serde_json::from_str(json_text).map_err(bad)?;
    spec.build().map_err(bad)
}

fn money_from(s: &str) -> PyResult<Money> {
    Money::from_str(s).map_err(bad)
}

fn emit(value: Value) -> String {
    value.to_string()
}

/// Iterated-elimination thresholds of an externality matrix.
#[pyfunction]
fn tau(matrix_json: &str) -> PyResult<String> {
    let matrix = matrix_from(matrix_json)?;
    let report = matrix.tau_thresholds();
    Ok(serde_json::to_string(&report).map_err(bad)?)
}

/// Canonical stage equilibrium; `format` is "first" or "second".
#[pyfunction]
fn solve_stage(matrix_json: &str, format: &str) -> PyResult<String> {
    let matrix = matrix_from(matrix_json)?;
    let format = parse_format(format).map_err(bad)?;
    let (bids, outcome) = matrix.canonical_equilibrium(format);
    Ok(emit(json!({"bids": bids, "outcome": outcome})))
}

/// Ascending price process; returns the final profile and the trace.
#[pyfunction]
fn ascending(matrix_json: &str, eps: &str) -> PyResult<String> {
    let matrix = matrix_from(matrix_json)?;
    let eps = money_from(eps)?;
    let (bids, outcome, trace) = matrix.ascending_equilibrium(&eps).map_err(bad)?;
    Ok(emit(json!({"bids": bids, "outcome": outcome, "trace": trace})))
}

/// Winner/price-interval pairs compatible with iterated elimination.
#[pyfunction]
fn enumerate_outcomes(matrix_json: &str) -> PyResult<String> {
    let matrix = matrix_from(matrix_json)?;
    let outcomes = matrix.enumerate_compatible_outcomes();
    Ok(serde_json::to_string(&outcomes).map_err(bad)?)
}

/// Exact Nash check of a full bid profile against one matrix.
#[pyfunction]
fn verify_stage(matrix_json: &str, bids_json: &str, format: &str) -> PyResult<bool> {
    let matrix = matrix_from(matrix_json)?;
    let bids: Vec<Bid> = serde_json::from_str(bids_json).map_err(bad)?;
    let format = parse_format(format).map_err(bad)?;
    matrix.verify_stage_nash(&bids, format).map_err(bad)
}

/// Backward-induction equilibrium of a sequential instance. Policy
/// "canonical" returns one report; "all" returns every enumerated
/// equilibrium, worst welfare first.
#[pyfunction]
#[pyo3(signature = (instance_json, policy = "canonical"))]
fn solve_seq(instance_json: &str, policy: &str) -> PyResult<String> {
    let instance = instance_from(instance_json)?;
    match policy {
        "canonical" => {
            let solution = solve_spe(&instance).map_err(bad)?;
            let report = solution.play(&instance).map_err(bad)?;
            Ok(emit(game_report_json(&report, &instance)))
        }
        "all" => {
            let solutions =
                solve_spe_all(&instance, EnumLimits::default()).map_err(bad)?;
            let mut reports = solutions
                .iter()
                .map(|s| s.play(&instance))
                .collect::<Result<Vec<_>, _>>()
                .map_err(bad)?;
            reports.sort_by(|a, b| a.welfare.cmp(&b.welfare));
            let values: Vec<Value> = reports
                .iter()
                .map(|r| game_report_json(r, &instance))
                .collect();
            Ok(emit(json!({"reports": values})))
        }
        other => Err(bad(format!("unknown policy {other:?}"))),
    }
}

/// Play a strategy profile on an instance and report the outcome.
#[pyfunction]
fn play(instance_json: &str, profile_json: &str) -> PyResult<String> {
    let instance = instance_from(instance_json)?;
    let spec: ProfileSpec = serde_json::from_str(profile_json).map_err(bad)?;
    let profile = spec.build().map_err(bad)?;
    let report = play_profile(&instance, profile.as_ref(), None).map_err(bad)?;
    Ok(emit(game_report_json(&report, &instance)))
}

/// One-shot deviation check of a strategy profile. Returns a verdict
/// object; "violated" verdicts carry the deviating player and bids.
#[pyfunction]
#[pyo3(signature = (instance_json, profile_json, max_nodes = 500_000, dev_step = "1"))]
fn verify_seq(
    instance_json: &str,
    profile_json: &str,
    max_nodes: usize,
    dev_step: &str,
) -> PyResult<String> {
    let instance = instance_from(instance_json)?;
    let spec: ProfileSpec = serde_json::from_str(profile_json).map_err(bad)?;
    let profile = spec.build().map_err(bad)?;
    let caps = VerifyCaps {
        max_nodes,
        dev_step: money_from(dev_step)?,
    };
    let verdict = verify_spe(&instance, profile.as_ref(), &caps).map_err(bad)?;
    Ok(emit(match verdict {
        SpeVerdict::Verified => json!({"verdict": "verified"}),
        SpeVerdict::Violated(v) => json!({
            "verdict": "violated",
            "round": v.round,
            "state": v.state,
            "player": v.player,
            "deviation": v.deviation,
            "prescribed_utility": v.prescribed_utility,
            "deviation_utility": v.deviation_utility,
        }),
    }))
}

/// Grid best-response search for a pure equilibrium of an opening
/// simultaneous round. Returns the outcome or the best-response cycle.
#[pyfunction]
#[pyo3(signature = (instance_json, step, include_plus = false, max_profiles = 1_000_000))]
fn grid_round(
    instance_json: &str,
    step: &str,
    include_plus: bool,
    max_profiles: u64,
) -> PyResult<String> {
    let instance = instance_from(instance_json)?;
    let step = money_from(step)?;
    let mut caps = Vec::with_capacity(instance.n());
    for p in &instance.players {
        caps.push(p.best_item_value(instance.all_items()).map_err(bad)?);
    }
    let config = GridStageConfig {
        step,
        caps,
        amounts_override: None,
        include_plus,
        max_profiles,
    };
    let start = vec![seqauct::valuations::ItemSet::EMPTY; instance.n()];
    let result = grid_stage_equilibrium(&instance, 0, &start, &config).map_err(bad)?;
    Ok(emit(match result {
        GridStageResult::Equilibrium(o) => {
            json!({"verdict": "equilibrium", "outcome": outcome_json(&o)})
        }
        GridStageResult::NoPureEquilibrium { cycle } => json!({
            "verdict": "no_pure_equilibrium",
            "cycle": cycle.iter().map(outcome_json).collect::<Vec<_>>(),
        }),
    }))
}

/// Build a named benchmark market and return its instance, reference
/// profile availability, and played report.
#[pyfunction]
#[pyo3(signature = (name, params = None))]
fn scenario(name: &str, params: Option<BTreeMap<String, String>>) -> PyResult<String> {
    let params = params.unwrap_or_default();
    let s = build_scenario(name, &params).map_err(bad)?;
    let report = s.play().map_err(bad)?;
    let expected = s.expected.as_ref().map(|e| {
        json!({"welfare": e.welfare, "optimum": e.optimum, "poa": e.poa})
    });
    Ok(emit(json!({
        "name": s.name,
        "params": s.params,
        "instance": serde_json::to_value(InstanceSpec::encode(&s.instance))
            .map_err(bad)?,
        "has_profile": s.profile.is_some(),
        "report": game_report_json(&report, &s.instance),
        "expected": expected,
    })))
}

/// Sequential co-circuit auction on a weighted graphic matroid.
/// `mode` is "direct" or "procurement"; `policy` is "lex", "longest",
/// or "seeded".
#[pyfunction]
#[pyo3(signature = (graph_json, mode = "direct", policy = "lex", seed = 0))]
fn basis_auction(graph_json: &str, mode: &str, policy: &str, seed: u64) -> PyResult<String> {
    let graph: GraphInput = serde_json::from_str(graph_json).map_err(bad)?;
    let mode = match mode {
        "direct" => Mode::Direct,
        "procurement" => Mode::Procurement,
        other => return Err(bad(format!("unknown mode {other:?}"))),
    };
    let policy = match policy {
        "lex" => CocircuitPolicy::Lexicographic,
        "longest" => CocircuitPolicy::AdversarialLongest,
        "seeded" => CocircuitPolicy::Seeded(seed),
        other => return Err(bad(format!("unknown policy {other:?}"))),
    };
    let inst = graph.into_instance(mode).map_err(bad)?;
    let trace = seqauct::matroid::run_sequential_basis_auction(&inst, policy)
        .map_err(bad)?;
    let names = |set: seqauct::valuations::ItemSet| -> Vec<String> {
        set.iter().map(|e| inst.names[e].clone()).collect()
    };
    let mut vcg = serde_json::Map::new();
    for e in inst.matroid.ground().iter() {
        let p = inst.vcg_price(e).map_err(bad)?;
        vcg.insert(
            inst.names[e].clone(),
            match p.finite() {
                Some(m) => json!(m),
                None => json!("unbounded"),
            },
        );
    }
    Ok(emit(json!({
        "basis": names(trace.basis),
        "prices": trace
            .prices
            .iter()
            .map(|(e, p)| (inst.names[*e].clone(), json!(p)))
            .collect::<serde_json::Map<_, _>>(),
        "stages": trace
            .stages
            .iter()
            .map(|s| json!({
                "cocircuit": names(s.cocircuit),
                "winner": inst.names[s.winner].clone(),
                "price": s.price,
            }))
            .collect::<Vec<_>>(),
        "tie_warning": trace.tie_warning,
        "vcg_prices": vcg,
    })))
}

#[pymodule]
fn _seqauct(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(tau, m)?)?;
    m.add_function(wrap_pyfunction!(solve_stage, m)?)?;
    m.add_function(wrap_pyfunction!(ascending, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_outcomes, m)?)?;
    m.add_function(wrap_pyfunction!(verify_stage, m)?)?;
    m.add_function(wrap_pyfunction!(solve_seq, m)?)?;
    m.add_function(wrap_pyfunction!(play, m)?)?;
    m.add_function(wrap_pyfunction!(verify_seq, m)?)?;
    m.add_function(wrap_pyfunction!(grid_round, m)?)?;
    m.add_function(wrap_pyfunction!(scenario, m)?)?;
    m.add_function(wrap_pyfunction!(basis_auction, m)?)?;
    Ok(())
}
