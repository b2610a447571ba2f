//! Command-line front end: JSON ingestion for matrices, instances,
//! profiles, and graphs; solver and verifier orchestration; and report
//! emission.
//!
//! Exit codes: 0 solved or verified, 1 usage or parse error, 2
//! verification or assertion failed, 3 no pure equilibrium found on the
//! bid grid. All rationals are serialized as "p/q" strings; integers
//! are accepted on input.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use seqauct::matroid::{
    participation_matching, run_sequential_basis_auction, CocircuitPolicy, GraphInput,
    Mode, WeightedMatroidInstance,
};
use seqauct::money::Money;
use seqauct::scenarios::{
    check_walrasian, poa_sweep, random_additive, random_graphical_matroid,
    random_uniform_submodular, random_unit_demand, walrasian_witness,
};
use seqauct::schema::{
    build_scenario, game_report_json, outcome_json, param_money, parse_format,
    parse_money, InstanceSpec, MatrixInput, ProfileSpec,
};
use seqauct::seq::{
    grid_stage_equilibrium, solve_spe, solve_spe_all, verify_spe, EnumLimits,
    GameReport, GridStageConfig, GridStageResult, SpeVerdict, VerifyCaps,
};
use seqauct::stage::ExternalityMatrix;
use seqauct::valuations::ItemSet;

const SCHEMA: &str = "seqauct.report/1";

#[derive(Parser)]
#[command(
    name = "seqauct",
    about = "Exact solvers for single-item auctions with externalities and \
             sequential item auctions",
    version
)]
struct Cli {
    /// Worker threads for sweep (default: SEQAUCT_JOBS or all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one externality matrix: canonical equilibrium and outcome.
    SolveStage {
        /// JSON file {"v": [[...]]}.
        matrix: PathBuf,
        #[arg(long, default_value = "first")]
        format: String,
        /// Also run the ascending price process with this increment.
        #[arg(long)]
        epsilon: Option<String>,
    },
    /// Iterated-elimination thresholds of an externality matrix.
    Tau {
        matrix: PathBuf,
    },
    /// Enumerate winner/price-interval pairs compatible with
    /// elimination.
    Enumerate {
        matrix: PathBuf,
    },
    /// Backward-induction equilibrium of a sequential instance.
    SolveSeq {
        /// JSON file {"players": [...], "rounds": [["A"],["B"]],
        /// "format": "first"}.
        instance: PathBuf,
        /// "canonical" or "all".
        #[arg(long, default_value = "canonical")]
        policy: String,
        /// Grid step for an opening simultaneous round.
        #[arg(long)]
        grid: Option<String>,
        /// Also offer flagged (just-above) bids on the grid.
        #[arg(long)]
        plus: bool,
        /// Joint-profile cap for the grid search.
        #[arg(long, default_value_t = 1_000_000)]
        max_profiles: u64,
        /// Per-state equilibrium cap for --policy all.
        #[arg(long, default_value_t = 24)]
        per_state: usize,
    },
    /// Check a strategy profile for one-shot deviations.
    Verify {
        instance: PathBuf,
        /// JSON file {"kind": "static"|"scenario", ...}.
        profile: PathBuf,
        #[arg(long, default_value_t = 500_000)]
        max_nodes: usize,
        /// Probe step around signal breakpoints.
        #[arg(long, default_value = "1")]
        dev_step: String,
    },
    /// Sequential basis auction on a weighted graph.
    Matroid {
        /// One of run, vcg, greedy.
        action: String,
        /// JSON file {"vertices": n, "edges": [["u","v","e1","5"], ...]}.
        instance: PathBuf,
        #[arg(long, default_value = "direct")]
        mode: String,
        /// Co-circuit choice: lex, longest, or seeded.
        #[arg(long, default_value = "lex")]
        policy: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Build, play, and optionally check a named benchmark market.
    Scenario(ScenarioArgs),
    /// Solve batches of random instances and assert inefficiency bounds.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// figure1, submodular_unbounded, second_price_additive,
    /// second_price_unit_demand, multi_item_nonexistence, or
    /// dominated_strategy_spe.
    name: String,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    v: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    /// Verify the reference profile (or grid non-existence) and the
    /// expected metrics; exit 2 on any failure.
    #[arg(long)]
    check: bool,
    /// Write instance and profile JSON to these two paths.
    #[arg(long, num_args = 2, value_names = ["INSTANCE", "PROFILE"])]
    emit: Option<Vec<PathBuf>>,
}

#[derive(Args)]
struct SweepArgs {
    /// unit-demand, additive, uniform-submodular, or matroid-vcg.
    #[arg(long)]
    kind: String,
    #[arg(long, default_value_t = 20)]
    count: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Players (valuation kinds).
    #[arg(long, default_value_t = 3)]
    n: usize,
    /// Items (valuation kinds).
    #[arg(long, default_value_t = 3)]
    m: usize,
    /// First-marginal spread cap for uniform-submodular.
    #[arg(long)]
    spread: Option<String>,
    /// Fail (exit 2) if the worst PoA exceeds this.
    #[arg(long)]
    bound: Option<String>,
    /// Vertices (matroid-vcg).
    #[arg(long, default_value_t = 5)]
    vertices: usize,
    /// Extra non-tree edges (matroid-vcg).
    #[arg(long, default_value_t = 3)]
    extra_edges: usize,
}

// ---------------------------------------------------------------------
// Error and report plumbing.
// ---------------------------------------------------------------------

struct CliError {
    message: String,
    code: u8,
}

impl CliError {
    fn input(message: String) -> CliError {
        CliError { message, code: 1 }
    }

    fn failed(message: String) -> CliError {
        CliError { message, code: 2 }
    }
}

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::input(e.to_string())
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::input(format!("{}: malformed JSON: {e}", path.display())))
}

struct Report {
    command: String,
    config: Value,
    started: Instant,
    assertions: Vec<Value>,
    all_pass: bool,
}

impl Report {
    fn new(command: &str, config: Value) -> Report {
        Report {
            command: command.into(),
            config,
            started: Instant::now(),
            assertions: Vec::new(),
            all_pass: true,
        }
    }

    fn assert(&mut self, name: &str, pass: bool, detail: String) {
        self.all_pass &= pass;
        self.assertions
            .push(json!({"name": name, "pass": pass, "detail": detail}));
    }

    fn finish(self, result: Value, report_path: Option<&Path>) -> Result<bool, CliError> {
        let doc = json!({
            "schema": SCHEMA,
            "command": self.command,
            "config": self.config,
            "result": result,
            "assertions": self.assertions,
            "pass": self.all_pass,
            "wall_ms": self.started.elapsed().as_millis() as u64,
        });
        let text = serde_json::to_string_pretty(&doc).expect("report serializes");
        match report_path {
            Some(p) => fs::write(p, text)
                .map_err(|e| CliError::input(format!("{}: {e}", p.display())))?,
            None => println!("{text}"),
        }
        Ok(self.all_pass)
    }
}

fn to_value<T: Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("value serializes")
}


// ---------------------------------------------------------------------
// Subcommand runners. Each returns the process exit code.
// ---------------------------------------------------------------------

fn run_matrix_command(
    command: &Command,
    report_path: Option<&Path>,
) -> Result<u8, CliError> {
    let (name, path) = match command {
        Command::SolveStage { matrix, .. } => ("solve-stage", matrix),
        Command::Tau { matrix } => ("tau", matrix),
        Command::Enumerate { matrix } => ("enumerate", matrix),
        _ => unreachable!(),
    };
    let input: MatrixInput = read_json(path)?;
    let matrix = ExternalityMatrix::new(input.v)
        .map_err(|e| CliError::input(format!("bad matrix: {e}")))?;

    match command {
        Command::SolveStage {
            format, epsilon, ..
        } => {
            let fmt = parse_format(format)?;
            let mut report = Report::new(name, json!({"format": format}));
            let (bids, outcome) = matrix.canonical_equilibrium(fmt);
            let nash = matrix.verify_stage_nash(&bids, fmt)?;
            report.assert("stage_nash", nash, "canonical profile is a Nash equilibrium".into());
            let mut result = json!({
                "bids": to_value(&bids),
                "outcome": to_value(&outcome),
            });
            if let Some(eps) = epsilon {
                let eps = parse_money(eps, "epsilon")?;
                let (abids, aoutcome, trace) = matrix.ascending_equilibrium(&eps)?;
                let anash = matrix.verify_stage_nash(&abids, fmt)?;
                report.assert(
                    "ascending_nash",
                    anash,
                    "ascending process ends at a Nash equilibrium".into(),
                );
                result["ascending"] = json!({
                    "bids": to_value(&abids),
                    "outcome": to_value(&aoutcome),
                    "trace": to_value(&trace),
                });
            }
            let pass = report.finish(result, report_path)?;
            Ok(if pass { 0 } else { 2 })
        }
        Command::Tau { .. } => {
            let report = Report::new(name, json!({}));
            report.finish(to_value(&matrix.tau_thresholds()), report_path)?;
            Ok(0)
        }
        Command::Enumerate { .. } => {
            let report = Report::new(name, json!({}));
            let outcomes = matrix.enumerate_compatible_outcomes();
            report.finish(to_value(&outcomes), report_path)?;
            Ok(0)
        }
        _ => unreachable!(),
    }
}

fn run_solve_seq(
    instance_path: &Path,
    policy: &str,
    grid: Option<&str>,
    plus: bool,
    max_profiles: u64,
    per_state: usize,
    report_path: Option<&Path>,
) -> Result<u8, CliError> {
    let spec: InstanceSpec = read_json(instance_path)?;
    let instance = spec.build()?;
    let report = Report::new(
        "solve-seq",
        json!({"policy": policy, "grid": grid, "plus": plus}),
    );

    if !instance.singleton_rounds() {
        let step = parse_money(
            grid.ok_or_else(|| {
                CliError::input(
                    "instance has a simultaneous round; pass --grid <step>".into(),
                )
            })?,
            "grid step",
        )?;
        // Default caps: each player's best single-item value.
        let mut caps = Vec::with_capacity(instance.n());
        for p in &instance.players {
            caps.push(p.best_item_value(instance.all_items())?);
        }
        let config = GridStageConfig {
            step,
            caps,
            amounts_override: None,
            include_plus: plus,
            max_profiles,
        };
        let start = vec![ItemSet::EMPTY; instance.n()];
        return match grid_stage_equilibrium(&instance, 0, &start, &config)? {
            GridStageResult::Equilibrium(o) => {
                report.finish(
                    json!({"grid": "equilibrium", "outcome": outcome_json(&o)}),
                    report_path,
                )?;
                Ok(0)
            }
            GridStageResult::NoPureEquilibrium { cycle } => {
                let cycle: Vec<Value> = cycle.iter().map(outcome_json).collect();
                report.finish(
                    json!({"grid": "no_pure_equilibrium", "cycle": cycle}),
                    report_path,
                )?;
                Ok(3)
            }
        };
    }

    match policy {
        "canonical" => {
            let solution = solve_spe(&instance)?;
            let game = solution.play(&instance)?;
            report.finish(game_report_json(&game, &instance), report_path)?;
            Ok(0)
        }
        "all" => {
            let limits = EnumLimits {
                per_state,
                ..EnumLimits::default()
            };
            let solutions = solve_spe_all(&instance, limits)?;
            let mut reports = Vec::new();
            let mut worst: Option<GameReport> = None;
            for s in &solutions {
                let r = s.play(&instance)?;
                if worst.as_ref().is_none_or(|w| r.welfare < w.welfare) {
                    worst = Some(r.clone());
                }
                reports.push(game_report_json(&r, &instance));
            }
            let worst = worst.ok_or_else(|| {
                CliError::failed("no equilibrium enumerated".into())
            })?;
            report.finish(
                json!({
                    "count": reports.len(),
                    "worst": game_report_json(&worst, &instance),
                    "equilibria": reports,
                }),
                report_path,
            )?;
            Ok(0)
        }
        other => Err(CliError::input(format!(
            "unknown policy {other:?}; use canonical or all"
        ))),
    }
}

fn run_verify(
    instance_path: &Path,
    profile_path: &Path,
    max_nodes: usize,
    dev_step: &str,
    report_path: Option<&Path>,
) -> Result<u8, CliError> {
    let spec: InstanceSpec = read_json(instance_path)?;
    let instance = spec.build()?;
    let profile_spec: ProfileSpec = read_json(profile_path)?;
    let profile = profile_spec.build()?;
    let caps = VerifyCaps {
        max_nodes,
        dev_step: parse_money(dev_step, "dev step")?,
    };
    let mut report = Report::new(
        "verify",
        json!({"max_nodes": max_nodes, "dev_step": dev_step}),
    );
    match verify_spe(&instance, profile.as_ref(), &caps)? {
        SpeVerdict::Verified => {
            report.assert("subgame_perfect", true, "no profitable one-shot deviation".into());
            report.finish(json!({"verdict": "verified"}), report_path)?;
            Ok(0)
        }
        SpeVerdict::Violated(v) => {
            report.assert(
                "subgame_perfect",
                false,
                format!(
                    "player {} deviates at round {}: {} > {}",
                    v.player, v.round, v.deviation_utility, v.prescribed_utility
                ),
            );
            report.finish(
                json!({
                    "verdict": "violated",
                    "violation": {
                        "round": v.round,
                        "state": v.state,
                        "player": v.player,
                        "deviation": to_value(&v.deviation),
                        "prescribed_utility": to_value(&v.prescribed_utility),
                        "deviation_utility": to_value(&v.deviation_utility),
                    },
                }),
                report_path,
            )?;
            Ok(2)
        }
    }
}

fn matroid_value(inst: &WeightedMatroidInstance, set: ItemSet) -> Vec<String> {
    set.iter().map(|e| inst.names[e].clone()).collect()
}

fn run_matroid(
    action: &str,
    instance_path: &Path,
    mode: &str,
    policy: &str,
    seed: u64,
    report_path: Option<&Path>,
) -> Result<u8, CliError> {
    let graph: GraphInput = read_json(instance_path)?;
    let mode = match mode {
        "direct" => Mode::Direct,
        "procurement" => Mode::Procurement,
        other => {
            return Err(CliError::input(format!(
                "unknown mode {other:?}; use direct or procurement"
            )));
        }
    };
    let inst = graph.into_instance(mode)?;
    let policy = match policy {
        "lex" => CocircuitPolicy::Lexicographic,
        "longest" => CocircuitPolicy::AdversarialLongest,
        "seeded" => CocircuitPolicy::Seeded(seed),
        other => {
            return Err(CliError::input(format!(
                "unknown policy {other:?}; use lex, longest, or seeded"
            )));
        }
    };
    let mut report = Report::new(
        "matroid",
        json!({"action": action, "mode": mode_name(mode), "policy": format!("{policy:?}")}),
    );

    match action {
        "greedy" => {
            let (basis, weight) = inst.greedy_opt_basis()?;
            report.finish(
                json!({
                    "basis": matroid_value(&inst, basis),
                    "weight": to_value(&weight),
                }),
                report_path,
            )?;
            Ok(0)
        }
        "vcg" => {
            let mut prices = serde_json::Map::new();
            for e in inst.matroid.ground().iter() {
                let p = inst.vcg_price(e)?;
                prices.insert(
                    inst.names[e].clone(),
                    match p.finite() {
                        Some(m) => to_value(m),
                        None => json!("unbounded"),
                    },
                );
            }
            report.finish(json!({"vcg_prices": prices}), report_path)?;
            Ok(0)
        }
        "run" => {
            let trace = run_sequential_basis_auction(&inst, policy)?;
            let (greedy_basis, _) = inst.greedy_opt_basis()?;
            report.assert(
                "optimal_basis",
                trace.basis == greedy_basis,
                "auction basis equals the greedy optimum".into(),
            );
            let vcg_match = trace.prices.iter().all(|(e, p)| {
                inst.vcg_price(*e)
                    .ok()
                    .and_then(|v| v.finite().cloned())
                    .as_ref()
                    == Some(p)
            });
            report.assert(
                "vcg_prices",
                vcg_match || trace.tie_warning,
                "auction prices equal VCG prices (tied weights excuse mismatches)".into(),
            );
            let matching_ok = participation_matching(&trace, trace.basis).is_ok();
            report.assert(
                "participation_matching",
                matching_ok,
                "basis elements match to distinct auctions they appeared in".into(),
            );
            let stages: Vec<Value> = trace
                .stages
                .iter()
                .map(|s| {
                    json!({
                        "cocircuit": matroid_value(&inst, s.cocircuit),
                        "winner": inst.names[s.winner],
                        "price": to_value(&s.price),
                    })
                })
                .collect();
            let prices: serde_json::Map<String, Value> = trace
                .prices
                .iter()
                .map(|(e, p)| (inst.names[*e].clone(), to_value(p)))
                .collect();
            let pass = report.finish(
                json!({
                    "stages": stages,
                    "basis": matroid_value(&inst, trace.basis),
                    "prices": prices,
                    "tie_warning": trace.tie_warning,
                }),
                report_path,
            )?;
            Ok(if pass { 0 } else { 2 })
        }
        other => Err(CliError::input(format!(
            "unknown action {other:?}; use run, vcg, or greedy"
        ))),
    }
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Direct => "direct",
        Mode::Procurement => "procurement",
    }
}

fn run_scenario(args: &ScenarioArgs, report_path: Option<&Path>) -> Result<u8, CliError> {
    let mut params = BTreeMap::new();
    for (key, value) in [
        ("alpha", &args.alpha),
        ("eps", &args.eps),
        ("delta", &args.delta),
        ("v", &args.v),
    ] {
        if let Some(v) = value {
            params.insert(key.to_string(), v.clone());
        }
    }
    if let Some(k) = args.k {
        params.insert("k".into(), k.to_string());
    }
    if let Some(t) = args.t {
        params.insert("t".into(), t.to_string());
    }
    let scenario = build_scenario(&args.name, &params)?;
    let mut report = Report::new(
        "scenario",
        json!({"name": scenario.name, "params": scenario.params, "check": args.check}),
    );

    if let Some(paths) = &args.emit {
        let spec = InstanceSpec::encode(&scenario.instance);
        fs::write(&paths[0], serde_json::to_string_pretty(&spec).expect("serializes"))
            .map_err(|e| CliError::input(format!("{}: {e}", paths[0].display())))?;
        if scenario.profile.is_some() {
            let pspec = ProfileSpec::Scenario {
                name: scenario.name.clone(),
                params: scenario.params.clone(),
            };
            fs::write(
                &paths[1],
                serde_json::to_string_pretty(&pspec).expect("serializes"),
            )
            .map_err(|e| CliError::input(format!("{}: {e}", paths[1].display())))?;
        }
    }

    let mut result = json!({"notes": scenario.notes});
    if let Some(e) = &scenario.expected {
        result["expected"] = json!({
            "welfare": to_value(&e.welfare),
            "optimum": to_value(&e.optimum),
            "poa": to_value(&e.poa),
        });
    }

    let mut grid_exit = 0u8;
    if let Some(grid) = &scenario.grid {
        let start = vec![ItemSet::EMPTY; scenario.instance.n()];
        match grid_stage_equilibrium(&scenario.instance, 0, &start, grid)? {
            GridStageResult::NoPureEquilibrium { cycle } => {
                if args.check {
                    report.assert(
                        "no_pure_grid_equilibrium",
                        true,
                        format!("best-response cycle of length {}", cycle.len()),
                    );
                } else {
                    grid_exit = 3;
                }
                result["grid"] = json!({
                    "verdict": "no_pure_equilibrium",
                    "cycle": cycle.iter().map(outcome_json).collect::<Vec<_>>(),
                });
            }
            GridStageResult::Equilibrium(o) => {
                if args.check {
                    report.assert(
                        "no_pure_grid_equilibrium",
                        false,
                        "a pure equilibrium exists on the grid".into(),
                    );
                }
                result["grid"] =
                    json!({"verdict": "equilibrium", "outcome": outcome_json(&o)});
            }
        }
        if args.name == "multi_item_nonexistence" {
            let v = param_money(&params, "v", Money::from_int(1))?;
            let delta = param_money(&params, "delta", Money::ratio(1, 100))?;
            let (alloc, prices) = walrasian_witness(&v, &delta);
            let ok = check_walrasian(&scenario.instance.players, &alloc, &prices)?;
            if args.check {
                report.assert(
                    "walrasian_witness",
                    ok,
                    "quoted allocation and prices clear the market".into(),
                );
            }
            result["walrasian"] = json!(ok);
        }
    } else {
        let game = scenario.play().map_err(|e| CliError::failed(e.to_string()))?;
        result["play"] = game_report_json(&game, &scenario.instance);
        if args.check {
            if let Some(e) = &scenario.expected {
                report.assert(
                    "expected_metrics",
                    game.welfare == e.welfare
                        && game.optimum == e.optimum
                        && game.poa == e.poa,
                    format!("welfare {}, optimum {}, poa {}", game.welfare, game.optimum, game.poa),
                );
            }
            if scenario.profile.is_some() {
                match scenario.verify().map_err(|e| CliError::failed(e.to_string()))? {
                    SpeVerdict::Verified => {
                        report.assert(
                            "subgame_perfect",
                            true,
                            "reference profile survives one-shot deviations".into(),
                        );
                    }
                    SpeVerdict::Violated(v) => {
                        report.assert(
                            "subgame_perfect",
                            false,
                            format!(
                                "player {} deviates at round {}: {} > {}",
                                v.player, v.round, v.deviation_utility, v.prescribed_utility
                            ),
                        );
                    }
                }
            }
        }
    }

    let pass = report.finish(result, report_path)?;
    if args.check {
        Ok(if pass { 0 } else { 2 })
    } else {
        Ok(grid_exit)
    }
}

fn run_sweep(args: &SweepArgs, report_path: Option<&Path>) -> Result<u8, CliError> {
    let mut report = Report::new(
        "sweep",
        json!({
            "kind": args.kind,
            "count": args.count,
            "seed": args.seed,
            "n": args.n,
            "m": args.m,
            "bound": args.bound,
        }),
    );

    if args.kind == "matroid-vcg" {
        let mut mismatches = Vec::new();
        for i in 0..args.count {
            let inst = random_graphical_matroid(
                args.vertices,
                args.extra_edges,
                args.seed.wrapping_add(i),
            )?;
            let trace = run_sequential_basis_auction(&inst, CocircuitPolicy::Lexicographic)?;
            let (greedy_basis, _) = inst.greedy_opt_basis()?;
            let prices_ok = trace.prices.iter().all(|(e, p)| {
                inst.vcg_price(*e)
                    .ok()
                    .and_then(|v| v.finite().cloned())
                    .as_ref()
                    == Some(p)
            });
            if trace.basis != greedy_basis || !prices_ok {
                mismatches.push(i);
            }
        }
        report.assert(
            "vcg_emulation",
            mismatches.is_empty(),
            format!("{} of {} runs matched VCG", args.count - mismatches.len() as u64, args.count),
        );
        let pass = report.finish(json!({"mismatched_seeds": mismatches}), report_path)?;
        return Ok(if pass { 0 } else { 2 });
    }

    let spread = match &args.spread {
        Some(s) => Some(parse_money(s, "spread")?),
        None => None,
    };
    let mut instances = Vec::with_capacity(args.count as usize);
    for i in 0..args.count {
        let seed = args.seed.wrapping_add(i);
        let inst = match args.kind.as_str() {
            "unit-demand" => random_unit_demand(args.n, args.m, seed)?,
            "additive" => random_additive(args.n, args.m, seed)?,
            "uniform-submodular" => {
                random_uniform_submodular(args.n, args.m, seed, spread.clone())?
            }
            other => {
                return Err(CliError::input(format!(
                    "unknown sweep kind {other:?}; use unit-demand, additive, \
                     uniform-submodular, or matroid-vcg"
                )));
            }
        };
        instances.push(inst);
    }
    let sweep = poa_sweep(&instances).map_err(|e| CliError::failed(e.to_string()))?;
    if let Some(bound) = &args.bound {
        let bound = parse_money(bound, "bound")?;
        report.assert(
            "poa_bound",
            sweep.max_poa <= bound,
            format!("max poa {} vs bound {}", sweep.max_poa, bound),
        );
    }
    let pass = report.finish(
        json!({
            "count": sweep.count,
            "max_poa": to_value(&sweep.max_poa),
            "worst_instance": sweep.worst,
        }),
        report_path,
    )?;
    Ok(if pass { 0 } else { 2 })
}

fn run(cli: &Cli) -> Result<u8, CliError> {
    let jobs = cli.jobs.or_else(|| {
        std::env::var("SEQAUCT_JOBS")
            .ok()
            .and_then(|s| s.parse().ok())
    });
    if let Some(j) = jobs {
        // Ignore failure: the global pool can only be set once.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global();
    }
    let report_path = cli.report.as_deref();
    match &cli.command {
        Command::SolveStage { .. } | Command::Tau { .. } | Command::Enumerate { .. } => {
            run_matrix_command(&cli.command, report_path)
        }
        Command::SolveSeq {
            instance,
            policy,
            grid,
            plus,
            max_profiles,
            per_state,
        } => run_solve_seq(
            instance,
            policy,
            grid.as_deref(),
            *plus,
            *max_profiles,
            *per_state,
            report_path,
        ),
        Command::Verify {
            instance,
            profile,
            max_nodes,
            dev_step,
        } => run_verify(instance, profile, *max_nodes, dev_step, report_path),
        Command::Matroid {
            action,
            instance,
            mode,
            policy,
            seed,
        } => run_matroid(action, instance, mode, policy, *seed, report_path),
        Command::Scenario(args) => run_scenario(args, report_path),
        Command::Sweep(args) => run_sweep(args, report_path),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
