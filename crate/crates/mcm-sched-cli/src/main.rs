//! Command-line front end for the mcm-sched toolkit.
//!
//! Subcommands: `profile`, `schedule`, `compare`, `ablate`, `dse`,
//! `validate`. Inputs are preset names or file paths; relative paths fall
//! back to the directory in `MCM_SCHED_CONFIG_DIR`. All reports are written
//! as CSV plus aligned text and a machine-readable JSON summary; repeated
//! runs produce byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mcm_sched::cost::{
    analytical_cost, dataflow_affinity, layer_cost, stage_totals, AnalyticalParams, CostProfile,
    Dataflow,
};
use mcm_sched::dse::{self, TrunkSpace};
use mcm_sched::nop::{McmSpec, Position};
use mcm_sched::presets;
use mcm_sched::report::{
    self, decision_table, dse_table, metrics_table, placement_svg, placement_text, Table,
};
use mcm_sched::schedule::{
    baseline, evaluate, throughput_match, MatchOptions, PipelineMode, ScheduleError, TrunkPolicy,
};
use mcm_sched::workload::{mac_count, validate, StageId, WorkloadGraph};

const EXIT_CONFIG: u8 = 2;
const EXIT_CAPACITY: u8 = 3;
const EXIT_CAP_EXCEEDED: u8 = 4;

#[derive(Parser)]
#[command(
    name = "mcm-sched",
    about = "Schedule perception pipelines onto multi-chiplet NPU packages",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Workload preset (`autopilot`) or path to a workload JSON file.
    #[arg(long, default_value = "autopilot")]
    workload: String,
    /// Package preset (`simba-6x6`, `simba-2x6x6`) or path to a TOML file.
    #[arg(long, default_value = "simba-6x6")]
    mcm: String,
    /// Cost source: `autopilot-paper`, `analytical`, or a profile CSV path.
    #[arg(long, default_value = "autopilot-paper")]
    profile: String,
    /// Pipelining scheme: `stagewise` or `layerwise`.
    #[arg(long, default_value = "stagewise")]
    mode: PipelineMode,
    /// Output directory for report files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed for randomized spot checks.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Per-stage latency/energy breakdown and per-layer dataflow affinities.
    Profile(CommonArgs),
    /// Run throughput matching and emit the decision log and placement.
    Schedule {
        #[command(flatten)]
        common: CommonArgs,
        /// Also emit an SVG rendering of the placement.
        #[arg(long)]
        svg: bool,
        /// Let the trunk stage participate in matching instead of keeping
        /// its initial allocation.
        #[arg(long)]
        schedule_trunks: bool,
    },
    /// Compare the scheduled package against monolithic baselines.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated arrangements, e.g. `1x9216,2x4608,4x2304,36x256`.
        #[arg(long, default_value = "1x9216,2x4608,4x2304,36x256")]
        baselines: String,
    },
    /// Trunk ablation studies.
    Ablate {
        #[command(flatten)]
        common: CommonArgs,
        /// `occupancy_scaling` or `lane_fraction`.
        #[arg(long)]
        study: String,
        /// Pipelining latency threshold in ms for the lane study.
        #[arg(long, default_value_t = 82.0)]
        threshold: f64,
    },
    /// Brute-force heterogeneous integration search for the trunk quadrant.
    Dse {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated WS chiplet counts to explore.
        #[arg(long, default_value = "0,2,4")]
        ws_counts: String,
        /// Per-chiplet latency constraint in ms.
        #[arg(long, default_value_t = 85.0)]
        lcstr: f64,
        /// Maximum number of configurations per WS count.
        #[arg(long, default_value_t = dse::DEFAULT_CONFIG_CAP)]
        cap: u64,
    },
    /// Validate a workload file and the referenced configs.
    Validate(CommonArgs),
}

#[derive(Debug)]
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }
}

impl From<ScheduleError> for CliError {
    fn from(e: ScheduleError) -> Self {
        let code = match e {
            ScheduleError::Capacity { .. } | ScheduleError::GridTooSmall(..) => EXIT_CAPACITY,
            _ => EXIT_CONFIG,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<dse::DseError> for CliError {
    fn from(e: dse::DseError) -> Self {
        let code = match e {
            dse::DseError::CapExceeded { .. } => EXIT_CAP_EXCEEDED,
            _ => EXIT_CONFIG,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::config(format!("io error: {e}"))
    }
}

impl From<mcm_sched::cost::CostError> for CliError {
    fn from(e: mcm_sched::cost::CostError) -> Self {
        CliError::config(e.to_string())
    }
}

fn main() -> ExitCode {
    // Behave like a normal unix filter when piped into head and friends.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Profile(c) => cmd_profile(&c),
        Command::Schedule { common, svg, schedule_trunks } => {
            cmd_schedule(&common, svg, schedule_trunks)
        }
        Command::Compare { common, baselines } => cmd_compare(&common, &baselines),
        Command::Ablate { common, study, threshold } => cmd_ablate(&common, &study, threshold),
        Command::Dse { common, ws_counts, lcstr, cap } => {
            cmd_dse(&common, &ws_counts, lcstr, cap)
        }
        Command::Validate(c) => cmd_validate(&c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

// ── Input loading ────────────────────────────────────────────────────

fn resolve_path(name: &str) -> Option<PathBuf> {
    let direct = PathBuf::from(name);
    if direct.exists() {
        return Some(direct);
    }
    if let Ok(dir) = std::env::var("MCM_SCHED_CONFIG_DIR") {
        let joined = Path::new(&dir).join(name);
        if joined.exists() {
            return Some(joined);
        }
    }
    None
}

fn load_workload(name: &str) -> Result<WorkloadGraph, CliError> {
    if let Some(g) = presets::workload_preset(name) {
        return Ok(g);
    }
    let path = resolve_path(name)
        .ok_or_else(|| CliError::config(format!("unknown workload preset or file `{name}`")))?;
    let text = fs::read_to_string(&path)?;
    WorkloadGraph::from_json(&text)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn load_mcm(name: &str) -> Result<McmSpec, CliError> {
    if let Some(m) = presets::mcm_preset(name) {
        return Ok(m);
    }
    let path = resolve_path(name)
        .ok_or_else(|| CliError::config(format!("unknown mcm preset or file `{name}`")))?;
    let text = fs::read_to_string(&path)?;
    McmSpec::from_toml(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn load_profile(name: &str) -> Result<CostProfile, CliError> {
    if let Some(p) = presets::profile_preset(name) {
        return Ok(p);
    }
    let path = resolve_path(name)
        .ok_or_else(|| CliError::config(format!("unknown profile preset or file `{name}`")))?;
    let text = fs::read_to_string(&path)?;
    CostProfile::parse(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn write_out(dir: &Path, name: &str, content: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), content)?;
    Ok(())
}

fn write_summary(dir: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    write_out(dir, "summary.json", &format!("{:#}\n", value))
}

// ── Subcommands ──────────────────────────────────────────────────────

fn cmd_profile(c: &CommonArgs) -> Result<(), CliError> {
    let graph = load_workload(&c.workload)?;
    let profile = load_profile(&c.profile)?;

    if graph.layer_count() == 0 {
        println!("workload is empty; nothing to profile");
        write_out(
            &c.out,
            "stage_totals.csv",
            "stage,dataflow,total_ms,instance_ms,fraction,energy_j\n",
        )?;
        write_summary(
            &c.out,
            &serde_json::json!({
                "schema_version": 1, "command": "profile", "stages": 0
            }),
        )?;
        return Ok(());
    }

    let mut totals_table =
        Table::new(&["stage", "dataflow", "total_ms", "instance_ms", "fraction", "energy_j"]);
    let mut summary_stages = Vec::new();
    for df in Dataflow::BOTH {
        let totals = stage_totals(&graph, &profile, df)?;
        for t in &totals {
            totals_table.push(vec![
                t.stage.to_string(),
                df.to_string(),
                report::fmt_ms(t.total_latency_ms),
                report::fmt_ms(t.instance_latency_ms),
                format!("{:.6}", t.fraction),
                report::fmt_j(t.total_energy_j),
            ]);
            if df == Dataflow::OutputStationary {
                summary_stages.push(serde_json::json!({
                    "stage": t.stage.to_string(),
                    "fraction": t.fraction,
                    "instance_ms": t.instance_latency_ms,
                }));
            }
        }
    }

    let affinity = dataflow_affinity(&graph, &profile)?;
    let mut affinity_table = Table::new(&["layer", "stage", "delta_latency_ms", "delta_energy_j"]);
    for row in &affinity {
        affinity_table.push(vec![
            row.canonical.clone(),
            row.stage.to_string(),
            report::fmt_ms(row.delta_latency_ms),
            report::fmt_j(row.delta_energy_j),
        ]);
    }

    print!("{}", totals_table.to_text());
    println!();
    print!("{}", affinity_table.to_text());
    write_out(&c.out, "stage_totals.csv", &totals_table.to_csv())?;
    write_out(&c.out, "affinity.csv", &affinity_table.to_csv())?;
    write_out(
        &c.out,
        "profile.txt",
        &format!("{}\n{}", totals_table.to_text(), affinity_table.to_text()),
    )?;
    write_summary(
        &c.out,
        &serde_json::json!({
            "schema_version": 1,
            "command": "profile",
            "stages": summary_stages,
        }),
    )?;
    Ok(())
}

fn cmd_schedule(c: &CommonArgs, svg: bool, schedule_trunks: bool) -> Result<(), CliError> {
    let graph = load_workload(&c.workload)?;
    let mcm = load_mcm(&c.mcm)?;
    let profile = load_profile(&c.profile)?;
    profile.check_coverage(&graph, &[Dataflow::OutputStationary])?;
    let opts = MatchOptions {
        mode: c.mode,
        trunks: if schedule_trunks { TrunkPolicy::Scheduled } else { TrunkPolicy::Fixed },
    };
    let outcome = throughput_match(&graph, &mcm, &profile, &opts)?;
    let metrics = evaluate(&outcome.schedule, &graph, &mcm, &profile)?;

    let decisions = decision_table(&outcome.log);
    print!("{}", decisions.to_text());
    println!();
    println!(
        "base latency {} ms, matched pipeline latency {} ms ({})",
        report::fmt_ms(outcome.lat_base_ms),
        report::fmt_ms(outcome.matched_pipe_ms),
        match outcome.status {
            mcm_sched::schedule::MatchStatus::Matched => "matched",
            mcm_sched::schedule::MatchStatus::Exhausted => "sharding exhausted",
        }
    );
    let mtable = metrics_table(&[("scheduled".to_string(), metrics)]);
    print!("{}", mtable.to_text());
    let placement = placement_text(&outcome.schedule, &mcm);
    println!("{placement}");

    write_out(&c.out, "decisions.csv", &decisions.to_csv())?;
    write_out(
        &c.out,
        "decisions.json",
        &format!("{}\n", serde_json::to_string_pretty(&outcome.log).unwrap()),
    )?;
    write_out(&c.out, "placement.txt", &placement)?;
    if svg {
        write_out(&c.out, "placement.svg", &placement_svg(&outcome.schedule, &mcm))?;
    }
    write_out(&c.out, "metrics.csv", &mtable.to_csv())?;
    write_summary(
        &c.out,
        &serde_json::json!({
            "schema_version": 1,
            "command": "schedule",
            "lat_base_ms": outcome.lat_base_ms,
            "matched_pipe_ms": outcome.matched_pipe_ms,
            "status": outcome.status,
            "metrics": metrics,
            "decisions": outcome.log.len(),
        }),
    )?;
    Ok(())
}

fn parse_baselines(spec: &str) -> Result<Vec<(u64, u64)>, CliError> {
    spec.split(',')
        .map(|token| {
            let (n, pes) = token
                .trim()
                .split_once('x')
                .ok_or_else(|| CliError::config(format!("bad arrangement `{token}`")))?;
            let n: u64 =
                n.parse().map_err(|_| CliError::config(format!("bad arrangement `{token}`")))?;
            let pes: u64 =
                pes.parse().map_err(|_| CliError::config(format!("bad arrangement `{token}`")))?;
            Ok((n, pes))
        })
        .collect()
}

fn cmd_compare(c: &CommonArgs, baselines: &str) -> Result<(), CliError> {
    let graph = load_workload(&c.workload)?;
    let mcm = load_mcm(&c.mcm)?;
    let profile = load_profile(&c.profile)?;
    let arrangements = parse_baselines(baselines)?;

    // The trunk stage is ablated separately; the comparison covers the
    // extraction and fusion pipeline.
    let g3 = graph.restricted_to(&[StageId::FeBfpn, StageId::SpatialFuse, StageId::TemporalFuse]);
    profile.check_coverage(&g3, &[Dataflow::OutputStationary])?;

    let mut rows: Vec<(String, mcm_sched::schedule::PipelineMetrics)> = Vec::new();
    for mode in [PipelineMode::Stagewise, PipelineMode::Layerwise] {
        for &(n, pes) in &arrangements {
            let name = format!("{n}x{pes}/{mode}");
            let chiplet_pes: u64 = mcm.chiplets.values().map(|s| s.pe_count).next().unwrap_or(256);
            let metrics = if n == mcm.chiplet_count() as u64 && pes == chiplet_pes {
                let opts = MatchOptions { mode, trunks: TrunkPolicy::Fixed };
                let outcome = throughput_match(&g3, &mcm, &profile, &opts)?;
                evaluate(&outcome.schedule, &g3, &mcm, &profile)?
            } else {
                baseline(&g3, n, pes, &profile, mode)?
            };
            rows.push((name, metrics));
        }
    }

    let table = metrics_table(&rows);
    println!("pipeline comparison over the extraction and fusion stages");
    print!("{}", table.to_text());
    write_out(&c.out, "comparison.csv", &table.to_csv())?;
    write_out(&c.out, "comparison.txt", &table.to_text())?;
    write_summary(
        &c.out,
        &serde_json::json!({
            "schema_version": 1,
            "command": "compare",
            "rows": rows.iter().map(|(n, m)| serde_json::json!({
                "arrangement": n, "metrics": m
            })).collect::<Vec<_>>(),
        }),
    )?;
    Ok(())
}

fn cmd_ablate(c: &CommonArgs, study: &str, threshold: f64) -> Result<(), CliError> {
    let graph = load_workload(&c.workload)?;
    match study {
        "occupancy_scaling" => {
            // MAC-driven study of the occupancy deconvolution stack; always
            // uses the analytical model.
            let params = AnalyticalParams::default();
            let trunks = graph
                .stage(StageId::Trunks)
                .ok_or_else(|| CliError::config("workload has no trunk stage"))?;
            let occupancy = trunks
                .models
                .iter()
                .find(|m| {
                    m.layers.iter().all(|l| l.kind == mcm_sched::workload::LayerKind::Deconv)
                })
                .ok_or_else(|| CliError::config("workload has no occupancy trunk"))?;
            let mut table =
                Table::new(&["upsampling", "e2e_ms", "pipe_ms", "final_layer_mac_share"]);
            let mut shares = BTreeMap::new();
            for levels in 1..=occupancy.layers.len() {
                let stack = &occupancy.layers[..levels];
                let lats: Vec<f64> = stack
                    .iter()
                    .map(|l| analytical_cost(l, Dataflow::OutputStationary, &params).latency_ms)
                    .collect();
                let macs: Vec<u64> = stack.iter().map(mac_count).collect();
                let total_macs: u64 = macs.iter().sum();
                let share = *macs.last().unwrap() as f64 / total_macs as f64;
                let factor = 1u64 << levels;
                shares.insert(factor, share);
                table.push(vec![
                    format!("{factor}x"),
                    report::fmt_ms(lats.iter().sum::<f64>()),
                    report::fmt_ms(lats.iter().copied().fold(0.0, f64::max)),
                    format!("{share:.4}"),
                ]);
            }
            print!("{}", table.to_text());
            write_out(&c.out, "occupancy.csv", &table.to_csv())?;
            write_summary(
                &c.out,
                &serde_json::json!({
                    "schema_version": 1,
                    "command": "ablate",
                    "study": "occupancy_scaling",
                    "final_layer_share_16x": shares.get(&16),
                }),
            )?;
            Ok(())
        }
        "lane_fraction" => {
            let profile = load_profile(&c.profile)?;
            let trunks = graph
                .stage(StageId::Trunks)
                .ok_or_else(|| CliError::config("workload has no trunk stage"))?;
            let lane = trunks
                .models
                .iter()
                .find(|m| m.name.contains("lane"))
                .ok_or_else(|| CliError::config("workload has no lane trunk"))?;
            let mut serial = 0.0;
            let mut energy = 0.0;
            for layer in &lane.layers {
                let cost = layer_cost(layer, Dataflow::OutputStationary, &profile)?;
                serial += cost.latency_ms;
                energy += cost.energy_j;
            }
            let mut table =
                Table::new(&["compute_fraction_pct", "latency_ms", "energy_j", "meets_threshold"]);
            let mut crossing = None;
            let mut prev_ok = true;
            for pct in (10..=100).step_by(10) {
                let f = pct as f64 / 100.0;
                let lat = serial * f;
                let ok = lat <= threshold;
                if prev_ok && !ok {
                    crossing = Some(pct);
                }
                prev_ok = ok;
                table.push(vec![
                    pct.to_string(),
                    report::fmt_ms(lat),
                    report::fmt_j(energy * f),
                    ok.to_string(),
                ]);
            }
            println!("lane trunk under context-aware computing (threshold {threshold} ms)");
            print!("{}", table.to_text());
            write_out(&c.out, "lane_fraction.csv", &table.to_csv())?;
            write_summary(
                &c.out,
                &serde_json::json!({
                    "schema_version": 1,
                    "command": "ablate",
                    "study": "lane_fraction",
                    "threshold_ms": threshold,
                    "serial_ms": serial,
                    "first_violating_pct": crossing,
                }),
            )?;
            Ok(())
        }
        other => Err(CliError::config(format!(
            "unknown study `{other}` (expected `occupancy_scaling` or `lane_fraction`)"
        ))),
    }
}

fn cmd_dse(c: &CommonArgs, ws_counts: &str, lcstr: f64, cap: u64) -> Result<(), CliError> {
    let graph = load_workload(&c.workload)?;
    let mcm = load_mcm(&c.mcm)?;
    let profile = load_profile(&c.profile)?;
    let ws: Vec<usize> = ws_counts
        .split(',')
        .map(|t| {
            t.trim().parse::<usize>().map_err(|_| CliError::config(format!("bad ws count `{t}`")))
        })
        .collect::<Result<_, _>>()?;
    profile.check_coverage(&graph, &Dataflow::BOTH)?;

    let space =
        TrunkSpace::from_graph(&graph, &profile).map_err(|e| CliError::config(e.to_string()))?;
    // The trunk quadrant of the initial allocation is the search region.
    let opts = MatchOptions { mode: c.mode, trunks: TrunkPolicy::Fixed };
    let alloc = mcm_sched::schedule::initial_allocation(&graph, &mcm, &profile, &opts)?;
    let region: Vec<Position> = alloc
        .stage_regions
        .get(&StageId::Trunks)
        .map(|r| r.iter().copied().collect())
        .ok_or_else(|| CliError::config("workload has no trunk stage"))?;

    let report = dse::search(&region, &ws, lcstr, &space, &mcm, cap)?;
    let table = dse_table(&report);
    println!("heterogeneous trunk integration, latency constraint {lcstr} ms");
    print!("{}", table.to_text());
    if report.results.iter().all(|r| r.feasible_configs == 0) {
        println!("no configuration satisfies the latency constraint");
    }
    write_out(&c.out, "dse.csv", &table.to_csv())?;
    let best_json: Vec<serde_json::Value> = report
        .results
        .iter()
        .map(|r| {
            serde_json::json!({
                "ws_count": r.ws_count,
                "feasible": r.feasible_configs,
                "total": r.total_configs,
                "metrics": r.best.as_ref().map(|b| b.metrics),
                "ws_positions": r.best.as_ref().map(|b| b.config.ws_positions
                    .iter().map(|p| format!("{},{}", p.x, p.y)).collect::<Vec<_>>()),
                "assignment": r.best.as_ref().map(|b| b.config.assignment
                    .iter().map(|(l, p)| (l.clone(), format!("{},{}", p.x, p.y)))
                    .collect::<BTreeMap<_, _>>()),
            })
        })
        .collect();
    write_out(
        &c.out,
        "dse.json",
        &format!(
            "{}\n",
            serde_json::to_string_pretty(&serde_json::json!({
                "schema_version": 1,
                "l_cstr_ms": lcstr,
                "results": best_json,
            }))
            .unwrap()
        ),
    )?;
    write_summary(
        &c.out,
        &serde_json::json!({
            "schema_version": 1,
            "command": "dse",
            "l_cstr_ms": lcstr,
            "deltas": report.deltas.iter().map(|(ws, d)| serde_json::json!({
                "ws_count": ws, "energy_pct": d.energy_pct, "edp_pct": d.edp_pct,
            })).collect::<Vec<_>>(),
        }),
    )?;
    Ok(())
}

fn cmd_validate(c: &CommonArgs) -> Result<(), CliError> {
    let graph = load_workload(&c.workload)?;
    let mcm = load_mcm(&c.mcm)?;
    let profile = load_profile(&c.profile)?;
    let violations = validate(&graph);
    for v in &violations {
        println!("violation: {v}");
    }
    if violations.is_empty() {
        println!(
            "workload ok: {} layers, {} edges; mcm ok: {} chiplets; profile ok: {} rows",
            graph.layer_count(),
            graph.edges.len(),
            mcm.chiplet_count(),
            profile.len().max(1)
        );
        Ok(())
    } else {
        Err(CliError::config(format!("{} violation(s) found", violations.len())))
    }
}
