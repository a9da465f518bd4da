//! Prints the headline numbers of every bundled experiment. Development aid
//! for checking the fixture and models hang together; the assertions live in
//! the acceptance test suite.

use mcm_sched::cost::{dataflow_affinity, stage_totals, Dataflow};
use mcm_sched::dse::{self, TrunkSpace};
use mcm_sched::nop::Position;
use mcm_sched::presets;
use mcm_sched::schedule::{baseline, evaluate, throughput_match, MatchOptions, PipelineMode};
use mcm_sched::workload::StageId;

fn main() {
    let graph = presets::autopilot_graph();
    let profile = presets::autopilot_paper_profile();
    let opts = MatchOptions::default();

    println!("== stage totals (OS) ==");
    let totals = stage_totals(&graph, &profile, Dataflow::OutputStationary).unwrap();
    for t in &totals {
        println!(
            "{:10} total {:9.2} ms  instance {:8.2} ms  fraction {:6.2}%",
            t.stage.to_string(),
            t.total_latency_ms,
            t.instance_latency_ms,
            t.fraction * 100.0
        );
    }

    println!("== mean WS/OS latency ratio ==");
    let aff = dataflow_affinity(&graph, &profile).unwrap();
    let ratios: Vec<f64> = graph
        .layers()
        .filter(|l| l.kind.is_compute())
        .map(|l| l.canonical().to_string())
        .collect::<std::collections::BTreeSet<_>>()
        .iter()
        .map(|c| {
            let layer = graph.layers().find(|l| l.canonical() == c).unwrap();
            let os = mcm_sched::cost::layer_cost(layer, Dataflow::OutputStationary, &profile)
                .unwrap()
                .latency_ms;
            let ws = mcm_sched::cost::layer_cost(layer, Dataflow::WeightStationary, &profile)
                .unwrap()
                .latency_ms;
            ws / os
        })
        .collect();
    println!(
        "canonical layers {}  mean ratio {:.4}",
        ratios.len(),
        ratios.iter().sum::<f64>() / ratios.len() as f64
    );
    println!(
        "fusion deltas all negative: {}",
        aff.iter()
            .filter(|r| matches!(r.stage, StageId::SpatialFuse | StageId::TemporalFuse))
            .all(|r| r.delta_latency_ms < 0.0 && r.delta_energy_j < 0.0)
    );

    println!("== 36-chiplet replay ==");
    let mcm = presets::simba_6x6();
    let out = throughput_match(&graph, &mcm, &profile, &opts).unwrap();
    println!("lat_base {:.2}  matched_pipe {:.2}  status {:?}", out.lat_base_ms, out.matched_pipe_ms, out.status);
    for r in &out.log {
        println!(
            "  #{:<2} {:9} {:8} {:18} k {} -> {}  unit {:7.2} ms  stage {:7.2} ms",
            r.iteration, r.action.to_string(), r.stage.to_string(), r.unit, r.k_before, r.k_after,
            r.unit_latency_after_ms, r.stage_pipe_after_ms
        );
    }
    let m36 = evaluate(&out.schedule, &graph, &mcm, &profile).unwrap();
    println!("full-graph metrics: {m36:?}");

    println!("== 72-chiplet replay ==");
    let mcm2 = presets::simba_2x6x6();
    let out2 = throughput_match(&graph, &mcm2, &profile, &opts).unwrap();
    println!("lat_base {:.2}  matched_pipe {:.2}  status {:?}", out2.lat_base_ms, out2.matched_pipe_ms, out2.status);
    for r in &out2.log {
        println!(
            "  #{:<2} {:9} {:8} {:18} k {} -> {}  unit {:7.2} ms  stage {:7.2} ms",
            r.iteration, r.action.to_string(), r.stage.to_string(), r.unit, r.k_before, r.k_after,
            r.unit_latency_after_ms, r.stage_pipe_after_ms
        );
    }

    println!("== comparison (first three stages) ==");
    let g3 = graph.restricted_to(&[StageId::FeBfpn, StageId::SpatialFuse, StageId::TemporalFuse]);
    let sched3 = throughput_match(&g3, &mcm, &profile, &opts).unwrap();
    let m3 = evaluate(&sched3.schedule, &g3, &mcm, &profile).unwrap();
    println!("36x256 scheduled: pipe {:.2} e2e {:.2} energy {:.4} edp {:.1} util {:.2}%",
        m3.pipe_latency_ms, m3.e2e_latency_ms, m3.energy_j, m3.edp_ms_j, m3.utilization * 100.0);
    for (n, pes) in [(1u64, 9216u64), (2, 4608), (4, 2304)] {
        for mode in [PipelineMode::Stagewise, PipelineMode::Layerwise] {
            let b = baseline(&g3, n, pes, &profile, mode).unwrap();
            println!(
                "{n}x{pes} {mode:10}: pipe {:8.2} e2e {:8.2} energy {:.4} edp {:7.1} util {:5.2}%",
                b.pipe_latency_ms, b.e2e_latency_ms, b.energy_j, b.edp_ms_j, b.utilization * 100.0
            );
        }
    }
    println!("energy delta 36x256 vs 1x9216: {:.2}%", {
        let mono = baseline(&g3, 1, 9216, &profile, PipelineMode::Layerwise).unwrap();
        (m3.energy_j - mono.energy_j) / mono.energy_j * 100.0
    });
    println!("util ratio 36x256 / 1x9216: {:.3}", {
        let mono = baseline(&g3, 1, 9216, &profile, PipelineMode::Layerwise).unwrap();
        m3.utilization / mono.utilization
    });

    println!("== trunk DSE ==");
    let space = TrunkSpace::from_graph(&graph, &profile).unwrap();
    let region: Vec<Position> = out
        .schedule
        .stage_regions
        .get(&StageId::Trunks)
        .map(|r| r.iter().copied().collect())
        .unwrap_or_default();
    println!("segmentations {}", dse::segmentation_count(&space, region.len()));
    let t0 = std::time::Instant::now();
    let report = dse::search(&region, &[0, 2, 4], dse::DEFAULT_L_CSTR_MS, &space, &mcm2, dse::DEFAULT_CONFIG_CAP).unwrap();
    println!("search took {:.2?}", t0.elapsed());
    for r in &report.results {
        if let Some(b) = &r.best {
            let d = report.deltas.iter().find(|(ws, _)| *ws == r.ws_count).map(|(_, d)| d);
            println!(
                "ws {}: e2e {:7.2} pipe {:6.2} energy {:.5} edp {:8.3}  dE {:+.2}% dEDP {:+.2}%  ws_pos {:?}",
                r.ws_count,
                b.metrics.e2e_latency_ms,
                b.metrics.pipe_latency_ms,
                b.metrics.energy_j,
                b.metrics.edp_ms_j,
                d.map(|d| d.energy_pct).unwrap_or(0.0),
                d.map(|d| d.edp_pct).unwrap_or(0.0),
                b.config.ws_positions
            );
            // Which layers sit on WS chiplets?
            let ws: std::collections::BTreeSet<_> = b.config.ws_positions.iter().collect();
            let mut per_pos: std::collections::BTreeMap<_, Vec<&str>> = Default::default();
            for (layer, pos) in &b.config.assignment {
                if ws.contains(pos) {
                    per_pos.entry(pos).or_default().push(layer.as_str());
                }
            }
            for (pos, layers) in per_pos {
                println!("    WS {pos}: {layers:?}");
            }
        }
    }
}
