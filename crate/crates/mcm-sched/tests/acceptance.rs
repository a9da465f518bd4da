//! Acceptance suite: one test per headline criterion, each printing a
//! PASS line per check and enforcing its runtime budget. Run with
//!
//!   cargo test --test acceptance -- --nocapture

use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use mcm_sched::cost::{
    analytical_cost, layer_cost, stage_totals, AnalyticalParams, CostEntry, CostProfile, Dataflow,
    ProfileRow, Provenance,
};
use mcm_sched::dse::{self, HetConfig, TrunkSpace};
use mcm_sched::nop::{gather_cost, hops, transfer_cost, McmSpec, Position};
use mcm_sched::presets;
use mcm_sched::schedule::{
    baseline, evaluate, initial_allocation, place, throughput_match, Action, MatchOptions,
    PipelineMode, TrunkPolicy,
};
use mcm_sched::workload::{
    mac_count, ConcurrencyGroup, Edge, KernelSpec, LayerDescriptor, LayerKind, ModelInstance,
    ShardAxis, StageId, StageSpec, TensorShape, WorkloadGraph,
};

struct Budget {
    name: &'static str,
    start: Instant,
    limit: Duration,
}

impl Budget {
    fn new(name: &'static str, limit_s: f64) -> Self {
        Self { name, start: Instant::now(), limit: Duration::from_secs_f64(limit_s) }
    }

    fn pass(&self, check: &str) {
        println!("[PASS] {}: {check}", self.name);
    }
}

impl Drop for Budget {
    fn drop(&mut self) {
        let elapsed = self.start.elapsed();
        println!("[TIME] {}: {:.3}s (budget {:.0}s)", self.name, elapsed.as_secs_f64(), self.limit.as_secs_f64());
        if !std::thread::panicking() {
            assert!(
                elapsed <= self.limit,
                "{} exceeded its runtime budget: {elapsed:?} > {:?}",
                self.name,
                self.limit
            );
        }
    }
}

fn within(value: f64, lo: f64, hi: f64) -> bool {
    value >= lo && value <= hi
}

#[test]
fn criterion_1_nop_arithmetic() {
    let b = Budget::new("criterion 1 (mesh arithmetic)", 1.0);
    let mcm = McmSpec::uniform(6, 6, 256, Dataflow::OutputStationary);

    let c = transfer_cost(409_600, Position::new(0, 0), Position::new(1, 0), &mcm);
    assert!((c.latency - 4.131e-6).abs() < 0.5e-9, "latency {}", c.latency);
    assert!((c.energy - 6.685e-6).abs() < 1.0e-9, "energy {}", c.energy);
    b.pass("409,600 B over 1 hop costs 4.131 us and 6.685 uJ");

    let mut rng = StdRng::seed_from_u64(11);
    for _ in 0..500 {
        let bytes = rng.gen_range(1u64..10_000_000);
        let h = rng.gen_range(1u32..10);
        let base = mcm_sched::nop::transfer_cost_hops(bytes, h, &mcm);
        let double_bytes = mcm_sched::nop::transfer_cost_hops(2 * bytes, h, &mcm);
        // Linear in bytes at fixed hops (latency net of the header term).
        let ser = |c: mcm_sched::nop::TransferCost| c.latency - f64::from(h) * mcm.hop_latency;
        assert!((ser(double_bytes) - 2.0 * ser(base)).abs() < 1e-12);
        assert!((double_bytes.energy - 2.0 * base.energy).abs() < 1e-12);
        // Linear in hops at fixed bytes.
        let double_hops = mcm_sched::nop::transfer_cost_hops(bytes, 2 * h, &mcm);
        assert!((double_hops.latency - 2.0 * base.latency).abs() < 1e-12);
        assert!((double_hops.energy - 2.0 * base.energy).abs() < 1e-12);
    }
    b.pass("transfer cost is linear in bytes and hops (500 random cases)");

    for _ in 0..200 {
        let p = |rng: &mut StdRng| Position::new(rng.gen_range(0..6), rng.gen_range(0..6));
        let (a, m, c) = (p(&mut rng), p(&mut rng), p(&mut rng));
        let direct = hops(a, c, &mcm).unwrap();
        let via = hops(a, m, &mcm).unwrap() + hops(m, c, &mcm).unwrap();
        assert!(direct <= via, "triangle violated: {a} -> {c} via {m}");
    }
    b.pass("hop counts satisfy the triangle inequality (200 random triples)");

    let g = gather_cost(
        &[(Position::new(1, 0), 4096), (Position::new(3, 0), 4096)],
        Position::new(0, 0),
        &mcm,
    );
    let far = transfer_cost(4096, Position::new(3, 0), Position::new(0, 0), &mcm);
    assert_eq!(g.latency, far.latency);
    b.pass("gather latency follows the farthest source");
}

#[test]
fn criterion_2_replay_36_chiplets() {
    let b = Budget::new("criterion 2 (36-chiplet replay)", 5.0);
    let graph = presets::autopilot_graph();
    let profile = presets::autopilot_paper_profile();
    let mcm = presets::simba_6x6();
    let out = throughput_match(&graph, &mcm, &profile, &MatchOptions::default()).unwrap();

    assert!((out.lat_base_ms - 82.7).abs() < 1e-6, "lat_base {}", out.lat_base_ms);
    b.pass("base pipelining latency is 82.7 ms");

    let shards = |unit: &str| -> Vec<(u64, u64, f64)> {
        out.log
            .iter()
            .filter(|r| r.action == Action::Shard && r.unit == unit)
            .map(|r| (r.k_before, r.k_after, r.unit_latency_after_ms))
            .collect()
    };
    let s_ffn = shards("s_ffn");
    assert!(s_ffn.iter().any(|&(_, k, _)| k >= 4), "s_ffn shards: {s_ffn:?}");
    assert!(s_ffn.iter().any(|&(_, k, _)| k == 4) && s_ffn.iter().any(|&(_, k, _)| k == 5));
    b.pass("spatial FFN sharded to 4 then 5 chiplets");

    let t_ffn = shards("t_ffn");
    let hit = t_ffn.iter().find(|&&(_, k, _)| k == 6).expect("t_ffn sharded to 6");
    assert!((hit.2 - 81.7).abs() < 1e-9, "t_ffn latency {}", hit.2);
    b.pass("temporal FFN sharded across 6 chiplets at exactly 490.2/6 = 81.7 ms");

    assert!(shards("t_qkv").iter().any(|&(_, k, _)| k == 2));
    b.pass("temporal projection sharded across 2 chiplets");

    assert!(
        within(out.matched_pipe_ms, 78.0, 88.0),
        "matched pipe {}",
        out.matched_pipe_ms
    );
    b.pass(&format!("final pipelining latency {:.1} ms within [78, 88]", out.matched_pipe_ms));
}

#[test]
fn criterion_3_replay_72_chiplets() {
    let b = Budget::new("criterion 3 (72-chiplet replay)", 10.0);
    let graph = presets::autopilot_graph();
    let profile = presets::autopilot_paper_profile();
    let mcm = presets::simba_2x6x6();
    let out = throughput_match(&graph, &mcm, &profile, &MatchOptions::default()).unwrap();

    // The scale-out decisions must appear in this relative order.
    let mut expected: Vec<Box<dyn Fn(&mcm_sched::schedule::DecisionRecord) -> bool>> = vec![
        Box::new(|r| r.action == Action::Shard && r.unit == "t_qkv" && r.k_after == 4),
        Box::new(|r| {
            r.action == Action::Shard
                && r.unit == "t_ffn"
                && r.k_after == 12
                && r.k_after - r.k_before == 6
        }),
        Box::new(|r| r.action == Action::Split && r.layer.contains("res4_conv1")),
        Box::new(|r| r.action == Action::Shard && r.unit == "s_qkv" && r.k_after == 2),
    ];
    let mut next = 0;
    for r in &out.log {
        if next < expected.len() && expected[next](r) {
            next += 1;
        }
    }
    assert_eq!(next, expected.len(), "scale-out order not found in log: {:#?}", out.log);
    expected.clear();
    b.pass("decision order: t_qkv to 4, t_ffn plus 6 chiplets, model split at res4, s_qkv to 2");

    let lo = 41.1 * 0.95;
    let hi = 41.1 * 1.05;
    assert!(
        within(out.matched_pipe_ms, lo, hi),
        "matched pipe {} outside 41.1 +/- 5%",
        out.matched_pipe_ms
    );
    b.pass(&format!("final pipelining latency {:.2} ms within 5% of 41.1 ms", out.matched_pipe_ms));
}

#[test]
fn criterion_4_baseline_comparison() {
    let b = Budget::new("criterion 4 (baseline comparison)", 10.0);
    let graph = presets::autopilot_graph();
    let profile = presets::autopilot_paper_profile();
    let mcm = presets::simba_6x6();
    let g3 = graph.restricted_to(&[StageId::FeBfpn, StageId::SpatialFuse, StageId::TemporalFuse]);

    let opts = MatchOptions::default();
    let scheduled = throughput_match(&g3, &mcm, &profile, &opts).unwrap();
    let m36 = evaluate(&scheduled.schedule, &g3, &mcm, &profile).unwrap();

    let mut edp_rows = vec![("36x256".to_string(), m36.edp_ms_j)];
    let mut mono = None;
    for mode in [PipelineMode::Stagewise, PipelineMode::Layerwise] {
        for (n, pes) in [(1u64, 9216u64), (2, 4608), (4, 2304)] {
            let m = baseline(&g3, n, pes, &profile, mode).unwrap();
            if n == 1 {
                mono = Some(m);
            }
            edp_rows.push((format!("{n}x{pes}/{mode}"), m.edp_ms_j));
        }
    }
    let mono = mono.unwrap();

    let util_ratio = m36.utilization / mono.utilization;
    assert!(within(util_ratio, 2.4, 3.2), "utilization ratio {util_ratio}");
    b.pass(&format!("PE utilization gain over the monolithic design: {util_ratio:.2}x"));

    let energy_delta = (m36.energy_j - mono.energy_j) / mono.energy_j * 100.0;
    assert!(within(energy_delta, 8.9, 12.9), "energy delta {energy_delta}%");
    b.pass(&format!("package energy overhead vs monolithic: {energy_delta:.2}%"));

    let min = edp_rows
        .iter()
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap();
    assert_eq!(min.0, "36x256", "EDP minimum is {} ({:.1})", min.0, min.1);
    b.pass(&format!("36x256 has the lowest EDP ({:.1} ms*J) of all arrangements", min.1));
}

#[test]
fn criterion_5_trunk_dse() {
    let b = Budget::new("criterion 5 (trunk DSE)", 60.0);
    let graph = presets::autopilot_graph();
    let profile = presets::autopilot_paper_profile();
    let mcm = presets::simba_6x6();
    let space = TrunkSpace::from_graph(&graph, &profile).unwrap();
    let opts = MatchOptions::default();
    let alloc = initial_allocation(&graph, &mcm, &profile, &opts).unwrap();
    let region: Vec<Position> =
        alloc.stage_regions[&StageId::Trunks].iter().copied().collect();

    let report = dse::search(
        &region,
        &[0, 2, 4],
        dse::DEFAULT_L_CSTR_MS,
        &space,
        &mcm,
        dse::DEFAULT_CONFIG_CAP,
    )
    .unwrap();
    let best = |ws: usize| report.results.iter().find(|r| r.ws_count == ws).unwrap().best.as_ref().unwrap();
    let (edp0, edp2, edp4) =
        (best(0).metrics.edp_ms_j, best(2).metrics.edp_ms_j, best(4).metrics.edp_ms_j);
    assert!(edp2 < edp4 && edp4 < edp0, "EDP ordering violated: {edp2} {edp4} {edp0}");
    b.pass(&format!("EDP ordering Het(2) {edp2:.3} < Het(4) {edp4:.3} < OS {edp0:.3}"));

    let delta = |ws: usize| report.deltas.iter().find(|(w, _)| *w == ws).unwrap().1.energy_pct;
    let (d2, d4) = (delta(2), delta(4));
    assert!(within(d2, -3.1, 0.9), "Het(2) energy delta {d2}%");
    assert!(within(d4, -8.2, -4.2), "Het(4) energy delta {d4}%");
    b.pass(&format!("energy reductions {d2:.2}% / {d4:.2}% within 2 points of 1.1% / 6.2%"));

    // Exhaustive oracle on a two-layer, two-chiplet instance: sweep all 16
    // raw (assignment x dataflow) combinations by hand.
    let mk = |id: &str| LayerDescriptor {
        id: id.into(),
        kind: LayerKind::Conv,
        input_shapes: vec![TensorShape::new(1, 8, 4, 4)],
        output_shape: TensorShape::new(1, 8, 4, 4),
        kernel: Some(KernelSpec { r: 3, s: 3, stride: 1, in_channels: 8, out_channels: 8 }),
        seq_len: None,
        model_dim: None,
    };
    let tiny = WorkloadGraph {
        schema_version: 1,
        stages: vec![StageSpec {
            stage_id: StageId::Trunks,
            models: vec![
                ModelInstance { name: "t0".into(), layers: vec![mk("t0/a")] },
                ModelInstance { name: "t1".into(), layers: vec![mk("t1/b")] },
            ],
            concurrency_groups: vec![],
        }],
        edges: vec![Edge { from: "t0/a".into(), to: "t1/b".into(), shape: TensorShape::new(1, 8, 4, 4) }],
    };
    let row = |lat: f64, e: f64| ProfileRow {
        entry: CostEntry { latency_ms: lat, energy_j: e },
        provenance: Provenance::Synthetic,
    };
    let tiny_profile = CostProfile::from_rows([
        ("t0/a".to_string(), Dataflow::OutputStationary, row(10.0, 0.020)),
        ("t0/a".to_string(), Dataflow::WeightStationary, row(30.0, 0.010)),
        ("t1/b".to_string(), Dataflow::OutputStationary, row(12.0, 0.015)),
        ("t1/b".to_string(), Dataflow::WeightStationary, row(40.0, 0.018)),
    ]);
    let tiny_space = TrunkSpace::from_graph(&tiny, &tiny_profile).unwrap();
    let tiny_mcm = McmSpec::uniform(2, 1, 256, Dataflow::OutputStationary);
    let tiny_region = [Position::new(0, 0), Position::new(1, 0)];
    let mut oracle = f64::NEG_INFINITY;
    let mut oracle_configs = 0;
    for a_pos in 0..2usize {
        for b_pos in 0..2usize {
            for mask in 0..4u32 {
                oracle_configs += 1;
                if a_pos == b_pos {
                    continue; // leaves a chiplet idle; dominated here
                }
                let config = HetConfig {
                    ws_positions: (0..2)
                        .filter(|i| mask & (1 << i) != 0)
                        .map(|i| tiny_region[i])
                        .collect(),
                    assignment: [
                        ("t0/a".to_string(), tiny_region[a_pos]),
                        ("t1/b".to_string(), tiny_region[b_pos]),
                    ]
                    .into_iter()
                    .collect(),
                };
                oracle = oracle.max(dse::score(&config, 100.0, &tiny_space, &tiny_mcm).score);
            }
        }
    }
    assert_eq!(oracle_configs, 16);
    let tiny_report =
        dse::search(&tiny_region, &[0, 1, 2], 100.0, &tiny_space, &tiny_mcm, 1000).unwrap();
    let tiny_best = tiny_report
        .results
        .iter()
        .filter_map(|r| r.best.as_ref())
        .map(|b| b.score)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!((tiny_best - oracle).abs() < 1e-12, "search {tiny_best} vs oracle {oracle}");
    b.pass("search equals the 16-configuration hand enumeration on the tiny instance");
}

#[test]
fn criterion_6_coarse_analysis() {
    let b = Budget::new("criterion 6 (coarse analysis)", 1.0);
    let graph = presets::autopilot_graph();
    let profile = presets::autopilot_paper_profile();

    let mut seen = std::collections::BTreeSet::new();
    let mut ratios = Vec::new();
    for layer in graph.layers().filter(|l| l.kind.is_compute()) {
        if !seen.insert(layer.canonical().to_string()) {
            continue;
        }
        let os = layer_cost(layer, Dataflow::OutputStationary, &profile).unwrap().latency_ms;
        let ws = layer_cost(layer, Dataflow::WeightStationary, &profile).unwrap().latency_ms;
        ratios.push(ws / os);
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!(within(mean, 6.85 * 0.95, 6.85 * 1.05), "mean ratio {mean}");
    b.pass(&format!("mean WS/OS latency ratio {mean:.3} within 5% of 6.85"));

    let totals = stage_totals(&graph, &profile, Dataflow::OutputStationary).unwrap();
    let frac = |id: StageId| totals.iter().find(|t| t.stage == id).unwrap().fraction;
    let t = frac(StageId::TemporalFuse);
    let s = frac(StageId::SpatialFuse);
    assert!(within(t, 0.52, 0.54), "temporal share {t}");
    assert!(within(s, 0.25, 0.28), "spatial share {s}");
    b.pass(&format!("latency shares: temporal fusion {:.1}%, spatial fusion {:.1}%", t * 100.0, s * 100.0));

    let sum: f64 = totals.iter().map(|t| t.fraction).sum();
    assert!((sum - 1.0).abs() < 1e-9);
    b.pass("stage fractions sum to 1");
}

// ── Criterion 7: property suites on random workloads ─────────────────

fn random_graph(rng: &mut StdRng) -> (WorkloadGraph, CostProfile) {
    let n_stages = rng.gen_range(1..=4usize);
    let stage_ids = &StageId::ALL[..n_stages];
    let mut stages = Vec::new();
    let mut edges = Vec::new();
    let mut profile_rows = Vec::new();
    let mut prev_tail: Option<String> = None;
    for &sid in stage_ids {
        let n_units = rng.gen_range(1..=3usize);
        let mut models = Vec::new();
        let mut groups = Vec::new();
        for u in 0..n_units {
            let n_layers = rng.gen_range(1..=3usize);
            let mut layers = Vec::new();
            for l in 0..n_layers {
                let id = format!("{sid}/u{u}_l{l}");
                let lat = rng.gen_range(0.5..50.0f64);
                for df in Dataflow::BOTH {
                    profile_rows.push((
                        id.clone(),
                        df,
                        ProfileRow {
                            entry: CostEntry {
                                latency_ms: if df == Dataflow::OutputStationary {
                                    lat
                                } else {
                                    lat * rng.gen_range(2.0..8.0)
                                },
                                energy_j: lat * 1e-3,
                            },
                            provenance: Provenance::Synthetic,
                        },
                    ));
                }
                let layer = LayerDescriptor {
                    id: id.clone(),
                    kind: LayerKind::Conv,
                    input_shapes: vec![TensorShape::new(1, 16, 8, 8)],
                    output_shape: TensorShape::new(1, 16, 8, 8),
                    kernel: Some(KernelSpec {
                        r: 3,
                        s: 3,
                        stride: 1,
                        in_channels: 16,
                        out_channels: 16,
                    }),
                    seq_len: None,
                    model_dim: None,
                };
                if let Some(prev) = &prev_tail {
                    edges.push(Edge {
                        from: prev.clone(),
                        to: id.clone(),
                        shape: TensorShape::new(1, 16, 8, 8),
                    });
                }
                prev_tail = Some(id.clone());
                layers.push(layer);
            }
            let replication = rng.gen_range(1..=8u64);
            groups.push(ConcurrencyGroup {
                name: format!("{sid}/g{u}"),
                member_layer_ids: layers.iter().map(|l| l.id.clone()).collect(),
                replication,
                shardable: rng.gen_bool(0.7),
                shard_axis: ShardAxis::Replica,
            });
            models.push(ModelInstance { name: format!("{sid}/m{u}"), layers });
        }
        stages.push(StageSpec { stage_id: sid, models, concurrency_groups: groups });
    }
    let graph = WorkloadGraph { schema_version: 1, stages, edges };
    (graph, CostProfile::from_rows(profile_rows))
}

#[test]
fn criterion_7_property_suites() {
    let b = Budget::new("criterion 7 (scheduler properties)", 120.0);
    let mut rng = StdRng::seed_from_u64(20_240_601);
    let opts = MatchOptions { mode: PipelineMode::Stagewise, trunks: TrunkPolicy::Scheduled };

    let mut ran = 0;
    for _ in 0..200 {
        let (graph, profile) = random_graph(&mut rng);
        let side = rng.gen_range(2..=6u32) & !1; // even grid side
        let side = side.max(2);
        let mcm = McmSpec::uniform(side, side, 256, Dataflow::OutputStationary);
        let out = match throughput_match(&graph, &mcm, &profile, &opts) {
            Ok(out) => out,
            Err(mcm_sched::schedule::ScheduleError::Capacity { .. }) => continue,
            Err(e) => panic!("unexpected scheduling error: {e}"),
        };
        ran += 1;

        // Termination bound: every shard/split consumes at least one free
        // chiplet, so moves never exceed the chiplet count.
        let moves = out
            .log
            .iter()
            .filter(|r| matches!(r.action, Action::Shard | Action::Split))
            .count();
        assert!(
            moves <= mcm.chiplet_count(),
            "{moves} moves on a {} chiplet grid",
            mcm.chiplet_count()
        );

        // Monotone progress: the bottleneck never worsens, and shard moves
        // on the bottleneck strictly reduce its stage pipe.
        let mut worst_seen = f64::INFINITY;
        for r in &out.log {
            if r.action == Action::Shard {
                assert!(
                    r.stage_pipe_after_ms <= worst_seen * (1.0 + 1e-9),
                    "stage pipe grew: {} after seeing {}",
                    r.stage_pipe_after_ms,
                    worst_seen
                );
                worst_seen = worst_seen.min(r.stage_pipe_after_ms.max(out.matched_pipe_ms));
            }
        }

        // Quadrant discipline: regions stay disjoint, so no chiplet hosts
        // two stages.
        let mut owner = std::collections::BTreeMap::new();
        for (stage, region) in &out.schedule.stage_regions {
            for p in region {
                if let Some(prev) = owner.insert(*p, *stage) {
                    panic!("chiplet {p} assigned to both {prev} and {stage}");
                }
            }
        }
    }
    assert!(ran >= 150, "only {ran} random graphs were schedulable");
    b.pass(&format!("termination, monotonicity, quadrant discipline on {ran} random graphs"));

    // Compute-energy conservation: the same workload scheduled onto grids
    // with different shard factors burns identical compute energy once mesh
    // terms are disabled.
    let (graph, profile) = random_graph(&mut StdRng::seed_from_u64(7));
    let mut energies = Vec::new();
    for side in [2u32, 4, 6] {
        let mut mcm = McmSpec::uniform(side, side, 256, Dataflow::OutputStationary);
        mcm.energy_per_bit = 0.0;
        if let Ok(out) = throughput_match(&graph, &mcm, &profile, &opts) {
            let m = evaluate(&out.schedule, &graph, &mcm, &profile).unwrap();
            energies.push(m.energy_j);
        }
    }
    assert!(energies.len() >= 2);
    for w in energies.windows(2) {
        assert!((w[0] - w[1]).abs() < 1e-12, "compute energy varies with sharding: {energies:?}");
    }
    b.pass("compute energy is conserved under arbitrary shard factors");

    // Determinism: five runs of the full pipeline produce bit-identical
    // metrics.
    let graph = presets::autopilot_graph();
    let profile = presets::autopilot_paper_profile();
    let mcm = presets::simba_6x6();
    let runs: Vec<_> = (0..5)
        .map(|_| {
            let out = throughput_match(&graph, &mcm, &profile, &MatchOptions::default()).unwrap();
            evaluate(&out.schedule, &graph, &mcm, &profile).unwrap()
        })
        .collect();
    for m in &runs[1..] {
        assert_eq!(m, &runs[0]);
    }
    b.pass("evaluation is bit-identical across 5 runs");

    // Greedy placement beats the median of random placements on mesh
    // energy for a small DAG.
    let (graph, profile) = five_layer_dag();
    let mcm = McmSpec::uniform(4, 4, 256, Dataflow::OutputStationary);
    let opts1 = MatchOptions { mode: PipelineMode::Stagewise, trunks: TrunkPolicy::Scheduled };
    let mut schedule = initial_allocation(&graph, &mcm, &profile, &opts1).unwrap();
    place(&mut schedule, &graph, &mcm).unwrap();
    let compute_energy: f64 = graph
        .layers()
        .map(|l| layer_cost(l, Dataflow::OutputStationary, &profile).unwrap().energy_j)
        .sum();
    let greedy_nop =
        evaluate(&schedule, &graph, &mcm, &profile).unwrap().energy_j - compute_energy;

    let region: Vec<Position> =
        schedule.stage_regions[&StageId::FeBfpn].iter().copied().collect();
    let mut rng = StdRng::seed_from_u64(99);
    let mut random_energies = Vec::new();
    for _ in 0..100 {
        let mut shuffled = schedule.clone();
        // Random permutation of region positions across the unit slots.
        let mut pool = region.clone();
        for i in (1..pool.len()).rev() {
            let j = rng.gen_range(0..=i);
            pool.swap(i, j);
        }
        let mut next = 0;
        for unit in &mut shuffled.units {
            let k = unit.positions.len();
            unit.positions = pool[next..next + k].to_vec();
            next += k;
        }
        let e = evaluate(&shuffled, &graph, &mcm, &profile).unwrap().energy_j - compute_energy;
        random_energies.push(e);
    }
    random_energies.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = random_energies[random_energies.len() / 2];
    assert!(
        greedy_nop <= median * (1.0 + 1e-9),
        "greedy {greedy_nop} exceeds random median {median}"
    );
    b.pass(&format!(
        "greedy placement mesh energy {:.3e} J <= median of 100 random placements {:.3e} J",
        greedy_nop, median
    ));
}

fn five_layer_dag() -> (WorkloadGraph, CostProfile) {
    let mk = |id: &str, c: u64| LayerDescriptor {
        id: id.into(),
        kind: LayerKind::Conv,
        input_shapes: vec![TensorShape::new(1, c, 32, 32)],
        output_shape: TensorShape::new(1, c, 32, 32),
        kernel: Some(KernelSpec { r: 3, s: 3, stride: 1, in_channels: c, out_channels: c }),
        seq_len: None,
        model_dim: None,
    };
    let names = ["a", "b", "c", "d", "e"];
    let layers: Vec<LayerDescriptor> =
        names.iter().enumerate().map(|(i, n)| mk(n, 64 << (i % 3))).collect();
    let shapes: std::collections::BTreeMap<&str, TensorShape> =
        names.iter().zip(layers.iter().map(|l| l.output_shape)).map(|(n, s)| (*n, s)).collect();
    let edges = [("a", "b"), ("a", "c"), ("b", "d"), ("c", "d"), ("d", "e")]
        .iter()
        .map(|(f, t)| Edge { from: f.to_string(), to: t.to_string(), shape: shapes[f] })
        .collect();
    let groups = layers
        .iter()
        .map(|l| ConcurrencyGroup {
            name: format!("g_{}", l.id),
            member_layer_ids: vec![l.id.clone()],
            replication: 4,
            shardable: true,
            shard_axis: ShardAxis::Replica,
        })
        .collect();
    let models = layers
        .iter()
        .map(|l| ModelInstance { name: format!("m_{}", l.id), layers: vec![l.clone()] })
        .collect();
    let graph = WorkloadGraph {
        schema_version: 1,
        stages: vec![StageSpec { stage_id: StageId::FeBfpn, models, concurrency_groups: groups }],
        edges,
    };
    let profile = CostProfile::from_rows(names.iter().flat_map(|n| {
        Dataflow::BOTH.map(|df| {
            (
                n.to_string(),
                df,
                ProfileRow {
                    entry: CostEntry { latency_ms: 5.0, energy_j: 0.005 },
                    provenance: Provenance::Synthetic,
                },
            )
        })
    }));
    (graph, profile)
}

#[test]
fn criterion_8_trunk_ablations() {
    let b = Budget::new("criterion 8 (trunk ablations)", 10.0);
    let graph = presets::autopilot_graph();
    let profile = presets::autopilot_paper_profile();
    let params = AnalyticalParams::default();

    let trunks = graph.stage(StageId::Trunks).unwrap();
    let occupancy = trunks.models.iter().find(|m| m.name == "ocup_tr").unwrap();

    // MAC-count oracle over the deconvolution stack.
    let macs: Vec<u64> = occupancy.layers.iter().map(mac_count).collect();
    let total: u64 = macs.iter().sum();
    let final_share = *macs.last().unwrap() as f64 / total as f64;
    assert!(final_share >= 0.70, "final layer MAC share {final_share}");
    b.pass(&format!("16x upscaling: final layer carries {:.1}% of stage MACs", final_share * 100.0));

    let e2e = |levels: usize| -> f64 {
        occupancy.layers[..levels]
            .iter()
            .map(|l| analytical_cost(l, Dataflow::OutputStationary, &params).latency_ms)
            .sum()
    };
    let ratio = e2e(2) / e2e(1);
    assert!(ratio >= 3.0, "4x/2x latency ratio {ratio}");
    b.pass(&format!("occupancy latency grows {ratio:.2}x from 2x to 4x upscaling"));

    // Lane trunk under context-aware computing.
    let lane = trunks.models.iter().find(|m| m.name == "lane_tr").unwrap();
    let serial: f64 = lane
        .layers
        .iter()
        .map(|l| layer_cost(l, Dataflow::OutputStationary, &profile).unwrap().latency_ms)
        .sum();
    let threshold = 82.0;
    assert!(0.6 * serial <= threshold, "60% compute misses the threshold: {}", 0.6 * serial);
    assert!(serial > threshold, "100% compute satisfies the threshold: {serial}");
    b.pass(&format!(
        "lane trunk crosses the {threshold} ms threshold between 60% and 100% compute ({:.1} ms full)",
        serial
    ));
}
