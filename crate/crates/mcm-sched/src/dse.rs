//! Brute-force design-space exploration for the trunk quadrant.
//!
//! Enumerates every way to cut the trunk models into contiguous segments,
//! one segment per region chiplet (no chiplet idles), crossed with every
//! placement of `ws_count` weight-stationary chiplets among the segments.
//! A configuration is scored by its energy-delay product unless some
//! chiplet's assigned compute latency exceeds the latency constraint, in
//! which case it scores negative infinity. Mesh transfers between segments
//! are charged at a nominal one hop during scoring.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{layer_cost, CostError, CostProfile, Dataflow};
use crate::nop::{transfer_cost_hops, McmSpec, Position};
use crate::schedule::PipelineMetrics;
use crate::workload::{StageId, WorkloadGraph};

pub const DEFAULT_CONFIG_CAP: u64 = 10_000_000;
pub const DEFAULT_L_CSTR_MS: f64 = 85.0;

#[derive(Debug, Error)]
pub enum DseError {
    #[error("workload has no trunk stage")]
    NoTrunks,
    #[error("ws_count {0} exceeds region size {1}")]
    WsCountTooLarge(usize, usize),
    #[error("search space of {count} configurations exceeds the cap of {cap}")]
    CapExceeded { count: u64, cap: u64 },
    #[error("region of {0} chiplets cannot host {1} trunk models")]
    RegionTooSmall(usize, usize),
    #[error(transparent)]
    Cost(#[from] CostError),
}

/// Per-layer costs of the trunk models with prefix sums for O(1) segment
/// aggregation.
#[derive(Debug, Clone)]
pub struct TrunkSpace {
    pub trunks: Vec<TrunkCosts>,
    /// (trunk, from layer index, to layer index, bytes) intra-trunk edges.
    intra_edges: Vec<(usize, usize, usize, u64)>,
    /// (trunk, layer index, bytes) edges arriving from outside the stage.
    input_edges: Vec<(usize, usize, u64)>,
}

#[derive(Debug, Clone)]
pub struct TrunkCosts {
    pub name: String,
    pub layer_ids: Vec<String>,
    /// Prefix sums indexed `[dataflow][layer]`, length `len + 1`.
    lat_prefix: [Vec<f64>; 2],
    energy_prefix: [Vec<f64>; 2],
}

impl TrunkCosts {
    pub fn len(&self) -> usize {
        self.layer_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layer_ids.is_empty()
    }

    fn seg_latency(&self, df: Dataflow, a: usize, b: usize) -> f64 {
        let p = &self.lat_prefix[df_index(df)];
        p[b] - p[a]
    }

    fn seg_energy(&self, df: Dataflow, a: usize, b: usize) -> f64 {
        let p = &self.energy_prefix[df_index(df)];
        p[b] - p[a]
    }
}

fn df_index(df: Dataflow) -> usize {
    match df {
        Dataflow::OutputStationary => 0,
        Dataflow::WeightStationary => 1,
    }
}

impl TrunkSpace {
    pub fn from_graph(graph: &WorkloadGraph, profile: &CostProfile) -> Result<Self, DseError> {
        let stage = graph.stage(StageId::Trunks).ok_or(DseError::NoTrunks)?;
        let mut trunks = Vec::new();
        let mut index: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for (t, model) in stage.models.iter().enumerate() {
            let mut lat = [vec![0.0], vec![0.0]];
            let mut energy = [vec![0.0], vec![0.0]];
            let mut ids = Vec::new();
            for (i, layer) in model.layers.iter().enumerate() {
                index.insert(layer.id.as_str(), (t, i));
                for df in Dataflow::BOTH {
                    let c = layer_cost(layer, df, profile)?;
                    let d = df_index(df);
                    let last_l = *lat[d].last().unwrap();
                    let last_e = *energy[d].last().unwrap();
                    lat[d].push(last_l + c.latency_ms);
                    energy[d].push(last_e + c.energy_j);
                }
                ids.push(layer.id.clone());
            }
            trunks.push(TrunkCosts {
                name: model.name.clone(),
                layer_ids: ids,
                lat_prefix: lat,
                energy_prefix: energy,
            });
        }
        let mut intra_edges = Vec::new();
        let mut input_edges = Vec::new();
        for edge in &graph.edges {
            let to = index.get(edge.to.as_str());
            let from = index.get(edge.from.as_str());
            match (from, to) {
                (Some(&(tf, fi)), Some(&(tt, ti))) if tf == tt => {
                    intra_edges.push((tf, fi, ti, edge.shape.byte_size()));
                }
                (None, Some(&(tt, ti))) => {
                    input_edges.push((tt, ti, edge.shape.byte_size()));
                }
                _ => {}
            }
        }
        Ok(Self { trunks, intra_edges, input_edges })
    }

    pub fn total_layers(&self) -> usize {
        self.trunks.iter().map(TrunkCosts::len).sum()
    }
}

/// One heterogeneous configuration: which region chiplets run the
/// weight-stationary dataflow and where every trunk layer lives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HetConfig {
    pub ws_positions: Vec<Position>,
    pub assignment: BTreeMap<String, Position>,
}

#[derive(Debug, Clone)]
pub struct ScoredConfig {
    pub config: HetConfig,
    /// `-EDP`, or negative infinity when any chiplet violates the latency
    /// constraint.
    pub score: f64,
    pub metrics: PipelineMetrics,
}

/// Compact segmentation: per trunk, the segment boundaries
/// `0 = b_0 < b_1 < .. < b_s = len`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Segmentation {
    pub cuts: Vec<Vec<usize>>,
}

impl Segmentation {
    /// Global segment list as (trunk, start, end).
    pub fn segments(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for (t, bounds) in self.cuts.iter().enumerate() {
            for w in bounds.windows(2) {
                out.push((t, w[0], w[1]));
            }
        }
        out
    }
}

/// Advance a strictly increasing combination whose values live in
/// `[lo, lo + pool)`. Returns false when exhausted.
fn advance_combination(combo: &mut [usize], pool: usize, lo: usize) -> bool {
    let k = combo.len();
    if k == 0 {
        return false;
    }
    let mut i = k - 1;
    loop {
        // Highest admissible value at slot i.
        let max_i = lo + pool - (k - i);
        if combo[i] < max_i {
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
        if i == 0 {
            return false;
        }
        i -= 1;
    }
}

fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc.min(u128::from(u64::MAX)) as u64
}

/// Number of surjective contiguous segmentations of the trunks onto
/// `n_chiplets` chiplets.
pub fn segmentation_count(space: &TrunkSpace, n_chiplets: usize) -> u64 {
    // Polynomial product: each trunk of L layers contributes
    // sum_s C(L-1, s-1) x^s.
    let mut poly: Vec<u64> = vec![1];
    for trunk in &space.trunks {
        let l = trunk.len() as u64;
        let mut next = vec![0u64; poly.len() + l as usize];
        for (i, &c) in poly.iter().enumerate() {
            if c == 0 {
                continue;
            }
            for s in 1..=l {
                let ways = binomial(l - 1, s - 1);
                let idx = i + s as usize;
                if idx < next.len() {
                    next[idx] = next[idx].saturating_add(c.saturating_mul(ways));
                }
            }
        }
        poly = next;
    }
    poly.get(n_chiplets).copied().unwrap_or(0)
}

/// Number of dataflow placements: ways to pick the WS chiplets of a region.
pub fn dataflow_placement_count(region_size: usize, ws_count: usize) -> u64 {
    binomial(region_size as u64, ws_count as u64)
}

pub fn config_count(space: &TrunkSpace, n_chiplets: usize, ws_count: usize) -> u64 {
    segmentation_count(space, n_chiplets)
        .saturating_mul(dataflow_placement_count(n_chiplets, ws_count))
}

/// Visit every segmentation of the trunks onto exactly `n_chiplets`
/// segments, in deterministic lexicographic order.
pub fn for_each_segmentation<F: FnMut(&Segmentation)>(
    space: &TrunkSpace,
    n_chiplets: usize,
    mut f: F,
) {
    let lens: Vec<usize> = space.trunks.iter().map(TrunkCosts::len).collect();
    let m = lens.len();
    if m == 0 || n_chiplets < m {
        return;
    }

    // Compositions s_1 + .. + s_m = n with 1 <= s_i <= len_i, then the cut
    // positions per trunk.
    fn rec_comp<F: FnMut(&Segmentation)>(
        lens: &[usize],
        idx: usize,
        remaining: usize,
        counts: &mut Vec<usize>,
        f: &mut F,
    ) {
        if idx == lens.len() {
            if remaining == 0 {
                let mut cuts: Vec<Vec<usize>> = Vec::with_capacity(lens.len());
                for _ in lens {
                    cuts.push(Vec::new());
                }
                rec_cuts(lens, counts, 0, &mut cuts, f);
            }
            return;
        }
        let min_rest: usize = lens.len() - idx - 1;
        let max_here = lens[idx].min(remaining.saturating_sub(min_rest));
        for s in 1..=max_here {
            counts[idx] = s;
            rec_comp(lens, idx + 1, remaining - s, counts, f);
        }
    }

    fn rec_cuts<F: FnMut(&Segmentation)>(
        lens: &[usize],
        counts: &[usize],
        idx: usize,
        cuts: &mut Vec<Vec<usize>>,
        f: &mut F,
    ) {
        if idx == lens.len() {
            let seg = Segmentation { cuts: cuts.clone() };
            f(&seg);
            return;
        }
        let l = lens[idx];
        let s = counts[idx];
        // Choose s-1 interior cut points out of l-1.
        let mut combo: Vec<usize> = (1..s).collect();
        loop {
            let mut bounds = Vec::with_capacity(s + 1);
            bounds.push(0);
            bounds.extend(combo.iter().copied());
            bounds.push(l);
            cuts[idx] = bounds;
            rec_cuts(lens, counts, idx + 1, cuts, f);
            if s == 1 || !advance_combination(&mut combo, l - 1, 1) {
                break;
            }
        }
    }

    rec_comp(&lens, 0, n_chiplets, &mut vec![0usize; m], &mut f);
}

#[derive(Debug, Clone)]
struct SegView {
    trunk: usize,
    lat: [f64; 2],
    energy: [f64; 2],
}

/// Score one (segmentation, WS subset) pair.
fn score_compact(
    segs: &[SegView],
    ws_mask: u32,
    l_cstr_ms: f64,
    nop_energy_j: f64,
    trunk_extra_ms: &[f64],
    n_trunks: usize,
    region_size: usize,
) -> (f64, PipelineMetrics) {
    let mut pipe = 0.0f64;
    let mut energy = nop_energy_j;
    let mut serial = vec![0.0f64; n_trunks];
    let mut feasible = true;
    for (i, seg) in segs.iter().enumerate() {
        let d = if ws_mask & (1 << i) != 0 { 1 } else { 0 };
        let lat = seg.lat[d];
        if lat > l_cstr_ms {
            feasible = false;
        }
        pipe = pipe.max(lat);
        energy += seg.energy[d];
        serial[seg.trunk] += lat;
    }
    let mut e2e = 0.0f64;
    let mut busy = 0.0f64;
    for t in 0..n_trunks {
        e2e = e2e.max(serial[t] + trunk_extra_ms[t]);
        busy += serial[t];
    }
    let utilization = if pipe > 0.0 { (busy / (region_size as f64 * pipe)).min(1.0) } else { 0.0 };
    let metrics = PipelineMetrics {
        e2e_latency_ms: e2e,
        pipe_latency_ms: pipe,
        energy_j: energy,
        edp_ms_j: energy * pipe,
        utilization,
    };
    let score = if feasible { -metrics.edp_ms_j } else { f64::NEG_INFINITY };
    (score, metrics)
}

/// Score a fully materialized configuration (used for spot checks and the
/// exhaustive-oracle tests).
pub fn score(
    config: &HetConfig,
    l_cstr_ms: f64,
    space: &TrunkSpace,
    mcm: &McmSpec,
) -> ScoredConfig {
    let ws: std::collections::BTreeSet<Position> = config.ws_positions.iter().copied().collect();
    let mut per_chiplet: BTreeMap<Position, f64> = BTreeMap::new();
    let mut energy = 0.0;
    let mut serial = vec![0.0f64; space.trunks.len()];
    for (t, trunk) in space.trunks.iter().enumerate() {
        for (i, id) in trunk.layer_ids.iter().enumerate() {
            let pos = config.assignment[id];
            let df = if ws.contains(&pos) {
                Dataflow::WeightStationary
            } else {
                Dataflow::OutputStationary
            };
            let lat = trunk.seg_latency(df, i, i + 1);
            let e = trunk.seg_energy(df, i, i + 1);
            *per_chiplet.entry(pos).or_default() += lat;
            energy += e;
            serial[t] += lat;
        }
    }
    // Mesh terms: one nominal hop per stage-input edge and per edge that
    // crosses chiplets.
    let mut trunk_extra = vec![0.0f64; space.trunks.len()];
    for &(t, _, bytes) in &space.input_edges {
        let c = transfer_cost_hops(bytes, 1, mcm);
        energy += c.energy;
        trunk_extra[t] = trunk_extra[t].max(c.latency * 1e3);
    }
    for &(t, fi, ti, bytes) in &space.intra_edges {
        let from = config.assignment[&space.trunks[t].layer_ids[fi]];
        let to = config.assignment[&space.trunks[t].layer_ids[ti]];
        if from != to {
            let c = transfer_cost_hops(bytes, 1, mcm);
            energy += c.energy;
            trunk_extra[t] += c.latency * 1e3;
        }
    }
    let pipe = per_chiplet.values().copied().fold(0.0, f64::max);
    let feasible = per_chiplet.values().all(|&l| l <= l_cstr_ms);
    let e2e = serial
        .iter()
        .zip(&trunk_extra)
        .map(|(s, x)| s + x)
        .fold(0.0, f64::max);
    let busy: f64 = serial.iter().sum();
    let region = per_chiplet.len().max(1);
    let metrics = PipelineMetrics {
        e2e_latency_ms: e2e,
        pipe_latency_ms: pipe,
        energy_j: energy,
        edp_ms_j: energy * pipe,
        utilization: if pipe > 0.0 { (busy / (region as f64 * pipe)).min(1.0) } else { 0.0 },
    };
    ScoredConfig {
        config: config.clone(),
        score: if feasible { -metrics.edp_ms_j } else { f64::NEG_INFINITY },
        metrics,
    }
}

#[derive(Debug, Clone)]
pub struct WsResult {
    pub ws_count: usize,
    pub best: Option<ScoredConfig>,
    pub feasible_configs: u64,
    pub total_configs: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub e2e_pct: f64,
    pub pipe_pct: f64,
    pub energy_pct: f64,
    pub edp_pct: f64,
}

#[derive(Debug)]
pub struct SearchReport {
    pub results: Vec<WsResult>,
    /// Percent change of each result against the ws_count = 0 best.
    pub deltas: Vec<(usize, DeltaReport)>,
    pub l_cstr_ms: f64,
}

/// Exhaustive search over heterogeneous trunk configurations.
pub fn search(
    region: &[Position],
    ws_counts: &[usize],
    l_cstr_ms: f64,
    space: &TrunkSpace,
    mcm: &McmSpec,
    cap: u64,
) -> Result<SearchReport, DseError> {
    let n = region.len();
    if n < space.trunks.len() {
        return Err(DseError::RegionTooSmall(n, space.trunks.len()));
    }
    for &ws in ws_counts {
        if ws > n {
            return Err(DseError::WsCountTooLarge(ws, n));
        }
    }
    // The cap bounds each ws_count's own space; a batched call is a set of
    // independent searches sharing one segmentation sweep.
    for &ws in ws_counts {
        let count = config_count(space, n, ws);
        if count > cap {
            return Err(DseError::CapExceeded { count, cap });
        }
    }

    let n_trunks = space.trunks.len();
    // Input-edge latency applies to every configuration identically.
    let mut input_extra = vec![0.0f64; n_trunks];
    let mut input_energy = 0.0;
    for &(t, _, bytes) in &space.input_edges {
        let c = transfer_cost_hops(bytes, 1, mcm);
        input_energy += c.energy;
        input_extra[t] = input_extra[t].max(c.latency * 1e3);
    }

    struct Best {
        score: f64,
        key: (Segmentation, u32),
        metrics: PipelineMetrics,
        segs: Vec<(usize, usize, usize)>,
        ws_mask: u32,
    }
    let mut best: BTreeMap<usize, Option<Best>> =
        ws_counts.iter().map(|&ws| (ws, None)).collect();
    let mut feasible: BTreeMap<usize, u64> = ws_counts.iter().map(|&ws| (ws, 0)).collect();
    let mut totals: BTreeMap<usize, u64> = ws_counts.iter().map(|&ws| (ws, 0)).collect();

    for_each_segmentation(space, n, |segmentation| {
        let seg_list = segmentation.segments();
        let segs: Vec<SegView> = seg_list
            .iter()
            .map(|&(t, a, b)| SegView {
                trunk: t,
                lat: [
                    space.trunks[t].seg_latency(Dataflow::OutputStationary, a, b),
                    space.trunks[t].seg_latency(Dataflow::WeightStationary, a, b),
                ],
                energy: [
                    space.trunks[t].seg_energy(Dataflow::OutputStationary, a, b),
                    space.trunks[t].seg_energy(Dataflow::WeightStationary, a, b),
                ],
            })
            .collect();
        // Segment-crossing mesh terms, independent of the dataflow mix.
        let mut cross_energy = input_energy;
        let mut trunk_extra = input_extra.clone();
        for &(t, fi, ti, bytes) in &space.intra_edges {
            let seg_of = |layer: usize| -> usize {
                seg_list
                    .iter()
                    .position(|&(tt, a, b)| tt == t && layer >= a && layer < b)
                    .unwrap_or(0)
            };
            if seg_of(fi) != seg_of(ti) {
                let c = transfer_cost_hops(bytes, 1, mcm);
                cross_energy += c.energy;
                trunk_extra[t] += c.latency * 1e3;
            }
        }
        for &ws in ws_counts {
            let mut combo: Vec<usize> = (0..ws).collect();
            loop {
                let mut mask = 0u32;
                for &i in &combo {
                    mask |= 1 << i;
                }
                *totals.get_mut(&ws).unwrap() += 1;
                let (score, metrics) = score_compact(
                    &segs,
                    mask,
                    l_cstr_ms,
                    cross_energy,
                    &trunk_extra,
                    n_trunks,
                    n,
                );
                if score > f64::NEG_INFINITY {
                    *feasible.get_mut(&ws).unwrap() += 1;
                }
                let slot = best.get_mut(&ws).unwrap();
                let replace = match slot.as_ref() {
                    None => true,
                    Some(b) => {
                        score > b.score
                            || (score == b.score
                                && (segmentation.cuts.as_slice(), mask)
                                    < (b.key.0.cuts.as_slice(), b.key.1))
                    }
                };
                if replace {
                    *slot = Some(Best {
                        score,
                        key: (segmentation.clone(), mask),
                        metrics,
                        segs: seg_list.clone(),
                        ws_mask: mask,
                    });
                }
                // Next choice of ws segment indices out of n.
                if ws == 0 || !advance_combination(&mut combo, n, 0) {
                    break;
                }
            }
        }
    });

    let mut results = Vec::new();
    for &ws in ws_counts {
        let entry = best.remove(&ws).flatten();
        let scored = entry.map(|b| {
            let mut assignment = BTreeMap::new();
            let mut ws_positions = Vec::new();
            for (i, &(t, a, bnd)) in b.segs.iter().enumerate() {
                let pos = region[i];
                if b.ws_mask & (1 << i) != 0 {
                    ws_positions.push(pos);
                }
                for li in a..bnd {
                    assignment.insert(space.trunks[t].layer_ids[li].clone(), pos);
                }
            }
            ScoredConfig {
                config: HetConfig { ws_positions, assignment },
                score: b.score,
                metrics: b.metrics,
            }
        });
        results.push(WsResult {
            ws_count: ws,
            best: scored,
            feasible_configs: feasible[&ws],
            total_configs: totals[&ws],
        });
    }

    let reference = results
        .iter()
        .find(|r| r.ws_count == 0)
        .and_then(|r| r.best.as_ref())
        .map(|b| b.metrics);
    let mut deltas = Vec::new();
    if let Some(base) = reference {
        let pct = |v: f64, b: f64| if b != 0.0 { (v - b) / b * 100.0 } else { 0.0 };
        for r in &results {
            if let Some(best) = &r.best {
                deltas.push((
                    r.ws_count,
                    DeltaReport {
                        e2e_pct: pct(best.metrics.e2e_latency_ms, base.e2e_latency_ms),
                        pipe_pct: pct(best.metrics.pipe_latency_ms, base.pipe_latency_ms),
                        energy_pct: pct(best.metrics.energy_j, base.energy_j),
                        edp_pct: pct(best.metrics.edp_ms_j, base.edp_ms_j),
                    },
                ));
            }
        }
    }
    Ok(SearchReport { results, deltas, l_cstr_ms })
}
