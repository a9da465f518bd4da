//! Per-layer latency/energy costs under the two dataflows.
//!
//! Costs come either from a profile table (fixture files carrying measured
//! or published numbers, keyed by canonical layer name) or from a simplified
//! analytical model driven by MAC counts. The sharding law is ideal: a layer
//! sharded k ways runs k times faster while its compute energy is conserved;
//! mesh gather costs are charged separately by the scheduler.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::workload::{canonical_of, mac_count, LayerDescriptor, LayerKind, StageId, WorkloadGraph};

pub const PROFILE_SCHEMA_VERSION: u32 = 1;

/// Reference PE count the bundled profile tables are calibrated against.
pub const PROFILE_REF_PE: u64 = 256;

/// Per-MAC energy efficiency exponent across array sizes: a chiplet with
/// `n` PEs spends `(n/256)^-BETA_ENERGY` of the reference energy per MAC.
/// Calibrated so one 9216-PE array is 1.109x more energy efficient than
/// thirty-six 256-PE chiplets.
pub const BETA_ENERGY: f64 = 0.028_879_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dataflow {
    #[serde(rename = "os")]
    OutputStationary,
    #[serde(rename = "ws")]
    WeightStationary,
}

impl Dataflow {
    pub const BOTH: [Dataflow; 2] = [Dataflow::OutputStationary, Dataflow::WeightStationary];
}

impl fmt::Display for Dataflow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dataflow::OutputStationary => write!(f, "os"),
            Dataflow::WeightStationary => write!(f, "ws"),
        }
    }
}

impl std::str::FromStr for Dataflow {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "os" => Ok(Dataflow::OutputStationary),
            "ws" => Ok(Dataflow::WeightStationary),
            other => Err(format!("unknown dataflow `{other}` (expected `os` or `ws`)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostEntry {
    pub latency_ms: f64,
    pub energy_j: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Paper,
    Synthetic,
    Measured,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Paper => write!(f, "paper"),
            Provenance::Synthetic => write!(f, "synthetic"),
            Provenance::Measured => write!(f, "measured"),
        }
    }
}

impl std::str::FromStr for Provenance {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" => Ok(Provenance::Paper),
            "synthetic" => Ok(Provenance::Synthetic),
            "measured" => Ok(Provenance::Measured),
            other => Err(format!("unknown provenance `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostSource {
    FixtureFile,
    Analytical,
}

/// Analytical model parameters. Utilization defaults are calibrated so the
/// OS/WS latency ratio comes out near the measured workload-level speedup;
/// they are a calibration, not ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticalParams {
    pub pe_count: u64,
    pub frequency_hz: f64,
    pub macs_per_pe_per_cycle: u64,
    pub os_utilization: f64,
    pub ws_utilization: f64,
    pub energy_per_mac_os: f64,
    pub energy_per_mac_ws: f64,
    pub energy_per_byte_dram: f64,
}

impl Default for AnalyticalParams {
    fn default() -> Self {
        let os_utilization = 0.82;
        Self {
            pe_count: 256,
            frequency_hz: 2e9,
            macs_per_pe_per_cycle: 1,
            os_utilization,
            ws_utilization: os_utilization / 6.85,
            energy_per_mac_os: 1.2e-12,
            energy_per_mac_ws: 1.0e-12,
            energy_per_byte_dram: 15e-12,
        }
    }
}

impl AnalyticalParams {
    pub fn utilization(&self, dataflow: Dataflow) -> f64 {
        match dataflow {
            Dataflow::OutputStationary => self.os_utilization,
            Dataflow::WeightStationary => self.ws_utilization,
        }
    }

    pub fn energy_per_mac(&self, dataflow: Dataflow) -> f64 {
        match dataflow {
            Dataflow::OutputStationary => self.energy_per_mac_os,
            Dataflow::WeightStationary => self.energy_per_mac_ws,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("no cost entry for layer `{layer}` under dataflow `{dataflow}`")]
    MissingEntry { layer: String, dataflow: Dataflow },
    #[error("profile parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("shard factor must be >= 1")]
    ZeroShard,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileRow {
    pub entry: CostEntry,
    pub provenance: Provenance,
}

/// Cost table for a workload, keyed by canonical layer name and dataflow.
#[derive(Debug, Clone, PartialEq)]
pub struct CostProfile {
    pub source: CostSource,
    entries: BTreeMap<(String, Dataflow), ProfileRow>,
    pub analytical: Option<AnalyticalParams>,
}

impl CostProfile {
    pub fn analytical(params: AnalyticalParams) -> Self {
        Self { source: CostSource::Analytical, entries: BTreeMap::new(), analytical: Some(params) }
    }

    pub fn from_rows(rows: impl IntoIterator<Item = (String, Dataflow, ProfileRow)>) -> Self {
        let entries = rows.into_iter().map(|(id, df, row)| ((id, df), row)).collect();
        Self { source: CostSource::FixtureFile, entries, analytical: None }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, Dataflow, &ProfileRow)> {
        self.entries.iter().map(|((id, df), row)| (id.as_str(), *df, row))
    }

    pub fn lookup(&self, layer_id: &str, dataflow: Dataflow) -> Option<CostEntry> {
        if let Some(row) = self.entries.get(&(layer_id.to_string(), dataflow)) {
            return Some(row.entry);
        }
        let canonical = canonical_of(layer_id);
        if canonical != layer_id {
            if let Some(row) = self.entries.get(&(canonical.to_string(), dataflow)) {
                return Some(row.entry);
            }
        }
        None
    }

    /// Parse the profile CSV format (see docs/formats.md). Unknown columns,
    /// dataflows, or provenance tags are rejected.
    pub fn parse(text: &str) -> Result<CostProfile, CostError> {
        let mut entries = BTreeMap::new();
        let mut saw_version = false;
        let mut saw_header = false;
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !saw_version {
                let expected = format!("schema_version,{PROFILE_SCHEMA_VERSION}");
                if line != expected {
                    return Err(CostError::Parse {
                        line: line_no,
                        message: format!("expected `{expected}`, got `{line}`"),
                    });
                }
                saw_version = true;
                continue;
            }
            if !saw_header {
                if line != "layer_id,dataflow,latency_ms,energy_j,provenance" {
                    return Err(CostError::Parse {
                        line: line_no,
                        message: format!("unexpected header `{line}`"),
                    });
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(CostError::Parse {
                    line: line_no,
                    message: format!("expected 5 fields, got {}", fields.len()),
                });
            }
            let dataflow: Dataflow = fields[1]
                .parse()
                .map_err(|e| CostError::Parse { line: line_no, message: e })?;
            let latency_ms: f64 = fields[2].parse().map_err(|_| CostError::Parse {
                line: line_no,
                message: format!("bad latency `{}`", fields[2]),
            })?;
            let energy_j: f64 = fields[3].parse().map_err(|_| CostError::Parse {
                line: line_no,
                message: format!("bad energy `{}`", fields[3]),
            })?;
            if !latency_ms.is_finite() || latency_ms < 0.0 || !energy_j.is_finite() || energy_j < 0.0
            {
                return Err(CostError::Parse {
                    line: line_no,
                    message: "latency and energy must be finite and non-negative".into(),
                });
            }
            let provenance: Provenance = fields[4]
                .parse()
                .map_err(|e| CostError::Parse { line: line_no, message: e })?;
            let key = (fields[0].to_string(), dataflow);
            if entries
                .insert(key, ProfileRow { entry: CostEntry { latency_ms, energy_j }, provenance })
                .is_some()
            {
                return Err(CostError::Parse {
                    line: line_no,
                    message: format!("duplicate row for `{}` / {dataflow}", fields[0]),
                });
            }
        }
        if !saw_version || !saw_header {
            return Err(CostError::Parse { line: 0, message: "missing schema or header".into() });
        }
        Ok(CostProfile { source: CostSource::FixtureFile, entries, analytical: None })
    }

    pub fn emit(&self) -> String {
        let mut out = String::from("# mcm-sched cost profile\n");
        out.push_str(&format!("schema_version,{PROFILE_SCHEMA_VERSION}\n"));
        out.push_str("layer_id,dataflow,latency_ms,energy_j,provenance\n");
        for ((id, df), row) in &self.entries {
            out.push_str(&format!(
                "{id},{df},{},{},{}\n",
                row.entry.latency_ms, row.entry.energy_j, row.provenance
            ));
        }
        out
    }

    /// Verify every compute layer of `graph` has entries for `dataflows`.
    pub fn check_coverage(
        &self,
        graph: &WorkloadGraph,
        dataflows: &[Dataflow],
    ) -> Result<(), CostError> {
        if self.source == CostSource::Analytical {
            return Ok(());
        }
        for layer in graph.layers().filter(|l| l.kind.is_compute()) {
            for &df in dataflows {
                if self.lookup(&layer.id, df).is_none() {
                    return Err(CostError::MissingEntry { layer: layer.id.clone(), dataflow: df });
                }
            }
        }
        Ok(())
    }
}

/// Latency and energy of one layer under one dataflow.
pub fn layer_cost(
    layer: &LayerDescriptor,
    dataflow: Dataflow,
    profile: &CostProfile,
) -> Result<CostEntry, CostError> {
    match profile.source {
        CostSource::FixtureFile => {
            if !layer.kind.is_compute() {
                return Ok(CostEntry::default());
            }
            profile.lookup(&layer.id, dataflow).ok_or_else(|| CostError::MissingEntry {
                layer: layer.id.clone(),
                dataflow,
            })
        }
        CostSource::Analytical => {
            let params = profile.analytical.as_ref().cloned().unwrap_or_default();
            Ok(analytical_cost(layer, dataflow, &params))
        }
    }
}

pub fn analytical_cost(
    layer: &LayerDescriptor,
    dataflow: Dataflow,
    params: &AnalyticalParams,
) -> CostEntry {
    let macs = mac_count(layer) as f64;
    let moved_bytes: u64 = layer.input_shapes.iter().map(|s| s.byte_size()).sum::<u64>()
        + layer.output_shape.byte_size();
    let rate = params.pe_count as f64
        * params.macs_per_pe_per_cycle as f64
        * params.frequency_hz
        * params.utilization(dataflow);
    let latency_ms = if macs > 0.0 { macs / rate * 1e3 } else { 0.0 };
    let energy_j =
        macs * params.energy_per_mac(dataflow) + moved_bytes as f64 * params.energy_per_byte_dram;
    CostEntry { latency_ms, energy_j }
}

/// Ideal sharding law: latency divides by k, compute energy is conserved.
pub fn shard_cost(entry: CostEntry, k: u64) -> Result<CostEntry, CostError> {
    if k == 0 {
        return Err(CostError::ZeroShard);
    }
    Ok(CostEntry { latency_ms: entry.latency_ms / k as f64, energy_j: entry.energy_j })
}

/// Output-stationary spatial parallelism: the PE array maps a 2D output
/// tile, so a layer cannot occupy more PEs than its output plane offers.
pub fn os_parallelism(layer: &LayerDescriptor, pe_count: u64) -> u64 {
    let (ah, aw) = array_dims(pe_count);
    let h = layer.output_shape.height;
    let w = layer.output_shape.width;
    (h.min(ah) * w.min(aw)).max(1)
}

/// Weight-stationary parallelism: bounded by the reduction volume held
/// stationary in the array.
pub fn ws_parallelism(layer: &LayerDescriptor, pe_count: u64) -> u64 {
    let p = match layer.kind {
        LayerKind::Conv | LayerKind::Deconv => {
            let k = layer.kernel.expect("conv kind requires kernel");
            k.r * k.s * k.in_channels
        }
        _ => layer
            .model_dim
            .or_else(|| layer.input_shapes.first().map(|s| s.channels))
            .unwrap_or(1),
    };
    p.min(pe_count).max(1)
}

pub fn parallelism(layer: &LayerDescriptor, dataflow: Dataflow, pe_count: u64) -> u64 {
    match dataflow {
        Dataflow::OutputStationary => os_parallelism(layer, pe_count),
        Dataflow::WeightStationary => ws_parallelism(layer, pe_count),
    }
}

fn array_dims(pe_count: u64) -> (u64, u64) {
    let ah = (pe_count as f64).sqrt().floor() as u64;
    let ah = ah.max(1);
    (ah, pe_count / ah)
}

/// Rescale a reference-PE latency onto an array with `target_pe` PEs.
/// PE-time is invariant: `lat * effective_pes` stays constant, with the
/// effective PE count capped by the layer's parallelism on each array.
pub fn scale_latency_to_pe(
    latency_ms: f64,
    layer: &LayerDescriptor,
    dataflow: Dataflow,
    target_pe: u64,
) -> f64 {
    let e_ref = parallelism(layer, dataflow, PROFILE_REF_PE) as f64;
    let e_tgt = parallelism(layer, dataflow, target_pe) as f64;
    latency_ms * e_ref / e_tgt
}

/// Per-MAC energy factor of an array relative to the reference chiplet.
pub fn energy_scale_to_pe(target_pe: u64) -> f64 {
    (target_pe as f64 / PROFILE_REF_PE as f64).powf(-BETA_ENERGY)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffinityRow {
    pub canonical: String,
    pub stage: StageId,
    /// `latency(OS) - latency(WS)` in ms; negative means OS-affine.
    pub delta_latency_ms: f64,
    /// `energy(OS) - energy(WS)` in joules; negative means OS-affine.
    pub delta_energy_j: f64,
}

/// Per-layer dataflow affinity over canonical layers.
pub fn dataflow_affinity(
    graph: &WorkloadGraph,
    profile: &CostProfile,
) -> Result<Vec<AffinityRow>, CostError> {
    let mut seen = BTreeMap::new();
    let mut rows = Vec::new();
    for stage in &graph.stages {
        for layer in stage.layers().filter(|l| l.kind.is_compute()) {
            let canonical = layer.canonical().to_string();
            if seen.insert(canonical.clone(), ()).is_some() {
                continue;
            }
            let os = layer_cost(layer, Dataflow::OutputStationary, profile)?;
            let ws = layer_cost(layer, Dataflow::WeightStationary, profile)?;
            rows.push(AffinityRow {
                canonical,
                stage: stage.stage_id,
                delta_latency_ms: os.latency_ms - ws.latency_ms,
                delta_energy_j: os.energy_j - ws.energy_j,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageTotal {
    pub stage: StageId,
    /// Sum over every physical layer (replicated instances counted once per
    /// instance).
    pub total_latency_ms: f64,
    pub total_energy_j: f64,
    /// Sum over canonical layers, i.e. one representative per replicated
    /// instance set.
    pub instance_latency_ms: f64,
    /// Share of `instance_latency_ms` across stages; sums to 1.
    pub fraction: f64,
}

/// Per-stage serial totals under one dataflow.
pub fn stage_totals(
    graph: &WorkloadGraph,
    profile: &CostProfile,
    dataflow: Dataflow,
) -> Result<Vec<StageTotal>, CostError> {
    let mut rows = Vec::new();
    for stage in &graph.stages {
        let mut total_ms = 0.0;
        let mut total_j = 0.0;
        let mut instance_ms = 0.0;
        let mut seen = BTreeMap::new();
        for layer in stage.layers() {
            let cost = layer_cost(layer, dataflow, profile)?;
            total_ms += cost.latency_ms;
            total_j += cost.energy_j;
            if seen.insert(layer.canonical().to_string(), ()).is_none() {
                instance_ms += cost.latency_ms;
            }
        }
        rows.push(StageTotal {
            stage: stage.stage_id,
            total_latency_ms: total_ms,
            total_energy_j: total_j,
            instance_latency_ms: instance_ms,
            fraction: 0.0,
        });
    }
    let denom: f64 = rows.iter().map(|r| r.instance_latency_ms).sum();
    if denom > 0.0 {
        for r in &mut rows {
            r.fraction = r.instance_latency_ms / denom;
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::TensorShape;

    fn conv_layer(id: &str) -> LayerDescriptor {
        LayerDescriptor {
            id: id.into(),
            kind: LayerKind::Conv,
            input_shapes: vec![TensorShape::new(1, 256, 20, 80)],
            output_shape: TensorShape::new(1, 256, 20, 80),
            kernel: Some(crate::workload::KernelSpec {
                r: 3,
                s: 3,
                stride: 1,
                in_channels: 256,
                out_channels: 256,
            }),
            seq_len: None,
            model_dim: None,
        }
    }

    fn small_profile() -> CostProfile {
        CostProfile::from_rows([
            (
                "a".to_string(),
                Dataflow::OutputStationary,
                ProfileRow {
                    entry: CostEntry { latency_ms: 10.0, energy_j: 0.01 },
                    provenance: Provenance::Synthetic,
                },
            ),
            (
                "a".to_string(),
                Dataflow::WeightStationary,
                ProfileRow {
                    entry: CostEntry { latency_ms: 70.0, energy_j: 0.008 },
                    provenance: Provenance::Synthetic,
                },
            ),
        ])
    }

    #[test]
    fn fixture_lookup_and_canonical_fallback() {
        let p = small_profile();
        let mut layer = conv_layer("a");
        assert_eq!(
            layer_cost(&layer, Dataflow::OutputStationary, &p).unwrap().latency_ms,
            10.0
        );
        layer.id = "cam3:a".into();
        assert_eq!(
            layer_cost(&layer, Dataflow::OutputStationary, &p).unwrap().latency_ms,
            10.0
        );
    }

    #[test]
    fn missing_entry_names_layer_and_dataflow() {
        let p = small_profile();
        let layer = conv_layer("b");
        let err = layer_cost(&layer, Dataflow::OutputStationary, &p).unwrap_err();
        assert_eq!(
            err,
            CostError::MissingEntry { layer: "b".into(), dataflow: Dataflow::OutputStationary }
        );
    }

    #[test]
    fn shard_cost_follows_ideal_law() {
        let e = CostEntry { latency_ms: 490.2, energy_j: 0.2 };
        let s = shard_cost(e, 6).unwrap();
        assert!((s.latency_ms - 81.7).abs() < 1e-9);
        assert_eq!(s.energy_j, 0.2);

        let id = shard_cost(e, 1).unwrap();
        assert_eq!(id, e);

        let s4 = shard_cost(CostEntry { latency_ms: 165.6, energy_j: 0.1 }, 4).unwrap();
        assert!((s4.latency_ms - 41.4).abs() < 1e-9);

        assert_eq!(shard_cost(e, 0), Err(CostError::ZeroShard));
    }

    #[test]
    fn analytical_zero_mac_layer() {
        let layer = LayerDescriptor {
            id: "c".into(),
            kind: LayerKind::Concat,
            input_shapes: vec![TensorShape::new(1, 256, 20, 80)],
            output_shape: TensorShape::new(1, 512, 20, 80),
            kernel: None,
            seq_len: None,
            model_dim: None,
        };
        let params = AnalyticalParams::default();
        let c = analytical_cost(&layer, Dataflow::OutputStationary, &params);
        assert_eq!(c.latency_ms, 0.0);
        let moved = (409_600 + 819_200) as f64;
        assert!((c.energy_j - moved * params.energy_per_byte_dram).abs() < 1e-18);
    }

    #[test]
    fn analytical_latency_monotone_in_macs_and_pes() {
        let params = AnalyticalParams::default();
        let small = conv_layer("s");
        let mut big = conv_layer("b");
        big.kernel.as_mut().unwrap().out_channels = 512;
        big.output_shape.channels = 512;
        let ls = analytical_cost(&small, Dataflow::OutputStationary, &params).latency_ms;
        let lb = analytical_cost(&big, Dataflow::OutputStationary, &params).latency_ms;
        assert!(lb > ls);

        let more_pe = AnalyticalParams { pe_count: 512, ..AnalyticalParams::default() };
        let lp = analytical_cost(&small, Dataflow::OutputStationary, &more_pe).latency_ms;
        assert!(lp < ls);
    }

    #[test]
    fn analytical_os_ws_ratio_matches_calibration() {
        let params = AnalyticalParams::default();
        let layer = conv_layer("r");
        let os = analytical_cost(&layer, Dataflow::OutputStationary, &params).latency_ms;
        let ws = analytical_cost(&layer, Dataflow::WeightStationary, &params).latency_ms;
        assert!((ws / os - 6.85).abs() < 1e-9);
    }

    #[test]
    fn affinity_is_definitional_and_antisymmetric() {
        let p = small_profile();
        let layer = conv_layer("a");
        let os = layer_cost(&layer, Dataflow::OutputStationary, &p).unwrap();
        let ws = layer_cost(&layer, Dataflow::WeightStationary, &p).unwrap();
        let delta = os.latency_ms - ws.latency_ms;
        assert_eq!(delta, -60.0);

        // Swapping OS and WS entries negates the delta.
        let swapped = CostProfile::from_rows([
            (
                "a".to_string(),
                Dataflow::OutputStationary,
                ProfileRow {
                    entry: CostEntry { latency_ms: 70.0, energy_j: 0.008 },
                    provenance: Provenance::Synthetic,
                },
            ),
            (
                "a".to_string(),
                Dataflow::WeightStationary,
                ProfileRow {
                    entry: CostEntry { latency_ms: 10.0, energy_j: 0.01 },
                    provenance: Provenance::Synthetic,
                },
            ),
        ]);
        let os2 = layer_cost(&layer, Dataflow::OutputStationary, &swapped).unwrap();
        let ws2 = layer_cost(&layer, Dataflow::WeightStationary, &swapped).unwrap();
        assert_eq!(os2.latency_ms - ws2.latency_ms, -delta);
    }

    #[test]
    fn identical_entries_have_zero_delta() {
        let p = CostProfile::from_rows(Dataflow::BOTH.map(|df| {
            (
                "a".to_string(),
                df,
                ProfileRow {
                    entry: CostEntry { latency_ms: 5.0, energy_j: 0.001 },
                    provenance: Provenance::Synthetic,
                },
            )
        }));
        let layer = conv_layer("a");
        let os = layer_cost(&layer, Dataflow::OutputStationary, &p).unwrap();
        let ws = layer_cost(&layer, Dataflow::WeightStationary, &p).unwrap();
        assert_eq!(os.latency_ms - ws.latency_ms, 0.0);
        assert_eq!(os.energy_j - ws.energy_j, 0.0);
    }

    #[test]
    fn profile_round_trip_and_strictness() {
        let p = small_profile();
        let text = p.emit();
        let back = CostProfile::parse(&text).unwrap();
        assert_eq!(back, p);

        let bad = text.replace("provenance", "provenance,extra");
        assert!(CostProfile::parse(&bad).is_err());

        let bad_tag = text.replace("synthetic", "guessed");
        assert!(CostProfile::parse(&bad_tag).is_err());
    }

    #[test]
    fn os_parallelism_caps_by_output_plane() {
        let layer = conv_layer("a");
        // 16x16 array fully used by a 20x80 output.
        assert_eq!(os_parallelism(&layer, 256), 256);
        // 96x96 array limited to the 20x80 plane.
        assert_eq!(os_parallelism(&layer, 9216), 1600);
    }

    #[test]
    fn energy_scale_anchor() {
        let ratio = 1.0 / energy_scale_to_pe(9216);
        assert!((ratio - 1.109).abs() < 1e-3, "ratio {ratio}");
    }
}
