//! Layer-level DAG representation of perception pipelines.
//!
//! A [`WorkloadGraph`] holds four ordered pipeline stages (feature
//! extraction, spatial fusion, temporal fusion, trunks), each stage a set of
//! model instances with ordered layers, plus explicit data edges between
//! layers. [`build_autopilot_pipeline`] constructs the bundled eight-camera
//! preset. Graphs are immutable after construction and safe to share across
//! threads.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const WORKLOAD_SCHEMA_VERSION: u32 = 1;

/// Tensor extents in N, C, H, W order with an element width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorShape {
    pub batch: u64,
    pub channels: u64,
    pub height: u64,
    pub width: u64,
    #[serde(default = "default_bpe")]
    pub bytes_per_element: u64,
}

fn default_bpe() -> u64 {
    1
}

impl TensorShape {
    pub const fn new(batch: u64, channels: u64, height: u64, width: u64) -> Self {
        Self { batch, channels, height, width, bytes_per_element: 1 }
    }

    pub fn elements(&self) -> u64 {
        self.batch * self.channels * self.height * self.width
    }

    pub fn byte_size(&self) -> u64 {
        self.elements() * self.bytes_per_element
    }

    /// Spatial token count (one token per batch x height x width position).
    pub fn tokens(&self) -> u64 {
        self.batch * self.height * self.width
    }

    /// True when `self` selects a sub-range of `other` along every axis.
    pub fn is_slice_of(&self, other: &TensorShape) -> bool {
        self.batch <= other.batch
            && self.channels <= other.channels
            && self.height <= other.height
            && self.width <= other.width
            && self.bytes_per_element == other.bytes_per_element
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Printed as NxHxWxC to match the usual feature-map notation.
        write!(f, "{}x{}x{}x{}", self.batch, self.height, self.width, self.channels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    Deconv,
    FullyConnected,
    MatMul,
    QkvProjection,
    AttentionScore,
    Ffn,
    Concat,
    Upsample,
}

impl LayerKind {
    /// Kinds that execute multiply-accumulates. `Concat` and `Upsample` are
    /// pure data movement.
    pub fn is_compute(self) -> bool {
        !matches!(self, LayerKind::Concat | LayerKind::Upsample)
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LayerKind::Conv => "conv",
            LayerKind::Deconv => "deconv",
            LayerKind::FullyConnected => "fully_connected",
            LayerKind::MatMul => "matmul",
            LayerKind::QkvProjection => "qkv_projection",
            LayerKind::AttentionScore => "attention_score",
            LayerKind::Ffn => "ffn",
            LayerKind::Concat => "concat",
            LayerKind::Upsample => "upsample",
        };
        write!(f, "{s}")
    }
}

/// Convolution/deconvolution kernel parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub r: u64,
    pub s: u64,
    pub stride: u64,
    pub in_channels: u64,
    pub out_channels: u64,
}

/// One compute kernel of the pipeline.
///
/// Layer ids carry an optional instance prefix separated by `:`
/// (`cam3:fe/stem`); the part after the prefix is the canonical name shared
/// by structurally identical instances and used for cost lookups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDescriptor {
    pub id: String,
    pub kind: LayerKind,
    pub input_shapes: Vec<TensorShape>,
    pub output_shape: TensorShape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq_len: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_dim: Option<u64>,
}

impl LayerDescriptor {
    /// Canonical name: the id with any `instance:` prefix stripped.
    pub fn canonical(&self) -> &str {
        canonical_of(&self.id)
    }
}

pub fn canonical_of(id: &str) -> &str {
    match id.split_once(':') {
        Some((_, rest)) => rest,
        None => id,
    }
}

/// Multiply-accumulate count of one layer.
///
/// Conv/Deconv count R*S*Cin*Cout over output positions; fully-connected and
/// matmul count contracted x free dims; attention kinds reduce to their
/// constituent matmuls; data-movement kinds are zero.
pub fn mac_count(layer: &LayerDescriptor) -> u64 {
    let out = &layer.output_shape;
    match layer.kind {
        LayerKind::Conv | LayerKind::Deconv => {
            let k = layer.kernel.expect("conv kind requires kernel");
            k.r * k.s * k.in_channels * k.out_channels * out.height * out.width * out.batch
        }
        LayerKind::FullyConnected => {
            let inp = layer.input_shapes.first().expect("fc requires input shape");
            let per_batch_in = inp.channels * inp.height * inp.width;
            let per_batch_out = out.channels * out.height * out.width;
            per_batch_in * per_batch_out * out.batch
        }
        LayerKind::MatMul => {
            let seq = layer.seq_len.expect("matmul requires seq_len");
            let dim = layer.model_dim.expect("matmul requires model_dim");
            let free = out.elements() / out.batch.max(1);
            seq * dim * free.max(1)
        }
        LayerKind::QkvProjection => {
            let seq = layer.seq_len.expect("qkv requires seq_len");
            let dim = layer.model_dim.expect("qkv requires model_dim");
            seq * dim * 3 * dim
        }
        LayerKind::AttentionScore => {
            let seq = layer.seq_len.expect("attention requires seq_len");
            let dim = layer.model_dim.expect("attention requires model_dim");
            let kv = layer.input_shapes.get(1).map(|s| s.tokens()).unwrap_or(seq);
            seq * kv * dim
        }
        LayerKind::Ffn => {
            // Two linear layers with a 4x hidden expansion; the output width
            // may differ from the model width.
            let seq = layer.seq_len.expect("ffn requires seq_len");
            let dim = layer.model_dim.expect("ffn requires model_dim");
            let d_out = out.channels;
            seq * (dim * 4 * dim + 4 * dim * d_out)
        }
        LayerKind::Concat | LayerKind::Upsample => 0,
    }
}

/// Bytes produced by a layer (its output feature map).
pub fn output_bytes(layer: &LayerDescriptor) -> u64 {
    layer.output_shape.byte_size()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShardAxis {
    Replica,
    OutputChannel,
    SpatialTile,
}

/// Declares that a set of layers carries `replication` independent work
/// slices along `shard_axis`. The scheduler treats each group as one
/// schedulable unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcurrencyGroup {
    pub name: String,
    pub member_layer_ids: Vec<String>,
    pub replication: u64,
    pub shardable: bool,
    pub shard_axis: ShardAxis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageId {
    FeBfpn,
    SpatialFuse,
    TemporalFuse,
    Trunks,
}

impl StageId {
    pub const ALL: [StageId; 4] =
        [StageId::FeBfpn, StageId::SpatialFuse, StageId::TemporalFuse, StageId::Trunks];

    pub fn index(self) -> usize {
        match self {
            StageId::FeBfpn => 0,
            StageId::SpatialFuse => 1,
            StageId::TemporalFuse => 2,
            StageId::Trunks => 3,
        }
    }
}

impl fmt::Display for StageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StageId::FeBfpn => "fe_bfpn",
            StageId::SpatialFuse => "s_fuse",
            StageId::TemporalFuse => "t_fuse",
            StageId::Trunks => "trunks",
        };
        write!(f, "{s}")
    }
}

/// One model instance: a named, ordered layer sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInstance {
    pub name: String,
    pub layers: Vec<LayerDescriptor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    pub stage_id: StageId,
    pub models: Vec<ModelInstance>,
    pub concurrency_groups: Vec<ConcurrencyGroup>,
}

impl StageSpec {
    pub fn layers(&self) -> impl Iterator<Item = &LayerDescriptor> {
        self.models.iter().flat_map(|m| m.layers.iter())
    }

    pub fn layer_count(&self) -> usize {
        self.models.iter().map(|m| m.layers.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    pub shape: TensorShape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadGraph {
    pub schema_version: u32,
    pub stages: Vec<StageSpec>,
    pub edges: Vec<Edge>,
}

impl WorkloadGraph {
    pub fn layer_count(&self) -> usize {
        self.stages.iter().map(|s| s.layer_count()).sum()
    }

    pub fn stage(&self, id: StageId) -> Option<&StageSpec> {
        self.stages.iter().find(|s| s.stage_id == id)
    }

    pub fn layers(&self) -> impl Iterator<Item = &LayerDescriptor> {
        self.stages.iter().flat_map(|s| s.layers())
    }

    pub fn layer(&self, id: &str) -> Option<&LayerDescriptor> {
        self.layers().find(|l| l.id == id)
    }

    pub fn stage_of(&self, layer_id: &str) -> Option<StageId> {
        self.stages
            .iter()
            .find(|s| s.layers().any(|l| l.id == layer_id))
            .map(|s| s.stage_id)
    }

    /// Restrict the graph to the given stages, dropping edges that cross out
    /// of the retained set.
    pub fn restricted_to(&self, keep: &[StageId]) -> WorkloadGraph {
        let kept: BTreeSet<StageId> = keep.iter().copied().collect();
        let stages: Vec<StageSpec> =
            self.stages.iter().filter(|s| kept.contains(&s.stage_id)).cloned().collect();
        let ids: BTreeSet<&str> =
            stages.iter().flat_map(|s| s.layers()).map(|l| l.id.as_str()).collect();
        let edges = self
            .edges
            .iter()
            .filter(|e| ids.contains(e.from.as_str()) && ids.contains(e.to.as_str()))
            .cloned()
            .collect();
        WorkloadGraph { schema_version: self.schema_version, stages, edges }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("workload graphs are serializable")
    }

    pub fn from_json(text: &str) -> Result<WorkloadGraph, serde_json::Error> {
        serde_json::from_str(text)
    }
}

// ── Validation ───────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DuplicateLayerId { id: String },
    UnknownEdgeEndpoint { from: String, to: String, missing: String },
    Cycle { involving: String },
    EdgeShapeMismatch { from: String, to: String, expected: String, got: String },
    MissingKernel { id: String },
    MissingAttentionFields { id: String },
    ZeroDimension { id: String },
    ZeroMacComputeLayer { id: String },
    NonPositiveReplication { group: String },
    GroupMemberOutsideStage { group: String, member: String },
    StageOrderViolation { from: String, to: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateLayerId { id } => write!(f, "duplicate layer id `{id}`"),
            Violation::UnknownEdgeEndpoint { from, to, missing } => {
                write!(f, "edge {from} -> {to} references unknown layer `{missing}`")
            }
            Violation::Cycle { involving } => {
                write!(f, "graph is not acyclic (cycle through `{involving}`)")
            }
            Violation::EdgeShapeMismatch { from, to, expected, got } => write!(
                f,
                "edge {from} -> {to} carries {got}, which is not the producer output {expected} or a slice of it"
            ),
            Violation::MissingKernel { id } => {
                write!(f, "layer `{id}` is a conv kind but has no kernel spec")
            }
            Violation::MissingAttentionFields { id } => {
                write!(f, "layer `{id}` is an attention/matmul kind but lacks seq_len/model_dim")
            }
            Violation::ZeroDimension { id } => {
                write!(f, "layer `{id}` has a zero tensor dimension")
            }
            Violation::ZeroMacComputeLayer { id } => {
                write!(f, "compute layer `{id}` has zero MACs")
            }
            Violation::NonPositiveReplication { group } => {
                write!(f, "concurrency group `{group}` has replication < 1")
            }
            Violation::GroupMemberOutsideStage { group, member } => {
                write!(f, "concurrency group `{group}` member `{member}` is not in its stage")
            }
            Violation::StageOrderViolation { from, to } => {
                write!(f, "edge {from} -> {to} goes against the stage pipeline order")
            }
        }
    }
}

/// Check every structural invariant; returns an empty list when the graph is
/// well formed. Violations are data, not errors.
pub fn validate(graph: &WorkloadGraph) -> Vec<Violation> {
    let mut violations = Vec::new();

    let mut seen: BTreeSet<&str> = BTreeSet::new();
    for layer in graph.layers() {
        if !seen.insert(layer.id.as_str()) {
            violations.push(Violation::DuplicateLayerId { id: layer.id.clone() });
        }
        let shapes_ok = std::iter::once(&layer.output_shape)
            .chain(layer.input_shapes.iter())
            .all(|s| s.batch > 0 && s.channels > 0 && s.height > 0 && s.width > 0 && s.bytes_per_element > 0);
        if !shapes_ok {
            violations.push(Violation::ZeroDimension { id: layer.id.clone() });
            continue;
        }
        match layer.kind {
            LayerKind::Conv | LayerKind::Deconv if layer.kernel.is_none() => {
                violations.push(Violation::MissingKernel { id: layer.id.clone() });
                continue;
            }
            LayerKind::MatMul
            | LayerKind::QkvProjection
            | LayerKind::AttentionScore
            | LayerKind::Ffn
                if layer.seq_len.is_none() || layer.model_dim.is_none() =>
            {
                violations.push(Violation::MissingAttentionFields { id: layer.id.clone() });
                continue;
            }
            _ => {}
        }
        if layer.kind.is_compute() && mac_count(layer) == 0 {
            violations.push(Violation::ZeroMacComputeLayer { id: layer.id.clone() });
        }
    }

    let mut stage_of: BTreeMap<&str, StageId> = BTreeMap::new();
    for stage in &graph.stages {
        for layer in stage.layers() {
            stage_of.entry(layer.id.as_str()).or_insert(stage.stage_id);
        }
        for group in &stage.concurrency_groups {
            if group.replication < 1 {
                violations.push(Violation::NonPositiveReplication { group: group.name.clone() });
            }
            for member in &group.member_layer_ids {
                let in_stage = stage.layers().any(|l| &l.id == member);
                if !in_stage {
                    violations.push(Violation::GroupMemberOutsideStage {
                        group: group.name.clone(),
                        member: member.clone(),
                    });
                }
            }
        }
    }

    for edge in &graph.edges {
        let (from, to) = (&edge.from, &edge.to);
        let Some(producer) = graph.layer(from) else {
            violations.push(Violation::UnknownEdgeEndpoint {
                from: from.clone(),
                to: to.clone(),
                missing: from.clone(),
            });
            continue;
        };
        if graph.layer(to).is_none() {
            violations.push(Violation::UnknownEdgeEndpoint {
                from: from.clone(),
                to: to.clone(),
                missing: to.clone(),
            });
            continue;
        }
        if edge.shape != producer.output_shape && !edge.shape.is_slice_of(&producer.output_shape) {
            violations.push(Violation::EdgeShapeMismatch {
                from: from.clone(),
                to: to.clone(),
                expected: producer.output_shape.to_string(),
                got: edge.shape.to_string(),
            });
        }
        if let (Some(sf), Some(st)) = (stage_of.get(from.as_str()), stage_of.get(to.as_str())) {
            if st.index() < sf.index() {
                violations.push(Violation::StageOrderViolation {
                    from: from.clone(),
                    to: to.clone(),
                });
            }
        }
    }

    // Kahn's algorithm over the layer DAG.
    let ids: Vec<&str> = graph.layers().map(|l| l.id.as_str()).collect();
    let index: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let mut indegree = vec![0usize; ids.len()];
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); ids.len()];
    for edge in &graph.edges {
        if let (Some(&u), Some(&v)) = (index.get(edge.from.as_str()), index.get(edge.to.as_str()))
        {
            adj[u].push(v);
            indegree[v] += 1;
        }
    }
    let mut queue: VecDeque<usize> =
        (0..ids.len()).filter(|&i| indegree[i] == 0).collect();
    let mut visited = 0usize;
    while let Some(u) = queue.pop_front() {
        visited += 1;
        for &v in &adj[u] {
            indegree[v] -= 1;
            if indegree[v] == 0 {
                queue.push_back(v);
            }
        }
    }
    if visited != ids.len() {
        let stuck = (0..ids.len()).find(|&i| indegree[i] > 0).unwrap_or(0);
        violations.push(Violation::Cycle { involving: ids[stuck].to_string() });
    }

    violations
}

// ── Autopilot preset builder ─────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrunkKind {
    Occupancy,
    Lane,
    Detection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutopilotParams {
    pub num_cameras: u64,
    pub grid_h: u64,
    pub grid_w: u64,
    pub grid_c: u64,
    pub temporal_depth: u64,
    pub trunk_set: Vec<TrunkKind>,
}

impl Default for AutopilotParams {
    fn default() -> Self {
        Self {
            num_cameras: 8,
            grid_h: 20,
            grid_w: 80,
            grid_c: 256,
            temporal_depth: 12,
            trunk_set: vec![TrunkKind::Occupancy, TrunkKind::Lane, TrunkKind::Detection],
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BuildError {
    #[error("invalid parameter `{field}`: must be >= 1, got {value}")]
    InvalidParam { field: &'static str, value: u64 },
}

/// Camera input resolution (720p).
const CAM_H: u64 = 720;
const CAM_W: u64 = 1280;
/// Backbone stage widths after each residual stage.
const STAGE_CHANNELS: [u64; 4] = [256, 512, 1024, 2048];
const DET_HEADS: usize = 3;

fn shape(c: u64, h: u64, w: u64) -> TensorShape {
    TensorShape::new(1, c, h, w)
}

fn ceil_div(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

struct StageBuilder {
    models: Vec<ModelInstance>,
    groups: Vec<ConcurrencyGroup>,
    edges: Vec<Edge>,
}

impl StageBuilder {
    fn new() -> Self {
        Self { models: Vec::new(), groups: Vec::new(), edges: Vec::new() }
    }
}

/// Build the eight-camera perception pipeline preset.
///
/// Stage 1 instantiates one ResNet-18-style extractor plus a two-block
/// bidirectional FPN per camera; each camera produces the four multiscale
/// features and a fused grid-sized output. Stage 2 fuses cameras with one
/// attention module, stage 3 fuses `temporal_depth` frames with another, and
/// stage 4 holds the task trunks.
pub fn build_autopilot_pipeline(params: &AutopilotParams) -> Result<WorkloadGraph, BuildError> {
    let checks: [(&'static str, u64); 5] = [
        ("num_cameras", params.num_cameras),
        ("grid_h", params.grid_h),
        ("grid_w", params.grid_w),
        ("grid_c", params.grid_c),
        ("temporal_depth", params.temporal_depth),
    ];
    for (field, value) in checks {
        if value < 1 {
            return Err(BuildError::InvalidParam { field, value });
        }
    }

    let mut edges: Vec<Edge> = Vec::new();
    let gc = params.grid_c;
    let (gh, gw) = (params.grid_h, params.grid_w);

    // Stage 1: per-camera FE + BFPN.
    let mut fe = StageBuilder::new();
    let mut fe_all_members = Vec::new();
    let mut cam_out_ids = Vec::new();
    for cam in 0..params.num_cameras {
        let p = format!("cam{cam}:");
        let mut layers: Vec<LayerDescriptor> = Vec::new();
        let chain =
            |layers: &mut Vec<LayerDescriptor>, edges: &mut Vec<Edge>, l: LayerDescriptor, from: Option<&str>| {
                if let Some(src) = from {
                    let shape = layers
                        .iter()
                        .find(|x| x.id == src)
                        .map(|x| x.output_shape)
                        .expect("chain source exists");
                    edges.push(Edge { from: src.to_string(), to: l.id.clone(), shape });
                }
                let id = l.id.clone();
                layers.push(l);
                id
            };

        // Stem: 7x7 stride-4 (convolution + pooling folded into one node).
        let (h0, w0) = (ceil_div(CAM_H, 4), ceil_div(CAM_W, 4));
        let stem = chain(
            &mut layers,
            &mut edges,
            LayerDescriptor {
                id: format!("{p}fe/stem"),
                kind: LayerKind::Conv,
                input_shapes: vec![shape(3, CAM_H, CAM_W)],
                output_shape: shape(64, h0, w0),
                kernel: Some(KernelSpec { r: 7, s: 7, stride: 4, in_channels: 3, out_channels: 64 }),
                seq_len: None,
                model_dim: None,
            },
            None,
        );

        // Four residual stages, two basic blocks each (four 3x3 convs); the
        // first conv of each stage downsamples.
        let mut prev = stem;
        let (mut ph, mut pw) = (h0, w0);
        let mut c_in = 64;
        let mut scale_shapes = Vec::new();
        let mut scale_out_ids = Vec::new();
        for (si, &c_out) in STAGE_CHANNELS.iter().enumerate() {
            let h = ceil_div(ph, 2);
            let w = ceil_div(pw, 2);
            for conv in 1..=4u32 {
                let (cin, stride) = if conv == 1 { (c_in, 2) } else { (c_out, 1) };
                let in_shape =
                    if conv == 1 { shape(cin, ph, pw) } else { shape(c_out, h, w) };
                prev = chain(
                    &mut layers,
                    &mut edges,
                    LayerDescriptor {
                        id: format!("{p}fe/res{}_conv{conv}", si + 1),
                        kind: LayerKind::Conv,
                        input_shapes: vec![in_shape],
                        output_shape: shape(c_out, h, w),
                        kernel: Some(KernelSpec {
                            r: 3,
                            s: 3,
                            stride,
                            in_channels: cin,
                            out_channels: c_out,
                        }),
                        seq_len: None,
                        model_dim: None,
                    },
                    Some(&prev),
                );
            }
            c_in = c_out;
            (ph, pw) = (h, w);
            scale_shapes.push((h, w));
            scale_out_ids.push(prev.clone());
        }

        // Lateral 1x1 projections onto the FPN width.
        let mut level_ids = Vec::new();
        for (li, ((h, w), src)) in scale_shapes.iter().zip(&scale_out_ids).enumerate() {
            let id = chain(
                &mut layers,
                &mut edges,
                LayerDescriptor {
                    id: format!("{p}fe/lat_p{}", li + 3),
                    kind: LayerKind::Conv,
                    input_shapes: vec![shape(STAGE_CHANNELS[li], *h, *w)],
                    output_shape: shape(gc, *h, *w),
                    kernel: Some(KernelSpec {
                        r: 1,
                        s: 1,
                        stride: 1,
                        in_channels: STAGE_CHANNELS[li],
                        out_channels: gc,
                    }),
                    seq_len: None,
                    model_dim: None,
                },
                Some(src),
            );
            level_ids.push(id);
        }

        // Two BiFPN blocks: top-down then bottom-up fusion at each scale.
        for block in 1..=2u32 {
            let mut next_levels = level_ids.clone();
            // Top-down: p6 -> p5 -> p4 -> p3.
            let mut upper = level_ids[3].clone();
            for li in (0..3).rev() {
                let (h, w) = scale_shapes[li];
                let (uh, uw) = scale_shapes[li + 1];
                let up = chain(
                    &mut layers,
                    &mut edges,
                    LayerDescriptor {
                        id: format!("{p}fe/bfpn{block}_up_p{}", li + 4),
                        kind: LayerKind::Upsample,
                        input_shapes: vec![shape(gc, uh, uw)],
                        output_shape: shape(gc, h, w),
                        kernel: None,
                        seq_len: None,
                        model_dim: None,
                    },
                    Some(&upper),
                );
                let td = LayerDescriptor {
                    id: format!("{p}fe/bfpn{block}_td_p{}", li + 3),
                    kind: LayerKind::Conv,
                    input_shapes: vec![shape(gc, h, w), shape(gc, h, w)],
                    output_shape: shape(gc, h, w),
                    kernel: Some(KernelSpec { r: 3, s: 3, stride: 1, in_channels: gc, out_channels: gc }),
                    seq_len: None,
                    model_dim: None,
                };
                edges.push(Edge {
                    from: level_ids[li].clone(),
                    to: td.id.clone(),
                    shape: shape(gc, h, w),
                });
                let td_id = chain(&mut layers, &mut edges, td, Some(&up));
                next_levels[li] = td_id.clone();
                upper = td_id;
            }
            // Bottom-up: p3 -> p4 -> p5 -> p6 with stride-2 fusion convs.
            let mut lower = next_levels[0].clone();
            for li in 1..4 {
                let (h, w) = scale_shapes[li];
                let (lh, lw) = scale_shapes[li - 1];
                let bu = LayerDescriptor {
                    id: format!("{p}fe/bfpn{block}_bu_p{}", li + 3),
                    kind: LayerKind::Conv,
                    input_shapes: vec![shape(gc, lh, lw), shape(gc, h, w)],
                    output_shape: shape(gc, h, w),
                    kernel: Some(KernelSpec { r: 3, s: 3, stride: 2, in_channels: gc, out_channels: gc }),
                    seq_len: None,
                    model_dim: None,
                };
                edges.push(Edge {
                    from: next_levels[li].clone(),
                    to: bu.id.clone(),
                    shape: shape(gc, h, w),
                });
                let bu_id = chain(&mut layers, &mut edges, bu, Some(&lower));
                next_levels[li] = bu_id.clone();
                lower = bu_id;
            }
            level_ids = next_levels;
        }

        // Head: resample every level onto the fusion grid, concatenate, and
        // project back to the grid width.
        let mut resized = Vec::new();
        for (li, src) in level_ids.iter().enumerate() {
            let (h, w) = scale_shapes[li];
            let id = chain(
                &mut layers,
                &mut edges,
                LayerDescriptor {
                    id: format!("{p}fe/head_rs_p{}", li + 3),
                    kind: LayerKind::Upsample,
                    input_shapes: vec![shape(gc, h, w)],
                    output_shape: shape(gc, gh, gw),
                    kernel: None,
                    seq_len: None,
                    model_dim: None,
                },
                Some(src),
            );
            resized.push(id);
        }
        let concat = LayerDescriptor {
            id: format!("{p}fe/head_concat"),
            kind: LayerKind::Concat,
            input_shapes: vec![shape(gc, gh, gw); 4],
            output_shape: shape(gc * 4, gh, gw),
            kernel: None,
            seq_len: None,
            model_dim: None,
        };
        for src in &resized {
            edges.push(Edge { from: src.clone(), to: concat.id.clone(), shape: shape(gc, gh, gw) });
        }
        let concat_id = concat.id.clone();
        layers.push(concat);
        let head = chain(
            &mut layers,
            &mut edges,
            LayerDescriptor {
                id: format!("{p}fe/head_conv"),
                kind: LayerKind::Conv,
                input_shapes: vec![shape(gc * 4, gh, gw)],
                output_shape: shape(gc, gh, gw),
                kernel: Some(KernelSpec { r: 1, s: 1, stride: 1, in_channels: gc * 4, out_channels: gc }),
                seq_len: None,
                model_dim: None,
            },
            Some(&concat_id),
        );
        cam_out_ids.push(head);

        fe_all_members.extend(layers.iter().map(|l| l.id.clone()));
        fe.models.push(ModelInstance { name: format!("cam{cam}"), layers });
    }
    fe.groups.push(ConcurrencyGroup {
        name: "fe_cameras".into(),
        member_layer_ids: fe_all_members,
        replication: params.num_cameras,
        shardable: true,
        shard_axis: ShardAxis::Replica,
    });

    // Stage 2: multi-camera spatial fusion.
    let n = params.num_cameras;
    let grid_tokens = gh * gw;
    let s_concat = LayerDescriptor {
        id: "s_fuse/concat".into(),
        kind: LayerKind::Concat,
        input_shapes: vec![shape(gc, gh, gw); n as usize],
        output_shape: TensorShape::new(n, gc, gh, gw),
        kernel: None,
        seq_len: None,
        model_dim: None,
    };
    for src in &cam_out_ids {
        edges.push(Edge { from: src.clone(), to: s_concat.id.clone(), shape: shape(gc, gh, gw) });
    }
    let s_qkv = LayerDescriptor {
        id: "s_fuse/qkv".into(),
        kind: LayerKind::QkvProjection,
        input_shapes: vec![TensorShape::new(n, gc, gh, gw)],
        output_shape: TensorShape::new(n, gc * 3, gh, gw),
        kernel: None,
        seq_len: Some(n * grid_tokens),
        model_dim: Some(gc),
    };
    let s_att_score = LayerDescriptor {
        id: "s_fuse/att_score".into(),
        kind: LayerKind::AttentionScore,
        input_shapes: vec![TensorShape::new(n, gc * 3, gh, gw), TensorShape::new(n, gc, gh, gw)],
        output_shape: TensorShape::new(1, 1, grid_tokens, n * grid_tokens),
        kernel: None,
        seq_len: Some(grid_tokens),
        model_dim: Some(gc),
    };
    let s_att_out = LayerDescriptor {
        id: "s_fuse/att_out".into(),
        kind: LayerKind::AttentionScore,
        input_shapes: vec![
            TensorShape::new(1, 1, grid_tokens, n * grid_tokens),
            TensorShape::new(n, gc, gh, gw),
        ],
        output_shape: shape(gc, gh, gw),
        kernel: None,
        seq_len: Some(grid_tokens),
        model_dim: Some(gc),
    };
    let s_ffn = LayerDescriptor {
        id: "s_fuse/ffn".into(),
        kind: LayerKind::Ffn,
        input_shapes: vec![shape(gc, gh, gw)],
        output_shape: shape(gc, gh, gw),
        kernel: None,
        seq_len: Some(grid_tokens),
        model_dim: Some(gc),
    };
    for (a, b) in [
        (&s_concat, &s_qkv),
        (&s_qkv, &s_att_score),
        (&s_att_score, &s_att_out),
        (&s_att_out, &s_ffn),
    ] {
        edges.push(Edge { from: a.id.clone(), to: b.id.clone(), shape: a.output_shape });
    }
    // V path.
    edges.push(Edge { from: s_qkv.id.clone(), to: s_att_out.id.clone(), shape: s_qkv.output_shape });
    let s_stage = StageSpec {
        stage_id: StageId::SpatialFuse,
        models: vec![ModelInstance {
            name: "s_fuse".into(),
            layers: vec![s_concat, s_qkv, s_att_score, s_att_out, s_ffn.clone()],
        }],
        concurrency_groups: vec![
            ConcurrencyGroup {
                name: "s_qkv".into(),
                member_layer_ids: vec!["s_fuse/concat".into(), "s_fuse/qkv".into()],
                replication: n,
                shardable: true,
                shard_axis: ShardAxis::Replica,
            },
            ConcurrencyGroup {
                name: "s_att".into(),
                member_layer_ids: vec!["s_fuse/att_score".into(), "s_fuse/att_out".into()],
                replication: 1,
                shardable: false,
                shard_axis: ShardAxis::Replica,
            },
            ConcurrencyGroup {
                name: "s_ffn".into(),
                member_layer_ids: vec!["s_fuse/ffn".into()],
                replication: n,
                shardable: true,
                shard_axis: ShardAxis::Replica,
            },
        ],
    };

    // Stage 3: temporal fusion over the frame queue.
    let t = params.temporal_depth;
    let t_concat = LayerDescriptor {
        id: "t_fuse/concat".into(),
        kind: LayerKind::Concat,
        input_shapes: vec![shape(gc, gh, gw)],
        output_shape: TensorShape::new(t, gc, gh, gw),
        kernel: None,
        seq_len: None,
        model_dim: None,
    };
    edges.push(Edge { from: s_ffn.id.clone(), to: t_concat.id.clone(), shape: s_ffn.output_shape });
    let t_qkv = LayerDescriptor {
        id: "t_fuse/qkv".into(),
        kind: LayerKind::QkvProjection,
        input_shapes: vec![TensorShape::new(t, gc, gh, gw)],
        output_shape: TensorShape::new(t, gc * 3, gh, gw),
        kernel: None,
        seq_len: Some(t * grid_tokens),
        model_dim: Some(gc),
    };
    let t_att_score = LayerDescriptor {
        id: "t_fuse/att_score".into(),
        kind: LayerKind::AttentionScore,
        input_shapes: vec![TensorShape::new(t, gc * 3, gh, gw), TensorShape::new(t, gc, gh, gw)],
        output_shape: TensorShape::new(1, 1, grid_tokens, t * grid_tokens),
        kernel: None,
        seq_len: Some(grid_tokens),
        model_dim: Some(gc),
    };
    let t_att_out = LayerDescriptor {
        id: "t_fuse/att_out".into(),
        kind: LayerKind::AttentionScore,
        input_shapes: vec![
            TensorShape::new(1, 1, grid_tokens, t * grid_tokens),
            TensorShape::new(t, gc, gh, gw),
        ],
        output_shape: shape(gc, gh, gw),
        kernel: None,
        seq_len: Some(grid_tokens),
        model_dim: Some(gc),
    };
    // The fused spatio-temporal representation widens to 300 channels.
    let t_out_c = 300;
    let t_ffn = LayerDescriptor {
        id: "t_fuse/ffn".into(),
        kind: LayerKind::Ffn,
        input_shapes: vec![shape(gc, gh, gw)],
        output_shape: shape(t_out_c, gh, gw),
        kernel: None,
        seq_len: Some(grid_tokens),
        model_dim: Some(gc),
    };
    for (a, b) in [
        (&t_concat, &t_qkv),
        (&t_qkv, &t_att_score),
        (&t_att_score, &t_att_out),
        (&t_att_out, &t_ffn),
    ] {
        edges.push(Edge { from: a.id.clone(), to: b.id.clone(), shape: a.output_shape });
    }
    edges.push(Edge { from: t_qkv.id.clone(), to: t_att_out.id.clone(), shape: t_qkv.output_shape });
    let t_stage = StageSpec {
        stage_id: StageId::TemporalFuse,
        models: vec![ModelInstance {
            name: "t_fuse".into(),
            layers: vec![t_concat, t_qkv, t_att_score, t_att_out, t_ffn.clone()],
        }],
        concurrency_groups: vec![
            ConcurrencyGroup {
                name: "t_qkv".into(),
                member_layer_ids: vec!["t_fuse/concat".into(), "t_fuse/qkv".into()],
                replication: t,
                shardable: true,
                shard_axis: ShardAxis::Replica,
            },
            ConcurrencyGroup {
                name: "t_att".into(),
                member_layer_ids: vec!["t_fuse/att_score".into(), "t_fuse/att_out".into()],
                replication: 1,
                shardable: false,
                shard_axis: ShardAxis::Replica,
            },
            ConcurrencyGroup {
                name: "t_ffn".into(),
                member_layer_ids: vec!["t_fuse/ffn".into()],
                replication: t,
                shardable: true,
                shard_axis: ShardAxis::Replica,
            },
        ],
    };

    // Stage 4: task trunks.
    let trunk_in = shape(t_out_c, gh, gw);
    let mut trunks = StageBuilder::new();
    for kind in &params.trunk_set {
        match kind {
            TrunkKind::Occupancy => {
                // Four stride-2 deconvolutions, 16x cumulative upscaling.
                let mut layers = Vec::new();
                let (mut h, mut w, mut c_in) = (gh, gw, t_out_c);
                let mut prev: Option<String> = None;
                for level in 1..=4u32 {
                    h *= 2;
                    w *= 2;
                    let c_out = gc;
                    let l = LayerDescriptor {
                        id: format!("ocup_tr/deconv{level}"),
                        kind: LayerKind::Deconv,
                        input_shapes: vec![shape(c_in, h / 2, w / 2)],
                        output_shape: shape(c_out, h, w),
                        kernel: Some(KernelSpec { r: 3, s: 3, stride: 2, in_channels: c_in, out_channels: c_out }),
                        seq_len: None,
                        model_dim: None,
                    };
                    let from = prev.clone().unwrap_or_else(|| t_ffn.id.clone());
                    let from_shape = if prev.is_some() { l.input_shapes[0] } else { trunk_in };
                    edges.push(Edge { from, to: l.id.clone(), shape: from_shape });
                    prev = Some(l.id.clone());
                    c_in = c_out;
                    layers.push(l);
                }
                trunks.groups.push(ConcurrencyGroup {
                    name: "ocup_tr".into(),
                    member_layer_ids: layers.iter().map(|l| l.id.clone()).collect(),
                    replication: 1,
                    shardable: false,
                    shard_axis: ShardAxis::SpatialTile,
                });
                trunks.models.push(ModelInstance { name: "ocup_tr".into(), layers });
            }
            TrunkKind::Lane => {
                // Three repeats of self+cross attention, one classifier per
                // level of point predictions.
                let mut layers = Vec::new();
                let mut prev = t_ffn.id.clone();
                for level in 1..=3u32 {
                    for tag in ["sa", "ca"] {
                        let l = LayerDescriptor {
                            id: format!("lane_tr/{tag}{level}"),
                            kind: LayerKind::AttentionScore,
                            input_shapes: vec![trunk_in, trunk_in],
                            output_shape: trunk_in,
                            kernel: None,
                            seq_len: Some(grid_tokens),
                            model_dim: Some(t_out_c),
                        };
                        edges.push(Edge { from: prev.clone(), to: l.id.clone(), shape: trunk_in });
                        prev = l.id.clone();
                        layers.push(l);
                    }
                    let cls = LayerDescriptor {
                        id: format!("lane_tr/cls{level}"),
                        kind: LayerKind::FullyConnected,
                        input_shapes: vec![shape(t_out_c, 1, 1)],
                        output_shape: shape(gc, 1, 1),
                        kernel: None,
                        seq_len: None,
                        model_dim: None,
                    };
                    edges.push(Edge {
                        from: prev.clone(),
                        to: cls.id.clone(),
                        shape: shape(t_out_c, 1, 1),
                    });
                    layers.push(cls);
                }
                trunks.groups.push(ConcurrencyGroup {
                    name: "lane_tr".into(),
                    member_layer_ids: layers.iter().map(|l| l.id.clone()).collect(),
                    replication: 1,
                    shardable: false,
                    shard_axis: ShardAxis::Replica,
                });
                trunks.models.push(ModelInstance { name: "lane_tr".into(), layers });
            }
            TrunkKind::Detection => {
                // Detector heads: three convolutions plus a fully connected
                // predictor each.
                let mut layers = Vec::new();
                for head in 1..=DET_HEADS as u32 {
                    let mut prev = t_ffn.id.clone();
                    let mut prev_shape = trunk_in;
                    for conv in 1..=3u32 {
                        let cin = if conv == 1 { t_out_c } else { gc };
                        let l = LayerDescriptor {
                            id: format!("det_tr/h{head}_conv{conv}"),
                            kind: LayerKind::Conv,
                            input_shapes: vec![shape(cin, gh, gw)],
                            output_shape: shape(gc, gh, gw),
                            kernel: Some(KernelSpec { r: 3, s: 3, stride: 1, in_channels: cin, out_channels: gc }),
                            seq_len: None,
                            model_dim: None,
                        };
                        edges.push(Edge { from: prev.clone(), to: l.id.clone(), shape: prev_shape });
                        prev = l.id.clone();
                        prev_shape = l.output_shape;
                        layers.push(l);
                    }
                    let fc = LayerDescriptor {
                        id: format!("det_tr/h{head}_fc"),
                        kind: LayerKind::FullyConnected,
                        input_shapes: vec![shape(gc, 1, 1)],
                        output_shape: shape(128, 1, 1),
                        kernel: None,
                        seq_len: None,
                        model_dim: None,
                    };
                    edges.push(Edge { from: prev, to: fc.id.clone(), shape: shape(gc, 1, 1) });
                    layers.push(fc);
                }
                trunks.groups.push(ConcurrencyGroup {
                    name: "det_tr".into(),
                    member_layer_ids: layers.iter().map(|l| l.id.clone()).collect(),
                    replication: DET_HEADS as u64,
                    shardable: false,
                    shard_axis: ShardAxis::Replica,
                });
                trunks.models.push(ModelInstance { name: "det_tr".into(), layers });
            }
        }
    }

    edges.extend(fe.edges);
    edges.extend(trunks.edges);

    let mut stages = vec![StageSpec {
        stage_id: StageId::FeBfpn,
        models: fe.models,
        concurrency_groups: fe.groups,
    }];
    stages.push(s_stage);
    stages.push(t_stage);
    if !trunks.models.is_empty() {
        stages.push(StageSpec {
            stage_id: StageId::Trunks,
            models: trunks.models,
            concurrency_groups: trunks.groups,
        });
    }

    Ok(WorkloadGraph { schema_version: WORKLOAD_SCHEMA_VERSION, stages, edges })
}
