//! Network-on-Package cost model for the 2D chiplet mesh.
//!
//! XY deterministic routing, store-and-forward serialization: transfer
//! latency is `hops * (bytes / bandwidth) + hops * hop_latency` and energy is
//! `bytes * 8 * energy_per_bit * hops`. No contention or arbitration model.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::Dataflow;

pub const MCM_SCHEMA_VERSION: u32 = 1;

/// Default link bandwidth in bytes per second (100 GB/s per chiplet link).
pub const DEFAULT_NOP_BANDWIDTH: f64 = 100e9;
/// Default per-hop latency in seconds (35 ns).
pub const DEFAULT_HOP_LATENCY: f64 = 35e-9;
/// Default transmission energy in joules per bit (2.04 pJ).
pub const DEFAULT_ENERGY_PER_BIT: f64 = 2.04e-12;
pub const DEFAULT_PE_COUNT: u64 = 256;

/// Grid position, x growing right and y growing down, zero-indexed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Position {
    pub x: u32,
    pub y: u32,
}

impl Position {
    pub const fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChipletSpec {
    pub pe_count: u64,
    pub dataflow: Dataflow,
}

/// Multi-chiplet module description: the chiplet grid plus NoP link
/// parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmSpec {
    pub grid_w: u32,
    pub grid_h: u32,
    pub chiplets: BTreeMap<Position, ChipletSpec>,
    /// Bytes per second per link.
    pub nop_bandwidth: f64,
    /// Seconds per hop.
    pub hop_latency: f64,
    /// Joules per bit.
    pub energy_per_bit: f64,
    /// Number of NPU packages the grid is composed of (side by side along x).
    pub npus: u32,
}

#[derive(Debug, Error, PartialEq)]
pub enum NopError {
    #[error("position {0} is outside the {1}x{2} grid")]
    OutOfGrid(Position, u32, u32),
    #[error("mcm config: {0}")]
    Config(String),
}

impl McmSpec {
    /// Uniform grid with every chiplet identical.
    pub fn uniform(grid_w: u32, grid_h: u32, pe_count: u64, dataflow: Dataflow) -> Self {
        let mut chiplets = BTreeMap::new();
        for y in 0..grid_h {
            for x in 0..grid_w {
                chiplets.insert(Position::new(x, y), ChipletSpec { pe_count, dataflow });
            }
        }
        Self {
            grid_w,
            grid_h,
            chiplets,
            nop_bandwidth: DEFAULT_NOP_BANDWIDTH,
            hop_latency: DEFAULT_HOP_LATENCY,
            energy_per_bit: DEFAULT_ENERGY_PER_BIT,
            npus: 1,
        }
    }

    pub fn chiplet_count(&self) -> usize {
        self.chiplets.len()
    }

    pub fn contains(&self, p: Position) -> bool {
        p.x < self.grid_w && p.y < self.grid_h
    }

    pub fn positions(&self) -> impl Iterator<Item = Position> + '_ {
        self.chiplets.keys().copied()
    }

    /// Parse from the TOML hardware config format (see docs/formats.md).
    pub fn from_toml(text: &str) -> Result<McmSpec, NopError> {
        let raw: RawMcmFile =
            toml::from_str(text).map_err(|e| NopError::Config(e.to_string()))?;
        if raw.schema_version != MCM_SCHEMA_VERSION {
            return Err(NopError::Config(format!(
                "unsupported schema_version {} (expected {MCM_SCHEMA_VERSION})",
                raw.schema_version
            )));
        }
        if raw.grid.width == 0 || raw.grid.height == 0 {
            return Err(NopError::Config("grid dimensions must be positive".into()));
        }
        let defaults = raw.defaults;
        if defaults.pe_count == 0 {
            return Err(NopError::Config("defaults.pe_count must be positive".into()));
        }
        let mut spec = McmSpec::uniform(
            raw.grid.width,
            raw.grid.height,
            defaults.pe_count,
            defaults.dataflow,
        );
        spec.npus = raw.grid.npus;
        if raw.nop.bandwidth_gbps <= 0.0
            || raw.nop.hop_latency_ns <= 0.0
            || raw.nop.energy_per_bit_pj <= 0.0
        {
            return Err(NopError::Config("nop link parameters must be positive".into()));
        }
        spec.nop_bandwidth = raw.nop.bandwidth_gbps * 1e9;
        spec.hop_latency = raw.nop.hop_latency_ns * 1e-9;
        spec.energy_per_bit = raw.nop.energy_per_bit_pj * 1e-12;
        for c in raw.chiplet {
            let pos = Position::new(c.x, c.y);
            if !spec.contains(pos) {
                return Err(NopError::OutOfGrid(pos, spec.grid_w, spec.grid_h));
            }
            spec.chiplets.insert(
                pos,
                ChipletSpec {
                    pe_count: c.pe_count.unwrap_or(defaults.pe_count),
                    dataflow: c.dataflow.unwrap_or(defaults.dataflow),
                },
            );
        }
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("schema_version = {}\n\n", MCM_SCHEMA_VERSION));
        out.push_str("[grid]\n");
        out.push_str(&format!("width = {}\n", self.grid_w));
        out.push_str(&format!("height = {}\n", self.grid_h));
        out.push_str(&format!("npus = {}\n\n", self.npus));
        let default = self.chiplets.values().next().copied().unwrap_or(ChipletSpec {
            pe_count: DEFAULT_PE_COUNT,
            dataflow: Dataflow::OutputStationary,
        });
        out.push_str("[defaults]\n");
        out.push_str(&format!("pe_count = {}\n", default.pe_count));
        out.push_str(&format!("dataflow = \"{}\"\n\n", default.dataflow));
        out.push_str("[nop]\n");
        out.push_str(&format!("bandwidth_gbps = {}\n", self.nop_bandwidth / 1e9));
        out.push_str(&format!("hop_latency_ns = {}\n", self.hop_latency / 1e-9));
        out.push_str(&format!("energy_per_bit_pj = {}\n", self.energy_per_bit / 1e-12));
        for (pos, c) in &self.chiplets {
            if c.pe_count != default.pe_count || c.dataflow != default.dataflow {
                out.push_str(&format!(
                    "\n[[chiplet]]\nx = {}\ny = {}\npe_count = {}\ndataflow = \"{}\"\n",
                    pos.x, pos.y, c.pe_count, c.dataflow
                ));
            }
        }
        out
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMcmFile {
    schema_version: u32,
    grid: RawGrid,
    defaults: RawDefaults,
    nop: RawNop,
    #[serde(default)]
    chiplet: Vec<RawChiplet>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    width: u32,
    height: u32,
    #[serde(default = "one")]
    npus: u32,
}

fn one() -> u32 {
    1
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDefaults {
    pe_count: u64,
    dataflow: Dataflow,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNop {
    bandwidth_gbps: f64,
    hop_latency_ns: f64,
    energy_per_bit_pj: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChiplet {
    x: u32,
    y: u32,
    #[serde(default)]
    pe_count: Option<u64>,
    #[serde(default)]
    dataflow: Option<Dataflow>,
}

/// Cost of one mesh transfer.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TransferCost {
    /// Seconds.
    pub latency: f64,
    /// Joules.
    pub energy: f64,
    pub hops: u32,
}

/// Hop count between two positions under XY routing (Manhattan distance).
pub fn hops(src: Position, dst: Position, mcm: &McmSpec) -> Result<u32, NopError> {
    for p in [src, dst] {
        if !mcm.contains(p) {
            return Err(NopError::OutOfGrid(p, mcm.grid_w, mcm.grid_h));
        }
    }
    Ok(src.x.abs_diff(dst.x) + src.y.abs_diff(dst.y))
}

/// Point-to-point transfer cost. Zero-hop transfers are free.
pub fn transfer_cost(bytes: u64, src: Position, dst: Position, mcm: &McmSpec) -> TransferCost {
    let h = src.x.abs_diff(dst.x) + src.y.abs_diff(dst.y);
    transfer_cost_hops(bytes, h, mcm)
}

pub fn transfer_cost_hops(bytes: u64, hops: u32, mcm: &McmSpec) -> TransferCost {
    if hops == 0 {
        return TransferCost::default();
    }
    let hop_f = f64::from(hops);
    TransferCost {
        latency: hop_f * (bytes as f64 / mcm.nop_bandwidth) + hop_f * mcm.hop_latency,
        energy: bytes as f64 * 8.0 * mcm.energy_per_bit * hop_f,
        hops,
    }
}

/// Gather sharded outputs from several sources into one destination.
///
/// Mesh links are independent, so latency is the slowest source while energy
/// accumulates; serialization at the destination is not modeled.
pub fn gather_cost(sources: &[(Position, u64)], dst: Position, mcm: &McmSpec) -> TransferCost {
    let mut total = TransferCost::default();
    for &(src, bytes) in sources {
        let c = transfer_cost(bytes, src, dst, mcm);
        total.energy += c.energy;
        total.latency = total.latency.max(c.latency);
        total.hops = total.hops.max(c.hops);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mcm() -> McmSpec {
        McmSpec::uniform(6, 6, 256, Dataflow::OutputStationary)
    }

    #[test]
    fn hops_examples() {
        let m = mcm();
        assert_eq!(hops(Position::new(0, 0), Position::new(0, 0), &m).unwrap(), 0);
        assert_eq!(hops(Position::new(0, 0), Position::new(2, 3), &m).unwrap(), 5);
        assert_eq!(hops(Position::new(5, 5), Position::new(0, 0), &m).unwrap(), 10);
    }

    #[test]
    fn hops_out_of_grid_is_error() {
        let m = mcm();
        assert!(hops(Position::new(6, 0), Position::new(0, 0), &m).is_err());
    }

    #[test]
    fn transfer_cost_published_parameters() {
        let m = mcm();
        let c = transfer_cost(409_600, Position::new(0, 0), Position::new(1, 0), &m);
        assert!((c.latency - 4.131e-6).abs() < 1e-12, "latency {}", c.latency);
        assert!((c.energy - 6.684_672e-6).abs() < 1e-12, "energy {}", c.energy);
        assert_eq!(c.hops, 1);
    }

    #[test]
    fn zero_hops_is_free() {
        let m = mcm();
        let c = transfer_cost(123_456, Position::new(2, 2), Position::new(2, 2), &m);
        assert_eq!(c, TransferCost::default());
    }

    #[test]
    fn zero_bytes_costs_header_latency_only() {
        let m = mcm();
        let c = transfer_cost(0, Position::new(0, 0), Position::new(3, 0), &m);
        assert!((c.latency - 105e-9).abs() < 1e-15);
        assert_eq!(c.energy, 0.0);
    }

    #[test]
    fn gather_single_source_equals_transfer() {
        let m = mcm();
        let single = transfer_cost(1000, Position::new(0, 0), Position::new(2, 1), &m);
        let gathered = gather_cost(&[(Position::new(0, 0), 1000)], Position::new(2, 1), &m);
        assert_eq!(single, gathered);
    }

    #[test]
    fn gather_equidistant_sources_sum_energy_max_latency() {
        let m = mcm();
        let dst = Position::new(2, 2);
        let sources = [
            (Position::new(1, 2), 4096),
            (Position::new(3, 2), 4096),
            (Position::new(2, 1), 4096),
            (Position::new(2, 3), 4096),
        ];
        let single = transfer_cost(4096, sources[0].0, dst, &m);
        let g = gather_cost(&sources, dst, &m);
        assert!((g.energy - 4.0 * single.energy).abs() < 1e-18);
        assert!((g.latency - single.latency).abs() < 1e-18);
    }

    #[test]
    fn gather_latency_follows_farthest_source() {
        let m = mcm();
        let dst = Position::new(0, 0);
        let sources = [
            (Position::new(1, 0), 4096),
            (Position::new(2, 0), 4096),
            (Position::new(3, 0), 4096),
        ];
        let g = gather_cost(&sources, dst, &m);
        let far = transfer_cost(4096, Position::new(3, 0), dst, &m);
        assert_eq!(g.latency, far.latency);
        assert_eq!(g.hops, 3);
    }

    #[test]
    fn toml_round_trip() {
        let mut m = mcm();
        m.chiplets.insert(
            Position::new(4, 4),
            ChipletSpec { pe_count: 256, dataflow: Dataflow::WeightStationary },
        );
        let text = m.to_toml();
        let back = McmSpec::from_toml(&text).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn unknown_toml_fields_rejected() {
        let text = "schema_version = 1\nbogus = 3\n[grid]\nwidth = 2\nheight = 2\n[defaults]\npe_count = 256\ndataflow = \"os\"\n[nop]\nbandwidth_gbps = 100.0\nhop_latency_ns = 35.0\nenergy_per_bit_pj = 2.04\n";
        assert!(McmSpec::from_toml(text).is_err());
    }
}
