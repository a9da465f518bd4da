//! Bundled presets: the eight-camera perception workload, the 6x6 and
//! 2x(6x6) package descriptions, and the cost profile fixture carrying the
//! published per-layer numbers (synthetic rows fill in values that were only
//! published as aggregates; provenance is tagged per row).

use crate::cost::{AnalyticalParams, CostProfile};
use crate::nop::McmSpec;
use crate::workload::{build_autopilot_pipeline, AutopilotParams, WorkloadGraph};

pub const AUTOPILOT_PAPER_PROFILE: &str = include_str!("../data/autopilot-paper.csv");
pub const SIMBA_6X6: &str = include_str!("../data/simba-6x6.toml");
pub const SIMBA_2X6X6: &str = include_str!("../data/simba-2x6x6.toml");

/// The default perception pipeline preset.
pub fn autopilot_graph() -> WorkloadGraph {
    build_autopilot_pipeline(&AutopilotParams::default()).expect("default params are valid")
}

/// The bundled cost profile with the published per-layer numbers.
pub fn autopilot_paper_profile() -> CostProfile {
    CostProfile::parse(AUTOPILOT_PAPER_PROFILE).expect("bundled profile parses")
}

pub fn simba_6x6() -> McmSpec {
    McmSpec::from_toml(SIMBA_6X6).expect("bundled mcm spec parses")
}

pub fn simba_2x6x6() -> McmSpec {
    McmSpec::from_toml(SIMBA_2X6X6).expect("bundled mcm spec parses")
}

pub fn workload_preset(name: &str) -> Option<WorkloadGraph> {
    match name {
        "autopilot" => Some(autopilot_graph()),
        _ => None,
    }
}

pub fn mcm_preset(name: &str) -> Option<McmSpec> {
    match name {
        "simba-6x6" => Some(simba_6x6()),
        "simba-2x6x6" => Some(simba_2x6x6()),
        _ => None,
    }
}

pub fn profile_preset(name: &str) -> Option<CostProfile> {
    match name {
        "autopilot-paper" => Some(autopilot_paper_profile()),
        "analytical" => Some(CostProfile::analytical(AnalyticalParams::default())),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{layer_cost, Dataflow};
    use crate::workload::validate;

    #[test]
    fn bundled_presets_load() {
        let g = autopilot_graph();
        assert!(validate(&g).is_empty());
        let p = autopilot_paper_profile();
        assert!(p.len() > 100);
        assert_eq!(simba_6x6().chiplet_count(), 36);
        assert_eq!(simba_2x6x6().chiplet_count(), 72);
        assert_eq!(simba_2x6x6().npus, 2);
    }

    #[test]
    fn profile_covers_every_compute_layer() {
        let g = autopilot_graph();
        let p = autopilot_paper_profile();
        p.check_coverage(&g, &Dataflow::BOTH).unwrap();
    }

    #[test]
    fn published_fixture_values() {
        let g = autopilot_graph();
        let p = autopilot_paper_profile();
        let get = |id: &str| {
            layer_cost(g.layer(id).unwrap(), Dataflow::OutputStationary, &p)
                .unwrap()
                .latency_ms
        };
        assert!((get("t_fuse/ffn") - 490.2).abs() < 1e-9);
        assert!((get("s_fuse/qkv") - 78.7).abs() < 1e-9);
        assert!((get("t_fuse/qkv") - 165.6).abs() < 1e-9);
        assert!((get("s_fuse/ffn") - 236.0).abs() < 1e-9);
    }

    #[test]
    fn one_camera_model_totals_the_base_latency() {
        let g = autopilot_graph();
        let p = autopilot_paper_profile();
        let fe = g.stage(crate::workload::StageId::FeBfpn).unwrap();
        let total: f64 = fe.models[0]
            .layers
            .iter()
            .map(|l| layer_cost(l, Dataflow::OutputStationary, &p).unwrap().latency_ms)
            .sum();
        assert!((total - 82.7).abs() < 1e-6, "one camera totals {total}");
    }
}
