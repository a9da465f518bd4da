//! Report emission: CSV tables, aligned text tables, placement maps.
//!
//! Every CSV produced by the tools goes through [`Table`], whose emit/parse
//! pair round-trips exactly; repeated runs produce byte-identical files.

use std::collections::BTreeMap;

use crate::dse::SearchReport;
use crate::nop::{McmSpec, Position};
use crate::schedule::{DecisionRecord, PipelineMetrics, Schedule};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Self { headers: headers.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.headers.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Table, String> {
        let mut lines = text.lines();
        let headers = lines
            .next()
            .ok_or_else(|| "empty table".to_string())?
            .split(',')
            .map(str::to_string)
            .collect::<Vec<_>>();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let row: Vec<String> = line.split(',').map(str::to_string).collect();
            if row.len() != headers.len() {
                return Err(format!(
                    "row {} has {} fields, expected {}",
                    i + 2,
                    row.len(),
                    headers.len()
                ));
            }
            rows.push(row);
        }
        Ok(Table { headers, rows })
    }

    /// Column-aligned text rendering.
    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.headers.iter().map(String::len).collect();
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate() {
                widths[i] = widths[i].max(cell.len());
            }
        }
        let mut out = String::new();
        let fmt_row = |cells: &[String], widths: &[usize]| -> String {
            let mut line = String::new();
            for (i, cell) in cells.iter().enumerate() {
                if i > 0 {
                    line.push_str("  ");
                }
                line.push_str(&format!("{cell:<width$}", width = widths[i]));
            }
            line.trim_end().to_string()
        };
        out.push_str(&fmt_row(&self.headers, &widths));
        out.push('\n');
        out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&fmt_row(row, &widths));
            out.push('\n');
        }
        out
    }
}

pub fn fmt_ms(v: f64) -> String {
    format!("{v:.4}")
}

pub fn fmt_j(v: f64) -> String {
    format!("{v:.6}")
}

pub fn fmt_pct(v: f64) -> String {
    format!("{v:.2}")
}

pub fn decision_table(log: &[DecisionRecord]) -> Table {
    let mut t = Table::new(&[
        "iteration",
        "action",
        "stage",
        "unit",
        "layer",
        "k_before",
        "k_after",
        "unit_latency_ms",
        "stage_pipe_ms",
    ]);
    for r in log {
        t.push(vec![
            r.iteration.to_string(),
            r.action.to_string(),
            r.stage.to_string(),
            r.unit.clone(),
            r.layer.clone(),
            r.k_before.to_string(),
            r.k_after.to_string(),
            fmt_ms(r.unit_latency_after_ms),
            fmt_ms(r.stage_pipe_after_ms),
        ]);
    }
    t
}

pub fn metrics_table(rows: &[(String, PipelineMetrics)]) -> Table {
    let mut t = Table::new(&[
        "configuration",
        "e2e_ms",
        "pipe_ms",
        "energy_j",
        "edp_ms_j",
        "utilization_pct",
    ]);
    for (name, m) in rows {
        t.push(vec![
            name.clone(),
            fmt_ms(m.e2e_latency_ms),
            fmt_ms(m.pipe_latency_ms),
            fmt_j(m.energy_j),
            fmt_ms(m.edp_ms_j),
            fmt_pct(m.utilization * 100.0),
        ]);
    }
    t
}

pub fn dse_table(report: &SearchReport) -> Table {
    let mut t = Table::new(&[
        "ws_count",
        "e2e_ms",
        "pipe_ms",
        "energy_j",
        "edp_ms_j",
        "delta_e2e_pct",
        "delta_pipe_pct",
        "delta_energy_pct",
        "delta_edp_pct",
        "feasible",
        "total",
        "ws_positions",
    ]);
    for r in &report.results {
        let delta = report.deltas.iter().find(|(ws, _)| *ws == r.ws_count).map(|(_, d)| *d);
        let (m, ws_pos) = match &r.best {
            Some(b) => (
                Some(b.metrics),
                b.config
                    .ws_positions
                    .iter()
                    .map(|p| format!("{}.{}", p.x, p.y))
                    .collect::<Vec<_>>()
                    .join(";"),
            ),
            None => (None, String::new()),
        };
        t.push(vec![
            r.ws_count.to_string(),
            m.map(|m| fmt_ms(m.e2e_latency_ms)).unwrap_or_default(),
            m.map(|m| fmt_ms(m.pipe_latency_ms)).unwrap_or_default(),
            m.map(|m| fmt_j(m.energy_j)).unwrap_or_default(),
            m.map(|m| fmt_ms(m.edp_ms_j)).unwrap_or_default(),
            delta.map(|d| fmt_pct(d.e2e_pct)).unwrap_or_default(),
            delta.map(|d| fmt_pct(d.pipe_pct)).unwrap_or_default(),
            delta.map(|d| fmt_pct(d.energy_pct)).unwrap_or_default(),
            delta.map(|d| fmt_pct(d.edp_pct)).unwrap_or_default(),
            r.feasible_configs.to_string(),
            r.total_configs.to_string(),
            ws_pos,
        ]);
    }
    t
}

/// Text grid of the placement: one cell per chiplet listing its stage and
/// unit shard.
pub fn placement_text(schedule: &Schedule, mcm: &McmSpec) -> String {
    let mut cell: BTreeMap<Position, String> = BTreeMap::new();
    for (stage, region) in &schedule.stage_regions {
        for p in region {
            cell.insert(*p, format!("{stage}:-"));
        }
    }
    for state in &schedule.units {
        let k = state.positions.len().max(1);
        if state.unit.model_members.len() > 1 {
            for (i, (model, _)) in state.unit.model_members.iter().enumerate() {
                if let Some(p) = state.positions.get(i % k) {
                    cell.insert(*p, format!("{}:{model}", state.unit.stage));
                }
            }
        } else {
            for (i, p) in state.positions.iter().enumerate() {
                cell.insert(*p, format!("{}:{}[{}/{}]", state.unit.stage, state.unit.name, i + 1, k));
            }
        }
    }
    let width = cell.values().map(String::len).max().unwrap_or(8).max(8);
    let mut out = String::new();
    for y in 0..mcm.grid_h {
        for x in 0..mcm.grid_w {
            let text = cell
                .get(&Position::new(x, y))
                .cloned()
                .unwrap_or_else(|| "idle".to_string());
            out.push_str(&format!("| {text:<width$} "));
        }
        out.push_str("|\n");
    }
    out
}

/// Minimal SVG rendering of the placement grid.
pub fn placement_svg(schedule: &Schedule, mcm: &McmSpec) -> String {
    const CELL: u32 = 96;
    const PAD: u32 = 4;
    let w = mcm.grid_w * CELL;
    let h = mcm.grid_h * CELL;
    let stage_fill = |stage: &str| match stage {
        "fe_bfpn" => "#9ecae1",
        "s_fuse" => "#a1d99b",
        "t_fuse" => "#fdae6b",
        "trunks" => "#bcbddc",
        _ => "#eeeeee",
    };
    let mut cells: BTreeMap<Position, (String, String)> = BTreeMap::new();
    for (stage, region) in &schedule.stage_regions {
        for p in region {
            cells.insert(*p, (stage.to_string(), String::new()));
        }
    }
    for state in &schedule.units {
        let k = state.positions.len().max(1);
        if state.unit.model_members.len() > 1 {
            for (i, (model, _)) in state.unit.model_members.iter().enumerate() {
                if let Some(p) = state.positions.get(i % k) {
                    if let Some(c) = cells.get_mut(p) {
                        c.1 = model.clone();
                    }
                }
            }
        } else {
            for (i, p) in state.positions.iter().enumerate() {
                if let Some(c) = cells.get_mut(p) {
                    c.1 = format!("{} {}/{}", state.unit.name, i + 1, k);
                }
            }
        }
    }
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    );
    for y in 0..mcm.grid_h {
        for x in 0..mcm.grid_w {
            let p = Position::new(x, y);
            let (stage, label) = cells
                .get(&p)
                .cloned()
                .unwrap_or_else(|| ("idle".to_string(), String::new()));
            let (px, py) = (x * CELL + PAD, y * CELL + PAD);
            let size = CELL - 2 * PAD;
            svg.push_str(&format!(
                "  <rect x=\"{px}\" y=\"{py}\" width=\"{size}\" height=\"{size}\" fill=\"{}\" stroke=\"#555\"/>\n",
                stage_fill(&stage)
            ));
            svg.push_str(&format!(
                "  <text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"middle\">{}</text>\n",
                px + size / 2,
                py + size / 2,
                xml_escape(&label)
            ));
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_round_trips_through_csv() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["1".into(), "x".into()]);
        t.push(vec!["2".into(), "y".into()]);
        let text = t.to_csv();
        assert_eq!(Table::from_csv(&text).unwrap(), t);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(Table::from_csv("a,b\n1\n").is_err());
    }
}
