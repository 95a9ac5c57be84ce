//! SVG rendering of `figure3` tables: one panel per boundary condition,
//! log₂ y-axis, one series per (method, k), guide lines `2^{-t}` and `2^{-2t}`.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::output::Table;
use crate::CliError;

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 300.0;
const MARGIN_L: f64 = 56.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 32.0;
const MARGIN_B: f64 = 44.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

type Series = BTreeMap<(String, usize), Vec<(f64, f64)>>;

fn parse_rows(tab: &Table) -> Result<BTreeMap<String, Series>, CliError> {
    let col = |name: &str| tab.column(name).ok_or_else(|| CliError::Schema(format!("missing column `{name}`")));
    let (kind, k, t, bc, value) = (col("kind")?, col("k")?, col("t")?, col("bc")?, col("value")?);
    let mut panels: BTreeMap<String, Series> = BTreeMap::new();
    for row in &tab.rows {
        if row.len() != tab.columns.len() {
            return Err(CliError::Schema("ragged CSV row".into()));
        }
        if row[kind] != "replica" && row[kind] != "mc" {
            continue;
        }
        let kk: usize = row[k].parse().map_err(|_| CliError::Schema(format!("bad k `{}`", row[k])))?;
        let tt: f64 = row[t].parse().map_err(|_| CliError::Schema(format!("bad t `{}`", row[t])))?;
        let v: f64 = row[value].parse().map_err(|_| CliError::Schema(format!("bad value `{}`", row[value])))?;
        if !(v > 0.0) || !v.is_finite() {
            continue;
        }
        panels
            .entry(row[bc].clone())
            .or_default()
            .entry((row[kind].clone(), kk))
            .or_default()
            .push((tt, v.log2()));
    }
    panels.retain(|_, s| !s.is_empty());
    if panels.is_empty() {
        return Err(CliError::Schema("no plottable series".into()));
    }
    Ok(panels)
}

struct Frame {
    x0: f64,
    t_lo: f64,
    t_hi: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Frame {
    fn x(&self, t: f64) -> f64 {
        let span = (self.t_hi - self.t_lo).max(1e-9);
        self.x0 + MARGIN_L + (t - self.t_lo) / span * (PANEL_W - MARGIN_L - MARGIN_R)
    }

    fn y(&self, ly: f64) -> f64 {
        let span = (self.y_hi - self.y_lo).max(1e-9);
        MARGIN_T + (self.y_hi - ly) / span * (PANEL_H - MARGIN_T - MARGIN_B)
    }
}

/// Render the table as a standalone SVG document.
pub fn render(tab: &Table) -> Result<String, CliError> {
    let panels = parse_rows(tab)?;
    let mut order: Vec<&String> = panels.keys().collect();
    order.sort_by_key(|b| match b.as_str() {
        "pbc" => 0,
        "obc" => 1,
        _ => 2,
    });
    let width = PANEL_W * order.len() as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{PANEL_H:.0}" viewBox="0 0 {width:.0} {PANEL_H:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, bc) in order.iter().enumerate() {
        panel(&mut svg, i as f64 * PANEL_W, bc, &panels[*bc]);
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn panel(svg: &mut String, x0: f64, bc: &str, series: &Series) {
    let pts = series.values().flatten();
    let t_lo = pts.clone().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let t_hi = pts.clone().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let y_max = pts.clone().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let y_min = pts.map(|p| p.1).fold(f64::INFINITY, f64::min);
    let f = Frame { x0, t_lo, t_hi: t_hi.max(t_lo + 1.0), y_lo: (y_min - 0.5).floor(), y_hi: (y_max + 0.5).ceil() };

    let (left, right) = (f.x(f.t_lo), f.x(f.t_hi));
    let (top, bottom) = (f.y(f.y_hi), f.y(f.y_lo));
    let _ = writeln!(svg, r#"<g class="panel" data-bc="{bc}">"#);
    let _ = writeln!(svg, r#"<text x="{:.2}" y="18" text-anchor="middle" font-size="13">{}</text>"#, (left + right) / 2.0, bc.to_uppercase());
    let _ = writeln!(svg, r#"<rect x="{left:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#, right - left, bottom - top);
    let mut t = f.t_lo.ceil();
    while t <= f.t_hi + 1e-9 {
        let x = f.x(t);
        let _ = writeln!(svg, r#"<line x1="{x:.2}" y1="{bottom:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, bottom + 4.0);
        let _ = writeln!(svg, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{t}</text>"#, bottom + 16.0);
        t += 1.0;
    }
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">t</text>"#, (left + right) / 2.0, bottom + 32.0);
    let step = ((f.y_hi - f.y_lo) / 8.0).ceil().max(1.0);
    let mut ly = f.y_lo;
    while ly <= f.y_hi + 1e-9 {
        let y = f.y(ly);
        let _ = writeln!(svg, r#"<line x1="{:.2}" y1="{y:.2}" x2="{left:.2}" y2="{y:.2}" stroke="black"/>"#, left - 4.0);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">2^{ly:.0}</text>"#, left - 6.0, y + 4.0);
        ly += step;
    }

    // guides through the largest value at the earliest time
    let anchor = series
        .values()
        .flatten()
        .filter(|p| p.0 == f.t_lo)
        .map(|p| p.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let anchor = if anchor.is_finite() { anchor } else { y_max };
    for (rate, color, label) in [(1.0, "#8c564b", "2^-t"), (2.0, "black", "2^-2t")] {
        let end = anchor - rate * (f.t_hi - f.t_lo);
        let _ = writeln!(
            svg,
            r#"<line class="guide" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-dasharray="4 3"><title>{label}</title></line>"#,
            f.x(f.t_lo),
            f.y(anchor),
            f.x(f.t_hi),
            f.y(end)
        );
    }

    for (idx, ((kind, k), pts)) in series.iter().enumerate() {
        let color = COLORS[(k.saturating_sub(1)) % COLORS.len()];
        let mut pts = pts.clone();
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let _ = writeln!(svg, r#"<g class="series" data-kind="{kind}" data-k="{k}">"#);
        if kind == "replica" && pts.len() > 1 {
            let path: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", f.x(p.0), f.y(p.1))).collect();
            let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}"/>"#, path.join(" "));
        }
        for p in &pts {
            let (x, y) = (f.x(p.0), f.y(p.1));
            if kind == "mc" {
                let _ = writeln!(svg, r#"<rect x="{:.2}" y="{:.2}" width="8" height="8" fill="none" stroke="{color}"/>"#, x - 4.0, y - 4.0);
            } else {
                let _ = writeln!(svg, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#);
            }
        }
        let ly = top + 12.0 + 13.0 * idx as f64;
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{ly:.2}" text-anchor="end" fill="{color}">{kind} k={k}</text>"#, right - 6.0);
        svg.push_str("</g>\n");
    }
    svg.push_str("</g>\n");
}
