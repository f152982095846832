//! `plot`: self-contained SVG renderings of the recorded traces — accuracy
//! curves, entropy and magnetization heat-maps, TE versus delay with one-sigma
//! bands, and the O-information series. No plotting dependency; the files are
//! plain vector documents.

use crate::analyze::{read_analysis, OINFO_HEADER, TE_HEADER};
use crate::artifacts::{fields, write_atomic, Trace, ENTROPY, MAGNETIZATION, METRICS, OINFO, TE_TABLE};
use crate::train::{ENTROPY_HEADER, LABELS, MAGNETIZATION_HEADER, METRICS_HEADER};
use anyhow::{bail, Result};
use std::fmt::Write as _;
use std::path::Path;

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 56.0;

const LABEL_COLORS: [&str; 3] = ["#1f6fb2", "#d1495b", "#3a7d44"];
const PAIR_COLORS: [&str; 6] = [
    "#1f6fb2", "#d1495b", "#3a7d44", "#8c5e99", "#c77f2d", "#4f4f4f",
];

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        MARGIN + (v - self.x_min) / (self.x_max - self.x_min) * (W - 2.0 * MARGIN)
    }
    fn y(&self, v: f64) -> f64 {
        H - MARGIN - (v - self.y_min) / (self.y_max - self.y_min) * (H - 2.0 * MARGIN)
    }
}

fn svg_open(body: &mut String, height: f64) {
    let _ = writeln!(
        body,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{height}\" \
         viewBox=\"0 0 {W} {height}\" font-family=\"monospace\" font-size=\"11\">"
    );
    let _ = writeln!(body, "<rect width=\"{W}\" height=\"{height}\" fill=\"white\"/>");
}

fn axes(body: &mut String, frame: &Frame, title: &str, x_label: &str, y_label: &str) {
    let _ = writeln!(
        body,
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    );
    let _ = writeln!(
        body,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\">{title}</text>",
        W / 2.0,
        MARGIN / 2.0
    );
    let _ = writeln!(
        body,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>",
        W / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        body,
        "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">{y_label}</text>",
        H / 2.0,
        H / 2.0
    );
    for (v, at_x) in [
        (frame.x_min, true),
        (frame.x_max, true),
        (frame.y_min, false),
        (frame.y_max, false),
    ] {
        if at_x {
            let _ = writeln!(
                body,
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{v:.2}</text>",
                frame.x(v),
                H - MARGIN + 16.0
            );
        } else {
            let _ = writeln!(
                body,
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{v:.2}</text>",
                MARGIN - 6.0,
                frame.y(v) + 4.0
            );
        }
    }
}

fn polyline(body: &mut String, frame: &Frame, points: &[(f64, f64)], color: &str, dash: bool) {
    let mut path = String::new();
    for (x, y) in points {
        let _ = write!(path, "{:.2},{:.2} ", frame.x(*x), frame.y(*y));
    }
    let dash_attr = if dash { " stroke-dasharray=\"5,3\"" } else { "" };
    let _ = writeln!(
        body,
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"{dash_attr} points=\"{}\"/>",
        path.trim_end()
    );
}

fn band(body: &mut String, frame: &Frame, upper: &[(f64, f64)], lower: &[(f64, f64)], color: &str) {
    let mut path = String::new();
    for (x, y) in upper {
        let _ = write!(path, "{:.2},{:.2} ", frame.x(*x), frame.y(*y));
    }
    for (x, y) in lower.iter().rev() {
        let _ = write!(path, "{:.2},{:.2} ", frame.x(*x), frame.y(*y));
    }
    let _ = writeln!(
        body,
        "<polygon fill=\"{color}\" fill-opacity=\"0.15\" stroke=\"none\" points=\"{}\"/>",
        path.trim_end()
    );
}

fn legend(body: &mut String, entries: &[(&str, String)]) {
    for (i, (color, text)) in entries.iter().enumerate() {
        let y = MARGIN + 14.0 + 14.0 * i as f64;
        let x = W - MARGIN - 150.0;
        let _ = writeln!(
            body,
            "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"10\" height=\"3\" fill=\"{color}\"/>",
            y - 3.0
        );
        let _ = writeln!(body, "<text x=\"{:.1}\" y=\"{y:.1}\">{text}</text>", x + 14.0);
    }
}

/// Sequential white-to-blue fill for non-negative heat-map values.
fn heat_color(v: f64) -> String {
    let t = v.clamp(0.0, 1.0);
    let r = (255.0 - 205.0 * t) as u8;
    let g = (255.0 - 155.0 * t) as u8;
    let b = (255.0 - 77.0 * t) as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Diverging blue-white-red fill for values in [-1, 1].
fn diverging_color(v: f64) -> String {
    let t = v.clamp(-1.0, 1.0);
    if t >= 0.0 {
        let r = 255u8;
        let g = (255.0 - 180.0 * t) as u8;
        let b = (255.0 - 180.0 * t) as u8;
        format!("#{r:02x}{g:02x}{b:02x}")
    } else {
        let r = (255.0 + 180.0 * t) as u8;
        let g = (255.0 + 180.0 * t) as u8;
        let b = 255u8;
        format!("#{r:02x}{g:02x}{b:02x}")
    }
}

fn accuracy_plot(run: &Path) -> Result<String> {
    let trace = Trace::read(run, METRICS, METRICS_HEADER)?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut per_label: Vec<Vec<(f64, f64)>> = vec![Vec::new(); LABELS];
    for row in &trace.rows {
        let f = fields(row)?;
        train.push((f[0], f[2]));
        test.push((f[0], f[3]));
        for l in 0..LABELS {
            per_label[l].push((f[0], f[7 + l]));
        }
    }
    let frame = Frame {
        x_min: 0.0,
        x_max: (trace.rows.len().max(2) - 1) as f64,
        y_min: 0.0,
        y_max: 1.0,
    };
    let mut body = String::new();
    svg_open(&mut body, H);
    axes(&mut body, &frame, "accuracy", "sweep", "accuracy");
    polyline(&mut body, &frame, &train, "black", false);
    polyline(&mut body, &frame, &test, "#7a7a7a", true);
    let mut entries = vec![
        ("black", "train".to_string()),
        ("#7a7a7a", "test".to_string()),
    ];
    for l in 0..LABELS {
        polyline(&mut body, &frame, &per_label[l], LABEL_COLORS[l], true);
        entries.push((LABEL_COLORS[l], format!("test label {l}")));
    }
    legend(&mut body, &entries);
    body.push_str("</svg>\n");
    Ok(body)
}

fn grid_heatmap(
    body: &mut String,
    values: &[Vec<f64>],
    top: f64,
    height: f64,
    title: &str,
    color: &dyn Fn(f64) -> String,
) {
    let rows = values.len();
    let cols = values[0].len();
    let cell_w = (W - 2.0 * MARGIN) / cols as f64;
    let cell_h = (height - 28.0) / rows as f64;
    let _ = writeln!(
        body,
        "<text x=\"{MARGIN}\" y=\"{:.1}\" font-size=\"12\">{title}</text>",
        top + 12.0
    );
    for (r, row) in values.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            let _ = writeln!(
                body,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
                MARGIN + c as f64 * cell_w,
                top + 20.0 + r as f64 * cell_h,
                cell_w + 0.05,
                cell_h + 0.05,
                color(*v)
            );
        }
    }
}

fn entropy_plot(run: &Path, n_sites: usize) -> Result<String> {
    let trace = Trace::read(run, ENTROPY, ENTROPY_HEADER)?;
    let bonds = n_sites - 1;
    let sweeps = trace.rows.len() / bonds;
    let mut grid = vec![vec![0.0; sweeps]; bonds];
    let mut s_max: f64 = 1e-12;
    for row in &trace.rows {
        let f = fields(row)?;
        grid[f[1] as usize][f[0] as usize] = f[2];
        s_max = s_max.max(f[2]);
    }
    let mut body = String::new();
    svg_open(&mut body, H);
    grid_heatmap(
        &mut body,
        &grid,
        MARGIN,
        H - 2.0 * MARGIN,
        &format!("bond entropy S(i), sweep 0..{sweeps} (x), bond (y), max {s_max:.3}"),
        &|v| heat_color(v / s_max),
    );
    body.push_str("</svg>\n");
    Ok(body)
}

fn magnetization_plot(run: &Path, n_sites: usize) -> Result<String> {
    let trace = Trace::read(run, MAGNETIZATION, MAGNETIZATION_HEADER)?;
    let sweeps = trace.rows.len() / (LABELS * n_sites);
    let mut grids = vec![vec![vec![0.0; sweeps]; n_sites]; LABELS];
    for row in &trace.rows {
        let f = fields(row)?;
        grids[f[1] as usize][f[2] as usize][f[0] as usize] = f[3];
    }
    let panel = 200.0;
    let height = MARGIN + panel * LABELS as f64 + MARGIN;
    let mut body = String::new();
    svg_open(&mut body, height);
    for l in 0..LABELS {
        grid_heatmap(
            &mut body,
            &grids[l],
            MARGIN + l as f64 * panel,
            panel - 10.0,
            &format!("magnetization, label {l}: sweep (x), site (y), blue -1 .. red +1"),
            &diverging_color,
        );
    }
    body.push_str("</svg>\n");
    Ok(body)
}

fn te_plot(run: &Path) -> Result<String> {
    let rows = read_analysis(run, TE_TABLE, TE_HEADER)?;
    // direction index -> tau-ordered points
    let mut curves: std::collections::BTreeMap<(usize, usize), Vec<(f64, f64, f64)>> =
        std::collections::BTreeMap::new();
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    let mut tau_max = 1.0f64;
    for row in &rows {
        let f = fields(row)?;
        curves
            .entry((f[0] as usize, f[1] as usize))
            .or_default()
            .push((f[2], f[3], f[4]));
        y_min = y_min.min(f[3] - f[4]);
        y_max = y_max.max(f[3] + f[4]);
        tau_max = tau_max.max(f[2]);
    }
    if curves.is_empty() {
        bail!("TE table is empty");
    }
    let pad = 0.05 * (y_max - y_min).max(1e-9);
    let frame = Frame {
        x_min: 1.0,
        x_max: tau_max,
        y_min: y_min - pad,
        y_max: y_max + pad,
    };
    let mut body = String::new();
    svg_open(&mut body, H);
    axes(&mut body, &frame, "averaged mask TE vs delay", "tau", "TE (nats)");
    let mut entries = Vec::new();
    for (i, ((src, tgt), pts)) in curves.iter().enumerate() {
        let color = PAIR_COLORS[i % PAIR_COLORS.len()];
        let mean: Vec<(f64, f64)> = pts.iter().map(|(t, m, _)| (*t, *m)).collect();
        let upper: Vec<(f64, f64)> = pts.iter().map(|(t, m, s)| (*t, m + s)).collect();
        let lower: Vec<(f64, f64)> = pts.iter().map(|(t, m, s)| (*t, m - s)).collect();
        band(&mut body, &frame, &upper, &lower, color);
        polyline(&mut body, &frame, &mean, color, false);
        entries.push((color, format!("{src} -> {tgt}")));
    }
    legend(&mut body, &entries);
    body.push_str("</svg>\n");
    Ok(body)
}

fn oinfo_plot(run: &Path) -> Result<String> {
    let rows = read_analysis(run, OINFO, OINFO_HEADER)?;
    if rows.is_empty() {
        bail!("O-information table is empty");
    }
    let mut pts = Vec::new();
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for row in &rows {
        let f = fields(row)?;
        pts.push((f[0], f[1], f[2]));
        y_min = y_min.min(f[1] - f[2]);
        y_max = y_max.max(f[1] + f[2]);
    }
    y_min = y_min.min(0.0);
    y_max = y_max.max(0.0);
    let pad = 0.05 * (y_max - y_min).max(1e-9);
    let frame = Frame {
        x_min: pts[0].0,
        x_max: pts[pts.len() - 1].0.max(pts[0].0 + 1.0),
        y_min: y_min - pad,
        y_max: y_max + pad,
    };
    let mut body = String::new();
    svg_open(&mut body, H);
    axes(
        &mut body,
        &frame,
        "O-information of score series (permutation bands)",
        "sweep (window center)",
        "Omega (nats)",
    );
    // zero line
    let zero: Vec<(f64, f64)> = vec![(frame.x_min, 0.0), (frame.x_max, 0.0)];
    polyline(&mut body, &frame, &zero, "#bbbbbb", true);
    let mean: Vec<(f64, f64)> = pts.iter().map(|(x, m, _)| (*x, *m)).collect();
    let upper: Vec<(f64, f64)> = pts.iter().map(|(x, m, s)| (*x, m + s)).collect();
    let lower: Vec<(f64, f64)> = pts.iter().map(|(x, m, s)| (*x, m - s)).collect();
    band(&mut body, &frame, &upper, &lower, "#1f6fb2");
    polyline(&mut body, &frame, &mean, "#1f6fb2", false);
    body.push_str("</svg>\n");
    Ok(body)
}

pub const PLOT_FILES: [&str; 5] = [
    "accuracy.svg",
    "entropy.svg",
    "magnetization.svg",
    "te.svg",
    "oinfo.svg",
];

pub fn cmd_plot(run: &Path) -> Result<()> {
    let cfg = crate::analyze::load_run_config(run)?;
    let required = [METRICS, ENTROPY, MAGNETIZATION, TE_TABLE, OINFO];
    let missing: Vec<String> = required
        .iter()
        .filter(|name| !run.join(name).exists())
        .map(|name| name.to_string())
        .collect();
    if !missing.is_empty() {
        bail!("missing inputs in {}: {}", run.display(), missing.join(", "));
    }
    let n = cfg.n_sites();
    write_atomic(&run.join(PLOT_FILES[0]), &accuracy_plot(run)?)?;
    write_atomic(&run.join(PLOT_FILES[1]), &entropy_plot(run, n)?)?;
    write_atomic(&run.join(PLOT_FILES[2]), &magnetization_plot(run, n)?)?;
    write_atomic(&run.join(PLOT_FILES[3]), &te_plot(run)?)?;
    write_atomic(&run.join(PLOT_FILES[4]), &oinfo_plot(run)?)?;
    Ok(())
}
