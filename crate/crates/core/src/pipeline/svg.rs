//! Minimal SVG charts: per task, treatment accuracy and ATE bias against
//! difficulty level, with interval whiskers.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::metrics::MetricValue;
use crate::taskgen::TaskKind;

use super::report::EvalReport;

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 300.0;
const MARGIN: f64 = 50.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

struct Series {
    name: String,
    points: Vec<(u32, MetricValue)>,
}

struct Panel<'a> {
    title: &'a str,
    series: Vec<Series>,
    max_level: u32,
    reference: Option<f64>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn y_range(panel: &Panel) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in &panel.series {
        for (_, m) in &s.points {
            let (a, b) = m.ci.map(|c| (c.lower, c.upper)).unwrap_or((m.value, m.value));
            lo = lo.min(a);
            hi = hi.max(b);
        }
    }
    if let Some(r) = panel.reference {
        lo = lo.min(r);
        hi = hi.max(r);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.08).max(0.01);
    (lo - pad, hi + pad)
}

fn draw_panel(out: &mut String, panel: &Panel, x0: f64) {
    let (ylo, yhi) = y_range(panel);
    let plot_w = PANEL_W - 2.0 * MARGIN;
    let plot_h = PANEL_H - 2.0 * MARGIN;
    let levels = panel.max_level.max(1) as f64;
    let xs = |level: f64| x0 + MARGIN + (level - 0.5) / levels * plot_w;
    let ys = |v: f64| MARGIN + (yhi - v) / (yhi - ylo) * plot_h;

    let _ = writeln!(
        out,
        r##"<rect x="{:.1}" y="{MARGIN}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#333"/>"##,
        x0 + MARGIN
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="14">{}</text>"#,
        x0 + PANEL_W / 2.0,
        MARGIN - 15.0,
        escape(panel.title)
    );
    for i in 0..=4 {
        let v = ylo + (yhi - ylo) * i as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="10">{v:.3}</text>"#,
            x0 + MARGIN - 4.0,
            ys(v) + 3.0
        );
    }
    for l in 1..=panel.max_level {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="10">{l}</text>"#,
            xs(l as f64),
            MARGIN + plot_h + 14.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11">level</text>"#,
        x0 + PANEL_W / 2.0,
        MARGIN + plot_h + 30.0
    );
    if let Some(r) = panel.reference {
        let _ = writeln!(
            out,
            r##"<line x1="{:.1}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="#999" stroke-dasharray="4 3"/>"##,
            x0 + MARGIN,
            x0 + MARGIN + plot_w,
            ys(r),
            ys(r)
        );
    }
    let n = panel.series.len().max(1) as f64;
    let slot = 0.6 / levels * plot_w / n;
    for (si, s) in panel.series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let dx = (si as f64 - (n - 1.0) / 2.0) * slot;
        for (level, m) in &s.points {
            let x = xs(*level as f64) + dx;
            if let Some(ci) = m.ci {
                let _ = writeln!(
                    out,
                    r#"<line x1="{x:.1}" x2="{x:.1}" y1="{:.1}" y2="{:.1}" stroke="{color}"/>"#,
                    ys(ci.upper),
                    ys(ci.lower)
                );
            }
            let _ = writeln!(
                out,
                r#"<circle cx="{x:.1}" cy="{:.1}" r="3" fill="{color}"><title>{} level {level}: {:.4}</title></circle>"#,
                ys(m.value),
                escape(&s.name),
                m.value
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" fill="{color}">{}</text>"#,
            x0 + MARGIN,
            PANEL_H + 12.0 * si as f64,
            escape(&s.name)
        );
    }
}

/// One SVG document per task kind present in the report.
pub fn task_charts(report: &EvalReport) -> Vec<(TaskKind, String)> {
    let mut by_task: BTreeMap<TaskKind, Vec<&super::report::CellRecord>> = BTreeMap::new();
    for c in &report.cells {
        by_task.entry(c.task).or_default().push(c);
    }
    by_task
        .into_iter()
        .map(|(task, cells)| {
            let mut acc: BTreeMap<&str, BTreeMap<u32, MetricValue>> = BTreeMap::new();
            let mut bias: BTreeMap<String, BTreeMap<u32, MetricValue>> = BTreeMap::new();
            for c in &cells {
                acc.entry(c.model.as_str())
                    .or_default()
                    .insert(c.level, c.model_summary.treatment_accuracy.clone());
                bias.entry(format!("{} / {}", c.model, c.estimator))
                    .or_default()
                    .insert(c.level, c.bias.clone());
            }
            let to_series = |name: String, pts: BTreeMap<u32, MetricValue>| Series {
                name,
                points: pts.into_iter().collect(),
            };
            let acc_panel = Panel {
                title: "treatment accuracy",
                series: acc.into_iter().map(|(k, v)| to_series(k.to_string(), v)).collect(),
                max_level: task.max_level(),
                reference: None,
            };
            let bias_panel = Panel {
                title: "ATE bias",
                series: bias.into_iter().map(|(k, v)| to_series(k, v)).collect(),
                max_level: task.max_level(),
                reference: Some(0.0),
            };
            let legend_rows = bias_panel.series.len().max(acc_panel.series.len()) as f64;
            let height = PANEL_H + 12.0 * legend_rows + 10.0;
            let mut doc = String::new();
            let _ = writeln!(
                doc,
                r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{height:.0}" font-family="sans-serif">"#,
                2.0 * PANEL_W
            );
            let _ = writeln!(doc, r#"<title>{task}</title>"#);
            draw_panel(&mut doc, &acc_panel, 0.0);
            draw_panel(&mut doc, &bias_panel, PANEL_W);
            doc.push_str("</svg>\n");
            (task, doc)
        })
        .collect()
}
