//! Minimal SVG line charts for sweep results: one line per dataset or
//! per permanent fraction, with shaded standard-error bands.

use std::collections::BTreeMap;

use super::aggregate::{mean_and_se, RawMctsRow, TraceRow};

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 520.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 55.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

struct Series {
    label: String,
    /// (x, mean, se)
    points: Vec<(f64, f64, f64)>,
}

/// Return-vs-plan-units chart, one line per dataset family.
pub fn plot_mcts_sweep(rows: &[RawMctsRow]) -> Result<String, String> {
    if rows.is_empty() {
        return Err("no rows to plot".into());
    }
    let mut order: Vec<String> = Vec::new();
    for r in rows {
        if !order.contains(&r.dataset) {
            order.push(r.dataset.clone());
        }
    }
    let mut series = Vec::new();
    for dataset in order {
        let mut by_cell: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        for r in rows.iter().filter(|r| r.dataset == dataset) {
            by_cell.entry(r.n_pi).or_default().push(r.ret);
        }
        let points = by_cell
            .into_iter()
            .map(|(n_pi, returns)| {
                let (mean, se) = mean_and_se(&returns);
                (n_pi as f64, mean, se.unwrap_or(0.0))
            })
            .collect();
        series.push(Series {
            label: dataset,
            points,
        });
    }
    Ok(render_chart(
        &series,
        "plan units",
        "mean return",
        "return vs plan allocation",
    ))
}

/// Smoothed-reward-vs-step chart, one line per permanent fraction.
pub fn plot_ptdqn_traces(rows: &[TraceRow]) -> Result<String, String> {
    if rows.is_empty() {
        return Err("no rows to plot".into());
    }
    let mut order: Vec<u64> = Vec::new();
    for r in rows {
        let bits = r.permanent_fraction.to_bits();
        if !order.contains(&bits) {
            order.push(bits);
        }
    }
    let mut series = Vec::new();
    for bits in order {
        let fraction = f64::from_bits(bits);
        let mut by_step: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        for r in rows
            .iter()
            .filter(|r| r.permanent_fraction.to_bits() == bits)
        {
            by_step.entry(r.step).or_default().push(r.reward_smoothed);
        }
        let mut points: Vec<(f64, f64, f64)> = by_step
            .into_iter()
            .map(|(step, rewards)| {
                let (mean, se) = mean_and_se(&rewards);
                (step as f64, mean, se.unwrap_or(0.0))
            })
            .collect();
        // Cap the polyline length so the SVG stays lightweight.
        let max_points = 1500;
        if points.len() > max_points {
            let stride = points.len().div_ceil(max_points);
            points = points
                .into_iter()
                .enumerate()
                .filter(|(i, _)| i % stride == 0)
                .map(|(_, p)| p)
                .collect();
        }
        let label = if fraction < 0.0 {
            "random".to_string()
        } else {
            format!("{}%", fraction * 100.0)
        };
        series.push(Series { label, points });
    }
    Ok(render_chart(
        &series,
        "environment step",
        "per-step reward (smoothed)",
        "reward vs training step per PT split",
    ))
}

fn render_chart(series: &[Series], x_label: &str, y_label: &str, title: &str) -> String {
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &(x, mean, se) in &s.points {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(mean - se);
            y_max = y_max.max(mean + se);
        }
    }
    if !x_min.is_finite() {
        x_min = 0.0;
        x_max = 1.0;
    }
    if !y_min.is_finite() {
        y_min = 0.0;
        y_max = 1.0;
    }
    if x_max == x_min {
        x_max = x_min + 1.0;
    }
    if y_max == y_min {
        y_max = y_min + 1.0;
    }
    let pad = (y_max - y_min) * 0.05;
    y_min -= pad;
    y_max += pad;

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = move |x: f64| MARGIN_LEFT + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = move |y: f64| MARGIN_TOP + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"18\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        escape(title)
    ));

    // Axes and ticks.
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        MARGIN_LEFT,
        MARGIN_TOP + plot_h,
        MARGIN_LEFT + plot_w,
        MARGIN_TOP + plot_h
    ));
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        MARGIN_LEFT,
        MARGIN_TOP,
        MARGIN_LEFT,
        MARGIN_TOP + plot_h
    ));
    for i in 0..=5 {
        let fx = x_min + (x_max - x_min) * i as f64 / 5.0;
        let px = sx(fx);
        svg.push_str(&format!(
            "<line x1=\"{px}\" y1=\"{}\" x2=\"{px}\" y2=\"{}\" stroke=\"black\"/>\n",
            MARGIN_TOP + plot_h,
            MARGIN_TOP + plot_h + 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{px}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            MARGIN_TOP + plot_h + 20.0,
            format_tick(fx)
        ));
        let fy = y_min + (y_max - y_min) * i as f64 / 5.0;
        let py = sy(fy);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{py}\" x2=\"{}\" y2=\"{py}\" stroke=\"black\"/>\n",
            MARGIN_LEFT - 5.0,
            MARGIN_LEFT
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            MARGIN_LEFT - 8.0,
            py + 4.0,
            format_tick(fy)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        escape(y_label)
    ));

    // Error bands then lines, so lines stay on top.
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if s.points.iter().any(|&(_, _, se)| se > 0.0) {
            let mut band = String::new();
            for &(x, mean, se) in &s.points {
                band.push_str(&format!("{},{} ", sx(x), sy(mean + se)));
            }
            for &(x, mean, se) in s.points.iter().rev() {
                band.push_str(&format!("{},{} ", sx(x), sy(mean - se)));
            }
            svg.push_str(&format!(
                "<polygon points=\"{}\" fill=\"{color}\" opacity=\"0.15\"/>\n",
                band.trim_end()
            ));
        }
    }
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, mean, _)| format!("{},{}", sx(x), sy(mean)))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n",
            pts.join(" ")
        ));
        // Legend.
        let ly = MARGIN_TOP + 16.0 * i as f64;
        let lx = WIDTH - MARGIN_RIGHT + 16.0;
        svg.push_str(&format!(
            "<rect x=\"{lx}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{color}\"/>\n",
            ly - 10.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{ly}\">{}</text>\n",
            lx + 18.0,
            escape(&s.label)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn format_tick(v: f64) -> String {
    if v.abs() >= 1000.0 || (v - v.round()).abs() < 1e-9 {
        format!("{:.0}", v)
    } else {
        format!("{:.2}", v)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
