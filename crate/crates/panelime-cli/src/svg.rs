//! Tiny hand-rolled SVG writers for the optional plot artifacts.

// `!(a > b)` guards accept the NaN case on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use panelime::eval::EvalReport;
use panelime::ice::IceCurve;
use panelime::lime::Explanation;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(width: f64, height: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    )
}

/// Horizontal bar chart of one explanation's feature weights; positive
/// weights grow right in green, negative grow left in red.
pub fn explanation_bars(explanation: &Explanation, title: &str) -> String {
    let bars = &explanation.features;
    let row_h = 26.0;
    let label_w = 220.0;
    let plot_w = 320.0;
    let width = label_w + plot_w + 80.0;
    let height = 50.0 + row_h * bars.len().max(1) as f64;
    let max_abs = bars
        .iter()
        .map(|f| f.weight.abs())
        .fold(1e-12, f64::max);
    let mid = label_w + plot_w / 2.0;
    let scale = plot_w / 2.0 / max_abs;

    let mut out = header(width, height);
    out.push_str(&format!(
        "<text x=\"10\" y=\"20\" font-weight=\"bold\">{}</text>\n",
        esc(title)
    ));
    out.push_str(&format!(
        "<line x1=\"{mid}\" y1=\"35\" x2=\"{mid}\" y2=\"{}\" stroke=\"#999\"/>\n",
        height - 10.0
    ));
    for (i, f) in bars.iter().enumerate() {
        let y = 42.0 + row_h * i as f64;
        let w = f.weight.abs() * scale;
        let (x, color) = if f.weight >= 0.0 {
            (mid, "#2e7d32")
        } else {
            (mid - w, "#c62828")
        };
        out.push_str(&format!(
            "<text x=\"10\" y=\"{}\">{}</text>\n",
            y + 13.0,
            esc(&f.name)
        ));
        out.push_str(&format!(
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"18\" fill=\"{color}\"/>\n"
        ));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\">{:.4}</text>\n",
            mid + plot_w / 2.0 + 6.0,
            y + 13.0,
            f.weight
        ));
    }
    out.push_str("</svg>\n");
    out
}

/// ICE lines in grey with the PDP mean drawn on top.
pub fn ice_plot(curve: &IceCurve) -> String {
    let width = 560.0;
    let height = 360.0;
    let margin = 46.0;
    let plot_w = width - 2.0 * margin;
    let plot_h = height - 2.0 * margin;

    let x_lo = curve.grid[0];
    let x_hi = *curve.grid.last().unwrap();
    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    for row in &curve.instance_predictions {
        for &v in row {
            y_lo = y_lo.min(v);
            y_hi = y_hi.max(v);
        }
    }
    if !(y_hi > y_lo) {
        y_hi = y_lo + 1.0;
    }
    let px = |x: f64| margin + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let py = |y: f64| height - margin - (y - y_lo) / (y_hi - y_lo) * plot_h;
    let polyline = |row: &[f64], stroke: &str, width: f64| -> String {
        let points: Vec<String> = curve
            .grid
            .iter()
            .zip(row)
            .map(|(&g, &v)| format!("{:.2},{:.2}", px(g), py(v)))
            .collect();
        format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"{width}\"/>\n",
            points.join(" ")
        )
    };

    let mut out = header(width, height);
    out.push_str(&format!(
        "<text x=\"10\" y=\"20\" font-weight=\"bold\">{}</text>\n",
        esc(&curve.feature_name)
    ));
    out.push_str(&format!(
        "<rect x=\"{margin}\" y=\"{margin}\" width=\"{plot_w}\" height=\"{plot_h}\" \
         fill=\"none\" stroke=\"#999\"/>\n"
    ));
    for row in &curve.instance_predictions {
        out.push_str(&polyline(row, "#b0bec5", 1.0));
    }
    out.push_str(&polyline(&curve.pdp, "#d84315", 2.5));
    out.push_str(&format!(
        "<text x=\"{margin}\" y=\"{:.2}\" font-size=\"10\">{:.3}</text>\n",
        height - margin + 14.0,
        x_lo
    ));
    out.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\" text-anchor=\"end\">{:.3}</text>\n",
        width - margin,
        height - margin + 14.0,
        x_hi
    ));
    out.push_str("</svg>\n");
    out
}

/// Grouped bars comparing per-run masked R^2 with guided vs random column
/// selection, with a dashed line at the full model's score.
pub fn eval_bars(report: &EvalReport) -> String {
    let width = 120.0 + 90.0 * report.runs.len() as f64;
    let height = 320.0;
    let margin = 46.0;
    let plot_h = height - 2.0 * margin;
    let mut lo: f64 = 0.0;
    let mut hi: f64 = 1.0;
    for run in &report.runs {
        lo = lo.min(run.r2_lime).min(run.r2_random);
        hi = hi.max(run.r2_lime).max(run.r2_random);
    }
    hi = hi.max(report.r2_full_model);
    let py = |v: f64| height - margin - (v - lo) / (hi - lo) * plot_h;

    let mut out = header(width, height);
    out.push_str("<text x=\"10\" y=\"20\" font-weight=\"bold\">masked R2: guided vs random</text>\n");
    for (i, run) in report.runs.iter().enumerate() {
        let x = margin + 20.0 + 90.0 * i as f64;
        let zero = py(lo.max(0.0));
        for (offset, value, color) in [(0.0, run.r2_lime, "#1565c0"), (28.0, run.r2_random, "#9e9e9e")] {
            let top = py(value.max(0.0)).min(zero);
            let h = (zero - py(value.max(0.0))).abs().max(0.5);
            out.push_str(&format!(
                "<rect x=\"{:.2}\" y=\"{top:.2}\" width=\"24\" height=\"{h:.2}\" fill=\"{color}\"/>\n",
                x + offset
            ));
        }
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\">run {}</text>\n",
            x,
            height - margin + 14.0,
            i + 1
        ));
    }
    let full_y = py(report.r2_full_model);
    out.push_str(&format!(
        "<line x1=\"{margin}\" y1=\"{full_y:.2}\" x2=\"{:.2}\" y2=\"{full_y:.2}\" \
         stroke=\"#2e7d32\" stroke-dasharray=\"6 3\"/>\n",
        width - 20.0
    ));
    out.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\" fill=\"#2e7d32\">full model</text>\n",
        width - 90.0,
        full_y - 6.0
    ));
    out.push_str("</svg>\n");
    out
}
