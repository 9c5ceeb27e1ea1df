//! Deterministic SVG 1.1 charts (fixed 800x600, no timestamps, no external
//! resources) so rendered artifacts are byte-diffable across runs.

use deeperbind_core::scatter_with_regression;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 600.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 50.0;
const MARGIN_BOTTOM: f64 = 70.0;

const PLOT_W: f64 = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
const PLOT_H: f64 = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;

const LINE_COLOR: &str = "#1f6fb2";
const ACCENT_COLOR: &str = "#c0392b";

/// Data-space window mapped onto the fixed plot rectangle.
struct Frame {
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
}

impl Frame {
    fn xpix(&self, v: f64) -> f64 {
        MARGIN_LEFT + (v - self.xmin) / (self.xmax - self.xmin) * PLOT_W
    }

    fn ypix(&self, v: f64) -> f64 {
        (HEIGHT - MARGIN_BOTTOM) - (v - self.ymin) / (self.ymax - self.ymin) * PLOT_H
    }
}

fn px(v: f64) -> String {
    format!("{v:.2}")
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn document_open(title: &str) -> String {
    let mut s = String::new();
    s.push_str(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"800\" \
         height=\"600\" viewBox=\"0 0 800 600\">\n",
    );
    s.push_str("<rect width=\"800\" height=\"600\" fill=\"white\"/>\n");
    s.push_str(&format!(
        "<text x=\"400\" y=\"30\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"18\">{}</text>\n",
        escape(title)
    ));
    s
}

fn axes(frame: &Frame, xticks: &[f64], yticks: &[f64], xlabel: &str, ylabel: &str) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333\" \
         stroke-width=\"1\"/>\n",
        px(MARGIN_LEFT),
        px(MARGIN_TOP),
        px(PLOT_W),
        px(PLOT_H)
    ));
    let base = HEIGHT - MARGIN_BOTTOM;
    for &t in xticks {
        let x = frame.xpix(t);
        s.push_str(&format!(
            "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"#333\"/>\n",
            x0 = px(x),
            y0 = px(base),
            y1 = px(base + 6.0)
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
             font-size=\"12\">{}</text>\n",
            px(x),
            px(base + 22.0),
            tick_label(t)
        ));
    }
    for &t in yticks {
        let y = frame.ypix(t);
        s.push_str(&format!(
            "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"#333\"/>\n",
            x0 = px(MARGIN_LEFT - 6.0),
            y0 = px(y),
            x1 = px(MARGIN_LEFT)
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" \
             font-size=\"12\">{}</text>\n",
            px(MARGIN_LEFT - 10.0),
            px(y + 4.0),
            tick_label(t)
        ));
    }
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"14\">{}</text>\n",
        px(MARGIN_LEFT + PLOT_W / 2.0),
        px(base + 48.0),
        escape(xlabel)
    ));
    let ycx = 24.0;
    let ycy = MARGIN_TOP + PLOT_H / 2.0;
    s.push_str(&format!(
        "<text transform=\"rotate(-90 {x} {y})\" x=\"{x}\" y=\"{y}\" text-anchor=\"middle\" \
         font-family=\"sans-serif\" font-size=\"14\">{label}</text>\n",
        x = px(ycx),
        y = px(ycy),
        label = escape(ylabel)
    ));
    s
}

fn even_ticks(min: f64, max: f64) -> Vec<f64> {
    (0..5).map(|i| min + (max - min) * i as f64 / 4.0).collect()
}

fn padded_bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in values {
        min = min.min(v);
        max = max.max(v);
    }
    if !min.is_finite() || !max.is_finite() {
        return (-1.0, 1.0);
    }
    if min == max {
        return (min - 0.5, max + 0.5);
    }
    let pad = (max - min) * 0.05;
    (min - pad, max + pad)
}

/// Receiver-operating curve with the chance diagonal for reference.
pub fn render_roc(points: &[(f64, f64)], title: &str) -> String {
    let frame = Frame { xmin: 0.0, xmax: 1.0, ymin: 0.0, ymax: 1.0 };
    let ticks = [0.0, 0.25, 0.5, 0.75, 1.0];
    let mut s = document_open(title);
    s.push_str(&axes(&frame, &ticks, &ticks, "False positive rate", "True positive rate"));
    s.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#999\" \
         stroke-dasharray=\"6,4\"/>\n",
        px(frame.xpix(0.0)),
        px(frame.ypix(0.0)),
        px(frame.xpix(1.0)),
        px(frame.ypix(1.0))
    ));
    let coords: Vec<String> = points
        .iter()
        .map(|&(fpr, tpr)| format!("{},{}", px(frame.xpix(fpr)), px(frame.ypix(tpr))))
        .collect();
    s.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"{LINE_COLOR}\" stroke-width=\"2\"/>\n",
        coords.join(" ")
    ));
    s.push_str("</svg>\n");
    s
}

/// Predicted-vs-measured scatter with a least-squares trend line when the
/// predictions are not constant.
pub fn render_scatter(pairs: &[(f64, f64)], title: &str) -> String {
    let (xmin, xmax) = padded_bounds(pairs.iter().map(|p| p.0));
    let (ymin, ymax) = padded_bounds(pairs.iter().map(|p| p.1));
    let frame = Frame { xmin, xmax, ymin, ymax };
    let mut s = document_open(title);
    s.push_str(&axes(
        &frame,
        &even_ticks(xmin, xmax),
        &even_ticks(ymin, ymax),
        "Predicted intensity",
        "Measured intensity",
    ));
    for &(p, m) in pairs {
        s.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"2.5\" fill=\"{LINE_COLOR}\" \
             fill-opacity=\"0.5\"/>\n",
            px(frame.xpix(p)),
            px(frame.ypix(m))
        ));
    }
    let predicted: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let measured: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    if let Ok(fit) = scatter_with_regression(&predicted, &measured) {
        let y0 = fit.intercept + fit.slope * xmin;
        let y1 = fit.intercept + fit.slope * xmax;
        s.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{ACCENT_COLOR}\" \
             stroke-width=\"2\"/>\n",
            px(frame.xpix(xmin)),
            px(frame.ypix(y0.clamp(ymin, ymax))),
            px(frame.xpix(xmax)),
            px(frame.ypix(y1.clamp(ymin, ymax)))
        ));
    }
    s.push_str("</svg>\n");
    s
}

/// Predicted ranks of the strongest measured probes; rank 1 sits at the top
/// of the chart, so a good model hugs the upper edge.
pub fn render_rank_chart(ranks: &[usize], title: &str) -> String {
    let k = ranks.len().max(1) as f64;
    let max_rank = ranks.iter().copied().max().unwrap_or(1).max(1) as f64;
    // Inverted y window: rank 1 maps to the top of the plot.
    let frame = Frame { xmin: 1.0, xmax: k.max(2.0), ymin: max_rank, ymax: 1.0 };
    let xticks = even_ticks(frame.xmin, frame.xmax).iter().map(|v| v.round()).collect::<Vec<_>>();
    let yticks = even_ticks(1.0, max_rank.max(2.0))
        .iter()
        .map(|v| v.round())
        .collect::<Vec<_>>();
    let mut s = document_open(title);
    s.push_str(&axes(
        &frame,
        &xticks,
        &yticks,
        "Strongest measured probes (intensity rank)",
        "Predicted rank",
    ));
    let coords: Vec<String> = ranks
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            format!("{},{}", px(frame.xpix((i + 1) as f64)), px(frame.ypix(r as f64)))
        })
        .collect();
    if coords.len() > 1 {
        s.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{LINE_COLOR}\" \
             stroke-width=\"1\"/>\n",
            coords.join(" ")
        ));
    }
    for (i, &r) in ranks.iter().enumerate() {
        s.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{LINE_COLOR}\"/>\n",
            px(frame.xpix((i + 1) as f64)),
            px(frame.ypix(r as f64))
        ));
    }
    s.push_str("</svg>\n");
    s
}
