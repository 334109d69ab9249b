//! Self-contained SVG plots: overlaid ID/OOD score histograms and
//! reliability diagrams with per-bin gap bars. No external assets, fonts or
//! scripts; every byte is deterministic for fixed inputs.

use entropic_ood_core::metrics::ReliabilityBin;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 50.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 40.0;

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn svg_header(title: &str) -> String {
    format!(
        concat!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n",
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\">\n",
            "<rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<text x=\"{tx}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" ",
            "text-anchor=\"middle\">{title}</text>\n"
        ),
        w = WIDTH,
        h = HEIGHT,
        tx = WIDTH / 2.0,
        title = xml_escape(title),
    )
}

/// Histogram counts for `values` over `bins` equal-width bins spanning
/// `[lo, hi]`; the final bin is closed on both sides.
fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<usize> {
    let mut counts = vec![0usize; bins];
    let width = (hi - lo).max(f64::MIN_POSITIVE);
    for &v in values {
        let idx = (((v - lo) / width) * bins as f64) as usize;
        counts[idx.min(bins - 1)] += 1;
    }
    counts
}

/// Overlaid ID (blue) and OOD (orange) score histograms over a shared range.
pub fn score_histogram_svg(
    title: &str,
    id_scores: &[f64],
    ood_scores: &[f64],
    bins: usize,
) -> String {
    assert!(bins >= 1);
    assert!(!id_scores.is_empty() && !ood_scores.is_empty());
    let lo = id_scores
        .iter()
        .chain(ood_scores)
        .copied()
        .fold(f64::INFINITY, f64::min);
    let hi = id_scores
        .iter()
        .chain(ood_scores)
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    };

    let id_counts = histogram(id_scores, lo, hi, bins);
    let ood_counts = histogram(ood_scores, lo, hi, bins);
    let peak = id_counts
        .iter()
        .chain(&ood_counts)
        .copied()
        .max()
        .unwrap_or(1)
        .max(1) as f64;

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let bar_w = plot_w / bins as f64;

    let mut svg = svg_header(title);
    svg.push_str(&format!(
        "<line x1=\"{l}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n",
        l = MARGIN_LEFT,
        r = WIDTH - MARGIN_RIGHT,
        b = HEIGHT - MARGIN_BOTTOM,
    ));
    for (counts, color, class) in [
        (&id_counts, "#4878cf", "id-bar"),
        (&ood_counts, "#ee854a", "ood-bar"),
    ] {
        for (i, &count) in counts.iter().enumerate() {
            let h = plot_h * count as f64 / peak;
            svg.push_str(&format!(
                "<rect class=\"{class}\" x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" \
                 fill=\"{color}\" fill-opacity=\"0.55\"/>\n",
                x = MARGIN_LEFT + i as f64 * bar_w,
                y = HEIGHT - MARGIN_BOTTOM - h,
                w = bar_w,
                h = h,
            ));
        }
    }
    svg.push_str(&format!(
        "<text x=\"{x}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#4878cf\">\
         in-distribution ({})</text>\n",
        id_scores.len(),
        x = MARGIN_LEFT + 6.0,
        y = MARGIN_TOP + 6.0,
    ));
    svg.push_str(&format!(
        "<text x=\"{x}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#ee854a\">\
         out-of-distribution ({})</text>\n",
        ood_scores.len(),
        x = MARGIN_LEFT + 6.0,
        y = MARGIN_TOP + 22.0,
    ));
    svg.push_str(&format!(
        "<text x=\"{x}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">\
         score (higher = in-distribution)</text>\n",
        x = WIDTH / 2.0,
        y = HEIGHT - 10.0,
    ));
    svg.push_str("</svg>\n");
    svg
}

/// Reliability diagram: one accuracy bar per confidence bin (empty bins
/// included, so the bar count equals the ECE bin count), red gap bars from
/// accuracy to mean confidence, and the identity diagonal.
pub fn reliability_svg(title: &str, bins: &[ReliabilityBin], ece: f64) -> String {
    assert!(!bins.is_empty());
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let bar_w = plot_w / bins.len() as f64;
    let x0 = MARGIN_LEFT;
    let y0 = HEIGHT - MARGIN_BOTTOM;

    let mut svg = svg_header(&format!("{title} (ECE {ece:.4})"));
    // identity diagonal
    svg.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y1}\" stroke=\"#999999\" stroke-dasharray=\"4 3\"/>\n",
        x1 = x0 + plot_w,
        y1 = y0 - plot_h,
    ));
    for (i, bin) in bins.iter().enumerate() {
        let x = x0 + i as f64 * bar_w;
        let acc_h = plot_h * bin.accuracy;
        svg.push_str(&format!(
            "<rect class=\"bin-bar\" x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" \
             fill=\"#4878cf\" fill-opacity=\"0.8\" stroke=\"#2a4d8f\" stroke-width=\"0.5\"/>\n",
            y = y0 - acc_h,
            w = bar_w,
            h = acc_h,
        ));
        if bin.count > 0 {
            // gap between accuracy and mean confidence
            let conf_h = plot_h * bin.mean_confidence;
            let (top, bottom) = if conf_h > acc_h {
                (conf_h, acc_h)
            } else {
                (acc_h, conf_h)
            };
            svg.push_str(&format!(
                "<rect class=\"gap-bar\" x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" \
                 fill=\"#d65f5f\" fill-opacity=\"0.45\"/>\n",
                x = x + bar_w * 0.25,
                y = y0 - top,
                w = bar_w * 0.5,
                h = top - bottom,
            ));
        }
    }
    svg.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n",
        x1 = x0 + plot_w,
    ));
    svg.push_str(&format!(
        "<text x=\"{x}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">\
         confidence</text>\n",
        x = WIDTH / 2.0,
        y = HEIGHT - 10.0,
    ));
    svg.push_str(&format!(
        "<text x=\"14\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"11\" \
         transform=\"rotate(-90 14 {y})\" text-anchor=\"middle\">accuracy</text>\n",
        y = MARGIN_TOP + plot_h / 2.0,
    ));
    svg.push_str("</svg>\n");
    svg
}
