//! Minimal SVG plots: a line plot of the control and space-time heatmaps.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 360.0;
const PAD: f64 = 50.0;

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">{title}</text>\n",
        W / 2.0
    )
}

fn axes(out: &mut String, x_label: &str, y_label: &str, x_range: (f64, f64), y_range: (f64, f64)) {
    let (x0, x1, y0, y1) = (PAD, W - PAD, H - PAD, PAD);
    let _ = writeln!(
        out,
        "<path d=\"M{x0} {y1} L{x0} {y0} L{x1} {y0}\" stroke=\"black\" fill=\"none\"/>"
    );
    let label = |v: f64| format!("{v:.3}");
    let text = |out: &mut String, x: f64, y: f64, anchor: &str, s: &str| {
        let _ = writeln!(
            out,
            "<text x=\"{x:.1}\" y=\"{y:.1}\" text-anchor=\"{anchor}\" font-family=\"sans-serif\" font-size=\"11\">{s}</text>"
        );
    };
    text(out, x0, y0 + 16.0, "middle", &label(x_range.0));
    text(out, x1, y0 + 16.0, "middle", &label(x_range.1));
    text(out, x0 - 6.0, y0, "end", &label(y_range.0));
    text(out, x0 - 6.0, y1 + 4.0, "end", &label(y_range.1));
    text(out, (x0 + x1) / 2.0, H - 12.0, "middle", x_label);
    text(out, 14.0, (y0 + y1) / 2.0, "middle", y_label);
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() || !hi.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-300 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// One polyline per channel of `u(t)`.
pub fn line_plot(title: &str, t: &[f64], channels: &[Vec<f64>]) -> String {
    let tr = range(t.iter().cloned());
    let yr = range(channels.iter().flatten().cloned());
    let mut out = header(title);
    axes(&mut out, "t", "u", tr, yr);
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];
    for (i, ch) in channels.iter().enumerate() {
        let mut d = String::new();
        for (k, (&tk, &v)) in t.iter().zip(ch).enumerate() {
            let x = PAD + (tk - tr.0) / (tr.1 - tr.0) * (W - 2.0 * PAD);
            let y = H - PAD - (v - yr.0) / (yr.1 - yr.0) * (H - 2.0 * PAD);
            let _ = write!(d, "{}{x:.2} {y:.2}", if k == 0 { "M" } else { " L" });
        }
        let _ = writeln!(
            out,
            "<path d=\"{d}\" stroke=\"{}\" stroke-width=\"1.5\" fill=\"none\"/>",
            colors[i % colors.len()]
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Diverging blue-white-red colour for `s` in `[-1, 1]`.
fn color(s: f64) -> String {
    let s = s.clamp(-1.0, 1.0);
    let (r, g, b) = if s >= 0.0 {
        (255.0, 255.0 * (1.0 - s), 255.0 * (1.0 - s))
    } else {
        (255.0 * (1.0 + s), 255.0 * (1.0 + s), 255.0)
    };
    format!("#{:02x}{:02x}{:02x}", r.round() as u8, g.round() as u8, b.round() as u8)
}

/// Heatmap of `field[k][j]` over time nodes `t[k]` and space nodes `x[j]`,
/// time on the horizontal axis. At most `max_columns` time slices are drawn.
pub fn heatmap(title: &str, t: &[f64], x: &[f64], field: &[Vec<f64>], max_columns: usize) -> String {
    let tr = range(t.iter().cloned());
    let xr = range(x.iter().cloned());
    let scale = field
        .iter()
        .flatten()
        .fold(0.0f64, |a, v| a.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let stride = t.len().div_ceil(max_columns.max(1)).max(1);
    let cols: Vec<usize> = (0..t.len()).step_by(stride).collect();
    let (pw, ph) = (W - 2.0 * PAD, H - 2.0 * PAD);
    let cw = pw / cols.len() as f64;
    let rh = ph / x.len() as f64;
    let mut out = header(&format!("{title} (max |value| {scale:.3e})"));
    for (c, &k) in cols.iter().enumerate() {
        for (j, v) in field[k].iter().enumerate() {
            let _ = writeln!(
                out,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
                PAD + c as f64 * cw,
                H - PAD - (j + 1) as f64 * rh,
                cw + 0.05,
                rh + 0.05,
                color(v / scale)
            );
        }
    }
    axes(&mut out, "t", "x", tr, xr);
    out.push_str("</svg>\n");
    out
}
