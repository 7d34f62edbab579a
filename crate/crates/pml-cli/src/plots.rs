//! Static SVG plots: histograms, scatter, lines and path overlays.
//! Everything is written as plain shapes so the output diffs cleanly.

const W: f64 = 640.0;
const H: f64 = 440.0;
const ML: f64 = 64.0;
const MR: f64 = 24.0;
const MT: f64 = 40.0;
const MB: f64 = 64.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn of(xs: &[f64], ys: &[f64]) -> Frame {
        let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
        for &x in xs {
            x0 = x0.min(x);
            x1 = x1.max(x);
        }
        for &y in ys {
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !(x1 > x0) {
            x1 = x0 + 1.0;
        }
        if !(y1 > y0) {
            y1 = y0 + 1.0;
        }
        Frame { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        ML + (x - self.x0) / (self.x1 - self.x0) * (W - ML - MR)
    }

    fn py(&self, y: f64) -> f64 {
        H - MB - (y - self.y0) / (self.y1 - self.y0) * (H - MT - MB)
    }
}

fn open_svg(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" font-size=\"15\" text-anchor=\"middle\" \
         font-family=\"sans-serif\">{}</text>\n",
        W / 2.0,
        escape(title)
    )
}

fn close_svg(mut svg: String, xlabel: &str, ylabel: &str, provenance: &str) -> String {
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" \
         font-family=\"sans-serif\">{}</text>\n",
        W / 2.0,
        H - 28.0,
        escape(xlabel)
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" \
         font-family=\"sans-serif\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        (H - MB + MT) / 2.0,
        (H - MB + MT) / 2.0,
        escape(ylabel)
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"9\" text-anchor=\"end\" fill=\"#666\" \
         font-family=\"monospace\">{}</text>\n</svg>\n",
        W - 8.0,
        H - 8.0,
        escape(provenance)
    ));
    svg
}

fn axes(svg: &mut String, f: &Frame) {
    svg.push_str(&format!(
        "<rect x=\"{ML}\" y=\"{MT}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333\"/>\n",
        W - ML - MR,
        H - MT - MB
    ));
    for k in 0..=4 {
        let tx = f.x0 + (f.x1 - f.x0) * k as f64 / 4.0;
        let ty = f.y0 + (f.y1 - f.y0) * k as f64 / 4.0;
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{}\" font-size=\"10\" text-anchor=\"middle\" \
             font-family=\"sans-serif\">{}</text>\n",
            f.px(tx),
            H - MB + 16.0,
            fmt_tick(tx)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"end\" \
             font-family=\"sans-serif\">{}</text>\n",
            ML - 6.0,
            f.py(ty) + 3.5,
            fmt_tick(ty)
        ));
    }
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1000.0 || v.abs() < 0.01 {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn no_data(title: &str, provenance: &str) -> String {
    let mut svg = open_svg(title);
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"14\" text-anchor=\"middle\" fill=\"#999\" \
         font-family=\"sans-serif\">no data</text>\n",
        W / 2.0,
        H / 2.0
    ));
    close_svg(svg, "", "", provenance)
}

/// Sturges-rule histogram.
pub fn histogram(values: &[f64], title: &str, xlabel: &str, provenance: &str) -> String {
    if values.is_empty() {
        return no_data(title, provenance);
    }
    let bins = ((values.len() as f64).log2().ceil() as usize + 1).max(1);
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = ((hi - lo) / bins as f64).max(f64::MIN_POSITIVE);
    let mut counts = vec![0usize; bins];
    for &v in values {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let max_count = *counts.iter().max().unwrap() as f64;
    let f = Frame { x0: lo, x1: hi.max(lo + width), y0: 0.0, y1: max_count };
    let mut svg = open_svg(title);
    axes(&mut svg, &f);
    for (k, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let x = f.px(lo + k as f64 * width);
        let xe = f.px(lo + (k + 1) as f64 * width);
        let y = f.py(c as f64);
        svg.push_str(&format!(
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" \
             fill=\"#4878a8\" stroke=\"white\"/>\n",
            x,
            y,
            (xe - x).max(1.0),
            (H - MB) - y
        ));
    }
    close_svg(svg, xlabel, "count", provenance)
}

pub fn scatter(points: &[(f64, f64)], title: &str, xlabel: &str, ylabel: &str, provenance: &str) -> String {
    if points.is_empty() {
        return no_data(title, provenance);
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let f = Frame::of(&xs, &ys);
    let mut svg = open_svg(title);
    axes(&mut svg, &f);
    for (x, y) in points {
        svg.push_str(&format!(
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"2.4\" fill=\"#b0413e\" fill-opacity=\"0.75\"/>\n",
            f.px(*x),
            f.py(*y)
        ));
    }
    close_svg(svg, xlabel, ylabel, provenance)
}

pub fn line_plot(series: &[(f64, f64)], title: &str, xlabel: &str, ylabel: &str, provenance: &str) -> String {
    if series.is_empty() {
        return no_data(title, provenance);
    }
    let xs: Vec<f64> = series.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = series.iter().map(|p| p.1).collect();
    let mut f = Frame::of(&xs, &ys);
    // Keep a visible band around flat series.
    let pad = 0.05 * (f.y1 - f.y0).max(0.02 * f.y1.abs().max(1.0));
    f.y0 -= pad;
    f.y1 += pad;
    let mut svg = open_svg(title);
    axes(&mut svg, &f);
    let mut d = String::new();
    for (k, (x, y)) in series.iter().enumerate() {
        d.push_str(if k == 0 { "M" } else { "L" });
        d.push_str(&format!("{:.1} {:.1} ", f.px(*x), f.py(*y)));
    }
    svg.push_str(&format!(
        "<path d=\"{d}\" fill=\"none\" stroke=\"#4878a8\" stroke-width=\"1.6\"/>\n"
    ));
    for (x, y) in series {
        svg.push_str(&format!(
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"2.6\" fill=\"#4878a8\"/>\n",
            f.px(*x),
            f.py(*y)
        ));
    }
    close_svg(svg, xlabel, ylabel, provenance)
}

/// Domain outline with a path drawn over it.
pub fn path_overlay(
    outline: &[[f64; 2]],
    path: &[[f64; 2]],
    title: &str,
    provenance: &str,
) -> String {
    if outline.is_empty() {
        return no_data(title, provenance);
    }
    let xs: Vec<f64> = outline.iter().map(|p| p[0]).collect();
    let ys: Vec<f64> = outline.iter().map(|p| p[1]).collect();
    let mut f = Frame::of(&xs, &ys);
    // Square aspect: widen the shorter span.
    let (sx, sy) = (f.x1 - f.x0, f.y1 - f.y0);
    if sx > sy {
        let c = 0.5 * (f.y0 + f.y1);
        f.y0 = c - sx / 2.0;
        f.y1 = c + sx / 2.0;
    } else {
        let c = 0.5 * (f.x0 + f.x1);
        f.x0 = c - sy / 2.0;
        f.x1 = c + sy / 2.0;
    }
    let mut svg = open_svg(title);
    let mut d = String::new();
    for (k, p) in outline.iter().enumerate() {
        d.push_str(if k == 0 { "M" } else { "L" });
        d.push_str(&format!("{:.1} {:.1} ", f.px(p[0]), f.py(p[1])));
    }
    d.push('Z');
    svg.push_str(&format!(
        "<path d=\"{d}\" fill=\"#eef2f7\" stroke=\"#333\" stroke-width=\"1\"/>\n"
    ));
    if !path.is_empty() {
        let mut d = String::new();
        for (k, p) in path.iter().enumerate() {
            d.push_str(if k == 0 { "M" } else { "L" });
            d.push_str(&format!("{:.1} {:.1} ", f.px(p[0]), f.py(p[1])));
        }
        svg.push_str(&format!(
            "<path d=\"{d}\" fill=\"none\" stroke=\"#b0413e\" stroke-width=\"1.8\"/>\n"
        ));
    }
    close_svg(svg, "x", "y", provenance)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_inputs_render_no_data() {
        let svg = histogram(&[], "t", "x", "hash");
        assert!(svg.contains("no data"));
        assert!(svg.contains("</svg>"));
    }

    #[test]
    fn sturges_bin_count() {
        let vals: Vec<f64> = (0..100).map(|k| k as f64).collect();
        let svg = histogram(&vals, "t", "x", "hash");
        // ceil(log2(100)) + 1 = 8 bins, all populated; the background
        // and frame rects account for the offset.
        assert_eq!(svg.matches("<rect").count() - 2, 8);
    }

    #[test]
    fn provenance_footer_present() {
        let svg = line_plot(&[(0.0, 1.0), (1.0, 2.0)], "t", "x", "y", "deadbeef");
        assert!(svg.contains("deadbeef"));
    }
}
