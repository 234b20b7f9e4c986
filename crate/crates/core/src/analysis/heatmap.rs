use std::fmt::Write as _;

/// Layout of an SVG heatmap.
#[derive(Clone, Debug)]
pub struct HeatmapOptions {
    pub title: String,
    pub cell_width: f64,
    pub cell_height: f64,
}

impl Default for HeatmapOptions {
    fn default() -> Self {
        HeatmapOptions {
            title: String::new(),
            cell_width: 8.0,
            cell_height: 16.0,
        }
    }
}

/// Viridis sampled at five points.
const STOPS: [(f64, f64, f64); 5] = [
    (68.0, 1.0, 84.0),
    (59.0, 82.0, 139.0),
    (33.0, 145.0, 140.0),
    (94.0, 201.0, 98.0),
    (253.0, 231.0, 37.0),
];

const NULL_FILL: &str = "#bdbdbd";

fn colour(u: f64) -> String {
    let u = u.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (u.floor() as usize).min(STOPS.len() - 2);
    let f = u - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let mix = |x: f64, y: f64| (x + f * (y - x)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn log10_cell(v: Option<f64>) -> Option<f64> {
    v.filter(|v| *v > 0.0 && v.is_finite()).map(f64::log10)
}

/// Self-contained SVG of a `[layer][t]` grid on a log10 colour scale.
///
/// Time runs left to right and layer 1 sits at the bottom. Cells that are
/// missing, zero or negative are drawn grey.
pub fn heatmap_svg(values: &[Vec<Option<f64>>], opts: &HeatmapOptions) -> String {
    let layers = values.len();
    let steps = values.first().map_or(0, Vec::len);
    let logs: Vec<f64> = values.iter().flatten().filter_map(|&v| log10_cell(v)).collect();
    let (lo, hi) = logs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let (lo, hi) = if logs.is_empty() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    };
    let (cw, ch) = (opts.cell_width, opts.cell_height);
    let (left, top, bar_gap, bar_w) = (56.0, 36.0, 24.0, 16.0);
    let plot_w = cw * steps as f64;
    let plot_h = ch * layers as f64;
    let width = left + plot_w + bar_gap + bar_w + 64.0;
    let height = top + plot_h + 44.0;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if !opts.title.is_empty() {
        let _ = writeln!(s, r#"<text x="{left}" y="20" font-size="13">{}</text>"#, escape(&opts.title));
    }
    for (l, row) in values.iter().enumerate() {
        let y = top + (layers - 1 - l) as f64 * ch;
        for (t, &v) in row.iter().enumerate() {
            let fill = match log10_cell(v) {
                Some(g) => colour((g - lo) / (hi - lo)),
                None => NULL_FILL.to_string(),
            };
            let x = left + t as f64 * cw;
            let _ = writeln!(s, r#"<rect x="{x}" y="{y}" width="{cw}" height="{ch}" fill="{fill}"/>"#);
        }
    }
    for l in [0, layers.saturating_sub(1)] {
        let y = top + (layers - 1 - l) as f64 * ch + ch * 0.7;
        let _ = writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end">{}</text>"#, left - 6.0, l + 1);
    }
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">layer</text>"#,
        top + plot_h / 2.0,
        top + plot_h / 2.0
    );
    let base = top + plot_h;
    for t in [0, steps.saturating_sub(1)] {
        let x = left + t as f64 * cw + cw / 2.0;
        let _ = writeln!(s, r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#, base + 14.0, t + 1);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">time step</text>"#, left + plot_w / 2.0, base + 32.0);

    // colour bar, high values on top
    let bx = left + plot_w + bar_gap;
    let slices = 32;
    let sh = plot_h / slices as f64;
    for i in 0..slices {
        let u = 1.0 - (i as f64 + 0.5) / slices as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{bx}" y="{}" width="{bar_w}" height="{}" fill="{}"/>"#,
            top + i as f64 * sh,
            sh + 0.5,
            colour(u)
        );
    }
    let tx = bx + bar_w + 4.0;
    let _ = writeln!(s, r#"<text x="{tx}" y="{}">1e{hi:.2}</text>"#, top + 10.0);
    let _ = writeln!(s, r#"<text x="{tx}" y="{}">1e{lo:.2}</text>"#, base);
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
