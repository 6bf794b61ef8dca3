//! Self-contained SVG heatmap of a coefficient grid: `t` along the
//! horizontal axis, `u` upward, one square per cell colored by `c_V`.

use std::fmt::Write as _;

use crate::coeff::{CoeffGrid, GridSource};
use crate::scalar::Scalar;

const CELL: f64 = 4.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;
const BAR_GAP: f64 = 30.0;
const BAR_WIDTH: f64 = 18.0;
const BAR_STEPS: usize = 64;

/// Viridis control points, evaluated by piecewise-linear interpolation.
const PALETTE: [(f64, f64, f64); 6] = [
    (68.0, 1.0, 84.0),
    (65.0, 68.0, 135.0),
    (42.0, 120.0, 142.0),
    (34.0, 168.0, 132.0),
    (122.0, 209.0, 81.0),
    (253.0, 231.0, 37.0),
];

/// Maps `s` in `[0, 1]` to a `#rrggbb` color.
pub fn color_for(s: f64) -> String {
    let s = if s.is_finite() { s.clamp(0.0, 1.0) } else { 0.0 };
    let pos = s * (PALETTE.len() - 1) as f64;
    let i = (pos.floor() as usize).min(PALETTE.len() - 2);
    let f = pos - i as f64;
    let (a, b) = (PALETTE[i], PALETTE[i + 1]);
    let mix = |x: f64, y: f64| (x + (y - x) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn ticks(max: usize) -> Vec<usize> {
    let step = match max {
        0..=10 => 1,
        11..=50 => 10,
        51..=250 => 50,
        251..=1000 => 100,
        _ => 500,
    };
    (0..=max).step_by(step).collect()
}

/// Renders the `c_V` values of `grid` as an SVG document. Colors scale
/// linearly between the smallest and largest `c_V` in the grid.
pub fn render_heatmap_svg<T: Scalar>(grid: &CoeffGrid<T>) -> String {
    let t_max = grid.t_max();
    let cells: Vec<(usize, usize, f64)> = grid.cells().map(|(t, u, cv, _)| (t, u, cv.to_f64_lossy())).collect();
    let lo = cells.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
    let hi = cells.iter().map(|c| c.2).fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };

    let side = (t_max + 1) as f64 * CELL;
    let plot_bottom = MARGIN_TOP + side;
    let bar_x = MARGIN_LEFT + side + BAR_GAP;
    let width = bar_x + BAR_WIDTH + 70.0;
    let height = plot_bottom + MARGIN_BOTTOM;
    let title = match grid.source() {
        GridSource::Recursion => "c_V from the recursion",
        GridSource::ClosedForm => "c_V from the closed form",
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{title}, t_max = {t_max}</text>"#,
        MARGIN_LEFT + side / 2.0,
        MARGIN_TOP / 2.0 + 4.0
    );

    let _ = writeln!(s, r#"<g shape-rendering="crispEdges">"#);
    for &(t, u, v) in &cells {
        let x = MARGIN_LEFT + t as f64 * CELL;
        let y = plot_bottom - (u + 1) as f64 * CELL;
        let _ = writeln!(
            s,
            r#"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{}"><title>t={t} u={u} c_V={v}</title></rect>"#,
            color_for((v - lo) / span)
        );
    }
    let _ = writeln!(s, "</g>");

    // axes
    let _ = writeln!(
        s,
        r#"<path d="M{MARGIN_LEFT} {MARGIN_TOP} V{plot_bottom} H{}" fill="none" stroke="black"/>"#,
        MARGIN_LEFT + side
    );
    for tick in ticks(t_max) {
        let x = MARGIN_LEFT + (tick as f64 + 0.5) * CELL;
        let y = plot_bottom - (tick as f64 + 0.5) * CELL;
        let _ = writeln!(
            s,
            r#"<line x1="{x}" y1="{plot_bottom}" x2="{x}" y2="{}" stroke="black"/><text x="{x}" y="{}" text-anchor="middle">{tick}</text>"#,
            plot_bottom + 4.0,
            plot_bottom + 16.0
        );
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{y}" x2="{MARGIN_LEFT}" y2="{y}" stroke="black"/><text x="{}" y="{}" text-anchor="end">{tick}</text>"#,
            MARGIN_LEFT - 4.0,
            MARGIN_LEFT - 7.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">t</text>"#,
        MARGIN_LEFT + side / 2.0,
        plot_bottom + 36.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" transform="rotate(-90 {} {})">u</text>"#,
        MARGIN_LEFT - 40.0,
        MARGIN_TOP + side / 2.0,
        MARGIN_LEFT - 40.0,
        MARGIN_TOP + side / 2.0
    );

    // color bar, low at the bottom
    let step_h = side / BAR_STEPS as f64;
    for i in 0..BAR_STEPS {
        let y = plot_bottom - (i + 1) as f64 * step_h;
        let _ = writeln!(
            s,
            r#"<rect x="{bar_x}" y="{y}" width="{BAR_WIDTH}" height="{}" fill="{}"/>"#,
            step_h + 0.5,
            color_for((i as f64 + 0.5) / BAR_STEPS as f64)
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{bar_x}" y="{MARGIN_TOP}" width="{BAR_WIDTH}" height="{side}" fill="none" stroke="black"/>"#
    );
    for (frac, value) in [(0.0, lo), (0.5, lo + span / 2.0), (1.0, hi)] {
        let y = plot_bottom - frac * side;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}">{value:.3}</text>"#,
            bar_x + BAR_WIDTH + 4.0,
            y + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}
