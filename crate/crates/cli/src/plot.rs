//! SVG scatter plots.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ptsne::{DataSet, Point};

const CANVAS: f64 = 800.0;
const MARGIN: f64 = 0.05;
pub const DEFAULT_FILL: &str = "#1f77b4";
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

/// Red for rank 0 through blue for the last rank.
pub fn rank_color(rank: usize, n: usize) -> String {
    let t = if n > 1 { rank as f64 / (n - 1) as f64 } else { 0.0 };
    let r = (255.0 * (1.0 - t)).round() as u8;
    let b = (255.0 * t).round() as u8;
    format!("#{r:02x}00{b:02x}")
}

/// Colors by the rank of each point's original-space distance to `reference`.
pub fn distance_rank_colors(data: &DataSet, reference: usize) -> Vec<String> {
    let n = data.n();
    let mut order: Vec<(f64, usize)> = (0..n).map(|j| (data.dist2(reference, j), j)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    // the reference itself sits at distance zero and takes rank 0
    if let Some(pos) = order.iter().position(|&(_, j)| j == reference) {
        let r = order.remove(pos);
        order.insert(0, r);
    }
    let mut colors = vec![String::new(); n];
    for (rank, &(_, j)) in order.iter().enumerate() {
        colors[j] = rank_color(rank, n);
    }
    colors
}

/// One palette color per distinct label, assigned in sorted label order.
pub fn label_colors(labels: &[String]) -> Vec<String> {
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        index.entry(l.as_str()).or_insert(0);
    }
    for (i, v) in index.values_mut().enumerate() {
        *v = i;
    }
    labels.iter().map(|l| PALETTE[index[l.as_str()] % PALETTE.len()].to_string()).collect()
}

/// Standalone SVG 1.1 document with one circle per point. The view box fits
/// the points with a 5% margin; the y axis points up.
pub fn render_svg(points: &[Point], colors: &[String], point_size: f64) -> String {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in points {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    if points.is_empty() {
        lo = [0.0; 2];
        hi = [1.0; 2];
    }
    let mut span = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    if span <= 0.0 {
        span = 1.0;
    }
    let margin = MARGIN * span;
    let cx = 0.5 * (lo[0] + hi[0]);
    let cy = 0.5 * (lo[1] + hi[1]);
    let side = span + 2.0 * margin;
    let (x0, y0) = (cx - side / 2.0, -cy - side / 2.0);
    let radius = point_size * side / CANVAS;

    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"no\"?>\n");
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{CANVAS}\" height=\"{CANVAS}\" \
         viewBox=\"{x0:.6} {y0:.6} {side:.6} {side:.6}\">"
    );
    let _ = writeln!(
        s,
        "<rect x=\"{x0:.6}\" y=\"{y0:.6}\" width=\"{side:.6}\" height=\"{side:.6}\" fill=\"#ffffff\"/>"
    );
    for (p, c) in points.iter().zip(colors) {
        let _ = writeln!(s, "<circle cx=\"{:.6}\" cy=\"{:.6}\" r=\"{radius:.6}\" fill=\"{c}\"/>", p[0], -p[1]);
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_points_three_circles() {
        let pts = vec![[0.0, 0.0], [1.0, 2.0], [-1.0, 0.5]];
        let colors = vec![DEFAULT_FILL.to_string(); 3];
        let svg = render_svg(&pts, &colors, 2.0);
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains("version=\"1.1\""));
        // span 2 with 5% margins on both sides
        assert!(svg.contains("viewBox=\"-1.100000 -2.100000 2.200000 2.200000\""));
        assert_eq!(svg, render_svg(&pts, &colors, 2.0));
    }

    #[test]
    fn rank_colors_run_red_to_blue() {
        assert_eq!(rank_color(0, 5), "#ff0000");
        assert_eq!(rank_color(4, 5), "#0000ff");
        let data = DataSet::from_rows(&[vec![0.0], vec![3.0], vec![1.0], vec![2.0]]).unwrap();
        let c = distance_rank_colors(&data, 0);
        assert_eq!(c[0], "#ff0000");
        assert_eq!(c[1], "#0000ff");
    }

    #[test]
    fn labels_share_colors() {
        let labels: Vec<String> = ["b", "a", "b"].iter().map(|s| s.to_string()).collect();
        let c = label_colors(&labels);
        assert_eq!(c[0], c[2]);
        assert_eq!(c[1], PALETTE[0]);
        assert_eq!(c[0], PALETTE[1]);
    }
}
