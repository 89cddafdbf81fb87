//! Deterministic SVG rendering of tubes, swarms and distance curves.

use std::fmt::Write as _;

use vtube::geometry::{Point2, QuadrangleChain};
use vtube::simulator::SimulationTrace;

use crate::output::{MetricRow, TrajectoryRow};

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];
const SCENE_WIDTH: f64 = 800.0;
const MAX_PATH_POINTS: usize = 1000;

struct Frame {
    lo: Point2,
    scale: f64,
    height: f64,
}

impl Frame {
    fn fit(points: &[Point2], margin: f64) -> Self {
        let (mut lo, mut hi) = (points[0], points[0]);
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        lo -= Point2::new(margin, margin);
        hi += Point2::new(margin, margin);
        let scale = SCENE_WIDTH / (hi.x - lo.x).max(1e-9);
        Frame {
            lo,
            scale,
            height: (hi.y - lo.y) * scale,
        }
    }

    fn map(&self, p: Point2) -> (f64, f64) {
        ((p.x - self.lo.x) * self.scale, self.height - (p.y - self.lo.y) * self.scale)
    }
}

fn polyline(out: &mut String, pts: impl Iterator<Item = (f64, f64)>, style: &str) {
    let mut coords = String::new();
    for (x, y) in pts {
        let _ = write!(coords, "{x:.2},{y:.2} ");
    }
    let _ = writeln!(out, "<polyline points=\"{}\" {style}/>", coords.trim_end());
}

fn decimate<T: Copy>(xs: &[T], max: usize) -> Vec<T> {
    if xs.len() <= max {
        return xs.to_vec();
    }
    let stride = xs.len().div_ceil(max);
    let mut out: Vec<T> = xs.iter().step_by(stride).copied().collect();
    out.push(*xs.last().unwrap());
    out
}

/// Tube outline, base lines, agent paths and the agents' safety and avoidance circles.
pub fn scene_svg(chain: &QuadrangleChain, r_s: f64, r_a: f64, paths: &[Vec<Point2>], now: &[(Point2, bool)], label: &str) -> String {
    let outline = chain.outline();
    let frame = Frame::fit(&outline, 2.0 * r_a);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\" viewBox=\"0 0 {:.2} {:.2}\">",
        SCENE_WIDTH,
        frame.height.ceil(),
        SCENE_WIDTH,
        frame.height
    );
    let _ = writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let mut closed: Vec<(f64, f64)> = outline.iter().map(|p| frame.map(*p)).collect();
    closed.push(closed[0]);
    polyline(&mut out, closed.into_iter(), "fill=\"#eef5ff\" stroke=\"black\" stroke-width=\"1.5\"");
    for &(fr, fl) in chain.bases() {
        polyline(
            &mut out,
            [frame.map(fr), frame.map(fl)].into_iter(),
            "fill=\"none\" stroke=\"#999999\" stroke-dasharray=\"4 3\"",
        );
    }
    for (i, path) in paths.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        polyline(
            &mut out,
            decimate(path, MAX_PATH_POINTS).into_iter().map(|p| frame.map(p)),
            &format!("fill=\"none\" stroke=\"{color}\" stroke-width=\"1\""),
        );
    }
    for (i, &(p, arrived)) in now.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let (x, y) = frame.map(p);
        let opacity = if arrived { 0.3 } else { 1.0 };
        let _ = writeln!(
            out,
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"{:.2}\" fill=\"none\" stroke=\"{color}\" stroke-dasharray=\"2 2\" opacity=\"{opacity}\"/>",
            r_a * frame.scale
        );
        let _ = writeln!(
            out,
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"{:.2}\" fill=\"{color}\" fill-opacity=\"0.25\" stroke=\"{color}\" opacity=\"{opacity}\"/>",
            r_s * frame.scale
        );
    }
    let _ = writeln!(out, "<text x=\"8\" y=\"18\" font-family=\"monospace\" font-size=\"14\">{label}</text>");
    out.push_str("</svg>\n");
    out
}

/// Scene at simulated time `t` from an in-memory trace.
pub fn snapshot_svg(chain: &QuadrangleChain, r_s: f64, r_a: f64, trace: &SimulationTrace, t: f64) -> String {
    let n = trace.ids.len();
    let upto = trace.samples.iter().take_while(|s| s.t <= t + 1e-12).count();
    let mut paths: Vec<Vec<Point2>> = vec![Vec::with_capacity(upto + 1); n];
    for s in &trace.samples[..upto] {
        for (i, path) in paths.iter_mut().enumerate() {
            path.push(s.positions[i]);
        }
    }
    let (now, shown_t) = if upto == trace.samples.len() {
        let end = trace.metric_times.last().copied().unwrap_or(0.0);
        for (i, path) in paths.iter_mut().enumerate() {
            path.push(trace.final_positions[i]);
        }
        let arrived = trace.arrival_times.iter().map(|a| a.is_some());
        (trace.final_positions.iter().copied().zip(arrived).collect::<Vec<_>>(), end)
    } else {
        let s = &trace.samples[upto.saturating_sub(1)];
        (s.positions.iter().copied().zip(s.arrived.iter().copied()).collect(), s.t)
    };
    scene_svg(chain, r_s, r_a, &paths, &now, &format!("t = {shown_t:.3} s"))
}

/// Full paths and final positions from trajectory rows.
pub fn trajectories_svg(chain: &QuadrangleChain, r_s: f64, r_a: f64, rows: &[TrajectoryRow]) -> String {
    let n = rows.iter().map(|r| r.id + 1).max().unwrap_or(0);
    let mut paths = vec![Vec::new(); n];
    let mut now = vec![(Point2::zeros(), false); n];
    let mut t_last = 0.0;
    for r in rows {
        paths[r.id].push(Point2::new(r.x, r.y));
        now[r.id] = (Point2::new(r.x, r.y), r.arrived);
        t_last = r.t;
    }
    scene_svg(chain, r_s, r_a, &paths, &now, &format!("t = {t_last:.3} s"))
}

/// Bucketed minima, so that decimation never hides a close approach.
fn bucket_minima(ts: &[f64], ys: &[f64], max: usize) -> Vec<(f64, f64)> {
    let stride = ts.len().div_ceil(max).max(1);
    ts.chunks(stride)
        .zip(ys.chunks(stride))
        .filter_map(|(tc, yc)| {
            let (k, y) = yc
                .iter()
                .enumerate()
                .filter(|(_, y)| y.is_finite())
                .min_by(|a, b| a.1.total_cmp(b.1))?;
            Some((tc[k], *y))
        })
        .collect()
}

fn panel(out: &mut String, top: f64, title: &str, ts: &[f64], ys: &[f64], reference: f64, ref_label: &str, t_max: f64) {
    let (w, h, left, pad) = (SCENE_WIDTH, 260.0, 60.0, 20.0);
    let y_max = ys.iter().cloned().filter(|y| y.is_finite()).fold(reference, f64::max) * 1.1;
    let sx = |t: f64| left + (w - left - pad) * t / t_max.max(1e-12);
    let sy = |y: f64| top + h - h * y / y_max;
    let _ = writeln!(
        out,
        "<rect x=\"{left:.2}\" y=\"{top:.2}\" width=\"{:.2}\" height=\"{h:.2}\" fill=\"none\" stroke=\"black\"/>",
        w - left - pad
    );
    let _ = writeln!(out, "<text x=\"{left:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"13\">{title}</text>", top - 6.0);
    for k in 0..=4 {
        let y = y_max * k as f64 / 4.0;
        let _ = writeln!(
            out,
            "<text x=\"4\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"11\">{y:.2}</text>",
            sy(y) + 4.0
        );
        let t = t_max * k as f64 / 4.0;
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"11\">{t:.1}</text>",
            sx(t) - 10.0,
            top + h + 14.0
        );
    }
    polyline(
        out,
        [(sx(0.0), sy(reference)), (sx(t_max), sy(reference))].into_iter(),
        "fill=\"none\" stroke=\"#d62728\" stroke-dasharray=\"6 4\"",
    );
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"11\" fill=\"#d62728\">{ref_label}</text>",
        sx(t_max) - 80.0,
        sy(reference) - 4.0
    );
    let pts = bucket_minima(ts, ys, 2000);
    if !pts.is_empty() {
        polyline(
            out,
            pts.into_iter().map(|(t, y)| (sx(t), sy(y))),
            "fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.2\"",
        );
    }
}

/// Two stacked panels: minimum pairwise distance against `2 r_s`, minimum wall
/// distance against `r_s`. Time on the horizontal axis in seconds.
pub fn distance_plot_svg(rows: &[MetricRow], r_s: f64) -> String {
    let ts: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let pair: Vec<f64> = rows.iter().map(|r| r.min_pair_dist).collect();
    let wall: Vec<f64> = rows.iter().map(|r| r.min_boundary_dist).collect();
    let t_max = ts.last().copied().unwrap_or(1.0);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SCENE_WIDTH:.0}\" height=\"640\" viewBox=\"0 0 {SCENE_WIDTH:.2} 640.00\">"
    );
    let _ = writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    panel(&mut out, 30.0, "minimum distance between agents (m)", &ts, &pair, 2.0 * r_s, "2 r_s", t_max);
    panel(&mut out, 350.0, "minimum distance to the tube boundary (m)", &ts, &wall, r_s, "r_s", t_max);
    out.push_str("</svg>\n");
    out
}
