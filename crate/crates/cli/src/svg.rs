//! Self-contained SVG plots: no scripts, fonts or linked assets.

use std::fmt::Write as _;

use pilotwave::ensemble::TrajectoryEnsemble;
use pilotwave::scenarios::ResultRow;
use pilotwave::wavefield::DensityField;

const W: f64 = 640.0;
const H: f64 = 480.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 48.0;
const MAX_LINES: usize = 200;
const MAX_POINTS: usize = 600;
const MAX_CELLS: usize = 128;

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
    x_ticks: bool,
    body: String,
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let pad = |(lo, hi): (f64, f64)| {
            if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5, hi + 0.5)
            }
        };
        Self {
            x: pad(x),
            y: pad(y),
            x_ticks: true,
            body: String::new(),
        }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }

    fn finish(mut self, title: &str, xlabel: &str, ylabel: &str) -> String {
        let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
        let _ = write!(
            self.body,
            r##"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="#333"/>"##,
            x1 - x0,
            y1 - y0
        );
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let xv = self.x.0 + f * (self.x.1 - self.x.0);
            let yv = self.y.0 + f * (self.y.1 - self.y.0);
            let (tx, ty) = (self.px(xv), self.py(yv));
            let snap =
                |v: f64, (lo, hi): (f64, f64)| if v.abs() < 1e-6 * (hi - lo) { 0.0 } else { v };
            let (xv, yv) = (snap(xv, self.x), snap(yv, self.y));
            if self.x_ticks {
                let _ = write!(
                    self.body,
                    r##"<line x1="{tx:.1}" y1="{y1}" x2="{tx:.1}" y2="{:.1}" stroke="#333"/><text x="{tx:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
                    y1 + 5.0,
                    y1 + 18.0,
                    tick(xv)
                );
            }
            let _ = write!(
                self.body,
                r##"<line x1="{:.1}" y1="{ty:.1}" x2="{x0}" y2="{ty:.1}" stroke="#333"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
                x0 - 5.0,
                x0 - 8.0,
                ty + 4.0,
                tick(yv)
            );
        }
        format!(
            r##"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11"><rect width="{W}" height="{H}" fill="white"/>{}<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text><text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text><text transform="translate(16 {:.1}) rotate(-90)" text-anchor="middle">{}</text></svg>
"##,
            self.body,
            W / 2.0,
            escape(title),
            (x0 + x1) / 2.0,
            H - 10.0,
            escape(xlabel),
            (y0 + y1) / 2.0,
            escape(ylabel)
        )
    }
}

fn tick(v: f64) -> String {
    if v == 0.0 || (1e-2..1e4).contains(&v.abs()) {
        format!("{:.2}", v)
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    } else {
        format!("{v:.1e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        })
}

fn stride(len: usize, max: usize) -> usize {
    len.div_ceil(max).max(1)
}

/// Unwrapped trajectories: the plane for 2D ensembles, position against time in 1D.
pub fn trajectory_fan(ensemble: &TrajectoryEnsemble) -> Option<String> {
    let first = ensemble.trajectories.first()?;
    let dims = first.unwrapped.first()?.len();
    if dims > 2 {
        return None;
    }
    let step = stride(ensemble.trajectories.len(), MAX_LINES);
    let shown: Vec<_> = ensemble.trajectories.iter().step_by(step).collect();
    let coords = |traj: &pilotwave::ensemble::Trajectory| -> Vec<(f64, f64)> {
        let s = stride(traj.times.len(), MAX_POINTS);
        let mut idx: Vec<usize> = (0..traj.times.len()).step_by(s).collect();
        if idx.last() != Some(&(traj.times.len() - 1)) {
            idx.push(traj.times.len() - 1);
        }
        idx.into_iter()
            .map(|i| match dims {
                1 => (traj.times[i], traj.unwrapped[i][0]),
                _ => (traj.unwrapped[i][0], traj.unwrapped[i][1]),
            })
            .collect()
    };
    let lines: Vec<Vec<(f64, f64)>> = shown.iter().map(|t| coords(t)).collect();
    let x = bounds(lines.iter().flatten().map(|p| p.0));
    let y = bounds(lines.iter().flatten().map(|p| p.1));
    let mut frame = Frame::new(x, y);
    for line in &lines {
        let pts: Vec<String> = line
            .iter()
            .map(|&(a, b)| format!("{:.1},{:.1}", frame.px(a), frame.py(b)))
            .collect();
        let _ = write!(
            frame.body,
            r##"<polyline points="{}" fill="none" stroke="#1f4e9c" stroke-opacity="0.55" stroke-width="0.8"/>"##,
            pts.join(" ")
        );
    }
    let title = format!("{}: {} trajectories", ensemble.scenario, lines.len());
    Some(match dims {
        1 => frame.finish(&title, "t", "q0"),
        _ => frame.finish(&title, "q0", "q1"),
    })
}

fn colour(f: f64) -> String {
    const STOPS: [(f64, f64, f64); 5] = [
        (255.0, 255.0, 255.0),
        (173.0, 216.0, 230.0),
        (49.0, 130.0, 189.0),
        (8.0, 48.0, 107.0),
        (0.0, 0.0, 0.0),
    ];
    let f = f.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (f.floor() as usize).min(STOPS.len() - 2);
    let s = f - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let mix = |u: f64, v: f64| (u + s * (v - u)).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(a.0, b.0),
        mix(a.1, b.1),
        mix(a.2, b.2)
    )
}

/// Heat map of a 2D density (block-averaged to at most 128 cells per axis),
/// or a line plot in 1D.
pub fn density_map(time: f64, density: &DensityField) -> Option<String> {
    let grid = density.grid();
    let values = density.values();
    let title = format!("|ψ|² at t = {}", tick(time));
    match grid.dims() {
        1 => {
            let xs = grid.coords(0);
            let mut frame = Frame::new(bounds(xs.iter().copied()), (0.0, density.peak()));
            let pts: Vec<String> = xs
                .iter()
                .zip(values)
                .map(|(&x, &v)| format!("{:.1},{:.1}", frame.px(x), frame.py(v)))
                .collect();
            let _ = write!(
                frame.body,
                r##"<polyline points="{}" fill="none" stroke="#1f4e9c" stroke-width="1.2"/>"##,
                pts.join(" ")
            );
            Some(frame.finish(&title, "q0", "density"))
        }
        2 => {
            let (a0, a1) = (grid.axis(0), grid.axis(1));
            let shape = grid.shape();
            let (b0, b1) = (stride(shape[0], MAX_CELLS), stride(shape[1], MAX_CELLS));
            let (c0, c1) = (shape[0].div_ceil(b0), shape[1].div_ceil(b1));
            let mut cells = vec![0.0; c0 * c1];
            let mut counts = vec![0usize; c0 * c1];
            for i in 0..shape[0] {
                for j in 0..shape[1] {
                    let k = (i / b0) * c1 + j / b1;
                    cells[k] += values[i * shape[1] + j];
                    counts[k] += 1;
                }
            }
            for (c, n) in cells.iter_mut().zip(&counts) {
                *c /= *n as f64;
            }
            let peak = cells.iter().copied().fold(0.0, f64::max);
            let x = (a0.lo, a0.hi);
            let y = (a1.lo, a1.hi);
            let mut frame = Frame::new(x, y);
            let (dx, dy) = (a0.spacing() * b0 as f64, a1.spacing() * b1 as f64);
            let (wpx, hpx) = (
                frame.px(x.0 + dx) - frame.px(x.0),
                frame.py(y.0) - frame.py(y.0 + dy),
            );
            for i in 0..c0 {
                for j in 0..c1 {
                    let v = cells[i * c1 + j];
                    if peak <= 0.0 || v / peak < 1e-3 {
                        continue;
                    }
                    let (qx, qy) = (x.0 + i as f64 * dx, y.0 + (j + 1) as f64 * dy);
                    let _ = write!(
                        frame.body,
                        r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"##,
                        frame.px(qx),
                        frame.py(qy),
                        wpx + 0.05,
                        hpx + 0.05,
                        colour(v / peak)
                    );
                }
            }
            Some(frame.finish(&title, "q0", "q1"))
        }
        _ => None,
    }
}

/// Bars for every result row whose quantity is in `quantities`, grouped by
/// label with one series per quantity.
pub fn histogram(rows: &[ResultRow], quantities: &[&str]) -> Option<String> {
    let rows: Vec<&ResultRow> = rows
        .iter()
        .filter(|r| quantities.contains(&r.quantity.as_str()) && r.value.is_finite())
        .collect();
    if rows.is_empty() {
        return None;
    }
    let mut labels: Vec<&str> = Vec::new();
    let mut series: Vec<&str> = Vec::new();
    for r in &rows {
        if !labels.contains(&r.label.as_str()) {
            labels.push(&r.label);
        }
        if !series.contains(&r.quantity.as_str()) {
            series.push(&r.quantity);
        }
    }
    let top = rows.iter().map(|r| r.value).fold(0.0, f64::max);
    let top = 1.2 * top.max(f64::MIN_POSITIVE);
    let mut frame = Frame::new((0.0, labels.len() as f64), (0.0, top));
    frame.x_ticks = false;
    const PALETTE: [&str; 4] = ["#1f4e9c", "#d9822b", "#3a923a", "#8e44ad"];
    let slot = frame.px(1.0) - frame.px(0.0);
    let bar = 0.8 * slot / series.len() as f64;
    for r in &rows {
        let li = labels.iter().position(|l| *l == r.label).unwrap_or(0);
        let si = series.iter().position(|s| *s == r.quantity).unwrap_or(0);
        let x = frame.px(li as f64) + 0.1 * slot + si as f64 * bar;
        let y = frame.py(r.value);
        let _ = write!(
            frame.body,
            r##"<rect x="{x:.2}" y="{y:.2}" width="{bar:.2}" height="{:.2}" fill="{}"/>"##,
            frame.py(0.0) - y,
            PALETTE[si % PALETTE.len()]
        );
    }
    if labels.len() <= 16 {
        for (i, l) in labels.iter().enumerate() {
            let _ = write!(
                frame.body,
                r##"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
                frame.px(i as f64 + 0.5),
                frame.py(0.0) + 18.0,
                escape(l)
            );
        }
    }
    for (si, s) in series.iter().enumerate() {
        let _ = write!(
            frame.body,
            r##"<rect x="{:.1}" y="{:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"##,
            W - RIGHT - 150.0,
            TOP + 8.0 + 16.0 * si as f64,
            PALETTE[si % PALETTE.len()],
            W - RIGHT - 135.0,
            TOP + 17.0 + 16.0 * si as f64,
            escape(s)
        );
    }
    Some(frame.finish(&series.join(" / "), "label", "value"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use pilotwave::ensemble::Trajectory;
    use pilotwave::wavefield::GridSpec;

    fn assert_self_contained(svg: &str) {
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        for banned in ["href", "<script", "url(", "@import"] {
            assert!(!svg.contains(banned), "{banned}");
        }
    }

    #[test]
    fn fan_and_heat_map() {
        let traj = Trajectory {
            times: vec![0.0, 1.0, 2.0],
            positions: vec![vec![0.0, 0.0]; 3],
            unwrapped: vec![vec![0.0, 0.0], vec![1.0, 0.5], vec![2.0, 0.7]],
            node_encounters: 0,
            clamp_events: 0,
            halved_steps: 0,
            max_error_estimate: 0.0,
        };
        let ens = TrajectoryEnsemble {
            trajectories: vec![traj; 3],
            seed: 1,
            scenario: "t".into(),
        };
        let fan = trajectory_fan(&ens).unwrap();
        assert_self_contained(&fan);
        assert_eq!(fan.matches("<polyline").count(), 3);

        let g = GridSpec::natural(&[(0.0, 1.0, 512), (0.0, 1.0, 16)]).unwrap();
        let d = DensityField::new(&g, (0..8192).map(|i| (i % 7) as f64).collect()).unwrap();
        let map = density_map(0.5, &d).unwrap();
        assert_self_contained(&map);
        // 512 points in blocks of 4 leave 128 columns, plus background and frame
        assert!(map.matches("<rect").count() <= 128 * 16 + 2);
    }

    #[test]
    fn histogram_groups_series() {
        let rows = vec![
            ResultRow {
                quantity: "a".into(),
                label: "-".into(),
                value: 0.36,
            },
            ResultRow {
                quantity: "a".into(),
                label: "+".into(),
                value: 0.64,
            },
            ResultRow {
                quantity: "b".into(),
                label: "-".into(),
                value: 0.35,
            },
            ResultRow {
                quantity: "c".into(),
                label: "-".into(),
                value: 9.0,
            },
        ];
        let svg = histogram(&rows, &["a", "b"]).unwrap();
        assert_self_contained(&svg);
        assert!(svg.contains("a / b"));
        assert!(histogram(&rows, &["zzz"]).is_none());
    }

    #[test]
    fn colour_endpoints() {
        assert_eq!(colour(0.0), "#ffffff");
        assert_eq!(colour(1.0), "#000000");
    }
}
