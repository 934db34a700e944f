//! CSV writers. Column layouts are fixed:
//!
//! * `trajectories.csv`: `t, q0..q{d-1}, trajectory, u0..u{d-1}` where `q` is
//!   the position wrapped into the periodic box and `u` the unwrapped one.
//! * `density_t<k>.csv`: `t, q0..q{d-1}, density` on every grid point of the
//!   k-th exported density.
//! * `results.csv`: `quantity, label, value`.
//!
//! Floats use Rust's shortest round-trip formatting.

use std::io::Write;

use pilotwave::ensemble::TrajectoryEnsemble;
use pilotwave::scenarios::ResultRow;
use pilotwave::wavefield::DensityField;

pub type CsvResult = Result<(), csv::Error>;

fn header(prefix: &[&str], axis_tag: &str, dims: usize) -> Vec<String> {
    prefix
        .iter()
        .map(|s| s.to_string())
        .chain((0..dims).map(|a| format!("{axis_tag}{a}")))
        .collect()
}

pub fn write_trajectories(out: impl Write, ensemble: &TrajectoryEnsemble) -> CsvResult {
    let dims = ensemble
        .trajectories
        .first()
        .and_then(|t| t.positions.first())
        .map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(out);
    let mut head = header(&["t"], "q", dims);
    head.push("trajectory".into());
    head.extend((0..dims).map(|a| format!("u{a}")));
    w.write_record(&head)?;
    let mut row = Vec::with_capacity(2 * dims + 2);
    for (id, traj) in ensemble.trajectories.iter().enumerate() {
        for ((t, q), u) in traj.times.iter().zip(&traj.positions).zip(&traj.unwrapped) {
            row.clear();
            row.push(t.to_string());
            row.extend(q.iter().map(f64::to_string));
            row.push(id.to_string());
            row.extend(u.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_density(out: impl Write, time: f64, density: &DensityField) -> CsvResult {
    let grid = density.grid();
    let dims = grid.dims();
    let mut w = csv::Writer::from_writer(out);
    let mut head = header(&["t"], "q", dims);
    head.push("density".into());
    w.write_record(&head)?;
    let t = time.to_string();
    let mut row = Vec::with_capacity(dims + 2);
    for (flat, value) in density.values().iter().enumerate() {
        row.clear();
        row.push(t.clone());
        row.extend(grid.point(flat).iter().map(f64::to_string));
        row.push(value.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_results(out: impl Write, rows: &[ResultRow]) -> CsvResult {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["quantity", "label", "value"])?;
    for r in rows {
        w.write_record([r.quantity.as_str(), r.label.as_str(), &r.value.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use pilotwave::ensemble::Trajectory;
    use pilotwave::wavefield::GridSpec;

    #[test]
    fn trajectory_columns() {
        let traj = Trajectory {
            times: vec![0.0, 0.5],
            positions: vec![vec![1.0, 2.0], vec![1.5, -3.0]],
            unwrapped: vec![vec![1.0, 2.0], vec![1.5, 3.25]],
            node_encounters: 0,
            clamp_events: 0,
            halved_steps: 0,
            max_error_estimate: 0.0,
        };
        let ens = TrajectoryEnsemble {
            trajectories: vec![traj.clone(), traj],
            seed: 0,
            scenario: "x".into(),
        };
        let mut buf = Vec::new();
        write_trajectories(&mut buf, &ens).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,q0,q1,trajectory,u0,u1");
        assert_eq!(lines[2], "0.5,1.5,-3,0,1.5,3.25");
        assert_eq!(lines.len(), 5);
    }

    #[test]
    fn density_rows_cover_grid() {
        let g = GridSpec::natural(&[(0.0, 1.0, 16)]).unwrap();
        let d = DensityField::new(&g, (0..16).map(f64::from).collect()).unwrap();
        let mut buf = Vec::new();
        write_density(&mut buf, 2.0, &d).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 17);
        assert_eq!(text.lines().nth(2).unwrap(), "2,0.0625,1");
    }
}
