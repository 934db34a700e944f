//! Conditional wave functions `ψ_t(x) = Ψ_t(x, Y(t))` and the two universes
//! used to watch them: a stationary two-particle universe whose `x`-slice
//! evolves by the free Schrödinger equation, and a branching universe of
//! disjoint environment packets.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::ensemble::{
    integrate_trajectory, FieldHistory, IntegratorSettings, StaticVelocity, Trajectory,
};
use crate::error::{config_err, Error, Result};
use crate::guidance::{trigonometric_eval, velocity_field, Stencil};
use crate::propagator::{eigen_residual, PropagatorPlan};
use crate::wavefield::{gaussian, GridSpec, Potential, WaveField};

/// How `Ψ` is evaluated between environment grid points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum SliceInterpolation {
    /// Per-axis cubic Lagrange, as for velocities.
    #[default]
    Cubic,
    /// Exact trigonometric sum; small environment grids only.
    Spectral,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalSlice {
    pub time: f64,
    pub y_value: Vec<f64>,
    /// `Ψ_t(x, y_value)` on the `x`-grid, unnormalized.
    pub raw: WaveField,
    /// `None` when `y_value` sits on a nodal line of `Ψ`.
    pub normalized: Option<WaveField>,
}

impl ConditionalSlice {
    pub fn is_nodal(&self) -> bool {
        self.normalized.is_none()
    }
}

/// Slices `f` over its leading `x_dims` axes at environment point `y`
/// (coordinates for the remaining axes).
pub fn conditional_wavefunction(
    f: &WaveField,
    x_dims: usize,
    y: &[f64],
    mode: SliceInterpolation,
) -> Result<ConditionalSlice> {
    let grid = f.grid();
    if x_dims == 0 || x_dims >= grid.dims() {
        return Err(config_err(
            "x_dims",
            format!("need 1..{} system axes, got {x_dims}", grid.dims()),
        ));
    }
    let x_axes: Vec<usize> = (0..x_dims).collect();
    let y_axes: Vec<usize> = (x_dims..grid.dims()).collect();
    let x_grid = grid.select_axes(&x_axes)?;
    let y_grid = grid.select_axes(&y_axes)?;
    if y.len() != y_grid.dims() {
        return Err(Error::GridMismatch(format!(
            "environment point has {} coordinates, expected {}",
            y.len(),
            y_grid.dims()
        )));
    }
    if !y_grid.contains(y) {
        return Err(Error::OutsideDomain(y.to_vec()));
    }
    let ny = y_grid.len();
    let amps = f.amplitudes();
    let raw: Vec<Complex64> = match mode {
        SliceInterpolation::Cubic => {
            let stencil = Stencil::new(&y_grid, y)?;
            let mut taps = Vec::with_capacity(64);
            stencil.for_each(|j, w| taps.push((j, w)));
            amps.par_chunks(ny)
                .map(|row| taps.iter().map(|&(j, w)| row[j] * w).sum())
                .collect()
        }
        SliceInterpolation::Spectral => amps
            .chunks(ny)
            .map(|row| {
                let line = WaveField::from_amplitudes(&y_grid, row.to_vec())?;
                Ok(trigonometric_eval(&line, y)?.0)
            })
            .collect::<Result<_>>()?,
    };
    let raw = WaveField::from_amplitudes(&x_grid, raw)?.with_time(f.time());
    let floor = 1e-10 * f.norm() * y_grid.cell_volume().sqrt();
    let normalized = if raw.norm() < floor {
        None
    } else {
        Some(raw.normalized()?)
    };
    Ok(ConditionalSlice {
        time: f.time(),
        y_value: y.to_vec(),
        raw,
        normalized,
    })
}

/// `1 − |⟨a,b⟩| / (‖a‖‖b‖)`: zero iff `a` and `b` agree up to a complex scalar.
pub fn projective_distance(a: &WaveField, b: &WaveField) -> Result<f64> {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateState(
            "projective distance of a zero field".into(),
        ));
    }
    let overlap = a.inner_product(b)?.norm();
    Ok((1.0 - overlap / (na * nb)).clamp(0.0, 1.0))
}

/// Free evolution of `f` by `duration` in as many exact kinetic steps as the
/// stability bound requires.
fn free_evolve(f: &WaveField, duration: f64) -> Result<WaveField> {
    if duration == 0.0 {
        return Ok(f.clone());
    }
    let grid = f.grid();
    let phase = duration.abs() * grid.max_kinetic_energy() / grid.hbar();
    let steps = (phase / std::f64::consts::PI).ceil().max(1.0) as usize;
    let plan = PropagatorPlan::free(grid, duration / steps as f64)?;
    let mut out = f.clone();
    for _ in 0..steps {
        plan.step_in_place(&mut out)?;
    }
    Ok(out)
}

/// Largest sine of the angle between consecutive slices after evolving the
/// earlier one freely to the later time; zero iff the slice sequence obeys
/// the free Schrödinger equation up to a time-dependent scalar.
pub fn schrodinger_residual(slices: &[&WaveField]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for w in slices.windows(2) {
        let a = free_evolve(w[0], w[1].time() - w[0].time())?.normalized()?;
        let b = w[1].normalized()?;
        let c = a.inner_product(&b)?;
        let rest = WaveField::linear_combination(&[(Complex64::new(1.0, 0.0), &b), (-c, &a)])?;
        worst = worst.max(rest.norm());
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmergenceEntry {
    pub time: f64,
    /// Actual configuration `(X(t), Y(t))`, wrapped.
    pub configuration: Vec<f64>,
    pub environment: Vec<f64>,
    /// Where the environment should be: `y₀ − t`, or the branch packet center.
    pub expected_environment: Vec<f64>,
    pub environment_error: f64,
    /// Standard deviation of the branch packet, for packet scenarios.
    pub environment_width: Option<f64>,
    /// Distance from the reference; `None` at a nodal environment point.
    pub distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmergenceReport {
    pub entries: Vec<EmergenceEntry>,
    pub max_distance: f64,
    pub max_environment_error: f64,
    pub nodal_points: usize,
    pub schrodinger_residual: f64,
    pub eigen_residual: Option<f64>,
    /// Smallest distance between slices one time unit apart.
    pub min_unit_time_change: Option<f64>,
    pub branch: Option<String>,
    /// Every sample within the tracking band (packet scenarios).
    pub tracked: Option<bool>,
    pub regularized_points: usize,
    pub node_encounters: usize,
    pub clamp_events: usize,
}

fn wrapped_gap(grid: &GridSpec, axis: usize, a: f64, b: f64) -> f64 {
    let l = grid.axis(axis).length();
    let d = (a - b).rem_euclid(l);
    d.min(l - d)
}

/// The two-particle universe `Ψ = e^{i(x−y)} cos(x+y)` on `[0, 2π)²`.
pub fn universe_grid(n: usize) -> Result<GridSpec> {
    let two_pi = 2.0 * std::f64::consts::PI;
    GridSpec::natural(&[(0.0, two_pi, n), (0.0, two_pi, n)])
}

pub fn universe_field(grid: &GridSpec) -> Result<WaveField> {
    WaveField::from_fn(grid, |q| {
        Complex64::from_polar((q[0] + q[1]).cos(), q[0] - q[1])
    })
}

/// `x`-slice reference: `e^{i(x−t)} cos(x+y₀−t) = ½(e^{i(2x+y₀−2t)} + e^{−iy₀})`,
/// an exact solution of the free equation with `ħ = m = 1`.
pub fn universe_reference(x_grid: &GridSpec, y0: f64, t: f64) -> Result<WaveField> {
    WaveField::from_fn(x_grid, |q| {
        Complex64::from_polar((q[0] + y0 - t).cos(), q[0] - t)
    })
    .map(|f| f.with_time(t))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryUniverse {
    pub grid_points: usize,
    pub x0: f64,
    pub y0: f64,
    pub t_final: f64,
    pub sample_times: Vec<f64>,
    /// Propagator step for `Ψ_t`.
    pub dt: f64,
    pub dt_traj: f64,
    pub interpolation: SliceInterpolation,
}

impl Default for StationaryUniverse {
    fn default() -> Self {
        Self {
            grid_points: 64,
            x0: 1.0,
            y0: 0.5,
            t_final: 5.0,
            sample_times: (0..=50).map(|k| 0.1 * k as f64).collect(),
            dt: 0.005,
            dt_traj: 1e-3,
            interpolation: SliceInterpolation::Spectral,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StationaryRun {
    pub report: EmergenceReport,
    pub trajectory: Trajectory,
    pub slices: Vec<ConditionalSlice>,
}

/// Integrates `(X, Y)` under `Ψ`, slices `Ψ_t` at `Y(t)` at each sample time
/// and compares against the free-evolving reference started from
/// `e^{ix} cos(x+y₀)`.
pub fn run_stationary_universe(cfg: &StationaryUniverse) -> Result<StationaryRun> {
    let grid = universe_grid(cfg.grid_points)?;
    let psi = universe_field(&grid)?;
    let mut start = vec![cfg.x0, cfg.y0];
    grid.wrap_point(&mut start);
    let velocity = StaticVelocity(velocity_field(&psi)?);
    let settings =
        IntegratorSettings::new(cfg.dt_traj, cfg.t_final).recording(cfg.sample_times.clone());
    let trajectory = integrate_trajectory(&start, &velocity, &settings)?;
    let plan = PropagatorPlan::new(cfg.dt, Potential::zero(&grid))?;
    let fields = plan.evolve(&psi, cfg.t_final, &trajectory.times)?;
    let x_grid = grid.select_axes(&[0])?;
    let computed = trajectory
        .times
        .par_iter()
        .zip(&trajectory.positions)
        .zip(&fields)
        .map(|((&t, q), field)| {
            let slice = conditional_wavefunction(
                &field.clone().with_time(t),
                1,
                &q[1..],
                cfg.interpolation,
            )?;
            let expected = grid.wrap(1, cfg.y0 - t);
            let distance = match &slice.normalized {
                Some(s) => Some(projective_distance(
                    s,
                    &universe_reference(&x_grid, cfg.y0, t)?,
                )?),
                None => None,
            };
            let entry = EmergenceEntry {
                time: t,
                configuration: q.clone(),
                environment: vec![q[1]],
                expected_environment: vec![expected],
                environment_error: wrapped_gap(&grid, 1, q[1], expected),
                environment_width: None,
                distance,
            };
            Ok((entry, slice))
        })
        .collect::<Result<Vec<_>>>()?;
    let (entries, slices): (Vec<_>, Vec<_>) = computed.into_iter().unzip();
    let regular: Vec<&WaveField> = slices
        .iter()
        .filter_map(|s| s.normalized.as_ref())
        .collect();
    let mut min_change: Option<f64> = None;
    for (i, a) in slices.iter().enumerate() {
        for b in &slices[i + 1..] {
            if (b.time - a.time - 1.0).abs() > 1e-9 {
                continue;
            }
            if let (Some(na), Some(nb)) = (&a.normalized, &b.normalized) {
                let d = projective_distance(na, nb)?;
                min_change = Some(min_change.map_or(d, |m| m.min(d)));
            }
        }
    }
    let report = EmergenceReport {
        max_distance: entries
            .iter()
            .filter_map(|e| e.distance)
            .fold(0.0, f64::max),
        max_environment_error: entries
            .iter()
            .map(|e| e.environment_error)
            .fold(0.0, f64::max),
        nodal_points: entries.iter().filter(|e| e.distance.is_none()).count(),
        schrodinger_residual: schrodinger_residual(&regular)?,
        eigen_residual: Some(eigen_residual(&psi, &Potential::zero(&grid), 2.0)?),
        min_unit_time_change: min_change,
        branch: None,
        tracked: None,
        regularized_points: velocity.0.regularized_count(),
        node_encounters: trajectory.node_encounters,
        clamp_events: trajectory.clamp_events,
        entries,
    };
    Ok(StationaryRun {
        report,
        trajectory,
        slices,
    })
}

/// Gaussian packet in one coordinate: centre, density standard deviation and
/// velocity (the wavenumber is `m v / ħ`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Packet {
    pub center: f64,
    pub width: f64,
    pub velocity: f64,
}

impl Packet {
    pub fn new(center: f64, width: f64, velocity: f64) -> Self {
        Self {
            center,
            width,
            velocity,
        }
    }

    pub fn field(&self, grid: &GridSpec) -> Result<WaveField> {
        let k = grid.mass(0) * self.velocity / grid.hbar();
        WaveField::from_fn(grid, |q| gaussian(q[0], self.center, self.width, k))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchingUniverse {
    pub x_axis: (f64, f64, usize),
    pub y_axis: (f64, f64, usize),
    pub mass_x: f64,
    pub mass_y: f64,
    /// Environment packets `φ^α`, one per branch.
    pub packets: Vec<Packet>,
    /// System states `ψ^α` attached to the packets.
    pub x_states: Vec<Packet>,
    pub start: (f64, f64),
    pub t_final: f64,
    pub dt: f64,
    pub dt_traj: f64,
    /// Propagator steps between stored snapshots.
    pub snapshot_every: usize,
}

impl Default for BranchingUniverse {
    fn default() -> Self {
        Self {
            x_axis: (-16.0, 16.0, 128),
            y_axis: (-16.0, 16.0, 256),
            mass_x: 1.0,
            mass_y: 10.0,
            packets: vec![Packet::new(4.0, 0.4, 1.0), Packet::new(-4.0, 0.4, -1.0)],
            x_states: vec![Packet::new(-2.0, 1.0, 1.0), Packet::new(2.0, 1.0, -0.5)],
            start: (-1.7, 4.2),
            t_final: 2.0,
            dt: 0.01,
            dt_traj: 1e-3,
            snapshot_every: 10,
        }
    }
}

impl BranchingUniverse {
    fn grids(&self) -> Result<(GridSpec, GridSpec)> {
        Ok((
            GridSpec::new(&[self.x_axis], 1.0, &[self.mass_x])?,
            GridSpec::new(&[self.y_axis], 1.0, &[self.mass_y])?,
        ))
    }

    /// `Σ_α ψ^α(x) φ^α(y)`, normalized.
    pub fn composite(&self) -> Result<WaveField> {
        if self.packets.len() != self.x_states.len() || self.packets.is_empty() {
            return Err(config_err(
                "packets",
                "need one system state per environment packet",
            ));
        }
        let (gx, gy) = self.grids()?;
        let phis = self
            .packets
            .iter()
            .map(|p| p.field(&gy))
            .collect::<Result<Vec<_>>>()?;
        for a in 0..phis.len() {
            for b in a + 1..phis.len() {
                let overlap = phis[a].inner_product(&phis[b])?.norm();
                if overlap >= 1e-8 {
                    return Err(Error::PacketsNotDisjoint { a, b, overlap });
                }
            }
        }
        let grid = gx.product(&gy)?;
        let mut amps = vec![Complex64::new(0.0, 0.0); grid.len()];
        for (state, phi) in self.x_states.iter().zip(&phis) {
            let psi = state.field(&gx)?;
            for (row, p) in amps.chunks_mut(gy.len()).zip(psi.amplitudes()) {
                for (z, f) in row.iter_mut().zip(phi.amplitudes()) {
                    *z += p * f;
                }
            }
        }
        WaveField::from_amplitudes(&grid, amps)?.normalized()
    }
}

#[derive(Debug, Clone)]
pub struct BranchingRun {
    pub report: EmergenceReport,
    pub trajectory: Trajectory,
    /// Index of the branch whose packet holds `Y(0)`.
    pub branch: usize,
    pub slices: Vec<ConditionalSlice>,
    /// Independently evolved `ψ^α_t` at the sample times.
    pub references: Vec<WaveField>,
}

pub fn branch_label(packets: &[Packet], index: usize) -> String {
    if packets.len() == 2 {
        let other = packets[1 - index].center;
        if packets[index].center > other {
            "upper"
        } else {
            "lower"
        }
        .to_string()
    } else {
        format!("branch{index}")
    }
}

/// Evolves the composite, follows `(X, Y)` and checks that `Y` stays with its
/// packet and that the `x`-slice stays close to the branch's own `ψ^α_t`.
pub fn run_branching_universe(cfg: &BranchingUniverse) -> Result<BranchingRun> {
    let psi = cfg.composite()?;
    let grid = psi.grid().clone();
    let (gx, gy) = cfg.grids()?;
    let plan = PropagatorPlan::new(cfg.dt, Potential::zero(&grid))?;
    let history = FieldHistory::evolve(&plan, &psi, cfg.t_final, cfg.snapshot_every)?;
    let times: Vec<f64> = history.fields.iter().map(WaveField::time).collect();
    let start = [cfg.start.0, cfg.start.1];
    let settings = IntegratorSettings::new(cfg.dt_traj, cfg.t_final).recording(times.clone());
    let trajectory = integrate_trajectory(&start, &history.velocity, &settings)?;

    let y_start = trajectory.positions[0][1];
    let branch = (0..cfg.packets.len())
        .min_by(|&a, &b| {
            let da = wrapped_gap(&gy, 0, y_start, cfg.packets[a].center);
            let db = wrapped_gap(&gy, 0, y_start, cfg.packets[b].center);
            da.total_cmp(&db)
        })
        .unwrap_or(0);

    let x_plan = PropagatorPlan::free(&gx, cfg.dt)?;
    let y_plan = PropagatorPlan::free(&gy, cfg.dt)?;
    let references = x_plan.evolve(&cfg.x_states[branch].field(&gx)?, cfg.t_final, &times)?;
    let packet_runs = y_plan.evolve(&cfg.packets[branch].field(&gy)?, cfg.t_final, &times)?;

    let mut entries = Vec::with_capacity(times.len());
    let mut slices = Vec::with_capacity(times.len());
    for (k, field) in history.fields.iter().enumerate() {
        let q = &trajectory.positions[k];
        let slice = conditional_wavefunction(field, 1, &q[1..], SliceInterpolation::Cubic)?;
        let rho = packet_runs[k].density();
        let coords = gy.coords(0);
        let h = gy.spacing(0);
        let mean: f64 = rho
            .values()
            .iter()
            .zip(&coords)
            .map(|(p, y)| p * y)
            .sum::<f64>()
            * h;
        let var: f64 = rho
            .values()
            .iter()
            .zip(&coords)
            .map(|(p, y)| p * (y - mean).powi(2))
            .sum::<f64>()
            * h;
        let distance = match &slice.normalized {
            Some(s) => Some(projective_distance(s, &references[k])?),
            None => None,
        };
        entries.push(EmergenceEntry {
            time: field.time(),
            configuration: q.clone(),
            environment: vec![q[1]],
            expected_environment: vec![mean],
            environment_error: wrapped_gap(&gy, 0, q[1], mean),
            environment_width: Some(var.sqrt()),
            distance,
        });
        slices.push(slice);
    }
    let tracked = entries
        .iter()
        .all(|e| e.environment_error <= 3.0 * e.environment_width.unwrap_or(0.0));
    let report = EmergenceReport {
        max_distance: entries
            .iter()
            .filter_map(|e| e.distance)
            .fold(0.0, f64::max),
        max_environment_error: entries
            .iter()
            .map(|e| e.environment_error)
            .fold(0.0, f64::max),
        nodal_points: entries.iter().filter(|e| e.distance.is_none()).count(),
        schrodinger_residual: schrodinger_residual(
            &slices
                .iter()
                .filter_map(|s| s.normalized.as_ref())
                .collect::<Vec<_>>(),
        )?,
        eigen_residual: None,
        min_unit_time_change: None,
        branch: Some(branch_label(&cfg.packets, branch)),
        tracked: Some(tracked),
        regularized_points: history
            .velocity
            .fields()
            .iter()
            .map(|v| v.regularized_count())
            .sum(),
        node_encounters: trajectory.node_encounters,
        clamp_events: trajectory.clamp_events,
        entries,
    };
    Ok(BranchingRun {
        report,
        trajectory,
        branch,
        slices,
        references,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn line(n: usize) -> GridSpec {
        GridSpec::natural(&[(-8.0, 8.0, n)]).unwrap()
    }

    #[test]
    fn projective_distance_basics() {
        let g = line(64);
        let psi = Packet::new(0.5, 1.0, 0.7).field(&g).unwrap();
        let phased = psi.scaled(Complex64::from_polar(1.0, 2.0 * 0.3));
        assert_abs_diff_eq!(
            projective_distance(&psi, &phased).unwrap(),
            0.0,
            epsilon = 1e-14
        );
        let tripled = psi.scaled(Complex64::new(3.0, 0.0));
        assert_abs_diff_eq!(
            projective_distance(&psi, &tripled).unwrap(),
            0.0,
            epsilon = 1e-14
        );
        let gp = GridSpec::natural(&[(0.0, 2.0 * PI, 32)]).unwrap();
        let a = WaveField::from_fn(&gp, |q| Complex64::from_polar(1.0, q[0])).unwrap();
        let b = WaveField::from_fn(&gp, |q| Complex64::from_polar(1.0, 2.0 * q[0])).unwrap();
        assert_abs_diff_eq!(projective_distance(&a, &b).unwrap(), 1.0, epsilon = 1e-12);
        assert!(projective_distance(&a, &WaveField::zeros(&gp)).is_err());
    }

    #[test]
    fn product_state_slices_to_its_factor() {
        let gx = line(64);
        let gy = GridSpec::natural(&[(-6.0, 6.0, 32)]).unwrap();
        let psi = Packet::new(1.0, 1.2, -0.4).field(&gx).unwrap();
        let phi = Packet::new(0.0, 1.0, 0.3).field(&gy).unwrap();
        let g = gx.product(&gy).unwrap();
        let mut amps = Vec::with_capacity(g.len());
        for p in psi.amplitudes() {
            for f in phi.amplitudes() {
                amps.push(p * f);
            }
        }
        let f = WaveField::from_amplitudes(&g, amps).unwrap();
        for y in [-1.3, 0.0, 0.77] {
            let s = conditional_wavefunction(&f, 1, &[y], SliceInterpolation::Cubic).unwrap();
            let d = projective_distance(s.normalized.as_ref().unwrap(), &psi).unwrap();
            assert_abs_diff_eq!(d, 0.0, epsilon = 1e-12);
        }
        assert!(matches!(
            conditional_wavefunction(&f, 1, &[7.0], SliceInterpolation::Cubic),
            Err(Error::OutsideDomain(_))
        ));
    }

    #[test]
    fn universe_slice_at_start() {
        let g = universe_grid(64).unwrap();
        let f = universe_field(&g).unwrap();
        let gx = g.select_axes(&[0]).unwrap();
        let reference = universe_reference(&gx, 0.5, 0.0).unwrap();
        for mode in [SliceInterpolation::Cubic, SliceInterpolation::Spectral] {
            let s = conditional_wavefunction(&f, 1, &[0.5], mode).unwrap();
            let d = projective_distance(s.normalized.as_ref().unwrap(), &reference).unwrap();
            assert!(d < 1e-9, "{mode:?}: {d}");
        }
        // spectral slicing of a band-limited field is exact
        let s = conditional_wavefunction(&f, 1, &[0.5], SliceInterpolation::Spectral).unwrap();
        let d = projective_distance(s.normalized.as_ref().unwrap(), &reference).unwrap();
        assert_abs_diff_eq!(d, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn nodal_environment_point_is_flagged() {
        // Ψ = sin(y)·g(x) vanishes on the whole line y = 0
        let g = GridSpec::natural(&[(-8.0, 8.0, 32), (-PI, PI, 32)]).unwrap();
        let f = WaveField::from_fn(&g, |q| gaussian(q[0], 0.0, 1.0, 0.0) * q[1].sin()).unwrap();
        let s = conditional_wavefunction(&f, 1, &[0.0], SliceInterpolation::Cubic).unwrap();
        assert!(s.is_nodal());
        let s = conditional_wavefunction(&f, 1, &[1.0], SliceInterpolation::Cubic).unwrap();
        assert!(!s.is_nodal());
    }

    #[test]
    fn superposition_slice_picks_the_local_branch() {
        let gx = line(64);
        let gy = GridSpec::natural(&[(-8.0, 8.0, 128)]).unwrap();
        let psi1 = Packet::new(-2.0, 1.0, 0.5).field(&gx).unwrap();
        let psi2 = Packet::new(2.0, 0.8, -1.0).field(&gx).unwrap();
        let phi1 = Packet::new(-4.0, 0.3, 0.0).field(&gy).unwrap();
        let phi2 = Packet::new(4.0, 0.3, 0.0).field(&gy).unwrap();
        let g = gx.product(&gy).unwrap();
        let amps: Vec<Complex64> = (0..g.len())
            .map(|i| {
                let (ix, iy) = (i / gy.len(), i % gy.len());
                psi1.amplitudes()[ix] * phi1.amplitudes()[iy]
                    + psi2.amplitudes()[ix] * phi2.amplitudes()[iy]
            })
            .collect();
        let f = WaveField::from_amplitudes(&g, amps).unwrap();
        let s = conditional_wavefunction(&f, 1, &[-3.9], SliceInterpolation::Cubic).unwrap();
        assert!(projective_distance(s.normalized.as_ref().unwrap(), &psi1).unwrap() < 1e-6);
    }

    #[test]
    fn free_slice_sequence_has_no_residual() {
        let g = universe_grid(64).unwrap();
        let gx = g.select_axes(&[0]).unwrap();
        let slices: Vec<WaveField> = (0..4)
            .map(|k| universe_reference(&gx, 0.5, 0.3 * k as f64).unwrap())
            .collect();
        let refs: Vec<&WaveField> = slices.iter().collect();
        assert!(schrodinger_residual(&refs).unwrap() < 1e-10);
        let frozen: Vec<WaveField> = (0..3)
            .map(|k| {
                universe_reference(&gx, 0.5, 0.0)
                    .unwrap()
                    .with_time(k as f64)
            })
            .collect();
        assert!(schrodinger_residual(&frozen.iter().collect::<Vec<_>>()).unwrap() > 0.1);
    }

    #[test]
    fn branching_composite_rejects_overlapping_packets() {
        let cfg = BranchingUniverse {
            packets: vec![Packet::new(0.5, 0.4, 1.0), Packet::new(-0.5, 0.4, 1.0)],
            ..Default::default()
        };
        assert!(matches!(
            cfg.composite(),
            Err(Error::PacketsNotDisjoint { a: 0, b: 1, .. })
        ));
    }
}
