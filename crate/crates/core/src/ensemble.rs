//! Quantum-equilibrium sampling, trajectory integration and the statistics
//! that check `|ψ_t|²`-distributed ensembles stay `|ψ_t|²`-distributed.

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{config_err, Error, Result};
use crate::fft::SpectralPlan;
use crate::guidance::{velocity_field_with, VelocityField};
use crate::propagator::PropagatorPlan;
use crate::wavefield::{DensityField, GridSpec, WaveField};

/// Independent generator for item `index` of a run seeded with `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Asymptotic one-sample KS critical value at the 1% level.
pub fn ks_threshold(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

/// Periodic piecewise-linear density through the node values `p` on a grid
/// axis starting at `lo` with spacing `h`. The last cell joins `p[n-1]` to `p[0]`.
#[derive(Debug, Clone)]
pub struct PiecewiseLinear {
    lo: f64,
    h: f64,
    nodes: Vec<f64>,
    cumulative: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(lo: f64, h: f64, nodes: Vec<f64>) -> Result<Self> {
        let n = nodes.len();
        let mut cumulative = Vec::with_capacity(n);
        let mut acc = 0.0;
        for j in 0..n {
            acc += 0.5 * h * (nodes[j] + nodes[(j + 1) % n]);
            cumulative.push(acc);
        }
        if !(acc > 0.0 && acc.is_finite()) {
            return Err(Error::DegenerateState(format!("density of mass {acc}")));
        }
        Ok(Self {
            lo,
            h,
            nodes,
            cumulative,
        })
    }

    pub fn for_axis(grid: &GridSpec, axis: usize, nodes: Vec<f64>) -> Result<Self> {
        Self::new(grid.axis(axis).lo, grid.spacing(axis), nodes)
    }

    pub fn total(&self) -> f64 {
        *self.cumulative.last().unwrap_or(&0.0)
    }

    /// Mass inside cell `j` up to fraction `s`.
    fn partial(&self, j: usize, s: f64) -> f64 {
        let n = self.nodes.len();
        let p0 = self.nodes[j];
        let p1 = self.nodes[(j + 1) % n];
        self.h * (p0 * s + 0.5 * (p1 - p0) * s * s)
    }

    /// Normalized CDF at `x`, measured from `lo` along one period.
    pub fn cdf(&self, x: f64) -> f64 {
        let n = self.nodes.len();
        let s = ((x - self.lo) / self.h).clamp(0.0, n as f64);
        let j = (s.floor() as usize).min(n - 1);
        let before = if j == 0 { 0.0 } else { self.cumulative[j - 1] };
        ((before + self.partial(j, s - j as f64)) / self.total()).clamp(0.0, 1.0)
    }

    /// Inverse CDF at `u ∈ [0, 1)`; returns a point in `[lo, lo + n h)`.
    pub fn quantile(&self, u: f64) -> f64 {
        let n = self.nodes.len();
        let target = u * self.total();
        let j = self.cumulative.partition_point(|c| *c <= target).min(n - 1);
        let before = if j == 0 { 0.0 } else { self.cumulative[j - 1] };
        let r = ((target - before) / self.h).max(0.0);
        let p0 = self.nodes[j];
        let p1 = self.nodes[(j + 1) % n];
        let a = 0.5 * (p1 - p0);
        // solve a s² + p0 s = r in the stable form
        let disc = (p0 * p0 + 4.0 * a * r).max(0.0);
        let denom = p0 + disc.sqrt();
        let s = if denom > 0.0 { 2.0 * r / denom } else { 0.0 };
        self.lo + (j as f64 + s.clamp(0.0, 1.0)) * self.h
    }
}

/// Draws from the piecewise-multilinear interpolant of a density by inverse
/// CDF along axis 0, then each further axis conditioned on the earlier ones.
#[derive(Debug, Clone)]
pub struct EquilibriumSampler {
    grid: GridSpec,
    /// `tails[a]`: density summed over axes > a, shape `(n_0, …, n_a)`.
    tails: Vec<Vec<f64>>,
    first: PiecewiseLinear,
}

impl EquilibriumSampler {
    pub fn new(d: &DensityField) -> Result<Self> {
        let grid = d.grid().clone();
        let dims = grid.dims();
        let mut tails = vec![Vec::new(); dims];
        tails[dims - 1] = d.values().to_vec();
        for a in (0..dims - 1).rev() {
            let n_next = grid.axis(a + 1).n;
            let h_next = grid.spacing(a + 1);
            tails[a] = tails[a + 1]
                .chunks(n_next)
                .map(|c| c.iter().sum::<f64>() * h_next)
                .collect();
        }
        let first = PiecewiseLinear::for_axis(&grid, 0, tails[0].clone())
            .map_err(|_| Error::DegenerateState("zero-mass density".into()))?;
        Ok(Self { grid, tails, first })
    }

    /// Maps `dims` uniforms in `[0, 1)` to a configuration point.
    pub fn sample_with(&self, u: &[f64]) -> Result<Vec<f64>> {
        let dims = self.grid.dims();
        let mut q = Vec::with_capacity(dims);
        let mut cells: Vec<(usize, f64)> = Vec::with_capacity(dims);
        for a in 0..dims {
            let x = if a == 0 {
                self.first.quantile(u[0])
            } else {
                let n = self.grid.axis(a).n;
                let mut profile = vec![0.0; n];
                for corner in 0..(1usize << a) {
                    let mut w = 1.0;
                    let mut prefix = 0usize;
                    for (b, &(i, t)) in cells.iter().enumerate() {
                        let upper = (corner >> b) & 1 == 1;
                        let nb = self.grid.axis(b).n;
                        let idx = if upper { (i + 1) % nb } else { i };
                        w *= if upper { t } else { 1.0 - t };
                        prefix = prefix * nb + idx;
                    }
                    if w == 0.0 {
                        continue;
                    }
                    let row = &self.tails[a][prefix * n..(prefix + 1) * n];
                    for (p, v) in profile.iter_mut().zip(row) {
                        *p += w * v;
                    }
                }
                PiecewiseLinear::for_axis(&self.grid, a, profile)?.quantile(u[a])
            };
            let ax = self.grid.axis(a);
            let s = (x - ax.lo) / ax.spacing();
            let i = (s.floor() as usize).min(ax.n - 1);
            cells.push((i, (s - i as f64).clamp(0.0, 1.0)));
            q.push(self.grid.wrap(a, x));
        }
        Ok(q)
    }

    /// Sample `index` of the stream family seeded by `seed`.
    pub fn sample(&self, seed: u64, index: u64) -> Result<Vec<f64>> {
        let mut rng = stream_rng(seed, index);
        let u: Vec<f64> = (0..self.grid.dims()).map(|_| rng.random::<f64>()).collect();
        self.sample_with(&u)
    }
}

/// `n` i.i.d. draws from `|ψ|²` (as the piecewise-multilinear interpolant of
/// `d`), deterministic in `seed`.
pub fn sample_equilibrium(d: &DensityField, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(config_err("n", "ensemble size must be ≥ 1"));
    }
    let sampler = EquilibriumSampler::new(d)?;
    (0..n as u64)
        .into_par_iter()
        .map(|i| sampler.sample(seed, i))
        .collect()
}

/// One-sample Kolmogorov–Smirnov distance between `samples` and `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0, |acc: f64, (i, &x)| {
        let f = cdf(x);
        let above = (i as f64 + 1.0) / n - f;
        let below = f - i as f64 / n;
        acc.max(above).max(below)
    })
}

/// Time-indexed guidance velocity.
pub trait VelocityProvider: Sync {
    fn grid(&self) -> &GridSpec;

    /// Writes `v(t, q)` into `out`; returns whether a node was nearby.
    fn velocity(&self, t: f64, q: &[f64], out: &mut [f64]) -> Result<bool>;

    fn regularized_points(&self) -> usize;
}

/// Velocity of a timeless wave function.
#[derive(Debug, Clone)]
pub struct StaticVelocity(pub VelocityField);

impl VelocityProvider for StaticVelocity {
    fn grid(&self) -> &GridSpec {
        self.0.grid()
    }

    fn velocity(&self, _t: f64, q: &[f64], out: &mut [f64]) -> Result<bool> {
        self.0.interpolate_into(q, out)
    }

    fn regularized_points(&self) -> usize {
        self.0.regularized_count()
    }
}

/// Velocity fields at snapshot times, linear in `t` between them and held
/// constant outside.
#[derive(Debug, Clone)]
pub struct SnapshotVelocity {
    times: Vec<f64>,
    fields: Vec<VelocityField>,
}

impl SnapshotVelocity {
    pub fn new(fields: Vec<VelocityField>) -> Result<Self> {
        if fields.is_empty() {
            return Err(config_err(
                "snapshots",
                "at least one velocity field is required",
            ));
        }
        let times: Vec<f64> = fields.iter().map(VelocityField::time).collect();
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::TimeMismatch("snapshot times must increase".into()));
        }
        Ok(Self { times, fields })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn fields(&self) -> &[VelocityField] {
        &self.fields
    }
}

impl VelocityProvider for SnapshotVelocity {
    fn grid(&self) -> &GridSpec {
        self.fields[0].grid()
    }

    fn velocity(&self, t: f64, q: &[f64], out: &mut [f64]) -> Result<bool> {
        let last = self.times.len() - 1;
        if last == 0 || t <= self.times[0] {
            return self.fields[0].interpolate_into(q, out);
        }
        if t >= self.times[last] {
            return self.fields[last].interpolate_into(q, out);
        }
        let k = self.times.partition_point(|s| *s <= t) - 1;
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let w = (t - t0) / (t1 - t0);
        let mut other = [0.0; 3];
        let other = &mut other[..out.len()];
        let a = self.fields[k].interpolate_into(q, out)?;
        let b = self.fields[k + 1].interpolate_into(q, other)?;
        for (o, v) in out.iter_mut().zip(other.iter()) {
            *o = (1.0 - w) * *o + w * v;
        }
        Ok(a || b)
    }

    fn regularized_points(&self) -> usize {
        self.fields
            .iter()
            .map(VelocityField::regularized_count)
            .sum()
    }
}

/// Wave-function snapshots every `every` propagator steps up to `t_final`,
/// and wherever the potential switches frames, with their velocity fields.
#[derive(Debug, Clone)]
pub struct FieldHistory {
    pub fields: Vec<WaveField>,
    pub velocity: SnapshotVelocity,
}

impl FieldHistory {
    pub fn evolve(
        plan: &PropagatorPlan,
        initial: &WaveField,
        t_final: f64,
        every: usize,
    ) -> Result<Self> {
        Self::evolve_keeping(plan, initial, t_final, every, &[])
    }

    /// As [`evolve`](Self::evolve), also storing the steps nearest `keep`.
    pub fn evolve_keeping(
        plan: &PropagatorPlan,
        initial: &WaveField,
        t_final: f64,
        every: usize,
        keep: &[f64],
    ) -> Result<Self> {
        if every == 0 {
            return Err(config_err("snapshot_every", "must be ≥ 1"));
        }
        let total = plan.steps_for(t_final);
        let kept: Vec<usize> = keep.iter().map(|&t| plan.steps_for(t)).collect();
        let mut fields = vec![initial.clone()];
        let mut work = initial.clone();
        let potential = plan.potential();
        let h = plan.dt();
        for s in 1..=total {
            let before = potential.frame_index(work.time() + 0.5 * h);
            plan.step_in_place(&mut work)?;
            let switched = potential.frame_index(work.time() + 0.5 * h) != before;
            if s % every == 0 || s == total || switched || kept.contains(&s) {
                fields.push(work.clone());
            }
        }
        let spectral = SpectralPlan::new(initial.grid());
        let velocities = fields
            .iter()
            .map(|f| velocity_field_with(&spectral, f))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            velocity: SnapshotVelocity::new(velocities)?,
            fields,
        })
    }

    /// The stored field at time `t`, if one exists.
    pub fn field_at(&self, t: f64) -> Option<&WaveField> {
        self.fields
            .iter()
            .find(|f| (f.time() - t).abs() <= 1e-9 * t.abs().max(1.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Positions wrapped into the periodic box.
    pub positions: Vec<Vec<f64>>,
    pub unwrapped: Vec<Vec<f64>>,
    /// Steps whose velocity stencil touched a regularized node.
    pub node_encounters: usize,
    pub clamp_events: usize,
    pub halved_steps: usize,
    /// Largest difference between a full step and two half steps.
    pub max_error_estimate: f64,
}

impl Trajectory {
    fn new() -> Self {
        Self {
            times: Vec::new(),
            positions: Vec::new(),
            unwrapped: Vec::new(),
            node_encounters: 0,
            clamp_events: 0,
            halved_steps: 0,
            max_error_estimate: 0.0,
        }
    }

    pub fn final_position(&self) -> Option<&[f64]> {
        self.positions.last().map(Vec::as_slice)
    }

    pub fn index_of_time(&self, t: f64) -> Option<usize> {
        self.times
            .iter()
            .position(|s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorSettings {
    pub dt: f64,
    pub t_start: f64,
    pub t_final: f64,
    /// Times to record (rounded to the step lattice); empty records every step.
    pub record_times: Vec<f64>,
}

impl IntegratorSettings {
    pub fn new(dt: f64, t_final: f64) -> Self {
        Self {
            dt,
            t_start: 0.0,
            t_final,
            record_times: Vec::new(),
        }
    }

    pub fn recording(mut self, times: Vec<f64>) -> Self {
        self.record_times = times;
        self
    }

    fn steps(&self) -> usize {
        ((self.t_final - self.t_start) / self.dt).round() as usize
    }
}

struct Rk4<'a, P: VelocityProvider + ?Sized> {
    provider: &'a P,
    v_max: f64,
    clamps: usize,
}

impl<P: VelocityProvider + ?Sized> Rk4<'_, P> {
    fn eval(&mut self, t: f64, q: &[f64], out: &mut [f64]) -> Result<bool> {
        let node = self.provider.velocity(t, q, out)?;
        let speed = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if speed > self.v_max {
            let s = self.v_max / speed;
            out.iter_mut().for_each(|v| *v *= s);
            self.clamps += 1;
            debug!("speed {speed:.3e} clamped to {:.3e} at t = {t}", self.v_max);
        }
        Ok(node)
    }

    fn step(&mut self, t: f64, q: &[f64], h: f64, out: &mut [f64]) -> Result<bool> {
        let d = q.len();
        let mut k = [[0.0; 3]; 4];
        let mut tmp = [0.0; 3];
        let mut node = self.eval(t, q, &mut k[0][..d])?;
        for i in 0..d {
            tmp[i] = q[i] + 0.5 * h * k[0][i];
        }
        node |= self.eval(t + 0.5 * h, &tmp[..d], &mut k[1][..d])?;
        for i in 0..d {
            tmp[i] = q[i] + 0.5 * h * k[1][i];
        }
        node |= self.eval(t + 0.5 * h, &tmp[..d], &mut k[2][..d])?;
        for i in 0..d {
            tmp[i] = q[i] + h * k[2][i];
        }
        node |= self.eval(t + h, &tmp[..d], &mut k[3][..d])?;
        for i in 0..d {
            out[i] = q[i] + h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
        }
        Ok(node)
    }
}

/// Classical RK4 on `dQ/dt = v(t, Q)`. Steps whose velocity stencil touched
/// a regularized node are redone as two half steps.
pub fn integrate_trajectory<P: VelocityProvider + ?Sized>(
    start: &[f64],
    provider: &P,
    settings: &IntegratorSettings,
) -> Result<Trajectory> {
    let grid = provider.grid();
    if !(settings.dt > 0.0 && settings.dt.is_finite()) {
        return Err(config_err(
            "dt_traj",
            format!("must be positive, got {}", settings.dt),
        ));
    }
    if !grid.contains(start) {
        return Err(Error::OutsideDomain(start.to_vec()));
    }
    let d = grid.dims();
    let h = settings.dt;
    let steps = settings.steps();
    let mut record = vec![settings.record_times.is_empty(); steps + 1];
    for &t in &settings.record_times {
        let s = ((t - settings.t_start) / h).round();
        if s < 0.0 || s as usize > steps {
            return Err(Error::TimeMismatch(format!(
                "record time {t} outside the run"
            )));
        }
        record[s as usize] = true;
    }
    let mut rk = Rk4 {
        provider,
        v_max: grid.diameter() / (10.0 * h),
        clamps: 0,
    };
    let mut traj = Trajectory::new();
    let mut q = start.to_vec();
    let mut full = vec![0.0; d];
    let mut half = vec![0.0; d];
    let mut halves = vec![0.0; d];
    let push = |traj: &mut Trajectory, t: f64, q: &[f64]| {
        let mut w = q.to_vec();
        grid.wrap_point(&mut w);
        traj.times.push(t);
        traj.positions.push(w);
        traj.unwrapped.push(q.to_vec());
    };
    if record[0] {
        push(&mut traj, settings.t_start, &q);
    }
    for s in 0..steps {
        let t = settings.t_start + s as f64 * h;
        let node = rk.step(t, &q, h, &mut full)?;
        if node {
            traj.node_encounters += 1;
            traj.halved_steps += 1;
            rk.step(t, &q, 0.5 * h, &mut half)?;
            rk.step(t + 0.5 * h, &half, 0.5 * h, &mut halves)?;
            let err = full
                .iter()
                .zip(&halves)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            traj.max_error_estimate = traj.max_error_estimate.max(err);
            full.copy_from_slice(&halves);
        }
        if full.iter().any(|x| !x.is_finite()) {
            traj.clamp_events = rk.clamps;
            return Err(Error::IntegrationFailure {
                time: t,
                reason: "non-finite position".into(),
                partial: Box::new(traj),
            });
        }
        q.copy_from_slice(&full);
        if record[s + 1] {
            push(&mut traj, settings.t_start + (s + 1) as f64 * h, &q);
        }
    }
    traj.clamp_events = rk.clamps;
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryEnsemble {
    pub trajectories: Vec<Trajectory>,
    pub seed: u64,
    pub scenario: String,
}

impl TrajectoryEnsemble {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn record_times(&self) -> &[f64] {
        self.trajectories
            .first()
            .map_or(&[], |t| t.times.as_slice())
    }

    pub fn clamp_events(&self) -> usize {
        self.trajectories.iter().map(|t| t.clamp_events).sum()
    }

    pub fn node_encounters(&self) -> usize {
        self.trajectories.iter().map(|t| t.node_encounters).sum()
    }

    /// Wrapped coordinate `axis` of every trajectory at record index `k`.
    pub fn coordinates_at(&self, k: usize, axis: usize) -> Vec<f64> {
        self.trajectories
            .iter()
            .map(|t| t.positions[k][axis])
            .collect()
    }

    /// Number of record steps at which 1D trajectories, ordered by their
    /// starting point, are out of order.
    pub fn ordering_violations(&self, axis: usize) -> usize {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            self.trajectories[a].unwrapped[0][axis]
                .total_cmp(&self.trajectories[b].unwrapped[0][axis])
        });
        let records = self.record_times().len();
        (0..records)
            .map(|k| {
                order
                    .windows(2)
                    .filter(|w| {
                        self.trajectories[w[0]].unwrapped[k][axis]
                            > self.trajectories[w[1]].unwrapped[k][axis]
                    })
                    .count()
            })
            .sum()
    }

    /// Trajectories whose `axis` coordinate ends on the other side of
    /// `center` from where it started, or touches it.
    pub fn axis_crossings(&self, axis: usize, center: f64) -> usize {
        self.trajectories
            .iter()
            .filter(|t| {
                let side = (t.unwrapped[0][axis] - center).signum();
                t.unwrapped
                    .iter()
                    .any(|q| (q[axis] - center).signum() != side)
            })
            .count()
    }

    /// Counts trajectories whose crossing of the plane `long = plane`
    /// (first record with `long ≥ plane`, linearly interpolated) lies inside
    /// exactly one of the `slits` along `transverse`.
    pub fn slit_passages(
        &self,
        long: usize,
        plane: f64,
        transverse: usize,
        slits: &[(f64, f64)],
    ) -> SlitPassage {
        let mut report = SlitPassage::default();
        for t in &self.trajectories {
            let hit = t
                .unwrapped
                .iter()
                .enumerate()
                .find(|(_, q)| q[long] >= plane);
            let Some((k, q)) = hit else {
                report.never_crossed += 1;
                continue;
            };
            let y = if k == 0 || q[long] == plane {
                q[transverse]
            } else {
                let p = &t.unwrapped[k - 1];
                let w = (plane - p[long]) / (q[long] - p[long]);
                p[transverse] + w * (q[transverse] - p[transverse])
            };
            let inside = slits.iter().filter(|(a, b)| y >= *a && y <= *b).count();
            if inside == 1 {
                report.single_slit += 1;
            } else {
                report.outside += 1;
            }
        }
        report
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SlitPassage {
    pub single_slit: usize,
    pub outside: usize,
    pub never_crossed: usize,
}

/// How initial configurations are drawn.
#[derive(Debug, Clone, PartialEq)]
pub enum InitRule {
    /// `|ψ₀|²`.
    Equilibrium,
    /// Uniform over the union of `slits` along `transverse`, with the
    /// longitudinal coordinate at `plane`.
    UniformInSlits {
        long: usize,
        plane: f64,
        transverse: usize,
        slits: Vec<(f64, f64)>,
    },
    /// Fixed starting points, cycled if fewer than `n`.
    Points(Vec<Vec<f64>>),
}

impl InitRule {
    pub fn draw(&self, initial: &WaveField, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        if n == 0 {
            return Err(config_err("n", "ensemble size must be ≥ 1"));
        }
        match self {
            InitRule::Equilibrium => sample_equilibrium(&initial.density(), n, seed),
            InitRule::UniformInSlits {
                long,
                plane,
                transverse,
                slits,
            } => {
                let width: f64 = slits.iter().map(|(a, b)| b - a).sum();
                if slits.is_empty() || width.is_nan() || width <= 0.0 {
                    return Err(config_err(
                        "slits",
                        "need at least one slit of positive width",
                    ));
                }
                let grid = initial.grid();
                Ok((0..n as u64)
                    .map(|i| {
                        let mut u = stream_rng(seed, i).random::<f64>() * width;
                        let mut y = slits[slits.len() - 1].1;
                        for (a, b) in slits {
                            if u < b - a {
                                y = a + u;
                                break;
                            }
                            u -= b - a;
                        }
                        let mut q: Vec<f64> = (0..grid.dims())
                            .map(|a| {
                                let ax = grid.axis(a);
                                0.5 * (ax.lo + ax.hi)
                            })
                            .collect();
                        q[*long] = *plane;
                        q[*transverse] = y;
                        q
                    })
                    .collect())
            }
            InitRule::Points(points) => {
                if points.is_empty() {
                    return Err(config_err("points", "no starting points"));
                }
                Ok((0..n).map(|i| points[i % points.len()].clone()).collect())
            }
        }
    }
}

/// Integrates one trajectory per starting point in parallel.
pub fn integrate_ensemble<P: VelocityProvider + ?Sized>(
    starts: &[Vec<f64>],
    provider: &P,
    settings: &IntegratorSettings,
) -> Result<Vec<Trajectory>> {
    starts
        .par_iter()
        .map(|q| integrate_trajectory(q, provider, settings))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivarianceEntry {
    pub time: f64,
    /// KS distance per axis.
    pub ks: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivarianceReport {
    pub entries: Vec<EquivarianceEntry>,
    pub samples: usize,
    pub threshold: f64,
    pub passed: bool,
}

impl EquivarianceReport {
    pub fn max_ks(&self) -> f64 {
        self.entries
            .iter()
            .flat_map(|e| e.ks.iter().copied())
            .fold(0.0, f64::max)
    }
}

/// Per-axis KS distance between the ensemble's empirical marginals and the
/// `|ψ_t|²` marginals at each snapshot time.
pub fn equivariance_report(
    ensemble: &TrajectoryEnsemble,
    snapshots: &[WaveField],
) -> Result<EquivarianceReport> {
    let n = ensemble.len();
    if n == 0 {
        return Err(config_err("n", "empty ensemble"));
    }
    let threshold = ks_threshold(n);
    let probe = &ensemble.trajectories[0];
    let mut entries = Vec::with_capacity(snapshots.len());
    for snap in snapshots {
        let k = probe.index_of_time(snap.time()).ok_or_else(|| {
            Error::TimeMismatch(format!(
                "snapshot at t = {} is not a recorded trajectory time",
                snap.time()
            ))
        })?;
        let rho = snap.density();
        let grid = snap.grid();
        let ks = (0..grid.dims())
            .map(|a| {
                let cdf = PiecewiseLinear::for_axis(grid, a, rho.marginal(a)?)?;
                Ok(ks_statistic(&ensemble.coordinates_at(k, a), |x| cdf.cdf(x)))
            })
            .collect::<Result<Vec<f64>>>()?;
        entries.push(EquivarianceEntry {
            time: snap.time(),
            ks,
        });
    }
    let passed = entries.iter().all(|e| e.ks.iter().all(|d| *d < threshold));
    Ok(EquivarianceReport {
        entries,
        samples: n,
        threshold,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guidance::velocity_field;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    #[test]
    fn piecewise_linear_round_trip() {
        let pl = PiecewiseLinear::new(-1.0, 0.5, vec![0.0, 1.0, 3.0, 2.0]).unwrap();
        assert_abs_diff_eq!(pl.total(), 0.5 * (0.5 + 2.0 + 2.5 + 1.0), epsilon = 1e-15);
        for u in [0.0, 0.1, 0.33, 0.5, 0.77, 0.999] {
            assert_abs_diff_eq!(pl.cdf(pl.quantile(u)), u, epsilon = 1e-12);
        }
        assert!(PiecewiseLinear::new(0.0, 1.0, vec![0.0; 8]).is_err());
    }

    #[test]
    fn uniform_density_samples_pass_ks() {
        let g = GridSpec::natural(&[(0.0, 1.0, 32), (-2.0, 2.0, 16)]).unwrap();
        let d = WaveField::from_fn(&g, |_| Complex64::new(1.0, 0.0))
            .unwrap()
            .density();
        let n = 100_000;
        let pts = sample_equilibrium(&d, n, 11).unwrap();
        let xs: Vec<f64> = pts.iter().map(|p| p[0]).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p[1]).collect();
        assert!(ks_statistic(&xs, |x| x) < ks_threshold(n));
        assert!(ks_statistic(&ys, |y| (y + 2.0) / 4.0) < ks_threshold(n));
    }

    #[test]
    fn hot_cell_samples_stay_next_to_it() {
        let g = GridSpec::natural(&[(0.0, 1.0, 16), (0.0, 1.0, 16)]).unwrap();
        let mut v = vec![0.0; g.len()];
        let hot = 5 * 16 + 9;
        v[hot] = 1.0;
        let d = DensityField::new(&g, v).unwrap();
        let q0 = g.point(hot);
        for p in sample_equilibrium(&d, 2000, 3).unwrap() {
            assert!((p[0] - q0[0]).abs() <= g.spacing(0));
            assert!((p[1] - q0[1]).abs() <= g.spacing(1));
        }
    }

    #[test]
    fn sampling_is_deterministic_and_errors() {
        let g = GridSpec::natural(&[(0.0, 1.0, 16)]).unwrap();
        let d = WaveField::from_fn(&g, |q| Complex64::new(1.0 + q[0], 0.0))
            .unwrap()
            .density();
        assert_eq!(
            sample_equilibrium(&d, 50, 9).unwrap(),
            sample_equilibrium(&d, 50, 9).unwrap()
        );
        assert_ne!(
            sample_equilibrium(&d, 50, 9).unwrap(),
            sample_equilibrium(&d, 50, 10).unwrap()
        );
        assert!(sample_equilibrium(&d, 0, 9).is_err());
        let zero = DensityField::new(&g, vec![0.0; 16]).unwrap();
        assert!(sample_equilibrium(&zero, 5, 9).is_err());
    }

    #[test]
    fn ks_statistic_small_cases() {
        // one sample at the median: D = 1/2
        assert_abs_diff_eq!(ks_statistic(&[0.5], |x| x), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(ks_statistic(&[0.25, 0.75], |x| x), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(ks_statistic(&[0.9, 0.95], |x| x), 0.9, epsilon = 1e-15);
    }

    #[test]
    fn plane_wave_trajectory() {
        let g = GridSpec::natural(&[(0.0, 2.0 * PI, 64)]).unwrap();
        let f = WaveField::from_fn(&g, |q| Complex64::new(0.0, 2.0 * q[0]).exp()).unwrap();
        let provider = StaticVelocity(velocity_field(&f).unwrap());
        let traj =
            integrate_trajectory(&[0.0], &provider, &IntegratorSettings::new(1e-3, 1.0)).unwrap();
        assert_abs_diff_eq!(traj.final_position().unwrap()[0], 2.0, epsilon = 1e-9);
        assert_eq!(traj.times.len(), 1001);
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn real_field_trajectory_is_frozen() {
        let g = GridSpec::natural(&[(0.0, 2.0 * PI, 64)]).unwrap();
        let f = WaveField::from_fn(&g, |q| Complex64::new(2.0 + q[0].cos(), 0.0)).unwrap();
        let provider = StaticVelocity(velocity_field(&f).unwrap());
        let traj =
            integrate_trajectory(&[1.3], &provider, &IntegratorSettings::new(1e-2, 3.0)).unwrap();
        assert_abs_diff_eq!(traj.final_position().unwrap()[0], 1.3, epsilon = 1e-12);
    }

    #[test]
    fn recording_and_wrapping() {
        let g = GridSpec::natural(&[(0.0, 2.0 * PI, 64)]).unwrap();
        let f = WaveField::from_fn(&g, |q| Complex64::new(0.0, 3.0 * q[0]).exp()).unwrap();
        let provider = StaticVelocity(velocity_field(&f).unwrap());
        let settings = IntegratorSettings::new(1e-2, 4.0).recording(vec![0.0, 1.0, 4.0]);
        let traj = integrate_trajectory(&[1.0], &provider, &settings).unwrap();
        assert_eq!(traj.times.len(), 3);
        assert_abs_diff_eq!(traj.unwrapped[2][0], 13.0, epsilon = 1e-9);
        assert_abs_diff_eq!(traj.positions[2][0], 13.0 - 4.0 * PI, epsilon = 1e-9);
        assert!(integrate_trajectory(&[f64::NAN], &provider, &settings).is_err());
        let bad = IntegratorSettings::new(1e-2, 1.0).recording(vec![2.0]);
        assert!(matches!(
            integrate_trajectory(&[1.0], &provider, &bad),
            Err(Error::TimeMismatch(_))
        ));
    }

    #[test]
    fn speed_cap_clamps_and_counts() {
        let g = GridSpec::natural(&[(0.0, 2.0 * PI, 64)]).unwrap();
        let f = WaveField::from_fn(&g, |q| Complex64::new(0.0, 30.0 * q[0]).exp()).unwrap();
        let provider = StaticVelocity(velocity_field(&f).unwrap());
        // v_max = 2π / (10 · 0.1) ≈ 6.28 < 30
        let traj =
            integrate_trajectory(&[0.0], &provider, &IntegratorSettings::new(0.1, 1.0)).unwrap();
        assert_eq!(traj.clamp_events, 40);
        assert_abs_diff_eq!(
            traj.unwrapped[10][0],
            2.0 * PI / 10.0 * 10.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn snapshot_velocity_interpolates_in_time() {
        let g = GridSpec::natural(&[(0.0, 2.0 * PI, 32)]).unwrap();
        let a = WaveField::from_fn(&g, |q| Complex64::new(0.0, q[0]).exp()).unwrap();
        let b = WaveField::from_fn(&g, |q| Complex64::new(0.0, 3.0 * q[0]).exp())
            .unwrap()
            .with_time(1.0);
        let p = SnapshotVelocity::new(vec![
            velocity_field(&a).unwrap(),
            velocity_field(&b).unwrap(),
        ])
        .unwrap();
        let mut out = [0.0];
        p.velocity(0.25, &[0.7], &mut out).unwrap();
        assert_abs_diff_eq!(out[0], 1.5, epsilon = 1e-10);
        p.velocity(5.0, &[0.7], &mut out).unwrap();
        assert_abs_diff_eq!(out[0], 3.0, epsilon = 1e-10);
        assert!(SnapshotVelocity::new(vec![
            velocity_field(&b).unwrap(),
            velocity_field(&a).unwrap()
        ])
        .is_err());
    }

    #[test]
    fn slit_passage_and_axis_crossing_counts() {
        let mk = |pts: Vec<Vec<f64>>| Trajectory {
            times: (0..pts.len()).map(|i| i as f64).collect(),
            positions: pts.clone(),
            unwrapped: pts,
            node_encounters: 0,
            clamp_events: 0,
            halved_steps: 0,
            max_error_estimate: 0.0,
        };
        let e = TrajectoryEnsemble {
            trajectories: vec![
                mk(vec![vec![-1.0, 2.0], vec![1.0, 2.5]]),
                mk(vec![vec![-1.0, 1.0], vec![1.0, -1.0]]),
                mk(vec![vec![-1.0, 5.0], vec![-0.5, 5.0]]),
            ],
            seed: 0,
            scenario: "t".into(),
        };
        let slits = [(-3.0, -1.0), (1.0, 3.0)];
        let p = e.slit_passages(0, 0.0, 1, &slits);
        assert_eq!(p.single_slit, 1);
        assert_eq!(p.outside, 1);
        assert_eq!(p.never_crossed, 1);
        assert_eq!(e.axis_crossings(1, 0.0), 1);
    }
}
