//! Ready-made runs with their gates. Each runner returns every number the
//! command line reports, so callers only format and write.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::Serialize;

use crate::ensemble::{
    equivariance_report, integrate_ensemble, EquivarianceReport, FieldHistory, InitRule,
    IntegratorSettings, SlitPassage, StaticVelocity, Trajectory, TrajectoryEnsemble,
    VelocityProvider,
};
use crate::error::{config_err, Error, Result};
use crate::guidance::velocity_field;
use crate::measurement::{
    run_experiment_with_field, sample_result_distribution, verify_bilinearity,
    verify_spectral_measure, within_binomial, BilinearityReport, PointerModel, ProjectorFamily,
    ResultDistribution, SpectralComparison,
};
use crate::propagator::PropagatorPlan;
use crate::subsystem::{
    run_branching_universe, run_stationary_universe, universe_field, universe_grid,
    BranchingUniverse, EmergenceReport, StationaryUniverse,
};
use crate::wavefield::{gaussian, DensityField, GridSpec, Potential, WaveField};

/// Scenario identifiers shipped with the library, with one-line descriptions.
pub const BUILTIN: [(&str, &str); 6] = [
    (
        "two_slit",
        "Gaussian two-slit interference: trajectories, fringes, equivariance",
    ),
    (
        "stationary_universe",
        "Two-particle energy eigenstate whose x-slice evolves freely",
    ),
    (
        "branching_universe",
        "Disjoint environment packets carrying distinct x-states",
    ),
    (
        "pointer_measurement",
        "Impulsive pointer coupling read as a position POVM",
    ),
    (
        "free_gaussian",
        "Spreading 1D Gaussian packet with equilibrium ensemble",
    ),
    (
        "plane_wave",
        "1D plane wave: uniform density, constant velocity",
    ),
];

/// Gate names whose thresholds a run may override.
pub const TOLERANCE_KEYS: [&str; 11] = [
    "ks",
    "fringe_contrast",
    "eigen_residual",
    "max_projective_distance",
    "environment_error",
    "velocity_error",
    "position_error",
    "spectral_difference",
    "bilinearity_deviation",
    "normalization_error",
    "one_sigma_deviation",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Equilibrium,
    UniformInSlits,
}

/// Overrides shared by all scenarios; `None` keeps the scenario default.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ScenarioParams {
    pub seed: u64,
    pub axes: Option<Vec<(f64, f64, usize)>>,
    pub hbar: Option<f64>,
    pub masses: Option<Vec<f64>>,
    pub dt: Option<f64>,
    pub t_final: Option<f64>,
    pub snapshot_times: Option<Vec<f64>>,
    pub snapshot_every: Option<usize>,
    pub n: Option<usize>,
    pub dt_traj: Option<f64>,
    pub init: Option<InitKind>,
    pub x0: Option<f64>,
    pub y0: Option<f64>,
    pub alpha_sq: Option<f64>,
    pub tolerances: BTreeMap<String, f64>,
}

impl ScenarioParams {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Default::default()
        }
    }

    fn tolerance(&self, name: &str, default: f64) -> f64 {
        self.tolerances.get(name).copied().unwrap_or(default)
    }

    fn axes_or(&self, default: Vec<(f64, f64, usize)>) -> Result<Vec<(f64, f64, usize)>> {
        match &self.axes {
            Some(a) if a.len() != default.len() => Err(config_err(
                "grid.axes",
                format!("scenario needs {} axes, got {}", default.len(), a.len()),
            )),
            Some(a) => Ok(a.clone()),
            None => Ok(default),
        }
    }

    fn masses_or(&self, default: Vec<f64>) -> Vec<f64> {
        self.masses.clone().unwrap_or(default)
    }

    fn n_or(&self, default: usize) -> Result<usize> {
        match self.n.unwrap_or(default) {
            0 => Err(config_err("ensemble.n", "ensemble size must be ≥ 1")),
            n => Ok(n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Below,
    Above,
    AtMost,
}

/// One pass/fail gate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub relation: Relation,
    pub passed: bool,
}

impl Check {
    pub fn new(name: &str, value: f64, relation: Relation, threshold: f64) -> Self {
        let passed = match relation {
            Relation::Below => value < threshold,
            Relation::Above => value > threshold,
            Relation::AtMost => value <= threshold,
        };
        Self {
            name: name.to_string(),
            value,
            threshold,
            relation,
            passed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub quantity: String,
    pub label: String,
    pub value: f64,
}

impl ResultRow {
    fn new(quantity: &str, label: impl Into<String>, value: f64) -> Self {
        Self {
            quantity: quantity.to_string(),
            label: label.into(),
            value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Diagnostics {
    pub regularized_points: usize,
    pub node_encounters: usize,
    pub clamp_events: usize,
    pub halved_steps: usize,
    pub max_step_error_estimate: f64,
    pub boundary_ratio: Option<f64>,
}

impl Diagnostics {
    fn from_trajectories(trajs: &[Trajectory], regularized: usize) -> Self {
        Self {
            regularized_points: regularized,
            node_encounters: trajs.iter().map(|t| t.node_encounters).sum(),
            clamp_events: trajs.iter().map(|t| t.clamp_events).sum(),
            halved_steps: trajs.iter().map(|t| t.halved_steps).sum(),
            max_step_error_estimate: trajs
                .iter()
                .map(|t| t.max_error_estimate)
                .fold(0.0, f64::max),
            boundary_ratio: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoSlitSummary {
    pub init: InitKind,
    pub slits: Vec<(f64, f64)>,
    pub slit_plane: f64,
    pub screen_time: f64,
    pub fringe_contrast: Option<f64>,
    pub slit_passage: SlitPassage,
    pub axis_crossings: usize,
    pub upper_fraction: f64,
    pub equivariance: Option<EquivarianceReport>,
    /// Same ensemble tested against the initial density at every snapshot.
    pub frozen_density_ks: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FreeGaussianSummary {
    pub ordering_violations: usize,
    pub equivariance: EquivarianceReport,
    /// Largest gap between the trajectory started at `c₀ + σ₀` and `c(t) + σ(t)`.
    pub one_sigma_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlaneWaveSummary {
    pub max_position_error: f64,
    pub max_velocity_error: f64,
    pub equivariance: EquivarianceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationarySummary {
    pub emergence: EmergenceReport,
    pub max_velocity_error: f64,
    pub equivariance: Option<EquivarianceReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointerSummary {
    pub alpha_sq: f64,
    pub pushforward: ResultDistribution,
    pub spectral: SpectralComparison,
    pub bilinearity: Vec<BilinearityReport>,
    pub sampled: Option<ResultDistribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Details {
    TwoSlit(TwoSlitSummary),
    StationaryUniverse(StationarySummary),
    BranchingUniverse(EmergenceReport),
    PointerMeasurement(PointerSummary),
    FreeGaussian(FreeGaussianSummary),
    PlaneWave(PlaneWaveSummary),
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub scenario: String,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub details: Details,
    pub diagnostics: Diagnostics,
    pub ensemble: Option<TrajectoryEnsemble>,
    /// `(time, density)` pairs for export, in time order.
    pub densities: Vec<(f64, DensityField)>,
    pub results: Vec<ResultRow>,
}

impl ScenarioOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| {
                format!(
                    "{}: {} vs {:?} {}",
                    c.name, c.value, c.relation, c.threshold
                )
            })
            .collect()
    }
}

/// Runs a built-in scenario by id.
pub fn run_scenario(id: &str, params: &ScenarioParams) -> Result<ScenarioOutcome> {
    match id {
        "two_slit" => run_two_slit(params),
        "stationary_universe" => run_stationary(params),
        "branching_universe" => run_branching(params),
        "pointer_measurement" => run_pointer(params),
        "free_gaussian" => run_free_gaussian(params),
        "plane_wave" => run_plane_wave(params),
        other => Err(Error::UnknownScenario(other.to_string())),
    }
}

/// The trajectory ensemble of a built-in scenario.
pub fn run_ensemble(id: &str, params: &ScenarioParams) -> Result<TrajectoryEnsemble> {
    run_scenario(id, params)?
        .ensemble
        .ok_or_else(|| Error::UnknownScenario(format!("{id} has no trajectory ensemble")))
}

/// Peak of `profile` over its smallest interior local minimum, among minima
/// whose flanking maxima both exceed 5% of the peak. `None` without fringes.
pub fn fringe_contrast(profile: &[f64]) -> Option<f64> {
    let peak = profile.iter().copied().fold(0.0, f64::max);
    if peak.is_nan() || peak <= 0.0 || profile.len() < 3 {
        return None;
    }
    let n = profile.len();
    let is_max = |j: usize| profile[j] >= profile[j - 1] && profile[j] > profile[j + 1];
    let maxima: Vec<usize> = (1..n - 1).filter(|&j| is_max(j)).collect();
    let mut deepest: Option<f64> = None;
    for w in maxima.windows(2) {
        if profile[w[0]] < 0.05 * peak || profile[w[1]] < 0.05 * peak {
            continue;
        }
        let m = profile[w[0]..=w[1]]
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        deepest = Some(deepest.map_or(m, |d: f64| d.min(m)));
    }
    deepest.map(|m| if m > 0.0 { peak / m } else { f64::INFINITY })
}

fn snapshot_history(
    params: &ScenarioParams,
    initial: &WaveField,
    potential: Potential,
    dt: f64,
    t_final: f64,
    every: usize,
    keep: &[f64],
) -> Result<FieldHistory> {
    let plan = PropagatorPlan::new(params.dt.unwrap_or(dt), potential)?;
    let every = params.snapshot_every.unwrap_or(every);
    if every > 10 {
        return Err(config_err(
            "propagator.snapshot_every",
            "velocity snapshots must be at most 10 steps apart",
        ));
    }
    FieldHistory::evolve_keeping(&plan, initial, t_final, every, keep)
}

/// Snapshot fields at `times`, each of which must be stored in `history`.
fn fields_at<'a>(history: &'a FieldHistory, times: &[f64]) -> Result<Vec<&'a WaveField>> {
    times
        .iter()
        .map(|&t| {
            history
                .field_at(t)
                .ok_or_else(|| Error::TimeMismatch(format!("no stored snapshot at t = {t}")))
        })
        .collect()
}

fn ensemble_of(
    scenario: &str,
    seed: u64,
    starts: &[Vec<f64>],
    provider: &(impl VelocityProvider + ?Sized),
    settings: &IntegratorSettings,
) -> Result<TrajectoryEnsemble> {
    Ok(TrajectoryEnsemble {
        trajectories: integrate_ensemble(starts, provider, settings)?,
        seed,
        scenario: scenario.to_string(),
    })
}

fn equivariance_at(
    ensemble: &TrajectoryEnsemble,
    fields: &[&WaveField],
) -> Result<EquivarianceReport> {
    let owned: Vec<WaveField> = fields.iter().map(|f| (*f).clone()).collect();
    equivariance_report(ensemble, &owned)
}

fn ks_check(params: &ScenarioParams, report: &EquivarianceReport) -> Check {
    let threshold = params.tolerance("ks", report.threshold);
    Check::new("ks_max", report.max_ks(), Relation::Below, threshold)
}

/// Two Gaussian slits at `slit_centers` (density std `slit_width`) times a
/// longitudinal packet moving along `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoSlit {
    pub x_axis: (f64, f64, usize),
    pub y_axis: (f64, f64, usize),
    pub hbar: f64,
    pub masses: Vec<f64>,
    pub x_center: f64,
    pub x_width: f64,
    pub x_velocity: f64,
    pub slit_centers: Vec<f64>,
    pub slit_width: f64,
    pub dt: f64,
    pub t_final: f64,
    pub snapshot_every: usize,
    pub dt_traj: f64,
}

impl Default for TwoSlit {
    fn default() -> Self {
        Self {
            x_axis: (-24.0, 24.0, 256),
            y_axis: (-32.0, 32.0, 256),
            hbar: 1.0,
            masses: vec![1.0],
            x_center: -6.0,
            x_width: 1.5,
            x_velocity: 2.0,
            slit_centers: vec![-2.0, 2.0],
            slit_width: 0.7,
            dt: 0.01,
            t_final: 6.0,
            snapshot_every: 10,
            dt_traj: 0.01,
        }
    }
}

impl TwoSlit {
    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(&[self.x_axis, self.y_axis], self.hbar, &self.masses)
    }

    pub fn initial(&self) -> Result<WaveField> {
        let grid = self.grid()?;
        let kx = grid.mass(0) * self.x_velocity / grid.hbar();
        WaveField::from_fn(&grid, |q| {
            let across: Complex64 = self
                .slit_centers
                .iter()
                .map(|&c| gaussian(q[1], c, self.slit_width, 0.0))
                .sum();
            gaussian(q[0], self.x_center, self.x_width, kx) * across
        })
    }

    /// Slit apertures `c ± 2σ`.
    pub fn slits(&self) -> Vec<(f64, f64)> {
        self.slit_centers
            .iter()
            .map(|&c| (c - 2.0 * self.slit_width, c + 2.0 * self.slit_width))
            .collect()
    }

    fn from_params(params: &ScenarioParams) -> Result<Self> {
        let mut cfg = Self::default();
        let axes = params.axes_or(vec![cfg.x_axis, cfg.y_axis])?;
        cfg.x_axis = axes[0];
        cfg.y_axis = axes[1];
        cfg.hbar = params.hbar.unwrap_or(cfg.hbar);
        cfg.masses = params.masses_or(cfg.masses);
        cfg.dt = params.dt.unwrap_or(cfg.dt);
        cfg.t_final = params.t_final.unwrap_or(cfg.t_final);
        cfg.snapshot_every = params.snapshot_every.unwrap_or(cfg.snapshot_every);
        cfg.dt_traj = params.dt_traj.unwrap_or(cfg.dt_traj);
        Ok(cfg)
    }
}

fn default_snapshots(t_final: f64, count: usize) -> Vec<f64> {
    (0..=count)
        .map(|k| t_final * k as f64 / count as f64)
        .collect()
}

fn run_two_slit(params: &ScenarioParams) -> Result<ScenarioOutcome> {
    let cfg = TwoSlit::from_params(params)?;
    let init = params.init.unwrap_or(InitKind::Equilibrium);
    let n = params.n_or(match init {
        InitKind::Equilibrium => 10_000,
        InitKind::UniformInSlits => 200,
    })?;
    let initial = cfg.initial()?;
    let grid = initial.grid().clone();
    let snapshot_times = params
        .snapshot_times
        .clone()
        .unwrap_or_else(|| default_snapshots(cfg.t_final, 4));
    let history = snapshot_history(
        params,
        &initial,
        Potential::zero(&grid),
        cfg.dt,
        cfg.t_final,
        cfg.snapshot_every,
        &snapshot_times,
    )?;
    let record: Vec<f64> = history.fields.iter().map(WaveField::time).collect();
    let snapshots = fields_at(&history, &snapshot_times)?;
    let slits = cfg.slits();
    let rule = match init {
        InitKind::Equilibrium => InitRule::Equilibrium,
        InitKind::UniformInSlits => InitRule::UniformInSlits {
            long: 0,
            plane: cfg.x_center,
            transverse: 1,
            slits: slits.clone(),
        },
    };
    let starts = rule.draw(&initial, n, params.seed)?;
    let settings = IntegratorSettings::new(cfg.dt_traj, cfg.t_final).recording(record);
    let ensemble = ensemble_of(
        "two_slit",
        params.seed,
        &starts,
        &history.velocity,
        &settings,
    )?;

    let screen = history.fields.last().unwrap_or(&initial);
    let screen_density = screen.density();
    let profile = screen_density.marginal(1)?;
    let contrast = fringe_contrast(&profile);
    let axis = 0.5 * (cfg.slit_centers[0] + cfg.slit_centers[cfg.slit_centers.len() - 1]);
    let crossings = ensemble.axis_crossings(1, axis);
    let passage = ensemble.slit_passages(0, cfg.x_center, 1, &slits);
    let upper = starts.iter().filter(|q| q[1] > axis).count() as f64 / n as f64;

    let mut checks = vec![
        Check::new(
            "fringe_contrast",
            contrast.unwrap_or(0.0),
            Relation::Above,
            params.tolerance("fringe_contrast", 5.0),
        ),
        Check::new("axis_crossings", crossings as f64, Relation::AtMost, 0.0),
    ];
    let (equivariance, frozen) = match init {
        InitKind::Equilibrium => {
            let rep = equivariance_at(&ensemble, &snapshots)?;
            checks.push(ks_check(params, &rep));
            let frozen_fields: Vec<WaveField> = snapshots
                .iter()
                .map(|f| initial.clone().with_time(f.time()))
                .collect();
            let frozen = equivariance_report(&ensemble, &frozen_fields)?.max_ks();
            (Some(rep), Some(frozen))
        }
        InitKind::UniformInSlits => {
            checks.push(Check::new(
                "single_slit_fraction",
                passage.single_slit as f64 / n as f64,
                Relation::AtMost,
                1.0,
            ));
            checks.push(Check::new(
                "slit_passage_failures",
                (passage.outside + passage.never_crossed) as f64,
                Relation::AtMost,
                0.0,
            ));
            (None, None)
        }
    };
    let mut diagnostics = Diagnostics::from_trajectories(
        &ensemble.trajectories,
        history.velocity.regularized_points(),
    );
    diagnostics.boundary_ratio = Some(screen_density.boundary_ratio(3));
    let results = grid
        .coords(1)
        .iter()
        .zip(&profile)
        .map(|(y, p)| ResultRow::new("screen_marginal", format!("{y}"), *p))
        .collect();
    Ok(ScenarioOutcome {
        scenario: "two_slit".into(),
        seed: params.seed,
        checks,
        details: Details::TwoSlit(TwoSlitSummary {
            init,
            slits,
            slit_plane: cfg.x_center,
            screen_time: screen.time(),
            fringe_contrast: contrast,
            slit_passage: passage,
            axis_crossings: crossings,
            upper_fraction: upper,
            equivariance,
            frozen_density_ks: frozen,
        }),
        diagnostics,
        ensemble: Some(ensemble),
        densities: snapshots.iter().map(|f| (f.time(), f.density())).collect(),
        results,
    })
}

fn run_stationary(params: &ScenarioParams) -> Result<ScenarioOutcome> {
    let mut cfg = StationaryUniverse::default();
    if let Some(axes) = &params.axes {
        let two_pi = 2.0 * std::f64::consts::PI;
        let n = axes.first().map_or(0, |a| a.2);
        if axes.len() != 2
            || axes
                .iter()
                .any(|a| a.0 != 0.0 || (a.1 - two_pi).abs() > 1e-12 || a.2 != n)
        {
            return Err(config_err(
                "grid.axes",
                "this scenario lives on [0, 2π)² with equal point counts",
            ));
        }
        cfg.grid_points = n;
    }
    cfg.x0 = params.x0.unwrap_or(cfg.x0);
    cfg.y0 = params.y0.unwrap_or(cfg.y0);
    cfg.t_final = params.t_final.unwrap_or(cfg.t_final);
    cfg.dt = params.dt.unwrap_or(cfg.dt);
    cfg.dt_traj = params.dt_traj.unwrap_or(cfg.dt_traj);
    if let Some(times) = &params.snapshot_times {
        cfg.sample_times = times.clone();
    } else if params.t_final.is_some() {
        cfg.sample_times = default_snapshots(cfg.t_final, 50);
    }
    let run = run_stationary_universe(&cfg)?;
    let r = &run.report;

    let grid = universe_grid(cfg.grid_points)?;
    let psi = universe_field(&grid)?;
    let velocity = StaticVelocity(velocity_field(&psi)?);
    let n = params.n_or(50)?;
    let starts = InitRule::Equilibrium.draw(&psi, n, params.seed)?;
    let settings =
        IntegratorSettings::new(cfg.dt_traj, cfg.t_final).recording(run.trajectory.times.clone());
    let mut trajectories = vec![run.trajectory.clone()];
    trajectories.extend(integrate_ensemble(&starts, &velocity, &settings)?);
    let ensemble = TrajectoryEnsemble {
        trajectories,
        seed: params.seed,
        scenario: "stationary_universe".into(),
    };
    let mut max_velocity_error: f64 = 0.0;
    for t in &ensemble.trajectories {
        let (first, last) = (&t.unwrapped[0], &t.unwrapped[t.unwrapped.len() - 1]);
        let span = t.times[t.times.len() - 1] - t.times[0];
        if span > 0.0 {
            let vx = (last[0] - first[0]) / span;
            let vy = (last[1] - first[1]) / span;
            max_velocity_error = max_velocity_error
                .max((vx - 1.0).abs())
                .max((vy + 1.0).abs());
        }
    }
    let sampled = TrajectoryEnsemble {
        trajectories: ensemble.trajectories[1..].to_vec(),
        ..ensemble.clone()
    };
    let stationary_fields: Vec<WaveField> = run
        .trajectory
        .times
        .iter()
        .map(|&t| psi.clone().with_time(t))
        .collect();
    let equivariance = equivariance_report(&sampled, &stationary_fields)?;

    let checks = vec![
        Check::new(
            "eigen_residual",
            r.eigen_residual.unwrap_or(f64::NAN),
            Relation::Below,
            params.tolerance("eigen_residual", 1e-8),
        ),
        Check::new(
            "max_projective_distance",
            r.max_distance,
            Relation::Below,
            params.tolerance("max_projective_distance", 1e-6),
        ),
        Check::new(
            "environment_error",
            r.max_environment_error,
            Relation::Below,
            params.tolerance("environment_error", 1e-6),
        ),
        Check::new(
            "velocity_error",
            max_velocity_error,
            Relation::Below,
            params.tolerance("velocity_error", 1e-6),
        ),
        ks_check(params, &equivariance),
    ];
    let mut diagnostics =
        Diagnostics::from_trajectories(&ensemble.trajectories, r.regularized_points);
    diagnostics.boundary_ratio = None;
    let results = r
        .entries
        .iter()
        .map(|e| {
            ResultRow::new(
                "projective_distance",
                format!("{}", e.time),
                e.distance.unwrap_or(f64::NAN),
            )
        })
        .collect();
    Ok(ScenarioOutcome {
        scenario: "stationary_universe".into(),
        seed: params.seed,
        checks,
        details: Details::StationaryUniverse(StationarySummary {
            emergence: run.report.clone(),
            max_velocity_error,
            equivariance: Some(equivariance),
        }),
        diagnostics,
        ensemble: Some(ensemble),
        densities: vec![(psi.time(), psi.density())],
        results,
    })
}

fn run_branching(params: &ScenarioParams) -> Result<ScenarioOutcome> {
    let mut cfg = BranchingUniverse::default();
    let axes = params.axes_or(vec![cfg.x_axis, cfg.y_axis])?;
    cfg.x_axis = axes[0];
    cfg.y_axis = axes[1];
    if let Some(m) = &params.masses {
        match m.as_slice() {
            [mx, my] => (cfg.mass_x, cfg.mass_y) = (*mx, *my),
            _ => return Err(config_err("grid.masses", "need one mass per axis (x, y)")),
        }
    }
    cfg.t_final = params.t_final.unwrap_or(cfg.t_final);
    cfg.dt = params.dt.unwrap_or(cfg.dt);
    cfg.dt_traj = params.dt_traj.unwrap_or(cfg.dt_traj);
    cfg.snapshot_every = params.snapshot_every.unwrap_or(cfg.snapshot_every);
    cfg.start = (
        params.x0.unwrap_or(cfg.start.0),
        params.y0.unwrap_or(cfg.start.1),
    );
    let run = run_branching_universe(&cfg)?;
    let r = run.report;
    let checks = vec![
        Check::new(
            "tracked",
            f64::from(u8::from(r.tracked == Some(true))),
            Relation::AtMost,
            1.0,
        )
        .require(r.tracked == Some(true)),
        Check::new(
            "max_projective_distance",
            r.max_distance,
            Relation::Below,
            params.tolerance("max_projective_distance", 1e-3),
        ),
    ];
    let results = r
        .entries
        .iter()
        .map(|e| {
            ResultRow::new(
                "projective_distance",
                format!("{}", e.time),
                e.distance.unwrap_or(f64::NAN),
            )
        })
        .collect();
    let diagnostics =
        Diagnostics::from_trajectories(std::slice::from_ref(&run.trajectory), r.regularized_points);
    let densities = vec![(0.0, cfg.composite()?.density())];
    Ok(ScenarioOutcome {
        scenario: "branching_universe".into(),
        seed: params.seed,
        checks,
        details: Details::BranchingUniverse(r),
        diagnostics,
        ensemble: Some(TrajectoryEnsemble {
            trajectories: vec![run.trajectory],
            seed: params.seed,
            scenario: "branching_universe".into(),
        }),
        densities,
        results,
    })
}

impl Check {
    /// Overrides the computed verdict for boolean gates.
    fn require(mut self, ok: bool) -> Self {
        self.passed = ok;
        self
    }
}

fn run_pointer(params: &ScenarioParams) -> Result<ScenarioOutcome> {
    let mut model = PointerModel::default();
    let axes = params.axes_or(vec![model.system_axis, model.pointer_axis])?;
    model.system_axis = axes[0];
    model.pointer_axis = axes[1];
    if let Some(m) = &params.masses {
        match m.as_slice() {
            [ms, mp] => (model.system_mass, model.pointer_mass) = (*ms, *mp),
            _ => {
                return Err(config_err(
                    "grid.masses",
                    "need one mass per axis (system, pointer)",
                ))
            }
        }
    }
    model.dt = params.dt.unwrap_or(model.dt);
    model.duration = params.t_final.unwrap_or(model.duration);
    let alpha_sq = params.alpha_sq.unwrap_or(0.36);
    if !(0.0..=1.0).contains(&alpha_sq) {
        return Err(config_err("measurement.alpha_sq", "must lie in [0, 1]"));
    }
    let mut spec = model.spec()?;
    if let Some(every) = params.snapshot_every {
        spec.snapshot_every = every;
    }
    let g = spec.system_grid().clone();
    let packet = |c: f64| WaveField::from_fn(&g, |q| gaussian(q[0], c, 0.7, 0.0));
    let (left, right) = (packet(-5.0)?, packet(5.0)?);
    let psi = WaveField::linear_combination(&[
        (Complex64::new(alpha_sq.sqrt(), 0.0), &left),
        (Complex64::new((1.0 - alpha_sq).sqrt(), 0.0), &right),
    ])?
    .normalized()?;
    let (pushforward, psi_t) = run_experiment_with_field(&spec, &psi)?;
    let projectors = ProjectorFamily::coarse_position(&g, 0, &[0.0])?;
    let spectral = verify_spectral_measure(&spec, &projectors, &psi)?;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let probes = [
        (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)),
        (Complex64::new(h, 0.0), Complex64::new(h, 0.0)),
        (Complex64::new(h, 0.0), Complex64::new(0.0, h)),
    ];
    let bilinearity = probes
        .iter()
        .map(|&(a, b)| verify_bilinearity(&spec, &left, &right, a, b))
        .collect::<Result<Vec<_>>>()?;
    let max_bilinear = bilinearity
        .iter()
        .map(|b| b.max_deviation)
        .fold(0.0, f64::max);

    let mut checks = vec![
        Check::new(
            "spectral_difference",
            spectral.max_abs_difference,
            Relation::Below,
            params.tolerance("spectral_difference", 2e-3),
        ),
        Check::new(
            "bilinearity_deviation",
            max_bilinear,
            Relation::Below,
            params.tolerance("bilinearity_deviation", 1e-8),
        ),
        Check::new(
            "normalization_error",
            (pushforward.total() - 1.0).abs(),
            Relation::Below,
            params.tolerance("normalization_error", 1e-10),
        ),
    ];
    let mut results: Vec<ResultRow> = pushforward
        .labels
        .iter()
        .zip(&pushforward.masses)
        .map(|(l, m)| ResultRow::new("pushforward", l.clone(), *m))
        .chain(
            spectral
                .labels
                .iter()
                .zip(&spectral.projectors)
                .map(|(l, m)| ResultRow::new("projector", l.clone(), *m)),
        )
        .collect();
    let (sampled, ensemble, diagnostics) = match params.n {
        Some(n) => {
            let n = params.n_or(n)?;
            let dt_traj = params.dt_traj.unwrap_or(model.dt);
            let (dist, trajectories) =
                sample_result_distribution(&spec, &psi, n, params.seed, dt_traj)?;
            checks.push(
                Check::new("sampled_within_3_sigma", 1.0, Relation::AtMost, 1.0)
                    .require(within_binomial(&dist, &pushforward, 3.0)),
            );
            results.extend(
                dist.labels
                    .iter()
                    .zip(&dist.masses)
                    .map(|(l, m)| ResultRow::new("sampled", l.clone(), *m)),
            );
            let diagnostics = Diagnostics::from_trajectories(&trajectories, 0);
            let ensemble = TrajectoryEnsemble {
                trajectories,
                seed: params.seed,
                scenario: "pointer_measurement".into(),
            };
            (Some(dist), Some(ensemble), diagnostics)
        }
        None => (None, None, Diagnostics::default()),
    };
    let mut diagnostics = diagnostics;
    let final_density = psi_t.density();
    diagnostics.boundary_ratio = Some(final_density.boundary_ratio(spec.boundary_cells));
    let initial_density = crate::measurement::compose(&psi, spec.ready_state())?.density();
    Ok(ScenarioOutcome {
        scenario: "pointer_measurement".into(),
        seed: params.seed,
        checks,
        details: Details::PointerMeasurement(PointerSummary {
            alpha_sq,
            pushforward,
            spectral,
            bilinearity,
            sampled,
        }),
        diagnostics,
        ensemble,
        densities: vec![(0.0, initial_density), (psi_t.time(), final_density)],
        results,
    })
}

/// Width of a free Gaussian whose density has standard deviation `sigma` at
/// `t = 0`: `σ(t) = σ √(1 + (ħ t / (2 m σ²))²)`.
pub fn free_gaussian_width(sigma: f64, t: f64, hbar: f64, mass: f64) -> f64 {
    let s = hbar * t / (2.0 * mass * sigma * sigma);
    sigma * (1.0 + s * s).sqrt()
}

fn run_free_gaussian(params: &ScenarioParams) -> Result<ScenarioOutcome> {
    let axes = params.axes_or(vec![(-32.0, 32.0, 512)])?;
    let grid = GridSpec::new(
        &axes,
        params.hbar.unwrap_or(1.0),
        &params.masses_or(vec![1.0]),
    )?;
    let (c0, sigma, v) = (-4.0, 1.0, 1.0);
    let k = grid.mass(0) * v / grid.hbar();
    let initial = WaveField::from_fn(&grid, |q| gaussian(q[0], c0, sigma, k))?;
    let t_final = params.t_final.unwrap_or(4.0);
    let snapshot_times = params
        .snapshot_times
        .clone()
        .unwrap_or_else(|| default_snapshots(t_final, 4));
    let history = snapshot_history(
        params,
        &initial,
        Potential::zero(&grid),
        0.01,
        t_final,
        1,
        &snapshot_times,
    )?;
    let record: Vec<f64> = history.fields.iter().map(WaveField::time).collect();
    let n = params.n_or(100)?;
    let mut starts = vec![vec![c0 + sigma]];
    starts.extend(InitRule::Equilibrium.draw(&initial, n, params.seed)?);
    let settings =
        IntegratorSettings::new(params.dt_traj.unwrap_or(1e-3), t_final).recording(record);
    let all = ensemble_of(
        "free_gaussian",
        params.seed,
        &starts,
        &history.velocity,
        &settings,
    )?;
    let probe = &all.trajectories[0];
    let one_sigma = probe
        .times
        .iter()
        .zip(&probe.unwrapped)
        .map(|(&t, q)| {
            let expected = c0 + v * t + free_gaussian_width(sigma, t, grid.hbar(), grid.mass(0));
            (q[0] - expected).abs()
        })
        .fold(0.0, f64::max);
    let ensemble = TrajectoryEnsemble {
        trajectories: all.trajectories[1..].to_vec(),
        ..all
    };
    let snapshots = fields_at(&history, &snapshot_times)?;
    let equivariance = equivariance_at(&ensemble, &snapshots)?;
    let violations = ensemble.ordering_violations(0);
    let checks = vec![
        Check::new(
            "ordering_violations",
            violations as f64,
            Relation::AtMost,
            0.0,
        ),
        ks_check(params, &equivariance),
        Check::new(
            "one_sigma_deviation",
            one_sigma,
            Relation::Below,
            params.tolerance("one_sigma_deviation", 1e-4),
        ),
    ];
    let mut diagnostics = Diagnostics::from_trajectories(
        &ensemble.trajectories,
        history.velocity.regularized_points(),
    );
    diagnostics.boundary_ratio = history.fields.last().map(|f| f.density().boundary_ratio(3));
    let results = equivariance
        .entries
        .iter()
        .map(|e| ResultRow::new("ks", format!("{}", e.time), e.ks[0]))
        .collect();
    Ok(ScenarioOutcome {
        scenario: "free_gaussian".into(),
        seed: params.seed,
        checks,
        details: Details::FreeGaussian(FreeGaussianSummary {
            ordering_violations: violations,
            equivariance,
            one_sigma_deviation: one_sigma,
        }),
        diagnostics,
        ensemble: Some(ensemble),
        densities: snapshots.iter().map(|f| (f.time(), f.density())).collect(),
        results,
    })
}

fn run_plane_wave(params: &ScenarioParams) -> Result<ScenarioOutcome> {
    let two_pi = 2.0 * std::f64::consts::PI;
    let axes = params.axes_or(vec![(0.0, two_pi, 64)])?;
    let grid = GridSpec::new(
        &axes,
        params.hbar.unwrap_or(1.0),
        &params.masses_or(vec![1.0]),
    )?;
    let k = 2.0 * two_pi / grid.axis(0).length();
    let v = grid.hbar() * k / grid.mass(0);
    let initial = WaveField::from_fn(&grid, |q| Complex64::from_polar(1.0, k * q[0]))?;
    let t_final = params.t_final.unwrap_or(1.0);
    let snapshot_times = params
        .snapshot_times
        .clone()
        .unwrap_or_else(|| default_snapshots(t_final, 4));
    let history = snapshot_history(
        params,
        &initial,
        Potential::zero(&grid),
        0.01,
        t_final,
        1,
        &snapshot_times,
    )?;
    let record: Vec<f64> = history.fields.iter().map(WaveField::time).collect();
    let n = params.n_or(100)?;
    let starts = InitRule::Equilibrium.draw(&initial, n, params.seed)?;
    let settings =
        IntegratorSettings::new(params.dt_traj.unwrap_or(1e-3), t_final).recording(record);
    let ensemble = ensemble_of(
        "plane_wave",
        params.seed,
        &starts,
        &history.velocity,
        &settings,
    )?;
    let max_position_error = ensemble
        .trajectories
        .iter()
        .flat_map(|t| {
            let x0 = t.unwrapped[0][0];
            t.times
                .iter()
                .zip(&t.unwrapped)
                .map(move |(&s, q)| (q[0] - (x0 + v * s)).abs())
        })
        .fold(0.0, f64::max);
    let max_velocity_error = history
        .velocity
        .fields()
        .iter()
        .flat_map(|f| f.component(0).iter().map(|u| (u - v).abs()))
        .fold(0.0, f64::max);
    let snapshots = fields_at(&history, &snapshot_times)?;
    let equivariance = equivariance_at(&ensemble, &snapshots)?;
    let checks = vec![
        Check::new(
            "position_error",
            max_position_error,
            Relation::Below,
            params.tolerance("position_error", 1e-9),
        ),
        Check::new(
            "velocity_error",
            max_velocity_error,
            Relation::Below,
            params.tolerance("velocity_error", 1e-10),
        ),
        ks_check(params, &equivariance),
    ];
    let diagnostics = Diagnostics::from_trajectories(
        &ensemble.trajectories,
        history.velocity.regularized_points(),
    );
    Ok(ScenarioOutcome {
        scenario: "plane_wave".into(),
        seed: params.seed,
        checks,
        details: Details::PlaneWave(PlaneWaveSummary {
            max_position_error,
            max_velocity_error,
            equivariance,
        }),
        diagnostics,
        ensemble: Some(ensemble),
        densities: snapshots.iter().map(|f| (f.time(), f.density())).collect(),
        results: vec![ResultRow::new("velocity", "expected", v)],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fringe_contrast_of_simple_profiles() {
        let fringes: Vec<f64> = (0..200)
            .map(|j| {
                let y = (j as f64 - 100.0) * 0.1;
                (-y * y / 50.0).exp() * (1.05 + (2.0 * y).cos())
            })
            .collect();
        let c = fringe_contrast(&fringes).unwrap();
        // deepest qualifying minimum sits in the outer envelope
        let far = (-(4.5f64 * std::f64::consts::PI / 2.0).powi(2) / 50.0).exp() * 0.05;
        assert!(c > 2.05 / far * 0.5, "{c}");
        let bump: Vec<f64> = (0..100)
            .map(|j| (-(j as f64 - 50.0).powi(2) / 90.0).exp())
            .collect();
        assert_eq!(fringe_contrast(&bump), None);
    }

    #[test]
    fn unknown_scenario_and_bad_sizes() {
        let p = ScenarioParams::with_seed(1);
        assert!(matches!(
            run_scenario("nope", &p),
            Err(Error::UnknownScenario(_))
        ));
        let zero = ScenarioParams {
            n: Some(0),
            ..p.clone()
        };
        let err = run_scenario("plane_wave", &zero).unwrap_err().to_string();
        assert!(err.contains("ensemble size must be ≥ 1"), "{err}");
        let big_dt = ScenarioParams { dt: Some(1.0), ..p };
        let err = run_scenario("plane_wave", &big_dt).unwrap_err().to_string();
        assert!(err.contains("dt exceeds spectral stability bound"), "{err}");
    }

    #[test]
    fn plane_wave_scenario_passes() {
        let out = run_scenario("plane_wave", &ScenarioParams::with_seed(3)).unwrap();
        assert!(out.passed(), "{:?}", out.failures());
    }

    #[test]
    fn free_gaussian_scenario_passes() {
        let out = run_scenario("free_gaussian", &ScenarioParams::with_seed(3)).unwrap();
        assert!(out.passed(), "{:?}", out.failures());
    }
}
