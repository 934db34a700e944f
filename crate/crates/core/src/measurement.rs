//! Experiments as maps `ψ ↦ Ψ = ψ ⊗ Φ₀ ↦ Ψ_T ↦ |Ψ_T|² ↦ μ_Z`, and checks
//! that the resulting distribution is a quadratic form in `ψ` given by a
//! projector family for the canonical pointer model.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::ensemble::{
    integrate_ensemble, sample_equilibrium, FieldHistory, IntegratorSettings, Trajectory,
};
use crate::error::{config_err, Error, Result};
use crate::propagator::PropagatorPlan;
use crate::wavefield::{gaussian, GridSpec, Potential, WaveField};

/// Default cap on composite grid size.
pub const DEFAULT_MEMORY_BUDGET: usize = 1 << 24;

const NORM_TOLERANCE: f64 = 1e-10;

/// `Z = F(q)`: bins cut along one composite axis at increasing `edges`;
/// bin `i` holds points with exactly `i` edges `≤ q[axis]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultFunction {
    pub axis: usize,
    pub edges: Vec<f64>,
    pub labels: Vec<String>,
}

impl ResultFunction {
    pub fn thresholds(axis: usize, edges: Vec<f64>, labels: Vec<String>) -> Result<Self> {
        if edges.windows(2).any(|w| w[1] <= w[0]) || edges.iter().any(|e| !e.is_finite()) {
            return Err(config_err("edges", "must be finite and increasing"));
        }
        if labels.len() != edges.len() + 1 {
            return Err(config_err(
                "labels",
                format!("{} edges need {} labels", edges.len(), edges.len() + 1),
            ));
        }
        Ok(Self {
            axis,
            edges,
            labels,
        })
    }

    /// Two bins, `-` for `q[axis] < 0` and `+` otherwise.
    pub fn sign(axis: usize) -> Self {
        Self {
            axis,
            edges: vec![0.0],
            labels: vec!["-".into(), "+".into()],
        }
    }

    pub fn bins(&self) -> usize {
        self.labels.len()
    }

    pub fn bin(&self, q: &[f64]) -> usize {
        self.edges.partition_point(|e| *e <= q[self.axis])
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    system: GridSpec,
    ready_state: WaveField,
    plan: PropagatorPlan,
    duration: f64,
    result: ResultFunction,
    bin_of: Vec<usize>,
    memory_budget: usize,
    /// Edge cells inspected for leaked density, and the allowed edge/peak ratio.
    pub boundary_cells: usize,
    pub boundary_tolerance: f64,
    /// Propagator steps between velocity snapshots for trajectory sampling.
    pub snapshot_every: usize,
}

impl ExperimentSpec {
    /// `coupling` lives on `system × apparatus`; `dt` is the propagator step.
    pub fn new(
        system: &GridSpec,
        ready_state: WaveField,
        coupling: Potential,
        duration: f64,
        dt: f64,
        result: ResultFunction,
    ) -> Result<Self> {
        check_normalized("ready state", &ready_state)?;
        let composite = system.product(ready_state.grid())?;
        composite.ensure_same(coupling.grid())?;
        if !(duration.is_finite() && duration >= 0.0) {
            return Err(config_err(
                "duration",
                format!("must be >= 0, got {duration}"),
            ));
        }
        composite.check_axis(result.axis)?;
        let plan = PropagatorPlan::new(dt, coupling)?;
        let bin_of = (0..composite.len())
            .map(|i| result.bin(&composite.point(i)))
            .collect();
        Ok(Self {
            system: system.clone(),
            ready_state,
            plan,
            duration,
            result,
            bin_of,
            memory_budget: DEFAULT_MEMORY_BUDGET,
            boundary_cells: 3,
            boundary_tolerance: 1e-6,
            snapshot_every: 10,
        })
    }

    pub fn with_memory_budget(mut self, points: usize) -> Self {
        self.memory_budget = points;
        self
    }

    pub fn system_grid(&self) -> &GridSpec {
        &self.system
    }

    pub fn composite_grid(&self) -> &GridSpec {
        self.plan.grid()
    }

    pub fn ready_state(&self) -> &WaveField {
        &self.ready_state
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn dt(&self) -> f64 {
        self.plan.dt()
    }

    pub fn result_function(&self) -> &ResultFunction {
        &self.result
    }

    pub fn labels(&self) -> &[String] {
        &self.result.labels
    }

    fn evolve(&self, psi: &WaveField) -> Result<WaveField> {
        let composite = compose_with_budget(psi, &self.ready_state, self.memory_budget)?;
        Ok(self
            .plan
            .evolve(&composite, self.duration, &[])?
            .pop()
            .unwrap_or(composite))
    }

    fn masses(&self, psi_t: &WaveField) -> Vec<f64> {
        let dv = psi_t.grid().cell_volume();
        let mut masses = vec![0.0; self.result.bins()];
        for (z, b) in psi_t.amplitudes().iter().zip(&self.bin_of) {
            masses[*b] += z.norm_sqr() * dv;
        }
        masses
    }

    /// Bin masses without the normalization precondition (quadratic in `ψ`).
    fn quadratic_form(&self, psi: &WaveField) -> Result<Vec<f64>> {
        Ok(self.masses(&self.evolve(psi)?))
    }
}

/// Pointer model: an impulsive coupling `V = -(P/dt) s(x) y` over the first
/// step kicks a Gaussian pointer by momentum `±P` according to the sign of
/// the system coordinate, then both evolve freely for the remaining time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointerModel {
    pub system_axis: (f64, f64, usize),
    pub pointer_axis: (f64, f64, usize),
    pub system_mass: f64,
    pub pointer_mass: f64,
    pub pointer_width: f64,
    pub kick: f64,
    pub duration: f64,
    pub dt: f64,
}

impl Default for PointerModel {
    fn default() -> Self {
        Self {
            system_axis: (-16.0, 16.0, 128),
            pointer_axis: (-16.0, 16.0, 256),
            system_mass: 1.0,
            pointer_mass: 4.0,
            pointer_width: 0.5,
            kick: 12.0,
            duration: 2.0,
            dt: 0.01,
        }
    }
}

impl PointerModel {
    pub fn system_grid(&self) -> Result<GridSpec> {
        GridSpec::new(&[self.system_axis], 1.0, &[self.system_mass])
    }

    pub fn spec(&self) -> Result<ExperimentSpec> {
        let system = self.system_grid()?;
        let apparatus = GridSpec::new(&[self.pointer_axis], 1.0, &[self.pointer_mass])?;
        let ready =
            WaveField::from_fn(&apparatus, |q| gaussian(q[0], 0.0, self.pointer_width, 0.0))?;
        let composite = system.product(&apparatus)?;
        let strength = self.kick / self.dt;
        let kick = Potential::from_fn(&composite, |q| {
            let s = if q[0] >= 0.0 { 1.0 } else { -1.0 };
            -strength * s * q[1]
        })?;
        let coupling =
            Potential::zero(&composite).with_frame(0.0, self.dt, kick.static_values().to_vec())?;
        ExperimentSpec::new(
            &system,
            ready,
            coupling,
            self.duration,
            self.dt,
            ResultFunction::sign(1),
        )
    }
}

fn check_normalized(what: &str, f: &WaveField) -> Result<()> {
    let n = f.norm();
    if (n - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::NotNormalized(format!("{what} has norm {n}")));
    }
    Ok(())
}

fn compose_with_budget(
    system: &WaveField,
    apparatus: &WaveField,
    budget: usize,
) -> Result<WaveField> {
    let points = system.grid().len().saturating_mul(apparatus.grid().len());
    if points > budget {
        return Err(Error::MemoryBudget { points, budget });
    }
    let grid = system.grid().product(apparatus.grid())?;
    let phi = apparatus.amplitudes();
    let mut amps = Vec::with_capacity(points);
    for p in system.amplitudes() {
        amps.extend(phi.iter().map(|f| p * f));
    }
    Ok(WaveField::from_amplitudes(&grid, amps)?.with_time(system.time()))
}

/// `ψ ⊗ Φ₀` on the product grid, system axes first.
pub fn compose(system: &WaveField, apparatus: &WaveField) -> Result<WaveField> {
    check_normalized("system state", system)?;
    check_normalized("apparatus state", apparatus)?;
    compose_with_budget(system, apparatus, DEFAULT_MEMORY_BUDGET)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DistributionMethod {
    DensityPushforward,
    TrajectorySampled,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultDistribution {
    pub labels: Vec<String>,
    pub masses: Vec<f64>,
    pub method: DistributionMethod,
    pub samples: Option<usize>,
}

impl ResultDistribution {
    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn mass(&self, label: &str) -> Option<f64> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.masses[i])
    }
}

/// Runs the experiment on `psi` and pushes `|Ψ_T|²` forward through `F`.
/// Also returns `Ψ_T`.
pub fn run_experiment_with_field(
    spec: &ExperimentSpec,
    psi: &WaveField,
) -> Result<(ResultDistribution, WaveField)> {
    spec.system.ensure_same(psi.grid())?;
    check_normalized("system state", psi)?;
    let psi_t = spec.evolve(psi)?;
    let ratio = psi_t.density().boundary_ratio(spec.boundary_cells);
    if ratio > spec.boundary_tolerance {
        return Err(Error::BoundaryLeak { ratio });
    }
    let dist = ResultDistribution {
        labels: spec.result.labels.clone(),
        masses: spec.masses(&psi_t),
        method: DistributionMethod::DensityPushforward,
        samples: None,
    };
    Ok((dist, psi_t))
}

pub fn run_experiment(spec: &ExperimentSpec, psi: &WaveField) -> Result<ResultDistribution> {
    Ok(run_experiment_with_field(spec, psi)?.0)
}

/// Bins `Z = F(Q_T)` over `n` equilibrium trajectories of the composite.
pub fn sample_result_distribution(
    spec: &ExperimentSpec,
    psi: &WaveField,
    n: usize,
    seed: u64,
    dt_traj: f64,
) -> Result<(ResultDistribution, Vec<Trajectory>)> {
    spec.system.ensure_same(psi.grid())?;
    check_normalized("system state", psi)?;
    let composite = compose_with_budget(psi, &spec.ready_state, spec.memory_budget)?;
    let history = FieldHistory::evolve(&spec.plan, &composite, spec.duration, spec.snapshot_every)?;
    let starts = sample_equilibrium(&composite.density(), n, seed)?;
    let settings =
        IntegratorSettings::new(dt_traj, spec.duration).recording(vec![0.0, spec.duration]);
    let trajectories = integrate_ensemble(&starts, &history.velocity, &settings)?;
    let mut counts = vec![0usize; spec.result.bins()];
    for t in &trajectories {
        counts[spec.result.bin(t.final_position().unwrap_or(&[]))] += 1;
    }
    let dist = ResultDistribution {
        labels: spec.result.labels.clone(),
        masses: counts.iter().map(|&c| c as f64 / n as f64).collect(),
        method: DistributionMethod::TrajectorySampled,
        samples: Some(n),
    };
    Ok((dist, trajectories))
}

/// Whether each sampled mass is within `sigmas` binomial standard deviations
/// of the reference.
pub fn within_binomial(
    sampled: &ResultDistribution,
    reference: &ResultDistribution,
    sigmas: f64,
) -> bool {
    let n = sampled.samples.unwrap_or(0) as f64;
    sampled.masses.iter().zip(&reference.masses).all(|(s, p)| {
        let sd = (p.clamp(0.0, 1.0) * (1.0 - p.clamp(0.0, 1.0)) / n).sqrt();
        (s - p).abs() <= sigmas * sd + 0.5 / n
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BilinearityReport {
    /// `μ_Z` of `αψ₁ + βψ₂`, run directly.
    pub direct: Vec<f64>,
    /// `|α|²μ₁₁ + |β|²μ₂₂ + 2 Re(conj(α) β μ₁₂)`.
    pub expanded: Vec<f64>,
    pub cross_terms: Vec<Complex64>,
    pub max_deviation: f64,
}

/// Compares `μ_Z^{αψ₁+βψ₂}` against its sesquilinear expansion, with the
/// cross term `μ₁₂ = ⟨ψ₁, O ψ₂⟩` recovered by polarization:
/// `Re μ₁₂ = ½[μ(+) − μ(−)]`, `Im μ₁₂ = ½[μ(−i) − μ(+i)]` where
/// `μ(c) = μ_Z` of `(ψ₁ + cψ₂)/√2`.
pub fn verify_bilinearity(
    spec: &ExperimentSpec,
    psi1: &WaveField,
    psi2: &WaveField,
    alpha: Complex64,
    beta: Complex64,
) -> Result<BilinearityReport> {
    check_normalized("ψ₁", psi1)?;
    check_normalized("ψ₂", psi2)?;
    spec.system.ensure_same(psi1.grid())?;
    spec.system.ensure_same(psi2.grid())?;
    let one = Complex64::new(1.0, 0.0);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let probe = |c: Complex64| WaveField::linear_combination(&[(one * r, psi1), (c * r, psi2)]);
    let inputs = [
        psi1.clone(),
        psi2.clone(),
        probe(one)?,
        probe(-one)?,
        probe(Complex64::i())?,
        probe(-Complex64::i())?,
        WaveField::linear_combination(&[(alpha, psi1), (beta, psi2)])?,
    ];
    let runs = inputs
        .iter()
        .map(|f| spec.quadratic_form(f))
        .collect::<Result<Vec<_>>>()?;
    let bins = spec.result.bins();
    let mut expanded = Vec::with_capacity(bins);
    let mut cross_terms = Vec::with_capacity(bins);
    #[allow(clippy::needless_range_loop)]
    for z in 0..bins {
        let b12 = Complex64::new(
            0.5 * (runs[2][z] - runs[3][z]),
            0.5 * (runs[5][z] - runs[4][z]),
        );
        cross_terms.push(b12);
        expanded.push(
            alpha.norm_sqr() * runs[0][z]
                + beta.norm_sqr() * runs[1][z]
                + 2.0 * (alpha.conj() * beta * b12).re,
        );
    }
    let direct = runs[6].clone();
    let max_deviation = direct
        .iter()
        .zip(&expanded)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(BilinearityReport {
        direct,
        expanded,
        cross_terms,
        max_deviation,
    })
}

/// Orthogonal projectors diagonal in position: each system grid point
/// belongs to exactly one mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorFamily {
    grid: GridSpec,
    masks: Vec<Vec<bool>>,
}

impl ProjectorFamily {
    pub fn new(grid: &GridSpec, masks: Vec<Vec<bool>>) -> Result<Self> {
        if masks.is_empty() {
            return Err(Error::Projectors("empty family".into()));
        }
        if let Some(m) = masks.iter().find(|m| m.len() != grid.len()) {
            return Err(Error::Projectors(format!(
                "mask of length {} on a grid of {} points",
                m.len(),
                grid.len()
            )));
        }
        for i in 0..grid.len() {
            match masks.iter().filter(|m| m[i]).count() {
                1 => {}
                0 => {
                    return Err(Error::Projectors(format!(
                        "incomplete: grid point {:?} is in no projector",
                        grid.point(i)
                    )))
                }
                c => {
                    return Err(Error::Projectors(format!(
                        "not orthogonal: grid point {:?} is in {c} projectors",
                        grid.point(i)
                    )))
                }
            }
        }
        Ok(Self {
            grid: grid.clone(),
            masks,
        })
    }

    /// Indicators of `q[axis]` falling between consecutive `edges`.
    pub fn coarse_position(grid: &GridSpec, axis: usize, edges: &[f64]) -> Result<Self> {
        grid.check_axis(axis)?;
        let mut masks = vec![vec![false; grid.len()]; edges.len() + 1];
        #[allow(clippy::needless_range_loop)]
        for i in 0..grid.len() {
            let x = grid.point(i)[axis];
            masks[edges.partition_point(|e| *e <= x)][i] = true;
        }
        Self::new(grid, masks)
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    /// `‖P_z ψ‖²` for every `z`.
    pub fn probabilities(&self, psi: &WaveField) -> Result<Vec<f64>> {
        self.grid.ensure_same(psi.grid())?;
        let dv = self.grid.cell_volume();
        Ok(self
            .masks
            .iter()
            .map(|m| {
                psi.amplitudes()
                    .iter()
                    .zip(m)
                    .filter(|(_, &inside)| inside)
                    .map(|(z, _)| z.norm_sqr())
                    .sum::<f64>()
                    * dv
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralComparison {
    pub labels: Vec<String>,
    pub experiment: Vec<f64>,
    pub projectors: Vec<f64>,
    pub max_abs_difference: f64,
}

/// Experiment bins against `‖P_z ψ‖²`, bin `z` paired with projector `z`.
pub fn verify_spectral_measure(
    spec: &ExperimentSpec,
    projectors: &ProjectorFamily,
    psi: &WaveField,
) -> Result<SpectralComparison> {
    if projectors.len() != spec.result.bins() {
        return Err(Error::Projectors(format!(
            "{} projectors for {} result bins",
            projectors.len(),
            spec.result.bins()
        )));
    }
    spec.system.ensure_same(&projectors.grid)?;
    let experiment = run_experiment(spec, psi)?.masses;
    let oracle = projectors.probabilities(psi)?;
    let max_abs_difference = experiment
        .iter()
        .zip(&oracle)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(SpectralComparison {
        labels: spec.result.labels.clone(),
        experiment,
        projectors: oracle,
        max_abs_difference,
    })
}

/// POVM elements `O_z` in the grid-point basis of the system.
#[derive(Debug, Clone)]
pub struct PovmMatrices {
    pub labels: Vec<String>,
    pub elements: Vec<DMatrix<Complex64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PovmDiagnostics {
    pub max_hermiticity_error: f64,
    pub min_eigenvalue: f64,
    /// `max |Σ_z O_z − I|` entrywise.
    pub completeness_error: f64,
}

/// Largest system grid accepted by [`extract_povm`].
pub const POVM_MAX_POINTS: usize = 64;

/// Materializes `O_z[j,k] = ⟨U(e_j⊗Φ₀), 1_z U(e_k⊗Φ₀)⟩` by running the
/// experiment on every normalized grid-point state `e_j`.
pub fn extract_povm(spec: &ExperimentSpec) -> Result<PovmMatrices> {
    let n = spec.system.len();
    if n > POVM_MAX_POINTS {
        return Err(config_err(
            "povm",
            format!("system grid of {n} points exceeds the {POVM_MAX_POINTS}-point limit"),
        ));
    }
    let height = Complex64::new(1.0 / spec.system.cell_volume().sqrt(), 0.0);
    let evolved = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut e = WaveField::zeros(&spec.system);
            e.amplitudes_mut()[j] = height;
            spec.evolve(&e)
        })
        .collect::<Result<Vec<_>>>()?;
    let dv = spec.composite_grid().cell_volume();
    let bins = spec.result.bins();
    let mut elements = vec![DMatrix::<Complex64>::zeros(n, n); bins];
    for j in 0..n {
        for k in j..n {
            let mut acc = vec![Complex64::new(0.0, 0.0); bins];
            for ((a, b), z) in evolved[j]
                .amplitudes()
                .iter()
                .zip(evolved[k].amplitudes())
                .zip(&spec.bin_of)
            {
                acc[*z] += a.conj() * b;
            }
            for (m, v) in elements.iter_mut().zip(acc) {
                m[(j, k)] = v * dv;
                m[(k, j)] = (v * dv).conj();
            }
        }
    }
    Ok(PovmMatrices {
        labels: spec.result.labels.clone(),
        elements,
    })
}

impl PovmMatrices {
    pub fn diagnostics(&self) -> PovmDiagnostics {
        let n = self.elements.first().map_or(0, |m| m.nrows());
        let mut herm: f64 = 0.0;
        let mut min_eig = f64::INFINITY;
        let mut sum = DMatrix::<Complex64>::zeros(n, n);
        for m in &self.elements {
            herm = herm.max(
                (m - m.adjoint())
                    .iter()
                    .map(|z| z.norm())
                    .fold(0.0, f64::max),
            );
            let hermitian = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
            let eig = hermitian.symmetric_eigenvalues();
            min_eig = min_eig.min(eig.iter().copied().fold(f64::INFINITY, f64::min));
            sum += m;
        }
        let completeness = (sum - DMatrix::<Complex64>::identity(n, n))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        PovmDiagnostics {
            max_hermiticity_error: herm,
            min_eigenvalue: min_eig,
            completeness_error: completeness,
        }
    }

    /// `⟨ψ, O_z ψ⟩` for every `z`, with the grid inner product.
    pub fn probabilities(&self, psi: &WaveField) -> Vec<f64> {
        let dv = psi.grid().cell_volume();
        let v = nalgebra::DVector::from_column_slice(psi.amplitudes());
        self.elements
            .iter()
            .map(|m| (v.adjoint() * m * &v)[(0, 0)].re * dv)
            .collect()
    }
}
