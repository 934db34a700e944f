//! Strang-split spectral stepping for `iħ ∂ψ/∂t = Σ_k -(ħ²/2m_k) ∂²_k ψ + V ψ`.
//!
//! One step is `e^{-iV dt/2ħ} F⁻¹ e^{-iK dt/ħ} F e^{-iV dt/2ħ}` with `V`
//! frozen at the step midpoint.

use log::warn;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{config_err, Error, Result};
use crate::fft::SpectralPlan;
use crate::wavefield::{GridSpec, Potential, WaveField};

/// Kinetic energy `Σ_a ħ²k_a²/2m_a` at every spectral index.
pub(crate) fn kinetic_energies(grid: &GridSpec) -> Vec<f64> {
    let per_axis: Vec<Vec<f64>> = (0..grid.dims())
        .map(|a| {
            let c = grid.hbar() * grid.hbar() / (2.0 * grid.mass(a));
            grid.wavenumbers(a).iter().map(|k| c * k * k).collect()
        })
        .collect();
    let mut idx = vec![0; grid.dims()];
    (0..grid.len())
        .map(|flat| {
            grid.unravel(flat, &mut idx);
            idx.iter().enumerate().map(|(a, &j)| per_axis[a][j]).sum()
        })
        .collect()
}

fn phases(values: &[f64], scale: f64) -> Vec<Complex64> {
    values
        .iter()
        .map(|v| Complex64::from_polar(1.0, -v * scale))
        .collect()
}

#[derive(Debug, Clone)]
pub struct PropagatorPlan {
    grid: GridSpec,
    dt: f64,
    potential: Potential,
    spectral: SpectralPlan,
    kinetic: Vec<f64>,
    kinetic_phase: Vec<Complex64>,
    half_potential: Option<Vec<Complex64>>,
    frame_half_potential: Vec<Vec<Complex64>>,
}

impl PropagatorPlan {
    /// Builds a plan for step `dt` (negative steps run time backwards).
    pub fn new(dt: f64, potential: Potential) -> Result<Self> {
        let grid = potential.grid().clone();
        if !(dt.is_finite() && dt != 0.0) {
            return Err(config_err(
                "dt",
                format!("must be finite and nonzero, got {dt}"),
            ));
        }
        let phase = dt.abs() * grid.max_kinetic_energy() / grid.hbar();
        if phase >= 2.0 * std::f64::consts::PI {
            return Err(Error::StabilityBound { phase });
        }
        let kinetic = kinetic_energies(&grid);
        let kinetic_phase = phases(&kinetic, dt / grid.hbar());
        let half = dt / (2.0 * grid.hbar());
        let half_potential = (!potential.static_values().iter().all(|v| *v == 0.0))
            .then(|| phases(potential.static_values(), half));
        let frame_half_potential = (0..potential.frame_count())
            .map(|i| phases(potential.frame_values(i), half))
            .collect();
        Ok(Self {
            spectral: SpectralPlan::new(&grid),
            grid,
            dt,
            potential,
            kinetic,
            kinetic_phase,
            half_potential,
            frame_half_potential,
        })
    }

    pub fn free(grid: &GridSpec, dt: f64) -> Result<Self> {
        Self::new(dt, Potential::zero(grid))
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn spectral(&self) -> &SpectralPlan {
        &self.spectral
    }

    pub fn kinetic_phase(&self) -> &[Complex64] {
        &self.kinetic_phase
    }

    /// Same plan with the sign of `dt` flipped.
    pub fn reversed(&self) -> Self {
        let conj = |v: &Vec<Complex64>| v.iter().map(Complex64::conj).collect::<Vec<_>>();
        Self {
            grid: self.grid.clone(),
            dt: -self.dt,
            potential: self.potential.clone(),
            spectral: self.spectral.clone(),
            kinetic: self.kinetic.clone(),
            kinetic_phase: conj(&self.kinetic_phase),
            half_potential: self.half_potential.as_ref().map(conj),
            frame_half_potential: self.frame_half_potential.iter().map(conj).collect(),
        }
    }

    fn half_factors(&self, t_mid: f64) -> Option<&[Complex64]> {
        match self.potential.frame_index(t_mid) {
            Some(i) => Some(&self.frame_half_potential[i]),
            None => self.half_potential.as_deref(),
        }
    }

    pub fn step_in_place(&self, f: &mut WaveField) -> Result<()> {
        self.grid.ensure_same(f.grid())?;
        let t = f.time();
        let half = self.half_factors(t + 0.5 * self.dt);
        let amps = f.amplitudes_mut();
        if let Some(h) = half {
            amps.par_iter_mut().zip(h).for_each(|(z, p)| *z *= p);
        }
        self.spectral.forward(amps);
        amps.par_iter_mut()
            .zip(&self.kinetic_phase)
            .for_each(|(z, p)| *z *= p);
        self.spectral.inverse(amps);
        if let Some(h) = half {
            amps.par_iter_mut().zip(h).for_each(|(z, p)| *z *= p);
        }
        f.set_time(t + self.dt);
        Ok(())
    }

    pub fn step(&self, f: &WaveField) -> Result<WaveField> {
        let mut out = f.clone();
        self.step_in_place(&mut out)?;
        Ok(out)
    }

    /// Number of steps covering `duration`, and the duration it actually spans.
    pub fn steps_for(&self, duration: f64) -> usize {
        (duration / self.dt.abs()).round() as usize
    }

    /// Evolves for `t_final` (elapsed time, in units of `|dt|`) and returns
    /// the field at each of `snapshot_times`, measured from the start.
    /// With no snapshot times the final field alone is returned.
    pub fn evolve(
        &self,
        f: &WaveField,
        t_final: f64,
        snapshot_times: &[f64],
    ) -> Result<Vec<WaveField>> {
        if !(t_final.is_finite() && t_final >= 0.0) {
            return Err(config_err(
                "t_final",
                format!("must be >= 0, got {t_final}"),
            ));
        }
        let h = self.dt.abs();
        let total = self.steps_for(t_final);
        let mut targets = Vec::with_capacity(snapshot_times.len().max(1));
        let mut prev = 0usize;
        for &t in snapshot_times {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::TimeMismatch(format!(
                    "snapshot time {t} is negative"
                )));
            }
            if t > t_final + 0.5 * h {
                return Err(Error::TimeMismatch(format!(
                    "snapshot time {t} is past t_final = {t_final}"
                )));
            }
            let s = (t / h).round() as usize;
            if ((s as f64) * h - t).abs() > 1e-9 * h.max(t) {
                warn!(
                    "snapshot time {t} rounded to step lattice at {}",
                    s as f64 * h
                );
            }
            if s < prev {
                return Err(Error::TimeMismatch(format!(
                    "snapshot times must be nondecreasing, got {t} after step {prev}"
                )));
            }
            prev = s;
            targets.push(s.min(total));
        }
        if targets.is_empty() {
            targets.push(total);
        }
        let mut out = Vec::with_capacity(targets.len());
        let mut work = f.clone();
        let mut done = 0usize;
        for &target in &targets {
            while done < target {
                self.step_in_place(&mut work)?;
                done += 1;
            }
            out.push(work.clone());
        }
        Ok(out)
    }

    /// `H f` with the potential taken at `f.time()`.
    pub fn apply_hamiltonian(&self, f: &WaveField) -> Result<WaveField> {
        self.grid.ensure_same(f.grid())?;
        hamiltonian(
            &self.spectral,
            &self.kinetic,
            self.potential.values_at(f.time()),
            f,
        )
    }
}

fn hamiltonian(
    spectral: &SpectralPlan,
    kinetic: &[f64],
    potential: &[f64],
    f: &WaveField,
) -> Result<WaveField> {
    let mut spec = f.amplitudes().to_vec();
    spectral.forward(&mut spec);
    spec.par_iter_mut().zip(kinetic).for_each(|(z, e)| *z *= e);
    spectral.inverse(&mut spec);
    spec.par_iter_mut()
        .zip(f.amplitudes())
        .zip(potential)
        .for_each(|((h, z), v)| *h += z * v);
    Ok(WaveField::from_amplitudes(f.grid(), spec)?.with_time(f.time()))
}

/// Spectral Laplacian plus the pointwise potential, without building a plan.
pub fn apply_hamiltonian(f: &WaveField, v: &Potential) -> Result<WaveField> {
    f.grid().ensure_same(v.grid())?;
    let spectral = SpectralPlan::new(f.grid());
    hamiltonian(
        &spectral,
        &kinetic_energies(f.grid()),
        v.values_at(f.time()),
        f,
    )
}

/// `‖H f − E f‖ / ‖f‖`.
pub fn eigen_residual(f: &WaveField, v: &Potential, energy: f64) -> Result<f64> {
    let hf = apply_hamiltonian(f, v)?;
    let r = WaveField::linear_combination(&[
        (Complex64::new(1.0, 0.0), &hf),
        (Complex64::new(-energy, 0.0), f),
    ])?;
    let n = f.norm();
    if n == 0.0 {
        return Err(Error::DegenerateState(
            "eigen residual of a zero field".into(),
        ));
    }
    Ok(r.norm() / n)
}
