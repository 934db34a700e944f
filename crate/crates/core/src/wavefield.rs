//! Grid geometry and the complex field sampled on it.
//!
//! Every grid is a periodic box. Point `j` on axis `a` sits at
//! `lo_a + j * h_a` with `h_a = (hi_a - lo_a) / n_a`, so `hi_a` itself is the
//! periodic image of `lo_a`. Arrays are row-major with the last axis fastest.
//! Integrals are cell-volume weighted sums, which is the trapezoid rule on a
//! periodic grid.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{config_err, Error, Result};

pub const MAX_DIMS: usize = 3;
pub const MIN_POINTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AxisSpec {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl AxisSpec {
    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn spacing(&self) -> f64 {
        self.length() / self.n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    axes: Vec<AxisSpec>,
    hbar: f64,
    masses: Vec<f64>,
}

impl GridSpec {
    /// Validates axes and physical constants.
    ///
    /// `masses` may be empty (all masses 1), a single value applied to every
    /// axis, or one value per axis.
    pub fn new(axes: &[(f64, f64, usize)], hbar: f64, masses: &[f64]) -> Result<Self> {
        if axes.is_empty() || axes.len() > MAX_DIMS {
            return Err(config_err(
                "axes",
                format!("expected 1 to {MAX_DIMS} axes, got {}", axes.len()),
            ));
        }
        let mut specs = Vec::with_capacity(axes.len());
        for (a, &(lo, hi, n)) in axes.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(config_err(format!("axes[{a}]"), "bounds must be finite"));
            }
            if lo >= hi {
                return Err(config_err(
                    format!("axes[{a}]"),
                    format!("lower bound {lo} must be below upper bound {hi}"),
                ));
            }
            if !n.is_power_of_two() || n < MIN_POINTS {
                return Err(config_err(
                    format!("axes[{a}].n"),
                    format!("{n} is not a power of two >= {MIN_POINTS}"),
                ));
            }
            specs.push(AxisSpec { lo, hi, n });
        }
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(config_err("hbar", format!("must be positive, got {hbar}")));
        }
        let masses = match masses.len() {
            0 => vec![1.0; specs.len()],
            1 => vec![masses[0]; specs.len()],
            m if m == specs.len() => masses.to_vec(),
            m => {
                return Err(config_err(
                    "masses",
                    format!("expected 1 or {} masses, got {m}", specs.len()),
                ))
            }
        };
        if let Some(bad) = masses.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
            return Err(config_err(
                "masses",
                format!("mass must be positive, got {bad}"),
            ));
        }
        Ok(Self {
            axes: specs,
            hbar,
            masses,
        })
    }

    /// Unit-constant grid (hbar = m = 1).
    pub fn natural(axes: &[(f64, f64, usize)]) -> Result<Self> {
        Self::new(axes, 1.0, &[])
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[AxisSpec] {
        &self.axes
    }

    pub fn axis(&self, a: usize) -> &AxisSpec {
        &self.axes[a]
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn mass(&self, a: usize) -> f64 {
        self.masses[a]
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.n).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, a: usize) -> f64 {
        self.axes[a].spacing()
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(AxisSpec::spacing).product()
    }

    /// Euclidean diagonal of the box.
    pub fn diameter(&self) -> f64 {
        self.axes
            .iter()
            .map(|a| a.length().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn check_axis(&self, a: usize) -> Result<()> {
        if a >= self.dims() {
            Err(Error::AxisOutOfRange {
                axis: a,
                dims: self.dims(),
            })
        } else {
            Ok(())
        }
    }

    pub fn coord(&self, a: usize, j: usize) -> f64 {
        let ax = &self.axes[a];
        ax.lo + j as f64 * ax.spacing()
    }

    pub fn coords(&self, a: usize) -> Vec<f64> {
        (0..self.axes[a].n).map(|j| self.coord(a, j)).collect()
    }

    /// Angular wavenumbers in FFT order.
    pub fn wavenumbers(&self, a: usize) -> Vec<f64> {
        let ax = &self.axes[a];
        let n = ax.n as isize;
        let dk = 2.0 * std::f64::consts::PI / ax.length();
        (0..n)
            .map(|j| if j < n / 2 { j } else { j - n })
            .map(|j| j as f64 * dk)
            .collect()
    }

    /// Largest eigenvalue of the discrete kinetic operator.
    pub fn max_kinetic_energy(&self) -> f64 {
        (0..self.dims())
            .map(|a| {
                let kmax = std::f64::consts::PI / self.spacing(a);
                self.hbar * self.hbar * kmax * kmax / (2.0 * self.masses[a])
            })
            .sum()
    }

    /// Row-major strides.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.dims()];
        for a in (0..self.dims().saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * self.axes[a + 1].n;
        }
        strides
    }

    pub fn unravel(&self, mut flat: usize, out: &mut [usize]) {
        for a in (0..self.dims()).rev() {
            let n = self.axes[a].n;
            out[a] = flat % n;
            flat /= n;
        }
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut idx = vec![0; self.dims()];
        self.unravel(flat, &mut idx);
        idx.iter()
            .enumerate()
            .map(|(a, &j)| self.coord(a, j))
            .collect()
    }

    /// Maps a coordinate into `[lo, hi)`.
    pub fn wrap(&self, a: usize, x: f64) -> f64 {
        let ax = &self.axes[a];
        let l = ax.length();
        let mut w = (x - ax.lo).rem_euclid(l) + ax.lo;
        if w >= ax.hi {
            w = ax.lo;
        }
        w
    }

    pub fn wrap_point(&self, q: &mut [f64]) {
        for (a, x) in q.iter_mut().enumerate() {
            *x = self.wrap(a, *x);
        }
    }

    pub fn contains(&self, q: &[f64]) -> bool {
        q.len() == self.dims()
            && q.iter()
                .zip(&self.axes)
                .all(|(x, ax)| x.is_finite() && *x >= ax.lo && *x <= ax.hi)
    }

    /// Grid restricted to the listed axes, keeping their masses.
    pub fn select_axes(&self, axes: &[usize]) -> Result<Self> {
        for &a in axes {
            self.check_axis(a)?;
        }
        Ok(Self {
            axes: axes.iter().map(|&a| self.axes[a]).collect(),
            hbar: self.hbar,
            masses: axes.iter().map(|&a| self.masses[a]).collect(),
        })
    }

    /// Product grid `self × other`, axes of `self` first.
    pub fn product(&self, other: &GridSpec) -> Result<Self> {
        if self.hbar != other.hbar {
            return Err(Error::GridMismatch(format!(
                "hbar differs: {} vs {}",
                self.hbar, other.hbar
            )));
        }
        if self.dims() + other.dims() > MAX_DIMS {
            return Err(config_err(
                "axes",
                format!(
                    "product grid would have {} axes",
                    self.dims() + other.dims()
                ),
            ));
        }
        let mut axes = self.axes.clone();
        axes.extend_from_slice(&other.axes);
        let mut masses = self.masses.clone();
        masses.extend_from_slice(&other.masses);
        Ok(Self {
            axes,
            hbar: self.hbar,
            masses,
        })
    }

    pub(crate) fn ensure_same(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )))
        }
    }
}

pub fn make_grid(axes: &[(f64, f64, usize)], hbar: f64, masses: &[f64]) -> Result<GridSpec> {
    GridSpec::new(axes, hbar, masses)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveField {
    grid: GridSpec,
    amplitudes: Vec<Complex64>,
    time: f64,
}

impl WaveField {
    /// Samples `builder` at every grid point without normalizing.
    pub fn sample(grid: &GridSpec, builder: impl Fn(&[f64]) -> Complex64) -> Result<Self> {
        let mut idx = vec![0; grid.dims()];
        let mut q = vec![0.0; grid.dims()];
        let mut amplitudes = Vec::with_capacity(grid.len());
        for flat in 0..grid.len() {
            grid.unravel(flat, &mut idx);
            for (a, &j) in idx.iter().enumerate() {
                q[a] = grid.coord(a, j);
            }
            let z = builder(&q);
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::NonFinite(format!("builder returned {z} at {q:?}")));
            }
            amplitudes.push(z);
        }
        Ok(Self {
            grid: grid.clone(),
            amplitudes,
            time: 0.0,
        })
    }

    /// Samples `builder` and normalizes; `time` starts at zero.
    pub fn from_fn(grid: &GridSpec, builder: impl Fn(&[f64]) -> Complex64) -> Result<Self> {
        let mut f = Self::sample(grid, builder)?;
        f.normalize()?;
        Ok(f)
    }

    pub fn from_amplitudes(grid: &GridSpec, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} amplitudes for a grid of {} points",
                amplitudes.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            amplitudes,
            time: 0.0,
        })
    }

    pub fn zeros(grid: &GridSpec) -> Self {
        Self {
            grid: grid.clone(),
            amplitudes: vec![Complex64::new(0.0, 0.0); grid.len()],
            time: 0.0,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.time = t;
        self
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(Complex64::norm_sqr).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::DegenerateState(format!(
                "cannot normalize a field of norm {n}"
            )));
        }
        let inv = 1.0 / n;
        self.amplitudes.iter_mut().for_each(|z| *z *= inv);
        Ok(())
    }

    pub fn normalized(&self) -> Result<Self> {
        let mut f = self.clone();
        f.normalize()?;
        Ok(f)
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self {
            grid: self.grid.clone(),
            amplitudes: self.amplitudes.iter().map(|z| z * c).collect(),
            time: self.time,
        }
    }

    /// `Σ c_i f_i` over fields sharing a grid; takes the time of the first term.
    pub fn linear_combination(terms: &[(Complex64, &WaveField)]) -> Result<Self> {
        let (_, first) = terms
            .first()
            .ok_or_else(|| Error::DegenerateState("empty linear combination".into()))?;
        let mut out = Self::zeros(&first.grid).with_time(first.time);
        for (c, f) in terms {
            first.grid.ensure_same(&f.grid)?;
            for (o, z) in out.amplitudes.iter_mut().zip(&f.amplitudes) {
                *o += c * z;
            }
        }
        Ok(out)
    }

    /// `⟨self, other⟩`, conjugate-linear in `self`.
    pub fn inner_product(&self, other: &WaveField) -> Result<Complex64> {
        self.grid.ensure_same(&other.grid)?;
        let s: Complex64 = self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(s * self.grid.cell_volume())
    }

    pub fn density(&self) -> DensityField {
        DensityField {
            grid: self.grid.clone(),
            values: self.amplitudes.iter().map(Complex64::norm_sqr).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &WaveField) -> Result<f64> {
        self.grid.ensure_same(&other.grid)?;
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }
}

/// Gaussian packet amplitude `exp(-(x-c)²/(4σ²) + i k x)`; `|·|²` has
/// standard deviation `σ`.
pub fn gaussian(x: f64, center: f64, sigma: f64, k: f64) -> Complex64 {
    let u = (x - center) / sigma;
    Complex64::from_polar((-0.25 * u * u).exp(), k * x)
}

pub fn init_field(grid: &GridSpec, builder: impl Fn(&[f64]) -> Complex64) -> Result<WaveField> {
    WaveField::from_fn(grid, builder)
}

pub fn inner_product(a: &WaveField, b: &WaveField) -> Result<Complex64> {
    a.inner_product(b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl DensityField {
    pub fn new(grid: &GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::NonFinite(format!("density value {v}")));
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// One-dimensional density along `axis` with every other axis integrated out.
    pub fn marginal(&self, axis: usize) -> Result<Vec<f64>> {
        self.grid.check_axis(axis)?;
        let n = self.grid.axis(axis).n;
        let stride = self.grid.strides()[axis];
        let weight = self.grid.cell_volume() / self.grid.spacing(axis);
        let mut out = vec![0.0; n];
        for (flat, v) in self.values.iter().enumerate() {
            out[(flat / stride) % n] += v;
        }
        out.iter_mut().for_each(|m| *m *= weight);
        Ok(out)
    }

    /// Largest density within `cells` grid cells of any face of the box,
    /// relative to the peak.
    pub fn boundary_ratio(&self, cells: usize) -> f64 {
        let peak = self.peak();
        if peak == 0.0 {
            return 0.0;
        }
        let shape = self.grid.shape();
        let mut idx = vec![0; shape.len()];
        let mut edge = 0.0f64;
        for (flat, &v) in self.values.iter().enumerate() {
            self.grid.unravel(flat, &mut idx);
            let near = idx
                .iter()
                .zip(&shape)
                .any(|(&j, &n)| j < cells || j + cells >= n);
            if near {
                edge = edge.max(v);
            }
        }
        edge / peak
    }
}

pub fn density(f: &WaveField) -> DensityField {
    f.density()
}

pub fn marginal(d: &DensityField, axis: usize) -> Result<Vec<f64>> {
    d.marginal(axis)
}

#[derive(Debug, Clone, PartialEq)]
struct PotentialFrame {
    start: f64,
    end: f64,
    values: Vec<f64>,
}

/// Real potential on a grid, optionally overridden by frames active on
/// half-open time windows `[start, end)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    grid: GridSpec,
    values: Vec<f64>,
    frames: Vec<PotentialFrame>,
}

impl Potential {
    pub fn zero(grid: &GridSpec) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
            frames: Vec::new(),
        }
    }

    pub fn from_values(grid: &GridSpec, values: Vec<f64>) -> Result<Self> {
        check_potential_values(grid, &values)?;
        Ok(Self {
            grid: grid.clone(),
            values,
            frames: Vec::new(),
        })
    }

    pub fn from_fn(grid: &GridSpec, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        Self::from_values(grid, values)
    }

    /// Adds a frame replacing the static values on `[start, end)`.
    pub fn with_frame(mut self, start: f64, end: f64, values: Vec<f64>) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && start < end) {
            return Err(config_err(
                "schedule",
                format!("bad window [{start}, {end})"),
            ));
        }
        check_potential_values(&self.grid, &values)?;
        self.frames.push(PotentialFrame { start, end, values });
        Ok(self)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn is_time_dependent(&self) -> bool {
        !self.frames.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.frames.is_empty() && self.values.iter().all(|v| *v == 0.0)
    }

    /// Index of the frame active at `t`, if any (first match wins).
    pub fn frame_index(&self, t: f64) -> Option<usize> {
        self.frames.iter().position(|f| t >= f.start && t < f.end)
    }

    pub fn values_at(&self, t: f64) -> &[f64] {
        match self.frame_index(t) {
            Some(i) => &self.frames[i].values,
            None => &self.values,
        }
    }

    pub fn static_values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn frame_values(&self, i: usize) -> &[f64] {
        &self.frames[i].values
    }

    pub(crate) fn frame_count(&self) -> usize {
        self.frames.len()
    }
}

fn check_potential_values(grid: &GridSpec, values: &[f64]) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "{} potential values for a grid of {} points",
            values.len(),
            grid.len()
        )));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "potential at {:?}",
            grid.point(i)
        )));
    }
    Ok(())
}
