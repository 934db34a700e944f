//! Guidance velocity `v_k = (ħ/m_k) Im(∂_k ψ / ψ)` on the grid and off it.
//!
//! The velocity is formed from the current, `Im(ψ* ∂ψ) / |ψ|²`, with
//! spectral derivatives. Points where `|ψ|² < NODE_THRESHOLD · peak` are
//! nodes: their velocity is interpolated from the nearest non-node points
//! along each axis and the count is reported.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{config_err, Error, Result};
use crate::fft::SpectralPlan;
use crate::wavefield::{GridSpec, WaveField};

pub const NODE_THRESHOLD: f64 = 1e-12;

/// Largest per-axis point count accepted by the exact trigonometric evaluator.
pub const SPECTRAL_EVAL_MAX_POINTS: usize = 64;

#[derive(Debug, Clone)]
pub struct VelocityField {
    grid: GridSpec,
    components: Vec<Vec<f64>>,
    flagged: Vec<bool>,
    regularized: usize,
    time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VelocitySample {
    pub velocity: Vec<f64>,
    /// The interpolation stencil touched a regularized node point.
    pub near_node: bool,
}

impl VelocityField {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        &self.components[axis]
    }

    pub fn regularized_count(&self) -> usize {
        self.regularized
    }

    pub fn is_flagged(&self, flat: usize) -> bool {
        self.flagged[flat]
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Velocity at grid index `flat`.
    pub fn at_index(&self, flat: usize) -> Vec<f64> {
        self.components.iter().map(|c| c[flat]).collect()
    }

    /// Tensor-product cubic Lagrange interpolation of each component at `q`,
    /// taken modulo the periodic box. Exact at grid points.
    pub fn at(&self, q: &[f64]) -> Result<VelocitySample> {
        let mut out = vec![0.0; self.grid.dims()];
        let near_node = self.interpolate_into(q, &mut out)?;
        Ok(VelocitySample {
            velocity: out,
            near_node,
        })
    }

    /// Allocation-free form of [`at`](Self::at); returns the node flag.
    pub fn interpolate_into(&self, q: &[f64], out: &mut [f64]) -> Result<bool> {
        let stencil = Stencil::new(&self.grid, q)?;
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut near_node = false;
        stencil.for_each(|flat, w| {
            near_node |= self.flagged[flat];
            for (o, c) in out.iter_mut().zip(&self.components) {
                *o += w * c[flat];
            }
        });
        Ok(near_node)
    }
}

/// Cubic Lagrange weights for nodes at offsets -1, 0, 1, 2 and fraction `t`.
pub(crate) fn cubic_weights(t: f64) -> [f64; 4] {
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

/// Periodic 4^d interpolation stencil around a point.
pub(crate) struct Stencil {
    dims: usize,
    index: [[usize; 4]; 3],
    weight: [[f64; 4]; 3],
    strides: [usize; 3],
}

impl Stencil {
    pub(crate) fn new(grid: &GridSpec, q: &[f64]) -> Result<Self> {
        if q.len() != grid.dims() {
            return Err(Error::GridMismatch(format!(
                "point has {} coordinates, grid has {} axes",
                q.len(),
                grid.dims()
            )));
        }
        if q.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("coordinates {q:?}")));
        }
        let mut index = [[0usize; 4]; 3];
        let mut weight = [[0.0; 4]; 3];
        let mut strides = [0usize; 3];
        for (a, s) in grid.strides().into_iter().enumerate() {
            strides[a] = s;
        }
        for (a, &x) in q.iter().enumerate() {
            let ax = grid.axis(a);
            let n = ax.n as i64;
            let mut s = (grid.wrap(a, x) - ax.lo) / ax.spacing();
            let r = s.round();
            if (s - r).abs() < 1e-12 * n as f64 {
                s = r;
            }
            let j0 = s.floor();
            let t = s - j0;
            let j0 = j0 as i64;
            let w = cubic_weights(t);
            for o in 0..4 {
                index[a][o] = (j0 - 1 + o as i64).rem_euclid(n) as usize;
                weight[a][o] = w[o];
            }
        }
        Ok(Self {
            dims: grid.dims(),
            index,
            weight,
            strides,
        })
    }

    pub(crate) fn for_each(&self, mut f: impl FnMut(usize, f64)) {
        match self.dims {
            1 => {
                for o in 0..4 {
                    let w = self.weight[0][o];
                    if w != 0.0 {
                        f(self.index[0][o], w);
                    }
                }
            }
            2 => {
                for o0 in 0..4 {
                    for o1 in 0..4 {
                        let w = self.weight[0][o0] * self.weight[1][o1];
                        if w != 0.0 {
                            f(self.index[0][o0] * self.strides[0] + self.index[1][o1], w);
                        }
                    }
                }
            }
            _ => {
                for o0 in 0..4 {
                    for o1 in 0..4 {
                        for o2 in 0..4 {
                            let w = self.weight[0][o0] * self.weight[1][o1] * self.weight[2][o2];
                            if w != 0.0 {
                                f(
                                    self.index[0][o0] * self.strides[0]
                                        + self.index[1][o1] * self.strides[1]
                                        + self.index[2][o2],
                                    w,
                                );
                            }
                        }
                    }
                }
            }
        }
    }
}

pub fn velocity_field(f: &WaveField) -> Result<VelocityField> {
    velocity_field_with(&SpectralPlan::new(f.grid()), f)
}

/// As [`velocity_field`], reusing a prepared transform plan.
pub fn velocity_field_with(spectral: &SpectralPlan, f: &WaveField) -> Result<VelocityField> {
    let grid = f.grid();
    let psi = f.amplitudes();
    let rho: Vec<f64> = psi.iter().map(Complex64::norm_sqr).collect();
    let peak = rho.iter().copied().fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(Error::DegenerateState("velocity of a zero field".into()));
    }
    let threshold = NODE_THRESHOLD * peak;
    let flagged: Vec<bool> = rho.iter().map(|r| *r < threshold).collect();
    let regularized = flagged.iter().filter(|f| **f).count();

    let mut components = Vec::with_capacity(grid.dims());
    for a in 0..grid.dims() {
        let scale = grid.hbar() / grid.mass(a);
        let dpsi = spectral.derivative(psi, a);
        let v: Vec<f64> = psi
            .iter()
            .zip(&dpsi)
            .zip(&rho)
            .zip(&flagged)
            .map(|(((z, d), r), &node)| {
                if node {
                    0.0
                } else {
                    scale * (z.conj() * d).im / r
                }
            })
            .collect();
        components.push(v);
    }
    if regularized > 0 {
        regularize(grid, &flagged, &mut components);
    }
    if let Some(c) = components.iter().flatten().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("velocity component {c}")));
    }
    Ok(VelocityField {
        grid: grid.clone(),
        components,
        flagged,
        regularized,
        time: f.time(),
    })
}

/// Replaces flagged entries by the average, over axes, of linear
/// interpolation between the nearest unflagged neighbours along that axis.
fn regularize(grid: &GridSpec, flagged: &[bool], components: &mut [Vec<f64>]) {
    let len = grid.len();
    let mut sums = vec![vec![0.0; len]; components.len()];
    let mut counts = vec![0u32; len];
    let strides = grid.strides();
    let mut left = Vec::new();
    let mut right = Vec::new();
    let mut line = Vec::new();
    for (b, &stride) in strides.iter().enumerate() {
        let n = grid.axis(b).n;
        for start in (0..len).filter(|i| (i / stride) % n == 0) {
            line.clear();
            line.extend((0..n).map(|j| start + j * stride));
            let Some(anchor) = (0..n).find(|&j| !flagged[line[j]]) else {
                continue;
            };
            // nearest unflagged index on each side, cyclically
            left.clear();
            left.resize(n, 0usize);
            right.clear();
            right.resize(n, 0usize);
            let mut last = anchor;
            for step in 1..=n {
                let j = (anchor + step) % n;
                if !flagged[line[j]] {
                    last = j;
                }
                left[j] = last;
            }
            let mut last = anchor;
            for step in 1..=n {
                let j = (anchor + n - step) % n;
                if !flagged[line[j]] {
                    last = j;
                }
                right[j] = last;
            }
            for j in 0..n {
                let flat = line[j];
                if !flagged[flat] {
                    continue;
                }
                let dl = ((j + n - left[j]) % n) as f64;
                let dr = ((right[j] + n - j) % n) as f64;
                for (c, s) in components.iter().zip(sums.iter_mut()) {
                    let vl = c[line[left[j]]];
                    let vr = c[line[right[j]]];
                    s[flat] += (vl * dr + vr * dl) / (dl + dr);
                }
                counts[flat] += 1;
            }
        }
    }
    for flat in 0..len {
        if flagged[flat] && counts[flat] > 0 {
            for (c, s) in components.iter_mut().zip(&sums) {
                c[flat] = s[flat] / counts[flat] as f64;
            }
        }
    }
}

/// Interpolated guidance velocity at an arbitrary point.
pub fn velocity_at(f: &WaveField, q: &[f64]) -> Result<Vec<f64>> {
    Ok(velocity_field(f)?.at(q)?.velocity)
}

/// Validation mode: evaluates ψ and ∇ψ at `q` by the full trigonometric sum
/// and returns `(ħ/m) Im(∇ψ/ψ)` there. Limited to small grids.
pub fn spectral_velocity_at(f: &WaveField, q: &[f64]) -> Result<Vec<f64>> {
    let (psi, grad) = trigonometric_eval(f, q)?;
    if psi.norm_sqr() == 0.0 {
        return Err(Error::DegenerateState(format!("ψ vanishes at {q:?}")));
    }
    let grid = f.grid();
    Ok(grad
        .iter()
        .enumerate()
        .map(|(a, d)| grid.hbar() / grid.mass(a) * (d / psi).im)
        .collect())
}

/// Band-limited interpolant of `f` and its gradient at `q`. The Nyquist mode
/// is taken as a cosine so real data interpolates to real values.
pub fn trigonometric_eval(f: &WaveField, q: &[f64]) -> Result<(Complex64, Vec<Complex64>)> {
    let grid = f.grid();
    if let Some(ax) = grid.axes().iter().find(|a| a.n > SPECTRAL_EVAL_MAX_POINTS) {
        return Err(config_err(
            "spectral evaluation",
            format!(
                "axis with {} points exceeds the {SPECTRAL_EVAL_MAX_POINTS}-point limit",
                ax.n
            ),
        ));
    }
    let _ = Stencil::new(grid, q)?;
    let mut coeffs = f.amplitudes().to_vec();
    SpectralPlan::new(grid).forward(&mut coeffs);
    let dims = grid.dims();
    let mut basis = Vec::with_capacity(dims);
    let mut dbasis = Vec::with_capacity(dims);
    for (a, &x) in q.iter().enumerate() {
        let ax = grid.axis(a);
        let ks = grid.wavenumbers(a);
        let u = x - ax.lo;
        let (b, d): (Vec<Complex64>, Vec<Complex64>) = ks
            .iter()
            .enumerate()
            .map(|(j, &k)| {
                if j == ax.n / 2 {
                    let kn = k.abs();
                    (
                        Complex64::new((kn * u).cos(), 0.0),
                        Complex64::new(-kn * (kn * u).sin(), 0.0),
                    )
                } else {
                    let e = Complex64::from_polar(1.0, k * u);
                    (e, Complex64::new(0.0, k) * e)
                }
            })
            .unzip();
        basis.push(b);
        dbasis.push(d);
    }
    let mut idx = vec![0; dims];
    let mut psi = Complex64::new(0.0, 0.0);
    let mut grad = vec![Complex64::new(0.0, 0.0); dims];
    for (flat, c) in coeffs.iter().enumerate() {
        grid.unravel(flat, &mut idx);
        let mut prod = *c;
        for a in 0..dims {
            prod *= basis[a][idx[a]];
        }
        psi += prod;
        for (g, gr) in grad.iter_mut().enumerate() {
            let mut p = *c;
            for a in 0..dims {
                p *= if a == g {
                    dbasis[a][idx[a]]
                } else {
                    basis[a][idx[a]]
                };
            }
            *gr += p;
        }
    }
    let inv = 1.0 / grid.len() as f64;
    Ok((psi * inv, grad.into_iter().map(|g| g * inv).collect()))
}
