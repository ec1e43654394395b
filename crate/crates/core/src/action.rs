//! The action functional `S[ψ] = ∫dz ∫dω/2π |∂_zψ − i(β₂/2)ω²ψ − V[ψ]|²`
//! on the `(z, ω)` lattice, and the log-normalisation of the path measure.
//!
//! Three evaluators are provided:
//!
//! * [`discrete_action`]: the causal explicit-Euler lattice sum that defines
//!   the measure, with the vertex taken at the earlier slice;
//! * [`interaction_picture_action`]: the same causal sum written for the
//!   interaction-picture field `φ = e^{-iβ₂ω²z/2}ψ`, i.e. with free
//!   propagation between slices treated exactly. Both converge to the same
//!   continuum action; this one makes the `γ = 0` lattice integral exactly
//!   Gaussian for any `N`;
//! * [`continuum_action`]: centred differences and the trapezoid rule, for
//!   smooth trajectories.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{kerr_vertex, ChannelParams};
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Complex field values `ψ_{i,j}` on the full lattice, rows `i = 0..=N`.
/// Rows `0` and `N` hold the boundary data and are not mutable through the
/// public API.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathLattice {
    modes: usize,
    steps: usize,
    values: Vec<Complex64>,
}

impl PathLattice {
    /// Boundary rows `X` and `Y`, interior filled with zeros.
    pub fn new(grid: &Grid, x: &[Complex64], y: &[Complex64]) -> Result<Self> {
        Self::from_fn(grid, x, y, |_, _| Complex64::new(0.0, 0.0))
    }

    /// Boundary rows `X` and `Y`, interior `ψ_{i,j} = f(i, j)`.
    pub fn from_fn(
        grid: &Grid,
        x: &[Complex64],
        y: &[Complex64],
        mut f: impl FnMut(usize, usize) -> Complex64,
    ) -> Result<Self> {
        grid.check_len(x.len())?;
        grid.check_len(y.len())?;
        let (m, n) = (grid.modes(), grid.steps());
        let mut values = Vec::with_capacity((n + 1) * m);
        values.extend_from_slice(x);
        for i in 1..n {
            values.extend((0..m).map(|j| f(i, j)));
        }
        values.extend_from_slice(y);
        let path = Self { modes: m, steps: n, values };
        if !path.is_finite() {
            return Err(Error::InvalidParameter("path lattice contains non-finite values".into()));
        }
        Ok(path)
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.values[i * self.modes..(i + 1) * self.modes]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Complex64]> {
        self.values.chunks(self.modes)
    }

    /// Mutable access to an interior slice `0 < i < N`.
    ///
    /// Panics on a boundary row.
    pub fn interior_row_mut(&mut self, i: usize) -> &mut [Complex64] {
        assert!(i > 0 && i < self.steps, "row {i} is a boundary row");
        &mut self.values[i * self.modes..(i + 1) * self.modes]
    }

    pub fn x(&self) -> &[Complex64] {
        self.row(0)
    }

    pub fn y(&self) -> &[Complex64] {
        self.row(self.steps)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub(crate) fn check_grid(&self, grid: &Grid) -> Result<()> {
        grid.check_len(self.modes)?;
        if self.steps != grid.steps() {
            return Err(Error::InvalidGrid(format!(
                "path has {} steps, grid has {}",
                self.steps,
                grid.steps()
            )));
        }
        Ok(())
    }
}

/// `a_j = β₂ω_j²/2`.
pub(crate) fn dispersion_rates(grid: &Grid, beta2: f64) -> Vec<f64> {
    grid.omegas().iter().map(|w| 0.5 * beta2 * w * w).collect()
}

/// Causal explicit-Euler action
/// `Δδ Σ_{i=1..N} Σ_j |δψ_{i,j}/Δ − i(β₂/2)ω_j²ψ_{i−1,j} − V_{i−1,j}|²`.
pub fn discrete_action(grid: &Grid, path: &PathLattice, params: &ChannelParams) -> Result<f64> {
    path.check_grid(grid)?;
    let rates = dispersion_rates(grid, params.beta2);
    let dz = grid.dz();
    let mut total = 0.0;
    for i in 1..=grid.steps() {
        let (prev, cur) = (path.row(i - 1), path.row(i));
        let v = kerr_vertex(grid, prev, params.gamma);
        for j in 0..grid.modes() {
            let r = (cur[j] - prev[j]) / dz - Complex64::new(0.0, rates[j]) * prev[j] - v[j];
            total += r.norm_sqr();
        }
    }
    Ok(total * dz * grid.delta())
}

/// Phase tables for the interaction picture `φ_{i,j} = e^{-i a_j z_i} ψ_{i,j}`.
#[derive(Clone, Debug)]
pub struct InteractionFrame {
    modes: usize,
    /// `e^{+i a_j z_i}`, row-major `(N+1) × M`.
    phases: Vec<Complex64>,
}

impl InteractionFrame {
    pub fn new(grid: &Grid, beta2: f64) -> Self {
        let rates = dispersion_rates(grid, beta2);
        let m = grid.modes();
        let mut phases = Vec::with_capacity((grid.steps() + 1) * m);
        for i in 0..=grid.steps() {
            let z = grid.z(i);
            phases.extend(rates.iter().map(|a| Complex64::from_polar(1.0, a * z)));
        }
        Self { modes: m, phases }
    }

    /// `e^{+i a_j z_i}` for slice `i`.
    pub fn phase_row(&self, i: usize) -> &[Complex64] {
        &self.phases[i * self.modes..(i + 1) * self.modes]
    }

    pub fn to_lab(&self, i: usize, phi: &[Complex64], out: &mut [Complex64]) {
        for ((o, p), e) in out.iter_mut().zip(phi).zip(self.phase_row(i)) {
            *o = p * e;
        }
    }

    pub fn to_interaction(&self, i: usize, psi: &[Complex64], out: &mut [Complex64]) {
        for ((o, p), e) in out.iter_mut().zip(psi).zip(self.phase_row(i)) {
            *o = p * e.conj();
        }
    }

    /// Returns `(Σ|δφ/Δ − e^{-iaz}V|², Σ|δφ/Δ|²)`, both without the `Δδ`
    /// factor, for interaction-picture rows `phi[i]`, `i = 0..=N`.
    ///
    /// When `gamma == 0` the two sums are bitwise identical.
    pub(crate) fn action_sums(&self, grid: &Grid, phi: &[Vec<Complex64>], gamma: f64) -> (f64, f64) {
        let m = self.modes;
        let dz = grid.dz();
        let mut lab = vec![Complex64::new(0.0, 0.0); m];
        let (mut full, mut free) = (0.0, 0.0);
        for i in 1..phi.len() {
            let rotated_vertex = if gamma != 0.0 {
                self.to_lab(i - 1, &phi[i - 1], &mut lab);
                let mut v = kerr_vertex(grid, &lab, gamma).into_vec();
                for (x, e) in v.iter_mut().zip(self.phase_row(i - 1)) {
                    *x *= e.conj();
                }
                Some(v)
            } else {
                None
            };
            for j in 0..m {
                let d = (phi[i][j] - phi[i - 1][j]) / dz;
                free += d.norm_sqr();
                let r = match &rotated_vertex {
                    Some(v) => d - v[j],
                    None => d,
                };
                full += r.norm_sqr();
            }
        }
        (full, free)
    }
}

/// Causal action with exact free propagation between slices,
/// `Δδ Σ_i Σ_j |δφ_{i,j}/Δ − e^{-ia_j z_{i−1}} V_{i−1,j}|²`.
pub fn interaction_picture_action(grid: &Grid, path: &PathLattice, params: &ChannelParams) -> Result<f64> {
    path.check_grid(grid)?;
    let frame = InteractionFrame::new(grid, params.beta2);
    let phi: Vec<Vec<Complex64>> = path
        .rows()
        .enumerate()
        .map(|(i, row)| {
            let mut out = vec![Complex64::new(0.0, 0.0); row.len()];
            frame.to_interaction(i, row, &mut out);
            out
        })
        .collect();
    let (full, _) = frame.action_sums(grid, &phi, params.gamma);
    Ok(full * grid.dz() * grid.delta())
}

/// Second-order z-derivative of row `i` (centred inside, one-sided at the ends).
pub(crate) fn centered_derivative(path: &PathLattice, i: usize, dz: f64, out: &mut [Complex64]) {
    let n = path.steps();
    let m = path.modes();
    for j in 0..m {
        let v = |k: usize| path.row(k)[j];
        out[j] = if i == 0 {
            (-3.0 * v(0) + 4.0 * v(1) - v(2)) / (2.0 * dz)
        } else if i == n {
            (3.0 * v(n) - 4.0 * v(n - 1) + v(n - 2)) / (2.0 * dz)
        } else {
            (v(i + 1) - v(i - 1)) / (2.0 * dz)
        };
    }
}

/// Trapezoid-rule action with centred derivatives and the vertex taken at
/// the same slice. Needs `N ≥ 2`.
pub fn continuum_action(grid: &Grid, path: &PathLattice, params: &ChannelParams) -> Result<f64> {
    path.check_grid(grid)?;
    let n = grid.steps();
    if n < 2 {
        return Err(Error::InvalidGrid("continuum action needs at least 2 steps".into()));
    }
    let rates = dispersion_rates(grid, params.beta2);
    let dz = grid.dz();
    let mut d = vec![Complex64::new(0.0, 0.0); grid.modes()];
    let mut total = 0.0;
    for i in 0..=n {
        centered_derivative(path, i, dz, &mut d);
        let row = path.row(i);
        let v = kerr_vertex(grid, row, params.gamma);
        let density: f64 = (0..grid.modes())
            .map(|j| (d[j] - Complex64::new(0.0, rates[j]) * row[j] - v[j]).norm_sqr())
            .sum();
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        total += w * density;
    }
    Ok(total * dz * grid.delta())
}

/// `log Λ̃ = −NM log(ΔπQ/δ)` and `log Λ = −M log(πQL/δ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogMeasure {
    pub log_lambda_tilde: f64,
    pub log_lambda: f64,
}

pub fn log_measure_constants(grid: &Grid, q: f64) -> Result<LogMeasure> {
    if !(q.is_finite() && q > 0.0) {
        return Err(Error::InvalidParameter(format!("Q must be > 0, got {q}")));
    }
    let (m, n) = (grid.modes() as f64, grid.steps() as f64);
    let pi = std::f64::consts::PI;
    Ok(LogMeasure {
        log_lambda_tilde: -n * m * (grid.dz() * pi * q / grid.delta()).ln(),
        log_lambda: -m * (pi * q * grid.length() / grid.delta()).ln(),
    })
}
