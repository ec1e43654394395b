//! Joint propagation-distance / angular-frequency lattice and the discrete
//! Fourier convention used by every other module.
//!
//! Frequencies are `ω_j = Ω_min + 2π j δ` for `j = 0..M`, so every
//! `∫ dω/2π` becomes `δ Σ_j`. The matching time grid is `t_n = n / (M δ)`
//! over one period `T_total = 1/δ`, and the pair of transforms is
//!
//! ```text
//! u(t_n) = δ Σ_j f_j e^{-i ω_j t_n}          (to_time)
//! f_j    = (1/(Mδ)) Σ_n u(t_n) e^{i ω_j t_n}  (to_freq)
//! ```
//!
//! which reproduces `X(ω) = ∫ dt X(t) e^{iωt}` for band-limited periodic
//! signals. Products in the time domain are cyclic convolutions on the
//! frequency lattice (indices taken modulo `M`).

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Deref, DerefMut};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the `(z, ω)` lattice.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Number of frequency modes `M`.
    pub modes: usize,
    /// Number of propagation steps `N`.
    pub steps: usize,
    /// Mode spacing divided by `2π` (inverse time).
    pub delta: f64,
    /// Lowest angular frequency of the window.
    pub omega_min: f64,
    /// Total propagation distance `L`.
    pub length: f64,
}

impl GridSpec {
    pub fn new(modes: usize, steps: usize, delta: f64, omega_min: f64, length: f64) -> Result<Self> {
        let spec = Self {
            modes,
            steps,
            delta,
            omega_min,
            length,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Window centred on zero frequency: `Ω_min = -Ω_max`.
    pub fn symmetric(modes: usize, steps: usize, delta: f64, length: f64) -> Result<Self> {
        let omega_min = -PI * delta * (modes.max(1) - 1) as f64;
        Self::new(modes, steps, delta, omega_min, length)
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes == 0 {
            return Err(Error::InvalidGrid("at least one frequency mode is required".into()));
        }
        if self.steps == 0 {
            return Err(Error::InvalidGrid("at least one z-step is required".into()));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::InvalidGrid(format!("delta must be positive, got {}", self.delta)));
        }
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(Error::InvalidGrid(format!("length must be positive, got {}", self.length)));
        }
        if !self.omega_min.is_finite() {
            return Err(Error::InvalidGrid("omega_min must be finite".into()));
        }
        Ok(())
    }

    /// z-step `Δ = L / N`.
    pub fn dz(&self) -> f64 {
        self.length / self.steps as f64
    }

    pub fn z(&self, i: usize) -> f64 {
        if i == self.steps {
            self.length
        } else {
            i as f64 * self.dz()
        }
    }

    pub fn omega(&self, j: usize) -> f64 {
        self.omega_min + 2.0 * PI * self.delta * j as f64
    }

    pub fn omega_max(&self) -> f64 {
        self.omega(self.modes - 1)
    }

    /// `W = Ω_max - Ω_min = 2πδ(M-1)`.
    pub fn window_width(&self) -> f64 {
        2.0 * PI * self.delta * (self.modes - 1) as f64
    }

    /// Noise bandwidth in angular units, `2πδM`: every lattice mode carries
    /// one spacing `2πδ` of white noise.
    pub fn noise_bandwidth(&self) -> f64 {
        2.0 * PI * self.delta * self.modes as f64
    }

    /// Period of the time grid, `1/δ`.
    pub fn t_total(&self) -> f64 {
        1.0 / self.delta
    }

    pub fn dt(&self) -> f64 {
        1.0 / (self.modes as f64 * self.delta)
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt()
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "M={} N={} delta={} omega_min={} L={}",
            self.modes, self.steps, self.delta, self.omega_min, self.length
        )
    }
}

/// Complex spectral amplitudes on the frequency lattice at one `z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralField {
    values: Vec<Complex64>,
}

impl SpectralField {
    pub fn new(values: Vec<Complex64>) -> Self {
        Self { values }
    }

    pub fn zeros(modes: usize) -> Self {
        Self {
            values: vec![Complex64::new(0.0, 0.0); modes],
        }
    }

    pub fn from_fn(modes: usize, f: impl FnMut(usize) -> Complex64) -> Self {
        Self {
            values: (0..modes).map(f).collect(),
        }
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self::new(self.values.iter().map(|v| v * factor).collect())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl Deref for SpectralField {
    type Target = [Complex64];
    fn deref(&self) -> &[Complex64] {
        &self.values
    }
}

impl DerefMut for SpectralField {
    fn deref_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }
}

impl From<Vec<Complex64>> for SpectralField {
    fn from(values: Vec<Complex64>) -> Self {
        Self::new(values)
    }
}

/// A [`GridSpec`] together with cached FFT plans, the frequency samples and
/// the carrier phase `e^{-iΩ_min t_n}`. Cheap to clone and shareable across
/// threads.
#[derive(Clone)]
pub struct Grid {
    spec: GridSpec,
    omega: Arc<[f64]>,
    carrier: Arc<[Complex64]>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("spec", &self.spec).finish()
    }
}

impl Grid {
    pub fn new(spec: GridSpec) -> Result<Self> {
        spec.validate()?;
        let m = spec.modes;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let omega: Vec<f64> = (0..m).map(|j| spec.omega(j)).collect();
        let carrier: Vec<Complex64> = (0..m)
            .map(|n| Complex64::from_polar(1.0, -spec.omega_min * spec.time(n)))
            .collect();
        Ok(Self {
            spec,
            omega: omega.into(),
            carrier: carrier.into(),
            forward,
            inverse,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn modes(&self) -> usize {
        self.spec.modes
    }

    pub fn steps(&self) -> usize {
        self.spec.steps
    }

    pub fn delta(&self) -> f64 {
        self.spec.delta
    }

    pub fn length(&self) -> f64 {
        self.spec.length
    }

    pub fn dz(&self) -> f64 {
        self.spec.dz()
    }

    pub fn z(&self, i: usize) -> f64 {
        self.spec.z(i)
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omega
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.spec.modes {
            return Err(Error::GridMismatch {
                expected: self.spec.modes,
                found: len,
            });
        }
        Ok(())
    }

    /// `∫ dω/2π f(ω) ≈ δ Σ_j f_j`.
    pub fn freq_integral(&self, values: &[Complex64]) -> Complex64 {
        values.iter().sum::<Complex64>() * self.spec.delta
    }

    /// Frequency-domain samples to time-domain samples on `t_n = n/(Mδ)`.
    pub fn to_time(&self, f: &[Complex64]) -> Vec<Complex64> {
        let mut buf = f.to_vec();
        self.forward.process(&mut buf);
        let d = self.spec.delta;
        for (u, c) in buf.iter_mut().zip(self.carrier.iter()) {
            *u = *u * *c * d;
        }
        buf
    }

    /// Inverse of [`Grid::to_time`].
    pub fn to_freq(&self, u: &[Complex64]) -> SpectralField {
        let scale = self.spec.dt();
        let mut buf: Vec<Complex64> = u
            .iter()
            .zip(self.carrier.iter())
            .map(|(v, c)| v * c.conj())
            .collect();
        self.inverse.process(&mut buf);
        for v in buf.iter_mut() {
            *v *= scale;
        }
        SpectralField::new(buf)
    }

    /// Quadratic norm `δ Σ|f_j|²`.
    pub fn freq_norm_sqr(&self, f: &[Complex64]) -> f64 {
        self.spec.delta * f.iter().map(|v| v.norm_sqr()).sum::<f64>()
    }

    /// Quadratic norm `Σ dt |u_n|²` of a time-domain field.
    pub fn time_norm_sqr(&self, u: &[Complex64]) -> f64 {
        self.spec.dt() * u.iter().map(|v| v.norm_sqr()).sum::<f64>()
    }
}
