//! The noisy NLSE channel: free dispersion, the Kerr vertex, the additive
//! noise and a split-step forward integrator used as the empirical oracle.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, SpectralField};
use crate::rng::complex_normal;

/// Physical constants of the channel. The distance `L` belongs to the grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Group-velocity dispersion `β₂`.
    pub beta2: f64,
    /// Kerr coefficient `γ`.
    pub gamma: f64,
    /// Noise spectral density per unit distance `Q`.
    pub q: f64,
}

impl ChannelParams {
    pub fn new(beta2: f64, gamma: f64, q: f64) -> Result<Self> {
        let p = Self { beta2, gamma, q };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.beta2.is_finite() || !self.gamma.is_finite() {
            return Err(Error::InvalidParameter("beta2 and gamma must be finite".into()));
        }
        if !(self.q.is_finite() && self.q >= 0.0) {
            return Err(Error::InvalidParameter(format!("Q must be >= 0, got {}", self.q)));
        }
        Ok(())
    }

    pub fn require_noise(&self) -> Result<()> {
        self.validate()?;
        if self.q <= 0.0 {
            return Err(Error::InvalidParameter(format!("Q must be > 0, got {}", self.q)));
        }
        Ok(())
    }

    pub fn with_gamma(self, gamma: f64) -> Self {
        Self { gamma, ..self }
    }
}

/// `γ̃ = γ P_ave L`, `ε = Q L W / (2π P_ave)` and the average power.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionlessDiagnostics {
    pub gamma_tilde: f64,
    pub epsilon: f64,
    pub p_ave: f64,
}

impl DimensionlessDiagnostics {
    pub fn snr(&self) -> f64 {
        1.0 / self.epsilon
    }
}

/// Average power `T_total⁻¹ ∫dω/2π |X|²`.
pub fn average_power(grid: &Grid, x: &[Complex64]) -> f64 {
    grid.freq_norm_sqr(x) / grid.spec().t_total()
}

/// `W` in `ε` is the noise bandwidth `2πδM` of the lattice.
pub fn diagnostics(grid: &Grid, x: &[Complex64], params: &ChannelParams) -> Result<DimensionlessDiagnostics> {
    grid.check_len(x.len())?;
    let p_ave = average_power(grid, x);
    if p_ave <= 0.0 {
        return Err(Error::ZeroPower);
    }
    let l = grid.length();
    Ok(DimensionlessDiagnostics {
        gamma_tilde: params.gamma * p_ave * l,
        epsilon: params.q * l * grid.spec().noise_bandwidth() / (2.0 * std::f64::consts::PI * p_ave),
        p_ave,
    })
}

/// `∫dω₁dω₂/(2π)² ψ_{ω₁}ψ_{ω₂}ψ̄_{ω₃}` evaluated as `to_freq(|u|²u)`.
pub fn cubic_convolution(grid: &Grid, psi: &[Complex64]) -> SpectralField {
    let mut u = grid.to_time(psi);
    for v in u.iter_mut() {
        *v *= v.norm_sqr();
    }
    grid.to_freq(&u)
}

/// Kerr vertex `V[ψ] = iγ ∫dω₁dω₂/(2π)² ψ_{ω₁}ψ_{ω₂}ψ̄_{ω₃}`.
pub fn kerr_vertex(grid: &Grid, psi: &[Complex64], gamma: f64) -> SpectralField {
    if gamma == 0.0 {
        return SpectralField::zeros(psi.len());
    }
    let ig = Complex64::new(0.0, gamma);
    let mut v = cubic_convolution(grid, psi);
    for x in v.iter_mut() {
        *x *= ig;
    }
    v
}

/// Free-propagation phase `e^{iβ₂ω²z/2}` for every mode.
pub fn dispersion_phases(grid: &Grid, beta2: f64, z: f64) -> Vec<Complex64> {
    grid.omegas()
        .iter()
        .map(|w| Complex64::from_polar(1.0, 0.5 * beta2 * w * w * z))
        .collect()
}

/// Multiplies every mode by `e^{iβ₂ω_j²z/2}`.
pub fn free_propagate(grid: &Grid, psi: &[Complex64], beta2: f64, z: f64) -> SpectralField {
    if beta2 == 0.0 || z == 0.0 {
        return SpectralField::new(psi.to_vec());
    }
    SpectralField::new(
        psi.iter()
            .zip(dispersion_phases(grid, beta2, z))
            .map(|(p, e)| p * e)
            .collect(),
    )
}

/// Noise increment `∫ η dz` over one step: independent circular Gaussians
/// with total variance `QΔ/δ` per mode.
pub fn sample_noise_step<R: Rng + ?Sized>(rng: &mut R, grid: &Grid, q: f64) -> Result<SpectralField> {
    if !(q.is_finite() && q >= 0.0) {
        return Err(Error::InvalidParameter(format!("Q must be >= 0, got {q}")));
    }
    let m = grid.modes();
    if q == 0.0 {
        return Ok(SpectralField::zeros(m));
    }
    let var = q * grid.dz() / grid.delta();
    Ok(SpectralField::from_fn(m, |_| complex_normal(rng, var)))
}

/// One stochastic realisation of `ψ(L)` given `ψ(0) = X`: symmetric split
/// step (half dispersion, full Kerr rotation in time, half dispersion) with
/// the step's noise increment added after each step.
pub fn split_step_forward<R: Rng + ?Sized>(
    grid: &Grid,
    x: &[Complex64],
    params: &ChannelParams,
    rng: &mut R,
) -> Result<SpectralField> {
    grid.check_len(x.len())?;
    params.validate()?;
    let dz = grid.dz();
    let half = dispersion_phases(grid, params.beta2, 0.5 * dz);
    let noise_var = params.q * dz / grid.delta();
    let mut psi = x.to_vec();
    for _ in 0..grid.steps() {
        if params.beta2 != 0.0 {
            psi.iter_mut().zip(&half).for_each(|(p, e)| *p *= e);
        }
        if params.gamma != 0.0 {
            let mut u = grid.to_time(&psi);
            for v in u.iter_mut() {
                *v *= Complex64::from_polar(1.0, params.gamma * v.norm_sqr() * dz);
            }
            psi = grid.to_freq(&u).into_vec();
        }
        if params.beta2 != 0.0 {
            psi.iter_mut().zip(&half).for_each(|(p, e)| *p *= e);
        }
        if noise_var > 0.0 {
            for p in psi.iter_mut() {
                *p += complex_normal(rng, noise_var);
            }
        }
    }
    Ok(SpectralField::new(psi))
}
