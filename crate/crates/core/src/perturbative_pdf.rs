//! Weak-nonlinearity closed forms: the Gaussian zeroth-order density and the
//! first-order correction in `γ`.
//!
//! The first-order bracket is
//!
//! ```text
//! Im{ (W L / 3π) ∫dω/2π e^{-iβ₂ω²L/2} Y X̄  +  G }
//! G = (2/Q) ∫₀ᴸ dz/L ∫dω dω₁ dω₂/(2π)³ e^{iβ₂(ω−ω₁)(ω−ω₂)z} B λ̄₁ λ̄₂ λ₃
//! ```
//!
//! with `λ(z) = X + zB/L`. Using `(ω−ω₁)(ω−ω₂) = (ω² + ω₃² − ω₁² − ω₂²)/2`
//! the kernel factors into free propagators, so each `z` node costs one cubic
//! convolution of the propagated interpolant.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::action::log_measure_constants;
use crate::channel::{cubic_convolution, dispersion_phases, free_propagate, ChannelParams};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::grid::{Grid, SpectralField};
use crate::pathint_mc::{LogPdf, Method};
use crate::quad::gauss_legendre;

use std::f64::consts::PI;

/// `B(ω) = Y(ω) e^{-iβ₂ω²L/2} − X(ω)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MismatchField {
    pub b: SpectralField,
}

pub fn mismatch(grid: &Grid, x: &[Complex64], y: &[Complex64], params: &ChannelParams) -> Result<MismatchField> {
    grid.check_len(x.len())?;
    grid.check_len(y.len())?;
    let back = free_propagate(grid, y, params.beta2, -grid.length());
    Ok(MismatchField {
        b: SpectralField::from_fn(grid.modes(), |j| back[j] - x[j]),
    })
}

/// Straight line `λ(z) = X + zB/L` between the input and the derotated output.
#[derive(Clone, Debug)]
pub struct InterpolantField {
    pub x: SpectralField,
    pub b: SpectralField,
    pub length: f64,
}

impl InterpolantField {
    pub fn new(x: &[Complex64], b: &[Complex64], length: f64) -> Self {
        Self {
            x: SpectralField::new(x.to_vec()),
            b: SpectralField::new(b.to_vec()),
            length,
        }
    }

    pub fn at(&self, z: f64) -> SpectralField {
        let s = z / self.length;
        SpectralField::from_fn(self.x.len(), |j| self.x[j] + s * self.b[j])
    }
}

/// Zeroth order: `log Λ − (1/QL) δΣ|B_j|²`.
pub fn log_p0(grid: &Grid, x: &[Complex64], y: &[Complex64], params: &ChannelParams) -> Result<LogPdf> {
    params.require_noise()?;
    let b = mismatch(grid, x, y, params)?.b;
    let measure = log_measure_constants(grid, params.q)?;
    let log_p = measure.log_lambda - grid.freq_norm_sqr(&b) / (params.q * grid.length());
    Ok(LogPdf::deterministic(log_p, Method::Series0, grid, params))
}

/// How the `z` integral of the `G` term is discretised.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ZRule {
    /// Gauss–Legendre with the given number of nodes, checked against twice
    /// as many.
    GaussLegendre { nodes: usize },
    /// Left-endpoint sum on the causal lattice with `steps` slices. This is
    /// the exact first-order expansion of the interaction-picture lattice
    /// integral at that resolution; the bandwidth term picks up the factor
    /// `1 − 1/N²` of the discrete Brownian bridge.
    Lattice { steps: usize },
}

impl Default for ZRule {
    fn default() -> Self {
        ZRule::GaussLegendre { nodes: 32 }
    }
}

/// Exponent of the `G` kernel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelConvention {
    /// `e^{iβ₂(ω−ω₁)(ω−ω₂)z}`.
    #[default]
    RunningZ,
    /// `e^{μz}` with `μ = iβ₂(ω−ω₁)(ω−ω₂)L` read literally.
    Literal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstOrderOptions {
    pub rule: ZRule,
    pub convention: KernelConvention,
    pub execution: Execution,
    /// Maximum change allowed when the Gauss–Legendre order is doubled.
    pub self_check_tol: f64,
}

impl Default for FirstOrderOptions {
    fn default() -> Self {
        Self {
            rule: ZRule::default(),
            convention: KernelConvention::default(),
            execution: Execution::default(),
            self_check_tol: 1e-8,
        }
    }
}

/// The two pieces of the first-order bracket.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstOrderTerms {
    /// `Im{(WL/3π) ∫dω/2π e^{-iβ₂ω²L/2} Y X̄}`; independent of `Q`.
    pub bandwidth_term: f64,
    /// The complex integral `G`; scales as `1/Q`.
    pub g: Complex64,
}

impl FirstOrderTerms {
    /// The bracket `Im{… + G}`, so that `P⁽¹⁾ = P⁽⁰⁾ × total`.
    pub fn total(&self) -> f64 {
        self.bandwidth_term + self.g.im
    }
}

fn z_nodes(rule: ZRule, length: f64) -> Result<Vec<(f64, f64)>> {
    match rule {
        ZRule::GaussLegendre { nodes } => gauss_legendre(nodes, 0.0, length),
        ZRule::Lattice { steps } => {
            if steps == 0 {
                return Err(Error::InvalidParameter("lattice rule needs at least one step".into()));
            }
            let h = length / steps as f64;
            Ok((0..steps).map(|k| (k as f64 * h, h)).collect())
        }
    }
}

/// `δ Σ_j B_j e^{ia_j s} conj(N[λ(z) propagated by s])_j` where `s` is the
/// kernel's propagation distance at `z`.
fn g_integrand(grid: &Grid, lambda: &InterpolantField, beta2: f64, z: f64, s: f64) -> Complex64 {
    let w = free_propagate(grid, &lambda.at(z), beta2, s);
    let cubic = cubic_convolution(grid, &w);
    let phases = dispersion_phases(grid, beta2, s);
    let terms: Vec<Complex64> = (0..grid.modes())
        .map(|j| lambda.b[j] * phases[j] * cubic[j].conj())
        .collect();
    grid.freq_integral(&terms)
}

fn g_with_nodes(
    grid: &Grid,
    lambda: &InterpolantField,
    params: &ChannelParams,
    convention: KernelConvention,
    nodes: &[(f64, f64)],
    exec: Execution,
) -> Complex64 {
    let l = grid.length();
    let parts = map_indexed(exec, nodes.len(), |k| {
        let (z, w) = nodes[k];
        let s = match convention {
            KernelConvention::RunningZ => z,
            KernelConvention::Literal => z * l,
        };
        w * g_integrand(grid, lambda, params.beta2, z, s)
    });
    parts.into_iter().sum::<Complex64>() * (2.0 / (params.q * l))
}

/// The first-order bracket of the series in `γ`.
pub fn first_order_correction(
    grid: &Grid,
    x: &[Complex64],
    y: &[Complex64],
    params: &ChannelParams,
    opts: &FirstOrderOptions,
) -> Result<FirstOrderTerms> {
    params.require_noise()?;
    let b = mismatch(grid, x, y, params)?.b;
    let l = grid.length();
    let lambda = InterpolantField::new(x, &b, l);
    let nodes = z_nodes(opts.rule, l)?;
    let g = g_with_nodes(grid, &lambda, params, opts.convention, &nodes, opts.execution);
    if let ZRule::GaussLegendre { nodes: n } = opts.rule {
        let finer = g_with_nodes(grid, &lambda, params, opts.convention, &z_nodes(ZRule::GaussLegendre { nodes: 2 * n }, l)?, opts.execution);
        let change = (finer - g).norm();
        if change > opts.self_check_tol * g.norm().max(1.0) {
            return Err(Error::QuadratureNotConverged {
                achieved: change / g.norm().max(1.0),
                requested: opts.self_check_tol,
            });
        }
    }

    // Im{δ Σ (X + B) X̄} = Im{δ Σ B X̄}
    let overlap: Vec<Complex64> = (0..grid.modes()).map(|j| (x[j] + b[j]) * x[j].conj()).collect();
    let mut bandwidth_term = grid.spec().noise_bandwidth() * l / (3.0 * PI) * grid.freq_integral(&overlap).im;
    if let ZRule::Lattice { steps } = opts.rule {
        bandwidth_term *= 1.0 - 1.0 / (steps * steps) as f64;
    }
    Ok(FirstOrderTerms { bandwidth_term, g })
}

/// Truncated series in `γ`: order 0 gives `log P⁽⁰⁾`, order 1 gives
/// `log P⁽⁰⁾ + log(1 + γ × bracket)`, guarded by `|γ × bracket| < 1`.
pub fn series_log_pdf(
    grid: &Grid,
    x: &[Complex64],
    y: &[Complex64],
    params: &ChannelParams,
    order: u8,
    opts: &FirstOrderOptions,
) -> Result<LogPdf> {
    let p0 = log_p0(grid, x, y, params)?;
    match order {
        0 => Ok(p0),
        1 => {
            if params.gamma == 0.0 {
                return Ok(LogPdf { method: Method::Series1, ..p0 });
            }
            let corr = params.gamma * first_order_correction(grid, x, y, params, opts)?.total();
            if corr.abs() >= 1.0 {
                return Err(Error::SeriesGuard { value: corr.abs() });
            }
            Ok(LogPdf::deterministic(p0.log_p + corr.ln_1p(), Method::Series1, grid, params))
        }
        _ => Err(Error::InvalidParameter(format!("series order must be 0 or 1, got {order}"))),
    }
}
