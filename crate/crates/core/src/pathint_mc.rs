//! Monte-Carlo evaluation of the lattice path integral and a deterministic
//! quadrature oracle for tiny lattices.
//!
//! Interior slices are sampled from the exact `γ = 0` conditional law, a
//! complex Brownian bridge in the interaction picture. Dividing the full
//! integrand by the bridge density leaves
//!
//! ```text
//! P = P⁽⁰⁾ · E_bridge[ exp(−(S − S_free)/Q) ]
//! ```
//!
//! so at `γ = 0` every weight is exactly one.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::action::{InteractionFrame, PathLattice};
use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::grid::{Grid, GridSpec};
use crate::perturbative_pdf::log_p0;
use crate::quad::standard_normal_rule;
use crate::rng::{complex_normal, stream_rng};

use std::f64::consts::PI;

/// Which route produced a [`LogPdf`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    PathIntegral,
    BruteForce,
    Series0,
    Series1,
    SmallNoise,
    SmallNoiseClosedForm,
    QpskProduct,
}

/// `log P[Y|X]` together with its provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogPdf {
    pub log_p: f64,
    /// Standard error of `log_p`; zero for deterministic methods.
    pub std_err: f64,
    pub method: Method,
    /// Effective sample size of the importance weights.
    pub ess: Option<f64>,
    pub n_samples: Option<u64>,
    /// `max |log w|` over all draws.
    pub max_abs_log_weight: Option<f64>,
    pub reliable: bool,
    pub warnings: Vec<String>,
    pub grid: GridSpec,
    pub params: ChannelParams,
}

impl LogPdf {
    pub(crate) fn deterministic(log_p: f64, method: Method, grid: &Grid, params: &ChannelParams) -> Self {
        Self {
            log_p,
            std_err: 0.0,
            method,
            ess: None,
            n_samples: None,
            max_abs_log_weight: None,
            reliable: log_p.is_finite(),
            warnings: Vec::new(),
            grid: *grid.spec(),
            params: *params,
        }
    }

    pub fn probability(&self) -> f64 {
        self.log_p.exp()
    }
}

/// A bridge path and the log of its sampling density.
#[derive(Clone, Debug)]
pub struct BridgeSample {
    pub path: PathLattice,
    /// `log q(ψ_interior)`; `+∞` when the bridge has zero variance.
    pub log_density: f64,
}

/// Fill interior rows of `phi` (interaction picture) with a Brownian bridge
/// from `phi[0]` to `phi[N]`, returning the log density.
fn fill_bridge<R: Rng + ?Sized>(rng: &mut R, phi: &mut [Vec<Complex64>], step_var: f64) -> f64 {
    let n = phi.len() - 1;
    let m = phi[0].len();
    let mut log_q = 0.0;
    for i in 1..n {
        let remaining = (n - i + 1) as f64;
        let var = step_var * (n - i) as f64 / remaining;
        for j in 0..m {
            let prev = phi[i - 1][j];
            let mean = prev + (phi[n][j] - prev) / remaining;
            let zeta = complex_normal(rng, var);
            phi[i][j] = mean + zeta;
            log_q += if var > 0.0 {
                -(PI * var).ln() - zeta.norm_sqr() / var
            } else {
                f64::INFINITY
            };
        }
    }
    log_q
}

fn interaction_rows(grid: &Grid, frame: &InteractionFrame, x: &[Complex64], y: &[Complex64]) -> Vec<Vec<Complex64>> {
    let (n, m) = (grid.steps(), grid.modes());
    let mut phi = vec![vec![Complex64::new(0.0, 0.0); m]; n + 1];
    phi[0].copy_from_slice(x);
    frame.to_interaction(n, y, &mut phi[n]);
    phi
}

/// One draw from the free conditional law of the interior slices.
pub fn sample_bridge<R: Rng + ?Sized>(
    rng: &mut R,
    grid: &Grid,
    x: &[Complex64],
    y: &[Complex64],
    params: &ChannelParams,
) -> Result<BridgeSample> {
    grid.check_len(x.len())?;
    grid.check_len(y.len())?;
    params.validate()?;
    let frame = InteractionFrame::new(grid, params.beta2);
    let mut phi = interaction_rows(grid, &frame, x, y);
    let log_density = fill_bridge(rng, &mut phi, params.q * grid.dz() / grid.delta());
    let path = PathLattice::from_fn(grid, x, y, |i, j| phi[i][j] * frame.phase_row(i)[j])?;
    Ok(BridgeSample { path, log_density })
}

/// Streaming `(count, log Σw, log Σw²)` with the range of `log w`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightAccumulator {
    pub count: u64,
    pub log_sum: f64,
    pub log_sum_sq: f64,
    pub min_log_w: f64,
    pub max_log_w: f64,
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

impl Default for WeightAccumulator {
    fn default() -> Self {
        Self {
            count: 0,
            log_sum: f64::NEG_INFINITY,
            log_sum_sq: f64::NEG_INFINITY,
            min_log_w: f64::INFINITY,
            max_log_w: f64::NEG_INFINITY,
        }
    }
}

impl WeightAccumulator {
    pub fn push(&mut self, log_w: f64) {
        self.count += 1;
        self.log_sum = log_add(self.log_sum, log_w);
        self.log_sum_sq = log_add(self.log_sum_sq, 2.0 * log_w);
        self.min_log_w = self.min_log_w.min(log_w);
        self.max_log_w = self.max_log_w.max(log_w);
    }

    pub fn merge(&self, other: &Self) -> Self {
        Self {
            count: self.count + other.count,
            log_sum: log_add(self.log_sum, other.log_sum),
            log_sum_sq: log_add(self.log_sum_sq, other.log_sum_sq),
            min_log_w: self.min_log_w.min(other.min_log_w),
            max_log_w: self.max_log_w.max(other.max_log_w),
        }
    }

    pub fn log_mean(&self) -> f64 {
        self.log_sum - (self.count as f64).ln()
    }

    /// `n Σw² / (Σw)²`, equal to one when all weights coincide.
    pub fn second_moment_ratio(&self) -> f64 {
        if self.min_log_w == self.max_log_w {
            return 1.0;
        }
        ((self.count as f64).ln() + self.log_sum_sq - 2.0 * self.log_sum).exp()
    }

    pub fn ess(&self) -> f64 {
        self.count as f64 / self.second_moment_ratio()
    }

    /// Delta-method standard error of [`Self::log_mean`].
    pub fn log_mean_std_err(&self) -> f64 {
        let r = self.second_moment_ratio();
        ((r - 1.0).max(0.0) / (self.count as f64 - 1.0)).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOptions {
    pub n_samples: u64,
    pub seed: u64,
    /// Draws per random stream; fixes the result independently of threads.
    pub chunk_size: u64,
    pub execution: Execution,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            n_samples: 10_000,
            seed: 0,
            chunk_size: 4096,
            execution: Execution::default(),
        }
    }
}

/// ESS below which an estimate is flagged unreliable.
pub const MIN_RELIABLE_ESS: f64 = 10.0;

/// Importance-sampling estimate of `log P[Y|X]` with the bridge proposal.
pub fn estimate_log_pdf(
    grid: &Grid,
    x: &[Complex64],
    y: &[Complex64],
    params: &ChannelParams,
    opts: &EstimatorOptions,
) -> Result<LogPdf> {
    if opts.n_samples < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 samples, got {}", opts.n_samples)));
    }
    if opts.chunk_size == 0 {
        return Err(Error::InvalidParameter("chunk size must be positive".into()));
    }
    let p0 = log_p0(grid, x, y, params)?;
    let frame = InteractionFrame::new(grid, params.beta2);
    let base = interaction_rows(grid, &frame, x, y);
    let step_var = params.q * grid.dz() / grid.delta();
    let scale = grid.dz() * grid.delta() / params.q;

    let chunks = opts.n_samples.div_ceil(opts.chunk_size);
    let parts = map_indexed(opts.execution, chunks as usize, |c| {
        let mut rng = stream_rng(opts.seed, c as u64);
        let mut phi = base.clone();
        let mut acc = WeightAccumulator::default();
        let todo = opts.chunk_size.min(opts.n_samples - c as u64 * opts.chunk_size);
        for _ in 0..todo {
            fill_bridge(&mut rng, &mut phi, step_var);
            let (full, free) = frame.action_sums(grid, &phi, params.gamma);
            acc.push(-(full - free) * scale);
        }
        acc
    });
    let acc = parts.iter().fold(WeightAccumulator::default(), |a, b| a.merge(b));

    if acc.log_sum == f64::NEG_INFINITY || !acc.log_sum.is_finite() {
        return Err(Error::DegenerateWeights { samples: acc.count });
    }
    let ess = acc.ess();
    let mut warnings = Vec::new();
    let reliable = ess >= MIN_RELIABLE_ESS;
    if !reliable {
        warnings.push(format!(
            "effective sample size {ess:.1} below {MIN_RELIABLE_ESS}; nonlinearity too strong for the bridge sampler"
        ));
    }
    Ok(LogPdf {
        log_p: p0.log_p + acc.log_mean(),
        std_err: acc.log_mean_std_err(),
        method: Method::PathIntegral,
        ess: Some(ess),
        n_samples: Some(acc.count),
        max_abs_log_weight: Some(acc.max_log_w.abs().max(acc.min_log_w.abs())),
        reliable,
        warnings,
        grid: *grid.spec(),
        params: *params,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BruteForceOptions {
    /// First Gauss–Hermite order per real dimension.
    pub min_order: usize,
    pub rel_tol: f64,
    pub max_evaluations: u64,
    pub execution: Execution,
}

impl Default for BruteForceOptions {
    fn default() -> Self {
        Self {
            min_order: 8,
            rel_tol: 1e-10,
            max_evaluations: 200_000_000,
            execution: Execution::default(),
        }
    }
}

/// Complex interior variables allowed by [`brute_force_tiny`].
pub const MAX_BRUTE_FORCE_VARIABLES: usize = 3;

fn next_order(n: usize) -> usize {
    n + 4
}

/// Tensor-product quadrature of the path integral over every interior
/// variable.
///
/// The interior is parametrised by the sequential bridge map, in which the
/// free integrand is a product of standard normals, and each real coordinate
/// gets a Gauss–Hermite rule. The order is raised until the relative change
/// drops below `rel_tol`.
pub fn brute_force_tiny(
    grid: &Grid,
    x: &[Complex64],
    y: &[Complex64],
    params: &ChannelParams,
    opts: &BruteForceOptions,
) -> Result<LogPdf> {
    let (n, m) = (grid.steps(), grid.modes());
    let vars = m * (n - 1);
    if vars > MAX_BRUTE_FORCE_VARIABLES {
        return Err(Error::DimensionCap {
            dims: 2 * vars,
            max: 2 * MAX_BRUTE_FORCE_VARIABLES,
        });
    }
    let p0 = log_p0(grid, x, y, params)?;
    let frame = InteractionFrame::new(grid, params.beta2);
    let base = interaction_rows(grid, &frame, x, y);
    let scale = grid.dz() * grid.delta() / params.q;
    let step_var = params.q * grid.dz() / grid.delta();
    let dims = 2 * vars;
    if dims == 0 {
        let (full, free) = frame.action_sums(grid, &base, params.gamma);
        return Ok(LogPdf::deterministic(p0.log_p - (full - free) * scale, Method::BruteForce, grid, params));
    }
    // per-slice conditional sd of each real component
    let cond_sd: Vec<f64> = (1..n)
        .map(|i| (0.5 * step_var * (n - i) as f64 / (n - i + 1) as f64).sqrt())
        .collect();

    let integrate = |order: usize| -> Result<f64> {
        let nodes = standard_normal_rule(order)?;
        let k = nodes.len();
        let parts = map_indexed(opts.execution, k, |first| {
            let mut phi = base.clone();
            let mut idx = vec![0usize; dims];
            idx[0] = first;
            let mut sum = 0.0;
            loop {
                let mut w = 1.0;
                for i in 1..n {
                    let remaining = (n - i + 1) as f64;
                    for j in 0..m {
                        let d = 2 * ((i - 1) * m + j);
                        let (tr, wr) = nodes[idx[d]];
                        let (ti, wi) = nodes[idx[d + 1]];
                        let prev = phi[i - 1][j];
                        let mean = prev + (phi[n][j] - prev) / remaining;
                        phi[i][j] = mean + Complex64::new(tr, ti) * cond_sd[i - 1];
                        w *= wr * wi;
                    }
                }
                let (full, free) = frame.action_sums(grid, &phi, params.gamma);
                sum += w * (-(full - free) * scale).exp();
                let mut d = 1;
                while d < dims {
                    idx[d] += 1;
                    if idx[d] < k {
                        break;
                    }
                    idx[d] = 0;
                    d += 1;
                }
                if d == dims {
                    break;
                }
            }
            sum
        });
        Ok(parts.into_iter().sum())
    };

    let budget = opts.max_evaluations as f64;
    let mut order = opts.min_order.max(2);
    let mut prev = integrate(order)?;
    loop {
        let next = next_order(order);
        if (next as f64).powi(dims as i32) > budget {
            return Err(Error::QuadratureNotConverged {
                achieved: f64::NAN,
                requested: opts.rel_tol,
            });
        }
        let value = integrate(next)?;
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::DegenerateWeights {
                samples: (next as u64).pow(dims as u32),
            });
        }
        let change = ((value - prev) / value).abs();
        if change < opts.rel_tol {
            return Ok(LogPdf::deterministic(p0.log_p + value.ln(), Method::BruteForce, grid, params));
        }
        if (next_order(next) as f64).powi(dims as i32) > budget {
            return Err(Error::QuadratureNotConverged {
                achieved: change,
                requested: opts.rel_tol,
            });
        }
        prev = value;
        order = next;
    }
}
