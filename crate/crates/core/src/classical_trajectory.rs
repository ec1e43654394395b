//! Small-noise branch: the minimum-action path between `X` and `Y`, its
//! action, the order-`γ` fluctuation prefactor and the resulting density.
//!
//! The Euler–Lagrange equation of `∫dz ∫dω/2π |(∂_z − ia)Ψ − iγN[Ψ]|²`,
//! with `a = β₂ω²/2` and `N[Ψ] = F[|u|²u]`, reads
//!
//! ```text
//! (∂_z − ia)²Ψ = iγ(4F[|u|²ℓ] − K) + 3γ²F[|u|⁴u]
//! K = i(β₂/2)(ω²N[Ψ] + F[u² d̄] − 2F[|u|² d]),   ℓ = (∂_z − ia)Ψ,  d = ω²Ψ
//! ```
//!
//! where lower-case letters are time-domain images. Writing `Ψ = e^{iaz}φ`
//! turns the operator into `∂_z²`, so each Picard step is one Dirichlet
//! tridiagonal solve per mode.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::action::{log_measure_constants, InteractionFrame, PathLattice};
use crate::channel::{average_power, diagnostics, kerr_vertex, ChannelParams};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::grid::Grid;
use crate::pathint_mc::{LogPdf, Method};
use crate::perturbative_pdf::{first_order_correction, log_p0, FirstOrderOptions};

use std::f64::consts::PI;

/// Largest `γ̃` accepted by the solver.
pub const MAX_GAMMA_TILDE: f64 = 0.3;

/// `ε` above which the small-noise density is flagged.
pub const EPSILON_WARNING: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub path: PathLattice,
    /// Relative residual `‖E‖ L² / ‖Ψ‖` of the returned path; NaN when the
    /// lattice is too short to evaluate it.
    pub residual_norm: f64,
    /// Residual evaluations performed.
    pub iterations: usize,
    pub history: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Keep the `γ²` quintic term of the trajectory equation.
    pub include_quintic: bool,
    pub execution: Execution,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            include_quintic: true,
            execution: Execution::default(),
        }
    }
}

/// Smallest tolerance the residual can resolve on an `N`-step lattice: the
/// second difference amplifies round-off by `N²`.
pub fn residual_floor(steps: usize) -> f64 {
    64.0 * f64::EPSILON * (steps * steps).max(1) as f64
}

type Rows = Vec<Vec<Complex64>>;

struct Setup<'a> {
    grid: &'a Grid,
    params: &'a ChannelParams,
    frame: InteractionFrame,
    include_quintic: bool,
    execution: Execution,
}

impl<'a> Setup<'a> {
    fn new(grid: &'a Grid, params: &'a ChannelParams, include_quintic: bool, execution: Execution) -> Self {
        Self {
            grid,
            params,
            frame: InteractionFrame::new(grid, params.beta2),
            include_quintic,
            execution,
        }
    }

    fn to_rows(&self, path: &PathLattice) -> Rows {
        path.rows()
            .enumerate()
            .map(|(i, row)| {
                let mut out = vec![Complex64::new(0.0, 0.0); row.len()];
                self.frame.to_interaction(i, row, &mut out);
                out
            })
            .collect()
    }

    fn to_path(&self, phi: &Rows, x: &[Complex64], y: &[Complex64]) -> Result<PathLattice> {
        let n = phi.len() - 1;
        PathLattice::from_fn(self.grid, x, y, |i, j| {
            if i == 0 {
                x[j]
            } else if i == n {
                y[j]
            } else {
                phi[i][j] * self.frame.phase_row(i)[j]
            }
        })
    }

    /// `e^{-ia z_i}` times the right-hand side at interior slice `i`, given
    /// the lab row and `ℓ_i`.
    fn rotated_rhs(&self, i: usize, psi: &[Complex64], ell: &[Complex64]) -> Vec<Complex64> {
        let (g, p) = (self.grid, self.params);
        let m = g.modes();
        if p.gamma == 0.0 {
            return vec![Complex64::new(0.0, 0.0); m];
        }
        let w2: Vec<Complex64> = (0..m).map(|j| psi[j] * g.omegas()[j].powi(2)).collect();
        let u = g.to_time(psi);
        let lt = g.to_time(ell);
        let d = g.to_time(&w2);
        let ig4 = Complex64::new(0.0, 4.0 * p.gamma);
        let half_gb = 0.5 * p.gamma * p.beta2;
        let quint = if self.include_quintic { 3.0 * p.gamma * p.gamma } else { 0.0 };
        let mut body = Vec::with_capacity(m);
        let mut cubic = Vec::with_capacity(m);
        for n in 0..m {
            let (un, a2) = (u[n], u[n].norm_sqr());
            body.push(ig4 * a2 * lt[n] + half_gb * (un * un * d[n].conj() - 2.0 * a2 * d[n]) + quint * a2 * a2 * un);
            cubic.push(a2 * un);
        }
        let body = g.to_freq(&body);
        let cubic = g.to_freq(&cubic);
        let phase = self.frame.phase_row(i);
        (0..m)
            .map(|j| (body[j] + half_gb * g.omegas()[j].powi(2) * cubic[j]) * phase[j].conj())
            .collect()
    }

    /// Rotated right-hand sides for every interior slice; index 0 is slice 1.
    fn all_rhs(&self, phi: &Rows) -> Rows {
        let n = phi.len() - 1;
        let dz = self.grid.dz();
        let m = self.grid.modes();
        map_indexed(self.execution, n.saturating_sub(1), |k| {
            let i = k + 1;
            let mut psi = vec![Complex64::new(0.0, 0.0); m];
            let mut ell = vec![Complex64::new(0.0, 0.0); m];
            self.frame.to_lab(i, &phi[i], &mut psi);
            let dphi: Vec<Complex64> = (0..m).map(|j| (phi[i + 1][j] - phi[i - 1][j]) / (2.0 * dz)).collect();
            self.frame.to_lab(i, &dphi, &mut ell);
            self.rotated_rhs(i, &psi, &ell)
        })
    }

    /// Relative residual of the rotated rows.
    fn residual(&self, phi: &Rows) -> f64 {
        let n = phi.len() - 1;
        let dz = self.grid.dz();
        let rhs = self.all_rhs(phi);
        let (mut err, mut norm) = (0.0, 0.0);
        for i in 1..n {
            for j in 0..phi[i].len() {
                let second = (phi[i + 1][j] - 2.0 * phi[i][j] + phi[i - 1][j]) / (dz * dz);
                err += (second - rhs[i - 1][j]).norm_sqr();
                norm += phi[i][j].norm_sqr();
            }
        }
        if norm == 0.0 {
            return if err == 0.0 { 0.0 } else { f64::INFINITY };
        }
        (err / norm).sqrt() * self.grid.length().powi(2)
    }

    /// Solve `φ'' = rhs` per mode with the boundary rows held fixed.
    fn solve_linear(&self, phi: &Rows, rhs: &Rows) -> Rows {
        let n = phi.len() - 1;
        let m = self.grid.modes();
        let dz2 = self.grid.dz().powi(2);
        let cols = map_indexed(self.execution, m, |j| {
            let g: Vec<Complex64> = (1..n).map(|i| rhs[i - 1][j] * dz2).collect();
            solve_dirichlet(&g, phi[0][j], phi[n][j])
        });
        let mut out = phi.clone();
        for (j, col) in cols.iter().enumerate() {
            for i in 1..n {
                out[i][j] = col[i - 1];
            }
        }
        out
    }
}

/// Thomas algorithm for `v_{i+1} − 2v_i + v_{i−1} = g_i`, `i = 1..=n−1`,
/// with `v_0 = left`, `v_n = right`. Returns the interior values.
fn solve_dirichlet(g: &[Complex64], left: Complex64, right: Complex64) -> Vec<Complex64> {
    let k = g.len();
    if k == 0 {
        return Vec::new();
    }
    let mut c = vec![0.0; k];
    let mut d = vec![Complex64::new(0.0, 0.0); k];
    for i in 0..k {
        let mut rhs = g[i];
        if i == 0 {
            rhs -= left;
        }
        if i == k - 1 {
            rhs -= right;
        }
        let (denom, prev_d) = if i == 0 {
            (-2.0, Complex64::new(0.0, 0.0))
        } else {
            (-2.0 - c[i - 1], d[i - 1])
        };
        c[i] = 1.0 / denom;
        d[i] = (rhs - prev_d) / denom;
    }
    let mut v = vec![Complex64::new(0.0, 0.0); k];
    v[k - 1] = d[k - 1];
    for i in (0..k - 1).rev() {
        v[i] = d[i] - c[i] * v[i + 1];
    }
    v
}

fn linear_rows(grid: &Grid, frame: &InteractionFrame, x: &[Complex64], y: &[Complex64]) -> Rows {
    let n = grid.steps();
    let mut end = vec![Complex64::new(0.0, 0.0); grid.modes()];
    frame.to_interaction(n, y, &mut end);
    (0..=n)
        .map(|i| {
            let s = i as f64 / n as f64;
            if i == 0 {
                x.to_vec()
            } else if i == n {
                end.clone()
            } else {
                x.iter().zip(&end).map(|(a, b)| a + (b - a) * s).collect()
            }
        })
        .collect()
}

/// `Ψ_{i,j} = e^{iβ₂ω_j²z_i/2}(X_j + z_i B_j/L)`, the exact minimiser at `γ = 0`.
pub fn initial_guess(grid: &Grid, x: &[Complex64], y: &[Complex64], params: &ChannelParams) -> Result<Trajectory> {
    grid.check_len(x.len())?;
    grid.check_len(y.len())?;
    params.validate()?;
    let setup = Setup::new(grid, params, true, Execution::Sequential);
    let phi = linear_rows(grid, &setup.frame, x, y);
    let path = setup.to_path(&phi, x, y)?;
    let residual_norm = if grid.steps() >= 4 { setup.residual(&phi) } else { f64::NAN };
    Ok(Trajectory {
        path,
        residual_norm,
        iterations: 0,
        history: Vec::new(),
    })
}

/// Relative residual of the trajectory equation on the interior slices.
pub fn trajectory_residual(traj: &PathLattice, grid: &Grid, params: &ChannelParams, include_quintic: bool) -> Result<f64> {
    traj.check_grid(grid)?;
    if grid.steps() < 4 {
        return Err(Error::InvalidGrid(format!(
            "trajectory residual needs at least 4 steps, got {}",
            grid.steps()
        )));
    }
    let setup = Setup::new(grid, params, include_quintic, Execution::default());
    Ok(setup.residual(&setup.to_rows(traj)))
}

/// `γ P_ave L`, using the larger of the input and output powers.
fn gamma_tilde(grid: &Grid, x: &[Complex64], y: &[Complex64], params: &ChannelParams) -> f64 {
    (params.gamma * grid.length() * average_power(grid, x).max(average_power(grid, y))).abs()
}

/// Picard iteration from the interpolant until the relative residual drops
/// to `tol`.
pub fn solve_trajectory(
    grid: &Grid,
    x: &[Complex64],
    y: &[Complex64],
    params: &ChannelParams,
    opts: &SolverOptions,
) -> Result<Trajectory> {
    grid.check_len(x.len())?;
    grid.check_len(y.len())?;
    params.validate()?;
    let n = grid.steps();
    if n < 4 {
        return Err(Error::InvalidGrid(format!("trajectory solver needs at least 4 steps, got {n}")));
    }
    let floor = residual_floor(n);
    if opts.tol.is_nan() || opts.tol < floor {
        return Err(Error::InvalidParameter(format!(
            "tolerance {:e} is below the round-off floor {floor:.1e} of a {n}-step lattice",
            opts.tol
        )));
    }
    let gt = gamma_tilde(grid, x, y, params);
    if gt > MAX_GAMMA_TILDE {
        return Err(Error::NonlinearityGuard {
            gamma_tilde: gt,
            limit: MAX_GAMMA_TILDE,
        });
    }
    let setup = Setup::new(grid, params, opts.include_quintic, opts.execution);
    let mut phi = linear_rows(grid, &setup.frame, x, y);
    if x.iter().chain(y).all(|v| *v == Complex64::new(0.0, 0.0)) {
        return Ok(Trajectory {
            path: setup.to_path(&phi, x, y)?,
            residual_norm: 0.0,
            iterations: 0,
            history: Vec::new(),
        });
    }
    let mut history = Vec::new();
    loop {
        let r = setup.residual(&phi);
        history.push(r);
        if r <= opts.tol {
            return Ok(Trajectory {
                path: setup.to_path(&phi, x, y)?,
                residual_norm: r,
                iterations: history.len(),
                history,
            });
        }
        if history.len() >= opts.max_iter || !r.is_finite() {
            return Err(Error::NotConverged {
                iterations: history.len(),
                last: r,
                history,
            });
        }
        let rhs = setup.all_rhs(&phi);
        phi = setup.solve_linear(&phi, &rhs);
    }
}

/// `Δδ Σ_i w_i Σ_j |φ'_{i,j} − e^{-ia_j z_i} V_{i,j}|²` with trapezoid
/// weights and second-order differences of the rotated path. Exact for the
/// `γ = 0` interpolant. Needs `N ≥ 2`.
pub fn trajectory_action(traj: &PathLattice, grid: &Grid, params: &ChannelParams) -> Result<f64> {
    traj.check_grid(grid)?;
    let n = grid.steps();
    if n < 2 {
        return Err(Error::InvalidGrid("trajectory action needs at least 2 steps".into()));
    }
    let setup = Setup::new(grid, params, true, Execution::default());
    let phi = setup.to_rows(traj);
    let dz = grid.dz();
    let m = grid.modes();
    let dens = map_indexed(Execution::default(), n + 1, |i| {
        let v = kerr_vertex(grid, traj.row(i), params.gamma);
        let phase = setup.frame.phase_row(i);
        (0..m)
            .map(|j| {
                let p = |k: usize| phi[k][j];
                let d = if i == 0 {
                    (-3.0 * p(0) + 4.0 * p(1) - p(2)) / (2.0 * dz)
                } else if i == n {
                    (3.0 * p(n) - 4.0 * p(n - 1) + p(n - 2)) / (2.0 * dz)
                } else {
                    (p(i + 1) - p(i - 1)) / (2.0 * dz)
                };
                (d - v[j] * phase[j].conj()).norm_sqr()
            })
            .sum::<f64>()
    });
    let total: f64 = dens
        .iter()
        .enumerate()
        .map(|(i, d)| if i == 0 || i == n { 0.5 * d } else { *d })
        .sum();
    Ok(total * dz * grid.delta())
}

/// `1 + (2γW/π) Im{∫₀ᴸ dz z(L−z)/L ∫dω/2π ℓ Ψ̄}` with `ℓ` from centred
/// differences and the trapezoid rule in `z`.
pub fn prefactor_correction(traj: &PathLattice, grid: &Grid, params: &ChannelParams) -> Result<f64> {
    traj.check_grid(grid)?;
    if params.gamma == 0.0 {
        return Ok(1.0);
    }
    let n = grid.steps();
    let (l, dz) = (grid.length(), grid.dz());
    let setup = Setup::new(grid, params, true, Execution::Sequential);
    let phi = setup.to_rows(traj);
    let mut acc = 0.0;
    for i in 1..n {
        let z = grid.z(i);
        // ℓ Ψ̄ = φ' φ̄ in the rotating frame
        let terms: Vec<Complex64> = (0..grid.modes())
            .map(|j| (phi[i + 1][j] - phi[i - 1][j]) / (2.0 * dz) * phi[i][j].conj())
            .collect();
        acc += z * (l - z) / l * grid.freq_integral(&terms).im;
    }
    Ok(1.0 + 2.0 * params.gamma * grid.spec().noise_bandwidth() / PI * acc * dz)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmallNoiseVariant {
    /// Solve for the classical path and use its action and prefactor.
    #[default]
    Trajectory,
    /// Order-`γ` closed form built from the first-order terms.
    ClosedForm,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SmallNoiseOptions {
    pub variant: SmallNoiseVariant,
    pub solver: SolverOptions,
    pub first_order: FirstOrderOptions,
}

/// Small-noise density `log Λ − S[Ψ*]/Q + log(prefactor)`, or its order-`γ`
/// closed form `log P⁽⁰⁾ + γ Im G + log(1 + γ × bandwidth term)`.
pub fn small_noise_log_pdf(
    grid: &Grid,
    x: &[Complex64],
    y: &[Complex64],
    params: &ChannelParams,
    opts: &SmallNoiseOptions,
) -> Result<LogPdf> {
    params.require_noise()?;
    let mut warnings = Vec::new();
    if let Ok(diag) = diagnostics(grid, x, params) {
        if diag.epsilon > EPSILON_WARNING {
            warnings.push(format!(
                "epsilon = {:.3} exceeds {EPSILON_WARNING}; small-noise asymptotics may be inaccurate",
                diag.epsilon
            ));
        }
    }
    let mut out = match opts.variant {
        SmallNoiseVariant::Trajectory => {
            let traj = solve_trajectory(grid, x, y, params, &opts.solver)?;
            let action = trajectory_action(&traj.path, grid, params)?;
            let pref = prefactor_correction(&traj.path, grid, params)?;
            if pref <= 0.0 {
                return Err(Error::NegativeBracket { value: pref });
            }
            let lm = log_measure_constants(grid, params.q)?;
            LogPdf::deterministic(lm.log_lambda - action / params.q + pref.ln(), Method::SmallNoise, grid, params)
        }
        SmallNoiseVariant::ClosedForm => {
            let p0 = log_p0(grid, x, y, params)?;
            if params.gamma == 0.0 {
                LogPdf { method: Method::SmallNoiseClosedForm, ..p0 }
            } else {
                let t = first_order_correction(grid, x, y, params, &opts.first_order)?;
                let bracket = 1.0 + params.gamma * t.bandwidth_term;
                if bracket <= 0.0 {
                    return Err(Error::NegativeBracket { value: bracket });
                }
                LogPdf::deterministic(
                    p0.log_p + params.gamma * t.g.im + bracket.ln(),
                    Method::SmallNoiseClosedForm,
                    grid,
                    params,
                )
            }
        }
    };
    out.warnings.extend(warnings);
    Ok(out)
}
