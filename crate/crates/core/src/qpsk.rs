//! Gaussian-pulse QPSK worked example: the input pulse train, the
//! approximate received field, the averaged nonlinear phase, the per-symbol
//! deformed-Gaussian density and forward Monte-Carlo statistics to test it.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::action::log_measure_constants;
use crate::channel::{average_power, free_propagate, kerr_vertex, split_step_forward, ChannelParams};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::grid::{Grid, GridSpec, SpectralField};
use crate::pathint_mc::{LogPdf, Method};
use crate::quad::gauss_legendre;
use crate::rng::stream_rng;

use std::f64::consts::{FRAC_PI_2, PI};

/// Spectral edge level `e^{-Ω_max²τ²/2}` allowed by [`build_input`].
pub const WINDOW_EDGE_LIMIT: f64 = 1e-8;

/// Pulse train `X(t) = Σ_{k=-N}^{N} c_k α e^{-(t−kT)²/2τ²}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstellationSpec {
    pub n_side: usize,
    pub symbol_time: f64,
    pub tau: f64,
    pub alpha: f64,
}

impl ConstellationSpec {
    pub fn new(n_side: usize, symbol_time: f64, tau: f64, alpha: f64) -> Result<Self> {
        for (name, v) in [("symbol time", symbol_time), ("tau", tau), ("alpha", alpha)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(Self { n_side, symbol_time, tau, alpha })
    }

    /// Amplitude chosen so that `P_ave = α²τ√π/T`.
    pub fn from_power(n_side: usize, symbol_time: f64, tau: f64, p_ave: f64) -> Result<Self> {
        if !(p_ave.is_finite() && p_ave > 0.0) {
            return Err(Error::InvalidParameter(format!("average power must be > 0, got {p_ave}")));
        }
        let alpha = (p_ave * symbol_time / (tau * PI.sqrt())).sqrt();
        Self::new(n_side, symbol_time, tau, alpha)
    }

    pub fn n_symbols(&self) -> usize {
        2 * self.n_side + 1
    }

    pub fn p_ave(&self) -> f64 {
        self.alpha * self.alpha * self.tau * PI.sqrt() / self.symbol_time
    }

    pub fn pulse(&self, t: f64) -> f64 {
        self.alpha * (-0.5 * t * t / (self.tau * self.tau)).exp()
    }

    pub fn pulse_spectrum(&self, omega: f64) -> f64 {
        (2.0 * PI).sqrt() * self.alpha * self.tau * (-0.5 * omega * omega * self.tau * self.tau).exp()
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.tau > 0.25 * self.symbol_time {
            w.push(format!(
                "tau = {} exceeds T/4; neighbouring pulses overlap",
                self.tau
            ));
        }
        w
    }

    /// Symmetric grid whose time window holds exactly the `2N+1` slots.
    pub fn grid_spec(&self, modes: usize, steps: usize, length: f64) -> Result<GridSpec> {
        GridSpec::symmetric(modes, steps, 1.0 / (self.n_symbols() as f64 * self.symbol_time), length)
    }

    fn check_grid(&self, grid: &Grid) -> Result<()> {
        let edge = (-0.5 * (grid.spec().omega_max() * self.tau).powi(2)).exp();
        if edge >= WINDOW_EDGE_LIMIT {
            return Err(Error::WindowTooNarrow {
                edge,
                limit: WINDOW_EDGE_LIMIT,
            });
        }
        let needed = self.n_symbols() as f64 * self.symbol_time;
        if grid.spec().t_total() < needed * (1.0 - 1e-12) {
            return Err(Error::InvalidGrid(format!(
                "time window {} shorter than the pulse train {needed}",
                grid.spec().t_total()
            )));
        }
        Ok(())
    }

    fn check_len<T>(&self, v: &[T], what: &str) -> Result<()> {
        if v.len() != self.n_symbols() {
            return Err(Error::InvalidParameter(format!(
                "{what}: expected {} entries, got {}",
                self.n_symbols(),
                v.len()
            )));
        }
        Ok(())
    }

    /// Symbol indices `−N..=N`.
    pub fn slots(&self) -> impl Iterator<Item = i64> {
        let n = self.n_side as i64;
        -n..=n
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QpskSymbol {
    Zero,
    HalfPi,
    Pi,
    MinusHalfPi,
}

impl QpskSymbol {
    pub const ALL: [QpskSymbol; 4] = [Self::Zero, Self::HalfPi, Self::Pi, Self::MinusHalfPi];

    pub fn phase(self) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::HalfPi => FRAC_PI_2,
            Self::Pi => PI,
            Self::MinusHalfPi => -FRAC_PI_2,
        }
    }

    /// `c_k = e^{iφ_k}`, exact on the axes.
    pub fn coefficient(self) -> Complex64 {
        match self {
            Self::Zero => Complex64::new(1.0, 0.0),
            Self::HalfPi => Complex64::new(0.0, 1.0),
            Self::Pi => Complex64::new(-1.0, 0.0),
            Self::MinusHalfPi => Complex64::new(0.0, -1.0),
        }
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i % 4]
    }
}

/// Constellation corruption `c̃_k = c_k + ρ_k e^{iφ̃_k}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolPerturbation {
    pub rho: Vec<f64>,
    pub phase: Vec<f64>,
}

impl SymbolPerturbation {
    pub fn zero(n: usize) -> Self {
        Self {
            rho: vec![0.0; n],
            phase: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn offsets(&self) -> Vec<Complex64> {
        self.rho
            .iter()
            .zip(&self.phase)
            .map(|(r, p)| Complex64::from_polar(*r, *p))
            .collect()
    }

    fn validate(&self, spec: &ConstellationSpec) -> Result<()> {
        spec.check_len(&self.rho, "rho")?;
        spec.check_len(&self.phase, "perturbation phase")?;
        if self.rho.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::InvalidParameter("rho must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// `F̂(ω) Σ_k a_k e^{iωkT}` on the grid.
fn pulse_train(spec: &ConstellationSpec, grid: &Grid, amps: &[Complex64]) -> SpectralField {
    SpectralField::from_fn(grid.modes(), |j| {
        let w = grid.omegas()[j];
        let sum: Complex64 = spec
            .slots()
            .zip(amps)
            .map(|(k, a)| a * Complex64::from_polar(1.0, w * k as f64 * spec.symbol_time))
            .sum();
        sum * spec.pulse_spectrum(w)
    })
}

/// `X(ω) = √(2π) α τ e^{-ω²τ²/2} Σ_k c_k e^{iωkT}`.
pub fn build_input(spec: &ConstellationSpec, symbols: &[QpskSymbol], grid: &Grid) -> Result<SpectralField> {
    spec.check_len(symbols, "symbols")?;
    spec.check_grid(grid)?;
    let c: Vec<Complex64> = symbols.iter().map(|s| s.coefficient()).collect();
    Ok(pulse_train(spec, grid, &c))
}

/// Gauss–Legendre nodes used for the `z` average in [`nonlinear_phase`].
pub const NONLINEAR_PHASE_NODES: usize = 32;

fn nonlinear_phase_with(grid: &Grid, x: &[Complex64], beta2: f64, nodes: usize, exec: Execution) -> Result<SpectralField> {
    let l = grid.length();
    let rule = gauss_legendre(nodes, 0.0, l)?;
    let parts = map_indexed(exec, rule.len(), |k| {
        let (z, w) = rule[k];
        let fwd = free_propagate(grid, x, beta2, z);
        let cubic = kerr_vertex(grid, &fwd, 1.0);
        let back = free_propagate(grid, &cubic, beta2, -z);
        // kerr_vertex carries a factor i
        back.iter().map(|v| v * Complex64::new(0.0, -w / l)).collect::<Vec<_>>()
    });
    let mut out = SpectralField::zeros(grid.modes());
    for part in parts {
        for (o, p) in out.iter_mut().zip(part) {
            *o += p;
        }
    }
    Ok(out)
}

/// `φ_nl(ω) = ∫dω₁dω₂/(2π)² X₁X₂X̄₃ (1 − e^{-μ})/μ`, computed as
/// `(1/L)∫₀ᴸ dz` of the cubic product of `X` propagated to `z` and
/// back-propagated from `z`.
pub fn nonlinear_phase(grid: &Grid, x: &[Complex64], params: &ChannelParams) -> Result<SpectralField> {
    grid.check_len(x.len())?;
    if params.beta2 == 0.0 {
        return Ok(SpectralField::new(
            kerr_vertex(grid, x, 1.0).iter().map(|v| v * Complex64::new(0.0, -1.0)).collect(),
        ));
    }
    let exec = Execution::default();
    let a = nonlinear_phase_with(grid, x, params.beta2, NONLINEAR_PHASE_NODES, exec)?;
    let b = nonlinear_phase_with(grid, x, params.beta2, 2 * NONLINEAR_PHASE_NODES, exec)?;
    let scale = grid.freq_norm_sqr(&b).sqrt().max(f64::MIN_POSITIVE);
    let change = (0..a.len()).map(|j| (a[j] - b[j]).norm_sqr()).sum::<f64>().sqrt() * grid.delta().sqrt() / scale;
    if change > 1e-10 {
        return Err(Error::QuadratureNotConverged {
            achieved: change,
            requested: 1e-10,
        });
    }
    Ok(b)
}

/// `Y(ω) = {X + F̂ Σ_k ρ_k e^{iφ̃_k} e^{iωkT} + iγLφ_nl(X)} e^{iβ₂ω²L/2}`.
pub fn build_received(
    spec: &ConstellationSpec,
    symbols: &[QpskSymbol],
    pert: &SymbolPerturbation,
    grid: &Grid,
    params: &ChannelParams,
) -> Result<SpectralField> {
    pert.validate(spec)?;
    let x = build_input(spec, symbols, grid)?;
    let noise = pulse_train(spec, grid, &pert.offsets());
    let phi = if params.gamma != 0.0 {
        nonlinear_phase(grid, &x, params)?
    } else {
        SpectralField::zeros(grid.modes())
    };
    let igl = Complex64::new(0.0, params.gamma * grid.length());
    let sum = SpectralField::from_fn(grid.modes(), |j| x[j] + noise[j] + igl * phi[j]);
    Ok(free_propagate(grid, &sum, params.beta2, grid.length()))
}

/// Matched-filter symbol estimates `⟨F̂ e^{iωkT}, y⟩ / ⟨F̂, F̂⟩` of a field
/// already in the input frame.
pub fn matched_filter(spec: &ConstellationSpec, grid: &Grid, y: &[Complex64]) -> Result<Vec<Complex64>> {
    grid.check_len(y.len())?;
    let f: Vec<f64> = grid.omegas().iter().map(|w| spec.pulse_spectrum(*w)).collect();
    let norm = grid.delta() * f.iter().map(|v| v * v).sum::<f64>();
    Ok(spec
        .slots()
        .map(|k| {
            let t = k as f64 * spec.symbol_time;
            let s: Complex64 = (0..grid.modes())
                .map(|j| f[j] * Complex64::from_polar(1.0, -grid.omegas()[j] * t) * y[j])
                .sum();
            s * grid.delta() / norm
        })
        .collect())
}

/// Coefficients of the per-symbol density
/// `exp(−A ρ²)(1 + κ ρ sin Δφ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolModel {
    /// `A = P_ave T / (QL)`.
    pub gaussian: f64,
    /// `κ = γ W T L P_ave / 3π`.
    pub skew: f64,
}

impl SymbolModel {
    pub fn new(spec: &ConstellationSpec, grid: &Grid, params: &ChannelParams) -> Result<Self> {
        params.require_noise()?;
        let (l, t, p) = (grid.length(), spec.symbol_time, spec.p_ave());
        Ok(Self {
            gaussian: p * t / (params.q * l),
            skew: params.gamma * grid.spec().noise_bandwidth() * t * l * p / (3.0 * PI),
        })
    }

    pub fn log_factor(&self, rho: f64, dphi: f64) -> Result<f64> {
        let bracket = 1.0 + self.skew * rho * dphi.sin();
        if bracket <= 0.0 {
            return Err(Error::NegativeBracket { value: bracket });
        }
        Ok(-self.gaussian * rho * rho + bracket.ln())
    }

    /// `E[ρ sin Δφ] = κ / 2A` under the normalised density.
    pub fn mean_rho_sin(&self) -> f64 {
        self.skew / (2.0 * self.gaussian)
    }

    /// `E[ρ²] = 1/A`.
    pub fn mean_rho_sq(&self) -> f64 {
        1.0 / self.gaussian
    }
}

/// Checks of the regime in which the per-symbol form applies.
pub fn regime_warnings(spec: &ConstellationSpec, grid: &Grid, params: &ChannelParams) -> Vec<String> {
    let mut w = spec.warnings();
    let gt = params.gamma.abs() * spec.p_ave() * grid.length();
    if gt > 0.1 {
        w.push(format!("gamma_tilde = {gt:.3} is not small"));
    }
    let spread = (params.beta2 * grid.length() / spec.tau).abs();
    if spread > 0.1 * spec.symbol_time {
        w.push(format!("|beta2 L / tau| = {spread:.3} is not small against T"));
    }
    w
}

/// One symbol's contribution `−Aρ² + log(1 + κρ sin Δφ)`.
pub fn per_symbol_log_factor(
    rho: f64,
    dphi: f64,
    spec: &ConstellationSpec,
    grid: &Grid,
    params: &ChannelParams,
) -> Result<f64> {
    SymbolModel::new(spec, grid, params)?.log_factor(rho, dphi)
}

fn phase_offsets(symbols: &[QpskSymbol], pert: &SymbolPerturbation) -> Vec<f64> {
    symbols.iter().zip(&pert.phase).map(|(s, p)| p - s.phase()).collect()
}

/// `log Λ + Σ_k [−Aρ_k² + log(1 + κρ_k sin Δφ_k)]`.
pub fn product_log_pdf(
    pert: &SymbolPerturbation,
    symbols: &[QpskSymbol],
    spec: &ConstellationSpec,
    grid: &Grid,
    params: &ChannelParams,
) -> Result<LogPdf> {
    spec.check_len(symbols, "symbols")?;
    pert.validate(spec)?;
    let model = SymbolModel::new(spec, grid, params)?;
    let mut log_p = log_measure_constants(grid, params.q)?.log_lambda;
    for (rho, dphi) in pert.rho.iter().zip(phase_offsets(symbols, pert)) {
        log_p += model.log_factor(*rho, dphi)?;
    }
    let mut out = LogPdf::deterministic(log_p, Method::QpskProduct, grid, params);
    out.warnings = regime_warnings(spec, grid, params);
    Ok(out)
}

/// The single-bracket form `log Λ − AΣρ² + log(1 + κ Σ ρ sin Δφ)`, equal
/// to [`product_log_pdf`] at first order in `γ`.
pub fn product_log_pdf_first_order(
    pert: &SymbolPerturbation,
    symbols: &[QpskSymbol],
    spec: &ConstellationSpec,
    grid: &Grid,
    params: &ChannelParams,
) -> Result<LogPdf> {
    spec.check_len(symbols, "symbols")?;
    pert.validate(spec)?;
    let model = SymbolModel::new(spec, grid, params)?;
    let dphi = phase_offsets(symbols, pert);
    let sq: f64 = pert.rho.iter().map(|r| r * r).sum();
    let skew: f64 = pert.rho.iter().zip(&dphi).map(|(r, d)| r * d.sin()).sum();
    let bracket = 1.0 + model.skew * skew;
    if bracket <= 0.0 {
        return Err(Error::NegativeBracket { value: bracket });
    }
    let log_p = log_measure_constants(grid, params.q)?.log_lambda - model.gaussian * sq + bracket.ln();
    let mut out = LogPdf::deterministic(log_p, Method::QpskProduct, grid, params);
    out.warnings = regime_warnings(spec, grid, params);
    Ok(out)
}

/// Per-symbol `(ρ_k, Δφ_k)` draws from forward simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolStats {
    /// `samples[k]` holds `(ρ, Δφ)` for symbol slot `k` (index 0 is `−N`).
    pub samples: Vec<Vec<(f64, f64)>>,
}

/// Sample mean and its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_err: f64,
}

impl MeanEstimate {
    pub fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count() as f64;
        let mean = values.clone().sum::<f64>() / n;
        let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self {
            mean,
            std_err: (var / n).sqrt(),
        }
    }
}

/// Counts on a `ρ × Δφ` grid; bins over `[0, rho_max) × [−π, π)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointHistogram {
    pub rho_max: f64,
    pub rho_bins: usize,
    pub phase_bins: usize,
    pub counts: Vec<u64>,
    /// Draws with `ρ ≥ rho_max`.
    pub overflow: u64,
}

impl JointHistogram {
    pub fn new(rho_max: f64, rho_bins: usize, phase_bins: usize) -> Self {
        Self {
            rho_max,
            rho_bins,
            phase_bins,
            counts: vec![0; rho_bins * phase_bins],
            overflow: 0,
        }
    }

    pub fn add(&mut self, rho: f64, dphi: f64) {
        if rho >= self.rho_max {
            self.overflow += 1;
            return;
        }
        let r = ((rho / self.rho_max) * self.rho_bins as f64) as usize;
        let wrapped = (dphi + PI).rem_euclid(2.0 * PI);
        let p = ((wrapped / (2.0 * PI)) * self.phase_bins as f64) as usize;
        self.counts[r.min(self.rho_bins - 1) * self.phase_bins + p.min(self.phase_bins - 1)] += 1;
    }

    pub fn merge(&mut self, other: &Self) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.overflow += other.overflow;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.overflow
    }
}

impl SymbolStats {
    pub fn n_runs(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn rho_sin(&self, k: usize) -> MeanEstimate {
        MeanEstimate::of(self.samples[k].iter().map(|(r, p)| r * p.sin()))
    }

    pub fn rho_sq(&self, k: usize) -> MeanEstimate {
        MeanEstimate::of(self.samples[k].iter().map(|(r, _)| r * r))
    }

    pub fn histogram(&self, k: usize, rho_max: f64, rho_bins: usize, phase_bins: usize) -> JointHistogram {
        let mut h = JointHistogram::new(rho_max, rho_bins, phase_bins);
        for &(r, p) in &self.samples[k] {
            h.add(r, p);
        }
        h
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardOptions {
    pub n_runs: u64,
    pub seed: u64,
    pub chunk_size: u64,
    pub execution: Execution,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        Self {
            n_runs: 100_000,
            seed: 0,
            chunk_size: 1024,
            execution: Execution::default(),
        }
    }
}

/// Simulate the channel `n_runs` times and extract `(ρ_k, Δφ_k)` per symbol.
/// The noiseless output is subtracted before derotation and matched
/// filtering, which removes the deterministic nonlinear phase to all orders.
pub fn empirical_symbol_stats(
    spec: &ConstellationSpec,
    symbols: &[QpskSymbol],
    grid: &Grid,
    params: &ChannelParams,
    opts: &ForwardOptions,
) -> Result<SymbolStats> {
    if opts.chunk_size == 0 || opts.n_runs == 0 {
        return Err(Error::InvalidParameter("forward runs and chunk size must be positive".into()));
    }
    let x = build_input(spec, symbols, grid)?;
    let mut rng0 = stream_rng(opts.seed, u64::MAX);
    let clean = split_step_forward(grid, &x, &ChannelParams { q: 0.0, ..*params }, &mut rng0)?;
    let coeffs: Vec<Complex64> = symbols.iter().map(|s| s.coefficient()).collect();
    let l = grid.length();
    let chunks = opts.n_runs.div_ceil(opts.chunk_size);
    let parts = map_indexed(opts.execution, chunks as usize, |c| -> Result<Vec<Vec<(f64, f64)>>> {
        let mut rng = stream_rng(opts.seed, c as u64);
        let todo = opts.chunk_size.min(opts.n_runs - c as u64 * opts.chunk_size);
        let mut out = vec![Vec::with_capacity(todo as usize); coeffs.len()];
        for _ in 0..todo {
            let y = split_step_forward(grid, &x, params, &mut rng)?;
            let diff: Vec<Complex64> = y.iter().zip(clean.iter()).map(|(a, b)| a - b).collect();
            let back = free_propagate(grid, &diff, params.beta2, -l);
            for (k, d) in matched_filter(spec, grid, &back)?.into_iter().enumerate() {
                let rel = d * coeffs[k].conj();
                out[k].push((rel.norm(), rel.arg()));
            }
        }
        Ok(out)
    });
    let mut samples = vec![Vec::with_capacity(opts.n_runs as usize); coeffs.len()];
    for part in parts {
        for (acc, chunk) in samples.iter_mut().zip(part?) {
            acc.extend(chunk);
        }
    }
    Ok(SymbolStats { samples })
}

/// Parameters of the worked example in dimensionless form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemoConfig {
    pub n_side: usize,
    pub symbol_time: f64,
    /// Pulse width as a fraction of `T`.
    pub tau_over_t: f64,
    pub p_ave: f64,
    pub gamma_tilde: f64,
    pub epsilon: f64,
    pub beta2: f64,
    pub length: f64,
    pub modes: usize,
    pub steps: usize,
    /// Symbols in slot order; defaults to cycling through the alphabet.
    pub symbols: Option<Vec<QpskSymbol>>,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            n_side: 2,
            symbol_time: 1.0,
            tau_over_t: 0.125,
            p_ave: 1.0,
            gamma_tilde: 0.05,
            epsilon: 0.01,
            beta2: 1e-3,
            length: 1.0,
            modes: 81,
            steps: 64,
            symbols: None,
        }
    }
}

/// Everything needed to run the example.
#[derive(Clone, Debug)]
pub struct DemoSetup {
    pub spec: ConstellationSpec,
    pub symbols: Vec<QpskSymbol>,
    pub grid: Grid,
    pub params: ChannelParams,
}

impl DemoConfig {
    pub fn setup(&self) -> Result<DemoSetup> {
        let spec = ConstellationSpec::from_power(self.n_side, self.symbol_time, self.tau_over_t * self.symbol_time, self.p_ave)?;
        let grid = Grid::new(spec.grid_spec(self.modes, self.steps, self.length)?)?;
        let symbols = match &self.symbols {
            Some(s) => s.clone(),
            None => (0..spec.n_symbols()).map(QpskSymbol::from_index).collect(),
        };
        spec.check_len(&symbols, "symbols")?;
        let gamma = self.gamma_tilde / (self.p_ave * self.length);
        let q = 2.0 * PI * self.epsilon * self.p_ave / (self.length * grid.spec().noise_bandwidth());
        let params = ChannelParams::new(self.beta2, gamma, q)?;
        Ok(DemoSetup {
            spec,
            symbols,
            grid,
            params,
        })
    }
}

/// Per-symbol comparison of forward statistics with the deformed Gaussian.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolReport {
    pub slot: i64,
    pub symbol: QpskSymbol,
    pub predicted_rho_sin: f64,
    pub empirical_rho_sin: MeanEstimate,
    pub predicted_rho_sq: f64,
    pub empirical_rho_sq: MeanEstimate,
    /// Kolmogorov–Smirnov distance of `ρ²` from its exponential law.
    pub ks_rho_sq: f64,
    pub histogram: JointHistogram,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub config: DemoConfig,
    pub model: SymbolModel,
    pub p_ave_measured: f64,
    pub gamma: f64,
    pub q: f64,
    pub n_runs: u64,
    pub symbols: Vec<SymbolReport>,
    pub warnings: Vec<String>,
}

/// KS distance of `values` from the exponential law with the given mean.
pub fn ks_exponential(values: &[f64], mean: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, x)| {
            let cdf = 1.0 - (-x / mean).exp();
            (cdf - i as f64 / n).abs().max(((i + 1) as f64 / n - cdf).abs())
        })
        .fold(0.0, f64::max)
}

/// Critical KS distance at the 1% level for `n` samples.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

pub fn run_demo(config: &DemoConfig, opts: &ForwardOptions) -> Result<DemoReport> {
    let s = config.setup()?;
    let model = SymbolModel::new(&s.spec, &s.grid, &s.params)?;
    let stats = empirical_symbol_stats(&s.spec, &s.symbols, &s.grid, &s.params, opts)?;
    let x = build_input(&s.spec, &s.symbols, &s.grid)?;
    let gaussian_model = SymbolModel {
        skew: 0.0,
        ..model
    };
    let rho_max = 4.0 * model.mean_rho_sq().sqrt();
    let symbols = s
        .spec
        .slots()
        .enumerate()
        .map(|(k, slot)| {
            let sq: Vec<f64> = stats.samples[k].iter().map(|(r, _)| r * r).collect();
            SymbolReport {
                slot,
                symbol: s.symbols[k],
                predicted_rho_sin: model.mean_rho_sin(),
                empirical_rho_sin: stats.rho_sin(k),
                predicted_rho_sq: gaussian_model.mean_rho_sq(),
                empirical_rho_sq: stats.rho_sq(k),
                ks_rho_sq: ks_exponential(&sq, gaussian_model.mean_rho_sq()),
                histogram: stats.histogram(k, rho_max, 16, 16),
            }
        })
        .collect();
    Ok(DemoReport {
        config: config.clone(),
        model,
        p_ave_measured: average_power(&s.grid, &x),
        gamma: s.params.gamma,
        q: s.params.q,
        n_runs: opts.n_runs,
        symbols,
        warnings: regime_warnings(&s.spec, &s.grid, &s.params),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturbative_pdf::{log_p0, mismatch};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn demo() -> DemoSetup {
        DemoConfig::default().setup().unwrap()
    }

    #[test]
    fn single_pulse_spectrum() {
        let spec = ConstellationSpec::new(0, 1.0, 0.125, 1.3).unwrap();
        let g = Grid::new(spec.grid_spec(81, 4, 1.0).unwrap()).unwrap();
        let x = build_input(&spec, &[QpskSymbol::Zero], &g).unwrap();
        for (j, v) in x.iter().enumerate() {
            let w = g.omegas()[j];
            let expect = (2.0 * PI).sqrt() * 1.3 * 0.125 * (-w * w * 0.125 * 0.125 / 2.0).exp();
            assert!((v - c(expect, 0.0)).norm() < 1e-15 * expect.max(1.0));
        }
    }

    #[test]
    fn time_domain_render_and_power() {
        let s = demo();
        let x = build_input(&s.spec, &s.symbols, &s.grid).unwrap();
        let u = s.grid.to_time(&x);
        let period = s.grid.spec().t_total();
        for (n, v) in u.iter().enumerate() {
            let t = s.grid.spec().time(n);
            let mut expect = c(0.0, 0.0);
            for (k, sym) in s.spec.slots().zip(&s.symbols) {
                for image in -1..=1 {
                    expect += sym.coefficient() * s.spec.pulse(t - k as f64 * s.spec.symbol_time + image as f64 * period);
                }
            }
            assert!((v - expect).norm() < 1e-8, "t={t}: {v} vs {expect}");
        }
        let p = average_power(&s.grid, &x);
        assert!((p - s.spec.p_ave()).abs() < 1e-6 * s.spec.p_ave());
    }

    #[test]
    fn window_guard() {
        let spec = ConstellationSpec::new(1, 1.0, 0.125, 1.0).unwrap();
        let g = Grid::new(spec.grid_spec(15, 4, 1.0).unwrap()).unwrap();
        let syms = [QpskSymbol::Zero; 3];
        assert!(matches!(build_input(&spec, &syms, &g), Err(Error::WindowTooNarrow { .. })));
        let g = Grid::new(GridSpec::symmetric(201, 4, 0.5, 1.0).unwrap()).unwrap();
        assert!(build_input(&spec, &syms, &g).is_err());
        assert!(build_input(&spec, &syms[..2], &g).is_err());
    }

    /// `(1 − e^{-μ})/μ` with its series near zero.
    fn kernel(mu: Complex64) -> Complex64 {
        if mu.norm() < 1e-3 {
            1.0 - mu / 2.0 + mu * mu / 6.0 - mu * mu * mu / 24.0
        } else {
            (1.0 - (-mu).exp()) / mu
        }
    }

    #[test]
    fn nonlinear_phase_matches_direct_sum() {
        // band-limited random field on modes [k, 2k) of M = 4k
        let k = 4;
        let g = Grid::new(GridSpec::symmetric(4 * k, 4, 0.6, 1.4).unwrap()).unwrap();
        let mut rng = stream_rng(2, 2);
        let x: Vec<Complex64> = (0..4 * k)
            .map(|j| {
                if (k..2 * k).contains(&j) {
                    crate::rng::complex_normal(&mut rng, 1.0)
                } else {
                    c(0.0, 0.0)
                }
            })
            .collect();
        let p = ChannelParams::new(0.35, 1.0, 0.1).unwrap();
        let fast = nonlinear_phase(&g, &x, &p).unwrap();
        let w = g.omegas();
        let d = g.delta();
        for j in 0..4 * k {
            let mut s = c(0.0, 0.0);
            for a in 0..4 * k {
                for b in 0..4 * k {
                    let r = a as isize + b as isize - j as isize;
                    if r < 0 || r >= 4 * k as isize {
                        continue;
                    }
                    let r = r as usize;
                    let mu = c(0.0, p.beta2 * (w[j] - w[a]) * (w[j] - w[b]) * g.length());
                    s += x[a] * x[b] * x[r].conj() * kernel(mu);
                }
            }
            s *= d * d;
            assert!((fast[j] - s).norm() < 1e-10 * s.norm().max(1.0), "{j}: {} vs {s}", fast[j]);
        }
        // β₂ = 0 and X = 0
        let p0 = ChannelParams::new(0.0, 1.0, 0.1).unwrap();
        let direct = crate::channel::cubic_convolution(&g, &x);
        assert!(nonlinear_phase(&g, &x, &p0).unwrap().max_abs_diff(&direct) < 1e-14);
        let z = vec![c(0.0, 0.0); 4 * k];
        assert!(nonlinear_phase(&g, &z, &p).unwrap().iter().all(|v| *v == c(0.0, 0.0)));
    }

    #[test]
    fn received_field_identities() {
        let s = demo();
        let n = s.spec.n_symbols();
        let x = build_input(&s.spec, &s.symbols, &s.grid).unwrap();
        let lin = ChannelParams { gamma: 0.0, ..s.params };
        let y = build_received(&s.spec, &s.symbols, &SymbolPerturbation::zero(n), &s.grid, &lin).unwrap();
        assert!(y.max_abs_diff(&free_propagate(&s.grid, &x, lin.beta2, 1.0)) < 1e-13);
        let y = build_received(&s.spec, &s.symbols, &SymbolPerturbation::zero(n), &s.grid, &s.params).unwrap();
        let b = mismatch(&s.grid, &x, &y, &s.params).unwrap().b;
        let phi = nonlinear_phase(&s.grid, &x, &s.params).unwrap();
        let igl = c(0.0, s.params.gamma);
        assert!((0..x.len()).all(|j| (b[j] - igl * phi[j]).norm() < 1e-12));
    }

    #[test]
    fn matched_filter_round_trip() {
        let s = demo();
        let n = s.spec.n_symbols();
        let pert = SymbolPerturbation {
            rho: (0..n).map(|k| 0.01 + 0.02 * k as f64).collect(),
            phase: (0..n).map(|k| -3.0 + 1.3 * k as f64).collect(),
        };
        let lin = ChannelParams { gamma: 0.0, ..s.params };
        let y = build_received(&s.spec, &s.symbols, &pert, &s.grid, &lin).unwrap();
        let back = free_propagate(&s.grid, &y, lin.beta2, -1.0);
        let est = matched_filter(&s.spec, &s.grid, &back).unwrap();
        for k in 0..n {
            let expect = s.symbols[k].coefficient() + Complex64::from_polar(pert.rho[k], pert.phase[k]);
            assert!((est[k] - expect).norm() < 1e-6, "{k}");
        }
    }

    #[test]
    fn symbol_factor_properties() {
        let s = demo();
        let m = SymbolModel::new(&s.spec, &s.grid, &s.params).unwrap();
        assert_eq!(m.log_factor(0.0, 1.0).unwrap(), 0.0);
        let lin = SymbolModel::new(&s.spec, &s.grid, &ChannelParams { gamma: 0.0, ..s.params }).unwrap();
        assert_eq!(lin.log_factor(0.3, 0.7).unwrap(), -lin.gaussian * 0.09);
        let up = m.log_factor(0.02, FRAC_PI_2).unwrap() + m.gaussian * 4e-4;
        let down = m.log_factor(0.02, -FRAC_PI_2).unwrap() + m.gaussian * 4e-4;
        assert!(up > 0.0 && down < 0.0);
        assert!((up.exp() - 1.0 + down.exp() - 1.0).abs() < 1e-14);
        for d in [-2.0, 0.3, 1.0, 2.5] {
            assert!(m.log_factor(0.02, d).unwrap() <= up - m.gaussian * 4e-4 + 1e-15);
        }
    }

    #[test]
    fn symbol_density_normalises() {
        let s = demo();
        let m = SymbolModel::new(&s.spec, &s.grid, &s.params).unwrap();
        let r_max = 8.0 / m.gaussian.sqrt();
        let rr = crate::quad::composite_gauss_legendre(12, 8, 0.0, r_max).unwrap();
        let pp = crate::quad::composite_gauss_legendre(12, 4, -PI, PI).unwrap();
        let mut total = 0.0;
        let mut skew = 0.0;
        for &(r, wr) in &rr {
            for &(p, wp) in &pp {
                let v = wr * wp * r * m.log_factor(r, p).unwrap().exp();
                total += v;
                skew += v * r * p.sin();
            }
        }
        let norm = m.gaussian / PI;
        assert!((total * norm - 1.0).abs() < 1e-4);
        assert!((skew * norm - m.mean_rho_sin()).abs() < 1e-6 * m.mean_rho_sin());
    }

    #[test]
    fn product_structure() {
        let s = demo();
        let n = s.spec.n_symbols();
        let pert = SymbolPerturbation {
            rho: (0..n).map(|k| 0.01 * (k + 1) as f64).collect(),
            phase: (0..n).map(|k| 0.4 * k as f64 - 1.0).collect(),
        };
        let lm = log_measure_constants(&s.grid, s.params.q).unwrap().log_lambda;
        let full = product_log_pdf(&pert, &s.symbols, &s.spec, &s.grid, &s.params).unwrap().log_p;
        let parts: f64 = (0..n)
            .map(|k| per_symbol_log_factor(pert.rho[k], pert.phase[k] - s.symbols[k].phase(), &s.spec, &s.grid, &s.params).unwrap())
            .sum();
        assert!((full - lm - parts).abs() < 1e-9 * full.abs());
        let zero = product_log_pdf(&SymbolPerturbation::zero(n), &s.symbols, &s.spec, &s.grid, &s.params).unwrap();
        assert_eq!(zero.log_p, lm);
        // rotating every symbol and perturbation phase by π/2
        let rotated = SymbolPerturbation {
            phase: pert.phase.iter().map(|p| p + FRAC_PI_2).collect(),
            ..pert.clone()
        };
        let syms: Vec<QpskSymbol> = s.symbols.iter().map(|q| QpskSymbol::from_index(QpskSymbol::ALL.iter().position(|a| a == q).unwrap() + 1)).collect();
        let r = product_log_pdf(&rotated, &syms, &s.spec, &s.grid, &s.params).unwrap().log_p;
        assert!((r - full).abs() < 1e-9 * full.abs());
        // first-order form agrees to O(κ²ρ²)
        let fo = product_log_pdf_first_order(&pert, &s.symbols, &s.spec, &s.grid, &s.params).unwrap().log_p;
        let m = SymbolModel::new(&s.spec, &s.grid, &s.params).unwrap();
        let bound: f64 = pert.rho.iter().map(|r| r * m.skew).sum::<f64>().powi(2);
        assert!((fo - full).abs() <= bound);
    }

    #[test]
    fn gamma_zero_product_equals_p0() {
        let s = demo();
        let n = s.spec.n_symbols();
        let lin = ChannelParams { gamma: 0.0, ..s.params };
        let pert = SymbolPerturbation {
            rho: (0..n).map(|k| 0.02 + 0.005 * k as f64).collect(),
            phase: (0..n).map(|k| 1.1 * k as f64).collect(),
        };
        let x = build_input(&s.spec, &s.symbols, &s.grid).unwrap();
        let y = build_received(&s.spec, &s.symbols, &pert, &s.grid, &lin).unwrap();
        let a = product_log_pdf(&pert, &s.symbols, &s.spec, &s.grid, &lin).unwrap().log_p;
        let b = log_p0(&s.grid, &x, &y, &lin).unwrap().log_p;
        assert!((a - b).abs() < 1e-6 * b.abs(), "{a} vs {b}");
    }

    #[test]
    fn zero_noise_forward_stats_vanish() {
        let s = demo();
        let p = ChannelParams { q: 0.0, ..s.params };
        let opts = ForwardOptions { n_runs: 8, chunk_size: 4, ..Default::default() };
        let st = empirical_symbol_stats(&s.spec, &s.symbols, &s.grid, &p, &opts).unwrap();
        assert!(st.samples.iter().flatten().all(|(r, _)| *r == 0.0));
        let mut h = st.histogram(0, 1.0, 4, 4);
        assert_eq!(h.total(), 8);
        h.merge(&st.histogram(1, 1.0, 4, 4));
        assert_eq!(h.total(), 16);
    }

    #[test]
    fn gaussian_channel_forward_stats() {
        let s = demo();
        let lin = ChannelParams { gamma: 0.0, ..s.params };
        let opts = ForwardOptions { n_runs: 4000, seed: 9, ..Default::default() };
        let st = empirical_symbol_stats(&s.spec, &s.symbols, &s.grid, &lin, &opts).unwrap();
        let m = SymbolModel::new(&s.spec, &s.grid, &lin).unwrap();
        for k in 0..s.spec.n_symbols() {
            let e = st.rho_sq(k);
            assert!((e.mean - m.mean_rho_sq()).abs() < 3.5 * e.std_err, "{k}: {e:?} vs {}", m.mean_rho_sq());
            let sq: Vec<f64> = st.samples[k].iter().map(|(r, _)| r * r).collect();
            assert!(ks_exponential(&sq, m.mean_rho_sq()) < ks_critical_1pct(sq.len()));
        }
    }

    #[test]
    fn ks_distance_basics() {
        let v: Vec<f64> = (0..1000).map(|i| -((1000 - i) as f64 / 1000.5).ln()).collect();
        assert!(ks_exponential(&v, 1.0) < 2e-3);
        assert!(ks_exponential(&v, 2.0) > 0.1);
    }
}
