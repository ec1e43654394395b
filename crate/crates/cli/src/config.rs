//! Experiment description read from a TOML file.

use std::path::{Path, PathBuf};

use nlse_pdf::classical_trajectory::{SmallNoiseOptions, SmallNoiseVariant, SolverOptions};
use nlse_pdf::perturbative_pdf::{FirstOrderOptions, KernelConvention, ZRule};
use nlse_pdf::qpsk::{build_input, build_received, ConstellationSpec, DemoConfig, QpskSymbol, SymbolPerturbation};
use nlse_pdf::{ChannelParams, Complex64, Execution, Grid, GridSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::field_io::read_field;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodSel {
    Pathint,
    Series0,
    Series1,
    Smallq,
    Demo,
    ForwardMc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub method: MethodSel,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<ChannelParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<SignalSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demo: Option<DemoConfig>,
    #[serde(default)]
    pub options: RunOptions,
}

/// `delta` and `omega_min` are required for explicit fields and derived from
/// the pulse train for constellation signals. `omega_min` defaults to a window
/// centred on zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub modes: usize,
    pub steps: usize,
    pub length: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_min: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum SignalSection {
    /// Inline `[re, im]` pairs.
    Samples { x: Vec<[f64; 2]>, y: Vec<[f64; 2]> },
    /// Field files, relative to the config file.
    Files { x: PathBuf, y: PathBuf },
    /// QPSK pulse train; the output carries the given symbol perturbations.
    Constellation {
        n_side: usize,
        symbol_time: f64,
        tau_over_t: f64,
        p_ave: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        symbols: Option<Vec<QpskSymbol>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rho: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        phase: Option<Vec<f64>>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    /// Monte Carlo draws or forward runs; 10⁴ and 10⁵ when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chunk_size: Option<u64>,
    pub execution: Execution,
    pub z_rule: ZRule,
    pub kernel: KernelConvention,
    pub self_check_tol: f64,
    pub small_noise: SmallNoiseVariant,
    pub solver_tol: f64,
    pub max_iter: usize,
    pub include_quintic: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        let fo = FirstOrderOptions::default();
        let so = SolverOptions::default();
        Self {
            samples: None,
            chunk_size: None,
            execution: Execution::default(),
            z_rule: fo.rule,
            kernel: fo.convention,
            self_check_tol: fo.self_check_tol,
            small_noise: SmallNoiseVariant::default(),
            solver_tol: so.tol,
            max_iter: so.max_iter,
            include_quintic: so.include_quintic,
        }
    }
}

impl RunOptions {
    pub fn first_order(&self) -> FirstOrderOptions {
        FirstOrderOptions {
            rule: self.z_rule,
            convention: self.kernel,
            execution: self.execution,
            self_check_tol: self.self_check_tol,
        }
    }

    pub fn solver(&self) -> SolverOptions {
        SolverOptions {
            tol: self.solver_tol,
            max_iter: self.max_iter,
            include_quintic: self.include_quintic,
            execution: self.execution,
        }
    }

    pub fn small_noise(&self) -> SmallNoiseOptions {
        SmallNoiseOptions {
            variant: self.small_noise,
            solver: self.solver(),
            first_order: self.first_order(),
        }
    }
}

/// Everything a single evaluation needs, with fields on the lattice.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub grid: Grid,
    pub params: ChannelParams,
    pub x: Vec<Complex64>,
    pub y: Vec<Complex64>,
    pub constellation: Option<(ConstellationSpec, Vec<QpskSymbol>)>,
}

fn missing(what: &str, method: MethodSel) -> CliError {
    CliError::Config(format!("method {method:?} needs a [{what}] section"))
}

fn pairs(v: &[[f64; 2]]) -> Vec<Complex64> {
    v.iter().map(|[re, im]| Complex64::new(*re, *im)).collect()
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn demo_config(&self) -> DemoConfig {
        self.demo.clone().unwrap_or_default()
    }

    /// Build the lattice and fields, checking every precondition that can be
    /// checked before the method runs.
    pub fn prepare(&self, base_dir: &Path) -> Result<Prepared> {
        if self.options.samples == Some(0) || self.options.chunk_size == Some(0) {
            return Err(CliError::Config("samples and chunk_size must be positive".into()));
        }
        if self.method == MethodSel::Demo {
            let s = self.demo_config().setup()?;
            let x = build_input(&s.spec, &s.symbols, &s.grid)?.into_vec();
            return Ok(Prepared {
                y: x.clone(),
                x,
                grid: s.grid,
                params: s.params,
                constellation: Some((s.spec, s.symbols)),
            });
        }
        let params = self.channel.ok_or_else(|| missing("channel", self.method))?;
        params.validate()?;
        let g = self.grid.ok_or_else(|| missing("grid", self.method))?;
        let signal = self.signal.as_ref().ok_or_else(|| missing("signal", self.method))?;
        let prepared = match signal {
            SignalSection::Constellation {
                n_side,
                symbol_time,
                tau_over_t,
                p_ave,
                symbols,
                rho,
                phase,
            } => {
                if g.delta.is_some() || g.omega_min.is_some() {
                    return Err(CliError::Config(
                        "constellation signals fix delta and omega_min; remove them from [grid]".into(),
                    ));
                }
                let spec = ConstellationSpec::from_power(*n_side, *symbol_time, tau_over_t * symbol_time, *p_ave)?;
                let grid = Grid::new(spec.grid_spec(g.modes, g.steps, g.length)?)?;
                let n = spec.n_symbols();
                let symbols = symbols.clone().unwrap_or_else(|| (0..n).map(QpskSymbol::from_index).collect());
                let pert = SymbolPerturbation {
                    rho: rho.clone().unwrap_or_else(|| vec![0.0; n]),
                    phase: phase.clone().unwrap_or_else(|| vec![0.0; n]),
                };
                let x = build_input(&spec, &symbols, &grid)?.into_vec();
                let y = build_received(&spec, &symbols, &pert, &grid, &params)?.into_vec();
                Prepared {
                    grid,
                    params,
                    x,
                    y,
                    constellation: Some((spec, symbols)),
                }
            }
            SignalSection::Samples { .. } | SignalSection::Files { .. } => {
                let delta = g
                    .delta
                    .ok_or_else(|| CliError::Config("[grid] needs delta for explicit fields".into()))?;
                let spec = match g.omega_min {
                    Some(w) => GridSpec::new(g.modes, g.steps, delta, w, g.length)?,
                    None => GridSpec::symmetric(g.modes, g.steps, delta, g.length)?,
                };
                let grid = Grid::new(spec)?;
                let (x, y) = match signal {
                    SignalSection::Samples { x, y } => (pairs(x), pairs(y)),
                    SignalSection::Files { x, y } => (
                        read_field(&base_dir.join(x), grid.spec())?,
                        read_field(&base_dir.join(y), grid.spec())?,
                    ),
                    SignalSection::Constellation { .. } => unreachable!(),
                };
                for (name, f) in [("x", &x), ("y", &y)] {
                    if f.len() != grid.modes() {
                        return Err(nlse_pdf::Error::GridMismatch {
                            expected: grid.modes(),
                            found: f.len(),
                        }
                        .into());
                    }
                    if f.iter().any(|v| !v.is_finite()) {
                        return Err(CliError::Config(format!("signal {name} has non-finite samples")));
                    }
                }
                Prepared {
                    grid,
                    params,
                    x,
                    y,
                    constellation: None,
                }
            }
        };
        if self.method == MethodSel::ForwardMc && prepared.constellation.is_none() {
            return Err(CliError::Config("method forward-mc needs a constellation signal".into()));
        }
        if matches!(self.method, MethodSel::Pathint | MethodSel::Series0 | MethodSel::Series1 | MethodSel::Smallq) {
            prepared.params.require_noise()?;
        }
        Ok(prepared)
    }
}
