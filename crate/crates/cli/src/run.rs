use std::path::Path;

use nlse_pdf::channel::diagnostics;
use nlse_pdf::classical_trajectory::{small_noise_log_pdf, solve_trajectory, SmallNoiseVariant};
use nlse_pdf::pathint_mc::{estimate_log_pdf, EstimatorOptions};
use nlse_pdf::perturbative_pdf::{log_p0, series_log_pdf};
use nlse_pdf::qpsk::{empirical_symbol_stats, run_demo, DemoReport, ForwardOptions, MeanEstimate, QpskSymbol, SymbolModel};
use nlse_pdf::LogPdf;
use serde::{Deserialize, Serialize};

use crate::config::{MethodSel, Prepared, RunConfig};
use crate::error::Result;

pub const SCHEMA: &str = "nlse-pdf.result.v1";

const DEFAULT_MC_SAMPLES: u64 = 10_000;
const DEFAULT_FORWARD_RUNS: u64 = 100_000;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diagnostics {
    pub gamma_tilde: Option<f64>,
    pub epsilon: Option<f64>,
    pub p_ave: Option<f64>,
    pub ess: Option<f64>,
    pub n_samples: Option<u64>,
    pub max_abs_log_weight: Option<f64>,
    pub reliable: Option<bool>,
    pub residual_norm: Option<f64>,
    pub iterations: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolSummary {
    pub slot: i64,
    pub symbol: QpskSymbol,
    pub predicted_rho_sin: f64,
    pub rho_sin: MeanEstimate,
    pub predicted_rho_sq: f64,
    pub rho_sq: MeanEstimate,
}

/// Output of `run`: the numbers, how reliable they are, and the exact
/// config that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultDocument {
    pub schema: String,
    pub method: MethodSel,
    pub seed: u64,
    pub log_p: Option<f64>,
    pub std_err: Option<f64>,
    pub diagnostics: Diagnostics,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbols: Option<Vec<SymbolSummary>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demo: Option<DemoReport>,
    pub config: RunConfig,
}

impl ResultDocument {
    fn new(cfg: &RunConfig) -> Self {
        Self {
            schema: SCHEMA.to_owned(),
            method: cfg.method,
            seed: cfg.seed,
            log_p: None,
            std_err: None,
            diagnostics: Diagnostics::default(),
            warnings: Vec::new(),
            symbols: None,
            demo: None,
            config: cfg.clone(),
        }
    }

    fn absorb(&mut self, lp: LogPdf) {
        self.log_p = Some(lp.log_p);
        self.std_err = Some(lp.std_err);
        self.diagnostics.ess = lp.ess;
        self.diagnostics.n_samples = lp.n_samples;
        self.diagnostics.max_abs_log_weight = lp.max_abs_log_weight;
        self.diagnostics.reliable = Some(lp.reliable);
        self.warnings.extend(lp.warnings);
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

fn forward_options(cfg: &RunConfig) -> ForwardOptions {
    let d = ForwardOptions::default();
    ForwardOptions {
        n_runs: cfg.options.samples.unwrap_or(DEFAULT_FORWARD_RUNS),
        seed: cfg.seed,
        chunk_size: cfg.options.chunk_size.unwrap_or(d.chunk_size),
        execution: cfg.options.execution,
    }
}

pub fn run(cfg: &RunConfig, base_dir: &Path) -> Result<ResultDocument> {
    let p = cfg.prepare(base_dir)?;
    run_prepared(cfg, &p)
}

pub fn run_prepared(cfg: &RunConfig, p: &Prepared) -> Result<ResultDocument> {
    let mut doc = ResultDocument::new(cfg);
    if let Ok(d) = diagnostics(&p.grid, &p.x, &p.params) {
        doc.diagnostics.gamma_tilde = Some(d.gamma_tilde);
        doc.diagnostics.epsilon = Some(d.epsilon);
        doc.diagnostics.p_ave = Some(d.p_ave);
    }
    let opts = &cfg.options;
    match cfg.method {
        MethodSel::Pathint => {
            let d = EstimatorOptions::default();
            let eo = EstimatorOptions {
                n_samples: opts.samples.unwrap_or(DEFAULT_MC_SAMPLES),
                seed: cfg.seed,
                chunk_size: opts.chunk_size.unwrap_or(d.chunk_size),
                execution: opts.execution,
            };
            doc.absorb(estimate_log_pdf(&p.grid, &p.x, &p.y, &p.params, &eo)?);
        }
        MethodSel::Series0 => doc.absorb(log_p0(&p.grid, &p.x, &p.y, &p.params)?),
        MethodSel::Series1 => doc.absorb(series_log_pdf(&p.grid, &p.x, &p.y, &p.params, 1, &opts.first_order())?),
        MethodSel::Smallq => {
            let sn = opts.small_noise();
            doc.absorb(small_noise_log_pdf(&p.grid, &p.x, &p.y, &p.params, &sn)?);
            if sn.variant == SmallNoiseVariant::Trajectory {
                let t = solve_trajectory(&p.grid, &p.x, &p.y, &p.params, &sn.solver)?;
                doc.diagnostics.residual_norm = Some(t.residual_norm);
                doc.diagnostics.iterations = Some(t.iterations);
            }
        }
        MethodSel::ForwardMc => {
            let (spec, symbols) = p.constellation.as_ref().expect("checked in prepare");
            let stats = empirical_symbol_stats(spec, symbols, &p.grid, &p.params, &forward_options(cfg))?;
            let model = SymbolModel::new(spec, &p.grid, &p.params)?;
            doc.diagnostics.n_samples = Some(stats.n_runs() as u64);
            doc.warnings.extend(nlse_pdf::qpsk::regime_warnings(spec, &p.grid, &p.params));
            doc.symbols = Some(
                spec.slots()
                    .enumerate()
                    .map(|(k, slot)| SymbolSummary {
                        slot,
                        symbol: symbols[k],
                        predicted_rho_sin: model.mean_rho_sin(),
                        rho_sin: stats.rho_sin(k),
                        predicted_rho_sq: 1.0 / model.gaussian,
                        rho_sq: stats.rho_sq(k),
                    })
                    .collect(),
            );
        }
        MethodSel::Demo => {
            let report = run_demo(&cfg.demo_config(), &forward_options(cfg))?;
            doc.diagnostics.n_samples = Some(report.n_runs);
            doc.warnings.extend(report.warnings.iter().cloned());
            doc.demo = Some(report);
        }
    }
    Ok(doc)
}
