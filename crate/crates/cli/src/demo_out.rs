//! Delimited-text tables for the QPSK demo.

use std::f64::consts::PI;
use std::io::Write;

use nlse_pdf::qpsk::{DemoReport, SymbolModel};
use nlse_pdf::quad::gauss_legendre;

use crate::error::{CliError, Result};

fn flush<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush().map_err(|e| CliError::io("<csv output>", e))
}

/// One row per symbol: predicted and empirical moments.
pub fn write_symbols<W: Write>(report: &DemoReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "slot",
        "symbol",
        "predicted_rho_sin",
        "empirical_rho_sin",
        "rho_sin_std_err",
        "predicted_rho_sq",
        "empirical_rho_sq",
        "rho_sq_std_err",
        "ks_rho_sq",
    ])?;
    for s in &report.symbols {
        let sym = serde_json::to_value(s.symbol)?;
        w.write_record([
            s.slot.to_string(),
            sym.as_str().unwrap_or_default().to_owned(),
            s.predicted_rho_sin.to_string(),
            s.empirical_rho_sin.mean.to_string(),
            s.empirical_rho_sin.std_err.to_string(),
            s.predicted_rho_sq.to_string(),
            s.empirical_rho_sq.mean.to_string(),
            s.empirical_rho_sq.std_err.to_string(),
            s.ks_rho_sq.to_string(),
        ])?;
    }
    flush(w)
}

/// Probability of the bin `[r0, r1) × [p0, p1)` under the per-symbol density.
pub fn predicted_bin_mass(model: &SymbolModel, r0: f64, r1: f64, p0: f64, p1: f64) -> Result<f64> {
    let a = model.gaussian;
    let radial = (-a * r0 * r0).exp() - (-a * r1 * r1).exp();
    // ∫ρ² e^{−Aρ²} dρ is smooth on a single bin
    let skew: f64 = gauss_legendre(12, r0, r1)?
        .iter()
        .map(|(r, w)| w * r * r * (-a * r * r).exp())
        .sum();
    Ok((radial / (2.0 * a) * (p1 - p0) + model.skew * skew * (p0.cos() - p1.cos())) * a / PI)
}

/// Joint `(ρ, Δφ)` histogram next to the predicted mass of each bin.
pub fn write_histograms<W: Write>(report: &DemoReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "slot",
        "rho_lo",
        "rho_hi",
        "phase_lo",
        "phase_hi",
        "count",
        "empirical_mass",
        "predicted_mass",
    ])?;
    for s in &report.symbols {
        let h = &s.histogram;
        let total = h.total().max(1) as f64;
        let dr = h.rho_max / h.rho_bins as f64;
        let dp = 2.0 * PI / h.phase_bins as f64;
        for r in 0..h.rho_bins {
            for p in 0..h.phase_bins {
                let (r0, p0) = (r as f64 * dr, -PI + p as f64 * dp);
                let count = h.counts[r * h.phase_bins + p];
                let predicted = predicted_bin_mass(&report.model, r0, r0 + dr, p0, p0 + dp)?;
                w.write_record([
                    s.slot.to_string(),
                    r0.to_string(),
                    (r0 + dr).to_string(),
                    p0.to_string(),
                    (p0 + dp).to_string(),
                    count.to_string(),
                    (count as f64 / total).to_string(),
                    predicted.to_string(),
                ])?;
            }
        }
    }
    flush(w)
}
