use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::run::{run, ResultDocument};

/// Copy of `cfg` with the numeric field at dotted path `axis` set to `value`.
pub fn with_axis(cfg: &RunConfig, axis: &str, value: &str) -> Result<RunConfig> {
    let bad = |why: String| CliError::Config(format!("sweep axis `{axis}`: {why}"));
    let mut root = toml::Value::try_from(cfg).map_err(|e| bad(e.to_string()))?;
    let mut node = &mut root;
    for key in axis.split('.') {
        node = node
            .get_mut(key)
            .ok_or_else(|| bad(format!("no field `{key}` in the config (set it explicitly to sweep it)")))?;
    }
    *node = match node {
        toml::Value::Integer(_) => toml::Value::Integer(value.parse().map_err(|_| bad(format!("`{value}` is not an integer")))?),
        toml::Value::Float(_) => toml::Value::Float(value.parse().map_err(|_| bad(format!("`{value}` is not a number")))?),
        _ => return Err(bad("not a numeric field".into())),
    };
    let text = toml::to_string(&root).map_err(|e| bad(e.to_string()))?;
    RunConfig::from_toml(&text)
}

#[derive(Serialize)]
struct Row<'a> {
    value: &'a str,
    method: String,
    log_p: Option<f64>,
    std_err: Option<f64>,
    gamma_tilde: Option<f64>,
    epsilon: Option<f64>,
    ess: Option<f64>,
    n_samples: Option<u64>,
    reliable: Option<bool>,
    residual_norm: Option<f64>,
    iterations: Option<usize>,
}

impl<'a> Row<'a> {
    fn new(value: &'a str, d: &ResultDocument) -> Self {
        let g = &d.diagnostics;
        Row {
            value,
            method: serde_json::to_value(d.method).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default(),
            log_p: d.log_p,
            std_err: d.std_err,
            gamma_tilde: g.gamma_tilde,
            epsilon: g.epsilon,
            ess: g.ess,
            n_samples: g.n_samples,
            reliable: g.reliable,
            residual_norm: g.residual_norm,
            iterations: g.iterations,
        }
    }
}

/// Run `cfg` once per value and write one CSV row each. The first column is
/// named after the axis.
pub fn sweep<W: Write>(cfg: &RunConfig, base_dir: &Path, axis: &str, values: &[String], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record([
        axis,
        "method",
        "log_p",
        "std_err",
        "gamma_tilde",
        "epsilon",
        "ess",
        "n_samples",
        "reliable",
        "residual_norm",
        "iterations",
    ])?;
    for v in values {
        let doc = run(&with_axis(cfg, axis, v)?, base_dir)?;
        w.serialize(Row::new(v, &doc))?;
    }
    w.flush().map_err(|e| CliError::io("<sweep output>", e))?;
    Ok(())
}
