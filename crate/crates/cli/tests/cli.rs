use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nlse_pdf::channel::free_propagate;
use nlse_pdf::perturbative_pdf::log_p0;
use nlse_pdf::{ChannelParams, Complex64, Grid, GridSpec};
use nlse_pdf_cli::field_io::write_field;
use nlse_pdf_cli::{ResultDocument, RunConfig};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nlse-pdf"))
}

fn cmd(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small lattice with fields stored in files next to the config.
fn stored_pair(dir: &Path, method: &str, gamma: f64, extra: &str) -> PathBuf {
    let spec = GridSpec::symmetric(2, 8, 0.5, 1.0).unwrap();
    let g = Grid::new(spec).unwrap();
    let x = [Complex64::new(0.9, 0.2), Complex64::new(-0.3, 0.5)];
    let mut y = free_propagate(&g, &x, 0.4, 1.0).into_vec();
    y[0] += Complex64::new(0.2, -0.1);
    y[1] += Complex64::new(-0.15, 0.25);
    write_field(&dir.join("x.field"), &spec, &x).unwrap();
    write_field(&dir.join("y.field"), &spec, &y).unwrap();
    let cfg = format!(
        r#"
method = "{method}"
seed = 5

[channel]
beta2 = 0.4
gamma = {gamma:e}
q = 0.2

[grid]
modes = 2
steps = 8
length = 1.0
delta = 0.5

[signal]
kind = "files"
x = "x.field"
y = "y.field"
{extra}
"#
    );
    write(dir, "run.toml", &cfg)
}

fn run_doc(config: &Path, extra: &[&str]) -> ResultDocument {
    let mut args = vec!["run", s(config)];
    args.extend_from_slice(extra);
    serde_json::from_str(&stdout(&cmd(&args))).unwrap()
}

#[test]
fn series0_on_stored_fields_is_deterministic_gaussian() {
    let dir = TempDir::new().unwrap();
    let cfg = stored_pair(dir.path(), "series0", 0.0, "");
    let doc = run_doc(&cfg, &[]);
    assert_eq!(doc.std_err, Some(0.0));
    let spec = GridSpec::symmetric(2, 8, 0.5, 1.0).unwrap();
    let g = Grid::new(spec).unwrap();
    let x = nlse_pdf_cli::field_io::read_field(&dir.path().join("x.field"), &spec).unwrap();
    let y = nlse_pdf_cli::field_io::read_field(&dir.path().join("y.field"), &spec).unwrap();
    let expect = log_p0(&g, &x, &y, &ChannelParams::new(0.4, 0.0, 0.2).unwrap()).unwrap().log_p;
    assert_eq!(doc.log_p, Some(expect));
}

#[test]
fn same_seed_gives_identical_bytes_for_any_thread_count() {
    let dir = TempDir::new().unwrap();
    let cfg = stored_pair(dir.path(), "pathint", 0.02, "[options]\nsamples = 20000\nchunk_size = 1000");
    let a = stdout(&cmd(&["run", s(&cfg)]));
    let b = stdout(&cmd(&["run", s(&cfg), "--threads", "1"]));
    let c = stdout(&cmd(&["run", s(&cfg), "--threads", "3"]));
    assert_eq!(a, b);
    assert_eq!(a, c);
    let other = stdout(&cmd(&["run", s(&cfg), "--seed", "6"]));
    assert_ne!(a, other);
}

#[test]
fn document_validates_and_echo_reingests() {
    let dir = TempDir::new().unwrap();
    let cfg_path = stored_pair(dir.path(), "smallq", 0.02, "");
    let text = stdout(&cmd(&["run", s(&cfg_path)]));
    let doc: ResultDocument = serde_json::from_str(&text).unwrap();
    assert_eq!(doc.schema, nlse_pdf_cli::run::SCHEMA);
    assert_eq!(doc.config, RunConfig::from_path(&cfg_path).unwrap());
    let d = &doc.diagnostics;
    assert!(d.gamma_tilde.unwrap() > 0.0 && d.epsilon.unwrap() > 0.0);
    assert!(d.residual_norm.unwrap() < 1e-8);
    assert!(d.iterations.unwrap() >= 1);
    // the echo is a complete config on its own
    let echo = serde_json::to_string(&doc.config).unwrap();
    let back: RunConfig = serde_json::from_str(&echo).unwrap();
    assert_eq!(back, doc.config);
    assert_eq!(serde_json::to_string_pretty(&doc).unwrap() + "\n", text);
}

#[test]
fn pathint_agrees_with_series1_at_small_gamma() {
    let dir = TempDir::new().unwrap();
    let opts = "[options]\nsamples = 200000\nz_rule = { kind = \"lattice\", steps = 8 }";
    let mc = run_doc(&stored_pair(dir.path(), "pathint", 0.01, opts), &[]);
    let series = run_doc(&stored_pair(dir.path(), "series1", 0.01, opts), &[]);
    let (a, se) = (mc.log_p.unwrap(), mc.std_err.unwrap());
    let b = series.log_p.unwrap();
    assert!(mc.diagnostics.reliable.unwrap());
    assert!((a - b).abs() < 3.0 * se + 1e-4, "{a} vs {b} (se {se})");
}

#[test]
fn guard_violations_exit_nonzero_and_name_the_guard() {
    let dir = TempDir::new().unwrap();
    let cfg = stored_pair(dir.path(), "series1", 50.0, "");
    let o = cmd(&["run", s(&cfg)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("series validity guard"));

    let bad = write(dir.path(), "bad.toml", &std::fs::read_to_string(&cfg).unwrap().replace("q = 0.2", "q = -1.0"));
    let o = cmd(&["validate-config", s(&bad)]);
    assert_ne!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Q"));

    let o = cmd(&["run", s(&write(dir.path(), "nogrid.toml", "method = \"series0\"\n[channel]\nbeta2 = 0.0\ngamma = 0.0\nq = 1.0\n"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("[grid]"));

    let o = cmd(&["run", s(&write(dir.path(), "typo.toml", "method = \"series0\"\nsede = 1\n"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn mismatched_field_header_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = stored_pair(dir.path(), "series0", 0.0, "");
    let text = std::fs::read_to_string(&cfg).unwrap().replace("steps = 8", "steps = 9");
    let o = cmd(&["validate-config", s(&write(dir.path(), "run9.toml", &text))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not match"));
    assert!(stdout(&cmd(&["validate-config", s(&cfg)])).starts_with("ok"));
}

#[test]
fn sweep_emits_one_row_per_value() {
    let dir = TempDir::new().unwrap();
    let cfg = stored_pair(dir.path(), "series1", 0.0, "");
    let out = stdout(&cmd(&["sweep", s(&cfg), "--axis", "channel.gamma", "--values", "0,1e-3,1e-2"]));
    let mut r = csv::Reader::from_reader(out.as_bytes());
    assert_eq!(&r.headers().unwrap()[0], "channel.gamma");
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    let gt: Vec<f64> = rows.iter().map(|row| row[4].parse().unwrap()).collect();
    assert!(gt[0] == 0.0 && gt[0] < gt[1] && gt[1] < gt[2]);
}

#[test]
fn seed_sweep_scatter_matches_reported_error() {
    let dir = TempDir::new().unwrap();
    let cfg = stored_pair(dir.path(), "pathint", 0.05, "[options]\nsamples = 4000");
    let seeds: Vec<String> = (1..=16).map(|s| s.to_string()).collect();
    let out = stdout(&cmd(&["sweep", s(&cfg), "--axis", "seed", "--values", &seeds.join(",")]));
    let mut r = csv::Reader::from_reader(out.as_bytes());
    let (lp, se): (Vec<f64>, Vec<f64>) = r
        .records()
        .map(|row| {
            let row = row.unwrap();
            (row[2].parse::<f64>().unwrap(), row[3].parse::<f64>().unwrap())
        })
        .unzip();
    let n = lp.len() as f64;
    let mean = lp.iter().sum::<f64>() / n;
    let sd = (lp.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let reported = se.iter().sum::<f64>() / n;
    assert!(sd / reported > 0.4 && sd / reported < 2.5, "scatter {sd} vs reported {reported}");
}

#[test]
fn runs_never_touch_inputs() {
    let dir = TempDir::new().unwrap();
    let cfg = stored_pair(dir.path(), "series0", 0.0, "");
    let before: Vec<Vec<u8>> = ["run.toml", "x.field", "y.field"]
        .iter()
        .map(|f| std::fs::read(dir.path().join(f)).unwrap())
        .collect();
    let o = cmd(&["run", s(&cfg), "--output", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    let out = dir.path().join("out.json");
    assert!(cmd(&["run", s(&cfg), "-o", s(&out)]).status.success());
    assert!(out.exists());
    let after: Vec<Vec<u8>> = ["run.toml", "x.field", "y.field"]
        .iter()
        .map(|f| std::fs::read(dir.path().join(f)).unwrap())
        .collect();
    assert_eq!(before, after);
}

#[test]
fn forward_mc_on_a_constellation() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "fwd.toml",
        r#"
method = "forward-mc"
seed = 1
[channel]
beta2 = 1e-3
gamma = 0.0
q = 0.01
[grid]
modes = 81
steps = 16
length = 1.0
[signal]
kind = "constellation"
n_side = 1
symbol_time = 1.0
tau_over_t = 0.125
p_ave = 1.0
[options]
samples = 4000
"#,
    );
    let doc = run_doc(&cfg, &[]);
    let syms = doc.symbols.unwrap();
    assert_eq!(syms.len(), 3);
    for sym in syms {
        // γ = 0: E[ρ²] = 1/A
        let z = (sym.rho_sq.mean - sym.predicted_rho_sq) / sym.rho_sq.std_err;
        assert!(z.abs() < 4.0, "{z}");
    }
}

#[test]
fn demo_writes_tables() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("demo");
    let o = cmd(&["demo-qpsk", "--runs", "500", "--seed", "2", "-o", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let symbols = std::fs::read_to_string(out.join("symbols.csv")).unwrap();
    assert_eq!(symbols.lines().count(), 1 + 5);
    let hist = std::fs::read_to_string(out.join("histograms.csv")).unwrap();
    assert_eq!(hist.lines().count(), 1 + 5 * 16 * 16);
    let report: nlse_pdf::qpsk::DemoReport =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.n_runs, 500);
}
