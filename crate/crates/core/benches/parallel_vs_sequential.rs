use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nlse_pdf::channel::free_propagate;
use nlse_pdf::classical_trajectory::{solve_trajectory, SolverOptions};
use nlse_pdf::pathint_mc::{estimate_log_pdf, EstimatorOptions};
use nlse_pdf::qpsk::{empirical_symbol_stats, DemoConfig, ForwardOptions};
use nlse_pdf::{ChannelParams, Complex64, Execution, Grid, GridSpec};

const STRATEGIES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn fields(g: &Grid, beta2: f64) -> (Vec<Complex64>, Vec<Complex64>) {
    let x: Vec<Complex64> = (0..g.modes())
        .map(|j| Complex64::from_polar(0.6, 0.9 * j as f64))
        .collect();
    let mut y = free_propagate(g, &x, beta2, g.length()).into_vec();
    for (j, v) in y.iter_mut().enumerate() {
        *v += Complex64::new(0.05 * (j as f64).cos(), -0.04);
    }
    (x, y)
}

fn path_integral(c: &mut Criterion) {
    let g = Grid::new(GridSpec::symmetric(16, 64, 0.25, 1.0).unwrap()).unwrap();
    let p = ChannelParams::new(0.3, 0.02, 0.05).unwrap();
    let (x, y) = fields(&g, p.beta2);
    let mut group = c.benchmark_group("estimate_log_pdf");
    group.sample_size(10);
    for (name, execution) in STRATEGIES {
        let opts = EstimatorOptions {
            n_samples: 8192,
            chunk_size: 512,
            execution,
            ..Default::default()
        };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| estimate_log_pdf(&g, &x, &y, &p, &opts).unwrap())
        });
    }
    group.finish();
}

fn forward_runs(c: &mut Criterion) {
    let s = DemoConfig { steps: 32, ..Default::default() }.setup().unwrap();
    let mut group = c.benchmark_group("forward_runs");
    group.sample_size(10);
    for (name, execution) in STRATEGIES {
        let opts = ForwardOptions {
            n_runs: 2048,
            chunk_size: 128,
            execution,
            ..Default::default()
        };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| empirical_symbol_stats(&s.spec, &s.symbols, &s.grid, &s.params, &opts).unwrap())
        });
    }
    group.finish();
}

fn trajectory(c: &mut Criterion) {
    let g = Grid::new(GridSpec::symmetric(32, 256, 0.25, 1.0).unwrap()).unwrap();
    let p = ChannelParams::new(0.3, 0.05, 0.01).unwrap();
    let (x, y) = fields(&g, p.beta2);
    let mut group = c.benchmark_group("solve_trajectory");
    group.sample_size(10);
    for (name, execution) in STRATEGIES {
        let opts = SolverOptions { execution, ..Default::default() };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| solve_trajectory(&g, &x, &y, &p, &opts).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, path_integral, forward_runs, trajectory);
criterion_main!(benches);
