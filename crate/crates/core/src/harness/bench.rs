use std::hint::black_box;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::data::best_loss;
use super::{kind_name, test_records, NetworkKind, Run, Summary};
use crate::error::Result;
use crate::fitting::LeastSquaresFitter;
use crate::integrate::{sample_times, simulate};
use crate::neural::{BranchNet, Checkpoint};
use crate::operator::NeuralBsplineOperator;

pub const BENCH_SCHEMA: &str = "splineop.bench";

const CAUTION: &str = "Timings depend on hardware, compiler and build profile; \
                       compare methods only within one report.";

/// One row of the timing table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: String,
    pub horizon: f64,
    pub control_points: Option<usize>,
    pub parameters: Option<usize>,
    pub loss_mean: Option<f64>,
    pub loss_std: Option<f64>,
    pub models: Option<usize>,
    /// Whether the weights came from a trained checkpoint.
    pub trained: Option<bool>,
    pub time_mean: f64,
    pub time_std: f64,
    pub time_median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hardware {
    pub os: String,
    pub arch: String,
    pub cpu: String,
    pub logical_cpus: usize,
    pub timing_threads: usize,
    pub optimized_build: bool,
}

impl Hardware {
    pub fn detect() -> Self {
        let cpu = std::fs::read_to_string("/proc/cpuinfo")
            .ok()
            .and_then(|s| {
                s.lines()
                    .find(|l| l.starts_with("model name"))
                    .and_then(|l| l.split(':').nth(1))
                    .map(|m| m.trim().to_string())
            })
            .unwrap_or_else(|| "unknown".into());
        Self {
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            cpu,
            logical_cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            timing_threads: 1,
            optimized_build: !cfg!(debug_assertions),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema: String,
    pub schema_version: u32,
    pub repetitions: usize,
    pub warmup: usize,
    pub hardware: Hardware,
    pub caution: String,
    pub rows: Vec<BenchRow>,
}

/// Times `f` `reps` times after `warmup` untimed calls; the argument is the repetition index.
fn time_it(warmup: usize, reps: usize, mut f: impl FnMut(usize) -> Result<()>) -> Result<Summary> {
    for i in 0..warmup {
        f(i)?;
    }
    let mut samples = Vec::with_capacity(reps);
    for i in 0..reps {
        let start = Instant::now();
        f(i)?;
        samples.push(start.elapsed().as_secs_f64());
    }
    Ok(Summary::of(&samples))
}

/// Trained checkpoints of one kind: the explicit one if configured, else every seed found on disk.
fn checkpoints(run: &Run, kind: NetworkKind) -> Result<Vec<Checkpoint>> {
    let explicit = match kind {
        NetworkKind::Mlp => &run.config.bench.mlp_checkpoint,
        NetworkKind::Gru => &run.config.bench.gru_checkpoint,
    };
    if let Some(path) = explicit {
        return Ok(vec![Checkpoint::load(path)?]);
    }
    run.config
        .training
        .seeds
        .iter()
        .map(|&s| run.checkpoint_path(kind, s))
        .filter(|p| p.exists())
        .map(|p| Checkpoint::load(&p))
        .collect()
}

/// Per-trajectory timings of simulation, LS fitting and both branch networks.
///
/// Network timings cover the forward pass, the reshape and the spline
/// evaluation on the sample grid. Everything runs on the calling thread.
pub fn bench(run: &Run) -> Result<BenchReport> {
    let c = &run.config;
    let (warmup, reps) = (c.bench.warmup, c.bench.repetitions);
    let (records, _) = test_records(c, reps.clamp(1, 100))?;
    let x0s: Vec<_> = records.iter().map(|r| r.x0).collect();
    let pick = |i: usize| &x0s[i % x0s.len()];
    let times = sample_times(c.dynamics.horizon, c.dynamics.step)?;
    let system = c.dynamics.build()?;
    let basis = c.basis_descriptor().build()?;
    let fitter = LeastSquaresFitter::new(&basis, &times)?;
    let row = |method: &str, t: Summary| BenchRow {
        method: method.into(),
        horizon: c.dynamics.horizon,
        control_points: None,
        parameters: None,
        loss_mean: None,
        loss_std: None,
        models: None,
        trained: None,
        time_mean: t.mean,
        time_std: t.std,
        time_median: t.median,
    };

    let mut rows = Vec::new();
    let ode = time_it(warmup, reps, |i| {
        black_box(simulate(&system, pick(i), c.dynamics.horizon, c.dynamics.step)?);
        Ok(())
    })?;
    rows.push(row("ODE (RK4)", ode));

    let trajectories: Vec<_> = records.iter().filter_map(|r| r.trajectory.clone()).collect();
    let fit = time_it(warmup, reps, |i| {
        black_box(fitter.fit(&trajectories[i % trajectories.len()])?);
        Ok(())
    })?;
    let mut fit_row = row("LS fit", fit);
    fit_row.control_points = Some(basis.len());
    rows.push(fit_row);

    for kind in [NetworkKind::Mlp, NetworkKind::Gru] {
        let trained = checkpoints(run, kind)?;
        let model = match trained.first() {
            Some(ck) => ck.model()?,
            None => c.build_model(kind, 0)?,
        };
        let op = NeuralBsplineOperator::new(model, basis.clone())?;
        let t = time_it(warmup, reps, |i| {
            black_box(op.predict_trajectory(&pick(i).0, &times)?);
            Ok(())
        })?;
        let losses: Vec<f64> = trained.iter().map(best_loss).collect();
        let l = Summary::of(&losses);
        let mut r = row(&kind_name(kind).to_uppercase(), t);
        r.control_points = Some(basis.len());
        r.parameters = Some(op.model().param_count());
        r.models = Some(trained.len());
        r.trained = Some(!trained.is_empty());
        r.loss_mean = (!losses.is_empty()).then_some(l.mean);
        r.loss_std = (losses.len() > 1).then_some(l.std);
        rows.push(r);
    }

    let report = BenchReport {
        schema: BENCH_SCHEMA.into(),
        schema_version: 1,
        repetitions: reps,
        warmup,
        hardware: Hardware::detect(),
        caution: CAUTION.into(),
        rows,
    };
    let mut w = csv::Writer::from_path(run.out.join("bench.csv"))?;
    for r in &report.rows {
        w.serialize(r)?;
    }
    w.flush()?;
    run.write_json("bench.json", &report)?;
    Ok(report)
}
