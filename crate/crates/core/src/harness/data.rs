use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{kind_name, NetworkKind, Run, Summary};
use crate::dataset::{Dataset, DATASET_SCHEMA};
use crate::error::{Error, Result};
use crate::neural::{Checkpoint, StopReason, CHECKPOINT_SCHEMA};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenDataReport {
    pub path: PathBuf,
    pub records: usize,
    pub skipped: usize,
    pub rotation_path: crate::dataset::RotationPath,
    /// Distribution of the per-record LS residual.
    pub residual: Summary,
    pub seconds: f64,
}

/// Builds the dataset described by the config and writes it to the output directory.
pub fn gen_data(run: &Run) -> Result<GenDataReport> {
    let start = std::time::Instant::now();
    let write_csv = run.config.sampling.write_csv;
    let dataset = Dataset::build(&run.config.dataset_spec(), &run.config.dynamics, write_csv)?;
    let path = run.dataset_path();
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    dataset.save(&path)?;
    if write_csv {
        let dir = run.out.join("records");
        std::fs::create_dir_all(&dir)?;
        for (i, r) in dataset.records.iter().enumerate() {
            if let Some(traj) = &r.trajectory {
                traj.write_csv(std::fs::File::create(dir.join(format!("trajectory_{i:06}.csv")))?)?;
            }
            r.control_points
                .write_csv(std::fs::File::create(dir.join(format!("control_points_{i:06}.csv")))?)?;
        }
    }
    let report = GenDataReport {
        path,
        records: dataset.len(),
        skipped: dataset.skipped.len(),
        rotation_path: dataset.provenance.rotation_path,
        residual: Summary::of(&dataset.residuals()),
        seconds: start.elapsed().as_secs_f64(),
    };
    run.write_json("dataset_summary.json", &report)?;
    Ok(report)
}

/// Human-readable summary of a dataset or checkpoint file, or of everything
/// an experiment has produced so far.
pub fn show(target: &Path, run: Option<&Run>) -> Result<String> {
    if let Some(text) = json_document(target) {
        let value: serde_json::Value = serde_json::from_str(&text)?;
        return match value.get("schema").and_then(|s| s.as_str()) {
            Some(DATASET_SCHEMA) => Ok(describe_dataset(target, &Dataset::from_json(&text)?)),
            Some(CHECKPOINT_SCHEMA) => Ok(describe_checkpoint(target, &Checkpoint::from_json(&text)?)),
            Some(other) => Err(Error::Schema(format!("{}: unknown schema {other:?}", target.display()))),
            None => Err(Error::Schema(format!("{}: no schema field", target.display()))),
        };
    }
    let Some(run) = run else {
        return Err(Error::Config(format!("{} is not a dataset or checkpoint", target.display())));
    };
    let c = &run.config;
    let mut s = String::new();
    let _ = writeln!(s, "experiment {:?} -> {}", c.name, run.out.display());
    let _ = writeln!(
        s,
        "  basis: {} control points, degree {}, horizon {} s, step {} s",
        c.basis.num_basis, c.basis.degree, c.dynamics.horizon, c.dynamics.step
    );
    let _ = writeln!(
        s,
        "  sampling: {} initial conditions x {} (rotations), seed {}",
        c.sampling.count,
        1 + c.sampling.angles.len(),
        c.sampling.seed
    );
    let _ = writeln!(s, "  network: {:?}, seeds {:?}", c.network.kind, c.training.seeds);
    let dataset = run.dataset_path();
    if dataset.exists() {
        s.push_str(&describe_dataset(&dataset, &Dataset::load(&dataset)?));
    } else {
        let _ = writeln!(s, "no dataset yet ({})", dataset.display());
    }
    for kind in [NetworkKind::Mlp, NetworkKind::Gru] {
        for &seed in &c.training.seeds {
            let path = run.checkpoint_path(kind, seed);
            if path.exists() {
                s.push_str(&describe_checkpoint(&path, &Checkpoint::load(&path)?));
            }
        }
    }
    Ok(s)
}

fn json_document(path: &Path) -> Option<String> {
    if path.extension().is_some_and(|e| e == "json") {
        let text = std::fs::read_to_string(path).ok()?;
        let value: serde_json::Value = serde_json::from_str(&text).ok()?;
        value.get("schema").is_some().then_some(text)
    } else {
        None
    }
}

fn describe_dataset(path: &Path, d: &Dataset) -> String {
    let r = Summary::of(&d.residuals());
    let p = &d.provenance;
    format!(
        "dataset {}\n  records {} (skipped {}), from {} initial conditions x {} rotations, seed {}\n  \
         box: position {} velocity {} angle {} rate {}\n  basis: {} control points, degree {}, [{}, {}]\n  \
         LS residual: median {:.3e}, p90 {:.3e}, max {:.3e}\n  rotation path {:?}, dynamics {}\n",
        path.display(),
        d.len(),
        d.skipped.len(),
        p.count,
        p.angles.len(),
        p.seed,
        p.sampling.position,
        p.sampling.velocity,
        p.sampling.angle,
        p.sampling.rate,
        d.basis.num_basis,
        d.basis.degree,
        d.basis.start,
        d.basis.end,
        r.median,
        r.p90,
        r.max,
        p.rotation_path,
        &p.dynamics_hash[..12],
    )
}

fn describe_checkpoint(path: &Path, ck: &Checkpoint) -> String {
    let kind = match &ck.architecture {
        crate::neural::Architecture::Mlp { widths, activation, .. } => {
            format!("{} {widths:?} {activation:?}", kind_name(NetworkKind::Mlp))
        }
        crate::neural::Architecture::Gru {
            hidden,
            head_hidden,
            steps,
            activation,
            ..
        } => format!(
            "{} hidden {hidden}, head {head_hidden:?}, {steps} steps, {activation:?}",
            kind_name(NetworkKind::Gru)
        ),
    };
    let last = ck.history.last();
    let best = ck
        .history
        .iter()
        .map(|r| r.validation_loss.unwrap_or(r.train_loss))
        .fold(f64::INFINITY, f64::min);
    format!(
        "checkpoint {}\n  {kind}, {} parameters, init seed {}\n  epochs {}, best loss {:.3e}, last train {:.3e}\n",
        path.display(),
        ck.param_count,
        ck.init_seed,
        ck.history.len(),
        best,
        last.map_or(f64::NAN, |r| r.train_loss),
    )
}

/// Best monitored loss of a run; used by the reports.
pub(crate) fn best_loss(ck: &Checkpoint) -> f64 {
    ck.history
        .iter()
        .map(|r| r.validation_loss.unwrap_or(r.train_loss))
        .fold(f64::INFINITY, f64::min)
}

pub(crate) fn is_diverged(stop: &StopReason) -> bool {
    matches!(stop, StopReason::Diverged(_))
}
