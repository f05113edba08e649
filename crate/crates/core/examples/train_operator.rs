//! Trains a small MLP branch net, then predicts a trajectory and checks the error budget.

use splineop::bspline::BasisDescriptor;
use splineop::dataset::{Dataset, DatasetSpec};
use splineop::dynamics::DynamicsConfig;
use splineop::fitting::SamplingBox;
use splineop::integrate::sample_times;
use splineop::neural::{train, Activation, AdamConfig, BranchModel, MlpModel, TrainConfig, TrajectoryLoss};
use splineop::operator::NeuralBsplineOperator;

fn main() -> splineop::Result<()> {
    let dynamics = DynamicsConfig::default();
    let bounds = SamplingBox::default();
    let basis = BasisDescriptor {
        num_basis: 20,
        degree: 3,
        start: 0.0,
        end: dynamics.horizon,
    };
    let spec = |count, seed| DatasetSpec {
        sampling: bounds,
        count,
        angles: vec![],
        basis,
        seed,
    };
    let data = Dataset::build(&spec(200, 1), &dynamics, false)?;
    let times = sample_times(dynamics.horizon, dynamics.step)?;
    let design = basis.build()?.design_matrix(&times)?;
    let loss = TrajectoryLoss::new(&design, 12);

    let scale = bounds.half_widths().to_vec();
    let mut model = BranchModel::Mlp(
        MlpModel::init(&[12, 32, 32, 12 * 20], Activation::Tanh, 12, 0)?.with_scaling(scale.clone(), scale)?,
    );
    let config = TrainConfig {
        adam: AdamConfig {
            learning_rate: 3e-3,
            ..AdamConfig::default()
        },
        final_learning_rate: Some(3e-4),
        batch_size: 16,
        max_epochs: 300,
        max_seconds: Some(60.0),
        ..TrainConfig::default()
    };
    let report = train(&mut model, &data.training_set(), &loss, &config, None)?;
    println!(
        "{} epochs, best validation loss {:.3e} ({:?})",
        report.history.len(),
        report.best_loss,
        report.stop
    );

    let op = NeuralBsplineOperator::new(model, basis.build()?)?;
    let test = Dataset::build(&spec(20, 2), &dynamics, true)?;
    let x0 = test.records[0].x0;
    let predicted = op.predict_trajectory(&x0.0, &times)?;
    println!("predicted final position {:+.3?}", &predicted.row(times.len() - 1).iter().take(3).collect::<Vec<_>>());
    println!("safety envelope widths {:.3?}", &op.safety_envelope(&x0.0)?.widths()[..3]);

    let budget = op.error_budget(&test.records, &times)?;
    println!(
        "error budget: eps {:.3e} + M {:.3} x gamma {:.3e} = {:.3e} >= measured {:.3e}: {}",
        budget.eps_hat, budget.m, budget.gamma_hat, budget.bound, budget.measured_max, budget.holds
    );
    Ok(())
}
