//! Fits closed-loop trajectories with bases of increasing size and reports the LS residual.

use splineop::bspline::BSplineBasis;
use splineop::dynamics::DynamicsConfig;
use splineop::fitting::{fit_residual, sample_initial_conditions, LeastSquaresFitter, SamplingBox};
use splineop::integrate::simulate;

fn main() -> splineop::Result<()> {
    let config = DynamicsConfig::default();
    let system = config.build()?;
    let x0s = sample_initial_conditions(&SamplingBox::default(), 20, 1);
    let trajectories = x0s
        .iter()
        .map(|x0| simulate(&system, x0, config.horizon, config.step))
        .collect::<splineop::Result<Vec<_>>>()?;

    for len in [10, 20, 50, 100] {
        let basis = BSplineBasis::clamped_uniform(len, 3, 0.0, config.horizon)?;
        let fitter = LeastSquaresFitter::new(&basis, &trajectories[0].times)?;
        let mut worst: f64 = 0.0;
        for traj in &trajectories {
            worst = worst.max(fit_residual(traj, &basis, &fitter.fit(traj)?)?);
        }
        println!("{len:4} control points: worst residual {worst:.3e}");
    }
    Ok(())
}
