//! Measures how far the simulated closed loop is from commuting with yaw rotations.

use splineop::dynamics::DynamicsConfig;
use splineop::fitting::{rotate_state_z, rotate_with_yaw_shift, sample_initial_conditions, SamplingBox};
use splineop::integrate::simulate;

fn main() -> splineop::Result<()> {
    let config = DynamicsConfig::default();
    let system = config.build()?;
    let x0 = sample_initial_conditions(&SamplingBox::default(), 1, 3)[0];
    let base = simulate(&system, &x0, config.horizon, config.step)?;
    for k in 1..=8 {
        let theta = std::f64::consts::PI * k as f64 / 4.0;
        let xr = rotate_state_z(&x0, theta);
        let shift = xr.yaw() - x0.yaw();
        let back = simulate(&system, &xr, config.horizon, config.step)?
            .map_states(|x| rotate_with_yaw_shift(x, -theta, -shift));
        let rmsd = ((&back.states - &base.states).norm_squared() / base.states.len() as f64).sqrt();
        println!("theta = {k}π/4: RMSD {rmsd:.3e}");
    }
    Ok(())
}
