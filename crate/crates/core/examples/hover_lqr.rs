//! Designs the hover LQR gain and simulates the closed loop from a tilted, displaced start.

use splineop::dynamics::{DynamicsConfig, State12};
use splineop::integrate::simulate;
use splineop::lqr::max_real_eigenvalue;

fn main() -> splineop::Result<()> {
    let config = DynamicsConfig::default();
    let system = config.build()?;
    let lqr = system.lqr_solution().expect("default controller is LQR");
    println!(
        "CARE converged in {} iterations, final residual {:.1e}",
        lqr.residual_history.len(),
        lqr.residual_history.last().copied().unwrap_or(f64::NAN)
    );

    let (a, b) = splineop::dynamics::linearize(system.params(), &State12::ZERO, &system.params().hover_input())?;
    println!("slowest closed-loop pole has real part {:.3}", max_real_eigenvalue(&(a - b * system.gain())));

    let mut x0 = State12::ZERO;
    x0.0[0] = 1.0;
    x0.0[2] = -0.5;
    x0.0[6] = 0.2;
    x0.0[8] = 0.5;
    let traj = simulate(&system, &x0, config.horizon, config.step)?;
    println!("{} samples over {} s", traj.len(), traj.horizon());
    for j in [0, 50, 100, 250] {
        let x = traj.state(j);
        println!("t = {:.2}: position {:+.3?} yaw {:+.3}", traj.times[j], &x[..3], x[8]);
    }
    Ok(())
}
