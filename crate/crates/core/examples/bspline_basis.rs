//! Evaluates a clamped cubic basis and checks a random spline against its hull envelope.

use nalgebra::DMatrix;
use splineop::bspline::{hull_envelope, BSplineBasis, ControlPointGrid};

fn main() -> splineop::Result<()> {
    let basis = BSplineBasis::clamped_uniform(8, 3, 0.0, 2.5)?;
    println!("knots {:?}", basis.knot_vector().knots());
    for t in [0.0, 0.4, 1.25, 2.5] {
        let (first, active) = basis.eval_active(t)?;
        println!("t = {t:4}: B_{first}..B_{} = {active:.4?}", first + active.len() - 1);
    }

    let grid = ControlPointGrid::new(DMatrix::from_fn(2, 8, |d, k| ((k * 7 + d * 3) % 5) as f64 - 2.0))?;
    let env = hull_envelope(&grid);
    let times: Vec<f64> = (0..=100).map(|k| 0.025 * k as f64).collect();
    let curve = basis.spline_eval_many(&grid, &times)?;
    let worst = (0..curve.nrows())
        .map(|j| env.violation(&curve.row(j).iter().copied().collect::<Vec<_>>()))
        .fold(0.0, f64::max);
    println!("hull widths {:?}, worst violation {worst:e}", env.widths());
    Ok(())
}
