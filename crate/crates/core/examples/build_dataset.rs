//! Builds a small rotation-augmented dataset and writes it as JSON.

use splineop::bspline::BasisDescriptor;
use splineop::dataset::{Dataset, DatasetSpec};
use splineop::dynamics::DynamicsConfig;
use splineop::fitting::SamplingBox;

fn main() -> splineop::Result<()> {
    let dynamics = DynamicsConfig::default();
    let spec = DatasetSpec {
        sampling: SamplingBox::default(),
        count: 25,
        angles: vec![std::f64::consts::FRAC_PI_2, std::f64::consts::PI],
        basis: BasisDescriptor {
            num_basis: 50,
            degree: 3,
            start: 0.0,
            end: dynamics.horizon,
        },
        seed: 11,
    };
    let dataset = Dataset::build(&spec, &dynamics, false)?;
    println!(
        "{} records ({} skipped), rotations by {:?}",
        dataset.len(),
        dataset.skipped.len(),
        dataset.provenance.rotation_path
    );
    let residuals = dataset.residuals();
    println!("largest LS residual {:.3e}", residuals.iter().copied().fold(0.0, f64::max));

    let path = std::env::temp_dir().join("splineop_example_dataset.json");
    dataset.save(&path)?;
    println!("wrote {}", path.display());
    Ok(())
}
