//! Runs the experiment pipeline on a tiny configuration through the library API.

use splineop::harness::{bench, eval, gen_data, train_models, ExperimentConfig, Run};

const CONFIG: &str = r#"
name = "example"

[basis]
num_basis = 20

[sampling]
count = 60
angles = []

[network]
hidden = [32]
activation = "tanh"

[training]
seeds = [0]
batch_size = 16
max_epochs = 50

[evaluation]
test_count = 50
budget_count = 20
grid_points = 501

[bench]
repetitions = 10
warmup = 2
"#;

fn main() -> splineop::Result<()> {
    let config = ExperimentConfig::from_toml(CONFIG)?;
    let run = Run::new(config, std::env::temp_dir().join("splineop_example_run"))?;
    let data = gen_data(&run)?;
    println!("dataset: {} records at {}", data.records, data.path.display());
    let trained = train_models(&run)?;
    println!("training: best loss {:.3e}", trained.loss.median);
    let report = eval(&run)?;
    println!(
        "eval: median RMSE {:.3e}, radius correlation r = {:.3} (p = {:.1e}), budget holds {}",
        report.rmse.median, report.correlation.r, report.correlation.p_value, report.budget.holds
    );
    for row in bench(&run)?.rows {
        println!("bench: {:10} {:.2e} s", row.method, row.time_median);
    }
    Ok(())
}
