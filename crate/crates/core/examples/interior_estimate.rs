// Every estimate report for the first nonconstant eigenmode of one warped
// torus, printed as JSON.

use fiberlab::config::ExperimentConfig;
use fiberlab::pipeline;

pub fn run_example() -> fiberlab::Result<()> {
    let mut cfg = ExperimentConfig::warped_default();
    cfg.family.resolution = vec![128, 16];
    cfg.spectral.count = 2;
    let point = pipeline::evaluate(&cfg, None)?;
    println!("eps_hat {:.4}, C_ctf {:.3}", point.epsilon_hat, point.c_ctf);
    if let Some(mode) = point.modes.first() {
        for report in mode.reports() {
            println!("{}", serde_json::to_string_pretty(report)?);
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("interior estimate");
}
