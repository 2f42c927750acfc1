// Fiberwise a priori bound `r sup|∇ᵀu| ≤ 2√growth K √ε̂` on a warped torus,
// for one eigenmode and for a function that varies along the fibers.

use std::f64::consts::PI;

use fiberlab::config::ExperimentConfig;
use fiberlab::flow;
use fiberlab::manifold::build_family;
use fiberlab::pipeline::{self, CONSTANT_MODE_THETA};

pub fn run_example() -> fiberlab::Result<()> {
    let mut cfg = ExperimentConfig::warped_default();
    cfg.family.resolution = vec![128, 32];
    let m = build_family(&cfg.family)?;
    let split = pipeline::split(&m, &cfg)?;
    let pairs = pipeline::eigenpairs(&m, &cfg, None)?;
    let mode = pairs.iter().find(|p| p.theta >= CONSTANT_MODE_THETA).expect("nonconstant mode");
    let fiber_wave: Vec<f64> = (0..m.len())
        .map(|n| {
            let p = m.position(n);
            (2.0 * PI * p[1]).sin() * (2.0 * PI * p[0]).cos()
        })
        .collect();

    for (name, u) in [("eigenmode", &mode.u), ("fiber wave", &fiber_wave)] {
        let field = flow::tangential_projection(&m, u, &split.stats, &split.mask);
        for f in pipeline::fiber_reports(&m, &cfg, &split, u, &field)? {
            println!(
                "{name:10} level {:+.4}  lhs {:.3e}  rhs {:.3e}  K {:.3e}  pass {}",
                f.level[0], f.lhs, f.rhs, f.u_bound, f.pass
            );
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("a priori bound");
}
