// Gradient flow of `u = sin(2πy)` along the fibers of a flat torus, against
// the closed-form solution `u(t) = tanh(4π²t/ε²)`.

use std::f64::consts::PI;

use fiberlab::config::ExperimentConfig;
use fiberlab::flow::{self, FlowOptions};
use fiberlab::manifold::{build_family, FamilySpec};
use fiberlab::pipeline;
use fiberlab::splitting;

pub fn run_example() -> fiberlab::Result<()> {
    let eps = 0.1;
    let mut cfg = ExperimentConfig::flat_default();
    cfg.family = FamilySpec::flat(eps, 32, 64);
    let m = build_family(&cfg.family)?;
    let split = pipeline::split(&m, &cfg)?;
    let u: Vec<f64> = (0..m.len()).map(|n| (2.0 * PI * m.position(n)[1]).sin()).collect();
    let field = flow::tangential_projection(&m, &u, &split.stats, &split.mask);
    let x0 = split.center;

    let fiber = splitting::extract_fiber(&m, &split.phi, &split.stats, &split.phi.value(x0), &split.fiber_options)?;
    let bound = flow::fiber_apriori_check(&m, &fiber, &u, &split.phi, &split.stats, &field, split.epsilon_hat, split.r)?;
    let opts = FlowOptions::new(1e-4 * eps, 2.0 / bound.u_bound);
    let traj = flow::integrate_flow(&m, &u, &split.phi, &split.stats, &field, x0, &opts)?;

    for s in traj.samples.iter().step_by(traj.samples.len() / 8) {
        let exact = (4.0 * PI * PI * s.t / (eps * eps)).tanh();
        println!("t {:.3e}  u {:.6}  exact {:.6}  |grad_T u|^2 {:.3e}", s.t, s.value, exact, s.speed_sq);
    }
    let check = flow::verify_exponential_bound(&traj, bound.decay_rate(), 1e-3);
    println!(
        "drift {:.1e}, nondecreasing {}, decay rate {:.3e}, margin {:.4}",
        traj.max_drift(),
        traj.is_nondecreasing(1e-12),
        check.rate,
        check.margin
    );
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("fiber flow");
}
