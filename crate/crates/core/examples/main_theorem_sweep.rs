// Warped-torus sweep over ε: every estimate per eigenmode, then the scaled
// tangential gradient `r‖∇ᵀu‖ / (‖u‖_∞(√ε̂ + Ψ))` across ε.

use fiberlab::config::ExperimentConfig;
use fiberlab::pipeline;

pub fn run_example() -> fiberlab::Result<()> {
    let mut cfg = ExperimentConfig::warped_default();
    cfg.family.resolution = vec![128, 16];
    let (sweep, points) = pipeline::sweep(&cfg, None)?;
    for p in &points {
        println!(
            "eps {:.3}  eps_hat {:.4}  psi {:.3e}  C_ctf {:.3}",
            p.epsilon, p.epsilon_hat, p.certificate.psi, p.c_ctf
        );
        for mode in &p.modes {
            for r in mode.reports() {
                println!("   theta {:8.3}  {:24} lhs {:.3e} rhs {:.3e} pass {}", mode.theta, r.name, r.lhs, r.rhs, r.pass);
            }
        }
    }
    for row in &sweep.rows {
        println!("eps {:.3}  theta {:8.3}  lhs {:.3e}  scaled {:.3e}", row.epsilon, row.theta, row.lhs, row.scaled());
    }
    println!("fitted exponent {:?}, ratio spread {:?}", sweep.exponent, sweep.ratio_spread);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("sweep");
}
