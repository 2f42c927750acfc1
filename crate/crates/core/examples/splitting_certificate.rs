// Harmonic splitting map on a warped torus ball and its quality certificate.

use fiberlab::config::ExperimentConfig;
use fiberlab::manifold::build_family;
use fiberlab::pipeline;

pub fn run_example() -> fiberlab::Result<()> {
    for delta in [0.0, 0.3] {
        let mut cfg = ExperimentConfig::warped_default();
        cfg.family.delta = delta;
        cfg.family.resolution = vec![128, 16];
        let m = build_family(&cfg.family)?;
        let split = pipeline::split(&m, &cfg)?;
        let c = &split.certificate;
        println!(
            "delta {delta}: sup|grad| {:.4}, gram deviation {:.3e}, hessian energy {:.3e}, psi {:.3e}",
            c.sup_grad, c.gram_dev, c.hess_energy, c.psi
        );
        println!(
            "   eps_hat {:.4}, harmonic residual {:.1e}, singular fraction {:.2e}",
            split.epsilon_hat,
            split.phi.harmonic_residuals()[0],
            split.mask.singular_fraction
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("certificate");
}
