// Lowest Laplace eigenvalues of a flat product torus next to `4π²(p² + q²/ε²)`.

use std::f64::consts::PI;

use fiberlab::manifold::{build_family, FamilySpec};
use fiberlab::spectral::{self, EigenOptions};

pub fn run_example() -> fiberlab::Result<()> {
    let eps = 0.5;
    let m = build_family(&FamilySpec::flat(eps, 64, 32))?;
    let pairs = spectral::eigenpairs(&m, &EigenOptions { count: 8, ..EigenOptions::default() })?;

    let mut exact = Vec::new();
    for p in -4i32..=4 {
        for q in -4i32..=4 {
            exact.push(4.0 * PI * PI * (p * p) as f64 + 4.0 * PI * PI * (q * q) as f64 / (eps * eps));
        }
    }
    exact.sort_by(f64::total_cmp);

    for (pair, e) in pairs.iter().zip(&exact) {
        println!("theta {:12.6}  exact {:12.6}  residual {:.1e}", pair.theta, e, pair.residual);
    }
    for cluster in spectral::clusters(&pairs) {
        println!("cluster of {} at {:.4}", cluster.len(), pairs[cluster[0]].theta);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("spectrum");
}
