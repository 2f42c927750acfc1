// On a twisted 3-torus with a two-dimensional base, the fiberwise quantities
// `|J_k|`, `F` and `G` are unchanged when the splitting map is rotated.

use std::f64::consts::PI;

use fiberlab::flow;
use fiberlab::manifold::{build_family, FamilySpec};
use fiberlab::operators;
use fiberlab::splitting::{self, SplittingMap};

pub fn run_example() -> fiberlab::Result<()> {
    let m = build_family(&FamilySpec::twisted(0.2, 0.5, [20, 20, 16]))?;
    let center = m.grid().expect("grid family").flat([10, 10, 0]);
    let coords = splitting::global_coordinates(&m, center)?;
    let bent: Vec<Vec<f64>> = (0..2)
        .map(|a| {
            (0..m.len())
                .map(|n| coords.component(a)[n] + 0.03 * (2.0 * PI * m.position(n)[1 - a]).sin())
                .collect()
        })
        .collect();
    let phi = SplittingMap::new(&m, bent, coords.domain().to_vec(), center)?;
    let u: Vec<f64> = (0..m.len())
        .map(|n| {
            let p = m.position(n);
            (2.0 * PI * p[2]).sin() + 0.5 * (2.0 * PI * p[0]).cos()
        })
        .collect();
    let grad = operators::gradient(&m, &u);

    let stats = splitting::jacobian_stats(&m, &phi);
    let threshold = splitting::default_threshold(&stats);
    let mask = splitting::classify_regular(&m, &stats, threshold)?;
    let field = flow::tangential_projection(&m, &u, &stats, &mask);

    let (s, c) = 0.7f64.sin_cos();
    let rotated = phi.transformed(&[vec![c, -s], vec![s, c]]);
    let rstats = splitting::jacobian_stats(&m, &rotated);
    let rmask = splitting::classify_regular(&m, &rstats, threshold)?;

    let mut worst: f64 = 0.0;
    let mut count = 0;
    for n in (0..m.len()).filter(|&n| mask.is_regular(n)) {
        let x = *field.tangential(n).expect("regular");
        let f = splitting::quantity_f(&m, &stats, &mask, n, &grad[n], &x)?;
        let g = splitting::quantity_g(&stats, &mask, n, &x)?;
        let rf = splitting::quantity_f(&m, &rstats, &rmask, n, &grad[n], &x)?;
        let rg = splitting::quantity_g(&rstats, &rmask, n, &x)?;
        worst = worst.max((f - rf).abs()).max((g - rg).abs()).max((stats.jk[n] - rstats.jk[n]).abs());
        count += 1;
    }
    println!("{count} regular nodes, largest change under rotation {worst:.2e}");
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("invariance");
}
