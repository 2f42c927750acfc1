// Builds each built-in collapsing family and prints its size, volume and
// injectivity scale.

use fiberlab::manifold::{build_family, FamilySpec};

pub fn run_example() -> fiberlab::Result<()> {
    let specs = [
        FamilySpec::flat(0.1, 128, 16),
        FamilySpec::warped(0.1, 0.3, 128, 16),
        FamilySpec::twisted(0.2, 0.5, [16, 16, 16]),
    ];
    for spec in &specs {
        let m = build_family(spec)?;
        println!(
            "{:?}: {} nodes, m = {}, k = {}, volume {:.6}, shortest base loop {:.3}",
            spec.kind,
            m.len(),
            m.dim(),
            m.base_dim(),
            m.total_volume(),
            m.min_base_period()
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("build families");
}
