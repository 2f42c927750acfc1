// Imported surface mesh: writes a bumpy square patch as OFF, loads it back,
// solves for a harmonic coordinate on a ball and refines a Morse-like test
// map to watch its singular set shrink.

use std::f64::consts::PI;
use std::path::Path;

use fiberlab::manifold::{build_family, geodesic_ball, write_off, FamilyKind, FamilySpec, TriMesh};
use fiberlab::pipeline::nearest_node;
use fiberlab::spectral::{self, EigenOptions};
use fiberlab::splitting;

fn bumpy_patch(n: usize) -> fiberlab::Result<TriMesh> {
    let h = 1.0 / n as f64;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for i in 0..=n {
        for j in 0..=n {
            let (x, y) = (i as f64 * h, j as f64 * h);
            vertices.push([x, y, 0.03 * (2.0 * PI * x).sin() * (2.0 * PI * y).sin()]);
        }
    }
    let id = |i: usize, j: usize| i * (n + 1) + j;
    let mut faces = Vec::with_capacity(2 * n * n);
    for i in 0..n {
        for j in 0..n {
            faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            faces.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    TriMesh::new(vertices, faces)
}

fn load_patch(dir: &Path, n: usize) -> fiberlab::Result<fiberlab::manifold::DiscreteManifold> {
    let path = dir.join(format!("patch-{n}.off"));
    write_off(&path, &bumpy_patch(n)?)?;
    build_family(&FamilySpec {
        kind: FamilyKind::ImportedMesh,
        base_dim: 1,
        epsilon: 1.0,
        delta: 0.0,
        twist: 0.0,
        resolution: Vec::new(),
        mesh: Some(path),
    })
}

pub fn run_example() -> fiberlab::Result<()> {
    let dir = tempfile::tempdir()?;

    let m = load_patch(dir.path(), 32)?;
    let pairs = spectral::eigenpairs(&m, &EigenOptions { count: 4, ..EigenOptions::default() })?;
    let thetas: Vec<String> = pairs.iter().map(|p| format!("{:.3}", p.theta)).collect();
    println!("{} vertices, area {:.5}, lowest eigenvalues {}", m.len(), m.total_volume(), thetas.join(" "));

    let center = nearest_node(&m, &[0.5, 0.5, 0.0]);
    let ball = geodesic_ball(&m, center, 0.4)?;
    let phi = splitting::base_coordinate_map(&m, &ball)?;
    let stats = splitting::jacobian_stats(&m, &phi);
    let cert = splitting::certify(&m, &phi, &stats, &ball.with_radius(&m, 0.3), 0.15, None)?;
    println!(
        "harmonic coordinate: residual {:.1e}, gram deviation {:.3e}, psi {:.3e}",
        phi.harmonic_residuals()[0],
        cert.gram_dev,
        cert.psi
    );

    for n in [32, 64, 128] {
        let m = load_patch(dir.path(), n)?;
        let center = nearest_node(&m, &[0.5, 0.5, 0.0]);
        let ball = geodesic_ball(&m, center, 0.4)?;
        let phi = splitting::morse_test_map(&m, &m.position(center), 0.2, ball.mask().to_vec(), center)?;
        let stats = splitting::jacobian_stats(&m, &phi);
        let mask = splitting::classify_regular(&m, &stats, splitting::default_threshold(&stats))?;
        println!("n = {n:3}: singular fraction {:.3e}", mask.singular_fraction);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("mesh example");
}
