// Drives the command layer the way the binary does: a TOML configuration,
// `build`, `eig` and `split` into one output directory, and the manifest.

use std::path::Path;

use fiberlab::config::ExperimentConfig;
use fiberlab::manifold::FamilySpec;
use fiberlab::runner::{self, Run};

pub fn run_example() -> fiberlab::Result<()> {
    let dir = tempfile::tempdir()?;
    let mut cfg = ExperimentConfig::flat_default();
    cfg.family = FamilySpec::flat(0.1, 64, 16);
    cfg.spectral.count = 5;
    let path = dir.path().join("flat.toml");
    std::fs::write(&path, cfg.to_toml()?)?;

    let cfg = ExperimentConfig::load(&path)?;
    println!("config hash {}", cfg.hash()?);
    let out = dir.path().join("out");
    for command in ["build", "eig", "split"] {
        let mut run = Run::new(cfg.clone(), out.join(command), true)?;
        let outcome = match command {
            "build" => runner::cmd_build(&mut run)?,
            "eig" => runner::cmd_eig(&mut run)?,
            _ => runner::cmd_split(&mut run)?,
        };
        let manifest = run.finish(command)?;
        println!("{command}: exit code {}", outcome.exit_code());
        for f in &manifest.files {
            println!("   {} {}", f.path, &f.sha256[..16]);
        }
    }
    let eig = std::fs::read_to_string(out.join("eig").join("eigenpairs.csv"))?;
    print!("{eig}");
    print_file(&out.join("split").join("certificate.json"))
}

fn print_file(path: &Path) -> fiberlab::Result<()> {
    println!("{}", std::fs::read_to_string(path)?);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("runner");
}
