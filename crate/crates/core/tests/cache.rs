use fiberlab::config::ExperimentConfig;
use fiberlab::manifold::{build_family, FamilySpec};
use fiberlab::pipeline;

fn config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::warped_default();
    cfg.family = FamilySpec::warped(0.1, 0.3, 64, 16);
    cfg
}

fn cache_files(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut files: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    files
}

#[test]
fn cached_eigenpairs_equal_fresh_ones() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config();
    let m = build_family(&cfg.family).unwrap();
    let fresh = pipeline::eigenpairs(&m, &cfg, None).unwrap();
    let written = pipeline::eigenpairs(&m, &cfg, Some(dir.path())).unwrap();
    let read = pipeline::eigenpairs(&m, &cfg, Some(dir.path())).unwrap();
    assert_eq!(cache_files(dir.path()).len(), 1);
    for ((a, b), c) in fresh.iter().zip(&written).zip(&read) {
        assert_eq!(a.theta.to_bits(), b.theta.to_bits());
        assert_eq!(b.theta.to_bits(), c.theta.to_bits());
        assert_eq!(a.u, c.u);
        assert_eq!(a.residual.to_bits(), c.residual.to_bits());
    }
}

#[test]
fn changed_family_gets_its_own_entry() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config();
    let m = build_family(&cfg.family).unwrap();
    pipeline::eigenpairs(&m, &cfg, Some(dir.path())).unwrap();
    let other = cfg.at_epsilon(0.2);
    let m2 = build_family(&other.family).unwrap();
    let pairs = pipeline::eigenpairs(&m2, &other, Some(dir.path())).unwrap();
    assert_eq!(cache_files(dir.path()).len(), 2);
    assert_eq!(pairs, pipeline::eigenpairs(&m2, &other, None).unwrap());
}

#[test]
fn corrupted_entry_is_recomputed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config();
    let m = build_family(&cfg.family).unwrap();
    let fresh = pipeline::eigenpairs(&m, &cfg, Some(dir.path())).unwrap();
    let file = cache_files(dir.path()).remove(0);
    let mut bytes = std::fs::read(&file).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xff;
    std::fs::write(&file, &bytes).unwrap();
    let again = pipeline::eigenpairs(&m, &cfg, Some(dir.path())).unwrap();
    assert_eq!(fresh, again);
    assert_ne!(std::fs::read(&file).unwrap(), bytes);
}
