//! Command implementations behind the `fiberlab` binary: each writes its
//! artifacts into the output directory and records them in a manifest.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{hex, ExperimentConfig};
use crate::error::{Error, Result};
use crate::flow::{self, ExponentialCheck, FiberBoundReport, FlowOptions};
use crate::manifold::{build_family, DiscreteManifold};
use crate::pipeline::{self, CONSTANT_MODE_THETA};
use crate::splitting;

/// Whether every estimate held.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    EstimateFailed,
}

impl Outcome {
    pub fn from_pass(pass: bool) -> Self {
        if pass {
            Outcome::Pass
        } else {
            Outcome::EstimateFailed
        }
    }

    /// 0 when everything passed, 2 when an estimate failed.
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Pass => 0,
            Outcome::EstimateFailed => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmittedFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub files: Vec<EmittedFile>,
}

impl RunManifest {
    /// Recomputes every checksum; returns the files that no longer match.
    pub fn verify(&self, out: &Path) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        for f in &self.files {
            if sha256_file(&out.join(&f.path))? != f.sha256 {
                bad.push(f.path.clone());
            }
        }
        Ok(bad)
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex(&Sha256::digest(std::fs::read(path)?)))
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Output directory, cache location and the files written so far.
pub struct Run {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    pub use_cache: bool,
    started: u64,
    files: Vec<PathBuf>,
}

impl Run {
    pub fn new(config: ExperimentConfig, out: PathBuf, use_cache: bool) -> Result<Self> {
        std::fs::create_dir_all(&out)?;
        Ok(Self {
            use_cache: use_cache && config.cache,
            config,
            out,
            started: unix_now(),
            files: Vec::new(),
        })
    }

    pub fn cache_dir(&self) -> Option<PathBuf> {
        self.use_cache.then(|| self.out.join("cache"))
    }

    fn write_file(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.out.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, bytes)?;
        self.files.push(PathBuf::from(rel));
        Ok(path)
    }

    fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_file(rel, text.as_bytes())
    }

    fn record(&mut self, rel: &str) {
        self.files.push(PathBuf::from(rel));
    }

    /// Writes `manifest.json` listing every emitted file with its checksum.
    pub fn finish(self, command: &str) -> Result<RunManifest> {
        let mut files = Vec::with_capacity(self.files.len());
        for rel in &self.files {
            files.push(EmittedFile {
                path: rel.to_string_lossy().replace('\\', "/"),
                sha256: sha256_file(&self.out.join(rel))?,
            });
        }
        let manifest = RunManifest {
            command: command.to_string(),
            config_hash: self.config.hash()?,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: self.started,
            finished_unix: unix_now(),
            files,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(self.out.join("manifest.json"), text)?;
        Ok(manifest)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ManifoldSummary {
    pub family: crate::manifold::FamilySpec,
    pub dim: usize,
    pub base_dim: usize,
    pub nodes: usize,
    pub total_volume: f64,
    pub min_base_period: f64,
}

pub fn summarize(m: &DiscreteManifold, cfg: &ExperimentConfig) -> ManifoldSummary {
    ManifoldSummary {
        family: cfg.family.clone(),
        dim: m.dim(),
        base_dim: m.base_dim(),
        nodes: m.len(),
        total_volume: m.total_volume(),
        min_base_period: m.min_base_period(),
    }
}

pub fn cmd_build(run: &mut Run) -> Result<Outcome> {
    let m = build_family(&run.config.family)?;
    let summary = summarize(&m, &run.config);
    println!(
        "{} nodes, dimension {} over a {}-dimensional base, volume {:.6e}",
        summary.nodes, summary.dim, summary.base_dim, summary.total_volume
    );
    run.write_json("manifold.json", &summary)?;
    Ok(Outcome::Pass)
}

pub fn cmd_eig(run: &mut Run) -> Result<Outcome> {
    let m = build_family(&run.config.family)?;
    let pairs = pipeline::eigenpairs(&m, &run.config, run.cache_dir().as_deref())?;
    let mut csv = String::from("index,theta,residual\n");
    for (i, p) in pairs.iter().enumerate() {
        csv.push_str(&format!("{i},{:.12e},{:.6e}\n", p.theta, p.residual));
    }
    run.write_file("eigenpairs.csv", csv.as_bytes())?;
    Ok(Outcome::Pass)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SplitSummary {
    pub certificate: splitting::Certificate,
    pub singular_fraction: f64,
    pub regular_threshold: f64,
    pub harmonic_residuals: Vec<f64>,
}

pub fn cmd_split(run: &mut Run) -> Result<Outcome> {
    let m = build_family(&run.config.family)?;
    let split = pipeline::split(&m, &run.config)?;
    let summary = SplitSummary {
        certificate: split.certificate.clone(),
        singular_fraction: split.mask.singular_fraction,
        regular_threshold: split.mask.threshold,
        harmonic_residuals: split.phi.harmonic_residuals().to_vec(),
    };
    run.write_json("certificate.json", &summary)?;
    Ok(Outcome::from_pass(summary.certificate.range_ok))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FlowSummary {
    pub theta: f64,
    pub fiber: FiberBoundReport,
    pub exponential: ExponentialCheck,
    pub max_drift: f64,
    pub nondecreasing: bool,
}

pub fn cmd_flow(run: &mut Run) -> Result<Outcome> {
    let cfg = run.config.clone();
    let m = build_family(&cfg.family)?;
    let pairs = pipeline::eigenpairs(&m, &cfg, run.cache_dir().as_deref())?;
    let pair = pairs
        .iter()
        .filter(|p| p.theta >= CONSTANT_MODE_THETA)
        .nth(cfg.flow.mode)
        .ok_or_else(|| Error::Precondition(format!("no nonconstant eigenmode {}", cfg.flow.mode)))?;
    let split = pipeline::split(&m, &cfg)?;
    let x0 = match &cfg.flow.x0 {
        Some(x) => pipeline::nearest_node(&m, x),
        None => split.center,
    };
    let field = flow::tangential_projection(&m, &pair.u, &split.stats, &split.mask);
    let fiber = splitting::extract_fiber(&m, &split.phi, &split.stats, &split.phi.value(x0), &split.fiber_options)?;
    let report = flow::fiber_apriori_check(
        &m,
        &fiber,
        &pair.u,
        &split.phi,
        &split.stats,
        &field,
        split.epsilon_hat,
        split.r,
    )?;
    let t_end = if report.u_bound > 0.0 { cfg.flow.horizon / report.u_bound } else { 0.0 };
    let opts = FlowOptions::new(cfg.thresholds.dt_factor * cfg.family.epsilon, t_end);
    let traj = flow::integrate_flow(&m, &pair.u, &split.phi, &split.stats, &field, x0, &opts)?;
    let exponential = flow::verify_exponential_bound(&traj, report.decay_rate(), 1e-3);
    let path = run.out.join("trajectory.csv");
    traj.write_csv(&path, m.coord_dim().min(m.dim()))?;
    run.record("trajectory.csv");
    let summary = FlowSummary {
        theta: pair.theta,
        max_drift: traj.max_drift(),
        nondecreasing: traj.is_nondecreasing(1e-12),
        fiber: report,
        exponential,
    };
    run.write_json("fiber_bound.json", &summary)?;
    Ok(Outcome::from_pass(summary.fiber.pass && summary.exponential.pass))
}

pub fn cmd_verify(run: &mut Run) -> Result<Outcome> {
    let cache = run.cache_dir();
    let point = pipeline::evaluate(&run.config, cache.as_deref())?;
    run.write_json("reports.json", &point)?;
    Ok(Outcome::from_pass(point.all_pass()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SweepSummary {
    pub exponent: Option<f64>,
    pub ratio_spread: Option<f64>,
    pub degenerate: bool,
    pub all_pass: bool,
}

pub fn cmd_sweep(run: &mut Run) -> Result<Outcome> {
    let cache = run.cache_dir();
    let (sweep, points) = pipeline::sweep(&run.config, cache.as_deref())?;
    sweep.write_csv(&run.out.join("sweep.csv"))?;
    run.record("sweep.csv");
    sweep.write_plot(&run.out.join("plot.csv"))?;
    run.record("plot.csv");
    for p in &points {
        run.write_json(&format!("points/eps-{:.6}/reports.json", p.epsilon), p)?;
    }
    let summary = SweepSummary {
        exponent: sweep.exponent,
        ratio_spread: sweep.ratio_spread,
        degenerate: sweep.degenerate,
        all_pass: sweep.all_pass(),
    };
    run.write_json("sweep_summary.json", &summary)?;
    Ok(Outcome::from_pass(summary.all_pass))
}
