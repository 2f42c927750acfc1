//! The full chain for one configuration: manifold, eigenpairs, splitting map,
//! tangential projections and every estimate report.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::estimates::{self, EstimateReport, SweepResult, SweepRow};
use crate::flow::{self, FiberBoundReport, TangentialField};
use crate::geom::{self, Vec3, ZERO3};
use crate::manifold::{self, build_family, geodesic_ball, DiscreteManifold, FiberOptions, GeodesicBall};
use crate::spectral::{self, EigenCache, EigenOptions, EigenPair};
use crate::splitting::{self, Certificate, JacobianStats, RegularMask, SplittingMap};

/// Eigenvalues below this are treated as the constant mode, which carries no
/// tangential gradient and is left out of the reports.
pub const CONSTANT_MODE_THETA: f64 = 1e-6;

/// Node closest to a chart (or ambient) point.
pub fn nearest_node(m: &DiscreteManifold, point: &[f64]) -> usize {
    let mut x: Vec3 = ZERO3;
    for (a, v) in point.iter().take(3).enumerate() {
        x[a] = *v;
    }
    (0..m.len())
        .map(|n| {
            let d = manifold::chart_delta(m, &x, &m.position(n));
            (n, geom::dot(&d, &d))
        })
        .fold((0, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best })
        .0
}

pub fn eigen_options(cfg: &ExperimentConfig) -> EigenOptions {
    EigenOptions {
        count: cfg.spectral.count,
        theta_max: cfg.spectral.theta_max,
        shift: cfg.spectral.shift,
        seed: cfg.seed,
        ..EigenOptions::default()
    }
}

/// Eigenpairs, read from or written to `cache_dir` when given. A cache file
/// that fails its checksum is recomputed and overwritten.
pub fn eigenpairs(
    m: &DiscreteManifold,
    cfg: &ExperimentConfig,
    cache_dir: Option<&Path>,
) -> Result<Vec<EigenPair>> {
    let opts = eigen_options(cfg);
    let Some(dir) = cache_dir else {
        return spectral::eigenpairs(m, &opts);
    };
    let family = serde_json::to_string(&cfg.family)?;
    let options = serde_json::to_string(&opts)?;
    let key = EigenCache::key(&[&family, &options]);
    let path = dir.join(format!("eigen-{}.bin", &crate::config::hex(&key)[..16]));
    if path.exists() {
        if let Ok(pairs) = EigenCache::read(&path, m, &key) {
            return Ok(pairs);
        }
    }
    let pairs = spectral::eigenpairs(m, &opts)?;
    std::fs::create_dir_all(dir)?;
    EigenCache::write(&path, m, &key, &pairs)?;
    Ok(pairs)
}

/// Splitting map on the configured ball and everything derived from it.
pub struct Split {
    pub center: usize,
    pub r: f64,
    pub ball_r: GeodesicBall,
    pub ball_2r: GeodesicBall,
    pub phi: SplittingMap,
    pub stats: JacobianStats,
    pub mask: RegularMask,
    pub epsilon_hat: f64,
    pub certificate: Certificate,
    pub fiber_options: FiberOptions,
}

pub fn split(m: &DiscreteManifold, cfg: &ExperimentConfig) -> Result<Split> {
    let center = nearest_node(m, &cfg.ball.center);
    let r = cfg.ball.radius;
    let domain = geodesic_ball(m, center, cfg.ball.domain_radius)?;
    if 2.0 * r > cfg.ball.domain_radius {
        return Err(Error::Precondition(format!(
            "B(p, 2r) with r = {r} exceeds the domain radius {}",
            cfg.ball.domain_radius
        )));
    }
    let ball_r = domain.with_radius(m, r);
    let ball_2r = domain.with_radius(m, 2.0 * r);
    let phi = splitting::base_coordinate_map(m, &domain)?;
    let stats = splitting::jacobian_stats(m, &phi);
    let threshold = splitting::relative_threshold(&stats, cfg.thresholds.lambda_min_rel);
    let mask = splitting::classify_regular(m, &stats, threshold)?;
    let fiber_options = FiberOptions {
        level_tolerance: cfg.thresholds.level_tolerance,
        lambda_threshold: threshold,
        ..FiberOptions::default()
    };
    let epsilon_hat = splitting::epsilon_proxy(m, &ball_r, &phi, &stats, &fiber_options)?;
    let certificate = splitting::certify(m, &phi, &stats, &ball_2r, r, Some(epsilon_hat))?;
    Ok(Split {
        center,
        r,
        ball_r,
        ball_2r,
        phi,
        stats,
        mask,
        epsilon_hat,
        certificate,
        fiber_options,
    })
}

/// Levels of `Φ` spread over its values on `B(p, r)`.
pub fn sample_levels(split: &Split, count: usize) -> Vec<Vec<f64>> {
    let k = split.phi.k();
    let members = split.ball_r.members();
    if k == 1 {
        let f = split.phi.component(0);
        let (lo, hi) = members
            .iter()
            .map(|&n| f[n])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        return (0..count)
            .map(|i| vec![lo + (hi - lo) * (i as f64 + 0.5) / count as f64])
            .collect();
    }
    let stride = (members.len() / count.max(1)).max(1);
    members.iter().step_by(stride).take(count).map(|&n| split.phi.value(n)).collect()
}

/// Every estimate for one eigenmode.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ModeReport {
    pub theta: f64,
    pub residual: f64,
    pub hessian_weighted: EstimateReport,
    pub hessian: EstimateReport,
    pub interior: EstimateReport,
    pub change_integral: EstimateReport,
    pub main: EstimateReport,
    pub fibers: Vec<FiberBoundReport>,
}

impl ModeReport {
    pub fn reports(&self) -> [&EstimateReport; 5] {
        [&self.hessian_weighted, &self.hessian, &self.interior, &self.change_integral, &self.main]
    }

    pub fn all_pass(&self) -> bool {
        self.reports().iter().all(|r| r.pass) && self.fibers.iter().all(|f| f.pass)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PointReport {
    pub epsilon: f64,
    pub epsilon_hat: f64,
    pub certificate: Certificate,
    pub singular_fraction: f64,
    pub c_ctf: f64,
    pub modes: Vec<ModeReport>,
}

impl PointReport {
    pub fn all_pass(&self) -> bool {
        self.modes.iter().all(ModeReport::all_pass)
    }
}

pub fn lambda_ric(m: &DiscreteManifold, cfg: &ExperimentConfig) -> f64 {
    cfg.estimates.lambda_ric.unwrap_or_else(|| {
        let kappa = m.analytic().map_or(0.0, |a| a.ricci_lower_bound());
        kappa / (m.dim() as f64 - 1.0)
    })
}

/// Runs every check on one eigenpair.
pub fn evaluate_mode(
    m: &DiscreteManifold,
    cfg: &ExperimentConfig,
    split: &Split,
    cutoff: &estimates::CutoffFunction,
    pair: &EigenPair,
) -> Result<ModeReport> {
    let r = split.r;
    let u = &pair.u;
    let field = flow::tangential_projection(m, u, &split.stats, &split.mask);
    let (hessian_weighted, hessian) = estimates::hessian_l2_bound(
        m,
        u,
        &split.ball_r,
        &split.ball_2r,
        cutoff,
        lambda_ric(m, cfg),
        r,
    )?;
    let interior = estimates::interior_l2_report(
        m,
        u,
        &split.phi,
        &split.stats,
        &split.mask,
        &field,
        &split.ball_r,
        &split.ball_2r,
        split.epsilon_hat,
        r,
    )?;
    let inner = split.ball_r.with_radius(m, (r - 4.0 * split.epsilon_hat * r).max(0.0));
    let region = estimates::preimage_region(m, &split.phi, &split.stats, &split.mask, &inner);
    let change_integral = estimates::change_integral_report(
        m,
        u,
        &split.phi,
        &split.stats,
        &field,
        &region,
        cfg.estimates.change_stride,
        &split.ball_r,
        &split.ball_2r,
        split.epsilon_hat,
        r,
        cfg.thresholds.dt_factor * cfg.family.epsilon,
    )?;
    let main = estimates::main_theorem_report(
        m,
        pair,
        &split.stats,
        &split.mask,
        &field,
        &split.ball_r,
        &split.ball_2r,
        cutoff.c_ctf,
        split.epsilon_hat,
        split.certificate.psi,
        r,
    )?;
    let fibers = fiber_reports(m, cfg, split, u, &field)?;
    Ok(ModeReport {
        theta: pair.theta,
        residual: pair.residual,
        hessian_weighted,
        hessian,
        interior,
        change_integral,
        main,
        fibers,
    })
}

/// A priori bound on the regular fibers through the sampled levels.
pub fn fiber_reports(
    m: &DiscreteManifold,
    cfg: &ExperimentConfig,
    split: &Split,
    u: &[f64],
    field: &TangentialField,
) -> Result<Vec<FiberBoundReport>> {
    let mut out = Vec::new();
    for level in sample_levels(split, cfg.estimates.fiber_levels) {
        let fiber = match splitting::extract_fiber(m, &split.phi, &split.stats, &level, &split.fiber_options) {
            Ok(f) => f,
            Err(Error::LevelOutOfRange { .. }) => continue,
            Err(e) => return Err(e),
        };
        if !fiber.regular {
            continue;
        }
        out.push(flow::fiber_apriori_check(
            m,
            &fiber,
            u,
            &split.phi,
            &split.stats,
            field,
            split.epsilon_hat,
            split.r,
        )?);
    }
    Ok(out)
}

/// Builds, solves and checks one configuration.
pub fn evaluate(cfg: &ExperimentConfig, cache_dir: Option<&Path>) -> Result<PointReport> {
    let m = build_family(&cfg.family)?;
    let pairs = eigenpairs(&m, cfg, cache_dir)?;
    let split = split(&m, cfg)?;
    let cutoff = estimates::build_cutoff(&m, &split.ball_2r, split.r, split.epsilon_hat)?;
    let modes = pairs
        .iter()
        .filter(|pair| pair.theta >= CONSTANT_MODE_THETA)
        .map(|pair| evaluate_mode(&m, cfg, &split, &cutoff, pair))
        .collect::<Result<Vec<_>>>()?;
    Ok(PointReport {
        epsilon: cfg.family.epsilon,
        epsilon_hat: split.epsilon_hat,
        certificate: split.certificate.clone(),
        singular_fraction: split.mask.singular_fraction,
        c_ctf: cutoff.c_ctf,
        modes,
    })
}

/// Sweep rows of one point, one per reported mode.
pub fn sweep_rows(point: &PointReport) -> Vec<SweepRow> {
    point
        .modes
        .iter()
        .enumerate()
        .map(|(i, mode)| SweepRow {
            epsilon: point.epsilon,
            epsilon_hat: point.epsilon_hat,
            psi: point.certificate.psi,
            theta: mode.theta,
            k_bound: mode.interior.constant("K").unwrap_or(f64::NAN),
            lhs: mode.main.lhs,
            rhs: mode.main.rhs,
            margin: mode.main.margin,
            pass: mode.all_pass(),
            sup_u: mode.main.constant("supU").unwrap_or(f64::NAN),
            mode: i,
        })
        .collect()
}

/// Runs every ε of the configuration in parallel; results are ordered by ε.
pub fn sweep(cfg: &ExperimentConfig, cache_dir: Option<&Path>) -> Result<(SweepResult, Vec<PointReport>)> {
    let mut eps = cfg.sweep.epsilons.clone();
    eps.sort_by(f64::total_cmp);
    eps.dedup();
    if eps.len() < 3 {
        return Err(Error::Precondition(format!(
            "a sweep needs at least 3 distinct epsilon values, got {}",
            eps.len()
        )));
    }
    let points = eps
        .par_iter()
        .map(|&e| {
            evaluate(&cfg.at_epsilon(e), cache_dir).map_err(|source| Error::SweepPoint {
                epsilon: e,
                source: Box::new(source),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = points.iter().flat_map(sweep_rows).collect();
    Ok((SweepResult::from_rows(rows)?, points))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_warped() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::warped_default();
        cfg.family.resolution = vec![128, 16];
        cfg
    }

    #[test]
    fn warped_certificate_is_stable() {
        let cfg = small_warped();
        let m = build_family(&cfg.family).unwrap();
        let split = split(&m, &cfg).unwrap();
        let c = &split.certificate;
        assert!(c.gram_dev > 0.0);
        // |∇Φ| ≈ 1.32 on the thin side of the warp stretches Φ(B(2r)) past 2r
        assert!(!c.range_ok);
        assert!(split.phi.harmonic_residuals()[0] <= 1e-8);
        assert!((c.psi - c.gram_dev.max(c.hess_energy.sqrt())).abs() == 0.0);
        assert!((c.psi - PINNED_PSI).abs() <= 1e-9, "{}", c.psi);
        assert!((split.epsilon_hat - PINNED_EPSILON_HAT).abs() <= 1e-9, "{}", split.epsilon_hat);
    }

    const PINNED_PSI: f64 = 0.4303247503516315;
    const PINNED_EPSILON_HAT: f64 = 0.11236663052195098;

    #[test]
    fn nearest_node_wraps_around_the_chart() {
        let m = build_family(&small_warped().family).unwrap();
        let n = nearest_node(&m, &[0.999, 0.999]);
        assert_eq!(n, 0);
    }

    #[test]
    fn levels_stay_inside_the_ball_image() {
        let cfg = small_warped();
        let m = build_family(&cfg.family).unwrap();
        let split = split(&m, &cfg).unwrap();
        let levels = sample_levels(&split, 5);
        assert_eq!(levels.len(), 5);
        assert!(levels.windows(2).all(|w| w[0][0] < w[1][0]));
        assert!(levels.iter().all(|l| l[0].abs() < split.r * 1.5));
    }
}
