//! Integral estimates on geodesic balls as executable checks, and ε-sweeps.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{self, FlowOptions, TangentialField};
use crate::geom;
use crate::manifold::{DiscreteManifold, GeodesicBall};
use crate::operators::{self, laplacian_matrix};
use crate::spectral::{self, EigenPair};
use crate::splitting::{JacobianStats, RegularMask, SplittingMap};

pub const REPORT_SCHEMA: &str = "fiberlab.estimate-report/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Measured,
    Formula,
    Input,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constant {
    pub name: String,
    pub value: f64,
    pub provenance: Provenance,
}

/// One inequality `lhs ≤ rhs` with every constant that entered it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub schema: String,
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs / lhs`; infinite (serialized as null) when `lhs = 0`.
    pub margin: f64,
    pub pass: bool,
    pub constants: Vec<Constant>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl EstimateReport {
    pub fn new(name: &str, lhs: f64, rhs: f64) -> Self {
        let margin = if lhs == 0.0 { f64::INFINITY } else { rhs / lhs };
        Self {
            schema: REPORT_SCHEMA.to_string(),
            name: name.to_string(),
            lhs,
            rhs,
            margin,
            pass: lhs <= rhs,
            constants: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn with(mut self, name: &str, value: f64, provenance: Provenance) -> Self {
        self.constants.push(Constant {
            name: name.to_string(),
            value,
            provenance,
        });
        self
    }

    pub fn note(mut self, text: &str) -> Self {
        self.notes.push(text.to_string());
        self
    }

    pub fn constant(&self, name: &str) -> Option<f64> {
        self.constants.iter().find(|c| c.name == name).map(|c| c.value)
    }
}

const PSI_NOTE: &str = "Psi is the measured certificate value of the splitting map";

/// `φ = S(d(p, ·))`, equal to 1 up to `inner_radius` and 0 beyond
/// `outer_radius`, with a quintic smoothstep in between.
#[derive(Clone, Debug)]
pub struct CutoffFunction {
    pub values: Vec<f64>,
    pub inner_radius: f64,
    pub outer_radius: f64,
    /// `r|∇φ| + r²|Δφ|` per node.
    pub control: Vec<f64>,
    /// `max(½ sup (r|∇φ| + r²|Δφ|), 1)`.
    pub c_ctf: f64,
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

pub fn build_cutoff(
    m: &DiscreteManifold,
    ball_2r: &GeodesicBall,
    r: f64,
    epsilon_hat: f64,
) -> Result<CutoffFunction> {
    let inner = r * (1.0 + 4.0 * epsilon_hat);
    let outer = 2.0 * r;
    if !(inner < outer) || !(epsilon_hat >= 0.0) {
        return Err(Error::Precondition(format!(
            "cutoff radii overlap: r(1 + 4ε̂) = {inner} is not below 2r = {outer}"
        )));
    }
    let values: Vec<f64> = ball_2r
        .distances()
        .iter()
        .map(|&d| 1.0 - smoothstep((d - inner) / (outer - inner)))
        .collect();
    let grad = operators::gradient(m, &values);
    let lap = laplacian_matrix(m)?.apply(&values);
    let control: Vec<f64> = (0..m.len())
        .map(|n| r * m.norm(n, &grad[n]) + r * r * lap[n].abs())
        .collect();
    let sup = control.iter().copied().fold(0.0, f64::max);
    Ok(CutoffFunction {
        values,
        inner_radius: inner,
        outer_radius: outer,
        control,
        c_ctf: (0.5 * sup).max(1.0),
    })
}

/// `sup_{B(2r)} (|u| + r|∇u|)`.
pub fn c1_bound(m: &DiscreteManifold, u: &[f64], grad: &[geom::Vec3], ball_2r: &GeodesicBall, r: f64) -> f64 {
    ball_2r
        .members()
        .iter()
        .map(|&n| u[n].abs() + r * m.norm(n, &grad[n]))
        .fold(0.0, f64::max)
}

/// `K² = sup_{B(2r)}(|u|² + r²|∇u|²) + r⁴ ⨍_{B(2r)} |Hess u|²`.
pub fn w22_bound(m: &DiscreteManifold, u: &[f64], ball_2r: &GeodesicBall, r: f64) -> Result<f64> {
    let grad = operators::gradient(m, u);
    let hess2 = operators::tensor_norm_sq(m, &operators::hessian(m, u));
    let sup = ball_2r
        .members()
        .iter()
        .map(|&n| u[n] * u[n] + r * r * m.inner(n, &grad[n], &grad[n]))
        .fold(0.0, f64::max);
    Ok((sup + r.powi(4) * operators::average(m, &hess2, ball_2r.members())?).sqrt())
}

/// Splitting constant `C₀ = max(sup max_a |∇Φᵃ| − 1, (r² Σ_b ⨍ |Hess Φᵇ|²)^{1/2})`
/// over `region`, floored at zero.
pub fn splitting_c0(
    m: &DiscreteManifold,
    stats: &JacobianStats,
    region: &[usize],
    r: f64,
) -> Result<f64> {
    let mut sup_grad: f64 = 0.0;
    let mut energy = 0.0;
    for b in 0..stats.k() {
        for &n in region {
            sup_grad = sup_grad.max(m.norm(n, &stats.gradients[b][n]));
        }
        let h2 = operators::tensor_norm_sq(m, &stats.hessians[b]);
        energy += r * r * operators::average(m, &h2, region)?;
    }
    Ok((sup_grad - 1.0).max(energy.sqrt()).max(0.0))
}

/// Weitzenböck-based Hessian bounds: the cutoff-weighted inequality and the
/// final `(⨍_{B(r)} |Hess u|²)^{1/2} ≤ 4mC_ctf Kr⁻² + 2‖Δu‖_{L̄²(B(2r))}`.
///
/// `lambda_ric` is the Ricci parameter with `Ric ≥ −(m−1)λ_ric g`.
pub fn hessian_l2_bound(
    m: &DiscreteManifold,
    u: &[f64],
    ball_r: &GeodesicBall,
    ball_2r: &GeodesicBall,
    cutoff: &CutoffFunction,
    lambda_ric: f64,
    r: f64,
) -> Result<(EstimateReport, EstimateReport)> {
    let dim = m.dim() as f64;
    let grad = operators::gradient(m, u);
    let hess2 = operators::tensor_norm_sq(m, &operators::hessian(m, u));
    let lap = laplacian_matrix(m)?;
    let lap_u = lap.apply(u);
    let lap_phi = lap.apply(&cutoff.values);
    let grad_phi = operators::gradient(m, &cutoff.values);
    let region = ball_2r.members();
    let vol_2r = operators::volume(m, region);
    if !(vol_2r > 0.0) {
        return Err(Error::EmptyRegion);
    }
    let mut lhs_int = 0.0;
    let mut rhs_int = 0.0;
    for &n in region {
        let w = m.weights()[n];
        let phi = cutoff.values[n];
        let g2 = m.inner(n, &grad[n], &grad[n]);
        lhs_int += w * phi * hess2[n];
        rhs_int += w
            * (0.5 * (lap_phi[n].abs() + 2.0 * lambda_ric * (dim - 1.0)) * g2
                + lap_u[n] * lap_u[n] * phi
                + (lap_u[n] * m.inner(n, &grad_phi[n], &grad[n])).abs());
    }
    let k = c1_bound(m, u, &grad, ball_2r, r);
    let lap_norm = operators::l2_average(m, &lap_u, region)?;
    let intermediate = EstimateReport::new("hessian-cutoff-weighted", lhs_int / vol_2r, rhs_int / vol_2r)
        .with("lambdaRic", lambda_ric, Provenance::Input)
        .with("m", dim, Provenance::Input)
        .with("r", r, Provenance::Input);
    let lhs = operators::average(m, &hess2, ball_r.members())?.sqrt();
    let rhs = 4.0 * dim * cutoff.c_ctf * k / (r * r) + 2.0 * lap_norm;
    let fin = EstimateReport::new("hessian-l2", lhs, rhs)
        .with("Cctf", cutoff.c_ctf, Provenance::Measured)
        .with("K", k, Provenance::Measured)
        .with("laplacianL2", lap_norm, Provenance::Measured)
        .with("m", dim, Provenance::Input)
        .with("r", r, Provenance::Input);
    Ok((intermediate, fin))
}

/// `C₁ = 8k²(1 + C₀)^{k−1}`.
pub fn interior_constant(k: usize, c0: f64) -> f64 {
    8.0 * (k * k) as f64 * (1.0 + c0).powi(k as i32 - 1)
}

/// Regular nodes of the valid domain whose value lies in `Φ(B(p, ρ))`.
pub fn preimage_region(
    m: &DiscreteManifold,
    phi: &SplittingMap,
    stats: &JacobianStats,
    mask: &RegularMask,
    inner: &GeodesicBall,
) -> Vec<usize> {
    let k = phi.k();
    let targets: Vec<Vec<f64>> = inner.members().iter().map(|&n| phi.value(n)).collect();
    if targets.is_empty() {
        return Vec::new();
    }
    let lo: Vec<f64> = (0..k).map(|a| targets.iter().map(|v| v[a]).fold(f64::INFINITY, f64::min)).collect();
    let hi: Vec<f64> = (0..k).map(|a| targets.iter().map(|v| v[a]).fold(f64::NEG_INFINITY, f64::max)).collect();
    // image spacing: a value within one node step of the sampled image counts
    let h = match m.grid() {
        Some(g) => (0..g.ndim()).map(|a| g.spacing(a)).fold(0.0, f64::max),
        None => {
            let mesh = m.mesh().expect("grid or mesh");
            (0..mesh.vertices().len())
                .flat_map(|v| mesh.neighbors(v).iter().map(move |&w| (v, w)))
                .map(|(v, w)| geom::norm(&geom::sub(&mesh.vertices()[v], &mesh.vertices()[w])))
                .fold(0.0, f64::max)
        }
    };
    let slack = h * inner
        .members()
        .iter()
        .map(|&n| (0..k).map(|a| m.norm(n, &stats.gradients[a][n])).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    (0..m.len())
        .filter(|&n| mask.is_regular(n))
        .filter(|&n| {
            let v = phi.value(n);
            if k == 1 {
                return v[0] >= lo[0] && v[0] <= hi[0];
            }
            (0..k).all(|a| v[a] >= lo[a] - slack && v[a] <= hi[a] + slack)
                && targets.iter().any(|t| {
                    t.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() <= slack
                })
        })
        .collect()
}

/// Tangential `L²` estimate over the preimage of the values of
/// `B(p, r − 4ε̂r)`:
/// `r² ∫ |∇ᵀu|²|J_k| ≤ C₁|B(p,r)|K²(√ε̂ + C₀)`.
#[allow(clippy::too_many_arguments)]
pub fn interior_l2_report(
    m: &DiscreteManifold,
    u: &[f64],
    phi: &SplittingMap,
    stats: &JacobianStats,
    mask: &RegularMask,
    field: &TangentialField,
    ball_r: &GeodesicBall,
    ball_2r: &GeodesicBall,
    epsilon_hat: f64,
    r: f64,
) -> Result<EstimateReport> {
    let c0 = splitting_c0(m, stats, ball_2r.members(), r)?;
    if c0 >= 1.0 {
        return Err(Error::HypothesisViolation(format!(
            "splitting constant C0 = {c0} is not below 1"
        )));
    }
    let k_bound = w22_bound(m, u, ball_2r, r)?;
    let inner = ball_r.with_radius(m, (r - 4.0 * epsilon_hat * r).max(0.0));
    let region = preimage_region(m, phi, stats, mask, &inner);
    let t2 = field.norm_sq(m);
    let lhs = r * r * region.iter().map(|&n| t2[n] * stats.jk[n] * m.weights()[n]).sum::<f64>();
    let k = phi.k();
    let c1 = interior_constant(k, c0);
    let vol_r = ball_r.volume(m);
    let rhs = c1 * vol_r * k_bound * k_bound * (epsilon_hat.sqrt() + c0);
    Ok(EstimateReport::new("interior-l2", lhs, rhs)
        .with("C0", c0, Provenance::Measured)
        .with("C1", c1, Provenance::Formula)
        .with("K", k_bound, Provenance::Measured)
        .with("epsilonHat", epsilon_hat, Provenance::Measured)
        .with("volumeBr", vol_r, Provenance::Measured)
        .with("k", k as f64, Provenance::Input)
        .with("r", r, Provenance::Input))
}

/// Measured `|∫ (u|J_k|)∘γ_t − ∫ u|J_k||` at `t = √ε̂ K⁻¹ r²` against
/// `4k(1 + C₀)^k |B(p,r)| K ε̂`, with nodes of `region` sampled by `stride`.
#[allow(clippy::too_many_arguments)]
pub fn change_integral_report(
    m: &DiscreteManifold,
    u: &[f64],
    phi: &SplittingMap,
    stats: &JacobianStats,
    field: &TangentialField,
    region: &[usize],
    stride: usize,
    ball_r: &GeodesicBall,
    ball_2r: &GeodesicBall,
    epsilon_hat: f64,
    r: f64,
    dt: f64,
) -> Result<EstimateReport> {
    let c0 = splitting_c0(m, stats, ball_2r.members(), r)?;
    let k_bound = w22_bound(m, u, ball_2r, r)?;
    let t = if k_bound > 0.0 { epsilon_hat.sqrt() * r * r / k_bound } else { 0.0 };
    let opts = FlowOptions::new(dt.min(t.max(f64::MIN_POSITIVE)), t);
    let (moved, fixed) = flow::transported_integral(m, u, phi, stats, field, region, stride, &opts)?;
    let k = phi.k();
    let vol_r = ball_r.volume(m);
    let rhs = 4.0 * k as f64 * (1.0 + c0).powi(k as i32) * vol_r * k_bound * epsilon_hat;
    Ok(EstimateReport::new("change-integral", (moved - fixed).abs(), rhs)
        .with("t", t, Provenance::Formula)
        .with("C0", c0, Provenance::Measured)
        .with("K", k_bound, Provenance::Measured)
        .with("epsilonHat", epsilon_hat, Provenance::Measured)
        .with("volumeBr", vol_r, Provenance::Measured))
}

/// Headline estimate `r‖∇ᵀu‖_{L̄²(B(p,r))} ≤ C₂(1 + C_CY)‖u‖_∞(√ε̂ + Ψ)` for an
/// eigenfunction, evaluated on regular nodes.
#[allow(clippy::too_many_arguments)]
pub fn main_theorem_report(
    m: &DiscreteManifold,
    pair: &EigenPair,
    stats: &JacobianStats,
    mask: &RegularMask,
    field: &TangentialField,
    ball_r: &GeodesicBall,
    ball_2r: &GeodesicBall,
    c_ctf: f64,
    epsilon_hat: f64,
    psi: f64,
    r: f64,
) -> Result<EstimateReport> {
    let limit = spectral::residual_limit(pair.theta);
    if !(pair.residual <= limit) {
        return Err(Error::EigenResidual {
            residual: pair.residual,
            limit,
        });
    }
    let u = &pair.u;
    let t2 = field.norm_sq(m);
    let members = ball_r.members();
    let vol_r = ball_r.volume(m);
    let vol_2r = ball_2r.volume(m);
    if !(vol_r > 0.0) {
        return Err(Error::EmptyRegion);
    }
    let mut plain = 0.0;
    let mut weighted = 0.0;
    let mut excluded = 0.0;
    for &n in members {
        let w = m.weights()[n];
        if mask.is_regular(n) {
            plain += w * t2[n];
            weighted += w * t2[n] * stats.jk[n];
        } else {
            excluded += w;
        }
    }
    let lhs = r * (plain / vol_r).sqrt();
    let lhs_weighted = r * (weighted / vol_r).sqrt();
    let sup_u = operators::sup_abs(u, ball_2r.members());
    let c_cy = match spectral::cheng_yau_ratio(m, u, ball_r, ball_2r) {
        Ok(v) => v,
        Err(Error::UndefinedRatio) => 0.0,
        Err(e) => return Err(e),
    };
    let k = stats.k();
    let dim = m.dim() as f64;
    let c2 = 48.0 * dim * (k * k) as f64 * c_ctf * 2f64.powi(k as i32) * vol_2r / vol_r;
    let rhs = c2 * (1.0 + c_cy) * sup_u * (epsilon_hat.sqrt() + psi);
    Ok(EstimateReport::new("main-theorem", lhs, rhs)
        .with("theta", pair.theta, Provenance::Measured)
        .with("C2", c2, Provenance::Formula)
        .with("Cctf", c_ctf, Provenance::Measured)
        .with("CCY", c_cy, Provenance::Measured)
        .with("volumeRatio", vol_2r / vol_r, Provenance::Measured)
        .with("supU", sup_u, Provenance::Measured)
        .with("epsilonHat", epsilon_hat, Provenance::Measured)
        .with("Psi", psi, Provenance::Measured)
        .with("lhsWeighted", lhs_weighted, Provenance::Measured)
        .with("excludedFraction", excluded / vol_r, Provenance::Measured)
        .with("m", dim, Provenance::Input)
        .with("k", k as f64, Provenance::Input)
        .with("r", r, Provenance::Input)
        .note(PSI_NOTE))
}

/// One `(ε, mode)` row of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SweepRow {
    pub epsilon: f64,
    pub epsilon_hat: f64,
    pub psi: f64,
    pub theta: f64,
    #[serde(rename = "K")]
    pub k_bound: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
    /// `‖u‖_∞` on `B(p, 2r)`.
    pub sup_u: f64,
    /// Position of the mode among the nonconstant modes at this ε.
    pub mode: usize,
}

impl SweepRow {
    /// `lhs / (‖u‖_∞ (√ε̂ + Ψ))`.
    pub fn scaled(&self) -> f64 {
        self.lhs / (self.sup_u * (self.epsilon_hat.sqrt() + self.psi))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Least-squares slope of `log lhs` against `log ε̂` for the lowest mode;
    /// absent when the data are degenerate.
    pub exponent: Option<f64>,
    /// Worst `max/min` of [`SweepRow::scaled`] across ε for a fixed mode.
    pub ratio_spread: Option<f64>,
    pub degenerate: bool,
}

impl SweepResult {
    pub fn from_rows(mut rows: Vec<SweepRow>) -> Result<Self> {
        let eps: std::collections::BTreeSet<u64> = rows.iter().map(|r| r.epsilon.to_bits()).collect();
        if eps.len() < 3 {
            return Err(Error::Precondition(format!(
                "a sweep needs at least 3 distinct epsilon values, got {}",
                eps.len()
            )));
        }
        rows.sort_by(|a, b| a.epsilon.total_cmp(&b.epsilon).then(a.mode.cmp(&b.mode)));
        let lowest: Vec<&SweepRow> = rows.iter().filter(|r| r.mode == 0).collect();
        // numerically vanishing left-hand sides carry no scaling information
        let degenerate = lowest.len() < 3
            || lowest.iter().all(|r| !(r.lhs > 1e-12 * r.rhs))
            || lowest.iter().any(|r| !(r.lhs > 0.0) || !(r.epsilon_hat > 0.0));
        let exponent = if degenerate {
            None
        } else {
            let pts: Vec<(f64, f64)> = lowest.iter().map(|r| (r.epsilon_hat.ln(), r.lhs.ln())).collect();
            least_squares_slope(&pts)
        };
        let modes = rows.iter().map(|r| r.mode).max().map_or(0, |v| v + 1);
        let mut spread: Option<f64> = None;
        if !degenerate {
            for mode in 0..modes {
                let vals: Vec<f64> = rows.iter().filter(|r| r.mode == mode).map(SweepRow::scaled).collect();
                if vals.len() < 2 || vals.iter().any(|v| !(*v > 0.0)) {
                    continue;
                }
                let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                let s = hi / lo;
                spread = Some(spread.map_or(s, |v: f64| v.max(s)));
            }
        }
        Ok(Self {
            rows,
            exponent,
            ratio_spread: spread,
            degenerate,
        })
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "epsilon,epsilonHat,psi,theta,K,lhs,rhs,margin,pass")?;
        for r in &self.rows {
            writeln!(
                out,
                "{:.6e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{}",
                r.epsilon, r.epsilon_hat, r.psi, r.theta, r.k_bound, r.lhs, r.rhs, r.margin, r.pass
            )?;
        }
        out.flush()?;
        Ok(())
    }

    /// Plot data: `x = ε̂`, `y = lhs`, `y2 = rhs`.
    pub fn write_plot(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "x,y,y2")?;
        for r in &self.rows {
            writeln!(out, "{:.12e},{:.12e},{:.12e}", r.epsilon_hat, r.lhs, r.rhs)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn least_squares_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
