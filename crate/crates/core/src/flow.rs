//! Tangential gradients and the flow `γ̇ = ∇ᵀu` along the fibers of a
//! splitting map.

use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Vec3, ZERO3};
use crate::manifold::{self, distances_from, Chart, DiscreteManifold, FiberTrace, TriMesh};
use crate::operators;
use crate::splitting::{JacobianStats, RegularMask, SplittingMap};

/// `∇u = ∇ᵀu + ∇⊥u` on regular nodes.
#[derive(Clone, Debug)]
pub struct TangentialField {
    pub gradient: Vec<Vec3>,
    tangential: Vec<Option<Vec3>>,
    normal: Vec<Option<Vec3>>,
}

impl TangentialField {
    pub fn len(&self) -> usize {
        self.tangential.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tangential.is_empty()
    }

    pub fn tangential(&self, node: usize) -> Option<&Vec3> {
        self.tangential[node].as_ref()
    }

    pub fn normal(&self, node: usize) -> Option<&Vec3> {
        self.normal[node].as_ref()
    }

    pub fn is_defined(&self, node: usize) -> bool {
        self.tangential[node].is_some()
    }

    /// `|∇ᵀu|²` per node, zero where undefined.
    pub fn norm_sq(&self, m: &DiscreteManifold) -> Vec<f64> {
        self.tangential
            .iter()
            .enumerate()
            .map(|(n, t)| t.map_or(0.0, |v| m.inner(n, &v, &v).max(0.0)))
            .collect()
    }
}

pub fn tangential_projection(
    m: &DiscreteManifold,
    u: &[f64],
    stats: &JacobianStats,
    mask: &RegularMask,
) -> TangentialField {
    let gradient = operators::gradient(m, u);
    let (tangential, normal) = (0..m.len())
        .into_par_iter()
        .map(|n| {
            if !mask.is_regular(n) {
                return (None, None);
            }
            let perp = stats.normal_part(m, n, &gradient[n]);
            (Some(geom::sub(&gradient[n], &perp)), Some(perp))
        })
        .unzip();
    TangentialField {
        gradient,
        tangential,
        normal,
    }
}

/// `sup |∇(∇ᵀu)|` over nodes whose derivative stencil is regular, with the
/// derivative taken componentwise in the chart (or ambient) frame.
pub fn field_gradient_bound(m: &DiscreteManifold, field: &TangentialField) -> f64 {
    let comps: Vec<Vec<f64>> = (0..m.coord_dim())
        .map(|i| (0..m.len()).map(|n| field.tangential(n).map_or(0.0, |v| v[i])).collect())
        .collect();
    let diffs: Vec<Vec<Vec3>> = comps.iter().map(|c| operators::differential(m, c)).collect();
    (0..m.len())
        .into_par_iter()
        .filter(|&n| m.derivative_support(n).iter().all(|&s| field.is_defined(s)))
        .map(|n| {
            let g = m.metric(n);
            let ginv = m.metric_inv(n);
            let mut acc = 0.0;
            for i in 0..3 {
                for k in 0..3 {
                    if g[i][k] == 0.0 {
                        continue;
                    }
                    acc += g[i][k] * geom::quad(ginv, &diffs[i][n], &diffs[k][n]);
                }
            }
            acc.max(0.0).sqrt()
        })
        .reduce(|| 0.0, f64::max)
}

/// Point evaluation of nodal fields between nodes.
enum Sampler<'a> {
    Grid(&'a manifold::Grid),
    Mesh(&'a TriMesh),
}

impl<'a> Sampler<'a> {
    fn new(m: &'a DiscreteManifold) -> Self {
        match m.chart() {
            Chart::PeriodicGrid(g) => Sampler::Grid(g),
            Chart::TriMesh(t) => Sampler::Mesh(t),
        }
    }

    /// Interpolation weights at `x`, `None` off a mesh.
    fn weights(&self, x: &Vec3) -> Option<Vec<(usize, f64)>> {
        match self {
            Sampler::Grid(g) => {
                let (cell, frac) = g.locate(x);
                Some(g.cell_corners(cell, &frac))
            }
            Sampler::Mesh(t) => {
                let (f, bary, _) = nearest_face(t, x)?;
                Some(t.faces()[f].iter().copied().zip(bary).collect())
            }
        }
    }

    /// Pulls `x` back onto the surface of a mesh.
    fn project(&self, x: &Vec3) -> Vec3 {
        match self {
            Sampler::Grid(_) => *x,
            Sampler::Mesh(t) => nearest_face(t, x).map_or(*x, |(_, _, p)| p),
        }
    }
}

/// Face whose plane projection of `x` falls inside it, closest to `x`:
/// (face, barycentric weights, projected point).
fn nearest_face(t: &TriMesh, x: &Vec3) -> Option<(usize, [f64; 3], Vec3)> {
    let mut best: Option<(f64, usize, [f64; 3], Vec3)> = None;
    for (f, face) in t.faces().iter().enumerate() {
        let [a, b, c] = face.map(|v| t.vertices()[v]);
        let nrm = t.face_normal(f);
        let p = geom::sub(x, &geom::scale(&nrm, geom::dot(&geom::sub(x, &a), &nrm)));
        let e0 = geom::sub(&b, &a);
        let e1 = geom::sub(&c, &a);
        let e2 = geom::sub(&p, &a);
        let (d00, d01, d11) = (geom::dot(&e0, &e0), geom::dot(&e0, &e1), geom::dot(&e1, &e1));
        let (d20, d21) = (geom::dot(&e2, &e0), geom::dot(&e2, &e1));
        let den = d00 * d11 - d01 * d01;
        if den <= 0.0 {
            continue;
        }
        let v = (d11 * d20 - d01 * d21) / den;
        let w = (d00 * d21 - d01 * d20) / den;
        let bary = [1.0 - v - w, v, w];
        if bary.iter().any(|&l| l < -1e-9) {
            continue;
        }
        let dist = geom::norm(&geom::sub(x, &p));
        if best.as_ref().is_none_or(|b| dist < b.0) {
            best = Some((dist, f, bary, p));
        }
    }
    best.map(|(_, f, bary, p)| (f, bary, p))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowOptions {
    pub dt: f64,
    pub t_end: f64,
    pub newton_tolerance: f64,
    pub newton_iterations: usize,
    /// Upper bound on `dt · sup|∇(∇ᵀu)|`.
    pub stability: f64,
}

impl FlowOptions {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            newton_tolerance: 1e-10,
            newton_iterations: 5,
            stability: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSample {
    pub t: f64,
    pub position: Vec3,
    pub value: f64,
    pub speed_sq: f64,
    pub drift: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowTrajectory {
    pub x0: usize,
    pub level: Vec<f64>,
    pub samples: Vec<FlowSample>,
}

impl FlowTrajectory {
    pub fn max_drift(&self) -> f64 {
        self.samples.iter().map(|s| s.drift).fold(0.0, f64::max)
    }

    /// `u∘γ` never decreases by more than `tolerance` between samples.
    pub fn is_nondecreasing(&self, tolerance: f64) -> bool {
        self.samples.windows(2).all(|w| w[1].value >= w[0].value - tolerance)
    }

    pub fn write_csv(&self, path: &Path, dim: usize) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let coords: Vec<String> = (0..dim).map(|a| format!("x{a}")).collect();
        writeln!(out, "t,{},u,speed_sq,drift", coords.join(","))?;
        for s in &self.samples {
            let pos: Vec<String> = s.position[..dim].iter().map(|v| format!("{v:.12e}")).collect();
            writeln!(
                out,
                "{:.12e},{},{:.12e},{:.12e},{:.12e}",
                s.t,
                pos.join(","),
                s.value,
                s.speed_sq,
                s.drift
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

struct FlowContext<'a> {
    m: &'a DiscreteManifold,
    sampler: Sampler<'a>,
    u: &'a [f64],
    phi: &'a SplittingMap,
    stats: &'a JacobianStats,
    field: &'a TangentialField,
}

struct PointState {
    velocity: Vec3,
    value: f64,
    phi: Vec<f64>,
    grads: Vec<Vec3>,
}

impl FlowContext<'_> {
    fn eval(&self, x: &Vec3) -> Option<PointState> {
        let weights = self.sampler.weights(x)?;
        let k = self.phi.k();
        let mut velocity = ZERO3;
        let mut value = 0.0;
        let mut phi = vec![0.0; k];
        let mut grads = vec![ZERO3; k];
        for &(n, w) in &weights {
            if w == 0.0 {
                continue;
            }
            let t = self.field.tangential(n)?;
            geom::axpy(&mut velocity, w, t);
            value += w * self.u[n];
            for a in 0..k {
                phi[a] += w * self.phi.component(a)[n];
                geom::axpy(&mut grads[a], w, &self.stats.gradients[a][n]);
            }
        }
        Some(PointState {
            velocity,
            value,
            phi,
            grads,
        })
    }

    fn reproject(&self, x: Vec3, level: &[f64], opts: &FlowOptions) -> Option<(Vec3, PointState)> {
        let k = level.len();
        let mut x = x;
        for iter in 0..=opts.newton_iterations {
            let state = self.eval(&x)?;
            let res: Vec<f64> = (0..k).map(|a| state.phi[a] - level[a]).collect();
            let err = res.iter().map(|r| r * r).sum::<f64>().sqrt();
            if err <= opts.newton_tolerance {
                return Some((x, state));
            }
            if iter == opts.newton_iterations {
                return None;
            }
            let g = self.m.metric_at(&x);
            let mut j = [[0.0; 3]; 3];
            for a in 0..k {
                for b in 0..k {
                    j[a][b] = geom::quad(&g, &state.grads[a], &state.grads[b]);
                }
            }
            let jinv = geom::inverse(&j, k)?;
            let mut step = ZERO3;
            for a in 0..k {
                let coef: f64 = (0..k).map(|b| jinv[a][b] * res[b]).sum();
                geom::axpy(&mut step, coef, &state.grads[a]);
            }
            x = self.sampler.project(&geom::sub(&x, &step));
        }
        None
    }

    fn sample(&self, t: f64, x: Vec3, state: &PointState, level: &[f64]) -> FlowSample {
        let g = self.m.metric_at(&x);
        let drift = state
            .phi
            .iter()
            .zip(level)
            .map(|(p, l)| (p - l).powi(2))
            .sum::<f64>()
            .sqrt();
        FlowSample {
            t,
            position: x,
            value: state.value,
            speed_sq: geom::quad(&g, &state.velocity, &state.velocity),
            drift,
        }
    }
}

/// Integrates `γ̇ = ∇ᵀu` from node `x0` with classical Runge–Kutta steps,
/// each followed by Newton reprojection onto `{Φ = Φ(x0)}`.
pub fn integrate_flow(
    m: &DiscreteManifold,
    u: &[f64],
    phi: &SplittingMap,
    stats: &JacobianStats,
    field: &TangentialField,
    x0: usize,
    opts: &FlowOptions,
) -> Result<FlowTrajectory> {
    if !field.is_defined(x0) {
        return Err(Error::SingularPoint { node: x0 });
    }
    if !(opts.dt > 0.0) || !(opts.t_end >= 0.0) {
        return Err(Error::Precondition("time step and horizon must be positive".into()));
    }
    let bound = field_gradient_bound(m, field);
    if opts.dt * bound > opts.stability {
        return Err(Error::StepSize {
            dt: opts.dt,
            limit: opts.stability / bound,
        });
    }
    integrate_unchecked(m, u, phi, stats, field, x0, opts)
}

fn integrate_unchecked(
    m: &DiscreteManifold,
    u: &[f64],
    phi: &SplittingMap,
    stats: &JacobianStats,
    field: &TangentialField,
    x0: usize,
    opts: &FlowOptions,
) -> Result<FlowTrajectory> {
    let ctx = FlowContext {
        m,
        sampler: Sampler::new(m),
        u,
        phi,
        stats,
        field,
    };
    let level = phi.value(x0);
    let mut x = m.position(x0);
    let fail = |t: f64, x: Vec3| Error::ReprojectionFailed { t, position: x.to_vec() };
    let start = ctx.eval(&x).ok_or_else(|| fail(0.0, x))?;
    let mut samples = vec![ctx.sample(0.0, x, &start, &level)];
    let steps = (opts.t_end / opts.dt).ceil() as usize;
    let mut t = 0.0;
    for _ in 0..steps {
        let h = opts.dt.min(opts.t_end - t);
        if h <= 0.0 {
            break;
        }
        let vel = |p: &Vec3| ctx.eval(p).map(|s| s.velocity);
        let k1 = vel(&x).ok_or_else(|| fail(t, x))?;
        let k2 = vel(&geom::add(&x, &geom::scale(&k1, 0.5 * h))).ok_or_else(|| fail(t, x))?;
        let k3 = vel(&geom::add(&x, &geom::scale(&k2, 0.5 * h))).ok_or_else(|| fail(t, x))?;
        let k4 = vel(&geom::add(&x, &geom::scale(&k3, h))).ok_or_else(|| fail(t, x))?;
        let mut next = x;
        for i in 0..3 {
            next[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let next = ctx.sampler.project(&next);
        let (next, state) = ctx.reproject(next, &level, opts).ok_or_else(|| fail(t, x))?;
        t += h;
        x = next;
        samples.push(ctx.sample(t, x, &state, &level));
    }
    Ok(FlowTrajectory { x0, level, samples })
}

/// Constants of the fiberwise a priori bound measured on one fiber.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FiberBoundReport {
    pub level: Vec<f64>,
    pub k: usize,
    pub r: f64,
    pub epsilon_hat: f64,
    /// Least Jacobian eigenvalue on the fiber.
    pub lambda: f64,
    /// Largest Jacobian eigenvalue on the fiber.
    pub big_lambda: f64,
    /// `max_b sup_fiber r²|Hess Φᵇ|²`.
    pub c0: f64,
    /// `sup (r|∇u| + r²|Hess u|)` over the `2ε̂r`-neighborhood of the fiber.
    #[serde(rename = "K")]
    pub u_bound: f64,
    /// `sup_fiber |∇ᵀu|`.
    pub delta0: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
    /// Set when `δ₀² > 4(1 + λ⁻¹√(Λk)C₀)K²ε̂r⁻²`, i.e. the flow could not
    /// exist for all time.
    pub counterexample: bool,
}

impl FiberBoundReport {
    /// `1 + λ⁻¹√(Λk)C₀`.
    pub fn growth(&self) -> f64 {
        1.0 + (self.big_lambda * self.k as f64).sqrt() * self.c0 / self.lambda
    }

    /// `2(1 + λ⁻¹√(Λk)C₀)Kr⁻²`.
    pub fn decay_rate(&self) -> f64 {
        2.0 * self.growth() * self.u_bound / (self.r * self.r)
    }
}

pub fn fiber_apriori_check(
    m: &DiscreteManifold,
    fiber: &FiberTrace,
    u: &[f64],
    phi: &SplittingMap,
    stats: &JacobianStats,
    field: &TangentialField,
    epsilon_hat: f64,
    r: f64,
) -> Result<FiberBoundReport> {
    if !fiber.regular {
        return Err(Error::Precondition("fiber is not regular".into()));
    }
    let radius = 2.0 * epsilon_hat * r;
    let dist = distances_from(m, &fiber.seeds(m));
    let hood = dist.within(radius);
    if hood.iter().any(|&n| !phi.valid()[n]) {
        return Err(Error::NeighborhoodExitsDomain { radius });
    }
    let grad = &field.gradient;
    let hess = operators::hessian(m, u);
    let u_bound = hood
        .iter()
        .map(|&n| {
            r * m.norm(n, &grad[n])
                + r * r * geom::tensor_norm_sq(&hess[n], m.metric_inv(n)).max(0.0).sqrt()
        })
        .fold(0.0, f64::max);
    let mut lambda = f64::INFINITY;
    let mut big_lambda: f64 = 0.0;
    let mut c0: f64 = 0.0;
    let mut delta0: f64 = 0.0;
    for &n in &fiber.support {
        let t = field.tangential(n).ok_or(Error::SingularPoint { node: n })?;
        lambda = lambda.min(stats.lambda[n]);
        big_lambda = big_lambda.max(stats.big_lambda[n]);
        for b in 0..phi.k() {
            let h2 = geom::tensor_norm_sq(&stats.hessians[b][n], m.metric_inv(n)).max(0.0);
            c0 = c0.max(r * r * h2);
        }
        delta0 = delta0.max(m.norm(n, t));
    }
    if !(lambda > 0.0) {
        return Err(Error::SingularPoint { node: fiber.support[0] });
    }
    let k = phi.k();
    let growth = 1.0 + (big_lambda * k as f64).sqrt() * c0 / lambda;
    let lhs = r * delta0;
    let rhs = 2.0 * growth.sqrt() * u_bound * epsilon_hat.sqrt();
    Ok(FiberBoundReport {
        level: fiber.level.clone(),
        k,
        r,
        epsilon_hat,
        lambda,
        big_lambda,
        c0,
        u_bound,
        delta0,
        lhs,
        rhs,
        margin: rhs / lhs,
        pass: lhs <= rhs,
        counterexample: delta0 * delta0 > 4.0 * growth * u_bound * u_bound * epsilon_hat / (r * r),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentialCheck {
    pub rate: f64,
    /// `min_t |∇ᵀu|²(γ(t)) / (e^{−Ct}|∇ᵀu|²(γ(0)))`.
    pub margin: f64,
    pub pass: bool,
}

/// Checks `|∇ᵀu|²(γ(t)) ≥ e^{−Ct}|∇ᵀu|²(γ(0))` along a trajectory.
pub fn verify_exponential_bound(traj: &FlowTrajectory, rate: f64, tolerance: f64) -> ExponentialCheck {
    let s0 = traj.samples.first().map_or(0.0, |s| s.speed_sq);
    let margin = if s0 <= 0.0 {
        f64::INFINITY
    } else {
        traj.samples
            .iter()
            .map(|s| {
                if s.speed_sq <= 0.0 {
                    0.0
                } else {
                    (s.speed_sq.ln() - s0.ln() + rate * s.t).exp()
                }
            })
            .fold(f64::INFINITY, f64::min)
    };
    ExponentialCheck {
        rate,
        margin,
        pass: margin >= 1.0 - tolerance,
    }
}

/// Pushes every sampled node forward by the flow for time `t` and returns
/// `(∫ (u|J_k|)∘γ_t, ∫ u|J_k|)` over every `stride`-th node of `nodes`, each
/// sample weighted by `stride` times its volume.
pub fn transported_integral(
    m: &DiscreteManifold,
    u: &[f64],
    phi: &SplittingMap,
    stats: &JacobianStats,
    field: &TangentialField,
    nodes: &[usize],
    stride: usize,
    opts: &FlowOptions,
) -> Result<(f64, f64)> {
    let ctx_jk = &stats.jk;
    let scale = stride.max(1) as f64;
    let sampler = Sampler::new(m);
    let picked: Vec<usize> = nodes.iter().copied().step_by(stride.max(1)).collect();
    let parts: Vec<(f64, f64)> = picked
        .par_iter()
        .map(|&n| {
            let traj = integrate_unchecked(m, u, phi, stats, field, n, opts)?;
            let end = traj.samples.last().expect("trajectory has a start sample");
            let w = sampler.weights(&end.position).ok_or(Error::ReprojectionFailed {
                t: end.t,
                position: end.position.to_vec(),
            })?;
            let jk_end: f64 = w.iter().map(|&(c, wt)| wt * ctx_jk[c]).sum();
            let vol = m.weights()[n] * scale;
            Ok((vol * end.value * jk_end, vol * u[n] * ctx_jk[n]))
        })
        .collect::<Result<_>>()?;
    Ok(parts.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{build_family, FamilySpec};
    use crate::splitting::{classify_regular, global_coordinates, jacobian_stats};
    use std::f64::consts::PI;

    #[test]
    fn base_function_has_no_tangential_part() {
        let m = build_family(&FamilySpec::flat(0.1, 64, 16)).unwrap();
        let c = m.grid().unwrap().flat([32, 0, 0]);
        let phi = global_coordinates(&m, c).unwrap();
        let stats = jacobian_stats(&m, &phi);
        let mask = classify_regular(&m, &stats, 1e-6).unwrap();
        let u: Vec<f64> = (0..m.len()).map(|n| (2.0 * PI * m.position(n)[0]).sin()).collect();
        let field = tangential_projection(&m, &u, &stats, &mask);
        for n in 0..m.len() {
            if let Some(t) = field.tangential(n) {
                assert!(geom::norm(t) < 1e-12);
            }
        }
        let x0 = m.grid().unwrap().flat([30, 3, 0]);
        let traj = integrate_flow(&m, &u, &phi, &stats, &field, x0, &FlowOptions::new(1e-3, 0.05)).unwrap();
        let end = traj.samples.last().unwrap();
        assert!(geom::norm(&geom::sub(&end.position, &m.position(x0))) < 1e-14);
    }

    #[test]
    fn oversized_step_is_rejected() {
        let eps = 0.1;
        let m = build_family(&FamilySpec::flat(eps, 32, 32)).unwrap();
        let c = m.grid().unwrap().flat([16, 0, 0]);
        let phi = global_coordinates(&m, c).unwrap();
        let stats = jacobian_stats(&m, &phi);
        let mask = classify_regular(&m, &stats, 1e-6).unwrap();
        let u: Vec<f64> = (0..m.len()).map(|n| (2.0 * PI * m.position(n)[1]).sin()).collect();
        let field = tangential_projection(&m, &u, &stats, &mask);
        let err = integrate_flow(&m, &u, &phi, &stats, &field, c, &FlowOptions::new(1e-3, 0.01));
        assert!(matches!(err, Err(Error::StepSize { .. })));
    }
}
