//! Harmonic splitting maps `Φ: B → ℝᵏ` and their Jacobian analytics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Mat3, Vec3, ZERO3, ZERO33};
use crate::linalg::{self, Cholesky};
use crate::manifold::{
    self, DiscreteManifold, FiberField, FiberOptions, FiberTrace, GeodesicBall,
};
use crate::operators::{self, laplacian_matrix};

/// `k` scalar fields on a domain of the manifold.
#[derive(Clone, Debug)]
pub struct SplittingMap {
    components: Vec<Vec<f64>>,
    domain: Vec<bool>,
    valid: Vec<bool>,
    center: usize,
    residuals: Vec<f64>,
}

impl SplittingMap {
    /// Wraps arbitrary component fields defined on `domain`.
    pub fn new(
        m: &DiscreteManifold,
        components: Vec<Vec<f64>>,
        domain: Vec<bool>,
        center: usize,
    ) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Precondition("a splitting map needs k ≥ 1 components".into()));
        }
        if components.iter().any(|c| c.len() != m.len()) || domain.len() != m.len() {
            return Err(Error::Precondition("field length does not match the manifold".into()));
        }
        let valid = operators::derivative_valid(m, &domain);
        let lap = laplacian_matrix(m)?;
        let inner: Vec<usize> = (0..m.len()).filter(|&n| valid[n]).collect();
        let residuals = components
            .iter()
            .map(|c| {
                if inner.is_empty() {
                    return Ok(0.0);
                }
                operators::l2_average(m, &lap.apply(c), &inner)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            components,
            domain,
            valid,
            center,
            residuals,
        })
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn component(&self, a: usize) -> &[f64] {
        &self.components[a]
    }

    pub fn domain(&self) -> &[bool] {
        &self.domain
    }

    /// Nodes whose derivative stencil lies in the domain.
    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn center(&self) -> usize {
        self.center
    }

    /// `‖ΔΦᵃ‖_{L̄²}` over the valid nodes.
    pub fn harmonic_residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn value(&self, node: usize) -> Vec<f64> {
        self.components.iter().map(|c| c[node]).collect()
    }

    /// `QΦ` for a constant `k x k` matrix `Q` (rows).
    pub fn transformed(&self, q: &[Vec<f64>]) -> Self {
        let k = self.k();
        let n = self.domain.len();
        let components = (0..k)
            .map(|a| {
                (0..n)
                    .map(|i| (0..k).map(|b| q[a][b] * self.components[b][i]).sum())
                    .collect()
            })
            .collect();
        let residuals = (0..k)
            .map(|a| (0..k).map(|b| (q[a][b] * self.residuals[b]).abs()).sum())
            .collect();
        Self {
            components,
            domain: self.domain.clone(),
            valid: self.valid.clone(),
            center: self.center,
            residuals,
        }
    }
}

/// Solves `ΔΦᵃ = 0` in the ball interior with `Φᵃ = boundary[a]` on the
/// boundary layer.
///
/// When the family's base coordinates are harmonic and the boundary data are
/// exactly those coordinates, the coordinates themselves are returned.
pub fn solve_harmonic(
    m: &DiscreteManifold,
    ball: &GeodesicBall,
    boundary: &[Vec<f64>],
) -> Result<SplittingMap> {
    if boundary.is_empty() {
        return Err(Error::Precondition("a splitting map needs k ≥ 1 components".into()));
    }
    if ball.boundary().is_empty() || ball.members().len() == m.len() {
        return Err(Error::SingularSystem("ball has no boundary layer".into()));
    }
    let mut domain = vec![false; m.len()];
    for &n in ball.members() {
        domain[n] = true;
    }
    if let Some(exact) = exact_coordinates(m, ball, boundary) {
        return SplittingMap::new(m, exact, domain, ball.center());
    }
    let interior = ball.interior();
    if interior.is_empty() {
        return Err(Error::SingularSystem("ball has no interior nodes".into()));
    }
    let lap = laplacian_matrix(m)?;
    let s = lap.stiffness();
    let s_ii = linalg::principal_submatrix(s, &interior);
    let chol = Cholesky::new(&s_ii)?;
    let mut on_boundary = vec![false; m.len()];
    for &b in ball.boundary() {
        on_boundary[b] = true;
    }
    let mut components = Vec::with_capacity(boundary.len());
    for data in boundary {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition("boundary data must be finite".into()));
        }
        let rhs: Vec<f64> = interior
            .iter()
            .map(|&i| {
                let row = s.row(i);
                -row.col_indices()
                    .iter()
                    .zip(row.values())
                    .filter(|(&j, _)| on_boundary[j])
                    .map(|(&j, &v)| v * data[j])
                    .sum::<f64>()
            })
            .collect();
        let sol = chol.solve(&rhs);
        let mut phi = vec![0.0; m.len()];
        for &b in ball.boundary() {
            phi[b] = data[b];
        }
        for (x, &i) in sol.iter().zip(&interior) {
            phi[i] = *x;
        }
        components.push(phi);
    }
    SplittingMap::new(m, components, domain, ball.center())
}

fn exact_coordinates(
    m: &DiscreteManifold,
    ball: &GeodesicBall,
    boundary: &[Vec<f64>],
) -> Option<Vec<Vec<f64>>> {
    if !m.analytic()?.base_coordinates_harmonic() || boundary.len() > m.base_dim() {
        return None;
    }
    let coords = m.base_coordinates(ball.center());
    let matches = boundary.iter().enumerate().all(|(a, data)| {
        ball.boundary()
            .iter()
            .all(|&b| (data[b] - coords[a][b]).abs() <= 1e-12)
    });
    matches.then(|| {
        boundary
            .iter()
            .enumerate()
            .map(|(a, _)| {
                (0..m.len())
                    .map(|n| if ball.contains(n) { coords[a][n] } else { 0.0 })
                    .collect()
            })
            .collect()
    })
}

/// Dirichlet problem with the family's base coordinates (measured from the
/// ball center) as boundary data.
pub fn base_coordinate_map(m: &DiscreteManifold, ball: &GeodesicBall) -> Result<SplittingMap> {
    let coords = m.base_coordinates(ball.center());
    solve_harmonic(m, ball, &coords)
}

/// The base coordinates as a map on the whole chart minus a strip around the
/// antipodal cut, for families whose coordinates are globally harmonic.
pub fn global_coordinates(m: &DiscreteManifold, center: usize) -> Result<SplittingMap> {
    let harmonic = m.analytic().is_some_and(|a| a.base_coordinates_harmonic());
    let Some(g) = m.grid().filter(|_| harmonic) else {
        return Err(Error::Precondition(
            "base coordinates are not globally harmonic on this manifold".into(),
        ));
    };
    let coords = m.base_coordinates(center);
    let domain = (0..m.len())
        .map(|n| {
            (0..m.base_dim()).all(|a| coords[a][n].abs() < 0.5 * g.periods()[a] - 1.5 * g.spacing(a))
        })
        .collect();
    SplittingMap::new(m, coords, domain, center)
}

/// `Φ = (|x − c|² − ρ²)²` with `|x − c|` the chart (or ambient) distance:
/// critical on the circle `|x − c| = ρ` and at `c`.
pub fn morse_test_map(
    m: &DiscreteManifold,
    c: &Vec3,
    rho: f64,
    domain: Vec<bool>,
    center: usize,
) -> Result<SplittingMap> {
    let phi = (0..m.len())
        .map(|n| {
            let d = manifold::chart_delta(m, c, &m.position(n));
            let s2 = geom::dot(&d, &d);
            (s2 - rho * rho).powi(2)
        })
        .collect();
    SplittingMap::new(m, vec![phi], domain, center)
}

/// Pointwise Gram matrix `J_ab = ⟨∇Φᵃ, ∇Φᵇ⟩` and its spectral data.
#[derive(Clone, Debug)]
pub struct JacobianStats {
    k: usize,
    pub gradients: Vec<Vec<Vec3>>,
    pub hessians: Vec<Vec<Mat3>>,
    pub gram: Vec<Mat3>,
    /// Ascending eigenvalues of `J`.
    pub eigenvalues: Vec<Vec3>,
    /// Matching unit eigenvectors as rows (`φᵃ = Σ_b q_ab Φᵇ`).
    pub eigenvectors: Vec<Mat3>,
    pub lambda: Vec<f64>,
    pub big_lambda: Vec<f64>,
    pub det: Vec<f64>,
    /// `|J_k| = √det J`.
    pub jk: Vec<f64>,
    pub valid: Vec<bool>,
}

impl JacobianStats {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn fiber_field<'a>(&'a self, phi: &'a SplittingMap) -> FiberField<'a> {
        FiberField {
            components: phi.components(),
            domain: phi.valid(),
            lambda: &self.lambda,
        }
    }

    /// Rotated gradients and Hessians `∇φᵃ, Hess φᵃ` and `√λ_a` at a node.
    fn eigenframe(&self, node: usize) -> ([Vec3; 3], [Mat3; 3], [f64; 3]) {
        let q = &self.eigenvectors[node];
        let mut grads = [ZERO3; 3];
        let mut hess = [ZERO33; 3];
        let mut sqrt_l = [0.0; 3];
        for a in 0..self.k {
            for b in 0..self.k {
                geom::axpy(&mut grads[a], q[a][b], &self.gradients[b][node]);
                for i in 0..3 {
                    for j in 0..3 {
                        hess[a][i][j] += q[a][b] * self.hessians[b][node][i][j];
                    }
                }
            }
            sqrt_l[a] = self.eigenvalues[node][a].max(0.0).sqrt();
        }
        (grads, hess, sqrt_l)
    }

    /// `∇⊥u = Σ_a λ_a⁻¹⟨∇u, ∇φᵃ⟩∇φᵃ` assembled in the eigenbasis.
    pub fn normal_part(&self, m: &DiscreteManifold, node: usize, grad_u: &Vec3) -> Vec3 {
        let (grads, _, sqrt_l) = self.eigenframe(node);
        let mut out = ZERO3;
        for a in 0..self.k {
            let l = sqrt_l[a] * sqrt_l[a];
            if l > 0.0 {
                geom::axpy(&mut out, m.inner(node, grad_u, &grads[a]) / l, &grads[a]);
            }
        }
        out
    }

    /// `Σ_b |Hess Φᵇ|` at a node.
    pub fn hessian_sum(&self, m: &DiscreteManifold, node: usize) -> f64 {
        (0..self.k)
            .map(|b| geom::tensor_norm_sq(&self.hessians[b][node], m.metric_inv(node)).max(0.0).sqrt())
            .sum()
    }
}

pub fn jacobian_stats(m: &DiscreteManifold, phi: &SplittingMap) -> JacobianStats {
    let k = phi.k();
    let gradients: Vec<Vec<Vec3>> = phi.components().iter().map(|c| operators::gradient(m, c)).collect();
    let hessians: Vec<Vec<Mat3>> = phi.components().iter().map(|c| operators::hessian(m, c)).collect();
    let valid = phi.valid().to_vec();
    let per_node: Vec<(Mat3, Vec3, Mat3)> = (0..m.len())
        .into_par_iter()
        .map(|n| {
            if !valid[n] {
                return (ZERO33, ZERO3, ZERO33);
            }
            let mut j = ZERO33;
            for a in 0..k {
                for b in 0..k {
                    j[a][b] = m.inner(n, &gradients[a][n], &gradients[b][n]);
                }
            }
            let (vals, vecs) = geom::sym_eigen(&j, k);
            (j, vals, vecs)
        })
        .collect();
    let mut gram = Vec::with_capacity(m.len());
    let mut eigenvalues = Vec::with_capacity(m.len());
    let mut eigenvectors = Vec::with_capacity(m.len());
    let mut lambda = Vec::with_capacity(m.len());
    let mut big_lambda = Vec::with_capacity(m.len());
    let mut det = Vec::with_capacity(m.len());
    let mut jk = Vec::with_capacity(m.len());
    for (n, (j, vals, vecs)) in per_node.into_iter().enumerate() {
        let d = if valid[n] { geom::det(&j, k) } else { 0.0 };
        gram.push(j);
        lambda.push(vals[0]);
        big_lambda.push(vals[k - 1]);
        eigenvalues.push(vals);
        eigenvectors.push(vecs);
        det.push(d);
        jk.push(d.max(0.0).sqrt());
    }
    JacobianStats {
        k,
        gradients,
        hessians,
        gram,
        eigenvalues,
        eigenvectors,
        lambda,
        big_lambda,
        det,
        jk,
        valid,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegularMask {
    pub regular: Vec<bool>,
    pub threshold: f64,
    /// Weighted measure of valid nodes that are not regular, over the
    /// measure of all valid nodes.
    pub singular_fraction: f64,
}

impl RegularMask {
    pub fn is_regular(&self, node: usize) -> bool {
        self.regular[node]
    }
}

/// `10⁻⁶ · median Λ` over valid nodes.
pub fn default_threshold(stats: &JacobianStats) -> f64 {
    relative_threshold(stats, 1e-6)
}

/// `rel · median Λ` over valid nodes.
pub fn relative_threshold(stats: &JacobianStats, rel: f64) -> f64 {
    let mut vals: Vec<f64> = (0..stats.valid.len())
        .filter(|&n| stats.valid[n])
        .map(|n| stats.big_lambda[n])
        .collect();
    if vals.is_empty() {
        return f64::MIN_POSITIVE;
    }
    vals.sort_by(f64::total_cmp);
    (rel * vals[vals.len() / 2]).max(f64::MIN_POSITIVE)
}

/// Regular nodes: valid, `λ > threshold`, and the frame `∇Φ` keeps its
/// orientation towards every valid stencil neighbor
/// (`det⟨∇Φᵃ(x), ∇Φᵇ(y)⟩ > 0`), which flags nodes next to the critical set.
pub fn classify_regular(
    m: &DiscreteManifold,
    stats: &JacobianStats,
    threshold: f64,
) -> Result<RegularMask> {
    if !(threshold > 0.0) {
        return Err(Error::Precondition(format!("threshold {threshold} must be positive")));
    }
    let k = stats.k;
    let regular: Vec<bool> = (0..m.len())
        .into_par_iter()
        .map(|x| {
            if !stats.valid[x] || !(stats.lambda[x] > threshold) {
                return false;
            }
            m.stencil_neighbors(x).into_iter().all(|y| {
                if !stats.valid[y] {
                    return true;
                }
                let mut c = ZERO33;
                for a in 0..k {
                    for b in 0..k {
                        c[a][b] = m.inner(x, &stats.gradients[a][x], &stats.gradients[b][y]);
                    }
                }
                geom::det(&c, k) > 0.0
            })
        })
        .collect();
    let mut total = 0.0;
    let mut singular = 0.0;
    for n in 0..m.len() {
        if stats.valid[n] {
            total += m.weights()[n];
            if !regular[n] {
                singular += m.weights()[n];
            }
        }
    }
    Ok(RegularMask {
        regular,
        threshold,
        singular_fraction: if total > 0.0 { singular / total } else { 0.0 },
    })
}

/// Quality measures of a splitting map on `B(p, 2r)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Certificate {
    pub sup_grad: f64,
    pub gram_dev: f64,
    pub hess_energy: f64,
    pub range_ok: bool,
    pub psi: f64,
    pub epsilon_hat: Option<f64>,
}

pub fn certify(
    m: &DiscreteManifold,
    phi: &SplittingMap,
    stats: &JacobianStats,
    ball_2r: &GeodesicBall,
    r: f64,
    epsilon_hat: Option<f64>,
) -> Result<Certificate> {
    let region = ball_2r.members();
    if region.is_empty() {
        return Err(Error::EmptyRegion);
    }
    if let Some(&n) = region.iter().find(|&&n| !phi.valid()[n]) {
        return Err(Error::Precondition(format!(
            "node {n} of B(p, 2r) lies outside the domain of the map"
        )));
    }
    let k = phi.k();
    let mut sup_grad: f64 = 0.0;
    for a in 0..k {
        for &n in region {
            sup_grad = sup_grad.max(m.norm(n, &stats.gradients[a][n]));
        }
    }
    let mut gram_dev: f64 = 0.0;
    for a in 0..k {
        for b in 0..k {
            let dev: Vec<f64> = (0..m.len())
                .map(|n| (stats.gram[n][a][b] - if a == b { 1.0 } else { 0.0 }).abs())
                .collect();
            gram_dev = gram_dev.max(operators::average(m, &dev, region)?);
        }
    }
    let mut hess_energy = 0.0;
    for b in 0..k {
        let h2 = operators::tensor_norm_sq(m, &stats.hessians[b]);
        hess_energy += r * r * operators::average(m, &h2, region)?;
    }
    let range_ok = region.iter().all(|&n| {
        let v: f64 = phi.value(n).iter().map(|x| x * x).sum::<f64>().sqrt();
        v <= 2.0 * r * (1.0 + 1e-12)
    });
    Ok(Certificate {
        sup_grad,
        gram_dev,
        hess_energy,
        range_ok,
        psi: gram_dev.max(hess_energy.sqrt()),
        epsilon_hat,
    })
}

fn require_regular(mask: &RegularMask, node: usize) -> Result<()> {
    if mask.is_regular(node) {
        Ok(())
    } else {
        Err(Error::SingularPoint { node })
    }
}

/// `F(∇u, X, X) = Σ_a c_a Hess_{φᵃ}(X, X) Π_{b≠a} √λ_b` with
/// `c_a = ⟨∇u, ∇φᵃ⟩/√λ_a`, in the eigenbasis of `J`.
pub fn quantity_f(
    m: &DiscreteManifold,
    stats: &JacobianStats,
    mask: &RegularMask,
    node: usize,
    grad_u: &Vec3,
    x: &Vec3,
) -> Result<f64> {
    require_regular(mask, node)?;
    let (grads, hess, sqrt_l) = stats.eigenframe(node);
    let k = stats.k;
    let mut f = 0.0;
    for a in 0..k {
        let c = m.inner(node, grad_u, &grads[a]) / sqrt_l[a];
        let others: f64 = (0..k).filter(|&b| b != a).map(|b| sqrt_l[b]).product();
        f += c * geom::quad(&hess[a], x, x) * others;
    }
    Ok(f)
}

/// `G(X) = Σ_a λ_a^{-1/2} Hess_{φᵃ}(X, ∇φᵃ) Π_{b≠a} √λ_b`, which equals the
/// derivative of `|J_k|` along `X`.
pub fn quantity_g(
    stats: &JacobianStats,
    mask: &RegularMask,
    node: usize,
    x: &Vec3,
) -> Result<f64> {
    require_regular(mask, node)?;
    let (grads, hess, sqrt_l) = stats.eigenframe(node);
    let k = stats.k;
    let mut g = 0.0;
    for a in 0..k {
        let others: f64 = (0..k).filter(|&b| b != a).map(|b| sqrt_l[b]).product();
        g += geom::quad(&hess[a], x, &grads[a]) / sqrt_l[a] * others;
    }
    Ok(g)
}

/// Level set of the map through its valid domain.
pub fn extract_fiber(
    m: &DiscreteManifold,
    phi: &SplittingMap,
    stats: &JacobianStats,
    level: &[f64],
    opts: &FiberOptions,
) -> Result<FiberTrace> {
    manifold::extract_fiber(m, &stats.fiber_field(phi), level, opts)
}

pub fn epsilon_proxy(
    m: &DiscreteManifold,
    ball: &GeodesicBall,
    phi: &SplittingMap,
    stats: &JacobianStats,
    opts: &FiberOptions,
) -> Result<f64> {
    manifold::epsilon_proxy(m, ball, &stats.fiber_field(phi), opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{build_family, geodesic_ball, FamilySpec};

    fn flat_setup() -> (DiscreteManifold, GeodesicBall) {
        let m = build_family(&FamilySpec::flat(0.1, 128, 16)).unwrap();
        let p = m.grid().unwrap().flat([64, 0, 0]);
        let ball = geodesic_ball(&m, p, 0.45).unwrap();
        (m, ball)
    }

    #[test]
    fn flat_coordinate_is_exact() {
        let (m, ball) = flat_setup();
        let phi = base_coordinate_map(&m, &ball).unwrap();
        assert!(phi.harmonic_residuals()[0] < 1e-10);
        let stats = jacobian_stats(&m, &phi);
        for n in 0..m.len() {
            if stats.valid[n] {
                assert!((stats.lambda[n] - 1.0).abs() < 1e-12);
                assert!((stats.jk[n] - 1.0).abs() < 1e-12);
            }
        }
        let mask = classify_regular(&m, &stats, 1e-6).unwrap();
        assert_eq!(mask.singular_fraction, 0.0);
        let all_singular = classify_regular(&m, &stats, 2.0).unwrap();
        assert_eq!(all_singular.singular_fraction, 1.0);
        let b2 = ball.with_radius(&m, 0.4);
        let cert = certify(&m, &phi, &stats, &b2, 0.2, None).unwrap();
        assert!(cert.psi < 1e-10 && cert.range_ok);
        assert!((cert.sup_grad - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_map_is_rejected() {
        let (m, ball) = flat_setup();
        assert!(matches!(solve_harmonic(&m, &ball, &[]), Err(Error::Precondition(_))));
    }

    #[test]
    fn warped_solution_departs_from_coordinate() {
        let m = build_family(&FamilySpec::warped(0.1, 0.3, 128, 16)).unwrap();
        let p = m.grid().unwrap().flat([96, 0, 0]);
        let ball = geodesic_ball(&m, p, 0.45).unwrap();
        let phi = base_coordinate_map(&m, &ball).unwrap();
        let x = m.base_coordinates(p);
        let dev = ball.interior().iter().map(|&n| (phi.component(0)[n] - x[0][n]).abs()).fold(0.0, f64::max);
        assert!(dev > 1e-3);
        let scale = 0.45 * 128.0 * 128.0;
        assert!(phi.harmonic_residuals()[0] < 1e-8 * scale);
        let stats = jacobian_stats(&m, &phi);
        let cert = certify(&m, &phi, &stats, &ball.with_radius(&m, 0.4), 0.2, None).unwrap();
        assert!(cert.gram_dev > 0.0 && cert.psi.is_finite());
    }

    #[test]
    fn gradient_of_jacobian_density_matches_g() {
        let m = build_family(&FamilySpec::warped(0.2, 0.3, 128, 32)).unwrap();
        let p = m.grid().unwrap().flat([64, 0, 0]);
        let ball = geodesic_ball(&m, p, 0.45).unwrap();
        let phi = base_coordinate_map(&m, &ball).unwrap();
        let stats = jacobian_stats(&m, &phi);
        let mask = classify_regular(&m, &stats, default_threshold(&stats)).unwrap();
        let djk = operators::differential(&m, &stats.jk);
        let g = m.grid().unwrap();
        let node = g.flat([60, 5, 0]);
        let x = [0.7, 3.0, 0.0];
        let lhs = quantity_g(&stats, &mask, node, &x).unwrap();
        let rhs = geom::dot(&djk[node], &x);
        assert!((lhs - rhs).abs() < 1e-3 * rhs.abs().max(1.0), "{lhs} {rhs}");
    }
}
