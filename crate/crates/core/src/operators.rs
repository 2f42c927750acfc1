//! Differential operators under the metric.
//!
//! Sign convention: `Δ = −div ∘ grad`, so the spectrum is nonnegative and the
//! trace of the Hessian equals `−Δf`.

use nalgebra_sparse::CsrMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{self, Mat3, Vec3, ZERO3, ZERO33};
use crate::linalg;
use crate::manifold::{Chart, DiscreteManifold, Grid, TriMesh};

/// Discrete Laplace–Beltrami operator `Δ = W⁻¹S`.
///
/// `S` is the symmetric stiffness matrix of the Dirichlet energy
/// `∫|∇f|² = fᵀSf` and `W` the lumped volume weights.
#[derive(Clone, Debug)]
pub struct Laplacian {
    stiffness: CsrMatrix<f64>,
    mass: Vec<f64>,
}

impl Laplacian {
    pub fn stiffness(&self) -> &CsrMatrix<f64> {
        &self.stiffness
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let mut out = linalg::matvec(&self.stiffness, f);
        for (o, w) in out.iter_mut().zip(&self.mass) {
            *o /= w;
        }
        out
    }

    /// Dirichlet energy `fᵀSf`.
    pub fn energy(&self, f: &[f64]) -> f64 {
        linalg::matvec(&self.stiffness, f)
            .iter()
            .zip(f)
            .map(|(a, b)| a * b)
            .sum()
    }
}

fn midpoint_metric(m: &DiscreteManifold, nodes: &[usize], x: &Vec3) -> Result<(Mat3, f64)> {
    let dim = m.dim();
    let g = match m.analytic() {
        Some(a) => a.metric(x),
        None => {
            let mut g = ZERO33;
            let w = 1.0 / nodes.len() as f64;
            for &n in nodes {
                for i in 0..3 {
                    for j in 0..3 {
                        g[i][j] += w * m.metric(n)[i][j];
                    }
                }
            }
            g
        }
    };
    let det = geom::det(&g, dim);
    let inv = geom::inverse(&g, dim).filter(|_| det > 0.0);
    match inv {
        Some(inv) => Ok((inv, det.sqrt())),
        None => Err(Error::DegenerateMetric { node: nodes[0] }),
    }
}

/// Assembles the Laplace–Beltrami operator of the whole manifold.
pub fn laplacian_matrix(m: &DiscreteManifold) -> Result<Laplacian> {
    let stiffness = match m.chart() {
        Chart::PeriodicGrid(g) => grid_stiffness(m, g)?,
        Chart::TriMesh(mesh) => mesh_stiffness(mesh),
    };
    Ok(Laplacian {
        stiffness,
        mass: m.weights().to_vec(),
    })
}

fn grid_stiffness(m: &DiscreteManifold, g: &Grid) -> Result<CsrMatrix<f64>> {
    let dim = g.ndim();
    let cell = g.cell_volume();
    let per_node: Vec<Vec<(usize, usize, f64)>> = (0..g.len())
        .into_par_iter()
        .map(|node| -> Result<Vec<(usize, usize, f64)>> {
            let x = g.position(node);
            let mut trips = Vec::with_capacity(4 * dim + 16);
            for a in 0..dim {
                let h = g.spacing(a);
                let mut off = [0isize; 3];
                off[a] = 1;
                let j = g.offset(node, off);
                let mut mid = x;
                mid[a] += 0.5 * h;
                let (ginv, sqrtg) = midpoint_metric(m, &[node, j], &mid)?;
                let c = sqrtg * ginv[a][a] * cell / (h * h);
                trips.extend([(node, node, c), (j, j, c), (node, j, -c), (j, node, -c)]);
            }
            for a in 0..dim {
                for b in (a + 1)..dim {
                    if !m.couples(a, b) {
                        continue;
                    }
                    let (ha, hb) = (g.spacing(a), g.spacing(b));
                    let mut oa = [0isize; 3];
                    oa[a] = 1;
                    let mut ob = [0isize; 3];
                    ob[b] = 1;
                    let mut oab = oa;
                    oab[b] = 1;
                    let corners = [node, g.offset(node, oa), g.offset(node, ob), g.offset(node, oab)];
                    let mut mid = x;
                    mid[a] += 0.5 * ha;
                    mid[b] += 0.5 * hb;
                    let (ginv, sqrtg) = midpoint_metric(m, &corners, &mid)?;
                    let kappa = 2.0 * ginv[a][b] * sqrtg * cell;
                    let alpha = [-1.0, 1.0, -1.0, 1.0].map(|v| v / (2.0 * ha));
                    let beta = [-1.0, -1.0, 1.0, 1.0].map(|v| v / (2.0 * hb));
                    for p in 0..4 {
                        for q in 0..4 {
                            let v = 0.5 * kappa * (alpha[p] * beta[q] + beta[p] * alpha[q]);
                            trips.push((corners[p], corners[q], v));
                        }
                    }
                }
            }
            Ok(trips)
        })
        .collect::<Result<_>>()?;
    let trips: Vec<_> = per_node.into_iter().flatten().collect();
    Ok(linalg::from_triplets(g.len(), &trips))
}

fn mesh_stiffness(mesh: &TriMesh) -> CsrMatrix<f64> {
    let mut trips = Vec::with_capacity(9 * mesh.faces().len());
    for (f, tri) in mesh.faces().iter().enumerate() {
        let grads = mesh.hat_gradients(f);
        let area = mesh.face_area(f);
        for p in 0..3 {
            for q in 0..3 {
                trips.push((tri[p], tri[q], area * geom::dot(&grads[p], &grads[q])));
            }
        }
    }
    linalg::from_triplets(mesh.vertices().len(), &trips)
}

/// Chart differential `df` by centered differences (grid only).
fn grid_covector(g: &Grid, f: &[f64], node: usize) -> Vec3 {
    let mut d = ZERO3;
    for (a, da) in d.iter_mut().enumerate().take(g.ndim()) {
        let mut off = [0isize; 3];
        off[a] = 1;
        let p = g.offset(node, off);
        off[a] = -1;
        let q = g.offset(node, off);
        *da = (f[p] - f[q]) / (2.0 * g.spacing(a));
    }
    d
}

fn tangent_projector(n: &Vec3) -> Mat3 {
    let mut p = geom::identity(3);
    for i in 0..3 {
        for j in 0..3 {
            p[i][j] -= n[i] * n[j];
        }
    }
    p
}

fn mesh_vertex_gradients(mesh: &TriMesh, f: &[f64]) -> Vec<Vec3> {
    let face_grads: Vec<Vec3> = (0..mesh.faces().len())
        .map(|fi| {
            let tri = mesh.faces()[fi];
            let hats = mesh.hat_gradients(fi);
            let mut gr = ZERO3;
            for k in 0..3 {
                geom::axpy(&mut gr, f[tri[k]], &hats[k]);
            }
            gr
        })
        .collect();
    (0..mesh.vertices().len())
        .into_par_iter()
        .map(|v| {
            let mut acc = ZERO3;
            let mut wsum = 0.0;
            for &fi in mesh.vertex_faces(v) {
                let w = mesh.face_area(fi);
                geom::axpy(&mut acc, w, &face_grads[fi]);
                wsum += w;
            }
            let avg = geom::scale(&acc, 1.0 / wsum);
            geom::mat_vec(&tangent_projector(&mesh.normal(v)), &avg)
        })
        .collect()
}

/// Metric gradient `∇f = g⁻¹df` (contravariant components; ambient on meshes).
pub fn gradient(m: &DiscreteManifold, f: &[f64]) -> Vec<Vec3> {
    match m.chart() {
        Chart::PeriodicGrid(g) => (0..g.len())
            .into_par_iter()
            .map(|n| geom::mat_vec(m.metric_inv(n), &grid_covector(g, f, n)))
            .collect(),
        Chart::TriMesh(mesh) => mesh_vertex_gradients(mesh, f),
    }
}

/// Differential `df` (covariant components).
pub fn differential(m: &DiscreteManifold, f: &[f64]) -> Vec<Vec3> {
    match m.chart() {
        Chart::PeriodicGrid(g) => (0..g.len())
            .into_par_iter()
            .map(|n| grid_covector(g, f, n))
            .collect(),
        Chart::TriMesh(mesh) => mesh_vertex_gradients(mesh, f),
    }
}

/// Christoffel symbols `Γ^k_ij` at a node: analytic when the family provides
/// them, otherwise centered differences of the nodal metric.
pub fn christoffel(m: &DiscreteManifold, node: usize) -> [Mat3; 3] {
    if let Some(a) = m.analytic() {
        return a.christoffel(&m.position(node));
    }
    let Some(g) = m.grid() else {
        return [ZERO33; 3];
    };
    let dim = g.ndim();
    // dg[c][i][j] = ∂_c g_ij
    let mut dg = [ZERO33; 3];
    for (c, dgc) in dg.iter_mut().enumerate().take(dim) {
        let mut off = [0isize; 3];
        off[c] = 1;
        let p = g.offset(node, off);
        off[c] = -1;
        let q = g.offset(node, off);
        for i in 0..dim {
            for j in 0..dim {
                dgc[i][j] = (m.metric(p)[i][j] - m.metric(q)[i][j]) / (2.0 * g.spacing(c));
            }
        }
    }
    let ginv = m.metric_inv(node);
    let mut gamma = [ZERO33; 3];
    for (k, gk) in gamma.iter_mut().enumerate().take(dim) {
        for i in 0..dim {
            for j in 0..dim {
                gk[i][j] = 0.5
                    * (0..dim)
                        .map(|l| ginv[k][l] * (dg[i][j][l] + dg[j][i][l] - dg[l][i][j]))
                        .sum::<f64>();
            }
        }
    }
    gamma
}

/// Covariant Hessian `∂ᵢ∂ⱼf − Γᵏᵢⱼ∂ₖf` (ambient tangential tensor on meshes).
pub fn hessian(m: &DiscreteManifold, f: &[f64]) -> Vec<Mat3> {
    match m.chart() {
        Chart::PeriodicGrid(g) => (0..g.len())
            .into_par_iter()
            .map(|n| grid_hessian_at(m, g, f, n))
            .collect(),
        Chart::TriMesh(mesh) => {
            let grad = mesh_vertex_gradients(mesh, f);
            let comps: Vec<Vec<Vec3>> = (0..3)
                .map(|c| {
                    let gc: Vec<f64> = grad.iter().map(|v| v[c]).collect();
                    mesh_vertex_gradients(mesh, &gc)
                })
                .collect();
            (0..mesh.vertices().len())
                .map(|v| {
                    let p = tangent_projector(&mesh.normal(v));
                    let mut dgm = ZERO33;
                    for c in 0..3 {
                        dgm[c] = comps[c][v];
                    }
                    let mut h = ZERO33;
                    for i in 0..3 {
                        for j in 0..3 {
                            let mut acc = 0.0;
                            for a in 0..3 {
                                for b in 0..3 {
                                    acc += p[i][a] * dgm[a][b] * p[b][j];
                                }
                            }
                            h[i][j] = acc;
                        }
                    }
                    symmetrize(&h)
                })
                .collect()
        }
    }
}

fn symmetrize(h: &Mat3) -> Mat3 {
    let mut s = ZERO33;
    for i in 0..3 {
        for j in 0..3 {
            s[i][j] = 0.5 * (h[i][j] + h[j][i]);
        }
    }
    s
}

fn grid_hessian_at(m: &DiscreteManifold, g: &Grid, f: &[f64], node: usize) -> Mat3 {
    let dim = g.ndim();
    let at = |off: [isize; 3]| f[g.offset(node, off)];
    let mut h = ZERO33;
    for a in 0..dim {
        let ha = g.spacing(a);
        let mut e = [0isize; 3];
        e[a] = 1;
        let mut me = [0isize; 3];
        me[a] = -1;
        h[a][a] = (at(e) - 2.0 * f[node] + at(me)) / (ha * ha);
        for b in (a + 1)..dim {
            let hb = g.spacing(b);
            let mut pp = [0isize; 3];
            pp[a] = 1;
            pp[b] = 1;
            let mut pm = pp;
            pm[b] = -1;
            let mut mp = pp;
            mp[a] = -1;
            let mut mm = mp;
            mm[b] = -1;
            let v = (at(pp) - at(pm) - at(mp) + at(mm)) / (4.0 * ha * hb);
            h[a][b] = v;
            h[b][a] = v;
        }
    }
    let df = grid_covector(g, f, node);
    let gamma = christoffel(m, node);
    for i in 0..dim {
        for j in 0..dim {
            h[i][j] -= (0..dim).map(|k| gamma[k][i][j] * df[k]).sum::<f64>();
        }
    }
    h
}

/// Pointwise `|X|²_g`.
pub fn vector_norm_sq(m: &DiscreteManifold, v: &[Vec3]) -> Vec<f64> {
    v.iter()
        .enumerate()
        .map(|(n, x)| m.inner(n, x, x).max(0.0))
        .collect()
}

/// Pointwise full g-norm squared of a covariant 2-tensor field.
pub fn tensor_norm_sq(m: &DiscreteManifold, t: &[Mat3]) -> Vec<f64> {
    t.iter()
        .enumerate()
        .map(|(n, h)| geom::tensor_norm_sq(h, m.metric_inv(n)).max(0.0))
        .collect()
}

/// Trace `g^{ij}T_ij`.
pub fn trace(m: &DiscreteManifold, node: usize, t: &Mat3) -> f64 {
    let ginv = m.metric_inv(node);
    let mut acc = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            acc += ginv[i][j] * t[i][j];
        }
    }
    acc
}

/// Volume of a node set.
pub fn volume(m: &DiscreteManifold, region: &[usize]) -> f64 {
    region.iter().map(|&n| m.weights()[n]).sum()
}

/// `∫_region f`.
pub fn integral(m: &DiscreteManifold, f: &[f64], region: &[usize]) -> f64 {
    region.iter().map(|&n| m.weights()[n] * f[n]).sum()
}

/// Volume-weighted mean `⨍_region f`.
pub fn average(m: &DiscreteManifold, f: &[f64], region: &[usize]) -> Result<f64> {
    let vol = volume(m, region);
    if region.is_empty() || !(vol > 0.0) {
        return Err(Error::EmptyRegion);
    }
    Ok(integral(m, f, region) / vol)
}

/// L²-average `(Σ w f² / Σ w)^{1/2}`.
pub fn l2_average(m: &DiscreteManifold, f: &[f64], region: &[usize]) -> Result<f64> {
    let sq: Vec<f64> = f.iter().map(|v| v * v).collect();
    Ok(average(m, &sq, region)?.sqrt())
}

pub fn sup_abs(f: &[f64], region: &[usize]) -> f64 {
    region.iter().map(|&n| f[n].abs()).fold(0.0, f64::max)
}

/// Nodes whose whole derivative stencil lies inside `domain`.
pub fn derivative_valid(m: &DiscreteManifold, domain: &[bool]) -> Vec<bool> {
    (0..m.len())
        .map(|n| domain[n] && m.derivative_support(n).iter().all(|&s| domain[s]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{build_family, FamilySpec};
    use std::f64::consts::PI;

    fn field(m: &DiscreteManifold, f: impl Fn(&Vec3) -> f64) -> Vec<f64> {
        (0..m.len()).map(|n| f(&m.position(n))).collect()
    }

    #[test]
    fn laplacian_of_sine_matches_closed_form() {
        let m = build_family(&FamilySpec::flat(0.1, 256, 32)).unwrap();
        let f = field(&m, |x| (2.0 * PI * x[0]).sin());
        let lap = laplacian_matrix(&m).unwrap().apply(&f);
        let err = lap
            .iter()
            .zip(&f)
            .map(|(l, v)| (l - 4.0 * PI * PI * v).abs())
            .fold(0.0, f64::max);
        // centered second difference: relative error (2πh)²/12
        assert!(err < 4.0 * PI * PI * 1e-4, "{err}");
    }

    #[test]
    fn constants_are_harmonic_and_integral_vanishes() {
        let m = build_family(&FamilySpec::twisted(0.3, 0.5, [8, 8, 16])).unwrap();
        let lap = laplacian_matrix(&m).unwrap();
        let ones = vec![1.0; m.len()];
        assert!(lap.apply(&ones).iter().all(|v| v.abs() < 1e-9));
        let f = field(&m, |x| (2.0 * PI * x[1]).cos() + x[2] * x[0]);
        let lf = lap.apply(&f);
        let all: Vec<usize> = (0..m.len()).collect();
        assert!(integral(&m, &lf, &all).abs() < 1e-10);
    }

    #[test]
    fn gradient_max_on_flat_torus() {
        let m = build_family(&FamilySpec::flat(0.1, 256, 32)).unwrap();
        let f = field(&m, |x| (2.0 * PI * x[0]).sin());
        let n2 = vector_norm_sq(&m, &gradient(&m, &f));
        let max = n2.iter().cloned().fold(0.0, f64::max).sqrt();
        assert!((max - 2.0 * PI).abs() < 2e-3, "{max}");
        let f = field(&m, |x| (2.0 * PI * x[1]).sin());
        let n2 = vector_norm_sq(&m, &gradient(&m, &f));
        let max = n2.iter().cloned().fold(0.0, f64::max).sqrt();
        assert!((max - 2.0 * PI / 0.1).abs() / (2.0 * PI / 0.1) < 1e-2, "{max}");
    }

    #[test]
    fn l2_average_of_sine() {
        let m = build_family(&FamilySpec::flat(0.1, 256, 32)).unwrap();
        let f = field(&m, |x| (2.0 * PI * x[0]).sin());
        let all: Vec<usize> = (0..m.len()).collect();
        assert!((l2_average(&m, &f, &all).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((l2_average(&m, &f, &[5]).unwrap() - f[5].abs()).abs() < 1e-15);
        assert!(matches!(l2_average(&m, &f, &[]), Err(Error::EmptyRegion)));
    }

    #[test]
    fn warped_hessian_of_fiber_coordinate() {
        // f = y: Hess_yy = -Γ^y_yy ∂_y f = 0, Hess_xy = -Γ^y_xy = -w'/w
        let m = build_family(&FamilySpec::warped(0.1, 0.3, 128, 32)).unwrap();
        let f = field(&m, |x| (2.0 * PI * x[1]).sin());
        let h = hessian(&m, &f);
        let g = m.grid().unwrap();
        let n = g.flat([20, 3, 0]);
        let x = g.position(n);
        let w = 1.0 + 0.3 * (2.0 * PI * x[0]).sin();
        let dw = 0.6 * PI * (2.0 * PI * x[0]).cos();
        let fy = 2.0 * PI * (2.0 * PI * x[1]).cos();
        let fyy = -4.0 * PI * PI * (2.0 * PI * x[1]).sin();
        assert!((h[n][0][1] + dw / w * fy).abs() < 1e-2 * fy.abs());
        assert!((h[n][1][1] - fyy).abs() < 1e-2 * fyy.abs().max(1.0));
        assert!(h[n][0][0].abs() < 1e-9);
    }
}
