//! Discrete collapsing Riemannian manifolds.
//!
//! A [`DiscreteManifold`] is either a periodic structured chart carrying a
//! metric tensor per node, or a triangle mesh with the metric induced by its
//! embedding in R³. The built-in families are thin tori whose last chart axis
//! is the collapsing fiber.

mod ball;
mod fiber;
mod off;

pub use ball::{distances_from, geodesic_ball, DistanceField, GeodesicBall};
pub use fiber::{epsilon_proxy, extract_fiber, FiberField, FiberOptions, FiberTrace, Polyline};
pub(crate) use fiber::chart_delta;
pub use off::{read_off, write_off};

use std::f64::consts::PI;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Mat3, Vec3, ZERO3, ZERO33};

/// Minimum node count along a collapsed (fiber) axis.
pub const MIN_FIBER_NODES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    FlatProductTorus,
    WarpedTorus,
    #[serde(rename = "twisted-3-torus")]
    Twisted3Torus,
    ImportedMesh,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub kind: FamilyKind,
    /// Dimension k of the collapsed base.
    pub base_dim: usize,
    /// Fiber scale.
    pub epsilon: f64,
    /// Warp amplitude of the warped torus.
    #[serde(default)]
    pub delta: f64,
    /// Fiber holonomy of the twisted 3-torus, in fiber turns per base loop.
    #[serde(default)]
    pub twist: f64,
    /// Nodes per chart axis; the last axis is the fiber.
    #[serde(default)]
    pub resolution: Vec<usize>,
    /// OFF file for imported meshes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<PathBuf>,
}

impl FamilySpec {
    pub fn flat(epsilon: f64, nx: usize, ny: usize) -> Self {
        Self {
            kind: FamilyKind::FlatProductTorus,
            base_dim: 1,
            epsilon,
            delta: 0.0,
            twist: 0.0,
            resolution: vec![nx, ny],
            mesh: None,
        }
    }

    pub fn warped(epsilon: f64, delta: f64, nx: usize, ny: usize) -> Self {
        Self {
            kind: FamilyKind::WarpedTorus,
            delta,
            ..Self::flat(epsilon, nx, ny)
        }
    }

    pub fn twisted(epsilon: f64, twist: f64, n: [usize; 3]) -> Self {
        Self {
            kind: FamilyKind::Twisted3Torus,
            base_dim: 2,
            epsilon,
            delta: 0.0,
            twist,
            resolution: n.to_vec(),
            mesh: None,
        }
    }

    pub fn manifold_dim(&self) -> usize {
        match self.kind {
            FamilyKind::FlatProductTorus | FamilyKind::WarpedTorus | FamilyKind::ImportedMesh => 2,
            FamilyKind::Twisted3Torus => 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::EpsilonOutOfRange(self.epsilon));
        }
        let m = self.manifold_dim();
        if self.base_dim == 0 || self.base_dim >= m {
            return Err(Error::InvalidSpec(format!(
                "base dimension {} must satisfy 0 < k < m = {m}",
                self.base_dim
            )));
        }
        if self.kind == FamilyKind::ImportedMesh {
            if self.mesh.is_none() {
                return Err(Error::InvalidSpec("imported-mesh needs a mesh path".into()));
            }
            return Ok(());
        }
        let expected_k = m - 1;
        if self.base_dim != expected_k {
            return Err(Error::InvalidSpec(format!(
                "{:?} has base dimension {expected_k}, got {}",
                self.kind, self.base_dim
            )));
        }
        if self.resolution.len() != m {
            return Err(Error::InvalidSpec(format!(
                "resolution needs {m} entries, got {}",
                self.resolution.len()
            )));
        }
        for (axis, &n) in self.resolution.iter().enumerate() {
            let required = if axis + 1 == m { MIN_FIBER_NODES } else { 4 };
            if n < required {
                return Err(Error::UnderResolved {
                    axis,
                    nodes: n,
                    required,
                });
            }
        }
        if self.kind == FamilyKind::WarpedTorus && self.delta.abs() >= 1.0 {
            return Err(Error::InvalidSpec(format!(
                "warp amplitude {} must satisfy |delta| < 1",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Closed-form metrics of the built-in families, in chart coordinates on the
/// unit periodic cube.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AnalyticMetric {
    /// `dx² + ε² dy²`
    Flat { epsilon: f64 },
    /// `dx² + ε² w(x)² dy²`, `w(x) = 1 + δ sin 2πx`
    Warped { epsilon: f64, delta: f64 },
    /// `dx² + dy² + ε² (dz + α dy)²`
    Twisted { epsilon: f64, twist: f64 },
}

impl AnalyticMetric {
    pub fn dim(&self) -> usize {
        match self {
            Self::Flat { .. } | Self::Warped { .. } => 2,
            Self::Twisted { .. } => 3,
        }
    }

    pub fn warp(delta: f64, x: f64) -> f64 {
        1.0 + delta * (2.0 * PI * x).sin()
    }

    pub fn metric(&self, x: &Vec3) -> Mat3 {
        let mut g = ZERO33;
        match *self {
            Self::Flat { epsilon } => {
                g[0][0] = 1.0;
                g[1][1] = epsilon * epsilon;
            }
            Self::Warped { epsilon, delta } => {
                let w = Self::warp(delta, x[0]);
                g[0][0] = 1.0;
                g[1][1] = epsilon * epsilon * w * w;
            }
            Self::Twisted { epsilon, twist } => {
                let e2 = epsilon * epsilon;
                g[0][0] = 1.0;
                g[1][1] = 1.0 + e2 * twist * twist;
                g[1][2] = e2 * twist;
                g[2][1] = e2 * twist;
                g[2][2] = e2;
            }
        }
        g
    }

    /// Christoffel symbols `Γ[k][i][j] = Γ^k_ij`.
    pub fn christoffel(&self, x: &Vec3) -> [Mat3; 3] {
        let mut gamma = [ZERO33; 3];
        if let Self::Warped { epsilon, delta } = *self {
            let w = Self::warp(delta, x[0]);
            let dw = 2.0 * PI * delta * (2.0 * PI * x[0]).cos();
            gamma[0][1][1] = -epsilon * epsilon * w * dw;
            gamma[1][0][1] = dw / w;
            gamma[1][1][0] = dw / w;
        }
        gamma
    }

    /// `max(0, −min Ric)`: the smallest `κ ≥ 0` with `Ric ≥ −κ g`.
    ///
    /// The warped surface has Gauss curvature `−w''/w`, minimized at
    /// `sin 2πx = −1`; the other families are flat.
    pub fn ricci_lower_bound(&self) -> f64 {
        match *self {
            Self::Flat { .. } | Self::Twisted { .. } => 0.0,
            Self::Warped { delta, .. } => 4.0 * PI * PI * delta.abs() / (1.0 - delta.abs()),
        }
    }

    /// Whether the chart coordinates of the base are harmonic functions.
    pub fn base_coordinates_harmonic(&self) -> bool {
        match *self {
            Self::Flat { .. } | Self::Twisted { .. } => true,
            Self::Warped { delta, .. } => delta == 0.0,
        }
    }

    /// Whether the chart pair `(a, b)` carries an off-diagonal metric term.
    pub fn couples(&self, a: usize, b: usize) -> bool {
        matches!(self, Self::Twisted { twist, .. } if *twist != 0.0 && a.min(b) == 1 && a.max(b) == 2)
    }
}

/// Periodic structured chart with uniform spacing.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    ndim: usize,
    dims: [usize; 3],
    periods: [f64; 3],
    strides: [usize; 3],
}

impl Grid {
    pub fn new(dims: &[usize], periods: &[f64]) -> Self {
        assert!(!dims.is_empty() && dims.len() <= 3 && dims.len() == periods.len());
        let ndim = dims.len();
        let mut d = [1usize; 3];
        let mut p = [1.0; 3];
        d[..ndim].copy_from_slice(dims);
        p[..ndim].copy_from_slice(periods);
        let strides = [d[1] * d[2], d[2], 1];
        Self {
            ndim,
            dims: d,
            periods: p,
            strides,
        }
    }

    pub fn ndim(&self) -> usize {
        self.ndim
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims[..self.ndim]
    }

    pub fn periods(&self) -> &[f64] {
        &self.periods[..self.ndim]
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.periods[axis] / self.dims[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.ndim).map(|a| self.spacing(a)).product()
    }

    pub fn multi(&self, node: usize) -> [usize; 3] {
        [
            node / self.strides[0],
            (node / self.strides[1]) % self.dims[1],
            node % self.dims[2],
        ]
    }

    pub fn flat(&self, idx: [usize; 3]) -> usize {
        idx[0] * self.strides[0] + idx[1] * self.strides[1] + idx[2]
    }

    /// Node reached from `node` by an integer offset, with periodic wrap.
    pub fn offset(&self, node: usize, off: [isize; 3]) -> usize {
        let idx = self.multi(node);
        let mut out = [0usize; 3];
        for a in 0..3 {
            let n = self.dims[a] as isize;
            out[a] = (idx[a] as isize + off[a]).rem_euclid(n) as usize;
        }
        self.flat(out)
    }

    pub fn position(&self, node: usize) -> Vec3 {
        let idx = self.multi(node);
        let mut x = ZERO3;
        for a in 0..self.ndim {
            x[a] = idx[a] as f64 * self.spacing(a);
        }
        x
    }

    /// Shortest periodic representative of a coordinate difference.
    pub fn wrap_delta(&self, axis: usize, d: f64) -> f64 {
        let p = self.periods[axis];
        d - p * (d / p).round()
    }

    /// Cell containing `x` (periodic) and the fractional offsets inside it.
    pub fn locate(&self, x: &Vec3) -> ([usize; 3], Vec3) {
        let mut cell = [0usize; 3];
        let mut frac = ZERO3;
        for a in 0..self.ndim {
            let s = x[a] / self.spacing(a);
            let f = s.floor();
            cell[a] = (f as i64).rem_euclid(self.dims[a] as i64) as usize;
            frac[a] = s - f;
        }
        (cell, frac)
    }

    /// Nodes of the cell with lower corner `cell` and their multilinear weights.
    pub fn cell_corners(&self, cell: [usize; 3], frac: &Vec3) -> Vec<(usize, f64)> {
        let corners = 1usize << self.ndim;
        (0..corners)
            .map(|c| {
                let mut off = [0isize; 3];
                let mut w = 1.0;
                for a in 0..self.ndim {
                    let bit = (c >> a) & 1;
                    off[a] = bit as isize;
                    w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                }
                (self.offset(self.flat(cell), off), w)
            })
            .collect()
    }
}

/// Triangle mesh embedded in R³ with per-vertex derived data.
#[derive(Clone, Debug)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    neighbors: Vec<Vec<usize>>,
    vertex_faces: Vec<Vec<usize>>,
    face_areas: Vec<f64>,
    normals: Vec<Vec3>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        let mut neighbors = vec![Vec::new(); n];
        let mut vertex_faces = vec![Vec::new(); n];
        let mut face_areas = Vec::with_capacity(faces.len());
        let mut normals = vec![ZERO3; n];
        for (f, tri) in faces.iter().enumerate() {
            if tri.iter().any(|&v| v >= n) || tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::DegenerateFace { face: f });
            }
            let e1 = geom::sub(&vertices[tri[1]], &vertices[tri[0]]);
            let e2 = geom::sub(&vertices[tri[2]], &vertices[tri[0]]);
            let nrm = geom::cross(&e1, &e2);
            let area = 0.5 * geom::norm(&nrm);
            if !(area > 1e-300) {
                return Err(Error::DegenerateFace { face: f });
            }
            face_areas.push(area);
            for k in 0..3 {
                let v = tri[k];
                vertex_faces[v].push(f);
                geom::axpy(&mut normals[v], 1.0, &nrm);
                for l in 0..3 {
                    if l != k && !neighbors[v].contains(&tri[l]) {
                        neighbors[v].push(tri[l]);
                    }
                }
            }
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
        }
        for nrm in &mut normals {
            let len = geom::norm(nrm);
            if len > 0.0 {
                *nrm = geom::scale(nrm, 1.0 / len);
            }
        }
        Ok(Self {
            vertices,
            faces,
            neighbors,
            vertex_faces,
            face_areas,
            normals,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn vertex_faces(&self, v: usize) -> &[usize] {
        &self.vertex_faces[v]
    }

    pub fn face_area(&self, f: usize) -> f64 {
        self.face_areas[f]
    }

    pub fn normal(&self, v: usize) -> Vec3 {
        self.normals[v]
    }

    pub fn face_normal(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.faces[f];
        let n = geom::cross(
            &geom::sub(&self.vertices[b], &self.vertices[a]),
            &geom::sub(&self.vertices[c], &self.vertices[a]),
        );
        geom::scale(&n, 1.0 / geom::norm(&n))
    }

    /// Gradients of the three P1 hat functions of face `f`.
    pub fn hat_gradients(&self, f: usize) -> [Vec3; 3] {
        let tri = self.faces[f];
        let n = self.face_normal(f);
        let two_area = 2.0 * self.face_areas[f];
        let mut out = [ZERO3; 3];
        for k in 0..3 {
            let a = self.vertices[tri[(k + 1) % 3]];
            let b = self.vertices[tri[(k + 2) % 3]];
            // rotate the opposite edge by 90 degrees in the face plane
            out[k] = geom::scale(&geom::cross(&n, &geom::sub(&b, &a)), 1.0 / two_area);
        }
        out
    }

    /// Lumped vertex areas (one third of each incident face).
    pub fn lumped_areas(&self) -> Vec<f64> {
        let mut areas = vec![0.0; self.vertices.len()];
        for (f, tri) in self.faces.iter().enumerate() {
            for &v in tri {
                areas[v] += self.face_areas[f] / 3.0;
            }
        }
        areas
    }
}

#[derive(Clone, Debug)]
pub enum Chart {
    PeriodicGrid(Grid),
    TriMesh(TriMesh),
}

/// A discrete Riemannian manifold: chart plus metric data per node.
#[derive(Clone, Debug)]
pub struct DiscreteManifold {
    dim: usize,
    base_dim: usize,
    chart: Chart,
    metric: Vec<Mat3>,
    metric_inv: Vec<Mat3>,
    volume_element: Vec<f64>,
    weights: Vec<f64>,
    analytic: Option<AnalyticMetric>,
    family: Option<FamilySpec>,
}

impl DiscreteManifold {
    /// Periodic grid manifold from a metric tensor per node.
    pub fn periodic_grid(grid: Grid, base_dim: usize, metric: Vec<Mat3>) -> Result<Self> {
        Self::grid_inner(grid, base_dim, metric, None, None)
    }

    fn grid_inner(
        grid: Grid,
        base_dim: usize,
        metric: Vec<Mat3>,
        analytic: Option<AnalyticMetric>,
        family: Option<FamilySpec>,
    ) -> Result<Self> {
        let dim = grid.ndim();
        if metric.len() != grid.len() {
            return Err(Error::InvalidSpec(format!(
                "metric has {} entries for {} nodes",
                metric.len(),
                grid.len()
            )));
        }
        let mut metric_inv = Vec::with_capacity(metric.len());
        let mut volume_element = Vec::with_capacity(metric.len());
        for (node, g) in metric.iter().enumerate() {
            let sym_err = (0..dim)
                .flat_map(|i| (0..dim).map(move |j| (i, j)))
                .map(|(i, j)| (g[i][j] - g[j][i]).abs())
                .fold(0.0, f64::max);
            if sym_err > 1e-12 * (1.0 + g[0][0].abs()) || !(geom::min_eigenvalue(g, dim) > 0.0) {
                return Err(Error::DegenerateMetric { node });
            }
            let inv = geom::inverse(g, dim).ok_or(Error::DegenerateMetric { node })?;
            metric_inv.push(inv);
            volume_element.push(geom::det(g, dim).sqrt());
        }
        let cell = grid.cell_volume();
        let weights = volume_element.iter().map(|v| v * cell).collect();
        Ok(Self {
            dim,
            base_dim,
            chart: Chart::PeriodicGrid(grid),
            metric,
            metric_inv,
            volume_element,
            weights,
            analytic,
            family,
        })
    }

    /// Surface mesh with the metric induced by the embedding.
    pub fn from_mesh(mesh: TriMesh, base_dim: usize) -> Result<Self> {
        if base_dim == 0 || base_dim >= 2 {
            return Err(Error::InvalidSpec(format!(
                "surface meshes need base dimension 1, got {base_dim}"
            )));
        }
        let n = mesh.vertices().len();
        let weights = mesh.lumped_areas();
        if let Some(node) = weights.iter().position(|&w| !(w > 0.0)) {
            return Err(Error::DegenerateMetric { node });
        }
        Ok(Self {
            dim: 2,
            base_dim,
            metric: vec![geom::identity(3); n],
            metric_inv: vec![geom::identity(3); n],
            volume_element: weights.clone(),
            weights,
            chart: Chart::TriMesh(mesh),
            analytic: None,
            family: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    /// Number of coordinates carried by vectors and tensors: the chart
    /// dimension on grids, 3 (ambient) on meshes.
    pub fn coord_dim(&self) -> usize {
        match &self.chart {
            Chart::PeriodicGrid(g) => g.ndim(),
            Chart::TriMesh(_) => 3,
        }
    }

    pub fn len(&self) -> usize {
        self.metric.len()
    }

    pub fn is_empty(&self) -> bool {
        self.metric.is_empty()
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn grid(&self) -> Option<&Grid> {
        match &self.chart {
            Chart::PeriodicGrid(g) => Some(g),
            Chart::TriMesh(_) => None,
        }
    }

    pub fn mesh(&self) -> Option<&TriMesh> {
        match &self.chart {
            Chart::TriMesh(m) => Some(m),
            Chart::PeriodicGrid(_) => None,
        }
    }

    pub fn metric(&self, node: usize) -> &Mat3 {
        &self.metric[node]
    }

    pub fn metric_inv(&self, node: usize) -> &Mat3 {
        &self.metric_inv[node]
    }

    pub fn volume_element(&self, node: usize) -> f64 {
        self.volume_element[node]
    }

    /// Volume weight of each node (lumped mass).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_volume(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn analytic(&self) -> Option<&AnalyticMetric> {
        self.analytic.as_ref()
    }

    pub fn family(&self) -> Option<&FamilySpec> {
        self.family.as_ref()
    }

    /// Chart (grid) or ambient (mesh) coordinates of a node.
    pub fn position(&self, node: usize) -> Vec3 {
        match &self.chart {
            Chart::PeriodicGrid(g) => g.position(node),
            Chart::TriMesh(m) => m.vertices()[node],
        }
    }

    /// `g(a, b)` at a node.
    pub fn inner(&self, node: usize, a: &Vec3, b: &Vec3) -> f64 {
        geom::quad(&self.metric[node], a, b)
    }

    pub fn norm(&self, node: usize, a: &Vec3) -> f64 {
        self.inner(node, a, a).max(0.0).sqrt()
    }

    /// Metric at an arbitrary chart point: analytic when available, otherwise
    /// multilinear interpolation of the node tensors.
    pub fn metric_at(&self, x: &Vec3) -> Mat3 {
        if let Some(a) = &self.analytic {
            return a.metric(x);
        }
        match &self.chart {
            Chart::PeriodicGrid(g) => {
                let (cell, frac) = g.locate(x);
                let mut out = ZERO33;
                for (node, w) in g.cell_corners(cell, &frac) {
                    for i in 0..3 {
                        for j in 0..3 {
                            out[i][j] += w * self.metric[node][i][j];
                        }
                    }
                }
                out
            }
            Chart::TriMesh(_) => geom::identity(3),
        }
    }

    /// Whether the discrete Laplacian couples chart axes `a` and `b`.
    pub fn couples(&self, a: usize, b: usize) -> bool {
        if let Some(an) = &self.analytic {
            return an.couples(a, b);
        }
        self.metric.iter().any(|g| g[a][b] != 0.0)
    }

    /// Neighbors in the sparsity pattern of the discrete Laplacian.
    pub fn stencil_neighbors(&self, node: usize) -> Vec<usize> {
        match &self.chart {
            Chart::PeriodicGrid(g) => {
                let m = g.ndim();
                let mut out = Vec::with_capacity(2 * m + 4);
                for a in 0..m {
                    for s in [-1isize, 1] {
                        let mut off = [0isize; 3];
                        off[a] = s;
                        out.push(g.offset(node, off));
                    }
                }
                for a in 0..m {
                    for b in (a + 1)..m {
                        if self.couples(a, b) {
                            for sa in [-1isize, 1] {
                                for sb in [-1isize, 1] {
                                    let mut off = [0isize; 3];
                                    off[a] = sa;
                                    off[b] = sb;
                                    out.push(g.offset(node, off));
                                }
                            }
                        }
                    }
                }
                out.sort_unstable();
                out.dedup();
                out.retain(|&n| n != node);
                out
            }
            Chart::TriMesh(mesh) => mesh.neighbors(node).to_vec(),
        }
    }

    /// Nodes whose values enter first and second derivatives at `node`.
    pub fn derivative_support(&self, node: usize) -> Vec<usize> {
        match &self.chart {
            Chart::PeriodicGrid(g) => {
                let m = g.ndim();
                let count = 3usize.pow(m as u32);
                let mut out = Vec::with_capacity(count);
                for c in 0..count {
                    let mut off = [0isize; 3];
                    let mut rest = c;
                    for o in off.iter_mut().take(m) {
                        *o = (rest % 3) as isize - 1;
                        rest /= 3;
                    }
                    out.push(g.offset(node, off));
                }
                out
            }
            Chart::TriMesh(mesh) => {
                let mut out = vec![node];
                for &v in mesh.neighbors(node) {
                    out.push(v);
                    out.extend_from_slice(mesh.neighbors(v));
                }
                out.sort_unstable();
                out.dedup();
                out
            }
        }
    }

    /// Physical length of the shortest base-axis loop; balls must stay below
    /// half of it to remain embedded in the chart.
    pub fn min_base_period(&self) -> f64 {
        match &self.chart {
            Chart::PeriodicGrid(g) => (0..self.base_dim)
                .map(|a| {
                    let h = g.spacing(a);
                    let mut worst = f64::INFINITY;
                    // loops through every transverse offset; take the shortest
                    let mut len_by_line = std::collections::BTreeMap::new();
                    for node in 0..g.len() {
                        let mut key = g.multi(node);
                        key[a] = 0;
                        *len_by_line.entry(key).or_insert(0.0) += h * self.metric[node][a][a].sqrt();
                    }
                    for len in len_by_line.values() {
                        worst = f64::min(worst, *len);
                    }
                    worst
                })
                .fold(f64::INFINITY, f64::min),
            Chart::TriMesh(_) => f64::INFINITY,
        }
    }

    /// The chart coordinates of the base axes measured from `center`,
    /// wrapped into the half-open period around it.
    pub fn base_coordinates(&self, center: usize) -> Vec<Vec<f64>> {
        let c = self.position(center);
        match &self.chart {
            Chart::PeriodicGrid(g) => (0..self.base_dim)
                .map(|a| {
                    (0..self.len())
                        .map(|n| g.wrap_delta(a, g.position(n)[a] - c[a]))
                        .collect()
                })
                .collect(),
            Chart::TriMesh(_) => (0..self.base_dim)
                .map(|a| (0..self.len()).map(|n| self.position(n)[a] - c[a]).collect())
                .collect(),
        }
    }
}

/// Builds a built-in collapsing family, or loads an imported mesh.
pub fn build_family(spec: &FamilySpec) -> Result<DiscreteManifold> {
    spec.validate()?;
    let analytic = match spec.kind {
        FamilyKind::FlatProductTorus => AnalyticMetric::Flat {
            epsilon: spec.epsilon,
        },
        FamilyKind::WarpedTorus => AnalyticMetric::Warped {
            epsilon: spec.epsilon,
            delta: spec.delta,
        },
        FamilyKind::Twisted3Torus => AnalyticMetric::Twisted {
            epsilon: spec.epsilon,
            twist: spec.twist,
        },
        FamilyKind::ImportedMesh => {
            let path = spec.mesh.as_ref().expect("validated");
            let mesh = read_off(path)?;
            let mut m = DiscreteManifold::from_mesh(mesh, spec.base_dim)?;
            m.family = Some(spec.clone());
            return Ok(m);
        }
    };
    let m = analytic.dim();
    let grid = Grid::new(&spec.resolution, &vec![1.0; m]);
    let metric = (0..grid.len()).map(|n| analytic.metric(&grid.position(n))).collect();
    DiscreteManifold::grid_inner(grid, m - 1, metric, Some(analytic), Some(spec.clone()))
}
