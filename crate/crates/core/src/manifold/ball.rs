use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{Chart, DiscreteManifold};
use crate::error::{Error, Result};
use crate::geom::{self, Vec3};

/// Graph distances under the metric from a set of seed nodes.
#[derive(Clone, Debug)]
pub struct DistanceField {
    dist: Vec<f64>,
}

impl DistanceField {
    pub fn get(&self, node: usize) -> f64 {
        self.dist[node]
    }

    pub fn values(&self) -> &[f64] {
        &self.dist
    }

    /// Nodes within distance `r`, ascending by index.
    pub fn within(&self, r: f64) -> Vec<usize> {
        (0..self.dist.len()).filter(|&n| self.dist[n] <= r).collect()
    }
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Primitive lattice steps with components in `-2..=2`.
fn lattice_steps(ndim: usize) -> Vec<[isize; 3]> {
    fn gcd(a: isize, b: isize) -> isize {
        if b == 0 {
            a.abs()
        } else {
            gcd(b, a % b)
        }
    }
    let mut out = Vec::new();
    let range = |a: usize| if a < ndim { -2..=2isize } else { 0..=0isize };
    for i in range(0) {
        for j in range(1) {
            for k in range(2) {
                if gcd(gcd(i, j), k) == 1 {
                    out.push([i, j, k]);
                }
            }
        }
    }
    out
}

/// Dijkstra distances from `seeds` (node, initial distance).
///
/// Grid edges join each node to its primitive lattice neighbors within two
/// cells, with length measured by the metric at the edge midpoint. Mesh edges
/// carry their Euclidean length.
pub fn distances_from(m: &DiscreteManifold, seeds: &[(usize, f64)]) -> DistanceField {
    let n = m.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    for &(s, d0) in seeds {
        if d0 < dist[s] {
            dist[s] = d0;
            heap.push(Entry(d0, s));
        }
    }
    match m.chart() {
        Chart::PeriodicGrid(grid) => {
            let steps: Vec<([isize; 3], Vec3)> = lattice_steps(grid.ndim())
                .into_iter()
                .map(|s| {
                    let mut d = [0.0; 3];
                    for a in 0..grid.ndim() {
                        d[a] = s[a] as f64 * grid.spacing(a);
                    }
                    (s, d)
                })
                .collect();
            while let Some(Entry(d, u)) = heap.pop() {
                if d > dist[u] {
                    continue;
                }
                let x = grid.position(u);
                for (s, delta) in &steps {
                    let v = grid.offset(u, *s);
                    let mid = geom::add(&x, &geom::scale(delta, 0.5));
                    let g = m.metric_at(&mid);
                    let len = geom::quad(&g, delta, delta).sqrt();
                    let nd = d + len;
                    if nd < dist[v] {
                        dist[v] = nd;
                        heap.push(Entry(nd, v));
                    }
                }
            }
        }
        Chart::TriMesh(mesh) => {
            while let Some(Entry(d, u)) = heap.pop() {
                if d > dist[u] {
                    continue;
                }
                for &v in mesh.neighbors(u) {
                    let nd = d + geom::norm(&geom::sub(&mesh.vertices()[v], &mesh.vertices()[u]));
                    if nd < dist[v] {
                        dist[v] = nd;
                        heap.push(Entry(nd, v));
                    }
                }
            }
        }
    }
    DistanceField { dist }
}

/// Ball `B(p, r)` in graph distance, with its boundary layer.
#[derive(Clone, Debug)]
pub struct GeodesicBall {
    center: usize,
    radius: f64,
    members: Vec<usize>,
    boundary: Vec<usize>,
    inside: Vec<bool>,
    distance: Vec<f64>,
}

impl GeodesicBall {
    /// Ball read off a precomputed distance field without the cut-locus check.
    pub fn from_field(m: &DiscreteManifold, field: &DistanceField, center: usize, radius: f64) -> Self {
        let members = field.within(radius);
        let mut inside = vec![false; m.len()];
        for &n in &members {
            inside[n] = true;
        }
        let boundary = members
            .iter()
            .copied()
            .filter(|&n| m.stencil_neighbors(n).iter().any(|&nb| !inside[nb]))
            .collect();
        Self {
            center,
            radius,
            members,
            boundary,
            inside,
            distance: field.values().to_vec(),
        }
    }

    pub fn center(&self) -> usize {
        self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    /// Members that are not boundary nodes.
    pub fn interior(&self) -> Vec<usize> {
        let mut on_boundary = vec![false; self.inside.len()];
        for &b in &self.boundary {
            on_boundary[b] = true;
        }
        self.members.iter().copied().filter(|&n| !on_boundary[n]).collect()
    }

    pub fn contains(&self, node: usize) -> bool {
        self.inside[node]
    }

    pub fn mask(&self) -> &[bool] {
        &self.inside
    }

    /// Graph distance from the center (defined on every node).
    pub fn distance(&self, node: usize) -> f64 {
        self.distance[node]
    }

    pub fn distances(&self) -> &[f64] {
        &self.distance
    }

    pub fn volume(&self, m: &DiscreteManifold) -> f64 {
        self.members.iter().map(|&n| m.weights()[n]).sum()
    }

    /// Concentric ball of another radius sharing this distance field.
    pub fn with_radius(&self, m: &DiscreteManifold, radius: f64) -> Self {
        Self::from_field(m, &DistanceField { dist: self.distance.clone() }, self.center, radius)
    }
}

/// `B(p, r)`; radii reaching half the shortest base loop are rejected.
pub fn geodesic_ball(m: &DiscreteManifold, p: usize, r: f64) -> Result<GeodesicBall> {
    if p >= m.len() {
        return Err(Error::InvalidSpec(format!("center node {p} out of range")));
    }
    if !(r >= 0.0) {
        return Err(Error::InvalidSpec(format!("negative radius {r}")));
    }
    let limit = 0.5 * m.min_base_period();
    if r >= limit {
        return Err(Error::CutLocus { radius: r, limit });
    }
    let field = distances_from(m, &[(p, 0.0)]);
    Ok(GeodesicBall::from_field(m, &field, p, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{build_family, FamilySpec};

    #[test]
    fn lattice_step_counts() {
        assert_eq!(lattice_steps(2).len(), 16);
        assert_eq!(lattice_steps(3).len(), 98);
    }

    #[test]
    fn zero_radius_is_the_center() {
        let m = build_family(&FamilySpec::flat(0.1, 64, 16)).unwrap();
        let b = geodesic_ball(&m, 100, 0.0).unwrap();
        assert_eq!(b.members(), &[100]);
        assert_eq!(b.boundary(), &[100]);
    }

    #[test]
    fn cut_locus_is_rejected() {
        let m = build_family(&FamilySpec::flat(0.1, 64, 16)).unwrap();
        assert!(matches!(geodesic_ball(&m, 0, 0.5), Err(Error::CutLocus { .. })));
        assert!(geodesic_ball(&m, 0, 0.49).is_ok());
    }

    #[test]
    fn axis_distances_are_exact_on_flat_torus() {
        let m = build_family(&FamilySpec::flat(0.1, 64, 16)).unwrap();
        let f = distances_from(&m, &[(0, 0.0)]);
        let g = m.grid().unwrap();
        assert!((f.get(g.flat([8, 0, 0])) - 0.125).abs() < 1e-14);
        assert!((f.get(g.flat([0, 8, 0])) - 0.05).abs() < 1e-14);
    }
}
