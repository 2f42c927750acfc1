//! Level sets of maps `M → ℝᵏ` with one-dimensional fibers.
//!
//! Two-dimensional grids and surface meshes use marching squares/triangles;
//! three-dimensional grids trace the curve along the kernel of the map's
//! differential with Newton reprojection onto the level.

use std::collections::HashMap;

use super::{Chart, DiscreteManifold, GeodesicBall, Grid, TriMesh};
use crate::error::{Error, Result};
use crate::geom::{self, Vec3, ZERO3};

/// Nodal data of a map and the set where it may be traced.
#[derive(Clone, Copy, Debug)]
pub struct FiberField<'a> {
    pub components: &'a [Vec<f64>],
    /// Nodes where the map and its first derivatives are defined.
    pub domain: &'a [bool],
    /// Least eigenvalue of the Jacobian Gram matrix per node.
    pub lambda: &'a [f64],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FiberOptions {
    pub level_tolerance: f64,
    pub lambda_threshold: f64,
    /// Number of levels per base axis sampled by [`epsilon_proxy`].
    pub levels: usize,
}

impl Default for FiberOptions {
    fn default() -> Self {
        Self {
            level_tolerance: 1e-8,
            lambda_threshold: 0.0,
            levels: 17,
        }
    }
}

/// One connected piece of a level set. Grid points are unwrapped chart
/// coordinates, mesh points are ambient coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Polyline {
    pub points: Vec<Vec3>,
    pub closed: bool,
}

#[derive(Clone, Debug)]
pub struct FiberTrace {
    pub level: Vec<f64>,
    pub pieces: Vec<Polyline>,
    pub regular: bool,
    /// Metric length summed over pieces.
    pub length: f64,
    /// Intrinsic diameter of the largest piece (half the length of a loop).
    pub diameter: f64,
    /// Nodes of the cells the level set crosses.
    pub support: Vec<usize>,
}

impl FiberTrace {
    pub fn samples(&self) -> impl Iterator<Item = &Vec3> {
        self.pieces.iter().flat_map(|p| p.points.iter())
    }

    /// Dijkstra seeds: support nodes with their metric distance to the
    /// nearest sample.
    pub fn seeds(&self, m: &DiscreteManifold) -> Vec<(usize, f64)> {
        let pts: Vec<Vec3> = self.samples().copied().collect();
        self.support
            .iter()
            .map(|&n| {
                let x = m.position(n);
                let d = pts
                    .iter()
                    .map(|p| {
                        let delta = chart_delta(m, p, &x);
                        m.norm(n, &delta)
                    })
                    .fold(f64::INFINITY, f64::min);
                (n, d)
            })
            .collect()
    }
}

/// `b − a`, wrapped on periodic charts.
pub(crate) fn chart_delta(m: &DiscreteManifold, a: &Vec3, b: &Vec3) -> Vec3 {
    let mut d = geom::sub(b, a);
    if let Some(g) = m.grid() {
        for (axis, v) in d.iter_mut().enumerate().take(g.ndim()) {
            *v = g.wrap_delta(axis, *v);
        }
    }
    d
}

fn curve_length(m: &DiscreteManifold, pts: &[Vec3]) -> f64 {
    pts.windows(2)
        .map(|w| {
            let d = geom::sub(&w[1], &w[0]);
            let mid = geom::add(&w[0], &geom::scale(&d, 0.5));
            let g = m.metric_at(&mid);
            geom::quad(&g, &d, &d).max(0.0).sqrt()
        })
        .sum()
}

/// Extracts `Φ⁻¹(level)` inside the field's domain.
pub fn extract_fiber(
    m: &DiscreteManifold,
    field: &FiberField,
    level: &[f64],
    opts: &FiberOptions,
) -> Result<FiberTrace> {
    let k = field.components.len();
    if k == 0 || level.len() != k {
        return Err(Error::Precondition(format!(
            "level has {} entries for a map with {k} components",
            level.len()
        )));
    }
    if m.dim() != k + 1 {
        return Err(Error::Unsupported(format!(
            "fibers of dimension {} (only curves are traced)",
            m.dim() - k
        )));
    }
    for (a, comp) in field.components.iter().enumerate() {
        let (lo, hi) = comp
            .iter()
            .zip(field.domain)
            .filter(|(_, &d)| d)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&v, _)| (lo.min(v), hi.max(v)));
        if !(level[a] >= lo && level[a] <= hi) {
            return Err(Error::LevelOutOfRange { level: level.to_vec() });
        }
    }
    let (pieces, support) = match m.chart() {
        Chart::PeriodicGrid(g) if k == 1 => march_grid(g, field, level[0]),
        Chart::TriMesh(mesh) => march_mesh(mesh, field, level[0]),
        Chart::PeriodicGrid(g) => trace_curve(m, g, field, level, opts)?,
    };
    if pieces.is_empty() {
        return Err(Error::LevelOutOfRange { level: level.to_vec() });
    }
    let mut length = 0.0;
    let mut diameter: f64 = 0.0;
    for p in &pieces {
        let l = curve_length(m, &p.points);
        length += l;
        diameter = diameter.max(if p.closed { 0.5 * l } else { l });
    }
    let regular = pieces.iter().all(|p| p.closed)
        && support
            .iter()
            .all(|&n| field.domain[n] && field.lambda[n] > opts.lambda_threshold);
    Ok(FiberTrace {
        level: level.to_vec(),
        pieces,
        regular,
        length,
        diameter,
        support,
    })
}

/// Chains segments joined at shared edge ids into polylines.
fn link_segments(
    segments: &[(usize, usize)],
    point: &dyn Fn(usize) -> Vec3,
    unwrap: &dyn Fn(&Vec3, &Vec3) -> Vec3,
) -> Vec<Polyline> {
    let mut by_edge: HashMap<usize, Vec<usize>> = HashMap::new();
    for (s, &(a, b)) in segments.iter().enumerate() {
        by_edge.entry(a).or_default().push(s);
        by_edge.entry(b).or_default().push(s);
    }
    let mut used = vec![false; segments.len()];
    let mut out = Vec::new();

    let walk = |start_seg: usize, start_edge: usize, used: &mut Vec<bool>| -> Polyline {
        let mut pts = vec![point(start_edge)];
        let mut seg = start_seg;
        let mut edge = start_edge;
        loop {
            used[seg] = true;
            let (a, b) = segments[seg];
            let next = if a == edge { b } else { a };
            let prev = *pts.last().unwrap();
            pts.push(unwrap(&prev, &point(next)));
            edge = next;
            if edge == start_edge {
                return Polyline { points: pts, closed: true };
            }
            match by_edge[&edge].iter().find(|&&s| !used[s]) {
                Some(&s) => seg = s,
                None => return Polyline { points: pts, closed: false },
            }
        }
    };

    // open chains first, starting at their loose ends
    let mut ends: Vec<usize> = by_edge
        .iter()
        .filter(|(_, segs)| segs.len() == 1)
        .map(|(&e, _)| e)
        .collect();
    ends.sort_unstable();
    for e in ends {
        let s = by_edge[&e][0];
        if !used[s] {
            out.push(walk(s, e, &mut used));
        }
    }
    for s in 0..segments.len() {
        if !used[s] {
            out.push(walk(s, segments[s].0, &mut used));
        }
    }
    out
}

fn march_grid(g: &Grid, field: &FiberField, v: f64) -> (Vec<Polyline>, Vec<usize>) {
    let f = &field.components[0];
    let above = |n: usize| f[n] > v;
    let edge_point = |id: usize| -> Vec3 {
        let node = id / 2;
        let axis = id % 2;
        let mut off = [0isize; 3];
        off[axis] = 1;
        let other = g.offset(node, off);
        let t = (v - f[node]) / (f[other] - f[node]);
        let mut x = g.position(node);
        x[axis] += t * g.spacing(axis);
        x
    };
    let mut segments = Vec::new();
    let mut support = Vec::new();
    for n in 0..g.len() {
        let c = [
            n,
            g.offset(n, [1, 0, 0]),
            g.offset(n, [1, 1, 0]),
            g.offset(n, [0, 1, 0]),
        ];
        if !c.iter().all(|&x| field.domain[x]) {
            continue;
        }
        let up = c.map(above);
        // edges: bottom, right, top, left
        let edges = [2 * c[0], 2 * c[1] + 1, 2 * c[3], 2 * c[0] + 1];
        let crossed: Vec<usize> = (0..4).filter(|&e| up[e] != up[(e + 1) % 4]).collect();
        match crossed.len() {
            0 => continue,
            2 => segments.push((edges[crossed[0]], edges[crossed[1]])),
            _ => {
                let center = 0.25 * c.iter().map(|&x| f[x]).sum::<f64>() > v;
                // cut off the corners whose side differs from the center
                for corner in 0..4 {
                    if up[corner] != center {
                        segments.push((edges[(corner + 3) % 4], edges[corner]));
                    }
                }
            }
        }
        support.extend_from_slice(&c);
    }
    support.sort_unstable();
    support.dedup();
    let unwrap = |prev: &Vec3, raw: &Vec3| -> Vec3 {
        let mut x = *raw;
        for a in 0..2 {
            x[a] = prev[a] + g.wrap_delta(a, raw[a] - prev[a]);
        }
        x
    };
    (link_segments(&segments, &edge_point, &unwrap), support)
}

fn march_mesh(mesh: &TriMesh, field: &FiberField, v: f64) -> (Vec<Polyline>, Vec<usize>) {
    let f = &field.components[0];
    let mut ids: HashMap<(usize, usize), usize> = HashMap::new();
    let mut edge_nodes: Vec<(usize, usize)> = Vec::new();
    let mut segments = Vec::new();
    let mut support = Vec::new();
    for tri in mesh.faces() {
        if !tri.iter().all(|&x| field.domain[x]) {
            continue;
        }
        let mut crossed = Vec::with_capacity(2);
        for e in 0..3 {
            let (a, b) = (tri[e], tri[(e + 1) % 3]);
            if (f[a] > v) != (f[b] > v) {
                let key = (a.min(b), a.max(b));
                let next = edge_nodes.len();
                let id = *ids.entry(key).or_insert(next);
                if id == next {
                    edge_nodes.push(key);
                }
                crossed.push(id);
            }
        }
        if crossed.len() == 2 {
            segments.push((crossed[0], crossed[1]));
            support.extend_from_slice(tri);
        }
    }
    support.sort_unstable();
    support.dedup();
    let verts = mesh.vertices();
    let point = |id: usize| -> Vec3 {
        let (a, b) = edge_nodes[id];
        let t = (v - f[a]) / (f[b] - f[a]);
        geom::add(&verts[a], &geom::scale(&geom::sub(&verts[b], &verts[a]), t))
    };
    let same = |_: &Vec3, raw: &Vec3| *raw;
    (link_segments(&segments, &point, &same), support)
}

fn trace_curve(
    m: &DiscreteManifold,
    g: &Grid,
    field: &FiberField,
    level: &[f64],
    opts: &FiberOptions,
) -> Result<(Vec<Polyline>, Vec<usize>)> {
    if field.components.len() != 2 || g.ndim() != 3 {
        return Err(Error::Unsupported("curve tracing needs a 3D grid and two components".into()));
    }
    let n = g.len();
    // chart covectors by centered differences where the stencil is in the domain
    let mut dphi = vec![[ZERO3; 2]; n];
    let mut dvalid = vec![false; n];
    for node in 0..n {
        if !field.domain[node] {
            continue;
        }
        let mut ok = true;
        for axis in 0..3 {
            let mut off = [0isize; 3];
            off[axis] = 1;
            let p = g.offset(node, off);
            off[axis] = -1;
            let q = g.offset(node, off);
            ok &= field.domain[p] && field.domain[q];
            for a in 0..2 {
                let f = &field.components[a];
                dphi[node][a][axis] = (f[p] - f[q]) / (2.0 * g.spacing(axis));
            }
        }
        dvalid[node] = ok;
    }
    let cell_ok = |x: &Vec3| -> bool {
        let (cell, frac) = g.locate(x);
        g.cell_corners(cell, &frac).iter().all(|&(c, _)| dvalid[c])
    };
    let eval = |x: &Vec3| -> ([f64; 2], [Vec3; 2]) {
        let (cell, frac) = g.locate(x);
        let mut val = [0.0; 2];
        let mut d = [ZERO3; 2];
        for (c, w) in g.cell_corners(cell, &frac) {
            for a in 0..2 {
                val[a] += w * field.components[a][c];
                geom::axpy(&mut d[a], w, &dphi[c][a]);
            }
        }
        (val, d)
    };
    let project = |x: &Vec3| -> Option<Vec3> {
        let mut x = *x;
        for _ in 0..12 {
            if !cell_ok(&x) {
                return None;
            }
            let (val, d) = eval(&x);
            let r = [val[0] - level[0], val[1] - level[1]];
            if r[0].abs().max(r[1].abs()) <= 0.01 * opts.level_tolerance {
                return Some(x);
            }
            // minimum-norm correction: x -= Dᵀ (D Dᵀ)⁻¹ r
            let a = geom::dot(&d[0], &d[0]);
            let b = geom::dot(&d[0], &d[1]);
            let c = geom::dot(&d[1], &d[1]);
            let det = a * c - b * b;
            if !(det.abs() > 1e-300) {
                return None;
            }
            let y0 = (c * r[0] - b * r[1]) / det;
            let y1 = (a * r[1] - b * r[0]) / det;
            geom::axpy(&mut x, -y0, &d[0]);
            geom::axpy(&mut x, -y1, &d[1]);
        }
        let (val, _) = eval(&x);
        ((val[0] - level[0]).abs().max((val[1] - level[1]).abs()) <= opts.level_tolerance).then_some(x)
    };
    let tangent = |x: &Vec3| -> Vec3 {
        let (_, d) = eval(x);
        let t = geom::cross(&d[0], &d[1]);
        let len = geom::norm(&t);
        if len > 0.0 {
            geom::scale(&t, 1.0 / len)
        } else {
            ZERO3
        }
    };

    // seed: domain node nearest to the level in value space
    let seed = (0..n)
        .filter(|&i| dvalid[i])
        .min_by(|&i, &j| {
            let di = (field.components[0][i] - level[0]).hypot(field.components[1][i] - level[1]);
            let dj = (field.components[0][j] - level[0]).hypot(field.components[1][j] - level[1]);
            di.total_cmp(&dj).then(i.cmp(&j))
        })
        .ok_or(Error::LevelOutOfRange { level: level.to_vec() })?;
    let start = project(&g.position(seed)).ok_or(Error::LevelOutOfRange { level: level.to_vec() })?;

    let step = 0.5 * (0..3).map(|a| g.spacing(a)).fold(f64::INFINITY, f64::min);
    let mut pts = vec![start];
    let mut closed = false;
    let mut x = start;
    let max_steps = 20 * (0..3).map(|a| g.dims()[a]).sum::<usize>();
    let mut travelled = 0.0;
    for _ in 0..max_steps {
        let t0 = tangent(&x);
        let mid = geom::add(&x, &geom::scale(&t0, 0.5 * step));
        let mut t1 = tangent(&mid);
        if geom::dot(&t1, &t0) < 0.0 {
            t1 = geom::scale(&t1, -1.0);
        }
        let guess = geom::add(&x, &geom::scale(&t1, step));
        let Some(next) = project(&guess) else { break };
        travelled += geom::norm(&geom::sub(&next, &x));
        let back = chart_delta(m, &next, &start);
        if travelled > 3.0 * step && geom::norm(&back) < 0.75 * step {
            pts.push(geom::add(&next, &back));
            closed = true;
            break;
        }
        pts.push(next);
        x = next;
    }

    let mut support = Vec::new();
    for p in &pts {
        let (cell, frac) = g.locate(p);
        support.extend(g.cell_corners(cell, &frac).into_iter().map(|(c, _)| c));
    }
    support.sort_unstable();
    support.dedup();
    Ok((vec![Polyline { points: pts, closed }], support))
}

/// Measured collapse scale: the largest regular-fiber diameter over the
/// levels sampled on the ball, divided by `2r`.
pub fn epsilon_proxy(
    m: &DiscreteManifold,
    ball: &GeodesicBall,
    field: &FiberField,
    opts: &FiberOptions,
) -> Result<f64> {
    let k = field.components.len();
    let members = ball.members();
    if members.is_empty() || ball.radius() <= 0.0 {
        return Err(Error::EmptyRegion);
    }
    let levels: Vec<Vec<f64>> = if k == 1 {
        let f = &field.components[0];
        let (lo, hi) = members
            .iter()
            .map(|&n| f[n])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let nudge = 1e-9 * (hi - lo).max(f64::MIN_POSITIVE);
        let count = opts.levels.max(2);
        let mut out: Vec<Vec<f64>> = (0..count)
            .map(|i| vec![lo + (hi - lo) * i as f64 / (count - 1) as f64])
            .collect();
        out[0][0] = lo + nudge;
        out[count - 1][0] = hi - nudge;
        out
    } else {
        let stride = (members.len() / (opts.levels * opts.levels).max(1)).max(1);
        members
            .iter()
            .step_by(stride)
            .map(|&n| field.components.iter().map(|c| c[n]).collect())
            .collect()
    };
    let sampled = levels.len();
    let mut best: Option<f64> = None;
    for lv in &levels {
        if let Ok(trace) = extract_fiber(m, field, lv, opts) {
            if trace.regular {
                best = Some(best.map_or(trace.diameter, |b: f64| b.max(trace.diameter)));
            }
        }
    }
    best.map(|d| d / (2.0 * ball.radius()))
        .ok_or(Error::NoRegularFiber { sampled })
}
