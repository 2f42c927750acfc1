//! Laplace eigenpairs by shift-invert block Krylov iteration, and the
//! gradient-to-sup ratio of a function on concentric balls.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use nalgebra_sparse::CsrMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{self, Cholesky};
use crate::manifold::{DiscreteManifold, GeodesicBall};
use crate::operators::{self, laplacian_matrix};

/// `Δu = θu` with `‖u‖_{L̄²} = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenPair {
    pub theta: f64,
    pub u: Vec<f64>,
    /// `‖Δu − θu‖_{L̄²}`.
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenOptions {
    pub count: usize,
    #[serde(default)]
    pub theta_max: Option<f64>,
    #[serde(default = "default_shift")]
    pub shift: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_restarts")]
    pub max_restarts: usize,
}

fn default_shift() -> f64 {
    1.0
}

fn default_restarts() -> usize {
    60
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            count: 10,
            theta_max: None,
            shift: default_shift(),
            seed: 0,
            max_restarts: default_restarts(),
        }
    }
}

/// Residual tolerance for an eigenvalue `θ`.
pub fn residual_limit(theta: f64) -> f64 {
    1e-8 * (1.0 + theta.abs())
}

/// Lowest eigenpairs of the closed manifold, or all with `θ ≤ θ_max`.
pub fn eigenpairs(m: &DiscreteManifold, opts: &EigenOptions) -> Result<Vec<EigenPair>> {
    let lap = laplacian_matrix(m)?;
    pencil_pairs(lap.stiffness(), lap.mass(), opts)
}

/// Dirichlet eigenpairs on a ball: the boundary layer is held at zero.
/// Returned functions are extended by zero to the whole manifold.
pub fn dirichlet_eigenpairs(
    m: &DiscreteManifold,
    ball: &GeodesicBall,
    opts: &EigenOptions,
) -> Result<Vec<EigenPair>> {
    let interior = ball.interior();
    if interior.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let lap = laplacian_matrix(m)?;
    let s = linalg::principal_submatrix(lap.stiffness(), &interior);
    let w: Vec<f64> = interior.iter().map(|&n| lap.mass()[n]).collect();
    let local = pencil_pairs(&s, &w, opts)?;
    Ok(local
        .into_iter()
        .map(|p| {
            let mut u = vec![0.0; m.len()];
            for (i, &n) in interior.iter().enumerate() {
                u[n] = p.u[i];
            }
            EigenPair { u, ..p }
        })
        .collect())
}

/// Generalized problem `S u = θ W u` with diagonal positive `W`.
pub fn pencil_pairs(s: &CsrMatrix<f64>, w: &[f64], opts: &EigenOptions) -> Result<Vec<EigenPair>> {
    if opts.count == 0 && opts.theta_max.is_none() {
        return Ok(Vec::new());
    }
    let n = w.len();
    let shifted = linalg::add_diagonal(s, opts.shift, w);
    let chol = Cholesky::new(&shifted)?;
    let mut count = opts.count.max(1).min(n);
    loop {
        let pairs = krylov_pairs(s, w, &chol, count, opts)?;
        match opts.theta_max {
            None => return Ok(pairs),
            Some(tmax) => {
                let all_below = pairs.last().is_some_and(|p| p.theta <= tmax);
                if all_below && count < n {
                    count = (2 * count).min(n);
                    continue;
                }
                return Ok(pairs.into_iter().filter(|p| p.theta <= tmax).collect());
            }
        }
    }
}

fn w_dot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum()
}

/// W-orthonormalizes the columns of `y` against `basis` (already orthonormal)
/// and among themselves; returns the surviving columns.
fn orthonormalize(basis: &[Vec<f64>], y: Vec<Vec<f64>>, w: &[f64]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(y.len());
    for mut col in y {
        let norm0 = w_dot(w, &col, &col).sqrt();
        if !(norm0 > 0.0) {
            continue;
        }
        for _ in 0..2 {
            for b in basis.iter().chain(out.iter()) {
                let c = w_dot(w, b, &col);
                for (x, bv) in col.iter_mut().zip(b) {
                    *x -= c * bv;
                }
            }
        }
        let norm = w_dot(w, &col, &col).sqrt();
        if norm > 1e-10 * norm0 {
            col.iter_mut().for_each(|x| *x /= norm);
            out.push(col);
        }
    }
    out
}

fn krylov_pairs(
    s: &CsrMatrix<f64>,
    w: &[f64],
    chol: &Cholesky,
    count: usize,
    opts: &EigenOptions,
) -> Result<Vec<EigenPair>> {
    let n = w.len();
    let block = (count + 4).min(n);
    let depth = 6usize;
    let volume: f64 = w.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let start: Vec<Vec<f64>> = (0..block)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let mut x = orthonormalize(&[], start, w);
    let mut worst = f64::INFINITY;
    let mut converged = 0;
    let apply = |vs: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let rhs = DMatrix::from_fn(n, vs.len(), |i, j| w[i] * vs[j][i]);
        let sol = chol.solve_block(&rhs);
        (0..sol.ncols()).map(|j| sol.column(j).iter().copied().collect()).collect()
    };
    for _ in 0..opts.max_restarts.max(1) {
        // the restart block itself takes one shift-invert step, so nearly
        // converged vectors still improve when their Krylov update is dropped
        x = orthonormalize(&[], apply(&x), w);
        let mut basis = x.clone();
        let mut current = x.clone();
        for _ in 1..depth {
            if basis.len() >= n {
                break;
            }
            let fresh = orthonormalize(&basis, apply(&current), w);
            if fresh.is_empty() {
                break;
            }
            basis.extend(fresh.iter().cloned());
            current = fresh;
        }
        // Rayleigh–Ritz on (S, W) in the W-orthonormal basis
        let sv: Vec<Vec<f64>> = basis.iter().map(|v| linalg::matvec(s, v)).collect();
        let b = basis.len();
        let h = DMatrix::from_fn(b, b, |i, j| {
            let a: f64 = basis[i].iter().zip(&sv[j]).map(|(x, y)| x * y).sum();
            let c: f64 = basis[j].iter().zip(&sv[i]).map(|(x, y)| x * y).sum();
            0.5 * (a + c)
        });
        let eig = h.symmetric_eigen();
        let mut order: Vec<usize> = (0..b).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let keep = block.min(b);
        let mut pairs = Vec::with_capacity(keep);
        let mut ritz = Vec::with_capacity(keep);
        for &idx in order.iter().take(keep) {
            let theta = eig.eigenvalues[idx];
            let coeffs = eig.eigenvectors.column(idx);
            let mut u = vec![0.0; n];
            let mut su = vec![0.0; n];
            for (c, (v, sv)) in coeffs.iter().zip(basis.iter().zip(&sv)) {
                for i in 0..n {
                    u[i] += c * v[i];
                    su[i] += c * sv[i];
                }
            }
            // for W-unit u this equals ‖Δũ − θũ‖_{L̄²} of ũ = u·|M|^{1/2}
            let res = (0..n)
                .map(|i| {
                    let r = (su[i] - theta * w[i] * u[i]) / w[i];
                    w[i] * r * r
                })
                .sum::<f64>()
                .sqrt();
            ritz.push(u.clone());
            pairs.push((theta, u, res));
        }
        converged = pairs
            .iter()
            .take(count)
            .take_while(|(t, _, r)| *r <= residual_limit(*t))
            .count();
        worst = pairs
            .iter()
            .take(count)
            .map(|(_, _, r)| *r)
            .fold(0.0, f64::max);
        if converged >= count.min(pairs.len()) {
            return Ok(pairs
                .into_iter()
                .take(count)
                .map(|(theta, u, residual)| finish_pair(theta, u, residual, volume))
                .collect());
        }
        x = ritz;
    }
    Err(Error::EigenNoConvergence {
        converged,
        requested: count,
        residual: worst,
    })
}

fn finish_pair(theta: f64, u: Vec<f64>, residual: f64, volume: f64) -> EigenPair {
    // W-unit vector → unit L²-average; sign fixed by the largest entry
    let scale = volume.sqrt();
    let mut pivot = 0;
    for i in 1..u.len() {
        if u[i].abs() > u[pivot].abs() * (1.0 + 1e-12) {
            pivot = i;
        }
    }
    let sign = if u[pivot] < 0.0 { -1.0 } else { 1.0 };
    EigenPair {
        theta,
        u: u.into_iter().map(|v| sign * v * scale).collect(),
        residual,
    }
}

/// Averaged inner product `Σ w u v / Σ w`.
pub fn inner_average(m: &DiscreteManifold, u: &[f64], v: &[f64]) -> f64 {
    w_dot(m.weights(), u, v) / m.total_volume()
}

/// Groups indices of pairs whose eigenvalues agree to `1e-6·θ`.
pub fn clusters(pairs: &[EigenPair]) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (i, p) in pairs.iter().enumerate() {
        match out.last_mut() {
            Some(c) if (p.theta - pairs[c[0]].theta).abs() < 1e-6 * p.theta.abs().max(1e-12) => c.push(i),
            _ => out.push(vec![i]),
        }
    }
    out
}

/// Checks the stated residual of a pair against the operator.
pub fn verify_pair(m: &DiscreteManifold, pair: &EigenPair) -> Result<f64> {
    let lap = laplacian_matrix(m)?;
    let lu = lap.apply(&pair.u);
    let r: Vec<f64> = lu.iter().zip(&pair.u).map(|(a, b)| a - pair.theta * b).collect();
    let all: Vec<usize> = (0..m.len()).collect();
    let res = operators::l2_average(m, &r, &all)?;
    let limit = residual_limit(pair.theta);
    if res > limit {
        return Err(Error::EigenResidual { residual: res, limit });
    }
    Ok(res)
}

/// `r·sup_{inner}|∇u| / sup_{outer}|u|`.
pub fn cheng_yau_ratio(
    m: &DiscreteManifold,
    u: &[f64],
    inner: &GeodesicBall,
    outer: &GeodesicBall,
) -> Result<f64> {
    let sup_u = operators::sup_abs(u, outer.members());
    if !(sup_u > 0.0) {
        return Err(Error::UndefinedRatio);
    }
    let grad = operators::gradient(m, u);
    let sup_grad = inner
        .members()
        .iter()
        .map(|&n| m.norm(n, &grad[n]))
        .fold(0.0, f64::max);
    Ok(inner.radius() * sup_grad / sup_u)
}

const CACHE_MAGIC: &[u8; 8] = b"FLEIGEN\0";
const CACHE_VERSION: u32 = 1;

/// Binary eigenpair cache.
///
/// Layout (little endian): magic `FLEIGEN\0`, version `u32`, manifold
/// dimension `u32`, three node counts `u64`, pair count `u64`, 32-byte key,
/// then `count` eigenvalues, `count` residuals and `count × nodes`
/// eigenvector entries as `f64`, and a trailing SHA-256 of everything before.
pub struct EigenCache;

impl EigenCache {
    pub fn key(parts: &[&str]) -> [u8; 32] {
        let mut h = Sha256::new();
        for p in parts {
            h.update((p.len() as u64).to_le_bytes());
            h.update(p.as_bytes());
        }
        h.finalize().into()
    }

    pub fn write(path: &Path, m: &DiscreteManifold, key: &[u8; 32], pairs: &[EigenPair]) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(CACHE_MAGIC);
        buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        buf.extend_from_slice(&(m.dim() as u32).to_le_bytes());
        let dims = node_counts(m);
        for d in dims {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        buf.extend_from_slice(&(pairs.len() as u64).to_le_bytes());
        buf.extend_from_slice(key);
        for p in pairs {
            buf.extend_from_slice(&p.theta.to_le_bytes());
        }
        for p in pairs {
            buf.extend_from_slice(&p.residual.to_le_bytes());
        }
        for p in pairs {
            for v in &p.u {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let sum: [u8; 32] = Sha256::digest(&buf).into();
        buf.extend_from_slice(&sum);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(&buf)?;
        Ok(())
    }

    /// Reads a cache file; any mismatch or corruption is an error.
    pub fn read(path: &Path, m: &DiscreteManifold, key: &[u8; 32]) -> Result<Vec<EigenPair>> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        if buf.len() < 32 + 8 {
            return Err(Error::Cache("truncated file".into()));
        }
        let (body, sum) = buf.split_at(buf.len() - 32);
        if Sha256::digest(body).as_slice() != sum {
            return Err(Error::Cache("checksum mismatch".into()));
        }
        let mut pos = 0usize;
        let mut take = |len: usize| -> Result<&[u8]> {
            let s = body
                .get(pos..pos + len)
                .ok_or_else(|| Error::Cache("truncated file".into()))?;
            pos += len;
            Ok(s)
        };
        if take(8)? != CACHE_MAGIC {
            return Err(Error::Cache("bad magic".into()));
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap());
        let u64_at = |b: &[u8]| u64::from_le_bytes(b.try_into().unwrap());
        if u32_at(take(4)?) != CACHE_VERSION {
            return Err(Error::Cache("unsupported version".into()));
        }
        if u32_at(take(4)?) as usize != m.dim() {
            return Err(Error::Cache("dimension mismatch".into()));
        }
        for d in node_counts(m) {
            if u64_at(take(8)?) as usize != d {
                return Err(Error::Cache("node count mismatch".into()));
            }
        }
        let count = u64_at(take(8)?) as usize;
        if take(32)? != key {
            return Err(Error::Cache("key mismatch".into()));
        }
        let mut f64s = |k: usize| -> Result<Vec<f64>> {
            let raw = take(8 * k)?;
            Ok(raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect())
        };
        let thetas = f64s(count)?;
        let residuals = f64s(count)?;
        let n = m.len();
        let mut pairs = Vec::with_capacity(count);
        for i in 0..count {
            pairs.push(EigenPair {
                theta: thetas[i],
                residual: residuals[i],
                u: f64s(n)?,
            });
        }
        Ok(pairs)
    }
}

fn node_counts(m: &DiscreteManifold) -> [usize; 3] {
    let mut d = [1usize; 3];
    match m.grid() {
        Some(g) => d[..g.ndim()].copy_from_slice(g.dims()),
        None => d[0] = m.len(),
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{build_family, FamilySpec};
    use std::f64::consts::PI;

    #[test]
    fn flat_torus_low_spectrum() {
        let m = build_family(&FamilySpec::flat(0.1, 128, 16)).unwrap();
        let pairs = eigenpairs(&m, &EigenOptions { count: 5, ..Default::default() }).unwrap();
        assert!(pairs[0].theta.abs() < 1e-8);
        let spread = pairs[0].u.iter().fold(0.0f64, |a, v| a.max((v - 1.0).abs()));
        assert!(spread < 1e-6, "{spread}");
        let h = 1.0 / 128.0;
        let discrete = 4.0 / (h * h) * (PI * h).sin().powi(2);
        assert!((pairs[1].theta - discrete).abs() < 1e-7 * discrete);
        assert!((pairs[2].theta - discrete).abs() < 1e-7 * discrete);
        for i in 0..5 {
            for j in 0..5 {
                let ip = inner_average(&m, &pairs[i].u, &pairs[j].u);
                assert!((ip - if i == j { 1.0 } else { 0.0 }).abs() < 1e-8);
            }
        }
        assert_eq!(clusters(&pairs)[1], vec![1, 2]);
    }

    #[test]
    fn theta_max_excludes_fiber_modes() {
        let m = build_family(&FamilySpec::flat(0.1, 64, 16)).unwrap();
        let pairs = eigenpairs(
            &m,
            &EigenOptions {
                count: 2,
                theta_max: Some(100.0),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(pairs.len(), 3);
        assert!(pairs.iter().all(|p| p.theta < 100.0));
    }

    #[test]
    fn cache_roundtrip_and_corruption() {
        let m = build_family(&FamilySpec::flat(0.5, 16, 16)).unwrap();
        let pairs = eigenpairs(&m, &EigenOptions { count: 3, ..Default::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.bin");
        let key = EigenCache::key(&["flat", "3"]);
        EigenCache::write(&path, &m, &key, &pairs).unwrap();
        assert_eq!(EigenCache::read(&path, &m, &key).unwrap(), pairs);
        let mut raw = std::fs::read(&path).unwrap();
        raw[100] ^= 1;
        std::fs::write(&path, raw).unwrap();
        assert!(matches!(EigenCache::read(&path, &m, &key), Err(Error::Cache(_))));
    }
}
