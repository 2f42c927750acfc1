//! Fixed-size helpers for the at-most-three-dimensional tensors carried per node.
//!
//! Components beyond the active dimension are kept at zero, so every routine
//! here operates on the full 3x3 storage.

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

pub const ZERO3: Vec3 = [0.0; 3];
pub const ZERO33: Mat3 = [[0.0; 3]; 3];

pub fn identity(dim: usize) -> Mat3 {
    let mut m = ZERO33;
    for (i, row) in m.iter_mut().enumerate().take(dim) {
        row[i] = 1.0;
    }
    m
}

pub fn mat_vec(m: &Mat3, v: &Vec3) -> Vec3 {
    let mut out = ZERO3;
    for i in 0..3 {
        out[i] = m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2];
    }
    out
}

/// `aᵀ M b`.
pub fn quad(m: &Mat3, a: &Vec3, b: &Vec3) -> f64 {
    let mb = mat_vec(m, b);
    a[0] * mb[0] + a[1] * mb[1] + a[2] * mb[2]
}

pub fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn add(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale(a: &Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn axpy(y: &mut Vec3, s: f64, x: &Vec3) {
    y[0] += s * x[0];
    y[1] += s * x[1];
    y[2] += s * x[2];
}

pub fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// Determinant of the leading `dim x dim` block.
pub fn det(m: &Mat3, dim: usize) -> f64 {
    match dim {
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        _ => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
    }
}

/// Inverse of the leading `dim x dim` block; `None` when singular.
pub fn inverse(m: &Mat3, dim: usize) -> Option<Mat3> {
    let d = det(m, dim);
    if !d.is_finite() || d.abs() < f64::MIN_POSITIVE {
        return None;
    }
    let mut inv = ZERO33;
    match dim {
        1 => inv[0][0] = 1.0 / d,
        2 => {
            inv[0][0] = m[1][1] / d;
            inv[1][1] = m[0][0] / d;
            inv[0][1] = -m[0][1] / d;
            inv[1][0] = -m[1][0] / d;
        }
        _ => {
            inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / d;
            inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / d;
            inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / d;
            inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / d;
            inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / d;
            inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / d;
            inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / d;
            inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / d;
            inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / d;
        }
    }
    Some(inv)
}

/// Smallest eigenvalue of a symmetric `dim x dim` block.
pub fn min_eigenvalue(m: &Mat3, dim: usize) -> f64 {
    sym_eigen(m, dim).0[0]
}

/// Eigen-decomposition of a symmetric `dim x dim` block.
///
/// Returns ascending eigenvalues and the matching unit eigenvectors as rows.
pub fn sym_eigen(m: &Mat3, dim: usize) -> (Vec3, Mat3) {
    let mut vals = ZERO3;
    let mut vecs = ZERO33;
    match dim {
        0 => {}
        1 => {
            vals[0] = m[0][0];
            vecs[0][0] = 1.0;
        }
        _ => {
            let a = nalgebra::DMatrix::from_fn(dim, dim, |i, j| 0.5 * (m[i][j] + m[j][i]));
            let eig = a.symmetric_eigen();
            let mut order: Vec<usize> = (0..dim).collect();
            order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
            for (row, &idx) in order.iter().enumerate() {
                vals[row] = eig.eigenvalues[idx];
                let col = eig.eigenvectors.column(idx);
                // deterministic orientation: largest-magnitude entry positive
                let mut pivot = 0;
                for c in 1..dim {
                    if col[c].abs() > col[pivot].abs() + 1e-14 {
                        pivot = c;
                    }
                }
                let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
                for c in 0..dim {
                    vecs[row][c] = sign * col[c];
                }
            }
        }
    }
    (vals, vecs)
}

/// Full g-norm squared of a covariant 2-tensor: `g^{ik} g^{jl} T_ij T_kl`.
pub fn tensor_norm_sq(t: &Mat3, ginv: &Mat3) -> f64 {
    // A = G T, |T|^2 = tr(A A^T-ish) = sum_{ij} (G T G)_{ij} T_{ij}
    let mut gt = ZERO33;
    for i in 0..3 {
        for j in 0..3 {
            gt[i][j] = (0..3).map(|k| ginv[i][k] * t[k][j]).sum();
        }
    }
    let mut acc = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let gtg: f64 = (0..3).map(|l| gt[i][l] * ginv[l][j]).sum();
            acc += gtg * t[i][j];
        }
    }
    acc
}
