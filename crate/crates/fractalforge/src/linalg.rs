//! Fixed-size 3D linear algebra: vectors, row-major 3x3 matrices, rotations,
//! and singular value machinery.
//!
//! Two decomposition paths coexist on purpose. [`Mat3::svd`] runs a one-sided
//! Jacobi iteration and returns full `U`, `sigma`, `V` — robust for arbitrary
//! (including rank-deficient) matrices, used wherever factors are needed.
//! [`Mat3::singular_values`] skips the factors entirely: it takes the
//! closed-form eigenvalues of `A^T A` (Cardano), which is several times cheaper
//! and is what the hot candidate-filtering loops call.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_3;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

/// Plain 3-vector. Serializes as `[x, y, z]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn splat(v: f64) -> Self {
        Vec3::new(v, v, v)
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Unit vector, or `None` when the norm is too small to trust.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        if n < 1e-12 {
            None
        } else {
            Some(self * (1.0 / n))
        }
    }

    /// Component-wise product.
    pub fn mul_elem(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x * o.x, self.y * o.y, self.z * o.z)
    }

    /// Component-wise sine.
    pub fn sin(self) -> Vec3 {
        Vec3::new(self.x.sin(), self.y.sin(), self.z.sin())
    }

    pub fn abs_max(self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.to_array()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Row-major 3x3 matrix. Serializes as a flat `[f64; 9]` in row-major order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 9]", into = "[f64; 9]")]
pub struct Mat3 {
    m: [f64; 9],
}

impl Index<(usize, usize)> for Mat3 {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.m[r * 3 + c]
    }
}

impl IndexMut<(usize, usize)> for Mat3 {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.m[r * 3 + c]
    }
}

impl From<[f64; 9]> for Mat3 {
    fn from(m: [f64; 9]) -> Self {
        Mat3 { m }
    }
}

impl From<Mat3> for [f64; 9] {
    fn from(a: Mat3) -> Self {
        a.m
    }
}

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3 {
        m: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
    };

    pub const ZERO: Mat3 = Mat3 { m: [0.0; 9] };

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Self {
        let mut m = [0.0; 9];
        for (r, row) in rows.iter().enumerate() {
            m[r * 3..r * 3 + 3].copy_from_slice(row);
        }
        Mat3 { m }
    }

    pub fn from_row_major(m: [f64; 9]) -> Self {
        Mat3 { m }
    }

    pub fn to_row_major(self) -> [f64; 9] {
        self.m
    }

    pub fn diagonal(d0: f64, d1: f64, d2: f64) -> Self {
        Mat3::from_rows([[d0, 0.0, 0.0], [0.0, d1, 0.0], [0.0, 0.0, d2]])
    }

    /// Uniform scale `s * I`.
    pub fn scale(s: f64) -> Self {
        Mat3::diagonal(s, s, s)
    }

    pub fn col(&self, c: usize) -> Vec3 {
        Vec3::new(self[(0, c)], self[(1, c)], self[(2, c)])
    }

    pub fn row(&self, r: usize) -> Vec3 {
        Vec3::new(self[(r, 0)], self[(r, 1)], self[(r, 2)])
    }

    pub fn set_col(&mut self, c: usize, v: Vec3) {
        self[(0, c)] = v.x;
        self[(1, c)] = v.y;
        self[(2, c)] = v.z;
    }

    pub fn transpose(&self) -> Mat3 {
        let mut t = Mat3::ZERO;
        for r in 0..3 {
            for c in 0..3 {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        Vec3::new(self.row(0).dot(v), self.row(1).dot(v), self.row(2).dot(v))
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.m;
        m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
            + m[2] * (m[3] * m[7] - m[4] * m[6])
    }

    /// Gram matrix `A^T A` (symmetric positive semidefinite).
    pub fn gram(&self) -> Mat3 {
        let mut g = Mat3::ZERO;
        for r in 0..3 {
            for c in r..3 {
                let v = self.col(r).dot(self.col(c));
                g[(r, c)] = v;
                g[(c, r)] = v;
            }
        }
        g
    }

    pub fn max_abs(&self) -> f64 {
        self.m.iter().fold(0.0f64, |a, x| a.max(x.abs()))
    }

    /// Singular values in descending order, via closed-form eigenvalues of the
    /// Gram matrix. No factors are produced; this is the cheap path.
    pub fn singular_values(&self) -> [f64; 3] {
        let e = sym_eigenvalues(&self.gram());
        [e[0].max(0.0).sqrt(), e[1].max(0.0).sqrt(), e[2].max(0.0).sqrt()]
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> f64 {
        self.singular_values()[0]
    }

    /// Full singular value decomposition `A = U diag(sigma) V^T`.
    ///
    /// `sigma` is descending and non-negative; `U` and `V` are orthonormal even
    /// when `A` is singular (missing directions are completed by
    /// Gram-Schmidt against the standard basis).
    pub fn svd(&self) -> Svd {
        // One-sided Jacobi: orthogonalize the columns of B = A V by Givens
        // rotations; at convergence the column norms are the singular values
        // and the normalized columns are U.
        let mut b = *self;
        let mut v = Mat3::IDENTITY;
        for _sweep in 0..60 {
            let mut rotated = false;
            for (p, q) in [(0, 1), (0, 2), (1, 2)] {
                let app = b.col(p).norm_squared();
                let aqq = b.col(q).norm_squared();
                let apq = b.col(p).dot(b.col(q));
                if apq.abs() <= 1e-30 + 1e-15 * (app * aqq).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (aqq - app) / (2.0 * apq);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..3 {
                    let (bp, bq) = (b[(r, p)], b[(r, q)]);
                    b[(r, p)] = c * bp - s * bq;
                    b[(r, q)] = s * bp + c * bq;
                    let (vp, vq) = (v[(r, p)], v[(r, q)]);
                    v[(r, p)] = c * vp - s * vq;
                    v[(r, q)] = s * vp + c * vq;
                }
            }
            if !rotated {
                break;
            }
        }

        // Sort singular values descending, carrying the column permutation.
        let mut order: [(f64, usize); 3] = core::array::from_fn(|i| (b.col(i).norm(), i));
        order.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let sigma = [order[0].0, order[1].0, order[2].0];

        let mut u = Mat3::ZERO;
        let mut v_sorted = Mat3::ZERO;
        let rank_tol = sigma[0] * 1e-13;
        let mut u_cols: Vec<Vec3> = Vec::with_capacity(3);
        for (slot, &(s, src)) in order.iter().enumerate() {
            v_sorted.set_col(slot, v.col(src));
            if s > rank_tol && s > 0.0 {
                u_cols.push(b.col(src) * (1.0 / s));
            } else {
                u_cols.push(complete_orthonormal(&u_cols));
            }
            u.set_col(slot, u_cols[slot]);
        }

        Svd { u, sigma, v: v_sorted }
    }
}

impl Mul for Mat3 {
    type Output = Mat3;
    fn mul(self, o: Mat3) -> Mat3 {
        let mut r = Mat3::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                r[(i, j)] = self.row(i).dot(o.col(j));
            }
        }
        r
    }
}

impl Mul<f64> for Mat3 {
    type Output = Mat3;
    fn mul(self, s: f64) -> Mat3 {
        let mut r = self;
        for v in r.m.iter_mut() {
            *v *= s;
        }
        r
    }
}

/// Unit vector orthogonal to every vector in `existing` (at most two,
/// themselves orthonormal). Picks the standard basis vector with the largest
/// residual and projects twice for numerical hygiene.
fn complete_orthonormal(existing: &[Vec3]) -> Vec3 {
    let basis = [
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(0.0, 1.0, 0.0),
        Vec3::new(0.0, 0.0, 1.0),
    ];
    let mut best = basis[0];
    let mut best_norm = -1.0;
    for e in basis {
        let mut w = e;
        for _ in 0..2 {
            for u in existing {
                w = w - *u * u.dot(w);
            }
        }
        let n = w.norm();
        if n > best_norm {
            best_norm = n;
            best = w * (1.0 / n);
        }
    }
    best
}

/// Result of [`Mat3::svd`]: `a = u * diag(sigma) * v^T`.
#[derive(Clone, Copy, Debug)]
pub struct Svd {
    pub u: Mat3,
    pub sigma: [f64; 3],
    pub v: Mat3,
}

impl Svd {
    pub fn reconstruct(&self) -> Mat3 {
        self.u * Mat3::diagonal(self.sigma[0], self.sigma[1], self.sigma[2]) * self.v.transpose()
    }
}

/// Eigenvalues of a symmetric 3x3 matrix, descending, by the trigonometric
/// form of Cardano's formula. Only the upper triangle of `s` is read.
pub fn sym_eigenvalues(s: &Mat3) -> [f64; 3] {
    let (a, b, c) = (s[(0, 0)], s[(1, 1)], s[(2, 2)]);
    let (d, e, f) = (s[(0, 1)], s[(0, 2)], s[(1, 2)]);
    let p1 = d * d + e * e + f * f;
    if p1 == 0.0 {
        // Already diagonal.
        let mut eig = [a, b, c];
        eig.sort_by(|x, y| y.partial_cmp(x).unwrap());
        return eig;
    }
    let q = (a + b + c) / 3.0;
    let p2 = (a - q).powi(2) + (b - q).powi(2) + (c - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    // B = (S - q I) / p has det in [-2, 2]; its eigenvalues are 2 cos(...)
    let (ba, bb, bc) = ((a - q) / p, (b - q) / p, (c - q) / p);
    let (bd, be, bf) = (d / p, e / p, f / p);
    let det_b = ba * (bb * bc - bf * bf) - bd * (bd * bc - bf * be) + be * (bd * bf - bb * be);
    let r = (det_b / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let e0 = q + 2.0 * p * phi.cos();
    let e2 = q + 2.0 * p * (phi + 2.0 * FRAC_PI_3).cos();
    let e1 = 3.0 * q - e0 - e2;
    [e0, e1, e2]
}

/// Rotation from intrinsic Z-Y-X Euler angles: `R = Rz(yaw) Ry(pitch) Rx(roll)`.
pub fn rotation_from_euler(yaw: f64, pitch: f64, roll: f64) -> Mat3 {
    let (sz, cz) = yaw.sin_cos();
    let (sy, cy) = pitch.sin_cos();
    let (sx, cx) = roll.sin_cos();
    let rz = Mat3::from_rows([[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]]);
    let ry = Mat3::from_rows([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]]);
    let rx = Mat3::from_rows([[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]]);
    rz * ry * rx
}

/// Rotation from a quaternion `[w, x, y, z]` (normalized internally).
///
/// Quaternions drawn from a 4D standard normal and fed through this give
/// rotations uniform under Haar measure. Returns `None` for a (near-)zero
/// quaternion, which names no rotation.
pub fn rotation_from_quaternion(q: [f64; 4]) -> Option<Mat3> {
    let n2 = q.iter().map(|v| v * v).sum::<f64>();
    if n2 < 1e-24 {
        return None;
    }
    let s = 1.0 / n2.sqrt();
    let (w, x, y, z) = (q[0] * s, q[1] * s, q[2] * s, q[3] * s);
    Some(Mat3::from_rows([
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]))
}
