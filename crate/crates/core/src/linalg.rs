//! Small dense complex linear algebra: vectors in an ambient space, 2×2
//! operators on the source frame and 4×4 operators on Alice's qubit ⊗ frame.

use alloc::vec::Vec;
use core::ops::{Add, Mul, Sub};

pub use num_complex::Complex64 as C64;

/// Coordinates of a vector in a two-dimensional orthonormal frame.
pub type Qubit = [C64; 2];

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// `⟨u|v⟩`, conjugate-linear in the first argument.
pub fn inner(u: &[C64], v: &[C64]) -> C64 {
    u.iter().zip(v).fold(ZERO, |acc, (x, y)| acc + x.conj() * y)
}

pub fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub fn norm(v: &[C64]) -> f64 {
    libm::sqrt(norm_sqr(v))
}

pub fn scale(v: &[C64], s: C64) -> Vec<C64> {
    v.iter().map(|z| z * s).collect()
}

/// `u - s·v`.
pub fn axpy_neg(u: &[C64], s: C64, v: &[C64]) -> Vec<C64> {
    u.iter().zip(v).map(|(x, y)| x - s * y).collect()
}

pub fn qubit_inner(u: &Qubit, v: &Qubit) -> C64 {
    u[0].conj() * v[0] + u[1].conj() * v[1]
}

pub fn qubit_norm_sqr(v: &Qubit) -> f64 {
    v[0].norm_sqr() + v[1].norm_sqr()
}

/// Largest entrywise modulus of `u - v`.
pub fn max_abs_diff(u: &[C64], v: &[C64]) -> f64 {
    u.iter()
        .zip(v)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Entrywise distance between two vectors after aligning the global phase of
/// `v` to `u`.
pub fn phase_distance(u: &[C64], v: &[C64]) -> f64 {
    let overlap = inner(v, u);
    let n = overlap.norm();
    let phase = if n > 0.0 { overlap / n } else { ONE };
    u.iter()
        .zip(v)
        .map(|(x, y)| (x - y * phase).norm())
        .fold(0.0, f64::max)
}

/// Complex 2×2 matrix, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Mat2(pub [[C64; 2]; 2]);

impl Mat2 {
    pub const fn new(m00: C64, m01: C64, m10: C64, m11: C64) -> Self {
        Mat2([[m00, m01], [m10, m11]])
    }

    pub const fn zero() -> Self {
        Mat2([[ZERO, ZERO], [ZERO, ZERO]])
    }

    pub const fn identity() -> Self {
        Mat2([[ONE, ZERO], [ZERO, ONE]])
    }

    pub fn real_diag(d0: f64, d1: f64) -> Self {
        Mat2::new(C64::from(d0), ZERO, ZERO, C64::from(d1))
    }

    /// `|u⟩⟨v|`.
    pub fn outer(u: &Qubit, v: &Qubit) -> Self {
        Mat2([
            [u[0] * v[0].conj(), u[0] * v[1].conj()],
            [u[1] * v[0].conj(), u[1] * v[1].conj()],
        ])
    }

    /// `|v⟩⟨v|`.
    pub fn projector(v: &Qubit) -> Self {
        Mat2::outer(v, v)
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.0;
        Mat2::new(m[0][0].conj(), m[1][0].conj(), m[0][1].conj(), m[1][1].conj())
    }

    pub fn scale(&self, s: C64) -> Self {
        let m = &self.0;
        Mat2::new(m[0][0] * s, m[0][1] * s, m[1][0] * s, m[1][1] * s)
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(C64::from(s))
    }

    pub fn trace(&self) -> C64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn apply(&self, v: &Qubit) -> Qubit {
        let m = &self.0;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    /// `M† M`.
    pub fn gram(&self) -> Self {
        self.adjoint() * *self
    }

    /// `M ρ M†`.
    pub fn conjugate(&self, rho: &Mat2) -> Self {
        *self * *rho * self.adjoint()
    }

    /// `⟨v|M|v⟩`.
    pub fn expectation(&self, v: &Qubit) -> C64 {
        qubit_inner(v, &self.apply(v))
    }

    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((self.0[i][j] - other.0[i][j]).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.max_abs_diff(&self.adjoint()) <= tol
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.gram().max_abs_diff(&Mat2::identity()) <= tol
    }

    /// Eigen-decomposition of the Hermitian part of `self`. Eigenvalues are
    /// returned in ascending order together with orthonormal eigenvectors.
    pub fn hermitian_eigen(&self) -> ([f64; 2], [Qubit; 2]) {
        let m = &self.0;
        let a = m[0][0].re;
        let d = m[1][1].re;
        let b = (m[0][1] + m[1][0].conj()) * 0.5;
        let mean = 0.5 * (a + d);
        let half_gap = libm::sqrt(0.25 * (a - d) * (a - d) + b.norm_sqr());
        let lo = mean - half_gap;
        let hi = mean + half_gap;
        if b.norm() <= 1e-300 {
            let e0: Qubit = [ONE, ZERO];
            let e1: Qubit = [ZERO, ONE];
            return if a <= d { ([a, d], [e0, e1]) } else { ([d, a], [e1, e0]) };
        }
        let eig_vec = |lambda: f64| -> Qubit {
            // (H - λ) v = 0 with v = (b, λ - a); pick the better-conditioned row.
            let v1: Qubit = [b, C64::from(lambda - a)];
            let v2: Qubit = [C64::from(lambda - d), b.conj()];
            let v = if qubit_norm_sqr(&v1) >= qubit_norm_sqr(&v2) { v1 } else { v2 };
            let n = libm::sqrt(qubit_norm_sqr(&v));
            [v[0] / n, v[1] / n]
        };
        let v_lo = eig_vec(lo);
        // Orthogonal complement for the other eigenvector keeps the pair exactly orthonormal.
        let v_hi: Qubit = [-v_lo[1].conj(), v_lo[0].conj()];
        ([lo, hi], [v_lo, v_hi])
    }

    /// Applies `f` to the eigenvalues of the Hermitian part.
    pub fn hermitian_map(&self, f: impl Fn(f64) -> f64) -> Self {
        let (vals, vecs) = self.hermitian_eigen();
        Mat2::projector(&vecs[0]).scale_real(f(vals[0]))
            + Mat2::projector(&vecs[1]).scale_real(f(vals[1]))
    }

    /// Operator (spectral) norm of a Hermitian matrix.
    pub fn hermitian_op_norm(&self) -> f64 {
        let (vals, _) = self.hermitian_eigen();
        vals[0].abs().max(vals[1].abs())
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        let (a, b) = (&self.0, &o.0);
        Mat2::new(a[0][0] + b[0][0], a[0][1] + b[0][1], a[1][0] + b[1][0], a[1][1] + b[1][1])
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        let (a, b) = (&self.0, &o.0);
        Mat2::new(a[0][0] - b[0][0], a[0][1] - b[0][1], a[1][0] - b[1][0], a[1][1] - b[1][1])
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        let (a, b) = (&self.0, &o.0);
        Mat2::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }
}

/// Operator on Alice's qubit ⊗ the two-dimensional source frame. Index
/// `2·j + k` addresses `|j⟩_A ⊗ e_k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat4(pub [[C64; 4]; 4]);

impl Mat4 {
    pub fn zero() -> Self {
        Mat4([[ZERO; 4]; 4])
    }

    /// `|ψ⟩⟨ψ|` for a joint pure state given as a 2×2 coefficient grid.
    pub fn pure(grid: &[[C64; 2]; 2]) -> Self {
        let flat = [grid[0][0], grid[0][1], grid[1][0], grid[1][1]];
        let mut m = Mat4::zero();
        for (i, x) in flat.iter().enumerate() {
            for (j, y) in flat.iter().enumerate() {
                m.0[i][j] = x * y.conj();
            }
        }
        m
    }

    /// `(I ⊗ K) ρ (I ⊗ K)†`.
    pub fn conjugate_b(&self, k: &Mat2) -> Self {
        let lift = |op: &Mat2| -> [[C64; 4]; 4] {
            let mut l = [[ZERO; 4]; 4];
            for ja in 0..2 {
                for r in 0..2 {
                    for c in 0..2 {
                        l[2 * ja + r][2 * ja + c] = op.0[r][c];
                    }
                }
            }
            l
        };
        let kl = lift(k);
        let kd = lift(&k.adjoint());
        let mut tmp = [[ZERO; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                tmp[i][j] = (0..4).fold(ZERO, |acc, l| acc + kl[i][l] * self.0[l][j]);
            }
        }
        let mut out = Mat4::zero();
        for i in 0..4 {
            for j in 0..4 {
                out.0[i][j] = (0..4).fold(ZERO, |acc, l| acc + tmp[i][l] * kd[l][j]);
            }
        }
        out
    }

    pub fn trace(&self) -> f64 {
        (0..4).map(|i| self.0[i][i].re).sum()
    }

    pub fn scale_real(&self, s: f64) -> Self {
        let mut out = *self;
        for row in out.0.iter_mut() {
            for x in row.iter_mut() {
                *x *= s;
            }
        }
        out
    }

    pub fn accumulate(&mut self, other: &Mat4) {
        for i in 0..4 {
            for j in 0..4 {
                self.0[i][j] += other.0[i][j];
            }
        }
    }

    /// Partial trace over the frame, leaving Alice's qubit.
    pub fn trace_b(&self) -> Mat2 {
        let mut out = Mat2::zero();
        for ja in 0..2 {
            for jb in 0..2 {
                out.0[ja][jb] = self.0[2 * ja][2 * jb] + self.0[2 * ja + 1][2 * jb + 1];
            }
        }
        out
    }

    /// Partial trace over Alice's qubit, leaving the frame.
    pub fn trace_a(&self) -> Mat2 {
        let mut out = Mat2::zero();
        for r in 0..2 {
            for c in 0..2 {
                out.0[r][c] = self.0[r][c] + self.0[2 + r][2 + c];
            }
        }
        out
    }
}
