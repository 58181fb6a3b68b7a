//! Small fixed-size vector helpers for 3D rigid-body kinematics.

use crate::Real;

pub type Vec3<T> = [T; 3];
/// Row-major 3x3 matrix.
pub type Mat3<T> = [[T; 3]; 3];

#[inline(always)]
pub fn dot<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline(always)]
pub fn cross<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline(always)]
pub fn norm<T: Real>(a: &Vec3<T>) -> T {
    dot(a, a).sqrt()
}

#[inline(always)]
pub fn add<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline(always)]
pub fn scale<T: Real>(a: &Vec3<T>, k: T) -> Vec3<T> {
    [a[0] * k, a[1] * k, a[2] * k]
}

/// `m * v`
#[inline(always)]
pub fn mat_vec<T: Real>(m: &Mat3<T>, v: &Vec3<T>) -> Vec3<T> {
    [dot(&m[0], v), dot(&m[1], v), dot(&m[2], v)]
}

/// `mᵀ * v`
#[inline(always)]
pub fn mat_t_vec<T: Real>(m: &Mat3<T>, v: &Vec3<T>) -> Vec3<T> {
    [
        m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
        m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
        m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
    ]
}

pub fn transpose<T: Real>(m: &Mat3<T>) -> Mat3<T> {
    let mut t = *m;
    for (i, row) in m.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            t[j][i] = v;
        }
    }
    t
}

pub fn mat_mul<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut out = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub fn determinant<T: Real>(m: &Mat3<T>) -> T {
    dot(&m[0], &cross(&m[1], &m[2]))
}

/// Largest absolute entry of `mᵀm - I`.
pub fn orthonormality_error<T: Real>(m: &Mat3<T>) -> T {
    let p = mat_mul(&transpose(m), m);
    let mut worst = T::zero();
    for (i, row) in p.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let target = if i == j { T::one() } else { T::zero() };
            worst = worst.max((v - target).abs());
        }
    }
    worst
}
