//! Small fixed-size linear algebra helpers for chart coordinates.

/// A point in chart coordinates.
pub type Point2 = [f64; 2];
/// A tangent vector (or covector) in chart coordinates.
pub type Vec2 = [f64; 2];
/// A 2x2 matrix, row major.
pub type Mat2 = [[f64; 2]; 2];

pub fn add(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] + b[0], a[1] + b[1]]
}

pub fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

pub fn scale(a: Vec2, s: f64) -> Vec2 {
    [a[0] * s, a[1] * s]
}

pub fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn norm(a: Vec2) -> f64 {
    dot(a, a).sqrt()
}

pub fn mat_vec(m: &Mat2, v: Vec2) -> Vec2 {
    [
        m[0][0] * v[0] + m[0][1] * v[1],
        m[1][0] * v[0] + m[1][1] * v[1],
    ]
}

pub fn det(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// Inverse of a 2x2 matrix. The caller is responsible for `det != 0`.
pub fn inverse(m: &Mat2) -> Mat2 {
    let d = det(m);
    [
        [m[1][1] / d, -m[0][1] / d],
        [-m[1][0] / d, m[0][0] / d],
    ]
}

/// Quadratic form v^T m w.
pub fn quad(m: &Mat2, v: Vec2, w: Vec2) -> f64 {
    dot(v, mat_vec(m, w))
}

/// Eigenvalues of a symmetric 2x2 matrix, ascending.
pub fn sym_eigenvalues(m: &Mat2) -> [f64; 2] {
    let tr = m[0][0] + m[1][1];
    let d = det(m);
    let disc = (tr * tr / 4.0 - d).max(0.0).sqrt();
    [tr / 2.0 - disc, tr / 2.0 + disc]
}
