//! Small fixed-size linear algebra for the bivariate computations.

pub type Vec2 = [f64; 2];
pub type Mat2 = [[f64; 2]; 2];

pub fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn hadamard(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] * b[0], a[1] * b[1]]
}

pub fn norm(a: Vec2) -> f64 {
    a[0].hypot(a[1])
}

pub fn mat_vec(m: &Mat2, v: Vec2) -> Vec2 {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

/// `v' M v`
pub fn quad_form(m: &Mat2, v: Vec2) -> f64 {
    dot(v, mat_vec(m, v))
}

pub fn det(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

pub fn inverse(m: &Mat2) -> Option<Mat2> {
    let d = det(m);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    Some([[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]])
}

/// Solves `m x = rhs`.
pub fn solve(m: &Mat2, rhs: Vec2) -> Option<Vec2> {
    inverse(m).map(|inv| mat_vec(&inv, rhs))
}

pub fn is_symmetric(m: &Mat2) -> bool {
    (m[0][1] - m[1][0]).abs() <= 1e-12 * (1.0 + m[0][1].abs())
}

/// Eigenvalues of a symmetric 2x2 matrix, ascending.
pub fn sym_eigenvalues(m: &Mat2) -> Vec2 {
    let tr = m[0][0] + m[1][1];
    let diff = m[0][0] - m[1][1];
    let disc = (0.25 * diff * diff + m[0][1] * m[1][0]).max(0.0).sqrt();
    [0.5 * tr - disc, 0.5 * tr + disc]
}

pub fn is_positive_definite(m: &Mat2) -> bool {
    is_symmetric(m) && sym_eigenvalues(m)[0] > 0.0
}

/// Lower Cholesky factor of a symmetric positive semi-definite matrix.
pub fn cholesky(m: &Mat2) -> Mat2 {
    let l00 = m[0][0].max(0.0).sqrt();
    let l10 = if l00 > 0.0 { m[1][0] / l00 } else { 0.0 };
    let l11 = (m[1][1] - l10 * l10).max(0.0).sqrt();
    [[l00, 0.0], [l10, l11]]
}

/// `diag(d) M diag(d)`
pub fn scale_sym(m: &Mat2, d: Vec2) -> Mat2 {
    [
        [m[0][0] * d[0] * d[0], m[0][1] * d[0] * d[1]],
        [m[1][0] * d[1] * d[0], m[1][1] * d[1] * d[1]],
    ]
}
