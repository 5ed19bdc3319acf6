//! Small dense linear-algebra helpers on top of nalgebra.
//!
//! Everything here works on dynamically sized matrices; the systems in this
//! crate have at most a handful of states, so clarity wins over allocation
//! counts.

use nalgebra::{Complex, DMatrix, DVector, SVD};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative singular-value threshold used for every rank decision.
pub const RANK_RTOL: f64 = 1e-9;

/// Elementwise absolute value.
pub fn abs(m: &Mat) -> Mat {
    m.map(f64::abs)
}

/// Signum with `sgn(0) = 0`.
pub fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Matrix-vector product where a zero coefficient annihilates an infinite
/// entry. Bounds on decoupled coordinates can diverge while the coupling
/// coefficient is structurally zero; the product is then finite.
pub fn mul_skip_zero(m: &Mat, v: &Vector) -> Vector {
    assert_eq!(m.ncols(), v.len());
    Vector::from_fn(m.nrows(), |i, _| {
        (0..m.ncols())
            .filter(|&j| m[(i, j)] != 0.0)
            .map(|j| m[(i, j)] * v[j])
            .sum()
    })
}

/// Singular values and the full right-singular basis `V` (columns).
///
/// nalgebra's thin SVD drops the trailing right-singular vectors of a wide
/// matrix, so wide inputs are padded with zero rows first.
fn svd_right(m: &Mat) -> (Vec<f64>, Mat) {
    let n = m.ncols();
    let padded = if m.nrows() < n {
        let mut p = Mat::zeros(n, n);
        p.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = SVD::new(padded, false, true);
    let v_t = svd.v_t.expect("requested V^T");
    (svd.singular_values.iter().copied().collect(), v_t.transpose())
}

fn threshold(sv: &[f64], rtol: f64) -> f64 {
    let smax = sv.iter().copied().fold(0.0, f64::max);
    rtol * smax
}

pub fn singular_values(m: &Mat) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut sv: Vec<f64> = SVD::new(m.clone(), false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

pub fn rank(m: &Mat, rtol: f64) -> usize {
    let sv = singular_values(m);
    let tol = threshold(&sv, rtol);
    sv.iter().filter(|&&s| s > tol && s > 0.0).count()
}

/// Flip columns so that the first entry with magnitude above `1e-12` is
/// positive.
pub fn normalize_signs(m: &mut Mat) {
    for mut col in m.column_iter_mut() {
        if let Some(first) = col.iter().copied().find(|x| x.abs() > 1e-12) {
            if first < 0.0 {
                col.neg_mut();
            }
        }
    }
}

/// Orthonormal basis of the null space of `m`, one vector per column.
pub fn null_space(m: &Mat, rtol: f64) -> Mat {
    null_space_with(m, |sv| threshold(sv, rtol))
}

/// Null space with an absolute singular-value cutoff.
pub fn null_space_abs(m: &Mat, atol: f64) -> Mat {
    null_space_with(m, |_| atol)
}

fn null_space_with(m: &Mat, cutoff: impl Fn(&[f64]) -> f64) -> Mat {
    let n = m.ncols();
    if m.nrows() == 0 {
        return Mat::identity(n, n);
    }
    let (sv, v) = svd_right(m);
    let tol = cutoff(&sv);
    let cols: Vec<usize> = (0..n)
        .filter(|&j| sv.get(j).is_none_or(|&s| s <= tol || s == 0.0))
        .collect();
    let mut basis = Mat::zeros(n, cols.len());
    for (k, &j) in cols.iter().enumerate() {
        basis.set_column(k, &v.column(j));
    }
    normalize_signs(&mut basis);
    basis
}

/// Orthonormal basis of the column space of `m`.
pub fn orth(m: &Mat, rtol: f64) -> Mat {
    if m.ncols() == 0 || m.nrows() == 0 {
        return Mat::zeros(m.nrows(), 0);
    }
    let svd = SVD::new(m.clone(), true, false);
    let u = svd.u.expect("requested U");
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let tol = threshold(&sv, rtol);
    let cols: Vec<usize> = (0..sv.len()).filter(|&j| sv[j] > tol && sv[j] > 0.0).collect();
    let mut basis = Mat::zeros(m.nrows(), cols.len());
    for (k, &j) in cols.iter().enumerate() {
        basis.set_column(k, &u.column(j));
    }
    basis
}

/// Moore-Penrose pseudoinverse with the crate-wide rank tolerance.
pub fn pinv(m: &Mat) -> Mat {
    if m.is_empty() {
        return Mat::zeros(m.ncols(), m.nrows());
    }
    let sv = singular_values(m);
    let eps = threshold(&sv, RANK_RTOL).max(f64::MIN_POSITIVE);
    SVD::new(m.clone(), true, true)
        .pseudo_inverse(eps)
        .expect("SVD computed with U and V")
}

/// Eigenvalues of a square matrix. 1x1 and 2x2 use closed forms.
pub fn eigenvalues(m: &Mat) -> Vec<Complex<f64>> {
    assert!(m.is_square());
    match m.nrows() {
        0 => Vec::new(),
        1 => vec![Complex::new(m[(0, 0)], 0.0)],
        2 => {
            let (l1, l2) = eig2(m);
            vec![l1, l2]
        }
        _ => m.complex_eigenvalues().iter().copied().collect(),
    }
}

pub fn is_hurwitz(m: &Mat) -> bool {
    eigenvalues(m).iter().all(|l| l.re < 0.0)
}

fn eig2(m: &Mat) -> (Complex<f64>, Complex<f64>) {
    let tr = m[(0, 0)] + m[(1, 1)];
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let half = tr / 2.0;
    let disc = half * half - det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        // Larger-magnitude root first, then Vieta for the other, to avoid
        // cancellation.
        let big = if half >= 0.0 { half + s } else { half - s };
        let small = if big != 0.0 { det / big } else { 0.0 };
        (Complex::new(big, 0.0), Complex::new(small, 0.0))
    } else {
        let s = (-disc).sqrt();
        (Complex::new(half, s), Complex::new(half, -s))
    }
}

/// `f(A)` for a 2x2 real matrix via Lagrange-Sylvester interpolation on its
/// eigenvalues; `df` is used when the eigenvalues coalesce.
fn apply_2x2<F, D>(a: &Mat, f: F, df: D) -> Mat
where
    F: Fn(Complex<f64>) -> Complex<f64>,
    D: Fn(Complex<f64>) -> Complex<f64>,
{
    let (l1, l2) = eig2(a);
    let scale = 1.0 + l1.norm().max(l2.norm());
    let (alpha0, alpha1) = if (l1 - l2).norm() <= 1.5e-8 * scale {
        let l = (l1 + l2) * 0.5;
        let d = df(l);
        (f(l) - l * d, d)
    } else {
        let (f1, f2) = (f(l1), f(l2));
        let denom = l1 - l2;
        ((l1 * f2 - l2 * f1) / denom, (f1 - f2) / denom)
    };
    let mut out = a * alpha1.re;
    out[(0, 0)] += alpha0.re;
    out[(1, 1)] += alpha0.re;
    out
}

/// `(e^z - 1) / z`, accurate near zero.
fn phi1(z: Complex<f64>) -> Complex<f64> {
    if z.norm() < 0.5 {
        let mut term = Complex::new(1.0, 0.0);
        let mut sum = term;
        for k in 2..24 {
            term = term * z / (k as f64);
            sum += term;
        }
        sum
    } else {
        (z.exp() - 1.0) / z
    }
}

/// Derivative of `phi1`: `(z e^z - e^z + 1) / z^2`.
fn dphi1(z: Complex<f64>) -> Complex<f64> {
    if z.norm() < 0.5 {
        // sum_{k>=1} k z^{k-1} / (k+1)!
        let mut fact = 2.0;
        let mut zp = Complex::new(1.0, 0.0);
        let mut sum = Complex::new(0.0, 0.0);
        for k in 1..24 {
            sum += zp * (k as f64 / fact);
            zp *= z;
            fact *= (k + 2) as f64;
        }
        sum
    } else {
        (z * z.exp() - z.exp() + 1.0) / (z * z)
    }
}

/// Matrix exponential `e^{A t}`.
pub fn expm_t(a: &Mat, t: f64) -> Mat {
    assert!(a.is_square());
    match a.nrows() {
        0 => Mat::zeros(0, 0),
        1 => Mat::from_element(1, 1, (a[(0, 0)] * t).exp()),
        2 => apply_2x2(a, |l| (l * t).exp(), |l| (l * t).exp() * t),
        _ => (a * t).exp(),
    }
}

/// `∫_0^t e^{A s} ds`, well defined for singular `A`.
pub fn expm_integral(a: &Mat, t: f64) -> Mat {
    assert!(a.is_square());
    match a.nrows() {
        0 => Mat::zeros(0, 0),
        1 => Mat::from_element(1, 1, (phi1(Complex::new(a[(0, 0)] * t, 0.0)) * t).re),
        2 => apply_2x2(a, |l| phi1(l * t) * t, |l| dphi1(l * t) * (t * t)),
        _ => expm_integral_augmented(a, t),
    }
}

/// Reference route for `∫_0^t e^{A s} ds` through the block exponential
/// `exp([[A, I], [0, 0]] t)`; independent of the closed forms above.
pub fn expm_integral_augmented(a: &Mat, t: f64) -> Mat {
    let n = a.nrows();
    let mut aug = Mat::zeros(2 * n, 2 * n);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * t));
    aug.view_mut((0, n), (n, n)).copy_from(&(Mat::identity(n, n) * t));
    aug.exp().view((0, n), (n, n)).into_owned()
}

/// Stack matrices vertically; all inputs must share a column count.
pub fn vstack(blocks: &[&Mat]) -> Mat {
    let ncols = blocks.first().map_or(0, |b| b.ncols());
    let nrows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(nrows, ncols);
    let mut r = 0;
    for b in blocks {
        assert_eq!(b.ncols(), ncols);
        out.view_mut((r, 0), (b.nrows(), ncols)).copy_from(*b);
        r += b.nrows();
    }
    out
}

/// Stack matrices horizontally; all inputs must share a row count.
pub fn hstack(blocks: &[&Mat]) -> Mat {
    let nrows = blocks.first().map_or(0, |b| b.nrows());
    let ncols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(nrows, ncols);
    let mut c = 0;
    for b in blocks {
        assert_eq!(b.nrows(), nrows);
        out.view_mut((0, c), (nrows, b.ncols())).copy_from(*b);
        c += b.ncols();
    }
    out
}

/// Intersection of two subspaces given by orthonormal bases.
pub fn intersect(u: &Mat, w: &Mat) -> Mat {
    let n = u.nrows();
    if u.ncols() == 0 || w.ncols() == 0 {
        return Mat::zeros(n, 0);
    }
    // x = U a = W b  <=>  [U, -W] [a; b] = 0
    let k = null_space(&hstack(&[u, &(-w)]), RANK_RTOL);
    if k.ncols() == 0 {
        return Mat::zeros(n, 0);
    }
    let a = k.rows(0, u.ncols()).into_owned();
    orth(&(u * a), RANK_RTOL)
}

/// Preimage `{x : A x ∈ span(S)}` for an orthonormal basis `S`.
pub fn preimage(a: &Mat, s: &Mat) -> Mat {
    let n = a.nrows();
    let proj_perp = Mat::identity(n, n) - s * s.transpose();
    // The projector can be numerically zero, so the cutoff is anchored to
    // the scale of A rather than to the projected matrix.
    null_space_abs(&(proj_perp * a), RANK_RTOL * a.norm().max(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sgn_of_zero_is_zero() {
        assert_eq!(sgn(0.0), 0.0);
        assert_eq!(sgn(-0.0), 0.0);
        assert_eq!(sgn(3.0), 1.0);
        assert_eq!(sgn(-1e-300), -1.0);
    }

    #[test]
    fn zero_times_infinity_is_skipped() {
        let m = Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 2.0]);
        let v = Vector::from_vec(vec![f64::INFINITY, 3.0]);
        let out = mul_skip_zero(&m, &v);
        assert_eq!(out, Vector::from_vec(vec![3.0, 6.0]));
    }

    #[test]
    fn null_space_of_wide_matrix() {
        let c = Mat::from_row_slice(1, 3, &[1.0, -1.0, 0.0]);
        let n = null_space(&c, RANK_RTOL);
        assert_eq!(n.ncols(), 2);
        assert!((&c * &n).norm() < 1e-14);
        assert_relative_eq!((n.transpose() * &n), Mat::identity(2, 2), epsilon = 1e-14);
    }

    #[test]
    fn closed_form_exponential_matches_pade() {
        let cases = [
            [-1.0, 2.0, 0.0, -3.0],   // distinct real
            [0.0, 0.0, 0.0, -10.1],   // singular, diagonal
            [-1.0, 1.0, 0.0, -1.0],   // defective
            [-0.5, 4.0, -4.0, -0.5],  // complex pair
            [0.0, 1.0, 0.0, 0.0],     // nilpotent
        ];
        for c in cases {
            let a = Mat::from_row_slice(2, 2, &c);
            for &t in &[0.0, 0.013, 0.7, 3.0] {
                let closed = expm_t(&a, t);
                let pade = (&a * t).exp();
                assert_relative_eq!(closed, pade, epsilon = 1e-10, max_relative = 1e-10);

                let closed_int = expm_integral(&a, t);
                let aug = expm_integral_augmented(&a, t);
                assert_relative_eq!(closed_int, aug, epsilon = 1e-10, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn integral_of_zero_matrix_is_t() {
        let a = Mat::zeros(2, 2);
        assert_relative_eq!(expm_integral(&a, 2.5), Mat::identity(2, 2) * 2.5, epsilon = 1e-15);
    }

    #[test]
    fn intersection_and_preimage() {
        let e = Mat::identity(3, 3);
        let u = e.columns(0, 2).into_owned();
        let w = e.columns(1, 2).into_owned();
        let i = intersect(&u, &w);
        assert_eq!(i.ncols(), 1);
        assert_relative_eq!(i[(1, 0)].abs(), 1.0, epsilon = 1e-12);

        // A maps e0 -> e1, e1 -> e2, e2 -> 0; preimage of span(e2) is span(e1, e2... )
        let a = Mat::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let s = e.columns(2, 1).into_owned();
        let p = preimage(&a, &s);
        assert_eq!(p.ncols(), 2);
        assert!((p.row(0)).norm() < 1e-12);
    }

    #[test]
    fn pinv_of_singular_diagonal() {
        let a = Mat::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -4.0]);
        let p = pinv(&a);
        assert_relative_eq!(p, Mat::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -0.25]), epsilon = 1e-15);
    }
}
