//! Coupled two-car model, its uncertain/attacked reformulation, and the
//! transformation to the partitioned observer form.

use nalgebra::{Complex, DMatrix, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector, RANK_RTOL};
use crate::vehicle::VehicleParams;

/// States per car: position, velocity, acceleration.
pub const CAR_STATES: usize = 3;

/// Real parts within this distance of zero count as marginal.
pub const MARGINAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledModel {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub offset: Vector,
}

fn car_block(tau: f64) -> (Mat, Mat) {
    let a = Mat::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, -1.0 / tau]);
    let b = Mat::from_column_slice(3, 1, &[0.0, 0.0, 1.0 / tau]);
    (a, b)
}

/// Two-car model `ẋ = A x + B u`, `y = C x + c` with `x = [x_leader; x_follower]`.
pub fn coupled_model(leader: &VehicleParams, follower: &VehicleParams) -> Result<CoupledModel> {
    leader.validate()?;
    follower.validate()?;
    let (al, bl) = car_block(leader.tau);
    let (af, bf) = car_block(follower.tau);
    let mut a = Mat::zeros(6, 6);
    a.view_mut((0, 0), (3, 3)).copy_from(&al);
    a.view_mut((3, 3), (3, 3)).copy_from(&af);
    let mut b = Mat::zeros(6, 2);
    b.view_mut((0, 0), (3, 1)).copy_from(&bl);
    b.view_mut((3, 1), (3, 1)).copy_from(&bf);
    #[rustfmt::skip]
    let c = Mat::from_row_slice(4, 6, &[
        -1.0,  0.0, 0.0, 1.0, 0.0, 0.0,
         0.0, -1.0, 0.0, 0.0, 1.0, 0.0,
         0.0,  0.0, 0.0, 0.0, 1.0, 0.0,
         0.0,  0.0, 0.0, 0.0, 0.0, 1.0,
    ]);
    let offset = Vector::from_vec(vec![-follower.length, 0.0, 0.0, 0.0]);
    Ok(CoupledModel { a, b, c, offset })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyBounds {
    /// Bound on the leader-model uncertainty `η`.
    pub eta_bar: f64,
    /// Bound on the injected attack `Δu`.
    pub delta_bar: f64,
    /// Per-channel sensor noise bound.
    pub zeta_bar: Vec<f64>,
}

impl UncertaintyBounds {
    pub fn zeta(&self) -> Vector {
        Vector::from_column_slice(&self.zeta_bar)
    }

    pub fn validate(&self, outputs: usize) -> Result<()> {
        if self.zeta_bar.len() != outputs {
            return Err(Error::Dimension(format!(
                "zeta_bar has {} entries, expected {outputs}",
                self.zeta_bar.len()
            )));
        }
        let ok = self.eta_bar.is_finite()
            && self.eta_bar >= 0.0
            && self.delta_bar.is_finite()
            && self.delta_bar >= 0.0
            && self.zeta_bar.iter().all(|z| z.is_finite() && *z >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid uncertainty bounds {self:?}")))
        }
    }
}

/// `ẋ = A x + B u_r + E η + F Δu` with the leader's time constant replaced
/// by its nominal value `r_tau * tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertainModel {
    pub nominal: CoupledModel,
    pub e: Vector,
    pub f: Vector,
    pub bounds: UncertaintyBounds,
    pub r_tau: f64,
    pub tau_leader_nominal: f64,
}

pub fn assemble_uncertain(
    leader: &VehicleParams,
    follower: &VehicleParams,
    r_tau: f64,
    bounds: UncertaintyBounds,
) -> Result<UncertainModel> {
    if !(r_tau.is_finite() && r_tau > 0.0) {
        return Err(Error::InvalidParameter(format!("r_tau must be > 0, got {r_tau}")));
    }
    bounds.validate(4)?;
    let tau_hat = r_tau * leader.tau;
    let nominal_leader = VehicleParams { tau: tau_hat, length: leader.length };
    let nominal = coupled_model(&nominal_leader, follower)?;
    let mut e = Vector::zeros(6);
    e[2] = 1.0 / tau_hat;
    let f = -&e;
    Ok(UncertainModel { nominal, e, f, bounds, r_tau, tau_leader_nominal: tau_hat })
}

/// Leader-model uncertainty `η = (r_τ - 1)(u - a)` seen by the follower.
pub fn model_uncertainty(r_tau: f64, u_leader: f64, a_leader: f64) -> f64 {
    (r_tau - 1.0) * (u_leader - a_leader)
}

/// Partitioned form with `z = T x`, `z2 = C x`:
///
/// ```text
/// ż1 = A11 z1 + A12 z2 + B1 u + E1 η + F1 Δu
/// ż2 = A21 z1 + A22 z2 + B2 u + E2 η + F2 Δu
/// y  = z2 + c + ζ
/// ```
///
/// The first `unobservable_dim` coordinates of `z1` span the unobservable
/// subspace of `(A11, A21)`: they never reach `ż2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalModel {
    pub a11: Mat,
    pub a12: Mat,
    pub a21: Mat,
    pub a22: Mat,
    pub b1: Mat,
    pub b2: Mat,
    pub e1: Vector,
    pub e2: Vector,
    pub f1: Vector,
    pub f2: Vector,
    pub c: Vector,
    pub t: Mat,
    pub t_inv: Mat,
    pub unobservable_dim: usize,
    pub a11_eigenvalues: Vec<Complex<f64>>,
}

impl CanonicalModel {
    pub fn n1(&self) -> usize {
        self.a11.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.a22.nrows()
    }

    /// True only if every eigenvalue of `A11` has a strictly negative real part.
    pub fn a11_strictly_hurwitz(&self) -> bool {
        self.a11_eigenvalues.iter().all(|l| l.re < -MARGINAL_TOL)
    }

    /// Eigenvalues of `A11` on or right of the imaginary axis (within
    /// [`MARGINAL_TOL`]); all of them live in the decoupled block.
    pub fn marginal_modes(&self) -> Vec<Complex<f64>> {
        self.a11_eigenvalues.iter().copied().filter(|l| l.re >= -MARGINAL_TOL).collect()
    }

    pub fn to_canonical(&self, x: &Vector) -> (Vector, Vector) {
        let z = &self.t * x;
        let n1 = self.n1();
        (z.rows(0, n1).into_owned(), z.rows(n1, z.len() - n1).into_owned())
    }

    pub fn from_canonical(&self, z1: &Vector, z2: &Vector) -> Vector {
        let mut z = Vector::zeros(z1.len() + z2.len());
        z.rows_mut(0, z1.len()).copy_from(z1);
        z.rows_mut(z1.len(), z2.len()).copy_from(z2);
        &self.t_inv * z
    }

    /// Output map in transformed coordinates, `C T⁻¹ = [0 | I]` up to rounding.
    pub fn output_map(&self, c: &Mat) -> Mat {
        c * &self.t_inv
    }
}

pub fn canonical_transform(m: &UncertainModel) -> Result<CanonicalModel> {
    canonical_from_parts(&m.nominal.a, &m.nominal.b, &m.nominal.c, &m.e, &m.f, &m.nominal.offset)
}

/// Build the partitioned form for a generic `(A, B, C, E, F)`.
///
/// `T = [Nᵀ; C]` where the columns of `N` are an orthonormal basis of
/// `null(C)`, rotated so that the unobservable subspace of `(A11, A21)` comes
/// first. Fails when `C` is rank deficient or when `A11` has a non-stable mode
/// that `A21` can see (the output-error bounds would then diverge).
pub fn canonical_from_parts(
    a: &Mat,
    b: &Mat,
    c: &Mat,
    e: &Vector,
    f: &Vector,
    offset: &Vector,
) -> Result<CanonicalModel> {
    let n = a.nrows();
    let p = c.nrows();
    if !a.is_square() || c.ncols() != n || b.nrows() != n || e.len() != n || f.len() != n || offset.len() != p {
        return Err(Error::Dimension("inconsistent (A, B, C, E, F, c) shapes".into()));
    }
    if linalg::rank(c, RANK_RTOL) != p {
        return Err(Error::Assumption("output matrix C is not full row rank".into()));
    }
    let n1 = n - p;

    let n0 = linalg::null_space(c, RANK_RTOL);
    let a11_0 = n0.transpose() * a * &n0;
    let a21_0 = c * a * &n0;

    // Unobservable subspace of (A11, A21) first, its complement after.
    let mut obs = Vec::with_capacity(n1);
    let mut blk = a21_0.clone();
    for _ in 0..n1.max(1) {
        obs.push(blk.clone());
        blk = &blk * &a11_0;
    }
    let obs_refs: Vec<&Mat> = obs.iter().collect();
    let unobs = if n1 == 0 { Mat::zeros(0, 0) } else { linalg::null_space(&linalg::vstack(&obs_refs), RANK_RTOL) };
    let k = unobs.ncols();
    let q = if k == 0 || k == n1 {
        Mat::identity(n1, n1)
    } else {
        let complement = linalg::null_space(&unobs.transpose(), RANK_RTOL);
        linalg::hstack(&[&unobs, &complement])
    };
    let mut basis = &n0 * q;
    linalg::normalize_signs(&mut basis);

    let t = linalg::vstack(&[&basis.transpose(), c]);
    let c_pinv = c.transpose() * (c * c.transpose()).try_inverse().ok_or_else(|| {
        Error::Assumption("C Cᵀ is singular".into())
    })?;
    let t_inv = linalg::hstack(&[&basis, &c_pinv]);

    let scale = a.amax().max(1.0);
    let mut at = chop(&t * a * &t_inv, scale);
    let bt = chop(&t * b, b.amax().max(1.0));
    let et = chop(&t * e, e.amax().max(1.0));
    let ft = chop(&t * f, f.amax().max(1.0));
    // Structural zeros of the decoupled block: it neither reaches the
    // outputs nor is driven by the coupled coordinates.
    at.view_mut((n1, 0), (p, k)).fill(0.0);
    at.view_mut((k, 0), (n1 - k, k)).fill(0.0);

    let a11 = at.view((0, 0), (n1, n1)).into_owned();
    let a12 = at.view((0, n1), (n1, p)).into_owned();
    let a21 = at.view((n1, 0), (p, n1)).into_owned();
    let a22 = at.view((n1, n1), (p, p)).into_owned();

    let coupled = a11.view((k, k), (n1 - k, n1 - k)).into_owned();
    let decoupled = a11.view((0, 0), (k, k)).into_owned();
    let coupled_eigs = linalg::eigenvalues(&coupled);
    let decoupled_eigs = linalg::eigenvalues(&decoupled);
    if let Some(l) = coupled_eigs.iter().find(|l| l.re >= 0.0) {
        return Err(Error::Assumption(format!(
            "A11 has a non-Hurwitz mode {l} visible through A21; the reduced error dynamics are unstable"
        )));
    }
    if let Some(l) = decoupled_eigs.iter().find(|l| l.re > MARGINAL_TOL) {
        return Err(Error::Assumption(format!("A11 has an unstable decoupled mode {l}")));
    }
    let mut a11_eigenvalues = decoupled_eigs;
    a11_eigenvalues.extend(coupled_eigs);

    Ok(CanonicalModel {
        a11,
        a12,
        a21,
        a22,
        b1: bt.rows(0, n1).into_owned(),
        b2: bt.rows(n1, p).into_owned(),
        e1: et.rows(0, n1).into_owned(),
        e2: et.rows(n1, p).into_owned(),
        f1: ft.rows(0, n1).into_owned(),
        f2: ft.rows(n1, p).into_owned(),
        c: offset.clone(),
        t,
        t_inv,
        unobservable_dim: k,
        a11_eigenvalues,
    })
}

/// Zero out round-off entries relative to `scale`.
fn chop<R: nalgebra::Dim, C: nalgebra::Dim, S>(mut m: nalgebra::Matrix<f64, R, C, S>, scale: f64) -> nalgebra::Matrix<f64, R, C, S>
where
    S: nalgebra::StorageMut<f64, R, C>,
{
    let tol = 64.0 * f64::EPSILON * scale;
    m.iter_mut().filter(|x| x.abs() < tol).for_each(|x| *x = 0.0);
    m
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantZero {
    pub re: f64,
    pub im: f64,
    /// The zero is an unobservable eigenvalue of `(A, C)`.
    pub unobservable_mode: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantZeros {
    pub zeros: Vec<InvariantZero>,
    /// The pencil loses rank for every `s`; no finite zero set exists.
    pub degenerate: bool,
}

impl InvariantZeros {
    /// Real parts within [`MARGINAL_TOL`] of zero count as on the axis.
    pub fn all_in_open_left_half_plane(&self) -> bool {
        !self.degenerate && self.zeros.iter().all(|z| z.re < -MARGINAL_TOL)
    }
}

/// Smallest singular value of the Rosenbrock pencil `[sI - A, -F; C, 0]`.
pub fn pencil_min_singular_value(a: &Mat, f: &Mat, c: &Mat, s: Complex<f64>) -> f64 {
    let n = a.nrows();
    let m = f.ncols();
    let p = c.nrows();
    let mut pen = DMatrix::<Complex<f64>>::zeros(n + p, n + m);
    for i in 0..n {
        for j in 0..n {
            let d = if i == j { s } else { Complex::new(0.0, 0.0) };
            pen[(i, j)] = d - Complex::new(a[(i, j)], 0.0);
        }
        for j in 0..m {
            pen[(i, n + j)] = Complex::new(-f[(i, j)], 0.0);
        }
    }
    for i in 0..p {
        for j in 0..n {
            pen[(n + i, j)] = Complex::new(c[(i, j)], 0.0);
        }
    }
    SVD::new(pen, false, false).singular_values.iter().copied().fold(f64::INFINITY, f64::min)
}

fn is_unobservable_mode(a: &Mat, c: &Mat, s: Complex<f64>) -> bool {
    let n = a.nrows();
    let mut m = DMatrix::<Complex<f64>>::zeros(n + c.nrows(), n);
    for i in 0..n {
        for j in 0..n {
            let d = if i == j { s } else { Complex::new(0.0, 0.0) };
            m[(i, j)] = d - Complex::new(a[(i, j)], 0.0);
        }
    }
    for i in 0..c.nrows() {
        for j in 0..n {
            m[(n + i, j)] = Complex::new(c[(i, j)], 0.0);
        }
    }
    let sv: Vec<f64> = SVD::new(m, false, false).singular_values.iter().copied().collect();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    smin <= 1e-8 * smax.max(1.0)
}

/// Finite invariant zeros of `(A, F, C)`: the values of `s` where the
/// Rosenbrock pencil `[sI - A, -F; C, 0]` drops rank.
///
/// Computed as the spectrum of `A + F K` restricted to the largest
/// `(A, F)`-invariant subspace inside `ker C` (for any friend `K`), which
/// deflates the infinite eigenvalues of the pencil without a QZ solver.
pub fn check_invariant_zeros(a: &Mat, f: &Mat, c: &Mat) -> Result<InvariantZeros> {
    let n = a.nrows();
    if !a.is_square() || f.nrows() != n || c.ncols() != n {
        return Err(Error::Dimension("inconsistent (A, F, C) shapes".into()));
    }
    let ker_c = linalg::null_space(c, RANK_RTOL);
    let im_f = linalg::orth(f, RANK_RTOL);
    let mut v = ker_c.clone();
    for _ in 0..=n {
        if v.ncols() == 0 {
            break;
        }
        let span = linalg::orth(&linalg::hstack(&[&v, &im_f]), RANK_RTOL);
        let next = linalg::intersect(&ker_c, &linalg::preimage(a, &span));
        let done = next.ncols() == v.ncols();
        v = next;
        if done {
            break;
        }
    }
    if v.ncols() == 0 {
        return Ok(InvariantZeros { zeros: Vec::new(), degenerate: false });
    }
    let vf = linalg::hstack(&[&v, &(-&im_f)]);
    if linalg::rank(&vf, RANK_RTOL) < vf.ncols() {
        return Ok(InvariantZeros { zeros: Vec::new(), degenerate: true });
    }
    let av = a * &v;
    let sol = linalg::pinv(&vf) * &av;
    let x = sol.rows(0, v.ncols()).into_owned();
    let resid = (&vf * &sol - &av).norm();
    if resid > 1e-8 * (1.0 + av.norm()) {
        return Err(Error::Assumption(format!("invariant-subspace restriction failed (residual {resid:e})")));
    }
    let mut zeros: Vec<InvariantZero> = linalg::eigenvalues(&x)
        .into_iter()
        .map(|s| InvariantZero { re: s.re, im: s.im, unobservable_mode: is_unobservable_mode(a, c, s) })
        .collect();
    zeros.sort_by(|p, q| p.re.total_cmp(&q.re).then(p.im.total_cmp(&q.im)));
    Ok(InvariantZeros { zeros, degenerate: false })
}

pub fn invariant_zeros_of(m: &UncertainModel) -> Result<InvariantZeros> {
    let f = Mat::from_column_slice(m.f.len(), 1, m.f.as_slice());
    check_invariant_zeros(&m.nominal.a, &f, &m.nominal.c)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchingRank {
    /// `F2 - A21 A11† F1`.
    pub matrix: Vec<f64>,
    pub singular_values: Vec<f64>,
    pub full_column_rank: bool,
}

impl MatchingRank {
    pub fn as_vector(&self) -> Vector {
        Vector::from_column_slice(&self.matrix)
    }
}

/// Outcome of the structural checks a configuration must pass before the
/// observer is built.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub zeros: InvariantZeros,
    pub matching: MatchingRank,
    /// Hard failures; the detector refuses to run.
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl AssumptionReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn into_result(self) -> Result<Self> {
        if self.is_ok() {
            Ok(self)
        } else {
            Err(Error::Assumption(self.errors.join("; ")))
        }
    }
}

/// Invariant-zero and matching-rank checks on `(A, F, C)` and its
/// partitioned form.
///
/// A zero on the imaginary axis is accepted with a warning when it is an
/// unobservable mode of `(A, C)`: such a mode sits in the decoupled block of
/// `A11` and never reaches the output error.
pub fn assess_assumptions(a: &Mat, f: &Mat, c: &Mat, canonical: &CanonicalModel) -> Result<AssumptionReport> {
    let zeros = check_invariant_zeros(a, f, c)?;
    let matching = check_matching_rank(canonical);
    let mut errors = Vec::new();
    let mut warnings = Vec::new();
    if zeros.degenerate {
        errors.push("the pencil [sI - A, -F; C, 0] is rank deficient for every s".to_string());
    }
    for z in &zeros.zeros {
        if z.re > MARGINAL_TOL {
            errors.push(format!("invariant zero {:.6}{:+.6}i lies in the right half-plane", z.re, z.im));
        } else if z.re >= -MARGINAL_TOL {
            if z.unobservable_mode {
                warnings.push(format!(
                    "invariant zero {:.3e}{:+.3e}i on the imaginary axis (unobservable mode, decoupled from the outputs)",
                    z.re, z.im
                ));
            } else {
                errors.push(format!("invariant zero {:.3e}{:+.3e}i on the imaginary axis", z.re, z.im));
            }
        }
    }
    if !matching.full_column_rank {
        errors.push("F2 - A21 A11† F1 is not full column rank".to_string());
    }
    for l in canonical.marginal_modes() {
        warnings.push(format!("A11 has the marginal decoupled eigenvalue {:.3e}{:+.3e}i", l.re, l.im));
    }
    Ok(AssumptionReport { zeros, matching, errors, warnings })
}

pub fn assess_uncertain(m: &UncertainModel, canonical: &CanonicalModel) -> Result<AssumptionReport> {
    let f = Mat::from_column_slice(m.f.len(), 1, m.f.as_slice());
    assess_assumptions(&m.nominal.a, &f, &m.nominal.c, canonical)
}

/// Attack-to-output gain at steady state and its rank verdict.
pub fn check_matching_rank(m: &CanonicalModel) -> MatchingRank {
    let g = matching_matrix(m);
    let gm = Mat::from_column_slice(g.len(), 1, g.as_slice());
    let singular_values = linalg::singular_values(&gm);
    let full_column_rank = singular_values.first().is_some_and(|&s| s > 1e-12);
    MatchingRank { matrix: g.iter().copied().collect(), singular_values, full_column_rank }
}

pub(crate) fn matching_matrix(m: &CanonicalModel) -> Vector {
    &m.f2 - &m.a21 * linalg::pinv(&m.a11) * &m.f1
}
