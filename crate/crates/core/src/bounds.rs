//! Analytic bounds on the observer errors for the healthy system, their
//! limits, and the attack responses `r_Δ` and `r`.
//!
//! Decoupled coordinates of `e1` (see [`CanonicalModel::unobservable_dim`])
//! may carry a marginal mode; their bounds grow without limit and are
//! reported as `+inf`. They never enter `ė2` because the matching columns of
//! `A21` are zero.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Vector};
use crate::model::{CanonicalModel, UncertaintyBounds};
use crate::smo::ObserverGains;
use crate::vehicle::AttackSignal;

/// Healthy `e1` bounds at time `t` since observer start.
///
/// `ē1 = e^{A11 t} b + ∫_0^t e^{A11 s} ds (|A12| ζ̄ + |E1| η̄)`, `e̲1 = -ē1`.
pub fn e1_healthy_bounds(
    model: &CanonicalModel,
    zeta_bar: &Vector,
    eta_bar: f64,
    e1_init_bound: &Vector,
    t: f64,
) -> (Vector, Vector) {
    let w = e1_forcing(model, zeta_bar, eta_bar);
    let upper = linalg::expm_t(&model.a11, t) * e1_init_bound + linalg::expm_integral(&model.a11, t) * w;
    let lower = -&upper;
    (upper, lower)
}

fn e1_forcing(model: &CanonicalModel, zeta_bar: &Vector, eta_bar: f64) -> Vector {
    linalg::abs(&model.a12) * zeta_bar + model.e1.abs() * eta_bar
}

#[derive(Debug, Clone, PartialEq)]
pub struct E2DotBounds {
    pub upper: Vector,
    pub lower: Vector,
    /// Channels where the raw lower bound was negative and got clamped to 0.
    pub clamped: Vec<bool>,
}

/// `ē̇2⁰ = |A21| ē1 + |A22^{-s}| ζ̄ + |E2| η̄ + |A22^s| ζ̄ + M` and
/// `ė̲2⁰ = |A21| e̲1 - |A22^{-s}| ζ̄ - |E2| η̄ - |A22^s| ζ̄ + M`.
pub fn e2dot_healthy_bounds(
    model: &CanonicalModel,
    gains: &ObserverGains,
    zeta_bar: &Vector,
    eta_bar: f64,
    e1_upper: &Vector,
    e1_lower: &Vector,
) -> E2DotBounds {
    let a21 = linalg::abs(&model.a21);
    let fixed = e2dot_static_terms(model, gains, zeta_bar, eta_bar);
    let upper = linalg::mul_skip_zero(&a21, e1_upper) + &fixed + &gains.m;
    let raw_lower = linalg::mul_skip_zero(&a21, e1_lower) - &fixed + &gains.m;
    let clamped: Vec<bool> = raw_lower.iter().map(|&x| x < 0.0).collect();
    let lower = raw_lower.map(|x| x.max(0.0));
    E2DotBounds { upper, lower, clamped }
}

/// `|A22^{-s}| ζ̄ + |E2| η̄ + |A22^s| ζ̄` with `A22^{-s} = A22 - A22^s`.
fn e2dot_static_terms(model: &CanonicalModel, gains: &ObserverGains, zeta_bar: &Vector, eta_bar: f64) -> Vector {
    linalg::abs(&gains.a22_complement(model)) * zeta_bar
        + model.e2.abs() * eta_bar
        + linalg::abs(&gains.a22s) * zeta_bar
}

/// Precomputed healthy bounds for one configuration, evaluated as functions
/// of the time since the observer started.
#[derive(Debug, Clone)]
pub struct HealthyBounds {
    model: CanonicalModel,
    gains: ObserverGains,
    zeta_bar: Vector,
    eta_bar: f64,
    e1_init: Vector,
    forcing: Vector,
    e1_tilde: Vector,
}

impl HealthyBounds {
    pub fn new(
        model: &CanonicalModel,
        gains: &ObserverGains,
        bounds: &UncertaintyBounds,
        e1_init_bound: &Vector,
    ) -> Result<Self> {
        if e1_init_bound.len() != model.n1() {
            return Err(Error::Dimension(format!("e1 init bound needs {} entries", model.n1())));
        }
        if e1_init_bound.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidParameter("e1 init bound must be finite and nonnegative".into()));
        }
        let zeta_bar = bounds.zeta();
        let forcing = e1_forcing(model, &zeta_bar, bounds.eta_bar);
        let mut hb = Self {
            model: model.clone(),
            gains: gains.clone(),
            zeta_bar,
            eta_bar: bounds.eta_bar,
            e1_init: e1_init_bound.clone(),
            forcing,
            e1_tilde: Vector::zeros(model.n1()),
        };
        hb.e1_tilde = hb.envelope();
        Ok(hb)
    }

    pub fn model(&self) -> &CanonicalModel {
        &self.model
    }

    pub fn gains(&self) -> &ObserverGains {
        &self.gains
    }

    pub fn zeta_bar(&self) -> &Vector {
        &self.zeta_bar
    }

    pub fn eta_bar(&self) -> f64 {
        self.eta_bar
    }

    pub fn e1(&self, t: f64) -> (Vector, Vector) {
        let upper = linalg::expm_t(&self.model.a11, t) * &self.e1_init
            + linalg::expm_integral(&self.model.a11, t) * &self.forcing;
        let lower = -&upper;
        (upper, lower)
    }

    pub fn e2dot(&self, t: f64) -> E2DotBounds {
        let (up, lo) = self.e1(t);
        e2dot_healthy_bounds(&self.model, &self.gains, &self.zeta_bar, self.eta_bar, &up, &lo)
    }

    /// `ẽ2 = ζ̄`.
    pub fn e2_tilde(&self) -> &Vector {
        &self.zeta_bar
    }

    /// Global bound on `|e1|`: the larger of the initial-condition envelope
    /// and the limit.
    pub fn e1_tilde(&self) -> &Vector {
        &self.e1_tilde
    }

    /// `lim_{t→∞} ē1`. Decoupled coordinates driven by a marginal mode are
    /// `+inf`.
    pub fn e1_limit(&self) -> Vector {
        let n1 = self.model.n1();
        let k = self.model.unobservable_dim;
        let decoupled = self.model.a11.view((0, 0), (k, k)).into_owned();
        let mut limit = Vector::from_element(n1, f64::INFINITY);
        if linalg::is_hurwitz(&decoupled) || k == 0 {
            if let Some(inv) = self.model.a11.clone().try_inverse() {
                return -inv * &self.forcing;
            }
        }
        if k < n1 {
            let coupled = self.model.a11.view((k, k), (n1 - k, n1 - k)).into_owned();
            let w = self.forcing.rows(k, n1 - k).into_owned();
            if let Some(inv) = coupled.try_inverse() {
                limit.rows_mut(k, n1 - k).copy_from(&(-inv * w));
            }
        }
        limit
    }

    pub fn e2dot_limit(&self) -> E2DotBounds {
        let up = self.e1_limit();
        let lo = -&up;
        e2dot_healthy_bounds(&self.model, &self.gains, &self.zeta_bar, self.eta_bar, &up, &lo)
    }

    fn envelope(&self) -> Vector {
        let n1 = self.model.n1();
        let limit = self.e1_limit();
        let k = self.model.unobservable_dim;
        let slowest = self
            .model
            .a11_eigenvalues
            .iter()
            .skip(k)
            .map(|l| -l.re)
            .fold(f64::INFINITY, f64::min);
        let horizon = if slowest.is_finite() && slowest > 0.0 { 20.0 / slowest } else { 10.0 };
        let mut env = limit.abs();
        for i in 0..=2000 {
            let t = horizon * i as f64 / 2000.0;
            let (up, _) = self.e1(t);
            for j in 0..n1 {
                env[j] = env[j].max(up[j].abs());
            }
        }
        env
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticLimits {
    pub e1_tilde_inf: Vec<f64>,
    pub e2dot_upper_inf: Vec<f64>,
    pub e2dot_lower_inf: Vec<f64>,
    pub u_bar: Vec<f64>,
    pub t_bar_star: Vec<f64>,
    pub nu_fil_threshold: Vec<f64>,
}

/// Limits that set the EOI threshold
/// `ν̄_fil = e^{-k t*} Ū + (1 - e^{-k t*}) m` with `t* = 2 ζ̄ / lim ė̲2⁰` and
/// `Ū = |A21| lim ē1 + |A22^{-s}| ζ̄ + |E2| η̄ + |A22^s| ζ̄`.
pub fn asymptotic_limits(healthy: &HealthyBounds) -> Result<AsymptoticLimits> {
    let model = healthy.model();
    let gains = healthy.gains();
    let e1_inf = healthy.e1_limit();
    let e2dot = healthy.e2dot_limit();
    let p = model.outputs();
    let zeta = healthy.zeta_bar();

    let mut t_star = Vec::with_capacity(p);
    for i in 0..p {
        let lo = e2dot.lower[i];
        if e2dot.clamped[i] || lo <= 0.0 {
            if zeta[i] == 0.0 && lo >= 0.0 {
                t_star.push(0.0);
                continue;
            }
            return Err(Error::Assumption(format!(
                "limit of the lower |ė2| bound is not positive on channel {}; raise diag(M)[{}]",
                i + 1,
                i
            )));
        }
        t_star.push(2.0 * zeta[i] / lo);
    }

    let u_bar = linalg::mul_skip_zero(&linalg::abs(&model.a21), &e1_inf)
        + e2dot_static_terms(model, gains, zeta, healthy.eta_bar());
    let threshold: Vec<f64> = (0..p)
        .map(|i| {
            let decay = (-gains.k[i] * t_star[i]).exp();
            decay * u_bar[i] + (1.0 - decay) * gains.m[i]
        })
        .collect();

    Ok(AsymptoticLimits {
        e1_tilde_inf: e1_inf.iter().copied().collect(),
        e2dot_upper_inf: e2dot.upper.iter().copied().collect(),
        e2dot_lower_inf: e2dot.lower.iter().copied().collect(),
        u_bar: u_bar.iter().copied().collect(),
        t_bar_star: t_star,
        nu_fil_threshold: threshold,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackResponsePoint {
    pub t: f64,
    pub r_delta: Vector,
    pub r: Vector,
}

/// `r_Δ(t) = ∫_0^t e^{A11(t-s)} F1 Δu(s) ds` on the grid `0, h, 2h, …`,
/// trapezoid rule with one-sided attack values at each panel edge, and
/// `r = A21 r_Δ + F2 Δu(t)`.
pub fn r_delta_series(model: &CanonicalModel, attack: &AttackSignal, t_end: f64, h: f64) -> Result<Vec<AttackResponsePoint>> {
    if !(h > 0.0 && h.is_finite()) || !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidParameter("quadrature step and horizon must be positive".into()));
    }
    let steps = (t_end / h).round() as usize;
    let phi = linalg::expm_t(&model.a11, h);
    let mut r_delta = Vector::zeros(model.n1());
    let mut out = Vec::with_capacity(steps + 1);
    let point = |t: f64, rd: &Vector| AttackResponsePoint {
        t,
        r_delta: rd.clone(),
        r: &model.a21 * rd + &model.f2 * attack.value_at(t),
    };
    out.push(point(0.0, &r_delta));
    for k in 0..steps {
        let t0 = k as f64 * h;
        let t1 = (k + 1) as f64 * h;
        let left = attack.value_at(t0);
        let right = attack.value_left(t1);
        r_delta = &phi * (&r_delta + &model.f1 * (0.5 * h * left)) + &model.f1 * (0.5 * h * right);
        out.push(point(t1, &r_delta));
    }
    Ok(out)
}

/// `(r_Δ(t), r(t))` by trapezoid quadrature with step `h`.
pub fn r_delta_convolution(model: &CanonicalModel, attack: &AttackSignal, t: f64, h: f64) -> Result<(Vector, Vector)> {
    let steps = (t / h).ceil().max(1.0);
    let series = r_delta_series(model, attack, t, t / steps)?;
    let last = series.last().expect("series has at least one point");
    Ok((last.r_delta.clone(), last.r.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use crate::model::canonical_from_parts;
    use approx::assert_relative_eq;

    /// Two-state toy with a strictly stable `A11` and one output.
    fn toy() -> CanonicalModel {
        let a = Mat::from_row_slice(3, 3, &[-1.0, 0.5, 0.0, 0.0, -2.0, 1.0, 0.3, 0.0, -0.5]);
        let b = Mat::zeros(3, 1);
        let c = Mat::from_row_slice(1, 3, &[0.0, 0.0, 1.0]);
        let e = Vector::from_vec(vec![0.0, 1.0, 0.0]);
        let f = -&e;
        canonical_from_parts(&a, &b, &c, &e, &f, &Vector::zeros(1)).unwrap()
    }

    fn gains(p: usize, m: f64) -> ObserverGains {
        ObserverGains {
            a22s: Mat::identity(p, p) * -0.1,
            m: Vector::from_element(p, m),
            k: Vector::from_element(p, 1.0),
            boundary_layer: None,
        }
    }

    #[test]
    fn e1_bounds_at_zero_are_init() {
        let m = toy();
        let b = Vector::from_vec(vec![1.0, 2.0]);
        let (up, lo) = e1_healthy_bounds(&m, &Vector::from_element(1, 0.3), 0.5, &b, 0.0);
        assert_relative_eq!(up, b, epsilon = 1e-14);
        assert_relative_eq!(lo, -b, epsilon = 1e-14);
    }

    #[test]
    fn e1_bounds_vanish_without_uncertainty() {
        let m = toy();
        for t in [0.0, 0.5, 3.0] {
            let (up, lo) = e1_healthy_bounds(&m, &Vector::zeros(1), 0.0, &Vector::zeros(2), t);
            assert_eq!(up, Vector::zeros(2));
            assert_eq!(lo, Vector::zeros(2));
        }
    }

    #[test]
    fn e1_limit_matches_inverse() {
        let m = toy();
        let g = gains(1, 5.0);
        let bounds = UncertaintyBounds { eta_bar: 0.5, delta_bar: 1.0, zeta_bar: vec![0.3] };
        let hb = HealthyBounds::new(&m, &g, &bounds, &Vector::from_vec(vec![1.0, 1.0])).unwrap();
        let w = e1_forcing(&m, &bounds.zeta(), 0.5);
        let expected = -m.a11.clone().try_inverse().unwrap() * w;
        assert_relative_eq!(hb.e1_limit(), expected, epsilon = 1e-12);
        let (late, _) = hb.e1(200.0);
        assert_relative_eq!(late, expected, epsilon = 1e-9);
        for i in 0..2 {
            assert!(hb.e1_tilde()[i] >= expected[i].abs());
            assert!(hb.e1_tilde()[i] >= 1.0 - 1e-12);
        }
    }

    #[test]
    fn e2dot_only_switching_without_uncertainty() {
        let m = toy();
        let g = gains(1, 2.5);
        let z = Vector::zeros(2);
        let b = e2dot_healthy_bounds(&m, &g, &Vector::zeros(1), 0.0, &z, &z);
        assert_eq!(b.upper[0], 2.5);
        assert_eq!(b.lower[0], 2.5);
        assert!(!b.clamped[0]);
    }

    #[test]
    fn e2dot_lower_is_clamped() {
        let m = toy();
        let g = gains(1, 0.01);
        let up = Vector::from_element(2, 5.0);
        let b = e2dot_healthy_bounds(&m, &g, &Vector::from_element(1, 1.0), 1.0, &up, &(-&up));
        assert_eq!(b.lower[0], 0.0);
        assert!(b.clamped[0]);
        assert!(b.upper[0] > 0.0);
    }

    #[test]
    fn limits_degenerate_noiseless() {
        let m = toy();
        let g = gains(1, 3.0);
        let bounds = UncertaintyBounds { eta_bar: 0.0, delta_bar: 1.0, zeta_bar: vec![0.0] };
        let hb = HealthyBounds::new(&m, &g, &bounds, &Vector::zeros(2)).unwrap();
        let lim = asymptotic_limits(&hb).unwrap();
        assert_eq!(lim.t_bar_star, vec![0.0]);
        assert_eq!(lim.u_bar, vec![0.0]);
        assert_eq!(lim.nu_fil_threshold, vec![0.0]);
    }

    #[test]
    fn limits_saturate_at_m_for_fast_filter() {
        let m = toy();
        let mut g = gains(1, 3.0);
        g.k[0] = 1e6;
        let bounds = UncertaintyBounds { eta_bar: 0.1, delta_bar: 1.0, zeta_bar: vec![0.1] };
        let hb = HealthyBounds::new(&m, &g, &bounds, &Vector::zeros(2)).unwrap();
        let lim = asymptotic_limits(&hb).unwrap();
        assert!(lim.t_bar_star[0] > 0.0);
        assert_relative_eq!(lim.nu_fil_threshold[0], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn limits_reject_weak_gain() {
        let m = toy();
        let g = gains(1, 0.01);
        let bounds = UncertaintyBounds { eta_bar: 1.0, delta_bar: 1.0, zeta_bar: vec![1.0] };
        let hb = HealthyBounds::new(&m, &g, &bounds, &Vector::zeros(2)).unwrap();
        assert!(matches!(asymptotic_limits(&hb), Err(Error::Assumption(_))));
    }

    #[test]
    fn r_delta_zero_attack() {
        let m = toy();
        let (rd, r) = r_delta_convolution(&m, &AttackSignal::None, 3.0, 1e-2).unwrap();
        assert_eq!(rd, Vector::zeros(2));
        assert_eq!(r, Vector::zeros(1));
    }

    #[test]
    fn r_delta_constant_attack_limit() {
        let m = toy();
        let delta = 1.7;
        let (rd, r) = r_delta_convolution(&m, &AttackSignal::step(0.0, delta), 60.0, 1e-3).unwrap();
        let inv = m.a11.clone().try_inverse().unwrap();
        let rd_inf = -&inv * &m.f1 * delta;
        let r_inf = (&m.f2 - &m.a21 * &inv * &m.f1) * delta;
        assert_relative_eq!(rd, rd_inf, epsilon = 1e-6);
        assert_relative_eq!(r, r_inf, epsilon = 1e-6);
    }

    #[test]
    fn r_delta_step_matches_closed_form() {
        // ∫_{t0}^t e^{A11(t-s)} F1 δ ds = ∫_0^{t-t0} e^{A11 s} ds F1 δ.
        let m = toy();
        let (rd, _) = r_delta_convolution(&m, &AttackSignal::step(0.5, 2.0), 2.0, 1e-3).unwrap();
        let exact = linalg::expm_integral(&m.a11, 1.5) * &m.f1 * 2.0;
        assert_relative_eq!(rd, exact, epsilon = 1e-6);
    }
}
