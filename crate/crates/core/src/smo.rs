//! Sliding-mode observer on the partitioned model, its switching-gain
//! check, the equivalent-output-injection (EOI) filter and the EOI-based
//! attack estimate.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::model::{self, CanonicalModel, UncertaintyBounds};

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverGains {
    /// Stable linear output-error gain `A22^s`.
    pub a22s: Mat,
    /// Diagonal of the switching gain `M`.
    pub m: Vector,
    /// Diagonal of the EOI filter gain `K`.
    pub k: Vector,
    /// Optional saturation width replacing `sgn` by `sat(e / width)`.
    pub boundary_layer: Option<f64>,
}

impl ObserverGains {
    pub fn validate(&self, outputs: usize) -> Result<()> {
        if self.a22s.nrows() != outputs || !self.a22s.is_square() {
            return Err(Error::Dimension(format!("A22s must be {outputs}x{outputs}")));
        }
        if self.m.len() != outputs || self.k.len() != outputs {
            return Err(Error::Dimension(format!("M and K need {outputs} diagonal entries")));
        }
        if !linalg::is_hurwitz(&self.a22s) {
            return Err(Error::InvalidParameter("A22s must have eigenvalues with negative real part".into()));
        }
        if self.m.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::InvalidParameter(format!("diag(M) must be positive, got {:?}", self.m.as_slice())));
        }
        if self.k.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::InvalidParameter(format!("diag(K) must be positive, got {:?}", self.k.as_slice())));
        }
        if let Some(w) = self.boundary_layer {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidParameter("boundary layer width must be positive".into()));
            }
        }
        Ok(())
    }

    /// `A22 - A22^s`, the part of `A22` the linear injection removes.
    pub fn a22_complement(&self, model: &CanonicalModel) -> Mat {
        &model.a22 - &self.a22s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState {
    pub x1_hat: Vector,
    pub x2_hat: Vector,
    pub nu_fil: Vector,
    pub last_e_y: Vector,
}

impl ObserverState {
    /// `x̂1 = 0`, `x̂2 = y - c`, so the first innovation is exactly zero.
    pub fn initialize(model: &CanonicalModel, y: &Vector) -> Self {
        let p = model.outputs();
        Self {
            x1_hat: Vector::zeros(model.n1()),
            x2_hat: y - &model.c,
            nu_fil: Vector::zeros(p),
            last_e_y: Vector::zeros(p),
        }
    }
}

/// `e_y = ŷ - y = x̂2 + c - y`.
pub fn innovation(x2_hat: &Vector, c: &Vector, y: &Vector) -> Vector {
    x2_hat + c - y
}

/// `ν = -M sgn(e_y)`, or its saturated version inside a boundary layer.
pub fn switching_injection(e_y: &Vector, m: &Vector, boundary_layer: Option<f64>) -> Vector {
    Vector::from_fn(e_y.len(), |i, _| {
        let s = match boundary_layer {
            None => linalg::sgn(e_y[i]),
            Some(w) => (e_y[i] / w).clamp(-1.0, 1.0),
        };
        -m[i] * s
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverDerivative {
    pub dx1: Vector,
    pub dx2: Vector,
    pub nu: Vector,
    pub e_y: Vector,
}

/// Observer right-hand side with the switching term computed from the
/// current innovation.
pub fn observer_derivative(
    obs: &ObserverState,
    y: &Vector,
    u: &Vector,
    model: &CanonicalModel,
    gains: &ObserverGains,
) -> ObserverDerivative {
    let e_y = innovation(&obs.x2_hat, &model.c, y);
    let nu = switching_injection(&e_y, &gains.m, gains.boundary_layer);
    let a22c = gains.a22_complement(model);
    let (dx1, dx2) = observer_rhs(&obs.x1_hat, &obs.x2_hat, &e_y, u, &nu, model, &a22c);
    ObserverDerivative { dx1, dx2, nu, e_y }
}

/// Observer right-hand side with an externally held switching term.
pub fn observer_rhs(
    x1_hat: &Vector,
    x2_hat: &Vector,
    e_y: &Vector,
    u: &Vector,
    nu: &Vector,
    model: &CanonicalModel,
    a22_complement: &Mat,
) -> (Vector, Vector) {
    let dx1 = &model.a11 * x1_hat + &model.a12 * x2_hat + &model.b1 * u - &model.a12 * e_y;
    let dx2 = &model.a21 * x1_hat + &model.a22 * x2_hat + &model.b2 * u - a22_complement * e_y + nu;
    (dx1, dx2)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainCheck {
    pub rhs: Vec<f64>,
    pub margin: Vec<f64>,
    pub passes: Vec<bool>,
}

impl GainCheck {
    pub fn all_pass(&self) -> bool {
        self.passes.iter().all(|&p| p)
    }
}

/// Elementwise `diag(M) > |A21| ẽ1 + |A22| ζ̄ + |E2| η̄ + |F2| Δ̄`.
pub fn validate_switching_gain(
    model: &CanonicalModel,
    gains: &ObserverGains,
    bounds: &UncertaintyBounds,
    e1_tilde: &Vector,
) -> GainCheck {
    let rhs = linalg::mul_skip_zero(&linalg::abs(&model.a21), e1_tilde)
        + linalg::abs(&model.a22) * bounds.zeta()
        + model.e2.abs() * bounds.eta_bar
        + model.f2.abs() * bounds.delta_bar;
    let margin = &gains.m - &rhs;
    let passes = margin.iter().map(|&x| x > 0.0).collect();
    GainCheck { rhs: rhs.iter().copied().collect(), margin: margin.iter().copied().collect(), passes }
}

/// Exact update of `ν̇_fil = K (ν - ν_fil)` over `dt` with `ν` held.
pub fn eoi_filter(nu_fil: &Vector, nu: &Vector, k: &Vector, dt: f64) -> Vector {
    Vector::from_fn(nu.len(), |i, _| nu[i] + (nu_fil[i] - nu[i]) * (-k[i] * dt).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AttackEstimate {
    pub estimate: f64,
    /// Worst-case estimation error caused by the model uncertainty.
    pub accuracy_bound: f64,
}

/// `Δ̂u = (F2 - A21 A11† F1)† ν_fil` with its accuracy bound
/// `|(F2 - A21 A11† F1)† (A21 A11† |E1| + |E2|) η̄|`.
pub fn estimate_attack(nu_fil: &Vector, model: &CanonicalModel, eta_bar: f64) -> Result<AttackEstimate> {
    let check = model::check_matching_rank(model);
    if !check.full_column_rank {
        return Err(Error::Assumption("F2 - A21 A11† F1 is rank deficient; attack estimate unavailable".into()));
    }
    let g = check.as_vector();
    let g_pinv = g.transpose() / g.norm_squared();
    let estimate = (&g_pinv * nu_fil)[0];
    let a11_pinv = linalg::pinv(&model.a11);
    let leak = &model.a21 * a11_pinv * model.e1.abs() + model.e2.abs();
    let accuracy_bound = ((&g_pinv * leak)[0] * eta_bar).abs();
    Ok(AttackEstimate { estimate, accuracy_bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn table_m() -> Vector {
        Vector::from_vec(vec![0.5, 11.5, 0.2, 2.0])
    }

    #[test]
    fn switching_examples() {
        let e = Vector::from_vec(vec![0.1, -0.1, 0.1, -0.1]);
        let nu = switching_injection(&e, &table_m(), None);
        assert_eq!(nu.as_slice(), &[-0.5, 11.5, -0.2, 2.0]);
        let zero = switching_injection(&Vector::zeros(4), &table_m(), None);
        assert_eq!(zero, Vector::zeros(4));
        let sat = switching_injection(&Vector::from_vec(vec![0.05, 0.0, 1.0, -1.0]), &table_m(), Some(0.1));
        assert_relative_eq!(sat, Vector::from_vec(vec![-0.25, 0.0, -0.2, 2.0]), epsilon = 1e-12);
    }

    #[test]
    fn eoi_filter_first_order_response() {
        let k = Vector::from_element(1, 1.0);
        let m = Vector::from_element(1, 3.0);
        let mut f = Vector::zeros(1);
        let dt = 1e-3;
        for _ in 0..2000 {
            f = eoi_filter(&f, &m, &k, dt);
        }
        assert_relative_eq!(f[0], 3.0 * (1.0 - (-2.0f64).exp()), epsilon = 1e-10);
        for _ in 0..40_000 {
            f = eoi_filter(&f, &m, &k, dt);
        }
        assert_relative_eq!(f[0], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn eoi_filter_averages_a_square_wave() {
        // ±m with duty ratio 0.7 at 10 Hz through a 0.1 Hz filter.
        let m = 2.0;
        let rho = 0.7;
        let k = Vector::from_element(1, 0.1);
        let dt = 1e-3;
        let mut f = Vector::zeros(1);
        let mut tail = Vec::new();
        for step in 0..200_000 {
            let phase = (step % 100) as f64 / 100.0;
            let nu = Vector::from_element(1, if phase < rho { m } else { -m });
            f = eoi_filter(&f, &nu, &k, dt);
            if step >= 100_000 {
                tail.push(f[0]);
            }
        }
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        assert_relative_eq!(mean, m * (2.0 * rho - 1.0), epsilon = 1e-3);
    }

    #[test]
    fn gains_validation() {
        let g = ObserverGains {
            a22s: Mat::identity(4, 4) * -0.1,
            m: table_m(),
            k: Vector::from_element(4, 1.0),
            boundary_layer: None,
        };
        assert!(g.validate(4).is_ok());
        let mut bad = g.clone();
        bad.a22s = Mat::identity(4, 4) * 0.1;
        assert!(bad.validate(4).is_err());
        let mut bad = g.clone();
        bad.m[2] = 0.0;
        assert!(bad.validate(4).is_err());
        assert!(g.validate(3).is_err());
    }
}
