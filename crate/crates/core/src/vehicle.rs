//! Longitudinal two-car dynamics, the follower's gap controller, the tampered
//! V2V channel and the noisy sensor model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Number of measured channels per car.
pub const OUTPUTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// Engine time constant [s].
    pub tau: f64,
    /// Car length [m].
    pub length: f64,
}

impl VehicleParams {
    pub fn new(tau: f64, length: f64) -> Result<Self> {
        let p = Self { tau, length };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::InvalidParameter(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "length must be > 0, got {}",
                self.length
            )));
        }
        Ok(())
    }
}

/// Longitudinal state. `p` is the signed distance from the rear bumper to the
/// intersection, negative while approaching.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub p: f64,
    pub v: f64,
    pub a: f64,
}

impl VehicleState {
    pub const fn new(p: f64, v: f64, a: f64) -> Self {
        Self { p, v, a }
    }

    pub fn is_finite(&self) -> bool {
        self.p.is_finite() && self.v.is_finite() && self.a.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.p, self.v, self.a]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self::new(s[0], s[1], s[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaccGains {
    /// Time headway [s].
    pub h: f64,
    /// Standstill distance [m].
    #[serde(rename = "r")]
    pub r_standstill: f64,
    pub kp: f64,
    pub kd: f64,
}

impl Default for CaccGains {
    fn default() -> Self {
        Self { h: 0.7, r_standstill: 1.5, kp: 0.2, kd: 0.7 }
    }
}

impl CaccGains {
    pub fn validate(&self) -> Result<()> {
        let ok = self.h.is_finite()
            && self.h > 0.0
            && self.r_standstill.is_finite()
            && self.r_standstill >= 0.0
            && self.kp.is_finite()
            && self.kp > 0.0
            && self.kd.is_finite()
            && self.kd > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid controller gains {self:?}")))
        }
    }

    /// Desired gap `r + h v` at follower speed `v`.
    pub fn desired_gap(&self, v: f64) -> f64 {
        self.r_standstill + self.h * v
    }
}

/// Additive injection on the communicated leader input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackSignal {
    #[default]
    None,
    /// `magnitude` for `t >= onset`, zero before.
    Step { onset: f64, magnitude: f64 },
    /// Zero-order hold over `(time, value)` samples sorted by time; zero
    /// before the first sample.
    Piecewise { samples: Vec<(f64, f64)> },
}

impl AttackSignal {
    pub fn step(onset: f64, magnitude: f64) -> Self {
        Self::Step { onset, magnitude }
    }

    /// Right-continuous value at `t`.
    pub fn value_at(&self, t: f64) -> f64 {
        match self {
            Self::None => 0.0,
            Self::Step { onset, magnitude } => {
                if t >= *onset {
                    *magnitude
                } else {
                    0.0
                }
            }
            Self::Piecewise { samples } => samples
                .iter()
                .take_while(|(ts, _)| *ts <= t)
                .last()
                .map_or(0.0, |&(_, v)| v),
        }
    }

    /// Left limit at `t`, needed by quadrature rules that straddle a jump.
    pub fn value_left(&self, t: f64) -> f64 {
        match self {
            Self::None => 0.0,
            Self::Step { onset, magnitude } => {
                if t > *onset {
                    *magnitude
                } else {
                    0.0
                }
            }
            Self::Piecewise { samples } => samples
                .iter()
                .take_while(|(ts, _)| *ts < t)
                .last()
                .map_or(0.0, |&(_, v)| v),
        }
    }

    /// Largest absolute injection over all time.
    pub fn peak(&self) -> f64 {
        match self {
            Self::None => 0.0,
            Self::Step { magnitude, .. } => magnitude.abs(),
            Self::Piecewise { samples } => samples.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max),
        }
    }

    /// First time the injection becomes nonzero, if ever.
    pub fn onset(&self) -> Option<f64> {
        match self {
            Self::None => None,
            Self::Step { onset, magnitude } => (*magnitude != 0.0).then_some(*onset),
            Self::Piecewise { samples } => samples.iter().find(|(_, v)| *v != 0.0).map(|(t, _)| *t),
        }
    }

    /// Reject attacks outside the known bound `delta_bar`.
    pub fn validate(&self, delta_bar: f64) -> Result<()> {
        if let Self::Piecewise { samples } = self {
            if samples.windows(2).any(|w| w[1].0 < w[0].0) {
                return Err(Error::InvalidParameter("attack samples must be sorted by time".into()));
            }
            if samples.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
                return Err(Error::NonFinite("attack samples"));
            }
        }
        if let Self::Step { onset, magnitude } = self {
            if !onset.is_finite() || !magnitude.is_finite() {
                return Err(Error::NonFinite("attack step"));
            }
        }
        let peak = self.peak();
        if peak > delta_bar {
            return Err(Error::AttackOutOfBounds { magnitude: peak, bound: delta_bar });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    #[default]
    Uniform,
    /// Gaussian with `sigma = bound / 3`, resampled until inside the bound.
    TruncatedGaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub bound_per_channel: [f64; OUTPUTS],
    #[serde(default)]
    pub distribution: NoiseDistribution,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if self.bound_per_channel.iter().all(|b| b.is_finite() && *b > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "noise bounds must be positive, got {:?}",
                self.bound_per_channel
            )))
        }
    }
}

/// Seeded, bounded sensor-noise generator.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    rng: ChaCha8Rng,
    bound: [f64; OUTPUTS],
    distribution: NoiseDistribution,
}

impl NoiseSource {
    pub fn new(spec: &NoiseSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            bound: spec.bound_per_channel,
            distribution: spec.distribution,
        })
    }

    pub fn sample(&mut self) -> Vector {
        let mut out = Vector::zeros(OUTPUTS);
        for (i, &b) in self.bound.iter().enumerate() {
            out[i] = match self.distribution {
                NoiseDistribution::Uniform => self.rng.random_range(-b..=b),
                NoiseDistribution::TruncatedGaussian => {
                    let normal = Normal::new(0.0, b / 3.0).expect("positive sigma");
                    loop {
                        let x: f64 = normal.sample(&mut self.rng);
                        if x.abs() <= b {
                            break x;
                        }
                    }
                }
            };
        }
        out
    }
}

/// Time derivative of one car: `(v, a, (u - a) / tau)`.
pub fn car_derivative(state: VehicleState, input: f64, params: VehicleParams) -> Result<VehicleState> {
    if !state.is_finite() || !input.is_finite() {
        return Err(Error::NonFinite("car state or input"));
    }
    Ok(VehicleState::new(state.v, state.a, (input - state.a) / params.tau))
}

/// Spacing error and its time derivative for the follower.
///
/// The gap is measured from the leader's rear bumper to the follower's front,
/// `p_l - p_f - L`, and the error is positive when the follower is closer
/// than the headway policy `r + h v_f` asks for.
pub fn spacing_error(
    follower: VehicleState,
    leader: VehicleState,
    gains: &CaccGains,
    leader_length: f64,
) -> (f64, f64) {
    let gap = leader.p - follower.p - leader_length;
    let eps = gains.desired_gap(follower.v) - gap;
    let eps_dot = (follower.v - leader.v) + gains.h * follower.a;
    (eps, eps_dot)
}

/// Follower input derivative `-(u + kp e + kd ė - u_received) / h`.
pub fn cacc_control(
    follower: VehicleState,
    leader: VehicleState,
    u_prev: f64,
    received_leader_input: f64,
    gains: &CaccGains,
    leader_length: f64,
) -> Result<f64> {
    if !follower.is_finite() || !leader.is_finite() || !u_prev.is_finite() || !received_leader_input.is_finite()
    {
        return Err(Error::NonFinite("controller input"));
    }
    let (eps, eps_dot) = spacing_error(follower, leader, gains, leader_length);
    Ok(-(u_prev + gains.kp * eps + gains.kd * eps_dot - received_leader_input) / gains.h)
}

/// Received leader input `u + Δu(t)` after the man-in-the-middle.
pub fn apply_attack(u_leader: f64, attack: &AttackSignal, t: f64, delta_bar: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("attack evaluated at negative time {t}")));
    }
    let du = attack.value_at(t);
    if du.abs() > delta_bar {
        return Err(Error::AttackOutOfBounds { magnitude: du.abs(), bound: delta_bar });
    }
    Ok(u_leader + du)
}

/// Follower measurement `[p_f - p_l - L, v_f - v_l, v_f, a_f] + ζ`.
pub fn measure(follower: VehicleState, leader: VehicleState, length: f64, noise: &Vector) -> Vector {
    Vector::from_vec(vec![
        follower.p - leader.p - length + noise[0],
        follower.v - leader.v + noise[1],
        follower.v + noise[2],
        follower.a + noise[3],
    ])
}

/// Crash predicate at the moment the follower's front reaches the
/// intersection (`p_f = -L_f`): the leader is still inside, `-L_l < p_l < 0`.
pub fn leader_occupies_intersection(leader_p: f64, leader_length: f64) -> bool {
    -leader_length < leader_p && leader_p < 0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn table_one_leader() -> VehicleParams {
        VehicleParams::new(0.11, 4.0).unwrap()
    }

    #[test]
    fn car_derivative_examples() {
        let d = car_derivative(VehicleState::new(-40.0, 8.0, 0.0), 0.0, table_one_leader()).unwrap();
        assert_eq!(d, VehicleState::new(8.0, 0.0, 0.0));

        let p = VehicleParams::new(0.1, 4.0).unwrap();
        let d = car_derivative(VehicleState::new(0.0, 0.0, 1.0), 0.0, p).unwrap();
        assert_relative_eq!(d.a, -10.0, epsilon = 1e-12);

        let d = car_derivative(VehicleState::new(-50.0, 10.0, 0.5), 1.0, p).unwrap();
        assert_eq!((d.p, d.v), (10.0, 0.5));
        assert_relative_eq!(d.a, 5.0, epsilon = 1e-12);
    }

    #[test]
    fn car_derivative_rejects_nan() {
        let p = table_one_leader();
        assert!(car_derivative(VehicleState::new(f64::NAN, 0.0, 0.0), 0.0, p).is_err());
        assert!(car_derivative(VehicleState::default(), f64::INFINITY, p).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(VehicleParams::new(0.0, 4.0).is_err());
        assert!(VehicleParams::new(0.1, -1.0).is_err());
    }

    #[test]
    fn cacc_equilibrium_and_unit_error() {
        let g = CaccGains::default();
        // Leader and follower at 8 m/s with the desired 7.1 m gap.
        let leader = VehicleState::new(0.0, 8.0, 0.0);
        let follower = VehicleState::new(-7.1 - 4.0, 8.0, 0.0);
        let (eps, eps_dot) = spacing_error(follower, leader, &g, 4.0);
        assert_relative_eq!(eps, 0.0, epsilon = 1e-12);
        assert_eq!(eps_dot, 0.0);
        let du = cacc_control(follower, leader, 0.3, 0.3, &g, 4.0).unwrap();
        assert_relative_eq!(du, 0.0, epsilon = 1e-12);

        // One metre too close, nothing else: -kp / h.
        let closer = VehicleState::new(follower.p + 1.0, 8.0, 0.0);
        let du = cacc_control(closer, leader, 0.0, 0.0, &g, 4.0).unwrap();
        assert_relative_eq!(du, -0.2 / 0.7, epsilon = 1e-12);
        assert_relative_eq!(g.desired_gap(8.0), 7.1, epsilon = 1e-12);
    }

    #[test]
    fn attack_application() {
        let none = AttackSignal::None;
        assert_eq!(apply_attack(0.0, &none, 3.0, 10.0).unwrap(), 0.0);
        let step = AttackSignal::step(0.5, 2.0);
        assert_eq!(apply_attack(0.0, &step, 1.0, 10.0).unwrap(), 2.0);
        assert_eq!(apply_attack(0.0, &step, 0.4, 10.0).unwrap(), 0.0);
        assert_eq!(step.value_at(0.5), 2.0);
        assert_eq!(step.value_left(0.5), 0.0);
        assert!(apply_attack(0.0, &AttackSignal::step(0.0, 11.0), 1.0, 10.0).is_err());
        assert!(apply_attack(0.0, &step, -1.0, 10.0).is_err());
        assert!(AttackSignal::step(0.0, -12.0).validate(10.0).is_err());
    }

    #[test]
    fn piecewise_attack_holds_last_sample() {
        let a = AttackSignal::Piecewise { samples: vec![(1.0, 1.0), (2.0, -3.0)] };
        assert_eq!(a.value_at(0.5), 0.0);
        assert_eq!(a.value_at(1.0), 1.0);
        assert_eq!(a.value_left(2.0), 1.0);
        assert_eq!(a.value_at(5.0), -3.0);
        assert_eq!(a.peak(), 3.0);
        assert_eq!(a.onset(), Some(1.0));
        let unsorted = AttackSignal::Piecewise { samples: vec![(2.0, 1.0), (1.0, 1.0)] };
        assert!(unsorted.validate(10.0).is_err());
    }

    #[test]
    fn measurement_examples() {
        let f = VehicleState::new(-50.0, 10.0, 0.0);
        let l = VehicleState::new(-40.0, 8.0, 0.0);
        let y = measure(f, l, 4.0, &Vector::zeros(4));
        assert_eq!(y.as_slice(), &[-14.0, 2.0, 10.0, 0.0]);

        let zero = VehicleState::default();
        assert_eq!(measure(zero, zero, 0.0, &Vector::zeros(4)).as_slice(), &[0.0; 4]);

        let bound = Vector::from_vec(vec![0.15, 0.3, 0.03, 0.15]);
        let shifted = measure(f, l, 4.0, &bound);
        assert_relative_eq!(shifted - y, bound, epsilon = 1e-12);
    }

    #[test]
    fn crash_predicate() {
        assert!(leader_occupies_intersection(-2.0, 4.0));
        assert!(!leader_occupies_intersection(-4.0, 4.0));
        assert!(!leader_occupies_intersection(0.0, 4.0));
    }

    #[test]
    fn noise_is_bounded_and_seeded() {
        for dist in [NoiseDistribution::Uniform, NoiseDistribution::TruncatedGaussian] {
            let spec = NoiseSpec { bound_per_channel: [0.15, 0.3, 0.03, 0.15], distribution: dist, seed: 7 };
            let mut a = NoiseSource::new(&spec).unwrap();
            let mut b = NoiseSource::new(&spec).unwrap();
            for _ in 0..1000 {
                let s = a.sample();
                assert_eq!(s, b.sample());
                for i in 0..4 {
                    assert!(s[i].abs() <= spec.bound_per_channel[i]);
                }
            }
        }
        let bad = NoiseSpec { bound_per_channel: [0.1, 0.0, 0.1, 0.1], distribution: NoiseDistribution::Uniform, seed: 0 };
        assert!(NoiseSource::new(&bad).is_err());
    }
}
