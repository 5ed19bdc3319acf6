//! Scenario configuration. Every key has a default from the reference
//! scenario, so `{}` is a valid healthy configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::model::UncertaintyBounds;
use crate::smo::ObserverGains;
use crate::vehicle::{AttackSignal, CaccGains, NoiseDistribution, NoiseSpec, VehicleParams, VehicleState, OUTPUTS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialStates {
    pub p0: f64,
    pub v0: f64,
    pub a0: f64,
    pub p1: f64,
    pub v1: f64,
    pub a1: f64,
}

impl Default for InitialStates {
    fn default() -> Self {
        Self { p0: -40.0, v0: 8.0, a0: 0.0, p1: -50.0, v1: 10.0, a1: 0.0 }
    }
}

impl InitialStates {
    pub fn leader(&self) -> VehicleState {
        VehicleState::new(self.p0, self.v0, self.a0)
    }

    pub fn follower(&self) -> VehicleState {
        VehicleState::new(self.p1, self.v1, self.a1)
    }
}

/// `A22s` either as a multiple of the identity or as a full matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    Full(Vec<Vec<f64>>),
}

impl MatrixSpec {
    pub fn to_matrix(&self, n: usize) -> Result<Mat> {
        match self {
            Self::Scalar(s) => Ok(Mat::identity(n, n) * *s),
            Self::Full(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::Dimension(format!("A22s must be {n}x{n}")));
                }
                Ok(Mat::from_fn(n, n, |i, j| rows[i][j]))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub distribution: NoiseDistribution,
    /// Per-channel noise amplitude; defaults to `zeta_bar`.
    pub bound: Option<[f64; OUTPUTS]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub initial: InitialStates,
    pub tau0: f64,
    pub tau1: f64,
    /// Follower length.
    #[serde(rename = "L1")]
    pub l1: f64,
    /// Leader length; defaults to `L1`.
    #[serde(rename = "L0")]
    pub l0: Option<f64>,
    pub r_tau: f64,
    pub h: f64,
    pub r: f64,
    pub kp: f64,
    pub kd: f64,
    pub delta_bar: f64,
    pub eta_bar: f64,
    pub zeta_bar: [f64; OUTPUTS],
    /// Diagonal of the switching gain.
    #[serde(rename = "M")]
    pub m: [f64; OUTPUTS],
    /// Diagonal of the EOI filter gain.
    #[serde(rename = "K")]
    pub k: [f64; OUTPUTS],
    #[serde(rename = "A22s")]
    pub a22s: MatrixSpec,
    pub boundary_layer: Option<f64>,
    /// Leader input profile (zero-order hold, same format as `attack`).
    pub leader_input: AttackSignal,
    pub attack: AttackSignal,
    pub noise: NoiseConfig,
    /// Bound on `|e1(0)|` at observer start.
    pub e1_init_bound: Vec<f64>,
    /// Integration step [s].
    pub dt: f64,
    /// Rate of measurements, detector updates and switching updates [Hz].
    pub measurement_rate_hz: f64,
    pub duration: f64,
    /// Both cars within this distance of the intersection start the IC.
    pub ic_trigger_distance: f64,
    /// Minimum alarm duration counted as a persistent detection [s].
    pub dwell: f64,
    pub stop_on_crash: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            initial: InitialStates::default(),
            tau0: 0.11,
            tau1: 0.1,
            l1: 4.0,
            l0: None,
            r_tau: 0.9,
            h: 0.7,
            r: 1.5,
            kp: 0.2,
            kd: 0.7,
            delta_bar: 10.0,
            eta_bar: 1.0,
            zeta_bar: [0.15, 0.3, 0.03, 0.15],
            m: [0.5, 11.5, 0.2, 2.0],
            k: [1.0; OUTPUTS],
            a22s: MatrixSpec::Scalar(-0.1),
            boundary_layer: None,
            leader_input: AttackSignal::None,
            attack: AttackSignal::None,
            noise: NoiseConfig::default(),
            e1_init_bound: vec![100.0, 2.0],
            dt: 1e-3,
            measurement_rate_hz: 1000.0,
            duration: 10.0,
            ic_trigger_distance: 50.0,
            dwell: 0.05,
            stop_on_crash: true,
        }
    }
}

impl ScenarioConfig {
    /// Reference attack scenario: a +2 m/s² step on the communicated
    /// leader input from `t = 0.5 s`.
    pub fn attacked() -> Self {
        Self { attack: AttackSignal::step(0.5, 2.0), ..Self::default() }
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text).map_err(|source| Error::Json { path: path.to_path_buf(), source })
    }

    pub fn leader_params(&self) -> Result<VehicleParams> {
        VehicleParams::new(self.tau0, self.l0.unwrap_or(self.l1))
    }

    pub fn follower_params(&self) -> Result<VehicleParams> {
        VehicleParams::new(self.tau1, self.l1)
    }

    pub fn cacc_gains(&self) -> CaccGains {
        CaccGains { h: self.h, r_standstill: self.r, kp: self.kp, kd: self.kd }
    }

    pub fn uncertainty_bounds(&self) -> UncertaintyBounds {
        UncertaintyBounds { eta_bar: self.eta_bar, delta_bar: self.delta_bar, zeta_bar: self.zeta_bar.to_vec() }
    }

    pub fn observer_gains(&self) -> Result<ObserverGains> {
        Ok(ObserverGains {
            a22s: self.a22s.to_matrix(OUTPUTS)?,
            m: Vector::from_column_slice(&self.m),
            k: Vector::from_column_slice(&self.k),
            boundary_layer: self.boundary_layer,
        })
    }

    pub fn noise_spec(&self, seed: u64) -> NoiseSpec {
        NoiseSpec {
            bound_per_channel: self.noise.bound.unwrap_or(self.zeta_bar),
            distribution: self.noise.distribution,
            seed,
        }
    }

    /// Integration steps between consecutive measurements.
    pub fn steps_per_measurement(&self) -> Result<usize> {
        let ratio = 1.0 / (self.measurement_rate_hz * self.dt);
        let n = ratio.round();
        if !(n >= 1.0) || (ratio - n).abs() > 1e-6 * n {
            return Err(Error::InvalidParameter(format!(
                "measurement period must be a whole number of steps (dt = {}, rate = {} Hz)",
                self.dt, self.measurement_rate_hz
            )));
        }
        Ok(n as usize)
    }

    /// Checks that do not need the model.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt", self.dt),
            ("measurement_rate_hz", self.measurement_rate_hz),
            ("duration", self.duration),
            ("ic_trigger_distance", self.ic_trigger_distance),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.dwell.is_finite() && self.dwell >= 0.0) {
            return Err(Error::InvalidParameter(format!("dwell must be nonnegative, got {}", self.dwell)));
        }
        let init = self.initial;
        if ![init.p0, init.v0, init.a0, init.p1, init.v1, init.a1].iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("initial states"));
        }
        self.leader_params()?;
        self.follower_params()?;
        self.cacc_gains().validate()?;
        self.uncertainty_bounds().validate(OUTPUTS)?;
        self.observer_gains()?.validate(OUTPUTS)?;
        self.noise_spec(0).validate()?;
        self.attack.validate(self.delta_bar)?;
        self.leader_input.validate(f64::INFINITY)?;
        if self.e1_init_bound.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidParameter("e1_init_bound must be finite and nonnegative".into()));
        }
        self.steps_per_measurement()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_table_one() {
        let c = ScenarioConfig::from_json("{}").unwrap();
        assert_eq!(c, ScenarioConfig::default());
        assert!(c.validate().is_ok());
    }

    #[test]
    fn round_trip() {
        let c = ScenarioConfig::attacked();
        let text = serde_json::to_string_pretty(&c).unwrap();
        assert_eq!(ScenarioConfig::from_json(&text).unwrap(), c);
        assert!(text.contains("\"A22s\""));
        assert!(text.contains("\"kind\": \"step\""));
    }

    #[test]
    fn a22s_as_full_matrix() {
        let c = ScenarioConfig::from_json(
            r#"{"A22s": [[-1,0,0,0],[0,-1,0,0],[0,0,-1,0],[0,0,0,-2]], "M": [1, 12, 0.3, 2.5]}"#,
        )
        .unwrap();
        let g = c.observer_gains().unwrap();
        assert_eq!(g.a22s[(3, 3)], -2.0);
        assert_eq!(g.m[1], 12.0);
        assert!(ScenarioConfig::from_json(r#"{"A22s": [[1, 0]]}"#).unwrap().observer_gains().is_err());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ScenarioConfig::from_json(r#"{"unknown_key": 1}"#).is_err());
        let bad = ScenarioConfig { dt: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = ScenarioConfig { attack: AttackSignal::step(0.5, 20.0), ..Default::default() };
        assert!(matches!(bad.validate(), Err(Error::AttackOutOfBounds { .. })));
        let bad = ScenarioConfig { measurement_rate_hz: 300.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = ScenarioConfig { m: [0.5, -1.0, 0.2, 2.0], ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn measurement_ratio() {
        let c = ScenarioConfig { measurement_rate_hz: 100.0, ..Default::default() };
        assert_eq!(c.steps_per_measurement().unwrap(), 10);
        assert_eq!(ScenarioConfig::default().steps_per_measurement().unwrap(), 1);
    }
}
