//! The two detectors: bound intersection on `e2` and the EOI threshold.

use serde::{Deserialize, Serialize};

use crate::bounds::E2DotBounds;
use crate::error::{Error, Result};
use crate::linalg::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Novel,
    Eoi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlarmEvent {
    pub detector: DetectorKind,
    /// Zero-based output channel.
    pub channel: usize,
    /// Time the alarm condition was first observed.
    pub time: f64,
    /// Condition held for at least the configured dwell.
    pub persisted: bool,
}

/// Measurement band: `ē2 = min(e_y + ζ̄, ζ̄)`, `e̲2 = max(e_y - ζ̄, -ζ̄)`.
pub fn measurement_band(e_y: &Vector, zeta_bar: &Vector) -> (Vector, Vector) {
    let upper = Vector::from_fn(e_y.len(), |i, _| (e_y[i] + zeta_bar[i]).min(zeta_bar[i]));
    let lower = Vector::from_fn(e_y.len(), |i, _| (e_y[i] - zeta_bar[i]).max(-zeta_bar[i]));
    (upper, lower)
}

/// Shift `(ē2, e̲2)` by the integrals of the healthy `|ė2|` bounds over one
/// interval. With `sign < 0` (`e_y` negative at the interval start) `e2`
/// increases; with `sign > 0` it decreases; `sign == 0` leaves the channel
/// untouched.
pub fn propagate_bounds(
    upper: &Vector,
    lower: &Vector,
    sign: &[f64],
    int_upper0: &Vector,
    int_lower0: &Vector,
) -> (Vector, Vector) {
    let mut up = upper.clone();
    let mut lo = lower.clone();
    for i in 0..up.len() {
        if sign[i] < 0.0 {
            up[i] += int_upper0[i];
            lo[i] += int_lower0[i];
        } else if sign[i] > 0.0 {
            up[i] -= int_lower0[i];
            lo[i] -= int_upper0[i];
        }
    }
    (up, lo)
}

/// Running state of the bound-intersection detector.
#[derive(Debug, Clone, PartialEq)]
pub struct NovelDetectorState {
    pub e2_upper: Vector,
    pub e2_lower: Vector,
    pub last_e_y_at_measurement: Vector,
    pub last_measurement_time: Option<f64>,
    /// Per-channel sign driving the current interval (0 when none known yet).
    sign: Vec<f64>,
    int_upper: Vector,
    int_lower: Vector,
    last_rate: Option<(f64, Vector, Vector)>,
}

impl NovelDetectorState {
    pub fn new(outputs: usize) -> Self {
        Self {
            e2_upper: Vector::zeros(outputs),
            e2_lower: Vector::zeros(outputs),
            last_e_y_at_measurement: Vector::zeros(outputs),
            last_measurement_time: None,
            sign: vec![0.0; outputs],
            int_upper: Vector::zeros(outputs),
            int_lower: Vector::zeros(outputs),
            last_rate: None,
        }
    }

    /// Add a sample of the healthy `|ė2|` bounds at time `t`; the integrals
    /// since the last measurement grow by the trapezoid rule.
    pub fn accumulate(&mut self, t: f64, rates: &E2DotBounds) {
        if let Some((t0, up0, lo0)) = &self.last_rate {
            let h = t - t0;
            if h > 0.0 {
                self.int_upper += (up0 + &rates.upper) * (0.5 * h);
                self.int_lower += (lo0 + &rates.lower) * (0.5 * h);
            }
        }
        self.last_rate = Some((t, rates.upper.clone(), rates.lower.clone()));
    }

    /// Bounds propagated from the last measurement up to the latest
    /// accumulated sample.
    pub fn current_bounds(&self) -> (Vector, Vector) {
        propagate_bounds(&self.e2_upper, &self.e2_lower, &self.sign, &self.int_upper, &self.int_lower)
    }

    /// Combine the propagated bounds with the measurement band at `t_m` and
    /// start a new interval.
    pub fn reset_bounds_at_measurement(&mut self, t: f64, e_y: &Vector, zeta_bar: &Vector) -> Result<()> {
        if let Some(prev) = self.last_measurement_time {
            if t <= prev {
                return Err(Error::InvalidParameter(format!("measurement times must increase ({t} after {prev})")));
            }
        }
        let (band_up, band_lo) = measurement_band(e_y, zeta_bar);
        let (up, lo) = if self.last_measurement_time.is_some() {
            let (pu, pl) = self.current_bounds();
            let mut up = band_up;
            let mut lo = band_lo;
            for i in 0..up.len() {
                // A channel with no known sign is held, so its old bounds
                // remain valid and still take part in the intersection.
                up[i] = up[i].min(pu[i]);
                lo[i] = lo[i].max(pl[i]);
            }
            (up, lo)
        } else {
            (band_up, band_lo)
        };
        self.e2_upper = up;
        self.e2_lower = lo;
        for i in 0..e_y.len() {
            let s = crate::linalg::sgn(e_y[i]);
            if s != 0.0 {
                self.sign[i] = s;
            }
        }
        self.last_e_y_at_measurement = e_y.clone();
        self.last_measurement_time = Some(t);
        self.int_upper.fill(0.0);
        self.int_lower.fill(0.0);
        if let Some((_, up, lo)) = self.last_rate.take() {
            self.last_rate = Some((t, up, lo));
        }
        Ok(())
    }

    /// Per channel `e̲2 > ē2`.
    pub fn check(&self) -> Vec<bool> {
        check_novel_detection(&self.e2_upper, &self.e2_lower)
    }
}

pub fn check_novel_detection(upper: &Vector, lower: &Vector) -> Vec<bool> {
    upper.iter().zip(lower.iter()).map(|(u, l)| l > u).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EoiDetectorState {
    pub nu_fil_upper: Vector,
}

impl EoiDetectorState {
    pub fn new(threshold: Vector) -> Result<Self> {
        if threshold.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidParameter("EOI thresholds must be finite and nonnegative".into()));
        }
        Ok(Self { nu_fil_upper: threshold })
    }

    pub fn nu_fil_lower(&self) -> Vector {
        -&self.nu_fil_upper
    }

    pub fn check(&self, nu_fil: &Vector) -> Vec<bool> {
        eoi_threshold_check(nu_fil, &self.nu_fil_upper)
    }
}

/// Alarm where `ν_fil` strictly leaves `[-ν̄_fil, ν̄_fil]`.
pub fn eoi_threshold_check(nu_fil: &Vector, threshold: &Vector) -> Vec<bool> {
    nu_fil.iter().zip(threshold.iter()).map(|(v, th)| v.abs() > *th).collect()
}

/// Tracks one boolean alarm signal and classifies its episodes by duration.
#[derive(Debug, Clone, PartialEq)]
pub struct Persistence {
    dwell: f64,
    active_since: Option<f64>,
    pub first_raw: Option<f64>,
    /// Onset of the first episode that lasted at least the dwell.
    pub first_persistent: Option<f64>,
}

impl Persistence {
    pub fn new(dwell: f64) -> Self {
        Self { dwell, active_since: None, first_raw: None, first_persistent: None }
    }

    /// Returns the onset time when an episode has just started.
    pub fn update(&mut self, t: f64, active: bool) -> Option<f64> {
        if !active {
            self.active_since = None;
            return None;
        }
        let started = self.active_since.is_none();
        let onset = *self.active_since.get_or_insert(t);
        self.first_raw.get_or_insert(t);
        if self.first_persistent.is_none() && t - onset >= self.dwell - 1e-12 {
            self.first_persistent = Some(onset);
        }
        started.then_some(onset)
    }

    pub fn is_active(&self) -> bool {
        self.active_since.is_some()
    }

    /// Whether the current episode has lasted at least the dwell at `t`.
    pub fn current_persisted(&self, t: f64) -> bool {
        self.active_since.is_some_and(|s| t - s >= self.dwell - 1e-12)
    }
}

/// Per-channel and aggregate alarm bookkeeping for one detector.
#[derive(Debug, Clone, PartialEq)]
pub struct AlarmLog {
    kind: DetectorKind,
    channels: Vec<Persistence>,
    open: Vec<Option<usize>>,
    pub any: Persistence,
    pub events: Vec<AlarmEvent>,
}

impl AlarmLog {
    pub fn new(kind: DetectorKind, outputs: usize, dwell: f64) -> Self {
        Self {
            kind,
            channels: vec![Persistence::new(dwell); outputs],
            open: vec![None; outputs],
            any: Persistence::new(dwell),
            events: Vec::new(),
        }
    }

    pub fn update(&mut self, t: f64, flags: &[bool]) {
        for (ch, &flag) in flags.iter().enumerate() {
            if let Some(onset) = self.channels[ch].update(t, flag) {
                self.open[ch] = Some(self.events.len());
                self.events.push(AlarmEvent { detector: self.kind, channel: ch, time: onset, persisted: false });
            }
            if let Some(idx) = self.open[ch] {
                if self.channels[ch].current_persisted(t) {
                    self.events[idx].persisted = true;
                }
                if !flag {
                    self.open[ch] = None;
                }
            }
        }
        self.any.update(t, flags.iter().any(|&f| f));
    }

    pub fn first_alarm(&self) -> Option<f64> {
        self.any.first_raw
    }

    pub fn first_persistent_alarm(&self) -> Option<f64> {
        self.any.first_persistent
    }
}
