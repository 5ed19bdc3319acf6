//! Closed-loop simulation of the two cars, the observer and both detectors.
//!
//! The plant, the follower's input state and the observer share one RK4
//! step. Sensor noise, the switching term and the received input used by
//! the observer are held between measurement instants.

use serde::Serialize;

use crate::bounds::{self, AsymptoticLimits, HealthyBounds};
use crate::config::ScenarioConfig;
use crate::detect::{AlarmEvent, AlarmLog, DetectorKind, EoiDetectorState, NovelDetectorState};
use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::model::{self, AssumptionReport, CanonicalModel, UncertainModel};
use crate::smo::{self, AttackEstimate, GainCheck, ObserverGains};
use crate::vehicle::{self, AttackSignal, CaccGains, NoiseSource, VehicleParams, VehicleState, OUTPUTS};

const PLANT: usize = 6;
const N1: usize = 2;
const STATE: usize = PLANT + 1 + N1 + OUTPUTS;

/// Everything derived from a configuration before any run starts.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub leader: VehicleParams,
    pub follower: VehicleParams,
    pub cacc: CaccGains,
    pub uncertain: UncertainModel,
    pub canonical: CanonicalModel,
    pub observer: ObserverGains,
    pub healthy: HealthyBounds,
    pub limits: AsymptoticLimits,
    pub gain_check: GainCheck,
    pub assumptions: AssumptionReport,
    /// Subtracted from the received leader input; lets tests undo an attack
    /// on the channel without touching anything else.
    pub received_correction: AttackSignal,
    a22_complement: Mat,
    steps_per_measurement: usize,
}

impl Scenario {
    pub fn new(config: &ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let leader = config.leader_params()?;
        let follower = config.follower_params()?;
        let uncertain = model::assemble_uncertain(&leader, &follower, config.r_tau, config.uncertainty_bounds())?;
        let canonical = model::canonical_transform(&uncertain)?;
        let assumptions = model::assess_uncertain(&uncertain, &canonical)?.into_result()?;
        for w in &assumptions.warnings {
            log::warn!("{w}");
        }
        if canonical.n1() != N1 {
            return Err(Error::Dimension(format!("expected {N1} unmeasured states, got {}", canonical.n1())));
        }
        let observer = config.observer_gains()?;
        let e1_init = Vector::from_column_slice(&config.e1_init_bound);
        let healthy = HealthyBounds::new(&canonical, &observer, &uncertain.bounds, &e1_init)?;
        let limits = bounds::asymptotic_limits(&healthy)?;
        let gain_check = smo::validate_switching_gain(&canonical, &observer, &uncertain.bounds, healthy.e1_tilde());
        if !gain_check.all_pass() {
            log::warn!("switching gain below the sliding condition: margins {:?}", gain_check.margin);
        }
        let a22_complement = observer.a22_complement(&canonical);
        Ok(Self {
            config: config.clone(),
            leader,
            follower,
            cacc: config.cacc_gains(),
            uncertain,
            canonical,
            observer,
            healthy,
            limits,
            gain_check,
            assumptions,
            received_correction: AttackSignal::None,
            a22_complement,
            steps_per_measurement: config.steps_per_measurement()?,
        })
    }

    pub fn eoi_threshold(&self) -> Vector {
        Vector::from_column_slice(&self.limits.nu_fil_threshold)
    }
}

/// One row of the time series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    /// `[p0, v0, a0, p1, v1, a1]`.
    pub plant: [f64; PLANT],
    /// Leader input as applied by the leader.
    pub u0: f64,
    pub u1: f64,
    pub du_attack: f64,
    pub ic_active: bool,
    /// Observer state in partitioned coordinates, `[x̂1; x̂2]`.
    pub x_hat: [f64; N1 + OUTPUTS],
    pub e_y: [f64; OUTPUTS],
    pub nu: [f64; OUTPUTS],
    pub e2_upper: [f64; OUTPUTS],
    pub e2_lower: [f64; OUTPUTS],
    pub nu_fil: [f64; OUTPUTS],
    pub attack_estimate: f64,
    pub alarm_novel: bool,
    pub alarm_eoi: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct DetectionTimes {
    pub first_alarm: Option<f64>,
    pub first_persistent_alarm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub seed: u64,
    pub samples: Vec<Sample>,
    pub ic_start: Option<f64>,
    pub crash: Option<f64>,
    pub novel: DetectionTimes,
    pub eoi: DetectionTimes,
    pub events: Vec<AlarmEvent>,
    pub final_attack_estimate: Option<AttackEstimate>,
}

/// Inputs held constant over one integration step. Communicated and
/// injected signals are sampled at the start of the step.
struct Held<'a> {
    t: f64,
    ic_active: bool,
    noise: &'a Vector,
    nu: &'a Vector,
}

fn to_array<const N: usize>(v: &Vector) -> [f64; N] {
    std::array::from_fn(|i| v[i])
}

/// Simulate one seeded run of the scenario.
pub fn simulate(sc: &Scenario, seed: u64) -> Result<RunResult> {
    let cfg = &sc.config;
    let dt = cfg.dt;
    let n_steps = (cfg.duration / dt).round() as usize;
    let zeta_bar = sc.healthy.zeta_bar().clone();
    let mut noise = NoiseSource::new(&cfg.noise_spec(seed))?;
    let eoi = EoiDetectorState::new(sc.eoi_threshold())?;
    let mut novel = NovelDetectorState::new(OUTPUTS);
    let mut novel_log = AlarmLog::new(DetectorKind::Novel, OUTPUTS, cfg.dwell);
    let mut eoi_log = AlarmLog::new(DetectorKind::Eoi, OUTPUTS, cfg.dwell);

    let mut s = Vector::zeros(STATE);
    s.rows_mut(0, 3).copy_from_slice(&cfg.initial.leader().to_array());
    s.rows_mut(3, 3).copy_from_slice(&cfg.initial.follower().to_array());

    let mut ic_start: Option<(usize, f64)> = None;
    let mut zeta = Vector::zeros(OUTPUTS);
    let mut nu = Vector::zeros(OUTPUTS);
    let mut nu_fil = Vector::zeros(OUTPUTS);
    let mut novel_flags = vec![false; OUTPUTS];
    let mut crash = None;
    let mut follower_entered = false;
    let mut samples = Vec::with_capacity(n_steps + 1);

    for k in 0..=n_steps {
        let t = k as f64 * dt;
        let (leader, follower) = split(&s);

        if ic_start.is_none() && -leader.p <= cfg.ic_trigger_distance && -follower.p <= cfg.ic_trigger_distance {
            ic_start = Some((k, t));
            zeta = noise.sample();
            let y = vehicle::measure(follower, leader, sc.follower.length, &zeta);
            s.rows_mut(PLANT + 1, N1).fill(0.0);
            s.rows_mut(PLANT + 1 + N1, OUTPUTS).copy_from(&(&y - &sc.canonical.c));
            log::debug!("intersection control engaged at t = {t:.3} s");
        }

        let mut alarm_eoi = false;
        if let Some((k0, t0)) = ic_start {
            let rates = sc.healthy.e2dot(t - t0);
            novel.accumulate(t, &rates);
            if (k - k0) % sc.steps_per_measurement == 0 {
                if k != k0 {
                    zeta = noise.sample();
                }
                let e_y_meas = innovation(sc, &s, &zeta);
                novel.reset_bounds_at_measurement(t, &e_y_meas, &zeta_bar)?;
                novel_flags = novel.check();
                novel_log.update(t, &novel_flags);
                nu = smo::switching_injection(&e_y_meas, &sc.observer.m, sc.observer.boundary_layer);
            }
            let eoi_flags = eoi.check(&nu_fil);
            alarm_eoi = eoi_flags.iter().any(|&f| f);
            eoi_log.update(t, &eoi_flags);
        }

        let ic_active = ic_start.is_some();
        let (e2_up, e2_lo) = if ic_active { novel.current_bounds() } else { (Vector::zeros(OUTPUTS), Vector::zeros(OUTPUTS)) };
        let e_y = if ic_active { innovation(sc, &s, &zeta) } else { Vector::zeros(OUTPUTS) };
        let estimate = if ic_active {
            smo::estimate_attack(&nu_fil, &sc.canonical, sc.uncertain.bounds.eta_bar).map_or(f64::NAN, |e| e.estimate)
        } else {
            0.0
        };
        let u0 = cfg.leader_input.value_at(t);
        samples.push(Sample {
            t,
            plant: std::array::from_fn(|i| s[i]),
            u0,
            u1: s[PLANT],
            du_attack: cfg.attack.value_at(t),
            ic_active,
            x_hat: std::array::from_fn(|i| s[PLANT + 1 + i]),
            e_y: to_array(&e_y),
            nu: to_array(&nu),
            e2_upper: to_array(&e2_up),
            e2_lower: to_array(&e2_lo),
            nu_fil: to_array(&nu_fil),
            attack_estimate: estimate,
            alarm_novel: ic_active && novel_flags.iter().any(|&f| f),
            alarm_eoi,
        });

        if k == n_steps || (crash.is_some() && cfg.stop_on_crash) {
            break;
        }

        let held = Held { t, ic_active, noise: &zeta, nu: &nu };
        let next = rk4(sc, &s, dt, &held)?;
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::Diverged { t: t + dt, what: "non-finite simulation state".into() });
        }
        if ic_active {
            nu_fil = smo::eoi_filter(&nu_fil, &nu, &sc.observer.k, dt);
        }

        if !follower_entered {
            let entry = -sc.follower.length;
            let (pf0, pf1) = (s[3], next[3]);
            if pf0 < entry && pf1 >= entry {
                follower_entered = true;
                let theta = (entry - pf0) / (pf1 - pf0);
                let pl = s[0] + theta * (next[0] - s[0]);
                if vehicle::leader_occupies_intersection(pl, sc.leader.length) {
                    crash = Some(t + theta * dt);
                }
            }
        }
        s = next;
    }

    let final_attack_estimate = ic_start
        .and_then(|_| smo::estimate_attack(&nu_fil, &sc.canonical, sc.uncertain.bounds.eta_bar).ok());
    let mut events = novel_log.events.clone();
    events.extend(eoi_log.events.iter().cloned());
    Ok(RunResult {
        seed,
        samples,
        ic_start: ic_start.map(|(_, t)| t),
        crash,
        novel: DetectionTimes {
            first_alarm: novel_log.first_alarm(),
            first_persistent_alarm: novel_log.first_persistent_alarm(),
        },
        eoi: DetectionTimes {
            first_alarm: eoi_log.first_alarm(),
            first_persistent_alarm: eoi_log.first_persistent_alarm(),
        },
        events,
        final_attack_estimate,
    })
}

fn split(s: &Vector) -> (VehicleState, VehicleState) {
    (VehicleState::new(s[0], s[1], s[2]), VehicleState::new(s[3], s[4], s[5]))
}

/// `e_y = x̂2 + c - y` with the plant output at the current state.
fn innovation(sc: &Scenario, s: &Vector, zeta: &Vector) -> Vector {
    let (leader, follower) = split(s);
    let y = vehicle::measure(follower, leader, sc.follower.length, zeta);
    let x2_hat = s.rows(PLANT + 1 + N1, OUTPUTS).into_owned();
    smo::innovation(&x2_hat, &sc.canonical.c, &y)
}

fn derivative(sc: &Scenario, s: &Vector, held: &Held) -> Result<Vector> {
    let cfg = &sc.config;
    let (leader, follower) = split(s);
    let u1 = s[PLANT];
    let u0 = cfg.leader_input.value_at(held.t);
    let received = if held.ic_active {
        vehicle::apply_attack(u0, &cfg.attack, held.t, cfg.delta_bar)? - sc.received_correction.value_at(held.t)
    } else {
        u0
    };

    let mut d = Vector::zeros(STATE);
    let dl = vehicle::car_derivative(leader, u0, sc.leader)?;
    let df = vehicle::car_derivative(follower, u1, sc.follower)?;
    d.rows_mut(0, 3).copy_from_slice(&dl.to_array());
    d.rows_mut(3, 3).copy_from_slice(&df.to_array());
    if !held.ic_active {
        return Ok(d);
    }
    d[PLANT] = vehicle::cacc_control(follower, leader, u1, received, &sc.cacc, sc.leader.length)?;

    let x1_hat = s.rows(PLANT + 1, N1).into_owned();
    let x2_hat = s.rows(PLANT + 1 + N1, OUTPUTS).into_owned();
    let y = vehicle::measure(follower, leader, sc.follower.length, held.noise);
    let e_y = smo::innovation(&x2_hat, &sc.canonical.c, &y);
    let u = Vector::from_vec(vec![received, u1]);
    let (dx1, dx2) = smo::observer_rhs(&x1_hat, &x2_hat, &e_y, &u, held.nu, &sc.canonical, &sc.a22_complement);
    d.rows_mut(PLANT + 1, N1).copy_from(&dx1);
    d.rows_mut(PLANT + 1 + N1, OUTPUTS).copy_from(&dx2);
    Ok(d)
}

fn rk4(sc: &Scenario, s: &Vector, dt: f64, held: &Held) -> Result<Vector> {
    let k1 = derivative(sc, s, held)?;
    let k2 = derivative(sc, &(s + &k1 * (0.5 * dt)), held)?;
    let k3 = derivative(sc, &(s + &k2 * (0.5 * dt)), held)?;
    let k4 = derivative(sc, &(s + &k3 * dt), held)?;
    Ok(s + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

impl RunResult {
    /// True observer errors `(e1, e2)` at sample `i`, from `z = T x`.
    pub fn errors_at(&self, sc: &Scenario, i: usize) -> (Vector, Vector) {
        let smp = &self.samples[i];
        let x = Vector::from_column_slice(&smp.plant);
        let (z1, z2) = sc.canonical.to_canonical(&x);
        let x1 = Vector::from_column_slice(&smp.x_hat[..N1]);
        let x2 = Vector::from_column_slice(&smp.x_hat[N1..]);
        (x1 - z1, x2 - z2)
    }
}
