//! Scenario orchestration: model report, seeded runs, Monte Carlo sweeps
//! and CSV/JSON export.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{self, AsymptoticLimits, HealthyBounds};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::model::{self, InvariantZeros, MatchingRank};
use crate::sim::{self, RunResult, Scenario};
use crate::smo::{self, AttackEstimate, GainCheck};
use crate::vehicle::OUTPUTS;

/// Everything `check-model` reports about a configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelReport {
    pub a11: Vec<Vec<f64>>,
    pub a12: Vec<Vec<f64>>,
    pub a21: Vec<Vec<f64>>,
    pub a22: Vec<Vec<f64>>,
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
    pub transform: Vec<Vec<f64>>,
    /// `(re, im)` pairs.
    pub a11_eigenvalues: Vec<(f64, f64)>,
    pub a11_strictly_hurwitz: bool,
    pub unobservable_dim: usize,
    pub invariant_zeros: InvariantZeros,
    pub zeros_in_open_left_half_plane: bool,
    pub matching: MatchingRank,
    pub e1_tilde: Vec<f64>,
    pub gain_check: GainCheck,
    pub limits: Option<AsymptoticLimits>,
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl ModelReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mat = |s: &mut String, name: &str, m: &[Vec<f64>]| {
            let _ = writeln!(s, "{name}:");
            for row in m {
                let cells: Vec<String> = row.iter().map(|x| format!("{x:>10.4}")).collect();
                let _ = writeln!(s, "  [{}]", cells.join(" "));
            }
        };
        mat(&mut s, "A11", &self.a11);
        mat(&mut s, "A12", &self.a12);
        mat(&mut s, "A21", &self.a21);
        mat(&mut s, "A22", &self.a22);
        let _ = writeln!(s, "E1 = {:?}\nE2 = {:?}\nF1 = {:?}\nF2 = {:?}", self.e1, self.e2, self.f1, self.f2);
        let eig: Vec<String> = self.a11_eigenvalues.iter().map(|(r, i)| format!("{r:.4}{i:+.4}i")).collect();
        let _ = writeln!(
            s,
            "A11 eigenvalues: {} (strictly Hurwitz: {}, decoupled modes: {})",
            eig.join(", "),
            self.a11_strictly_hurwitz,
            self.unobservable_dim
        );
        let zeros: Vec<String> = self
            .invariant_zeros
            .zeros
            .iter()
            .map(|z| format!("{:.4e}{:+.4e}i{}", z.re, z.im, if z.unobservable_mode { " (unobservable mode)" } else { "" }))
            .collect();
        let _ = writeln!(
            s,
            "invariant zeros: [{}] (open left half-plane: {})",
            zeros.join(", "),
            self.zeros_in_open_left_half_plane
        );
        let _ = writeln!(
            s,
            "F2 - A21 A11† F1 = {:?}, full column rank: {}",
            self.matching.matrix, self.matching.full_column_rank
        );
        let _ = writeln!(s, "e1 global bound: {:?}", self.e1_tilde);
        let _ = writeln!(
            s,
            "switching gain: rhs {:?}, margin {:?}, pass {}",
            self.gain_check.rhs,
            self.gain_check.margin,
            self.gain_check.all_pass()
        );
        if let Some(l) = &self.limits {
            let _ = writeln!(s, "e1 limit: {:?}", l.e1_tilde_inf);
            let _ = writeln!(s, "|ė2| bounds at t→∞: upper {:?}, lower {:?}", l.e2dot_upper_inf, l.e2dot_lower_inf);
            let _ = writeln!(s, "U_bar: {:?}", l.u_bar);
            let _ = writeln!(s, "t_bar_star: {:?}", l.t_bar_star);
            let _ = writeln!(s, "EOI threshold: {:?}", l.nu_fil_threshold);
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        for e in &self.errors {
            let _ = writeln!(s, "error: {e}");
        }
        let _ = writeln!(s, "verdict: {}", if self.is_ok() { "ok" } else { "rejected" });
        s
    }
}

fn rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn vec_of(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Build the partitioned model and run every structural check. Returns an
/// error only when the model cannot be built at all; failed assumptions are
/// listed in [`ModelReport::errors`].
pub fn check_model(config: &ScenarioConfig) -> Result<ModelReport> {
    config.validate()?;
    let leader = config.leader_params()?;
    let follower = config.follower_params()?;
    let uncertain = model::assemble_uncertain(&leader, &follower, config.r_tau, config.uncertainty_bounds())?;
    let canonical = model::canonical_transform(&uncertain)?;
    let assumptions = model::assess_uncertain(&uncertain, &canonical)?;
    let gains = config.observer_gains()?;
    let healthy = HealthyBounds::new(
        &canonical,
        &gains,
        &uncertain.bounds,
        &Vector::from_column_slice(&config.e1_init_bound),
    )?;
    let gain_check = smo::validate_switching_gain(&canonical, &gains, &uncertain.bounds, healthy.e1_tilde());
    let mut errors = assumptions.errors.clone();
    let mut warnings = assumptions.warnings.clone();
    let limits = match bounds::asymptotic_limits(&healthy) {
        Ok(l) => Some(l),
        Err(e) => {
            errors.push(e.to_string());
            None
        }
    };
    if !gain_check.all_pass() {
        warnings.push(format!("switching gain below the sliding condition on channels {:?}", gain_check.passes));
    }
    Ok(ModelReport {
        a11: rows(&canonical.a11),
        a12: rows(&canonical.a12),
        a21: rows(&canonical.a21),
        a22: rows(&canonical.a22),
        e1: vec_of(&canonical.e1),
        e2: vec_of(&canonical.e2),
        f1: vec_of(&canonical.f1),
        f2: vec_of(&canonical.f2),
        transform: rows(&canonical.t),
        a11_eigenvalues: canonical.a11_eigenvalues.iter().map(|l| (l.re, l.im)).collect(),
        a11_strictly_hurwitz: canonical.a11_strictly_hurwitz(),
        unobservable_dim: canonical.unobservable_dim,
        zeros_in_open_left_half_plane: assumptions.zeros.all_in_open_left_half_plane(),
        invariant_zeros: assumptions.zeros,
        matching: assumptions.matching,
        e1_tilde: vec_of(healthy.e1_tilde()),
        gain_check,
        limits,
        errors,
        warnings,
    })
}

pub fn run_scenario(config: &ScenarioConfig, seed: u64) -> Result<RunResult> {
    let sc = Scenario::new(config)?;
    sim::simulate(&sc, seed)
}

/// Per-run summary written next to the CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub ic_start: Option<f64>,
    pub crash: Option<f64>,
    pub attack_onset: Option<f64>,
    pub novel_first_alarm: Option<f64>,
    pub novel_first_persistent_alarm: Option<f64>,
    pub eoi_first_alarm: Option<f64>,
    pub eoi_first_persistent_alarm: Option<f64>,
    /// Persistent alarm time minus attack onset.
    pub novel_latency: Option<f64>,
    pub eoi_latency: Option<f64>,
    /// Any alarm before the attack onset (or at all, without an attack).
    pub novel_false_alarm: bool,
    pub eoi_false_alarm: bool,
    pub alarm_events: usize,
    pub final_attack_estimate: Option<AttackEstimate>,
}

impl RunMetrics {
    pub fn from_result(result: &RunResult, config: &ScenarioConfig) -> Self {
        let onset = config.attack.onset();
        let before_onset = |t: Option<f64>| match (t, onset) {
            (Some(t), Some(o)) => t < o,
            (Some(_), None) => true,
            (None, _) => false,
        };
        let latency = |t: Option<f64>| t.zip(onset).map(|(t, o)| t - o);
        let novel_false_alarm = before_onset(result.novel.first_alarm)
            || result.events.iter().any(|e| e.detector == crate::detect::DetectorKind::Novel && before_onset(Some(e.time)));
        let eoi_false_alarm = before_onset(result.eoi.first_alarm)
            || result.events.iter().any(|e| e.detector == crate::detect::DetectorKind::Eoi && before_onset(Some(e.time)));
        Self {
            seed: result.seed,
            ic_start: result.ic_start,
            crash: result.crash,
            attack_onset: onset,
            novel_first_alarm: result.novel.first_alarm,
            novel_first_persistent_alarm: result.novel.first_persistent_alarm,
            eoi_first_alarm: result.eoi.first_alarm,
            eoi_first_persistent_alarm: result.eoi.first_persistent_alarm,
            novel_latency: latency(result.novel.first_persistent_alarm),
            eoi_latency: latency(result.eoi.first_persistent_alarm),
            novel_false_alarm,
            eoi_false_alarm,
            alarm_events: result.events.len(),
            final_attack_estimate: result.final_attack_estimate,
        }
    }

    /// Novel persistent alarm strictly before the EOI one; a missing EOI
    /// alarm counts as later.
    pub fn novel_before_eoi(&self) -> bool {
        match (self.novel_first_persistent_alarm, self.eoi_first_persistent_alarm) {
            (Some(n), Some(e)) => n < e,
            (Some(_), None) => true,
            _ => false,
        }
    }

    /// Both persistent alarms occurred and precede the crash (if any).
    pub fn both_before_crash(&self) -> bool {
        match (self.novel_first_persistent_alarm, self.eoi_first_persistent_alarm) {
            (Some(n), Some(e)) => self.crash.is_none_or(|c| n < c && e < c),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsSummary {
    pub runs: usize,
    pub completed: usize,
    pub failures: Vec<RunFailure>,
    pub novel_false_alarm_runs: usize,
    pub eoi_false_alarm_runs: usize,
    pub crash_runs: usize,
    pub crash_rate: f64,
    pub novel_detected_runs: usize,
    pub eoi_detected_runs: usize,
    pub median_novel_latency: Option<f64>,
    pub median_eoi_latency: Option<f64>,
    pub novel_before_eoi_runs: usize,
    pub both_before_crash_runs: usize,
    pub per_run: Vec<RunMetrics>,
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 { xs[n / 2] } else { 0.5 * (xs[n / 2 - 1] + xs[n / 2]) })
}

impl MetricsSummary {
    pub fn from_runs(per_run: Vec<RunMetrics>, failures: Vec<RunFailure>) -> Self {
        let completed = per_run.len();
        let runs = completed + failures.len();
        let count = |f: &dyn Fn(&RunMetrics) -> bool| per_run.iter().filter(|m| f(m)).count();
        let crash_runs = count(&|m| m.crash.is_some());
        Self {
            runs,
            completed,
            novel_false_alarm_runs: count(&|m| m.novel_false_alarm),
            eoi_false_alarm_runs: count(&|m| m.eoi_false_alarm),
            crash_runs,
            crash_rate: if completed > 0 { crash_runs as f64 / completed as f64 } else { 0.0 },
            novel_detected_runs: count(&|m| m.novel_first_persistent_alarm.is_some()),
            eoi_detected_runs: count(&|m| m.eoi_first_persistent_alarm.is_some()),
            median_novel_latency: median(per_run.iter().filter_map(|m| m.novel_latency).collect()),
            median_eoi_latency: median(per_run.iter().filter_map(|m| m.eoi_latency).collect()),
            novel_before_eoi_runs: count(&|m| m.novel_before_eoi()),
            both_before_crash_runs: count(&|m| m.both_before_crash()),
            failures,
            per_run,
        }
    }
}

/// Independent seeded runs `seed_base .. seed_base + n_runs`, in parallel.
/// A failing run is recorded and the sweep continues.
pub fn monte_carlo(config: &ScenarioConfig, n_runs: usize, seed_base: u64) -> Result<MetricsSummary> {
    if n_runs == 0 {
        return Err(Error::InvalidParameter("at least one run is required".into()));
    }
    let sc = Scenario::new(config)?;
    let outcomes: Vec<std::result::Result<RunMetrics, RunFailure>> = (0..n_runs as u64)
        .into_par_iter()
        .map(|i| {
            let seed = seed_base.wrapping_add(i);
            sim::simulate(&sc, seed)
                .map(|r| RunMetrics::from_result(&r, config))
                .map_err(|e| RunFailure { seed, error: e.to_string() })
        })
        .collect();
    let mut per_run = Vec::with_capacity(n_runs);
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(m) => per_run.push(m),
            Err(f) => {
                log::error!("run with seed {} failed: {}", f.seed, f.error);
                failures.push(f);
            }
        }
    }
    Ok(MetricsSummary::from_runs(per_run, failures))
}

pub fn csv_header() -> Vec<String> {
    let mut h: Vec<String> =
        ["t", "p0", "v0", "a0", "p1", "v1", "a1", "u0", "u1", "du_attack"].iter().map(|s| s.to_string()).collect();
    for prefix in ["ey", "e2up", "e2lo", "nufil"] {
        h.extend((1..=OUTPUTS).map(|i| format!("{prefix}_{i}")));
    }
    h.push("alarm_novel".into());
    h.push("alarm_eoi".into());
    h
}

/// Numeric rows in [`csv_header`] order; alarms as 0/1.
pub fn csv_rows(result: &RunResult) -> Vec<Vec<f64>> {
    result
        .samples
        .iter()
        .map(|s| {
            let mut row = Vec::with_capacity(10 + 4 * OUTPUTS + 2);
            row.push(s.t);
            row.extend_from_slice(&s.plant);
            row.extend_from_slice(&[s.u0, s.u1, s.du_attack]);
            row.extend_from_slice(&s.e_y);
            row.extend_from_slice(&s.e2_upper);
            row.extend_from_slice(&s.e2_lower);
            row.extend_from_slice(&s.nu_fil);
            row.push(f64::from(u8::from(s.alarm_novel)));
            row.push(f64::from(u8::from(s.alarm_eoi)));
            row
        })
        .collect()
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv { path: path.to_path_buf(), source }
}

pub fn export_csv(result: &RunResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(csv_header()).map_err(csv_err(path))?;
    for row in csv_rows(result) {
        w.write_record(row.iter().map(|x| x.to_string())).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// Read back a run CSV as `(header, rows)`.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = r.headers().map_err(csv_err(path))?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let row: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let row = row.map_err(|e| Error::InvalidParameter(format!("{}: bad number: {e}", path.display())))?;
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
    std::fs::write(path, text + "\n").map_err(|source| Error::Io { path: path.to_path_buf(), source })
}
