//! Healthy and attacked sweeps at several measurement rates.
//!
//! `cargo run --release --example rate_sweep -- [runs]`

use icguard::config::ScenarioConfig;
use icguard::harness::monte_carlo;

fn main() -> icguard::Result<()> {
    let runs: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    println!("rate_hz  healthy_fa_novel  healthy_fa_eoi  novel_first  median_novel  median_eoi");
    for rate in [100.0, 200.0, 500.0, 1000.0] {
        let healthy = ScenarioConfig { measurement_rate_hz: rate, ..ScenarioConfig::default() };
        let attacked = ScenarioConfig { measurement_rate_hz: rate, ..ScenarioConfig::attacked() };
        let h = monte_carlo(&healthy, runs, 0)?;
        let a = monte_carlo(&attacked, runs, 0)?;
        println!(
            "{rate:>7}  {:>16}  {:>14}  {:>11}  {:>12.3}  {:>10.3}",
            h.novel_false_alarm_runs,
            h.eoi_false_alarm_runs,
            a.novel_before_eoi_runs,
            a.median_novel_latency.unwrap_or(f64::NAN),
            a.median_eoi_latency.unwrap_or(f64::NAN),
        );
    }
    Ok(())
}
