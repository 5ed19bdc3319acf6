use icguard::config::ScenarioConfig;
use icguard::detect::measurement_band;
use icguard::linalg::{Mat, Vector};
use icguard::model::{self, CanonicalModel, UncertainModel};
use icguard::vehicle::{NoiseDistribution, NoiseSource, NoiseSpec};
use proptest::prelude::*;

fn table_one() -> (UncertainModel, CanonicalModel) {
    let cfg = ScenarioConfig::default();
    let m = model::assemble_uncertain(
        &cfg.leader_params().unwrap(),
        &cfg.follower_params().unwrap(),
        cfg.r_tau,
        cfg.uncertainty_bounds(),
    )
    .unwrap();
    let c = model::canonical_transform(&m).unwrap();
    (m, c)
}

/// Right-hand side of both cars written out by hand with the true leader
/// time constant.
fn true_dynamics(x: &[f64; 6], u0: f64, u1: f64, tau0: f64, tau1: f64) -> Vector {
    Vector::from_vec(vec![x[1], x[2], (u0 - x[2]) / tau0, x[4], x[5], (u1 - x[5]) / tau1])
}

proptest! {
    #[test]
    fn nominal_plus_eta_reproduces_true_leader(
        x in prop::array::uniform6(-50.0f64..50.0),
        u0 in -5.0f64..5.0,
        u1 in -5.0f64..5.0,
    ) {
        let cfg = ScenarioConfig::default();
        let (m, _) = table_one();
        let xv = Vector::from_column_slice(&x);
        let u = Vector::from_vec(vec![u0, u1]);
        let eta = model::model_uncertainty(cfg.r_tau, u0, x[2]);
        let modelled = &m.nominal.a * &xv + &m.nominal.b * &u + &m.e * eta;
        let truth = true_dynamics(&x, u0, u1, cfg.tau0, cfg.tau1);
        for i in 0..6 {
            prop_assert!((modelled[i] - truth[i]).abs() <= 1e-9 * (1.0 + truth[i].abs()));
        }
    }

    #[test]
    fn transformed_dynamics_match(
        x in prop::array::uniform6(-50.0f64..50.0),
        u0 in -5.0f64..5.0,
        u1 in -5.0f64..5.0,
        eta in -1.0f64..1.0,
        du in -10.0f64..10.0,
    ) {
        let (m, c) = table_one();
        let xv = Vector::from_column_slice(&x);
        let u = Vector::from_vec(vec![u0, u1]);
        let xdot = &m.nominal.a * &xv + &m.nominal.b * &u + &m.e * eta + &m.f * du;
        let zdot = &c.t * xdot;
        let (z1, z2) = c.to_canonical(&xv);
        let z1dot = &c.a11 * &z1 + &c.a12 * &z2 + &c.b1 * &u + &c.e1 * eta + &c.f1 * du;
        let z2dot = &c.a21 * &z1 + &c.a22 * &z2 + &c.b2 * &u + &c.e2 * eta + &c.f2 * du;
        let n1 = c.n1();
        for i in 0..n1 {
            prop_assert!((zdot[i] - z1dot[i]).abs() <= 1e-9 * (1.0 + zdot[i].abs()));
        }
        for i in 0..c.outputs() {
            prop_assert!((zdot[n1 + i] - z2dot[i]).abs() <= 1e-9 * (1.0 + zdot[n1 + i].abs()));
        }
    }

    #[test]
    fn canonical_round_trip(x in prop::array::uniform6(-1e3f64..1e3)) {
        let (_, c) = table_one();
        let xv = Vector::from_column_slice(&x);
        let (z1, z2) = c.to_canonical(&xv);
        let back = c.from_canonical(&z1, &z2);
        prop_assert!((back - &xv).amax() <= 1e-12 * (1.0 + xv.amax()));
    }

    #[test]
    fn noise_stays_inside_bound(seed in any::<u64>(), gaussian in any::<bool>()) {
        let bound = [0.15, 0.3, 0.03, 0.15];
        let distribution = if gaussian { NoiseDistribution::TruncatedGaussian } else { NoiseDistribution::Uniform };
        let mut src = NoiseSource::new(&NoiseSpec { bound_per_channel: bound, distribution, seed }).unwrap();
        for _ in 0..200 {
            let z = src.sample();
            for i in 0..4 {
                prop_assert!(z[i].abs() <= bound[i]);
            }
        }
    }

    #[test]
    fn measurement_band_contains_true_error(
        e2 in -0.15f64..0.15,
        frac in -1.0f64..1.0,
    ) {
        let zeta_bar = 0.15;
        let zeta = frac * zeta_bar;
        let e_y = Vector::from_element(1, e2 - zeta);
        let (up, lo) = measurement_band(&e_y, &Vector::from_element(1, zeta_bar));
        prop_assert!(lo[0] <= e2 + 1e-15 && e2 <= up[0] + 1e-15);
    }
}

#[test]
fn output_map_is_identity_on_measured_block() {
    let (m, c) = table_one();
    let ct = c.output_map(&m.nominal.c);
    let n1 = c.n1();
    let mut expected = Mat::zeros(c.outputs(), n1 + c.outputs());
    expected.view_mut((0, n1), (c.outputs(), c.outputs())).fill_with_identity();
    assert!((ct - expected).amax() < 1e-12);
}

#[test]
fn noise_is_reproducible() {
    let spec = NoiseSpec { bound_per_channel: [1.0; 4], distribution: NoiseDistribution::Uniform, seed: 42 };
    let mut a = NoiseSource::new(&spec).unwrap();
    let mut b = NoiseSource::new(&spec).unwrap();
    for _ in 0..10 {
        assert_eq!(a.sample(), b.sample());
    }
}
