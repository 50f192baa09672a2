use carl_core::analytics::predictor_report;
use carl_core::config::RunConfig;
use carl_core::diagnostics::coherence;
use carl_core::dynamics::integrate;
use carl_core::io::{read_snapshot_csv, read_spectrum_csv, snapshot_csv, spectrum_csv};
use carl_core::model::init_ensemble;
use carl_core::sweep::{run_sweep, SeedPolicy, SweepSpec};
use proptest::prelude::*;

fn small_config(n_atoms: usize, tau_end: f64, seed: u64) -> RunConfig {
    RunConfig {
        n_atoms,
        tau_end,
        seed,
        snapshot_times: vec![tau_end],
        ..Default::default()
    }
}

#[test]
fn config_json_round_trip_keeps_digest() {
    let cfg = small_config(24, 3.0, 9);
    let back = RunConfig::from_json(&cfg.to_json_pretty()).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.digest(), cfg.digest());
    let other = small_config(24, 3.0, 10);
    assert_ne!(other.digest(), cfg.digest());
}

#[test]
fn snapshot_file_restarts_predictor_exactly() {
    let cfg = small_config(20, 2.0, 4);
    let params = cfg.params();
    let init = init_ensemble(&cfg.initial_conditions(), &params).unwrap();
    let traj = integrate(&init, &params, &cfg.schedule(), cfg.motion).unwrap();
    let snap = &traj.snapshots[0];

    let restored = read_snapshot_csv(&snapshot_csv(snap, &cfg.digest())).unwrap();
    assert_eq!(restored, snap.state);
    assert_eq!(coherence(&restored).unwrap(), coherence(&snap.state).unwrap());

    let direct = predictor_report(&snap.state, &params, cfg.a1_0(), 0.0, None).unwrap();
    let again = predictor_report(&restored, &params, cfg.a1_0(), 0.0, None).unwrap();
    assert_eq!(
        serde_json::to_string(&direct).unwrap(),
        serde_json::to_string(&again).unwrap()
    );
}

#[test]
fn sweep_is_worker_count_invariant() {
    let spec = SweepSpec {
        delta21_min: -2.0,
        delta21_max: 6.0,
        n_points: 17,
        base_config: small_config(10, 1.0, 3),
        seed_policy: SeedPolicy::PerPoint(3),
    };
    let one = run_sweep(&spec, 1).unwrap();
    let four = run_sweep(&spec, 4).unwrap();
    assert_eq!(one.delta21, four.delta21);
    assert_eq!(one.gain, four.gain);
    let csv = spectrum_csv(&one, &one.meta.config_digest);
    assert_eq!(csv, spectrum_csv(&four, &four.meta.config_digest));

    let parsed = read_spectrum_csv(&csv).unwrap();
    assert_eq!(parsed.gain, one.gain);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn same_seed_same_trajectory(seed in 0u64..1000, n in 1usize..12) {
        let cfg = small_config(n, 0.5, seed);
        let params = cfg.params();
        let a = integrate(
            &init_ensemble(&cfg.initial_conditions(), &params).unwrap(),
            &params, &cfg.schedule(), cfg.motion,
        ).unwrap();
        let b = integrate(
            &init_ensemble(&cfg.initial_conditions(), &params).unwrap(),
            &params, &cfg.schedule(), cfg.motion,
        ).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn inversion_stays_physical_with_damping(seed in 0u64..1000, delta21 in -20.0f64..20.0) {
        let mut cfg = small_config(8, 2.0, seed);
        cfg.delta21 = delta21;
        let params = cfg.params();
        let init = init_ensemble(&cfg.initial_conditions(), &params).unwrap();
        let traj = integrate(&init, &params, &cfg.schedule(), cfg.motion).unwrap();
        prop_assert!(!traj.diverged);
        let s = &traj.final_state;
        for i in 0..s.len() {
            let len2 = 4.0 * s.sigma[i].norm_sqr() + s.sigma_z[i].powi(2);
            prop_assert!(len2 <= 1.0 + 1e-6, "atom {} Bloch length^2 {}", i, len2);
        }
    }
}
