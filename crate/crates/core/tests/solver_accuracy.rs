mod common;

use common::checks;

#[test]
fn spatial_order_is_two() {
    let c = checks::spatial_convergence();
    for p in c.orders {
        assert!((1.8..=2.2).contains(&p), "{c:?}");
    }
    assert!(c.errors[2] < c.errors[1] && c.errors[1] < c.errors[0]);
}

#[test]
fn unforced_deterministic_run_conserves_momentum_and_dissipates_energy() {
    for amp in [1.0, 4.0, 8.0] {
        let c = checks::conservation(amp);
        assert_eq!(c.steps, 200);
        assert!(c.max_momentum_change < 1e-10, "amp {amp}: {c:?}");
        assert!(c.max_energy_increase <= 0.0, "amp {amp}: {c:?}");
    }
}

#[test]
fn matches_fine_reference_before_the_shock() {
    let err = checks::shock_profile_error(0.1);
    assert!(err < 1e-2, "{err}");
}

#[test]
fn shock_steepens_while_energy_decays() {
    use rand::SeedableRng;
    use sbe_control::rng::Rng;
    use sbe_control::solver::run_free_evolution;
    use sbe_control::{Field, SbeConfig};

    let cfg = SbeConfig {
        epsilon: 0.0,
        ..SbeConfig::default()
    };
    let u0 = Field::from_fn(cfg.grid, |x| 4.0 * x.sin()).unwrap();
    let run = run_free_evolution(u0, &cfg, 2.0, &[], Rng::seed_from_u64(0)).unwrap();
    let d = &run.diagnostics;
    let peak = d.iter().map(|s| s.max_gradient).fold(0.0, f64::max);
    assert!(
        peak > 2.0 * d[0].max_gradient,
        "{peak} vs {}",
        d[0].max_gradient
    );
    assert!(d.windows(2).all(|w| w[1].energy <= w[0].energy));
    assert!(d.last().unwrap().energy < 0.5 * d[0].energy);
}
