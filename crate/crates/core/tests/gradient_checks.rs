mod common;

use common::checks;
use ndarray::Array2;
use rand::{Rng as _, SeedableRng};
use sbe_control::nn::{Adam, Mlp};
use sbe_control::rng::Rng;

#[test]
fn backprop_matches_central_differences() {
    let worst = checks::backprop_vs_fd(100, 2024);
    assert!(worst < 1e-5, "max relative error {worst:e}");
}

#[test]
fn actor_chain_rule_matches_central_differences() {
    let worst = checks::actor_chain_vs_fd(100, 7);
    assert!(worst < 1e-5, "max relative error {worst:e}");
}

#[test]
fn small_net_fits_sine() {
    let mut rng = Rng::seed_from_u64(3);
    let x = Array2::from_shape_fn((100, 4), |_| {
        rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)
    });
    let y = x.column(0).mapv(f64::sin).insert_axis(ndarray::Axis(1));
    let mut net = Mlp::new(&[4, 8, 8, 1], &mut rng).unwrap();
    let mut opt = Adam::new(&net, 1e-3);
    let mse = |net: &Mlp| {
        (net.forward(x.view()).unwrap() - &y)
            .mapv(|d| d * d)
            .mean()
            .unwrap()
    };
    let start = mse(&net);
    for _ in 0..5000 {
        let cache = net.forward_cached(x.view()).unwrap();
        let up = (cache.output() - &y) * (2.0 / 100.0);
        let (g, _) = net.backward(&cache, up.view()).unwrap();
        opt.step(&mut net, &g).unwrap();
    }
    let end = mse(&net);
    assert!(end < 1e-2, "mse {start} -> {end}");
}
