//! Independent reference computations used by the test suites.
//!
//! Nothing here calls into the crate's solver, network or quadrature code.

#![allow(dead_code)]

use std::f64::consts::TAU;

/// Midpoint Riemann sum of `f` on `[a, b]`.
pub fn riemann(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    (0..n).map(|i| f(a + (i as f64 + 0.5) * h)).sum::<f64>() * h
}

/// Viscous Burgers `u_t + (u²/2)_x = ν u_xx` on a periodic `[0, 2π)` grid
/// of `n` nodes, integrated with classical explicit RK4 on the centred
/// semi-discretisation. Returns nodal values at `t_end`.
pub fn burgers_rk4(
    u0: impl Fn(f64) -> f64,
    nu: f64,
    n: usize,
    t_end: f64,
    dt_max: f64,
) -> Vec<f64> {
    let dx = TAU / n as f64;
    let mut u: Vec<f64> = (0..n).map(|i| u0(i as f64 * dx)).collect();
    let steps = (t_end / dt_max).ceil() as usize;
    let dt = t_end / steps as f64;
    let rhs = |u: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let l = u[(i + n - 1) % n];
                let r = u[(i + 1) % n];
                nu * (r - 2.0 * u[i] + l) / (dx * dx) - (r * r - l * l) / (4.0 * dx)
            })
            .collect()
    };
    let axpy = |u: &[f64], k: &[f64], a: f64| -> Vec<f64> {
        u.iter().zip(k).map(|(x, y)| x + a * y).collect()
    };
    for _ in 0..steps {
        let k1 = rhs(&u);
        let k2 = rhs(&axpy(&u, &k1, 0.5 * dt));
        let k3 = rhs(&axpy(&u, &k2, 0.5 * dt));
        let k4 = rhs(&axpy(&u, &k3, dt));
        for i in 0..n {
            u[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    u
}

/// Stable explicit step bound for the centred scheme above.
pub fn rk4_dt(nu: f64, n: usize, u_max: f64) -> f64 {
    let dx = TAU / n as f64;
    let diffusive = 2.5 * dx * dx / (4.0 * nu);
    let convective = 2.5 * dx / u_max.max(1e-12);
    0.5 * diffusive.min(convective)
}

/// Max-norm difference between a coarse solution and a fine one sampled at
/// the coincident nodes.
pub fn max_error_on_coarse(coarse: &[f64], fine: &[f64]) -> f64 {
    let ratio = fine.len() / coarse.len();
    assert_eq!(ratio * coarse.len(), fine.len(), "grids must nest");
    coarse
        .iter()
        .enumerate()
        .map(|(i, c)| (c - fine[i * ratio]).abs())
        .fold(0.0, f64::max)
}

/// Sample mean and unbiased variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Ordinary least squares `y = a + b x`; returns `(a, b, r²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    (my - slope * mx, slope, sxy * sxy / (sxx * syy))
}
