//! Oracles written independently of the library's solvers.

#![allow(dead_code)]

use pvcg::Profile;

/// `sum_j theta_j sqrt(n sum x) - sum_i gamma_i x_i` for scalar resources.
pub fn sqrt_sum_surplus(caps: &[f64], gammas: &[f64], thetas: &[f64], eta: &[f64]) -> f64 {
    let n = caps.len() as f64;
    let total: f64 = caps.iter().zip(eta).map(|(c, e)| c * e).sum();
    let cost: f64 = caps.iter().zip(gammas).zip(eta).map(|((c, g), e)| g * c * e).sum();
    thetas.iter().sum::<f64>() * (n * total).sqrt() - cost
}

/// Maximum of `f(k)` over `k in 0..=last` for `f` concave in `k`.
fn discrete_concave_max(last: usize, f: impl Fn(usize) -> f64) -> f64 {
    let (mut lo, mut hi) = (0usize, last);
    while hi - lo > 2 {
        let m1 = lo + (hi - lo) / 3;
        let m2 = hi - (hi - lo) / 3;
        if f(m1) < f(m2) {
            lo = m1 + 1;
        } else {
            hi = m2;
        }
    }
    (lo..=hi).map(f).fold(f64::NEG_INFINITY, f64::max)
}

/// Best surplus over the acceptance-ratio grid with spacing `1 / steps`.
///
/// Every coordinate but the last is enumerated; along the last coordinate the
/// objective is concave, so the grid maximum is found by discrete ternary
/// search, which returns the same value as enumerating it.
pub fn grid_oracle(profile: &Profile, steps: usize) -> f64 {
    let caps: Vec<f64> = profile.capacities.iter().map(|c| c.values()[0]).collect();
    let gammas = &profile.cost_types;
    let n = caps.len();
    let scale = profile.valuation_types.iter().sum::<f64>() * (n as f64).sqrt();
    let h = 1.0 / steps as f64;
    let outer = (steps + 1).pow((n - 1) as u32);
    let mut best = f64::NEG_INFINITY;
    for idx in 0..outer {
        let mut rest = idx;
        let (mut volume, mut cost) = (0.0, 0.0);
        for i in 0..n - 1 {
            let x = (rest % (steps + 1)) as f64 * h * caps[i];
            rest /= steps + 1;
            volume += x;
            cost += gammas[i] * x;
        }
        let (cap, gamma) = (caps[n - 1], gammas[n - 1]);
        let value = discrete_concave_max(steps, |k| {
            let x = k as f64 * h * cap;
            scale * (volume + x).sqrt() - cost - gamma * x
        });
        best = best.max(value);
    }
    best
}

/// Relative difference with a floor on the scale.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
