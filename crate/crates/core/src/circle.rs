//! Schrödinger evolution on the circle, `u = sum_k a_k e^{i k x + i k^2 t}`,
//! as a baseline where the `L^4` space-time norm has no loss.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::exponents::{fit_power_law, ExponentError, ExponentFit};
use crate::quadrature::NeumaierSum;
use crate::tiling::SmoothBump;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleData {
    /// `(k, a_k)`, `k` strictly increasing.
    pub modes: Vec<(i64, Complex64)>,
}

impl CircleData {
    pub fn new(mut modes: Vec<(i64, Complex64)>) -> Self {
        modes.sort_by_key(|m| m.0);
        modes.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 += b.1;
                true
            } else {
                false
            }
        });
        CircleData { modes }
    }

    /// `||f||_{L^2(S^1)}`.
    pub fn l2_norm(&self) -> f64 {
        (2.0 * PI * self.modes.iter().map(|m| m.1.norm_sqr()).sum::<f64>()).sqrt()
    }

    pub fn value(&self, x: f64, t: f64) -> Complex64 {
        self.modes.iter().map(|(k, a)| a * Complex64::from_polar(1.0, *k as f64 * x + (k * k) as f64 * t)).sum()
    }
}

/// Gaussian coefficients on `bump(|k| / lambda) != 0`, weighted by the bump.
pub fn random_circle_data(lambda: f64, bump: &SmoothBump, seed: u64) -> CircleData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let top = bump.support().map(|(_, hi)| (hi * lambda).ceil() as i64).unwrap_or(0);
    let mut modes = Vec::new();
    for k in -top..=top {
        let w = bump.eval(k.unsigned_abs() as f64 / lambda);
        if w == 0.0 {
            continue;
        }
        let g1: f64 = StandardNormal.sample(&mut rng);
        let g2: f64 = StandardNormal.sample(&mut rng);
        modes.push((k, Complex64::new(g1, g2) * (w / std::f64::consts::SQRT_2)));
    }
    CircleData::new(modes)
}

/// `||u||_{L^4(S^1 x [0, 2 pi])}^4 = (2 pi)^2 sum_{n, E} |sum_{k1+k2=n, k1^2+k2^2=E} a_k1 a_k2|^2`.
///
/// For fixed `n`, `k1^2 + k2^2 = (n^2 + (k1 - k2)^2) / 2`, so the level
/// sets are indexed by `|k1 - k2|`.
pub fn l4_norm_autocorrelation(data: &CircleData) -> f64 {
    let Some(&(k_min, _)) = data.modes.first() else {
        return 0.0;
    };
    let k_max = data.modes.last().unwrap().0;
    let span = (k_max - k_min) as usize;
    let mut dense = vec![Complex64::new(0.0, 0.0); span + 1];
    for (k, a) in &data.modes {
        dense[(k - k_min) as usize] = *a;
    }
    let mut by_gap = vec![Complex64::new(0.0, 0.0); span + 1];
    let mut total = NeumaierSum::default();
    for n in 2 * k_min..=2 * k_max {
        let lo = (n - k_max).max(k_min);
        let hi = (n - k_min).min(k_max);
        let mut touched = 0usize;
        for k1 in lo..=hi {
            let a1 = dense[(k1 - k_min) as usize];
            let a2 = dense[(n - k1 - k_min) as usize];
            if a1 == Complex64::new(0.0, 0.0) || a2 == Complex64::new(0.0, 0.0) {
                continue;
            }
            let gap = (2 * k1 - n).unsigned_abs() as usize;
            by_gap[gap] += a1 * a2;
            touched = touched.max(gap + 1);
        }
        for c in by_gap[..touched].iter_mut() {
            total.add(c.norm_sqr());
            *c = Complex64::new(0.0, 0.0);
        }
    }
    (2.0 * PI).powi(2) * total.value()
}

/// `||u||_{L^4}^4` by the periodic trapezoid rule on an `n_x x n_t` grid.
pub fn l4_norm_quadrature(data: &CircleData, n_x: usize, n_t: usize) -> f64 {
    let mut acc = NeumaierSum::default();
    let (hx, ht) = (2.0 * PI / n_x as f64, 2.0 * PI / n_t as f64);
    for i in 0..n_x {
        for n in 0..n_t {
            acc.add(data.value(i as f64 * hx, n as f64 * ht).norm_sqr().powi(2));
        }
    }
    acc.value() * hx * ht
}

/// `||u||_{L^4(S^1 x [0, 2pi])} / ||f||_{L^2}`.
pub fn l4_ratio(data: &CircleData) -> f64 {
    l4_norm_autocorrelation(data).powf(0.25) / data.l2_norm()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleBaseline {
    pub samples: Vec<(f64, f64)>,
    pub fit: ExponentFit,
}

pub fn circle_baseline(lambdas: &[f64], bump: &SmoothBump, seed: u64) -> Result<CircleBaseline, ExponentError> {
    let samples: Vec<(f64, f64)> =
        lambdas.iter().map(|&l| (l, l4_ratio(&random_circle_data(l, bump, seed)))).collect();
    let fit = fit_power_law(&samples)?;
    Ok(CircleBaseline { samples, fit })
}
