//! Quadrature on `S^2 x [0, pi)`: Gauss–Legendre in `cos(theta)`, uniform
//! nodes in longitude and time.
//!
//! Grids are sized from exactness: for an even integer `q`, `|u|^q` of a
//! band-limited solution is a polynomial of degree `q k_max` in `cos(theta)`
//! (after the longitude integral) and a trigonometric polynomial in `phi` and
//! `t`, so the rules below integrate it exactly up to round-off.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exponents::Exponent;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("grid needs about {required} bytes, over the {budget}-byte memory budget")]
    MemoryBudget { required: u64, budget: u64 },
    #[error("sample layout {got} does not match grid layout {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("invalid grid request: {0}")]
    InvalidRequest(String),
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let mut acc = NeumaierSum::default();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc.add(w * f(*x));
        }
        acc.value()
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let n = n as f64;
    (p1, n * (x * p1 - p0) / (x * x - 1.0))
}

/// Roots of `P_n` by Newton iteration from Chebyshev-like initial guesses.
pub fn gauss_legendre_nodes(n: usize) -> GaussRule {
    assert!(n >= 1, "Gauss–Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
        if n % 2 == 1 && i == half - 1 {
            x = 0.0;
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // descending guesses: i-th largest root
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    GaussRule { nodes, weights }
}

/// Neumaier's compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Pairwise (cascade) sum with a fixed split order, independent of how the
/// terms were produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n if n <= 8 => {
            let mut acc = NeumaierSum::default();
            xs.iter().for_each(|x| acc.add(*x));
            acc.value()
        }
        n => pairwise_sum(&xs[..n / 2]) + pairwise_sum(&xs[n / 2..]),
    }
}

/// Spectral footprint of a band-limited field on `S^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Band {
    pub k_min: u64,
    pub k_max: u64,
    /// Smallest and largest azimuthal index present (both 0 for zonal data).
    pub m_min: i64,
    pub m_max: i64,
}

impl Band {
    pub fn zonal(k_min: u64, k_max: u64) -> Self {
        Band { k_min, k_max, m_min: 0, m_max: 0 }
    }

    /// Half time-frequency `k(k+1)/2`; `e^{i t k(k+1)}` has period `pi`.
    pub fn half_frequency(k: u64) -> u64 {
        k * (k + 1) / 2
    }

    /// Spread of half time-frequencies.
    pub fn time_span(&self) -> u64 {
        Band::half_frequency(self.k_max) - Band::half_frequency(self.k_min)
    }

    pub fn azimuthal_span(&self) -> u64 {
        (self.m_max - self.m_min) as u64
    }

    pub fn covers(&self, other: &Band) -> bool {
        other.k_max <= self.k_max
            && other.k_min >= self.k_min
            && other.m_min >= self.m_min
            && other.m_max <= self.m_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceBudget {
    pub memory_bytes: u64,
    /// Rows evaluated together (each holds an `n_phi x n_time` complex buffer).
    pub batch_rows: usize,
}

impl Default for ResourceBudget {
    fn default() -> Self {
        ResourceBudget { memory_bytes: 2 << 30, batch_rows: rayon::current_num_threads().max(1) }
    }
}

/// Tensor grid on `S^2 x [0, pi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    /// Gauss–Legendre rule in `x = cos(theta)`.
    pub colatitude: GaussRule,
    pub n_phi: usize,
    pub n_time: usize,
    /// Time interval is `[0, period)`; `pi` for the sphere `S^2`.
    pub period: f64,
    /// Spectral band the grid was sized for.
    pub band: Band,
    /// Even exponent whose `|u|^q` integral this grid computes exactly.
    pub exact_for: Option<u32>,
    pub oversample: f64,
}

/// Smallest `n >= target` of the form `2^a 3^b 5^c`.
pub fn fast_fft_len(target: usize) -> usize {
    let target = target.max(1);
    let mut best = usize::MAX;
    let mut p5 = 1usize;
    while p5 < best {
        let mut p35 = p5;
        while p35 < best {
            let mut n = p35;
            while n < target {
                n *= 2;
            }
            best = best.min(n);
            p35 *= 3;
        }
        p5 *= 5;
    }
    best
}

impl QuadratureGrid {
    pub fn n_theta(&self) -> usize {
        self.colatitude.len()
    }

    pub fn points_per_row(&self) -> usize {
        self.n_phi * self.n_time
    }

    pub fn phi_weight(&self) -> f64 {
        2.0 * PI / self.n_phi as f64
    }

    pub fn time_step(&self) -> f64 {
        self.period / self.n_time as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.time_step()
    }

    pub fn phi(&self, j: usize) -> f64 {
        j as f64 * self.phi_weight()
    }

    /// Weight of sphere node `(i, j)`; these sum to `4 pi`.
    pub fn sphere_weight(&self, i: usize) -> f64 {
        self.colatitude.weights[i] * self.phi_weight()
    }

    /// Whether `|u|^q` integrates exactly for fields inside `band`.
    pub fn is_exact_for(&self, q: u32, band: &Band) -> bool {
        if q % 2 == 1 || !self.band.covers(band) {
            return false;
        }
        let h = (q / 2) as u64;
        2 * self.n_theta() as u64 > q as u64 * band.k_max
            && self.n_time as u64 > h * band.time_span()
            && self.n_phi as u64 > h * band.azimuthal_span()
    }

    /// Peak working memory of a streaming pass, in bytes.
    pub fn memory_estimate(&self, batch_rows: usize) -> u64 {
        let row = (self.points_per_row() as u64) * 16;
        // row buffers, FFT scratch, and a handful of per-time accumulators
        row * batch_rows.max(1) as u64 + (self.n_time as u64) * 16 * 2 + (self.n_time as u64) * 8 * 6
    }
}

/// Sizes a grid for `|u|^q` over `band`.
///
/// Even `q`: exact (`n_theta = q k_max / 2 + 1`, `n_time > (q/2) W`,
/// `n_phi > (q/2) m_span`, where `W` is the half-frequency spread).
/// Other `q`: the same counts for `ceil(q)`, scaled by `oversample`.
pub fn build_grid(
    band: Band,
    q: Exponent,
    oversample: f64,
    budget: &ResourceBudget,
) -> Result<QuadratureGrid, QuadratureError> {
    if !(oversample >= 1.0 && oversample.is_finite()) {
        return Err(QuadratureError::InvalidRequest(format!("oversample {oversample} < 1")));
    }
    if band.k_min > band.k_max || band.m_min > band.m_max {
        return Err(QuadratureError::InvalidRequest(format!("empty band {band:?}")));
    }
    let (power, factor, exact_for) = match (q.even_integer(), q.ceil()) {
        (Some(e), _) => (e as f64, 1.0, Some(e)),
        (None, Some(c)) => (c as f64, oversample, None),
        (None, None) => {
            return Err(QuadratureError::InvalidRequest("q = inf has no quadrature rule".into()));
        }
    };
    if power < 1.0 {
        return Err(QuadratureError::InvalidRequest(format!("q = {q}")));
    }
    let n_theta = (factor * power * band.k_max as f64 / 2.0).ceil() as usize + 1;
    let n_phi_raw = (factor * power / 2.0 * band.azimuthal_span() as f64).ceil() as usize + 1;
    let n_time_raw = (factor * power / 2.0 * band.time_span() as f64).ceil() as usize + 1;
    let n_phi = if n_phi_raw > 1 { fast_fft_len(n_phi_raw) } else { 1 };
    let n_time = if n_time_raw > 1 { fast_fft_len(n_time_raw) } else { 1 };
    let grid = QuadratureGrid {
        colatitude: gauss_legendre_nodes(n_theta),
        n_phi,
        n_time,
        period: PI,
        band,
        exact_for,
        oversample: factor,
    };
    let required = grid.memory_estimate(budget.batch_rows);
    if required > budget.memory_bytes {
        return Err(QuadratureError::MemoryBudget { required, budget: budget.memory_bytes });
    }
    Ok(grid)
}

/// Same grid with colatitude and time (and longitude, if present) node
/// counts scaled by `factor`; used for refinement checks.
pub fn rescale_grid(grid: &QuadratureGrid, factor: f64, budget: &ResourceBudget) -> Result<QuadratureGrid, QuadratureError> {
    let scale = |n: usize, fft: bool| {
        if n <= 1 {
            n
        } else {
            let m = ((n as f64) * factor).ceil().max(2.0) as usize;
            if fft { fast_fft_len(m) } else { m }
        }
    };
    let out = QuadratureGrid {
        colatitude: gauss_legendre_nodes(scale(grid.n_theta(), false)),
        n_phi: scale(grid.n_phi, true),
        n_time: scale(grid.n_time, true),
        period: grid.period,
        band: grid.band,
        exact_for: None,
        oversample: grid.oversample * factor,
    };
    let required = out.memory_estimate(budget.batch_rows);
    if required > budget.memory_bytes {
        return Err(QuadratureError::MemoryBudget { required, budget: budget.memory_bytes });
    }
    Ok(out)
}

/// `sum_ij w_ij values_ij` over a `[theta][phi]` row-major sample layout.
pub fn sphere_integral(values: &[f64], grid: &QuadratureGrid) -> Result<f64, QuadratureError> {
    let expected = grid.n_theta() * grid.n_phi;
    if values.len() != expected {
        return Err(QuadratureError::ShapeMismatch { expected, got: values.len() });
    }
    let mut acc = NeumaierSum::default();
    for (i, row) in values.chunks(grid.n_phi).enumerate() {
        let w = grid.sphere_weight(i);
        for v in row {
            acc.add(w * v);
        }
    }
    Ok(acc.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonics::{zonal_harmonic, ZonalField};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn small_rules() {
        let r = gauss_legendre_nodes(1);
        assert_eq!(r.nodes, vec![0.0]);
        assert!((r.weights[0] - 2.0).abs() < 1e-15);
        let r = gauss_legendre_nodes(2);
        let a = 1.0 / 3f64.sqrt();
        assert!((r.nodes[0] + a).abs() < 1e-15 && (r.nodes[1] - a).abs() < 1e-15);
        assert!((r.weights[0] - 1.0).abs() < 1e-15 && (r.weights[1] - 1.0).abs() < 1e-15);
        let r = gauss_legendre_nodes(3);
        assert!((r.integrate(|x| x.powi(4)) - 0.4).abs() < 1e-14);
    }

    #[test]
    fn nodes_are_roots() {
        for n in [5usize, 17, 64, 257, 1000] {
            let r = gauss_legendre_nodes(n);
            assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
            for &x in &r.nodes {
                let (p, dp) = legendre_with_derivative(n, x);
                // Newton step size bounds the node error
                assert!((p / dp).abs() < 1e-14, "n={n} x={x}");
            }
            let total: f64 = r.weights.iter().sum();
            assert!((total - 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn monomial_exactness() {
        for n in 1..40usize {
            let r = gauss_legendre_nodes(n);
            for deg in 0..2 * n {
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                let got = r.integrate(|x| x.powi(deg as i32));
                assert!((got - exact).abs() < 1e-12, "n={n} deg={deg}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn fft_lengths() {
        assert_eq!(fast_fft_len(1), 1);
        assert_eq!(fast_fft_len(7), 8);
        assert_eq!(fast_fft_len(11), 12);
        assert_eq!(fast_fft_len(367_681), 368_640);
        for t in 1..2000 {
            let n = fast_fft_len(t);
            assert!(n >= t);
            let mut m = n;
            for p in [2, 3, 5] {
                while m % p == 0 {
                    m /= p;
                }
            }
            assert_eq!(m, 1);
        }
    }

    fn zonal_grid(k_max: u64, q: u32) -> QuadratureGrid {
        build_grid(Band::zonal(0, k_max), Exponent::integer(q as i64), 1.0, &ResourceBudget::default()).unwrap()
    }

    #[test]
    fn sphere_weights_total() {
        let g = build_grid(
            Band { k_min: 2, k_max: 9, m_min: -9, m_max: 9 },
            Exponent::integer(4),
            1.0,
            &ResourceBudget::default(),
        )
        .unwrap();
        let ones = vec![1.0; g.n_theta() * g.n_phi];
        assert!((sphere_integral(&ones, &g).unwrap() - 4.0 * PI).abs() < 1e-12 * 4.0 * PI);
        assert!(matches!(sphere_integral(&ones[1..], &g), Err(QuadratureError::ShapeMismatch { .. })));
    }

    #[test]
    fn grid_sizes() {
        // lambda = 8 zonal, q = 4: |u|^4 has degree 4 k_max in cos(theta)
        let g = zonal_grid(15, 4);
        assert!(2 * g.n_theta() - 1 >= 4 * 15);
        assert_eq!(g.n_phi, 1);
        assert_eq!(g.exact_for, Some(4));
        // single mode: time integrand constant, one node suffices
        let g = build_grid(Band::zonal(7, 7), Exponent::integer(2), 1.0, &ResourceBudget::default()).unwrap();
        assert_eq!(g.n_time, 1);
        let g = build_grid(Band::zonal(3, 20), Exponent::integer(6), 1.0, &ResourceBudget::default()).unwrap();
        assert!(g.n_time as u64 > 3 * Band::zonal(3, 20).time_span());
        let tiny = ResourceBudget { memory_bytes: 1000, batch_rows: 1 };
        assert!(matches!(
            build_grid(Band::zonal(100, 300), Exponent::integer(6), 1.0, &tiny),
            Err(QuadratureError::MemoryBudget { .. })
        ));
        assert!(build_grid(Band::zonal(0, 3), Exponent::Infinite, 1.0, &ResourceBudget::default()).is_err());
    }

    #[test]
    fn periodic_trapezoid_exactness() {
        let n = 37usize;
        let h = 2.0 * PI / n as f64;
        for j in -(n as i64 - 1)..=(n as i64 - 1) {
            let (mut re, mut im) = (0.0, 0.0);
            for s in 0..n {
                let a = j as f64 * s as f64 * h;
                re += a.cos() * h;
                im += a.sin() * h;
            }
            let exact = if j == 0 { 2.0 * PI } else { 0.0 };
            assert!((re - exact).abs() < 1e-12 && im.abs() < 1e-12, "j={j}");
        }
    }

    #[test]
    fn zonal_orthonormality() {
        let g = zonal_grid(40, 2);
        let values_of = |f: &ZonalField| -> Vec<f64> { g.colatitude.nodes.iter().map(|&x| f.value(x).re).collect() };
        for k in [0u64, 1, 5, 17, 40] {
            let zk = values_of(&zonal_harmonic(k));
            let sq: Vec<f64> = zk.iter().map(|v| v * v).collect();
            assert!((sphere_integral(&sq, &g).unwrap() - 1.0).abs() < 1e-12);
            for j in [0u64, 2, 6, 39] {
                if j == k {
                    continue;
                }
                let zj = values_of(&zonal_harmonic(j));
                let prod: Vec<f64> = zk.iter().zip(&zj).map(|(a, b)| a * b).collect();
                assert!(sphere_integral(&prod, &g).unwrap().abs() < 1e-12);
            }
        }
    }

    /// Shewchuk-style exact accumulation, used as the extended-precision reference.
    fn exact_sum(xs: &[f64]) -> f64 {
        let mut partials: Vec<f64> = Vec::new();
        for &x0 in xs {
            let mut x = x0;
            let mut i = 0;
            for j in 0..partials.len() {
                let mut y = partials[j];
                if x.abs() < y.abs() {
                    std::mem::swap(&mut x, &mut y);
                }
                let hi = x + y;
                let lo = y - (hi - x);
                if lo != 0.0 {
                    partials[i] = lo;
                    i += 1;
                }
                x = hi;
            }
            partials.truncate(i);
            partials.push(x);
        }
        partials.iter().sum()
    }

    #[test]
    fn compensated_summation_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = zonal_grid(2000, 2);
        let vals: Vec<f64> = (0..g.n_theta())
            .map(|_| {
                let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
                s * 10f64.powf(rng.random_range(-3.0..3.0))
            })
            .collect();
        let got = sphere_integral(&vals, &g).unwrap();
        let terms: Vec<f64> = vals.iter().enumerate().map(|(i, v)| g.sphere_weight(i) * v).collect();
        let reference = exact_sum(&terms);
        assert!((got - reference).abs() <= 1e-12 * reference.abs().max(1.0), "{got} vs {reference}");
        let pw = pairwise_sum(&terms);
        assert!((pw - reference).abs() <= 1e-12 * reference.abs().max(1.0));
    }
}
