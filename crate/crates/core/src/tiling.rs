//! Smooth partitions of unity and the dyadic close-cube pairing.
//!
//! All bumps are built from the transition `psi(t) = exp(-1/t)` (zero for
//! `t <= 0`), so every partition identity is an exact telescoping sum and the
//! supports are respected with exact zeros.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

fn psi(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// Smooth monotone step: 0 for `t <= 0`, 1 for `t >= 1`.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let a = psi(t);
    a / (a + psi(1.0 - t))
}

/// Equal to 1 on `(-inf, 1]`, 0 on `[2, inf)`.
fn lp_transition(s: f64) -> f64 {
    1.0 - smooth_step(s - 1.0)
}

/// Climbs from 0 at `tau = -1` to 1 at `tau = 0`.
fn unit_transition(tau: f64) -> f64 {
    smooth_step(tau + 1.0)
}

/// A compactly supported smooth cutoff.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SmoothBump {
    #[default]
    /// `beta(s) = zeta(s) - zeta(2s)`, supported in `(1/2, 2)`, with
    /// `sum_m beta(2^-m s) = 1` for `s > 0`.
    LittlewoodPaley,
    /// `eta(tau)`, even, supported in `(-1, 1)`, with `sum_j eta(tau - j) = 1`.
    UnitStep,
    /// Bump supported in `(lo, hi)` equal to 1 at the midpoint.
    Window { lo: f64, hi: f64 },
    Zero,
}

impl SmoothBump {
    pub fn eval(&self, s: f64) -> f64 {
        match *self {
            SmoothBump::LittlewoodPaley => lp_transition(s) - lp_transition(2.0 * s),
            SmoothBump::UnitStep => unit_transition(s) - unit_transition(s - 1.0),
            SmoothBump::Window { lo, hi } => {
                if s <= lo || s >= hi {
                    return 0.0;
                }
                let w = 0.5 * (hi - lo);
                // exp(-1/(s-lo) - 1/(hi-s)), normalised to 1 at the midpoint
                (2.0 / w - 1.0 / (s - lo) - 1.0 / (hi - s)).exp().min(1.0)
            }
            SmoothBump::Zero => 0.0,
        }
    }

    /// Open interval outside of which the bump vanishes identically.
    pub fn support(&self) -> Option<(f64, f64)> {
        match *self {
            SmoothBump::LittlewoodPaley => Some((0.5, 2.0)),
            SmoothBump::UnitStep => Some((-1.0, 1.0)),
            SmoothBump::Window { lo, hi } => Some((lo, hi)),
            SmoothBump::Zero => None,
        }
    }
}

pub fn make_lp_bump() -> SmoothBump {
    SmoothBump::LittlewoodPaley
}

pub fn make_unit_partition() -> SmoothBump {
    SmoothBump::UnitStep
}

/// `sum_{m=lo}^{hi} beta(2^-m s)`.
pub fn dyadic_partition_sum(bump: &SmoothBump, s: f64, lo: i32, hi: i32) -> f64 {
    (lo..=hi).map(|m| bump.eval(s * 2f64.powi(-m))).sum()
}

/// `sum_{j=lo}^{hi} eta(tau - j)`.
pub fn integer_partition_sum(bump: &SmoothBump, tau: f64, lo: i64, hi: i64) -> f64 {
    (lo..=hi).map(|j| bump.eval(tau - j as f64)).sum()
}

/// Index of a dyadic square `[i theta, (i+1) theta) x [j theta, (j+1) theta)`.
pub type CubeIndex = [i64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WhitneyResult {
    /// The pair lies in `cube1 x cube2` at side `2^scale theta0`, the two
    /// cubes being non-adjacent with adjacent parents.
    Close { scale: u32, cube1: CubeIndex, cube2: CubeIndex },
    /// Base-scale cubes touch or coincide.
    Residual,
}

/// Base-scale cube containing `p`; coarser cubes are obtained by shifting,
/// which keeps the lattices exactly nested.
pub fn base_cube(p: [f64; 2], theta0: f64) -> CubeIndex {
    [(p[0] / theta0).floor() as i64, (p[1] / theta0).floor() as i64]
}

pub fn parent(c: CubeIndex, levels: u32) -> CubeIndex {
    [c[0] >> levels, c[1] >> levels]
}

fn chebyshev(a: CubeIndex, b: CubeIndex) -> i64 {
    (a[0] - b[0]).abs().max((a[1] - b[1]).abs())
}

/// Closed cubes intersect.
pub fn adjacent(a: CubeIndex, b: CubeIndex) -> bool {
    chebyshev(a, b) <= 1
}

/// Non-adjacent cubes whose parents are adjacent.
pub fn is_close_pair(a: CubeIndex, b: CubeIndex) -> bool {
    !adjacent(a, b) && adjacent(parent(a, 1), parent(b, 1))
}

/// Euclidean distance between two closed cubes of side `theta`.
pub fn cube_distance(a: CubeIndex, b: CubeIndex, theta: f64) -> f64 {
    let gap = |i: usize| ((a[i] - b[i]).abs() - 1).max(0) as f64 * theta;
    gap(0).hypot(gap(1))
}

pub fn whitney_locate(nu1: [f64; 2], nu2: [f64; 2], theta0: f64) -> WhitneyResult {
    let b1 = base_cube(nu1, theta0);
    let b2 = base_cube(nu2, theta0);
    if adjacent(b1, b2) {
        return WhitneyResult::Residual;
    }
    // adjacency is monotone in the scale, so the first close scale is the only one
    let mut m = 0;
    loop {
        let (c1, c2) = (parent(b1, m), parent(b2, m));
        if is_close_pair(c1, c2) {
            return WhitneyResult::Close { scale: m, cube1: c1, cube2: c2 };
        }
        m += 1;
    }
}

/// Every scale in `0..=max_scale` at which the pair sits in close cubes.
pub fn close_scales(nu1: [f64; 2], nu2: [f64; 2], theta0: f64, max_scale: u32) -> Vec<u32> {
    let b1 = base_cube(nu1, theta0);
    let b2 = base_cube(nu2, theta0);
    (0..=max_scale)
        .filter(|&m| is_close_pair(parent(b1, m), parent(b2, m)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WhitneyRecord {
    pub pair: usize,
    pub nu1: [f64; 2],
    pub nu2: [f64; 2],
    pub separation: f64,
    pub result: WhitneyResult,
    pub close_scale_count: usize,
    pub cube_distance: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct WhitneyAudit {
    pub pairs: usize,
    pub far_pairs: usize,
    pub near_pairs: usize,
    pub close: usize,
    pub residual: usize,
    /// Non-residual pairs without exactly one close scale.
    pub uniqueness_violations: usize,
    /// Close pairs violating `theta <= dist <= 8 theta`.
    pub distance_violations: usize,
    /// Residual pairs with separation above `4 theta0`, or far pairs classified residual.
    pub residual_violations: usize,
    /// `whitney_locate` disagreeing with the exhaustive scale scan.
    pub locate_mismatches: usize,
}

impl WhitneyAudit {
    pub fn violations(&self) -> usize {
        self.uniqueness_violations + self.distance_violations + self.residual_violations + self.locate_mismatches
    }
}

/// Seeded audit on `far` pairs with separation in `(4 theta0, 1)` (log-uniform)
/// and `near` pairs with separation in `[0, 4 theta0]`.
pub fn whitney_audit(far: usize, near: usize, theta0: f64, seed: u64) -> (WhitneyAudit, Vec<WhitneyRecord>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut audit = WhitneyAudit::default();
    let mut records = Vec::with_capacity(far + near);
    for i in 0..far + near {
        let is_far = i < far;
        let nu1 = [rng.random::<f64>(), rng.random::<f64>()];
        let sep = if is_far {
            let (lo, hi) = ((4.0 * theta0).ln(), 0.0);
            let mut s = (lo + (hi - lo) * rng.random::<f64>()).exp();
            if s <= 4.0 * theta0 {
                s = 4.0 * theta0 * (1.0 + 1e-6);
            }
            s
        } else {
            4.0 * theta0 * rng.random::<f64>()
        };
        let angle = std::f64::consts::TAU * rng.random::<f64>();
        let nu2 = [nu1[0] + sep * angle.cos(), nu1[1] + sep * angle.sin()];
        let separation = (nu2[0] - nu1[0]).hypot(nu2[1] - nu1[1]);
        if is_far && separation <= 4.0 * theta0 {
            // rounding in the polar offset; redraw-free skip keeps the stream deterministic
            continue;
        }
        let result = whitney_locate(nu1, nu2, theta0);
        let max_scale = ((separation / theta0).log2().ceil().max(0.0) as u32) + 3;
        let scales = close_scales(nu1, nu2, theta0, max_scale);
        audit.pairs += 1;
        if is_far {
            audit.far_pairs += 1;
        } else {
            audit.near_pairs += 1;
        }
        let mut dist = None;
        match result {
            WhitneyResult::Residual => {
                audit.residual += 1;
                if separation > 4.0 * theta0 || is_far {
                    audit.residual_violations += 1;
                }
                if !scales.is_empty() {
                    audit.locate_mismatches += 1;
                }
            }
            WhitneyResult::Close { scale, cube1, cube2 } => {
                audit.close += 1;
                if scales.len() != 1 {
                    audit.uniqueness_violations += 1;
                }
                if scales.first() != Some(&scale) {
                    audit.locate_mismatches += 1;
                }
                let theta = theta0 * 2f64.powi(scale as i32);
                let d = cube_distance(cube1, cube2, theta);
                if !(theta <= d && d <= 8.0 * theta) {
                    audit.distance_violations += 1;
                }
                dist = Some(d);
            }
        }
        records.push(WhitneyRecord {
            pair: i,
            nu1,
            nu2,
            separation,
            result,
            close_scale_count: scales.len(),
            cube_distance: dist,
        });
    }
    (audit, records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lp_bump_support_and_values() {
        let b = make_lp_bump();
        assert_eq!(b.eval(0.4), 0.0);
        assert_eq!(b.eval(0.5), 0.0);
        assert_eq!(b.eval(2.5), 0.0);
        assert_eq!(b.eval(2.0), 0.0);
        assert_eq!(b.eval(1.0), 1.0);
        assert!(b.eval(0.7) > 0.0 && b.eval(1.6) > 0.0);
    }

    #[test]
    fn lp_partition_is_exact() {
        let b = make_lp_bump();
        let n = 10_000;
        for i in 0..n {
            let s = 10f64.powf(-6.0 + 12.0 * (i as f64 + 0.5) / n as f64);
            let total = dyadic_partition_sum(&b, s, -40, 40);
            assert!((total - 1.0).abs() < 1e-12, "s={s} total={total}");
        }
    }

    #[test]
    fn unit_partition_examples() {
        let e = make_unit_partition();
        assert_eq!(e.eval(1.0), 0.0);
        assert_eq!(e.eval(-1.0), 0.0);
        assert_eq!(e.eval(0.0), 1.0);
        for i in 0..=4000 {
            let tau = -2.0 + 4.0 * i as f64 / 4000.0;
            assert!((integer_partition_sum(&e, tau, -3, 3) - 1.0).abs() < 1e-12);
            assert!((e.eval(tau) - e.eval(-tau)).abs() < 1e-15);
        }
    }

    #[test]
    fn flat_at_gluing_points() {
        let lp = make_lp_bump();
        let eta = make_unit_partition();
        let cases: [(&SmoothBump, &[f64]); 2] = [(&lp, &[0.5, 1.0, 2.0]), (&eta, &[-1.0, 0.0, 1.0])];
        for (bump, seams) in cases {
            for &seam in seams {
                let base = bump.eval(seam);
                for i in 1..=40 {
                    let d = 0.02 * i as f64 / 40.0;
                    // increments vanish faster than any power of d
                    for side in [-1.0, 1.0] {
                        let inc = (bump.eval(seam + side * d) - base).abs();
                        assert!(inc <= d.powi(6), "seam {seam} d {d}: {inc}");
                    }
                }
            }
        }
    }

    #[test]
    fn window_bump() {
        let w = SmoothBump::Window { lo: 0.9, hi: 1.1 };
        assert_eq!(w.eval(0.9), 0.0);
        assert_eq!(w.eval(1.1), 0.0);
        assert!((w.eval(1.0) - 1.0).abs() < 1e-15);
        assert!(w.eval(0.95) > 0.0 && w.eval(0.95) < 1.0);
        assert_eq!(SmoothBump::Zero.eval(1.0), 0.0);
    }

    #[test]
    fn whitney_examples() {
        let t0 = 0.01;
        assert_eq!(whitney_locate([0.3, 0.3], [0.3, 0.3], t0), WhitneyResult::Residual);
        let r = whitney_locate([0.0, 0.0], [3.5 * t0, 0.5 * t0], t0);
        assert_eq!(r, WhitneyResult::Close { scale: 0, cube1: [0, 0], cube2: [3, 0] });
        // index distance 2 with parents (0,0),(1,0): close at the base scale
        assert!(is_close_pair([1, 0], [3, 0]));
        // parents (0,0),(2,0) are not adjacent
        assert!(!is_close_pair([0, 0], [4, 0]));
        assert_eq!(cube_distance([0, 0], [3, 0], 1.0), 2.0);
        assert_eq!(cube_distance([0, 0], [1, 1], 1.0), 0.0);
    }

    #[test]
    fn whitney_audit_has_no_violations() {
        let (audit, records) = whitney_audit(2000, 500, 1.0 / 1024.0, 7);
        assert_eq!(audit.violations(), 0, "{audit:?}");
        assert_eq!(records.len(), audit.pairs);
        assert!(audit.close > 2000 && audit.residual > 0);
    }
}
