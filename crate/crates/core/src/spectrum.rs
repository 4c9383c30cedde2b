//! Eigenvalue structure of `sqrt(-Laplacian)`: exact sphere eigenvalues,
//! Zoll cluster intervals and unit-length bands.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tiling::SmoothBump;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectrumError {
    #[error("cluster index must be at least 1")]
    ZeroCluster,
    #[error("invalid spectrum model: {0}")]
    InvalidModel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn disjoint(&self, other: &Interval) -> bool {
        self.hi < other.lo || other.hi < self.lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectrumKind {
    ExactSphere { dim: u32 },
    /// Cluster metadata only; no eigenfunctions are available.
    AbstractZoll,
}

/// Spectrum of `sqrt(-Laplacian)` on a Zoll manifold with common geodesic
/// period `period`: clusters of half-width `cluster_width / k` around
/// `(2 pi / period) (k + maslov / 4)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumModel {
    pub kind: SpectrumKind,
    pub period: f64,
    pub maslov: u32,
    pub cluster_width: f64,
}

impl SpectrumModel {
    /// Round `S^d` with the defaults `T = 2 pi`, `alpha = 2`, `A = 1`.
    pub fn sphere(dim: u32) -> Self {
        SpectrumModel { kind: SpectrumKind::ExactSphere { dim }, period: TAU, maslov: 2, cluster_width: 1.0 }
    }

    pub fn zoll(period: f64, maslov: u32, cluster_width: f64) -> Result<Self, SpectrumError> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(SpectrumError::InvalidModel(format!("period {period}")));
        }
        if !(cluster_width >= 0.0 && cluster_width.is_finite()) {
            return Err(SpectrumError::InvalidModel(format!("cluster width {cluster_width}")));
        }
        Ok(SpectrumModel { kind: SpectrumKind::AbstractZoll, period, maslov, cluster_width })
    }

    pub fn cluster_center(&self, k: u64) -> f64 {
        TAU / self.period * (k as f64 + self.maslov as f64 / 4.0)
    }

    pub fn eigenvalue(&self, k: u64) -> Option<f64> {
        match self.kind {
            SpectrumKind::ExactSphere { dim } => Some(sphere_eigenvalue(dim, k)),
            SpectrumKind::AbstractZoll => None,
        }
    }

    /// Smallest `k` from which consecutive clusters are disjoint:
    /// `A/k + A/(k+1) < 2 pi / T`.
    pub fn disjoint_from(&self) -> u64 {
        let gap = TAU / self.period;
        let a = self.cluster_width;
        if a == 0.0 {
            return 1;
        }
        // A/k + A/(k+1) < 2A/k, so the answer is at most ceil(2A/gap)
        let mut k = ((a / gap).floor() as u64).max(1);
        while k > 1 && a / (k - 1) as f64 + a / (k as f64) < gap {
            k -= 1;
        }
        while a / k as f64 + a / (k + 1) as f64 >= gap {
            k += 1;
        }
        k
    }
}

/// `sqrt(k (k + d - 1))`.
pub fn sphere_eigenvalue(d: u32, k: u64) -> f64 {
    let k = k as f64;
    (k * (k + d as f64 - 1.0)).sqrt()
}

pub fn zoll_cluster_interval(model: &SpectrumModel, k: u64) -> Result<Interval, SpectrumError> {
    if k == 0 {
        return Err(SpectrumError::ZeroCluster);
    }
    let c = model.cluster_center(k);
    let w = model.cluster_width / k as f64;
    Ok(Interval { lo: c - w, hi: c + w })
}

/// `[k + (alpha - 2)/4, k + (alpha + 2)/4]`.
pub fn unit_band_interval(alpha: u32, k: u64) -> Interval {
    let k = k as f64;
    let a = alpha as f64;
    Interval { lo: k + (a - 2.0) / 4.0, hi: k + (a + 2.0) / 4.0 }
}

/// Degrees `k` with `bump(sqrt(k(k+d-1)) / lambda) != 0`, ascending.
pub fn band_levels(lambda: f64, bump: &SmoothBump, d: u32) -> Vec<u64> {
    let Some((_, hi)) = bump.support() else {
        return Vec::new();
    };
    if !(lambda > 0.0) || hi <= 0.0 {
        return Vec::new();
    }
    // sqrt(k(k+d-1)) >= k, so k < hi * lambda covers the support
    let k_end = (hi * lambda).ceil() as u64 + 1;
    (0..=k_end)
        .filter(|&k| bump.eval(sphere_eigenvalue(d, k) / lambda) != 0.0)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tiling::make_lp_bump;

    #[test]
    fn eigenvalue_examples() {
        assert_eq!(sphere_eigenvalue(2, 3), 12f64.sqrt());
        assert_eq!(sphere_eigenvalue(5, 0), 0.0);
        assert_eq!(sphere_eigenvalue(3, 2), 8f64.sqrt());
        assert_eq!(SpectrumModel::sphere(2).eigenvalue(3), Some(12f64.sqrt()));
        assert_eq!(SpectrumModel::zoll(TAU, 2, 1.0).unwrap().eigenvalue(3), None);
    }

    #[test]
    fn cluster_examples() {
        let m = SpectrumModel::zoll(TAU, 2, 1.0).unwrap();
        let i = zoll_cluster_interval(&m, 10).unwrap();
        assert!((i.lo - 10.4).abs() < 1e-12 && (i.hi - 10.6).abs() < 1e-12);
        let degenerate = zoll_cluster_interval(&SpectrumModel::zoll(TAU, 2, 0.0).unwrap(), 10).unwrap();
        assert_eq!(degenerate.length(), 0.0);
        assert_eq!(zoll_cluster_interval(&m, 0), Err(SpectrumError::ZeroCluster));
        assert!(SpectrumModel::zoll(-1.0, 0, 1.0).is_err());
    }

    #[test]
    fn sphere_spectrum_inside_clusters() {
        let m = SpectrumModel::sphere(2);
        for k in 1..=1_000_000u64 {
            let ev = sphere_eigenvalue(2, k);
            assert!(zoll_cluster_interval(&m, k).unwrap().contains(ev), "k={k}");
            assert!((ev - (k as f64 + 0.5)).abs() <= 1.0 / (8.0 * k as f64) + 1e-15 * k as f64);
        }
    }

    #[test]
    fn clusters_disjoint_beyond_threshold() {
        for (t, a) in [(TAU, 1.0), (TAU, 3.0), (2.0, 0.5), (10.0, 2.0)] {
            let m = SpectrumModel::zoll(t, 1, a).unwrap();
            let k0 = m.disjoint_from();
            assert!(k0 == 1 || a / (k0 - 1) as f64 + a / k0 as f64 >= TAU / t);
            let mut prev = zoll_cluster_interval(&m, k0).unwrap();
            for k in k0 + 1..=1_000_000 {
                let cur = zoll_cluster_interval(&m, k).unwrap();
                assert!(prev.disjoint(&cur), "T={t} A={a} k={k}");
                prev = cur;
            }
        }
    }

    #[test]
    fn unit_bands() {
        let b = unit_band_interval(2, 10);
        assert_eq!((b.lo, b.hi), (10.0, 11.0));
        let b = unit_band_interval(0, 10);
        assert_eq!((b.lo, b.hi), (9.5, 10.5));
        for alpha in 0..8 {
            for k in 1..200 {
                assert_eq!(unit_band_interval(alpha, k).length(), 1.0);
            }
        }
        for alpha in 0..4u32 {
            for a in [0.5, 1.0, 2.5] {
                let m = SpectrumModel::zoll(TAU, alpha, a).unwrap();
                let start = (4.0 * a).ceil() as u64;
                for k in start.max(1)..start + 1000 {
                    let c = zoll_cluster_interval(&m, k).unwrap();
                    assert!(unit_band_interval(alpha, k).contains_interval(&c));
                }
            }
        }
    }

    #[test]
    fn band_level_examples() {
        let beta = make_lp_bump();
        let levels = band_levels(8.0, &beta, 2);
        assert!(!levels.is_empty());
        assert!(levels.iter().all(|k| (3..=16).contains(k)), "{levels:?}");
        assert!(levels.windows(2).all(|w| w[0] < w[1]));
        assert!(band_levels(0.2, &beta, 2).is_empty());
        assert!(band_levels(8.0, &SmoothBump::Zero, 2).is_empty());
        for m in 2..14 {
            let lambda = 2f64.powi(m);
            for d in 2..5 {
                let ks = band_levels(lambda, &beta, d);
                assert!(ks.iter().all(|&k| lambda / 4.0 <= k as f64 && k as f64 <= 4.0 * lambda));
            }
        }
        // about (2 - 1/2) lambda levels
        let counts: Vec<(f64, f64)> = (4..12)
            .map(|m| {
                let l = 2f64.powi(m);
                (l, band_levels(l, &beta, 2).len() as f64)
            })
            .collect();
        let fit = crate::exponents::fit_power_law(&counts).unwrap();
        assert!((fit.slope - 1.0).abs() < 0.02, "{fit:?}");
    }
}
