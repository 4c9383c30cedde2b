//! Spherical harmonics on `S^2`: Legendre recurrences, zonal and modal
//! fields, highest-weight harmonics and band-limited test functions.
//!
//! Coefficients are taken in an `L^2`-orthonormal basis, so the `L^2` norm of
//! a field is the Euclidean norm of its coefficients.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::Band;
use crate::spectrum::{band_levels, sphere_eigenvalue};
use crate::tiling::SmoothBump;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarmonicsError {
    #[error("Legendre argument {0} outside [-1, 1]")]
    Domain(f64),
    #[error("negative exponent {0}")]
    NegativeExponent(f64),
    #[error("mode (k = {k}, m = {m}) has |m| > k")]
    InvalidMode { k: u64, m: i64 },
    #[error("field has no modes")]
    Empty,
}

/// `P_0(x), ..., P_kmax(x)` by Bonnet's recurrence.
pub fn legendre_sequence(k_max: u64, x: f64) -> Result<Vec<f64>, HarmonicsError> {
    if !(-1.0..=1.0).contains(&x) {
        return Err(HarmonicsError::Domain(x));
    }
    let mut out = Vec::with_capacity(k_max as usize + 1);
    out.push(1.0);
    if k_max >= 1 {
        out.push(x);
    }
    for k in 2..=k_max as usize {
        let kf = k as f64;
        let p = ((2.0 * kf - 1.0) * x * out[k - 1] - (kf - 1.0) * out[k - 2]) / kf;
        out.push(p);
    }
    Ok(out)
}

/// `sqrt((2k+1) / (4 pi))`: value at the north pole of the unit zonal harmonic.
pub fn zonal_normalization(k: u64) -> f64 {
    ((2 * k + 1) as f64 / (4.0 * PI)).sqrt()
}

/// Orthonormal associated Legendre values `P~_k^m(x)` for `k = m..=k_max`,
/// normalized so that `P~_k^m(cos theta) e^{i m phi}` has unit `L^2(S^2)`
/// norm. Runs in a rescaled representation so large `m` does not underflow
/// the seed `P~_m^m`.
pub fn associated_legendre(m: u64, k_max: u64, x: f64) -> Result<Vec<f64>, HarmonicsError> {
    if !(-1.0..=1.0).contains(&x) {
        return Err(HarmonicsError::Domain(x));
    }
    if k_max < m {
        return Ok(Vec::new());
    }
    let mf = m as f64;
    let sin2 = (1.0 - x) * (1.0 + x);
    // ln P~_m^m = 1/2 ln((2m+1)/(4pi) (2m)! / (2^{2m} (m!)^2)) + (m/2) ln(1 - x^2)
    let mut log_scale = 0.5
        * (((2.0 * mf + 1.0) / (4.0 * PI)).ln() + libm::lgamma(2.0 * mf + 1.0)
            - 2.0 * mf * std::f64::consts::LN_2
            - 2.0 * libm::lgamma(mf + 1.0));
    if m > 0 {
        if sin2 == 0.0 {
            return Ok(vec![0.0; (k_max - m + 1) as usize]);
        }
        log_scale += 0.5 * mf * sin2.ln();
    }
    const RESCALE: f64 = 1e100;
    let ln_rescale = RESCALE.ln();
    let mut out = Vec::with_capacity((k_max - m + 1) as usize);
    let emit = |p: f64, log_scale: f64| -> f64 {
        if p == 0.0 {
            return 0.0;
        }
        let l = log_scale + p.abs().ln();
        if l < -745.0 { 0.0 } else { p.signum() * l.exp() }
    };
    let mut prev2 = 0.0;
    let mut prev1 = 1.0;
    out.push(emit(prev1, log_scale));
    for k in m + 1..=k_max {
        let kf = k as f64;
        let denom = kf * kf - mf * mf;
        let a = ((4.0 * kf * kf - 1.0) / denom).sqrt();
        let b = if k == m + 1 {
            0.0
        } else {
            (((kf - 1.0) * (kf - 1.0) - mf * mf) * (2.0 * kf + 1.0) / ((2.0 * kf - 3.0) * denom)).sqrt()
        };
        let mut cur = a * x * prev1 - b * prev2;
        if cur.abs() > RESCALE {
            cur /= RESCALE;
            prev1 /= RESCALE;
            log_scale += ln_rescale;
        }
        prev2 = prev1;
        prev1 = cur;
        out.push(emit(cur, log_scale));
    }
    Ok(out)
}

/// Axially symmetric field `sum_k a_k Z_k`, `Z_k = sqrt((2k+1)/4pi) P_k(cos theta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZonalField {
    /// `coefficients[k]` multiplies the unit zonal harmonic of degree `k`.
    pub coefficients: Vec<Complex64>,
}

impl ZonalField {
    pub fn new(coefficients: Vec<Complex64>) -> Self {
        ZonalField { coefficients }
    }

    pub fn degrees(&self) -> impl Iterator<Item = (u64, Complex64)> + '_ {
        self.coefficients
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != Complex64::new(0.0, 0.0))
            .map(|(k, c)| (k as u64, *c))
    }

    pub fn band(&self) -> Option<Band> {
        let mut it = self.degrees().map(|(k, _)| k);
        let lo = it.next()?;
        let hi = it.last().unwrap_or(lo);
        Some(Band::zonal(lo, hi))
    }

    pub fn l2_norm(&self) -> f64 {
        self.coefficients.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Per-degree values `a_k Z_k(x)`.
    pub fn terms(&self, x: f64) -> Vec<Complex64> {
        let k_max = self.coefficients.len().saturating_sub(1) as u64;
        let p = legendre_sequence(k_max, x.clamp(-1.0, 1.0)).expect("clamped");
        self.coefficients
            .iter()
            .enumerate()
            .map(|(k, c)| c * (zonal_normalization(k as u64) * p[k]))
            .collect()
    }

    /// Value at `cos(theta) = x`.
    pub fn value(&self, x: f64) -> Complex64 {
        self.terms(x).into_iter().sum()
    }

    pub fn scaled(&self, s: f64) -> ZonalField {
        ZonalField::new(self.coefficients.iter().map(|c| c * s).collect())
    }
}

pub fn zonal_harmonic(k: u64) -> ZonalField {
    let mut c = vec![Complex64::new(0.0, 0.0); k as usize + 1];
    c[k as usize] = Complex64::new(1.0, 0.0);
    ZonalField::new(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub k: u64,
    pub m: i64,
    pub coeff: Complex64,
}

/// General field `sum c_km Y_km` with `Y_km = P~_k^|m|(cos theta) e^{i m phi}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalField {
    /// Sorted by `(m, k)`, no repeats.
    modes: Vec<Mode>,
}

impl ModalField {
    /// Repeated `(k, m)` entries are summed.
    pub fn new(mut modes: Vec<Mode>) -> Result<Self, HarmonicsError> {
        if let Some(bad) = modes.iter().find(|md| md.m.unsigned_abs() > md.k) {
            return Err(HarmonicsError::InvalidMode { k: bad.k, m: bad.m });
        }
        modes.sort_by_key(|md| (md.m, md.k));
        let mut merged: Vec<Mode> = Vec::with_capacity(modes.len());
        for md in modes {
            match merged.last_mut() {
                Some(last) if last.k == md.k && last.m == md.m => last.coeff += md.coeff,
                _ => merged.push(md),
            }
        }
        Ok(ModalField { modes: merged })
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn band(&self) -> Option<Band> {
        let k_min = self.modes.iter().map(|m| m.k).min()?;
        let k_max = self.modes.iter().map(|m| m.k).max()?;
        let m_min = self.modes.first()?.m;
        let m_max = self.modes.last()?.m;
        Some(Band { k_min, k_max, m_min, m_max })
    }

    pub fn l2_norm(&self) -> f64 {
        self.modes.iter().map(|m| m.coeff.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, s: f64) -> ModalField {
        ModalField { modes: self.modes.iter().map(|m| Mode { coeff: m.coeff * s, ..*m }).collect() }
    }

    /// `c_km P~_k^|m|(x)` for every mode, in storage order.
    pub fn theta_terms(&self, x: f64) -> Vec<Complex64> {
        let x = x.clamp(-1.0, 1.0);
        let mut out = Vec::with_capacity(self.modes.len());
        let mut start = 0;
        while start < self.modes.len() {
            let m = self.modes[start].m;
            let end = start + self.modes[start..].iter().take_while(|md| md.m == m).count();
            let am = m.unsigned_abs();
            let k_top = self.modes[end - 1].k;
            let p = associated_legendre(am, k_top, x).expect("clamped");
            for md in &self.modes[start..end] {
                out.push(md.coeff * p[(md.k - am) as usize]);
            }
            start = end;
        }
        out
    }

    pub fn value(&self, theta: f64, phi: f64) -> Complex64 {
        self.theta_terms(theta.cos())
            .into_iter()
            .zip(&self.modes)
            .map(|(v, md)| v * Complex64::from_polar(1.0, md.m as f64 * phi))
            .sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("modal field serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        let raw: ModalField = serde_json::from_str(s)?;
        ModalField::new(raw.modes).map_err(serde::de::Error::custom)
    }
}

impl From<&ZonalField> for ModalField {
    fn from(z: &ZonalField) -> Self {
        let modes = z.degrees().map(|(k, c)| Mode { k, m: 0, coeff: c }).collect();
        ModalField::new(modes).expect("zonal modes are valid")
    }
}

/// Sectoral harmonic `c_k sin^k(theta) e^{i k phi}` with unit `L^2` norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HighestWeight {
    pub k: u64,
}

pub fn highest_weight(k: u64) -> HighestWeight {
    HighestWeight { k }
}

impl HighestWeight {
    /// `ln c_k` with `c_k^2 = (2k+1)! / (2 pi 2^{2k+1} (k!)^2)`.
    pub fn log_amplitude(&self) -> f64 {
        let k = self.k as f64;
        0.5 * (libm::lgamma(2.0 * k + 2.0)
            - (2.0 * PI).ln()
            - (2.0 * k + 1.0) * std::f64::consts::LN_2
            - 2.0 * libm::lgamma(k + 1.0))
    }

    pub fn field(&self) -> ModalField {
        ModalField::new(vec![Mode { k: self.k, m: self.k as i64, coeff: Complex64::new(1.0, 0.0) }])
            .expect("sectoral mode")
    }

    pub fn value(&self, theta: f64, phi: f64) -> Complex64 {
        let r = (self.log_amplitude() + self.k as f64 * theta.sin().abs().ln()).exp();
        Complex64::from_polar(r, self.k as f64 * phi)
    }

    /// `ln ||Q||_q` from `int_0^pi sin^n = sqrt(pi) Gamma((n+1)/2) / Gamma(n/2 + 1)`.
    pub fn log_lq_norm(&self, q: f64) -> Result<f64, HarmonicsError> {
        if q.is_nan() || q < 0.0 {
            return Err(HarmonicsError::NegativeExponent(q));
        }
        if q.is_infinite() {
            return Ok(self.log_amplitude());
        }
        if q == 0.0 {
            return Err(HarmonicsError::NegativeExponent(q));
        }
        let n = self.k as f64 * q + 1.0;
        let log_int = 0.5 * PI.ln() + libm::lgamma((n + 1.0) / 2.0) - libm::lgamma(n / 2.0 + 1.0);
        Ok(self.log_amplitude() + ((2.0 * PI).ln() + log_int) / q)
    }

    pub fn lq_norm(&self, q: f64) -> Result<f64, HarmonicsError> {
        self.log_lq_norm(q).map(f64::exp)
    }
}

/// `lambda^{-1} sum_k beta(sqrt(k(k+1))/lambda) (2k+1)/(4pi) P_k(cos theta)`:
/// the spectrally localized kernel centred at the north pole.
pub fn cluster_kernel(lambda: f64, bump: &SmoothBump) -> ZonalField {
    let levels = band_levels(lambda, bump, 2);
    let top = levels.last().copied().unwrap_or(0);
    let mut c = vec![Complex64::new(0.0, 0.0); top as usize + 1];
    for k in levels {
        let w = bump.eval(sphere_eigenvalue(2, k) / lambda) / lambda * zonal_normalization(k);
        c[k as usize] = Complex64::new(w, 0.0);
    }
    ZonalField::new(c)
}

/// `sum_k bump(sqrt(k(k+1))/lambda) (2k+1) / (4 pi)`; equals the diagonal of
/// the spectral projector at every point of `S^2`.
pub fn weyl_sum(lambda: f64, bump: &SmoothBump) -> f64 {
    band_levels(lambda, bump, 2)
        .into_iter()
        .map(|k| bump.eval(sphere_eigenvalue(2, k) / lambda) * (2 * k + 1) as f64 / (4.0 * PI))
        .sum()
}

/// Complex Gaussian coefficients weighted by the bump, normalized in `L^2`.
pub fn random_band_field(lambda: f64, bump: &SmoothBump, seed: u64) -> Result<ModalField, HarmonicsError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut modes = Vec::new();
    for k in band_levels(lambda, bump, 2) {
        let w = bump.eval(sphere_eigenvalue(2, k) / lambda) / std::f64::consts::SQRT_2;
        for m in -(k as i64)..=k as i64 {
            let g1: f64 = StandardNormal.sample(&mut rng);
            let g2: f64 = StandardNormal.sample(&mut rng);
            modes.push(Mode { k, m, coeff: Complex64::new(g1, g2) * w });
        }
    }
    let field = ModalField::new(modes)?;
    let norm = field.l2_norm();
    if norm == 0.0 {
        return Err(HarmonicsError::Empty);
    }
    Ok(field.scaled(1.0 / norm))
}
