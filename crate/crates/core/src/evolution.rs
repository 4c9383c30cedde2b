//! Schrödinger evolution `u(t) = e^{-it Laplacian} f` on `S^2` and its
//! space-time Lebesgue norms.
//!
//! Each degree-`k` component picks up `e^{i t k(k+1)}`. On the time grid
//! `t_n = n pi / N` this is `e^{2 pi i n h_k / N}` with `h_k = k(k+1)/2`, so a
//! colatitude row of samples is one inverse FFT (two for non-zonal data).
//! Samples are produced row by row and reduced on the fly; the full
//! space-time array is never stored.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exponents::{Exponent, Rational};
use crate::harmonics::{cluster_kernel, zonal_normalization, HarmonicsError, ModalField, ZonalField};
use crate::quadrature::{build_grid, pairwise_sum, rescale_grid, Band, QuadratureError, QuadratureGrid, ResourceBudget};
use crate::tiling::SmoothBump;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolutionError {
    #[error("field band {field:?} is not covered by grid band {grid:?}")]
    BandMismatch { field: Band, grid: Band },
    #[error("field has no modes")]
    EmptyField,
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Harmonics(#[from] HarmonicsError),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// Initial data on `S^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Field {
    Zonal(ZonalField),
    Modal(ModalField),
}

impl Field {
    pub fn band(&self) -> Option<Band> {
        match self {
            Field::Zonal(z) => z.band(),
            Field::Modal(m) => m.band(),
        }
    }

    pub fn l2_norm(&self) -> f64 {
        match self {
            Field::Zonal(z) => z.l2_norm(),
            Field::Modal(m) => m.l2_norm(),
        }
    }

    /// `(k, m, c P~_k^|m|(x))` for each mode.
    fn theta_terms(&self, x: f64) -> Vec<(u64, i64, Complex64)> {
        match self {
            Field::Zonal(z) => z
                .terms(x)
                .into_iter()
                .enumerate()
                .filter(|(k, _)| z.coefficients[*k] != Complex64::new(0.0, 0.0))
                .map(|(k, v)| (k as u64, 0, v))
                .collect(),
            Field::Modal(f) => f.theta_terms(x).into_iter().zip(f.modes()).map(|(v, md)| (md.k, md.m, v)).collect(),
        }
    }
}

/// `|u|^q` evaluated from `|u|^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Power {
    Sup,
    /// `(|u|^2)^n`
    Even(i32),
    /// `(|u|^2)^{n/3}`
    Thirds(i32),
    General(f64),
}

impl Power {
    fn of(q: Exponent) -> Power {
        match q {
            Exponent::Infinite => Power::Sup,
            Exponent::Finite(r) => {
                let half = r / Rational::from_integer(2);
                match *half.denom() {
                    1 => Power::Even(*half.numer() as i32),
                    3 => Power::Thirds(*half.numer() as i32),
                    _ => Power::General(*half.numer() as f64 / *half.denom() as f64),
                }
            }
        }
    }

    fn exponent(self) -> f64 {
        match self {
            Power::Sup => f64::INFINITY,
            Power::Even(n) => 2.0 * n as f64,
            Power::Thirds(n) => 2.0 * n as f64 / 3.0,
            Power::General(h) => 2.0 * h,
        }
    }

    #[inline]
    fn from_sq(self, r2: f64) -> f64 {
        match self {
            Power::Sup => r2.sqrt(),
            Power::Even(n) => r2.powi(n),
            Power::Thirds(n) => r2.cbrt().powi(n),
            Power::General(h) => r2.powf(h),
        }
    }

    /// Adds `w |u|^q` (or takes the max for `q = inf`).
    #[inline]
    fn fold(self, acc: f64, r2: f64, w: f64) -> f64 {
        match self {
            Power::Sup => acc.max(r2.sqrt()),
            _ => acc + w * self.from_sq(r2),
        }
    }

    fn finish(self, acc: f64) -> f64 {
        match self {
            Power::Sup => acc,
            _ => acc.powf(1.0 / self.exponent()),
        }
    }

    fn is_sup(self) -> bool {
        self == Power::Sup
    }
}

/// Order of integration for mixed norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixedOrder {
    /// `L^q_x L^p_t`: time norm at each point, then the space norm.
    TimeInner,
    /// `L^p_t L^q_x`: space norm at each time, then the time norm.
    SpaceInner,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixedNorm {
    pub time: Exponent,
    pub space: Exponent,
    pub order: MixedOrder,
}

/// What one streaming pass accumulates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NormRequest {
    pub spacetime: Vec<Exponent>,
    pub mixed: Vec<MixedNorm>,
    /// Also restrict the `spacetime` norms to `t in [0, 1]`.
    pub unit_interval: bool,
    pub diagnostics: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `max_n | ||u(t_n)||_2 / ||f||_2 - 1 |` over every time node.
    pub unitarity_defect: f64,
    /// Spectral energy outside the data's time-frequency bins, relative.
    pub off_band_energy: f64,
    /// `max |u(t + pi) - u(t)|` over random points, relative to the local term scale.
    pub periodicity_defect: f64,
    /// FFT samples against direct summation, relative to the local term scale.
    pub fft_direct_defect: f64,
    pub points_checked: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSummary {
    pub n_theta: usize,
    pub n_phi: usize,
    pub n_time: usize,
}

impl From<&QuadratureGrid> for GridSummary {
    fn from(g: &QuadratureGrid) -> Self {
        GridSummary { n_theta: g.n_theta(), n_phi: g.n_phi, n_time: g.n_time }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub spacetime: Vec<(Exponent, f64)>,
    pub unit_interval: Vec<(Exponent, f64)>,
    pub mixed: Vec<(MixedNorm, f64)>,
    pub unitarity_defect: f64,
    pub diagnostics: Option<Diagnostics>,
    pub grid: GridSummary,
}

/// Lazily evaluated solution on a quadrature grid.
pub struct SpaceTimeField<'a> {
    field: &'a Field,
    grid: &'a QuadratureGrid,
    band: Band,
    fft_time: Arc<dyn Fft<f64>>,
    fft_phi: Arc<dyn Fft<f64>>,
    parallel: bool,
    batch_rows: usize,
}

pub fn propagate<'a>(field: &'a Field, grid: &'a QuadratureGrid) -> Result<SpaceTimeField<'a>, EvolutionError> {
    let band = field.band().ok_or(EvolutionError::EmptyField)?;
    if !grid.band.covers(&band) {
        return Err(EvolutionError::BandMismatch { field: band, grid: grid.band });
    }
    let mut planner = FftPlanner::new();
    Ok(SpaceTimeField {
        field,
        grid,
        band,
        fft_time: planner.plan_fft_inverse(grid.n_time),
        fft_phi: planner.plan_fft_inverse(grid.n_phi),
        parallel: true,
        batch_rows: ResourceBudget::default().batch_rows.max(4),
    })
}

struct RowPartial {
    spacetime: Vec<f64>,
    unit: Vec<f64>,
    time_inner: Vec<f64>,
    /// `[0]` is `sum_j |u|^2`; then one per space-inner mixed norm.
    per_time: Vec<Vec<f64>>,
}

impl<'a> SpaceTimeField<'a> {
    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn with_batch_rows(mut self, rows: usize) -> Self {
        self.batch_rows = rows.max(1);
        self
    }

    pub fn grid(&self) -> &QuadratureGrid {
        self.grid
    }

    fn time_bin(&self, k: u64) -> usize {
        ((Band::half_frequency(k) - Band::half_frequency(self.band.k_min)) % self.grid.n_time as u64) as usize
    }

    fn phi_bin(&self, m: i64) -> usize {
        ((m - self.band.m_min) as u64 % self.grid.n_phi as u64) as usize
    }

    /// Spectrum of row `i` on the `[phi bin][time bin]` lattice.
    fn row_spectrum(&self, i: usize) -> Vec<Complex64> {
        let (np, nt) = (self.grid.n_phi, self.grid.n_time);
        let x = self.grid.colatitude.nodes[i];
        let mut buf = vec![Complex64::new(0.0, 0.0); np * nt];
        match self.field {
            Field::Zonal(_) => {
                for (k, _, v) in self.field.theta_terms(x) {
                    buf[self.time_bin(k)] += v;
                }
            }
            Field::Modal(_) => {
                for (k, m, v) in self.field.theta_terms(x) {
                    buf[self.phi_bin(m) * nt + self.time_bin(k)] += v;
                }
            }
        }
        buf
    }

    /// Samples of row `i`, layout `[phi j][time n]`, up to the unimodular
    /// factor `e^{i m_min phi_j} e^{i k_min(k_min+1) t_n}`.
    pub fn row(&self, i: usize) -> Vec<Complex64> {
        let (np, nt) = (self.grid.n_phi, self.grid.n_time);
        let mut buf = self.row_spectrum(i);
        match self.field {
            Field::Zonal(_) => {
                self.fft_time.process(&mut buf[..nt]);
                for j in 1..np {
                    buf.copy_within(0..nt, j * nt);
                }
            }
            Field::Modal(_) => {
                for r in 0..np {
                    let chunk = &mut buf[r * nt..(r + 1) * nt];
                    if chunk.iter().any(|c| *c != Complex64::new(0.0, 0.0)) {
                        self.fft_time.process(chunk);
                    }
                }
                if np > 1 {
                    let mut col = vec![Complex64::new(0.0, 0.0); np];
                    let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft_phi.get_inplace_scratch_len()];
                    for n in 0..nt {
                        for r in 0..np {
                            col[r] = buf[r * nt + n];
                        }
                        self.fft_phi.process_with_scratch(&mut col, &mut scratch);
                        for r in 0..np {
                            buf[r * nt + n] = col[r];
                        }
                    }
                }
            }
        }
        buf
    }

    /// Sample at grid node `(i, j, n)` with the true phase.
    pub fn sample(&self, i: usize, j: usize, n: usize) -> Complex64 {
        let v = self.row(i)[j * self.grid.n_time + n];
        v * self.demodulation(j, n)
    }

    fn demodulation(&self, j: usize, n: usize) -> Complex64 {
        let nt = self.grid.n_time as i128;
        let l = (self.band.k_min * (self.band.k_min + 1)) as i128;
        let frac = (n as i128 * l).rem_euclid(2 * nt) as f64 / nt as f64;
        Complex64::from_polar(1.0, self.band.m_min as f64 * self.grid.phi(j) + PI * frac)
    }

    /// Direct summation at `cos(theta) = x`, longitude `phi`, time
    /// `pi * num / den` with exact reduction of the phases.
    pub fn direct_value(&self, x: f64, phi: f64, num: i64, den: i64) -> Complex64 {
        direct_value(self.field, x, phi, num, den)
    }

    fn unit_weights(&self) -> Vec<f64> {
        let nt = self.grid.n_time;
        let dt = self.grid.time_step();
        let mut w = vec![0.0; nt];
        let last = ((1.0 / dt).floor() as usize).min(nt - 1);
        if last == 0 {
            w[0] = 1.0;
            return w;
        }
        for wn in w.iter_mut().take(last) {
            *wn = dt;
        }
        w[0] = dt / 2.0;
        w[last] = dt / 2.0;
        // linear interpolation over the partial panel up to t = 1
        let s = (1.0 - self.grid.time(last)) / dt;
        if s > 0.0 && last + 1 < nt {
            w[last] += dt * (s - s * s / 2.0);
            w[last + 1] += dt * s * s / 2.0;
        }
        w
    }

    fn row_partial(&self, i: usize, plan: &Plan) -> RowPartial {
        let (np, nt) = (self.grid.n_phi, self.grid.n_time);
        let dt = self.grid.time_step();
        let buf = self.row(i);
        let mut spacetime = vec![0.0; plan.spacetime.len()];
        let mut unit = vec![0.0; if plan.unit { plan.spacetime.len() } else { 0 }];
        let mut time_inner = vec![0.0; plan.time_inner.len()];
        let mut per_time = vec![vec![0.0; nt]; 1 + plan.space_inner.len()];
        let mut inner = vec![0.0; plan.time_inner.len()];
        for j in 0..np {
            let series = &buf[j * nt..(j + 1) * nt];
            inner.iter_mut().for_each(|v| *v = 0.0);
            for (n, u) in series.iter().enumerate() {
                let r2 = u.norm_sqr();
                per_time[0][n] += r2;
                for (a, p) in spacetime.iter_mut().zip(&plan.spacetime) {
                    *a = p.fold(*a, r2, 1.0);
                }
                if plan.unit && plan.unit_weights[n] > 0.0 {
                    for (a, p) in unit.iter_mut().zip(&plan.spacetime) {
                        *a = p.fold(*a, r2, plan.unit_weights[n]);
                    }
                }
                for (a, (tp, _)) in inner.iter_mut().zip(&plan.time_inner) {
                    *a = tp.fold(*a, r2, dt);
                }
                for (s, (_, sp)) in plan.space_inner.iter().enumerate() {
                    let slot = &mut per_time[1 + s][n];
                    *slot = sp.fold(*slot, r2, 1.0);
                }
            }
            for ((acc, g), (tp, sp)) in time_inner.iter_mut().zip(&inner).zip(&plan.time_inner) {
                let norm = tp.finish(*g);
                *acc = sp.fold(*acc, norm * norm, 1.0);
            }
        }
        RowPartial { spacetime, unit, time_inner, per_time }
    }

    /// One streaming pass over the grid.
    pub fn measure(&self, request: &NormRequest) -> Result<NormReport, EvolutionError> {
        if request.spacetime.is_empty() && request.mixed.is_empty() && !request.diagnostics {
            return Err(EvolutionError::InvalidRequest("nothing to measure".into()));
        }
        let plan = Plan::new(request, self.unit_weights());
        let nt = self.grid.n_time;
        let n_theta = self.grid.n_theta();
        let dt = self.grid.time_step();
        let mut st_terms = vec![Vec::with_capacity(n_theta); plan.spacetime.len()];
        let mut unit_terms = vec![Vec::with_capacity(n_theta); if plan.unit { plan.spacetime.len() } else { 0 }];
        let mut ti_terms = vec![Vec::with_capacity(n_theta); plan.time_inner.len()];
        let mut per_time = vec![vec![0.0; nt]; 1 + plan.space_inner.len()];
        let mut start = 0;
        while start < n_theta {
            let end = (start + self.batch_rows).min(n_theta);
            let partials: Vec<RowPartial> = if self.parallel {
                (start..end).into_par_iter().map(|i| self.row_partial(i, &plan)).collect()
            } else {
                (start..end).map(|i| self.row_partial(i, &plan)).collect()
            };
            for (offset, part) in partials.into_iter().enumerate() {
                let w = self.grid.sphere_weight(start + offset);
                for ((terms, p), v) in st_terms.iter_mut().zip(&plan.spacetime).zip(&part.spacetime) {
                    terms.push(if p.is_sup() { *v } else { w * dt * v });
                }
                for ((terms, p), v) in unit_terms.iter_mut().zip(&plan.spacetime).zip(&part.unit) {
                    terms.push(if p.is_sup() { *v } else { w * v });
                }
                for ((terms, (_, sp)), v) in ti_terms.iter_mut().zip(&plan.time_inner).zip(&part.time_inner) {
                    terms.push(if sp.is_sup() { *v } else { w * v });
                }
                for (s, row) in part.per_time.iter().enumerate() {
                    let sup = s > 0 && plan.space_inner[s - 1].1.is_sup();
                    for (acc, v) in per_time[s].iter_mut().zip(row) {
                        *acc = if sup { f64::max(*acc, *v) } else { *acc + w * v };
                    }
                }
            }
            start = end;
        }
        let reduce = |p: Power, terms: &[f64]| {
            if p.is_sup() {
                terms.iter().cloned().fold(0.0, f64::max)
            } else {
                p.finish(pairwise_sum(terms))
            }
        };
        let spacetime = request.spacetime.iter().zip(&plan.spacetime).zip(&st_terms).map(|((q, p), t)| (*q, reduce(*p, t))).collect();
        let unit_interval = if plan.unit {
            request.spacetime.iter().zip(&plan.spacetime).zip(&unit_terms).map(|((q, p), t)| (*q, reduce(*p, t))).collect()
        } else {
            Vec::new()
        };
        let mut mixed = Vec::new();
        let (mut ti, mut si) = (0, 0);
        for m in &request.mixed {
            match m.order {
                MixedOrder::TimeInner => {
                    mixed.push((*m, reduce(plan.time_inner[ti].1, &ti_terms[ti])));
                    ti += 1;
                }
                MixedOrder::SpaceInner => {
                    let (tp, sp) = plan.space_inner[si];
                    let terms: Vec<f64> = per_time[1 + si]
                        .iter()
                        .map(|acc| {
                            let x = sp.finish(*acc);
                            if tp.is_sup() { x } else { dt * tp.from_sq(x * x) }
                        })
                        .collect();
                    mixed.push((*m, reduce(tp, &terms)));
                    si += 1;
                }
            }
        }
        let norm = self.field.l2_norm();
        let unitarity_defect = per_time[0].iter().map(|e| (e.sqrt() / norm - 1.0).abs()).fold(0.0, f64::max);
        let diagnostics = if request.diagnostics { Some(self.diagnostics(unitarity_defect)) } else { None };
        Ok(NormReport { spacetime, unit_interval, mixed, unitarity_defect, diagnostics, grid: self.grid.into() })
    }

    fn diagnostics(&self, unitarity_defect: f64) -> Diagnostics {
        let (np, nt) = (self.grid.n_phi, self.grid.n_time);
        let n_theta = self.grid.n_theta();
        let mut rows = vec![0, n_theta / 2, n_theta - 1];
        rows.dedup();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut off_band: f64 = 0.0;
        let mut fft_direct: f64 = 0.0;
        let mut periodicity: f64 = 0.0;
        let mut checked = 0;
        let mut planner = FftPlanner::new();
        let fwd_t = planner.plan_fft_forward(nt);
        let fwd_p = planner.plan_fft_forward(np);
        for &i in &rows {
            let x = self.grid.colatitude.nodes[i];
            let samples = self.row(i);
            // back to the spectral lattice
            let mut spec = samples.clone();
            if matches!(self.field, Field::Modal(_)) && np > 1 {
                let mut col = vec![Complex64::new(0.0, 0.0); np];
                for n in 0..nt {
                    for r in 0..np {
                        col[r] = spec[r * nt + n];
                    }
                    fwd_p.process(&mut col);
                    for r in 0..np {
                        spec[r * nt + n] = col[r];
                    }
                }
            }
            let phi_rows = if matches!(self.field, Field::Zonal(_)) { 1 } else { np };
            for r in 0..phi_rows {
                fwd_t.process(&mut spec[r * nt..(r + 1) * nt]);
            }
            let expected = self.row_spectrum(i);
            let scale = (np * nt) as f64 / if phi_rows == 1 { np as f64 } else { 1.0 };
            let mut inside = 0.0;
            let mut outside = 0.0;
            for idx in 0..phi_rows * nt {
                let e = spec[idx].norm_sqr() / (scale * scale);
                if expected[idx] != Complex64::new(0.0, 0.0) {
                    inside += e;
                } else {
                    outside += e;
                }
            }
            if inside + outside > 0.0 {
                off_band = off_band.max(outside / (inside + outside));
            }
            let term_scale: f64 = self.field.theta_terms(x).iter().map(|(_, _, v)| v.norm()).sum::<f64>().max(f64::MIN_POSITIVE);
            for _ in 0..8 {
                let j = rng.random_range(0..np);
                let n = rng.random_range(0..nt);
                let fft_value = samples[j * nt + n] * self.demodulation(j, n);
                let direct = self.direct_value(x, self.grid.phi(j), n as i64, nt as i64);
                fft_direct = fft_direct.max((fft_value - direct).norm() / term_scale);
                let den = 1i64 << 20;
                let num = rng.random_range(0..den);
                let phi = rng.random_range(0.0..2.0 * PI);
                let a = self.direct_value(x, phi, num, den);
                let b = self.direct_value(x, phi, num + den, den);
                periodicity = periodicity.max((a - b).norm() / term_scale);
                checked += 1;
            }
        }
        Diagnostics {
            unitarity_defect,
            off_band_energy: off_band,
            periodicity_defect: periodicity,
            fft_direct_defect: fft_direct,
            points_checked: checked,
        }
    }
}

struct Plan {
    spacetime: Vec<Power>,
    unit: bool,
    unit_weights: Vec<f64>,
    /// `(time power, space power)` for time-inner mixed norms.
    time_inner: Vec<(Power, Power)>,
    space_inner: Vec<(Power, Power)>,
}

impl Plan {
    fn new(req: &NormRequest, unit_weights: Vec<f64>) -> Plan {
        let pick = |order| {
            req.mixed.iter().filter(|m| m.order == order).map(|m| (Power::of(m.time), Power::of(m.space))).collect()
        };
        Plan {
            spacetime: req.spacetime.iter().map(|q| Power::of(*q)).collect(),
            unit: req.unit_interval,
            unit_weights,
            time_inner: pick(MixedOrder::TimeInner),
            space_inner: pick(MixedOrder::SpaceInner),
        }
    }
}

/// `u(theta, phi, pi num / den)` by direct summation.
pub fn direct_value(field: &Field, x: f64, phi: f64, num: i64, den: i64) -> Complex64 {
    field
        .theta_terms(x)
        .into_iter()
        .map(|(k, m, v)| {
            let l = (k * (k + 1)) as i128;
            let frac = (num as i128 * l).rem_euclid(2 * den as i128) as f64 / den as f64;
            v * Complex64::from_polar(1.0, m as f64 * phi + PI * frac)
        })
        .sum()
}

/// `u(theta, phi, t)` by direct summation for moderate `|t|`.
pub fn value_at_time(field: &Field, x: f64, phi: f64, t: f64) -> Complex64 {
    field
        .theta_terms(x)
        .into_iter()
        .map(|(k, m, v)| v * Complex64::from_polar(1.0, m as f64 * phi + t * (k * (k + 1)) as f64))
        .sum()
}

pub fn spacetime_norm(u: &SpaceTimeField<'_>, q: Exponent) -> Result<f64, EvolutionError> {
    let r = u.measure(&NormRequest { spacetime: vec![q], ..Default::default() })?;
    Ok(r.spacetime[0].1)
}

pub fn mixed_norm(u: &SpaceTimeField<'_>, time: Exponent, space: Exponent, order: MixedOrder) -> Result<f64, EvolutionError> {
    let r = u.measure(&NormRequest { mixed: vec![MixedNorm { time, space, order }], ..Default::default() })?;
    Ok(r.mixed[0].1)
}

/// A space-time `L^q` norm with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredNorm {
    pub q: Exponent,
    pub value: f64,
    /// Quadrature exact up to round-off.
    pub exact: bool,
    /// Relative change against the grid with half the nodes per direction
    /// (non-exact exponents only).
    pub grid_change: Option<f64>,
    pub unit_interval: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub norms: Vec<MeasuredNorm>,
    pub unitarity_defect: f64,
    pub diagnostics: Option<Diagnostics>,
    pub grid: GridSummary,
}

/// Space-time norms over `S^2 x [0, pi)` for all `qs` in one pass, on the
/// largest grid any of them needs. Non-even exponents get a second, coarser
/// pass to report how much the value moved.
pub fn measure_lq(
    field: &Field,
    qs: &[Exponent],
    oversample: f64,
    budget: &ResourceBudget,
    diagnostics: bool,
) -> Result<Measurement, EvolutionError> {
    measure_lq_with(field, qs, oversample, budget, diagnostics, true)
}

/// [`measure_lq`] with the row loop optionally serial; results agree bitwise.
pub fn measure_lq_with(
    field: &Field,
    qs: &[Exponent],
    oversample: f64,
    budget: &ResourceBudget,
    diagnostics: bool,
    parallel: bool,
) -> Result<Measurement, EvolutionError> {
    let band = field.band().ok_or(EvolutionError::EmptyField)?;
    if qs.is_empty() {
        return Err(EvolutionError::InvalidRequest("no exponents".into()));
    }
    let mut grid: Option<QuadratureGrid> = None;
    for q in qs {
        if q.ceil().is_none() {
            continue;
        }
        let g = build_grid(band, *q, oversample, budget)?;
        let size = |g: &QuadratureGrid| g.n_theta() * g.points_per_row();
        if grid.as_ref().is_none_or(|cur| size(&g) > size(cur)) {
            grid = Some(g);
        }
    }
    let grid = match grid {
        Some(g) => g,
        None => build_grid(band, Exponent::integer(2), oversample, budget)?,
    };
    let request = NormRequest { spacetime: qs.to_vec(), mixed: Vec::new(), unit_interval: true, diagnostics };
    let report =
        propagate(field, &grid)?.with_batch_rows(budget.batch_rows).with_parallel(parallel).measure(&request)?;
    let needs_check = qs.iter().any(|q| q.even_integer().is_none_or(|e| !grid.is_exact_for(e, &band)));
    let coarse = if needs_check {
        let g2 = rescale_grid(&grid, 0.5, budget)?;
        let r = propagate(field, &g2)?
            .with_batch_rows(budget.batch_rows)
            .with_parallel(parallel)
            .measure(&NormRequest { spacetime: qs.to_vec(), ..Default::default() })?;
        Some(r.spacetime)
    } else {
        None
    };
    let norms = qs
        .iter()
        .enumerate()
        .map(|(idx, q)| {
            let value = report.spacetime[idx].1;
            let exact = q.even_integer().is_some_and(|e| grid.is_exact_for(e, &band));
            let grid_change = match (&coarse, exact) {
                (Some(c), false) => Some(((value - c[idx].1) / value).abs()),
                _ => None,
            };
            MeasuredNorm { q: *q, value, exact, grid_change, unit_interval: report.unit_interval[idx].1 }
        })
        .collect();
    Ok(Measurement { norms, unitarity_defect: report.unitarity_defect, diagnostics: report.diagnostics, grid: report.grid })
}

/// `||u||_{L^4(S^2 x [0, pi))}^4` by grouping degree pairs into level sets
/// of `k1(k1+1) + k2(k2+1)`: for fixed `x`, `u(x,t)^2 = sum_L c_L(x) e^{itL}`,
/// and distinct (even) levels are orthogonal on `[0, pi)`.
pub fn l4_by_level_sets(field: &ZonalField, grid: &QuadratureGrid) -> f64 {
    let degrees: Vec<u64> = field.degrees().map(|(k, _)| k).collect();
    let mut pairs: Vec<(u64, usize, usize)> = Vec::with_capacity(degrees.len() * degrees.len());
    for (a, &k1) in degrees.iter().enumerate() {
        for (b, &k2) in degrees.iter().enumerate() {
            pairs.push((k1 * (k1 + 1) + k2 * (k2 + 1), a, b));
        }
    }
    pairs.sort_unstable();
    let coeffs: Vec<Complex64> = degrees.iter().map(|&k| field.coefficients[k as usize]).collect();
    let rows: Vec<f64> = grid
        .colatitude
        .nodes
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let p = crate::harmonics::legendre_sequence(*degrees.last().unwrap(), x).unwrap();
            let b: Vec<Complex64> =
                degrees.iter().zip(&coeffs).map(|(&k, c)| c * (zonal_normalization(k) * p[k as usize])).collect();
            let mut total = 0.0;
            let mut idx = 0;
            while idx < pairs.len() {
                let level = pairs[idx].0;
                let mut c = Complex64::new(0.0, 0.0);
                while idx < pairs.len() && pairs[idx].0 == level {
                    c += b[pairs[idx].1] * b[pairs[idx].2];
                    idx += 1;
                }
                total += c.norm_sqr();
            }
            2.0 * PI * grid.colatitude.weights[i] * PI * total
        })
        .collect();
    pairwise_sum(&rows)
}

/// Behaviour of `|u(x0, t)|` near `t = 0` for the kernel centred at `x0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakPersistence {
    pub lambda: f64,
    pub delta: f64,
    pub peak: f64,
    /// `min |u(x0, t)| / |u(x0, 0)|` over `|t| <= delta / lambda^2`.
    pub min_ratio: f64,
    pub points: usize,
}

pub fn peak_persistence(lambda: f64, bump: &SmoothBump, delta: f64, points: usize) -> Result<PeakPersistence, EvolutionError> {
    if points < 2 || !(delta > 0.0) {
        return Err(EvolutionError::InvalidRequest(format!("delta {delta}, {points} points")));
    }
    let kernel = cluster_kernel(lambda, bump);
    if kernel.band().is_none() {
        return Err(EvolutionError::EmptyField);
    }
    let field = Field::Zonal(kernel);
    let peak = value_at_time(&field, 1.0, 0.0, 0.0).norm();
    let t_max = delta / (lambda * lambda);
    let mut min_ratio = f64::INFINITY;
    for s in 0..points {
        let t = -t_max + 2.0 * t_max * s as f64 / (points - 1) as f64;
        min_ratio = min_ratio.min(value_at_time(&field, 1.0, 0.0, t).norm() / peak);
    }
    Ok(PeakPersistence { lambda, delta, peak, min_ratio, points })
}

/// Largest candidate `delta` keeping half the peak for every `lambda`.
pub fn calibrate_delta(lambdas: &[f64], bump: &SmoothBump, candidates: &[f64]) -> Option<f64> {
    let mut sorted = candidates.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted.into_iter().find(|&d| {
        lambdas.iter().all(|&l| peak_persistence(l, bump, d, 65).map(|p| p.min_ratio >= 0.5).unwrap_or(false))
    })
}
