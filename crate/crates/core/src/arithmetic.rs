//! Lattice counting: annulus pair counts, representation counts of
//! `k(k+1)` sums, and triple level sets.
//!
//! Shifted squares `(k + alpha/4)^2` are handled as `(4k + alpha)^2 / 16`,
//! so every window test is integer arithmetic.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exponents::{fit_power_law, ExponentFit};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArithmeticError {
    #[error("lambda must be at least {min}, got {got}")]
    LambdaTooSmall { min: u64, got: u64 },
    #[error("window half-width C0 must be positive and finite, got {0}")]
    Window(f64),
    #[error("cell width lambda * 4^j = {lambda} * 4^{j} is below 1")]
    CellTooNarrow { lambda: u64, j: i32 },
    #[error("profile would hold {0} indices; use the streaming summary instead")]
    ProfileTooLarge(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CountParams {
    Annulus { lambda: u64, alpha: u32, c0: f64 },
    TripleLevels { lambda: u64, j: i32 },
    PairRepresentation { l_max: u64 },
}

/// Nonzero counts by index, ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountProfile<I> {
    pub params: CountParams,
    pub entries: Vec<(I, u64)>,
    pub max_count: u64,
    pub argmax: Option<I>,
    pub total: u64,
}

impl<I: Ord + Copy> CountProfile<I> {
    fn from_entries(params: CountParams, entries: Vec<(I, u64)>) -> Self {
        let mut max_count = 0;
        let mut argmax = None;
        let mut total = 0;
        for &(i, c) in &entries {
            total += c;
            if c > max_count {
                max_count = c;
                argmax = Some(i);
            }
        }
        CountProfile { params, entries, max_count, argmax, total }
    }

    pub fn count(&self, index: I) -> u64 {
        self.entries.binary_search_by(|(i, _)| i.cmp(&index)).map(|p| self.entries[p].1).unwrap_or(0)
    }
}

/// `16 (C0 + 1)` rounded down: a shifted-square sum `S/16` lies in
/// `[j - C0 - 1, j + C0 + 1]` iff `|S - 16 j| <= window`.
pub fn annulus_window(c0: f64) -> Result<u64, ArithmeticError> {
    if !(c0 > 0.0 && c0.is_finite()) {
        return Err(ArithmeticError::Window(c0));
    }
    Ok(16 + (16.0 * c0).floor() as u64)
}

/// Band of levels `lambda/4 <= k <= 4 lambda`.
pub fn level_box(lambda: u64) -> (u64, u64) {
    (lambda.div_ceil(4), 4 * lambda)
}

fn ceil_div(a: i64, b: i64) -> i64 {
    -((-a).div_euclid(b))
}

/// `floor(sqrt(x))`, exact for all `x < 2^62`.
fn floor_sqrt(x: u64) -> u64 {
    let mut s = (x as f64).sqrt() as u64;
    while s * s > x {
        s -= 1;
    }
    while (s + 1) * (s + 1) <= x {
        s += 1;
    }
    s
}

fn ceil_sqrt(x: u64) -> u64 {
    let s = floor_sqrt(x);
    if s * s == x { s } else { s + 1 }
}

#[derive(Debug, Clone, Copy)]
struct Annulus {
    k_lo: u64,
    k_hi: u64,
    alpha: u64,
    window: u64,
    /// every `S` is `8 idx + residue`
    residue: u64,
    j_min: i64,
    j_max: i64,
}

impl Annulus {
    fn new(lambda: u64, alpha: u32, c0: f64) -> Result<Annulus, ArithmeticError> {
        if lambda < 4 {
            return Err(ArithmeticError::LambdaTooSmall { min: 4, got: lambda });
        }
        let window = annulus_window(c0)?;
        let (k_lo, k_hi) = level_box(lambda);
        let alpha = alpha as u64;
        let s_min = 2 * (4 * k_lo + alpha).pow(2);
        let s_max = 2 * (4 * k_hi + alpha).pow(2);
        Ok(Annulus {
            k_lo,
            k_hi,
            alpha,
            window,
            residue: (2 * alpha * alpha) % 8,
            j_min: ceil_div(s_min as i64 - window as i64, 16),
            j_max: (s_max as i64 + window as i64).div_euclid(16),
        })
    }

    /// Calls `visit(j, count)` for `j in j0..=j1`.
    fn block(&self, j0: i64, j1: i64, mut visit: impl FnMut(i64, u64)) {
        let (f, r) = (self.window as i64, self.residue as i64);
        // `S = 8 idx + r` is in the window of `j` iff `idx in [2j + lo_off, 2j + hi_off]`
        let lo_off = ceil_div(-f - r, 8);
        let hi_off = (f - r).div_euclid(8);
        let width = (hi_off - lo_off + 1) as usize;
        let pairs = width / 2;
        let n_j = (j1 - j0 + 1) as usize;
        let base = 2 * j0 + lo_off;
        let len = 2 * (n_j + pairs) + 2;
        let s_lo = (8 * base + r).max(0) as u64;
        let s_hi = (8 * (base + len as i64 - 1) + r) as u64;
        let mut hist = vec![0u32; len];
        for k in self.k_lo..=self.k_hi {
            let a = 4 * k + self.alpha;
            let a2 = a * a;
            if 2 * a2 > s_hi {
                break;
            }
            let b_min = ceil_sqrt(s_lo.saturating_sub(a2));
            let b_max = floor_sqrt(s_hi - a2);
            if b_max < self.alpha {
                continue;
            }
            let l_min = k.max(b_min.saturating_sub(self.alpha).div_ceil(4));
            let l_max = self.k_hi.min((b_max - self.alpha) / 4);
            for l in l_min..=l_max {
                let b = 4 * l + self.alpha;
                let idx = ((a2 + b * b - self.residue) / 8) as i64;
                hist[(idx - base) as usize] += if l == k { 1 } else { 2 };
            }
        }
        let g: Vec<u32> = hist.chunks_exact(2).map(|c| c[0] + c[1]).collect();
        let mut run: u64 = g[..pairs].iter().map(|&v| v as u64).sum();
        for t in 0..n_j {
            let extra = if width % 2 == 1 { hist[2 * t + width - 1] as u64 } else { 0 };
            visit(j0 + t as i64, run + extra);
            run = run + g[t + pairs] as u64 - g[t] as u64;
        }
    }

    fn sweep(&self, visit: impl FnMut(i64, u64)) {
        const BLOCK: i64 = 1 << 20;
        let mut visit = visit;
        let mut j0 = self.j_min;
        while j0 <= self.j_max {
            let j1 = (j0 + BLOCK - 1).min(self.j_max);
            self.block(j0, j1, &mut visit);
            j0 = j1 + 1;
        }
    }
}

/// `#{(k, l) : lambda/4 <= k, l <= 4 lambda, (k + a/4)^2 + (l + a/4)^2 in [j - C0 - 1, j + C0 + 1]}`
/// for every `j`, as ordered pairs.
pub fn annulus_pair_count(lambda: u64, alpha: u32, c0: f64) -> Result<CountProfile<i64>, ArithmeticError> {
    let geom = Annulus::new(lambda, alpha, c0)?;
    let span = (geom.j_max - geom.j_min + 1) as u64;
    if span > 1 << 26 {
        return Err(ArithmeticError::ProfileTooLarge(span));
    }
    let mut entries = Vec::new();
    geom.sweep(|j, c| {
        if c > 0 {
            entries.push((j, c));
        }
    });
    Ok(CountProfile::from_entries(CountParams::Annulus { lambda, alpha, c0 }, entries))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnulusSummary {
    pub lambda: u64,
    pub alpha: u32,
    pub c0: f64,
    pub max_count: u64,
    pub argmax: i64,
    pub total: u64,
    /// Range of `j` that can be nonzero.
    pub j_min: i64,
    pub j_max: i64,
}

/// Streaming maximum of the annulus counts; nothing per-`j` is stored.
pub fn annulus_max_count(lambda: u64, alpha: u32, c0: f64) -> Result<AnnulusSummary, ArithmeticError> {
    let geom = Annulus::new(lambda, alpha, c0)?;
    let (mut max_count, mut argmax, mut total) = (0, geom.j_min, 0);
    geom.sweep(|j, c| {
        total += c;
        if c > max_count {
            max_count = c;
            argmax = j;
        }
    });
    Ok(AnnulusSummary { lambda, alpha, c0, max_count, argmax, total, j_min: geom.j_min, j_max: geom.j_max })
}

/// Number of `j` windows containing a scaled sum `S`.
pub fn window_multiplicity(s: u64, window: u64) -> u64 {
    let (s, f) = (s as i64, window as i64);
    ((s + f).div_euclid(16) - ceil_div(s - f, 16) + 1) as u64
}

/// `#{(k1, k2) in N^2 : k1(k1+1) + k2(k2+1) = l}`, via
/// `(2k1+1)^2 + (2k2+1)^2 = 4l + 2`.
pub fn pair_representation_count(l: u64) -> u64 {
    let target = 4 * l + 2;
    let mut count = 0;
    let mut a = 1u64;
    while a * a < target {
        let rest = target - a * a;
        let b = rest.isqrt();
        if b * b == rest && b % 2 == 1 {
            count += 1;
        }
        a += 2;
    }
    count
}

/// Representation counts for every `l <= l_max`.
pub fn pair_representation_profile(l_max: u64) -> Vec<u32> {
    let mut counts = vec![0u32; l_max as usize + 1];
    let mut k1 = 0u64;
    while k1 * (k1 + 1) <= l_max {
        let t1 = k1 * (k1 + 1);
        let mut k2 = 0u64;
        while t1 + k2 * (k2 + 1) <= l_max {
            counts[(t1 + k2 * (k2 + 1)) as usize] += 1;
            k2 += 1;
        }
        k1 += 1;
    }
    counts
}

/// Growth of the pair representation counts over `1 <= l <= l_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRepresentationAudit {
    pub l_max: u64,
    pub max_count: u64,
    pub argmax: u64,
    pub exponent: f64,
    /// `l` with `count(l) > l^exponent`.
    pub violations: u64,
    pub first_violation: Option<u64>,
    /// Running maximum at `l = 2^m` against `l`.
    pub running_max_fit: Option<ExponentFit>,
}

pub fn pair_representation_audit(l_max: u64, exponent: f64) -> PairRepresentationAudit {
    let counts = pair_representation_profile(l_max);
    let (mut max_count, mut argmax, mut violations, mut first) = (0u64, 0u64, 0u64, None);
    let mut samples = Vec::new();
    let mut next_dyadic = 2u64;
    for (l, &c) in counts.iter().enumerate().skip(1) {
        let (l, c) = (l as u64, c as u64);
        if c > max_count {
            max_count = c;
            argmax = l;
        }
        if c as f64 > (l as f64).powf(exponent) {
            violations += 1;
            first.get_or_insert(l);
        }
        if l == next_dyadic {
            samples.push((l as f64, max_count as f64));
            next_dyadic *= 2;
        }
    }
    PairRepresentationAudit {
        l_max,
        max_count,
        argmax,
        exponent,
        violations,
        first_violation: first,
        running_max_fit: fit_power_law(&samples).ok(),
    }
}

/// `#{(k1, k2) in N^2 : k1 + k2 <= k, sum_i k_i(k_i+1) = l1}` with `k3 = k - k1 - k2`.
pub fn triple_representation_count(k: u64, l1: u64) -> u64 {
    let mut count = 0;
    for k1 in 0..=k {
        let t1 = k1 * (k1 + 1);
        if t1 > l1 {
            break;
        }
        // k2 + k3 = m, k2^2 + k3^2 + m = rest  =>  k2 = (m +- sqrt(2 rest - m^2 - 2m)) / 2
        let m = k - k1;
        let rest = l1 - t1;
        let disc = 2 * rest as i128 - (m * m) as i128 - 2 * m as i128;
        if disc < 0 {
            continue;
        }
        let d = (disc as u64).isqrt();
        if d * d != disc as u64 || d > m || (m + d) % 2 == 1 {
            continue;
        }
        count += if d == 0 { 1 } else { 2 };
    }
    count
}

/// Largest triple representation count over `l1` at fixed `k`.
pub fn triple_representation_max(k: u64) -> (u64, u64) {
    let top = k * (k + 1);
    let mut hist = vec![0u32; top as usize + 1];
    for k1 in 0..=k {
        for k2 in 0..=k - k1 {
            let k3 = k - k1 - k2;
            hist[(k1 * (k1 + 1) + k2 * (k2 + 1) + k3 * (k3 + 1)) as usize] += 1;
        }
    }
    let mut best = (0u64, 0u64);
    for (l1, &c) in hist.iter().enumerate() {
        if c as u64 > best.0 {
            best = (c as u64, l1 as u64);
        }
    }
    best
}

/// Cell of `s = k1 + k2 + k3` along the second index: `floor(s / (lambda 4^j))`.
fn cell_of(s: u64, lambda: u64, j: i32) -> u64 {
    if j >= 0 {
        s / (lambda << (2 * j as u32))
    } else {
        (s << (2 * (-j) as u32)) / lambda
    }
}

fn check_cells(lambda: u64, j: i32) -> Result<(), ArithmeticError> {
    if lambda < 8 {
        return Err(ArithmeticError::LambdaTooSmall { min: 8, got: lambda });
    }
    if j < 0 && lambda < 1u64 << (2 * (-j) as u32) {
        return Err(ArithmeticError::CellTooNarrow { lambda, j });
    }
    Ok(())
}

/// Unordered triples `k1 <= k2 <= k3` in the band with the given sum, and
/// the number of ordered triples each stands for.
fn for_each_triple_with_sum(s: u64, lo: u64, hi: u64, mut visit: impl FnMut(u64, u64)) {
    let mut k1 = lo;
    while 3 * k1 <= s {
        let rest = s - k1;
        let k2_lo = k1.max(rest.saturating_sub(hi));
        let k2_hi = rest / 2;
        for k2 in k2_lo..=k2_hi {
            let k3 = rest - k2;
            let orbit = if k1 == k3 {
                1
            } else if k1 == k2 || k2 == k3 {
                3
            } else {
                6
            };
            visit(k1 * (k1 + 1) + k2 * (k2 + 1) + k3 * (k3 + 1), orbit);
        }
        k1 += 1;
    }
}

/// Ordered triples in `[lambda/4, 4 lambda]^3` per cell `(l1, l2)`, where
/// `l1 = sum k_i(k_i+1)` and `l2 = floor((k1+k2+k3) / (lambda 4^j))`.
pub fn triple_level_sets(lambda: u64, j: i32) -> Result<CountProfile<(u64, u64)>, ArithmeticError> {
    check_cells(lambda, j)?;
    let (lo, hi) = level_box(lambda);
    let mut cells: BTreeMap<(u64, u64), u64> = BTreeMap::new();
    for s in 3 * lo..=3 * hi {
        let l2 = cell_of(s, lambda, j);
        for_each_triple_with_sum(s, lo, hi, |l1, w| *cells.entry((l1, l2)).or_default() += w);
    }
    Ok(CountProfile::from_entries(CountParams::TripleLevels { lambda, j }, cells.into_iter().collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleCellSummary {
    pub lambda: u64,
    pub j: i32,
    pub max_count: u64,
    pub argmax: (u64, u64),
    pub total: u64,
}

/// Largest triple cell for each `j`, one pass over the triples.
pub fn triple_cell_max(lambda: u64, js: &[i32]) -> Result<Vec<TripleCellSummary>, ArithmeticError> {
    for &j in js {
        check_cells(lambda, j)?;
    }
    let (lo, hi) = level_box(lambda);
    let base = 3 * lo * (lo + 1);
    let span = (3 * hi * (hi + 1) - base + 1) as usize;
    struct Track {
        hist: Vec<u32>,
        touched: Vec<u32>,
        cell: u64,
        best: (u64, (u64, u64)),
    }
    let mut tracks: Vec<Track> =
        js.iter().map(|_| Track { hist: vec![0; span], touched: Vec::new(), cell: u64::MAX, best: (0, (0, 0)) }).collect();
    let flush = |t: &mut Track| {
        for &i in &t.touched {
            let c = t.hist[i as usize] as u64;
            if c > t.best.0 {
                t.best = (c, (base + i as u64, t.cell));
            }
            t.hist[i as usize] = 0;
        }
        t.touched.clear();
    };
    let mut total = 0u64;
    let mut scratch: Vec<(u32, u32)> = Vec::new();
    for s in 3 * lo..=3 * hi {
        scratch.clear();
        for_each_triple_with_sum(s, lo, hi, |l1, w| scratch.push(((l1 - base) as u32, w as u32)));
        total += scratch.iter().map(|(_, w)| *w as u64).sum::<u64>();
        for (t, &j) in tracks.iter_mut().zip(js) {
            let cell = cell_of(s, lambda, j);
            if cell != t.cell {
                flush(t);
                t.cell = cell;
            }
            for &(i, w) in &scratch {
                let slot = &mut t.hist[i as usize];
                if *slot == 0 {
                    t.touched.push(i);
                }
                *slot += w;
            }
        }
    }
    Ok(tracks
        .iter_mut()
        .zip(js)
        .map(|(t, &j)| {
            flush(t);
            TripleCellSummary { lambda, j, max_count: t.best.0, argmax: t.best.1, total }
        })
        .collect())
}
