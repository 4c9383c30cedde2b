//! Experiment configuration, sweeps over `lambda`, slope fits, and the
//! pass/fail checks behind `--assert`.

use std::io::{self, Write};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arithmetic::{
    annulus_max_count, pair_representation_profile, triple_cell_max, triple_representation_max, ArithmeticError,
};
use crate::circle::{l4_ratio, random_circle_data};
use crate::evolution::{
    measure_lq_with, propagate, EvolutionError, Field, MixedNorm, MixedOrder, NormRequest,
};
use crate::exponents::{branches, breakpoints, fit_power_law_with, mu, Exponent, ExponentError, ExponentFit, FitOptions};
use crate::harmonics::{cluster_kernel, highest_weight, random_band_field, weyl_sum, zonal_harmonic, HarmonicsError};
use crate::quadrature::{build_grid, QuadratureError, ResourceBudget};
use crate::tiling::{whitney_audit, SmoothBump, WhitneyRecord, WhitneyResult};

pub const NORMS_SCHEMA: &str = "zoll-lab/norms/v1";
pub const WHITNEY_SCHEMA: &str = "zoll-lab/whitney/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    ExponentTable,
    Fit,
    /// Like `Fit`, plus evolution diagnostics and peak persistence.
    Simulate,
    Count,
    #[serde(alias = "whitney-audit")]
    Whitney,
    Weyl,
    BaselineCircle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Zonal,
    HighestWeight,
    ClusterKernel,
    Random,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Zonal, Family::HighestWeight, Family::ClusterKernel, Family::Random];

    pub fn name(self) -> &'static str {
        match self {
            Family::Zonal => "zonal",
            Family::HighestWeight => "highest_weight",
            Family::ClusterKernel => "cluster_kernel",
            Family::Random => "random",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountKind {
    /// Largest window count of shifted-square sums per `lambda`.
    Annulus,
    /// Running maximum of `#{k1(k1+1) + k2(k2+1) = l}` at each `l` in the list.
    PairRepresentation,
    /// Largest triple representation count at each `k` in the list.
    TripleRepresentation,
    /// Largest triple cell for every admissible `j <= 0`.
    TripleCells,
}

/// Flat JSON record of one experiment; missing keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub family: Family,
    pub lambdas: Vec<f64>,
    pub qs: Vec<Exponent>,
    pub dimension: u32,
    pub bump: SmoothBump,
    pub oversample: f64,
    pub delta: f64,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub count_kind: CountKind,
    pub alpha: u32,
    pub c0: f64,
    /// Exponent `e` in the representation bound `count(l) <= l^e`.
    pub growth_exponent: f64,
    pub theta0: f64,
    pub pairs: usize,
    /// Fit slopes without the smallest `lambda`.
    pub drop_smallest: bool,
    pub parallel: bool,
    pub memory_budget_bytes: u64,
    pub runtime_limit_secs: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kind: ExperimentKind::Fit,
            family: Family::ClusterKernel,
            lambdas: vec![16.0, 32.0, 64.0, 128.0, 256.0],
            qs: vec![Exponent::integer(4), Exponent::ratio(14, 3), Exponent::integer(6)],
            dimension: 2,
            bump: SmoothBump::LittlewoodPaley,
            oversample: 2.0,
            delta: 0.1,
            seed: 1,
            output: None,
            count_kind: CountKind::Annulus,
            alpha: 1,
            c0: 1.0,
            growth_exponent: 0.15,
            theta0: 1.0 / 64.0,
            pairs: 10_000,
            drop_smallest: false,
            parallel: true,
            memory_budget_bytes: 2 << 30,
            runtime_limit_secs: 15 * 60,
        }
    }
}

/// `2^a, 2^(a+1), ..., 2^b`.
pub fn dyadic_lambdas(a: i32, b: i32) -> Vec<f64> {
    (a..=b).map(|e| 2f64.powi(e)).collect()
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self, ExperimentError> {
        let cfg: ExperimentConfig = serde_json::from_str(s).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.dimension < 2 {
            return bad(format!("dimension must be at least 2, got {}", self.dimension));
        }
        if let Some(w) = self.lambdas.windows(2).find(|w| !(w[0] < w[1])) {
            return bad(format!("lambda list must be strictly increasing ({} then {})", w[0], w[1]));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return bad(format!("lambda must be positive and finite, got {l}"));
        }
        if let Some(q) = self.qs.iter().find(|q| q.to_f64() < 2.0) {
            return bad(format!("q must be at least 2, got {q}"));
        }
        if !(self.oversample >= 1.0 && self.oversample.is_finite()) {
            return bad(format!("oversample must be at least 1, got {}", self.oversample));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad(format!("delta must be positive, got {}", self.delta));
        }
        if !(self.c0 > 0.0 && self.c0.is_finite()) {
            return bad(format!("c0 must be positive, got {}", self.c0));
        }
        if !(self.theta0 > 0.0 && self.theta0 < 1.0) {
            return bad(format!("theta0 must lie in (0, 1), got {}", self.theta0));
        }
        let needs_lambdas = !matches!(self.kind, ExperimentKind::ExponentTable | ExperimentKind::Whitney);
        if needs_lambdas && self.lambdas.is_empty() {
            return bad("lambda list is empty".into());
        }
        match self.kind {
            ExperimentKind::Fit | ExperimentKind::Simulate => {
                if self.dimension != 2 {
                    return bad(format!("simulation is implemented for dimension 2 only, got {}", self.dimension));
                }
                if self.qs.is_empty() {
                    return bad("q list is empty".into());
                }
                if self.qs.contains(&Exponent::Infinite) {
                    return bad("space-time norms need finite q".into());
                }
            }
            ExperimentKind::Count => {
                if let Some(l) = self.lambdas.iter().find(|l| l.fract() != 0.0) {
                    return bad(format!("counting needs integer lambda, got {l}"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn budget(&self) -> ResourceBudget {
        ResourceBudget { memory_bytes: self.memory_budget_bytes, ..ResourceBudget::default() }
    }

    fn fit_options(&self) -> FitOptions {
        FitOptions { drop_smallest: self.drop_smallest }
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("memory budget exceeded: {0}")]
    Memory(QuadratureError),
    #[error(transparent)]
    Evolution(EvolutionError),
    #[error(transparent)]
    Harmonics(#[from] HarmonicsError),
    #[error(transparent)]
    Arithmetic(#[from] ArithmeticError),
    #[error(transparent)]
    Exponent(#[from] ExponentError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<QuadratureError> for ExperimentError {
    fn from(e: QuadratureError) -> Self {
        match e {
            QuadratureError::MemoryBudget { .. } => ExperimentError::Memory(e),
            other => ExperimentError::Config(other.to_string()),
        }
    }
}

impl From<EvolutionError> for ExperimentError {
    fn from(e: EvolutionError) -> Self {
        match e {
            EvolutionError::Quadrature(q) => q.into(),
            other => ExperimentError::Evolution(other),
        }
    }
}

impl ExperimentError {
    /// 1 for bad input, 3 for resource limits.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Memory(_) => 3,
            _ => 1,
        }
    }
}

/// One CSV row of the norms table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub family: String,
    pub lambda: Option<f64>,
    pub q: Option<Exponent>,
    pub norm_kind: String,
    pub value: f64,
    pub grid_meta: String,
}

impl Row {
    fn new(family: &str, lambda: Option<f64>, q: Option<Exponent>, kind: &str, value: f64, meta: impl Into<String>) -> Self {
        Row { family: family.into(), lambda, q, norm_kind: kind.into(), value, grid_meta: meta.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Table {
    Norms(Vec<Row>),
    Whitney(Vec<WhitneyRecord>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub family: String,
    pub norm_kind: String,
    pub q: Option<Exponent>,
    pub drop_smallest: bool,
    pub fit: ExponentFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed, detail: detail.into() }
    }

    fn within(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Check::new(name, value >= lo && value <= hi, format!("{value:.6} in [{lo:.6}, {hi:.6}]"))
    }

    fn below(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Check::new(name, value < limit, format!("{value:.3e} < {limit:.3e}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRuntime {
    pub lambda: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub table: Table,
    pub fits: Vec<FitRecord>,
    pub checks: Vec<Check>,
    pub runtimes: Vec<StepRuntime>,
    /// The runtime guard stopped the sweep early; the table is partial.
    pub truncated: bool,
    pub elapsed_secs: f64,
}

#[derive(Serialize)]
struct Summary<'a> {
    schema: &'static str,
    config: &'a ExperimentConfig,
    fits: &'a [FitRecord],
    checks: &'a [Check],
    runtimes: &'a [StepRuntime],
    truncated: bool,
    elapsed_secs: f64,
}

fn fmt_opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

impl ExperimentResult {
    pub fn schema(&self) -> &'static str {
        match self.table {
            Table::Norms(_) => NORMS_SCHEMA,
            Table::Whitney(_) => WHITNEY_SCHEMA,
        }
    }

    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// 0 on success; 2 if `assert` and a check failed; 3 if the sweep was cut short.
    pub fn exit_code(&self, assert: bool) -> i32 {
        if self.truncated {
            3
        } else if assert && !self.all_checks_pass() {
            2
        } else {
            0
        }
    }

    /// CSV body: column header and rows, no timestamp.
    pub fn write_csv_body<W: Write>(&self, w: W) -> Result<(), ExperimentError> {
        let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        let err = |e: csv::Error| ExperimentError::Io(io::Error::other(e));
        match &self.table {
            Table::Norms(rows) => {
                out.write_record(["family", "lambda", "q", "norm_kind", "value", "grid_meta"]).map_err(err)?;
                for r in rows {
                    out.write_record([
                        r.family.clone(),
                        fmt_opt(&r.lambda),
                        fmt_opt(&r.q),
                        r.norm_kind.clone(),
                        r.value.to_string(),
                        r.grid_meta.clone(),
                    ])
                    .map_err(err)?;
                }
            }
            Table::Whitney(records) => {
                out.write_record([
                    "pair", "nu1_x", "nu1_y", "nu2_x", "nu2_y", "separation", "result", "scale", "cube1_i", "cube1_j",
                    "cube2_i", "cube2_j", "cube_distance", "close_scales",
                ])
                .map_err(err)?;
                for r in records {
                    let (res, scale, c1, c2) = match r.result {
                        WhitneyResult::Close { scale, cube1, cube2 } => {
                            ("close", scale.to_string(), cube1.map(|c| c.to_string()), cube2.map(|c| c.to_string()))
                        }
                        WhitneyResult::Residual => ("residual", String::new(), Default::default(), Default::default()),
                    };
                    out.write_record([
                        r.pair.to_string(),
                        r.nu1[0].to_string(),
                        r.nu1[1].to_string(),
                        r.nu2[0].to_string(),
                        r.nu2[1].to_string(),
                        r.separation.to_string(),
                        res.to_string(),
                        scale,
                        c1[0].clone(),
                        c1[1].clone(),
                        c2[0].clone(),
                        c2[1].clone(),
                        fmt_opt(&r.cube_distance),
                        r.close_scale_count.to_string(),
                    ])
                    .map_err(err)?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Full CSV: a `#` line with schema and `generated` stamp, then the body.
    pub fn write_csv<W: Write>(&self, mut w: W, generated: &str) -> Result<(), ExperimentError> {
        writeln!(w, "# schema={} generated={}", self.schema(), generated)?;
        self.write_csv_body(&mut w)
    }

    pub fn csv_body(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv_body(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf-8 csv")
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&Summary {
            schema: self.schema(),
            config: &self.config,
            fits: &self.fits,
            checks: &self.checks,
            runtimes: &self.runtimes,
            truncated: self.truncated,
            elapsed_secs: self.elapsed_secs,
        })
        .expect("summary serializes")
    }

    pub fn fit(&self, family: &str, norm_kind: &str, q: Option<Exponent>) -> Option<&ExponentFit> {
        self.fits.iter().find(|f| f.family == family && f.norm_kind == norm_kind && f.q == q).map(|f| &f.fit)
    }

    pub fn rows(&self) -> &[Row] {
        match &self.table {
            Table::Norms(rows) => rows,
            Table::Whitney(_) => &[],
        }
    }
}

/// Runs one experiment. Errors are configuration or resource failures; a
/// numerical threshold miss is a failed [`Check`], not an error.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult, ExperimentError> {
    config.validate()?;
    let start = Instant::now();
    let limit = Duration::from_secs(config.runtime_limit_secs);
    let mut runtimes = Vec::new();
    let mut truncated = false;
    let mut checks = Vec::new();
    let table = match config.kind {
        ExperimentKind::ExponentTable => Table::Norms(exponent_table(config, &mut checks)?),
        ExperimentKind::Whitney => {
            let near = config.pairs / 10;
            let (audit, records) = whitney_audit(config.pairs, near, config.theta0, config.seed);
            runtimes.push(StepRuntime { lambda: None, seconds: start.elapsed().as_secs_f64() });
            checks.push(Check::new(
                "whitney uniqueness and distance bounds",
                audit.violations() == 0,
                format!(
                    "{} pairs: {} close, {} residual, violations uniqueness={} distance={} residual={} locate={}",
                    audit.pairs,
                    audit.close,
                    audit.residual,
                    audit.uniqueness_violations,
                    audit.distance_violations,
                    audit.residual_violations,
                    audit.locate_mismatches
                ),
            ));
            Table::Whitney(records)
        }
        _ => {
            let steps = sweep(config, start, limit)?;
            let mut rows = Vec::new();
            for step in steps {
                match step {
                    Some((seconds, lambda, mut r)) => {
                        runtimes.push(StepRuntime { lambda: Some(lambda), seconds });
                        rows.append(&mut r);
                    }
                    None => truncated = true,
                }
            }
            Table::Norms(rows)
        }
    };
    let mut result = ExperimentResult {
        config: config.clone(),
        table,
        fits: Vec::new(),
        checks,
        runtimes,
        truncated,
        elapsed_secs: 0.0,
    };
    result.fits = fit_rows(result.rows(), config.fit_options());
    let extra = threshold_checks(&result);
    result.checks.extend(extra);
    if result.truncated {
        result.checks.push(Check::new("runtime guard", false, format!("stopped after {} s", config.runtime_limit_secs)));
    }
    result.elapsed_secs = start.elapsed().as_secs_f64();
    Ok(result)
}

type Step = Option<(f64, f64, Vec<Row>)>;

/// One step per `lambda`; `None` marks steps skipped by the runtime guard.
fn sweep(config: &ExperimentConfig, start: Instant, limit: Duration) -> Result<Vec<Step>, ExperimentError> {
    let pair_counts = match (config.kind, config.count_kind) {
        (ExperimentKind::Count, CountKind::PairRepresentation) => {
            Some(pair_representation_profile(*config.lambdas.last().unwrap() as u64))
        }
        _ => None,
    };
    let step = |lambda: f64| -> Result<Step, ExperimentError> {
        if start.elapsed() > limit {
            return Ok(None);
        }
        let t = Instant::now();
        let rows = match config.kind {
            ExperimentKind::Fit | ExperimentKind::Simulate => family_rows(config, lambda)?,
            ExperimentKind::Count => count_rows(config, lambda, pair_counts.as_deref())?,
            ExperimentKind::Weyl => {
                vec![Row::new("weyl", Some(lambda), None, "weyl_sum", weyl_sum(lambda, &config.bump), "")]
            }
            ExperimentKind::BaselineCircle => {
                let data = random_circle_data(lambda, &config.bump, config.seed);
                let meta = format!("modes={}", data.modes.len());
                vec![Row::new("circle", Some(lambda), Some(Exponent::integer(4)), "l4_ratio", l4_ratio(&data), meta)]
            }
            ExperimentKind::ExponentTable | ExperimentKind::Whitney => unreachable!("not a lambda sweep"),
        };
        Ok(Some((t.elapsed().as_secs_f64(), lambda, rows)))
    };
    if config.parallel {
        config.lambdas.par_iter().map(|&l| step(l)).collect()
    } else {
        config.lambdas.iter().map(|&l| step(l)).collect()
    }
}

fn grid_meta(g: &crate::evolution::GridSummary) -> String {
    format!("{}x{}x{}", g.n_theta, g.n_phi, g.n_time)
}

fn family_rows(config: &ExperimentConfig, lambda: f64) -> Result<Vec<Row>, ExperimentError> {
    let name = config.family.name();
    let l = Some(lambda);
    let diagnostics = config.kind == ExperimentKind::Simulate;
    let mut rows = Vec::new();
    let field = match config.family {
        Family::HighestWeight => {
            let hw = highest_weight(lambda.round() as u64);
            for q in &config.qs {
                let qf = q.to_f64();
                let sphere = hw.lq_norm(qf)?;
                rows.push(Row::new(name, l, Some(*q), "spacetime", std::f64::consts::PI.powf(1.0 / qf) * sphere, "closed_form"));
                rows.push(Row::new(name, l, Some(*q), "sphere", sphere, "closed_form"));
            }
            rows.push(Row::new(name, l, None, "l2", hw.lq_norm(2.0)?, "closed_form"));
            return Ok(rows);
        }
        Family::Zonal => Field::Zonal(zonal_harmonic(lambda.round() as u64)),
        Family::ClusterKernel => Field::Zonal(cluster_kernel(lambda, &config.bump)),
        Family::Random => Field::Modal(random_band_field(lambda, &config.bump, config.seed)?),
    };
    if field.band().is_none() {
        return Err(ExperimentError::Config(format!("{name} field at lambda={lambda} has no modes")));
    }
    let budget = config.budget();
    let m = measure_lq_with(&field, &config.qs, config.oversample, &budget, diagnostics, config.parallel)?;
    let meta = grid_meta(&m.grid);
    for n in &m.norms {
        let exact = if n.exact { ";exact" } else { "" };
        rows.push(Row::new(name, l, Some(n.q), "spacetime", n.value, format!("{meta}{exact}")));
        rows.push(Row::new(name, l, Some(n.q), "unit_interval", n.unit_interval, meta.clone()));
        if let Some(c) = n.grid_change {
            rows.push(Row::new(name, l, Some(n.q), "grid_change", c, meta.clone()));
        }
    }
    rows.push(Row::new(name, l, None, "l2", field.l2_norm(), ""));
    rows.push(Row::new(name, l, None, "unitarity_defect", m.unitarity_defect, meta.clone()));
    if let Some(d) = &m.diagnostics {
        rows.push(Row::new(name, l, None, "off_band_energy", d.off_band_energy, meta.clone()));
        rows.push(Row::new(name, l, None, "periodicity_defect", d.periodicity_defect, meta.clone()));
        rows.push(Row::new(name, l, None, "fft_direct_defect", d.fft_direct_defect, meta.clone()));
    }
    if let Field::Zonal(z) = &field {
        if config.family == Family::Zonal {
            // |u| does not depend on t: the space norm is the space-time norm over pi^(1/q)
            for n in &m.norms {
                let s = n.value / std::f64::consts::PI.powf(1.0 / n.q.to_f64());
                rows.push(Row::new(name, l, Some(n.q), "sphere", s, meta.clone()));
            }
            let q_top = *config.qs.iter().max_by(|a, b| a.to_f64().total_cmp(&b.to_f64())).unwrap();
            let grid = build_grid(field.band().unwrap(), q_top, config.oversample, &budget)?;
            let mixed: Vec<MixedNorm> = config
                .qs
                .iter()
                .map(|&q| MixedNorm { time: Exponent::integer(4), space: q, order: MixedOrder::TimeInner })
                .collect();
            let report = propagate(&field, &grid)?
                .with_parallel(config.parallel)
                .measure(&NormRequest { mixed, ..Default::default() })?;
            for (mn, v) in &report.mixed {
                rows.push(Row::new(name, l, Some(mn.space), "mixed_t4", *v, grid_meta(&report.grid)));
            }
        } else {
            rows.push(Row::new(name, l, None, "peak", z.value(1.0).norm(), ""));
            let p = crate::evolution::peak_persistence(lambda, &config.bump, config.delta, 65)?;
            rows.push(Row::new(name, l, None, "peak_ratio", p.min_ratio, format!("delta={}", config.delta)));
        }
    }
    Ok(rows)
}

fn count_rows(config: &ExperimentConfig, lambda: f64, pair_counts: Option<&[u32]>) -> Result<Vec<Row>, ExperimentError> {
    let n = lambda as u64;
    let l = Some(lambda);
    Ok(match config.count_kind {
        CountKind::Annulus => {
            let s = annulus_max_count(n, config.alpha, config.c0)?;
            let meta = format!("alpha={};c0={};argmax={};j={}..{}", s.alpha, s.c0, s.argmax, s.j_min, s.j_max);
            vec![
                Row::new("annulus", l, None, "max_count", s.max_count as f64, meta.clone()),
                Row::new("annulus", l, None, "total", s.total as f64, meta),
            ]
        }
        CountKind::PairRepresentation => {
            let counts = pair_counts.expect("profile computed");
            let e = config.growth_exponent;
            let (mut best, mut arg, mut violations) = (0u32, 0usize, 0u64);
            for (i, &c) in counts.iter().enumerate().take(n as usize + 1).skip(1) {
                if c > best {
                    best = c;
                    arg = i;
                }
                if c as f64 > (i as f64).powf(e) {
                    violations += 1;
                }
            }
            vec![
                Row::new("pair_representation", l, None, "running_max", best as f64, format!("argmax={arg}")),
                Row::new("pair_representation", l, None, "violations", violations as f64, format!("exponent={e}")),
            ]
        }
        CountKind::TripleRepresentation => {
            let (c, arg) = triple_representation_max(n);
            vec![Row::new("triple_representation", l, None, "max_count", c as f64, format!("argmax={arg}"))]
        }
        CountKind::TripleCells => {
            let mut js = Vec::new();
            let mut j = 0i32;
            while n >= 1u64 << (2 * j.unsigned_abs()) {
                js.push(j);
                j -= 1;
            }
            js.reverse();
            let mut rows = Vec::new();
            for s in triple_cell_max(n, &js)? {
                let bound = lambda.powf(1.2) * 4f64.powi(s.j);
                let meta = format!("j={};bound={};argmax={}/{}", s.j, bound, s.argmax.0, s.argmax.1);
                rows.push(Row::new("triple_cells", l, None, "cell_max", s.max_count as f64, meta));
            }
            rows
        }
    })
}

fn exponent_table(config: &ExperimentConfig, checks: &mut Vec<Check>) -> Result<Vec<Row>, ExperimentError> {
    let d = config.dimension;
    let mut qs: Vec<Exponent> = if config.qs.is_empty() {
        let mut v = vec![Exponent::integer(2), Exponent::integer(4), Exponent::integer(6), Exponent::integer(8)];
        v.extend(breakpoints(d)?);
        v.push(Exponent::Infinite);
        v
    } else {
        config.qs.clone()
    };
    qs.sort_by(|a, b| a.to_f64().total_cmp(&b.to_f64()));
    qs.dedup();
    let mut rows = Vec::new();
    let fam = format!("exponents_d{d}");
    for q in &qs {
        let b = branches(d, *q)?;
        for (kind, v) in [("s_sm", b.s_sm), ("s_lg", b.s_lg), ("s_sob", b.s_sob), ("mu", b.mu), ("sigma", b.sigma)] {
            let value = *v.numer() as f64 / *v.denom() as f64;
            rows.push(Row::new(&fam, None, Some(*q), kind, value, format!("exact={v}")));
        }
    }
    for bp in breakpoints(d)? {
        let active: Vec<String> = branches(d, bp)?.active().iter().map(|b| format!("{b:?}").to_lowercase()).collect();
        rows.push(Row::new(&fam, None, Some(bp), "breakpoint", bp.to_f64(), format!("active={}", active.join("+"))));
    }
    let mu_2 = crate::exponents::mu_exact(2, Exponent::ratio(14, 3))?;
    let bp2 = breakpoints(2)?;
    let bp3 = breakpoints(3)?;
    checks.push(Check::new(
        "exponent branches",
        mu_2 == crate::exponents::Rational::new(1, 7)
            && bp2.contains(&Exponent::ratio(14, 3))
            && bp3.contains(&Exponent::integer(4)),
        format!("mu(2, 14/3) = {mu_2}; breakpoints d=2 {bp2:?}; d=3 {bp3:?}"),
    ));
    Ok(rows)
}

/// Slope fits for every `(family, norm_kind, q)` with at least two `lambda`s.
fn fit_rows(rows: &[Row], opts: FitOptions) -> Vec<FitRecord> {
    const FITTED: [&str; 11] = [
        "spacetime",
        "unit_interval",
        "sphere",
        "mixed_t4",
        "l2",
        "peak",
        "max_count",
        "running_max",
        "weyl_sum",
        "l4_ratio",
        "total",
    ];
    let mut keys: Vec<(String, String, Option<Exponent>)> = Vec::new();
    for r in rows {
        if r.lambda.is_some() && FITTED.contains(&r.norm_kind.as_str()) {
            let key = (r.family.clone(), r.norm_kind.clone(), r.q);
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
    }
    keys.into_iter()
        .filter_map(|(family, norm_kind, q)| {
            let samples: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.family == family && r.norm_kind == norm_kind && r.q == q)
                .map(|r| (r.lambda.unwrap(), r.value))
                .collect();
            let fit = fit_power_law_with(&samples, opts).ok()?;
            Some(FitRecord { family, norm_kind, q, drop_smallest: opts.drop_smallest, fit })
        })
        .collect()
}

pub const SLOPE_MARGIN: f64 = 0.05;
pub const UNITARITY_TOL: f64 = 1e-10;
pub const GRID_CHANGE_TOL: f64 = 1e-4;
pub const ANNULUS_SLOPE_LIMIT: f64 = 0.35;

/// Thresholds for the run's kind and family.
fn threshold_checks(r: &ExperimentResult) -> Vec<Check> {
    let cfg = &r.config;
    let mut out = Vec::new();
    let rows = r.rows();
    let slope = |fam: &str, kind: &str, q: Option<Exponent>| r.fit(fam, kind, q).map(|f| f.slope);
    let max_of = |kind: &str| rows.iter().filter(|x| x.norm_kind == kind).map(|x| x.value).fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
    match cfg.kind {
        ExperimentKind::Fit | ExperimentKind::Simulate => {
            let fam = cfg.family.name();
            for q in &cfg.qs {
                if let (Some(s), Ok(m)) = (slope(fam, "spacetime", Some(*q)), mu(2, q.to_f64())) {
                    out.push(Check::new(
                        format!("{fam} L^{q} slope within the upper bound"),
                        s <= m + SLOPE_MARGIN,
                        format!("{s:.6} <= {:.6}", m + SLOPE_MARGIN),
                    ));
                }
            }
            let q6 = Some(Exponent::integer(6));
            let q4 = Some(Exponent::integer(4));
            let q143 = Some(Exponent::ratio(14, 3));
            match cfg.family {
                Family::Zonal => {
                    if let Some(s) = slope(fam, "spacetime", q6) {
                        out.push(Check::within("zonal L^6 slope", s, 1.0 / 6.0 - 0.03, 1.0 / 6.0 + 0.03));
                    }
                    if let Some(s) = slope(fam, "mixed_t4", q6) {
                        out.push(Check::within("zonal L^6_x L^4_t slope", s, 1.0 / 6.0 - 0.03, 1.0 / 6.0 + 0.03));
                    }
                }
                Family::HighestWeight => {
                    if let Some(s) = slope(fam, "sphere", q4) {
                        out.push(Check::within("highest weight L^4 slope", s, 0.125 - 0.02, 0.125 + 0.02));
                    }
                    if let Some(s) = slope(fam, "sphere", q143) {
                        out.push(Check::within("highest weight L^14/3 slope", s, 1.0 / 7.0 - 0.04, 1.0 / 7.0 + 0.04));
                    }
                }
                Family::ClusterKernel => {
                    if let Some(s) = slope(fam, "l2", None) {
                        out.push(Check::within("kernel L^2 slope", s, -0.02, 0.02));
                    }
                    if let Some(s) = slope(fam, "peak", None) {
                        out.push(Check::within("kernel peak slope", s, 0.97, 1.03));
                    }
                    if let Some(s) = slope(fam, "spacetime", q6) {
                        out.push(Check::within("kernel L^6 slope", s, 1.0 / 3.0 - 0.03, 1.0 / 3.0 + 0.05));
                    }
                    if let Some(s) = slope(fam, "spacetime", q143) {
                        out.push(Check::within("kernel L^14/3 slope", s, 1.0 / 7.0 - 0.04, 1.0 / 7.0 + 0.05));
                    }
                    if let Some(m) = rows.iter().filter(|x| x.norm_kind == "peak_ratio").map(|x| x.value).reduce(f64::min) {
                        out.push(Check::new("kernel peak persistence", m >= 0.5, format!("min ratio {m:.6} >= 0.5")));
                    }
                }
                Family::Random => {}
            }
            if let Some(g) = max_of("grid_change") {
                out.push(Check::below("grid refinement change", g, GRID_CHANGE_TOL));
            }
            for kind in ["unitarity_defect", "off_band_energy", "periodicity_defect"] {
                if let Some(v) = max_of(kind) {
                    out.push(Check::below(kind, v, UNITARITY_TOL));
                }
            }
        }
        ExperimentKind::Count => match cfg.count_kind {
            CountKind::Annulus => {
                if let Some(s) = slope("annulus", "max_count", None) {
                    out.push(Check::below(format!("annulus max count slope (alpha={})", cfg.alpha), s, ANNULUS_SLOPE_LIMIT));
                }
            }
            CountKind::PairRepresentation => {
                let v = max_of("violations").unwrap_or(0.0);
                out.push(Check::new(
                    "pair representation bound",
                    v == 0.0,
                    format!("{v} values of l exceed l^{}", cfg.growth_exponent),
                ));
            }
            CountKind::TripleRepresentation => {}
            CountKind::TripleCells => {
                let over: Vec<String> = rows
                    .iter()
                    .filter_map(|x| {
                        let bound: f64 = x.grid_meta.split(';').find_map(|p| p.strip_prefix("bound="))?.parse().ok()?;
                        (x.value > bound).then(|| format!("lambda={} {} count={}", x.lambda.unwrap_or(0.0), x.grid_meta, x.value))
                    })
                    .collect();
                out.push(Check::new("triple cell bound", over.is_empty(), format!("{} cells over bound {}", over.len(), over.join(", "))));
            }
        },
        ExperimentKind::Weyl => {
            if let Some(s) = slope("weyl", "weyl_sum", None) {
                out.push(Check::within("weyl sum slope", s, 1.98, 2.02));
            }
        }
        ExperimentKind::BaselineCircle => {
            if let Some(s) = slope("circle", "l4_ratio", Some(Exponent::integer(4))) {
                out.push(Check::within("circle L^4 slope", s, -0.02, 0.02));
            }
        }
        ExperimentKind::ExponentTable | ExperimentKind::Whitney => {}
    }
    out
}
