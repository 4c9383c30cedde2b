//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if any fails.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64;
use zoll_lab::arithmetic::{
    annulus_pair_count, level_box, pair_representation_count, pair_representation_profile,
    triple_level_sets, triple_representation_count,
};
use zoll_lab::circle::{l4_norm_autocorrelation, l4_norm_quadrature, CircleData};
use zoll_lab::evolution::{calibrate_delta, l4_by_level_sets, propagate, spacetime_norm, Field};
use zoll_lab::experiment::{
    dyadic_lambdas, run_experiment, CountKind, ExperimentConfig, ExperimentKind, ExperimentResult, Family,
};
use zoll_lab::exponents::{branches, breakpoints, fit_power_law, mu, mu_exact, Branch, Exponent, Rational};
use zoll_lab::harmonics::{cluster_kernel, weyl_sum};
use zoll_lab::quadrature::{build_grid, ResourceBudget};
use zoll_lab::tiling::{
    dyadic_partition_sum, integer_partition_sum, make_lp_bump, make_unit_partition, SmoothBump,
};

struct Outcome {
    passed: bool,
    detail: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { passed: true, detail: Vec::new() }
    }

    fn check(&mut self, ok: bool, msg: impl Into<String>) {
        let msg = msg.into();
        self.passed &= ok;
        self.detail.push(format!("{} {msg}", if ok { "ok  " } else { "MISS" }));
    }

    fn within(&mut self, label: &str, v: f64, lo: f64, hi: f64) {
        self.check(v >= lo && v <= hi, format!("{label} = {v:.6} in [{lo:.6}, {hi:.6}]"));
    }

    fn below(&mut self, label: &str, v: f64, limit: f64) {
        self.check(v < limit, format!("{label} = {v:.3e} < {limit:.1e}"));
    }

    fn runtime(&mut self, start: Instant, limit_secs: f64) {
        let s = start.elapsed().as_secs_f64();
        self.check(s < limit_secs, format!("runtime {s:.2} s < {limit_secs} s"));
    }
}

fn q(s: &str) -> Exponent {
    s.parse().unwrap()
}

fn all_qs() -> Vec<Exponent> {
    vec![q("4"), q("14/3"), q("6")]
}

fn run(cfg: ExperimentConfig) -> ExperimentResult {
    run_experiment(&cfg).unwrap_or_else(|e| panic!("experiment failed: {e}"))
}

fn slope(r: &ExperimentResult, family: &str, kind: &str, qv: Option<Exponent>) -> f64 {
    r.fit(family, kind, qv).map(|f| f.slope).unwrap_or(f64::NAN)
}

fn values(r: &ExperimentResult, kind: &str, qv: Option<Exponent>) -> Vec<(f64, f64)> {
    r.rows().iter().filter(|x| x.norm_kind == kind && x.q == qv).map(|x| (x.lambda.unwrap(), x.value)).collect()
}

/// Family runs shared by several criteria.
struct Families {
    zonal: ExperimentResult,
    highest: ExperimentResult,
    kernel: ExperimentResult,
    kernel_secs: f64,
    random: ExperimentResult,
}

fn family_runs() -> Families {
    let base = ExperimentConfig { kind: ExperimentKind::Fit, qs: all_qs(), ..Default::default() };
    let zonal = run(ExperimentConfig { family: Family::Zonal, lambdas: dyadic_lambdas(4, 8), ..base.clone() });
    let highest =
        run(ExperimentConfig { family: Family::HighestWeight, lambdas: dyadic_lambdas(4, 12), ..base.clone() });
    let t = Instant::now();
    let kernel = run(ExperimentConfig {
        family: Family::ClusterKernel,
        lambdas: dyadic_lambdas(4, 8),
        drop_smallest: true,
        ..base.clone()
    });
    let kernel_secs = t.elapsed().as_secs_f64();
    let random =
        run(ExperimentConfig { family: Family::Random, lambdas: vec![6.0, 8.0, 12.0, 16.0], ..base });
    Families { zonal, highest, kernel, kernel_secs, random }
}

fn exponent_table() -> Outcome {
    let mut o = Outcome::new();
    let t = Instant::now();
    let r = run(ExperimentConfig { kind: ExperimentKind::ExponentTable, qs: Vec::new(), ..Default::default() });
    let m = mu_exact(2, q("14/3")).unwrap();
    o.check(m == Rational::new(1, 7), format!("mu(2, 14/3) = {m}"));
    o.check(r.all_checks_pass(), "experiment checks");
    let switch = |d: u32, at: Exponent, below: &[Branch], above: &[Branch]| {
        let a = at.to_f64();
        let lo = branches(d, Exponent::from_f64(a - 0.01)).unwrap().active();
        let hi = branches(d, Exponent::from_f64(a + 0.01)).unwrap().active();
        breakpoints(d).unwrap().contains(&at) && lo == below && hi == above
    };
    let names = |d: u32| breakpoints(d).unwrap().iter().map(|b| b.to_string()).collect::<Vec<_>>().join(", ");
    o.check(switch(2, q("14/3"), &[Branch::Small], &[Branch::Sobolev]), format!("d=2 small -> Sobolev at q=14/3; breakpoints {}", names(2)));
    o.check(switch(3, q("4"), &[Branch::Small], &[Branch::Sobolev]), format!("d=3 small -> Sobolev at q=4; breakpoints {}", names(3)));
    o.runtime(t, 1.0);
    o
}

fn zonal_saturation(f: &Families) -> Outcome {
    let mut o = Outcome::new();
    let target = 1.0 / 6.0;
    o.within("L^6 space-time slope", slope(&f.zonal, "zonal", "spacetime", Some(q("6"))), target - 0.03, target + 0.03);
    o.within("L^6 sphere slope", slope(&f.zonal, "zonal", "sphere", Some(q("6"))), target - 0.03, target + 0.03);
    o.within("L^6_x L^4_t slope", slope(&f.zonal, "zonal", "mixed_t4", Some(q("6"))), target - 0.03, target + 0.03);
    o.check(f.zonal.elapsed_secs < 120.0, format!("runtime {:.2} s < 120 s", f.zonal.elapsed_secs));
    o
}

fn highest_weight_saturation(f: &Families) -> Outcome {
    let mut o = Outcome::new();
    o.within("L^4 slope", slope(&f.highest, "highest_weight", "sphere", Some(q("4"))), 0.125 - 0.02, 0.125 + 0.02);
    let s = slope(&f.highest, "highest_weight", "sphere", Some(q("14/3")));
    o.within("L^14/3 slope", s, 1.0 / 7.0 - 0.04, 1.0 / 7.0 + 0.04);
    o.check(f.highest.elapsed_secs < 10.0, format!("runtime {:.3} s < 10 s", f.highest.elapsed_secs));
    o
}

fn kernel_lower_bound(f: &Families) -> Outcome {
    let mut o = Outcome::new();
    let r = &f.kernel;
    o.within("L^2 slope", slope(r, "cluster_kernel", "l2", None), -0.02, 0.02);
    o.within("peak slope", slope(r, "cluster_kernel", "peak", None), 0.97, 1.03);
    let third = 1.0 / 3.0;
    o.within("L^6 slope (smallest lambda dropped)", slope(r, "cluster_kernel", "spacetime", Some(q("6"))), third - 0.03, third + 0.05);
    let full = fit_power_law(&values(r, "spacetime", Some(q("6")))).unwrap().slope;
    o.detail.push(format!("info L^6 slope over all lambda = {full:.6}"));
    let seventh = 1.0 / 7.0;
    o.within("L^14/3 slope", slope(r, "cluster_kernel", "spacetime", Some(q("14/3"))), seventh - 0.04, seventh + 0.05);
    let change = r.rows().iter().filter(|x| x.norm_kind == "grid_change").map(|x| x.value).fold(0.0, f64::max);
    o.below("max grid refinement change", change, 1e-4);
    o.check(f.kernel_secs < 600.0, format!("runtime {:.1} s < 600 s", f.kernel_secs));
    o
}

fn peak_persistence(f: &Families) -> Outcome {
    let mut o = Outcome::new();
    for (lambda, ratio) in values(&f.kernel, "peak_ratio", None) {
        o.check(ratio >= 0.5, format!("lambda={lambda}: min |u(x0,t)|/|u(x0,0)| = {ratio:.6} >= 0.5 at delta=0.1"));
    }
    let cands: Vec<f64> = (1..=10).map(|i| 0.05 * i as f64).collect();
    let best = calibrate_delta(&dyadic_lambdas(4, 8), &make_lp_bump(), &cands);
    o.check(best.is_some_and(|d| d >= 0.1), format!("largest admissible delta in scan = {best:?}"));
    o
}

fn evolution_invariants() -> Outcome {
    let mut o = Outcome::new();
    let sim = |family, lambdas| {
        run(ExperimentConfig { kind: ExperimentKind::Simulate, family, lambdas, qs: vec![q("4")], ..Default::default() })
    };
    for r in [sim(Family::ClusterKernel, vec![16.0, 32.0, 64.0]), sim(Family::Random, vec![8.0, 12.0])] {
        let fam = r.config.family.name();
        for kind in ["unitarity_defect", "periodicity_defect", "off_band_energy", "fft_direct_defect"] {
            let worst = r.rows().iter().filter(|x| x.norm_kind == kind).map(|x| x.value).fold(0.0, f64::max);
            o.below(&format!("{fam} {kind}"), worst, 1e-10);
        }
    }
    for lambda in [16.0, 32.0, 64.0] {
        let z = cluster_kernel(lambda, &make_lp_bump());
        let field = Field::Zonal(z.clone());
        let grid = build_grid(field.band().unwrap(), q("4"), 1.0, &ResourceBudget::default()).unwrap();
        let quad = spacetime_norm(&propagate(&field, &grid).unwrap(), q("4")).unwrap().powi(4);
        let levels = l4_by_level_sets(&z, &grid);
        o.below(&format!("lambda={lambda} L^4 quadrature vs level sets"), ((quad - levels) / levels).abs(), 1e-8);
    }
    o
}

fn weyl_formula() -> Outcome {
    let mut o = Outcome::new();
    let r = run(ExperimentConfig { kind: ExperimentKind::Weyl, lambdas: dyadic_lambdas(4, 12), ..Default::default() });
    o.within("slope", slope(&r, "weyl", "weyl_sum", None), 1.98, 2.02);
    let bump = make_lp_bump();
    let mut brute = 0.0;
    for k in 0..=256u64 {
        let w = bump.eval(((k * (k + 1)) as f64).sqrt() / 64.0);
        if w != 0.0 {
            brute += w * (2 * k + 1) as f64 / (4.0 * PI);
        }
    }
    let v = weyl_sum(64.0, &bump);
    o.check(v == brute, format!("lambda=64: {v} vs brute force {brute}"));
    o
}

fn counting_oracles() -> Outcome {
    let mut o = Outcome::new();
    let t = Instant::now();
    // annulus: |S - 16 j| <= 16 (C0 + 1) with S = (4k+a)^2 + (4l+a)^2
    let lambda = 64u64;
    let (lo, hi) = level_box(lambda);
    for alpha in 0..4u64 {
        let mut brute: BTreeMap<i64, u64> = BTreeMap::new();
        for k in lo..=hi {
            for l in lo..=hi {
                let s = ((4 * k + alpha).pow(2) + (4 * l + alpha).pow(2)) as i64;
                let jl = (s - 32 + 15).div_euclid(16);
                let jh = (s + 32).div_euclid(16);
                for j in jl..=jh {
                    *brute.entry(j).or_default() += 1;
                }
            }
        }
        let got = annulus_pair_count(lambda, alpha as u32, 1.0).unwrap();
        let brute: Vec<(i64, u64)> = brute.into_iter().collect();
        o.check(got.entries == brute, format!("annulus lambda=64 alpha={alpha}: {} indices", brute.len()));
    }
    // triple level sets over ordered triples
    let lambda = 16u64;
    let (lo, hi) = level_box(lambda);
    for j in -2..=0i32 {
        let width = lambda as f64 * 4f64.powi(j);
        let mut brute: BTreeMap<(u64, u64), u64> = BTreeMap::new();
        for a in lo..=hi {
            for b in lo..=hi {
                for c in lo..=hi {
                    let l1 = a * (a + 1) + b * (b + 1) + c * (c + 1);
                    let l2 = ((a + b + c) as f64 / width).floor() as u64;
                    *brute.entry((l1, l2)).or_default() += 1;
                }
            }
        }
        let got = triple_level_sets(lambda, j).unwrap();
        let brute: Vec<((u64, u64), u64)> = brute.into_iter().collect();
        o.check(got.entries == brute, format!("triple level sets lambda=16 j={j}: {} cells", brute.len()));
    }
    // representation counts for l <= 10^4
    let l_max = 10_000u64;
    let mut pairs = vec![0u64; l_max as usize + 1];
    for a in 0..=100u64 {
        for b in 0..=100u64 {
            let l = a * (a + 1) + b * (b + 1);
            if l <= l_max {
                pairs[l as usize] += 1;
            }
        }
    }
    let profile = pair_representation_profile(l_max);
    let pair_ok = (0..=l_max).all(|l| pair_representation_count(l) == pairs[l as usize] && profile[l as usize] as u64 == pairs[l as usize]);
    o.check(pair_ok, "pair representation counts, l <= 10^4");
    let mut triple_ok = true;
    for k in 0..=60u64 {
        let mut hist = vec![0u64; l_max as usize + 1];
        for a in 0..=k {
            for b in 0..=k - a {
                let c = k - a - b;
                let l = a * (a + 1) + b * (b + 1) + c * (c + 1);
                if l <= l_max {
                    hist[l as usize] += 1;
                }
            }
        }
        triple_ok &= (0..=l_max).all(|l| triple_representation_count(k, l) == hist[l as usize]);
    }
    o.check(triple_ok, "triple representation counts, k <= 60, l <= 10^4");
    o.runtime(t, 60.0);
    o
}

fn growth_audits() -> Outcome {
    let mut o = Outcome::new();
    for alpha in 0..4 {
        let r = run(ExperimentConfig {
            kind: ExperimentKind::Count,
            count_kind: CountKind::Annulus,
            lambdas: dyadic_lambdas(8, 14),
            alpha,
            ..Default::default()
        });
        let counts: Vec<String> = values(&r, "max_count", None).iter().map(|v| v.1.to_string()).collect();
        let s = slope(&r, "annulus", "max_count", None);
        o.check(s < 0.35, format!("annulus alpha={alpha} max count slope {s:.4} < 0.35 (max counts {})", counts.join(", ")));
    }
    let r = run(ExperimentConfig {
        kind: ExperimentKind::Count,
        count_kind: CountKind::PairRepresentation,
        lambdas: vec![(1u64 << 20) as f64],
        ..Default::default()
    });
    let violations = values(&r, "violations", None)[0].1;
    let running = values(&r, "running_max", None)[0].1;
    o.check(violations == 0.0, format!("pair representation counts above l^0.15 for l <= 2^20: {violations} (max count {running})"));
    let r = run(ExperimentConfig {
        kind: ExperimentKind::Count,
        count_kind: CountKind::TripleCells,
        lambdas: vec![16.0, 32.0, 64.0, 128.0],
        ..Default::default()
    });
    let check = r.checks.iter().find(|c| c.name == "triple cell bound").unwrap();
    let cells = r.rows().len();
    let over = check.detail.split_whitespace().next().unwrap_or("?").to_string();
    o.check(check.passed, format!("triple cells <= lambda^1.2 4^j: {over} of {cells} (lambda, j) maxima over the bound"));
    o
}

fn whitney() -> Outcome {
    let mut o = Outcome::new();
    let r = run(ExperimentConfig { kind: ExperimentKind::Whitney, pairs: 10_000, seed: 1, ..Default::default() });
    for c in &r.checks {
        o.check(c.passed, c.detail.clone());
    }
    o
}

fn partitions() -> Outcome {
    let mut o = Outcome::new();
    let beta = make_lp_bump();
    let worst = (0..10_000)
        .map(|i| {
            let s = 10f64.powf(-6.0 + 12.0 * i as f64 / 9_999.0);
            (dyadic_partition_sum(&beta, s, -40, 40) - 1.0).abs()
        })
        .fold(0.0, f64::max);
    o.below("dyadic partition defect", worst, 1e-12);
    let eta = make_unit_partition();
    let worst = (0..=40_000)
        .map(|i| {
            let tau = -2.0 + 4.0 * i as f64 / 40_000.0;
            (integer_partition_sum(&eta, tau, -3, 3) - 1.0).abs()
        })
        .fold(0.0, f64::max);
    o.below("unit-step partition defect", worst, 1e-12);
    let outside = |b: &SmoothBump, lo: f64, hi: f64| {
        (0..=100_000).all(|i| {
            let s = -4.0 + 8.0 * i as f64 / 100_000.0;
            s > lo && s < hi || b.eval(s) == 0.0
        })
    };
    o.check(outside(&beta, 0.5, 2.0), "beta vanishes outside (1/2, 2)");
    o.check(outside(&eta, -1.0, 1.0), "eta vanishes outside (-1, 1)");
    o
}

fn circle_baseline() -> Outcome {
    let mut o = Outcome::new();
    let r = run(ExperimentConfig {
        kind: ExperimentKind::BaselineCircle,
        lambdas: dyadic_lambdas(6, 12),
        ..Default::default()
    });
    o.within("L^4 ratio slope", slope(&r, "circle", "l4_ratio", Some(q("4"))), -0.02, 0.02);
    let d = CircleData::new(vec![(4, Complex64::new(0.7, -0.2)), (-9, Complex64::new(0.1, 1.3))]);
    let exact = l4_norm_autocorrelation(&d);
    let grid = l4_norm_quadrature(&d, 96, 512);
    o.below("two-mode autocorrelation vs quadrature", ((exact - grid) / exact).abs(), 1e-8);
    o
}

fn upper_bounds(f: &Families) -> Outcome {
    let mut o = Outcome::new();
    for r in [&f.zonal, &f.highest, &f.kernel, &f.random] {
        let fam = r.config.family.name();
        for qv in all_qs() {
            let s = slope(r, fam, "spacetime", Some(qv));
            let m = mu(2, qv.to_f64()).unwrap();
            o.check(s <= m + 0.05, format!("{fam} q={qv}: slope {s:.4} <= {:.4}", m + 0.05));
        }
    }
    o
}

fn determinism() -> Outcome {
    let mut o = Outcome::new();
    for (family, lambdas) in [(Family::Random, vec![6.0, 8.0]), (Family::ClusterKernel, vec![16.0, 32.0])] {
        let cfg = ExperimentConfig { kind: ExperimentKind::Fit, family, lambdas, seed: 7, ..Default::default() };
        let a = run(cfg.clone());
        let b = run(cfg.clone());
        let serial = run(ExperimentConfig { parallel: false, ..cfg });
        o.check(a.csv_body() == b.csv_body(), format!("{} repeated run CSV identical", family.name()));
        let worst = a
            .rows()
            .iter()
            .zip(serial.rows())
            .map(|(x, y)| if x.value == y.value { 0.0 } else { ((x.value - y.value) / x.value).abs() })
            .fold(0.0, f64::max);
        o.check(a.rows().len() == serial.rows().len() && worst <= 1e-12, format!("{} parallel vs serial max rel diff {worst:.1e}", family.name()));
    }
    o
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let start = Instant::now();
    let report = |n: u32, name: &str, o: Outcome| {
        println!("{} [{n:>2}] {name}", if o.passed { "PASS" } else { "FAIL" });
        for d in &o.detail {
            println!("         {d}");
        }
        o.passed
    };
    let mut all = true;
    all &= report(1, "exponent table", exponent_table());
    let families = family_runs();
    all &= report(2, "zonal saturation", zonal_saturation(&families));
    all &= report(3, "highest-weight saturation", highest_weight_saturation(&families));
    all &= report(4, "cluster-kernel lower bound", kernel_lower_bound(&families));
    all &= report(5, "peak persistence", peak_persistence(&families));
    all &= report(6, "evolution invariants", evolution_invariants());
    all &= report(7, "Weyl formula", weyl_formula());
    all &= report(8, "counting oracles", counting_oracles());
    all &= report(9, "counting growth audits", growth_audits());
    all &= report(10, "Whitney audit", whitney());
    all &= report(11, "partition identities", partitions());
    all &= report(12, "circle baseline", circle_baseline());
    all &= report(13, "upper-bound consistency", upper_bounds(&families));
    all &= report(14, "determinism", determinism());
    println!("acceptance finished in {:.1} s", start.elapsed().as_secs_f64());
    if all { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
