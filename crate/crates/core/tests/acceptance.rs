//! Acceptance suite. Each test prints one `PASS`/`FAIL` line (straight to
//! stderr, so it shows without `--nocapture`) and then asserts.

use std::io::Write;
use std::time::{Duration, Instant};

use anderson_core::charfn::{self, ShellSum};
use anderson_core::disorder::{hash_words, to_unit, AmplitudeDistribution, DisorderConfig};
use anderson_core::geometry::{self, Cube, LatticePoint, MultiCube};
use anderson_core::harness::{self, ExperimentSpec};
use anderson_core::msa::{self, CubeContext, Tier};
use anderson_core::operator::{assemble, assemble_projections, FiniteVolumeOperator, ModelParams};
use anderson_core::potential::{
    constant_scatterers, cumulative_potential, u_value, xi_decompose, InteractionParams, StaircaseParams,
};
use anderson_core::spectral::{self, Resolvent};
use anderson_core::stats;
use nalgebra::DMatrix;
use serde_json::Value;

fn report(id: u32, name: &str, pass: bool, detail: &str, elapsed: Duration, limit_s: f64) {
    let in_time = elapsed.as_secs_f64() <= limit_s;
    let verdict = if pass && in_time { "PASS" } else { "FAIL" };
    let line = format!(
        "acceptance {id:>2} {verdict} {name}: {detail} [{:.2}s, limit {limit_s}s]\n",
        elapsed.as_secs_f64()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
    assert!(in_time, "criterion {id} ({name}) exceeded {limit_s}s");
}

/// Deterministic uniform stream for instance generation.
struct Draw {
    seed: u64,
    n: u64,
}

impl Draw {
    fn new(seed: u64) -> Self {
        Self { seed, n: 0 }
    }
    fn unit(&mut self) -> f64 {
        self.n += 1;
        to_unit(hash_words(self.seed, &[self.n]))
    }
    fn int(&mut self, lo: i64, hi: i64) -> i64 {
        lo + ((self.unit() * (hi - lo + 1) as f64) as i64).min(hi - lo)
    }
    fn pick<T: Copy>(&mut self, xs: &[T]) -> T {
        xs[self.int(0, xs.len() as i64 - 1) as usize]
    }
}

fn bernoulli() -> AmplitudeDistribution {
    AmplitudeDistribution::bernoulli(0.5).unwrap()
}

fn run_toml(src: &str, threads: Option<usize>) -> harness::RunReport {
    let spec = ExperimentSpec::from_toml(src).unwrap();
    harness::run(&spec, threads).unwrap()
}

fn per_eps(agg: &Value) -> Vec<(f64, f64, f64, f64)> {
    agg["per_eps"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| {
            let f = |k: &str| v[k].as_f64().unwrap_or(f64::NAN);
            (f("eps"), f("p"), f("lo"), f("hi"))
        })
        .collect()
}

/// Log-log slope of `p` against `eps` over `[a, b]`.
fn slope_between(pts: &[(f64, f64)], a: f64, b: f64) -> f64 {
    let (x, y): (Vec<f64>, Vec<f64>) = pts
        .iter()
        .filter(|(e, p)| *e >= a * (1.0 - 1e-9) && *e <= b * (1.0 + 1e-9) && *p > 0.0)
        .copied()
        .unzip();
    stats::log_log_fit(&x, &y).map_or(f64::NAN, |f| f.slope)
}

#[test]
fn c01_staircase_exactness() {
    let start = Instant::now();
    let r_max = 10_000u64;
    let mut mismatches = 0usize;
    let mut boundaries = 0usize;
    // κ = p/q; r <= k^κ  <=>  r^q <= k^p
    for (p, q) in [(3u32, 2u32), (2, 1), (3, 1)] {
        let kappa = p as f64 / q as f64;
        let st = StaircaseParams::new(kappa, 3.0, 1).unwrap();
        let floor_pow = |k: u64| -> u64 {
            let target = (k as u128).pow(p);
            let mut r = ((kappa * (k as f64).ln()).exp().floor() as u128).saturating_sub(2);
            while (r + 1).pow(q) <= target {
                r += 1;
            }
            while r.pow(q) > target {
                r -= 1;
            }
            r as u64
        };
        let mut oracle = Vec::new();
        for k in 1.. {
            let r = floor_pow(k);
            if r > r_max {
                break;
            }
            oracle.push(r);
        }
        for (i, &r) in oracle.iter().enumerate() {
            if st.plateau_radius(i + 1).unwrap() != r {
                mismatches += 1;
            }
        }
        let mut prev = 0.0f64;
        let mut k = 0usize;
        for r in 1..=r_max {
            let u: f64 = u_value(r as f64, &st);
            let starts = oracle.get(k) == Some(&r);
            if starts {
                k += 1;
            }
            if (u != prev) != starts {
                mismatches += 1;
            }
            if u != (oracle[k - 1] as f64).powf(-3.0) {
                mismatches += 1;
            }
            prev = u;
        }
        boundaries += oracle.len();
    }
    report(
        1,
        "staircase exactness",
        mismatches == 0,
        &format!("{boundaries} plateau boundaries for kappa in {{1.5, 2, 3}}, {mismatches} mismatches"),
        start.elapsed(),
        1.0,
    );
}

#[test]
fn c02_constant_scatterers() {
    let start = Instant::now();
    let mut draw = Draw::new(2024);
    let (mut bad_const, mut checked_sites, mut worst) = (0usize, 0usize, 0.0f64);
    for inst in 0..200u64 {
        let d = draw.int(1, 2) as usize;
        let n = draw.int(1, 2) as usize;
        let l = draw.int(1, if d == 1 { 4 } else { 2 }) as u32;
        let kappa = draw.pick(&[1.5, 2.0, 3.0]);
        let decay = draw.pick(&[d as f64 + 0.5, 3.0, 4.0]);
        let st = StaircaseParams::new(kappa, decay, d).unwrap();
        let centers: Vec<LatticePoint> =
            (0..n).map(|_| LatticePoint::new(&(0..d).map(|_| draw.int(-6, 6)).collect::<Vec<_>>())).collect();
        let mcube = MultiCube::from_centers(&centers, l).unwrap();
        let w = draw.int(l as i64 + 2, l as i64 + if d == 1 { 60 } else { 14 });
        let mut sites = Vec::new();
        for c in &centers {
            let lo: Vec<i64> = c.coords().iter().map(|x| x - w).collect();
            let hi: Vec<i64> = c.coords().iter().map(|x| x + w).collect();
            sites.extend(anderson_core::disorder::box_sites(&LatticePoint::new(&lo), &LatticePoint::new(&hi)).unwrap());
        }
        sites.sort();
        sites.dedup();
        let config = DisorderConfig::sample(&sites, bernoulli(), inst).unwrap();

        let cube = Cube::new(centers[0], l);
        let set = cube.sites();
        for (x, val) in constant_scatterers(&set, 1..=5, &st).unwrap() {
            checked_sites += 1;
            if set.iter().any(|y| st.u_sq(x.dist_sq(y)) != val) {
                bad_const += 1;
            }
        }

        let xi = xi_decompose(&mcube, &config, &st, None);
        let direct: Vec<f64> = mcube
            .sites()
            .iter()
            .map(|x| x.particles().iter().map(|p| cumulative_potential::<f64>(p, &config, &st)).sum())
            .collect();
        let scale = direct.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (r, v) in xi.residual.iter().zip(&direct) {
            worst = worst.max((r + xi.xi - v).abs() / scale);
        }
    }
    report(
        2,
        "constant-scatterer invariant",
        bad_const == 0 && worst <= 1e-12 && checked_sites > 0,
        &format!("200 instances, {checked_sites} scatterers, {bad_const} non-constant, max relative xi error {worst:.2e}"),
        start.elapsed(),
        10.0,
    );
}

fn path_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if i == j { 2.0 } else if i.abs_diff(j) == 1 { -1.0 } else { 0.0 })
}

#[test]
fn c03_operator_spectral_contracts() {
    let start = Instant::now();
    let free = ModelParams::untruncated(StaircaseParams::new(2.0, 3.0, 1).unwrap(), InteractionParams::none(), 0.0);
    let mut free_err = 0.0f64;
    for n in 1..=200usize {
        let mut ops = vec![FiniteVolumeOperator::<f64>::from_dense(&path_matrix(n)).unwrap()];
        if n % 2 == 1 {
            let cube = MultiCube::one(LatticePoint::new(&[0]), (n / 2) as u32);
            let cfg = DisorderConfig::sample(&Cube::new(LatticePoint::new(&[0]), n as u32 / 2).sites(), bernoulli(), 1)
                .unwrap();
            ops.push(assemble(&cube, &cfg, &free).unwrap());
        }
        for op in ops {
            let s = spectral::full_spectrum(&op, false).unwrap();
            for (j, v) in s.eigenvalues.iter().enumerate() {
                let exact = 2.0 - 2.0 * ((j + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
                free_err = free_err.max((v - exact).abs());
            }
        }
    }

    let mut draw = Draw::new(33);
    let mut worst_pair = 0.0f64;
    let mut worst_solve = 0.0f64;
    let mut pairs = 0usize;
    for inst in 0..20u64 {
        let d = draw.int(1, 2) as usize;
        let n = draw.int(1, 2) as usize;
        let l = if d == 1 { draw.int(2, 8) } else { draw.int(1, 2) } as u32;
        let st = StaircaseParams::new(2.0, 3.0, d).unwrap();
        let model = ModelParams::untruncated(st, InteractionParams::new(1.0, 1.0).unwrap(), draw.pick(&[0.5, 1.0, 5.0]));
        let origin = LatticePoint::origin(d);
        let mcube = MultiCube::from_centers(&vec![origin; n], l).unwrap();
        let cfg = DisorderConfig::sample(&Cube::new(origin, l + 20).sites(), bernoulli(), inst).unwrap();
        let op: anderson_core::Operator = assemble(&mcube, &cfg, &model).unwrap();
        let scale = op.norm_one().max(1.0);
        let s = spectral::full_spectrum(&op, true).unwrap();
        let vecs = s.eigenvectors.as_ref().unwrap();
        for (k, &lam) in s.eigenvalues.iter().enumerate() {
            let v: Vec<f64> = vecs.column(k).iter().copied().collect();
            worst_pair = worst_pair.max(spectral::eigenpair_residual(&op, lam, &v) / scale);
            pairs += 1;
        }
        let low = spectral::lowest_eigenpairs(&op, 4.min(op.dim())).unwrap();
        let lv = low.eigenvectors.as_ref().unwrap();
        for (k, &lam) in low.eigenvalues.iter().enumerate() {
            let v: Vec<f64> = lv.column(k).iter().copied().collect();
            worst_pair = worst_pair.max(spectral::eigenpair_residual(&op, lam, &v) / scale);
            pairs += 1;
        }
        let e = draw.unit() * (s.eigenvalues[s.eigenvalues.len() - 1] + 1.0) - 0.5;
        if spectral::nearest_distance(&s.eigenvalues, e) > 1e-6 {
            let res = Resolvent::new(&op, e).unwrap();
            for y in [0, op.dim() / 2, op.dim() - 1] {
                let g = res.column(y).unwrap();
                let hg = op.apply_vec(&g);
                let r: f64 = hg
                    .iter()
                    .zip(&g)
                    .enumerate()
                    .map(|(i, (h, gi))| (h - e * gi - if i == y { 1.0 } else { 0.0 }).powi(2))
                    .sum::<f64>()
                    .sqrt();
                worst_solve = worst_solve.max(r);
            }
        }
    }

    let mut ni_err = 0.0f64;
    let mut ni_count = 0;
    let mut draw = Draw::new(77);
    while ni_count < 50 {
        let d = draw.int(1, 2) as usize;
        let l = if d == 1 { draw.int(1, 5) } else { draw.int(1, 2) } as u32;
        let c1 = LatticePoint::new(&(0..d).map(|_| draw.int(-3, 3)).collect::<Vec<_>>());
        let gap = 2 * l as i64 + draw.int(2, 6);
        let c2 = c1.shifted(0, if draw.unit() < 0.5 { gap } else { -gap });
        let mcube = MultiCube::two(c1, c2, l);
        if !mcube.is_non_interactive() {
            continue;
        }
        let st = StaircaseParams::new(draw.pick(&[1.5, 2.0]), 3.0, d).unwrap();
        let model = ModelParams::untruncated(st, InteractionParams::new(1.0, 2.0).unwrap(), draw.pick(&[0.3, 1.0, 4.0]));
        let mut sites = Cube::new(c1, l + 8).sites();
        sites.extend(Cube::new(c2, l + 8).sites());
        sites.sort();
        sites.dedup();
        let cfg = DisorderConfig::sample(&sites, bernoulli(), 500 + ni_count).unwrap();
        let full: anderson_core::Operator = assemble(&mcube, &cfg, &model).unwrap();
        let (a, b) = assemble_projections::<f64>(&mcube, &cfg, &model).unwrap();
        let sa = spectral::full_spectrum(&a, false).unwrap().eigenvalues;
        let sb = spectral::full_spectrum(&b, false).unwrap().eigenvalues;
        let mut sums: Vec<f64> = sa.iter().flat_map(|x| sb.iter().map(move |y| x + y)).collect();
        sums.sort_by(f64::total_cmp);
        let sf = spectral::full_spectrum(&full, false).unwrap().eigenvalues;
        for (x, y) in sums.iter().zip(&sf) {
            ni_err = ni_err.max((x - y).abs());
        }
        ni_count += 1;
    }
    report(
        3,
        "operator/spectral contracts",
        free_err <= 1e-12 && worst_pair <= 1e-10 && worst_solve <= 1e-10 && ni_err <= 1e-10,
        &format!(
            "free path max error {free_err:.1e}, {pairs} eigenpairs max scaled residual {worst_pair:.1e}, \
             resolvent residual {worst_solve:.1e}, NI sum spectrum error {ni_err:.1e} over 50 instances"
        ),
        start.elapsed(),
        30.0,
    );
}

/// Longest run of sliding-window slopes inside `[lo, hi]`, as the span in
/// decades of `t` covered by those windows.
fn plateau_decades(ts: &[f64], minus_log: &[f64], width: usize, lo: f64, hi: f64) -> (f64, f64, f64) {
    let (x, y): (Vec<f64>, Vec<f64>) = ts.iter().zip(minus_log).map(|(t, v)| (t.ln(), v.ln())).unzip();
    let mut best = 0.0f64;
    let (mut run_start, mut smin, mut smax) = (None::<usize>, f64::INFINITY, f64::NEG_INFINITY);
    let (mut best_min, mut best_max) = (f64::NAN, f64::NAN);
    for i in 0..=x.len() - width {
        let s = stats::least_squares(&x[i..i + width], &y[i..i + width]).unwrap().slope;
        if s >= lo && s <= hi {
            let st = *run_start.get_or_insert(i);
            smin = smin.min(s);
            smax = smax.max(s);
            let span = (x[i + width - 1] - x[st]) / std::f64::consts::LN_10;
            if span > best {
                best = span;
                best_min = smin;
                best_max = smax;
            }
        } else {
            run_start = None;
            smin = f64::INFINITY;
            smax = f64::NEG_INFINITY;
        }
    }
    (best, best_min, best_max)
}

#[test]
fn c04_charfn_decay() {
    let start = Instant::now();
    let dist = bernoulli();
    let mut ok = true;
    let mut detail = Vec::new();
    for (d, t_lo, t_hi) in [(1usize, 1e4, 1e12), (2, 1e3, 3e6)] {
        let st = StaircaseParams::new(2.0, 3.0, d).unwrap();
        let ss = ShellSum::lattice(&st, &[LatticePoint::origin(d)], 1, None).unwrap();
        let decades = (t_hi as f64 / t_lo).log10();
        let ts = stats::log_grid(t_lo, t_hi, (decades * 40.0).round() as usize + 1);
        let logs = charfn::log_abs_charfn_grid(&ss, &dist, &ts).unwrap();
        let minus: Vec<f64> = logs.iter().map(|l| -l).collect();
        let target = d as f64 / 3.0;
        // slopes fitted over sliding windows of 1.5 decades (61 points)
        let (span, smin, smax) = plateau_decades(&ts, &minus, 61, target - 0.15, target + 0.15);
        let top = ts.last().unwrap().powi(6) * logs.last().unwrap().exp();
        ok &= span >= 2.0 && top < 1e-6;
        detail.push(format!(
            "d={d}: slopes in [{smin:.3}, {smax:.3}] over {span:.2} decades (target {target:.3} +- 0.15), t^6|phi| at top {top:.1e}"
        ));
    }
    report(4, "characteristic-function decay", ok, &detail.join("; "), start.elapsed(), 60.0);
}

#[test]
fn c05_quadratic_regime() {
    let start = Instant::now();
    let dist = bernoulli();
    let st = StaircaseParams::new(2.0, 3.0, 1).unwrap();
    let ss = ShellSum::lattice(&st, &[LatticePoint::origin(1)], 4, Some(16)).unwrap();
    // variance from the atoms: Σ_n K_n a_n² Var(ω)
    let mut var = 0.0;
    for n in 4..=16usize {
        let k = geometry::shell_sites(&[LatticePoint::origin(1)], n, &st).unwrap().len() as f64;
        var += k * st.plateau_value(n).unwrap().powi(2) * 0.25;
    }
    let ts = stats::log_grid(1e-2, 1.0, 21);
    let fit = charfn::decay_exponent_fit(&ss, &dist, &ts).unwrap();
    let coef = fit.intercept.exp();
    let rel = (coef / (var / 2.0) - 1.0).abs();
    report(
        5,
        "quadratic small-t regime",
        (fit.slope - 2.0).abs() <= 0.1 && rel <= 0.05,
        &format!("slope {:.4}, coefficient {coef:.6e} vs Var/2 {:.6e} (rel {rel:.1e})", fit.slope, var / 2.0),
        start.elapsed(),
        10.0,
    );
}

#[test]
fn c06_wegner_linearity() {
    let start = Instant::now();
    let dist = bernoulli();
    let mut ok = true;
    let mut detail = Vec::new();

    // interval probabilities of a finite shell sum, exact vs Monte Carlo
    let st = StaircaseParams::new(2.0, 3.0, 1).unwrap();
    let ss = ShellSum::lattice(&st, &[LatticePoint::origin(1)], 3, Some(6)).unwrap();
    let law = charfn::exact_distribution(&ss, &dist, 1 << 20).unwrap();
    let (mean, _) = ss.moments(&dist).unwrap();
    let eps = stats::log_grid(1e-4, 1e-3, 5);
    let exact: Vec<(f64, f64)> = eps.iter().map(|&e| (e, law.prob_between(mean - e / 2.0, mean + e / 2.0))).collect();
    let s_slope = slope_between(&exact, 1e-4, 1e-3);
    let samples = 100_000u64;
    let sums: Vec<f64> = (0..samples).map(|i| charfn::sample_sum(&ss, &dist, 0, i).unwrap()).collect();
    // family-wise 95% over the grid (Bonferroni)
    let z = 2.576;
    let mut mc_ok = true;
    for &(e, p) in &exact {
        let hits = sums.iter().filter(|s| (**s - mean).abs() <= e / 2.0).count() as u64;
        let w = stats::wilson(hits, samples, z);
        mc_ok &= w.lo <= p && p <= w.hi;
    }
    ok &= (s_slope - 1.0).abs() <= 0.3 && mc_ok;
    detail.push(format!(
        "shell sum (shells 3..6, {} atoms): slope {s_slope:.3} over [1e-4, 1e-3], MC within 95% CI: {mc_ok}",
        law.values.len()
    ));

    // frozen-bath distance to the spectrum: 18 annulus sites, 2^18 configurations
    let base = "experiment = \"wegner\"\nseed = 1\n[model]\nparticles = 1\n[geometry]\nL = 2\ntau = 3.52\n\
                [wegner]\nenergy = 2.0\n[grids]\neps = { min = 1e-3, max = 1e-2, points = 5, log = true }\n";
    let ex = run_toml(&ex_src(base, true), None).aggregates;
    let mc = run_toml(&ex_src(base, false), None).aggregates;
    let floor = ex["eps_floor"].as_f64().unwrap();
    let pe = per_eps(&ex);
    let pm = per_eps(&mc);
    let w_slope = slope_between(&pe.iter().map(|r| (r.0, r.1)).collect::<Vec<_>>(), 1e-3, 1e-2);
    let agree = pe.iter().zip(&pm).all(|(e, m)| m.2 <= e.1 && e.1 <= m.3);
    ok &= (w_slope - 1.0).abs() <= 0.3 && agree && floor < 1e-3 && ex["annulus_sites"].as_u64() == Some(18);
    detail.push(format!(
        "frozen bath: floor {floor:.2e}, exact slope {w_slope:.3} over [1e-3, 1e-2], 20000 MC draws within 95% CI: {agree}"
    ));
    report(6, "Wegner-type linearity", ok, &detail.join("; "), start.elapsed(), 300.0);
}

fn ex_src(base: &str, exact: bool) -> String {
    if exact {
        base.replace("[wegner]\n", "[wegner]\nexact = true\n")
    } else {
        base.replace("seed = 1\n", "seed = 1\ntrials = 20000\n")
    }
}

#[test]
fn c07_eigenvalue_comparison() {
    let start = Instant::now();
    let src = "experiment = \"evcomp\"\ntrials = 2000\nseed = 3\n[model]\nparticles = 2\n[geometry]\nL = 3\n\
               centers = [[0], [1]]\n[evcomp]\noffset = [40]\n\
               [grids]\neps = { min = 1e-4, max = 1e-3, points = 5, log = true }\n";
    let agg = run_toml(src, None).aggregates;
    let pts: Vec<(f64, f64)> = per_eps(&agg).iter().map(|r| (r.0, r.1)).collect();
    let slope = slope_between(&pts, 1e-4, 1e-3);
    report(
        7,
        "eigenvalue comparison",
        (slope - 1.0).abs() <= 0.3,
        &format!(
            "d=1 N=2 L=3, cubes 40 apart, 2000 trials: P(gap <= eps) = {:.4} .. {:.4}, slope {slope:.3}",
            pts[0].1,
            pts[pts.len() - 1].1
        ),
        start.elapsed(),
        300.0,
    );
}

#[test]
fn c08_initial_length_scale() {
    let start = Instant::now();
    let src = "experiment = \"ils\"\ntrials = 10000\nseed = 8\n[model]\ng = 0.5\ntail_tol = 0.0\n\
               [ils]\ntheta = 0.5\nL0 = [3, 5, 7]\n";
    let agg = run_toml(src, None).aggregates;
    let per = agg["per_l0"].as_array().unwrap();
    let negative: u64 = per.iter().map(|v| v["negative"].as_u64().unwrap()).sum();
    let min_e0 = per.iter().map(|v| v["min_e0"].as_f64().unwrap()).fold(f64::INFINITY, f64::min);
    let certified = per.iter().all(|v| v["certified"].as_bool() == Some(true));
    let dec = agg["strictly_decreasing"].as_bool() == Some(true);
    let sep = agg["ci_separated"].as_bool() == Some(true);
    let ps: Vec<String> = per
        .iter()
        .map(|v| format!("{:.4} [{:.4}, {:.4}]", v["p"].as_f64().unwrap(), v["lo"].as_f64().unwrap(), v["hi"].as_f64().unwrap()))
        .collect();
    report(
        8,
        "initial length scale",
        negative == 0 && min_e0 >= 0.0 && certified && dec && sep,
        &format!(
            "min E0 {min_e0:.3e}, {negative} negative; P(E0 <= L0^-0.5) for L0 = 3, 5, 7: {}; zero-outside certificate used: {certified}",
            ps.join(", ")
        ),
        start.elapsed(),
        300.0,
    );
}

#[test]
fn c09_certification_soundness() {
    let start = Instant::now();
    let (mut instances, mut certified, mut violations, mut checks) = (0usize, 0usize, 0usize, 0usize);
    for n in [1usize, 2] {
        for l in [3u32, 4] {
            for g in [0.5, 2.0] {
                let st = StaircaseParams::new(2.0, 3.0, 1).unwrap();
                let model = ModelParams::new(st, InteractionParams::new(1.0, 1.0).unwrap(), g, 1e-8).unwrap();
                let origin = LatticePoint::origin(1);
                let mcube = MultiCube::from_centers(&vec![origin; n], l).unwrap();
                let tau = 3.0;
                let radius = (l as u64).pow(3).max(l as u64 + model.cutoff.unwrap());
                for seed in 0..12u64 {
                    let cfg = DisorderConfig::sample(&Cube::new(origin, radius as u32).sites(), bernoulli(), seed).unwrap();
                    let ctx = CubeContext { mcube, config: &cfg, model: &model, tau };
                    let b = ctx.bound().unwrap();
                    let zero = ctx.operator(&ctx.zero_outside()).unwrap();
                    for e in [-0.5, 1.0, 2.5, 4.0] {
                        for (eps, delta) in [(0.05, 0.5), (0.2, 2.0)] {
                            instances += 1;
                            let snr = msa::certify_snr(&zero, e, eps, b).unwrap();
                            let sns = msa::certify_sns(&zero, &mcube, e, delta, b).unwrap();
                            if snr.tier == Tier::Certified {
                                certified += 1;
                                for i in 0..100 {
                                    checks += 1;
                                    let op = ctx.operator(&ctx.outside_sample(i)).unwrap();
                                    if !msa::is_nonresonant(&op, e, eps).unwrap().holds {
                                        violations += 1;
                                    }
                                }
                            }
                            if sns.tier == Tier::Certified {
                                certified += 1;
                                for i in 0..100 {
                                    checks += 1;
                                    let op = ctx.operator(&ctx.outside_sample(i)).unwrap();
                                    if !msa::is_nonsingular(&op, &mcube, e, delta).unwrap().holds {
                                        violations += 1;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    report(
        9,
        "certification soundness",
        violations == 0 && certified > 0,
        &format!("{instances} cube/energy instances, {certified} certified, {checks} outside samples, {violations} violations"),
        start.elapsed(),
        600.0,
    );
}

#[test]
fn c10_localization() {
    let start = Instant::now();
    let src = "experiment = \"localize\"\ntrials = 1\nseed = 5\n[model]\ng = 5.0\ntail_tol = 0.0\n\
               [geometry]\nL = 50\nwindow = 200\n[localize]\nbottom_fraction = 0.1\nmass_radius = 25\n\
               [grids]\nenergy = { min = 0.5, max = 3.5, points = 7 }\n";
    let agg = run_toml(src, None).aggregates;
    let mass = agg["min_mass_fraction"].as_f64().unwrap();
    let slope = agg["correlator_slope"].as_f64().unwrap();
    report(
        10,
        "localization diagnostics",
        mass >= 0.99 && slope < 0.0,
        &format!("d=1 g=5 L=50: min mass within radius 25 = {mass:.6}, correlator log-log slope {slope:.2}"),
        start.elapsed(),
        120.0,
    );
}

#[test]
fn c11_determinism() {
    let start = Instant::now();
    let specs = [
        "experiment = \"wegner\"\ntrials = 300\nseed = 4\n[geometry]\nL = 2\ntau = 3.0\n[wegner]\nenergy = 1.5\nstable = true\n\
         [grids]\neps = [0.001, 0.01, 0.1]\n",
        "experiment = \"evcomp\"\ntrials = 200\nseed = 9\n[model]\nparticles = 2\n[geometry]\nL = 2\ncenters = [[0], [1]]\n\
         [grids]\neps = [0.001, 0.01]\n",
        "experiment = \"ils\"\ntrials = 300\n[model]\ntail_tol = 0.0\n[ils]\ntheta = 0.5\n",
        "experiment = \"charfn\"\n[charfn]\nmode = \"lattice\"\nM = 2\nN = 6\nmc_samples = 2000\n\
         [grids]\nt = { min = 1.0, max = 1e4, points = 9, log = true }\neps = [0.001, 0.01]\n",
        "experiment = \"msa\"\ntrials = 6\noverride_constraints = true\n[model]\ng = 2.0\n[msa]\nenergy = -0.5\nsamples = 4\n\
         [schedule]\nL0 = 3\nalpha = 1.5\ntau = 2.0\nkappa = 2.0\nA = 3.0\nb = 1.0\nm = 0.2\ngamma = 0.1\nK = 2\nS = 3\nk_max = 1\nn_particles = 1\ndim = 1\n",
        "experiment = \"localize\"\n[model]\ng = 5.0\ntail_tol = 0.0\n[geometry]\nL = 20\nwindow = 60\n[grids]\nenergy = [1.0, 2.0]\n",
    ];
    let mut same = 0;
    let mut names = Vec::new();
    for src in specs {
        let one = run_toml(src, Some(1));
        let eight = run_toml(src, Some(8));
        if one.csv_bytes().unwrap() == eight.csv_bytes().unwrap() && one.summary_bytes() == eight.summary_bytes() {
            same += 1;
        }
        names.push(one.spec.experiment.name());
    }
    report(
        11,
        "determinism and parallel invariance",
        same == specs.len(),
        &format!("{same}/{} experiments byte-identical at 1 and 8 threads ({})", specs.len(), names.join(", ")),
        start.elapsed(),
        120.0,
    );
}
