//! Experiment drivers. Each returns the CSV header, per-trial rows (in trial
//! order) and a JSON value of aggregates.

use rayon::prelude::*;
use serde_json::{json, Value};

use super::config::{ExperimentSpec, ShellMode};
use super::output::{jnum, num, to_value};
use crate::charfn::{self, McOptions, ShellSum};
use crate::disorder::{box_sites, enumerate_configs_with_budget, hash_words, site_uniform, DisorderConfig};
use crate::error::{Error, Result};
use crate::geometry::{ConfigPoint, LatticePoint, MultiCube};
use crate::msa::{self, IlsConfig, MsaConfig};
use crate::operator::{assemble, assemble_with_potentials, check_window, ModelParams};
use crate::potential::potential_on_sites;
use crate::spectral::{self, ef_correlator, min_spectral_gap, Resolvent};
use crate::stats::{self, Proportion};

pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub aggregates: Value,
}

/// Union of the boxes of radius `r` around `centers`.
pub fn window_sites(centers: &[LatticePoint], r: u64) -> Result<Vec<LatticePoint>> {
    let mut sites = Vec::new();
    for c in centers {
        let lo: Vec<i64> = c.coords().iter().map(|x| x - r as i64).collect();
        let hi: Vec<i64> = c.coords().iter().map(|x| x + r as i64).collect();
        sites.extend(box_sites(&LatticePoint::new(&lo), &LatticePoint::new(&hi))?);
    }
    sites.sort();
    sites.dedup();
    Ok(sites)
}

fn trial_seed(master: u64, tag: u64, t: usize) -> u64 {
    hash_words(master, &[tag, t as u64])
}

fn prop_json(eps: f64, p: &Proportion) -> Value {
    json!({ "eps": eps, "p": jnum(p.estimate), "lo": p.lo, "hi": p.hi, "hits": p.successes, "trials": p.trials })
}

/// Log-log slope of `p(ε)` over the points with `ε >= floor` and `p > 0`.
fn slope_above(eps: &[f64], p: &[f64], floor: f64) -> Option<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = eps.iter().zip(p).filter(|(e, _)| **e >= floor).map(|(e, p)| (*e, *p)).unzip();
    stats::log_log_fit(&x, &y).map(|f| f.slope)
}

pub fn charfn(spec: &ExperimentSpec) -> Result<Table> {
    let c = &spec.charfn;
    let d = spec.model.dim;
    let ss = match c.mode {
        ShellMode::Abstract => ShellSum::abstract_mode(c.c, d, spec.model.decay, c.m, c.n)?,
        ShellMode::Lattice => ShellSum::lattice(&spec.staircase()?, &[LatticePoint::origin(d)], c.m, c.n)?,
    };
    let dist = &spec.distribution;
    let ts = spec.grid("t")?;
    let logs = charfn::log_abs_charfn_grid(&ss, dist, &ts)?;
    let rows = ts.iter().zip(&logs).map(|(t, l)| vec![num(*t), num(*l), num(l.exp())]).collect();
    let minus: Vec<f64> = logs.iter().map(|l| -l).collect();
    let fit = charfn::fit_decay(&ts, &minus)?;
    let mut agg = json!({
        "decay_fit": {
            "slope": fit.slope,
            "intercept": fit.intercept,
            "predicted_slope": d as f64 / spec.model.decay,
            "local_slopes": fit.local_slopes,
            "windowed_slopes": fit.windowed_slopes(5),
            "dropped": fit.dropped,
        },
        "t_top": ts.last().copied(),
        "t6_phi_top": ts.last().zip(logs.last()).map(|(t, l)| jnum(t.powi(6) * l.exp())),
    });
    if c.n.is_some() {
        let (mean, var) = ss.moments(dist)?;
        agg["mean"] = json!(mean);
        agg["variance"] = json!(var);
        agg["quadratic_coefficient"] = json!(var / 2.0);
        let mc = McOptions { samples: c.mc_samples, seed: spec.seed, budget: spec.budget };
        if let Some(g) = &spec.grids.eps {
            let mut out = Vec::new();
            for eps in g.values()? {
                let p = charfn::small_interval_prob(&ss, dist, c.interval_start, eps, &mc)?;
                out.push(json!({ "eps": eps, "p": p.p, "lo": p.lo, "hi": p.hi, "exact": p.exact }));
            }
            agg["interval_prob"] = Value::Array(out);
            if let Ok(law) = charfn::exact_distribution(&ss, dist, spec.budget) {
                let conc: Vec<Value> =
                    g.values()?.iter().map(|&e| json!({ "eps": e, "q": law.concentration(e) })).collect();
                agg["concentration"] = Value::Array(conc);
            }
        }
        if let Some(g) = &spec.grids.lambda {
            let mut out = Vec::new();
            for lambda in g.values()? {
                let p = charfn::edge_tail(&ss, dist, lambda, &mc)?;
                out.push(json!({ "lambda": lambda, "p": p.p, "lo": p.lo, "hi": p.hi, "exact": p.exact }));
            }
            agg["edge_tail"] = Value::Array(out);
        }
    }
    if let (Some(t_max), Some(v)) = (c.t_max, &spec.grids.v) {
        let dens = charfn::density_reconstruct(&ss, dist, &v.values()?, t_max)?;
        agg["density"] = to_value(&dens);
    }
    Ok(Table { header: vec!["t", "log_abs_phi", "abs_phi"], rows, aggregates: agg })
}

/// A cube with all amplitudes frozen except on a region, where the potential
/// is the frozen part plus a linear combination of per-site columns.
struct Linearized {
    mcube: MultiCube,
    region: Vec<LatticePoint>,
    base: Vec<Vec<f64>>,
    /// `cols[j][i][x]`: potential on projection `j` at site `x` from unit amplitude at region site `i`.
    cols: Vec<Vec<Vec<f64>>>,
}

impl Linearized {
    fn new(mcube: MultiCube, config: &DisorderConfig, region: Vec<LatticePoint>, model: &ModelParams) -> Result<Self> {
        check_window(&mcube, config, model)?;
        let frozen = config.zeroed_outside(|y| region.binary_search(y).is_err());
        let st = &model.staircase;
        let proj = mcube.projections();
        let base = proj.iter().map(|c| potential_on_sites::<f64>(&c.sites(), &frozen, st)).collect();
        let cols = proj
            .iter()
            .map(|c| {
                let sites = c.sites();
                region.iter().map(|y| sites.iter().map(|x| st.u_sq(x.dist_sq(y))).collect()).collect()
            })
            .collect();
        Ok(Self { mcube, region, base, cols })
    }

    fn operator(&self, amps: &[f64], model: &ModelParams) -> Result<crate::Operator> {
        let pots: Vec<Vec<f64>> = self
            .base
            .iter()
            .zip(&self.cols)
            .map(|(b, cols)| {
                let mut v = b.clone();
                for (col, w) in cols.iter().zip(amps) {
                    if *w != 0.0 {
                        for (vx, c) in v.iter_mut().zip(col) {
                            *vx += c * w;
                        }
                    }
                }
                v
            })
            .collect();
        assemble_with_potentials(&self.mcube, &pots, model)
    }
}

pub fn wegner(spec: &ExperimentSpec) -> Result<Table> {
    let model = spec.model_params()?;
    let mcube = spec.cube()?;
    let centers = spec.centers()?;
    let l = spec.geometry.l as u64;
    let tau = spec.geometry.tau;
    let outer = (l as f64).powf(tau).floor() as u64;
    let window = window_sites(&centers, spec.window_radius(&model).max(outer))?;
    let base = DisorderConfig::sample(&window, spec.distribution.clone(), spec.seed)?;
    let annulus: Vec<LatticePoint> = window
        .iter()
        .filter(|y| {
            let d = centers.iter().map(|c| c.sup_dist(y)).min().unwrap_or(u64::MAX);
            d > l && d <= outer
        })
        .copied()
        .collect();
    let lin = Linearized::new(mcube, &base, annulus, &model)?;
    let e = spec.wegner.energy;
    let dist_of = |amps: &[f64]| -> Result<f64> { spectral::dist_to_spectrum(&lin.operator(amps, &model)?, e) };

    // (distance, weight); weight 1 per sampled trial
    let samples: Vec<(f64, f64)> = if spec.wegner.exact {
        let configs: Vec<(Vec<f64>, f64)> =
            enumerate_configs_with_budget(lin.region.len(), &spec.distribution, spec.budget)?.collect();
        configs.par_iter().map(|(a, w)| Ok((dist_of(a)?, *w))).collect::<Result<_>>()?
    } else {
        (0..spec.trials)
            .into_par_iter()
            .map(|t| {
                let amps: Vec<f64> = lin
                    .region
                    .iter()
                    .map(|y| spec.distribution.quantile(site_uniform(spec.seed, y, t as u64 + 1)))
                    .collect();
                Ok((dist_of(&amps)?, 1.0))
            })
            .collect::<Result<_>>()?
    };
    let eps = spec.grid("eps")?;
    let floor = (l as f64).powf(-spec.model.decay * tau);
    let bound = if spec.wegner.stable {
        Some(msa::outside_influence_bound(&mcube, tau, model.g, &model.staircase)?)
    } else {
        None
    };
    let prob = |cut: f64| -> Proportion {
        if spec.wegner.exact {
            let p: f64 = samples.iter().filter(|s| s.0 <= cut).map(|s| s.1).sum();
            Proportion { successes: 0, trials: samples.len() as u64, estimate: p, lo: p, hi: p }
        } else {
            let hits = samples.iter().filter(|s| s.0 <= cut).count() as u64;
            stats::wilson(hits, samples.len() as u64, stats::Z95)
        }
    };
    let ps: Vec<Proportion> = eps.iter().map(|&x| prob(x)).collect();
    let est: Vec<f64> = ps.iter().map(|p| p.estimate).collect();
    let mut per_eps: Vec<Value> = eps.iter().zip(&ps).map(|(x, p)| prop_json(*x, p)).collect();
    if let Some(b) = bound {
        for (v, x) in per_eps.iter_mut().zip(&eps) {
            let p = prob(x + b);
            v["p_stable"] = jnum(p.estimate);
            v["hi_stable"] = json!(p.hi);
        }
    }
    let rows = samples.iter().enumerate().map(|(i, (d, w))| vec![i.to_string(), num(*d), num(*w)]).collect();
    let agg = json!({
        "energy": e,
        "annulus_sites": lin.region.len(),
        "mode": if spec.wegner.exact { "exact" } else { "sampled" },
        "eps_floor": floor,
        "outside_bound": bound,
        "per_eps": per_eps,
        "slope": slope_above(&eps, &est, floor),
    });
    Ok(Table { header: vec!["trial", "dist", "weight"], rows, aggregates: agg })
}

pub fn evcomp(spec: &ExperimentSpec) -> Result<Table> {
    let model = spec.model_params()?;
    let c1 = spec.centers()?;
    let l = spec.geometry.l;
    let offset = match &spec.evcomp.offset {
        Some(o) if o.len() == spec.model.dim => LatticePoint::new(o),
        Some(_) => return Err(Error::Config("evcomp offset has the wrong dimension".into())),
        None => {
            let mut o = vec![0i64; spec.model.dim];
            o[0] = (spec.evcomp.c_hat * l as f64).floor() as i64 + 1;
            LatticePoint::new(&o)
        }
    };
    let c2: Vec<LatticePoint> = c1.iter().map(|c| c.translated(&offset)).collect();
    let b1 = MultiCube::from_centers(&c1, l)?;
    let b2 = MultiCube::from_centers(&c2, l)?;
    if !(b1.center_dist(&b2) as f64 > spec.evcomp.c_hat * l as f64) && offset.coords().iter().any(|&x| x != 0) {
        return Err(Error::Config(format!("cube centers must be more than {} L apart", spec.evcomp.c_hat)));
    }
    let all: Vec<LatticePoint> = c1.iter().chain(&c2).copied().collect();
    let window = window_sites(&all, spec.window_radius(&model))?;
    let gaps: Vec<f64> = (0..spec.trials)
        .into_par_iter()
        .map(|t| {
            let cfg = DisorderConfig::sample(&window, spec.distribution.clone(), trial_seed(spec.seed, 0, t))?;
            let s1 = spectral::full_spectrum(&assemble(&b1, &cfg, &model)?, false)?;
            let s2 = spectral::full_spectrum(&assemble(&b2, &cfg, &model)?, false)?;
            Ok(min_spectral_gap(&s1.eigenvalues, &s2.eigenvalues))
        })
        .collect::<Result<_>>()?;
    let eps = spec.grid("eps")?;
    let ps: Vec<Proportion> = eps
        .iter()
        .map(|&x| stats::wilson(gaps.iter().filter(|&&g| g <= x).count() as u64, gaps.len() as u64, stats::Z95))
        .collect();
    let est: Vec<f64> = ps.iter().map(|p| p.estimate).collect();
    let rows = gaps.iter().enumerate().map(|(i, g)| vec![i.to_string(), num(*g)]).collect();
    let agg = json!({
        "offset": offset.coords(),
        "per_eps": eps.iter().zip(&ps).map(|(x, p)| prop_json(*x, p)).collect::<Vec<_>>(),
        "slope": slope_above(&eps, &est, 0.0),
    });
    Ok(Table { header: vec!["trial", "min_gap"], rows, aggregates: agg })
}

pub fn ils(spec: &ExperimentSpec) -> Result<Table> {
    let model = spec.model_params()?;
    let centers = spec.centers()?;
    let mut rows = Vec::new();
    let mut per = Vec::new();
    let mut ests: Vec<Proportion> = Vec::new();
    for &l0 in &spec.ils.l0 {
        let r = msa::ils_probe(&IlsConfig {
            l0,
            theta: spec.ils.theta,
            model: model.clone(),
            dist: spec.distribution.clone(),
            centers: centers.clone(),
            trials: spec.trials,
            seed: spec.seed,
            samples: spec.ils.samples,
        })?;
        for (t, e0) in r.e0.iter().enumerate() {
            rows.push(vec![l0.to_string(), t.to_string(), num(*e0)]);
        }
        ests.push(r.estimate);
        per.push(json!({
            "L0": l0,
            "threshold": r.threshold,
            "p": jnum(r.estimate.estimate),
            "lo": r.estimate.lo,
            "hi": r.estimate.hi,
            "certified": r.certified,
            "min_e0": jnum(r.min_e0),
            "negative": r.negative,
        }));
    }
    let decreasing = ests.windows(2).all(|w| w[1].estimate < w[0].estimate);
    let separated = ests.windows(2).all(|w| w[1].hi < w[0].lo);
    let agg = json!({ "theta": spec.ils.theta, "per_l0": per, "strictly_decreasing": decreasing, "ci_separated": separated });
    Ok(Table { header: vec!["L0", "trial", "e0"], rows, aggregates: agg })
}

pub fn run_msa(spec: &ExperimentSpec) -> Result<Table> {
    let schedule = spec.schedule.clone().ok_or_else(|| Error::Config("msa needs a [schedule] table".into()))?;
    if schedule.n_particles != spec.model.particles || schedule.dim != spec.model.dim {
        return Err(Error::Config("schedule and model disagree on N or d".into()));
    }
    let cfg = MsaConfig {
        energy: spec.msa.energy,
        schedule,
        model: spec.model_params()?,
        dist: spec.distribution.clone(),
        trials: spec.trials,
        seed: spec.seed,
        samples: spec.msa_samples(),
        stride: spec.msa.stride,
        override_constraints: spec.override_constraints,
    };
    let report = msa::run_fixed_energy_msa(&cfg)?;
    let opt = |b: Option<bool>| b.map_or(String::new(), |b| b.to_string());
    let rows = report
        .records
        .iter()
        .map(|r| {
            vec![
                r.scale.to_string(),
                r.trial.to_string(),
                r.sns_tier.clone(),
                r.sns.to_string(),
                r.ns_direct.to_string(),
                opt(r.snr),
                opt(r.ni_ok),
                opt(r.s_good),
                r.cluster.map_or(String::new(), |c| c.to_string()),
                opt(r.cluster_exact),
                r.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    let agg = json!({
        "energy": report.energy,
        "schedule_validation": to_value(&report.validation),
        "overridden": report.overridden,
        "scales": to_value(&report.scales),
        "audit_violations": report.scales.iter().map(|s| s.audit_violations).sum::<usize>(),
        "note": "multi-scale trend is exploratory at desk scale",
    });
    Ok(Table {
        header: vec![
            "scale", "trial", "sns_tier", "sns", "ns_direct", "snr", "ni_ok", "s_good", "cluster", "cluster_exact",
            "error",
        ],
        rows,
        aggregates: agg,
    })
}

/// `⟨z⟩ = (1 + |z|²)^{1/2}` for the sup distance between configurations.
fn bracket(r: u64) -> f64 {
    (1.0 + (r * r) as f64).sqrt()
}

fn config_dist(a: &ConfigPoint, b: &ConfigPoint) -> u64 {
    a.particles().iter().zip(b.particles()).map(|(x, y)| x.sup_dist(y)).max().unwrap_or(0)
}

pub fn localize(spec: &ExperimentSpec) -> Result<Table> {
    let model = spec.model_params()?;
    let mcube = spec.cube()?;
    let centers = spec.centers()?;
    let window = window_sites(&centers, spec.window_radius(&model))?;
    let sites = mcube.sites();
    let n = sites.len();
    let reference = match &spec.localize.reference {
        None => ConfigPoint::from_centers(&centers),
        Some(off) => {
            let off = LatticePoint::new(off);
            ConfigPoint::from_centers(&centers.iter().map(|c| c.translated(&off)).collect::<Vec<_>>())
        }
    };
    let x0 = mcube.index_of(&reference).ok_or_else(|| Error::Config("reference site outside the cube".into()))?;
    let dists: Vec<u64> = sites.iter().map(|x| config_dist(x, &reference)).collect();
    let rmax = dists.iter().copied().max().unwrap_or(0) as usize;
    let energies = spec.grids.energy.as_ref().map(|g| g.values()).transpose()?;
    let mass_r = spec.localize.mass_radius;
    let fraction = spec.localize.bottom_fraction;

    struct Out {
        rows: Vec<Vec<String>>,
        corr: Vec<f64>,
        green: Vec<f64>,
        green_fine: Vec<f64>,
        min_mass: f64,
        slopes: Vec<f64>,
    }
    let trials: Vec<Out> = (0..spec.trials)
        .into_par_iter()
        .map(|t| {
            let cfg = DisorderConfig::sample(&window, spec.distribution.clone(), trial_seed(spec.seed, 1, t))?;
            let cfg = if model.cutoff.is_none() { cfg.with_zero_exterior() } else { cfg };
            let op: crate::Operator = assemble(&mcube, &cfg, &model)?;
            let spec_r = spectral::full_spectrum(&op, true)?;
            let vecs = spec_r.eigenvectors.as_ref().expect("vectors");
            let k = ((fraction * n as f64).ceil() as usize).clamp(1, n);
            let interval = (spec_r.eigenvalues[0], spec_r.eigenvalues[k - 1]);
            let mut rows = Vec::with_capacity(k);
            let mut min_mass = f64::INFINITY;
            let mut slopes = Vec::with_capacity(k);
            for j in 0..k {
                let col = vecs.column(j);
                let peak = (0..n).max_by(|&a, &b| col[a].abs().total_cmp(&col[b].abs())).expect("nonempty");
                let mass: f64 =
                    (0..n).filter(|&x| config_dist(&sites[x], &sites[peak]) <= mass_r).map(|x| col[x] * col[x]).sum();
                let (lx, ly): (Vec<f64>, Vec<f64>) = (0..n)
                    .filter(|&x| col[x] != 0.0)
                    .map(|x| (bracket(config_dist(&sites[x], &sites[peak])).ln(), col[x].abs().ln()))
                    .unzip();
                let slope = stats::least_squares(&lx, &ly).map_or(f64::NAN, |f| f.slope);
                min_mass = min_mass.min(mass);
                slopes.push(slope);
                rows.push(vec![
                    t.to_string(),
                    j.to_string(),
                    num(spec_r.eigenvalues[j]),
                    peak.to_string(),
                    num(mass),
                    num(slope),
                ]);
            }
            // correlator and Green sup, averaged over sites at equal distance
            let mut corr = vec![0.0; rmax + 1];
            let mut count = vec![0usize; rmax + 1];
            for y in 0..n {
                corr[dists[y] as usize] += ef_correlator(&spec_r, interval, x0, y)?;
                count[dists[y] as usize] += 1;
            }
            corr.iter_mut().zip(&count).for_each(|(c, k)| *c /= (*k).max(1) as f64);
            let sup_green = |grid: &[f64]| -> Result<Vec<f64>> {
                let mut g = vec![0.0f64; rmax + 1];
                for &e in grid {
                    let res = match Resolvent::from_spectrum(&op, &spec_r, e) {
                        Err(Error::Resonant { .. }) => continue,
                        r => r?,
                    };
                    let col = res.column(x0)?;
                    for y in 0..n {
                        let r = dists[y] as usize;
                        g[r] = g[r].max(col[y].abs());
                    }
                }
                Ok(g)
            };
            let (green, green_fine) = match &energies {
                Some(grid) => {
                    let mut fine = grid.clone();
                    fine.extend(grid.windows(2).map(|w| 0.5 * (w[0] + w[1])));
                    (sup_green(grid)?, sup_green(&fine)?)
                }
                None => (Vec::new(), Vec::new()),
            };
            Ok(Out { rows, corr, green, green_fine, min_mass, slopes })
        })
        .collect::<Result<_>>()?;

    let m = trials.len().max(1) as f64;
    let avg = |f: &dyn Fn(&Out) -> &Vec<f64>| -> Vec<f64> {
        let len = trials.first().map_or(0, |o| f(o).len());
        (0..len).map(|i| trials.iter().map(|o| f(o)[i]).sum::<f64>() / m).collect()
    };
    let corr = avg(&|o| &o.corr);
    let green = avg(&|o| &o.green);
    let green_fine = avg(&|o| &o.green_fine);
    let rs: Vec<f64> = (1..corr.len()).map(|r| bracket(r as u64)).collect();
    let corr_slope = stats::log_log_fit(&rs, &corr[1.min(corr.len())..]).map(|f| f.slope);
    let slopes: Vec<f64> = trials.iter().flat_map(|o| o.slopes.iter().copied()).filter(|s| s.is_finite()).collect();
    let spacing = energies.as_ref().and_then(|g| g.windows(2).map(|w| (w[1] - w[0]).abs()).reduce(f64::max));
    let refinement = green.iter().zip(&green_fine).map(|(a, b)| (b - a).abs() / b.max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
    let agg = json!({
        "bottom_fraction": fraction,
        "mass_radius": mass_r,
        "min_mass_fraction": jnum(trials.iter().map(|o| o.min_mass).fold(f64::INFINITY, f64::min)),
        "mean_decay_slope": jnum(slopes.iter().sum::<f64>() / slopes.len().max(1) as f64),
        "correlator": corr.iter().map(|&c| jnum(c)).collect::<Vec<_>>(),
        "correlator_slope": corr_slope,
        "green_sup": {
            "estimator": "maximum over the energy grid",
            "grid_spacing": spacing,
            "values": green,
            "refined_values": green_fine,
            "max_relative_refinement_change": refinement,
        },
    });
    let rows = trials.into_iter().flat_map(|o| o.rows).collect();
    Ok(Table {
        header: vec!["trial", "index", "energy", "peak", "mass_fraction", "decay_slope"],
        rows,
        aggregates: agg,
    })
}
