//! One runner per subcommand. Each validates the ranges of its config,
//! calls into `polymer_core` and packs the outcome into an [`Artifact`].

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use polymer_core::coarse::{cone_density_test, surcharge_tail_test, ConeSpec, Outcome};
use polymer_core::disorder::{
    concentration_check, fractional_moment_test, quenched_lln_check, ratio_track_with, sinai_experiment, Verdict,
};
use polymer_core::ensembles::{enumerated_table, quenched_dp, DpOptions, Ensemble};
use polymer_core::environment::{Environment, TiltSpec};
use polymer_core::lattice::{direction_fan, LatticeBox, Site};
use polymer_core::lyapunov::{estimate_lyapunov, norm_checks, DisorderModel, FreeWalkNorm, LyapunovKind, LyapunovNorm};
use polymer_core::path::WeightParams;
use polymer_core::renewal::{
    annealed_lln_clt_check, build_irreducible_tables, calibrate_lambda, local_limit_check, renewal_limit,
    EffectiveStepLaw,
};

use crate::artifact::{Artifact, Estimate, Table};
use crate::config::{Checks, Config};

fn to_value<T: Serialize>(x: &T) -> Result<Value> {
    Ok(serde_json::to_value(x)?)
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn site_text(s: &Site, dim: usize) -> Vec<String> {
    s.coords(dim).iter().map(|c| c.to_string()).collect()
}

fn dim_ok(c: &mut Checks, what: &str, d: usize) {
    c.require((1..=3).contains(&d), format!("`{what}` must give a dimension in 1..=3, got {d}"));
}

fn verdict_text(v: Verdict) -> &'static str {
    match v {
        Verdict::WeakConsistent => "weak-consistent",
        Verdict::StrongConsistent => "strong-consistent",
        Verdict::Inconclusive => "inconclusive",
    }
}

pub fn run(cfg: &Config) -> Result<Artifact> {
    match cfg.command.as_str() {
        "env" => env(cfg),
        "partition" => partition(cfg),
        "lyapunov" => lyapunov(cfg),
        "decompose" => decompose(cfg),
        "renewal" => renewal(cfg),
        "clt" => clt(cfg),
        "disorder" => disorder(cfg),
        "fracmoment" => fracmoment(cfg),
        other => bail!("unknown command `{other}`"),
    }
}

fn env(cfg: &Config) -> Result<Artifact> {
    let (dist, dim, radius, tilt) = (cfg.dist("dist"), cfg.usize("dim"), cfg.usize("radius"), cfg.f64("tilt_delta"));
    let mut c = Checks::default();
    dim_ok(&mut c, "dim", dim);
    c.require(radius <= 200, "`radius` must be at most 200");
    c.finish()?;
    let bx = LatticeBox::centered(dim, radius as i32)?;
    let field = if tilt == 0.0 {
        Environment::sample(&dist, bx, cfg.seed())?
    } else {
        Environment::sample_tilted(&dist, TiltSpec { delta: tilt, region: bx }, bx, cfg.seed())?
    };
    let mut header: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
    header.push("value".into());
    let mut rows = Vec::new();
    let mut sum = 0.0;
    let mut sq = 0.0;
    let mut traps = 0usize;
    let mut finite = 0usize;
    for s in bx.sites() {
        let v = field.value(s).unwrap();
        let mut row = site_text(&s, dim);
        row.push(num(v));
        rows.push(row);
        if v.is_finite() {
            sum += v;
            sq += v * v;
            finite += 1;
        } else {
            traps += 1;
        }
    }
    let mean = sum / finite.max(1) as f64;
    let var = if finite > 1 { (sq - finite as f64 * mean * mean) / (finite - 1) as f64 } else { 0.0 };
    let result = json!({
        "dist": dist.to_string(),
        "box": bx.to_spec(),
        "sites": bx.len(),
        "traps": traps,
        "sample_mean": mean,
        "law_mean": dist.mean(),
        "tilt_delta": tilt,
    });
    Ok(Artifact::new(cfg, result)
        .with_table(Table { header, rows })
        .with_estimates(vec![Estimate::new("sample_mean", mean, (var.max(0.0) / finite.max(1) as f64).sqrt(), finite)]))
}

fn partition(cfg: &Config) -> Result<Artifact> {
    let (dist, beta, lambda, h, n) = (cfg.dist("dist"), cfg.f64("beta"), cfg.f64("lambda"), cfg.f64s("h"), cfg.usize("n"));
    let annealed = cfg.text("ensemble") == "annealed";
    let dim = h.len();
    let mut c = Checks::default();
    dim_ok(&mut c, "h", dim);
    c.require(beta >= 0.0, "`beta` must be >= 0");
    c.require(lambda >= 0.0, "`lambda` must be >= 0");
    if annealed {
        let cap = polymer_core::ensembles::enumeration_cap(dim.clamp(1, 3));
        c.require(n <= cap, format!("annealed tables are enumerated; `n` must be at most {cap} in d={dim}"));
    } else {
        c.require(n <= 400, "`n` must be at most 400");
    }
    c.finish()?;
    let p = WeightParams::new(beta, lambda, h.clone())?;
    let table = if annealed {
        enumerated_table(Ensemble::Annealed(&dist), &p, n)?
    } else {
        let bx = LatticeBox::centered(dim, n as i32 + 2)?;
        let field = Environment::sample(&dist, bx, cfg.seed())?;
        quenched_dp(&field, &p, n, &DpOptions::default())?
    };
    let log_totals: Vec<f64> = (0..=n).map(|m| table.log_total(m)).collect();
    let lz = log_totals[n];
    let mut header: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
    header.extend(["log_value".into(), "probability".into()]);
    let mut rows = Vec::new();
    let mut prob_sum = 0.0;
    for s in table.bx.sites() {
        let v = table.log_value(s, n).unwrap();
        if v == f64::NEG_INFINITY {
            continue;
        }
        let pr = (v - lz).exp();
        prob_sum += pr;
        let mut row = site_text(&s, dim);
        row.extend([num(v), num(pr)]);
        rows.push(row);
    }
    let result = json!({
        "ensemble": if annealed { "annealed" } else { "quenched" },
        "dist": dist.to_string(),
        "n": n,
        "log_partition": log_totals,
        "probability_sum": prob_sum,
        "endpoints": rows.len(),
    });
    Ok(Artifact::new(cfg, result)
        .with_table(Table { header, rows })
        .with_estimates(vec![Estimate::exact("log_partition", lz)]))
}

fn lyapunov(cfg: &Config) -> Result<Artifact> {
    let (dist, beta, lambda, dim) = (cfg.dist("dist"), cfg.f64("beta"), cfg.f64("lambda"), cfg.usize("dim"));
    let (fan, ns, replicas) = (cfg.usize("fan_height"), cfg.usizes("ns"), cfg.usize("replicas"));
    let mut c = Checks::default();
    dim_ok(&mut c, "dim", dim);
    c.require(lambda > 0.0, "`lambda` must be > 0");
    c.require(beta >= 0.0, "`beta` must be >= 0");
    c.require((1..=4).contains(&fan), "`fan_height` must lie in 1..=4");
    c.require(replicas >= 2, "`replicas` must be at least 2");
    c.require(ns.windows(2).all(|w| w[0] < w[1]) && ns.first().is_some_and(|&n| n > 0), "`ns` must be positive and increasing");
    c.finish()?;
    let model = DisorderModel::new(dist.clone(), beta)?;
    let kinds: Vec<LyapunovKind> = match cfg.text("kind") {
        "quenched" => vec![LyapunovKind::Quenched],
        "annealed" => vec![LyapunovKind::Annealed],
        _ => vec![LyapunovKind::Annealed, LyapunovKind::Quenched],
    };
    let mut by_kind = Vec::new();
    for &kind in &kinds {
        let ests = direction_fan(dim, fan as i32)
            .into_iter()
            .map(|d| estimate_lyapunov(kind, &model, lambda, d, dim, &ns, replicas, cfg.seed()))
            .collect::<polymer_core::Result<Vec<_>>>()?;
        by_kind.push((kind, ests));
    }
    let find = |k| by_kind.iter().find(|e| e.0 == k).map(|e| e.1.clone()).unwrap_or_default();
    let checks = norm_checks(&find(LyapunovKind::Annealed), &find(LyapunovKind::Quenched));
    let mut rows = Vec::new();
    let mut estimates = Vec::new();
    for (kind, ests) in &by_kind {
        let name = if *kind == LyapunovKind::Quenched { "quenched" } else { "annealed" };
        for e in ests {
            let dir: Vec<String> = e.direction.iter().map(|c| c.to_string()).collect();
            rows.push(vec![name.to_string(), dir.join(" "), num(e.value), num(e.stderr)]);
            estimates.push(Estimate::new(&format!("{name}[{}]", dir.join(" ")), e.value, e.stderr, replicas));
        }
    }
    let result = json!({
        "estimates": by_kind.iter().map(|(_, e)| to_value(e)).collect::<Result<Vec<_>>>()?,
        "norm_checks": to_value(&checks)?,
    });
    Ok(Artifact::new(cfg, result)
        .with_table(Table { header: vec!["kind".into(), "direction".into(), "value".into(), "stderr".into()], rows })
        .with_estimates(estimates))
}

fn parse_targets(text: &str, dim: usize) -> std::result::Result<Vec<Site>, String> {
    text.split(';')
        .map(|t| {
            let coords: std::result::Result<Vec<i32>, _> = t.split(',').map(|x| x.trim().parse::<i32>()).collect();
            match coords {
                Ok(c) if c.len() == dim => Ok(Site::new(&c)),
                _ => Err(format!("target `{t}` is not a {dim}-vector of integers")),
            }
        })
        .collect()
}

fn decompose(cfg: &Config) -> Result<Artifact> {
    let (dist, beta, lambda, h) = (cfg.dist("dist"), cfg.f64("beta"), cfg.f64("lambda"), cfg.f64s("h"));
    let dim = h.len();
    let quenched = cfg.text("ensemble") == "quenched";
    let mut c = Checks::default();
    dim_ok(&mut c, "h", dim);
    c.require(beta >= 0.0, "`beta` must be >= 0");
    let field;
    let ensemble = if quenched {
        let reach = polymer_core::ensembles::enumeration_cap(dim.clamp(1, 3)) as i32 + 2;
        let bx = LatticeBox::centered(dim.clamp(1, 3), reach)?;
        field = Environment::sample(&dist, bx, cfg.seed())?;
        Ensemble::Quenched(&field)
    } else {
        Ensemble::Annealed(&dist)
    };
    if cfg.text("test") == "density" {
        let (delta, ns) = (cfg.f64("delta"), cfg.usizes("ns"));
        c.require(delta > 0.0 && delta < 1.0, "`delta` must lie in (0, 1)");
        c.require(h.iter().any(|&x| x != 0.0), "`h` must be nonzero");
        c.finish()?;
        let cone = ConeSpec::free_walk(h.clone(), delta)?;
        let nmax = ns.iter().copied().max().unwrap_or(1);
        let look = cone.lookup(nmax as i32 + 1)?;
        let p = WeightParams::new(beta, 0.0, h.clone())?;
        let thr = cfg.f64("c");
        let rep = cone_density_test(ensemble, &p, &look, &ns, if thr > 0.0 { Some(thr) } else { None })?;
        let rows = rep.rows.iter().map(|r| vec![r.n.to_string(), num(r.mean_density), num(r.p_below)]).collect();
        let ests = rep.rows.iter().map(|r| Estimate::exact(&format!("mean_density[{}]", r.n), r.mean_density)).collect();
        return Ok(Artifact::new(cfg, to_value(&rep)?)
            .with_table(Table { header: vec!["n".into(), "mean_density".into(), "p_below".into()], rows })
            .with_estimates(ests));
    }
    let targets = parse_targets(cfg.text("targets"), dim);
    if let Err(e) = &targets {
        c.0.push(e.clone());
    }
    c.require(lambda > 0.0, "`lambda` must be > 0");
    c.require(beta == 0.0, "the surcharge test needs the exact norm; only beta = 0 is supported");
    c.require(cfg.f64("k") >= 0.0, "`k` must be >= 0");
    c.finish()?;
    let norm = FreeWalkNorm::new(dim, lambda)?;
    let k = match cfg.f64("k") {
        0.0 => 4.0 * norm.at_site(Site::axis(dim, 0, 1)),
        k => k,
    };
    let pairs: Vec<(Site, Vec<f64>)> = targets
        .unwrap()
        .into_iter()
        .map(|t| {
            let h = norm.dual_point(&t.to_f64(dim));
            (t, h)
        })
        .collect();
    let rep = surcharge_tail_test(ensemble, beta, lambda, &norm, &pairs, k, &cfg.f64s("eps"), cfg.usize("extra_len"))?;
    let rows = rep
        .rows
        .iter()
        .map(|r| {
            let t: Vec<String> = r.target.iter().map(|c| c.to_string()).collect();
            vec![t.join(" "), num(r.eps), num(r.p_lower), num(r.p_upper), num(r.bound), format!("{:?}", r.outcome)]
        })
        .collect();
    let header = ["target", "eps", "p_lower", "p_upper", "bound", "outcome"].map(String::from).to_vec();
    let outcomes: Vec<Outcome> = rep.rows.iter().map(|r| r.outcome).collect();
    let verdict = if outcomes.contains(&Outcome::Fail) {
        "fail"
    } else if outcomes.contains(&Outcome::Inconclusive) {
        "inconclusive"
    } else {
        "pass"
    };
    Ok(Artifact::new(cfg, to_value(&rep)?)
        .with_table(Table { header, rows })
        .with_verdict(verdict, verdict == "inconclusive"))
}

/// Step law named by the config, with a JSON account of how it was built.
fn step_law(cfg: &Config, c: &mut Checks) -> Result<(EffectiveStepLaw, Value)> {
    match cfg.text("law") {
        "geometric" => {
            let (dim, rho, mmax) = (cfg.usize("dim"), cfg.f64("rho"), cfg.usize("mmax"));
            dim_ok(c, "dim", dim);
            c.require((0.0..1.0).contains(&rho), "`rho` must lie in [0, 1)");
            c.require(mmax >= 1, "`mmax` must be >= 1");
            std::mem::take(c).finish()?;
            let law = EffectiveStepLaw::geometric(dim, rho, mmax)?;
            let info = json!({"law": "geometric", "dim": dim, "rho": rho, "mmax": mmax});
            Ok((law, info))
        }
        "degenerate" => {
            let dim = cfg.usize("dim");
            dim_ok(c, "dim", dim);
            std::mem::take(c).finish()?;
            Ok((EffectiveStepLaw::degenerate(dim)?, json!({"law": "degenerate", "dim": dim})))
        }
        _ => {
            let (dist, beta, h, delta, nmax) = (cfg.dist("dist"), cfg.f64("beta"), cfg.f64s("h"), cfg.f64("delta"), cfg.usize("nmax"));
            dim_ok(c, "h", h.len());
            c.require(beta >= 0.0, "`beta` must be >= 0");
            c.require(delta > 0.0 && delta < 1.0, "`delta` must lie in (0, 1)");
            c.require(h.iter().any(|&x| x != 0.0), "`h` must be nonzero");
            c.require((1..=16).contains(&nmax), "`nmax` must lie in 1..=16");
            c.require(cfg.bool("calibrate"), "annealed step laws need `calibrate = true`");
            std::mem::take(c).finish()?;
            let cone = ConeSpec::free_walk(h.clone(), delta)?.lookup(nmax as i32 + 1)?;
            let table = build_irreducible_tables(&dist, beta, &cone, nmax)?;
            let (cal, info) = calibrate_lambda(&table, 1e-15, cfg.f64("max_deficit"))?;
            let residual = cal.renewal_residual()?;
            let law = EffectiveStepLaw::from_table(&cal)?;
            let meta = json!({
                "law": "annealed",
                "dist": dist.to_string(),
                "beta": beta,
                "h": h,
                "delta": delta,
                "nmax": nmax,
                "entries": cal.entries.len(),
                "calibration": to_value(&info)?,
                "renewal_residual": residual,
                "lambda_free": FreeWalkNorm::lambda_of(&h),
            });
            Ok((law, meta))
        }
    }
}

fn renewal(cfg: &Config) -> Result<Artifact> {
    let mut c = Checks::default();
    let (law, meta) = step_law(cfg, &mut c)?;
    let asym = renewal_limit(&law, None)?;
    let fm = law.length_marginal();
    let last = asym.fit_range.max(fm.len() - 1).min(asym.t_n.len() - 1);
    let rows = (0..=last)
        .map(|n| vec![n.to_string(), num(fm.get(n).copied().unwrap_or(0.0)), num(asym.t_n[n]), num(asym.gap[n])])
        .collect();
    let result = json!({
        "law": meta,
        "kappa": asym.kappa,
        "limit": asym.limit,
        "asymptotics": to_value(&asym)?,
        "total_mass": law.total,
    });
    Ok(Artifact::new(cfg, result)
        .with_table(Table { header: ["n", "f_n", "t_n", "gap"].map(String::from).to_vec(), rows })
        .with_estimates(vec![Estimate::exact("kappa", asym.kappa)]))
}

fn parse_alphas(text: &str, dim: usize) -> std::result::Result<Vec<Vec<f64>>, String> {
    if text == "auto" {
        let mut out = Vec::new();
        for i in 0..dim {
            for k in 1..=8 {
                let mut a = vec![0.0; dim];
                a[i] = 0.25 * k as f64;
                out.push(a);
            }
        }
        if dim >= 2 {
            for k in 1..=4 {
                out.push((0..dim).map(|_| 0.25 * k as f64).collect());
            }
        }
        return Ok(out);
    }
    text.split(';')
        .map(|t| {
            let v: std::result::Result<Vec<f64>, _> = t.split(',').map(|x| x.trim().parse::<f64>()).collect();
            match v {
                Ok(v) if v.len() == dim => Ok(v),
                _ => Err(format!("alpha `{t}` is not a {dim}-vector")),
            }
        })
        .collect()
}

fn clt(cfg: &Config) -> Result<Artifact> {
    let mut c = Checks::default();
    let ns = cfg.usizes("ns");
    c.require(ns.iter().all(|&n| (1..=64).contains(&n)), "`ns` must lie in 1..=64");
    let dim = if cfg.text("law") == "annealed" { cfg.f64s("h").len() } else { cfg.usize("dim") };
    let alphas = parse_alphas(cfg.text("alphas"), dim);
    if let Err(e) = &alphas {
        c.0.push(e.clone());
    }
    let (law, meta) = step_law(cfg, &mut c)?;
    let rep = annealed_lln_clt_check(&law, &ns, &alphas.unwrap())?;
    let local = match cfg.usize("local_n") {
        0 => None,
        n => Some(local_limit_check(&law, n, cfg.usize("local_radius") as i32)?),
    };
    let rows = rep
        .rows
        .iter()
        .map(|r| vec![r.n.to_string(), num(r.t_n), num(r.lln_gap), num(r.lln_relative_gap), num(r.clt_sup_gap)])
        .collect();
    let result = json!({"law": meta, "clt": to_value(&rep)?, "local_limit": to_value(&local)?});
    let header = ["n", "t_n", "lln_gap", "lln_relative_gap", "clt_sup_gap"].map(String::from).to_vec();
    let ests = rep.rows.iter().map(|r| Estimate::exact(&format!("clt_sup_gap[{}]", r.n), r.clt_sup_gap)).collect();
    Ok(Artifact::new(cfg, result).with_table(Table { header, rows }).with_estimates(ests))
}

fn grid_ok(c: &mut Checks, ns: &[usize]) {
    c.require(ns.len() >= 2, "`ns` needs at least two points");
    c.require(ns.windows(2).all(|w| w[0] < w[1]) && ns.first().is_some_and(|&n| n > 0), "`ns` must be positive and increasing");
}

fn disorder(cfg: &Config) -> Result<Artifact> {
    let (dist, beta, h, lambda) = (cfg.dist("dist"), cfg.f64("beta"), cfg.f64s("h"), cfg.f64("lambda"));
    let (ns, replicas, seed) = (cfg.usizes("ns"), cfg.usize("replicas"), cfg.seed());
    let dim = h.len();
    let mut c = Checks::default();
    dim_ok(&mut c, "h", dim);
    c.require(beta >= 0.0, "`beta` must be >= 0");
    match cfg.text("test") {
        "ratio" => {
            grid_ok(&mut c, &ns);
            c.require(replicas >= 1, "`replicas` must be >= 1");
            c.require(ns.last().is_some_and(|&n| n <= 400), "`ns` must stay below 400");
            c.finish()?;
            let rep = ratio_track_with(&dist, &h, beta, &ns, replicas, seed, cfg.f64("weak_width"))?;
            let rows = rep.rows.iter().map(|r| vec![r.n.to_string(), num(r.mean), num(r.stderr), num(r.min), num(r.max)]).collect();
            let se = rep.slope.width() / 3.92;
            Ok(Artifact::new(cfg, to_value(&rep)?)
                .with_table(Table { header: ["n", "mean_log_ratio", "stderr", "min", "max"].map(String::from).to_vec(), rows })
                .with_estimates(vec![Estimate::new("slope", rep.slope.slope, se, replicas)])
                .with_verdict(verdict_text(rep.verdict), rep.verdict == Verdict::Inconclusive))
        }
        "concentration" => {
            let dir = cfg.f64s("direction");
            grid_ok(&mut c, &ns);
            c.require(lambda > 0.0, "`lambda` must be > 0");
            c.require(replicas >= 2, "`replicas` must be >= 2");
            c.require(dir.len() == dim, "`direction` and `h` must have the same length");
            c.require(dir.iter().all(|x| x.fract() == 0.0) && dir.iter().any(|&x| x != 0.0), "`direction` must be a nonzero integer vector");
            c.finish()?;
            let d: Vec<i32> = dir.iter().map(|&x| x as i32).collect();
            let rep = concentration_check(&dist, beta, lambda, Site::new(&d), dim, &ns, replicas, seed)?;
            let rows = rep.rows.iter().map(|r| vec![r.n.to_string(), num(r.mean), num(r.variance), num(r.ratio)]).collect();
            let ests = rep
                .rows
                .iter()
                .map(|r| Estimate::new(&format!("variance[{}]", r.n), r.variance, r.variance * (2.0 / (replicas as f64 - 1.0)).sqrt(), replicas))
                .collect();
            let inconclusive = rep.verdict == Outcome::Inconclusive;
            let v = format!("{:?}", rep.verdict).to_lowercase();
            Ok(Artifact::new(cfg, to_value(&rep)?)
                .with_table(Table { header: ["n", "mean", "variance", "ratio"].map(String::from).to_vec(), rows })
                .with_estimates(ests)
                .with_verdict(&v, inconclusive))
        }
        "sinai" => {
            let (delta, nmax) = (cfg.f64("delta"), cfg.usize("nmax"));
            c.require(delta > 0.0 && delta < 1.0, "`delta` must lie in (0, 1)");
            c.require((1..=12).contains(&nmax), "`nmax` must lie in 1..=12");
            c.require(h.iter().any(|&x| x != 0.0), "`h` must be nonzero");
            c.require(replicas >= 1, "`replicas` must be >= 1");
            c.finish()?;
            let cone = ConeSpec::free_walk(h.clone(), delta)?.lookup(nmax as i32 + 2)?;
            let led = sinai_experiment(&dist, beta, &cone, lambda, nmax, replicas, seed, cfg.f64("tol"))?;
            let rows = led
                .replicas
                .iter()
                .enumerate()
                .flat_map(|(r, rep)| {
                    (0..=led.nmax).map(move |n| vec![r.to_string(), n.to_string(), num(rep.t_quenched[n]), num(rep.s_track[n]), num(rep.epsilon[n])])
                })
                .collect();
            Ok(Artifact::new(cfg, to_value(&led)?)
                .with_table(Table { header: ["replica", "n", "t_quenched", "s_n", "epsilon"].map(String::from).to_vec(), rows })
                .with_estimates(vec![Estimate::exact("max_identity_residual", led.max_identity_residual)]))
        }
        _ => {
            let delta = cfg.f64("delta");
            c.require(delta > 0.0 && delta < 1.0, "`delta` must lie in (0, 1)");
            c.require(h.iter().any(|&x| x != 0.0), "`h` must be nonzero");
            c.require(ns.iter().all(|&n| (1..=polymer_core::ensembles::enumeration_cap(dim.clamp(1, 3))).contains(&n)), "`ns` must stay within the enumeration cap");
            c.require(replicas >= 1, "`replicas` must be >= 1");
            c.finish()?;
            let rep = quenched_lln_check(&dist, &h, beta, delta, &ns, replicas, seed, None)?;
            let rows = rep
                .rows
                .iter()
                .map(|r| vec![r.n.to_string(), num(r.annealed_gap), num(r.max_deviation), num(r.mean_deviation), num(r.deviation_stderr)])
                .collect();
            let ests = rep.rows.iter().map(|r| Estimate::new(&format!("mean_deviation[{}]", r.n), r.mean_deviation, r.deviation_stderr, replicas)).collect();
            Ok(Artifact::new(cfg, to_value(&rep)?)
                .with_table(Table { header: ["n", "annealed_gap", "max_deviation", "mean_deviation", "stderr"].map(String::from).to_vec(), rows })
                .with_estimates(ests))
        }
    }
}

fn fracmoment(cfg: &Config) -> Result<Artifact> {
    let (dist, beta, lambda, alphas) = (cfg.dist("dist"), cfg.f64("beta"), cfg.f64("lambda"), cfg.f64s("alpha"));
    let (ns, replicas, eps) = (cfg.usizes("ns"), cfg.usize("replicas"), cfg.f64("epsilon"));
    let mut c = Checks::default();
    c.require(alphas.iter().all(|&a| a > 0.0 && a < 1.0), "every `alpha` must lie in (0, 1)");
    c.require(lambda > 0.0, "`lambda` must be > 0");
    c.require(eps > 0.0 && eps < 1.0 / 3.0, "`epsilon` must lie in (0, 1/3)");
    c.require(replicas >= 2, "`replicas` must be >= 2");
    grid_ok(&mut c, &ns);
    c.finish()?;
    let mut reports = Vec::new();
    for &a in &alphas {
        reports.push(fractional_moment_test(&dist, beta, lambda, a, &ns, replicas, eps, cfg.seed()).with_context(|| format!("alpha = {a}"))?);
    }
    // The order whose slope interval reaches least far above zero.
    let best = reports.iter().enumerate().min_by(|a, b| a.1.slope.ci[1].total_cmp(&b.1.slope.ci[1])).map(|e| e.0).unwrap();
    let chosen = &reports[best];
    let mut rows = Vec::new();
    for r in &reports {
        for (m, t) in r.rows.iter().zip(&r.tilt) {
            rows.push(vec![num(r.alpha), m.n.to_string(), num(m.log_moment), num(m.stderr), num(t.cost_exact), num(t.drop), num(t.holder_bound)]);
        }
    }
    let mut ests: Vec<Estimate> = Vec::new();
    for r in &reports {
        ests.push(Estimate::new(&format!("slope[alpha={}]", r.alpha), r.slope.slope, r.slope.width() / 3.92, replicas));
    }
    let result = json!({
        "reports": reports.iter().map(to_value).collect::<Result<Vec<_>>>()?,
        "best_alpha": chosen.alpha,
        "slope_verdict": verdict_text(chosen.slope_verdict),
    });
    let header = ["alpha", "n", "log_moment", "stderr", "cost_exact", "drop", "holder_bound"].map(String::from).to_vec();
    Ok(Artifact::new(cfg, result)
        .with_table(Table { header, rows })
        .with_estimates(ests)
        .with_verdict(verdict_text(chosen.verdict), chosen.verdict == Verdict::Inconclusive))
}
