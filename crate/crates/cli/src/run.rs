use crate::config::{ConfigError, RunConfig, Subcommand};
use serde_json::json;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use tcfou_core::fou_stats::{moment_limit, moments_subordinated};
use tcfou_core::fpe::*;
use tcfou_core::simulate::*;
use tcfou_core::stable::{inverse_stable_density_f, stable_density_g};
use tcfou_core::subordination::{subordinate, Tail, TimeGridFunction};
use tcfou_core::{BernsteinSpec, QuadratureConfig};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Core(#[from] tcfou_core::Error),
    #[error("{0}")]
    Io(String),
}

/// Whether the run's property held; only `verify` can report false.
pub type Verdict = bool;

pub fn run(cfg: &RunConfig) -> Result<Verdict, RunError> {
    match cfg.subcommand {
        Subcommand::Simulate => simulate(cfg).map(|_| true),
        Subcommand::Density => density(cfg).map(|_| true),
        Subcommand::Subordinate => subordinate_cmd(cfg).map(|_| true),
        Subcommand::Moments => moments(cfg).map(|_| true),
        Subcommand::Verify => verify(cfg),
    }
}

/// Writes to stdout for `-`, otherwise to a temp file in the target
/// directory renamed into place.
fn emit(out: &str, bytes: &[u8]) -> Result<(), RunError> {
    if out == "-" {
        let mut so = std::io::stdout().lock();
        return so.write_all(bytes).and_then(|_| so.flush()).map_err(|e| RunError::Io(format!("cannot write stdout: {e}")));
    }
    let path = Path::new(out);
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let fail = |e: &dyn std::fmt::Display| RunError::Io(format!("cannot write {out}: {e}"));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| fail(&e))?;
    tmp.write_all(bytes).map_err(|e| fail(&e))?;
    tmp.persist(path).map_err(|e| fail(&e.error))?;
    Ok(())
}

fn csv(cfg: &RunConfig, header: &str, rows: impl FnOnce(&mut String)) -> Result<(), RunError> {
    let mut s = cfg.metadata_lines();
    s.push_str(header);
    s.push('\n');
    rows(&mut s);
    emit(cfg.raw("out"), s.as_bytes())
}

fn simulate(cfg: &RunConfig) -> Result<(), RunError> {
    let (hurst, theta) = (cfg.f64("hurst")?, cfg.f64("theta")?);
    let spec = cfg.spec("phi")?;
    let grid = uniform_grid(cfg.f64("t-max")?, cfg.usize("n-steps")?)?;
    let (paths, seed) = (cfg.usize("paths")?, cfg.u64("seed")?);
    let y_step = cfg.f64("y-step")?;
    let ens = match cfg.raw("process") {
        "fbm" => sample_fbm(hurst, &grid, paths, seed)?,
        "fou" => sample_fou(hurst, theta, &grid, paths, seed)?,
        "inv-sub" => sample_inverse_subordinator(&spec, &grid, paths, seed, y_step)?,
        "tcfou" => {
            let opts = TcfouOptions { y_step, aux_step: cfg.f64("aux-step")? };
            sample_tcfou(hurst, theta, &spec, &grid, paths, seed, opts)?
        }
        p => return Err(ConfigError(format!("`process` must be one of fbm, fou, inv-sub, tcfou; got `{p}`")).into()),
    };
    if ens.cholesky_fallback {
        eprintln!("warning: circulant embedding was not nonnegative; used Cholesky sampling");
    }
    match cfg.raw("format") {
        "csv" => {
            let mut body = cfg.metadata_lines().into_bytes();
            ens.write_csv(&mut body).map_err(|e| RunError::Io(e.to_string()))?;
            emit(cfg.raw("out"), &body)
        }
        "json" => {
            let doc = json!({ "config": cfg.to_json(), "ensemble": ens });
            emit(cfg.raw("out"), doc.to_string().as_bytes())
        }
        f => Err(ConfigError(format!("`format` must be csv or json, got `{f}`")).into()),
    }
}

fn stable_alpha(spec: &BernsteinSpec) -> Result<f64, RunError> {
    if !spec.is_stable() {
        return Err(tcfou_core::Error::Unsupported("closed density evaluation needs a stable:<alpha> spec".into()).into());
    }
    Ok(spec.alpha())
}

fn density(cfg: &RunConfig) -> Result<(), RunError> {
    let alpha = stable_alpha(&cfg.spec("phi")?)?;
    match cfg.raw("kind") {
        "f" => {
            let ts = cfg.f64_list("t")?;
            let (s_max, n) = (cfg.f64("s-max")?, cfg.usize("n-s")?);
            if s_max <= 0.0 || n < 2 {
                return Err(ConfigError("`s-max` must be positive and `n-s` at least 2".into()).into());
            }
            let s_grid = uniform_points(0.0, s_max, n);
            let mut rows = Vec::with_capacity(ts.len() * s_grid.len());
            for &t in &ts {
                for &s in &s_grid {
                    rows.push((s, t, inverse_stable_density_f(alpha, s, t)?));
                }
            }
            csv(cfg, "s,t,f", |out| rows.iter().for_each(|(s, t, f)| writeln!(out, "{s},{t},{f}").unwrap()))
        }
        "g" => {
            let (x_max, n) = (cfg.f64("x-max")?, cfg.usize("n-x")?);
            if x_max <= 0.0 || n < 1 {
                return Err(ConfigError("`x-max` must be positive and `n-x` at least 1".into()).into());
            }
            let rows = (1..=n)
                .map(|k| {
                    let x = x_max * k as f64 / n as f64;
                    stable_density_g(alpha, x).map(|g| (x, g))
                })
                .collect::<tcfou_core::Result<Vec<_>>>()?;
            csv(cfg, "x,g", |out| rows.iter().for_each(|(x, g)| writeln!(out, "{x},{g}").unwrap()))
        }
        k => Err(ConfigError(format!("`kind` must be f or g, got `{k}`")).into()),
    }
}

fn parse_tail(tok: &str) -> Result<Tail, ConfigError> {
    let bad = || ConfigError(format!("`tail` must be constant:<c>, power:<p> or forbidden; got `{tok}`"));
    let num = |s: &str| s.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(bad);
    match tok.split(':').collect::<Vec<_>>().as_slice() {
        ["forbidden"] => Ok(Tail::Forbidden),
        ["constant", c] => Ok(Tail::Constant(num(c)?)),
        ["power", p] => Ok(Tail::Power(num(p)?)),
        _ => Err(bad()),
    }
}

/// Reads `s,value` rows; `#` lines and a leading header are skipped.
fn read_samples(path: &str) -> Result<(Vec<f64>, Vec<f64>), RunError> {
    let text = std::fs::read_to_string(path).map_err(|e| RunError::Io(format!("cannot read {path}: {e}")))?;
    let (mut s, mut v) = (Vec::new(), Vec::new());
    let mut seen_header = false;
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !seen_header && line.replace(' ', "") == "s,value" {
            seen_header = true;
            continue;
        }
        seen_header = true;
        let parsed = line.split_once(',').and_then(|(a, b)| Some((a.trim().parse::<f64>().ok()?, b.trim().parse::<f64>().ok()?)));
        let Some((a, b)) = parsed else {
            return Err(ConfigError(format!("{path} line {}: expected `s,value`, got `{line}`", no + 1)).into());
        };
        s.push(a);
        v.push(b);
    }
    Ok((s, v))
}

fn subordinate_cmd(cfg: &RunConfig) -> Result<(), RunError> {
    let spec = cfg.spec("phi")?;
    let tail = parse_tail(cfg.raw("tail"))?;
    let (grid, values) = read_samples(cfg.raw("input"))?;
    let v = TimeGridFunction::new(grid, values, tail)?;
    let quad = QuadratureConfig::default();
    let rows = cfg.f64_list("t")?.into_iter().map(|t| subordinate(&v, &spec, t, &quad).map(|y| (t, y))).collect::<tcfou_core::Result<Vec<_>>>()?;
    csv(cfg, "t,value", |out| rows.iter().for_each(|(t, y)| writeln!(out, "{t},{y}").unwrap()))
}

fn moments(cfg: &RunConfig) -> Result<(), RunError> {
    let (hurst, theta, spec) = (cfg.f64("hurst")?, cfg.f64("theta")?, cfg.spec("phi")?);
    let quad = QuadratureConfig::default();
    let orders = cfg
        .raw("n")
        .split(',')
        .map(|s| s.trim().parse::<u32>().map_err(|_| ConfigError(format!("`n` must list positive integers, got `{s}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    let ts = cfg.f64_list("t")?;
    let mut rows = Vec::new();
    for &n in &orders {
        let limit = moment_limit(n, hurst, theta);
        for &t in &ts {
            let value = moments_subordinated(n, hurst, theta, &spec, t, &quad)?;
            rows.push((n, t, value, limit));
        }
    }
    csv(cfg, "n,t,value,limit,ratio", |out| {
        rows.iter().for_each(|(n, t, v, l)| writeln!(out, "{n},{t},{v},{l},{}", v / l).unwrap())
    })
}

fn report(cfg: &RunConfig, probes: serde_json::Value, pass: bool, extra: serde_json::Value) -> Result<Verdict, RunError> {
    let mut doc = json!({ "check": cfg.raw("check"), "config": cfg.to_json(), "probes": probes, "pass": pass });
    if let (Some(d), Some(e)) = (doc.as_object_mut(), extra.as_object()) {
        d.extend(e.clone());
    }
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| RunError::Io(e.to_string()))?;
    text.push('\n');
    emit(cfg.raw("out"), text.as_bytes())?;
    Ok(pass)
}

/// Uniform steps of dt to t = 2, then steps of 10 dt to t = 40.
fn graded_times(dt: f64) -> Vec<f64> {
    let mut t = uniform_points(0.0, 2.0, (2.0 / dt).round() as usize + 1);
    let n = (38.0 / (10.0 * dt)).round() as usize;
    t.extend((1..=n).map(|k| 2.0 + 38.0 * k as f64 / n as f64));
    t
}

fn verify(cfg: &RunConfig) -> Result<Verdict, RunError> {
    let (hurst, theta, spec) = (cfg.f64("hurst")?, cfg.f64("theta")?, cfg.spec("phi")?);
    let quad = QuadratureConfig::default();
    let p = PhDensity::new(hurst, theta)?;
    match cfg.raw("check") {
        "genfp" => {
            let probes: Vec<(f64, f64)> =
                [-2.0, -0.5, 0.2, 0.5, 1.0, 2.0].iter().flat_map(|&x| [0.2, 0.5, 1.0, 2.0].map(|t| (x, t))).collect();
            let level = ResidualLevel::refined(cfg.usize("level")?);
            let r = generalized_fp_residual(&p, &spec, hurst, theta, &probes, level)?;
            let max = r.iter().fold(0.0f64, |m, q| m.max(q.residual.abs()));
            let list: Vec<_> = r.iter().map(|q| json!({ "x": q.x, "t": q.t, "residual": q.residual })).collect();
            report(cfg, list.into(), max < 1e-3, json!({ "max_residual": max, "tolerance": 1e-3 }))
        }
        "mild" => {
            let r = mild_solution_residual(&p, hurst, theta, &[0.5, 1.0, 2.0], &[-1.0, -0.5, 0.5, 1.0], &quad)?;
            let max = r.iter().fold(0.0f64, |m, q| m.max(q.residual.abs()));
            let list: Vec<_> = r.iter().map(|q| json!({ "x": q.x, "lambda": q.lambda, "residual": q.residual })).collect();
            report(cfg, list.into(), max < 1e-4, json!({ "max_residual": max, "tolerance": 1e-4 }))
        }
        "maxprin" => {
            let (a, b, t_max) = (0.2, 2.0, 2.0);
            let field = subordinate_field(&p, &spec, &uniform_points(a, b, 37), &uniform_points(0.0, t_max, 41), &quad)?;
            let rep = max_principle_check(&field, a, b, t_max);
            // locate the interior maximum for the probe entry
            let (mut best, mut at) = (f64::NEG_INFINITY, (0.0, 0.0));
            for j in 1..field.n_t() {
                for i in 1..field.n_x() - 1 {
                    if field.at(j, i) > best {
                        best = field.at(j, i);
                        at = (field.x_grid()[i], field.t_grid()[j]);
                    }
                }
            }
            let probe = json!([{ "x": at.0, "t": at.1, "residual": rep.interior_max - rep.boundary_max }]);
            report(cfg, probe, rep.pass, json!({ "interior_max": rep.interior_max, "boundary_max": rep.boundary_max }))
        }
        "unique" => {
            let ph = Arc::new(p);
            let (pl, pr) = (ph.clone(), ph.clone());
            let data = CylinderData {
                hurst,
                theta,
                a: 0.2,
                b: 2.0,
                t_end: 40.0,
                init: Arc::new(|_| 0.0),
                left: Arc::new(move |t| pl.value(0.2, t)),
                right: Arc::new(move |t| pr.value(2.0, t)),
            };
            let coarse = Discretization { n_x: 91, t_grid: graded_times(0.01) };
            let fine = Discretization { n_x: 181, t_grid: graded_times(0.005) };
            let gaps = uniqueness_probe((&data, &coarse), (&data, &fine), &spec, &[0.5, 1.0, 1.5], &[0.5, 1.0, 2.0], &quad)?;
            let max = gaps.iter().fold(0.0f64, |m, g| m.max(g.gap));
            let list: Vec<_> = gaps.iter().map(|g| json!({ "x": g.x, "t": g.t, "residual": g.gap })).collect();
            report(cfg, list.into(), max < 1e-3, json!({ "max_gap": max, "tolerance": 1e-3 }))
        }
        "subordination" => {
            // the KDE estimates S_Phi applied to p_H smoothed by the kernel, a
            // Gaussian whose variance grows by h^2
            let h = 0.1;
            let smoothed = PhDensity::with_initial_variance(hurst, theta, h * h)?;
            let ens = sample_tcfou(hurst, theta, &spec, &[0.0, 1.0, 2.0], cfg.usize("paths")?, cfg.u64("seed")?, TcfouOptions::default())?;
            let mut list = Vec::new();
            let mut worst = 0.0f64;
            for (x, t) in [(-0.5, 1.0), (0.5, 1.0), (-1.0, 2.0), (1.0, 2.0)] {
                let (est, se) = kde(&ens.column(ens.time_index(t)), x, h);
                let q = subordinate(&Section::new(&smoothed, x), &spec, t, &quad)?;
                let z = (est - q).abs() / se;
                worst = worst.max(z);
                list.push(json!({ "x": x, "t": t, "residual": est - q, "kde": est, "se": se, "quadrature": q }));
            }
            report(cfg, list.into(), worst < 3.0, json!({ "max_standard_errors": worst, "bandwidth": h }))
        }
        c => Err(ConfigError(format!("`check` must be one of genfp, mild, maxprin, unique, subordination; got `{c}`")).into()),
    }
}
