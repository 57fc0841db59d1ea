use std::fs;
use std::path::Path;

use hrv_core::group::SignGroup;
use hrv_core::levelset::{find_xi_star, trace_level_set, write_trace_csv, CriticalPoint, LevelSetError, DEFAULT_STEP};
use hrv_core::linalg::Vec2;
use hrv_core::mc::{
    joint_exceedance_prob, observed_sign_group, simulate_stationary, walk_box_prob, write_cache, write_csv, IsConfig,
    McError, SampleBatch, SimulationConfig,
};
use hrv_core::mgf::{assess_model, CheckOptions, Status};
use hrv_core::mgf::{tail_indices, MgfError, PhiEvaluator, TailIndices};
use hrv_core::models::{read_config, Config, ConfigError, WalkConfig};
use hrv_core::renewal::{
    carlsson_bound_check, group_renewal_estimate, GaussianIncrements, Rect, RenewalConfig, RenewalError,
};
use hrv_core::rng::with_workers;
use hrv_core::tails::{
    joint_tail_scan, k_invariance_check, marginal_tail_scan, parse_t_grid, radius_quantile, spectral_measure,
    JointSource, ScanResult, TailError,
};
use hrv_core::ModelSpec;
use serde_json::{json, Value};

use crate::output::{OutDir, SCHEMA_VERSION};
use crate::svg::{Plot, Series};
use crate::{CliError, Common, ScanMode, TailScanArgs};

/// Relative band logged for the renewal decade ratio.
const STABILITY_BAND: (f64, f64) = (0.85, 1.15);

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<MgfError> for CliError {
    fn from(e: MgfError) -> Self {
        match e {
            MgfError::Model(m) => CliError::Config(m.to_string()),
            MgfError::NoRoot { .. } => CliError::Precondition(format!("NoRoot: {e}")),
            other => CliError::Precondition(other.to_string()),
        }
    }
}

impl From<LevelSetError> for CliError {
    fn from(e: LevelSetError) -> Self {
        match e {
            LevelSetError::Mgf(m) => m.into(),
            other => CliError::Precondition(other.to_string()),
        }
    }
}

impl From<McError> for CliError {
    fn from(e: McError) -> Self {
        match e {
            McError::InvalidConfig(m) => CliError::Config(m),
            McError::Mgf(m) => m.into(),
            McError::Model(m) => CliError::Config(m.to_string()),
            other => CliError::Precondition(other.to_string()),
        }
    }
}

impl From<TailError> for CliError {
    fn from(e: TailError) -> Self {
        match e {
            TailError::InvalidGrid(_) => CliError::Config(e.to_string()),
            TailError::Mc(m) => m.into(),
            other => CliError::Precondition(other.to_string()),
        }
    }
}

impl From<RenewalError> for CliError {
    fn from(e: RenewalError) -> Self {
        match e {
            RenewalError::Invalid(_) => CliError::Config(e.to_string()),
            other => CliError::Precondition(other.to_string()),
        }
    }
}

fn load(common: &Common) -> Result<(Config, u64), CliError> {
    let cfg = read_config(&common.config)?;
    let seed = common.seed.or(cfg.seed()).unwrap_or(0);
    Ok((cfg, seed))
}

fn load_model(common: &Common) -> Result<(ModelSpec, u64), CliError> {
    match load(common)? {
        (Config::Model(spec), seed) => Ok((spec, seed)),
        (Config::Walk { .. }, _) => Err(CliError::Config(
            "this command needs a model family, not GaussianWalk".into(),
        )),
    }
}

/// Runs `body` on the requested worker pool and always writes the manifest.
fn run(
    common: &Common,
    command: &str,
    seed: u64,
    body: impl FnOnce(&mut OutDir) -> Result<(), CliError> + Send,
) -> Result<(), CliError> {
    let mut out = OutDir::create(&common.out, command, Some(&common.config), seed, common.workers)?;
    let result = with_workers(common.workers, || body(&mut out));
    out.finish()?;
    result
}

fn header(command: &str, seed: u64) -> Value {
    json!({ "schema_version": SCHEMA_VERSION, "command": command, "seed": seed })
}

fn model_header(command: &str, spec: &ModelSpec, seed: u64) -> Value {
    let mut h = header(command, seed);
    h["model"] = spec.params_json();
    h["fingerprint"] = json!(spec.fingerprint());
    h
}

fn certified(ev: &PhiEvaluator) -> Result<CriticalPoint, CliError> {
    let cp = find_xi_star(ev, 1e-10)?;
    if !cp.certified.all() {
        return Err(CliError::Precondition(format!(
            "NotFound: critical point not certified: {:?}",
            cp.certified
        )));
    }
    Ok(cp)
}

pub fn analyze(common: &Common, n: usize) -> Result<(), CliError> {
    let (spec, seed) = load_model(common)?;
    run(common, "analyze", seed, |out| {
        let mut report = model_header("analyze", &spec, seed);
        let opts = CheckOptions { n, seed };
        let (ti, assumptions) = out.time("assumptions", || assess_model(&spec, &opts));
        report["assumptions"] = json!(assumptions);
        let Some(ti) = ti else {
            let err = tail_indices(&spec, 1e-12)
                .err()
                .map(CliError::from)
                .unwrap_or_else(|| CliError::Precondition("NoRoot".into()));
            report["error"] = json!(err.to_string());
            out.json("report.json", &report)?;
            return Err(err);
        };
        report["alpha"] = json!(ti.alpha);
        report["tail_indices"] = json!(ti);
        let ev = PhiEvaluator::auto(&spec, &ti)?;
        let cp = out.time("critical_point", || find_xi_star(&ev, 1e-10));
        let trace = out.time("level_set", || trace_level_set(&ev, DEFAULT_STEP));
        let trace = match trace {
            Ok(t) => Some(t),
            Err(LevelSetError::OpenArc { partial, exit }) => {
                report["level_set_error"] = json!(format!("level set leaves the unit square at {exit:?}"));
                Some(*partial)
            }
            Err(e) => {
                report["level_set_error"] = json!(e.to_string());
                None
            }
        };
        let mut series = Vec::new();
        if let Some(tr) = &trace {
            out.write_with("level_set.csv", |w| write_trace_csv(tr, w))?;
            report["level_set"] = json!({ "points": tr.points.len(), "endpoints": tr.endpoints, "step": tr.step });
            series.push(Series::line(
                "phi = 1",
                tr.points.iter().map(|p| (p[0], p[1])).collect(),
            ));
        }
        series.push(Series::line("xi1 + xi2 = 1", vec![(1.0, 0.0), (0.0, 1.0)]));
        let outcome = match cp {
            Ok(cp) => {
                report["xi_star"] = json!(cp.xi_star);
                report["h"] = json!(cp.h);
                report["certified"] = json!(cp.certified.all());
                series.push(Series::markers("xi*", vec![(cp.xi_star[0], cp.xi_star[1])]));
                let ok = cp.certified.all();
                report["critical_point"] = json!(cp);
                if ok {
                    Ok(())
                } else {
                    Err(CliError::Precondition("NotFound: critical point not certified".into()))
                }
            }
            Err(e) => {
                let e = CliError::from(e);
                report["certified"] = json!(false);
                report["error"] = json!(e.to_string());
                Err(e)
            }
        };
        let plot = Plot {
            title: "Level set D = {phi = 1}".into(),
            x_label: "xi1".into(),
            y_label: "xi2".into(),
            log_x: false,
            log_y: false,
            series,
        };
        out.write("level_set.svg", plot.render().as_bytes())?;
        out.json("report.json", &report)?;
        outcome
    })
}

/// Tail indices, or unit exponents for deterministic models without a root.
fn indices_for_sampling(spec: &ModelSpec) -> Result<(TailIndices, bool), CliError> {
    match tail_indices(spec, 1e-12) {
        Ok(ti) => Ok((ti, false)),
        Err(MgfError::NoRoot { .. }) if spec.is_deterministic() => Ok((TailIndices::given([1.0; 2]), true)),
        Err(e) => Err(e.into()),
    }
}

fn sample(
    out: &mut OutDir,
    spec: &ModelSpec,
    ti: &TailIndices,
    n: usize,
    burn_in: Option<usize>,
    seed: u64,
) -> Result<SampleBatch, CliError> {
    let mut cfg = SimulationConfig::new(n, seed);
    if let Some(b) = burn_in {
        cfg.burn_in = b;
    }
    Ok(out.time("simulate", || simulate_stationary(spec, ti, &cfg))?)
}

pub fn simulate(common: &Common, n: usize, burn_in: Option<usize>, cache: bool) -> Result<(), CliError> {
    let (spec, seed) = load_model(common)?;
    run(common, "simulate", seed, |out| {
        let (ti, fallback) = indices_for_sampling(&spec)?;
        let batch = sample(out, &spec, &ti, n, burn_in, seed)?;
        out_csv(out, "samples.csv", &batch)?;
        if cache {
            out.write_with("samples.hrvb", |w| write_cache(&batch, w))?;
        }
        let mut report = model_header("simulate", &spec, seed);
        report["n"] = json!(batch.len());
        report["alphas"] = json!(batch.alphas());
        report["alpha_fallback"] = json!(fallback);
        report["simulation"] = json!(batch.meta.config);
        out.json("report.json", &report)?;
        Ok(())
    })
}

fn out_csv(out: &mut OutDir, name: &str, batch: &SampleBatch) -> std::io::Result<()> {
    out.write_with(name, |w| write_csv(batch, w))
}

fn scan_json(label: &str, scan: &ScanResult) -> Value {
    let slope = scan.slope();
    json!({
        "label": label,
        "scaling": scan.scaling,
        "estimator": scan.estimator,
        "insufficient_tail": scan.insufficient_tail,
        "rows": scan.rows,
        "log_log_slope": slope,
    })
}

fn scan_plot(title: &str, scans: &[(&str, &ScanResult)]) -> Plot {
    Plot {
        title: title.into(),
        x_label: "t".into(),
        y_label: "scaled probability".into(),
        log_x: true,
        log_y: true,
        series: scans
            .iter()
            .map(|(l, s)| {
                Series::line(
                    *l,
                    s.rows
                        .iter()
                        .filter(|r| r.scaled > 0.0)
                        .map(|r| (r.t, r.scaled))
                        .collect(),
                )
            })
            .collect(),
    }
}

fn xi_from_analysis(path: &Path) -> Result<Vec2, CliError> {
    let file = if path.is_dir() {
        path.join("report.json")
    } else {
        path.to_path_buf()
    };
    let text =
        fs::read_to_string(&file).map_err(|e| CliError::Config(format!("cannot read {}: {e}", file.display())))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", file.display())))?;
    if v["certified"] != json!(true) {
        return Err(CliError::Precondition(format!(
            "{} holds no certified xi*",
            file.display()
        )));
    }
    match v["xi_star"]
        .as_array()
        .map(|a| a.iter().filter_map(Value::as_f64).collect::<Vec<_>>())
    {
        Some(x) if x.len() == 2 => Ok([x[0], x[1]]),
        _ => Err(CliError::Config(format!("{} has no xi_star entry", file.display()))),
    }
}

pub fn tail_scan(args: &TailScanArgs) -> Result<(), CliError> {
    let common = &args.common;
    let grid = parse_t_grid(&args.t_grid)?;
    let (spec, seed) = load_model(common)?;
    let xi = match (args.mode, &args.xi) {
        (ScanMode::Joint, Some(x)) if x.len() == 2 => Some([x[0], x[1]]),
        (ScanMode::Joint, Some(_)) => return Err(CliError::Config("--xi takes two comma-separated values".into())),
        (ScanMode::Joint, None) => return Err(CliError::Config("joint mode needs --xi".into())),
        _ => None,
    };
    let analysis = match (args.mode, &args.analysis) {
        (ScanMode::Hrv, Some(p)) => Some(xi_from_analysis(p)?),
        _ => None,
    };
    run(common, "tail-scan", seed, |out| {
        let ti = tail_indices(&spec, 1e-12)?;
        let batch = sample(out, &spec, &ti, args.n, None, seed)?;
        let mut report = model_header("tail-scan", &spec, seed);
        report["n"] = json!(batch.len());
        report["alpha"] = json!(ti.alpha);
        match args.mode {
            ScanMode::Marginal => {
                report["mode"] = json!("marginal");
                let scans = out.time("scan", || {
                    (0..2)
                        .map(|c| marginal_tail_scan(&batch, c, &grid))
                        .collect::<Result<Vec<_>, _>>()
                })?;
                let mut list = Vec::new();
                for (c, s) in scans.iter().enumerate() {
                    out.write_with(&format!("marginal_{}.csv", c + 1), |w| s.write_csv(w))?;
                    list.push(scan_json(&format!("X{}", c + 1), s));
                }
                report["scans"] = json!(list);
                let plot = scan_plot("t P(|X_i| > t^(1/alpha_i))", &[("X1", &scans[0]), ("X2", &scans[1])]);
                out.write("tail_scan.svg", plot.render().as_bytes())?;
            }
            ScanMode::Joint => {
                let xi = xi.expect("checked above");
                report["mode"] = json!("joint");
                let scan = out.time("scan", || joint_tail_scan(JointSource::Crude(&batch), xi, &grid, false))?;
                out.write_with("joint.csv", |w| scan.write_csv(w))?;
                report["scans"] = json!([scan_json("joint", &scan)]);
                let plot = scan_plot("t^(xi1+xi2) P(joint exceedance)", &[("joint", &scan)]);
                out.write("tail_scan.svg", plot.render().as_bytes())?;
            }
            ScanMode::Hrv => {
                report["mode"] = json!("hrv");
                let ev = PhiEvaluator::auto(&spec, &ti)?;
                let xi_star = match analysis {
                    Some(x) => {
                        report["xi_star_source"] = json!("analysis");
                        x
                    }
                    None => {
                        report["xi_star_source"] = json!("computed");
                        certified(&ev)?.xi_star
                    }
                };
                report["xi_star"] = json!(xi_star);
                let cfg = IsConfig {
                    paths: args.paths,
                    seed,
                };
                let source = JointSource::Auto {
                    batch: &batch,
                    ev: &ev,
                    xi_star,
                    cfg,
                };
                let scan = out.time("scan", || joint_tail_scan(source, xi_star, &grid, true))?;
                out.write_with("hrv.csv", |w| scan.write_csv(w))?;
                report["scans"] = json!([scan_json("hrv", &scan)]);
                let plot = scan_plot("(log t)^(1/2) t^(xi1*+xi2*) P(joint exceedance)", &[("hrv", &scan)]);
                out.write("tail_scan.svg", plot.render().as_bytes())?;

                let group = observed_sign_group(&spec, 1000, seed);
                let mut spectra = Vec::new();
                for (name, q) in [("q90", 0.9), ("q99", 0.99)] {
                    let s0 = radius_quantile(&batch, q);
                    let sp = out.time("spectral", || spectral_measure(&batch, s0))?;
                    out.write_with(&format!("spectral_{name}.csv"), |w| sp.write_csv(w))?;
                    spectra.push(json!({
                        "threshold": name,
                        "s0": sp.s0,
                        "exceedances": sp.exceedances,
                        "mass_near_axes": sp.mass_near_axes,
                        "insufficient_tail": sp.insufficient_tail,
                        "sector_counts": sp.sector_counts,
                        "k_invariance": sp.k_invariance(&group),
                    }));
                }
                report["spectral"] = json!(spectra);
                let table = k_invariance_check(&batch, &group, None)?;
                out.write_with("k_invariance.csv", |w| table.write_csv(w))?;
                report["sign_group"] = json!(group.elements());
                report["k_invariance"] = json!(table);
            }
        }
        out.json("report.json", &report)?;
        Ok(())
    })
}

pub fn exceedance(common: &Common, t: f64, eps: f64, paths: usize, ell: usize) -> Result<(), CliError> {
    let (spec, seed) = load_model(common)?;
    if !(t > 1.0 && eps > 0.0) {
        return Err(CliError::Config("need --t > 1 and --eps > 0".into()));
    }
    run(common, "exceedance", seed, |out| {
        let ti = tail_indices(&spec, 1e-12)?;
        let ev = PhiEvaluator::auto(&spec, &ti)?;
        let cp = certified(&ev)?;
        let cfg = IsConfig { paths, seed };
        let est = out.time("importance_sampling", || {
            joint_exceedance_prob(&ev, cp.xi_star, t, eps, &cfg)
        })?;
        let wb = out.time("walk_box", || walk_box_prob(&ev, cp.xi_star, t, ell, eps, &cfg))?;
        let mut report = model_header("exceedance", &spec, seed);
        report["xi_star"] = json!(cp.xi_star);
        report["exceedance"] = json!(est);
        report["walk_box"] = json!(wb);
        out.json("report.json", &report)?;
        Ok(())
    })
}

fn walk_law(walk: &WalkConfig) -> Result<GaussianIncrements, CliError> {
    Ok(GaussianIncrements::new(walk.mean, walk.cov, walk.flip)?)
}

pub fn renewal_check(common: &Common, t_grid: &str, paths: usize) -> Result<(), CliError> {
    let grid = parse_t_grid(t_grid)?;
    let (walk, seed) = match load(common)? {
        (Config::Walk { walk, .. }, seed) => (walk, seed),
        _ => {
            return Err(CliError::Config(
                "renewal-check needs a GaussianWalk configuration".into(),
            ))
        }
    };
    let law = walk_law(&walk)?;
    run(common, "renewal-check", seed, |out| {
        use hrv_core::renewal::IncrementLaw;
        let cfg = RenewalConfig::new(paths, seed);
        let group: SignGroup = law.group();
        let square = |side: f64| Rect::new([0.0, 0.0], [side, side]);
        let main = out.time("renewal", || {
            group_renewal_estimate(&law, &group, square(2.0)?, &grid, &cfg)
        })?;
        out.write_with("renewal.csv", |w| main.write_csv(w))?;
        let ratio = main.stability_ratio();
        let within = ratio >= STABILITY_BAND.0 && ratio <= STABILITY_BAND.1;
        eprintln!(
            "renewal stability ratio {ratio:.4} over t = {:?} (band [0.85, 1.15]: {within})",
            grid
        );
        let mut areas = Vec::new();
        for side in [1.0, 2f64.sqrt()] {
            let e = out.time("areas", || {
                hrv_core::renewal::renewal_measure_estimate(&law, square(side)?, &grid, &cfg)
            })?;
            areas.push(json!({ "area": side * side, "per_area": e.values.iter().map(|v| v.value / (side * side)).collect::<Vec<_>>(), "values": e.values }));
        }
        areas.push(json!({ "area": 4.0, "per_area": main.values.iter().map(|v| v.value / 4.0).collect::<Vec<_>>(), "values": main.values }));
        let carlsson = out.time("carlsson", || {
            carlsson_bound_check(&law, square(1.0)?, &[0.0, 5.0, 10.0], &grid, &cfg)
        })?;
        out.write_with("carlsson.csv", |w| {
            use std::io::Write;
            writeln!(w, "t,offset,value,stderr")?;
            for r in &carlsson.rows {
                writeln!(w, "{},{},{},{}", r.t, r.offset, r.value.value, r.value.stderr)?;
            }
            Ok(())
        })?;
        let mut report = header("renewal-check", seed);
        report["walk"] = json!({ "mean": walk.mean, "cov": walk.cov, "flip": walk.flip });
        report["sign_group"] = json!(group.elements());
        report["estimate"] = json!(main);
        report["stability_ratio"] = json!(ratio);
        report["stability_within_band"] = json!(within);
        report["areas"] = json!(areas);
        report["carlsson"] = json!(carlsson);
        out.json("report.json", &report)?;
        let plot = Plot {
            title: "t^(1/2) U(t rho + A)".into(),
            x_label: "t".into(),
            y_label: "scaled renewal measure".into(),
            log_x: true,
            log_y: false,
            series: main
                .group_slices
                .iter()
                .map(|s| {
                    Series::line(
                        format!("k = {}", s.k),
                        grid.iter().zip(&s.values).map(|(&t, v)| (t, v.value)).collect(),
                    )
                })
                .chain(std::iter::once(Series::line(
                    "all",
                    grid.iter().zip(&main.values).map(|(&t, v)| (t, v.value)).collect(),
                )))
                .collect(),
        };
        out.write("renewal.svg", plot.render().as_bytes())?;
        Ok(())
    })
}

pub fn check_assumptions(common: &Common, n: usize) -> Result<(), CliError> {
    let (spec, seed) = load_model(common)?;
    run(common, "check-assumptions", seed, |out| {
        let (ti, rep) = out.time("assumptions", || assess_model(&spec, &CheckOptions { n, seed }));
        let mut report = model_header("check-assumptions", &spec, seed);
        report["alpha"] = json!(ti.map(|t| t.alpha));
        report["assumptions"] = json!(rep);
        out.json("report.json", &report)?;
        let failed: Vec<String> = rep
            .entries
            .iter()
            .filter(|e| e.status == Status::Fail)
            .map(|e| format!("{:?}: {}", e.id, e.note))
            .collect();
        if failed.is_empty() {
            Ok(())
        } else {
            Err(CliError::Precondition(format!(
                "assumptions fail: {}",
                failed.join("; ")
            )))
        }
    })
}
