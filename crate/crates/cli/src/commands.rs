use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use msdhawkes::analysis::{endogeneity_grid, predict_next_type, write_endogeneity_csv, write_prediction_csv, ImbalanceRule};
use msdhawkes::data::{
    build_covariates, dedup_events, dedup_same_timestamp, load_events, parse_clock, parse_covariates, read_events_csv,
    read_state_csv, spread_distribution, window_session, write_events_csv, write_state_csv, CovariateOptions, S3Mode,
};
use msdhawkes::diagnostics::{residuals_at_level, write_residuals_csv};
use msdhawkes::estimate::{self, fit_mle, select_model_with, Candidate, EmOptions, MleOptions, SelectOptions};
use msdhawkes::experiments::{
    dispersion_ratios, named_params, powerlaw_truth, replicate_fits, replicate_order_selection, single_exp_truth, summarize,
    three_exp_truth, Truth,
};
use msdhawkes::model::{EventStream, FitResult, HawkesParams, ModelShape, StateTrajectory};
use msdhawkes::simulate::{rng_for, simulate_msd_with, simulate_powerlaw_with, simulate_state_with};

use crate::error::CliError;
use crate::*;

type CliResult<T = ()> = Result<T, CliError>;

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

/// File or stdout.
fn sink(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

/// Parameters from a fit JSON or a bare parameter JSON.
pub fn load_params(path: &Path) -> CliResult<HawkesParams> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    let params = match serde_json::from_str::<FitResult>(&text) {
        Ok(fit) => fit.params,
        Err(_) => serde_json::from_str::<HawkesParams>(&text)
            .map_err(|e| CliError::validation(format!("{}: neither a fit nor a parameter record ({e})", path.display())))?,
    };
    params.validate()?;
    Ok(params)
}

/// 1-based column list, `all` or `none`, as 0-based indices.
fn parse_columns(spec: &str, n_columns: usize) -> CliResult<Vec<usize>> {
    let s = spec.trim();
    if s.eq_ignore_ascii_case("all") {
        return Ok((0..n_columns).collect());
    }
    if s.is_empty() || s.eq_ignore_ascii_case("none") {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|c| {
            let c: usize = c.trim().parse().map_err(|_| CliError::usage(format!("bad covariate column {c:?}")))?;
            if c == 0 || c > n_columns {
                return Err(CliError::validation(format!("covariate column {c} not in a state with {n_columns} columns")));
            }
            Ok(c - 1)
        })
        .collect()
}

/// `"1..5"` or `"1,2,3"`.
fn parse_orders(spec: &str) -> CliResult<Vec<usize>> {
    let bad = || CliError::usage(format!("bad kernel order list {spec:?}"));
    let orders: Vec<usize> = if let Some((a, b)) = spec.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        (a..=b).collect()
    } else {
        spec.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect::<CliResult<_>>()?
    };
    if orders.is_empty() || orders.contains(&0) {
        return Err(bad());
    }
    Ok(orders)
}

fn parse_horizons(spec: Option<&str>, default: &[f64]) -> CliResult<Vec<f64>> {
    let Some(spec) = spec else {
        return Ok(default.to_vec());
    };
    spec.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .ok()
                .filter(|t| *t > 0.0 && t.is_finite())
                .ok_or_else(|| CliError::usage(format!("bad horizon {x:?}")))
        })
        .collect()
}

/// Events and the full state path of a sample.
fn load_sample(a: &SampleArgs) -> CliResult<(EventStream, StateTrajectory)> {
    let state = match &a.state {
        Some(p) => read_state_csv(open(p)?)?,
        None => {
            let t = a.horizon.ok_or_else(|| CliError::usage("either --state or --T is required"))?;
            StateTrajectory::trivial(t)?
        }
    };
    if let (Some(t), Some(_)) = (a.horizon, &a.state) {
        if t != state.horizon() {
            return Err(CliError::validation(format!("--T {t} differs from the state horizon {}", state.horizon())));
        }
    }
    let mut events = read_events_csv(open(&a.events)?, state.horizon())?;
    if events.is_empty() {
        return Err(CliError::validation(format!("{}: no events", a.events.display())));
    }
    if a.dedup {
        let before = events.len();
        events = dedup_events(&events);
        if events.len() < before {
            info!("dropped {} events sharing a timestamp", before - events.len());
        }
    }
    Ok((events, state))
}

fn n_types(a: &SampleArgs, events: &EventStream) -> CliResult<usize> {
    let observed = events.n_types_observed();
    match a.de {
        Some(d) if d < observed => Err(CliError::validation(format!("--de {d} but the file has type {observed}"))),
        Some(d) => Ok(d),
        None => Ok(observed),
    }
}

/// Sample restricted to the chosen covariate columns.
fn load_selected(a: &SampleArgs) -> CliResult<(EventStream, StateTrajectory)> {
    let (events, state) = load_sample(a)?;
    let cols = parse_columns(&a.covariates, state.n_covariates())?;
    let state = state.select_columns(&cols)?;
    Ok((events, state))
}

fn mle_options(m: &MleArgs) -> CliResult<MleOptions> {
    Ok(MleOptions {
        n_starts: m.n_starts,
        seed: m.seed,
        gtol: m.gtol,
        ftol: m.ftol,
        max_iterations: m.max_iter,
        no_cross_excitation: m.no_cross,
        initial: m.init.as_deref().map(load_params).transpose()?.into_iter().collect(),
        ..MleOptions::default()
    })
}

fn write_params_csv(params: &HawkesParams, out: impl Write) -> CliResult {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["name", "value"])?;
    for (name, v) in named_params(params) {
        w.write_record([name, v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn emit_fit(fit: &FitResult, output: Option<&Path>, params_csv: Option<&Path>) -> CliResult {
    for w in &fit.warnings {
        warn!("{w}");
    }
    info!(
        "{} fit: log-likelihood {:.6}, AIC {:.6}, converged {} in {:.2} s",
        match fit.method {
            msdhawkes::model::FitMethod::Mle => "MLE",
            msdhawkes::model::FitMethod::Em => "EM",
        },
        fit.log_likelihood,
        fit.aic,
        fit.converged,
        fit.elapsed_secs
    );
    let mut out = sink(output)?;
    serde_json::to_writer_pretty(&mut out, fit)?;
    writeln!(out)?;
    out.flush()?;
    let csv_path: Option<PathBuf> = params_csv
        .map(Path::to_path_buf)
        .or_else(|| output.map(|p| p.with_extension("params.csv")));
    if let Some(p) = csv_path {
        write_params_csv(&fit.params, create(&p)?)?;
    }
    Ok(())
}

pub fn prepare(a: PrepareArgs) -> CliResult {
    let start = parse_clock(&a.start)?;
    let end = parse_clock(&a.end)?;
    let spec = parse_covariates(&a.covariates)?;
    let sessions = a
        .input
        .iter()
        .map(|p| {
            let rows = load_events(p).map_err(|e| match e {
                msdhawkes::Error::Io(io) => CliError::io(format!("{}: {io}", p.display())),
                other => CliError::validation(format!("{}: {other}", p.display())),
            })?;
            let rows = if a.keep_duplicates { rows } else { dedup_same_timestamp(&rows) };
            Ok(window_session(&rows, start, end)?)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let needs_dist = spec.iter().any(|c| matches!(c, msdhawkes::data::Covariate::S1 | msdhawkes::data::Covariate::S3));
    let dist = if needs_dist { Some(spread_distribution(&sessions, a.tick_size)?) } else { None };
    let opts = CovariateOptions {
        tick_size: a.tick_size,
        s3_mode: match a.s3_mode {
            S3Arg::Prose => S3Mode::Prose,
            S3Arg::Literal => S3Mode::Literal,
        },
    };
    for (path, session) in a.input.iter().zip(&sessions) {
        let stem = path.file_stem().map_or("session".into(), |s| s.to_string_lossy().into_owned());
        let (events, dropped) = session.event_stream()?;
        if dropped > 0 {
            info!("{stem}: {dropped} rows at the window start set the opening book only");
        }
        let (state, warnings) = build_covariates(session, &spec, dist.as_ref(), &opts)?;
        for w in warnings {
            warn!("{stem}: {w}");
        }
        write_events_csv(&events, create(&a.out_dir.join(format!("{stem}.events.csv")))?)?;
        write_state_csv(&state, create(&a.out_dir.join(format!("{stem}.state.csv")))?)?;
        info!("{stem}: {} events over {} s", events.len(), session.horizon());
    }
    Ok(())
}

pub fn simulate(a: SimulateArgs) -> CliResult {
    let truth = match (&a.params, a.kernel) {
        (Some(p), KernelArg::Exponential) => {
            let params = load_params(p)?;
            let shape = params.shape();
            if (shape.n_types, shape.n_exp, shape.n_covariates) != (a.de, a.dn, a.dx) {
                warn!(
                    "parameter file has de = {}, dn = {}, dx = {}; flags ignored",
                    shape.n_types, shape.n_exp, shape.n_covariates
                );
            }
            Truth::Exponential(params)
        }
        (Some(_), KernelArg::Powerlaw) => {
            return Err(CliError::usage("power-law simulation uses the built-in kernels; drop --params"));
        }
        (None, kernel) => {
            if (a.de, a.dx) != (2, 2) {
                return Err(CliError::usage("built-in parameters have de = dx = 2; pass --params otherwise"));
            }
            match (kernel, a.dn) {
                (KernelArg::Powerlaw, _) => Truth::PowerLaw(powerlaw_truth()),
                (KernelArg::Exponential, 1) => Truth::Exponential(single_exp_truth()),
                (KernelArg::Exponential, 3) => Truth::Exponential(three_exp_truth()),
                _ => return Err(CliError::usage("built-in exponential parameters exist for dn = 1 and 3; pass --params")),
            }
        }
    };
    if !(a.horizon > 0.0 && a.horizon.is_finite()) {
        return Err(CliError::usage("--T must be positive"));
    }
    let state = simulate_state_with(a.state_rate, truth.n_covariates(), a.horizon, &mut rng_for(a.seed, 0))?;
    let mut rng = rng_for(a.seed, 1);
    let events = match &truth {
        Truth::Exponential(p) => simulate_msd_with(p, &state, a.horizon, &mut rng, a.max_events)?,
        Truth::PowerLaw(p) => simulate_powerlaw_with(&p.kernels, &p.nu, &p.theta, &state, a.horizon, &mut rng, a.max_events)?,
    };
    write_events_csv(&events, create(&a.out_dir.join("events.csv"))?)?;
    write_state_csv(&state, create(&a.out_dir.join("state.csv"))?)?;
    info!("simulated {} events, {} state segments", events.len(), state.n_segments());
    Ok(())
}

pub fn fit(a: FitArgs) -> CliResult {
    let (events, state) = load_selected(&a.sample)?;
    let shape = ModelShape::new(n_types(&a.sample, &events)?, a.dn, state.n_covariates())?;
    let fit = fit_mle(&events, &state, shape, &mle_options(&a.mle)?)?;
    emit_fit(&fit, a.output.as_deref(), a.params_csv.as_deref())
}

pub fn fit_em(a: FitEmArgs) -> CliResult {
    let (events, state) = load_selected(&a.sample)?;
    let shape = ModelShape::new(n_types(&a.sample, &events)?, a.dn, state.n_covariates())?;
    let opts = EmOptions {
        n_starts: a.n_starts,
        seed: a.seed,
        max_sweeps: a.max_sweeps,
        initial: a.init.as_deref().map(load_params).transpose()?,
        ..EmOptions::default()
    };
    let fit = estimate::fit_em(&events, &state, shape, &opts)?;
    emit_fit(&fit, a.output.as_deref(), a.params_csv.as_deref())
}

fn format_columns(cols: &[usize]) -> String {
    if cols.is_empty() {
        "none".into()
    } else {
        cols.iter().map(|c| (c + 1).to_string()).collect::<Vec<_>>().join(" ")
    }
}

pub fn select(a: SelectArgs) -> CliResult {
    let (events, state) = load_sample(&a.sample)?;
    let orders = parse_orders(&a.dn)?;
    let sets: Vec<Vec<usize>> = match &a.covariate_sets {
        Some(s) => s.split(';').map(|c| parse_columns(c, state.n_covariates())).collect::<CliResult<_>>()?,
        None => vec![parse_columns(&a.sample.covariates, state.n_covariates())?],
    };
    let candidates: Vec<Candidate> = sets
        .iter()
        .flat_map(|cov| orders.iter().map(|&n_exp| Candidate { n_exp, covariates: cov.clone() }))
        .collect();
    let opts = SelectOptions {
        mle: mle_options(&a.mle)?,
        nested_random_starts: a.nested_starts,
    };
    let sel = select_model_with(&events, &state, n_types(&a.sample, &events)?, &candidates, &opts)?;
    let mut out = sink(a.output.as_deref())?;
    match a.format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, &sel)?;
            writeln!(out)?;
        }
        Format::Csv => {
            let mut rank = vec![None; sel.entries.len()];
            for (r, &i) in sel.ranking.iter().enumerate() {
                rank[i] = Some(r + 1);
            }
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(["dn", "covariates", "n_params", "log_likelihood", "aic", "rank", "error"])?;
            for (e, r) in sel.entries.iter().zip(rank) {
                let cov = format_columns(&e.candidate.covariates);
                match &e.result {
                    Ok(f) => w.write_record([
                        e.candidate.n_exp.to_string(),
                        cov,
                        f.n_params.to_string(),
                        f.log_likelihood.to_string(),
                        f.aic.to_string(),
                        r.map_or(String::new(), |r| r.to_string()),
                        String::new(),
                    ])?,
                    Err(msg) => w.write_record([e.candidate.n_exp.to_string(), cov, String::new(), String::new(), String::new(), String::new(), msg.clone()])?,
                }
            }
            w.flush()?;
        }
    }
    out.flush()?;
    if let Some(best) = sel.best() {
        info!("AIC selects dn = {} with covariates {}", best.candidate.n_exp, format_columns(&best.candidate.covariates));
    }
    Ok(())
}

pub fn residuals(a: ResidualsArgs) -> CliResult {
    let params = load_params(&a.params)?;
    let (events, state) = load_selected(&a.sample)?;
    let series = residuals_at_level(&params, &events, &state, a.level)?;
    if let Some(p) = &a.output {
        write_residuals_csv(&series, create(p)?)?;
    }
    let passed = series.passed();
    let mut out = sink(a.report.as_deref())?;
    match a.format {
        Format::Json => {
            serde_json::to_writer_pretty(
                &mut out,
                &serde_json::json!({ "level": series.level, "ks": series.ks, "passed": passed, "all_passed": series.all_passed() }),
            )?;
            writeln!(out)?;
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(["type", "n", "statistic", "p_value", "passed", "low_power"])?;
            for (e, (ks, ok)) in series.ks.iter().zip(&passed).enumerate() {
                match ks {
                    Some(k) => w.write_record([
                        (e + 1).to_string(),
                        k.n.to_string(),
                        k.statistic.to_string(),
                        k.p_value.to_string(),
                        ok.to_string(),
                        k.low_power.to_string(),
                    ])?,
                    None => w.write_record([(e + 1).to_string(), "0".into(), String::new(), String::new(), "false".into(), "true".into()])?,
                }
            }
            w.flush()?;
        }
    }
    out.flush()?;
    Ok(())
}

fn parse_axis(spec: &str) -> CliResult<Vec<f64>> {
    let bad = || CliError::usage(format!("bad grid axis {spec:?}, expected \"a,b,c\" or \"lo:hi:n\""));
    let parts: Vec<&str> = spec.split(':').collect();
    let values: Vec<f64> = if parts.len() == 3 {
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
        match n {
            0 => return Err(bad()),
            1 => vec![lo],
            _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
        }
    } else {
        spec.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect::<CliResult<_>>()?
    };
    if values.is_empty() {
        return Err(bad());
    }
    Ok(values)
}

pub fn endogeneity(a: EndogeneityArgs) -> CliResult {
    let params = load_params(&a.params)?;
    let dx = params.shape().n_covariates;
    let axes: Vec<Vec<f64>> = match &a.grid {
        Some(g) => g.split(';').map(parse_axis).collect::<CliResult<_>>()?,
        None => vec![parse_axis("-1:1:21")?; dx],
    };
    if axes.len() != dx {
        return Err(CliError::validation(format!("grid has {} axes, parameters have {dx} covariates", axes.len())));
    }
    let mut grid: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in &axes {
        grid = grid
            .into_iter()
            .flat_map(|x| {
                axis.iter().map(move |v| {
                    let mut y = x.clone();
                    y.push(*v);
                    y
                })
            })
            .collect();
    }
    let reports = endogeneity_grid(&params, &grid)?;
    write_endogeneity_csv(&reports, sink(a.output.as_deref())?)?;
    Ok(())
}

pub fn predict(a: PredictArgs) -> CliResult {
    let params = load_params(&a.params)?;
    let (events, state) = load_selected(&a.sample)?;
    let rule = a
        .imbalance_column
        .map(|c| {
            if c == 0 {
                return Err(CliError::usage("--imbalance-column is 1-based"));
            }
            Ok(match a.rule {
                RuleArg::Market => ImbalanceRule::market(c - 1),
                RuleArg::Aggressive => ImbalanceRule::aggressive(c - 1),
            })
        })
        .transpose()?;
    let outcome = predict_next_type(&params, &events, &state, rule)?;
    let mut out = sink(a.output.as_deref())?;
    match a.format {
        Format::Csv => write_prediction_csv(&outcome, &mut out)?,
        Format::Json => {
            serde_json::to_writer_pretty(
                &mut out,
                &serde_json::json!({
                    "n_events": outcome.truth.len(),
                    "accuracy_model": outcome.accuracy_model,
                    "accuracy_last": outcome.accuracy_last,
                    "accuracy_imbalance": outcome.accuracy_imbalance,
                    "excess_vs_last": outcome.excess_vs_last,
                }),
            )?;
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn replicate(a: ReplicateArgs) -> CliResult {
    let mut out = sink(a.output.as_deref())?;
    let mut w = csv::Writer::from_writer(&mut out);
    let select = SelectOptions {
        mle: MleOptions {
            n_starts: a.n_starts,
            ..MleOptions::default()
        },
        nested_random_starts: Some(a.nested_starts),
    };
    match a.study {
        Study::Table1 => {
            let horizons = parse_horizons(a.horizon.as_deref(), &[1000.0])?;
            let truth = single_exp_truth();
            let opts = MleOptions {
                n_starts: a.n_starts,
                ..MleOptions::default()
            };
            w.write_record(["T", "name", "truth", "median", "iqr", "sd", "failed"])?;
            for t in horizons {
                let fits = replicate_fits(&Truth::Exponential(truth.clone()), t, a.replicates.unwrap_or(30), a.seed, truth.shape(), &opts, true);
                let (ok, failed) = split_failures(fits);
                for s in summarize(&truth, &ok) {
                    w.write_record([t.to_string(), s.name, s.truth.to_string(), s.median.to_string(), s.iqr.to_string(), s.sd.to_string(), failed.to_string()])?;
                }
            }
        }
        Study::AicOrder | Study::Powerlaw => {
            let (truth, default_t) = if a.study == Study::AicOrder {
                (Truth::Exponential(three_exp_truth()), vec![5000.0])
            } else {
                (Truth::PowerLaw(powerlaw_truth()), vec![500.0, 2000.0])
            };
            let orders = parse_orders(&a.dn)?;
            let horizons = parse_horizons(a.horizon.as_deref(), &default_t)?;
            let mut header = vec!["T".to_string(), "replicate".into(), "n_events".into(), "selected".into()];
            header.extend(orders.iter().map(|n| format!("aic_{n}")));
            w.write_record(&header)?;
            for (i, t) in horizons.iter().enumerate() {
                let seed = a.seed.wrapping_add(i as u64);
                let outcomes = replicate_order_selection(&truth, *t, a.replicates.unwrap_or(20), seed, &orders, &select, true);
                for (r, o) in outcomes.into_iter().enumerate() {
                    let o = match o {
                        Ok(o) => o,
                        Err(e) => {
                            warn!("T = {t}, replicate {r}: {e}");
                            continue;
                        }
                    };
                    let mut row = vec![t.to_string(), r.to_string(), o.n_events.to_string(), o.selected.map_or(String::new(), |s| s.to_string())];
                    row.extend(orders.iter().map(|n| o.aic.iter().find(|(m, _)| m == n).map_or(String::new(), |(_, v)| v.to_string())));
                    w.write_record(&row)?;
                }
            }
        }
        Study::Convergence => {
            let truth = three_exp_truth();
            let horizons = parse_horizons(a.horizon.as_deref(), &[8000.0, 32000.0])?;
            let opts = MleOptions {
                n_starts: 0,
                initial: vec![truth.clone()],
                ..MleOptions::default()
            };
            w.write_record(["T", "name", "truth", "median", "iqr", "sd", "sd_ratio_to_previous", "failed"])?;
            let mut previous: Option<Vec<msdhawkes::experiments::ParamSummary>> = None;
            for (i, t) in horizons.iter().enumerate() {
                let fits = replicate_fits(
                    &Truth::Exponential(truth.clone()),
                    *t,
                    a.replicates.unwrap_or(20),
                    a.seed.wrapping_add(i as u64),
                    truth.shape(),
                    &opts,
                    true,
                );
                let (ok, failed) = split_failures(fits);
                let summary = summarize(&truth, &ok);
                let ratios = previous.as_ref().map(|p| dispersion_ratios(p, &summary));
                for (j, s) in summary.iter().enumerate() {
                    let ratio = ratios.as_ref().map_or(String::new(), |r| r[j].1.to_string());
                    w.write_record([t.to_string(), s.name.clone(), s.truth.to_string(), s.median.to_string(), s.iqr.to_string(), s.sd.to_string(), ratio, failed.to_string()])?;
                }
                previous = Some(summary);
            }
        }
    }
    w.flush()?;
    drop(w);
    out.flush()?;
    Ok(())
}

fn split_failures(fits: Vec<msdhawkes::Result<FitResult>>) -> (Vec<FitResult>, usize) {
    let mut ok = Vec::with_capacity(fits.len());
    let mut failed = 0;
    for f in fits {
        match f {
            Ok(f) => ok.push(f),
            Err(e) => {
                warn!("replicate failed: {e}");
                failed += 1;
            }
        }
    }
    (ok, failed)
}
