use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;

use serde::Serialize;
use toml::Value;
use tvlds::estimators::{
    fit_graph_tv, fit_group_lasso, fit_laplacian, fit_ols_individual, fit_ols_pooled, fit_persistence, method_path,
    PathOptions,
};
use tvlds::experiments::{
    run_station_experiment, run_sweep, write_aggregate, write_failures, write_rows, write_stability,
    write_station_rows, FieldKind, SplitSpec, StationConfig, SweepAxis, SweepConfig, SweepResult, Topology,
};
use tvlds::ingest::{load_station_csv, preprocess_series, station_graph, to_lds_panel, PreprocessOptions, Transform};
use tvlds::io::{read_panel_csv, to_json_pretty, write_atomic, write_coords, write_node_values};
use tvlds::lds::{gen_ground_truth, random_stable_ensemble, simulate_panel, EnsembleFile};
use tvlds::theory::{theory_report, Regime, TheoryConstants, TheoryOptions, TheoryReport};
use tvlds::graph::GraphKind;
use tvlds::{Field, FieldSpec, FitResult, Graph, Method, SystemEnsemble, TrajectoryPanel};

use crate::config::{Params, Schema};
use crate::Failure;

macro_rules! int {
    ($v:expr) => {
        Some(|| Value::Integer($v))
    };
}
macro_rules! float {
    ($v:expr) => {
        Some(|| Value::Float($v))
    };
}
macro_rules! string {
    ($v:expr) => {
        Some(|| Value::String($v.to_string()))
    };
}
macro_rules! strings {
    ($($v:expr),*) => {
        Some(|| Value::Array(vec![$(Value::String($v.to_string())),*]))
    };
}

pub fn schema(command: &str) -> Schema {
    match command {
        "simulate" => SIMULATE,
        "fit" => FIT,
        "sweep" => SWEEP,
        "theory" => THEORY,
        "ingest" => INGEST,
        "reproduce" => REPRODUCE,
        _ => unreachable!("unknown command {command}"),
    }
}

pub fn run(p: &Params, out: &Path, strict: bool) -> Result<(), Failure> {
    match p.command() {
        "simulate" => simulate(p, out),
        "fit" => fit(p, out, strict),
        "sweep" => sweep(p, out, strict),
        "theory" => theory(p, out),
        "ingest" => ingest(p, out, strict),
        "reproduce" => reproduce(p, out, strict),
        other => unreachable!("unknown command {other}"),
    }
}

fn emit(out: &Path, name: &str, bytes: &[u8]) -> Result<(), Failure> {
    write_atomic(&out.join(name), bytes)?;
    Ok(())
}

fn emit_with(
    out: &Path,
    name: &str,
    f: impl FnOnce(&mut Vec<u8>) -> tvlds::Result<()>,
) -> Result<(), Failure> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    emit(out, name, &buf)
}

fn emit_json<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<(), Failure> {
    emit(out, name, &to_json_pretty(value)?)
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn topology(p: &Params, key: &str) -> Result<Topology, Failure> {
    let name = p.str(key)?;
    Topology::parse(name, p.f64("p")?)
        .ok_or_else(|| usage(format!("unknown topology {name:?} (path, grid, star, complete, er)")))
}

fn field_spec(p: &Params) -> Result<FieldSpec, Failure> {
    let scale = p.f64("scale")?;
    let field = match p.str("field")? {
        "piecewise" => Field::Piecewise { scale },
        "smooth" => Field::Smooth { scale, omega: p.f64("omega")? },
        other => return Err(usage(format!("unknown field {other:?} (piecewise, smooth)"))),
    };
    let jump = p.f64("jump")?;
    Ok(FieldSpec { field, jump: (jump > 0.0).then_some(jump) })
}

fn methods(p: &Params, key: &str) -> Result<Vec<Method>, Failure> {
    p.str_list(key)?
        .iter()
        .map(|s| Method::parse(s).ok_or_else(|| usage(format!("unknown method {s:?}"))))
        .collect()
}

fn read_panel(path: &str) -> Result<TrajectoryPanel, Failure> {
    let path = Path::new(path);
    let f = File::open(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    Ok(read_panel_csv(f, path)?)
}

fn read_graph(path: &str) -> Result<Graph, Failure> {
    Graph::read_json(Path::new(path)).map_err(|e| match e {
        tvlds::Error::Io(io) => Failure::Data(format!("{path}: {io}")),
        other => Failure::Data(format!("{path}: {other}")),
    })
}

fn read_ensemble(path: &str) -> Result<SystemEnsemble, Failure> {
    let file: EnsembleFile = tvlds::io::read_json(Path::new(path)).map_err(|e| Failure::Data(format!("{path}: {e}")))?;
    Ok(SystemEnsemble::from_file(&file)?)
}

/// The (1,1) coefficient of each node.
fn leading_coefficients(f: &FitResult) -> Vec<f64> {
    f.a_hat.iter().step_by(f.d * f.d).copied().collect()
}

const SIMULATE: Schema = &[
    ("graph", string!("path")),
    ("m", int!(64)),
    ("p", float!(0.3)),
    ("truth", string!("field")),
    ("field", string!("piecewise")),
    ("jump", float!(0.5)),
    ("scale", float!(1.0)),
    ("omega", float!(1.0)),
    ("d", int!(2)),
    ("rho", float!(0.8)),
    ("horizon", int!(200)),
    ("seed", int!(0)),
];

fn simulate(p: &Params, out: &Path) -> Result<(), Failure> {
    let seed = p.u64("seed")?;
    let m = p.usize("m")?;
    let g = topology(p, "graph")?.build(m, seed)?;
    let truth = match p.str("truth")? {
        "field" => gen_ground_truth(&g, &field_spec(p)?)?,
        "random" => random_stable_ensemble(m, p.usize("d")?, p.f64("rho")?, seed)?,
        other => return Err(usage(format!("unknown truth {other:?} (field, random)"))),
    };
    let panel = simulate_panel(&truth, p.usize("horizon")?, seed.wrapping_add(1))?;
    emit_with(out, "panel.csv", |b| tvlds::io::write_panel_csv(b, &panel))?;
    emit_json(out, "ensemble.json", &truth.to_file())?;
    emit_json(out, "graph.json", &g.to_file())?;
    if let Some(beta) = &truth.beta_field {
        emit_with(out, "field.csv", |b| write_node_values(b, beta))?;
    }
    println!("simulated {} nodes x {} transitions into {}", m, panel.horizon(), out.display());
    Ok(())
}

const FIT: Schema = &[
    ("panel", None),
    ("graph", None),
    ("method", string!("graph_tv")),
    ("lambda", None),
    ("grid_size", int!(50)),
    ("min_ratio", float!(1e-4)),
    ("max_iter", int!(5000)),
    ("train_start", int!(0)),
    ("train_end", None),
    ("val_start", None),
    ("val_end", None),
    ("seed", int!(0)),
];

fn single_fit(method: Method, ds: &tvlds::DesignSystem, g: &Graph, lambda: f64, p: &PathOptions) -> Result<FitResult, Failure> {
    Ok(match method {
        Method::GraphTv => fit_graph_tv(ds, g, lambda, &p.solver)?,
        Method::Laplacian => fit_laplacian(ds, g, lambda)?,
        Method::GroupLasso => fit_group_lasso(ds, lambda, &p.group)?.0,
        Method::OlsIndividual => fit_ols_individual(ds),
        Method::OlsPooled => fit_ols_pooled(ds),
        Method::Persistence => fit_persistence(ds),
    })
}

fn fit(p: &Params, out: &Path, strict: bool) -> Result<(), Failure> {
    let panel = read_panel(p.str("panel")?)?;
    let g = read_graph(p.str("graph")?)?;
    if g.num_nodes() != panel.num_nodes() {
        return Err(Failure::Data(format!("graph has {} nodes, panel has {}", g.num_nodes(), panel.num_nodes())));
    }
    let method = methods(p, "method")?.into_iter().next().ok_or_else(|| usage("method is empty"))?;
    let lambda = p.opt_f64("lambda")?;
    if lambda.is_some() && !method.is_penalized() {
        return Err(usage(format!("method {} takes no lambda", method.name())));
    }
    let mut opts = PathOptions { grid_size: p.usize("grid_size")?, min_ratio: p.f64("min_ratio")?, ..PathOptions::default() };
    opts.solver.max_iter = p.usize("max_iter")?;
    let n = panel.horizon();
    let start = p.usize("train_start")?;
    let path_mode = method.is_penalized() && lambda.is_none();
    let train_end = match p.opt_usize("train_end")? {
        Some(e) => e,
        None if path_mode => p.opt_usize("val_start")?.unwrap_or(start + 3 * n.saturating_sub(start) / 4),
        None => n,
    };
    let train = tvlds::estimators::build_design(&panel, start, train_end)?;

    let selected = if path_mode {
        let val_start = p.opt_usize("val_start")?.unwrap_or(train_end);
        let val_end = p.opt_usize("val_end")?.unwrap_or(n);
        let val = tvlds::estimators::build_design(&panel, val_start, val_end)?;
        let path = method_path(method, &train, &g, &opts, &val)?;
        let mut text = String::from("lambda,val_mse,tv_norm,objective,iterations,converged,kkt_gap,flags\n");
        for (f, v) in path.fits.iter().zip(&path.selection_metric) {
            writeln!(
                text,
                "{},{},{},{},{},{},{},{}",
                f.lambda,
                v,
                f.tv_norm(&g),
                f.objective,
                f.iterations,
                f.converged,
                f.kkt_gap,
                f.flags.join(";")
            )
            .unwrap();
        }
        emit(out, "path.csv", text.as_bytes())?;
        path.selected().clone()
    } else {
        single_fit(method, &train, &g, lambda.unwrap_or(0.0), &opts)?
    };
    emit_json(out, "fit.json", &selected.to_file())?;
    emit_with(out, "coefficients.csv", |b| write_node_values(b, &leading_coefficients(&selected)))?;
    println!(
        "{} at lambda = {:.6e}: objective {:.6e}, {} iterations, converged {}",
        method.name(),
        selected.lambda,
        selected.objective,
        selected.iterations,
        selected.converged
    );
    check_converged(strict, [&selected].into_iter().filter(|f| !f.converged).count(), "fit")
}

fn check_converged(strict: bool, bad: usize, what: &str) -> Result<(), Failure> {
    if bad == 0 {
        return Ok(());
    }
    let msg = format!("{bad} {what}(s) hit the iteration cap");
    if strict {
        Err(Failure::NotConverged(msg))
    } else {
        eprintln!("warning: {msg}");
        Ok(())
    }
}

const SWEEP: Schema = &[
    ("axis", string!("T")),
    ("values", Some(|| Value::Array(vec![Value::Integer(4), Value::Integer(8), Value::Integer(16)]))),
    ("topology", string!("path")),
    ("p", float!(0.3)),
    ("field", string!("piecewise")),
    ("m", int!(64)),
    ("t_train", int!(16)),
    ("jump", float!(0.5)),
    ("omega", float!(1.0)),
    ("scale", float!(1.0)),
    ("n_rep", int!(15)),
    ("methods", strings!("graph_tv", "ols_ind")),
    ("t_val", int!(4)),
    ("t_test", int!(8)),
    ("buffer", int!(100)),
    ("grid_size", int!(50)),
    ("min_ratio", float!(1e-4)),
    ("record_timing", Some(|| Value::Boolean(false))),
    ("seed", int!(0)),
];

fn sweep_config(p: &Params) -> Result<SweepConfig, Failure> {
    let axis_name = p.str("axis")?;
    let axis = SweepAxis::parse(axis_name).ok_or_else(|| usage(format!("unknown axis {axis_name:?} (T, m, jump, omega)")))?;
    let mut cfg = SweepConfig::new(axis, p.f64_list("values")?);
    cfg.topology = topology(p, "topology")?;
    cfg.field = match p.str("field")? {
        "piecewise" => FieldKind::Piecewise,
        "smooth" => FieldKind::Smooth,
        other => return Err(usage(format!("unknown field {other:?} (piecewise, smooth)"))),
    };
    cfg.base.m = p.usize("m")?;
    cfg.base.t_train = p.usize("t_train")?;
    cfg.base.jump = p.f64("jump")?;
    cfg.base.omega = p.f64("omega")?;
    cfg.base.scale = p.f64("scale")?;
    cfg.n_rep = p.usize("n_rep")?;
    cfg.base_seed = p.u64("seed")?;
    cfg.methods = methods(p, "methods")?;
    cfg.t_val = p.usize("t_val")?;
    cfg.t_test = p.usize("t_test")?;
    cfg.buffer = p.usize("buffer")?;
    cfg.grid_size = p.usize("grid_size")?;
    cfg.min_ratio = p.f64("min_ratio")?;
    cfg.record_timing = p.bool("record_timing")?;
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn write_sweep(out: &Path, res: &SweepResult) -> Result<(), Failure> {
    emit_with(out, "rows.csv", |b| write_rows(b, &res.rows))?;
    emit_with(out, "aggregate.csv", |b| write_aggregate(b, &res.aggregate))?;
    emit_with(out, "failures.csv", |b| write_failures(b, &res.failures))?;
    for f in &res.failures {
        eprintln!("warning: run at {} (seed {}) failed: {}", f.sweep_value, f.seed, f.message);
    }
    Ok(())
}

fn print_aggregate(res: &SweepResult) {
    println!("{:>10} {:>12} {:>14} {:>12} {:>5}", "value", "method", "param_mse", "ci95", "n");
    for a in &res.aggregate {
        println!(
            "{:>10} {:>12} {:>14.6e} {:>12.3e} {:>5}",
            a.sweep_value,
            a.method,
            a.mean_param_mse.unwrap_or(f64::NAN),
            a.ci95_param.unwrap_or(f64::NAN),
            a.n_ok
        );
    }
}

fn capped(res: &SweepResult) -> usize {
    res.rows.iter().filter(|r| r.flags.split(';').any(|f| f == "max_iter")).count()
}

fn sweep(p: &Params, out: &Path, strict: bool) -> Result<(), Failure> {
    let cfg = sweep_config(p)?;
    let res = run_sweep(&cfg)?;
    write_sweep(out, &res)?;
    print_aggregate(&res);
    check_converged(strict, capped(&res), "selected fit")
}

const THEORY: Schema = &[
    ("graph", string!("complete")),
    ("m", int!(16)),
    ("p", float!(0.3)),
    ("graph_file", None),
    ("ensemble", None),
    ("field", string!("piecewise")),
    ("jump", float!(0.5)),
    ("scale", float!(1.0)),
    ("omega", float!(1.0)),
    ("horizon", int!(1000)),
    ("delta", float!(0.1)),
    ("v", float!(1.0)),
    ("regime", string!("smooth")),
    ("rho_max", None),
    ("lambda", None),
    ("c1", float!(1.0)),
    ("c2", float!(1.0)),
    ("c_re", float!(1.0)),
    ("c_margin", float!(1.0)),
    ("c_sample", float!(1.0)),
    ("empirical", Some(|| Value::Boolean(false))),
    ("seed", int!(0)),
];

/// Comparison of one fitted estimate against the error bound; recorded,
/// never asserted, since the bound's constants are unknown.
#[derive(Serialize)]
struct EmpiricalCheck {
    lambda: f64,
    error_l2: f64,
    bound: f64,
    within_bound: bool,
    converged: bool,
}

#[derive(Serialize)]
struct TheoryOutput {
    #[serde(flatten)]
    report: TheoryReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    empirical: Option<EmpiricalCheck>,
}

fn theory(p: &Params, out: &Path) -> Result<(), Failure> {
    let seed = p.u64("seed")?;
    let g = match p.opt_str("graph_file")? {
        Some(path) => read_graph(path)?,
        None => topology(p, "graph")?.build(p.usize("m")?, seed)?,
    };
    let e = match p.opt_str("ensemble")? {
        Some(path) => read_ensemble(path)?,
        None => gen_ground_truth(&g, &field_spec(p)?)?,
    };
    let regime = match p.str("regime")? {
        "smooth" => Regime::Smooth,
        "few_changes" => Regime::FewChanges,
        other => return Err(usage(format!("unknown regime {other:?} (smooth, few_changes)"))),
    };
    let opts = TheoryOptions {
        horizon: p.usize("horizon")?,
        delta: p.f64("delta")?,
        v: p.f64("v")?,
        regime,
        constants: TheoryConstants {
            c1: p.f64("c1")?,
            c2: p.f64("c2")?,
            c_re: p.f64("c_re")?,
            c_margin: p.f64("c_margin")?,
            c_sample: p.f64("c_sample")?,
        },
        rho_max: p.opt_f64("rho_max")?,
        lambda: p.opt_f64("lambda")?,
    };
    let report = theory_report(&g, &e, &opts)?;
    let empirical = if p.bool("empirical")? { Some(empirical_check(&g, &e, &report, seed)?) } else { None };

    let mut csv = String::from("name,lhs,rhs,margin,pass\n");
    println!("{:>7} {:>14} {:>14} {:>6}", "name", "lhs", "rhs", "pass");
    for c in &report.conditions {
        writeln!(csv, "{},{},{},{},{}", c.name, c.lhs, c.rhs, c.margin(), c.pass).unwrap();
        println!("{:>7} {:>14.6e} {:>14.6e} {:>6}", c.name, c.lhs, c.rhs, c.pass);
    }
    println!("lambda = {:.6e}, bound = {:.6e}", report.lambda, report.theorem_rhs.rhs);
    if let Some(x) = &empirical {
        println!("empirical error {:.6e} (within bound: {})", x.error_l2, x.within_bound);
    }
    emit(out, "conditions.csv", csv.as_bytes())?;
    emit_json(out, "theory.json", &TheoryOutput { report, empirical })
}

/// Simulates the report's horizon, fits at its λ and records the error.
fn empirical_check(g: &Graph, e: &SystemEnsemble, r: &TheoryReport, seed: u64) -> Result<EmpiricalCheck, Failure> {
    let panel = simulate_panel(e, r.dims.horizon + 1, seed)?;
    let ds = tvlds::estimators::build_design(&panel, 1, r.dims.horizon + 1)?;
    let fit = fit_graph_tv(&ds, g, r.lambda, &Default::default())?;
    let truth = e.stacked();
    let error_l2 = fit.a_hat.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    Ok(EmpiricalCheck {
        lambda: r.lambda,
        error_l2,
        bound: r.theorem_rhs.rhs,
        within_bound: error_l2 <= r.theorem_rhs.rhs,
        converged: fit.converged,
    })
}

const INGEST: Schema = &[
    ("input", None),
    ("variable", string!("custom")),
    ("transform", string!("none")),
    ("year", None),
    ("coverage_min", float!(0.75)),
    ("year_missing_max", float!(0.05)),
    ("knn_k", int!(5)),
    ("d", int!(2)),
    ("start", int!(0)),
    ("end", None),
    ("n_rep", int!(0)),
    ("t_train", int!(30)),
    ("t_val", int!(100)),
    ("t_test", int!(50)),
    ("buffer", int!(20)),
    ("methods", strings!("graph_tv", "ols_ind", "ols_pooled", "laplacian", "group_lasso", "persistence")),
    ("grid_size", int!(50)),
    ("min_ratio", float!(1e-4)),
    ("seed", int!(0)),
];

#[derive(Serialize)]
struct IngestSummary {
    variable: String,
    transform: Transform,
    state_construction: String,
    d: usize,
    window: [usize; 2],
    first_date: Option<String>,
    stations: Vec<String>,
    knn_k: usize,
    stability_definition: &'static str,
    graph_connected: bool,
    report: tvlds::ingest::PreprocessReport,
}

fn ingest(p: &Params, out: &Path, strict: bool) -> Result<(), Failure> {
    let input = p.str("input")?;
    let raw = load_station_csv(Path::new(input), p.str("variable")?)?;
    let name = p.str("transform")?;
    let transform = Transform::parse(name).ok_or_else(|| usage(format!("unknown transform {name:?} (none, log, loglog)")))?;
    let year = match p.opt_usize("year")? {
        Some(y) => Some(i32::try_from(y).map_err(|_| usage("year out of range"))?),
        None => None,
    };
    let opts = PreprocessOptions {
        transform,
        year,
        coverage_min: p.f64("coverage_min")?,
        year_missing_max: p.f64("year_missing_max")?,
    };
    let (table, report) = preprocess_series(&raw, &opts)?;
    if table.num_stations() == 0 {
        return Err(Failure::Data("no station survived preprocessing".into()));
    }
    let requested = p.usize("knn_k")?;
    let (g, connected) = station_graph(&table, requested)?;
    let k = match g.kind() {
        GraphKind::Knn { k } => *k,
        _ => requested,
    };
    if k < requested {
        eprintln!("warning: knn_k = {requested} exceeds the other stations available; using k = {k}");
    }
    if !connected {
        eprintln!("warning: the {k}-nearest-neighbour graph is disconnected");
    }
    let d = p.usize("d")?;
    let start = p.usize("start")?;
    let end = p.opt_usize("end")?.unwrap_or(table.series[0].values.len());
    let panel = to_lds_panel(&table, start, end, d)?;
    emit_with(out, "panel.csv", |b| tvlds::io::write_panel_csv(b, &panel))?;
    emit_json(out, "graph.json", &g.to_file())?;
    emit_with(out, "coords.csv", |b| write_coords(b, &table.stations))?;
    emit_json(
        out,
        "preprocess.json",
        &IngestSummary {
            variable: table.variable.clone(),
            transform,
            state_construction: format!("lag embedding x_t = (y_t, ..., y_(t-{}))", d - 1),
            d,
            window: [start, end],
            first_date: table.series[0].dates.get(start).map(|d| d.to_string()),
            stations: table.stations.iter().map(|s| s.id.clone()).collect(),
            knn_k: k,
            stability_definition: tvlds::experiments::STABILITY_DEFINITION,
            graph_connected: connected,
            report,
        },
    )?;
    println!("{} stations, {} states each, written to {}", table.num_stations(), panel.horizon() + 1, out.display());

    let n_rep = p.usize("n_rep")?;
    if n_rep == 0 {
        return Ok(());
    }
    let cfg = StationConfig {
        split: SplitSpec { t_train: p.usize("t_train")?, t_val: p.usize("t_val")?, t_test: p.usize("t_test")?, buffer: p.usize("buffer")? },
        n_rep,
        seed: p.u64("seed")?,
        methods: methods(p, "methods")?,
        grid_size: p.usize("grid_size")?,
        min_ratio: p.f64("min_ratio")?,
    };
    let res = run_station_experiment(&panel, &g, &cfg)?;
    emit_with(out, "station_rows.csv", |b| write_station_rows(b, &res.rows))?;
    emit_with(out, "stability.csv", |b| write_stability(b, &res.stability))?;
    emit_with(out, "failures.csv", |b| write_failures(b, &res.failures))?;
    for s in &res.stability {
        println!("{:>12} pred_mse {:.6e} ± {:.3e}, stability {:?}", s.method, s.mean_pred_mse, s.ci95_pred, s.stability);
    }
    let bad = res.rows.iter().filter(|r| r.flags.split(';').any(|f| f == "max_iter")).count();
    check_converged(strict, bad, "selected fit")
}

const REPRODUCE: Schema = &[
    ("n_rep", int!(15)),
    ("methods", strings!("graph_tv", "ols_ind")),
    ("grid_size", int!(50)),
    ("seed", int!(0)),
];

/// Ordering of graph-TV against individual OLS at one sweep value, in
/// units of the standard error of the difference of means.
#[derive(Serialize)]
struct Ordering {
    sweep: &'static str,
    value: f64,
    graph_tv: f64,
    ols_ind: f64,
    gap_in_se: f64,
}

fn mean_se(res: &SweepResult, value: f64, method: Method) -> (f64, f64) {
    let xs: Vec<f64> = res
        .rows
        .iter()
        .filter(|r| r.sweep_value == value && r.method == method.name())
        .filter_map(|r| r.param_mse)
        .collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn reproduce(p: &Params, out: &Path, strict: bool) -> Result<(), Failure> {
    let mut methods = methods(p, "methods")?;
    for needed in [Method::GraphTv, Method::OlsIndividual] {
        if !methods.contains(&needed) {
            methods.push(needed);
        }
    }
    let mut over_t = SweepConfig::new(SweepAxis::T, vec![4.0, 8.0, 16.0]);
    let mut over_m = SweepConfig::new(SweepAxis::M, vec![16.0, 36.0, 64.0]);
    over_m.base.t_train = 10;
    for cfg in [&mut over_t, &mut over_m] {
        cfg.n_rep = p.usize("n_rep")?;
        cfg.base_seed = p.u64("seed")?;
        cfg.grid_size = p.usize("grid_size")?;
        cfg.methods = methods.clone();
        cfg.validate().map_err(|e| usage(e.to_string()))?;
    }
    let mut orderings = Vec::new();
    let mut bad = 0;
    for (dir, cfg) in [("function_of_time_pw", &over_t), ("error_vs_m", &over_m)] {
        let res = run_sweep(cfg)?;
        write_sweep(&out.join(dir), &res)?;
        bad += capped(&res);
        println!("{dir}:");
        print_aggregate(&res);
        for &v in &cfg.values {
            let (tv, se_tv) = mean_se(&res, v, Method::GraphTv);
            let (ols, se_ols) = mean_se(&res, v, Method::OlsIndividual);
            orderings.push(Ordering {
                sweep: dir,
                value: v,
                graph_tv: tv,
                ols_ind: ols,
                gap_in_se: (ols - tv) / (se_tv * se_tv + se_ols * se_ols).sqrt(),
            });
        }
    }
    emit_json(out, "orderings.json", &orderings)?;
    check_converged(strict, bad, "selected fit")
}

