//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

mod common;

use std::time::{Duration, Instant};

use common::{brute_force, instance, max_diff};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tvlds::analysis::{cheeger_exact_small, compat_exact_small, compat_lower_bound, scaling_factors};
use tvlds::estimators::{
    fit_graph_tv, fit_ols_individual, fit_ols_pooled, lambda_max, regularization_path, tv_objective, FitResult,
    PathOptions, SolverOptions,
};
use tvlds::experiments::{run_sweep, SweepAxis, SweepConfig, SweepResult, Topology};
use tvlds::graph::{build_graph, spectrum, Graph, GraphKind};
use tvlds::lds::{deltag_bounds, grammian, grammian_bundle, l_t, lifted_matrix, lifted_norm, random_stable_ensemble};
use tvlds::theory::{theory_report, Regime, TheoryOptions, TheoryReport};
use tvlds::{Method, SystemEnsemble};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome, Option<Duration>)> = vec![
        ("graph spectra", graph_spectra, Some(Duration::from_secs(1))),
        ("scaling-factor bounds", scaling_bounds, None),
        ("compatibility oracle", compat_oracle, Some(Duration::from_secs(30))),
        ("cheeger", cheeger, None),
        ("coupling-dispersion bounds", dispersion_bounds, None),
        ("solver correctness", solver_correctness, Some(Duration::from_secs(60))),
        ("grammian and lifted norm", grammian_checks, None),
        ("ordering over T", ordering_over_t, Some(Duration::from_secs(600))),
        ("ordering over m", ordering_over_m, Some(Duration::from_secs(600))),
        ("theory plumbing", theory_plumbing, None),
    ];
    let mut failed = 0;
    for (name, check, limit) in criteria {
        let start = Instant::now();
        let mut o = check();
        let took = start.elapsed();
        if let Some(limit) = limit {
            if took > limit {
                o.pass = false;
                o.detail.push_str(&format!("; runtime {took:.2?} exceeds {limit:?}"));
            }
        }
        if !o.pass {
            failed += 1;
        }
        println!("{} {name}: {} [{took:.2?}]", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn graph_spectra() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut pass = true;
    for m in 3..=12 {
        let complete = spectrum(&build_graph(&GraphKind::Complete, m).unwrap()).unwrap().fiedler;
        let star = spectrum(&build_graph(&GraphKind::Star, m).unwrap()).unwrap().fiedler;
        let (ec, es) = ((complete - m as f64).abs(), (star - 1.0).abs());
        pass &= ec <= 1e-8 * m as f64 && es <= 1e-8;
        worst = worst.max(ec / m as f64).max(es);
    }
    outcome(pass, format!("complete(m) = m and star(m) = 1 for m = 3..12, worst error {worst:.1e}"))
}

fn scaling_bounds() -> Outcome {
    let mut graphs: Vec<(String, Graph)> = vec![
        ("path(10)".into(), build_graph(&GraphKind::Path, 10).unwrap()),
        ("star(10)".into(), build_graph(&GraphKind::Star, 10).unwrap()),
        ("complete(10)".into(), build_graph(&GraphKind::Complete, 10).unwrap()),
        ("grid 5x5".into(), build_graph(&GraphKind::Grid2d { nx: 5, ny: 5 }, 25).unwrap()),
    ];
    for seed in 0..5 {
        graphs.push((format!("er(20, 0.5, seed {seed})"), Topology::ErdosRenyi { p: 0.5 }.build(20, seed).unwrap()));
    }
    let mut min_slack = f64::INFINITY;
    for (_, g) in &graphs {
        let sp = spectrum(g).unwrap();
        let s = scaling_factors(&sp).unwrap();
        let lam = sp.fiedler;
        let mu_bound = (2f64.sqrt() / lam).min(1.0 / lam.sqrt());
        min_slack = min_slack.min(mu_bound - s.mu).min(1.0 / lam.sqrt() - s.mu_prime);
    }
    outcome(min_slack >= -1e-9, format!("{} graphs, minimum slack {min_slack:.3e}", graphs.len()))
}

fn random_graph(rng: &mut ChaCha8Rng, m: usize) -> Graph {
    match rng.random_range(0..5) {
        0 => build_graph(&GraphKind::Path, m).unwrap(),
        1 => build_graph(&GraphKind::Star, m).unwrap(),
        2 => build_graph(&GraphKind::Complete, m).unwrap(),
        3 => build_graph(&GraphKind::Grid2d { nx: 2, ny: m / 2 }, 2 * (m / 2)).unwrap(),
        _ => Topology::ErdosRenyi { p: 0.5 }.build(m, rng.random()).unwrap(),
    }
}

fn compat_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut min_slack = f64::INFINITY;
    let mut largest = 0;
    for _ in 0..50 {
        let m = rng.random_range(4..=8);
        let g = random_graph(&mut rng, m);
        let d = rng.random_range(1..=2);
        let total = g.num_edges() * d * d;
        let size = rng.random_range(1..=total.min(12));
        let mut pool: Vec<usize> = (0..total).collect();
        for i in 0..size {
            let j = rng.random_range(i..total);
            pool.swap(i, j);
        }
        let set = &pool[..size];
        largest = largest.max(size);
        let exact = compat_exact_small(&g, set, d).unwrap();
        let r = compat_lower_bound(&g, set, d).unwrap();
        // The bound, recomputed from its definition.
        let bound = 1.0 / (2.0 * (g.max_degree() as f64).sqrt().min((r.edge_set.len() as f64).sqrt()));
        if (bound - r.lower_bound).abs() > 1e-15 {
            return outcome(false, format!("library bound {} differs from {bound}", r.lower_bound));
        }
        min_slack = min_slack.min(exact - bound);
    }
    outcome(min_slack >= -1e-9, format!("50 instances, |T| up to {largest}, minimum slack {min_slack:.3e}"))
}

fn cheeger() -> Outcome {
    let h5 = cheeger_exact_small(&build_graph(&GraphKind::Complete, 5).unwrap()).unwrap();
    let h6 = cheeger_exact_small(&build_graph(&GraphKind::Complete, 6).unwrap()).unwrap();
    outcome(h5 == 3.0 && h6 == 3.0, format!("h(K5) = {h5}, h(K6) = {h6}"))
}

fn dispersion_bounds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut min_frob = f64::INFINITY;
    let mut min_cheeger = f64::INFINITY;
    for k in 0..20 {
        let m = rng.random_range(3..=12);
        let g = random_graph(&mut rng, m);
        let m = g.num_nodes();
        let horizon = rng.random_range(1..=20);
        let rho = rng.random_range(0.05..=0.8);
        let e = random_stable_ensemble(m, 2, rho, 500 + k).unwrap();
        let exact = grammian_bundle(&e, horizon).unwrap().delta_g;
        let b = deltag_bounds(&e, &g, horizon).unwrap();
        min_frob = min_frob.min(b.frobenius - exact);
        min_cheeger = min_cheeger.min(b.tv_cheeger.unwrap() - exact);
    }
    let mut min_lt = f64::INFINITY;
    for i in 0..=19 {
        let rho = 0.05 * i as f64;
        for horizon in [1, 2, 3, 5, 10, 20, 50, 100, 500] {
            let v = l_t(rho, horizon).unwrap();
            min_lt = min_lt.min(v.closed_bound - v.exact);
        }
    }
    let pass = min_frob >= -1e-9 && min_cheeger >= -1e-9 && min_lt >= -1e-9;
    outcome(
        pass,
        format!(
            "20 ensembles, min slack Frobenius {min_frob:.3e}, Cheeger {min_cheeger:.3e}; L_T grid min slack {min_lt:.3e}"
        ),
    )
}

fn solver_correctness() -> Outcome {
    let opts = SolverOptions::default();
    let mut fits: Vec<FitResult> = Vec::new();
    let mut notes = Vec::new();
    let mut pass = true;

    // (i) λ = 0 against per-node least squares.
    let mut worst_ols: f64 = 0.0;
    for (k, (kind, m, d)) in
        [(GraphKind::Path, 6, 2), (GraphKind::Grid2d { nx: 3, ny: 3 }, 9, 3), (GraphKind::Complete, 5, 1)]
            .into_iter()
            .enumerate()
    {
        let (g, ds) = instance(kind, m, d, 25, 3 + k as u64);
        let fit = fit_graph_tv(&ds, &g, 0.0, &opts).unwrap();
        worst_ols = worst_ols.max(max_diff(&fit.a_hat, &fit_ols_individual(&ds).a_hat));
        fits.push(fit);
    }
    pass &= worst_ols <= 1e-6;
    notes.push(format!("(i) max |λ=0 − OLS| {worst_ols:.1e}"));

    // (ii) just above λ_max the fit is fused and equals pooled least squares.
    let (mut worst_tv, mut worst_pool): (f64, f64) = (0.0, 0.0);
    for (k, (kind, m, d)) in [
        (GraphKind::Path, 7, 2),
        (GraphKind::Star, 6, 2),
        (GraphKind::Complete, 5, 2),
        (GraphKind::Grid2d { nx: 3, ny: 2 }, 6, 1),
        (GraphKind::ErdosRenyi { p: 0.6, seed: 4 }, 8, 2),
    ]
    .into_iter()
    .enumerate()
    {
        let (g, ds) = instance(kind, m, d, 12, 10 + k as u64);
        let fit = fit_graph_tv(&ds, &g, 1.01 * lambda_max(&ds, &g).unwrap(), &opts).unwrap();
        worst_tv = worst_tv.max(fit.tv_norm(&g));
        worst_pool = worst_pool.max(max_diff(&fit.a_hat, &fit_ols_pooled(&ds).a_hat));
        fits.push(fit);
    }
    pass &= worst_tv <= 1e-8 && worst_pool <= 1e-6;
    notes.push(format!("(ii) max TV {worst_tv:.1e}, max |fit − pooled| {worst_pool:.1e}"));

    // (iv) brute-force objective on problems with at most four unknowns.
    let mut worst_rel: f64 = 0.0;
    for (k, (kind, m, t, lambda)) in [
        (GraphKind::Path, 3, 4, 0.1),
        (GraphKind::Path, 2, 5, 0.3),
        (GraphKind::Star, 4, 6, 0.05),
        (GraphKind::Complete, 4, 3, 0.2),
        (GraphKind::Path, 4, 8, 0.02),
    ]
    .into_iter()
    .enumerate()
    {
        let (g, ds) = instance(kind, m, 1, t, 40 + k as u64);
        let fit = fit_graph_tv(&ds, &g, lambda, &opts).unwrap();
        let ols = fit_ols_individual(&ds);
        let half = 2.0 * ols.a_hat.iter().fold(1.0f64, |a, x| a.max(x.abs()));
        let (_, oracle) = brute_force(|a| tv_objective(&ds, &g, lambda, a), &ols.a_hat, half);
        worst_rel = worst_rel.max((oracle - fit.objective).abs() / oracle);
        fits.push(fit);
    }
    pass &= worst_rel <= 1e-4;
    notes.push(format!("(iv) max relative objective gap {worst_rel:.1e}"));

    // A warm-started path adds fits across the whole λ range.
    let (g, ds) = instance(GraphKind::Grid2d { nx: 4, ny: 4 }, 16, 2, 20, 90);
    let (_, val) = instance(GraphKind::Grid2d { nx: 4, ny: 4 }, 16, 2, 10, 91);
    let path = regularization_path(&ds, &g, &PathOptions { grid_size: 30, ..PathOptions::default() }, &val).unwrap();
    fits.extend(path.fits);

    // (iii) certificate on every converged fit.
    let converged: Vec<&FitResult> = fits.iter().filter(|f| f.converged).collect();
    let worst_gap = converged.iter().fold(0.0f64, |a, f| a.max(f.kkt_gap));
    pass &= worst_gap <= 1e-6;
    notes.push(format!("(iii) {}/{} fits converged, max KKT gap {worst_gap:.1e}", converged.len(), fits.len()));
    outcome(pass, notes.join("; "))
}

fn grammian_checks() -> Outcome {
    let mut min_trace = f64::INFINITY;
    let mut min_beta = f64::INFINITY;
    for (k, d) in [1usize, 2, 3, 4].into_iter().enumerate() {
        let e = random_stable_ensemble(5, d, 0.2 + 0.2 * k as f64, 300 + k as u64).unwrap();
        for a in &e.matrices {
            let rho = a.clone().svd(false, false).singular_values.max();
            for t in [0, 1, 2, 5, 20, 100, 400] {
                min_trace = min_trace.min(d as f64 / (1.0 - rho * rho) - grammian(a, t).trace());
            }
            for horizon in [1, 10, 100, 1000] {
                min_beta = min_beta.min(1.0 / (1.0 - rho) - lifted_norm(a, horizon));
            }
        }
    }
    let mut worst_svd: f64 = 0.0;
    let mut cases = 0;
    for d in 1..=4 {
        let e = random_stable_ensemble(3, d, 0.95, 400 + d as u64).unwrap();
        for a in &e.matrices {
            for horizon in [1, 7, 50, 400 / d] {
                let dense = lifted_matrix(a, horizon).svd(false, false).singular_values.max();
                worst_svd = worst_svd.max((dense - lifted_norm(a, horizon)).abs());
                cases += 1;
            }
        }
    }
    let pass = min_trace >= -1e-8 && min_beta >= -1e-8 && worst_svd <= 1e-8;
    outcome(
        pass,
        format!(
            "20 matrices: min trace slack {min_trace:.3e}, min lifted-norm slack {min_beta:.3e}; \
             {cases} dense comparisons with dT <= 400, max error {worst_svd:.1e}"
        ),
    )
}

/// Mean, standard error and count of one method's parameter MSE at one value.
fn summary(res: &SweepResult, value: f64, method: Method) -> (f64, f64, usize) {
    let xs: Vec<f64> = res
        .rows
        .iter()
        .filter(|r| r.sweep_value == value && r.method == method.name())
        .filter_map(|r| r.param_mse)
        .collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt(), xs.len())
}

fn ordering_over_t() -> Outcome {
    let cfg = SweepConfig::new(SweepAxis::T, vec![4.0, 8.0, 16.0]);
    let res = run_sweep(&cfg).unwrap();
    let mut pass = res.failures.is_empty();
    let mut notes = Vec::new();
    for &t in &cfg.values {
        let (tv, se_tv, n_tv) = summary(&res, t, Method::GraphTv);
        let (ols, se_ols, n_ols) = summary(&res, t, Method::OlsIndividual);
        let se = (se_tv * se_tv + se_ols * se_ols).sqrt();
        let ok = n_tv == 15 && n_ols == 15 && ols - tv > 2.0 * se;
        pass &= ok;
        notes.push(format!("T={t}: TV {tv:.4} vs OLS {ols:.4}, gap {:.1} SE", (ols - tv) / se));
    }
    outcome(pass, notes.join("; "))
}

fn ordering_over_m() -> Outcome {
    let mut cfg = SweepConfig::new(SweepAxis::M, vec![16.0, 36.0, 64.0]);
    cfg.base.t_train = 10;
    let res = run_sweep(&cfg).unwrap();
    let (tv16, se16, _) = summary(&res, 16.0, Method::GraphTv);
    let (tv64, se64, _) = summary(&res, 64.0, Method::GraphTv);
    let (o16, so16, _) = summary(&res, 16.0, Method::OlsIndividual);
    let (o64, so64, _) = summary(&res, 64.0, Method::OlsIndividual);
    let se_tv = (se16 * se16 + se64 * se64).sqrt();
    let se_ols = (so16 * so16 + so64 * so64).sqrt();
    let tv_ok = tv16 - tv64 > 2.0 * se_tv;
    let ols_ok = (o16 - o64).abs() < 2.0 * se_ols;
    outcome(
        res.failures.is_empty() && res.rows.len() == 3 * 15 * 2 && tv_ok && ols_ok,
        format!(
            "TV {tv16:.4} -> {tv64:.4} ({:.1} SE); OLS {o16:.4} -> {o64:.4} ({:.1} SE)",
            (tv16 - tv64) / se_tv,
            (o16 - o64).abs() / se_ols
        ),
    )
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-10 * a.abs().max(b.abs())
}

/// Independent evaluation of every report quantity from first principles:
/// dense pseudoinverse, explicit matrix powers and dense singular values.
fn spreadsheet(g: &Graph, e: &SystemEnsemble, horizon: usize, rho: f64, delta: f64, regime: Regime) -> Sheet {
    let m = g.num_nodes();
    let d = e.d;
    let ne = g.num_edges();
    let (mf, df, tf, ef) = (m as f64, d as f64, horizon as f64, ne as f64);
    let d2 = df * df;

    let mut dmat = DMatrix::zeros(ne, m);
    for (j, &(u, v)) in g.edges().iter().enumerate() {
        dmat[(j, u)] = 1.0;
        dmat[(j, v)] = -1.0;
    }
    let dp = dmat.pseudo_inverse(1e-12).unwrap();
    let mu = (0..ne).map(|j| dp.column(j).norm()).fold(0.0, f64::max);
    let mu_prime = (0..m).map(|l| dp.row(l).norm()).fold(0.0, f64::max);
    let max_deg = g.degrees().into_iter().max().unwrap() as f64;

    let per_node: Vec<DMatrix<f64>> = e
        .matrices
        .iter()
        .map(|a| {
            let mut sum = DMatrix::zeros(d, d);
            for t in 1..=horizon {
                for k in 0..t {
                    let p = a.pow(k as u32);
                    sum += &p * p.transpose();
                }
            }
            sum
        })
        .collect();
    let mean = per_node.iter().fold(DMatrix::zeros(d, d), |acc, x| acc + x) / mf;
    let mut delta_g: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            let s: f64 = per_node.iter().map(|x| (x[(i, j)] - mean[(i, j)]).powi(2)).sum();
            delta_g = delta_g.max(s.sqrt());
        }
    }
    let total_trace: f64 = per_node.iter().map(|x| x.trace()).sum();
    let max_diag = per_node.iter().flat_map(|x| (0..d).map(move |i| x[(i, i)])).fold(0.0, f64::max);
    let beta = e
        .matrices
        .iter()
        .map(|a| lifted_matrix(a, horizon).svd(false, false).singular_values.max())
        .fold(0.0, f64::max);

    let mut tv = 0.0;
    let mut changed = 0usize;
    let mut changed_edges = 0usize;
    for &(u, v) in g.edges() {
        let diff = &e.matrices[u] - &e.matrices[v];
        tv += diff.abs().sum();
        let c = diff.iter().filter(|x| x.abs() > 1e-12).count();
        changed += c;
        changed_edges += usize::from(c > 0);
    }
    let (size, kappa, tail) = match regime {
        Regime::Smooth => (0usize, 1.0, tv),
        Regime::FewChanges => (changed, 1.0 / (2.0 * max_deg.sqrt().min((changed_edges as f64).sqrt())), 0.0),
    };
    let sf = size as f64;
    let phi = 1.0 + sf.sqrt() / kappa + tail;
    let psi = 4.0 * sf.sqrt() / kappa + 4.0 * tail + 1.0;

    let lid = (1.0 / delta).ln();
    let zeta1 = total_trace * lid;
    let f1 = (2.0 * (zeta1 / mf + 1.0)).sqrt() * (lid + d2 / 2.0 * (zeta1 / mf + 1.0).ln()).sqrt();
    let zeta2 = mu * mu * max_diag * (d2 * ef / delta).ln().powi(2);
    let f2 = zeta2.sqrt();
    let lg = (d2 * ef).ln();
    let f3 = beta * beta
        * (mu_prime * mu_prime * psi * psi * lg + mu_prime * tf.sqrt() * psi * lg.sqrt() + tf.sqrt());
    let g3 = beta * beta * (mu_prime * psi * lg.sqrt() + tf.sqrt());

    let big_delta = (1.0 - rho) * (1.0 - rho);
    let l1 = (df * tf / (delta * big_delta)).ln();
    let l2 = (df * ef / delta).ln();
    let lambda = 1.0 / mf * (tf / big_delta).sqrt() * (df.powf(1.5) * l1).max(mu * l2);

    let v = 1.0;
    let dd = big_delta * big_delta;
    let conditions = vec![
        ("cond1", f3 * v, tf),
        ("cond2", beta * beta / mf * ((mf * tf).sqrt() + df) * (df + v), tf),
        ("cond3", mu / mf.sqrt() * phi * (df * delta_g + beta * beta * tf.sqrt() * (ef * df / delta).ln()), tf),
        ("lambda", 2.0 / mf * f1.max(f2), lambda),
        ("C1", v / dd * (1.0 + mu_prime * phi * l2.sqrt()).powi(2), tf),
        ("C2", (df + v).powi(2) / (mf * dd), tf),
        ("C3a", mu * mu * phi * phi * l2 * l2 / (mf * dd), tf),
        ("C3b", mu / mf.sqrt() * phi * df * delta_g, tf),
    ];
    let rhs = 2.0 * mf * lambda / tf * (1.0 + 3.0 * sf.sqrt() / kappa) + (8.0 * lambda * mf / tf * tail).sqrt();
    Sheet { terms: [zeta1, zeta2, f1, f2, f3, g3, phi, psi], lambda, conditions, rhs }
}

struct Sheet {
    terms: [f64; 8],
    lambda: f64,
    conditions: Vec<(&'static str, f64, f64)>,
    rhs: f64,
}

fn compare(report: &TheoryReport, sheet: &Sheet) -> Result<usize, String> {
    let f = &report.f_terms;
    let ours = [f.zeta1, f.zeta2, f.f1, f.f2, f.f3, f.g3, f.phi_s, f.psi_s];
    let names = ["zeta1", "zeta2", "F1", "F2", "F3", "G3", "phi", "psi"];
    let mut checked = 0;
    for ((n, a), b) in names.iter().zip(ours).zip(sheet.terms) {
        if !close(a, b) {
            return Err(format!("{n}: report {a} vs {b}"));
        }
        checked += 1;
    }
    if !close(report.lambda, sheet.lambda) {
        return Err(format!("lambda: report {} vs {}", report.lambda, sheet.lambda));
    }
    if report.conditions.len() != sheet.conditions.len() {
        return Err(format!("{} condition rows, expected {}", report.conditions.len(), sheet.conditions.len()));
    }
    for (row, &(name, lhs, rhs)) in report.conditions.iter().zip(&sheet.conditions) {
        if row.name != name || !close(row.lhs, lhs) || !close(row.rhs, rhs) || row.pass != (lhs <= rhs) {
            return Err(format!("{name}: report ({}, {}, {}) vs ({lhs}, {rhs})", row.lhs, row.rhs, row.pass));
        }
        checked += 1;
    }
    if !close(report.theorem_rhs.rhs, sheet.rhs) {
        return Err(format!("bound: report {} vs {}", report.theorem_rhs.rhs, sheet.rhs));
    }
    Ok(checked + 2)
}

fn theory_plumbing() -> Outcome {
    let g = build_graph(&GraphKind::Complete, 16).unwrap();
    let mats = (0..16)
        .map(|l| DMatrix::from_row_slice(2, 2, &[if l < 8 { 0.2 } else { -0.2 }, 0.1, 0.0, 0.3]))
        .collect();
    let e = SystemEnsemble::new(2, mats).unwrap();
    let mut notes = Vec::new();
    for regime in [Regime::Smooth, Regime::FewChanges] {
        for horizon in [50, 200] {
            let opts = TheoryOptions { regime, rho_max: Some(0.5), ..TheoryOptions::new(horizon) };
            let report = theory_report(&g, &e, &opts).unwrap();
            let sheet = spreadsheet(&g, &e, horizon, 0.5, 0.1, regime);
            match compare(&report, &sheet) {
                Ok(n) => notes.push(format!("{regime:?} T={horizon}: {n} values agree")),
                Err(msg) => return outcome(false, format!("{regime:?} T={horizon}: {msg}")),
            }
        }
    }
    outcome(true, notes.join("; "))
}
