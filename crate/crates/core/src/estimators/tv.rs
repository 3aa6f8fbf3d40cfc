//! Graph-TV penalized least squares by ADMM on the split `z = (D ⊗ I) a`,
//! with an active-set polish that turns a good iterate into an exactly
//! optimal point plus a dual certificate.
//!
//! Internally coefficients live in the row layout `W` (`md x d`), column `i`
//! holding row `i` of every `A_l`; the loss and the penalty both separate
//! over these columns, and they all share one system matrix.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{flags, pack, unpack, DesignSystem, FitResult, Method, Quadratic, SolverOptions};
use crate::error::{Error, Result};
use crate::graph::{spectrum_of, Graph, IncidenceMatrix, UnionFind};
use crate::linalg::pinv_psd;

/// Solver state carried between neighbouring λ values.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub w: DMatrix<f64>,
    pub z: DMatrix<f64>,
    /// Unscaled dual `ν` on the edge differences.
    pub nu: DMatrix<f64>,
}

pub fn fit_graph_tv(ds: &DesignSystem, g: &Graph, lambda: f64, opts: &SolverOptions) -> Result<FitResult> {
    fit_graph_tv_with(ds, &g.incidence(), lambda, opts, None).map(|(f, _)| f)
}

/// Fit with an explicit incidence matrix (any edge orientation) and an
/// optional warm start. Returns the fit and the final solver state.
pub fn fit_graph_tv_with(
    ds: &DesignSystem,
    inc: &IncidenceMatrix,
    lambda: f64,
    opts: &SolverOptions,
    warm: Option<&WarmStart>,
) -> Result<(FitResult, WarmStart)> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be finite and nonnegative, got {lambda}")));
    }
    if inc.num_nodes() != ds.num_nodes() {
        return Err(Error::InvalidArgument("graph and design disagree on the node count".into()));
    }
    let q = Quadratic::new(ds);
    let rows = inc.rows();
    let d = ds.d;
    let md = q.m * d;
    let ne = rows.len() * d;
    let mut fit_flags: Vec<&'static str> = Vec::new();

    let base = q.mean_diagonal();
    let mut rho = opts.rho * if base > 0.0 { base } else { 1.0 };
    let mut chol = factor(&q, rows, rho, &mut fit_flags);

    let (mut w, mut z, mut u) = match warm {
        Some(ws) if ws.w.shape() == (md, d) && ws.z.shape() == (ne, d) && ws.nu.shape() == (ne, d) => {
            (ws.w.clone(), ws.z.clone(), &ws.nu / rho)
        }
        _ => (DMatrix::zeros(md, d), DMatrix::zeros(ne, d), DMatrix::zeros(ne, d)),
    };

    let c_norm = q.linear.norm();
    let mut best: Option<Candidate> = None;
    let mut last_pattern: Option<Vec<bool>> = None;
    let mut rho_updates = 0;
    let (mut r_p, mut r_d) = (f64::INFINITY, f64::INFINITY);
    let mut iterations = 0;
    let mut certified = false;

    for it in 1..=opts.max_iter {
        iterations = it;
        let rhs = &q.linear + d_transpose(rows, q.m, &(&z - &u)) * rho;
        w = chol.solve(&rhs);
        let dw = d_apply(rows, &w);
        let v = &dw + &u;
        let z_old = std::mem::replace(&mut z, v.map(|x| soft(x, lambda / rho)));
        u = v - &z;

        r_p = (&dw - &z).norm();
        r_d = rho * d_transpose(rows, q.m, &(&z - &z_old)).norm();
        let scale_p = dw.norm().max(z.norm()).max(w.norm() / (q.m as f64).sqrt()).max(f64::MIN_POSITIVE);
        let scale_d = c_norm.max(rho * d_transpose(rows, q.m, &u).norm()).max(f64::MIN_POSITIVE);
        let small = r_p <= opts.tol_primal * scale_p && r_d <= opts.tol_dual * scale_d;

        let pattern: Vec<bool> = z.iter().map(|&x| x == 0.0).collect();
        let changed = last_pattern.as_ref() != Some(&pattern);
        if it == 1 || (it % 10 == 0 && changed) || it % 50 == 0 || small {
            let cand = polish(&q, rows, &z, &(&u * rho), lambda);
            last_pattern = Some(pattern);
            let done = cand.gap <= opts.kkt_tol;
            keep_best(&mut best, cand);
            if done {
                certified = true;
                break;
            }
        }
        if small {
            let nu = &u * rho;
            let gap = kkt_gap(&q, rows, &w, &nu, &z, lambda);
            let ok = gap <= opts.kkt_tol;
            keep_best(&mut best, Candidate { w: w.clone(), nu, gap, pinv: false, polished: false });
            if ok {
                fit_flags.push(flags::RESIDUAL_STOP);
                certified = true;
                break;
            }
        }

        if it % 10 == 0 && rho_updates < opts.max_rho_updates {
            let rp_rel = r_p / scale_p;
            let rd_rel = r_d / scale_d;
            let factor_change = if rp_rel > 10.0 * rd_rel {
                2.0
            } else if rd_rel > 10.0 * rp_rel {
                0.5
            } else {
                1.0
            };
            if factor_change != 1.0 {
                rho *= factor_change;
                u /= factor_change;
                chol = factor(&q, rows, rho, &mut fit_flags);
                rho_updates += 1;
            }
        }
    }

    let nu_plain = &u * rho;
    if !certified {
        let gap = kkt_gap(&q, rows, &w, &nu_plain, &z, lambda);
        keep_best(&mut best, Candidate { w: w.clone(), nu: nu_plain.clone(), gap, pinv: false, polished: false });
        fit_flags.push(flags::MAX_ITER);
    }
    let best = best.expect("at least one candidate");
    if best.pinv {
        fit_flags.push(flags::RANK_DEFICIENT);
    }
    let a_hat = unpack(&best.w, d);
    let objective = ds.loss(&a_hat) + lambda * tv_rows(rows, &best.w);
    let mut fit = FitResult {
        method: Method::GraphTv,
        d,
        lambda,
        a_hat,
        objective,
        iterations,
        primal_residual: if best.polished { 0.0 } else { r_p },
        dual_residual: if best.polished { 0.0 } else { r_d },
        kkt_gap: best.gap,
        converged: certified,
        flags: Vec::new(),
        dual: Some(dual_to_edge_major(&best.nu, d)),
    };
    for f in fit_flags {
        fit.flag(f);
    }
    let state = WarmStart { w: best.w, z, nu: best.nu };
    Ok((fit, state))
}

/// Smallest λ (for trees; an upper bound when the graph has cycles) at which
/// the fully fused pooled solution is optimal: `‖(D ⊗ I)(L⁺ ⊗ I) ∇‖_∞` at the
/// pooled fit.
pub fn lambda_max(ds: &DesignSystem, g: &Graph) -> Result<f64> {
    lambda_max_with(ds, &g.incidence()).map(|(l, _)| l)
}

/// λ_max plus the fused solver state that certifies it.
pub fn lambda_max_with(ds: &DesignSystem, inc: &IncidenceMatrix) -> Result<(f64, WarmStart)> {
    let m = ds.num_nodes();
    if inc.num_nodes() != m {
        return Err(Error::InvalidArgument("graph and design disagree on the node count".into()));
    }
    let mut uf = UnionFind::new(m);
    for &(a, b) in inc.rows() {
        uf.union(a, b);
    }
    let components = uf.labels().into_iter().max().map_or(0, |c| c + 1);
    if components != 1 {
        return Err(Error::Disconnected { components });
    }
    let q = Quadratic::new(ds);
    let d = ds.d;
    let pooled = pooled_matrix(ds).0;
    let a: Vec<f64> = (0..m).flat_map(|_| pooled.as_slice().iter().copied()).collect();
    let w = pack(&a, d);
    let grad = q.gradient(&w);
    let lpinv = spectrum_of(inc, 1)?.laplacian_pinv;
    let rows = inc.rows();
    let mut nu = DMatrix::zeros(rows.len() * d, d);
    for i in 0..d {
        for j in 0..d {
            let gj = DVector::from_iterator(m, (0..m).map(|l| grad[(l * d + j, i)]));
            let phi = &lpinv * gj;
            for (e, &(t, h)) in rows.iter().enumerate() {
                nu[(e * d + j, i)] = -(phi[h] - phi[t]);
            }
        }
    }
    let lmax = nu.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    Ok((lmax, WarmStart { w, z: DMatrix::zeros(rows.len() * d, d), nu }))
}

/// `(Σ X̃_l X_lᵀ)(Σ X_l X_lᵀ)⁺` and whether the pooled Gram was singular.
pub(crate) fn pooled_matrix(ds: &DesignSystem) -> (DMatrix<f64>, bool) {
    let d = ds.d;
    let mut s = DMatrix::zeros(d, d);
    let mut c = DMatrix::zeros(d, d);
    for l in 0..ds.num_nodes() {
        s += ds.gram(l);
        c += ds.cross(l);
    }
    let (p, rank) = pinv_psd(&s, 1e-12);
    (c * p, rank < d)
}

struct Candidate {
    w: DMatrix<f64>,
    nu: DMatrix<f64>,
    gap: f64,
    pinv: bool,
    polished: bool,
}

fn keep_best(best: &mut Option<Candidate>, cand: Candidate) {
    if best.as_ref().is_none_or(|b| cand.gap < b.gap) {
        *best = Some(cand);
    }
}

fn factor(q: &Quadratic, rows: &[(usize, usize)], rho: f64, fit_flags: &mut Vec<&'static str>) -> Cholesky<f64, Dyn> {
    let k = q.system(rows, rho);
    if let Some(c) = Cholesky::new(k.clone()) {
        return c;
    }
    let n = k.nrows();
    let mut ridge = 1e-12 * k.diagonal().amax().max(1.0);
    loop {
        if let Some(c) = Cholesky::new(&k + DMatrix::identity(n, n) * ridge) {
            if !fit_flags.contains(&flags::RIDGE) {
                fit_flags.push(flags::RIDGE);
            }
            return c;
        }
        ridge *= 10.0;
    }
}

fn soft(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// `(D ⊗ I_d) W`: row `e·d + j` is the difference across edge `e`.
pub(crate) fn d_apply(rows: &[(usize, usize)], w: &DMatrix<f64>) -> DMatrix<f64> {
    let d = w.ncols();
    let mut out = DMatrix::zeros(rows.len() * d, d);
    for (e, &(t, h)) in rows.iter().enumerate() {
        for j in 0..d {
            for i in 0..d {
                out[(e * d + j, i)] = w[(h * d + j, i)] - w[(t * d + j, i)];
            }
        }
    }
    out
}

/// `(D ⊗ I_d)ᵀ Z`.
pub(crate) fn d_transpose(rows: &[(usize, usize)], m: usize, z: &DMatrix<f64>) -> DMatrix<f64> {
    let d = z.ncols();
    let mut out = DMatrix::zeros(m * d, d);
    for (e, &(t, h)) in rows.iter().enumerate() {
        for j in 0..d {
            for i in 0..d {
                let val = z[(e * d + j, i)];
                out[(h * d + j, i)] += val;
                out[(t * d + j, i)] -= val;
            }
        }
    }
    out
}

fn tv_rows(rows: &[(usize, usize)], w: &DMatrix<f64>) -> f64 {
    d_apply(rows, w).iter().map(|x| x.abs()).sum()
}

/// Worst violation of stationarity `∇ + (D ⊗ I)ᵀν = 0` and of
/// `ν ∈ λ ∂|δ|`, where `δ` is the edge-difference pattern `delta`.
fn kkt_gap(
    q: &Quadratic,
    rows: &[(usize, usize)],
    w: &DMatrix<f64>,
    nu: &DMatrix<f64>,
    delta: &DMatrix<f64>,
    lambda: f64,
) -> f64 {
    let stat = (q.gradient(w) + d_transpose(rows, q.m, nu)).amax();
    let mut sub = 0.0f64;
    for (&dl, &n) in delta.iter().zip(nu.iter()) {
        let v = if dl == 0.0 { (n.abs() - lambda).max(0.0) } else { (n - lambda * dl.signum()).abs() };
        sub = sub.max(v);
    }
    stat.max(sub)
}

/// Solves the problem restricted to the fused pattern of `z` (edges with
/// `z = 0` tie their endpoints, other edges keep the sign of `z`), then
/// builds the dual closest to `nu0` that satisfies stationarity.
fn polish(q: &Quadratic, rows: &[(usize, usize)], z: &DMatrix<f64>, nu0: &DMatrix<f64>, lambda: f64) -> Candidate {
    let (m, d) = (q.m, q.d);
    let mut w = DMatrix::zeros(m * d, d);
    let mut used_pinv = false;
    let mut labels = vec![vec![0usize; m]; d];
    let mut counts = vec![0usize; d];
    let signs = z.map(|x| if x == 0.0 { 0.0 } else { x.signum() });

    for i in 0..d {
        for j in 0..d {
            let mut uf = UnionFind::new(m);
            for (e, &(t, h)) in rows.iter().enumerate() {
                if z[(e * d + j, i)] == 0.0 {
                    uf.union(t, h);
                }
            }
            labels[j] = uf.labels();
            counts[j] = labels[j].iter().max().map_or(0, |c| c + 1);
        }
        let offsets: Vec<usize> = counts.iter().scan(0, |acc, &c| {
            let o = *acc;
            *acc += c;
            Some(o)
        }).collect();
        let n = counts.iter().sum::<usize>();
        let mut mat = DMatrix::zeros(n, n);
        for (l, b) in q.blocks.iter().enumerate() {
            for j in 0..d {
                for jj in 0..d {
                    mat[(offsets[j] + labels[j][l], offsets[jj] + labels[jj][l])] += b[(j, jj)];
                }
            }
        }
        let mut v: Vec<f64> = q.linear.column(i).iter().copied().collect();
        for (e, &(t, h)) in rows.iter().enumerate() {
            for j in 0..d {
                let s = signs[(e * d + j, i)];
                if s != 0.0 {
                    v[h * d + j] -= lambda * s;
                    v[t * d + j] += lambda * s;
                }
            }
        }
        let mut rhs = DVector::zeros(n);
        for l in 0..m {
            for j in 0..d {
                rhs[offsets[j] + labels[j][l]] += v[l * d + j];
            }
        }
        let theta = match Cholesky::new(mat.clone()) {
            Some(c) => c.solve(&rhs),
            None => {
                used_pinv = true;
                pinv_psd(&mat, 1e-12).0 * rhs
            }
        };
        for l in 0..m {
            for j in 0..d {
                w[(l * d + j, i)] = theta[offsets[j] + labels[j][l]];
            }
        }
    }

    // Dual: λ·sign on free edges; on fused edges the projection of nu0 onto
    // {ν : D_Fᵀ ν = r}, computed cluster by cluster.
    let grad = q.gradient(&w);
    let mut nu = DMatrix::zeros(rows.len() * d, d);
    for i in 0..d {
        for j in 0..d {
            let mut r: Vec<f64> = (0..m).map(|l| -grad[(l * d + j, i)]).collect();
            let mut fused = Vec::new();
            for (e, &(t, h)) in rows.iter().enumerate() {
                let s = signs[(e * d + j, i)];
                if s != 0.0 {
                    nu[(e * d + j, i)] = lambda * s;
                    r[h] -= lambda * s;
                    r[t] += lambda * s;
                } else {
                    fused.push(e);
                }
            }
            if fused.is_empty() {
                continue;
            }
            // y = r − D_Fᵀ ν0 on fused edges.
            let mut y = r;
            for &e in &fused {
                let (t, h) = rows[e];
                let val = nu0[(e * d + j, i)];
                y[h] -= val;
                y[t] += val;
            }
            let mut uf = UnionFind::new(m);
            for &e in &fused {
                uf.union(rows[e].0, rows[e].1);
            }
            let lab = uf.labels();
            let nc = lab.iter().max().map_or(0, |c| c + 1);
            let mut members: Vec<Vec<usize>> = vec![Vec::new(); nc];
            for (l, &c) in lab.iter().enumerate() {
                members[c].push(l);
            }
            let mut pos = vec![0usize; m];
            for mem in &members {
                for (k, &l) in mem.iter().enumerate() {
                    pos[l] = k;
                }
            }
            let mut lap: Vec<DMatrix<f64>> = members.iter().map(|mem| DMatrix::zeros(mem.len(), mem.len())).collect();
            for &e in &fused {
                let (t, h) = rows[e];
                let c = lab[t];
                let (a, b) = (pos[t], pos[h]);
                let lc = &mut lap[c];
                lc[(a, a)] += 1.0;
                lc[(b, b)] += 1.0;
                lc[(a, b)] -= 1.0;
                lc[(b, a)] -= 1.0;
            }
            let mut phi = vec![0.0; m];
            for (c, mem) in members.iter().enumerate() {
                let n = mem.len();
                if n < 2 {
                    continue;
                }
                let k = &lap[c] + DMatrix::from_element(n, n, 1.0 / n as f64);
                let yc = DVector::from_iterator(n, mem.iter().map(|&l| y[l]));
                let sol = match Cholesky::new(k.clone()) {
                    Some(ch) => ch.solve(&yc),
                    None => pinv_psd(&k, 1e-12).0 * yc,
                };
                for (k, &l) in mem.iter().enumerate() {
                    phi[l] = sol[k];
                }
            }
            for &e in &fused {
                let (t, h) = rows[e];
                nu[(e * d + j, i)] = nu0[(e * d + j, i)] + phi[h] - phi[t];
            }
        }
    }
    let delta = d_apply(rows, &w);
    let gap = kkt_gap(q, rows, &w, &nu, &delta, lambda);
    Candidate { w, nu, gap, pinv: used_pinv, polished: true }
}

/// Row layout `ν[e·d + j, i]` to the edge-major `D ⊗ I_{d²}` layout with
/// coefficient index `i + d·j`.
fn dual_to_edge_major(nu: &DMatrix<f64>, d: usize) -> Vec<f64> {
    let ne = nu.nrows() / d;
    let mut out = vec![0.0; ne * d * d];
    for e in 0..ne {
        for j in 0..d {
            for i in 0..d {
                out[e * d * d + i + d * j] = nu[(e * d + j, i)];
            }
        }
    }
    out
}
