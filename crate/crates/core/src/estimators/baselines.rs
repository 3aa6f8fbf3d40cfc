use nalgebra::{Cholesky, DMatrix};

use super::tv::pooled_matrix;
use super::{flags, pack, unpack, DesignSystem, FitResult, Method, Quadratic};
use crate::error::{Error, Result};
use crate::graph::{spectrum, Graph};
use crate::linalg::{pinv_psd, spectral_norm};

/// Per-node least squares `X̃_l X_lᵀ (X_l X_lᵀ)⁺`.
pub fn fit_ols_individual(ds: &DesignSystem) -> FitResult {
    let d = ds.d;
    let mut a = Vec::with_capacity(ds.num_nodes() * d * d);
    let mut deficient = false;
    for l in 0..ds.num_nodes() {
        let (p, rank) = pinv_psd(&ds.gram(l), 1e-12);
        deficient |= rank < d;
        a.extend_from_slice((ds.cross(l) * p).as_slice());
    }
    let obj = ds.loss(&a);
    let mut fit = FitResult::closed_form(Method::OlsIndividual, d, 0.0, a, obj);
    if deficient {
        fit.flag(flags::RANK_DEFICIENT);
    }
    fit
}

/// One common matrix `(Σ X̃_l X_lᵀ)(Σ X_l X_lᵀ)⁺` for every node.
pub fn fit_ols_pooled(ds: &DesignSystem) -> FitResult {
    let (p, deficient) = pooled_matrix(ds);
    let a: Vec<f64> = (0..ds.num_nodes()).flat_map(|_| p.as_slice().iter().copied()).collect();
    let obj = ds.loss(&a);
    let mut fit = FitResult::closed_form(Method::OlsPooled, ds.d, 0.0, a, obj);
    if deficient {
        fit.flag(flags::RANK_DEFICIENT);
    }
    fit
}

/// `Â_l = I` for every node (random-walk forecast).
pub fn fit_persistence(ds: &DesignSystem) -> FitResult {
    let d = ds.d;
    let eye = DMatrix::<f64>::identity(d, d);
    let a: Vec<f64> = (0..ds.num_nodes()).flat_map(|_| eye.as_slice().iter().copied()).collect();
    let obj = ds.loss(&a);
    FitResult::closed_form(Method::Persistence, d, 0.0, a, obj)
}

/// Minimizer of `(1/2m)‖x̃ − Qa‖² + λ‖(D ⊗ I)a‖₂²`, from
/// `(QᵀQ/m + 2λ L ⊗ I) a = Qᵀx̃/m`.
pub fn fit_laplacian(ds: &DesignSystem, g: &Graph, lambda: f64) -> Result<FitResult> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be finite and nonnegative, got {lambda}")));
    }
    if g.num_nodes() != ds.num_nodes() {
        return Err(Error::InvalidArgument("graph and design disagree on the node count".into()));
    }
    let q = Quadratic::new(ds);
    let k = q.system(g.edges(), 2.0 * lambda);
    let mut ridge_used = false;
    let w = match Cholesky::new(k.clone()) {
        Some(c) => c.solve(&q.linear),
        None => {
            ridge_used = true;
            let n = k.nrows();
            let mut ridge = 1e-12 * k.diagonal().amax().max(1.0);
            loop {
                if let Some(c) = Cholesky::new(&k + DMatrix::identity(n, n) * ridge) {
                    break c.solve(&q.linear);
                }
                ridge *= 10.0;
            }
        }
    };
    let a = unpack(&w, ds.d);
    let pen: f64 = g
        .edges()
        .iter()
        .map(|&(u, v)| {
            let b = ds.d * ds.d;
            (0..b).map(|c| (a[v * b + c] - a[u * b + c]).powi(2)).sum::<f64>()
        })
        .sum();
    let obj = ds.loss(&a) + lambda * pen;
    let mut fit = FitResult::closed_form(Method::Laplacian, ds.d, lambda, a, obj);
    if ridge_used {
        fit.flag(flags::RIDGE);
    }
    Ok(fit)
}

/// Upper end of the Laplacian λ grid: `100 ‖H‖₂ / (2 λ_{m-1})`, where the
/// penalty outweighs the data term by two orders of magnitude on the
/// slowest-varying non-constant mode.
pub fn laplacian_lambda_max(ds: &DesignSystem, g: &Graph) -> Result<f64> {
    let sp = spectrum(g)?;
    if !sp.connected {
        return Err(Error::Disconnected { components: sp.components });
    }
    let q = Quadratic::new(ds);
    let h = q.blocks.iter().map(spectral_norm).fold(0.0, f64::max);
    Ok(100.0 * h.max(f64::MIN_POSITIVE) / (2.0 * sp.fiedler))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupLassoOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for GroupLassoOptions {
    fn default() -> Self {
        GroupLassoOptions { max_iter: 20000, tol: 1e-8 }
    }
}

/// Penalty on deviations from the pooled fit, one group per coefficient
/// position across all nodes:
/// `(1/2m)‖x̃ − Qa‖² + λ Σ_c ‖a_{·,c} − a_pool,c 1‖₂`. Solved by monotone
/// FISTA with backtracking. The objective trace is returned alongside.
pub fn fit_group_lasso(ds: &DesignSystem, lambda: f64, opts: &GroupLassoOptions) -> Result<(FitResult, Vec<f64>)> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be finite and nonnegative, got {lambda}")));
    }
    let d = ds.d;
    let m = ds.num_nodes();
    let q = Quadratic::new(ds);
    let (pooled, _) = pooled_matrix(ds);
    let pool_stack: Vec<f64> = (0..m).flat_map(|_| pooled.as_slice().iter().copied()).collect();
    let center = pack(&pool_stack, d);

    let smooth = |w: &DMatrix<f64>| -> f64 {
        let hw = q.apply(w);
        0.5 * w.dot(&hw) - w.dot(&q.linear)
    };
    let penalty = |w: &DMatrix<f64>| -> f64 { lambda * group_norms(&(w - &center), d).iter().sum::<f64>() };
    let objective = |w: &DMatrix<f64>| smooth(w) + penalty(w);
    let prox = |v: &DMatrix<f64>, step: f64| -> DMatrix<f64> {
        let mut dev = v - &center;
        let norms = group_norms(&dev, d);
        for i in 0..d {
            for j in 0..d {
                let n = norms[i * d + j];
                let s = if n > 0.0 { (1.0 - step * lambda / n).max(0.0) } else { 0.0 };
                for l in 0..m {
                    dev[(l * d + j, i)] *= s;
                }
            }
        }
        dev + &center
    };

    let mut lip = q.blocks.iter().map(spectral_norm).fold(0.0, f64::max).max(1e-12);
    let mut x = center.clone();
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut fx = objective(&x);
    let mut trace = vec![fx];
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=opts.max_iter {
        iterations = it;
        let gy = q.gradient(&y);
        let fy = smooth(&y);
        let mut z;
        loop {
            z = prox(&(&y - &gy * (1.0 / lip)), 1.0 / lip);
            let diff = &z - &y;
            let model = fy + gy.dot(&diff) + 0.5 * lip * diff.norm_squared();
            if smooth(&z) <= model + 1e-12 * model.abs().max(1.0) {
                break;
            }
            lip *= 2.0;
        }
        let fz = objective(&z);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let x_prev = x.clone();
        if fz <= fx {
            x = z.clone();
            fx = fz;
        }
        y = &x + (&z - &x) * (t / t_next) + (&x - &x_prev) * ((t - 1.0) / t_next);
        t = t_next;
        trace.push(fx);
        // Optimality via the prox-gradient map at x.
        let gx = q.gradient(&x);
        let step_map = (&x - prox(&(&x - &gx * (1.0 / lip)), 1.0 / lip)) * lip;
        if step_map.amax() <= opts.tol * q.linear.amax().max(1.0) {
            converged = true;
            break;
        }
    }
    let a = unpack(&x, d);
    let obj = ds.loss(&a) + penalty(&x);
    let mut fit = FitResult::closed_form(Method::GroupLasso, d, lambda, a, obj);
    fit.iterations = iterations;
    fit.converged = converged;
    if !converged {
        fit.flag(flags::MAX_ITER);
    }
    Ok((fit, trace))
}

/// Smallest λ at which every deviation group is zero:
/// `max_c ‖∇_{·,c}‖₂` at the pooled fit.
pub fn group_lasso_lambda_max(ds: &DesignSystem) -> f64 {
    let d = ds.d;
    let m = ds.num_nodes();
    let q = Quadratic::new(ds);
    let (pooled, _) = pooled_matrix(ds);
    let stack: Vec<f64> = (0..m).flat_map(|_| pooled.as_slice().iter().copied()).collect();
    let g = q.gradient(&pack(&stack, d));
    group_norms(&g, d).into_iter().fold(0.0, f64::max)
}

/// `‖·‖₂` over nodes of each coefficient position, indexed `i·d + j`.
fn group_norms(w: &DMatrix<f64>, d: usize) -> Vec<f64> {
    let m = w.nrows() / d;
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = (0..m).map(|l| w[(l * d + j, i)].powi(2)).sum::<f64>().sqrt();
        }
    }
    out
}
