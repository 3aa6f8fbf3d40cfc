use super::baselines::{fit_group_lasso, fit_laplacian, group_lasso_lambda_max, laplacian_lambda_max, GroupLassoOptions};
use super::tv::{fit_graph_tv_with, lambda_max_with};
use super::{fit_ols_individual, fit_ols_pooled, fit_persistence, DesignSystem, FitResult, Method, SolverOptions};
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Hard cap on the number of grid points.
pub const MAX_GRID: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOptions {
    pub grid_size: usize,
    /// Smallest λ as a fraction of the largest.
    pub min_ratio: f64,
    pub solver: SolverOptions,
    pub group: GroupLassoOptions,
}

impl Default for PathOptions {
    fn default() -> Self {
        PathOptions { grid_size: 50, min_ratio: 1e-4, solver: SolverOptions::default(), group: GroupLassoOptions::default() }
    }
}

#[derive(Debug, Clone)]
pub struct PathResult {
    pub method: Method,
    pub lambdas: Vec<f64>,
    pub fits: Vec<FitResult>,
    /// Validation one-step prediction MSE per grid point.
    pub selection_metric: Vec<f64>,
    pub selected_index: usize,
}

impl PathResult {
    pub fn selected(&self) -> &FitResult {
        &self.fits[self.selected_index]
    }
}

/// `n` points from `top` down to `top · ratio`, evenly spaced in log scale.
pub fn geometric_grid(top: f64, n: usize, ratio: f64) -> Result<Vec<f64>> {
    if n < 2 || n > MAX_GRID {
        return Err(Error::InvalidArgument(format!("grid size must be in 2..={MAX_GRID}, got {n}")));
    }
    if !(ratio > 0.0 && ratio < 1.0) || !(top > 0.0) || !top.is_finite() {
        return Err(Error::InvalidArgument("grid needs top > 0 and ratio in (0, 1)".into()));
    }
    Ok((0..n).map(|k| top * ratio.powf(k as f64 / (n - 1) as f64)).collect())
}

/// Graph-TV path from λ_max downwards with warm starts, selected on `val`.
pub fn regularization_path(ds: &DesignSystem, g: &Graph, opts: &PathOptions, val: &DesignSystem) -> Result<PathResult> {
    method_path(Method::GraphTv, ds, g, opts, val)
}

/// Path plus validation selection for any method. Unpenalized methods give
/// a single-point path at λ = 0.
pub fn method_path(method: Method, ds: &DesignSystem, g: &Graph, opts: &PathOptions, val: &DesignSystem) -> Result<PathResult> {
    if val.num_nodes() != ds.num_nodes() || val.d != ds.d {
        return Err(Error::InvalidArgument("validation design does not match the training design".into()));
    }
    let (lambdas, fits) = match method {
        Method::GraphTv => {
            let inc = g.incidence();
            let (top, mut warm) = lambda_max_with(ds, &inc)?;
            let lambdas = geometric_grid(top.max(1e-12), opts.grid_size, opts.min_ratio)?;
            let mut fits = Vec::with_capacity(lambdas.len());
            for &lam in &lambdas {
                let (fit, state) = fit_graph_tv_with(ds, &inc, lam, &opts.solver, Some(&warm))?;
                warm = state;
                fits.push(fit);
            }
            (lambdas, fits)
        }
        Method::Laplacian => {
            let lambdas = geometric_grid(laplacian_lambda_max(ds, g)?, opts.grid_size, opts.min_ratio)?;
            let fits = lambdas.iter().map(|&l| fit_laplacian(ds, g, l)).collect::<Result<Vec<_>>>()?;
            (lambdas, fits)
        }
        Method::GroupLasso => {
            let top = group_lasso_lambda_max(ds).max(1e-12);
            let lambdas = geometric_grid(top, opts.grid_size, opts.min_ratio)?;
            let fits = lambdas
                .iter()
                .map(|&l| fit_group_lasso(ds, l, &opts.group).map(|(f, _)| f))
                .collect::<Result<Vec<_>>>()?;
            (lambdas, fits)
        }
        Method::OlsIndividual => (vec![0.0], vec![fit_ols_individual(ds)]),
        Method::OlsPooled => (vec![0.0], vec![fit_ols_pooled(ds)]),
        Method::Persistence => (vec![0.0], vec![fit_persistence(ds)]),
    };
    let selection_metric: Vec<f64> = fits.iter().map(|f| val.prediction_mse(&f.a_hat)).collect();
    let mut selected_index = 0;
    for (k, &v) in selection_metric.iter().enumerate() {
        if v < selection_metric[selected_index] || !selection_metric[selected_index].is_finite() {
            selected_index = k;
        }
    }
    Ok(PathResult { method, lambdas, fits, selection_metric, selected_index })
}
